import json

import pytest

from rigkit.graph import EdgeKind
from rigkit.itemgraph import load_item_graph
from rigkit.pipeline import Pipeline
from rigkit.synth import CHANNELS, SyntheticSpec, synth

from conftest import GRAPH_STAGES, small_config


def test_construction_counts():
    spec = SyntheticSpec(n_themes=3, items_per_theme=10, n_sessions=60, groups_per_theme=2, seed=1)
    sessions, manifest = synth(spec)
    assert len(sessions) == 60 and len(manifest["items"]) == 30
    assert all(spec.min_len <= len(s.items) <= spec.max_len for s in sessions)
    assert len({it.id for s in sessions for it in s.items}) <= 30
    assert synth(spec)[0] == sessions


def test_manifest_matches_data(small_synth):
    spec, sessions, manifest = small_synth
    assert manifest["spec"]["seed"] == spec.seed
    assert set(manifest["sessions"]) == {s.session_id for s in sessions}
    mock = manifest["mock"]
    for s in sessions:
        for it in s.items:
            assert it.id in manifest["items"]
            assert mock["intentions"][it.title] in {
                p for grp in manifest["groups"] for p in grp["intentions"]}
    for grp in manifest["groups"]:
        assert grp["channel"] == CHANNELS[grp["group"] % len(CHANNELS)]
        for p in grp["intentions"]:
            assert (mock["concepts"][p] == []) == (grp["channel"] == "relation")
    assert all(v == 0.95 for v in mock["score_overrides"].values())
    assert mock["score_ceiling"] < 0.9


def test_noise_free_sessions_stay_in_theme(small_synth):
    spec, _, _ = small_synth
    sessions, manifest = synth(SyntheticSpec(**{**spec.__dict__, "noise": 0.0}))
    for s in sessions:
        themes = {manifest["items"][it.id]["theme"] for it in s.items}
        assert themes == {manifest["sessions"][s.session_id]["theme"]}


def test_noise_free_item_graph_within_theme(tmp_path):
    cfg = small_config(tmp_path, noise=0.0)
    p = Pipeline(cfg, tmp_path)
    for stage in GRAPH_STAGES:
        p.run(stage)
    manifest = json.loads((tmp_path / "data/manifest.json").read_text())
    ig = load_item_graph(p.artifact("build-itemgraph"))
    assert len(ig) > 0
    for a, b in ig.weights:
        ta = manifest["items"][a]["theme"]
        tb = manifest["items"][b]["theme"]
        assert ta == tb
    g = p._graph("classify-relations")
    assert g.edges(EdgeKind.SYNCHRONOUS) or g.edges(EdgeKind.ASYNCHRONOUS) or g.edges(EdgeKind.CAUSALITY)


def test_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(noise=1.5)
    with pytest.raises(ValueError):
        SyntheticSpec(min_len=5, max_len=3)
    with pytest.raises(ValueError):
        SyntheticSpec(intentions_per_group=9)
