import random

import pytest

_CRITERIA: dict[int, tuple[str, str]] = {}

from rigkit.graph import EdgeKind, NodeKind, TypedGraph
from rigkit.synth import SyntheticSpec, synth


def random_schema_ops(g: TypedGraph, n_ops: int, seed: int):
    """Apply random (often invalid) mutations; returns (#ok, #rejected)."""
    from rigkit.graph import GraphError

    rng = random.Random(seed)
    kinds = list(NodeKind)
    edge_kinds = list(EdgeKind)
    provs = ["Precedence", "Succession", "Simultaneous", "Cause", "Result", None, "bogus"]
    ok = rejected = 0
    for _ in range(n_ops):
        ids = g.node_ids()
        if not ids or rng.random() < 0.3:
            kind = rng.choice(kinds)
            text = rng.choice(["", "  ", f"text {rng.randrange(40)}", f"Text {rng.randrange(40)}."])
            try:
                g.add_node(kind, text, node_id=None if rng.random() < 0.5 else f"n{rng.randrange(200)}")
                ok += 1
            except GraphError:
                rejected += 1
            continue
        src, dst = rng.choice(ids), rng.choice(ids)
        try:
            g.add_edge(src, dst, rng.choice(edge_kinds), rng.uniform(-0.2, 1.2),
                       provenance=rng.choice(provs), position=rng.choice([None, 0, 3, -1]))
            ok += 1
        except GraphError:
            rejected += 1
    return ok, rejected


@pytest.fixture(scope="session")
def small_synth():
    spec = SyntheticSpec(n_themes=3, items_per_theme=30, n_sessions=120, groups_per_theme=3, seed=7)
    return spec, *synth(spec)


def small_config(tmp_path, **synth):
    """Config for a small synthetic run rooted at ``tmp_path``."""
    from rigkit.config import PipelineConfig

    spec = dict(n_themes=3, items_per_theme=30, n_sessions=150, groups_per_theme=3, seed=7)
    spec.update(synth)
    return PipelineConfig.model_validate({
        "paths": {"sessions": "data/sessions.jsonl", "workdir": "work", "reports": "reports", "models": "models"},
        "backends": {"mock_tables": "data/manifest.json", "embedder": {"dim": 32}},
        "synth": spec,
        "metapath": {"min_paths": 2},
        "rec": {"d": 16, "max_epochs": 3, "optimizer": "adam", "ablation_seeds": [0, 1]},
        "eval": {"concept_pool": 50, "intention_negatives": 8, "recovery": {"steps": 20, "hidden": 64}},
    })


GRAPH_STAGES = ("synth", "ingest", "gen-intentions", "conceptualize", "classify-relations", "select-pairs",
                "build-itemgraph")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    n, title = mark.args
    _CRITERIA[n] = ("PASS" if rep.passed else "FAIL", title)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, title = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {title}")
