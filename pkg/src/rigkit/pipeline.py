"""Pipeline stages over a work directory of numbered artifacts.

Each stage reads the artifact of the stage before it and writes its own;
every artifact is a deterministic function of the config and the inputs, so
rerunning a stage rewrites the same bytes. Run reports (which carry
timings) go to a separate per-run directory.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .backends import (
    GenParams,
    HashEmbedder,
    HttpEmbedder,
    HttpGenerator,
    HttpScorer,
    MockGenerator,
    MockScorer,
)
from .concepts import conceptualize_all
from .config import ConfigError, GeneratorSettings, PipelineConfig
from .evaluation import diversity, tasks
from .evaluation.encoders import RecoveryConfig, TripletConfig, train_recovery_scorer, train_session_intention_encoder
from .graph import EdgeKind, NodeKind, TypedGraph, deserialize, serialize
from .intentions import generate_all, ingest_session, read_sessions, session_node_id
from .itemgraph import (
    SessionPairSelection,
    Variant,
    build_item_graph,
    export_item_graph,
    load_item_graph,
    select_session_pairs,
)
from .rec import train as rec_train
from .relations import PairPolicy, build_relations
from .synth import write_synth

log = logging.getLogger(__name__)

ARTIFACTS = {
    "ingest": "01-ingest.graph.jsonl",
    "gen-intentions": "02-intentions.graph.jsonl",
    "conceptualize": "03-concepts.graph.jsonl",
    "classify-relations": "04-relations.graph.jsonl",
    "select-pairs": "05-pairs.jsonl",
    "build-itemgraph": "06-itemgraph.tsv",
    "train-rec": "rec-model.json",
}
SIDE_FILES = {
    "gen-intentions": "02-intentions.report.jsonl",
    "conceptualize": "03-concepts.report.jsonl",
    "classify-relations": "04-relations.log.jsonl",
}


class PipelineError(Exception):
    pass


class MissingInputError(PipelineError):
    pass


class StageDependencyError(PipelineError):
    pass


class BackendFailure(PipelineError):
    pass


def _write_jsonl(rows, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


class Pipeline:
    def __init__(self, config: PipelineConfig, base_dir: str | Path = "."):
        self.config = config
        self.base = Path(base_dir)
        self._tables: dict | None = None

    # ---------------------------------------------------------------- paths

    def path(self, p: str) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base / p

    @property
    def workdir(self) -> Path:
        return self.path(self.config.paths.workdir)

    @property
    def sessions_path(self) -> Path:
        return self.path(self.config.paths.sessions)

    def artifact(self, stage: str) -> Path:
        if stage == "train-rec":
            return self.path(self.config.paths.models) / ARTIFACTS[stage]
        return self.workdir / ARTIFACTS[stage]

    def _require(self, stage: str) -> Path:
        p = self.artifact(stage)
        if not p.exists():
            raise StageDependencyError(f"{p} not found; run `{stage}` first")
        return p

    def _output(self, stage: str) -> Path:
        p = self.artifact(stage)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def _sessions(self):
        if not self.sessions_path.exists():
            raise MissingInputError(f"sessions file {self.sessions_path} not found")
        return read_sessions(self.sessions_path)

    def _graph(self, stage: str) -> TypedGraph:
        return deserialize(self._require(stage))

    # ------------------------------------------------------------- backends

    def mock_tables(self) -> dict:
        if self._tables is None:
            ref = self.config.backends.mock_tables
            if ref is None:
                self._tables = {}
            else:
                p = self.path(ref)
                if not p.exists():
                    raise MissingInputError(f"mock table file {p} not found")
                doc = json.loads(p.read_text(encoding="utf-8"))
                self._tables = doc.get("mock", doc)
        return self._tables

    def _http_kwargs(self, s) -> dict:
        if not s.url:
            raise ConfigError(f"{s.kind} backend needs a url")
        return {"timeout": s.timeout, "retries": s.retries, "backoff": s.backoff}

    def generator(self, settings: GeneratorSettings | None = None):
        s = settings or self.config.backends.generator
        if s.kind == "http":
            return HttpGenerator(s.url, **self._http_kwargs(s))
        t = self.mock_tables()
        return MockGenerator(t.get("intentions"), t.get("concepts"), seed=s.seed)

    def gen_params(self, settings: GeneratorSettings | None = None) -> GenParams:
        s = settings or self.config.backends.generator
        return GenParams(max_tokens=s.max_tokens, temperature=s.temperature, seed=s.seed)

    def scorer(self):
        s = self.config.backends.scorer
        if s.kind == "http":
            return HttpScorer(s.url, **self._http_kwargs(s))
        t = self.mock_tables()
        return MockScorer(t.get("score_overrides"), seed=s.seed, ceiling=t.get("score_ceiling", 1.0))

    def embedder(self):
        s = self.config.backends.embedder
        if s.kind == "http":
            return HttpEmbedder(s.url, dim=s.dim, **self._http_kwargs(s))
        return HashEmbedder(s.dim)

    # --------------------------------------------------------------- stages

    def synth(self) -> dict:
        spec = self.config.synth.spec()
        self.sessions_path.parent.mkdir(parents=True, exist_ok=True)
        manifest_path = self.path(self.config.backends.mock_tables or "manifest.json")
        manifest_path.parent.mkdir(parents=True, exist_ok=True)
        sessions, manifest = write_synth(spec, self.sessions_path, manifest_path)
        self._tables = None
        return {"sessions": len(sessions), "items": len(manifest["items"]), "sessions_file": str(self.sessions_path),
                "manifest_file": str(manifest_path)}

    def ingest(self) -> dict:
        sessions = self._sessions()
        g = TypedGraph()
        for s in sessions:
            ingest_session(g, s)
        serialize(g, self._output("ingest"))
        return {"sessions": len(sessions), "stats": asdict(g.stats())}

    def gen_intentions(self) -> dict:
        g = self._graph("ingest")
        sessions = self._sessions()
        b = self.config.backends
        rows = generate_all(g, sessions, self.generator(), self.gen_params(), b.parallelism)
        errors = [r for r in rows if r["status"] == "error"]
        if rows and len(errors) == len(rows):
            raise BackendFailure(f"generation failed for all {len(rows)} sessions: {errors[0]['error']}")
        serialize(g, self._output("gen-intentions"))
        _write_jsonl(rows, self.workdir / SIDE_FILES["gen-intentions"])
        return {"sessions": len(rows), "status": _count(rows), "stats": asdict(g.stats())}

    def conceptualize(self) -> dict:
        g = self._graph("gen-intentions")
        b = self.config.backends
        settings = b.concept_generator or b.generator
        rows = conceptualize_all(g, self.generator(settings), self.gen_params(settings), b.parallelism)
        errors = [r for r in rows if r["status"] == "error"]
        if rows and len(errors) == len(rows):
            raise BackendFailure(f"conceptualization failed for all {len(rows)} intentions: {errors[0]['error']}")
        serialize(g, self._output("conceptualize"))
        _write_jsonl(rows, self.workdir / SIDE_FILES["conceptualize"])
        return {"intentions": len(rows), "status": _count(rows), "stats": asdict(g.stats())}

    def classify_relations(self) -> dict:
        g = self._graph("conceptualize")
        r = self.config.relations
        policy = PairPolicy(r.include_within_session, r.include_shared_concept, r.max_pairs_per_intention, r.seed)
        rows: list[dict] = []
        report = build_relations(g, policy, self.scorer(), r.threshold, rows)
        if report["pairs"] and report["skipped_pairs"] == report["pairs"]:
            raise BackendFailure(f"scoring failed for all {report['pairs']} pairs")
        serialize(g, self._output("classify-relations"))
        _write_jsonl(rows, self.workdir / SIDE_FILES["classify-relations"])
        return {**report, "stats": asdict(g.stats())}

    def select_pairs(self) -> dict:
        g = self._graph("classify-relations")
        pairs = select_session_pairs(g, min_paths=self.config.metapath.min_paths)
        with open(self._output("select-pairs"), "w", encoding="utf-8") as fh:
            for p in pairs:
                fh.write(json.dumps(p.to_json(), separators=(",", ":")) + "\n")
        return {"pairs": len(pairs), "qualified_by": _count([{"status": p.qualified_by.value} for p in pairs])}

    def load_pairs(self) -> list[SessionPairSelection]:
        with open(self._require("select-pairs"), encoding="utf-8") as fh:
            return [SessionPairSelection.from_json(json.loads(line)) for line in fh if line.strip()]

    def rec_splits(self) -> tuple[list[list[str]], list[list[str]], list[list[str]], list[str]]:
        """(train, valid, test) item sequences and the training session ids."""
        sessions = self._sessions()
        seqs = {s.session_id: [it.id for it in s.items] for s in sessions}
        train_ids, valid_ids, test_ids = tasks.split_keys(seqs, self.config.eval.ratios, self.config.rec.split_seed)
        return ([seqs[k] for k in train_ids], [seqs[k] for k in valid_ids], [seqs[k] for k in test_ids], train_ids)

    def _pairs_for_item_graph(self):
        g = self._graph("classify-relations")
        pairs = self.load_pairs()
        if self.config.rec.train_only_item_graph:
            allowed = {session_node_id(s) for s in self.rec_splits()[3]}
            pairs = [p for p in pairs if p.s1 in allowed and p.s2 in allowed]
        return g, pairs

    def build_itemgraph(self, variant: str = "Full") -> dict:
        g, pairs = self._pairs_for_item_graph()
        ig = build_item_graph(g, pairs, Variant(variant))
        export_item_graph(ig, self._output("build-itemgraph"))
        return {"variant": variant, "pairs_used": len(pairs), "edges": len(ig), "items": len(ig.items),
                "train_only": self.config.rec.train_only_item_graph}

    # ----------------------------------------------------------- evaluation

    def _eval_graph(self) -> TypedGraph:
        for stage in ("classify-relations", "conceptualize", "gen-intentions"):
            if self.artifact(stage).exists():
                return deserialize(self.artifact(stage))
        raise StageDependencyError(f"{self.artifact('gen-intentions')} not found; run `gen-intentions` first")

    def _cached_embed(self):
        embedder = self.embedder()
        cache: dict[str, np.ndarray] = {}

        def embed(text: str) -> np.ndarray:
            if text not in cache:
                cache[text] = embedder.embed(text)
            return cache[text]

        return embed

    def eval_intention(self) -> dict:
        g = self._eval_graph()
        e = self.config.eval
        split = tasks.split_edges(g, EdgeKind.SESSION_TO_INTENTION, e.ratios, e.seed)
        test = tasks.make_intention_task(g, split, e.intention_negatives, e.seed, "test")
        embed = self._cached_embed()
        out = {"split": _split_sizes(split), "instances": len(test),
               "mean_pooling": tasks.evaluate_ranker(test, lambda inst: tasks.rank_by_embedding(inst, embed))}
        if e.triplet.enabled:
            train = tasks.make_intention_task(g, split, e.intention_negatives, e.seed, "train")
            valid = tasks.make_intention_task(g, split, e.intention_negatives, e.seed, "valid")
            item_texts = {n.id: n.text for n in g.nodes(NodeKind.ITEM)}
            cfg = TripletConfig(margin=e.triplet.margin, lr=e.triplet.lr, steps_per_eval=e.triplet.steps_per_eval,
                                max_evals=e.triplet.max_evals, patience=e.triplet.patience, seed=e.seed)
            ranker, history = train_session_intention_encoder(train, valid, embed, item_texts, cfg)
            out["trained_encoder"] = tasks.evaluate_ranker(test, lambda inst: tasks.rank_by_embedding(inst, embed, ranker))
            out["trained_encoder"]["valid_mrr_history"] = history["valid_mrr"]
        return out

    def eval_concept(self) -> dict:
        g = self._eval_graph()
        e = self.config.eval
        split = tasks.split_edges(g, EdgeKind.INTENTION_TO_CONCEPT, e.ratios, e.seed)
        test = tasks.make_concept_task(g, split, e.concept_pool, e.seed, "test")
        embed = self._cached_embed()
        pool = sorted({len(i.candidates) for i in test})
        return {"split": _split_sizes(split), "instances": len(test), "pool_sizes": pool,
                "mean_pooling": tasks.evaluate_ranker(test, lambda inst: tasks.rank_by_embedding(inst, embed))}

    def eval_recovery(self) -> dict:
        g = self._eval_graph()
        e = self.config.eval
        split = tasks.split_products(g, e.ratios, e.seed)
        test = tasks.make_product_recovery_task(g, split, e.recovery_negatives, e.seed, "test")
        embed = self._cached_embed()
        train_pairs = [(p, i) for p in split.train for i in split.edges[p]]
        product_vecs = {p: embed(g.node(p).text) for p in split.edges}
        intention_vecs = {n.id: embed(n.text) for n in g.nodes(NodeKind.INTENTION)}
        r = e.recovery
        cfg = RecoveryConfig(hidden=r.hidden, noise=r.noise, temperature=r.temperature, lr=r.lr, steps=r.steps, seed=e.seed)
        scorer, losses = train_recovery_scorer(train_pairs, product_vecs, intention_vecs, cfg)
        return {
            "split": _split_sizes(split),
            "instances": len(test),
            "untrained_cosine": tasks.evaluate_ranker(
                test, lambda inst: _recovery_cosine(inst, embed)),
            "mlp_nce": tasks.evaluate_ranker(test, lambda inst: scorer.rank(inst, embed)),
            "loss_first": losses[0],
            "loss_last": losses[-1],
        }

    def diversity(self) -> dict:
        g = self._eval_graph()
        corpus = [n.text for n in g.nodes(NodeKind.INTENTION)]
        profile = diversity.diversity_profile(corpus)
        return {"intentions": len(corpus),
                "ngram_diversity": {str(n): (None if np.isnan(v) else v) for n, v in profile.items()}}

    # -------------------------------------------------------- recommender

    def train_rec(self) -> dict:
        ig = load_item_graph(self._require("build-itemgraph"))
        train_s, valid_s, test_s, _ = self.rec_splits()
        index = rec_train.catalog_index(train_s + valid_s + test_s)
        model = rec_train.train(train_s, ig, self.config.rec.encoder_config(), index, valid_s)
        rec_train.save_model(model, self._output("train-rec"))
        return {"item_graph_edges": len(ig), "items": len(index), "steps": len(model.history["loss"]),
                "valid_recall20": model.history["valid_recall20"], "model_file": str(self.artifact("train-rec"))}

    def eval_rec(self) -> dict:
        model = rec_train.load_model(self._require("train-rec"))
        _, _, test_s, _ = self.rec_splits()
        return {"test_sessions": len(test_s), "metrics": rec_train.evaluate(model, test_s, tuple(self.config.rec.cutoffs))}

    def ablate(self) -> dict:
        g, pairs = self._pairs_for_item_graph()
        graphs = rec_train.ablation_item_graphs(g, pairs)
        train_s, valid_s, test_s, _ = self.rec_splits()
        r = self.config.rec
        return rec_train.run_ablation((train_s, valid_s, test_s), graphs, r.encoder_config(), r.ablation_seeds,
                                      tuple(r.cutoffs))

    COMMANDS = {
        "synth": "synth",
        "ingest": "ingest",
        "gen-intentions": "gen_intentions",
        "conceptualize": "conceptualize",
        "classify-relations": "classify_relations",
        "select-pairs": "select_pairs",
        "build-itemgraph": "build_itemgraph",
        "eval-intention": "eval_intention",
        "eval-concept": "eval_concept",
        "eval-recovery": "eval_recovery",
        "train-rec": "train_rec",
        "eval-rec": "eval_rec",
        "ablate": "ablate",
        "diversity": "diversity",
    }

    def run(self, command: str, **kwargs) -> dict:
        t0 = time.perf_counter()
        result = getattr(self, self.COMMANDS[command])(**kwargs)
        return {"command": command, "seconds": round(time.perf_counter() - t0, 3), "result": _jsonable(result)}


def _count(rows) -> dict:
    out: dict[str, int] = {}
    for r in rows:
        out[r["status"]] = out.get(r["status"], 0) + 1
    return dict(sorted(out.items()))


def _split_sizes(split: tasks.DataSplit) -> dict:
    return {"train": len(split.train), "valid": len(split.valid), "test": len(split.test), "seed": split.seed}


def _recovery_cosine(inst: tasks.RankingInstance, embed) -> list[str]:
    return tasks.cosine_order(embed(inst.query_texts[0]), inst.candidate_ids,
                              np.stack([embed(t) for _, t in inst.candidates]))


def run_dir(reports_root: Path, config: PipelineConfig, now: datetime | None = None) -> Path:
    now = now or datetime.now(timezone.utc)
    return reports_root / f"{now.strftime('%Y%m%dT%H%M%SZ')}-{config.digest()[:12]}"


def write_report(directory: Path, command: str, config: PipelineConfig, payload: dict) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    doc = {"config_hash": config.digest(), "config": config.echo(), **payload}
    path = directory / f"{command}.json"
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path
