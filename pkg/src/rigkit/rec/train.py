"""Training, evaluation, persistence and ablations for the session recommender."""
from __future__ import annotations

import copy
import json
import logging
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch.nn import functional as F

from ..evaluation.metrics import CUTOFFS, ranking_report
from ..intentions import session_node_id
from ..itemgraph import ItemGraph, Variant, build_item_graph
from .model import RIGRec, normalize_adjacency, pad_sequences, target_ranks

log = logging.getLogger(__name__)

DROPOUTS = (0.0, 0.1, 0.2, 0.3, 0.4)
LEARNING_RATES = (1e-2, 1e-3, 1e-4)
LOSSES = ("CE", "BCE", "BPR")
L2_COEFS = (0.0, 1e-2, 1e-3, 1e-4)
OPTIMIZERS = ("sgd", "adam")


class TrainingError(RuntimeError):
    pass


@dataclass
class EncoderConfig:
    d: int = 64
    layers: int = 2
    blocks: int = 1
    heads: int = 1
    max_len: int = 50
    dropout: float = 0.0
    lr: float = 1e-2
    loss: str = "CE"
    l2: float = 0.0
    optimizer: str = "sgd"
    batch_size: int = 128
    max_epochs: int = 30
    patience: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dropout not in DROPOUTS:
            raise ValueError(f"dropout must be one of {DROPOUTS}")
        if self.lr not in LEARNING_RATES:
            raise ValueError(f"lr must be one of {LEARNING_RATES}")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.l2 not in L2_COEFS:
            raise ValueError(f"l2 must be one of {L2_COEFS}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.layers < 0 or self.d < 1 or self.max_len < 1 or self.blocks < 0 or self.heads < 1:
            raise ValueError("layers/blocks must be >= 0 and d/max_len/heads >= 1")


@contextmanager
def single_thread():
    old = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        yield
    finally:
        torch.set_num_threads(old)


@dataclass
class RecModel:
    net: RIGRec
    item_index: dict[str, int]
    config: EncoderConfig
    item_graph: ItemGraph = field(default_factory=ItemGraph)
    history: dict = field(default_factory=dict)

    def index(self, sessions: Sequence[Sequence[str]]) -> list[list[int]]:
        return [[self.item_index[i] for i in s] for s in sessions]


def catalog_index(sessions: Sequence[Sequence[str]]) -> dict[str, int]:
    return {item: k for k, item in enumerate(sorted({i for s in sessions for i in s}))}


def build_model(item_index: dict[str, int], ig: ItemGraph, config: EncoderConfig) -> RecModel:
    torch.manual_seed(config.seed)
    A = normalize_adjacency(ig, item_index)
    net = RIGRec(len(item_index), config.d, A, config.layers, config.max_len, config.blocks, config.heads, config.dropout)
    return RecModel(net, item_index, config, ig)


def _next_item_batch(seqs: Sequence[Sequence[int]], pad: int, max_len: int):
    """Inputs are every prefix position; targets the following item (-100 on padding)."""
    inp, lengths = pad_sequences([s[:-1] for s in seqs], pad, max_len)
    tgt = torch.full(inp.shape, -100, dtype=torch.long)
    for r, s in enumerate(seqs):
        nxt = list(s[1:])[-max_len:]
        tgt[r, : len(nxt)] = torch.as_tensor(nxt, dtype=torch.long)
    return inp, tgt


def batch_loss(net: RIGRec, inp: torch.Tensor, tgt: torch.Tensor, config: EncoderConfig,
               negatives: torch.Tensor | None = None) -> torch.Tensor:
    """Next-item loss over all non-padding positions, plus the L2 penalty.

    CE scores the full catalog; BCE and BPR contrast the target with one
    sampled negative per position (``negatives``, same shape as ``tgt``).
    """
    table = net.item_table()
    out = net.encode_all(inp, table)
    mask = tgt != -100
    h = out[mask]
    y = tgt[mask]
    if config.loss == "CE":
        loss = F.cross_entropy(h @ table.T, y)
    else:
        if negatives is None:
            raise ValueError(f"{config.loss} loss needs sampled negatives")
        neg = negatives[mask]
        s_pos = (h * table[y]).sum(-1)
        s_neg = (h * table[neg]).sum(-1)
        if config.loss == "BCE":
            loss = -(F.logsigmoid(s_pos) + F.logsigmoid(-s_neg)).mean()
        else:
            loss = -F.logsigmoid(s_pos - s_neg).mean()
    if config.l2:
        loss = loss + config.l2 * sum((p * p).sum() for p in net.parameters())
    return loss


def evaluate(model: RecModel, sessions: Sequence[Sequence[str]], cutoffs=CUTOFFS, batch_size: int = 512) -> dict:
    """Rank each session's last item against the whole catalog given the prefix."""
    seqs = [s for s in model.index(sessions) if len(s) >= 2]
    net = model.net
    was_training = net.training
    net.eval()
    ranks = []
    with torch.no_grad():
        table = net.item_table()
        for start in range(0, len(seqs), batch_size):
            chunk = seqs[start : start + batch_size]
            inp, lengths = pad_sequences([s[:-1] for s in chunk], net.pad, net.encoder.max_len)
            logits = net.encode(inp, lengths, table) @ table.T
            targets = torch.as_tensor([s[-1] for s in chunk])
            ranks.extend([[int(r)] for r in target_ranks(logits, targets)])
    net.train(was_training)
    report = ranking_report(ranks, cutoffs=cutoffs)
    report.pop("inference_time", None)
    return report


def train(
    train_sessions: Sequence[Sequence[str]],
    ig: ItemGraph,
    config: EncoderConfig = EncoderConfig(),
    item_index: dict[str, int] | None = None,
    valid_sessions: Sequence[Sequence[str]] | None = None,
) -> RecModel:
    """Fit item embeddings, positions and attention weights by next-item prediction.

    When validation sessions are given, Recall@20 is checked after every
    epoch and training stops after ``patience`` epochs without improvement,
    restoring the best weights.
    """
    with single_thread():
        if item_index is None:
            item_index = catalog_index(list(train_sessions) + list(valid_sessions or []))
        model = build_model(item_index, ig, config)
        net = model.net
        rng = np.random.default_rng(config.seed)
        seqs = [s for s in model.index(train_sessions) if len(s) >= 2]
        if not seqs:
            raise TrainingError("no training session has two or more items")
        if config.optimizer == "adam":
            opt = torch.optim.Adam(net.parameters(), lr=config.lr)
        else:
            opt = torch.optim.SGD(net.parameters(), lr=config.lr)
        history = {"loss": [], "valid_recall20": []}
        best_score, best_state, bad = -1.0, None, 0
        step = 0
        for epoch in range(config.max_epochs):
            net.train()
            order = rng.permutation(len(seqs))
            for start in range(0, len(order), config.batch_size):
                batch = [seqs[k] for k in order[start : start + config.batch_size]]
                inp, tgt = _next_item_batch(batch, net.pad, config.max_len)
                negatives = None
                if config.loss != "CE":
                    negatives = torch.as_tensor(rng.integers(net.n_items, size=tgt.shape))
                loss = batch_loss(net, inp, tgt, config, negatives)
                if not torch.isfinite(loss):
                    raise TrainingError(f"non-finite loss at step {step}")
                opt.zero_grad()
                loss.backward()
                opt.step()
                history["loss"].append(loss.item())
                step += 1
            if valid_sessions:
                score = evaluate(model, valid_sessions, cutoffs=(20,))["Recall@20"]
                history["valid_recall20"].append(score)
                if score > best_score:
                    best_score, best_state, bad = score, copy.deepcopy(net.state_dict()), 0
                else:
                    bad += 1
                    if bad >= config.patience:
                        break
        if best_state is not None:
            net.load_state_dict(best_state)
        net.eval()
        model.history = history
        return model


# --------------------------------------------------------------------------
# persistence


def save_model(model: RecModel, path: str | Path) -> None:
    net = model.net
    doc = {
        "format": "rigkit-recmodel/1",
        "n_items": net.n_items,
        "d": net.E0.shape[1],
        "config": asdict(model.config),
        "item_index": model.item_index,
        "item_graph": [[a, b, w] for (a, b), w in sorted(model.item_graph.weights.items())],
        "params": {k: {"shape": list(v.shape), "data": v.detach().double().reshape(-1).tolist()}
                   for k, v in net.state_dict().items() if k != "A"},
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")


def load_model(path: str | Path) -> RecModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != "rigkit-recmodel/1":
        raise ValueError(f"{path}: not a recommender model file")
    config = EncoderConfig(**doc["config"])
    ig = ItemGraph({(a, b): int(w) for a, b, w in doc["item_graph"]})
    model = build_model(doc["item_index"], ig, config)
    state = model.net.state_dict()
    for k, spec in doc["params"].items():
        state[k] = torch.tensor(spec["data"], dtype=state[k].dtype).reshape(spec["shape"])
    model.net.load_state_dict(state)
    model.net.eval()
    return model


# --------------------------------------------------------------------------
# ablation

ABLATION_VARIANTS = {
    "Full": Variant.FULL,
    "w/o concept": Variant.RELATION_ONLY,
    "w/o commonsense relation": Variant.CONCEPT_ONLY,
    "w/o all": Variant.EMPTY,
}


def ablation_item_graphs(g, pairs, allowed_sessions: set[str] | None = None) -> dict[str, ItemGraph]:
    """Item graph per ablation variant, optionally from pairs inside ``allowed_sessions`` only.

    ``allowed_sessions`` holds session ids as they appear in the sessions file.
    """
    if allowed_sessions is not None:
        allowed = {session_node_id(s) for s in allowed_sessions}
        pairs = [p for p in pairs if p.s1 in allowed and p.s2 in allowed]
    return {name: build_item_graph(g, pairs, v) if v is not Variant.EMPTY else ItemGraph()
            for name, v in ABLATION_VARIANTS.items()}


def run_ablation(
    splits: tuple[Sequence[Sequence[str]], Sequence[Sequence[str]], Sequence[Sequence[str]]],
    item_graphs: dict[str, ItemGraph],
    config: EncoderConfig,
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    cutoffs=CUTOFFS,
) -> dict:
    """Train and test every variant with the same seeds and data splits."""
    train_s, valid_s, test_s = splits
    item_index = catalog_index(list(train_s) + list(valid_s) + list(test_s))
    report = {"seeds": list(seeds), "cutoffs": list(cutoffs), "variants": {}}
    for name, ig in item_graphs.items():
        runs = []
        for seed in seeds:
            cfg = EncoderConfig(**{**asdict(config), "seed": seed})
            model = train(train_s, ig, cfg, item_index, valid_s)
            runs.append(evaluate(model, test_s, cutoffs))
        keys = [k for k in runs[0] if k != "n_queries"]
        report["variants"][name] = {
            "item_graph_edges": len(ig),
            "mean": {k: float(np.mean([r[k] for r in runs])) for k in keys},
            "runs": runs,
        }
    return report
