"""Trainable rankers for the intrinsic tasks.

``SessionIntentionEncoder`` maps a session's item sequence to a query vector
with the same attention encoder the recommender uses, trained with a
cosine-distance triplet margin loss. ``RecoveryScorer`` is a two-layer
perceptron from intention embeddings into product-embedding space trained
with noise-contrastive estimation.
"""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from ..rec.model import SessionEncoder, pad_sequences
from .metrics import mrr, positive_ranks
from .tasks import RankingInstance, cosine_order

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# session -> intention


@dataclass
class TripletConfig:
    margin: float = 0.2
    lr: float = 1e-3
    steps_per_eval: int = 50
    max_evals: int = 20
    patience: int = 3
    batch_size: int = 32
    max_len: int = 50
    blocks: int = 1
    heads: int = 1
    dropout: float = 0.0
    seed: int = 0


def cosine_distance(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return 1.0 - F.cosine_similarity(a, b, dim=-1)


def triplet_loss(q: torch.Tensor, pos: torch.Tensor, neg: torch.Tensor, margin: float) -> torch.Tensor:
    """Per-example ``max(0, margin + d(q, pos) - d(q, neg))`` with cosine distance."""
    return torch.clamp(margin + cosine_distance(q, pos) - cosine_distance(q, neg), min=0.0)


class SessionIntentionEncoder(nn.Module):
    def __init__(self, item_vectors: np.ndarray, max_len: int = 50, blocks: int = 1, heads: int = 1, dropout: float = 0.0):
        super().__init__()
        n, d = item_vectors.shape
        self.items = nn.Parameter(torch.as_tensor(item_vectors, dtype=torch.float32).clone())
        self.encoder = SessionEncoder(d, max_len, blocks, heads, dropout)

    @property
    def pad(self) -> int:
        return self.items.shape[0]

    def forward(self, seqs: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        table = torch.cat([self.items, self.items.new_zeros(1, self.items.shape[1])])
        return self.encoder(table[seqs], lengths)


class TrainedSessionRanker:
    """Callable query encoder for :func:`rank_by_embedding`."""

    def __init__(self, model: SessionIntentionEncoder, item_index: dict[str, int]):
        self.model = model
        self.item_index = item_index

    def __call__(self, instance: RankingInstance) -> np.ndarray:
        seq = [self.item_index[i] for i in instance.query_items if i in self.item_index]
        if not seq:
            raise ValueError(f"no known items for {instance.query_id}")
        seqs, lengths = pad_sequences([seq], self.model.pad, self.model.encoder.max_len)
        self.model.eval()
        with torch.no_grad():
            return self.model(seqs, lengths)[0].double().numpy()


def _validation_mrr(ranker: TrainedSessionRanker, instances, embed) -> float:
    if not instances:
        return 0.0
    ranks = []
    for inst in instances:
        vecs = np.stack([embed(t) for _, t in inst.candidates])
        ordered = cosine_order(ranker(inst), inst.candidate_ids, vecs)
        ranks.append(positive_ranks(ordered, inst.positives))
    return mrr(ranks)


def train_session_intention_encoder(
    train: Sequence[RankingInstance],
    valid: Sequence[RankingInstance],
    embed: Callable[[str], np.ndarray],
    item_texts: dict[str, str],
    config: TripletConfig = TripletConfig(),
) -> tuple[TrainedSessionRanker, dict]:
    """Fit the session encoder so sessions sit closer to their intentions than to others.

    Each step draws one positive and one negative intention per training
    session. Training stops when validation MRR has not improved for
    ``patience`` evaluations; the best weights are restored.
    """
    if not train:
        raise TrainingError("empty training set")
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    item_ids = sorted(item_texts)
    item_index = {i: k for k, i in enumerate(item_ids)}
    item_vecs = np.stack([embed(item_texts[i]) for i in item_ids])
    model = SessionIntentionEncoder(item_vecs, config.max_len, config.blocks, config.heads, config.dropout)
    ranker = TrainedSessionRanker(model, item_index)

    cand_vec: dict[str, np.ndarray] = {}
    for inst in train:
        for c, text in inst.candidates:
            if c not in cand_vec:
                cand_vec[c] = embed(text)
    rows = [
        ([item_index[i] for i in inst.query_items], sorted(inst.positives), [c for c in inst.candidate_ids if c not in inst.positives])
        for inst in train
    ]
    rows = [r for r in rows if r[0] and r[1] and r[2]]
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)

    history = {"loss": [], "valid_mrr": [_validation_mrr(ranker, valid, embed)]}
    best = (history["valid_mrr"][0], copy.deepcopy(model.state_dict()))
    bad = 0
    for _ in range(config.max_evals):
        model.train()
        for _ in range(config.steps_per_eval):
            batch = rng.choice(len(rows), size=min(config.batch_size, len(rows)), replace=False)
            seqs, lengths = pad_sequences([rows[b][0] for b in batch], model.pad, config.max_len)
            pos = np.stack([cand_vec[rows[b][1][rng.integers(len(rows[b][1]))]] for b in batch])
            neg = np.stack([cand_vec[rows[b][2][rng.integers(len(rows[b][2]))]] for b in batch])
            q = model(seqs, lengths)
            loss = triplet_loss(q, torch.as_tensor(pos, dtype=q.dtype), torch.as_tensor(neg, dtype=q.dtype), config.margin).mean()
            if not torch.isfinite(loss):
                raise TrainingError(f"non-finite triplet loss at step {len(history['loss'])}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            history["loss"].append(loss.item())
        score = _validation_mrr(ranker, valid, embed)
        history["valid_mrr"].append(score)
        if score > best[0]:
            best = (score, copy.deepcopy(model.state_dict()))
            bad = 0
        else:
            bad += 1
            if bad >= config.patience:
                break
    model.load_state_dict(best[1])
    model.eval()
    return ranker, history


# --------------------------------------------------------------------------
# product recovery


@dataclass
class RecoveryConfig:
    hidden: int = 128
    noise: int = 10
    temperature: float = 0.1
    lr: float = 1e-3
    steps: int = 300
    batch_size: int = 64
    seed: int = 0


class RecoveryScorer(nn.Module):
    """Two affine layers with a rectifier, initialised to the identity map."""

    def __init__(self, dim: int, hidden: int = 128):
        super().__init__()
        if hidden < 2 * dim:
            raise ValueError(f"identity initialisation needs hidden >= {2 * dim}")
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)
        with torch.no_grad():
            eye = torch.eye(dim)
            self.fc1.weight.zero_()
            self.fc1.weight[:dim] = eye
            self.fc1.weight[dim : 2 * dim] = -eye
            self.fc1.bias.zero_()
            self.fc2.weight.zero_()
            self.fc2.weight[:, :dim] = eye
            self.fc2.weight[:, dim : 2 * dim] = -eye
            self.fc2.bias.zero_()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # relu(x) - relu(-x) == x at initialisation
        return self.fc2(torch.relu(self.fc1(x)))

    def rank(self, instance: RankingInstance, embed: Callable[[str], np.ndarray]) -> list[str]:
        """Candidate intentions by cosine between their mapped embedding and the product."""
        product = embed(instance.query_texts[0])
        with torch.no_grad():
            cands = torch.as_tensor(np.stack([embed(t) for _, t in instance.candidates]), dtype=torch.float32)
            mapped = self(cands).double().numpy()
        ids = instance.candidate_ids
        sims = mapped @ product / np.maximum(np.linalg.norm(mapped, axis=1) * np.linalg.norm(product), 1e-12)
        return [ids[k] for k in sorted(range(len(ids)), key=lambda k: (-sims[k], ids[k]))]


def nce_loss(scorer: RecoveryScorer, intent: torch.Tensor, pos: torch.Tensor, noise: torch.Tensor,
             n_products: int, temperature: float) -> torch.Tensor:
    """Binary NCE against a uniform noise distribution over products.

    ``intent`` (B, d), ``pos`` (B, d), ``noise`` (B, k, d).
    """
    k = noise.shape[1]
    log_kq = math.log(k / n_products)
    mapped = scorer(intent)
    s_pos = F.cosine_similarity(mapped, pos, dim=-1) / temperature - log_kq
    s_neg = F.cosine_similarity(mapped[:, None, :], noise, dim=-1) / temperature - log_kq
    return -(F.logsigmoid(s_pos) + F.logsigmoid(-s_neg).sum(1)).mean()


def train_recovery_scorer(
    pairs: Sequence[tuple[str, str]],
    product_vecs: dict[str, np.ndarray],
    intention_vecs: dict[str, np.ndarray],
    config: RecoveryConfig = RecoveryConfig(),
) -> tuple[RecoveryScorer, list[float]]:
    """Fit the scorer on (product, intention) training pairs; returns it with the loss trace."""
    if not pairs:
        raise TrainingError("no training pairs")
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    products = sorted(product_vecs)
    P = torch.as_tensor(np.stack([product_vecs[p] for p in products]), dtype=torch.float32)
    p_index = {p: k for k, p in enumerate(products)}
    dim = P.shape[1]
    scorer = RecoveryScorer(dim, config.hidden)
    opt = torch.optim.Adam(scorer.parameters(), lr=config.lr)
    pairs = list(pairs)
    losses = []
    for step in range(config.steps):
        batch = rng.integers(len(pairs), size=min(config.batch_size, len(pairs)))
        x = torch.as_tensor(np.stack([intention_vecs[pairs[b][1]] for b in batch]), dtype=torch.float32)
        pos = P[[p_index[pairs[b][0]] for b in batch]]
        noise = P[torch.as_tensor(rng.integers(len(products), size=(len(batch), config.noise)))]
        loss = nce_loss(scorer, x, pos, noise, len(products), config.temperature)
        if not torch.isfinite(loss):
            raise TrainingError(f"non-finite NCE loss at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(loss.item())
    return scorer, losses
