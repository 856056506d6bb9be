"""Graph-convolved item embeddings and the self-attention session encoder."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np
import torch
from torch import nn

from ..itemgraph import ItemGraph


class ShapeError(ValueError):
    pass


def normalize_adjacency(ig: ItemGraph, item_index: dict[str, int]) -> np.ndarray:
    """Row-normalized weighted adjacency; items without neighbors get zero rows."""
    n = len(item_index)
    A = np.zeros((n, n), dtype=np.float64)
    for (a, b), w in ig.weights.items():
        if a not in item_index or b not in item_index:
            raise KeyError(f"item graph edge {a!r}-{b!r} outside the item index")
        i, j = item_index[a], item_index[b]
        A[i, j] += w
        A[j, i] += w
    sums = A.sum(axis=1, keepdims=True)
    np.divide(A, sums, out=A, where=sums > 0)
    return A


def graph_convolve(E0, A, L: int):
    """Sum of ``A^l E0`` for l = 0..L. Works on numpy arrays and torch tensors."""
    if L < 0:
        raise ValueError("L must be >= 0")
    if A.shape[0] != A.shape[1] or A.shape[1] != E0.shape[0]:
        raise ShapeError(f"adjacency {tuple(A.shape)} does not match embeddings {tuple(E0.shape)}")
    layer = E0
    total = E0
    for _ in range(L):
        layer = A @ layer
        total = total + layer
    return total


class AttentionBlock(nn.Module):
    """Pre-norm causal self-attention followed by a position-wise feed-forward."""

    def __init__(self, d: int, heads: int = 1, dropout: float = 0.0):
        super().__init__()
        if d % heads:
            raise ValueError("d must be divisible by heads")
        self.heads = heads
        self.attn_norm = nn.LayerNorm(d)
        self.query = nn.Linear(d, d)
        self.key = nn.Linear(d, d)
        self.value = nn.Linear(d, d)
        self.out = nn.Linear(d, d)
        self.ff_norm = nn.LayerNorm(d)
        self.ff1 = nn.Linear(d, d)
        self.ff2 = nn.Linear(d, d)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        B, T, d = x.shape
        dh = d // self.heads
        h = self.attn_norm(x)
        q = self.query(h).view(B, T, self.heads, dh).transpose(1, 2)
        k = self.key(h).view(B, T, self.heads, dh).transpose(1, 2)
        v = self.value(h).view(B, T, self.heads, dh).transpose(1, 2)
        scores = q @ k.transpose(-1, -2) / math.sqrt(dh)
        causal = torch.ones(T, T, dtype=torch.bool, device=x.device).tril()
        scores = scores.masked_fill(~causal, float("-inf"))
        att = self.dropout(torch.softmax(scores, dim=-1))
        ctx = (att @ v).transpose(1, 2).reshape(B, T, d)
        x = x + self.dropout(self.out(ctx))
        h = self.ff_norm(x)
        return x + self.dropout(self.ff2(self.dropout(torch.relu(self.ff1(h)))))


class SessionEncoder(nn.Module):
    """Positional embeddings, causal attention blocks and a final layer norm."""

    def __init__(self, d: int, max_len: int = 50, blocks: int = 1, heads: int = 1, dropout: float = 0.0):
        super().__init__()
        self.max_len = max_len
        self.pos = nn.Parameter(torch.empty(max_len, d))
        nn.init.normal_(self.pos, std=0.02)
        self.input_dropout = nn.Dropout(dropout)
        self.blocks = nn.ModuleList(AttentionBlock(d, heads, dropout) for _ in range(blocks))
        self.norm = nn.LayerNorm(d)
        for block in self.blocks:
            for lin in (block.query, block.key, block.value, block.out, block.ff1, block.ff2):
                nn.init.xavier_uniform_(lin.weight)
                nn.init.zeros_(lin.bias)

    def forward_all(self, x: torch.Tensor) -> torch.Tensor:
        """Outputs at every position for right-padded inputs of shape (B, T, d)."""
        T = x.shape[1]
        if T > self.max_len:
            raise ShapeError(f"sequence length {T} exceeds max_len {self.max_len}")
        h = self.input_dropout(x + self.pos[:T])
        for block in self.blocks:
            h = block(h)
        return self.norm(h)

    def forward(self, x: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        out = self.forward_all(x)
        idx = (lengths - 1).clamp(min=0)
        return out[torch.arange(out.shape[0]), idx]


def pad_sequences(seqs: Sequence[Sequence[int]], pad: int, max_len: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Right-pad index sequences, keeping the most recent ``max_len`` items."""
    if any(len(s) == 0 for s in seqs):
        raise ValueError("empty session")
    seqs = [list(s)[-max_len:] for s in seqs]
    T = max(len(s) for s in seqs)
    out = torch.full((len(seqs), T), pad, dtype=torch.long)
    for r, s in enumerate(seqs):
        out[r, : len(s)] = torch.as_tensor(s, dtype=torch.long)
    return out, torch.as_tensor([len(s) for s in seqs], dtype=torch.long)


class RIGRec(nn.Module):
    """Item embeddings propagated over the item graph, read by a session encoder."""

    def __init__(
        self,
        n_items: int,
        d: int = 64,
        adjacency: np.ndarray | None = None,
        layers: int = 2,
        max_len: int = 50,
        blocks: int = 1,
        heads: int = 1,
        dropout: float = 0.0,
    ):
        super().__init__()
        self.n_items = n_items
        self.layers = layers
        self.E0 = nn.Parameter(torch.empty(n_items, d))
        nn.init.normal_(self.E0, std=0.1)
        if adjacency is None:
            adjacency = np.zeros((n_items, n_items))
        if adjacency.shape != (n_items, n_items):
            raise ShapeError(f"adjacency shape {adjacency.shape} != ({n_items}, {n_items})")
        self.register_buffer("A", torch.as_tensor(adjacency, dtype=torch.float32))
        self.encoder = SessionEncoder(d, max_len, blocks, heads, dropout)

    @property
    def pad(self) -> int:
        return self.n_items

    def item_table(self) -> torch.Tensor:
        """Convolved item representations (E*), without the padding row."""
        return graph_convolve(self.E0, self.A, self.layers)

    def _lookup(self, table: torch.Tensor, seqs: torch.Tensor) -> torch.Tensor:
        padded = torch.cat([table, table.new_zeros(1, table.shape[1])])
        return padded[seqs]

    def encode(self, seqs: torch.Tensor, lengths: torch.Tensor, table: torch.Tensor | None = None) -> torch.Tensor:
        table = self.item_table() if table is None else table
        return self.encoder(self._lookup(table, seqs), lengths)

    def encode_all(self, seqs: torch.Tensor, table: torch.Tensor | None = None) -> torch.Tensor:
        table = self.item_table() if table is None else table
        return self.encoder.forward_all(self._lookup(table, seqs))

    def forward(self, seqs: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        table = self.item_table()
        return self.encode(seqs, lengths, table) @ table.T


def score_items(session_vec, E_star) -> np.ndarray:
    """Dot-product logits of one session vector against every item."""
    session_vec = np.asarray(session_vec, dtype=np.float64)
    E_star = np.asarray(E_star, dtype=np.float64)
    if session_vec.shape[-1] != E_star.shape[1]:
        raise ShapeError("session vector and item table dimensions differ")
    return E_star @ session_vec


def rank_items(logits) -> np.ndarray:
    """Item indices by descending logit, ties by ascending index."""
    logits = np.asarray(logits)
    return np.lexsort((np.arange(len(logits)), -logits))


def target_ranks(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """1-based rank of each target under the descending-logit, ascending-index order."""
    t = logits.gather(1, targets[:, None])
    higher = (logits > t).sum(1)
    idx = torch.arange(logits.shape[1], device=logits.device)[None, :]
    tied_before = ((logits == t) & (idx < targets[:, None])).sum(1)
    return higher + tied_before + 1


def encode_session(items: Sequence[int], model: RIGRec) -> np.ndarray:
    """Representation of one session (item indices in order) at its last position."""
    if len(items) == 0:
        raise ValueError("empty session")
    seqs, lengths = pad_sequences([items], model.pad, model.encoder.max_len)
    with torch.no_grad():
        return model.encode(seqs, lengths)[0].double().numpy()
