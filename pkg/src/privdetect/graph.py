"""Label co-occurrence graph, revised adjacency, and the GCN over labels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, leaky_relu, matmul
from .data import ConfigurationError

MAX_GCN_LAYERS = 5


@dataclass
class CoOccurrenceStats:
    counts: np.ndarray  # L, #(j)
    pair_counts: np.ndarray  # L x L, #(j, k); diagonal equals counts
    P: np.ndarray  # L x L, #(j, k) / #(j)


def count_cooccurrence(labels: np.ndarray, n_labels: int | None = None) -> CoOccurrenceStats:
    """Counts from an N x L binary label matrix (training portion only)."""
    y = np.asarray(labels, dtype=np.int64)
    if y.ndim != 2:
        raise ValueError(f"expected an N x L label matrix, got shape {y.shape}")
    if n_labels is not None and y.shape[1] != n_labels:
        raise ValueError(f"label matrix has {y.shape[1]} columns, expected {n_labels}")
    pair = y.T @ y
    counts = np.diag(pair).copy()
    P = np.zeros(pair.shape, dtype=np.float64)
    nz = counts > 0
    P[nz] = pair[nz] / counts[nz, None]
    return CoOccurrenceStats(counts, pair, P)


def revise_adjacency(P: np.ndarray, u: float = 0.2, threshold: float = 0.0) -> np.ndarray:
    """Re-weight co-occurrence probabilities into the propagation matrix.

    Diagonal is ``1 - u``. Off-diagonal row ``j`` is ``u * p_jk / sum_{x != j} p_jx``,
    after zeroing entries below ``threshold``; rows without co-occurrence are zero.
    """
    if not 0.0 < u < 1.0:
        raise ConfigurationError(f"trade-off u must lie in (0, 1), got {u}")
    P = np.asarray(P, dtype=np.float64)
    off = P.copy()
    np.fill_diagonal(off, 0.0)
    off[off < threshold] = 0.0
    denom = off.sum(axis=1, keepdims=True)
    A = np.divide(u * off, denom, out=np.zeros_like(off), where=denom > 0)
    np.fill_diagonal(A, 1.0 - u)
    return A


def gcn_widths(n_layers: int, d_in: int, hidden: int, d_out: int) -> list[int]:
    """Layer widths d_in -> hidden -> ... -> d_out for an n-layer GCN."""
    if not 1 <= n_layers <= MAX_GCN_LAYERS:
        raise ConfigurationError(f"GCN depth must be in 1..{MAX_GCN_LAYERS}, got {n_layers}")
    return [d_in] + [hidden] * (n_layers - 1) + [d_out]


def init_gcn(widths: list[int], rng: np.random.Generator) -> list[Tensor]:
    weights = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)), True))
    return weights


def gcn_forward(label_embeddings, A: np.ndarray, weights: list[Tensor],
                slope: float = 0.01) -> Tensor:
    """C^(l+1) = LeakyReLU(A C^(l) W^(l)), starting from the label embeddings."""
    c = label_embeddings
    A = Tensor(A)
    for w in weights:
        c = leaky_relu(matmul(matmul(A, c), w), slope)
    return c
