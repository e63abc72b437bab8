"""Self-attention and label-attention branches over encoder states."""

from __future__ import annotations

import csv

import numpy as np

from .autodiff import Tensor, mask_positions, matmul, softmax_rows, tanh, transpose


def _position_mask(mask) -> np.ndarray:
    # (B x M) or (M,) -> broadcastable over the label axis
    return np.expand_dims(np.asarray(mask, dtype=np.float64), -2)


def self_attention(H: Tensor, mask, w_s1: Tensor, w_s2: Tensor) -> tuple[Tensor, Tensor]:
    """A_s = softmax(W_s2 tanh(W_s1 H^T)) over unmasked positions; Q_s = A_s H.

    Shapes: H is [B x] M x 2d2, ``w_s1`` d3 x 2d2, ``w_s2`` L x d3.
    Returns A_s [B x] L x M and Q_s [B x] L x 2d2.
    """
    hidden = tanh(matmul(H, transpose(w_s1)))
    logits = transpose(matmul(hidden, transpose(w_s2)))
    a_s = softmax_rows(logits, _position_mask(mask))
    return a_s, matmul(a_s, H)


def label_attention(H: Tensor, mask, label_repr: Tensor) -> tuple[Tensor, Tensor]:
    """A_l = E_l' H^T (masked positions zeroed, no normalization); Q_l = A_l H.

    ``label_repr`` is the L x 2d2 projected label embedding matrix.
    """
    a_l = mask_positions(matmul(label_repr, transpose(H)), _position_mask(mask))
    return a_l, matmul(a_l, H)


def write_attention_csv(path, weights: np.ndarray, tokens, label_names) -> None:
    """One row per label, one column per token, 6-decimal fixed point."""
    weights = np.asarray(weights)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["label", *tokens])
        for name, row in zip(label_names, weights):
            w.writerow([name, *(f"{v:.6f}" for v in row)])


def read_attention_csv(path) -> tuple[list[str], list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    tokens = rows[0][1:]
    labels = [r[0] for r in rows[1:]]
    values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return tokens, labels, values
