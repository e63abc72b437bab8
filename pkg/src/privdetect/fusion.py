"""Compensation-coefficient fusion, output layer, loss and ranking."""

from __future__ import annotations

import numpy as np

from .autodiff import (Tensor, add, clamp, div, log, matmul, mul, rowwise_scale, scale,
                       sigmoid, sub, sum, transpose)
from .data import ConfigurationError

DOT_MODES = ("dot-s", "dot-l", "dot-sl")
PROB_FLOOR = 1e-12


class LabelError(ValueError):
    pass


def compensation_coefficients(c_out: Tensor, q_s: Tensor, q_l: Tensor, w_a1: Tensor,
                              w_a2: Tensor) -> tuple[Tensor, Tensor]:
    """Per-label weights (W_l, W_s), each in (0, 1) with W_l + W_s = 1.

    The coefficient for the label-attention branch is scored from the
    self-attention output and vice versa; both sigmoid scores are then
    renormalized by their sum.
    """
    r_l = sigmoid(matmul(matmul(c_out, transpose(q_s)), w_a1))
    r_s = sigmoid(matmul(matmul(c_out, transpose(q_l)), w_a2))
    total = add(r_l, r_s)
    return div(r_l, total), div(r_s, total)


def fuse(q_s: Tensor, q_l: Tensor, w_l: Tensor, w_s: Tensor) -> Tensor:
    """Row i of the result is W_l[i] * Q_l[i] + W_s[i] * Q_s[i]."""
    return add(rowwise_scale(q_l, w_l), rowwise_scale(q_s, w_s))


def dot_fusion(q_s: Tensor, q_l: Tensor, c_out: Tensor, mode: str) -> Tensor:
    """Element-wise product of the GCN output with one or both branches."""
    if mode == "dot-s":
        return mul(c_out, q_s)
    if mode == "dot-l":
        return mul(c_out, q_l)
    if mode == "dot-sl":
        return mul(c_out, scale(add(q_s, q_l), 0.5))
    raise ConfigurationError(f"unknown dot fusion mode {mode!r}; choose from {DOT_MODES}")


def predict(q: Tensor, w_o: Tensor) -> Tensor:
    """Label probabilities sigmoid(Q W_o), shape [B x] L."""
    return sigmoid(matmul(q, w_o))


def bce_loss(y_hat: Tensor, y) -> Tensor:
    """Binary cross-entropy summed over labels and averaged over the batch."""
    y = np.asarray(y, dtype=np.float64)
    if not np.isin(y, (0.0, 1.0)).all():
        raise LabelError("targets must be 0 or 1")
    if y.shape != y_hat.shape:
        raise LabelError(f"targets {y.shape} do not match predictions {y_hat.shape}")
    p = clamp(y_hat, PROB_FLOOR, 1.0 - PROB_FLOOR)
    ll = add(mul(y, log(p)), mul(1.0 - y, log(sub(1.0, p))))
    n = y.shape[0] if y.ndim == 2 else 1
    return scale(sum(ll), -1.0 / n)


def rank_labels(scores: np.ndarray) -> np.ndarray:
    """Label indices by descending score; ties go to the lower index."""
    scores = np.asarray(scores)
    return np.argsort(-scores, axis=-1, kind="stable")
