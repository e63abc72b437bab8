"""Token embedding lookup and the bidirectional LSTM encoder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .autodiff import Tensor, concat_last, custom, matmul, transpose
from .data import PAD, Batch


class TokenLookupError(IndexError):
    """Token index outside the embedding table."""


@dataclass
class LstmParams:
    w_ih: Tensor  # 4H x d_in, gate blocks (input, forget, cell, output)
    w_hh: Tensor  # 4H x H
    b: Tensor  # 4H

    @property
    def hidden(self) -> int:
        return self.w_hh.shape[1]

    def tensors(self) -> dict[str, Tensor]:
        return {"w_ih": self.w_ih, "w_hh": self.w_hh, "b": self.b}


def init_lstm(d_in: int, hidden: int, rng: np.random.Generator) -> LstmParams:
    bound = 1.0 / np.sqrt(hidden)
    w_ih = rng.uniform(-bound, bound, size=(4 * hidden, d_in))
    w_hh = rng.uniform(-bound, bound, size=(4 * hidden, hidden))
    b = rng.uniform(-bound, bound, size=4 * hidden)
    b[hidden:2 * hidden] = 1.0
    return LstmParams(Tensor(w_ih, True), Tensor(w_hh, True), Tensor(b, True))


def embed_tokens(tokens: np.ndarray, table: np.ndarray) -> Tensor:
    """Gather rows of ``table`` (words then OOV row); PAD positions become zeros."""
    tokens = np.asarray(tokens)
    valid = tokens != PAD
    if np.any(valid & ((tokens < 0) | (tokens >= table.shape[0]))):
        bad = tokens[valid & ((tokens < 0) | (tokens >= table.shape[0]))]
        raise TokenLookupError(f"token index {int(bad[0])} outside table of {table.shape[0]} rows")
    out = table[np.where(valid, tokens, 0)]
    out[~valid] = 0.0
    return Tensor(out)


def embed_batch(batch: Batch, table: np.ndarray) -> Tensor:
    return embed_tokens(batch.tokens, table)


def lstm_direction(x: Tensor, mask: np.ndarray, params: LstmParams,
                   reverse: bool = False) -> Tensor:
    """Run one LSTM direction over B x M x d_in input; returns B x M x H."""
    xproj = matmul(x, transpose(params.w_ih)) + params.b
    mask = np.ascontiguousarray(np.asarray(mask, dtype=np.float64).T)
    xp_tm = np.ascontiguousarray(xproj.data.transpose(1, 0, 2))
    w_hh = params.w_hh.data
    out, cache = _kernels.lstm_forward(xp_tm, w_hh, mask, reverse)

    def backward(g):
        dxp, dw = _kernels.lstm_backward(np.ascontiguousarray(g.transpose(1, 0, 2)),
                                         cache, w_hh, mask, reverse)
        return dxp.transpose(1, 0, 2), dw

    return custom((xproj, params.w_hh), out.transpose(1, 0, 2), backward, "lstm")


def bilstm_forward(embedded: Tensor, mask: np.ndarray, forward: LstmParams,
                   backward: LstmParams) -> Tensor:
    """H = [forward states, backward states], B x M x 2H, zero at masked positions."""
    h_fwd = lstm_direction(embedded, mask, forward, reverse=False)
    h_bwd = lstm_direction(embedded, mask, backward, reverse=True)
    return concat_last([h_fwd, h_bwd])
