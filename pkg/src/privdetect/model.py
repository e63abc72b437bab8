"""The classifier: encoder, double attention, label GCN, fusion and output layer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import label_attention, self_attention
from .autodiff import Tensor, matmul, mul, sigmoid, sub
from .config import TrainConfig
from .data import Batch, EmbeddingTable, LabelVocabulary, embed_labels, substream
from .encoder import LstmParams, bilstm_forward, embed_tokens, init_lstm
from .fusion import bce_loss, compensation_coefficients, dot_fusion, fuse, predict
from .graph import gcn_forward, gcn_widths, init_gcn


@dataclass
class ForwardOutput:
    H: Tensor
    a_s: Tensor | None
    q_s: Tensor | None
    a_l: Tensor | None
    q_l: Tensor | None
    c_out: Tensor | None
    w_l: Tensor | None
    w_s: Tensor | None
    q: Tensor
    y_hat: Tensor


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Model:
    """Parameters plus the frozen inputs (word table, label embeddings, adjacency)."""

    def __init__(self, config: TrainConfig, vocab: LabelVocabulary, table: EmbeddingTable,
                 adjacency: np.ndarray, params: dict[str, Tensor],
                 label_embeddings: np.ndarray | None = None):
        if table.dim != config.d1:
            raise ValueError(f"embedding dimension {table.dim} != configured d1={config.d1}")
        n = len(vocab)
        if adjacency.shape != (n, n):
            raise ValueError(f"adjacency shape {adjacency.shape} != ({n}, {n})")
        self.config = config
        self.vocab = vocab
        self.table = table
        self.adjacency = np.asarray(adjacency, dtype=np.float64)
        self.label_embeddings = (embed_labels(vocab, table) if label_embeddings is None
                                 else np.asarray(label_embeddings, dtype=np.float64))
        self.params = params
        for name, p in params.items():
            p.name = name
        self._word_matrix = table.full_matrix()

    @classmethod
    def initialize(cls, config: TrainConfig, vocab: LabelVocabulary, table: EmbeddingTable,
                   adjacency: np.ndarray, seed: int | None = None) -> "Model":
        rng = substream(config.seed if seed is None else seed, "init")
        n_labels, d1, d2, d3 = len(vocab), config.d1, config.d2, config.d3
        params: dict[str, Tensor] = {}
        for direction in ("fwd", "bwd"):
            lstm = init_lstm(d1, d2, rng)
            for k, t in lstm.tensors().items():
                params[f"encoder.{direction}.{k}"] = t
        params["self_attn.w_s1"] = _uniform(rng, 2 * d2, (d3, 2 * d2))
        params["self_attn.w_s2"] = _uniform(rng, d3, (n_labels, d3))
        params["label_attn.proj"] = _uniform(rng, d1, (d1, 2 * d2))
        widths = gcn_widths(config.gcn_layers, d1, config.d4, 2 * d2)
        for i, w in enumerate(init_gcn(widths, rng)):
            params[f"gcn.w{i}"] = w
        params["fusion.w_a1"] = _uniform(rng, n_labels, (n_labels,))
        params["fusion.w_a2"] = _uniform(rng, n_labels, (n_labels,))
        params["fusion.gate"] = Tensor(np.zeros(n_labels), requires_grad=True)
        params["output.w_o"] = _uniform(rng, 2 * d2, (2 * d2,))
        return cls(config, vocab, table, adjacency, params)

    @staticmethod
    def parameter_names(config: TrainConfig) -> list[str]:
        names = [f"encoder.{d}.{k}" for d in ("fwd", "bwd") for k in ("w_ih", "w_hh", "b")]
        names += ["self_attn.w_s1", "self_attn.w_s2", "label_attn.proj"]
        names += [f"gcn.w{i}" for i in range(config.gcn_layers)]
        names += ["fusion.w_a1", "fusion.w_a2", "fusion.gate", "output.w_o"]
        return names

    @property
    def n_labels(self) -> int:
        return len(self.vocab)

    def lstm(self, direction: str) -> LstmParams:
        p = self.params
        return LstmParams(p[f"encoder.{direction}.w_ih"], p[f"encoder.{direction}.w_hh"],
                          p[f"encoder.{direction}.b"])

    def gcn_weights(self) -> list[Tensor]:
        return [self.params[f"gcn.w{i}"] for i in range(self.config.gcn_layers)]

    def active_parameters(self) -> dict[str, Tensor]:
        """Parameters that the configured variant actually uses."""
        v, fusion = self.config.variant, self.config.fusion
        uses_s = "S" in v
        uses_l = "L" in v
        uses_g = "G" in v
        keep = {}
        for name, t in self.params.items():
            group = name.split(".")[0]
            if group == "self_attn" and not uses_s:
                continue
            if group == "label_attn" and not uses_l:
                continue
            if group == "gcn" and not uses_g:
                continue
            if name in ("fusion.w_a1", "fusion.w_a2") and (not uses_g or fusion != "gcn"):
                continue
            if name == "fusion.gate" and v != "SL":
                continue
            keep[name] = t
        return keep

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    # ------------------------------------------------------------------
    def encode(self, tokens: np.ndarray, mask: np.ndarray) -> Tensor:
        x = embed_tokens(tokens, self._word_matrix)
        return bilstm_forward(x, mask, self.lstm("fwd"), self.lstm("bwd"))

    def label_repr(self) -> Tensor:
        return matmul(Tensor(self.label_embeddings), self.params["label_attn.proj"])

    def gcn(self) -> Tensor:
        return gcn_forward(Tensor(self.label_embeddings), self.adjacency, self.gcn_weights(),
                           self.config.leaky_slope)

    def forward(self, batch: Batch) -> ForwardOutput:
        cfg, p = self.config, self.params
        mask = batch.mask
        H = self.encode(batch.tokens, mask)
        v = cfg.variant
        a_s = q_s = a_l = q_l = c_out = w_l = w_s = None
        if "S" in v:
            a_s, q_s = self_attention(H, mask, p["self_attn.w_s1"], p["self_attn.w_s2"])
        if "L" in v:
            a_l, q_l = label_attention(H, mask, self.label_repr())
        if "G" in v:
            c_out = self.gcn()

        if v == "S":
            q = q_s
        elif v == "L":
            q = q_l
        elif v == "SL":
            gate = sigmoid(p["fusion.gate"])
            q = fuse(q_s, q_l, gate, sub(1.0, gate))
        elif v == "SG":
            # self branch fused with its GCN-modulated copy
            copy = mul(c_out, q_s)
            w_l, w_s = compensation_coefficients(c_out, q_s, copy, p["fusion.w_a1"],
                                                 p["fusion.w_a2"])
            q = fuse(q_s, copy, w_l, w_s)
        elif v == "LG":
            copy = mul(c_out, q_l)
            w_l, w_s = compensation_coefficients(c_out, copy, q_l, p["fusion.w_a1"],
                                                 p["fusion.w_a2"])
            q = fuse(copy, q_l, w_l, w_s)
        elif cfg.fusion == "gcn":
            w_l, w_s = compensation_coefficients(c_out, q_s, q_l, p["fusion.w_a1"],
                                                 p["fusion.w_a2"])
            q = fuse(q_s, q_l, w_l, w_s)
        else:
            q = dot_fusion(q_s, q_l, c_out, cfg.fusion)
        y_hat = predict(q, p["output.w_o"])
        return ForwardOutput(H, a_s, q_s, a_l, q_l, c_out, w_l, w_s, q, y_hat)

    def loss(self, batch: Batch) -> Tensor:
        return bce_loss(self.forward(batch).y_hat, batch.labels)

    def scores(self, batches) -> np.ndarray:
        """Forward-only label probabilities for a sequence of batches (N x L)."""
        out = [self.forward(b).y_hat.data for b in batches]
        return np.concatenate(out, axis=0) if out else np.zeros((0, self.n_labels))


__all__ = ["Model", "ForwardOutput"]
