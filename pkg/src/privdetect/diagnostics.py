"""End-to-end gradient verification on a tiny configuration."""

from __future__ import annotations

import numpy as np

from .autodiff import GradCheckReport, grad_check
from .config import TINY, TrainConfig
from .data import Sample, collate, substream
from .model import Model
from .synthetic import generate
from .training import adjacency_from_samples

# central-difference step for whole-model checks; 1e-5 leaves round-off of
# ~1e-11 against gradients that LeakyReLU can shrink to ~1e-8
MODEL_EPSILON = 3e-4


def tiny_problem(seed: int = 0, config: TrainConfig | None = None, n_labels: int = 4,
                 seq_len: int = 6):
    """A two-sample batch (one padded) with L=4, M=6 and the tiny dimensions."""
    cfg = config or TrainConfig(**TINY, seed=seed)
    syn = generate(n_samples=16, n_labels=n_labels, seed=seed, dim=cfg.d1, n_pairs=1)
    samples = [Sample(r["id"], r["text"], r["text"].split(), syn.vocab.encode(r["labels"]))
               for r in syn.records]
    rng = substream(seed, "tiny")
    words = syn.table.words
    long_tokens = [words[i] for i in rng.choice(len(words), size=seq_len)]
    short_tokens = [words[i] for i in rng.choice(len(words), size=max(1, seq_len - 2))]
    batch_samples = [Sample("a", "", long_tokens, samples[0].labels),
                     Sample("b", "", short_tokens, samples[1].labels)]
    batch = collate(batch_samples, syn.table, m_max=seq_len)
    adjacency = adjacency_from_samples(samples, cfg)
    model = Model.initialize(cfg, syn.vocab, syn.table, adjacency)
    return model, batch


def randomize_parameters(model: Model, seed: int, low: float = -1.0, high: float = 1.0) -> None:
    rng = substream(seed, "gradcheck")
    for p in model.params.values():
        p.data[...] = rng.uniform(low, high, size=p.shape)


def check_model_gradients(config: TrainConfig | None = None, seed: int = 0,
                          epsilon: float = MODEL_EPSILON, tolerance: float = 1e-4,
                          per_tensor: int | None = None) -> GradCheckReport:
    """Finite-difference check of every parameter the configured variant uses.

    Parameters are redrawn from uniform(-1, 1) so no tensor sits in a
    vanishing-gradient corner of the small default initialisation.
    """
    model, batch = tiny_problem(seed, config)
    randomize_parameters(model, seed)
    return grad_check(lambda: model.loss(batch), model.active_parameters(), epsilon=epsilon,
                      tolerance=tolerance, max_per_param=per_tensor,
                      rng=np.random.default_rng(seed))
