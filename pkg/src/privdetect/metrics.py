"""Ranking metrics for multi-label prediction: Avg-prec, One-err, S@K, P@K."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from .data import DataError
from .fusion import rank_labels

KS = (1, 3, 5)
COLUMNS = ("avg_prec", "one_err", "s_at_1", "s_at_3", "s_at_5", "p_at_1", "p_at_3", "p_at_5")
HEADERS = ("Avg-prec", "One-err", "S@1", "S@3", "S@5", "P@1", "P@3", "P@5")


@dataclass
class MetricsReport:
    avg_prec: float
    one_err: float
    s_at_1: float
    s_at_3: float
    s_at_5: float
    p_at_1: float
    p_at_3: float
    p_at_5: float
    n_samples: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def values(self) -> list[float]:
        return [getattr(self, c) for c in COLUMNS]


def compute_metrics(scores, truth) -> MetricsReport:
    """Rank labels per sample (ties to the lower index) and score against ``truth``.

    ``scores`` and ``truth`` are N x L; every truth row needs a positive label.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth) != 0
    if scores.ndim != 2 or scores.shape != truth.shape:
        raise DataError(f"scores {scores.shape} and truth {truth.shape} must be equal N x L")
    n, n_labels = scores.shape
    if n == 0:
        raise DataError("no samples to evaluate")
    n_pos = truth.sum(axis=1)
    if (n_pos == 0).any():
        raise DataError(f"sample {int(np.argmin(n_pos))} has no positive label")

    order = rank_labels(scores)
    rel = np.take_along_axis(truth, order, axis=1)
    out = {"avg_prec": _exact_avg_prec(rel, n_pos)}
    top1_hits = int(rel[:, 0].sum())
    out["one_err"] = (n - top1_hits) / n
    for k in KS:
        top = rel[:, :k]
        out[f"s_at_{k}"] = int(top.any(axis=1).sum()) / n
        out[f"p_at_{k}"] = int(top.sum()) / (n * k)
    return MetricsReport(**out, n_samples=n)


def _exact_avg_prec(rel: np.ndarray, n_pos: np.ndarray) -> float:
    """Mean average precision in exact integer arithmetic, rounded once to float.

    Each precision term hits/rank is scaled by lcm(1..L) so every sample's sum
    is an integer; samples are then grouped by their positive count.
    """
    n, n_labels = rel.shape
    lcm = math.lcm(*range(1, n_labels + 1))
    weights = np.array([lcm // r for r in range(1, n_labels + 1)], dtype=object)
    hits = np.cumsum(rel, axis=1).astype(object)
    per_sample = (hits * rel.astype(object)).dot(weights)  # Python ints
    total = Fraction(0)
    for k in np.unique(n_pos):
        total += Fraction(int(per_sample[n_pos == k].sum()), int(k))
    return float(total / (lcm * n))


def mean_report(reports: list[MetricsReport]) -> MetricsReport:
    vals = np.array([r.values() for r in reports])
    mean = vals.mean(axis=0)
    return MetricsReport(*map(float, mean), n_samples=int(np.sum([r.n_samples for r in reports])))


def format_table(rows: list[tuple[str, MetricsReport]]) -> str:
    """Plain-text table with one column per metric, values in percent."""
    name_w = max(8, *(len(n) for n, _ in rows))
    head = f"{'Model':<{name_w}} " + " ".join(f"{h:>8}" for h in HEADERS)
    lines = [head, "-" * len(head)]
    for name, rep in rows:
        lines.append(f"{name:<{name_w}} " + " ".join(f"{100 * v:7.2f}%" for v in rep.values()))
    return "\n".join(lines)
