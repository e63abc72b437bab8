"""Training with validation-based model selection, cross-validation, evaluation."""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import NumericalError, Tape
from .config import TrainConfig
from .data import (DataError, EmbeddingTable, LabelVocabulary, Sample, make_batches, make_folds,
                   split_train)
from .graph import count_cooccurrence, revise_adjacency
from .metrics import MetricsReport, compute_metrics, mean_report
from .model import Model
from .optim import Adam

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class CompatibilityError(ValueError):
    pass


@dataclass
class History:
    epochs: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_avg_prec: list[float] = field(default_factory=list)
    best_epoch: int = 0

    def append(self, epoch: int, loss: float, val: float) -> None:
        self.epochs.append(epoch)
        self.train_loss.append(loss)
        self.val_avg_prec.append(val)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_avg_prec"])
            for row in zip(self.epochs, self.train_loss, self.val_avg_prec):
                w.writerow([row[0], repr(row[1]), repr(row[2])])


def adjacency_from_samples(samples: Sequence[Sample], config: TrainConfig) -> np.ndarray:
    stats = count_cooccurrence(np.stack([s.labels for s in samples]))
    return revise_adjacency(stats.P, config.u, config.graph_threshold)


def score_samples(model: Model, samples: Sequence[Sample], batch_size: int = 256) -> np.ndarray:
    batches = make_batches(samples, model.table, batch_size, model.config.m_max, seed=None)
    return model.scores(batches)


def evaluate(model: Model, samples: Sequence[Sample],
             vocab: LabelVocabulary | None = None) -> MetricsReport:
    """Forward-only metrics of ``model`` on labelled ``samples``."""
    if vocab is not None and vocab != model.vocab:
        raise CompatibilityError("label vocabulary differs from the checkpoint's")
    if not samples:
        raise DataError("empty dataset")
    scores = score_samples(model, samples)
    truth = np.stack([s.labels for s in samples])
    return compute_metrics(scores, truth)


def train_epoch(model: Model, opt: Adam, samples: Sequence[Sample], config: TrainConfig,
                epoch: int) -> float:
    total, count = 0.0, 0
    batches = make_batches(samples, model.table, config.batch_size, config.m_max,
                           seed=config.seed, epoch=epoch)
    for bi, batch in enumerate(batches):
        try:
            with Tape() as tape:
                loss = model.loss(batch)
            tape.backward(loss)
            opt.step()
        except NumericalError as exc:
            raise TrainingError(f"epoch {epoch}, batch {bi}: {exc}") from exc
        finally:
            opt.zero_grad()
        total += loss.item() * len(batch)
        count += len(batch)
    return total / count


def train_fold(train_sub: Sequence[Sample], validation: Sequence[Sample], config: TrainConfig,
               vocab: LabelVocabulary, table: EmbeddingTable,
               adjacency: np.ndarray | None = None) -> tuple[Model, History]:
    """Train with Adam; keep the parameters with the best validation Avg-prec.

    Stops after ``config.patience`` epochs without strict improvement or at
    ``config.epochs_max``.
    """
    if not train_sub or not validation:
        raise DataError("training and validation splits must be non-empty")
    if adjacency is None:
        adjacency = adjacency_from_samples(train_sub, config)
    model = Model.initialize(config, vocab, table, adjacency)
    opt = Adam(model.params, config.lr, config.beta1, config.beta2, config.eps)
    history = History()
    best_val = -np.inf
    best_params = None
    stale = 0
    for epoch in range(1, config.epochs_max + 1):
        loss = train_epoch(model, opt, train_sub, config, epoch)
        if not np.isfinite(loss):
            raise TrainingError(f"epoch {epoch}: training loss is not finite")
        val = evaluate(model, validation).avg_prec
        history.append(epoch, loss, val)
        logger.debug("epoch %d loss %.6f val_avg_prec %.4f", epoch, loss, val)
        if val > best_val:
            best_val, stale = val, 0
            best_params = {k: p.data.copy() for k, p in model.params.items()}
            history.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                break
    for k, p in model.params.items():
        p.data[...] = best_params[k]
    return model, history


@dataclass
class FoldResult:
    fold: int
    report: MetricsReport
    history: History
    model: Model | None = None


@dataclass
class CrossValidationResult:
    folds: list[FoldResult]

    @property
    def reports(self) -> list[MetricsReport]:
        return [f.report for f in self.folds]

    @property
    def mean(self) -> MetricsReport:
        return mean_report(self.reports)

    def to_dict(self) -> dict:
        return {"folds": [dict(fold=f.fold, best_epoch=f.history.best_epoch, **f.report.to_dict())
                          for f in self.folds],
                "mean": self.mean.to_dict()}


def run_fold(samples: Sequence[Sample], fold: int, train_idx, test_idx, config: TrainConfig,
             vocab: LabelVocabulary, table: EmbeddingTable, out_dir=None,
             keep_model: bool = False) -> FoldResult:
    start = time.perf_counter()
    train = [samples[i] for i in train_idx]
    test = [samples[i] for i in test_idx]
    # graph statistics from this fold's training portion only
    adjacency = adjacency_from_samples(train, config)
    sub_idx, val_idx = split_train(np.arange(len(train)), config.split_ratio,
                                   seed=config.seed + fold)
    model, history = train_fold([train[i] for i in sub_idx], [train[i] for i in val_idx],
                                config, vocab, table, adjacency)
    report = evaluate(model, test)
    if out_dir is not None:
        from .checkpoint import save_checkpoint

        out_dir = Path(out_dir)
        save_checkpoint(model, out_dir / f"fold{fold}.pmlc", extra={"fold": fold})
        history.write_csv(out_dir / f"history_fold{fold}.csv")
    logger.info("fold %d: avg_prec %.4f (best epoch %d, %.1fs)", fold, report.avg_prec,
                history.best_epoch, time.perf_counter() - start)
    return FoldResult(fold, report, history, model if keep_model else None)


def _run_fold_job(args):
    return run_fold(*args)


def cross_validate(samples: Sequence[Sample], config: TrainConfig, vocab: LabelVocabulary,
                   table: EmbeddingTable, out_dir=None, jobs: int | None = None,
                   keep_models: bool = False) -> CrossValidationResult:
    if len(samples) < config.folds:
        raise DataError(f"{len(samples)} samples cannot form {config.folds} folds")
    folds = make_folds(len(samples), config.folds, config.seed)
    jobs = config.jobs if jobs is None else jobs
    args = [(list(samples), i, tr, te, config, vocab, table, out_dir, keep_models)
            for i, (tr, te) in enumerate(folds)]
    results = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_fold_job, a) for a in args]
            for i, fut in enumerate(futures):
                try:
                    results.append(fut.result())
                except Exception as exc:
                    raise TrainingError(f"fold {i}: {exc}") from exc
    else:
        for i, a in enumerate(args):
            try:
                results.append(run_fold(*a))
            except TrainingError as exc:
                raise TrainingError(f"fold {i}: {exc}") from exc
    return CrossValidationResult(results)
