import json
import math
from fractions import Fraction

import numpy as np
import pytest

from privdetect.autodiff import NumericalError, Tape, Tensor, mul
from privdetect.autodiff import sum as tsum
from privdetect.config import TINY, TrainConfig
from privdetect.data import DataError, LabelVocabulary, Sample
from privdetect.metrics import compute_metrics, format_table, mean_report
from privdetect.model import Model
from privdetect.optim import Adam
from privdetect.training import (CompatibilityError, History, adjacency_from_samples,
                                 cross_validate, evaluate, run_fold, train_fold)

from .conftest import to_samples

# ---------------------------------------------------------------------------
# Adam


def test_adam_zero_gradient_leaves_parameters():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    p.grad = np.zeros(2)
    Adam({"p": p}, lr=0.1).step()
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_adam_first_step_is_lr_times_sign():
    p = Tensor(np.array([0.0, 0.0, 0.0]), requires_grad=True)
    p.grad = np.array([3.0, -0.5, 1e-3])
    Adam({"p": p}, lr=0.01).step()
    np.testing.assert_allclose(p.data, [-0.01, 0.01, -0.01], rtol=1e-5)


def test_adam_matches_hand_trace_on_square():
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    theta, m, v = 1.0, 0.0, 0.0
    trace = []
    for t in range(1, 11):
        g = 2.0 * theta
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta = theta - lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
        trace.append(theta)

    p = Tensor(np.array([1.0]), requires_grad=True)
    opt = Adam({"p": p}, lr=lr, beta1=b1, beta2=b2, eps=eps)
    got = []
    for _ in range(10):
        with Tape() as tape:
            loss = tsum(mul(p, p))
        tape.backward(loss)
        opt.step()
        opt.zero_grad()
        got.append(p.data[0])
    np.testing.assert_allclose(got, trace, rtol=0, atol=1e-12)


def test_adam_non_finite_gradient_aborts_before_update():
    p = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    q = Tensor(np.array([5.0]), requires_grad=True)
    p.grad = np.array([1.0, 1.0])
    q.grad = np.array([np.nan])
    opt = Adam({"p": p, "q": q})
    with pytest.raises(NumericalError, match="q"):
        opt.step()
    np.testing.assert_array_equal(p.data, [1.0, 2.0])
    assert opt.t == 0


# ---------------------------------------------------------------------------
# metrics


def oracle_metrics(scores, truth):
    """Exact rational reference from the ranking definitions."""
    n, L = len(scores), len(scores[0])
    totals = {k: Fraction(0) for k in ("ap", "oe", "s1", "s3", "s5", "p1", "p3", "p5")}
    for row, gold in zip(scores, truth):
        ranking = sorted(range(L), key=lambda j: (-row[j], j))
        positives = {j for j in range(L) if gold[j]}
        rank_of = {lab: r + 1 for r, lab in enumerate(ranking)}
        ap = Fraction(0)
        for lab in positives:
            better = sum(1 for other in positives if rank_of[other] <= rank_of[lab])
            ap += Fraction(better, rank_of[lab])
        totals["ap"] += ap / len(positives)
        totals["oe"] += 0 if ranking[0] in positives else 1
        for k in (1, 3, 5):
            hits = len(set(ranking[:k]) & positives)
            totals[f"s{k}"] += 1 if hits else 0
            totals[f"p{k}"] += Fraction(hits, k)
    return {k: v / n for k, v in totals.items()}


def as_dict(report):
    return {"ap": report.avg_prec, "oe": report.one_err, "s1": report.s_at_1,
            "s3": report.s_at_3, "s5": report.s_at_5, "p1": report.p_at_1,
            "p3": report.p_at_3, "p5": report.p_at_5}


def test_metrics_worked_example():
    r = compute_metrics([[0.9, 0.8, 0.1, 0.05]], [[1, 0, 1, 0]])
    assert r.avg_prec == 5 / 6
    assert r.p_at_3 == 2 / 3
    assert r.s_at_1 == 1.0 and r.one_err == 0.0


def test_metrics_perfect_ranking():
    r = compute_metrics([[0.9, 0.1, 0.8], [0.1, 0.7, 0.2]], [[1, 0, 1], [0, 1, 0]])
    assert (r.avg_prec, r.one_err, r.s_at_1) == (1.0, 0.0, 1.0)


def test_metrics_match_exact_oracle(rng):
    for _ in range(200):
        n, L = int(rng.integers(1, 51)), int(rng.integers(1, 7))
        scores = np.round(rng.uniform(size=(n, L)), 1)  # coarse values force ties
        truth = (rng.uniform(size=(n, L)) < 0.4).astype(int)
        truth[np.arange(n), rng.integers(0, L, size=n)] = 1
        got, ref = as_dict(compute_metrics(scores, truth)), oracle_metrics(scores, truth)
        for key in ref:
            assert got[key] == float(ref[key]), key


def test_metric_invariants(rng):
    scores, truth = rng.uniform(size=(30, 6)), (rng.uniform(size=(30, 6)) < 0.3).astype(int)
    truth[:, 0] = 1
    r = compute_metrics(scores, truth)
    assert r.one_err + r.s_at_1 == 1.0
    assert r.s_at_1 <= r.s_at_3 <= r.s_at_5
    assert r.p_at_1 == r.s_at_1


def test_metrics_errors():
    with pytest.raises(DataError):
        compute_metrics([[0.5, 0.5]], [[0, 0]])
    with pytest.raises(DataError):
        compute_metrics(np.zeros((0, 2)), np.zeros((0, 2)))
    with pytest.raises(DataError):
        compute_metrics([[0.5, 0.5]], [[1, 0, 0]])


def test_mean_report_and_table(rng):
    reports = [compute_metrics(rng.uniform(size=(5, 4)), np.eye(4, dtype=int)[rng.integers(0, 4, 5)])
               for _ in range(3)]
    mean = mean_report(reports)
    for i, v in enumerate(mean.values()):
        assert abs(v - sum(r.values()[i] for r in reports) / 3) <= 1e-12
    text = format_table([("mean", mean)])
    assert text.splitlines()[0].split()[1:] == ["Avg-prec", "One-err", "S@1", "S@3", "S@5",
                                                "P@1", "P@3", "P@5"]


# ---------------------------------------------------------------------------
# training


@pytest.fixture
def tiny_split(tiny_corpus):
    samples = to_samples(tiny_corpus)
    return samples[:16], samples[16:], tiny_corpus


def test_patience_one_with_frozen_model_stops_after_two_epochs(tiny_split):
    train, val, syn = tiny_split
    cfg = TrainConfig(**TINY, lr=0.0, patience=1, epochs_max=10, batch_size=8)
    _, history = train_fold(train, val, cfg, syn.vocab, syn.table)
    assert history.epochs == [1, 2]
    assert history.best_epoch == 1


def test_training_is_deterministic(tiny_split):
    train, val, syn = tiny_split
    cfg = TrainConfig(**TINY, epochs_max=3, patience=3, batch_size=8, seed=5)
    m1, h1 = train_fold(train, val, cfg, syn.vocab, syn.table)
    m2, h2 = train_fold(train, val, cfg, syn.vocab, syn.table)
    assert h1.train_loss == h2.train_loss
    for k in m1.params:
        np.testing.assert_array_equal(m1.params[k].data, m2.params[k].data)


def test_best_validation_parameters_are_restored(tiny_split):
    train, val, syn = tiny_split
    cfg = TrainConfig(**TINY, epochs_max=6, patience=6, batch_size=4, lr=0.01)
    model, history = train_fold(train, val, cfg, syn.vocab, syn.table)
    best = max(history.val_avg_prec)
    assert history.val_avg_prec[history.best_epoch - 1] == best
    assert evaluate(model, val).avg_prec == best


def test_history_csv(tmp_path):
    h = History()
    h.append(1, 0.5, 0.25)
    h.write_csv(tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text().splitlines() == ["epoch,train_loss,val_avg_prec",
                                                             "1,0.5,0.25"]


def test_training_rejects_empty_split(tiny_split):
    train, _, syn = tiny_split
    with pytest.raises(DataError):
        train_fold(train, [], TrainConfig(**TINY), syn.vocab, syn.table)


def test_evaluate_errors(tiny_split):
    train, val, syn = tiny_split
    cfg = TrainConfig(**TINY)
    model = Model.initialize(cfg, syn.vocab, syn.table, adjacency_from_samples(train, cfg))
    with pytest.raises(DataError):
        evaluate(model, [])
    other = LabelVocabulary(list(reversed(syn.vocab.names)))
    with pytest.raises(CompatibilityError):
        evaluate(model, val, vocab=other)
    assert evaluate(model, val) == evaluate(model, val)


def test_cross_validation_orchestration(tmp_path, tiny_corpus):
    samples = to_samples(tiny_corpus)
    cfg = TrainConfig(**TINY, folds=3, epochs_max=2, patience=2, batch_size=8)
    result = cross_validate(samples, cfg, tiny_corpus.vocab, tiny_corpus.table, out_dir=tmp_path)
    assert [f.fold for f in result.folds] == [0, 1, 2]
    assert sum(f.report.n_samples for f in result.folds) == len(samples)
    mean = result.mean.values()
    for i in range(8):
        assert abs(mean[i] - np.mean([r.values()[i] for r in result.reports])) <= 1e-12
    for i in range(3):
        assert (tmp_path / f"fold{i}.pmlc").is_file()
        assert (tmp_path / f"history_fold{i}.csv").is_file()
    json.dumps(result.to_dict())


def test_cross_validation_needs_enough_samples(tiny_corpus):
    samples = to_samples(tiny_corpus)[:2]
    with pytest.raises(DataError):
        cross_validate(samples, TrainConfig(**TINY, folds=3), tiny_corpus.vocab, tiny_corpus.table)


def test_graph_statistics_are_per_fold(tiny_corpus):
    vocab, table = tiny_corpus.vocab, tiny_corpus.table
    cfg = TrainConfig(**TINY, folds=3, epochs_max=1, patience=1, batch_size=8)
    base = [Sample(f"s{i}", "", ["occupationa"], vocab.encode([vocab.names[i % 4]]))
            for i in range(12)]
    # the only co-occurrence of labels 0 and 1 sits in samples that all land in fold 0's test set
    from privdetect.data import make_folds
    test0 = make_folds(12, 3, cfg.seed)[0][1]
    for i in test0[:2]:
        base[i] = Sample(f"s{i}", "", ["salarya"], vocab.encode(vocab.names[:2]))
    result = cross_validate(base, cfg, vocab, table, keep_models=True)
    adj = [f.model.adjacency for f in result.folds]
    assert adj[0][0, 1] == 0.0
    assert adj[1][0, 1] > 0.0 and adj[2][0, 1] > 0.0


def test_run_fold_uses_training_portion_graph(tiny_corpus):
    samples = to_samples(tiny_corpus)
    cfg = TrainConfig(**TINY, epochs_max=1, patience=1, batch_size=8)
    train_idx, test_idx = np.arange(12), np.arange(12, 24)
    res = run_fold(samples, 0, train_idx, test_idx, cfg, tiny_corpus.vocab, tiny_corpus.table,
                   keep_model=True)
    expected = adjacency_from_samples(samples[:12], cfg)
    np.testing.assert_array_equal(res.model.adjacency, expected)
