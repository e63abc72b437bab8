import math

import numpy as np
import pytest

from privdetect.autodiff import Tape, Tensor, grad_check
from privdetect.config import TINY, VARIANTS, TrainConfig
from privdetect.data import ConfigurationError
from privdetect.diagnostics import randomize_parameters, tiny_problem
from privdetect.fusion import (LabelError, bce_loss, compensation_coefficients, dot_fusion,
                               fuse, predict, rank_labels)

from .conftest import param


def test_coefficients_equal_when_branches_score_equally(rng):
    c = Tensor(rng.normal(size=(3, 4)))
    q = Tensor(rng.normal(size=(3, 4)))
    w = Tensor(rng.normal(size=3))
    w_l, w_s = compensation_coefficients(c, q, q, w, w)
    np.testing.assert_array_equal(w_l.data, 0.5)
    np.testing.assert_array_equal(w_s.data, 0.5)


def test_coefficients_swap_with_branches(rng):
    c = Tensor(rng.normal(size=(3, 4)))
    q_s, q_l = Tensor(rng.normal(size=(3, 4))), Tensor(rng.normal(size=(3, 4)))
    w = Tensor(rng.normal(size=3))
    w_l, w_s = compensation_coefficients(c, q_s, q_l, w, w)
    w_l2, w_s2 = compensation_coefficients(c, q_l, q_s, w, w)
    np.testing.assert_allclose(w_l.data, w_s2.data, rtol=1e-15)
    np.testing.assert_allclose(w_s.data, w_l2.data, rtol=1e-15)


def test_coefficients_match_direct_formula(rng):
    c, q_s, q_l = (rng.normal(size=(3, 4)) for _ in range(3))
    w1, w2 = rng.normal(size=3), rng.normal(size=3)
    sig = lambda x: 1 / (1 + np.exp(-x))
    r_l, r_s = sig(c @ q_s.T @ w1), sig(c @ q_l.T @ w2)
    w_l, w_s = compensation_coefficients(*(Tensor(x) for x in (c, q_s, q_l, w1, w2)))
    np.testing.assert_allclose(w_l.data, r_l / (r_l + r_s), rtol=1e-14)
    np.testing.assert_allclose(w_s.data, r_s / (r_l + r_s), rtol=1e-14)


def test_coefficients_sum_to_one_in_open_interval(rng):
    for _ in range(50):
        # entries of this size keep the sigmoid logits within |30|
        args = [Tensor(rng.uniform(-0.6, 0.6, size=s)) for s in [(2, 5, 4)] * 3 + [(5,), (5,)]]
        w_l, w_s = compensation_coefficients(*args)
        np.testing.assert_allclose(w_l.data + w_s.data, 1.0, rtol=0, atol=2.3e-16)
        assert ((w_l.data > 0) & (w_l.data < 1)).all()
        assert ((w_s.data > 0) & (w_s.data < 1)).all()


def test_coefficients_saturate_but_still_sum_to_one(rng):
    # huge logits: one sigmoid underflows relative to the other and the ratio rounds to 1
    for _ in range(50):
        args = [Tensor(rng.normal(scale=3, size=s)) for s in [(2, 5, 4)] * 3 + [(5,), (5,)]]
        w_l, w_s = compensation_coefficients(*args)
        np.testing.assert_allclose(w_l.data + w_s.data, 1.0, rtol=0, atol=2.3e-16)
        assert ((w_l.data >= 0) & (w_l.data <= 1)).all()


def test_fuse_endpoints_and_midpoint(rng):
    q_s, q_l = Tensor(rng.normal(size=(3, 4))), Tensor(rng.normal(size=(3, 4)))
    one, zero, half = (Tensor(np.full(3, v)) for v in (1.0, 0.0, 0.5))
    np.testing.assert_array_equal(fuse(q_s, q_l, one, zero).data, q_l.data)
    np.testing.assert_array_equal(fuse(q_s, q_l, zero, one).data, q_s.data)
    np.testing.assert_allclose(fuse(q_s, q_l, half, half).data, (q_s.data + q_l.data) / 2,
                               rtol=1e-15)


def test_fuse_is_linear(rng):
    q_s, q_l = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    w_l = rng.uniform(size=3)
    w = (Tensor(w_l), Tensor(1 - w_l))
    base = fuse(Tensor(q_s), Tensor(q_l), *w).data
    np.testing.assert_allclose(fuse(Tensor(2.5 * q_s), Tensor(2.5 * q_l), *w).data, 2.5 * base,
                               rtol=1e-14)


def test_predict_values():
    q = Tensor(np.array([[1.0, 2.0], [0.0, 0.0]]))
    out = predict(q, Tensor(np.array([0.5, -0.25])))
    np.testing.assert_allclose(out.data, [0.5, 0.5])


def test_bce_perfect_prediction_is_zero():
    y = np.array([[1.0, 0.0, 1.0]])
    assert bce_loss(Tensor(y), y).item() == pytest.approx(0.0, abs=1e-11)


def test_bce_uniform_prediction_is_L_ln2():
    y = np.array([[1.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]])
    loss = bce_loss(Tensor(np.full((2, 4), 0.5)), y).item()
    assert loss == pytest.approx(4 * math.log(2), rel=1e-15)


def test_bce_matches_hand_sum(rng):
    p = rng.uniform(0.01, 0.99, size=(3, 4))
    y = (rng.uniform(size=(3, 4)) < 0.5).astype(float)
    ref = -sum(y[i, j] * math.log(p[i, j]) + (1 - y[i, j]) * math.log(1 - p[i, j])
               for i in range(3) for j in range(4)) / 3
    assert bce_loss(Tensor(p), y).item() == pytest.approx(ref, rel=1e-13)
    assert bce_loss(Tensor(p), y).item() >= 0


def test_bce_rejects_bad_targets():
    with pytest.raises(LabelError):
        bce_loss(Tensor(np.full((1, 2), 0.5)), np.array([[0.5, 1.0]]))
    with pytest.raises(LabelError):
        bce_loss(Tensor(np.full((1, 2), 0.5)), np.array([[1.0, 0.0, 1.0]]))


def test_bce_gradient(rng):
    z = param(rng, 2, 3)
    y = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    from privdetect.autodiff import sigmoid
    report = grad_check(lambda: bce_loss(sigmoid(z), y), {"z": z}, epsilon=1e-6, tolerance=1e-7)
    assert report.passed


@pytest.mark.parametrize("mode, expected", [
    ("dot-s", lambda c, s, l: c * s),
    ("dot-l", lambda c, s, l: c * l),
    ("dot-sl", lambda c, s, l: c * (s + l) / 2),
])
def test_dot_modes(rng, mode, expected):
    c, s, l = rng.normal(size=(3, 2, 4))
    out = dot_fusion(Tensor(s), Tensor(l), Tensor(c), mode).data
    np.testing.assert_allclose(out, expected(c, s, l), rtol=1e-15)


def test_dot_mode_unknown():
    with pytest.raises(ConfigurationError):
        dot_fusion(Tensor([1.0]), Tensor([1.0]), Tensor([1.0]), "dot-x")


def test_rank_labels_ties_to_lower_index():
    scores = np.array([[0.2, 0.9, 0.2, 0.9], [0.5, 0.5, 0.5, 0.5]])
    np.testing.assert_array_equal(rank_labels(scores), [[1, 3, 0, 2], [0, 1, 2, 3]])


# ---------------------------------------------------------------------------
# ablation variants in the assembled model


def variant_model(variant, fusion="gcn", seed=0):
    cfg = TrainConfig(**TINY, variant=variant, fusion=fusion, seed=seed)
    return tiny_problem(seed, cfg)


def test_slg_equals_default_pipeline():
    model, batch = tiny_problem(0)
    explicit, _ = variant_model("SLG")
    assert model.config.variant == "SLG"
    np.testing.assert_array_equal(model.forward(batch).y_hat.data,
                                  explicit.forward(batch).y_hat.data)


def test_s_variant_leaves_label_branch_without_gradient():
    model, batch = variant_model("S")
    with Tape() as tape:
        loss = model.loss(batch)
    tape.backward(loss)
    for name in ("label_attn.proj", "gcn.w0", "fusion.w_a1"):
        g = model.params[name].grad
        assert g is None or not g.any()
    assert model.params["self_attn.w_s1"].grad.any()


def test_l_variant_uses_label_branch_exactly():
    model, batch = variant_model("L")
    out = model.forward(batch)
    assert out.q is out.q_l
    assert out.q_s is None and out.c_out is None


@pytest.mark.parametrize("variant", VARIANTS)
def test_every_variant_gradients(variant):
    model, batch = variant_model(variant, seed=1)
    randomize_parameters(model, 1)
    report = grad_check(lambda: model.loss(batch), model.active_parameters(), epsilon=3e-4,
                        tolerance=1e-4, max_per_param=12, rng=np.random.default_rng(0))
    assert report.passed, report.format()


@pytest.mark.parametrize("fusion", ["dot-s", "dot-l", "dot-sl"])
def test_dot_fusion_model_gradients(fusion):
    model, batch = variant_model("SLG", fusion, seed=2)
    randomize_parameters(model, 2)
    report = grad_check(lambda: model.loss(batch), model.active_parameters(), epsilon=3e-4,
                        tolerance=1e-4, max_per_param=12, rng=np.random.default_rng(0))
    assert report.passed, report.format()
    assert "fusion.w_a1" not in model.active_parameters()


def test_sl_gate_starts_at_even_mix():
    model, batch = variant_model("SL")
    out = model.forward(batch)
    np.testing.assert_allclose(out.q.data, 0.5 * (out.q_s.data + out.q_l.data), rtol=1e-14)


def test_dot_fusion_requires_full_model():
    with pytest.raises(ConfigurationError):
        TrainConfig(**TINY, variant="S", fusion="dot-s")
