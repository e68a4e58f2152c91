import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from inhocfl import ShapeError, confidence, model
from inhocfl.confidence import SlaBand
from oracles import fd_grad, in_band_fraction, rel_err
from test_model import random_net


def test_band_validation():
    with pytest.raises(ValueError):
        SlaBand(3.0, 0.0, 0.8)
    with pytest.raises(ValueError):
        SlaBand(0.0, 3.0, 1.0)
    with pytest.raises(ValueError):
        SlaBand(0.0, 3.0, 0.8, mu=0.0)


def test_sla_subset_examples():
    band = SlaBand(0.0, 3.0, 0.8)
    np.testing.assert_array_equal(confidence.sla_subset([1.0, 2.0, 5.0], band), [0, 1])
    np.testing.assert_array_equal(confidence.sla_subset([0.0, 3.0, 1.5], band), [0, 1, 2])
    z = np.random.default_rng(0).uniform(-2, 5, 200)
    scan = [i for i, v in enumerate(z) if 0.0 <= v <= 3.0]
    np.testing.assert_array_equal(confidence.sla_subset(z, band), scan)


def test_mutation_extremes():
    X = np.random.default_rng(1).normal(size=(4, 5))
    rng = np.random.default_rng(0)
    np.testing.assert_array_equal(confidence.mutate_features(X, np.zeros_like(X), rng), X)
    np.testing.assert_array_equal(confidence.mutate_features(X, np.ones_like(X), rng), 0.0)
    with pytest.raises(ShapeError):
        confidence.mutate_features(X, np.ones((4, 4)), rng)


def test_mutation_rate_matches_probabilities():
    pi = np.array([[0.05, 0.2, 0.5, 0.7, 0.95]])
    trials = 100_000
    X = np.ones((trials, 5))
    out = confidence.mutate_features(X, np.repeat(pi, trials, axis=0), np.random.default_rng(2))
    rate = (out == 0).mean(axis=0)
    assert np.all(np.abs(rate - pi[0]) <= 0.01)


def test_logistic_values():
    assert confidence.logistic(0.0, 1.0) == 0.5
    assert confidence.logistic(50.0, 1.0) >= 1 - 1e-9
    assert confidence.logistic(1.0, 2.0) == pytest.approx(1 / (1 + np.exp(-2.0)), abs=1e-12)
    assert confidence.logistic(1.0, 2.0) == pytest.approx(0.880797, abs=1e-6)
    with pytest.raises(ValueError):
        confidence.logistic(1.0, -1.0)


def const_model(value):
    return model.ModelParams((5, 1), (np.zeros((1, 5)),), (np.array([float(value)]),))


def test_confidence_examples():
    band = SlaBand(0.0, 3.0, 0.8)
    rows = np.ones((6, 5))
    assert confidence.confidence_metric(const_model(1.0), rows, band).c_value == 1.0
    # a linear model puts half the rows outside the band
    w = np.array([[1.0, 0, 0, 0, 0]])
    lin = model.ModelParams((5, 1), (w,), (np.zeros(1),))
    rows = np.zeros((4, 5))
    rows[:, 0] = [1.0, 2.0, 4.0, 5.0]
    rep = confidence.confidence_metric(lin, rows, band)
    assert rep.c_value == 0.5 and rep.u_size == 4 and rep.mutated_flip_count == 2


def test_empty_set_is_vacuously_confident():
    band = SlaBand(0.0, 3.0, 0.8)
    rep = confidence.confidence_metric(const_model(1.0), np.zeros((0, 5)), band)
    assert rep.empty and rep.c_value == 1.0 and rep.u_size == 0
    psi, (dws, dbs) = confidence.surrogate_constraint(const_model(1.0), np.zeros((0, 5)), band)
    assert psi == pytest.approx(band.nu - 1.0)
    assert all(np.all(d == 0) for d in dws + dbs)


def test_confidence_matches_per_sample_scan():
    rng = np.random.default_rng(3)
    for _ in range(30):
        p = random_net(rng)
        a = rng.uniform(-1, 1)
        band = SlaBand(a, a + rng.uniform(0.1, 3), 0.8)
        rows = rng.normal(size=(int(rng.integers(1, 40)), 5))
        z = [float(model.forward(p, r)) for r in rows]
        rep = confidence.confidence_metric(p, rows, band)
        assert rep.c_value == in_band_fraction(z, band.alpha, band.beta)
        assert 0.0 <= rep.c_value <= 1.0


def test_surrogate_saturates_deep_inside_band():
    band = SlaBand(0.0, 3.0, 0.8, mu=50.0)
    assert confidence.surrogate_value(np.full(10, 1.5), band) == pytest.approx(0.8 - 1.0, abs=1e-12)


def test_surrogate_tracks_metric_at_steep_logistic():
    rng = np.random.default_rng(4)
    band = SlaBand(0.0, 3.0, 0.8, mu=200.0)
    for _ in range(50):
        z = rng.uniform(-2, 5, 60)
        z = z[np.minimum(np.abs(z - band.alpha), np.abs(z - band.beta)) >= 0.05]
        c = in_band_fraction(z, band.alpha, band.beta)
        assert abs((band.nu - confidence.surrogate_value(z, band)) - c) <= 0.01


@pytest.mark.parametrize("mode", confidence.SURROGATE_MODES)
def test_surrogate_gradient_matches_finite_differences(mode):
    rng = np.random.default_rng(5)
    for _ in range(5):
        p = random_net(rng, "tanh")
        band = SlaBand(-0.5, 0.5, 0.8, mu=2.0)
        rows = rng.normal(size=(8, 5)) * 0.5
        psi, (dws, dbs) = confidence.surrogate_constraint(p, rows, band, mode)
        flat = np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(dws, dbs)])
        fd = fd_grad(lambda v: confidence.surrogate_value(model.forward(p.with_flat(v), rows), band, mode),
                     p.flat())
        assert np.max(rel_err(flat, fd, floor=1e-6)) <= 1e-4


def test_surrogate_is_invariant_to_row_duplication():
    rng = np.random.default_rng(6)
    p = random_net(rng)
    band = SlaBand(-1.0, 1.0, 0.8, mu=5.0)
    rows = rng.normal(size=(7, 5))
    a, _ = confidence.surrogate_constraint(p, rows, band)
    b, _ = confidence.surrogate_constraint(p, np.vstack([rows, rows]), band)
    assert a == pytest.approx(b, abs=1e-14)


@settings(max_examples=60, deadline=None)
@given(
    z=st.lists(st.floats(-3.0, 6.0), min_size=1, max_size=40),
    nu=st.floats(0.05, 0.95),
)
def test_satisfied_surrogate_implies_near_metric(z, nu):
    band = SlaBand(0.0, 3.0, nu, mu=200.0)
    z = np.array([v for v in z if min(abs(v - band.alpha), abs(v - band.beta)) >= 0.05])
    if z.size == 0:
        return
    c = in_band_fraction(z, band.alpha, band.beta)
    if confidence.surrogate_value(z, band) <= 0:
        assert c >= nu - 0.02
    assert 0.0 <= c <= 1.0
