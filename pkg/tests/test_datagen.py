import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from inhocfl import datagen
from inhocfl.datagen import DEFAULT_SPECS, GroundTruth, SliceSpec


def _g_by_hand(row, truth):
    # independent scalar rewrite of the documented load formula
    ott1, ott2, ott3, cqi, mimo = (float(v) for v in row)
    q = cqi if truth.cqi_sign == 1 else 16.0 - cqi
    v = truth.c0 + truth.c1 * (ott1 + ott2 + ott3) * (q / 15.0) * (1.0 + truth.c2 * mimo)
    return min(max(v, 0.0), 100.0)


def _check_ranges(d, size):
    X, y = d.features, d.targets
    assert X.shape == (size, 5) and y.shape == (size,)
    assert np.all(X[:, :3] >= 0)
    assert np.all((X[:, 3] >= 1) & (X[:, 3] <= 15))
    assert np.all((X[:, 4] >= 0) & (X[:, 4] <= 1))
    assert np.all((y >= 0) & (y <= 100))
    assert np.all(np.isfinite(X)) and np.all(np.isfinite(y))


def test_table_size_example():
    d = datagen.generate_cl_dataset(DEFAULT_SPECS["eMBB"], 1, 1000, 0.5, seed=7)
    _check_ranges(d, 1000)
    assert d.slice_id == "eMBB" and d.cl_id == 1


def test_deterministic_for_same_arguments():
    a = datagen.generate_cl_dataset(DEFAULT_SPECS["Browsing"], 3, 200, 0.5, seed=11)
    b = datagen.generate_cl_dataset(DEFAULT_SPECS["Browsing"], 3, 200, 0.5, seed=11)
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.targets, b.targets)
    c = datagen.generate_cl_dataset(DEFAULT_SPECS["Browsing"], 3, 200, 0.5, seed=12)
    assert not np.array_equal(a.features, c.features)


def test_zero_shift_gives_identical_distribution_params():
    spec = DEFAULT_SPECS["SocialMedia"]
    p1 = datagen.distribution_params(spec, 1, 0.0, seed=3)
    p2 = datagen.distribution_params(spec, 2, 0.0, seed=3)
    np.testing.assert_array_equal(p1["traffic_mean"], p2["traffic_mean"])
    for k in ("cqi_mean", "mimo_a", "mimo_b"):
        assert p1[k] == p2[k]


def test_positive_shift_makes_cls_differ():
    spec = DEFAULT_SPECS["eMBB"]
    a0 = datagen.generate_cl_dataset(spec, 1, 4000, 0.0, seed=5)
    b0 = datagen.generate_cl_dataset(spec, 2, 4000, 0.0, seed=5)
    a1 = datagen.generate_cl_dataset(spec, 1, 4000, 1.0, seed=5)
    b1 = datagen.generate_cl_dataset(spec, 2, 4000, 1.0, seed=5)
    rng = (0.0, 20.0)
    iid = datagen.js_divergence(a0.targets, b0.targets, value_range=rng)
    shifted = datagen.js_divergence(a1.targets, b1.targets, value_range=rng)
    assert shifted > iid


def test_zero_noise_targets_equal_formula_row_by_row():
    truth = GroundTruth(noise_std=0.0)
    d = datagen.generate_cl_dataset(DEFAULT_SPECS["eMBB"], 4, 300, 0.5, seed=1, truth=truth)
    expected = [_g_by_hand(r, truth) for r in d.features]
    np.testing.assert_allclose(d.targets, expected, rtol=0, atol=1e-12)


def test_ground_truth_floor_and_monotonicity():
    truth = GroundTruth()
    assert datagen.ground_truth_cpu([0, 0, 0, 9, 0.3], truth) == pytest.approx(truth.c0)
    row = np.array([1.0, 2.0, 0.5, 9.0, 0.3])
    doubled = row.copy()
    doubled[:3] *= 2
    assert datagen.ground_truth_cpu(doubled, truth) > datagen.ground_truth_cpu(row, truth)


@pytest.mark.parametrize("sign", [1, -1])
def test_ground_truth_matches_scalar_rewrite(sign):
    truth = GroundTruth(c0=0.3, c1=0.9, c2=0.4, cqi_sign=sign)
    rng = np.random.default_rng(0)
    X = np.column_stack([rng.gamma(2, 1, (50, 3)), rng.uniform(1, 15, 50), rng.random(50)])
    np.testing.assert_allclose(datagen.ground_truth_cpu(X, truth),
                               [_g_by_hand(r, truth) for r in X], atol=1e-12)


def test_invalid_arguments_rejected():
    with pytest.raises(ValueError):
        datagen.generate_cl_dataset(DEFAULT_SPECS["eMBB"], 1, 0, 0.5, seed=0)
    with pytest.raises(ValueError):
        SliceSpec("eMBB", ("a", "b"), 1.0, 9.0, 0.3)
    with pytest.raises(ValueError):
        SliceSpec("eMBB", ("a", "b", "c"), 1.0, 16.0, 0.3)
    with pytest.raises(ValueError):
        GroundTruth(cqi_sign=0)


def test_split_is_seeded_and_disjoint():
    d = datagen.generate_cl_dataset(DEFAULT_SPECS["eMBB"], 2, 100, 0.5, seed=0)
    tr, te = datagen.train_test_split(d, seed=0)
    assert len(tr) == 80 and len(te) == 20
    rows = {tuple(r) for r in tr.features} | {tuple(r) for r in te.features}
    assert len(rows) == 100
    tr2, _ = datagen.train_test_split(d, seed=0)
    np.testing.assert_array_equal(tr.features, tr2.features)
    with pytest.raises(ValueError):
        datagen.train_test_split(d.subset(slice(0, 1)), seed=0)


def test_csv_round_trip(tmp_path):
    d = datagen.generate_cl_dataset(DEFAULT_SPECS["Browsing"], 1, 30, 0.5, seed=2)
    path = tmp_path / "cl.csv"
    datagen.save_csv(d, path)
    back = datagen.load_csv(path, cl_id=1, slice_id="Browsing", seed=2)
    np.testing.assert_array_equal(back.features, d.features)
    np.testing.assert_array_equal(back.targets, d.targets)


def test_js_divergence_bounds():
    a = np.random.default_rng(0).normal(size=2000)
    assert datagen.js_divergence(a, a) == pytest.approx(0.0)
    assert datagen.js_divergence(a, a + 100.0) == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(
    slice_id=st.sampled_from(datagen.SLICES),
    scale=st.floats(0.05, 10.0),
    cqi=st.floats(1.0, 15.0),
    mimo=st.floats(0.0, 1.0),
    shift=st.floats(0.0, 2.0),
    size=st.integers(1, 60),
    seed=st.integers(0, 2**31),
    sign=st.sampled_from([1, -1]),
)
def test_column_ranges_hold_for_random_specs(slice_id, scale, cqi, mimo, shift, size, seed, sign):
    spec = SliceSpec(slice_id, ("a", "b", "c"), scale, cqi, mimo)
    d = datagen.generate_cl_dataset(spec, 1, size, shift, seed, GroundTruth(cqi_sign=sign))
    _check_ranges(d, size)
