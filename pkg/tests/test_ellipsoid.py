import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from heavyrl import ellipsoid as el


def test_identity_state():
    s = el.new_precision(2, 1.0)
    assert np.array_equal(s.gram, np.eye(2))
    assert s.log_det == 0.0


def test_scalar_state():
    s = el.new_precision(1, 4.0)
    assert s.gram_inv[0, 0] == 0.25
    assert math.isclose(s.log_det, math.log(4.0))


def test_zero_lambda_rejected():
    with pytest.raises(ValueError):
        el.new_precision(3, 0.0)


def test_diagonal_update():
    s = el.new_precision(2, 1.0)
    el.rank_one_update(s, np.array([1.0, 0.0]), 1.0)
    assert np.allclose(s.gram, np.diag([2.0, 1.0]))
    assert np.allclose(s.gram_inv, np.diag([0.5, 1.0]))
    assert math.isclose(s.log_det, math.log(2.0))


def test_zero_vector_update():
    s = el.new_precision(2, 1.0)
    el.rank_one_update(s, np.zeros(2), 1.0)
    assert np.array_equal(s.gram, np.eye(2))
    assert np.array_equal(s.gram_inv, np.eye(2))
    assert s.log_det == 0.0 and s.update_count == 1


def test_random_updates_match_dense_inverse(rng):
    s = el.new_precision(4, 0.5)
    gram = 0.5 * np.eye(4)
    for _ in range(10):
        phi = rng.normal(size=4)
        sig = rng.uniform(0.3, 2.0)
        el.rank_one_update(s, phi, sig)
        gram += np.outer(phi, phi) / sig ** 2
    assert np.abs(s.gram_inv - np.linalg.inv(gram)).max() <= 1e-8


def test_norm_examples():
    s = el.new_precision(2, 1.0)
    assert el.mahalanobis_inv(s, np.array([1.0, 0.0])) == 1.0
    s.gram = np.diag([4.0, 1.0])
    el.refactorize(s)
    assert math.isclose(el.mahalanobis_inv(s, np.array([1.0, 0.0])), 0.5)


def test_norm_matches_solve(rng):
    s = el.new_precision(5, 1.0)
    for _ in range(30):
        el.rank_one_update(s, rng.normal(size=5), rng.uniform(0.5, 1.5))
    phi = rng.normal(size=5)
    direct = math.sqrt(phi @ np.linalg.solve(s.gram, phi))
    assert math.isclose(el.mahalanobis_inv(s, phi), direct, rel_tol=1e-10)
    rows = rng.normal(size=(7, 5))
    direct_rows = np.sqrt(np.einsum("ij,ij->i", rows, np.linalg.solve(s.gram, rows.T).T))
    assert np.allclose(el.mahalanobis_inv_rows(s, rows), direct_rows, rtol=1e-10)


def test_shape_mismatch():
    s = el.new_precision(3, 1.0)
    with pytest.raises(ValueError):
        el.rank_one_update(s, np.ones(2), 1.0)


@given(st.integers(1, 16), st.integers(1, 1000), st.integers(0, 2 ** 31))
def test_sherman_morrison_consistency(dim, n, seed):
    r = np.random.default_rng(seed)
    s = el.new_precision(dim, float(r.uniform(0.1, 2.0)))
    for _ in range(n):
        el.rank_one_update(s, r.normal(size=dim), float(r.uniform(0.2, 3.0)))
    phi = r.normal(size=dim)
    direct = math.sqrt(phi @ np.linalg.solve(s.gram, phi))
    assert abs(el.mahalanobis_inv(s, phi) - direct) <= 1e-7 * direct


@given(st.integers(1, 8), st.integers(0, 2 ** 31))
def test_norm_monotone_under_updates(dim, seed):
    r = np.random.default_rng(seed)
    s = el.new_precision(dim, 1.0)
    probe = r.normal(size=dim)
    before = el.mahalanobis_inv(s, probe)
    for _ in range(20):
        el.rank_one_update(s, r.normal(size=dim), float(r.uniform(0.2, 3.0)))
        after = el.mahalanobis_inv(s, probe)
        assert after <= before * (1 + 1e-12)
        before = after


@given(st.integers(1, 8), st.integers(0, 2 ** 31))
def test_determinant_product_rule(dim, seed):
    r = np.random.default_rng(seed)
    s = el.new_precision(dim, 1.0)
    for _ in range(300):
        phi = r.normal(size=dim)
        sig = float(r.uniform(0.2, 3.0))
        w2 = el.mahalanobis_inv(s, phi) ** 2 / sig ** 2
        before = s.log_det
        el.rank_one_update(s, phi, sig)
        assert abs(s.log_det - (before + math.log1p(w2))) <= 1e-9


def test_roundtrip_dict(rng):
    s = el.new_precision(3, 1.0)
    el.rank_one_update(s, rng.normal(size=3), 1.0)
    t = el.PrecisionState.from_dict(s.to_dict())
    assert np.array_equal(t.gram_inv, s.gram_inv) and t.log_det == s.log_det
