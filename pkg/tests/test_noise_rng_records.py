import math

import numpy as np
import pytest
from scipy import integrate, stats

from heavyrl.noise import Noise
from heavyrl.records import RunRecord, canonical_json, fingerprint, read_csv
from heavyrl.rng import RngStream


def test_same_inputs_same_draws():
    assert np.array_equal(RngStream(3, 1).uniform(size=1000), RngStream(3, 1).uniform(size=1000))


def test_distinct_streams_differ():
    draws = [RngStream(3, i).uniform(size=16) for i in range(50)]
    for i in range(50):
        for j in range(i + 1, 50):
            assert not np.any(draws[i] == draws[j])


def test_student_t_mean():
    x = RngStream(0).student_t(2.0, size=10 ** 6)
    assert abs(x.mean()) <= 0.05


def test_student_t_distribution():
    x = RngStream(1).student_t(3.0, size=20000)
    assert stats.kstest(x, stats.t(3).cdf).pvalue > 1e-3


def test_child_streams_independent():
    r = RngStream(5, 2)
    assert not np.array_equal(r.child(0).uniform(size=8), r.child(1).uniform(size=8))


@pytest.mark.parametrize("noise,p", [(Noise("student_t", 0.7, 3.0), 1.5),
                                     (Noise("student_t", 1.0, 1.8), 1.5),
                                     (Noise("gaussian", 2.0), 2.0),
                                     (Noise("gaussian", 1.0), 1.3)])
def test_abs_moment_quadrature(noise, p):
    dist = noise._dist()
    ref = 2 * integrate.quad(lambda x: x ** p * dist.pdf(x), 0, np.inf, limit=400)[0]
    assert math.isclose(noise.abs_moment(p), ref, rel_tol=1e-6)


def test_moment_infinite_beyond_df():
    assert math.isinf(Noise("student_t", 1.0, 2.0).abs_moment(2.0))


def test_central_moment_of_power_monte_carlo():
    n = Noise("student_t", 1.0, 6.0)
    x = np.abs(RngStream(2).student_t(6.0, size=10 ** 6))
    mc = np.mean(np.abs(x ** 2 - n.abs_moment(2)) ** 1.5)
    assert math.isclose(n.central_moment_of_power(2, 1.5), mc, rel_tol=0.05)


def test_deterministic_noise():
    n = Noise("deterministic")
    assert n.sample(RngStream(0)) == 0.0 and n.abs_moment(2) == 0.0


def test_bad_noise():
    with pytest.raises(ValueError):
        Noise("cauchy")
    with pytest.raises(ValueError):
        Noise("student_t", 1.0, 1.0)


def test_canonical_json_normalizes():
    assert canonical_json({"b": 1.0, "a": [np.float64(0.5), np.int64(2)]}) == '{"a":[0.5,2],"b":1}'
    assert fingerprint({"x": 1, "y": 2.0}) == fingerprint({"y": 2, "x": 1.0})


def test_csv_roundtrip(tmp_path):
    rec = RunRecord("r", "f", 3)
    for t, v in enumerate([0.1, 0.2, 1 / 3], start=1):
        rec.append(t, v, {"arm": t})
    path = rec.write_csv(tmp_path / "r.csv")
    assert path.read_text().splitlines()[0] == "schema=1,run_id,seed,t,instant_regret,cum_regret,diag_json"
    back = read_csv(path)
    assert back.cum_regret == rec.cum_regret and back.diagnostics == rec.diagnostics
