import math

import numpy as np
import pytest

from heavyrl.bandit import (OFUL, BanditInstance, HeavyOFUL, MedianOfMeansOFUL, NoiseModel,
                            TruncatedOFUL, heavy_tail_instance, fixed_arms, make_learner,
                            run_bandit, standard_basis_arms)
from heavyrl.noise import Noise
from heavyrl.regression import confidence_radius


def _learner(theta, beta):
    lrn = HeavyOFUL(2, 100, 0.1, 1.0, lam=1.0)
    lrn.reg.theta = np.asarray(theta, dtype=float)
    lrn.beta = beta
    return lrn


def test_greedy_choice():
    assert _learner([1, 0], 0.0).choose(np.eye(2)) == 0


def test_optimistic_values():
    lrn = _learner([1, 0], 0.5)
    assert np.allclose(lrn.ucb_values(np.eye(2)), [1.5, 0.5])
    assert lrn.choose(np.eye(2)) == 0


def test_tie_break_lowest_index():
    e1 = np.array([1.0, 0.0])
    assert _learner([0, 0], 1.0).choose(np.vstack([e1, e1])) == 0


def test_first_round_radius():
    lrn = HeavyOFUL(3, 500, 0.1, 0.5)
    cs = lrn.confidence_set()
    assert np.array_equal(cs.center, np.zeros(3))
    assert cs.radius == confidence_radius(lrn.schedule, lrn.lam, 0)


def _deterministic_instance(arms_gen, theta):
    noise = NoiseModel(Noise("deterministic"), 1.0)
    return BanditInstance(len(theta), np.asarray(theta), arms_gen, noise)


def test_oful_deterministic_orthonormal():
    theta = np.array([0.2, 0.7, 0.4])
    inst = _deterministic_instance(standard_basis_arms(), theta)
    # noiseless rewards: zero sub-Gaussian scale, small ridge so unplayed arms stay optimistic
    lrn = OFUL(3, 0.1, lam=1e-4, R=0.0)
    rec = run_bandit(inst, lrn, 60, seed=0)
    arms = [d["arm"] for d in rec.diagnostics]
    assert sorted(arms[:3]) == [0, 1, 2]
    assert all(a == 1 for a in arms[3:])


def test_regret_zero_single_arm():
    inst = BanditInstance(2, np.array([0.3, 0.1]), fixed_arms([[0.6, 0.8]]),
                          NoiseModel(Noise("student_t", 1.0, 3.0), 0.5))
    for name in ("heavy_oful", "oful", "truncation", "median_of_means"):
        rec = run_bandit(inst, make_learner(name, inst, 50, {}), 50, seed=1)
        assert rec.status == "complete" and rec.final_regret == 0.0


class _Oracle:
    name = "oracle"

    def __init__(self, theta):
        self.theta = theta

    def choose(self, arms):
        return int(np.argmax(arms @ self.theta))

    def update(self, phi, reward, nu_t):
        pass

    def diagnostics(self):
        return {}


def test_regret_zero_for_best_arm_player():
    inst = heavy_tail_instance()
    rec = run_bandit(inst, _Oracle(inst.theta_star), 200, seed=0)
    assert rec.final_regret == 0.0


def test_instance_validation():
    with pytest.raises(ValueError):
        BanditInstance(2, np.array([1.0, 1.0]), standard_basis_arms(),
                       NoiseModel(Noise("gaussian"), 1.0))
    with pytest.raises(ValueError):
        NoiseModel(Noise("student_t", 1.0, 1.5), 0.99)


def test_noise_model_moment():
    nm = NoiseModel(Noise("student_t", 1.0, 3.0), 0.5,
                    {"kind": "log10_uniform", "low": 0.0, "high": 2.0})
    unit = Noise("student_t", 1.0, 3.0).moment_bound(0.5)
    assert math.isclose(nm.central_moment_bound(1, 10.0), 10 * unit)
    assert math.isclose(nm.global_bound(), 100 * unit)


def test_baseline_fold_estimates():
    rng = np.random.default_rng(0)
    lrn = MedianOfMeansOFUL(2, 100, 0.1, 1.0, n_folds=3)
    X, y = rng.normal(size=(9, 2)), rng.normal(size=9)
    for x, r in zip(X, y):
        lrn.update(x, r, 1.0)
    for j in range(3):
        Xj, yj = X[j::3], y[j::3]
        direct = np.linalg.solve(np.eye(2) + Xj.T @ Xj, Xj.T @ yj)
        assert np.allclose(lrn.fold_theta[j], direct)


def test_truncation_clips():
    lrn = TruncatedOFUL(1, 100, 0.1, 1.0, nu_bar=1.0)
    lrn.t = 5
    u = lrn.clip_level(5)
    assert lrn.transform_reward(1e9) == u and lrn.transform_reward(-1e9) == -u


def test_run_determinism():
    inst = heavy_tail_instance()
    a = run_bandit(inst, make_learner("heavy_oful", inst, 200, {}), 200, seed=4)
    b = run_bandit(inst, make_learner("heavy_oful", inst, 200, {}), 200, seed=4)
    assert a.to_csv() == b.to_csv()


def test_failed_run_is_flagged():
    inst = BanditInstance(2, np.zeros(2), fixed_arms([[3.0, 0.0]]),
                          NoiseModel(Noise("gaussian"), 1.0))
    rec = run_bandit(inst, OFUL(2, 0.1), 10, seed=0)
    assert rec.status == "failed" and "norm" in rec.error
