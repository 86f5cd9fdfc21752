"""Online adaptive Huber regression and variance-weighted ridge regression."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import ellipsoid as el
from .huber import HuberScheduleConfig, W_FLOOR, robustness_tau, weight_sigma
from .solver import SolveProblem, SolverError, project_ball, solve

# fraction of rounds with the estimate on the ball boundary above which we warn
BOUNDARY_WARN_FRACTION = 0.5
BOUNDARY_WARN_MIN_ROUNDS = 20


class BoundaryWarning(UserWarning):
    """The ball constraint binds in most rounds; B is probably too small."""


class _Buffer:
    """Append-only observation store backed by doubling numpy arrays."""

    def __init__(self, dim: int, capacity: int = 64):
        self.dim = dim
        self.n = 0
        self._phi = np.empty((capacity, dim))
        self._y = np.empty(capacity)
        self._sigma = np.empty(capacity)
        self._tau = np.empty(capacity)

    def append(self, phi, y, sigma, tau):
        if self.n == len(self._y):
            cap = 2 * len(self._y)
            self._phi = np.resize(self._phi, (cap, self.dim))
            self._y = np.resize(self._y, cap)
            self._sigma = np.resize(self._sigma, cap)
            self._tau = np.resize(self._tau, cap)
        self._phi[self.n] = phi
        self._y[self.n] = y
        self._sigma[self.n] = sigma
        self._tau[self.n] = tau
        self.n += 1

    @property
    def phi(self):
        return self._phi[:self.n]

    @property
    def y(self):
        return self._y[:self.n]

    @property
    def sigma(self):
        return self._sigma[:self.n]

    @property
    def tau(self):
        return self._tau[:self.n]

    def __len__(self):
        return self.n


@dataclass
class ConfidenceSet:
    center: np.ndarray
    radius: float
    shape: el.PrecisionState

    def contains(self, theta) -> bool:
        return el.mahalanobis(self.shape, np.asarray(theta) - self.center) <= self.radius


class HuberRegressor:
    """Adaptive Huber regression over the ball of radius ``schedule.B``.

    ``record`` follows the per-round recipe (weight, threshold, Gram update,
    constrained re-solve). ``record_weighted`` takes the weight and threshold
    from the caller, which is how the MDP learner drives it.
    """

    def __init__(self, schedule: HuberScheduleConfig, lam: float, dim: int, *,
                 ball_radius: float | None = None, tol: float = 1e-8,
                 max_iters: int = 10_000, strict: bool = False, fast_path: bool = True):
        self.schedule = schedule
        self.lam = float(lam)
        self.dim = int(dim)
        self.ball_radius = float(schedule.B if ball_radius is None else ball_radius)
        self.precision = el.new_precision(self.dim, self.lam)
        self.buffer = _Buffer(self.dim)
        self.theta = np.zeros(self.dim)
        self.moment = np.zeros(self.dim)
        self.tol = tol
        self.max_iters = max_iters
        self.strict = strict
        self.fast_path = fast_path
        self.boundary_rounds = 0
        self.nonconverged = 0
        self.solver_iterations = 0
        self._warned = False

    @property
    def t(self) -> int:
        return len(self.buffer)

    # objective -----------------------------------------------------------

    def objective(self, theta: np.ndarray, ys: np.ndarray | None = None):
        buf = self.buffer
        ys = buf.y if ys is None else ys
        z = (ys - buf.phi @ theta) / buf.sigma
        az = np.abs(z)
        inside = az <= buf.tau
        loss = np.where(inside, 0.5 * z * z, buf.tau * az - 0.5 * buf.tau * buf.tau)
        psi = np.clip(z, -buf.tau, buf.tau)
        value = 0.5 * self.lam * float(theta @ theta) + float(loss.sum())
        grad = self.lam * theta - buf.phi.T @ (psi / buf.sigma)
        return value, grad

    def _quadratic_solution(self, moment: np.ndarray, ys: np.ndarray):
        """Weighted ridge solution if it is certifiably the constrained minimizer."""
        theta = np.linalg.solve(self.precision.gram, moment)
        if np.linalg.norm(theta) > self.ball_radius:
            return None
        buf = self.buffer
        z = (ys - buf.phi @ theta) / buf.sigma
        if np.all(np.abs(z) <= buf.tau):
            return theta
        return None

    def fit(self, ys: np.ndarray | None = None, moment: np.ndarray | None = None,
            warm: np.ndarray | None = None) -> np.ndarray:
        """Constrained minimizer of the current loss (optionally with other targets)."""
        if self.t == 0:
            return np.zeros(self.dim)
        ys = self.buffer.y if ys is None else np.asarray(ys, dtype=float)
        if self.fast_path:
            if moment is None:
                moment = self.buffer.phi.T @ (ys / self.buffer.sigma ** 2)
            theta = self._quadratic_solution(moment, ys)
            if theta is not None:
                return theta
        warm = self.theta if warm is None else warm
        problem = SolveProblem(
            dim=self.dim, ball_radius=self.ball_radius, lam=self.lam,
            objective_grad=lambda th: self.objective(th, ys), smoothness=1.0,
            tol=self.tol, max_iters=self.max_iters,
            warm_start=project_ball(warm, self.ball_radius), metric=self.precision.gram,
        )
        result = solve(problem)
        self.solver_iterations += result.iterations
        if not result.converged:
            self.nonconverged += 1
            if self.strict:
                raise SolverError(
                    f"adaptive Huber solve did not converge at t={self.t}: "
                    f"residual {result.final_grad_gap:.3e} after {result.iterations} iterations")
        return result.solution

    # online interface ---------------------------------------------------------

    def _check_phi(self, phi) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        if phi.shape != (self.dim,):
            raise ValueError(f"feature must have shape ({self.dim},), got {phi.shape}")
        if not np.all(np.isfinite(phi)):
            raise ValueError("feature contains non-finite entries")
        if np.linalg.norm(phi) > self.schedule.L * (1 + 1e-9):
            raise ValueError(f"feature norm {np.linalg.norm(phi):.6g} exceeds L={self.schedule.L}")
        return phi

    def observe(self, phi, nu_hat: float):
        """(sigma_t, tau_t, w_t) for the next round, without mutating state."""
        phi = self._check_phi(phi)
        if not nu_hat >= 0:
            raise ValueError(f"nu_hat must be non-negative, got {nu_hat}")
        phi_norm = el.mahalanobis_inv(self.precision, phi)
        sigma = weight_sigma(self.schedule, nu_hat, phi_norm)
        w = phi_norm / sigma
        tau = robustness_tau(self.schedule, self.t + 1, max(w, W_FLOOR))
        return sigma, tau, w

    def record(self, phi, y: float, nu_hat: float) -> "HuberRegressor":
        sigma, tau, _ = self.observe(phi, nu_hat)
        return self.record_weighted(phi, y, sigma, tau)

    def record_weighted(self, phi, y: float, sigma: float, tau: float,
                        refit: bool = True) -> "HuberRegressor":
        phi = self._check_phi(phi)
        if not math.isfinite(y):
            raise ValueError(f"target must be finite, got {y}")
        if not (sigma > 0 and tau > 0):
            raise ValueError("sigma and tau must be positive")
        self.buffer.append(phi, y, sigma, tau)
        el.rank_one_update(self.precision, phi, sigma)
        self.moment += phi * (y / (sigma * sigma))
        if refit:
            self.refit()
        return self

    def refit(self) -> np.ndarray:
        self.theta = self.fit(moment=self.moment)
        if np.linalg.norm(self.theta) >= self.ball_radius * (1 - 1e-9):
            self.boundary_rounds += 1
        self._maybe_warn()
        return self.theta

    def _maybe_warn(self):
        if (not self._warned and self.t >= BOUNDARY_WARN_MIN_ROUNDS
                and self.boundary_rounds > BOUNDARY_WARN_FRACTION * self.t):
            self._warned = True
            warnings.warn(
                f"estimate sat on the ball boundary in {self.boundary_rounds}/{self.t} rounds; "
                f"the radius B={self.ball_radius} may be too small", BoundaryWarning, stacklevel=3)

    # confidence ---------------------------------------------------------

    def confidence_radius(self, t: int | None = None) -> float:
        return confidence_radius(self.schedule, self.lam, self.t if t is None else t)

    def confidence_set(self, bonus_scale: float = 1.0) -> ConfidenceSet:
        return ConfidenceSet(self.theta.copy(), bonus_scale * self.confidence_radius(),
                             self.precision)

    def solve_perturbed(self, y_hat) -> np.ndarray:
        """Minimizer of the same loss with the targets replaced by ``y_hat``."""
        y_hat = np.asarray(y_hat, dtype=float)
        if y_hat.shape != (self.t,):
            raise ValueError(f"expected {self.t} targets, got shape {y_hat.shape}")
        if self.t == 0:
            return np.zeros(self.dim)
        if np.array_equal(y_hat, self.buffer.y):
            return self.theta.copy()
        return self.fit(ys=y_hat)

    # persistence ----------------------------------------------------------

    def to_dict(self) -> dict:
        buf = self.buffer
        return {
            "version": 1,
            "schedule": self.schedule.to_dict(),
            "lam": self.lam,
            "dim": self.dim,
            "ball_radius": self.ball_radius,
            "precision": self.precision.to_dict(),
            "phi": buf.phi.tolist(),
            "y": buf.y.tolist(),
            "sigma": buf.sigma.tolist(),
            "tau": buf.tau.tolist(),
            "theta": self.theta.tolist(),
            "moment": self.moment.tolist(),
            "boundary_rounds": self.boundary_rounds,
            "nonconverged": self.nonconverged,
            "options": {"tol": self.tol, "max_iters": self.max_iters,
                        "strict": self.strict, "fast_path": self.fast_path},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HuberRegressor":
        if data.get("version") != 1:
            raise ValueError(f"unsupported checkpoint version {data.get('version')!r}")
        schedule = HuberScheduleConfig(**data["schedule"])
        reg = cls(schedule, data["lam"], data["dim"], ball_radius=data["ball_radius"],
                  **data["options"])
        for phi, y, s, tau in zip(data["phi"], data["y"], data["sigma"], data["tau"]):
            reg.buffer.append(np.asarray(phi, dtype=float), y, s, tau)
        reg.precision = el.PrecisionState.from_dict(data["precision"])
        reg.theta = np.asarray(data["theta"], dtype=float)
        reg.moment = np.asarray(data["moment"], dtype=float)
        reg.boundary_rounds = data["boundary_rounds"]
        reg.nonconverged = data["nonconverged"]
        return reg

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "HuberRegressor":
        return cls.from_dict(json.loads(text))


def confidence_radius(schedule: HuberScheduleConfig, lam: float, t: int) -> float:
    """3 sqrt(lam) B + 24 t^e sqrt(2 kappa) b (log 3T)^e (log 2T^2/delta)^(eps/(1+eps))."""
    if t < 0:
        raise ValueError("t must be non-negative")
    eps = schedule.epsilon
    e = schedule.t_exponent
    T = schedule.horizon_T
    base = 3.0 * math.sqrt(lam) * schedule.B
    if t == 0:
        return base
    return base + (24.0 * t ** e * math.sqrt(2.0 * schedule.kappa) * schedule.b
                   * math.log(3.0 * T) ** e
                   * math.log(2.0 * T * T / schedule.delta) ** (eps / (1 + eps)))


class RidgeRegressor:
    """Weighted ridge regression ``w = Sigma^-1 sum sigma^-2 phi f``."""

    def __init__(self, dim: int, lam: float, precision: el.PrecisionState | None = None):
        self.precision = el.new_precision(dim, lam) if precision is None else precision
        self.moment = np.zeros(self.precision.dim)
        self.w = np.zeros(self.precision.dim)

    def update(self, phi, target: float, sigma: float, update_precision: bool = True):
        phi = np.asarray(phi, dtype=float)
        if phi.shape != (self.precision.dim,):
            raise ValueError(f"feature must have shape ({self.precision.dim},)")
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        if update_precision:
            el.rank_one_update(self.precision, phi, sigma)
        self.moment += phi * (target / (sigma * sigma))
        self.w = self.precision.gram_inv @ self.moment
        return self


def ridge_update(reg: RidgeRegressor, phi, target: float, sigma: float) -> RidgeRegressor:
    return reg.update(phi, target, sigma)
