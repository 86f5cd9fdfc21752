"""Projected accelerated gradient descent over a Euclidean ball.

The objective is strongly convex with modulus ``lam`` and has a Lipschitz
gradient with constant ``smoothness``. When a ``metric`` matrix M is given the
iteration runs in the M-geometry instead: the objective must then satisfy
``Hessian <= smoothness * M``, steps are ``M^-1 grad / smoothness`` and the
projection onto the ball is taken in the M-norm. For adaptive Huber regression
the weighted Gram matrix is such an M with ``smoothness = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

ObjectiveGrad = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


class SolverError(RuntimeError):
    pass


@dataclass
class SolveProblem:
    dim: int
    ball_radius: float
    lam: float
    objective_grad: ObjectiveGrad
    smoothness: float
    tol: float = 1e-8
    max_iters: int = 10_000
    warm_start: Optional[np.ndarray] = None
    metric: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.dim < 1 or not self.ball_radius > 0 or not self.lam > 0:
            raise ValueError("dim, ball_radius and lam must be positive")
        if self.metric is None and self.smoothness < self.lam:
            raise ValueError(f"smoothness {self.smoothness} is below lambda {self.lam}")
        if self.warm_start is not None:
            ws = np.asarray(self.warm_start, dtype=float)
            if ws.shape != (self.dim,):
                raise ValueError("warm start has the wrong shape")
            if np.linalg.norm(ws) > self.ball_radius + 1e-12:
                raise ValueError("warm start lies outside the ball")


@dataclass
class SolveResult:
    solution: np.ndarray
    iterations: int
    final_grad_gap: float
    converged: bool
    restarts: int = 0
    history: list = field(default_factory=list)


def project_ball(x, radius: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    norm = float(np.linalg.norm(x))
    if norm <= radius:
        return x.copy()
    return x * (radius / norm)


class _MetricBall:
    """Projection onto {|x| <= r} in the norm induced by an SPD matrix M."""

    def __init__(self, metric: np.ndarray, radius: float):
        self.radius = radius
        self.evals, self.evecs = np.linalg.eigh(metric)
        self.chol = np.linalg.cholesky(metric)

    def solve(self, g: np.ndarray) -> np.ndarray:
        y = np.linalg.solve(self.chol, g)
        return np.linalg.solve(self.chol.T, y)

    def project(self, v: np.ndarray) -> np.ndarray:
        if float(np.linalg.norm(v)) <= self.radius:
            return v.copy()
        # x(mu) = (M + mu I)^-1 M v; its norm decreases in mu
        c = self.evecs.T @ v
        lc = self.evals * c
        r2 = self.radius ** 2

        def excess(mu):
            return float(np.sum((lc / (self.evals + mu)) ** 2)) - r2

        hi = float(self.evals.max() * np.linalg.norm(c) / self.radius) + 1e-300
        mu = brentq(excess, 0.0, hi, xtol=1e-14 * max(hi, 1.0), rtol=1e-15, maxiter=500)
        x = self.evecs @ (lc / (self.evals + mu))
        return project_ball(x, self.radius)

    def norm(self, v: np.ndarray) -> float:
        return float(np.linalg.norm(self.chol.T @ v))


def _check_finite(value: float, grad: np.ndarray, where: str) -> None:
    if not math.isfinite(value) or not np.all(np.isfinite(grad)):
        raise SolverError(f"non-finite objective or gradient at {where}")


def solve(problem: SolveProblem) -> SolveResult:
    """Minimize over the ball; reports (not raises) non-convergence."""
    d = problem.dim
    radius = problem.ball_radius
    f = problem.objective_grad
    step = 1.0 / problem.smoothness

    if problem.metric is None:
        def precond(g):
            return g

        def proj(v):
            return project_ball(v, radius)

        def gap_norm(v):
            return float(np.linalg.norm(v))

        mu_rel = problem.lam / problem.smoothness
    else:
        geom = _MetricBall(np.asarray(problem.metric, dtype=float), radius)
        precond = geom.solve
        proj = geom.project
        gap_norm = geom.norm
        mu_rel = problem.lam / (problem.smoothness * float(geom.evals.max()))

    # momentum cap from the strong-convexity modulus
    sq = math.sqrt(min(max(mu_rel, 0.0), 1.0))
    beta_cap = (1.0 - sq) / (1.0 + sq)

    x = np.zeros(d) if problem.warm_start is None else project_ball(problem.warm_start, radius)
    fx, gx = f(x)
    _check_finite(fx, gx, "the starting point")
    start = (x, fx)

    def residual(point, grad):
        return gap_norm(point - proj(point - step * precond(grad)))

    gap = residual(x, gx)
    if gap <= problem.tol:
        return SolveResult(x, 0, gap, True)

    y, fy, gy = x, fx, gx
    t = 1.0
    restarts = 0
    for it in range(1, problem.max_iters + 1):
        x_new = proj(y - step * precond(gy))
        f_new, g_new = f(x_new)
        _check_finite(f_new, g_new, f"iteration {it}")
        if f_new > fx and y is not x:
            # non-monotone: drop the momentum and take a plain step from x
            restarts += 1
            t = 1.0
            y, fy, gy = x, fx, gx
            continue
        # a plain projected step from x descends in exact arithmetic, so it is
        # accepted even when rounding makes f_new tick above fx near the optimum
        x_prev = x
        x, fx, gx = x_new, f_new, g_new
        gap = residual(x, gx)
        if gap <= problem.tol:
            return _monotone(SolveResult(x, it, gap, True, restarts), fx, start)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        beta = min((t - 1.0) / t_new, beta_cap)
        t = t_new
        y = proj(x + beta * (x - x_prev)) if beta > 0 else x
        if y is x:
            fy, gy = fx, gx
        else:
            fy, gy = f(y)
            _check_finite(fy, gy, f"extrapolated point {it}")
    return _monotone(SolveResult(x, problem.max_iters, gap, False, restarts), fx, start)


def _monotone(result: SolveResult, fx: float, start) -> SolveResult:
    """Never return a point worse than the warm start."""
    x0, f0 = start
    if fx > f0:
        result.solution = x0
    return result
