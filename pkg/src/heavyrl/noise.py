"""Symmetric noise distributions and their absolute/central moments."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special, stats

from .rng import RngStream

KINDS = ("student_t", "gaussian", "deterministic")


@dataclass(frozen=True)
class Noise:
    """Zero-mean noise ``scale * X`` with X standard Student-t or Gaussian."""

    kind: str
    scale: float = 1.0
    df: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {KINDS}")
        if self.scale < 0:
            raise ValueError("noise scale must be non-negative")
        if self.kind == "student_t" and not (self.df and self.df > 1):
            raise ValueError("student_t noise needs df > 1 so the mean exists")

    @classmethod
    def from_dict(cls, data: dict) -> "Noise":
        return cls(data["kind"], float(data.get("scale", 1.0)),
                   None if data.get("df") is None else float(data["df"]))

    def sample(self, rng: RngStream, size=None, scale=None):
        s = self.scale if scale is None else scale
        if self.kind == "deterministic" or s == 0:
            return 0.0 if size is None else np.zeros(size)
        if self.kind == "gaussian":
            return s * rng.normal(size)
        return s * rng.student_t(self.df, size)

    def _dist(self):
        if self.kind == "gaussian":
            return stats.norm(scale=self.scale)
        return stats.t(self.df, scale=self.scale)

    def abs_moment(self, p: float) -> float:
        """E|noise|^p (infinite when p >= df for Student-t)."""
        if self.kind == "deterministic" or self.scale == 0:
            return 0.0
        if self.kind == "gaussian":
            base = 2 ** (p / 2) * special.gamma((p + 1) / 2) / math.sqrt(math.pi)
        else:
            if p >= self.df:
                return math.inf
            df = self.df
            base = math.exp(
                (p / 2) * math.log(df) + special.gammaln((p + 1) / 2)
                + special.gammaln((df - p) / 2) - 0.5 * math.log(math.pi) - special.gammaln(df / 2))
        return self.scale ** p * base

    def moment_bound(self, epsilon: float) -> float:
        """(E|noise|^(1+eps))^(1/(1+eps)), the per-round central-moment scale."""
        return self.abs_moment(1 + epsilon) ** (1 / (1 + epsilon))

    def central_moment_of_power(self, p: float, q: float) -> float:
        """E| |X|^p - E|X|^p |^q by quadrature."""
        if self.kind == "deterministic" or self.scale == 0:
            return 0.0
        if self.kind == "student_t" and p * q >= self.df:
            return math.inf
        m = self.abs_moment(p)
        dist = self._dist()
        x0 = m ** (1 / p)

        def integrand(x):
            return 2.0 * dist.pdf(x) * abs(x ** p - m) ** q

        lo, _ = integrate.quad(integrand, 0.0, x0, epsabs=1e-12, epsrel=1e-10, limit=200)
        hi, _ = integrate.quad(integrand, x0, math.inf, epsabs=1e-12, epsrel=1e-10, limit=400)
        return lo + hi


def student_t_abs_moment(df: float, p: float) -> float:
    return Noise("student_t", 1.0, df).abs_moment(p)
