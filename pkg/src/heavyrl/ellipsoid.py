"""Regularized weighted Gram matrix with an incrementally maintained inverse.

The matrix has the form ``lambda * I + sum_s sigma_s**-2 phi_s phi_s^T``. Every
learner in the package only ever adds observations, so the inverse is kept
current with Sherman-Morrison updates and refactorized from scratch every
``REFRESH_EVERY`` updates to bound the accumulated drift.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

REFRESH_EVERY = 256


@dataclass
class PrecisionState:
    dim: int
    lam: float
    gram: np.ndarray
    gram_inv: np.ndarray
    log_det: float
    update_count: int = 0

    def copy(self) -> "PrecisionState":
        return PrecisionState(
            self.dim, self.lam, self.gram.copy(), self.gram_inv.copy(),
            self.log_det, self.update_count,
        )

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "lam": self.lam,
            "gram": self.gram.tolist(),
            "gram_inv": self.gram_inv.tolist(),
            "log_det": self.log_det,
            "update_count": self.update_count,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PrecisionState":
        return cls(
            int(data["dim"]), float(data["lam"]),
            np.asarray(data["gram"], dtype=float),
            np.asarray(data["gram_inv"], dtype=float),
            float(data["log_det"]), int(data["update_count"]),
        )


def new_precision(dim: int, lam: float) -> PrecisionState:
    if int(dim) != dim or dim < 1:
        raise ValueError(f"dim must be a positive integer, got {dim!r}")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam!r}")
    dim = int(dim)
    eye = np.eye(dim)
    return PrecisionState(dim, float(lam), lam * eye, eye / lam, dim * float(np.log(lam)))


def _check_vec(state: PrecisionState, phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (state.dim,):
        raise ValueError(f"expected a vector of shape ({state.dim},), got {phi.shape}")
    return phi


def refactorize(state: PrecisionState) -> None:
    """Recompute ``gram_inv`` and ``log_det`` from ``gram`` in place."""
    chol = np.linalg.cholesky(state.gram)
    inv_chol = np.linalg.solve(chol, np.eye(state.dim))
    inv = inv_chol.T @ inv_chol
    state.gram_inv = 0.5 * (inv + inv.T)
    state.log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))


def rank_one_update(state: PrecisionState, phi, sigma: float) -> PrecisionState:
    """Add ``sigma**-2 phi phi^T`` to the Gram matrix (mutates and returns ``state``)."""
    phi = _check_vec(state, phi)
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma!r}")
    x = phi / sigma
    hx = state.gram_inv @ x
    w2 = float(x @ hx)
    state.gram += np.outer(x, x)
    state.gram_inv -= np.outer(hx, hx) / (1.0 + w2)
    state.log_det += float(np.log1p(w2))
    state.update_count += 1
    if state.update_count % REFRESH_EVERY == 0:
        refactorize(state)
    return state


def mahalanobis_inv(state: PrecisionState, phi) -> float:
    """``sqrt(phi^T gram^-1 phi)``."""
    phi = _check_vec(state, phi)
    return float(np.sqrt(max(float(phi @ state.gram_inv @ phi), 0.0)))


def mahalanobis_inv_rows(state: PrecisionState, phis: np.ndarray) -> np.ndarray:
    """Row-wise inverse norms for a stack of feature vectors."""
    phis = np.atleast_2d(np.asarray(phis, dtype=float))
    q = np.einsum("ij,jk,ik->i", phis, state.gram_inv, phis)
    return np.sqrt(np.maximum(q, 0.0))


def mahalanobis(state: PrecisionState, v) -> float:
    """``sqrt(v^T gram v)``, the norm the confidence ellipsoids are measured in."""
    v = _check_vec(state, v)
    return float(np.sqrt(max(float(v @ state.gram @ v), 0.0)))
