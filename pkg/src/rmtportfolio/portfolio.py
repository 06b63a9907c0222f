"""Mean-variance portfolio constructors and out-of-sample evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import cho_factor, cho_solve

from rmtportfolio.exceptions import DegenerateFrontierError, InputError, SingularMatrixError

__all__ = [
    "ABC",
    "Moments",
    "Performance",
    "abc",
    "ewp",
    "gmvp",
    "mv_portfolio",
    "realized_performance",
    "tangency",
]

RCOND_MIN = 1e-14
FRONTIER_RTOL = 1e-12
TANGENCY_ATOL = 1e-12


@dataclass(frozen=True)
class Moments:
    """Expected returns and covariance of the asset returns per period."""

    mu: NDArray[np.float64]
    sigma: NDArray[np.float64]

    def __post_init__(self) -> None:
        mu = np.asarray(self.mu, dtype=np.float64)
        sigma = np.asarray(self.sigma, dtype=np.float64)
        M = mu.size
        if mu.ndim != 1 or sigma.shape != (M, M):
            raise InputError(f"mu must be length M and sigma M x M, got {mu.shape}, {sigma.shape}")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise InputError("moments contain non-finite entries")
        sigma = 0.5 * (sigma + sigma.T)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def M(self) -> int:
        return self.mu.size

    def factor(self):
        """Cholesky factor of sigma; rejects numerically singular matrices."""
        eig = np.linalg.eigvalsh(self.sigma)
        if eig[-1] <= 0.0 or eig[0] < RCOND_MIN * eig[-1]:
            raise SingularMatrixError(
                f"covariance is singular or ill-conditioned (eigenvalue range {eig[0]:.3g}..{eig[-1]:.3g})"
            )
        return cho_factor(self.sigma, lower=True)

    def solve(self, rhs: ArrayLike) -> NDArray[np.float64]:
        return cho_solve(self.factor(), np.asarray(rhs, dtype=np.float64))


class ABC(NamedTuple):
    A: float
    B: float
    C: float


class Performance(NamedTuple):
    mu_p: float
    sigma_p: float
    sharpe: float


def abc(m: Moments) -> ABC:
    """``A = 1' S^-1 1``, ``B = 1' S^-1 mu``, ``C = mu' S^-1 mu``."""
    ones = np.ones(m.M)
    x = m.solve(np.column_stack([ones, m.mu]))
    return ABC(float(ones @ x[:, 0]), float(ones @ x[:, 1]), float(m.mu @ x[:, 1]))


def gmvp(m: Moments) -> NDArray[np.float64]:
    x = m.solve(np.ones(m.M))
    return x / x.sum()


def tangency(m: Moments) -> NDArray[np.float64]:
    x = m.solve(m.mu)
    denom = x.sum()
    if abs(denom) <= TANGENCY_ATOL:
        raise DegenerateFrontierError("1' Sigma^-1 mu is zero; tangency portfolio undefined")
    return x / denom


def mv_portfolio(m: Moments, mu_d: float) -> NDArray[np.float64]:
    """Minimum-variance weights achieving expected return ``mu_d``."""
    ones = np.ones(m.M)
    x = m.solve(np.column_stack([ones, m.mu]))
    A, B, C = ones @ x[:, 0], ones @ x[:, 1], m.mu @ x[:, 1]
    D = A * C - B * B
    if not D > FRONTIER_RTOL * A * C:
        raise DegenerateFrontierError(
            "mean is proportional to ones (AC - B^2 ~ 0); use gmvp() instead"
        )
    return ((C - mu_d * B) / D) * x[:, 0] + ((mu_d * A - B) / D) * x[:, 1]


def ewp(M: int) -> NDArray[np.float64]:
    if M < 1:
        raise InputError("ewp needs M >= 1")
    return np.full(M, 1.0 / M)


def realized_performance(w: ArrayLike, truth: Moments) -> Performance:
    """Out-of-sample mean, volatility and Sharpe ratio of ``w`` under ``truth``."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (truth.M,):
        raise InputError(f"weights have shape {w.shape}, expected ({truth.M},)")
    var = float(w @ truth.sigma @ w)
    if not var > 0.0:
        raise SingularMatrixError("realized portfolio variance is zero")
    mu_p = float(w @ truth.mu)
    sigma_p = float(np.sqrt(var))
    return Performance(mu_p, sigma_p, mu_p / sigma_p)
