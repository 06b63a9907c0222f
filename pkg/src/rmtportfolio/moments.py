"""Sample, weighted and shrinkage moment estimators.

Returns matrices are oriented assets x time: column ``n`` holds the return
vector observed at time ``t - N + n``. Every estimator uses the 1/N
divisor (no Bessel correction).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from rmtportfolio.exceptions import InputError, SingularMatrixError

__all__ = [
    "ShrinkageConfig",
    "WeightProfile",
    "as_returns",
    "centered_weighted_cov",
    "effective_T",
    "effective_T_basis",
    "sample_cov",
    "sample_mean",
    "shrink_cov",
    "shrink_mean",
    "weighted_cov",
    "weighted_mean",
]

NORMALIZATION_RTOL = 1e-10
CLAMP_RTOL = 1e-12


def as_returns(Y: ArrayLike) -> NDArray[np.float64]:
    """Validate a returns matrix (M assets x N observations)."""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2:
        raise InputError(f"returns must be a 2-D array, got shape {Y.shape}")
    M, N = Y.shape
    if M < 1 or N < 2:
        raise InputError(f"returns need M >= 1 and N >= 2, got M={M}, N={N}")
    if not np.all(np.isfinite(Y)):
        raise InputError("returns contain non-finite entries")
    return Y


def _nonneg_vector(v: ArrayLike, name: str) -> NDArray[np.float64]:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise InputError(f"{name} must be a 1-D array")
    if not np.all(np.isfinite(v)) or np.any(v < 0.0):
        raise InputError(f"{name} entries must be finite and nonnegative")
    return v


@dataclass(frozen=True)
class WeightProfile:
    """Diagonals of the mean and covariance weighting matrices.

    ``w_mu`` must average to one so the weighted mean stays unbiased; pass
    ``rescale=True`` to normalize it instead of rejecting it.
    """

    w_mu: NDArray[np.float64]
    w_sigma: NDArray[np.float64]
    rescale: bool = field(default=False, compare=False)

    def __post_init__(self) -> None:
        w_mu = _nonneg_vector(self.w_mu, "w_mu")
        w_sigma = _nonneg_vector(self.w_sigma, "w_sigma")
        if w_mu.shape != w_sigma.shape:
            raise InputError(
                f"w_mu and w_sigma lengths differ: {w_mu.size} vs {w_sigma.size}"
            )
        avg = w_mu.mean()
        if abs(avg - 1.0) > NORMALIZATION_RTOL:
            if not self.rescale or avg == 0.0:
                raise InputError(
                    f"w_mu must satisfy mean(w_mu) == 1, got {avg!r}"
                )
            w_mu = w_mu / avg
        object.__setattr__(self, "w_mu", w_mu)
        object.__setattr__(self, "w_sigma", w_sigma)

    @property
    def N(self) -> int:
        return self.w_mu.size

    @classmethod
    def uniform(cls, N: int) -> WeightProfile:
        return cls(np.ones(N), np.ones(N))

    @classmethod
    def bimodal(cls, N: int, t: float) -> WeightProfile:
        """Covariance weights ``t`` on the older half and ``2 - t`` on the rest.

        Uniform mean weights. For odd ``N`` the older half has ``N // 2``
        entries.
        """
        if not 0.0 <= t <= 2.0:
            raise InputError(f"bimodal weight t must lie in [0, 2], got {t}")
        w_sigma = np.full(N, 2.0 - t)
        w_sigma[: N // 2] = t
        return cls(np.ones(N), w_sigma)


@dataclass(frozen=True)
class ShrinkageConfig:
    """Shrinkage intensities and targets for the mean and covariance."""

    rho: float
    delta: float
    mu0: NDArray[np.float64]
    sigma0: NDArray[np.float64]

    def __post_init__(self) -> None:
        if not 0.0 <= self.rho < 1.0:
            raise InputError(f"rho must lie in [0, 1), got {self.rho}")
        if not 0.0 <= self.delta <= 1.0:
            raise InputError(f"delta must lie in [0, 1], got {self.delta}")
        mu0 = np.asarray(self.mu0, dtype=np.float64)
        sigma0 = np.asarray(self.sigma0, dtype=np.float64)
        M = mu0.size
        if mu0.ndim != 1 or sigma0.shape != (M, M):
            raise InputError("mu0 must be length M and sigma0 must be M x M")
        if not np.allclose(sigma0, sigma0.T, rtol=0.0, atol=1e-12 * np.abs(sigma0).max()):
            raise InputError("sigma0 must be symmetric")
        if np.linalg.eigvalsh(sigma0)[0] <= 0.0:
            raise InputError("sigma0 must be positive definite")
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "sigma0", sigma0)

    @property
    def alpha(self) -> float:
        return self.rho / (1.0 - self.rho)

    @property
    def beta(self) -> float:
        if self.delta == 1.0:
            return float("inf")
        return self.delta / (1.0 - self.delta)

    @classmethod
    def identity_target(cls, M: int, rho: float, delta: float = 0.0) -> ShrinkageConfig:
        return cls(rho=rho, delta=delta, mu0=np.zeros(M), sigma0=np.eye(M))


def _check_weights(Y: NDArray[np.float64], w: WeightProfile) -> None:
    if w.N != Y.shape[1]:
        raise InputError(f"weight profile has length {w.N}, returns have N={Y.shape[1]}")


def _symmetrize(S: NDArray[np.float64]) -> NDArray[np.float64]:
    return 0.5 * (S + S.T)


def sample_mean(Y: ArrayLike) -> NDArray[np.float64]:
    Y = as_returns(Y)
    return Y.mean(axis=1)


def sample_cov(Y: ArrayLike) -> NDArray[np.float64]:
    """Centered sample covariance with divisor N."""
    Y = as_returns(Y)
    Yc = Y - Y.mean(axis=1, keepdims=True)
    return _symmetrize(Yc @ Yc.T / Y.shape[1])


def weighted_mean(Y: ArrayLike, w: WeightProfile) -> NDArray[np.float64]:
    Y = as_returns(Y)
    _check_weights(Y, w)
    return Y @ w.w_mu / Y.shape[1]


def weighted_cov(Y: ArrayLike, w: WeightProfile) -> NDArray[np.float64]:
    """Weighted covariance centered at the weighted mean.

    Evaluates ``(1/N) Y (I - W_mu 1 1^T / N) W_sigma (I - 1 1^T W_mu / N) Y^T``.
    """
    Y = as_returns(Y)
    _check_weights(Y, w)
    Yc = Y - weighted_mean(Y, w)[:, None]
    return _symmetrize((Yc * w.w_sigma) @ Yc.T / Y.shape[1])


def centered_weighted_cov(Y: ArrayLike, w: WeightProfile) -> NDArray[np.float64]:
    """Weighted covariance centered at the plain sample mean.

    This is ``(1/N) Y P W_sigma P Y^T`` with ``P = I - 1 1^T / N``, the
    form under which the deterministic equivalents are stated.
    """
    Y = as_returns(Y)
    _check_weights(Y, w)
    Yc = Y - Y.mean(axis=1, keepdims=True)
    return _symmetrize((Yc * w.w_sigma) @ Yc.T / Y.shape[1])


def shrink_mean(mu_hat: ArrayLike, cfg: ShrinkageConfig) -> NDArray[np.float64]:
    mu_hat = np.asarray(mu_hat, dtype=np.float64)
    return (1.0 - cfg.delta) * mu_hat + cfg.delta * cfg.mu0


def shrink_cov(S: ArrayLike, cfg: ShrinkageConfig) -> NDArray[np.float64]:
    """Convex combination ``(1 - rho) S + rho Sigma0``.

    Raises SingularMatrixError when ``rho == 0`` and ``S`` is rank deficient.
    """
    S = np.asarray(S, dtype=np.float64)
    out = _symmetrize((1.0 - cfg.rho) * S + cfg.rho * cfg.sigma0)
    if cfg.rho == 0.0:
        eig = np.linalg.eigvalsh(out)
        if eig[-1] <= 0.0 or eig[0] <= CLAMP_RTOL * eig[-1]:
            raise SingularMatrixError(
                "unshrunk covariance is singular (rho = 0 with M >= N or degenerate data)"
            )
    return out


def _centered_weight_matrix(w: WeightProfile) -> NDArray[np.float64]:
    N = w.N
    P = np.eye(N) - 1.0 / N
    return _symmetrize((P * w.w_sigma) @ P)


def effective_T_basis(w: WeightProfile) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Eigenpairs of ``P W_sigma P`` sorted by descending eigenvalue.

    Returns ``(t, U)`` with ``P W_sigma P = U diag(t) U^T`` and ``t`` clamped
    at zero.
    """
    t, U = np.linalg.eigh(_centered_weight_matrix(w))
    t, U = t[::-1], U[:, ::-1]
    top = max(t[0], 0.0)
    t = np.where(t < CLAMP_RTOL * top, 0.0, t)
    return np.maximum(t, 0.0), U


def effective_T(w: WeightProfile) -> NDArray[np.float64]:
    """Diagonal of the temporal profile T_N: eigenvalues of ``P W_sigma P``."""
    return effective_T_basis(w)[0]
