"""Empirical, plug-in and generalized consistent estimators of the xi terms.

The data enter through a whitened matrix ``Ytilde`` (M x N) such that the
whitened shrinkage covariance is ``S + alpha I`` with ``S = Ytilde Ytilde^T / N``.
Plug-in ("cnv") estimators substitute ``S`` for the unknown ``R``; the
generalized consistent ("gce") estimators rescale and shift them using only
``S``, the known temporal profile ``T`` and the root ``delta_hat``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import cho_factor, cho_solve

from rmtportfolio.exceptions import ConvergenceError, InputError, SingularMatrixError
from rmtportfolio.moments import (
    ShrinkageConfig,
    WeightProfile,
    as_returns,
    centered_weighted_cov,
    effective_T_basis,
    shrink_cov,
    shrink_mean,
    weighted_mean,
)

__all__ = [
    "AbcHat",
    "WhitenedData",
    "XiEmpirical",
    "a_factor",
    "abc_hat",
    "b_shift",
    "estimate_delta",
    "estimation_pipeline",
    "empirical_xi",
    "gce_xi4",
    "gce_xi6",
    "inverse_sqrt",
    "plugin_xi4",
    "plugin_xi6",
    "quadratic_forms",
    "whiten_returns",
]

BISECTION_STEPS = 100
BRACKET_WIDTH = 1e-14


def inverse_sqrt(A: ArrayLike) -> NDArray[np.float64]:
    """Principal inverse square root of a symmetric positive-definite matrix."""
    A = np.asarray(A, dtype=np.float64)
    lam, V = np.linalg.eigh(0.5 * (A + A.T))
    if lam[0] <= 0.0:
        raise SingularMatrixError("matrix is not positive definite")
    return (V / np.sqrt(lam)) @ V.T


@dataclass(frozen=True)
class WhitenedData:
    Ytilde: NDArray[np.float64]
    alpha: float
    S: NDArray[np.float64] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        Y = np.asarray(self.Ytilde, dtype=np.float64)
        if Y.ndim != 2:
            raise InputError("Ytilde must be a 2-D array")
        if not self.alpha > 0.0:
            raise InputError(f"alpha must be positive, got {self.alpha}")
        S = Y @ Y.T / Y.shape[1]
        object.__setattr__(self, "Ytilde", Y)
        object.__setattr__(self, "S", 0.5 * (S + S.T))

    @property
    def M(self) -> int:
        return self.Ytilde.shape[0]

    @property
    def N(self) -> int:
        return self.Ytilde.shape[1]

    def gram(self) -> NDArray[np.float64]:
        G = self.Ytilde.T @ self.Ytilde / self.N
        return 0.5 * (G + G.T)

    def resolvent_factor(self):
        return cho_factor(self.S + self.alpha * np.eye(self.M), lower=True)


class XiEmpirical(NamedTuple):
    xi1: float
    xi2: float
    xi3: float
    xi4: float
    xi5: float
    xi6: float
    flavor: str = "empirical"


def _unit_n(upsilon_n: ArrayLike, N: int) -> NDArray[np.float64]:
    un = np.asarray(upsilon_n, dtype=np.float64)
    if un.shape != (N,):
        raise InputError(f"upsilon_n must have length {N}")
    if abs(np.linalg.norm(un) - 1.0) > 1e-10:
        raise InputError("upsilon_n must have unit norm")
    return un


def quadratic_forms(
    sigma_hat: ArrayLike, R: ArrayLike, u: ArrayLike, v: ArrayLike, flavor: str = "empirical"
) -> XiEmpirical:
    """The six forms for explicit vectors ``u`` (population) and ``v`` (sample).

    ``xi1 = u' H u``, ``xi2 = u' H v``, ``xi3 = v' H v`` and the same with
    ``H R H`` for xi4..xi6, where ``H = sigma_hat^-1``.
    """
    factor = cho_factor(np.asarray(sigma_hat, dtype=np.float64), lower=True)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    Hu, Hv = cho_solve(factor, np.column_stack([u, v])).T
    R = np.asarray(R, dtype=np.float64)
    RHu, RHv = R @ Hu, R @ Hv
    return XiEmpirical(
        float(u @ Hu), float(u @ Hv), float(v @ Hv),
        float(Hu @ RHu), float(Hu @ RHv), float(Hv @ RHv),
        flavor,
    )


def empirical_xi(d: WhitenedData, R: ArrayLike, upsilon_m: ArrayLike, upsilon_n: ArrayLike) -> XiEmpirical:
    """The six random quadratic forms given the true ``R`` (simulation only)."""
    un = _unit_n(upsilon_n, d.N)
    v = d.Ytilde @ un / np.sqrt(d.N)
    return quadratic_forms(d.S + d.alpha * np.eye(d.M), R, upsilon_m, v)


def plugin_xi4(d: WhitenedData, upsilon_m: ArrayLike) -> float:
    """``u' (S + aI)^-1 S (S + aI)^-1 u``."""
    Hu = cho_solve(d.resolvent_factor(), np.asarray(upsilon_m, dtype=np.float64))
    return float(Hu @ d.S @ Hu)


def plugin_xi6(d: WhitenedData, upsilon_n: ArrayLike, domain: str = "gram") -> float:
    """Plug-in xi6, evaluated in the N x N Gram domain or the M x M asset domain."""
    un = _unit_n(upsilon_n, d.N)
    if domain == "gram":
        lam, V = np.linalg.eigh(d.gram())
        lam = np.maximum(lam, 0.0)
        proj = V.T @ un
        return float(np.sum(proj**2 * lam**2 / (lam + d.alpha) ** 2))
    if domain == "asset":
        w = d.Ytilde @ un / d.N
        Hw = cho_solve(d.resolvent_factor(), w)
        return float(d.N * Hw @ d.S @ Hw)
    raise InputError(f"unknown domain {domain!r}; expected 'gram' or 'asset'")


def _sample_trace_ratio(d: WhitenedData) -> float:
    """``(1/N) tr[S (S + aI)^-1]`` from the eigenvalues of the smaller Gram side."""
    small = d.S if d.M <= d.N else d.gram()
    lam = np.maximum(np.linalg.eigvalsh(small), 0.0)
    return float(np.sum(lam / (lam + d.alpha)) / d.N)


def estimate_delta(d: WhitenedData, T: ArrayLike) -> float:
    """Root ``delta_hat >= 0`` of ``lhs = delta (1/N) sum t / (1 + delta t)``.

    Bracket doubling followed by bisection; the right side is strictly
    increasing in ``delta`` whenever some ``t > 0``.
    """
    t = np.asarray(T, dtype=np.float64)
    if t.shape != (d.N,):
        raise InputError(f"T must have length N={d.N}")
    lhs = _sample_trace_ratio(d)
    if lhs <= 0.0:
        return 0.0
    sup = np.count_nonzero(t > 0.0) / d.N
    if lhs >= sup:
        raise ConvergenceError(
            f"no finite root: sample trace ratio {lhs:.6g} >= supremum {sup:.6g} of the right side"
        )

    def f(x: float) -> float:
        return x * float(np.sum(t / (1.0 + x * t))) / d.N - lhs

    lo, hi = 0.0, 1.0
    while f(hi) < 0.0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise ConvergenceError("failed to bracket delta_hat")
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= BRACKET_WIDTH * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def a_factor(T: ArrayLike, delta_hat: float) -> float:
    """``1 / ((1/N) tr[T (I + delta_hat T)^-2])``."""
    t = np.asarray(T, dtype=np.float64)
    denom = float(np.sum(t / (1.0 + delta_hat * t) ** 2)) / t.size
    if not denom > 0.0:
        raise InputError("temporal profile T is identically zero")
    return 1.0 / denom


def b_shift(T: ArrayLike, upsilon_n: ArrayLike, delta_hat: float) -> float:
    """Additive correction of the xi6 estimator."""
    t = np.asarray(T, dtype=np.float64)
    un = np.asarray(upsilon_n, dtype=np.float64)
    num = delta_hat**2 * float(np.sum(un**2 * t**2 / (1.0 + delta_hat * t) ** 2))
    return -num * a_factor(t, delta_hat)


def gce_xi4(d: WhitenedData, upsilon_m: ArrayLike, T: ArrayLike, delta_hat: float) -> float:
    return a_factor(T, delta_hat) * plugin_xi4(d, upsilon_m)


def gce_xi6(d: WhitenedData, upsilon_n: ArrayLike, T: ArrayLike, delta_hat: float) -> float:
    return a_factor(T, delta_hat) * plugin_xi6(d, upsilon_n) + b_shift(T, upsilon_n, delta_hat)


def whiten_returns(
    Y: ArrayLike, sigma0: ArrayLike, w: WeightProfile, alpha: float, *, center: bool = True,
    sigma0_isqrt: ArrayLike | None = None,
) -> tuple[WhitenedData, NDArray[np.float64]]:
    """Map observed returns to ``(WhitenedData, T)``.

    With ``center=True`` the covariance is centered at the plain sample mean,
    ``T`` holds the eigenvalues of ``P W_sigma P`` and
    ``Ytilde = Sigma0^{-1/2} Y U T^{1/2}`` in the matching eigenbasis ``U``.
    With ``center=False`` the mean is taken as known to be zero and
    ``T = W_sigma``.
    """
    Y = as_returns(Y)
    if w.N != Y.shape[1]:
        raise InputError("weight profile length does not match N")
    isq = inverse_sqrt(sigma0) if sigma0_isqrt is None else np.asarray(sigma0_isqrt)
    if center:
        t, U = effective_T_basis(w)
        Yc = Y - Y.mean(axis=1, keepdims=True)
        # constant series have exactly zero deviations; keep them free of round-off
        Yc[np.ptp(Y, axis=1) == 0.0] = 0.0
        Yt = isq @ (Yc @ U) * np.sqrt(t)
    else:
        t = w.w_sigma.copy()
        Yt = isq @ Y * np.sqrt(t)
    return WhitenedData(Yt, alpha), t


class AbcHat(NamedTuple):
    A: float
    B: float
    C: float
    mu_hat: NDArray[np.float64]
    sigma_hat: NDArray[np.float64]
    gmvp_sandwich: float | None
    mean_sandwich: float | None


def abc_hat(
    returns: ArrayLike, cfg: ShrinkageConfig, w: WeightProfile, sigma: ArrayLike | None = None,
    *, center: bool = True,
) -> AbcHat:
    """Direct evaluation of the estimated frontier scalars.

    Uses the shrunk mean and the shrunk covariance centered per ``center``.
    When the true ``sigma`` is given, also returns ``1' H Sigma H 1`` and
    ``mu' H Sigma H mu`` with ``H`` the inverse shrunk covariance.
    """
    Y = as_returns(returns)
    if center:
        S_w = centered_weighted_cov(Y, w)
    else:
        S_w = (Y * w.w_sigma) @ Y.T / Y.shape[1]
    sigma_shr = shrink_cov(S_w, cfg)
    mu_shr = shrink_mean(weighted_mean(Y, w), cfg)
    M = Y.shape[0]
    ones = np.ones(M)
    factor = cho_factor(sigma_shr, lower=True)
    H1, Hmu = cho_solve(factor, np.column_stack([ones, mu_shr])).T
    A, B, C = float(ones @ H1), float(ones @ Hmu), float(mu_shr @ Hmu)
    g_sand = m_sand = None
    if sigma is not None:
        sigma = np.asarray(sigma, dtype=np.float64)
        g_sand = float(H1 @ sigma @ H1)
        m_sand = float(Hmu @ sigma @ Hmu)
    return AbcHat(A, B, C, mu_shr, sigma_shr, g_sand, m_sand)


def estimation_pipeline(
    returns: ArrayLike, rho: float, w: WeightProfile, sigma0: ArrayLike, *, center: bool = True,
    delta: float = 0.0,
) -> dict:
    """Observed-data GMVP risk diagnostics: plug-in and consistent estimates.

    ``returns`` is M x N. The mean is shrunk toward zero with intensity
    ``delta``; this only affects the frontier scalars.
    """
    Y = as_returns(returns)
    M, N = Y.shape
    if not 0.0 < rho < 1.0:
        raise InputError(f"rho must lie in (0, 1) for estimation, got {rho}")
    sigma0 = np.asarray(sigma0, dtype=np.float64)
    cfg = ShrinkageConfig(rho=rho, delta=delta, mu0=np.zeros(M), sigma0=sigma0)
    alpha = cfg.alpha
    isq = inverse_sqrt(sigma0)
    d, T = whiten_returns(Y, sigma0, w, alpha, center=center, sigma0_isqrt=isq)
    u = isq @ np.ones(M) / np.sqrt(M)
    un = np.full(N, 1.0 / np.sqrt(N))
    frontier = abc_hat(Y, cfg, w, center=center)
    xi = quadratic_forms(d.S + alpha * np.eye(M), np.eye(M), u, d.Ytilde @ un / np.sqrt(N))
    delta_hat = estimate_delta(d, T)
    cnv4, cnv6 = plugin_xi4(d, u), plugin_xi6(d, un)
    gce4 = a_factor(T, delta_hat) * cnv4
    gce6 = gce_xi6(d, un, T, delta_hat)
    scale = M * xi.xi1**2
    return {
        "M": M,
        "N": N,
        "rho": rho,
        "alpha": alpha,
        "A_hat": frontier.A,
        "B_hat": frontier.B,
        "C_hat": frontier.C,
        "delta_hat": delta_hat,
        "a_M": a_factor(T, delta_hat),
        "b_M": b_shift(T, un, delta_hat),
        "xi1": xi.xi1,
        "xi3": xi.xi3,
        "xi_cnv": {"xi4": cnv4, "xi6": cnv6},
        "xi_gce": {"xi4": gce4, "xi6": gce6},
        "predicted_gmvp_variance": {"CNV": cnv4 / scale, "GCE": gce4 / scale},
    }
