"""Deterministic equivalents for doubly-correlated sample covariances.

The random matrix is ``S = (1/N) R^{1/2} X T X^T R^{1/2}`` regularized as
``S + alpha I``. Everything here is nonrandom: it depends on the spatial
covariance ``R`` (M x M), the temporal profile ``T`` (length-N diagonal)
and ``alpha`` only.

All trace functionals of ``R`` go through a single eigendecomposition held
by :class:`RmtInputs`, so one evaluation costs O(M + N).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from rmtportfolio.exceptions import ConvergenceError, InputError, UnstableSolutionError

__all__ = [
    "FixedPointSolution",
    "GeneralZSolution",
    "RmtInputs",
    "XiAde",
    "ade_gmvp_variance",
    "ade_xi",
    "solve_fixed_point",
    "solve_general_z",
    "verify_appendix_identities",
]

STEP_TOL = 1e-13
RESIDUAL_TOL = 1e-12
MAX_ITER = 10_000


@dataclass(frozen=True)
class RmtInputs:
    """Scenario parameters entering the fixed-point system.

    ``upsilon_m`` and ``upsilon_n`` may be omitted when only the fixed point
    is needed; they default to the normalized ones vectors.
    """

    R: NDArray[np.float64]
    T: NDArray[np.float64]
    alpha: float
    upsilon_m: NDArray[np.float64] | None = None
    upsilon_n: NDArray[np.float64] | None = None
    r_eig: NDArray[np.float64] = field(init=False, repr=False)
    r_vec: NDArray[np.float64] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        R = np.asarray(self.R, dtype=np.float64)
        T = np.asarray(self.T, dtype=np.float64)
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise InputError(f"R must be square, got shape {R.shape}")
        if T.ndim != 1 or T.size < 1:
            raise InputError("T must be a non-empty 1-D array of diagonal entries")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(T))):
            raise InputError("R and T must be finite")
        if np.any(T < 0.0):
            raise InputError("T entries must be nonnegative")
        if not self.alpha > 0.0 or not np.isfinite(self.alpha):
            raise InputError(f"alpha must be positive and finite, got {self.alpha}")
        M, N = R.shape[0], T.size
        R = 0.5 * (R + R.T)
        r_eig, r_vec = np.linalg.eigh(R)
        scale = max(abs(r_eig[-1]), 1.0)
        if r_eig[0] < -1e-10 * scale:
            raise InputError("R must be nonnegative definite")
        r_eig = np.maximum(r_eig, 0.0)

        um = np.full(M, 1.0 / np.sqrt(M)) if self.upsilon_m is None else np.asarray(self.upsilon_m, dtype=np.float64)
        un = np.full(N, 1.0 / np.sqrt(N)) if self.upsilon_n is None else np.asarray(self.upsilon_n, dtype=np.float64)
        if um.shape != (M,) or un.shape != (N,):
            raise InputError("upsilon_m must have length M and upsilon_n length N")
        if abs(np.linalg.norm(un) - 1.0) > 1e-10:
            raise InputError("upsilon_n must have unit norm")
        for name, value in (("R", R), ("T", T), ("upsilon_m", um), ("upsilon_n", un), ("r_eig", r_eig), ("r_vec", r_vec)):
            object.__setattr__(self, name, value)

    @property
    def M(self) -> int:
        return self.R.shape[0]

    @property
    def N(self) -> int:
        return self.T.size

    @property
    def c(self) -> float:
        return self.M / self.N

    def r_moment(self, delta_tilde: float, power: int, r_power: int = 1) -> float:
        """``(1/N) tr[R^r_power (delta_tilde R + alpha I)^-power]``."""
        r = self.r_eig
        return float(np.sum(r**r_power / (delta_tilde * r + self.alpha) ** power) / self.N)

    def t_moment(self, delta: float, power: int, t_power: int = 1) -> float:
        """``(1/N) tr[T^t_power (I + delta T)^-power]``."""
        t = self.T
        return float(np.sum(t**t_power / (1.0 + delta * t) ** power) / self.N)

    def um_spectral(self) -> NDArray[np.float64]:
        """Squared coordinates of upsilon_m in the eigenbasis of R."""
        return (self.r_vec.T @ self.upsilon_m) ** 2


class FixedPointSolution(NamedTuple):
    delta: float
    delta_tilde: float
    gamma: float
    gamma_tilde: float
    zeta: float
    zeta_tilde: float
    residual: float
    iterations: int


class GeneralZSolution(NamedTuple):
    z: float
    e: float
    x: float
    e_prime: float
    x_prime: float


class XiAde(NamedTuple):
    xi1: float
    xi2: float
    xi3: float
    xi4: float
    xi5: float
    xi6: float


def _residuals(inp: RmtInputs, delta: float, delta_tilde: float) -> tuple[float, float]:
    res_dt = delta_tilde - inp.t_moment(delta, 1)
    res_d = delta - inp.r_moment(delta_tilde, 1)
    return res_dt, res_d


def _solve_pair(inp: RmtInputs, tol: float, max_iter: int) -> tuple[float, float, int]:
    """Alternating substitution with a bracketed fallback and Newton polish."""
    delta = 0.0
    delta_tilde = inp.t_moment(delta, 1)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new_delta = inp.r_moment(delta_tilde, 1)
        new_delta_tilde = inp.t_moment(new_delta, 1)
        step = max(abs(new_delta - delta), abs(new_delta_tilde - delta_tilde))
        delta, delta_tilde = new_delta, new_delta_tilde
        if step <= tol * max(1.0, delta):
            converged = True
            break

    def h(d: float) -> float:
        return d - inp.r_moment(inp.t_moment(d, 1), 1)

    if not converged:
        # h is negative at 0 and nonnegative at tr(R)/(N alpha)
        lo, hi = 0.0, inp.r_moment(0.0, 1)
        if h(hi) < 0.0:
            raise ConvergenceError("fixed point bracket failed")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if h(mid) < 0.0:
                lo = mid
            else:
                hi = mid
            if hi - lo <= tol * max(1.0, hi):
                break
        delta = 0.5 * (lo + hi)
        delta_tilde = inp.t_moment(delta, 1)

    # Newton on h: h'(d) = 1 - gamma(delta_tilde(d)) * gamma_tilde(d)
    for _ in range(3):
        hd = h(delta)
        slope = 1.0 - inp.r_moment(delta_tilde, 2, 2) * inp.t_moment(delta, 2, 2)
        if slope <= 0.0 or hd == 0.0:
            break
        candidate = delta - hd / slope
        if candidate < 0.0 or abs(h(candidate)) >= abs(hd):
            break
        delta = candidate
        delta_tilde = inp.t_moment(delta, 1)
    return delta, delta_tilde, it


def solve_fixed_point(inp: RmtInputs, *, tol: float = STEP_TOL, max_iter: int = MAX_ITER) -> FixedPointSolution:
    """Solve the coupled system for ``(delta, delta_tilde)`` at ``z = -alpha``.

    ``delta_tilde = (1/N) tr[T (I + delta T)^-1]`` and
    ``delta = (1/N) tr[R (delta_tilde R + alpha I)^-1]``.
    """
    delta, delta_tilde, iterations = _solve_pair(inp, tol, max_iter)
    residual = max(abs(r) for r in _residuals(inp, delta, delta_tilde))
    if not residual <= RESIDUAL_TOL * max(1.0, delta, delta_tilde):
        raise ConvergenceError(f"fixed point residual {residual:.3g} exceeds tolerance")

    gamma = inp.r_moment(delta_tilde, 2, 2)
    gamma_tilde = inp.t_moment(delta, 2, 2)
    gg = gamma * gamma_tilde
    if not gg < 1.0:
        raise UnstableSolutionError(
            f"gamma * gamma_tilde = {gg:.6g} >= 1 (alpha={inp.alpha:.3g}); scenario is outside the valid regime"
        )
    rr2 = inp.r_moment(delta_tilde, 2)
    zeta = rr2 / (1.0 - gg)
    zeta_tilde = -gamma_tilde * rr2 / (1.0 - gg)
    return FixedPointSolution(delta, delta_tilde, gamma, gamma_tilde, zeta, zeta_tilde, residual, iterations)


def solve_general_z(R: ArrayLike, T: ArrayLike, z: float) -> GeneralZSolution:
    """Solve the resolvent system at a real point ``z < 0``.

    ``e = (1/M) tr[R (x R - z I)^-1]`` with ``x = (1/N) tr[T (I + c e T)^-1]``
    and ``c = M/N``. At ``z = -alpha`` this gives ``x = delta_tilde`` and
    ``c e = delta``. The derivatives are taken with respect to ``z``.
    """
    if not z < 0.0:
        raise InputError(f"z must be negative, got {z}")
    inp = RmtInputs(R, T, -z)
    delta, delta_tilde, _ = _solve_pair(inp, STEP_TOL, MAX_ITER)
    gamma = inp.r_moment(delta_tilde, 2, 2)
    gamma_tilde = inp.t_moment(delta, 2, 2)
    if not gamma * gamma_tilde < 1.0:
        raise UnstableSolutionError("gamma * gamma_tilde >= 1 at this z")
    d_prime = inp.r_moment(delta_tilde, 2) / (1.0 - gamma * gamma_tilde)
    c = inp.c
    return GeneralZSolution(
        z=float(z),
        e=delta / c,
        x=delta_tilde,
        e_prime=d_prime / c,
        x_prime=-gamma_tilde * d_prime,
    )


def ade_xi(inp: RmtInputs, fp: FixedPointSolution) -> XiAde:
    """Deterministic equivalents of the six quadratic forms."""
    r = inp.r_eig
    p2 = inp.um_spectral()
    t = inp.T
    un2 = inp.upsilon_n**2
    shift = fp.delta_tilde * r + inp.alpha
    gg = fp.gamma * fp.gamma_tilde
    if not gg < 1.0:
        raise UnstableSolutionError("gamma * gamma_tilde >= 1")
    xi1 = float(np.sum(p2 / shift))
    xi3 = float(fp.delta * np.sum(un2 * t / (fp.delta * t + 1.0)))
    xi4 = float(np.sum(p2 * r / shift**2) / (1.0 - gg))
    xi6 = float(fp.gamma / (1.0 - gg) * np.sum(un2 * t / (fp.delta * t + 1.0) ** 2))
    return XiAde(xi1, 0.0, xi3, xi4, 0.0, xi6)


def verify_appendix_identities(inp: RmtInputs, fp: FixedPointSolution) -> dict[str, float]:
    """Absolute residuals of the auxiliary relations among the scalars.

    Traces are formed from dense matrices, independently of the spectral
    route used by the solver.
    """
    M, N = inp.M, inp.N
    R = inp.R
    T = np.diag(inp.T)
    I_M, I_N = np.eye(M), np.eye(N)
    res_R = np.linalg.inv(fp.delta_tilde * R + inp.alpha * I_M)
    res_T = np.linalg.inv(I_N + fp.delta * T)
    E = R @ res_R
    E_t = T @ res_T
    gamma = np.trace(E @ E) / N
    gamma_tilde = np.trace(E_t @ E_t) / N
    tr_R2 = np.trace(R @ res_R @ res_R) / N
    tr_T2 = np.trace(T @ res_T @ res_T) / N
    one_minus = 1.0 - gamma * gamma_tilde
    zeta = tr_R2 / one_minus
    zeta_tilde = -gamma_tilde * tr_R2 / one_minus
    d, dt, a = fp.delta, fp.delta_tilde, inp.alpha
    return {
        "system_delta_tilde": abs(dt - np.trace(E_t) / N),
        "system_delta": abs(d - np.trace(E) / N),
        "ie1": abs((d - dt * gamma) - a * tr_R2),
        "ie2": abs((dt - d * gamma_tilde) - tr_T2),
        "der_delta_tilde": abs((dt + a * zeta_tilde) - tr_T2 / one_minus),
        "der_delta": abs((d - a * zeta) - gamma * tr_T2 / one_minus),
        "zeta_relation": abs(fp.zeta_tilde + fp.gamma_tilde * fp.zeta),
        "gamma": abs(gamma - fp.gamma),
        "gamma_tilde": abs(gamma_tilde - fp.gamma_tilde),
        "zeta": abs(zeta - fp.zeta),
    }


def ade_gmvp_variance(inp: RmtInputs, fp: FixedPointSolution, M: int | None = None, rho: float | None = None) -> float:
    """Predicted out-of-sample GMVP variance ``xi4 / (M xi1^2)``.

    ``inp.upsilon_m`` must be ``Sigma0^{-1/2} 1 / sqrt(M)``. The shrinkage
    factors ``(1 - rho)`` cancel; ``rho`` is accepted only for validation.
    """
    M = inp.M if M is None else M
    if M != inp.M:
        raise InputError(f"M={M} does not match R of size {inp.M}")
    if rho is not None and not 0.0 <= rho < 1.0:
        raise InputError(f"rho must lie in [0, 1), got {rho}")
    xi = ade_xi(inp, fp)
    if not xi.xi1 > 0.0:
        raise InputError("xi1 equivalent is not positive; check upsilon_m")
    return xi.xi4 / (M * xi.xi1**2)
