"""Synthetic scenarios, seeded Monte Carlo experiments and calibration.

Each (sample size, trial) pair draws from its own RNG stream derived from
``(seed, N, trial)`` so records do not depend on execution order or on the
number of worker threads.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from rmtportfolio.estimators import (
    WhitenedData,
    a_factor,
    estimate_delta,
    inverse_sqrt,
    plugin_xi4,
    quadratic_forms,
)
from rmtportfolio.exceptions import InputError
from rmtportfolio.moments import WeightProfile, effective_T_basis
from rmtportfolio.portfolio import Moments, gmvp
from rmtportfolio.rmt import RmtInputs, ade_gmvp_variance, solve_fixed_point

__all__ = [
    "METHODS",
    "STATS",
    "CalibrationReport",
    "CalibrationResult",
    "ExperimentReport",
    "ExperimentSpec",
    "Scenario",
    "ScenarioSpec",
    "TrialRecord",
    "calibrate",
    "calibrate_sample",
    "generate_scenario",
    "relative_error",
    "run_experiment",
    "simulate_returns",
    "trial_rng",
]

METHODS = ("ADE", "CNV", "GCE")
STATS = ("median", "mean", "q25", "q75")
MAX_SCENARIO_RETRIES = 10


@dataclass(frozen=True)
class ScenarioSpec:
    M: int = 50
    vol_band: tuple[float, float] = (0.2, 0.3)
    periods_per_year: int = 252
    correlation_strength: float = 0.5
    mu_scale: float = 0.0
    sigma0_kind: str = "identity"
    seed: int = 0

    def __post_init__(self) -> None:
        lo, hi = self.vol_band
        if self.M < 1:
            raise InputError("scenario M must be >= 1")
        if not 0.0 < lo <= hi:
            raise InputError(f"vol_band must satisfy 0 < lo <= hi, got {self.vol_band}")
        if self.periods_per_year < 1:
            raise InputError("periods_per_year must be >= 1")
        if not 0.0 <= self.correlation_strength < 1.0:
            raise InputError("correlation_strength must lie in [0, 1)")
        if self.mu_scale < 0.0:
            raise InputError("mu_scale must be >= 0")
        if self.sigma0_kind not in ("identity", "diagonal"):
            raise InputError(f"sigma0_kind must be 'identity' or 'diagonal', got {self.sigma0_kind!r}")
        object.__setattr__(self, "vol_band", (float(lo), float(hi)))


@dataclass(frozen=True)
class Scenario:
    truth: Moments
    sigma0: NDArray[np.float64]
    mu0: NDArray[np.float64]

    @property
    def M(self) -> int:
        return self.truth.M

    @property
    def R(self) -> NDArray[np.float64]:
        isq = inverse_sqrt(self.sigma0)
        R = isq @ self.truth.sigma @ isq
        return 0.5 * (R + R.T)

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.truth.mu, self.truth.sigma, self.sigma0, self.mu0):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()


def generate_scenario(spec: ScenarioSpec) -> Scenario:
    """Random covariance with annualized vols in ``vol_band``.

    Correlation ``(1 - s) I + s C_hat`` where ``C_hat`` is the correlation
    of an M x 2M Gaussian Gram matrix.
    """
    M = spec.M
    s = spec.correlation_strength
    for attempt in range(MAX_SCENARIO_RETRIES):
        rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(attempt,)))
        vols = rng.uniform(*spec.vol_band, size=M) / np.sqrt(spec.periods_per_year)
        if s > 0.0:
            G = rng.standard_normal((M, 2 * M))
            K = G @ G.T
            d = np.sqrt(np.diag(K))
            corr = (1.0 - s) * np.eye(M) + s * (K / np.outer(d, d))
        else:
            corr = np.eye(M)
        corr = 0.5 * (corr + corr.T)
        np.fill_diagonal(corr, 1.0)
        if np.linalg.eigvalsh(corr)[0] <= 0.0:
            continue
        sigma = corr * np.outer(vols, vols)
        direction = rng.standard_normal(M)
        mu = spec.mu_scale * direction / np.linalg.norm(direction)
        break
    else:
        raise InputError("could not generate a positive-definite correlation matrix")
    sigma0 = np.eye(M) if spec.sigma0_kind == "identity" else np.diag(np.diag(sigma))
    return Scenario(Moments(mu, sigma), sigma0, np.zeros(M))


def _sqrtm_psd(A: NDArray[np.float64]) -> NDArray[np.float64]:
    lam, V = np.linalg.eigh(A)
    return (V * np.sqrt(np.maximum(lam, 0.0))) @ V.T


def simulate_returns(
    truth: Moments, N: int, seed: int | np.random.Generator, *, sigma_sqrt: ArrayLike | None = None
) -> NDArray[np.float64]:
    """Gaussian draws ``Y = mu 1' + Sigma^{1/2} X`` (M x N)."""
    if N < 1:
        raise InputError("N must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    root = _sqrtm_psd(truth.sigma) if sigma_sqrt is None else np.asarray(sigma_sqrt)
    X = rng.standard_normal((truth.M, N))
    return truth.mu[:, None] + root @ X


def trial_rng(seed: int, N: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(N, trial)))


def relative_error(realized: float, predicted: float) -> float:
    """Percentage error ``100 |s - s_hat| / s``."""
    return 100.0 * abs(realized - predicted) / realized


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    N_grid: tuple[int, ...] = tuple(range(20, 201, 20))
    trials: int = 1000
    rho: float = 0.05
    t: float = 0.75
    center: bool = True
    calibrate: str = "none"
    rho_grid: tuple[float, ...] = ()
    t_grid: tuple[float, ...] = ()
    seed: int = 0
    threads: int = 1

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise InputError("trials must be >= 1")
        if not self.N_grid or any(n < 2 for n in self.N_grid):
            raise InputError("N_grid must be non-empty with every N >= 2")
        if not 0.0 <= self.rho < 1.0:
            raise InputError(f"rho must lie in [0, 1), got {self.rho}")
        if not 0.0 <= self.t <= 2.0:
            raise InputError(f"t must lie in [0, 2], got {self.t}")
        if self.calibrate not in ("none", "rho", "t", "both"):
            raise InputError(f"calibrate must be none|rho|t|both, got {self.calibrate!r}")
        if self.calibrate in ("rho", "both") and not self.rho_grid:
            raise InputError("rho_grid must be non-empty when calibrating rho")
        if self.calibrate in ("t", "both") and not self.t_grid:
            raise InputError("t_grid must be non-empty when calibrating t")
        if any(not 0.0 <= r < 1.0 for r in self.rho_grid):
            raise InputError("rho_grid values must lie in [0, 1)")
        if any(not 0.0 <= t <= 2.0 for t in self.t_grid):
            raise InputError("t_grid values must lie in [0, 2]")
        if self.threads < 0:
            raise InputError("threads must be >= 0")
        object.__setattr__(self, "N_grid", tuple(int(n) for n in self.N_grid))
        object.__setattr__(self, "rho_grid", tuple(float(r) for r in self.rho_grid))
        object.__setattr__(self, "t_grid", tuple(float(t) for t in self.t_grid))

    def grid(self) -> list[tuple[float, float]]:
        rhos = self.rho_grid if self.calibrate in ("rho", "both") else (self.rho,)
        ts = self.t_grid if self.calibrate in ("t", "both") else (self.t,)
        return [(r, t) for r in rhos for t in ts]


@dataclass(frozen=True)
class TrialRecord:
    N: int
    trial: int
    rho: float
    t: float
    sigma_p: float
    predicted: dict[str, float]
    rel_error: dict[str, float]


@dataclass(frozen=True)
class FlaggedTrial:
    N: int
    trial: int
    reason: str


@dataclass
class ExperimentReport:
    spec: ExperimentSpec
    records: list[TrialRecord]
    flagged: list[FlaggedTrial]
    scenario_digest: str = ""

    def used(self, N: int) -> list[TrialRecord]:
        return [r for r in self.records if r.N == N]

    def n_flagged(self, N: int) -> int:
        return sum(1 for f in self.flagged if f.N == N)

    def errors(self, N: int, method: str) -> NDArray[np.float64]:
        return np.array([r.rel_error[method] for r in self.used(N)], dtype=np.float64)

    def aggregate(self) -> list[dict]:
        """One row per (N, method, stat), sorted by N then method."""
        rows = []
        for N in sorted(set(self.spec.N_grid)):
            used = len(self.used(N))
            flagged = self.n_flagged(N)
            for method in METHODS:
                e = self.errors(N, method)
                if e.size:
                    values = {
                        "median": float(np.median(e)),
                        "mean": float(np.mean(e)),
                        "q25": float(np.quantile(e, 0.25)),
                        "q75": float(np.quantile(e, 0.75)),
                    }
                else:
                    values = dict.fromkeys(STATS, float("nan"))
                for stat in STATS:
                    rows.append({
                        "N": N, "method": method, "stat": stat,
                        "relative_error_pct": values[stat],
                        "trials_used": used, "trials_flagged": flagged,
                    })
        return rows

    def median(self, N: int, method: str) -> float:
        return float(np.median(self.errors(N, method)))


class _Workspace:
    """Per-scenario caches shared read-only by all trials."""

    def __init__(self, scenario: Scenario, center: bool) -> None:
        self.scenario = scenario
        self.center = center
        self.sigma_sqrt = _sqrtm_psd(scenario.truth.sigma)
        self.sigma0_isqrt = inverse_sqrt(scenario.sigma0)
        self.sigma0_chol = np.linalg.cholesky(scenario.sigma0)
        self.R = scenario.R
        M = scenario.M
        self.u = self.sigma0_isqrt @ np.ones(M) / np.sqrt(M)
        self._basis: dict[tuple[int, float], tuple[NDArray[np.float64], NDArray[np.float64]]] = {}
        self._ade: dict[tuple[int, float, float], float] = {}

    def basis(self, N: int, t: float) -> tuple[NDArray[np.float64], NDArray[np.float64] | None]:
        key = (N, t)
        if key not in self._basis:
            w = WeightProfile.bimodal(N, t)
            if self.center:
                self._basis[key] = effective_T_basis(w)
            else:
                self._basis[key] = (w.w_sigma.copy(), None)
        return self._basis[key]

    def ade_variance(self, N: int, rho: float, t: float) -> float:
        key = (N, rho, t)
        if key not in self._ade:
            T, _ = self.basis(N, t)
            inp = RmtInputs(self.R, T, rho / (1.0 - rho), upsilon_m=self.u)
            self._ade[key] = ade_gmvp_variance(inp, solve_fixed_point(inp), rho=rho)
        return self._ade[key]

    def whiten(self, Y: NDArray[np.float64], N: int, t: float) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        T, U = self.basis(N, t)
        Yw = Y if U is None else Y @ U
        return self.sigma0_isqrt @ Yw * np.sqrt(T), T


def _evaluate(ws: _Workspace, Y: NDArray[np.float64], N: int, rho: float, t: float) -> dict[str, float]:
    """Realized and predicted GMVP variances for one sample and one parameter pair."""
    if not 0.0 < rho < 1.0:
        raise InputError("rho must lie in (0, 1) for the whitened estimators")
    alpha = rho / (1.0 - rho)
    M = ws.scenario.M
    Yt, T = ws.whiten(Y, N, t)
    d = WhitenedData(Yt, alpha)
    # Sigma_SHR = (1 - rho) Sigma0^{1/2} (S + alpha I) Sigma0^{1/2}
    L = ws.sigma0_chol
    sigma_shr = (1.0 - rho) * (L @ (d.S + alpha * np.eye(M)) @ L.T)
    w = gmvp(Moments(np.zeros(M), sigma_shr))
    realized = float(w @ ws.scenario.truth.sigma @ w)
    xi1 = quadratic_forms(d.S + alpha * np.eye(M), np.eye(M), ws.u, ws.u).xi1
    cnv4 = plugin_xi4(d, ws.u)
    delta_hat = estimate_delta(d, T)
    gce4 = a_factor(T, delta_hat) * cnv4
    out = {
        "realized": realized,
        "ADE": ws.ade_variance(N, rho, t),
        "CNV": cnv4 / (M * xi1**2),
        "GCE": gce4 / (M * xi1**2),
        "delta_hat": delta_hat,
    }
    bad = [k for k, v in out.items() if not (np.isfinite(v) and v >= 0.0)]
    if bad or not realized > 0.0:
        raise FloatingPointError(f"non-finite or negative variance for {bad or ['realized']}")
    return out


@dataclass(frozen=True)
class CalibrationResult:
    N: int
    trial: int
    grid: tuple[tuple[float, float], ...]
    predicted: tuple[float, ...]
    realized: tuple[float, ...]
    chosen: tuple[float, float]
    oracle: tuple[float, float]

    @property
    def chosen_realized(self) -> float:
        return self.realized[self.grid.index(self.chosen)]

    @property
    def oracle_realized(self) -> float:
        return self.realized[self.grid.index(self.oracle)]


def _calibrate_on(ws: _Workspace, Y, N: int, trial: int, grid: Sequence[tuple[float, float]]) -> CalibrationResult:
    predicted, realized, ok = [], [], []
    for rho, t in grid:
        try:
            out = _evaluate(ws, Y, N, rho, t)
        except (ArithmeticError, ValueError):
            predicted.append(float("nan"))
            realized.append(float("nan"))
            continue
        predicted.append(out["GCE"])
        realized.append(out["realized"])
        ok.append(len(predicted) - 1)
    if not ok:
        raise InputError("every calibration grid point failed")
    pred = np.array(predicted)
    real = np.array(realized)
    chosen = min(ok, key=lambda i: pred[i])
    oracle = min(ok, key=lambda i: real[i])
    return CalibrationResult(N, trial, tuple(grid), tuple(predicted), tuple(realized), grid[chosen], grid[oracle])


def calibrate_sample(
    scenario: Scenario, Y: ArrayLike, grid: Sequence[tuple[float, float]], *, center: bool = True
) -> CalibrationResult:
    """Select ``(rho, t)`` minimizing the GCE-predicted GMVP variance on one sample."""
    Y = np.asarray(Y, dtype=np.float64)
    return _calibrate_on(_Workspace(scenario, center), Y, Y.shape[1], 0, list(grid))


def _map(fn: Callable, items: Iterable, threads: int) -> list:
    items = list(items)
    n = (os.cpu_count() or 1) if threads == 0 else threads
    if n <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _one_trial(ws: _Workspace, spec: ExperimentSpec, N: int, k: int) -> TrialRecord | FlaggedTrial:
    rng = trial_rng(spec.seed, N, k)
    Y = simulate_returns(ws.scenario.truth, N, rng, sigma_sqrt=ws.sigma_sqrt)
    try:
        if spec.calibrate == "none":
            rho, t = spec.rho, spec.t
        else:
            rho, t = _calibrate_on(ws, Y, N, k, spec.grid()).chosen
        out = _evaluate(ws, Y, N, rho, t)
    except (ArithmeticError, ValueError) as exc:
        return FlaggedTrial(N, k, f"{type(exc).__name__}: {exc}")
    sigma_p = float(np.sqrt(out["realized"]))
    predicted = {m: float(np.sqrt(out[m])) for m in METHODS}
    rel = {m: relative_error(sigma_p, predicted[m]) for m in METHODS}
    return TrialRecord(N, k, rho, t, sigma_p, predicted, rel)


def run_experiment(spec: ExperimentSpec, scenario: Scenario | None = None) -> ExperimentReport:
    """Monte Carlo comparison of ADE, CNV and GCE predictions of GMVP risk."""
    scenario = generate_scenario(spec.scenario) if scenario is None else scenario
    ws = _Workspace(scenario, spec.center)
    for N in spec.N_grid:
        for rho, t in spec.grid():
            ws.basis(N, t)
    jobs = [(N, k) for N in spec.N_grid for k in range(spec.trials)]
    # ADE values are deterministic per (N, rho, t); fill the cache before fanning out.
    if spec.calibrate == "none":
        for N in spec.N_grid:
            try:
                ws.ade_variance(N, spec.rho, spec.t)
            except (ArithmeticError, ValueError):
                pass
    results = _map(lambda job: _one_trial(ws, spec, *job), jobs, spec.threads)
    records = [r for r in results if isinstance(r, TrialRecord)]
    flagged = [r for r in results if isinstance(r, FlaggedTrial)]
    return ExperimentReport(spec, records, flagged, scenario.digest())


@dataclass
class CalibrationReport:
    spec: ExperimentSpec
    results: list[CalibrationResult]
    flagged: list[FlaggedTrial]

    def surfaces(self, N: int) -> list[dict]:
        """Mean predicted and realized GMVP variance per grid point."""
        rs = [r for r in self.results if r.N == N]
        grid = self.spec.grid()
        rows = []
        for j, (rho, t) in enumerate(grid):
            pred = np.array([r.predicted[j] for r in rs])
            real = np.array([r.realized[j] for r in rs])
            rows.append({
                "N": N, "rho": rho, "t": t,
                "predicted_variance": float(np.nanmean(pred)) if rs else float("nan"),
                "realized_variance": float(np.nanmean(real)) if rs else float("nan"),
            })
        return rows

    def summary(self, N: int) -> dict:
        rs = [r for r in self.results if r.N == N]
        if not rs:
            return {"N": N, "trials_used": 0}
        chosen = np.array([r.chosen for r in rs])
        regret = np.array([r.chosen_realized / r.oracle_realized - 1.0 for r in rs])
        return {
            "N": N,
            "trials_used": len(rs),
            "trials_flagged": sum(1 for f in self.flagged if f.N == N),
            "rho_star_median": float(np.median(chosen[:, 0])),
            "t_star_median": float(np.median(chosen[:, 1])),
            "regret_median": float(np.median(regret)),
        }


def calibrate(spec: ExperimentSpec, scenario: Scenario | None = None) -> CalibrationReport:
    """Grid-search calibration of ``(rho, t)`` on every simulated sample."""
    if spec.calibrate == "none":
        spec = replace(spec, calibrate="both" if spec.rho_grid and spec.t_grid else
                       "rho" if spec.rho_grid else "t" if spec.t_grid else "none")
    if spec.calibrate == "none":
        raise InputError("calibration needs a non-empty rho_grid or t_grid")
    scenario = generate_scenario(spec.scenario) if scenario is None else scenario
    ws = _Workspace(scenario, spec.center)
    grid = spec.grid()
    for N in spec.N_grid:
        for _, t in grid:
            ws.basis(N, t)

    def job(item: tuple[int, int]) -> CalibrationResult | FlaggedTrial:
        N, k = item
        Y = simulate_returns(scenario.truth, N, trial_rng(spec.seed, N, k), sigma_sqrt=ws.sigma_sqrt)
        try:
            return _calibrate_on(ws, Y, N, k, grid)
        except (ArithmeticError, ValueError) as exc:
            return FlaggedTrial(N, k, f"{type(exc).__name__}: {exc}")

    out = _map(job, [(N, k) for N in spec.N_grid for k in range(spec.trials)], spec.threads)
    return CalibrationReport(
        spec,
        [r for r in out if isinstance(r, CalibrationResult)],
        [r for r in out if isinstance(r, FlaggedTrial)],
    )
