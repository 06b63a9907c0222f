"""Command-line front end: ``rmtportfolio {experiment,ade,gce,calibrate}``.

Exit codes: 0 success, 1 input/config error, 2 computation error.
"""

from __future__ import annotations

import argparse
import hashlib
import platform
import sys
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy

from rmtportfolio import __version__
from rmtportfolio.config import ConfigDocument, ConfigError, load_config, parse_config
from rmtportfolio.estimators import estimation_pipeline, inverse_sqrt
from rmtportfolio.exceptions import InputError
from rmtportfolio.moments import effective_T
from rmtportfolio.rmt import RmtInputs, ade_gmvp_variance, ade_xi, solve_fixed_point, verify_appendix_identities
from rmtportfolio.serialize import dumps_json, read_returns_csv, write_curves, write_rows
from rmtportfolio.simulation import ExperimentReport, calibrate, generate_scenario, run_experiment

__all__ = ["bundled_config", "cmd_ade", "cmd_calibrate", "cmd_experiment", "cmd_gce", "main"]

EXIT_OK, EXIT_INPUT, EXIT_COMPUTE = 0, 1, 2
# dense identity residuals cost O(M^3 + N^3); skip them for large problems
IDENTITY_CHECK_MAX_DIM = 512


def versions() -> dict[str, str]:
    return {
        "rmtportfolio": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def bundled_config(name: str) -> Path:
    """Path of a config shipped with the package, e.g. ``fig1``."""
    stem = name[:-5] if name.endswith(".json") else name
    path = Path(str(resources.files("rmtportfolio") / "configs" / f"{stem}.json"))
    if not path.is_file():
        raise ConfigError(f"no bundled config named {name!r}")
    return path


def _resolve_config(path: str | None) -> ConfigDocument:
    if path is None or Path(path).exists():
        return load_config(path)
    return load_config(bundled_config(path))


def _ensure_dir(doc: ConfigDocument) -> Path:
    out = Path(doc.section("output")["dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, obj) -> None:
    path.write_text(dumps_json(obj), encoding="utf-8")


def _calibration_summary(report: ExperimentReport) -> list[dict] | None:
    if report.spec.calibrate == "none":
        return None
    out = []
    for N in sorted(set(report.spec.N_grid)):
        used = report.used(N)
        out.append({
            "N": N,
            "trials_used": len(used),
            "rho_star_median": float(np.median([r.rho for r in used])) if used else float("nan"),
            "t_star_median": float(np.median([r.t for r in used])) if used else float("nan"),
        })
    return out


def cmd_experiment(doc: ConfigDocument) -> dict:
    """Monte Carlo experiment; writes ``curves.csv`` and ``report.json``."""
    spec = doc.experiment_spec()
    report = run_experiment(spec)
    rows = report.aggregate()
    out = _ensure_dir(doc)
    write_curves(out / "curves.csv", rows)
    payload = {
        "config": doc.data,
        "scenario_digest": report.scenario_digest,
        "curves": sorted(rows, key=lambda r: (r["N"], r["method"])),
        "calibration": _calibration_summary(report),
        "flagged_trials": [{"N": f.N, "trial": f.trial, "reason": f.reason} for f in report.flagged],
        "versions": versions(),
        "seed": spec.seed,
    }
    _write(out / "report.json", payload)
    return payload


def cmd_ade(doc: ConfigDocument) -> dict:
    """Deterministic equivalents for every N of the experiment grid."""
    scenario = generate_scenario(doc.scenario_spec())
    est = doc.section("estimator")
    rho = float(est["rho"])
    if not 0.0 < rho < 1.0:
        raise InputError(f"estimator.rho must lie in (0, 1) for the ADE, got {rho}")
    alpha = rho / (1.0 - rho)
    R = scenario.R
    u = inverse_sqrt(scenario.sigma0) @ np.ones(scenario.M) / np.sqrt(scenario.M)
    results = []
    for N in (int(n) for n in doc.section("experiment")["N_grid"]):
        w = doc.weight_profile(N)
        T = effective_T(w) if est["center"] else w.w_sigma.copy()
        inp = RmtInputs(R, T, alpha, upsilon_m=u)
        fp = solve_fixed_point(inp)
        xi = ade_xi(inp, fp)
        entry = {
            "M": scenario.M,
            "N": N,
            "c": scenario.M / N,
            "alpha": alpha,
            "fixed_point": fp._asdict(),
            "xi": xi._asdict(),
            "predicted_gmvp_variance": ade_gmvp_variance(inp, fp, rho=rho),
        }
        if max(scenario.M, N) <= IDENTITY_CHECK_MAX_DIM:
            entry["residuals"] = {k: float(v) for k, v in verify_appendix_identities(inp, fp).items()}
        else:
            entry["residuals"] = {"fixed_point": fp.residual}
        results.append(entry)
    payload = {
        "config": doc.data,
        "scenario_digest": scenario.digest(),
        "results": results,
        "versions": versions(),
    }
    _write(_ensure_dir(doc) / "ade.json", payload)
    return payload


def cmd_gce(doc: ConfigDocument, returns_csv: str | Path) -> dict:
    """Consistent GMVP risk estimates from an observed returns table."""
    assets, Y = read_returns_csv(returns_csv)
    M, N = Y.shape
    est = doc.section("estimator")
    kind = doc.section("scenario")["sigma0_kind"]
    if kind == "identity":
        sigma0 = np.eye(M)
    else:
        var = Y.var(axis=1)
        if np.any(var <= 0.0):
            raise InputError("sigma0_kind 'diagonal' needs every asset to have positive sample variance")
        sigma0 = np.diag(var)
    result = estimation_pipeline(
        Y, float(est["rho"]), doc.weight_profile(N), sigma0,
        center=est["center"], delta=float(est["delta"]),
    )
    payload = {
        "config": doc.data,
        "input": {
            "path": str(returns_csv),
            "sha256": hashlib.sha256(Path(returns_csv).read_bytes()).hexdigest(),
            "assets": assets,
        },
        "result": result,
        "versions": versions(),
    }
    _write(_ensure_dir(doc) / "gce.json", payload)
    return payload


def cmd_calibrate(doc: ConfigDocument) -> dict:
    """Grid-search calibration; writes ``surfaces.csv`` and ``calibration.json``."""
    spec = doc.experiment_spec()
    scenario = generate_scenario(spec.scenario)
    report = calibrate(spec, scenario)
    out = _ensure_dir(doc)
    surfaces = [row for N in spec.N_grid for row in report.surfaces(N)]
    write_rows(out / "surfaces.csv", ("N", "rho", "t", "predicted_variance", "realized_variance"), surfaces)
    payload = {
        "config": doc.data,
        "scenario_digest": scenario.digest(),
        "curves": surfaces,
        "calibration": [report.summary(N) for N in spec.N_grid],
        "flagged_trials": [{"N": f.N, "trial": f.trial, "reason": f.reason} for f in report.flagged],
        "versions": versions(),
        "seed": spec.seed,
    }
    _write(out / "calibration.json", payload)
    return payload


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rmtportfolio", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("experiment", "ade", "gce", "calibrate"):
        p = sub.add_parser(name)
        if name == "gce":
            p.add_argument("returns_csv", help="time x assets CSV with a header row")
        p.add_argument("--config", help="JSON config path or bundled name (fig1, ...)")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, help="override experiment.seed")
        p.add_argument("--trials", type=int, help="override experiment.trials")
        p.add_argument("--threads", type=int, help="worker threads, 0 = all cores")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = _resolve_config(args.config)
        doc = doc.with_overrides(dir=args.out, seed=args.seed, trials=args.trials, threads=args.threads)
        # overrides go through the same validation as the file
        doc = parse_config(doc.data)
        if args.command == "experiment":
            cmd_experiment(doc)
        elif args.command == "ade":
            cmd_ade(doc)
        elif args.command == "gce":
            cmd_gce(doc, args.returns_csv)
        else:
            cmd_calibrate(doc)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"computation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
