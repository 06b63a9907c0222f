"""Strict JSON configuration documents for the command-line front end.

A document has four optional sections: ``scenario``, ``estimator``,
``experiment`` and ``output``. Missing keys take the defaults in
``DEFAULTS``; unknown keys are rejected so that a typo such as ``rho_``
cannot silently fall back to a default.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from rmtportfolio.exceptions import InputError
from rmtportfolio.moments import WeightProfile
from rmtportfolio.simulation import ExperimentSpec, ScenarioSpec

__all__ = ["DEFAULTS", "ConfigDocument", "ConfigError", "load_config", "parse_config"]

DEFAULTS: dict[str, dict[str, Any]] = {
    "scenario": {
        "M": 50,
        "vol_band": [0.2, 0.3],
        "periods_per_year": 252,
        "correlation_strength": 0.5,
        "mu_scale": 0.0,
        "sigma0_kind": "identity",
        "seed": 0,
    },
    "estimator": {
        "rho": 0.05,
        "delta": 0.0,
        "t": 0.75,
        "w_sigma": None,
        "w_mu": None,
        "center": True,
    },
    "experiment": {
        "N_grid": list(range(20, 201, 20)),
        "trials": 1000,
        "calibrate": "none",
        "rho_grid": [],
        "t_grid": [],
        "seed": 0,
        "threads": 1,
    },
    "output": {
        "dir": "out",
    },
}

_TYPES: dict[str, dict[str, tuple[type, ...]]] = {
    "scenario": {
        "M": (int,), "vol_band": (list,), "periods_per_year": (int,),
        "correlation_strength": (int, float), "mu_scale": (int, float),
        "sigma0_kind": (str,), "seed": (int,),
    },
    "estimator": {
        "rho": (int, float), "delta": (int, float), "t": (int, float),
        "w_sigma": (list, type(None)), "w_mu": (list, type(None)), "center": (bool,),
    },
    "experiment": {
        "N_grid": (list,), "trials": (int,), "calibrate": (str,),
        "rho_grid": (list,), "t_grid": (list,), "seed": (int,), "threads": (int,),
    },
    "output": {"dir": (str,)},
}


class ConfigError(InputError):
    pass


def _check_type(section: str, key: str, value: Any) -> None:
    allowed = _TYPES[section][key]
    # bool is an int subclass; only accept it where bool is requested
    if isinstance(value, bool) and bool not in allowed:
        raise ConfigError(f"{section}.{key}: expected {_type_names(allowed)}, got a boolean")
    if not isinstance(value, allowed):
        raise ConfigError(f"{section}.{key}: expected {_type_names(allowed)}, got {type(value).__name__}")
    if isinstance(value, list):
        for i, item in enumerate(value):
            if isinstance(item, bool) or not isinstance(item, (int, float)):
                raise ConfigError(f"{section}.{key}[{i}]: expected a number, got {item!r}")


def _type_names(types: tuple[type, ...]) -> str:
    names = {int: "integer", float: "number", str: "string", bool: "boolean", list: "list", type(None): "null"}
    return " or ".join(names[t] for t in types)


@dataclass(frozen=True)
class ConfigDocument:
    """A fully resolved configuration (every key present)."""

    data: dict[str, dict[str, Any]]

    def section(self, name: str) -> dict[str, Any]:
        return self.data[name]

    def scenario_spec(self) -> ScenarioSpec:
        s = self.data["scenario"]
        if len(s["vol_band"]) != 2:
            raise ConfigError("scenario.vol_band: expected two numbers [lo, hi]")
        return ScenarioSpec(
            M=s["M"], vol_band=tuple(s["vol_band"]), periods_per_year=s["periods_per_year"],
            correlation_strength=float(s["correlation_strength"]), mu_scale=float(s["mu_scale"]),
            sigma0_kind=s["sigma0_kind"], seed=s["seed"],
        )

    def experiment_spec(self) -> ExperimentSpec:
        e, est = self.data["experiment"], self.data["estimator"]
        if est["w_sigma"] is not None or est["w_mu"] is not None:
            raise ConfigError("estimator.w_sigma / w_mu are not supported by the simulation; use estimator.t")
        if any(not float(n).is_integer() for n in e["N_grid"]):
            raise ConfigError("experiment.N_grid: entries must be integers")
        return ExperimentSpec(
            scenario=self.scenario_spec(), N_grid=tuple(int(n) for n in e["N_grid"]),
            trials=e["trials"], rho=float(est["rho"]), t=float(est["t"]), center=est["center"],
            calibrate=e["calibrate"], rho_grid=tuple(e["rho_grid"]), t_grid=tuple(e["t_grid"]),
            seed=e["seed"], threads=e["threads"],
        )

    def weight_profile(self, N: int) -> WeightProfile:
        """Weights for ``N`` observations: explicit vectors or the bimodal profile."""
        est = self.data["estimator"]
        w_sigma, w_mu = est["w_sigma"], est["w_mu"]
        if w_sigma is None and w_mu is None:
            return WeightProfile.bimodal(N, float(est["t"]))
        w_sigma = np.ones(N) if w_sigma is None else np.asarray(w_sigma, dtype=np.float64)
        w_mu = np.ones(N) if w_mu is None else np.asarray(w_mu, dtype=np.float64)
        if w_sigma.size != N or w_mu.size != N:
            raise ConfigError(
                f"estimator.w_sigma/w_mu: length {w_sigma.size}/{w_mu.size} does not match N={N}"
            )
        return WeightProfile(w_mu, w_sigma)

    def with_overrides(self, **overrides: Any) -> ConfigDocument:
        """Copy with ``experiment`` or ``output`` keys replaced (``None`` is ignored)."""
        data = copy.deepcopy(self.data)
        for key, value in overrides.items():
            if value is None:
                continue
            section = "output" if key == "dir" else "experiment"
            data[section][key] = value
        return ConfigDocument(data)

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True)


def parse_config(raw: dict[str, Any]) -> ConfigDocument:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    data = copy.deepcopy(DEFAULTS)
    for section, body in raw.items():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown section {section!r}; expected one of {sorted(DEFAULTS)}")
        if not isinstance(body, dict):
            raise ConfigError(f"section {section!r} must be a JSON object")
        for key, value in body.items():
            if key not in DEFAULTS[section]:
                raise ConfigError(
                    f"unknown key {section}.{key!r}; valid keys are {sorted(DEFAULTS[section])}"
                )
            _check_type(section, key, value)
            data[section][key] = value
    doc = ConfigDocument(data)
    # surface domain errors (ranges, grids) at load time
    try:
        doc.scenario_spec()
        if data["estimator"]["w_sigma"] is None and data["estimator"]["w_mu"] is None:
            doc.experiment_spec()
    except ConfigError:
        raise
    except InputError as exc:
        raise ConfigError(str(exc)) from exc
    return doc


def load_config(path: str | Path | None) -> ConfigDocument:
    """Read and validate a config file; ``None`` yields the defaults."""
    if path is None:
        return parse_config({})
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    try:
        return parse_config(raw)
    except InputError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
