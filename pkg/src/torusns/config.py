"""Experiment configuration: JSON file, strict validation, dotted overrides.

Every key has a default; a config file only lists what it changes.  Unknown
keys anywhere are rejected, and all values are checked before anything runs.
"""

from __future__ import annotations

import copy
import json
import os
from pathlib import Path

EXPERIMENTS = ("simulate", "g-system", "verify-kernel", "verify-semigroup", "verify-estimates",
               "scaling-check", "picard-crosscheck")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
        self.message = message


DEFAULTS: dict = {
    "experiment": None,
    "output_dir": "results",
    "seeds": [0, 1, 2],
    "amplitudes": [0.5, 1.0, 2.0, 4.0],
    "parallelism": None,
    "deterministic": False,
    "constants_file": None,
    "grid": {"dim": 3, "modes": 32},
    "initial": {"kind": "random_bandlimited", "amplitude": 1.0, "seed": 0, "max_wavenumber": 4},
    "solver": {
        "end_time": 1.0, "dt": None, "dealias": True, "blowup_threshold": None,
        "blowup_factor": 1e4, "snapshot_every": 1, "j_max": 2, "form": "advective",
        "nonlinear": True, "snapshots": "ends",
    },
    "kernel": {
        "dims": [1, 2, 3], "x_points": 20, "t_points": 20, "t_min": 0.05, "t_max": 5.0,
        "representation": "auto", "truncation_radius": None, "crossover_time": 0.5,
        "rel_tol": 1e-14, "tolerance": 1e-10,
    },
    "semigroup": {
        "j_max": 4, "trial_count": 50, "t_points": 40, "t_min": 1e-4, "t_max": 10.0,
        "max_wavenumber": 4, "max_modes": 3, "field_count": 100, "saturation_tolerance": 0.05,
        "slack": 1e-12,
    },
    "estimates": {
        "j_max": 3, "steps": 400, "snapshot_every": 4, "collapse_factor": 2.0, "C": None,
        "forcing_trials": 50, "forcing_T": 10.0,
    },
    "gsystem": {"kind": "navier_stokes", "tensor": None, "compare": True, "tolerance": 1e-9,
                "window_steps": 50, "C": None},
    "scaling": {"lam": 2, "j_max": 2, "tolerance": 1e-6},
    "picard": {
        "time": 0.01, "iterations": 6, "quadrature_nodes": 8, "dt": 1e-3, "tolerance": 1e-8,
        "duhamel_end": 0.2, "duhamel_dt": 1.25e-3, "cadences": [8, 4, 2, 1],
    },
}


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _positive(v) -> bool:
    return _is_num(v) and v > 0


def _opt(pred):
    return lambda v: v is None or pred(v)


def _int_at_least(n):
    return lambda v: _is_int(v) and v >= n


def _list_of(pred, nonempty=True):
    return lambda v: isinstance(v, list) and (v or not nonempty) and all(pred(x) for x in v)


_CHECKS: dict = {
    "experiment": (lambda v: v in EXPERIMENTS, f"one of {', '.join(EXPERIMENTS)}"),
    "output_dir": (lambda v: isinstance(v, str) and v != "", "a non-empty path"),
    "seeds": (_list_of(_int_at_least(0)), "a non-empty list of non-negative integers"),
    "amplitudes": (_list_of(_positive), "a non-empty list of positive numbers"),
    "parallelism": (_opt(_int_at_least(1)), "null or an integer >= 1"),
    "deterministic": (lambda v: isinstance(v, bool), "true or false"),
    "constants_file": (_opt(lambda v: isinstance(v, str)), "null or a path"),
    "grid.dim": (lambda v: v in (2, 3) and _is_int(v), "2 or 3"),
    "grid.modes": (lambda v: _is_int(v) and v >= 8 and v % 2 == 0, "an even integer >= 8"),
    "initial.kind": (lambda v: v in ("taylor_green", "random_bandlimited"), "taylor_green or random_bandlimited"),
    "initial.amplitude": (_positive, "a positive number"),
    "initial.seed": (_int_at_least(0), "a non-negative integer"),
    "initial.max_wavenumber": (_int_at_least(1), "an integer >= 1"),
    "solver.end_time": (_positive, "a positive number"),
    "solver.dt": (_opt(_positive), "null or a positive number"),
    "solver.dealias": (lambda v: isinstance(v, bool), "true or false"),
    "solver.blowup_threshold": (_opt(_positive), "null or a positive number"),
    "solver.blowup_factor": (_positive, "a positive number"),
    "solver.snapshot_every": (_int_at_least(1), "an integer >= 1"),
    "solver.j_max": (_int_at_least(0), "an integer >= 0"),
    "solver.form": (lambda v: v in ("advective", "divergence"), "advective or divergence"),
    "solver.nonlinear": (lambda v: isinstance(v, bool), "true or false"),
    "solver.snapshots": (lambda v: v in ("none", "ends", "all"), "none, ends or all"),
    "kernel.dims": (_list_of(lambda v: v in (1, 2, 3) and _is_int(v)), "a list drawn from 1, 2, 3"),
    "kernel.x_points": (_int_at_least(1), "an integer >= 1"),
    "kernel.t_points": (_int_at_least(1), "an integer >= 1"),
    "kernel.t_min": (_positive, "a positive number"),
    "kernel.t_max": (_positive, "a positive number"),
    "kernel.representation": (lambda v: v in ("spectral", "poisson", "auto"), "spectral, poisson or auto"),
    "kernel.truncation_radius": (_opt(_int_at_least(1)), "null or an integer >= 1"),
    "kernel.crossover_time": (_positive, "a positive number"),
    "kernel.rel_tol": (lambda v: _positive(v) and v < 1, "a number in (0, 1)"),
    "kernel.tolerance": (_positive, "a positive number"),
    "semigroup.j_max": (_int_at_least(0), "an integer >= 0"),
    "semigroup.trial_count": (_int_at_least(1), "an integer >= 1"),
    "semigroup.t_points": (_int_at_least(2), "an integer >= 2"),
    "semigroup.t_min": (_positive, "a positive number"),
    "semigroup.t_max": (_positive, "a positive number"),
    "semigroup.max_wavenumber": (_int_at_least(1), "an integer >= 1"),
    "semigroup.max_modes": (_int_at_least(1), "an integer >= 1"),
    "semigroup.field_count": (_int_at_least(0), "an integer >= 0"),
    "semigroup.saturation_tolerance": (_positive, "a positive number"),
    "semigroup.slack": (lambda v: _is_num(v) and v >= 0, "a non-negative number"),
    "estimates.j_max": (_int_at_least(1), "an integer >= 1"),
    "estimates.steps": (_int_at_least(1), "an integer >= 1"),
    "estimates.snapshot_every": (_int_at_least(1), "an integer >= 1"),
    "estimates.collapse_factor": (lambda v: _is_num(v) and v >= 1, "a number >= 1"),
    "estimates.C": (_opt(_positive), "null or a positive number"),
    "estimates.forcing_trials": (_int_at_least(1), "an integer >= 1"),
    "estimates.forcing_T": (_positive, "a positive number"),
    "gsystem.kind": (lambda v: v in ("navier_stokes", "zero", "tensor"), "navier_stokes, zero or tensor"),
    "gsystem.tensor": (_opt(lambda v: isinstance(v, list)), "null or a nested list of shape (n, n, n, n)"),
    "gsystem.compare": (lambda v: isinstance(v, bool), "true or false"),
    "gsystem.tolerance": (_positive, "a positive number"),
    "gsystem.window_steps": (_int_at_least(1), "an integer >= 1"),
    "gsystem.C": (_opt(_positive), "null or a positive number"),
    "scaling.lam": (_int_at_least(1), "a positive integer"),
    "scaling.j_max": (_int_at_least(0), "an integer >= 0"),
    "scaling.tolerance": (_positive, "a positive number"),
    "picard.time": (_positive, "a positive number"),
    "picard.iterations": (_int_at_least(1), "an integer >= 1"),
    "picard.quadrature_nodes": (_int_at_least(1), "an integer >= 1"),
    "picard.dt": (_positive, "a positive number"),
    "picard.tolerance": (_positive, "a positive number"),
    "picard.duhamel_end": (_positive, "a positive number"),
    "picard.duhamel_dt": (_positive, "a positive number"),
    "picard.cadences": (_list_of(_int_at_least(1)), "a non-empty list of integers >= 1"),
}


def _merge(base: dict, update: dict, prefix: str = "") -> None:
    if not isinstance(update, dict):
        raise ConfigError(prefix.rstrip(".") or "<root>", "expected a JSON object")
    for key, value in update.items():
        path = prefix + str(key)
        if key not in base:
            raise ConfigError(path, "unknown key")
        if isinstance(base[key], dict):
            _merge(base[key], value, path + ".")
        else:
            base[key] = value


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, assignment: str) -> None:
    """Apply ``a.b.c=value``; the value is parsed as JSON when it parses, else kept as a string."""
    if "=" not in assignment:
        raise ConfigError(assignment, "override must look like key=value")
    path, text = assignment.split("=", 1)
    keys = path.strip().split(".")
    node = cfg
    for i, key in enumerate(keys):
        dotted = ".".join(keys[: i + 1])
        if not isinstance(node, dict) or key not in node:
            raise ConfigError(dotted, "unknown key")
        if i == len(keys) - 1:
            if isinstance(node[key], dict):
                raise ConfigError(dotted, "cannot replace a whole section")
            node[key] = _parse_value(text)
        else:
            node = node[key]


def validate(cfg: dict) -> None:
    for path, (check, expected) in _CHECKS.items():
        node = cfg
        for key in path.split("."):
            node = node[key]
        if not check(node):
            raise ConfigError(path, f"expected {expected}, got {node!r}")
    g, s, k = cfg["grid"], cfg["semigroup"], cfg["kernel"]
    if cfg["initial"]["max_wavenumber"] > g["modes"] // 3:
        raise ConfigError("initial.max_wavenumber", f"must not exceed modes/3 = {g['modes'] // 3}")
    if s["t_min"] >= s["t_max"]:
        raise ConfigError("semigroup.t_min", "must be smaller than semigroup.t_max")
    if k["t_min"] >= k["t_max"]:
        raise ConfigError("kernel.t_min", "must be smaller than kernel.t_max")
    if cfg["gsystem"]["kind"] == "tensor":
        t = cfg["gsystem"]["tensor"]
        n = g["dim"]
        try:
            import numpy as np
            shape = np.asarray(t, dtype=float).shape
        except (TypeError, ValueError):
            shape = None
        if shape != (n,) * 4:
            raise ConfigError("gsystem.tensor", f"expected shape {(n,) * 4}, got {shape}")


def load_config(path: str | os.PathLike | None, overrides: list[str] = ()) -> dict:
    """Defaults, then the file, then overrides; validated.  Raises ConfigError."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON: {exc}") from None
        _merge(cfg, data)
    for item in overrides:
        apply_override(cfg, item)
    validate(cfg)
    return cfg


def canonical_json(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))
