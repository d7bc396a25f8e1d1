"""Command line entry point: ``torusns run CONFIG`` and ``torusns describe CONFIG``.

Exit status: 0 when every verdict passes, 1 on a failed verdict or a
numerical failure (blow-up, non-contracting Picard iteration), 2 on a
configuration error.  Nothing is written when the configuration is invalid.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import os
import sys
import traceback
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import estimates as est
from .config import ConfigError, canonical_json, load_config
from .operators import KernelEvalConfig
from .snapshots import write_snapshot
from .solver import (
    BlowUpError,
    GSpec,
    PicardDivergenceError,
    SolverConfig,
    default_dt,
    make_initial_field,
    simulate,
    simulate_g_system,
)
from .spectral import TorusGrid, make_grid, set_fft_workers, sup_norm

EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2


class NumericalFailure(RuntimeError):
    pass


def _config_hash(cfg: dict) -> str:
    trimmed = {k: v for k, v in cfg.items() if k not in ("output_dir", "parallelism", "deterministic")}
    return hashlib.sha256(canonical_json(trimmed).encode()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _grid(cfg) -> TorusGrid:
    return make_grid(cfg["grid"]["dim"], cfg["grid"]["modes"])


def _initial(cfg, grid=None):
    ini = cfg["initial"]
    return make_initial_field(grid or _grid(cfg), ini["kind"], amplitude=ini["amplitude"],
                              seed=ini["seed"], max_wavenumber=ini["max_wavenumber"])


def _solver_config(cfg, **extra) -> SolverConfig:
    s = cfg["solver"]
    kw = dict(end_time=s["end_time"], dt=s["dt"], dealias=s["dealias"],
              blowup_threshold=s["blowup_threshold"], blowup_factor=s["blowup_factor"],
              snapshot_every=s["snapshot_every"], j_max=s["j_max"], form=s["form"],
              nonlinear=s["nonlinear"], keep_fields=s["snapshots"] != "none")
    kw.update(extra)
    return SolverConfig(**kw)


def _gspec(cfg) -> GSpec:
    g, n = cfg["gsystem"], cfg["grid"]["dim"]
    if g["kind"] == "navier_stokes":
        return GSpec.navier_stokes(n)
    if g["kind"] == "zero":
        return GSpec.zero(n)
    return GSpec(np.asarray(g["tensor"], dtype=float))


def _constants_from_file(cfg) -> dict:
    path = cfg["constants_file"]
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("constants_file", f"cannot load {path}: {exc}") from None
    if not isinstance(data, dict) or not (isinstance(data.get("C"), (int, float)) and data["C"] > 0):
        raise ConfigError("constants_file", "must hold a JSON object with a positive 'C'")
    return data


def _known_C(cfg, section: str):
    return cfg[section]["C"] if cfg[section]["C"] is not None else _constants_from_file(cfg).get("C")


def _measure_C(cfg, gspec=None) -> tuple[float, str, dict]:
    e = cfg["estimates"]
    gspec = gspec or GSpec.navier_stokes(cfg["grid"]["dim"])
    res = est.measure_forcing_constant(gspec, e["forcing_T"], e["forcing_trials"], modes=cfg["grid"]["modes"],
                                  max_wavenumber=cfg["semigroup"]["max_wavenumber"],
                                  max_modes=cfg["semigroup"]["max_modes"], seed=cfg["seeds"][0])
    info = {"C": res.constant, "trials": int(len(res.per_trial)), "T": e["forcing_T"], "axes": res.axes}
    return res.constant, "measured", info


def _resolve_C(cfg, section: str, gspec=None):
    C = _known_C(cfg, section)
    if C is not None:
        return float(C), "configured", {}
    return _measure_C(cfg, gspec)


def _V(name, passed, value, tol, evidence) -> est.Verdict:
    return est.Verdict(name, bool(passed), float(value), float(tol), evidence)


# ---------------------------------------------------------------------------
# experiments: each returns (results, verdicts, diagnostics); artifacts go to out
# ---------------------------------------------------------------------------


def _write_snapshots(traj, out: Path, mode: str) -> list[str]:
    if mode == "none" or not traj.fields:
        return []
    idx = range(len(traj.fields)) if mode == "all" else sorted({0, len(traj.fields) - 1})
    names = []
    for m in idx:
        name = f"u_{m:05d}.pfld"
        write_snapshot(out / name, traj.fields[m])
        names.append(name)
    return names


def _trajectory_summary(traj) -> dict:
    return {"samples": len(traj.times), "end_time": float(traj.times[-1]), "dt": traj.dt,
            "terminated_early": traj.terminated_early, "reason": traj.reason,
            "max_dsup": traj.dsup.max(axis=0).tolist(),
            "max_divergence_residual": float(traj.divergence_residual.max())}


def run_simulate(cfg, out: Path, workers: int = 1):
    f = _initial(cfg)
    traj = simulate(f, _solver_config(cfg))
    traj.write_csv(out / "trajectory.csv")
    snaps = _write_snapshots(traj, out, cfg["solver"]["snapshots"])
    if traj.terminated_early:
        raise NumericalFailure(traj.reason)
    e = traj.energy
    growth = float(np.max(np.diff(e), initial=0.0))
    verdicts = [
        _V("divergence_free", traj.divergence_residual.max() <= 1e-11, traj.divergence_residual.max(), 1e-11,
           "max over samples of |div u|"),
        _V("energy_nonincreasing", growth <= 1e-12 * max(e[0], 1e-300), growth, 1e-12 * e[0],
           "largest increase of the energy between samples"),
    ]
    return {"trajectory": _trajectory_summary(traj), "snapshots": snaps}, verdicts, []


def run_g_system(cfg, out: Path, workers: int = 1):
    gspec = _gspec(cfg)
    f = _initial(cfg)
    scfg = _solver_config(cfg)
    traj = simulate_g_system(f, gspec, scfg)
    traj.write_csv(out / "trajectory.csv")
    snaps = _write_snapshots(traj, out, cfg["solver"]["snapshots"])
    if traj.terminated_early:
        raise NumericalFailure(traj.reason)
    verdicts = []
    results = {"trajectory": _trajectory_summary(traj), "snapshots": snaps,
               "C_g": gspec.c_g, "C_g_quadratic": gspec.c_quadratic, "C_g_jacobian": gspec.c_jacobian}
    g = cfg["gsystem"]
    if g["compare"] and g["kind"] == "navier_stokes":
        ref = simulate(f, _solver_config(cfg, keep_fields=True))
        gtraj = traj if traj.fields else simulate_g_system(f, gspec, _solver_config(cfg, keep_fields=True))
        diff = max(sup_norm(a - b) for a, b in zip(gtraj.fields, ref.fields))
        results["navier_stokes_difference"] = diff
        verdicts.append(_V("matches_navier_stokes", diff <= g["tolerance"], diff, g["tolerance"],
                           "max over samples of |u_g - u_ns|"))
    C, source, info = _resolve_C(cfg, "gsystem", gspec)
    if gspec.c_g > 0:
        w = est.verify_g_system_window(f, gspec, C, steps=g["window_steps"])
        results["window"] = {"C": C, "C_source": source, "forcing_constant": info, "c0": w.c0,
                             "end_time": w.end_time, "max_ratio": w.max_ratio}
        verdicts.append(_V("sup_below_twice_initial", w.passed, w.max_ratio, 2.0,
                           f"max |u(t)|/|f| on [0, c0/|f|^2], c0 = {w.c0:.6g}"))
    return results, verdicts, []


def run_verify_kernel(cfg, out: Path, workers: int = 1):
    k = cfg["kernel"]
    kc = KernelEvalConfig(truncation_radius=k["truncation_radius"], representation=k["representation"],
                          crossover_time=k["crossover_time"], rel_tol=k["rel_tol"])
    r = est.verify_kernel_duality(k["dims"], k["x_points"], k["t_points"], k["t_min"], k["t_max"],
                                  config=kc, tolerance=k["tolerance"])
    v = _V("kernel_duality", r.passed, r.max_relative_error, r.tolerance,
           f"{r.points} (x, t, n) points, per dimension {r.per_dim}")
    return {"max_relative_error": r.max_relative_error, "per_dim": r.per_dim, "points": r.points}, [v], []


def run_verify_semigroup(cfg, out: Path, workers: int = 1):
    s, g = cfg["semigroup"], cfg["grid"]
    t_grid = est.default_t_grid(s["t_points"], s["t_min"], s["t_max"])
    m = est.measure_semigroup_constants(s["j_max"], 2 * s["trial_count"], t_grid, dim=g["dim"],
                                        modes=g["modes"], max_wavenumber=s["max_wavenumber"],
                                        max_modes=s["max_modes"], seed=cfg["seeds"][0])
    mp = est.check_maximum_principle(s["field_count"], t_grid, dim=g["dim"], modes=g["modes"],
                                     max_wavenumber=cfg["initial"]["max_wavenumber"],
                                     seed=cfg["seeds"][0], slack=s["slack"])
    sat = m.saturation()
    tol = s["saturation_tolerance"]
    plain, proj = m.constants(), m.projected_constants()
    verdicts = [_V("maximum_principle", mp.passed, mp.worst_ratio, 1 + s["slack"],
                   f"{mp.violations} violations over {mp.field_count} fields x {len(t_grid)} times")]
    finite = bool(np.all(np.isfinite(plain)) and np.all(np.isfinite(proj)))
    verdicts.append(_V("constants_finite", finite, float(max(plain.max(), proj.max())), math.inf,
                       "largest measured constant"))
    worst_plain = float(sat["plain"].max())
    worst_proj = float(sat["projected"][1:].max()) if s["j_max"] >= 1 else 0.0
    verdicts.append(_V("saturation_plain", worst_plain <= tol, worst_plain, tol,
                       f"relative change {s['trial_count']} -> {2 * s['trial_count']} trials, j = 0..{s['j_max']}"))
    verdicts.append(_V("saturation_projected", worst_proj <= tol, worst_proj, tol,
                       f"relative change {s['trial_count']} -> {2 * s['trial_count']} trials, j = 1..{s['j_max']}"))
    results = {
        "C": plain.tolist(), "C_projected": proj.tolist(),
        "C_half": m.constants(s["trial_count"]).tolist(),
        "C_projected_half": m.projected_constants(s["trial_count"]).tolist(),
        "saturation": {k: v.tolist() for k, v in sat.items()},
        "t_grid": t_grid.tolist(), "trials": m.trial_count,
        "maximum_principle": asdict(mp),
    }
    return results, verdicts, []


def run_verify_estimates(cfg, out: Path, workers: int):
    e, g = cfg["estimates"], cfg["grid"]
    C, source, info = _resolve_C(cfg, "estimates")
    rep = est.verify_solution_bounds(cfg["amplitudes"], e["j_max"], cfg["seeds"], C=C, dim=g["dim"],
                                    modes=g["modes"], max_wavenumber=cfg["initial"]["max_wavenumber"],
                                    steps=e["steps"], snapshot_every=e["snapshot_every"],
                                    collapse_factor=e["collapse_factor"], workers=workers)
    rep.write_collapse_csv(out / "collapse.csv")
    with open(out / "constants.json", "w") as fh:
        json.dump({"C": C, "c0": rep.constants["c0"], "C_source": source}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    results = rep.to_dict()
    results["C_source"] = source
    results["forcing_constant"] = info
    return results, rep.verdicts, rep.diagnostics


def run_scaling_check(cfg, out: Path, workers: int = 1):
    sc, s = cfg["scaling"], cfg["solver"]
    f = _initial(cfg)
    r = est.scaling_check(f, sc["lam"], sc["j_max"], end_time=s["end_time"], dt=s["dt"],
                          snapshot_every=s["snapshot_every"], tolerance=sc["tolerance"])
    verdicts = [
        _V("derivative_norm_scaling", r.max_norm_mismatch <= r.tolerance, r.max_norm_mismatch, r.tolerance,
           f"|D^j u_lam(t)| vs lam^(j+1)|D^j u(lam^2 t)|, j <= {sc['j_max']}, {len(r.times)} samples"),
        _V("pressure_scaling", r.max_pressure_mismatch <= r.tolerance, r.max_pressure_mismatch, r.tolerance,
           "p_lam(x, t) vs lam^2 p(lam x, lam^2 t)"),
    ]
    return {"lam": r.lam, "times": r.times.tolist(), "norm_mismatch": r.norm_mismatch.tolist(),
            "pressure_mismatch": r.pressure_mismatch.tolist()}, verdicts, []


def run_picard_crosscheck(cfg, out: Path, workers: int = 1):
    p = cfg["picard"]
    f = _initial(cfg)
    r = est.picard_crosscheck(f, p["time"], iterations=p["iterations"], quadrature_nodes=p["quadrature_nodes"],
                              dt=p["dt"], tolerance=p["tolerance"], duhamel_end=p["duhamel_end"],
                              duhamel_dt=p["duhamel_dt"], cadences=p["cadences"])
    verdicts = [
        _V("picard_matches_simulate", r.difference <= r.tolerance, r.difference, r.tolerance,
           f"|u_picard - u_simulate| at t = {p['time']}"),
        _V("picard_contracts", r.contracting, r.increments[-1], 0.0, "successive increments strictly decrease"),
        _V("duhamel_residual_order", all(o >= 3.5 for o in r.duhamel_orders),
           min(r.duhamel_orders, default=math.nan), 3.5, f"observed orders {r.duhamel_orders}"),
    ]
    return asdict(r), verdicts, []


RUNNERS = {
    "simulate": run_simulate,
    "g-system": run_g_system,
    "verify-kernel": run_verify_kernel,
    "verify-semigroup": run_verify_semigroup,
    "verify-estimates": run_verify_estimates,
    "scaling-check": run_scaling_check,
    "picard-crosscheck": run_picard_crosscheck,
}


# ---------------------------------------------------------------------------
# describe
# ---------------------------------------------------------------------------


def _bytes(n: float) -> str:
    for unit in ("B", "KiB", "MiB", "GiB"):
        if n < 1024 or unit == "GiB":
            return f"{n:.1f} {unit}"
        n /= 1024


def describe_plan(cfg) -> list[str]:
    kind = cfg["experiment"]
    g = cfg["grid"]
    n, M = g["dim"], g["modes"]
    per_field = M ** n * 16
    lines = [f"experiment: {kind}", f"grid: n={n}, M={M} ({M ** n} points)"]
    warnings = []
    C = _known_C(cfg, "gsystem" if kind == "g-system" else "estimates")
    if kind in ("simulate", "g-system", "scaling-check"):
        f = _initial(cfg)
        s = cfg["solver"]
        dt = s["dt"] if s["dt"] is not None else default_dt(f)
        steps = max(1, math.ceil(s["end_time"] / dt - 1e-9))
        samples = steps // s["snapshot_every"] + 2
        stored = samples if s["snapshots"] != "none" else 0
        fields = n * (stored + 12)
        runs = 1
        if kind == "scaling-check":
            lam = cfg["scaling"]["lam"]
            runs = 2
            fields = n * (stored * (1 + lam ** n) + 12 * lam ** n)
            lines.append(f"runs: 2 (base and lambda={lam} on M={M * lam}), {steps} steps each")
        else:
            lines.append(f"runs: {runs}, steps: {steps} (dt = {dt:.6g}, T = {s['end_time']:.6g})")
        lines.append(f"memory: {M}^{n} x 16 B x {fields} fields ~ {_bytes(per_field * fields)}")
        if C is not None:
            c0 = est.existence_constant(C)
            amp = cfg["initial"]["amplitude"]
            window = c0 / amp ** 2
            if s["end_time"] > window:
                warnings.append(f"end time {s['end_time']:.6g} exceeds the existence window "
                                f"c0/|f|^2 = {window:.6g} (c0 = {c0:.6g}); bounds are only asserted inside it")
    elif kind == "verify-estimates":
        amps, seeds = cfg["amplitudes"], cfg["seeds"]
        e = cfg["estimates"]
        lines.append(f"plan: {len(amps)} amplitudes x {len(seeds)} seeds = {len(amps) * len(seeds)} simulations")
        lines.append(f"amplitudes: {amps}; seeds: {seeds}; {e['steps']} steps each to T = c0/A^2")
        lines.append("C: " + (f"{C:.6g} (configured)" if C is not None else
                              f"measured first from {e['forcing_trials']} forcing trials"))
        fields = n * 16
        lines.append(f"memory: {M}^{n} x 16 B x {fields} fields per simulation ~ {_bytes(per_field * fields)}")
    elif kind == "verify-semigroup":
        s = cfg["semigroup"]
        lines.append(f"plan: {2 * s['trial_count']} sparse trials (saturation {s['trial_count']} -> "
                     f"{2 * s['trial_count']}), {s['field_count']} dense fields, {s['t_points']} times, j <= {s['j_max']}")
        lines.append(f"memory: {M}^{n} x 16 B x {2 * n} fields ~ {_bytes(per_field * 2 * n)}")
    elif kind == "verify-kernel":
        k = cfg["kernel"]
        lines.append(f"plan: {k['x_points']} x {k['t_points']} (x, t) points for n in {k['dims']}")
    elif kind == "picard-crosscheck":
        p = cfg["picard"]
        steps = math.ceil(p["duhamel_end"] / p["duhamel_dt"])
        lines.append(f"plan: Picard ({p['iterations']} iterations, {p['quadrature_nodes']} nodes) vs "
                     f"{math.ceil(p['time'] / p['dt'])} steps; Duhamel check over {steps} steps")
        fields = n * (steps + 2 * p["quadrature_nodes"] + 12)
        lines.append(f"memory: {M}^{n} x 16 B x {fields} fields ~ {_bytes(per_field * fields)}")
    for w in warnings:
        lines.append(f"WARNING: {w}")
    return lines


# ---------------------------------------------------------------------------
# main
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="torusns", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "describe"):
        sp = sub.add_parser(name)
        sp.add_argument("config")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
        sp.add_argument("--output-dir")
        sp.add_argument("--deterministic", action="store_true")
    return p


def _load(args) -> dict:
    overrides = list(args.overrides)
    if args.output_dir is not None:
        overrides.append(f"output_dir={json.dumps(args.output_dir)}")
    if args.deterministic:
        overrides.append("deterministic=true")
    cfg = load_config(args.config, overrides)
    # build the inputs once so that bad combinations fail before any output exists
    _grid(cfg)
    if cfg["experiment"] == "g-system":
        _gspec(cfg)
    _constants_from_file(cfg)
    return cfg


def _print_verdicts(verdicts, diagnostics=()) -> None:
    for v in verdicts:
        print(v.line())
    for d in diagnostics:
        print("  (diagnostic) " + d.line())


def run(cfg) -> int:
    out = Path(cfg["output_dir"])
    workers = 1 if cfg["deterministic"] else (cfg["parallelism"] or os.cpu_count() or 1)
    set_fft_workers(1 if cfg["deterministic"] else workers)
    out.mkdir(parents=True, exist_ok=True)
    kind = cfg["experiment"]
    report = {"schema_version": est.SCHEMA_VERSION, "experiment": kind,
              "config_hash": _config_hash(cfg), "config": copy.deepcopy(cfg)}
    try:
        results, verdicts, diagnostics = RUNNERS[kind](cfg, out, workers)
    except (NumericalFailure, BlowUpError, PicardDivergenceError, FloatingPointError) as exc:
        diag = out / "diagnostics.json"
        with open(diag, "w") as fh:
            json.dump({"experiment": kind, "error": type(exc).__name__, "message": str(exc),
                       "traceback": traceback.format_exc()}, fh, indent=2)
        print(f"numerical failure: {exc}\ndiagnostics: {diag}", file=sys.stderr)
        return EXIT_NUMERICAL
    report["results"] = _jsonable(results)
    report["verdicts"] = [asdict(v) for v in verdicts]
    report["diagnostics"] = [asdict(v) for v in diagnostics]
    report["passed"] = all(v.passed for v in verdicts)
    with open(out / "report.json", "w") as fh:
        fh.write(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
    print(f"{kind}: {'PASS' if report['passed'] else 'FAIL'} ({out / 'report.json'})")
    _print_verdicts(verdicts, diagnostics)
    return EXIT_OK if report["passed"] else EXIT_NUMERICAL


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _load(args)
        if args.command == "describe":
            print(json.dumps(cfg, indent=2, sort_keys=True))
            for line in describe_plan(cfg):
                print(line)
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error at '{exc.key}': {exc.message}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
