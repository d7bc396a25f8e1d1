"""Empirical constants and checks for the sup-norm estimates.

Everything here is a measurement: constants are maxima over a declared,
seeded trial family and a declared time grid, taken on the collocation grid
(sampled sup-norm).  Nothing is extrapolated.

Two trial families are used.  Dense random band-limited fields come from
:func:`torusns.solver.random_bandlimited` and are evaluated with FFTs.
Sparse random trigonometric polynomials (:class:`TrigPolynomial`) carry only a
few wavevectors; their sampled sup-norm is evaluated directly on the distinct
phase tuples the grid realizes, which is far cheaper than an FFT and makes the
semigroup constants cheap enough to saturate.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.special import roots_jacobi

from .operators import (
    KernelEvalConfig,
    heat_kernel_poisson,
    heat_kernel_spectral,
    leray_project,
    pressure_from_velocity,
)
from .solver import (
    GSpec,
    SolverConfig,
    Trajectory,
    default_dt,
    duhamel_residual,
    make_initial_field,
    picard_solve,
    random_bandlimited,
    simulate,
    simulate_g_system,
)
from .spectral import (
    TorusGrid,
    VectorField,
    inverse_array,
    make_grid,
    multi_indices,
    sup_norm,
    sup_norm_physical,
)

SCHEMA_VERSION = 1


def default_t_grid(count: int = 40, t_min: float = 1e-4, t_max: float = 10.0) -> np.ndarray:
    return np.geomspace(t_min, t_max, count)


# ---------------------------------------------------------------------------
# sparse trigonometric polynomials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrigPolynomial:
    """f(x) = sum_m 2 Re(a_m exp(i k_m . x)), vector valued.

    ``wavevectors`` has shape (s, n) (integers, pairwise distinct up to sign,
    none zero); ``amplitudes`` has shape (s, n) (complex).
    """

    wavevectors: np.ndarray
    amplitudes: np.ndarray

    @property
    def dim(self) -> int:
        return self.wavevectors.shape[1]

    def projected(self) -> "TrigPolynomial":
        k = self.wavevectors.astype(float)
        k /= np.linalg.norm(k, axis=1, keepdims=True)
        a = self.amplitudes - k * np.sum(k * self.amplitudes, axis=1, keepdims=True)
        return TrigPolynomial(self.wavevectors, a)

    def to_vector_field(self, grid: TorusGrid) -> VectorField:
        if grid.dim != self.dim:
            raise ValueError("dimension mismatch")
        if np.abs(self.wavevectors).max() >= grid.modes // 2:
            raise ValueError("wavevectors do not fit below the Nyquist index")
        c = grid.zeros(grid.dim)
        for k, a in zip(self.wavevectors, self.amplitudes):
            pos = tuple(int(v) % grid.modes for v in k)
            neg = tuple(int(-v) % grid.modes for v in k)
            c[(slice(None),) + pos] += a
            c[(slice(None),) + neg] += np.conj(a)
        return VectorField(grid, c)


def random_trig_polynomial(rng: np.random.Generator, dim: int, max_wavenumber: int,
                           max_modes: int = 3) -> TrigPolynomial:
    """Random sparse polynomial: 1..max_modes wavevectors with |k|_inf <= max_wavenumber.

    Each wavevector component is zero with probability 1/2, otherwise a
    uniformly drawn nonzero integer, so axis-aligned and diagonal modes are
    both common.  Amplitudes are complex Gaussian.
    """
    s = int(rng.integers(1, max_modes + 1))
    ks: list[np.ndarray] = []
    while len(ks) < s:
        k = rng.integers(1, max_wavenumber + 1, dim) * rng.choice([-1, 1], dim) * (rng.random(dim) < 0.5)
        if k.any() and not any((k == q).all() or (k == -q).all() for q in ks):
            ks.append(k)
    amp = rng.standard_normal((s, dim)) + 1j * rng.standard_normal((s, dim))
    return TrigPolynomial(np.array(ks, dtype=np.int64), amp)


class PhaseEvaluator:
    """Sampled sup-norms of sparse polynomials sharing one set of wavevectors.

    Grid point x_m contributes the phase tuple (k . m mod M) * 2π/M; only
    distinct tuples matter for a maximum, so those are the evaluation points.
    """

    def __init__(self, wavevectors: np.ndarray, modes: int):
        dim = wavevectors.shape[1]
        idx = np.indices((modes,) * dim).reshape(dim, -1)
        phases = np.unique((wavevectors @ idx) % modes, axis=1) * (2 * np.pi / modes)
        self.basis = np.concatenate([np.cos(phases), np.sin(phases)])
        self.nmodes = wavevectors.shape[0]

    def sup(self, coeffs: np.ndarray) -> np.ndarray:
        """coeffs (..., s, n) complex -> (...) sampled sup of |sum 2 Re(c e^{iθ})|."""
        lead = coeffs.shape[:-2]
        n = coeffs.shape[-1]
        c = np.moveaxis(coeffs, -1, -2).reshape(-1, self.nmodes)
        lin = np.concatenate([2 * c.real, -2 * c.imag], axis=1) @ self.basis
        lin = lin.reshape(lead + (n, -1))
        return np.sqrt((lin * lin).sum(axis=-2).max(axis=-1))


def _alpha_table(dim: int, j_max: int) -> tuple[np.ndarray, np.ndarray]:
    alphas = [a for j in range(j_max + 1) for a in multi_indices(dim, j)]
    return np.array(alphas, dtype=np.int64).reshape(-1, dim), np.array([sum(a) for a in alphas])


def _decay_profile(p: TrigPolynomial, ev: PhaseEvaluator, t_grid: np.ndarray,
                   alphas: np.ndarray, order: np.ndarray, j_max: int) -> np.ndarray:
    """max over |alpha| = j of t^{j/2} |D^alpha e^{tΔ} p|, shape (len(t_grid), j_max + 1)."""
    k = p.wavevectors.astype(float)
    lam = (k * k).sum(axis=1)
    sym = np.prod((1j * k[None, :, :]) ** alphas[:, None, :], axis=2)  # (nalpha, s)
    out = np.empty((len(t_grid), j_max + 1))
    for i, t in enumerate(t_grid):
        c = sym[:, :, None] * (np.exp(-lam * t)[:, None] * p.amplitudes)[None]
        sups = ev.sup(c)
        for j in range(j_max + 1):
            out[i, j] = sups[order == j].max() * t ** (j / 2)
    return out


# ---------------------------------------------------------------------------
# semigroup constants
# ---------------------------------------------------------------------------


@dataclass
class SemigroupConstants:
    """Per-trial maxima over the time grid; constants are running maxima over trials.

    ``per_trial[m, j]`` is max_t t^{j/2} |D^j e^{tΔ} f_m|_inf / |f_m|_inf, and
    ``per_trial_projected`` the same with the projector inserted.
    """

    t_grid: np.ndarray
    per_trial: np.ndarray
    per_trial_projected: np.ndarray
    seed: int
    max_wavenumber: int
    modes: int

    @property
    def trial_count(self) -> int:
        return self.per_trial.shape[0]

    def constants(self, trials: int | None = None) -> np.ndarray:
        return self.per_trial[:trials].max(axis=0)

    def projected_constants(self, trials: int | None = None) -> np.ndarray:
        return self.per_trial_projected[:trials].max(axis=0)

    def saturation(self) -> dict[str, np.ndarray]:
        """Relative change of every constant from the first half of the trials to all of them."""
        half = self.trial_count // 2
        if half < 1:
            raise ValueError("need at least two trials for a saturation check")
        out = {}
        for name, table in (("plain", self.per_trial), ("projected", self.per_trial_projected)):
            a, b = table[:half].max(axis=0), table.max(axis=0)
            out[name] = np.abs(b / a - 1.0)
        return out


def measure_semigroup_constants(j_max: int = 4, trial_count: int = 50,
                                t_grid: Sequence[float] | None = None, *, dim: int = 3,
                                modes: int = 32, max_wavenumber: int = 4, max_modes: int = 3,
                                seed: int = 0) -> SemigroupConstants:
    """Measure C_j for e^{tΔ} and for e^{tΔ}P over sparse random trials.

    Trial ``m`` draws from ``default_rng([seed, m])``, so a run with twice the
    trials contains the smaller run as its prefix.
    """
    if j_max < 0 or trial_count < 1:
        raise ValueError("j_max must be >= 0 and trial_count >= 1")
    if 4 * max_wavenumber > modes:
        raise ValueError("need modes >= 4 * max_wavenumber for sampled sup-norms")
    t_grid = default_t_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    if np.any(t_grid <= 0):
        raise ValueError("t_grid must be positive")
    alphas, order = _alpha_table(dim, j_max)
    plain, proj = [], []
    for m in range(trial_count):
        p = random_trig_polynomial(np.random.default_rng([seed, m]), dim, max_wavenumber, max_modes)
        ev = PhaseEvaluator(p.wavevectors, modes)
        f_sup = float(ev.sup(p.amplitudes))
        plain.append(_decay_profile(p, ev, t_grid, alphas, order, j_max).max(axis=0) / f_sup)
        proj.append(_decay_profile(p.projected(), ev, t_grid, alphas, order, j_max).max(axis=0) / f_sup)
    return SemigroupConstants(t_grid, np.array(plain), np.array(proj), seed, max_wavenumber, modes)


@dataclass
class MaximumPrincipleResult:
    worst_ratio: float
    violations: int
    field_count: int
    slack: float

    @property
    def passed(self) -> bool:
        return self.violations == 0


def check_maximum_principle(field_count: int = 100, t_grid: Sequence[float] | None = None, *,
                            dim: int = 3, modes: int = 32, max_wavenumber: int = 4, seed: int = 0,
                            slack: float = 1e-12) -> MaximumPrincipleResult:
    """|e^{tΔ}f|_inf <= |f|_inf on dense random band-limited fields."""
    grid = make_grid(dim, modes)
    t_grid = default_t_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    worst, bad = 0.0, 0
    for m in range(field_count):
        f = random_bandlimited(grid, seed + m, max_wavenumber, solenoidal=False)
        f_sup = sup_norm(f)
        for t in t_grid:
            s = sup_norm_physical(inverse_array(grid, f.coeffs * np.exp(-grid.ksq * t)))
            worst = max(worst, s / f_sup)
            bad += s > f_sup * (1 + slack)
    return MaximumPrincipleResult(worst, bad, field_count, slack)


# ---------------------------------------------------------------------------
# forced heat equation u_t = Δu + D_i P g, u(0) = 0
# ---------------------------------------------------------------------------


def forced_response(g: VectorField, axis: int, t: float) -> VectorField:
    """Exact solution at time t for a time-constant forcing g."""
    grid = g.grid
    ksq = grid.ksq
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(ksq > 0, -np.expm1(-ksq * t) / ksq, t)
    dg = leray_project(g).coeffs * (1j * grid.odd_wavevector[axis])
    return VectorField(grid, w * dg)


def forcing_ratio(g: VectorField, axis: int, t_grid: Sequence[float]) -> np.ndarray:
    """|u(t)|_inf / (t^{1/2} |g|_inf) for the forced response; zero forcing gives zeros."""
    g_sup = sup_norm(g)
    t_grid = np.asarray(t_grid, dtype=float)
    if g_sup == 0:
        return np.zeros(len(t_grid))
    return np.array([sup_norm(forced_response(g, axis, t)) / (math.sqrt(t) * g_sup) for t in t_grid])


@dataclass
class ForcingConstantResult:
    constant: float
    per_trial: np.ndarray  # (trials,) max over axes and t
    t_grid: np.ndarray
    axes: list[int]

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.constant) and self.constant > 0)


def measure_forcing_constant(gspec: GSpec, T: float = 10.0, trials: int = 50, *, modes: int = 32,
                        max_wavenumber: int = 4, max_modes: int = 3, seed: int = 0,
                        t_count: int = 40) -> ForcingConstantResult:
    """Measure C in |u(t)|_inf <= C t^{1/2} max_s |g(s)|_inf.

    Forcings are time-constant sparse polynomials, for which the response is
    known in closed form, and every derivative axis that ``gspec`` uses is
    tried.  The quadratic form of ``gspec`` plays no role: here g is data.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    axes = gspec.axes or list(range(gspec.dim))
    t_grid = np.geomspace(T * 1e-4, T, t_count)
    per_trial = []
    for m in range(trials):
        p = random_trig_polynomial(np.random.default_rng([seed, m]), gspec.dim, max_wavenumber, max_modes)
        ev = PhaseEvaluator(p.wavevectors, modes)
        g_sup = float(ev.sup(p.amplitudes))
        k = p.wavevectors.astype(float)
        lam = (k * k).sum(axis=1)
        pa = p.projected().amplitudes
        best = 0.0
        for axis in axes:
            w = -np.expm1(-lam[None, :] * t_grid[:, None]) / lam[None, :]  # (nt, s)
            c = (w * (1j * k[:, axis]))[:, :, None] * pa[None]
            r = ev.sup(c) / (np.sqrt(t_grid) * g_sup)
            best = max(best, float(r.max()))
        per_trial.append(best)
    per_trial = np.array(per_trial)
    return ForcingConstantResult(float(per_trial.max()) if trials else 0.0, per_trial, t_grid, axes)


def existence_constant(C: float) -> float:
    """c0 = 1/(16 C^4) for the Navier-Stokes window."""
    return 1.0 / (16.0 * C ** 4)


def g_system_constant(C: float, c_g: float) -> float:
    """c0 = 1/(16 C^2 C_g^2) for the quadratic g-system window."""
    return 1.0 / (16.0 * C ** 2 * c_g ** 2)


# ---------------------------------------------------------------------------
# singular quadrature
# ---------------------------------------------------------------------------


def jacobi_integral(func, t: float, a: float = -0.5, b: float = -0.5, nodes: int = 32) -> float:
    """∫_0^t (t-s)^a s^b func(s) ds by Gauss-Jacobi quadrature.

    The endpoint singularities go into the weight, so smooth ``func`` is
    integrated at spectral accuracy.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    x, w = roots_jacobi(nodes, a, b)
    s = 0.5 * t * (1.0 + x)
    scale = (0.5 * t) ** (a + b + 1.0)
    return float(scale * np.sum(w * np.asarray(func(s), dtype=float) * np.ones_like(s)))


def beta_half_integral(t: float, nodes: int = 16) -> float:
    """∫_0^t (t-s)^{-1/2} s^{-1/2} ds, which is π for every t > 0."""
    return jacobi_integral(lambda s: np.ones_like(s), t, -0.5, -0.5, nodes)


# ---------------------------------------------------------------------------
# trajectory functionals
# ---------------------------------------------------------------------------


def compute_V(traj: Trajectory) -> np.ndarray:
    """|u(t)|_inf + t^{1/2} |Du(t)|_inf per stored sample."""
    if traj.j_max < 1:
        raise ValueError("trajectory diagnostics must include j = 1")
    return traj.dsup[:, 0] + np.sqrt(traj.times) * traj.dsup[:, 1]


def collapse_curves(traj: Trajectory, amplitude: float | None = None) -> np.ndarray:
    """t^{j/2} |D^j u(t)|_inf / |f|_inf per sample, shape (nsamples, j_max + 1)."""
    a = traj.dsup[0, 0] if amplitude is None else amplitude
    powers = np.arange(traj.j_max + 1) / 2.0
    return traj.times[:, None] ** powers[None, :] * traj.dsup / a


@dataclass
class FutureControlResult:
    ratio: float
    lhs: float
    rhs: float
    window: tuple[float, float]

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.ratio))


def future_control_check(traj: Trajectory, j: int, t1: float, c0: float) -> FutureControlResult:
    """Ratio of max |D^j u| on [c0/(2|f|^2), t1 + τ] to max |u|^{j+1} on [0, t1].

    τ = c0 / |u(t1)|^2, with |u(t1)| read from the nearest stored sample.
    """
    if j > traj.j_max:
        raise ValueError(f"trajectory has diagnostics only up to j = {traj.j_max}")
    times, sup_u = traj.times, traj.dsup[:, 0]
    f_sup = sup_u[0]
    start = c0 / (2.0 * f_sup ** 2)
    if t1 < start * (1 - 1e-12):
        raise ValueError(f"t1 = {t1:.6g} precedes the window start {start:.6g}")
    u1 = sup_u[int(np.argmin(np.abs(times - t1)))]
    stop = t1 + c0 / u1 ** 2
    if times[-1] < stop * (1 - 1e-12):
        raise ValueError(f"trajectory ends at {times[-1]:.6g}, before t1 + tau = {stop:.6g}")
    tol = 1e-12 * max(1.0, stop)
    in_window = (times >= start - tol) & (times <= stop + tol)
    if not in_window.any():
        raise ValueError("no stored samples inside the control window")
    lhs = float(traj.dsup[in_window, j].max())
    rhs = float((sup_u[times <= t1 + tol] ** (j + 1)).max())
    return FutureControlResult(lhs / rhs, lhs, rhs, (start, stop))


# ---------------------------------------------------------------------------
# scaling symmetry
# ---------------------------------------------------------------------------


def rescale_field(f: VectorField, lam: int) -> VectorField:
    """λ f(λx) on the λ-fold refined grid (coefficient at λk is λ f_hat(k))."""
    if isinstance(lam, bool) or not float(lam).is_integer() or lam < 1:
        raise ValueError(f"lambda must be a positive integer, got {lam!r}")
    lam = int(lam)
    grid = f.grid
    fine = make_grid(grid.dim, grid.modes * lam)
    c = fine.zeros(grid.dim)
    idx = (grid.k1d * lam) % fine.modes
    c[(slice(None),) + np.ix_(*([idx] * grid.dim))] = lam * f.coeffs
    return VectorField(fine, c)


@dataclass
class ScalingResult:
    lam: int
    norm_mismatch: np.ndarray  # (nsamples, j_max + 1) relative
    pressure_mismatch: np.ndarray  # (nsamples,) relative
    times: np.ndarray
    tolerance: float

    @property
    def max_norm_mismatch(self) -> float:
        return float(self.norm_mismatch.max())

    @property
    def max_pressure_mismatch(self) -> float:
        return float(self.pressure_mismatch.max())

    @property
    def passed(self) -> bool:
        return self.max_norm_mismatch <= self.tolerance and self.max_pressure_mismatch <= self.tolerance


def scaling_check(f: VectorField, lam: int, j_max: int = 2, *, end_time: float = 0.5,
                  dt: float | None = None, snapshot_every: int = 1,
                  tolerance: float = 1e-6) -> ScalingResult:
    """Run f to end_time and λf(λx) to end_time/λ² with step dt/λ², compare at matched samples.

    Checks |D^j u_λ(t)| = λ^{j+1} |D^j u(λ²t)| and p_λ(x, t) = λ² p(λx, λ²t).
    """
    fl = rescale_field(f, lam)
    lam = int(lam)
    dt = default_dt(f) if dt is None else dt
    base = SolverConfig(end_time=end_time, dt=dt, snapshot_every=snapshot_every, j_max=j_max)
    scaled = SolverConfig(end_time=end_time / lam ** 2, dt=dt / lam ** 2,
                          snapshot_every=snapshot_every, j_max=j_max)
    tr = simulate(f, base)
    trl = simulate(fl, scaled)
    if len(tr.times) != len(trl.times):
        raise RuntimeError("sample times of the two runs do not match")
    factors = float(lam) ** (np.arange(j_max + 1) + 1)
    ref = factors[None, :] * tr.dsup
    with np.errstate(divide="ignore", invalid="ignore"):
        norm_mis = np.where(ref > 0, np.abs(trl.dsup - ref) / ref, np.abs(trl.dsup))
    p_mis = []
    for u, ul in zip(tr.fields, trl.fields):
        p = pressure_from_velocity(u).values
        pl = pressure_from_velocity(ul).values
        expect = lam ** 2 * np.tile(p, (lam,) * f.grid.dim)
        scale = np.abs(expect).max()
        p_mis.append(np.abs(pl - expect).max() / scale if scale > 0 else np.abs(pl).max())
    return ScalingResult(lam, norm_mis, np.array(p_mis), tr.times, tolerance)


# ---------------------------------------------------------------------------
# solution bounds: amplitude sweep and collapse
# ---------------------------------------------------------------------------


@dataclass
class Verdict:
    name: str
    passed: bool
    value: float
    tolerance: float
    evidence: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.value:.6g} (tolerance {self.tolerance:.6g}; {self.evidence})"


@dataclass
class RunRecord:
    amplitude: float
    seed: int
    end_time: float
    terminated_early: bool
    reason: str
    times: list[float]
    curves: list[list[float]]  # per sample, per j
    V: list[float]
    K: list[float]


@dataclass
class EstimateReport:
    """Measured constants, per-run traces and verdicts.  Serializes to JSON."""

    constants: dict
    runs: list[RunRecord]
    K_per_amplitude: dict
    verdicts: list[Verdict]
    diagnostics: list[Verdict]
    provenance: dict
    schema_version: int = SCHEMA_VERSION

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "constants": self.constants,
            "K_per_amplitude": self.K_per_amplitude,
            "verdicts": [asdict(v) for v in self.verdicts],
            "diagnostics": [asdict(v) for v in self.diagnostics],
            "runs": [asdict(r) for r in self.runs],
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")

    def write_collapse_csv(self, path) -> None:
        j_max = len(self.runs[0].K) - 1 if self.runs else 0
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["amplitude", "seed", "t", "t_scaled"] + [f"ratio_j{j}" for j in range(j_max + 1)] + ["V_ratio"])
            for r in self.runs:
                for t, row, v in zip(r.times, r.curves, r.V):
                    w.writerow([repr(r.amplitude), r.seed, repr(t), repr(t * r.amplitude ** 2)]
                               + [repr(x) for x in row] + [repr(v)])


def config_hash(params: dict) -> str:
    blob = json.dumps(params, sort_keys=True, default=float).encode()
    return hashlib.sha256(blob).hexdigest()


def _sweep_one(args) -> RunRecord:
    amplitude, seed, c0, dim, modes, max_wavenumber, j_max, steps, snapshot_every = args
    grid = make_grid(dim, modes)
    f = make_initial_field(grid, "random_bandlimited", amplitude=amplitude, seed=seed,
                           max_wavenumber=max_wavenumber)
    T = c0 / amplitude ** 2
    traj = simulate(f, SolverConfig(end_time=T, dt=T / steps, snapshot_every=snapshot_every,
                                    j_max=max(j_max, 1), keep_fields=False))
    curves = collapse_curves(traj, amplitude)[:, : j_max + 1]
    V = compute_V(traj) / amplitude
    K = curves[1:].max(axis=0) if len(curves) > 1 else curves.max(axis=0)
    K[0] = max(K[0], curves[0, 0])
    return RunRecord(float(amplitude), int(seed), float(T), bool(traj.terminated_early), traj.reason,
                     [float(t) for t in traj.times], curves.tolist(), V.tolist(), K.tolist())


def verify_solution_bounds(amplitudes: Sequence[float] = (0.5, 1.0, 2.0, 4.0), j_max: int = 3,
                          seeds: Sequence[int] = (0, 1, 2), *, C: float, dim: int = 3,
                          modes: int = 32, max_wavenumber: int = 4, steps: int = 400,
                          snapshot_every: int = 4, collapse_factor: float = 2.0,
                          workers: int = 1) -> EstimateReport:
    """Simulate every (amplitude, seed) to T = c0/A^2 with c0 = 1/(16 C^4) and test the bounds.

    K_j per amplitude is the maximum over seeds and t in (0, T] of
    t^{j/2}|D^j u(t)|_inf / A.  Collapse holds when each of these lies within
    ``collapse_factor`` of the median over amplitudes.
    """
    if not C > 0:
        raise ValueError("C must be positive")
    if any(not a > 0 for a in amplitudes):
        raise ValueError("amplitudes must be positive")
    c0 = existence_constant(C)
    jobs = sorted((float(a), int(s)) for a in amplitudes for s in seeds)
    job_args = [(a, s, c0, dim, modes, max_wavenumber, j_max, steps, snapshot_every) for a, s in jobs]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_sweep_one, job_args))
    else:
        runs = [_sweep_one(a) for a in job_args]
    runs.sort(key=lambda r: (r.seed, r.amplitude))

    amps = sorted({r.amplitude for r in runs})
    K_amp = {repr(a): np.max([r.K for r in runs if r.amplitude == a], axis=0).tolist() for a in amps}
    K_table = np.array([K_amp[repr(a)] for a in amps])
    median = np.median(K_table, axis=0)

    verdicts = []
    early = [f"A={r.amplitude:g} seed={r.seed}: {r.reason}" for r in runs if r.terminated_early]
    verdicts.append(Verdict("no_early_termination", not early, float(len(early)), 0.0,
                            "; ".join(early) or f"{len(runs)} runs reached T = c0/A^2"))
    k0 = float(K_table[:, 0].max())
    verdicts.append(Verdict("K0_at_most_2", k0 <= 2.0, k0, 2.0, "max over runs of |u(t)|/|f|"))
    for j in range(j_max + 1):
        spread = K_table[:, j] / median[j]
        worst = float(max(spread.max(), 1.0 / spread.min()))
        verdicts.append(Verdict(f"collapse_j{j}", worst <= collapse_factor, worst, collapse_factor,
                                "per-amplitude K_j / median: " + ", ".join(f"{x:.4g}" for x in spread)))
    v_max = float(max(max(r.V) for r in runs))
    diagnostics = [Verdict("V_below_2C", v_max < 2 * C, v_max, 2 * C,
                           "max over runs of (|u| + t^{1/2}|Du|)/|f| against 2C")]

    params = {"amplitudes": amps, "seeds": sorted(set(int(s) for s in seeds)), "j_max": j_max,
              "C": C, "dim": dim, "modes": modes, "max_wavenumber": max_wavenumber,
              "steps": steps, "snapshot_every": snapshot_every, "collapse_factor": collapse_factor}
    return EstimateReport(
        constants={"C": C, "c0": c0, "K": K_table.max(axis=0).tolist(), "K_median": median.tolist()},
        runs=runs, K_per_amplitude=K_amp, verdicts=verdicts, diagnostics=diagnostics,
        provenance={"config_hash": config_hash(params), "seeds": params["seeds"], "parameters": params},
    )


# ---------------------------------------------------------------------------
# kernel duality, g-system window, Picard cross-check
# ---------------------------------------------------------------------------


@dataclass
class KernelDualityResult:
    max_relative_error: float
    per_dim: dict
    points: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_relative_error <= self.tolerance


def kernel_sample_points(dim: int, count: int) -> np.ndarray:
    """``count`` points along a line that winds irrationally around the torus."""
    direction = np.array([1.0, 0.6180339887498949, 0.3819660112501051])[:dim]
    s = 2 * np.pi * np.arange(count) / count
    return np.mod(s[:, None] * direction[None, :] + 0.1, 2 * np.pi)


def verify_kernel_duality(dims: Sequence[int] = (1, 2, 3), x_count: int = 20, t_count: int = 20,
                          t_min: float = 0.05, t_max: float = 5.0, *,
                          config: KernelEvalConfig | None = None,
                          tolerance: float = 1e-10) -> KernelDualityResult:
    """Relative gap between the Fourier-series and image-sum kernels on an (x, t) grid.

    Both representations are always evaluated; ``config.representation`` is
    irrelevant here, its truncation settings are not.
    """
    cfg = config or KernelEvalConfig()
    t_grid = np.geomspace(t_min, t_max, t_count)
    per_dim = {}
    for n in dims:
        worst = 0.0
        for x in kernel_sample_points(n, x_count):
            for t in t_grid:
                a = heat_kernel_spectral(x, t, cfg).value
                b = heat_kernel_poisson(x, t, cfg).value
                worst = max(worst, abs(a - b) / abs(b))
        per_dim[str(n)] = worst
    return KernelDualityResult(max(per_dim.values()), per_dim, len(dims) * x_count * t_count, tolerance)


@dataclass
class GSystemWindowResult:
    c0: float
    end_time: float
    max_ratio: float  # max_t |u(t)|_inf / |f|_inf
    trajectory: Trajectory

    @property
    def passed(self) -> bool:
        return not self.trajectory.terminated_early and self.max_ratio < 2.0


def verify_g_system_window(f: VectorField, gspec: GSpec, C: float, *, steps: int = 50,
                           snapshot_every: int = 1) -> GSystemWindowResult:
    """Run the g-system to c0/|f|^2 with c0 = 1/(16 C^2 C_g^2) and test |u| < 2|f|."""
    f_sup = sup_norm(f)
    c0 = g_system_constant(C, gspec.c_g)
    T = c0 / f_sup ** 2
    traj = simulate_g_system(f, gspec, SolverConfig(end_time=T, dt=T / steps, j_max=1,
                                                    snapshot_every=snapshot_every, keep_fields=False))
    return GSystemWindowResult(c0, T, float(traj.sup_u.max() / f_sup), traj)


@dataclass
class PicardCrosscheck:
    difference: float
    increments: list[float]
    duhamel_cadences: list[int]
    duhamel_residuals: list[float]
    duhamel_orders: list[float]
    tolerance: float

    @property
    def contracting(self) -> bool:
        inc = self.increments
        return all(b < a for a, b in zip(inc, inc[1:]))

    @property
    def passed(self) -> bool:
        orders_ok = all(o >= 3.5 for o in self.duhamel_orders)
        return self.difference <= self.tolerance and self.contracting and orders_ok


def picard_crosscheck(f: VectorField, t: float = 0.01, *, iterations: int = 6,
                      quadrature_nodes: int = 8, dt: float = 1e-3, tolerance: float = 1e-8,
                      duhamel_end: float = 0.2, duhamel_dt: float = 1.25e-3,
                      cadences: Sequence[int] = (8, 4, 2, 1)) -> PicardCrosscheck:
    """Compare picard_solve with simulate at t; measure the Duhamel residual under cadence refinement.

    The residual is computed on one fine trajectory subsampled at each
    cadence, so only the quadrature changes between entries.
    """
    pic = picard_solve(f, t, iterations, quadrature_nodes)
    sim = simulate(f, SolverConfig(end_time=t, dt=dt, j_max=0))
    diff = sup_norm(pic.u - sim.final)

    fine = simulate(f, SolverConfig(end_time=duhamel_end, dt=duhamel_dt, j_max=0))
    residuals = []
    for c in cadences:
        sub = Trajectory(times=fine.times[::c], fields=fine.fields[::c], dsup=fine.dsup[::c],
                         divergence_residual=fine.divergence_residual[::c], energy=fine.energy[::c],
                         dt=fine.dt, initial=fine.initial, rhs=fine.rhs)
        residuals.append(duhamel_residual(sub).residual)
    orders = [math.log(a / b) / math.log(ca / cb)
              for (a, ca), (b, cb) in zip(zip(residuals, cadences), zip(residuals[1:], cadences[1:]))]
    return PicardCrosscheck(diff, list(pic.increments), list(cadences), residuals, orders, tolerance)
