"""Time evolution of u_t = Δu - P(u.∇u) and of u_t = Δu + D_i P g(u).

The stepper is the integrating-factor (Lawson) RK4 scheme: the heat part is
applied exactly through e^{hΔ}, the projected nonlinearity by classical RK4.
A Picard iteration on the mild (Duhamel) formulation is provided as an
independent route to the same solution.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .operators import _leray_array, advection_array, heat_factor, leray_project
from .spectral import (
    TorusGrid,
    VectorField,
    divergence,
    dj_sup_norms,
    energy,
    forward_array,
    inverse_array,
    sup_norm,
    sup_norm_physical,
)

Rhs = Callable[[np.ndarray], np.ndarray]


class BlowUpError(RuntimeError):
    pass


class PicardDivergenceError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# quadratic nonlinearities
# ---------------------------------------------------------------------------


def _quadratic_norm(a: np.ndarray, *, jacobian: bool = False, seed: int = 0) -> float:
    """max over |u| = 1 of |q(u)| (or of ||q'(u)||_2), q(u)_m = a[m,j,l] u_j u_l.

    Dense sphere sampling followed by local refinement of the best starts.
    """
    n = a.shape[-1]
    sym = 0.5 * (a + np.swapaxes(a, 1, 2))

    def value(u):
        u = u / np.linalg.norm(u)
        if jacobian:
            J = 2.0 * np.einsum("mjl,l->mj", sym, u)
            return np.linalg.norm(J, 2)
        return np.linalg.norm(np.einsum("mjl,j,l->m", sym, u, u))

    rng = np.random.default_rng(seed)
    starts = rng.standard_normal((4000, n))
    starts = np.vstack([starts, np.eye(n), -np.eye(n)])
    vals = np.array([value(u) for u in starts])
    best = float(vals.max())
    for u0 in starts[np.argsort(vals)[-8:]]:
        res = optimize.minimize(lambda u: -value(u), u0, method="Nelder-Mead",
                                options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000})
        best = max(best, -float(res.fun))
    return best


@dataclass
class GSpec:
    """Quadratic nonlinearity for u_t = Δu + sum_i D_i P g^(i)(u).

    ``tensor[i, m, j, l]`` gives g^(i)_m(u) = sum_jl tensor[i,m,j,l] u_j u_l.
    A single-axis system (one D_i prefix) has only one nonzero ``i`` slice;
    build it with :meth:`single_axis`.  ``c_g`` is recomputed from the
    tensor: it bounds both |g(u)| / |u|^2 and |g_u(u)| / |u|.
    """

    tensor: np.ndarray
    c_g: float = field(init=False)
    c_quadratic: float = field(init=False)
    c_jacobian: float = field(init=False)

    def __post_init__(self):
        self.tensor = np.asarray(self.tensor, dtype=float)
        n = self.tensor.shape[0]
        if self.tensor.shape != (n, n, n, n) or n not in (2, 3):
            raise ValueError(f"tensor must have shape (n, n, n, n), n in {{2, 3}}; got {self.tensor.shape}")
        active = [i for i in range(n) if np.any(self.tensor[i])]
        self.c_quadratic = sum(_quadratic_norm(self.tensor[i]) for i in active)
        self.c_jacobian = sum(_quadratic_norm(self.tensor[i], jacobian=True) for i in active)
        self.c_g = max(self.c_quadratic, self.c_jacobian)

    @property
    def dim(self) -> int:
        return self.tensor.shape[0]

    @property
    def axes(self) -> list[int]:
        return [i for i in range(self.dim) if np.any(self.tensor[i])]

    @classmethod
    def single_axis(cls, axis: int, a: np.ndarray) -> "GSpec":
        a = np.asarray(a, dtype=float)
        n = a.shape[0]
        t = np.zeros((n,) + a.shape)
        t[axis] = a
        return cls(t)

    @classmethod
    def navier_stokes(cls, dim: int) -> "GSpec":
        """g^(i)(u) = -u_i u, so that sum_i D_i P g^(i) = -P(u.∇u) when div u = 0."""
        t = np.zeros((dim,) * 4)
        for i in range(dim):
            for m in range(dim):
                t[i, m, i, m] -= 0.5
                t[i, m, m, i] -= 0.5
        return cls(t)

    @classmethod
    def zero(cls, dim: int) -> "GSpec":
        return cls(np.zeros((dim,) * 4))


def g_system_array(grid: TorusGrid, gspec: GSpec, uc: np.ndarray,
                   dealiased: bool = True) -> np.ndarray:
    """Coefficients of sum_i D_i P g^(i)(u)."""
    n = grid.dim
    out = np.zeros((n,) + grid.shape, dtype=complex)
    axes = gspec.axes
    if not axes:
        return out
    phys = inverse_array(grid, uc)
    pairs = [(j, l) for j in range(n) for l in range(j, n)]
    hat = forward_array(grid, np.stack([phys[j] * phys[l] for j, l in pairs]))
    if dealiased:
        hat *= grid.dealias_mask
    sym = 0.5 * (gspec.tensor + np.swapaxes(gspec.tensor, 2, 3))
    for i in axes:
        ki = 1j * grid.odd_wavevector[i]
        for m in range(n):
            acc = 0
            for p, (j, l) in enumerate(pairs):
                w = sym[i, m, j, l] * (1.0 if j == l else 2.0)
                if w:
                    acc = acc + w * hat[p]
            if not isinstance(acc, int):
                out[m] += ki * acc
    _leray_array(grid, out)
    return out


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------


def taylor_green(grid: TorusGrid) -> VectorField:
    X = grid.points
    if grid.dim == 2:
        vals = np.stack([np.cos(X[0]) * np.sin(X[1]), -np.sin(X[0]) * np.cos(X[1])])
    else:
        vals = np.stack([np.cos(X[0]) * np.sin(X[1]) * np.sin(X[2]),
                         -np.sin(X[0]) * np.cos(X[1]) * np.sin(X[2]),
                         np.zeros(grid.shape)])
    return VectorField.from_physical(grid, vals)


def random_bandlimited(grid: TorusGrid, seed: int, max_wavenumber: int,
                       solenoidal: bool = True) -> VectorField:
    """Real random field with Gaussian coefficients on 0 < |k|_inf <= max_wavenumber."""
    if max_wavenumber < 1 or max_wavenumber > grid.modes // 3:
        raise ValueError(f"max_wavenumber must lie in [1, M/3] = [1, {grid.modes // 3}]")
    rng = np.random.default_rng(seed)
    n = grid.dim
    K = max_wavenumber
    cube = (n,) + (2 * K + 1,) * n
    draw = rng.standard_normal(cube) + 1j * rng.standard_normal(cube)
    # place lattice points -K..K at FFT indices; same field on every grid
    idx = np.arange(-K, K + 1) % grid.modes
    c = np.zeros((n,) + grid.shape, dtype=complex)
    c[(slice(None),) + np.ix_(*([idx] * n))] = draw
    c[(slice(None),) + (0,) * n] = 0.0
    # keep the Hermitian part so the field is real
    c = forward_array(grid, inverse_array(grid, c))
    u = VectorField(grid, c)
    return leray_project(u) if solenoidal else u


def scale_to_amplitude(u: VectorField, amplitude: float) -> VectorField:
    if not amplitude > 0:
        raise ValueError(f"amplitude must be positive, got {amplitude}")
    s = sup_norm(u)
    if s == 0:
        raise ValueError("cannot rescale the zero field")
    return u * (amplitude / s)


def make_initial_field(grid: TorusGrid, kind: str = "taylor_green", *, amplitude: float = 1.0,
                       seed: int = 0, max_wavenumber: int = 4) -> VectorField:
    """Divergence-free, band-limited real initial data with sampled sup-norm ``amplitude``."""
    if not amplitude > 0:
        raise ValueError(f"amplitude must be positive, got {amplitude}")
    if kind == "taylor_green":
        u = taylor_green(grid)
    elif kind == "random_bandlimited":
        u = random_bandlimited(grid, seed, max_wavenumber)
    else:
        raise ValueError(f"unknown initial field kind {kind!r}")
    return scale_to_amplitude(u, amplitude)


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------


@dataclass
class SolverConfig:
    end_time: float
    dt: float | None = None
    order: int = 4
    dealias: bool = True
    blowup_threshold: float | None = None
    blowup_factor: float = 1e4
    snapshot_every: int = 1
    j_max: int = 2
    keep_fields: bool = True
    nonlinear: bool = True
    form: str = "advective"

    def __post_init__(self):
        if not self.end_time > 0:
            raise ValueError("end_time must be positive")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.order != 4:
            raise ValueError("only the order-4 integrating-factor scheme is available")
        if self.blowup_threshold is not None and not self.blowup_threshold > 0:
            raise ValueError("blowup_threshold must be positive")
        if not self.blowup_factor > 0:
            raise ValueError("blowup_factor must be positive")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be >= 1")
        if self.j_max < 0:
            raise ValueError("j_max must be >= 0")
        if self.form not in ("advective", "divergence"):
            raise ValueError("form must be 'advective' or 'divergence'")


def default_dt(f: VectorField) -> float:
    """0.25 / (max|k|^2 + kmax * max|u_hat|) over the retained (dealiased) modes."""
    grid = f.grid
    ksq = grid.ksq[grid.dealias_mask]
    kmax = math.sqrt(ksq.max())
    return 0.25 / (ksq.max() + kmax * float(np.abs(f.coeffs).max()))


@dataclass
class SolverState:
    t: float
    u: VectorField


class IFRK4:
    """Integrating-factor RK4 for w' = Lw + N(w) with diagonal L = -|k|^2."""

    def __init__(self, grid: TorusGrid, dt: float, rhs: Rhs):
        self.grid = grid
        self.dt = dt
        self.rhs = rhs
        self.half = heat_factor(grid, dt / 2)
        self.full = self.half * self.half

    def advance(self, c: np.ndarray) -> np.ndarray:
        h, E, E2, N = self.dt, self.half, self.full, self.rhs
        a = h * N(c)
        b = h * N(E * (c + 0.5 * a))
        cc = h * N(E * c + 0.5 * b)
        d = h * N(E2 * c + E * cc)
        return E2 * c + (E2 * a + 2.0 * E * (b + cc) + d) / 6.0


def navier_stokes_rhs(grid: TorusGrid, dealiased: bool = True, form: str = "advective") -> Rhs:
    def rhs(c):
        return advection_array(grid, c, form, dealiased)
    return rhs


def step(state: SolverState, dt: float, rhs: Rhs | None = None,
         blowup_threshold: float = math.inf) -> SolverState:
    """One IF-RK4 step of the Navier-Stokes system (or of ``rhs`` if given)."""
    grid = state.u.grid
    rhs = rhs or navier_stokes_rhs(grid)
    u = VectorField(grid, IFRK4(grid, dt, rhs).advance(state.u.coeffs))
    s = sup_norm(u)
    if not s <= blowup_threshold:
        raise BlowUpError(f"|u|_inf = {s:.6g} exceeds {blowup_threshold:.6g} at t = {state.t + dt:.6g}")
    return SolverState(state.t + dt, u)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    times: np.ndarray
    fields: list[VectorField] | None
    dsup: np.ndarray  # (nsamples, j_max + 1): |D^j u|_inf per sample
    divergence_residual: np.ndarray
    energy: np.ndarray
    dt: float
    initial: VectorField
    rhs: Rhs | None = field(default=None, repr=False)
    terminated_early: bool = False
    reason: str = ""

    @property
    def sup_u(self) -> np.ndarray:
        return self.dsup[:, 0]

    @property
    def j_max(self) -> int:
        return self.dsup.shape[1] - 1

    @property
    def final(self) -> VectorField:
        if not self.fields:
            raise ValueError("trajectory was run with keep_fields=False")
        return self.fields[-1]

    def write_csv(self, path) -> None:
        cols = ["t", "sup_u"] + [f"d{j}_sup" for j in range(1, self.j_max + 1)]
        cols += ["divergence_residual", "energy"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for m, t in enumerate(self.times):
                row = [t] + list(self.dsup[m]) + [self.divergence_residual[m], self.energy[m]]
                w.writerow([repr(float(v)) for v in row])


def _integrate(f: VectorField, config: SolverConfig, rhs: Rhs) -> Trajectory:
    grid = f.grid
    dt = config.dt if config.dt is not None else default_dt(f)
    nsteps = max(1, int(math.ceil(config.end_time / dt - 1e-9)))
    dt = config.end_time / nsteps
    f_sup = sup_norm(f)
    B = config.blowup_threshold
    if B is None:
        B = config.blowup_factor * f_sup if f_sup > 0 else math.inf
    stepper = IFRK4(grid, dt, rhs)

    times, fields, dsup, divres, en = [], [], [], [], []

    def record(t, c):
        u = VectorField(grid, c)
        times.append(t)
        if config.keep_fields:
            fields.append(u.copy())
        dsup.append(dj_sup_norms(u, config.j_max))
        divres.append(sup_norm(divergence(u)))
        en.append(energy(u))

    c = f.coeffs.copy()
    record(0.0, c)
    terminated, reason = False, ""
    for n in range(1, nsteps + 1):
        c = stepper.advance(c)
        t = n * dt
        s = sup_norm_physical(inverse_array(grid, c))
        if not np.isfinite(s):
            terminated, reason = True, f"non-finite field at t={t:.6g}"
        elif s > B:
            terminated, reason = True, f"blow-up: |u|_inf={s:.6g} > {B:.6g} at t={t:.6g}"
        if terminated or n % config.snapshot_every == 0 or n == nsteps:
            record(t, c)
        if terminated:
            break
    return Trajectory(
        times=np.asarray(times), fields=fields if config.keep_fields else None,
        dsup=np.asarray(dsup), divergence_residual=np.asarray(divres), energy=np.asarray(en),
        dt=dt, initial=f, rhs=rhs, terminated_early=terminated, reason=reason,
    )


def _zero_rhs(c: np.ndarray) -> np.ndarray:
    return np.zeros_like(c)


def simulate(f: VectorField, config: SolverConfig) -> Trajectory:
    """Evolve the projected Navier-Stokes system from ``f`` to ``config.end_time``."""
    rhs = navier_stokes_rhs(f.grid, config.dealias, config.form) if config.nonlinear else _zero_rhs
    return _integrate(f, config, rhs)


def simulate_g_system(f: VectorField, gspec: GSpec, config: SolverConfig) -> Trajectory:
    """Evolve u_t = Δu + sum_i D_i P g^(i)(u); no extra projection of the state."""
    if gspec.dim != f.grid.dim:
        raise ValueError("GSpec dimension does not match the grid")
    grid = f.grid

    def rhs(c):
        return g_system_array(grid, gspec, c, config.dealias)

    return _integrate(f, config, rhs if config.nonlinear else _zero_rhs)


# ---------------------------------------------------------------------------
# Picard iteration on the mild formulation
# ---------------------------------------------------------------------------


@dataclass
class PicardResult:
    u: VectorField
    increments: list[float]  # sup-norm of u^(m+1) - u^(m) at the final time
    nodes: np.ndarray


def _lagrange_basis(nodes: np.ndarray, s: np.ndarray) -> np.ndarray:
    """L[p, q] = l_p(s_q) for the interpolant through ``nodes``."""
    L = np.ones((len(nodes), len(s)))
    for p, xp in enumerate(nodes):
        for r, xr in enumerate(nodes):
            if r != p:
                L[p] *= (s - xr) / (xp - xr)
    return L


def _duhamel_weights(nodes: np.ndarray, targets: np.ndarray, lam: np.ndarray,
                     inner: int = 48) -> np.ndarray:
    """W[q, p, r] = int_0^{targets[q]} exp(-lam[r](targets[q]-s)) l_p(s) ds."""
    x, w = np.polynomial.legendre.leggauss(inner)
    W = np.empty((len(targets), len(nodes), len(lam)))
    for q, T in enumerate(targets):
        s = 0.5 * T * (x + 1.0)
        ws = 0.5 * T * w
        L = _lagrange_basis(nodes, s)                       # (p, inner)
        ker = np.exp(-np.outer(T - s, lam)) * ws[:, None]   # (inner, r)
        W[q] = L @ ker
    return W


def picard_solve(f: VectorField, t: float, iterations: int = 6, quadrature_nodes: int = 8,
                 rhs: Rhs | None = None, check_contraction: bool = True) -> PicardResult:
    """Fixed-point iteration of u = e^{tΔ}f + int_0^t e^{(t-s)Δ} N(u(s)) ds.

    Iterates live on Gauss-Legendre nodes in (0, t); the time integrals use
    the polynomial interpolant of N through those nodes against the exact
    heat weights.  The starting iterate is the heat flow e^{sΔ}f.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if not t > 0:
        raise ValueError("t must be positive")
    grid = f.grid
    rhs = rhs or navier_stokes_rhs(grid)
    x, _ = np.polynomial.legendre.leggauss(quadrature_nodes)
    nodes = 0.5 * t * (x + 1.0)
    targets = np.append(nodes, t)

    ksq_int = np.rint(grid.ksq).astype(np.int64)
    lam, inverse = np.unique(ksq_int, return_inverse=True)
    inverse = inverse.reshape(grid.shape)
    W = _duhamel_weights(nodes, targets, lam.astype(float))

    free = np.stack([f.coeffs * heat_factor(grid, s) for s in targets])
    U = free[:-1].copy()
    final_prev = free[-1]
    increments: list[float] = []
    for _ in range(iterations):
        N = np.stack([rhs(U[p]) for p in range(quadrature_nodes)])
        new = free.copy()
        for q in range(len(targets)):
            Wq = W[q][:, inverse]  # (p, M, ..., M)
            new[q] += np.einsum("p...,pc...->c...", Wq, N)
        U = new[:-1]
        inc = sup_norm(VectorField(grid, new[-1] - final_prev))
        final_prev = new[-1]
        if check_contraction and len(increments) >= 2 and inc > increments[-1] > increments[-2]:
            raise PicardDivergenceError(
                f"Picard increments growing: {increments[-2]:.3e}, {increments[-1]:.3e}, {inc:.3e}")
        increments.append(inc)
    return PicardResult(VectorField(grid, final_prev), increments, nodes)


# ---------------------------------------------------------------------------
# Duhamel residual
# ---------------------------------------------------------------------------


def simpson_weights(npts: int, h: float) -> np.ndarray:
    if npts < 3 or npts % 2 == 0:
        raise ValueError("composite Simpson needs an odd number (>= 3) of samples")
    w = np.ones(npts)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * h / 3.0


@dataclass
class DuhamelResidual:
    residual: float            # max over checked sample times
    times: np.ndarray
    per_time: np.ndarray


def duhamel_residual(traj: Trajectory, rhs: Rhs | None = None) -> DuhamelResidual:
    """Sup-norm mismatch between stored samples and the Duhamel right-hand side.

    At every even sample index m >= 2 the integral over [0, t_m] is done by
    composite Simpson on the stored samples, so the check is independent of
    the time stepper.
    """
    if not traj.fields or len(traj.fields) < 3:
        raise ValueError("insufficient samples: need at least 3 stored fields")
    t = traj.times
    h = np.diff(t)
    if not np.allclose(h, h[0], rtol=1e-9, atol=0):
        raise ValueError("insufficient samples: Simpson needs a uniform snapshot cadence")
    h0 = float(h[0])
    grid = traj.initial.grid
    rhs = rhs or traj.rhs or navier_stokes_rhs(grid)
    f = traj.fields[0].coeffs
    N = [rhs(u.coeffs) for u in traj.fields]
    checked, res = [], []
    for m in range(2, len(t), 2):
        w = simpson_weights(m + 1, h0)
        integral = sum(w[p] * heat_factor(grid, t[m] - t[p]) * N[p] for p in range(m + 1))
        rhs_m = heat_factor(grid, t[m]) * f + integral
        res.append(sup_norm(VectorField(grid, traj.fields[m].coeffs - rhs_m)))
        checked.append(t[m])
    res = np.asarray(res)
    return DuhamelResidual(float(res.max()), np.asarray(checked), res)

