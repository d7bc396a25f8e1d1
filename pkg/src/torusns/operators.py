"""Fourier multipliers: heat semigroup, periodic heat kernel, Riesz transforms,
Leray projection, pressure recovery and the projected advection term.

All odd-symbol multipliers (Riesz, Leray, gradient, divergence) use the
wavevector with its Nyquist entries zeroed, so that they map real fields to
real fields and agree exactly with :func:`spectral.divergence`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import mpmath
import numpy as np

from .spectral import (
    RealField,
    SpectralField,
    TorusGrid,
    VectorField,
    divergence,
    forward_array,
    inverse_array,
    sup_norm,
)

# ---------------------------------------------------------------------------
# heat semigroup
# ---------------------------------------------------------------------------


def heat_factor(grid: TorusGrid, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError(f"heat semigroup needs t >= 0 (backward heat flow is ill-posed), got {t}")
    return np.exp(-grid.ksq * t)


def apply_heat_semigroup(f, t: float):
    """e^{tΔ} applied to a SpectralField or VectorField."""
    return type(f)(f.grid, f.coeffs * heat_factor(f.grid, t))


# ---------------------------------------------------------------------------
# periodic heat kernel
# ---------------------------------------------------------------------------

REPRESENTATIONS = ("spectral", "poisson", "auto")


@dataclass(frozen=True)
class KernelEvalConfig:
    """How to truncate the lattice sums of the periodic heat kernel.

    ``truncation_radius=None`` picks the smallest cube radius whose tail bound
    is below ``rel_tol`` times the computed value.
    """

    truncation_radius: int | None = None
    representation: str = "auto"
    crossover_time: float = 0.5
    rel_tol: float = 1e-14

    def __post_init__(self):
        if self.truncation_radius is not None and self.truncation_radius < 1:
            raise ValueError("truncation_radius must be >= 1")
        if self.representation not in REPRESENTATIONS:
            raise ValueError(f"representation must be one of {REPRESENTATIONS}")
        if not self.crossover_time > 0:
            raise ValueError("crossover_time must be positive")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")


class KernelValue(NamedTuple):
    value: float
    tail_bound: float
    radius: int
    representation: str


def _as_point(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


def _check_t(t: float) -> None:
    if not t > 0:
        raise ValueError(f"heat kernel needs t > 0, got {t}")


def _spectral_1d(x: float, t: float, R: int, dps: int) -> tuple[mpmath.mpf, mpmath.mpf]:
    # 1 + 2 sum cos(kx) e^{-k^2 t}; alternating cancellation at small t needs
    # extra working precision, hence mpmath.
    with mpmath.workdps(dps):
        xm, tm = mpmath.mpf(x), mpmath.mpf(t)
        s = mpmath.mpf(1)
        a = mpmath.mpf(1)
        for k in range(1, R + 1):
            w = mpmath.exp(-k * k * tm)
            s += 2 * w * mpmath.cos(k * xm)
            a += 2 * w
        return +s, +a


def _spectral_tail_1d(t: float, R: int) -> float:
    """Bound on sum_{|k|>R} e^{-k^2 t}."""
    return 2.0 * math.exp(-((R + 1) ** 2) * t) / -math.expm1(-(2 * R + 3) * t)


def _product_tail(abs_sums: list[float], tail1: float) -> float:
    """prod(a + tail1) - prod(a) without cancellation."""
    logs = sum(math.log1p(tail1 / a) for a in abs_sums)
    return math.prod(abs_sums) * math.expm1(logs)


def _spectral_eval(x: np.ndarray, t: float, R: int) -> tuple[float, float]:
    dps = 25 + int(math.ceil(math.pi ** 2 / (4.0 * t * math.log(10.0))))
    vals, abss = [], []
    for xi in x:
        v, a = _spectral_1d(float(xi), t, R, dps)
        vals.append(v)
        abss.append(float(a))
    with mpmath.workdps(dps):
        value = float(mpmath.fprod(vals))
    return value, _product_tail(abss, _spectral_tail_1d(t, R))


def _poisson_eval(x: np.ndarray, t: float, R: int) -> tuple[float, float]:
    ks = np.arange(-R, R + 1)
    pref = math.sqrt(math.pi / t)
    vals, abss = [], []
    for xi in x:
        xr = xi - 2.0 * math.pi * round(xi / (2.0 * math.pi))
        s = pref * float(np.sum(np.exp(-((xr + 2.0 * math.pi * ks) ** 2) / (4.0 * t))))
        vals.append(s)
        abss.append(s)
    ratio = math.exp(-(math.pi ** 2) * 8 * (R + 1) / (4.0 * t))
    tail1 = 2.0 * pref * math.exp(-(math.pi ** 2) * (2 * R + 1) ** 2 / (4.0 * t)) / (1.0 - ratio)
    return math.prod(vals), _product_tail(abss, tail1)


def _evaluate(kind: str, x, t: float, config: KernelEvalConfig) -> KernelValue:
    _check_t(t)
    pt = _as_point(x)
    fn = _spectral_eval if kind == "spectral" else _poisson_eval
    if config.truncation_radius is not None:
        R = config.truncation_radius
        value, tail = fn(pt, t, R)
        return KernelValue(value, tail, R, kind)
    # geometric convergence: start near the radius an absolute tolerance needs
    R = max(1, int(math.sqrt(-math.log(config.rel_tol) / t))) if kind == "spectral" else 1
    while True:
        value, tail = fn(pt, t, R)
        if tail <= config.rel_tol * abs(value) or R >= 4096:
            return KernelValue(value, tail, R, kind)
        R = R + max(1, R // 2)


def heat_kernel_spectral(x, t: float, config: KernelEvalConfig = KernelEvalConfig()) -> KernelValue:
    """theta(x, t) = sum_k e^{-|k|^2 t} e^{ik.x} over the cube |k|_inf <= R.

    The cube sum factorizes into one-dimensional sums, which are evaluated
    in extended precision.  ``x`` is a point in R^n, n = len(x) (scalars are
    one-dimensional).
    """
    return _evaluate("spectral", x, t, config)


def heat_kernel_poisson(x, t: float, config: KernelEvalConfig = KernelEvalConfig()) -> KernelValue:
    """theta(x, t) as the Gaussian image sum (pi/t)^{n/2} sum_k exp(-|x+2πk|^2/4t)."""
    return _evaluate("poisson", x, t, config)


def heat_kernel(x, t: float, config: KernelEvalConfig = KernelEvalConfig()) -> KernelValue:
    kind = config.representation
    if kind == "auto":
        kind = "poisson" if t < config.crossover_time else "spectral"
    return _evaluate(kind, x, t, config)


# ---------------------------------------------------------------------------
# Riesz transforms and the Leray projector
# ---------------------------------------------------------------------------


@lru_cache(maxsize=16)
def _odd_ksq(grid: TorusGrid) -> tuple[np.ndarray, np.ndarray]:
    """|k~|^2 and its safe inverse (0 where k~ = 0)."""
    ksq = sum(np.broadcast_to(k * k, grid.shape) for k in grid.odd_wavevector)
    inv = np.zeros(grid.shape)
    np.divide(1.0, ksq, out=inv, where=ksq > 0)
    return ksq, inv


def riesz_transform(f: SpectralField, axis: int) -> SpectralField:
    """R_i = (-Δ)^{-1/2} D_i, symbol i k_i / |k|; the mean mode maps to 0."""
    grid = f.grid
    ksq, inv = _odd_ksq(grid)
    sym = 1j * grid.odd_wavevector[axis] * np.sqrt(inv)
    return SpectralField(grid, f.coeffs * sym)


def leray_project(u: VectorField) -> VectorField:
    """Apply δ_ij - k_i k_j / |k|^2 per mode; identity on the mean mode."""
    grid = u.grid
    _, inv = _odd_ksq(grid)
    k = grid.odd_wavevector
    kdotu = sum(k[i] * u.coeffs[i] for i in range(grid.dim))
    kdotu = kdotu * inv
    out = np.stack([u.coeffs[i] - k[i] * kdotu for i in range(grid.dim)])
    return VectorField(grid, out)


def _leray_array(grid: TorusGrid, c: np.ndarray) -> np.ndarray:
    _, inv = _odd_ksq(grid)
    k = grid.odd_wavevector
    kdotu = sum(k[i] * c[i] for i in range(grid.dim)) * inv
    for i in range(grid.dim):
        c[i] -= k[i] * kdotu
    return c


# ---------------------------------------------------------------------------
# pressure and the nonlinear term
# ---------------------------------------------------------------------------


def _pair_products(u: VectorField) -> dict[tuple[int, int], np.ndarray]:
    """Dealiased coefficients of u_i u_j for i <= j."""
    grid = u.grid
    phys = inverse_array(grid, u.coeffs)
    pairs = [(i, j) for i in range(grid.dim) for j in range(i, grid.dim)]
    prods = np.stack([phys[i] * phys[j] for i, j in pairs])
    hat = forward_array(grid, prods) * grid.dealias_mask
    return {p: hat[n] for n, p in enumerate(pairs)}


def _check_divergence_free(u: VectorField, tol: float = 1e-8) -> None:
    res = sup_norm(divergence(u))
    scale = max(sup_norm(u), 1.0)
    if res > tol * scale:
        warnings.warn(f"velocity is not divergence-free (|div u| = {res:.3e})", RuntimeWarning)


def pressure_from_velocity(u: VectorField) -> RealField:
    """Zero-mean p with Δp = -div((u.∇)u), i.e. p_hat = -k_i k_j (u_i u_j)^/|k|^2."""
    grid = u.grid
    _check_divergence_free(u)
    _, inv = _odd_ksq(grid)
    k = grid.odd_wavevector
    uu = _pair_products(u)
    acc = np.zeros(grid.shape, dtype=complex)
    for (i, j), c in uu.items():
        w = 1.0 if i == j else 2.0
        acc += w * k[i] * k[j] * c
    return RealField(grid, inverse_array(grid, -acc * inv))


def pressure_from_riesz(u: VectorField) -> RealField:
    """p = sum_ij R_i R_j (u_i u_j), built by composing Riesz transforms."""
    grid = u.grid
    uu = _pair_products(u)
    acc = SpectralField(grid, np.zeros(grid.shape, dtype=complex))
    for i in range(grid.dim):
        for j in range(grid.dim):
            c = uu[(min(i, j), max(i, j))]
            acc = acc + riesz_transform(riesz_transform(SpectralField(grid, c), j), i)
    return RealField(grid, inverse_array(grid, acc.coeffs))


def advection_array(grid: TorusGrid, uc: np.ndarray, form: str = "advective",
                    dealiased: bool = True) -> np.ndarray:
    """Coefficients of -P((u.∇)u) from velocity coefficients ``uc`` (n, M, ...)."""
    n = grid.dim
    k = grid.odd_wavevector
    if form == "advective":
        grads = np.stack([1j * k[i] * uc for i in range(n)])  # (axis, comp, ...)
        phys = inverse_array(grid, np.concatenate([uc, grads.reshape((n * n,) + grid.shape)]))
        u = phys[:n]
        du = phys[n:].reshape((n, n) + grid.shape)
        adv = np.einsum("i...,ij...->j...", u, du)
        out = forward_array(grid, adv)
    elif form == "divergence":
        phys = inverse_array(grid, uc)
        pairs = [(i, j) for i in range(n) for j in range(i, n)]
        hat = forward_array(grid, np.stack([phys[i] * phys[j] for i, j in pairs]))
        prod = {}
        for m, (i, j) in enumerate(pairs):
            prod[(i, j)] = prod[(j, i)] = hat[m]
        out = np.stack([sum(1j * k[i] * prod[(i, j)] for i in range(n)) for j in range(n)])
    else:
        raise ValueError(f"unknown form {form!r}")
    if dealiased:
        out *= grid.dealias_mask
    _leray_array(grid, out)
    out *= -1.0
    return out


def nonlinear_term(u: VectorField, form: str = "advective") -> VectorField:
    """-P((u.∇)u), dealiased.

    ``form='advective'`` multiplies u_i by ∂_i u in physical space;
    ``form='divergence'`` uses sum_i D_i P(u_i u), which coincides with the
    advective form whenever div u = 0.
    """
    return VectorField(u.grid, advection_array(u.grid, u.coeffs, form))
