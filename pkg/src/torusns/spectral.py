"""Fourier substrate on the 2π-periodic torus.

Fields live either on the collocation grid ``x_m = 2πm/M`` (per axis) or as
Fourier coefficients in numpy FFT index order.  The stored coefficient of a
field is the amplitude of ``exp(i k.x)`` in its Fourier series, so
``f(x) = exp(i k.x)`` has coefficient exactly 1 at ``k``.

Index ``m`` along an axis carries wavenumber ``m`` for ``m <= M/2`` and
``m - M`` otherwise; the lattice is ``{-M/2+1, ..., M/2}`` and ``M/2`` is the
(unpaired) Nyquist wavenumber.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterator, Sequence, Union

import numpy as np
import scipy.fft as sfft

MultiIndex = tuple[int, ...]

# FFT worker threads; the solver pins this to 1 in deterministic mode.
_FFT_WORKERS = 1


def set_fft_workers(workers: int) -> None:
    global _FFT_WORKERS
    if workers < 1:
        raise ValueError("workers must be >= 1")
    _FFT_WORKERS = int(workers)


@dataclass(frozen=True)
class TorusGrid:
    """Uniform discretization of [0, 2π)^dim with ``modes`` points per axis."""

    dim: int
    modes: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.modes % 2 or self.modes < 8:
            raise ValueError(
                f"modes_per_axis must be an even integer >= 8, got {self.modes}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.modes,) * self.dim

    @property
    def half_shape(self) -> tuple[int, ...]:
        return (self.modes,) * (self.dim - 1) + (self.modes // 2 + 1,)

    @property
    def npoints(self) -> int:
        return self.modes ** self.dim

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    @property
    def nyquist(self) -> int:
        return self.modes // 2

    @cached_property
    def k1d(self) -> np.ndarray:
        """Integer wavenumbers along one axis, FFT order, Nyquist positive."""
        m = np.arange(self.modes)
        return np.where(m <= self.modes // 2, m, m - self.modes)

    @cached_property
    def wavevector(self) -> tuple[np.ndarray, ...]:
        """Broadcastable per-axis wavenumber arrays (float)."""
        out = []
        for ax in range(self.dim):
            shp = [1] * self.dim
            shp[ax] = self.modes
            out.append(self.k1d.astype(float).reshape(shp))
        return tuple(out)

    @cached_property
    def odd_wavevector(self) -> tuple[np.ndarray, ...]:
        """Wavenumbers with the Nyquist entry zeroed (symbol for odd operators)."""
        out = []
        for k in self.wavevector:
            kk = k.copy()
            kk[kk == self.nyquist] = 0.0
            out.append(kk)
        return tuple(out)

    @cached_property
    def ksq(self) -> np.ndarray:
        return sum(np.broadcast_to(k * k, self.shape) for k in self.wavevector)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        cut = self.modes / 3.0
        mask = np.ones(self.shape, dtype=bool)
        for k in self.wavevector:
            mask &= np.broadcast_to(np.abs(k) <= cut, self.shape)
        return mask

    @cached_property
    def points(self) -> tuple[np.ndarray, ...]:
        """Collocation coordinates as an ``indexing='ij'`` mesh."""
        x = 2.0 * np.pi * np.arange(self.modes) / self.modes
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))

    def zeros(self, ncomp: int | None = None) -> np.ndarray:
        shp = self.shape if ncomp is None else (ncomp,) + self.shape
        return np.zeros(shp, dtype=complex)


def make_grid(dim: int, modes_per_axis: int) -> TorusGrid:
    return TorusGrid(int(dim), int(modes_per_axis))


@dataclass
class RealField:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid {self.grid.shape}")


@dataclass
class SpectralField:
    grid: TorusGrid
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != self.grid.shape:
            raise ValueError(
                f"coeffs shape {self.coeffs.shape} does not match grid {self.grid.shape}")

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self.grid, other.grid)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self.grid, other.grid)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, a: complex) -> "SpectralField":
        return SpectralField(self.grid, a * self.coeffs)

    __rmul__ = __mul__


@dataclass
class VectorField:
    """``grid.dim``-component field held as coefficients, shape (n, M, ..., M)."""

    grid: TorusGrid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        expect = (self.grid.dim,) + self.grid.shape
        if self.coeffs.shape != expect:
            raise ValueError(f"coeffs shape {self.coeffs.shape}, expected {expect}")

    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[0]

    def component(self, i: int) -> SpectralField:
        return SpectralField(self.grid, self.coeffs[i])

    @classmethod
    def from_components(cls, comps: Sequence[SpectralField]) -> "VectorField":
        grid = comps[0].grid
        for c in comps:
            _check_same_grid(grid, c.grid)
        return cls(grid, np.stack([c.coeffs for c in comps]))

    @classmethod
    def from_physical(cls, grid: TorusGrid, values: np.ndarray) -> "VectorField":
        return cls(grid, forward_array(grid, np.asarray(values, dtype=float)))

    def to_physical(self) -> np.ndarray:
        return inverse_array(self.grid, self.coeffs)

    def copy(self) -> "VectorField":
        return VectorField(self.grid, self.coeffs.copy())

    def __add__(self, other: "VectorField") -> "VectorField":
        _check_same_grid(self.grid, other.grid)
        return VectorField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "VectorField") -> "VectorField":
        _check_same_grid(self.grid, other.grid)
        return VectorField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, a: complex) -> "VectorField":
        return VectorField(self.grid, a * self.coeffs)

    __rmul__ = __mul__


AnyField = Union[RealField, SpectralField, VectorField]


def _check_same_grid(a: TorusGrid, b: TorusGrid) -> None:
    if a != b:
        raise ValueError(f"grid mismatch: {a} vs {b}")


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------

def _negate_leading(a: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Re-index ``a[..., m, ...] -> a[..., (-m) mod M, ...]`` along ``axes``."""
    for ax in axes:
        a = np.roll(np.flip(a, axis=ax), 1, axis=ax)
    return a


def expand_half(grid: TorusGrid, half: np.ndarray) -> np.ndarray:
    """Rebuild a full Hermitian spectrum from its ``rfftn`` half."""
    M = grid.modes
    lead = half.shape[: half.ndim - grid.dim]
    full = np.empty(lead + grid.shape, dtype=complex)
    full[..., : M // 2 + 1] = half
    mirrored = _negate_leading(half[..., 1: M // 2], grid.axes[:-1])
    full[..., M // 2 + 1:] = np.conj(mirrored[..., ::-1])
    return full


def forward_array(grid: TorusGrid, values: np.ndarray) -> np.ndarray:
    """Real samples (trailing ``dim`` axes) to full coefficient array."""
    half = sfft.rfftn(values, axes=grid.axes, workers=_FFT_WORKERS)
    half /= grid.npoints
    return expand_half(grid, half)


def inverse_array(grid: TorusGrid, coeffs: np.ndarray) -> np.ndarray:
    """Coefficients of a real field to its samples (uses the rfft half only)."""
    half = coeffs[..., : grid.modes // 2 + 1]
    out = sfft.irfftn(half, s=grid.shape, axes=grid.axes, workers=_FFT_WORKERS)
    out *= grid.npoints
    return out


def inverse_complex_array(grid: TorusGrid, coeffs: np.ndarray) -> np.ndarray:
    return sfft.ifftn(coeffs, axes=grid.axes, workers=_FFT_WORKERS) * grid.npoints


def forward_transform(f: RealField) -> SpectralField:
    return SpectralField(f.grid, forward_array(f.grid, f.values))


def inverse_transform(f: SpectralField) -> RealField:
    """Samples of a real field.  ``f`` must be conjugate symmetric."""
    return RealField(f.grid, inverse_array(f.grid, f.coeffs))


def conjugate_partner(grid: TorusGrid, coeffs: np.ndarray) -> np.ndarray:
    """Array whose entry at k is ``coeffs(-k)``."""
    return _negate_leading(coeffs, grid.axes)


def symmetry_defect(grid: TorusGrid, coeffs: np.ndarray) -> float:
    """max |c(-k) - conj(c(k))|; zero exactly when the field is real."""
    return float(np.max(np.abs(conjugate_partner(grid, coeffs) - np.conj(coeffs)), initial=0.0))


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------

def multi_indices(dim: int, order: int) -> Iterator[MultiIndex]:
    """All alpha in N^dim with |alpha| = order, lexicographically descending."""
    for combo in itertools.combinations_with_replacement(range(dim), order):
        alpha = [0] * dim
        for ax in combo:
            alpha[ax] += 1
        yield tuple(alpha)


def count_multi_indices(dim: int, order: int) -> int:
    return math.comb(order + dim - 1, dim - 1)


def derivative_symbol(grid: TorusGrid, alpha: MultiIndex) -> np.ndarray | complex:
    """Fourier multiplier of D^alpha.  Odd orders drop the Nyquist wavenumber."""
    if len(alpha) != grid.dim or any(a < 0 for a in alpha):
        raise ValueError(f"invalid multi-index {alpha} for dim {grid.dim}")
    sym: np.ndarray | complex = 1.0 + 0j
    for ax, a in enumerate(alpha):
        if a == 0:
            continue
        k = grid.odd_wavevector[ax] if a % 2 else grid.wavevector[ax]
        sym = sym * (1j * k) ** a
    return sym


def spectral_derivative(f, alpha: MultiIndex):
    """D^alpha of a SpectralField or VectorField (componentwise)."""
    sym = derivative_symbol(f.grid, tuple(alpha))
    return type(f)(f.grid, f.coeffs * sym)


def divergence(u: VectorField) -> SpectralField:
    grid = u.grid
    out = np.zeros(grid.shape, dtype=complex)
    for i in range(grid.dim):
        out += 1j * grid.odd_wavevector[i] * u.coeffs[i]
    return SpectralField(grid, out)


def gradient(f: SpectralField) -> VectorField:
    grid = f.grid
    return VectorField(grid, np.stack([1j * k * f.coeffs for k in grid.odd_wavevector]))


def dealias(f):
    """Two-thirds rule: zero every coefficient with some |k_j| > M/3."""
    return type(f)(f.grid, np.where(f.grid.dealias_mask, f.coeffs, 0.0))


# ---------------------------------------------------------------------------
# maximum norms
# ---------------------------------------------------------------------------

def sup_norm_physical(values: np.ndarray, vector: bool = True) -> float:
    """Sampled max of the Euclidean norm over the leading component axis."""
    if not vector:
        return float(np.max(np.abs(values)))
    return float(np.sqrt(np.max(np.sum(values * values, axis=0))))


def sup_norm(u: AnyField) -> float:
    """Sampled sup over collocation points of |u(x)| (Euclidean over components)."""
    if isinstance(u, RealField):
        return sup_norm_physical(u.values, vector=False)
    if isinstance(u, SpectralField):
        return sup_norm_physical(inverse_array(u.grid, u.coeffs), vector=False)
    return sup_norm_physical(u.to_physical())


@lru_cache(maxsize=64)
def _half_symbol_stack(grid: TorusGrid, order: int) -> np.ndarray:
    """D^alpha symbols for all |alpha| = order on the rfft half spectrum."""
    h = grid.modes // 2 + 1
    return np.stack([np.broadcast_to(derivative_symbol(grid, a), grid.shape)[..., :h]
                     for a in multi_indices(grid.dim, order)])


def _max_norm_half(grid: TorusGrid, half: np.ndarray) -> float:
    """Sampled sup of the Euclidean norm over axis 1 of a batch of half spectra."""
    phys = sfft.irfftn(half, s=grid.shape, axes=grid.axes, workers=_FFT_WORKERS)
    sq = np.einsum("ac...,ac...->a...", phys, phys)
    return float(np.sqrt(sq.max())) * grid.npoints


def dj_sup_norms(u: VectorField, j_max: int) -> np.ndarray:
    """``[|D^0 u|, |D^1 u|, ..., |D^j_max u|]`` (sampled sup-norms)."""
    grid = u.grid
    half = u.coeffs[..., : grid.modes // 2 + 1]
    out = np.empty(j_max + 1)
    for j in range(j_max + 1):
        syms = _half_symbol_stack(grid, j)
        out[j] = _max_norm_half(grid, syms[:, None] * half[None])
    return out


def dj_sup_norm(u: VectorField, j: int) -> float:
    """max over |alpha| = j of sup_norm(D^alpha u)."""
    if j < 0:
        raise ValueError("derivative order must be non-negative")
    grid = u.grid
    half = u.coeffs[..., : grid.modes // 2 + 1]
    return _max_norm_half(grid, _half_symbol_stack(grid, j)[:, None] * half[None])


def energy(u: VectorField) -> float:
    """Mean kinetic energy density, 1/2 sum_k |u_hat(k)|^2."""
    return 0.5 * float(np.sum(np.abs(u.coeffs) ** 2))
