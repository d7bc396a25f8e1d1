import numpy as np

from torusns.spectral import TorusGrid, VectorField, forward_array


def bandlimited_coeffs(grid: TorusGrid, seed: int, kmax: int, ncomp: int | None = None) -> np.ndarray:
    """Coefficients of a real random field with |k_j| <= kmax on every axis."""
    rng = np.random.default_rng(seed)
    shape = grid.shape if ncomp is None else (ncomp,) + grid.shape
    c = forward_array(grid, rng.standard_normal(shape))
    keep = np.ones(grid.shape, dtype=bool)
    for k in grid.wavevector:
        keep &= np.abs(k) <= kmax
    return c * keep


def random_vector(grid: TorusGrid, seed: int, kmax: int = 3) -> VectorField:
    return VectorField(grid, bandlimited_coeffs(grid, seed, kmax, grid.dim))
