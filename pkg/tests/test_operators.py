import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import bandlimited_coeffs, random_vector
from oracles import theta_1d, theta_product
from torusns.operators import (
    KernelEvalConfig,
    apply_heat_semigroup,
    heat_kernel,
    heat_kernel_poisson,
    heat_kernel_spectral,
    leray_project,
    nonlinear_term,
    pressure_from_riesz,
    pressure_from_velocity,
    riesz_transform,
)
from torusns.spectral import (
    RealField,
    SpectralField,
    VectorField,
    divergence,
    forward_transform,
    gradient,
    inverse_transform,
    make_grid,
    spectral_derivative,
    sup_norm,
    symmetry_defect,
)

seeds = st.integers(0, 2**31 - 1)


def solenoidal(grid, seed, kmax=3):
    return leray_project(random_vector(grid, seed, kmax))


# ---------------------------------------------------------------- heat semigroup


def test_heat_single_mode():
    g = make_grid(3, 8)
    c = np.zeros(g.shape, dtype=complex)
    c[1, 0, 0] = 1.0
    out = apply_heat_semigroup(SpectralField(g, c), 0.5).coeffs
    assert out[1, 0, 0].real == pytest.approx(0.6065306597, abs=1e-10)


def test_heat_identity_at_zero():
    g = make_grid(3, 8)
    u = random_vector(g, 0)
    np.testing.assert_array_equal(apply_heat_semigroup(u, 0.0).coeffs, u.coeffs)


def test_heat_rejects_negative_time():
    g = make_grid(2, 8)
    with pytest.raises(ValueError):
        apply_heat_semigroup(random_vector(g, 0), -1e-3)


@given(seed=seeds, s=st.floats(0, 2), t=st.floats(0, 2))
def test_semigroup_law(seed, s, t):
    g = make_grid(3, 8)
    u = random_vector(g, seed)
    a = apply_heat_semigroup(apply_heat_semigroup(u, s), t).coeffs
    b = apply_heat_semigroup(u, s + t).coeffs
    assert np.abs(a - b).max() <= 1e-13 * np.abs(u.coeffs).max()


@given(seed=seeds, t=st.floats(1e-4, 10))
def test_maximum_principle(seed, t):
    g = make_grid(3, 16)
    u = random_vector(g, seed, 4)
    assert sup_norm(apply_heat_semigroup(u, t)) <= sup_norm(u) * (1 + 1e-12)


# ---------------------------------------------------------------- heat kernel


def test_kernel_spectral_value_x0_t1():
    v = heat_kernel_spectral(0.0, 1.0)
    direct = 1 + 2 * sum(math.exp(-k * k) for k in range(1, 21))
    assert v.value == pytest.approx(1.7726372048, abs=1e-10)
    assert v.value == pytest.approx(direct, rel=1e-15)
    assert v.tail_bound < 1e-14


def test_kernel_large_t_tends_to_one():
    assert heat_kernel_spectral([0.0, 0.0, 0.0], 40.0).value == pytest.approx(1.0, abs=1e-16)


def test_kernel_mean_is_one():
    # trapezoid on a periodic grid is exact for trig polynomials of degree < M
    for t in (0.05, 0.3, 2.0):
        xs = 2 * np.pi * np.arange(64) / 64
        mean = np.mean([heat_kernel_spectral(x, t).value for x in xs])
        assert mean == pytest.approx(1.0, abs=1e-13)


def test_kernel_poisson_small_t():
    v = heat_kernel_poisson(0.0, 0.01)
    assert v.value == pytest.approx(math.sqrt(math.pi / 0.01), rel=1e-14)
    assert v.value == pytest.approx(17.7245385, abs=1e-7)


@given(x=st.lists(st.floats(-10, 10), min_size=1, max_size=3), t=st.floats(0.05, 5))
def test_kernel_duality_and_positivity(x, t):
    a = heat_kernel_spectral(x, t).value
    b = heat_kernel_poisson(x, t).value
    assert b > 0
    assert abs(a - b) <= 1e-10 * abs(b)


@pytest.mark.parametrize("x,t", [(0.3, 0.05), (2.0, 0.7), (3.1, 4.0), ([1.0, -0.5], 0.2), ([0.1, 2.2, 5.0], 1.3)])
def test_kernel_matches_jacobi_theta(x, t):
    ref = theta_product(x, t)
    assert heat_kernel_spectral(x, t).value == pytest.approx(ref, rel=1e-13)
    assert heat_kernel_poisson(x, t).value == pytest.approx(ref, rel=1e-13)


def test_kernel_fixed_radius_and_tail():
    cfg = KernelEvalConfig(truncation_radius=2)
    v = heat_kernel_spectral(0.4, 0.5, cfg)
    ref = theta_1d(0.4, 0.5)
    assert v.radius == 2
    assert abs(v.value - ref) <= v.tail_bound


def test_kernel_auto_crossover():
    assert heat_kernel(0.0, 0.1).representation == "poisson"
    assert heat_kernel(0.0, 0.5).representation == "spectral"
    cfg = KernelEvalConfig(crossover_time=0.05)
    assert heat_kernel(0.0, 0.1, cfg).representation == "spectral"


@pytest.mark.parametrize("kw", [{"truncation_radius": 0}, {"crossover_time": 0.0},
                                {"representation": "fourier"}, {"rel_tol": -1.0}])
def test_kernel_config_validation(kw):
    with pytest.raises(ValueError):
        KernelEvalConfig(**kw)


@pytest.mark.parametrize("fn", [heat_kernel_spectral, heat_kernel_poisson, heat_kernel])
def test_kernel_rejects_nonpositive_time(fn):
    with pytest.raises(ValueError):
        fn(0.0, 0.0)


def test_printed_prefactor_would_fail_duality():
    # the image sum needs (pi/t)^{n/2}; (pi/t)^n misses by orders of magnitude
    x, t = [0.5, 1.0], 0.1
    good = heat_kernel_poisson(x, t).value
    wrong = good * (math.pi / t) ** (len(x) / 2)
    ref = heat_kernel_spectral(x, t).value
    assert abs(good - ref) < 1e-10 * ref
    assert wrong / ref > 10


# ---------------------------------------------------------------- Riesz, Leray


def test_riesz_sin():
    g = make_grid(3, 16)
    f = forward_transform(RealField(g, np.sin(g.points[0])))
    r = inverse_transform(riesz_transform(f, 0)).values
    # symbol i k/|k| turns sin x into +cos x
    np.testing.assert_allclose(r, np.cos(g.points[0]), atol=1e-15)


def test_riesz_constant():
    g = make_grid(2, 8)
    c = g.zeros()
    c[0, 0] = 2.0
    assert np.abs(riesz_transform(SpectralField(g, c), 1).coeffs).max() == 0


@given(seed=seeds)
def test_riesz_square_sum(seed):
    g = make_grid(3, 8)
    f = SpectralField(g, bandlimited_coeffs(g, seed, 3))
    acc = sum(riesz_transform(riesz_transform(f, i), i).coeffs for i in range(3))
    expect = -f.coeffs
    expect[0, 0, 0] = 0.0
    # -f + mean(f): the mean mode is annihilated rather than negated
    assert np.abs(acc - expect).max() < 1e-14


def test_leray_gradient_and_fixed_point():
    g = make_grid(3, 16)
    X = g.points
    grad = gradient(forward_transform(RealField(g, np.sin(X[0]))))
    assert sup_norm(leray_project(grad)) < 1e-15
    z = 0 * X[0]
    u = VectorField.from_physical(g, np.stack([np.sin(X[1]), z, z]))
    np.testing.assert_allclose(leray_project(u).coeffs, u.coeffs, atol=1e-16)


def test_leray_keeps_mean_mode():
    g = make_grid(3, 8)
    c = g.zeros(3)
    c[:, 0, 0, 0] = [1.0, -2.0, 0.5]
    np.testing.assert_array_equal(leray_project(VectorField(g, c)).coeffs, c)


@given(seed=seeds)
def test_leray_properties(seed):
    g = make_grid(3, 8)
    u = random_vector(g, seed)
    v = random_vector(g, seed + 1)
    pu = leray_project(u)
    assert sup_norm(divergence(pu)) <= 1e-12
    assert np.abs(leray_project(pu).coeffs - pu.coeffs).max() <= 1e-15
    # self-adjoint in the L2 pairing
    lhs = np.vdot(pu.coeffs, v.coeffs)
    rhs = np.vdot(u.coeffs, leray_project(v).coeffs)
    assert abs(lhs - rhs) <= 1e-13
    for i in range(3):
        assert symmetry_defect(g, pu.coeffs[i]) < 1e-14


@given(seed=seeds, alpha=st.tuples(*[st.integers(0, 3)] * 3), t=st.floats(0, 1))
def test_leray_commutes(seed, alpha, t):
    g = make_grid(3, 8)
    u = random_vector(g, seed)
    a = spectral_derivative(leray_project(u), alpha).coeffs
    b = leray_project(spectral_derivative(u, alpha)).coeffs
    assert np.abs(a - b).max() <= 1e-12 * max(1, np.abs(a).max())
    a = apply_heat_semigroup(leray_project(u), t).coeffs
    b = leray_project(apply_heat_semigroup(u, t)).coeffs
    assert np.abs(a - b).max() <= 1e-14


# ---------------------------------------------------------------- pressure, nonlinear term


def taylor_green_2d(g):
    X = g.points
    return VectorField.from_physical(g, np.stack([np.cos(X[0]) * np.sin(X[1]), -np.sin(X[0]) * np.cos(X[1])]))


def test_pressure_constant_velocity():
    g = make_grid(3, 8)
    c = g.zeros(3)
    c[:, 0, 0, 0] = [1.0, 2.0, 3.0]
    assert sup_norm(pressure_from_velocity(VectorField(g, c))) == 0


def test_pressure_taylor_green():
    g = make_grid(2, 32)
    X = g.points
    p = pressure_from_velocity(taylor_green_2d(g)).values
    np.testing.assert_allclose(p, -0.25 * (np.cos(2 * X[0]) + np.cos(2 * X[1])), atol=1e-14)


def test_pressure_taylor_green_finite_difference():
    # Δp = -div((u.∇)u) checked with centered differences on the exact TG pressure
    g = make_grid(2, 32)
    p = pressure_from_velocity(taylor_green_2d(g)).values
    h = 2 * np.pi / 32
    lap = sum(np.roll(p, 1, a) + np.roll(p, -1, a) - 2 * p for a in (0, 1)) / h ** 2
    X = g.points
    # for TG, -div((u.∇)u) = cos 2x + cos 2y; the 3-point stencil maps cos 2x
    # to -(2 - 2 cos 2h)/h^2 cos 2x exactly, so compare with that factor
    sigma = (1 - math.cos(2 * h)) / (2 * h ** 2)
    assert np.abs(lap - sigma * (np.cos(2 * X[0]) + np.cos(2 * X[1]))).max() < 1e-12


@given(seed=seeds)
def test_pressure_two_routes(seed):
    g = make_grid(3, 16)
    u = solenoidal(g, seed, 4)
    a = pressure_from_velocity(u).values
    b = pressure_from_riesz(u).values
    assert np.abs(a - b).max() <= 1e-12


def test_pressure_warns_on_compressible_input():
    g = make_grid(3, 8)
    with pytest.warns(RuntimeWarning):
        pressure_from_velocity(random_vector(g, 0))


def test_nonlinear_zero_and_constant():
    g = make_grid(3, 8)
    assert sup_norm(nonlinear_term(VectorField(g, g.zeros(3)))) == 0
    c = g.zeros(3)
    c[:, 0, 0, 0] = [1.0, -1.0, 2.0]
    assert sup_norm(nonlinear_term(VectorField(g, c))) == 0


def test_nonlinear_taylor_green_is_gradient():
    g = make_grid(2, 32)
    assert sup_norm(nonlinear_term(taylor_green_2d(g))) < 1e-15


@given(seed=seeds)
def test_nonlinear_forms_agree(seed):
    g = make_grid(3, 16)
    u = solenoidal(g, seed, 4)
    a = nonlinear_term(u, "advective")
    b = nonlinear_term(u, "divergence")
    assert sup_norm(a - b) <= 1e-11
    assert sup_norm(divergence(a)) <= 1e-12
    for i in range(3):
        assert symmetry_defect(g, a.coeffs[i]) < 1e-13


def test_nonlinear_rejects_unknown_form():
    g = make_grid(2, 8)
    with pytest.raises(ValueError):
        nonlinear_term(VectorField(g, g.zeros(2)), "rotational")
