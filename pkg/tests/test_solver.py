import csv

import numpy as np
import pytest

from helpers import random_vector
from torusns.operators import apply_heat_semigroup, leray_project, nonlinear_term
from torusns.solver import (
    BlowUpError,
    GSpec,
    PicardDivergenceError,
    SolverConfig,
    SolverState,
    Trajectory,
    default_dt,
    duhamel_residual,
    make_initial_field,
    picard_solve,
    random_bandlimited,
    simulate,
    simulate_g_system,
    step,
    taylor_green,
)
from torusns.spectral import VectorField, divergence, make_grid, sup_norm


@pytest.fixture(scope="module")
def grid3():
    return make_grid(3, 16)


@pytest.fixture(scope="module")
def grid2():
    return make_grid(2, 32)


# ---------------------------------------------------------------- GSpec


def test_gspec_navier_stokes_constants():
    g = GSpec.navier_stokes(3)
    # |u_i u| = |u_i||u| <= |u|^2 per axis; the jacobian of u_i u has norm <= 2|u|
    assert g.c_quadratic == pytest.approx(3.0, rel=1e-6)
    assert g.c_jacobian == pytest.approx(6.0, rel=1e-6)
    assert g.c_g == pytest.approx(6.0, rel=1e-6)
    assert g.axes == [0, 1, 2]


def test_gspec_single_axis_bound_is_recomputed():
    a = np.zeros((2, 2, 2))
    a[0, 0, 0] = 3.0          # g(u) = (3 u_0^2, 0)
    g = GSpec.single_axis(1, a)
    assert g.axes == [1]
    assert g.c_quadratic == pytest.approx(3.0, rel=1e-8)
    assert g.c_jacobian == pytest.approx(6.0, rel=1e-8)
    rng = np.random.default_rng(0)
    for u in rng.standard_normal((200, 2)):
        val = np.linalg.norm(np.einsum("mjl,j,l->m", a, u, u))
        assert val <= g.c_g * (u @ u) + 1e-12


def test_gspec_rejects_bad_shape():
    with pytest.raises(ValueError):
        GSpec(np.zeros((3, 3, 3)))
    with pytest.raises(ValueError):
        GSpec(np.zeros((4, 4, 4, 4)))


def test_gspec_zero():
    g = GSpec.zero(3)
    assert g.c_g == 0 and g.axes == []


# ---------------------------------------------------------------- initial data


def test_taylor_green_3d(grid3):
    X = grid3.points
    u = make_initial_field(grid3, "taylor_green", amplitude=2.0)
    expect = 2.0 * np.stack([np.cos(X[0]) * np.sin(X[1]) * np.sin(X[2]),
                             -np.sin(X[0]) * np.cos(X[1]) * np.sin(X[2]), 0 * X[0]])
    np.testing.assert_allclose(u.to_physical(), expect, atol=1e-14)
    assert sup_norm(divergence(u)) < 1e-14


def test_random_initial_field(grid3):
    u = make_initial_field(grid3, "random_bandlimited", amplitude=1.0, seed=1, max_wavenumber=4)
    assert sup_norm(divergence(u)) <= 1e-12
    assert sup_norm(u) == pytest.approx(1.0, abs=1e-9)
    again = make_initial_field(grid3, "random_bandlimited", amplitude=1.0, seed=1, max_wavenumber=4)
    np.testing.assert_array_equal(u.coeffs, again.coeffs)
    other = make_initial_field(grid3, "random_bandlimited", amplitude=1.0, seed=2, max_wavenumber=4)
    assert np.abs(u.coeffs - other.coeffs).max() > 0.01


def test_random_field_independent_of_resolution():
    # same seed, same coefficients up to the sup normalisation, which is grid-sampled
    a = random_bandlimited(make_grid(3, 16), 3, 4).coeffs
    b = random_bandlimited(make_grid(3, 32), 3, 4).coeffs
    idx = np.r_[0:5, -4:0]
    sub_a = a[np.ix_(range(3), idx, idx, idx)]
    sub_b = b[np.ix_(range(3), idx, idx, idx)]
    assert np.abs(a).sum() == pytest.approx(np.abs(sub_a).sum(), rel=1e-13)
    ratio = np.vdot(sub_a, sub_b) / np.vdot(sub_a, sub_a)
    np.testing.assert_allclose(sub_b, ratio.real * sub_a, atol=1e-14)


@pytest.mark.parametrize("kw", [{"amplitude": 0.0}, {"amplitude": -1.0}])
def test_initial_field_rejects_amplitude(grid3, kw):
    with pytest.raises(ValueError):
        make_initial_field(grid3, "taylor_green", **kw)


def test_initial_field_rejects_kind(grid3):
    with pytest.raises(ValueError):
        make_initial_field(grid3, "vortex_ring")


# ---------------------------------------------------------------- config


@pytest.mark.parametrize("kw", [{"end_time": 0}, {"end_time": 1, "dt": -1}, {"end_time": 1, "order": 2},
                                {"end_time": 1, "blowup_threshold": 0}, {"end_time": 1, "snapshot_every": 0},
                                {"end_time": 1, "form": "x"}, {"end_time": 1, "j_max": -1}])
def test_solver_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


# ---------------------------------------------------------------- stepping


def test_linear_flow_is_exact(grid3):
    f = make_initial_field(grid3, "random_bandlimited", amplitude=1.0, seed=5)
    tr = simulate(f, SolverConfig(end_time=0.3, dt=0.1, nonlinear=False, j_max=0))
    np.testing.assert_allclose(tr.final.coeffs, apply_heat_semigroup(f, 0.3).coeffs, atol=1e-15)


def test_taylor_green_2d_exact(grid2):
    f = taylor_green(grid2)
    tr = simulate(f, SolverConfig(end_time=1.0, dt=0.01, j_max=1, snapshot_every=25))
    assert sup_norm(tr.final - f * np.exp(-2.0)) <= 1e-10
    assert tr.divergence_residual.max() <= 1e-12


def test_step_divergence_free_and_blowup(grid3):
    f = make_initial_field(grid3, "random_bandlimited", amplitude=1.0, seed=2)
    s = step(SolverState(0.0, f), 1e-3)
    assert s.t == pytest.approx(1e-3)
    assert sup_norm(divergence(s.u)) <= 1e-12
    with pytest.raises(BlowUpError):
        step(SolverState(0.0, f), 1e-3, blowup_threshold=0.5)


def test_default_dt(grid3):
    f = make_initial_field(grid3, "taylor_green", amplitude=1.0)
    ksq = grid3.ksq[grid3.dealias_mask]
    expect = 0.25 / (ksq.max() + np.sqrt(ksq.max()) * np.abs(f.coeffs).max())
    assert default_dt(f) == pytest.approx(expect)


# ---------------------------------------------------------------- trajectories


def test_zero_field_stays_zero(grid3):
    tr = simulate(VectorField(grid3, grid3.zeros(3)), SolverConfig(end_time=0.05, dt=0.01))
    assert not tr.terminated_early
    assert np.abs(tr.final.coeffs).max() == 0


def test_small_amplitude_runs_through(grid3):
    f = make_initial_field(grid3, "random_bandlimited", amplitude=0.1, seed=0)
    T = 0.37 / 0.1 ** 2 / 40   # a slice of the window keeps the test cheap
    tr = simulate(f, SolverConfig(end_time=T, j_max=0, snapshot_every=50, keep_fields=False))
    assert not tr.terminated_early


def test_trajectory_invariants(grid3):
    f = make_initial_field(grid3, "random_bandlimited", amplitude=2.0, seed=3)
    c = f.coeffs.copy()
    c[:, 0, 0, 0] = [0.3, -0.2, 0.1]          # nonzero mean momentum
    f = VectorField(grid3, c)
    tr = simulate(f, SolverConfig(end_time=0.1, dt=2e-3, j_max=2, snapshot_every=5))
    assert np.all(np.diff(tr.times) > 0)
    assert tr.dsup.shape == (len(tr.times), 3)
    assert tr.divergence_residual.max() <= 1e-11
    assert np.all(np.diff(tr.energy) < 0)
    for u in tr.fields:
        assert np.abs(u.coeffs[:, 0, 0, 0] - c[:, 0, 0, 0]).max() <= 1e-12


def test_determinism(grid3):
    f = make_initial_field(grid3, "random_bandlimited", amplitude=1.0, seed=4)
    cfg = SolverConfig(end_time=0.02, dt=2e-3, j_max=1)
    a, b = simulate(f, cfg), simulate(f, cfg)
    np.testing.assert_array_equal(a.final.coeffs, b.final.coeffs)
    np.testing.assert_array_equal(a.dsup, b.dsup)


def test_blowup_terminates(grid3):
    f = make_initial_field(grid3, "random_bandlimited", amplitude=1.0, seed=4)
    tr = simulate(f, SolverConfig(end_time=0.1, dt=1e-3, blowup_threshold=0.5, j_max=0))
    assert tr.terminated_early and "blow-up" in tr.reason
    assert tr.times[-1] < 0.1


def test_csv_columns(grid3, tmp_path):
    f = make_initial_field(grid3, "taylor_green")
    tr = simulate(f, SolverConfig(end_time=0.01, dt=5e-3, j_max=3))
    tr.write_csv(tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["t", "sup_u", "d1_sup", "d2_sup", "d3_sup", "divergence_residual", "energy"]
    assert len(rows) == 1 + len(tr.times)
    assert float(rows[1][1]) == pytest.approx(1.0)


# ---------------------------------------------------------------- temporal order


def test_self_convergence_order():
    g = make_grid(3, 16)
    f = make_initial_field(g, "random_bandlimited", amplitude=1.0, seed=7)
    T = 0.1
    ref = simulate(f, SolverConfig(end_time=T, dt=1e-2 / 16, j_max=0, keep_fields=True)).final
    dts = [2e-2, 1e-2, 5e-3]
    errs = [sup_norm(simulate(f, SolverConfig(end_time=T, dt=dt, j_max=0)).final - ref) for dt in dts]
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert 3.7 <= slope <= 4.3


# ---------------------------------------------------------------- g-system


def test_g_system_zero_is_heat_flow(grid3):
    f = random_vector(grid3, 1)
    tr = simulate_g_system(f, GSpec.zero(3), SolverConfig(end_time=0.2, dt=0.05, j_max=0))
    np.testing.assert_allclose(tr.final.coeffs, apply_heat_semigroup(f, 0.2).coeffs, atol=1e-15)


def test_g_system_navier_stokes_encoding(grid3):
    f = make_initial_field(grid3, "random_bandlimited", amplitude=1.5, seed=8)
    cfg = SolverConfig(end_time=0.05, dt=2.5e-3, j_max=0, snapshot_every=4)
    a = simulate(f, cfg)
    b = simulate_g_system(f, GSpec.navier_stokes(3), cfg)
    assert max(sup_norm(x - y) for x, y in zip(a.fields, b.fields)) <= 1e-9


def test_g_system_not_reprojected(grid3):
    # a non-solenoidal start keeps its gradient part under g = 0
    f = random_vector(grid3, 9)
    tr = simulate_g_system(f, GSpec.zero(3), SolverConfig(end_time=0.01, dt=0.01, j_max=0))
    assert tr.divergence_residual[-1] > 1e-3


def test_g_system_dimension_check(grid3):
    with pytest.raises(ValueError):
        simulate_g_system(random_vector(grid3, 0), GSpec.zero(2), SolverConfig(end_time=0.1))


# ---------------------------------------------------------------- Picard


def _gauss_first_iterate(f, t, nodes=24):
    x, w = np.polynomial.legendre.leggauss(nodes)
    s, w = 0.5 * t * (x + 1), 0.5 * t * w
    acc = apply_heat_semigroup(f, t).coeffs.copy()
    for si, wi in zip(s, w):
        acc += wi * apply_heat_semigroup(nonlinear_term(apply_heat_semigroup(f, si)), t - si).coeffs
    return VectorField(f.grid, acc)


def test_picard_first_iterate_definition(grid3):
    f = make_initial_field(grid3, "random_bandlimited", amplitude=1.0, seed=1)
    t = 0.02
    got = picard_solve(f, t, iterations=1, quadrature_nodes=10).u
    assert sup_norm(got - _gauss_first_iterate(f, t)) <= 1e-12


def test_picard_contracts_and_matches_simulate(grid3):
    f = make_initial_field(grid3, "random_bandlimited", amplitude=1.0, seed=1)
    res = picard_solve(f, 0.01, iterations=6, quadrature_nodes=8)
    inc = res.increments
    assert all(b < 0.05 * a for a, b in zip(inc, inc[1:]))
    sim = simulate(f, SolverConfig(end_time=0.01, dt=1e-3, j_max=0)).final
    assert sup_norm(res.u - sim) <= 1e-8


def test_picard_reports_divergence(grid3):
    f = make_initial_field(grid3, "random_bandlimited", amplitude=60.0, seed=1)
    with pytest.raises(PicardDivergenceError):
        picard_solve(f, 0.5, iterations=8, quadrature_nodes=6)


@pytest.mark.parametrize("kw", [{"iterations": 0}, {"t": 0.0}])
def test_picard_validation(grid3, kw):
    f = make_initial_field(grid3, "taylor_green")
    args = {"t": 0.01, "iterations": 2} | kw
    with pytest.raises(ValueError):
        picard_solve(f, args["t"], iterations=args["iterations"])


# ---------------------------------------------------------------- Duhamel residual


def test_duhamel_linear_is_exact(grid3):
    f = random_vector(grid3, 2)
    tr = simulate(f, SolverConfig(end_time=0.2, dt=0.025, nonlinear=False, j_max=0))
    assert duhamel_residual(tr).residual <= 1e-12


def _tg_run(cadence):
    g = make_grid(2, 16)
    f = taylor_green(g)
    # a non-gradient perturbation so the nonlinear integral is not zero
    f = leray_project(f + random_vector(g, 3, 2) * 0.3)
    return simulate(f, SolverConfig(end_time=0.4, dt=0.0125, j_max=0, snapshot_every=cadence))


def test_duhamel_residual_converges():
    res = [duhamel_residual(_tg_run(c)).residual for c in (8, 4, 2)]
    assert res[0] > res[1] > res[2]
    orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    assert np.all(orders > 3.5)


def test_duhamel_detects_corruption(grid3):
    f = make_initial_field(grid3, "random_bandlimited", amplitude=1.0, seed=2)
    tr = simulate(f, SolverConfig(end_time=0.1, dt=5e-3, j_max=0, snapshot_every=2))
    fields = [u.copy() for u in tr.fields]
    fields[4] = fields[4] * 1.01
    bad = Trajectory(tr.times, fields, tr.dsup, tr.divergence_residual, tr.energy, tr.dt, tr.initial, tr.rhs)
    assert duhamel_residual(bad).residual > 1e-3
    assert duhamel_residual(tr).residual < 1e-6


def test_duhamel_insufficient_samples(grid3):
    f = make_initial_field(grid3, "taylor_green")
    tr = simulate(f, SolverConfig(end_time=0.01, dt=0.01, j_max=0))
    with pytest.raises(ValueError, match="insufficient"):
        duhamel_residual(tr)
    tr = simulate(f, SolverConfig(end_time=0.01, dt=0.01, j_max=0, keep_fields=False))
    with pytest.raises(ValueError, match="insufficient"):
        duhamel_residual(tr)
