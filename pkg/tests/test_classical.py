import numpy as np
import pytest

from qlks import benchmarks as bm
from qlks.classical import (STEADY_THRESHOLD, BoundarySpec, InstabilityError, MacroFields, Mesh, apply_dirichlet,
                            check_density, compute_gradients, lks_step, moments, residual, run, stream)
from qlks.lattice import FlowParams, equilibrium

PERIODIC = BoundarySpec()
CAVITY = BoundarySpec("cavity", (0.1, 0.0))


def fields_from(u, rho=None):
    u = np.asarray(u, float)
    if rho is None:
        rho = np.ones(u.shape[1:])
    return MacroFields(rho, u)


def test_mesh_and_fields():
    m = Mesh(8, 4)
    assert m.dimension == 2 and m.shape == (8, 4) and m.size == 32 and m.is_power_of_two()
    assert Mesh(8, 8, 8).dimension == 3
    assert not Mesh(12, 8).is_power_of_two()
    f = MacroFields.uniform(m, 1.5, velocity=(0.1, 0.0))
    assert f.mesh == Mesh(8, 4)
    assert np.all(f.u[0] == 0.1)
    with pytest.raises(ValueError):
        MacroFields(np.ones((4, 4)), np.zeros((3, 4, 4)))


def test_boundary_spec_validation():
    with pytest.raises(ValueError):
        BoundarySpec("slip")
    with pytest.raises(ValueError):
        BoundarySpec("cavity", (0.0, 0.1))


def test_gradient_uniform_is_zero():
    f = MacroFields.uniform(Mesh(8, 8), velocity=(0.05, -0.02))
    for bc in (PERIODIC, CAVITY):
        np.testing.assert_allclose(compute_gradients(f, bc=bc), 0.0, atol=1e-15)


def test_gradient_periodic_sine_second_order():
    errs = []
    for m in (16, 32, 64):
        x = np.arange(m)
        u = np.zeros((2, m, m))
        u[0] = np.sin(2 * np.pi * x / m)[:, None]
        g = compute_gradients(fields_from(u))
        exact = (2 * np.pi / m) * np.cos(2 * np.pi * x / m)[:, None]
        errs.append(np.max(np.abs(g[0, 0] - exact)) / (2 * np.pi / m))
        assert np.max(np.abs(g[0, 1])) == 0 and np.max(np.abs(g[1])) == 0
    assert bm.convergence_order([16, 32, 64], errs) == pytest.approx(2.0, abs=0.05)


def test_gradient_linear_exact_on_cavity():
    m = 8
    u = np.zeros((2, m, m))
    u[0] = 0.01 * np.arange(m)[:, None]
    u[1] = -0.03 * np.arange(m)[None, :]
    g = compute_gradients(fields_from(u), bc=CAVITY)
    np.testing.assert_allclose(g[0, 0], 0.01, atol=1e-15)
    np.testing.assert_allclose(g[1, 1], -0.03, atol=1e-15)
    np.testing.assert_allclose(g[0, 1], 0.0, atol=1e-15)


def test_gradient_too_few_nodes():
    with pytest.raises(ValueError):
        compute_gradients(MacroFields.uniform(Mesh(2, 8)))


def test_stream_matches_pull_convention(d2q9, rng):
    f = rng.random((9, 4, 5))
    out = stream(f, d2q9)
    for a, (ex, ey) in enumerate(d2q9.velocities):
        for x in range(4):
            for y in range(5):
                assert out[a, x, y] == f[a, (x - ex) % 4, (y - ey) % 5]


@pytest.mark.parametrize("a", [0.0, 0.39, -0.3])
def test_uniform_rest_is_fixed_point(d2q9, d3q27, a):
    p = FlowParams(u0=0.1, a_coeff=a)
    for vs, mesh in ((d2q9, Mesh(8, 8)), (d3q27, Mesh(4, 4, 4))):
        f = MacroFields.uniform(mesh, 1.2)
        g = lks_step(f, vs, p)
        np.testing.assert_allclose(g.rho, 1.2, rtol=1e-15)
        np.testing.assert_allclose(g.u, 0.0, atol=1e-16)


def test_uniform_flow_is_fixed_point(d2q9):
    p = FlowParams(u0=0.05, a_coeff=0.39)
    f = MacroFields.uniform(Mesh(8, 8), 1.0, velocity=(0.05, 0.02))
    g = lks_step(f, d2q9, p)
    np.testing.assert_allclose(g.u, f.u, atol=1e-16)


def test_mass_conserved_with_a_zero(d2q9, rng):
    p = FlowParams(u0=0.05, a_coeff=0.0)
    f = MacroFields(1 + 0.01 * rng.random((16, 16)), 0.03 * rng.standard_normal((2, 16, 16)))
    m0 = f.rho.sum()
    for _ in range(10):
        f = lks_step(f, d2q9, p)
        assert f.rho.sum() == pytest.approx(m0, rel=1e-12)


@pytest.mark.parametrize("a,radius", [(0.0, 1), (0.39, 2)])
def test_streaming_locality(d2q9, a, radius):
    # the gradient stencil widens the dependence cone by one link when A != 0
    p = FlowParams(u0=0.05, a_coeff=a)
    base = MacroFields.uniform(Mesh(16, 16))
    pert = base.copy()
    pert.rho[8, 8] += 0.01
    pert.u[0, 8, 8] += 0.01
    diff = np.abs(lks_step(pert, d2q9, p).rho - lks_step(base, d2q9, p).rho) > 0
    xs, ys = np.nonzero(diff)
    assert diff[8, 8]
    assert np.max(np.abs(xs - 8)) <= radius and np.max(np.abs(ys - 8)) <= radius


def test_moments_of_equilibrium(d2q9):
    p = FlowParams(u0=0.1, a_coeff=0.39)
    f = equilibrium(np.full((4, 4), 1.1), np.full((2, 4, 4), 0.04), np.zeros((2, 2, 4, 4)), d2q9, p)
    rho, mom = moments(f, d2q9)
    np.testing.assert_allclose(rho, 1.1)
    np.testing.assert_allclose(mom, 1.1 * 0.04)


def test_tg_one_step_close_to_analytic(d2q9):
    errs = []
    for n, u0 in ((16, 0.1), (32, 0.05), (64, 0.025)):
        case = bm.AnalyticCase.for_mesh(bm.TG2D, n, u0, 0.08)
        p = FlowParams(u0=u0, nu=0.08, length=n / 2)
        mesh = Mesh(n, n)
        g = lks_step(bm.initial_fields(case, mesh, "analytic"), d2q9, p)
        errs.append(np.max(np.abs(g.u - bm.exact_fields(case, mesh, 1.0).u)) / u0)
    assert errs[1] < 1e-3
    assert errs[0] > errs[1] > errs[2]


def test_apply_dirichlet_lid_and_walls():
    f = MacroFields.uniform(Mesh(8, 8))
    f.u[:] = 0.02
    f.rho[1:-1, 1:-1] = 1.01
    out = apply_dirichlet(f, CAVITY)
    np.testing.assert_array_equal(out.u[0, :, -1], 0.1)
    np.testing.assert_array_equal(out.u[1, :, -1], 0.0)
    # lid row corners carry the lid velocity
    for sl in (np.s_[:, 0, :-1], np.s_[:, -1, :-1], np.s_[:, :, 0]):
        np.testing.assert_array_equal(out.u[sl], 0.0)
    np.testing.assert_array_equal(out.u[:, 1:-1, 1:-1], 0.02)
    np.testing.assert_array_equal(out.rho, 1.01)


def test_apply_dirichlet_3d_lid_on_top_of_z():
    f = MacroFields.uniform(Mesh(4, 4, 4))
    out = apply_dirichlet(f, BoundarySpec("cavity", (0.1, 0.0, 0.0)))
    np.testing.assert_array_equal(out.u[0, :, :, -1], 0.1)
    assert out.u[0].sum() == pytest.approx(0.1 * 16)


def test_apply_dirichlet_rejects_periodic():
    with pytest.raises(ValueError):
        apply_dirichlet(MacroFields.uniform(Mesh(4, 4)), PERIODIC)


def test_residual_definition():
    a = MacroFields.uniform(Mesh(4, 4))
    b = a.copy()
    b.u[0] += 0.001
    assert residual(b, a, 0.1) == pytest.approx(0.01)


def test_run_zero_steps_returns_input(d2q9):
    f = MacroFields.uniform(Mesh(8, 8), velocity=(0.01, 0.0))
    r = run(f, d2q9, FlowParams(u0=0.1, nu=0.08), steps=0)
    assert r.steps == 0 and r.residuals == []
    np.testing.assert_array_equal(r.fields.u, f.u)


def test_run_threshold_and_snapshots(d2q9):
    p = FlowParams(u0=0.1, nu=0.08, length=4)
    case = bm.AnalyticCase.for_mesh(bm.TG2D, 8, 0.1, 0.08)
    f = bm.initial_fields(case, Mesh(8, 8))
    seen = []
    r = run(f, d2q9, p, threshold=1e-3, max_steps=500, snapshot_every=5, on_step=lambda n, _: seen.append(n))
    assert r.residuals[-1] < 1e-3 <= r.residuals[-2]
    assert seen == list(range(1, r.steps + 1))
    assert sorted(r.snapshots) == list(range(5, r.steps + 1, 5))
    assert not r.converged or r.residuals[-1] < STEADY_THRESHOLD
    with pytest.raises(ValueError):
        run(f, d2q9, p)


def test_instability_reports_node_and_step(d2q9):
    def bad(fields, vs, p, bc):
        rho = fields.rho.copy()
        rho[2, 3] = -1.0
        check_density(rho)

    f = MacroFields.uniform(Mesh(8, 8))
    with pytest.raises(InstabilityError) as exc:
        run(f, d2q9, FlowParams(u0=0.1, nu=0.08), steps=3, stepper=bad)
    assert exc.value.node == (2, 3) and exc.value.step == 1


def test_instability_from_real_blowup(d2q9, quiet_mach):
    p = FlowParams(u0=0.5, nu=0.005, length=4)
    case = bm.AnalyticCase.for_mesh(bm.TG2D, 8, 0.5, 0.005)
    with pytest.raises(InstabilityError):
        run(bm.initial_fields(case, Mesh(8, 8)), d2q9, p, steps=200)


def test_cavity_runs_with_quiescent_walls(d2q9):
    p = FlowParams.from_reynolds(0.1, 100, 16)
    f = apply_dirichlet(MacroFields.uniform(Mesh(16, 16)), CAVITY)
    r = run(f, d2q9, p, CAVITY, steps=300)
    u = r.fields.u
    assert np.all(u[:, 0, :-1] == 0) and np.all(u[:, -1, :-1] == 0) and np.all(u[:, :, 0] == 0)
    assert u[0, 8, 8] < 0  # return flow under the lid-driven vortex
    assert r.residuals[-1] < r.residuals[50]
