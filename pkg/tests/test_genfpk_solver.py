import numpy as np
import pytest

from conftest import grid_pdf_moments, make_scenario, quiet_model
from nfkit import (
    DriftSpec,
    Instability,
    PdfGrid,
    PdfSnapshot,
    TimeGrid,
    build_coefficients,
    multi_indices,
    response_moments,
    rhs_linear,
    solve,
    step,
)
from nfkit.errors import DegenerateVariance
from nfkit.genfpk_solver import DRIFT_FUNCTIONS, DriftTerm, auto_domain
from nfkit.linear_exact import LinearScenario, exact_pdf, gaussian_pdf


def gaussian_snapshot(grid, mean=0.0, var=0.25, time=0.0):
    return PdfSnapshot.wrap(grid, time, gaussian_pdf(grid.points, mean, var))


def test_drift_registry_derivatives_match_finite_differences():
    x = np.linspace(-1.5, 1.5, 7)
    eps = 1e-6
    for name, (g, gp) in DRIFT_FUNCTIONS.items():
        fd = (g(x + eps) - g(x - eps)) / (2 * eps)
        assert np.allclose(gp(x), fd, rtol=1e-7, atol=1e-7), name


def test_drift_spec_basics():
    cubic = DriftSpec.from_named([(-1.0, "x"), (-0.5, "x^3")])
    assert cubic.eta == -1.0
    assert not cubic.is_linear
    assert cubic.n_basis == 2
    assert len(cubic.nonlinear_terms) == 1
    x = np.array([0.0, 1.0, 2.0])
    assert np.allclose(cubic.h(x), [-0.0, -1.5, -6.0])
    assert np.allclose(cubic.h_prime(x), [-1.0, -2.5, -7.0])
    linear = DriftSpec.linear(-0.3)
    assert linear.is_linear
    assert linear.eta == -0.3


def test_drift_spec_validation():
    with pytest.raises(ValueError):
        DriftSpec(())
    with pytest.raises(ValueError):
        DriftSpec.from_named([(-0.5, "x^3")])
    with pytest.raises(ValueError):
        DriftTerm(1.0, "exp")


def test_multi_indices_enumeration():
    assert multi_indices(1, 3) == [(3,)]
    assert multi_indices(2, 2) == [(2, 0), (1, 1), (0, 2)]
    assert multi_indices(3, 1) == [(1, 0, 0), (0, 1, 0), (0, 0, 1)]
    assert multi_indices(0, 0) == [()]
    assert multi_indices(0, 2) == []
    assert len(multi_indices(3, 4)) == 15


def test_response_moments_linear_drift_is_exact():
    grid = PdfGrid(-5.0, 5.0, 256)
    pdf = gaussian_snapshot(grid, mean=0.4, var=0.3)
    drift = DriftSpec.linear(-1.25)
    r_h, r_basis = response_moments(pdf, drift)
    assert r_h == -1.25
    assert r_basis.shape == (1,)
    assert r_basis[0] == 1.0


def test_response_moments_cubic_drift():
    grid = PdfGrid(-6.0, 6.0, 1024)
    m, v = 0.2, 0.3
    pdf = gaussian_snapshot(grid, mean=m, var=v)
    drift = DriftSpec.from_named([(-1.0, "x"), (-0.5, "x^3")])
    r_h, r_basis = response_moments(pdf, drift)
    e_3x2 = 3 * (v + m**2)
    assert r_basis[0] == 1.0
    assert r_basis[1] == pytest.approx(e_3x2, rel=1e-6)
    assert r_h == pytest.approx(-1.0 - 0.5 * e_3x2, rel=1e-6)


def test_build_coefficients_order_zero_is_flat():
    grid = PdfGrid(-3.0, 3.0, 64)
    drift = DriftSpec.from_named([(-1.0, "x"), (-0.5, "x^3")])
    _, r_basis = response_moments(gaussian_snapshot(grid), drift)
    coeffs = build_coefficients(drift, grid.points, r_basis, np.array([0.37]), order=0)
    assert np.array_equal(coeffs.bracket(), np.full(64, 0.37))


def test_build_coefficients_cubic_closure_shape():
    grid = PdfGrid(-3.0, 3.0, 64)
    x = grid.points
    drift = DriftSpec.from_named([(-1.0, "x"), (-0.5, "x^3")])
    pdf = gaussian_snapshot(grid, mean=0.0, var=0.5)
    _, r_basis = response_moments(pdf, drift)
    d = np.array([0.3, 0.1, 0.05])
    coeffs = build_coefficients(drift, x, r_basis, d, order=2)
    assert coeffs.alphas == ((1,), (2,))
    phi = -0.5 * (3 * x**2 - r_basis[1])
    expected = d[0] + d[1] * phi + d[2] * 0.5 * phi**2
    assert np.allclose(coeffs.bracket(), expected, rtol=1e-13)


def test_rhs_conserves_mass():
    grid = PdfGrid(-8.0, 8.0, 512)
    pdf = gaussian_snapshot(grid, mean=0.1, var=0.4)
    rhs = rhs_linear(pdf, eta=-1.0, kappa=1.0, m_xi_t=0.3, d_eff_t=0.4)
    # flux form: the interior telescopes, boundary flux carries ~1e-35 mass
    assert abs(np.trapezoid(rhs, grid.points)) <= 1e-9


def test_modes_identical_on_linear_drift():
    # the closure path degenerates exactly to the linear path when the drift
    # has no nonlinear terms, for any closure order
    cfg = make_scenario(
        grid=TimeGrid.uniform(0.0, 1.0, 101),
        pdf_grid=PdfGrid(-7.0, 8.0, 256),
        output_times=(0.5, 1.0),
    )
    ref = solve(cfg, mode="linear")
    for order in (0, 2):
        cfg_m = make_scenario(
            grid=cfg.time_grid,
            pdf_grid=cfg.pdf_grid,
            closure_order=order,
            output_times=(0.5, 1.0),
        )
        got = solve(cfg_m, mode="genfpk")
        assert got.metadata.n_steps == ref.metadata.n_steps
        for a, b in zip(got.snapshots, ref.snapshots):
            assert np.array_equal(a.values, b.values)


def test_linear_solver_tracks_exact_gaussian():
    cfg = make_scenario(
        grid=TimeGrid.uniform(0.0, 1.0, 201),
        pdf_grid=PdfGrid(-7.0, 8.0, 512),
        output_times=(0.5, 1.0),
    )
    traj = solve(cfg, mode="linear")
    sc = LinearScenario(eta=cfg.drift.eta, kappa=cfg.kappa, model=cfg.model, grid=cfg.time_grid)
    x = traj.x_grid.points
    for snap in traj.snapshots[1:]:
        ref = exact_pdf(sc, snap.time, x)
        l1 = np.trapezoid(np.abs(snap.values - ref), x)
        assert l1 <= 2e-3
    assert traj.metadata.negative_diffusion_steps == 0
    assert max(traj.metadata.mass_drift_history) <= 1e-6
    assert traj.metadata.n_steps == len(traj.metadata.dt_history)


def test_noise_free_transport_matches_moments():
    cfg = make_scenario(
        kappa=0.0,
        model=quiet_model(mean_x0=0.5, var_x0=0.2),
        grid=TimeGrid.uniform(0.0, 1.0, 101),
        pdf_grid=PdfGrid(-4.0, 5.0, 512),
        output_times=(1.0,),
    )
    traj = solve(cfg, mode="linear")
    snap = traj.snapshots[-1]
    mass, mean, var = grid_pdf_moments(snap.grid.points, snap.values)
    assert mass == pytest.approx(1.0, abs=1e-9)
    assert mean == pytest.approx(0.5 * np.exp(-1.0), abs=5e-3)
    assert var == pytest.approx(0.2 * np.exp(-2.0), abs=5e-3)


def test_pde_residual_shrinks_under_spatial_refinement():
    # insert the exact evolving gaussian into the discrete operator and
    # compare against its exact time derivative; the defect is O(dx^2)
    cfg = make_scenario(grid=TimeGrid.uniform(0.0, 1.0, 401))
    sc = LinearScenario(eta=cfg.drift.eta, kappa=cfg.kappa, model=cfg.model, grid=cfg.time_grid)
    from nfkit.effective_noise import effective_intensity_linear_at

    t, dt = 0.5, 1e-5
    d_t = effective_intensity_linear_at(cfg.model, cfg.drift.eta, cfg.kappa, cfg.time_grid, t)
    m_t = float(cfg.model.m_xi(t))

    def residual(n_x):
        grid = PdfGrid(-7.0, 8.0, n_x)
        x = grid.points
        snap = PdfSnapshot.wrap(grid, t, exact_pdf(sc, t, x))
        rhs = rhs_linear(snap, cfg.drift.eta, cfg.kappa, m_t, d_t)
        dfdt = (exact_pdf(sc, t + dt, x) - exact_pdf(sc, t - dt, x)) / (2 * dt)
        interior = slice(1, -1)
        return np.max(np.abs(rhs - dfdt)[interior])

    r_coarse, r_fine = residual(256), residual(512)
    assert r_coarse / r_fine >= 3.5


def test_step_instability_detected():
    grid = PdfGrid(-1.0, 1.0, 201)
    pdf = gaussian_snapshot(grid, var=0.05)

    def rhs(t, f):
        return rhs_linear(PdfSnapshot.wrap(grid, t, f), 0.0, 0.0, 0.0, 1.0)

    with pytest.raises(Instability):
        step(pdf, rhs, dt=0.05)
    small = step(pdf, rhs, dt=1e-6)
    assert small.mass == pytest.approx(1.0, abs=1e-9)


def test_solve_validation():
    cfg = make_scenario()
    with pytest.raises(ValueError):
        solve(cfg, mode="spectral")
    cubic = make_scenario(drift=DriftSpec.from_named([(-1.0, "x"), (-0.5, "x^3")]))
    with pytest.raises(ValueError):
        solve(cubic, mode="linear")
    with pytest.raises(ValueError):
        solve(make_scenario(output_times=(2.0,)))
    with pytest.raises(ValueError):
        solve(make_scenario(closure_order=-1))
    with pytest.raises(DegenerateVariance):
        solve(make_scenario(model=quiet_model(var_x0=0.0)))


def test_degenerate_time_window():
    cfg = make_scenario(output_times=(0.0,))
    traj = solve(cfg, mode="linear")
    assert traj.metadata.n_steps == 0
    assert list(traj.times) == [0.0]
    assert traj.snapshots[0].mass == pytest.approx(1.0, abs=1e-12)


def test_auto_domain_covers_trajectory():
    cfg = make_scenario(pdf_grid=None, grid=TimeGrid.uniform(0.0, 1.0, 101))
    domain = auto_domain(cfg.drift, cfg.model, cfg.kappa, cfg.time_grid)
    assert domain.x_min < cfg.model.m_x0 < domain.x_max
    assert domain.n_x == 1024
    traj = solve(cfg, mode="linear")
    assert traj.snapshots[-1].mass == pytest.approx(1.0, abs=1e-6)
    assert traj.metadata.boundary_mass_max <= 1e-8


def test_history_recorded_at_nodes():
    grid = TimeGrid.uniform(0.0, 1.0, 41)
    cfg = make_scenario(grid=grid, pdf_grid=PdfGrid(-7.0, 8.0, 128), output_times=(1.0,))
    traj = solve(cfg, mode="linear")
    assert traj.history.n_filled == grid.n_points
    assert np.all(traj.history.r_h[: grid.n_points] == cfg.drift.eta)
    partial = solve(make_scenario(grid=grid, pdf_grid=PdfGrid(-7.0, 8.0, 128), output_times=(0.5,)))
    assert partial.history.n_filled == 21
