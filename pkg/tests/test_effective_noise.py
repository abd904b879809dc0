import numpy as np
import pytest

from conftest import quiet_model
from nfkit import (
    GaussianInputModel,
    KernelSpec,
    ResponseMomentHistory,
    TimeFunction,
    TimeGrid,
    effective_intensity_linear,
    effective_intensity_linear_at,
    generalized_intensities,
    generalized_intensity_series,
    intensities_at,
)
from nfkit.effective_noise import integrate_kernel_weighted
from nfkit.errors import HistoryTooShort

# closed forms for the exponential kernel C(t,s) = sigma2 exp(-|t-s|/tau):
# with eta = -1, kappa = 1, sigma2 = tau = 1 and zero cross-covariance,
# D(t0+1) = int_0^1 e^{-2u} du = (1 - e^-2) / 2
D_EXP_KERNEL_T1 = 0.43233235838169365
# with zero response moment, kappa = 1, tau = 0.5 the first-order intensity is
# D_1(t0+1) = int_0^1 u e^{-u/tau} du = tau^2 - e^{-1/tau} (tau + tau^2)
D1_EXP_KERNEL_T1 = 0.14849853757254048


def test_linear_intensity_matches_closed_form():
    model = quiet_model(sigma2=1.0, tau=1.0)
    grid = TimeGrid.uniform(0.0, 1.0, 2000)
    d = effective_intensity_linear(model, eta=-1.0, kappa=1.0, grid=grid)
    assert abs(d[-1] - D_EXP_KERNEL_T1) <= 1e-6
    assert d[0] == 0.0


def test_linear_intensity_quadrature_converges_second_order():
    model = quiet_model(sigma2=1.0, tau=1.0)
    coarse = TimeGrid.uniform(0.0, 1.0, 251)
    fine = TimeGrid.uniform(0.0, 1.0, 501)
    e_coarse = abs(effective_intensity_linear(model, -1.0, 1.0, coarse)[-1] - D_EXP_KERNEL_T1)
    e_fine = abs(effective_intensity_linear(model, -1.0, 1.0, fine)[-1] - D_EXP_KERNEL_T1)
    assert e_coarse / e_fine >= 3.5


def test_linear_intensity_pure_boundary_term():
    # sigma2 = 0 removes the quadrature entirely; what is left is exact
    model = GaussianInputModel(
        m_x0=0.0,
        c_x0x0=0.5,
        m_xi=TimeFunction("zero"),
        kernel=KernelSpec.exponential(0.0, 1.0),
        cross=TimeFunction("expdecay", amplitude=0.3, rate=2.0),
    )
    grid = TimeGrid.uniform(0.0, 2.0, 41)
    kappa, eta = 1.5, -0.7
    d = effective_intensity_linear(model, eta, kappa, grid)
    expected = kappa * np.exp(eta * grid.points) * 0.3 * np.exp(-2.0 * grid.points)
    assert np.allclose(d, expected, rtol=1e-12)


def test_linear_intensity_at_matches_node_values():
    model = quiet_model()
    grid = TimeGrid.uniform(0.0, 1.0, 101)
    series = effective_intensity_linear(model, -1.0, 0.8, grid)
    at = effective_intensity_linear_at(model, -1.0, 0.8, grid, grid.points[40])
    assert at == pytest.approx(series[40], rel=1e-14)
    with pytest.raises(ValueError):
        effective_intensity_linear_at(model, -1.0, 0.8, grid, 1.5)


def test_generalized_matches_linear_for_constant_history():
    model = quiet_model(sigma2=0.8, tau=0.6)
    grid = TimeGrid.uniform(0.0, 1.0, 300)
    eta, kappa = -1.2, 0.7
    linear = effective_intensity_linear(model, eta, kappa, grid)
    history = ResponseMomentHistory.constant(grid, eta)
    series = generalized_intensity_series(model, history, kappa, order=0)
    assert series.order == 0
    assert series.values.shape == (1, grid.n_points)
    assert np.max(np.abs(series.values[0] - linear)) <= 1e-12


def test_first_order_intensity_closed_form():
    model = quiet_model(sigma2=1.0, tau=0.5)
    grid = TimeGrid.uniform(0.0, 1.0, 2000)
    history = ResponseMomentHistory.constant(grid, 0.0)
    d = generalized_intensities(model, history, kappa=1.0, t_index=grid.n_points - 1, order=1)
    assert d.shape == (2,)
    assert abs(d[1] - D1_EXP_KERNEL_T1) <= 1e-6


def test_intensity_series_boundary_value_at_start():
    # at t0 the memory integral is empty and only the cross term survives
    model = GaussianInputModel(
        m_x0=0.0,
        c_x0x0=0.5,
        m_xi=TimeFunction("zero"),
        kernel=KernelSpec.exponential(1.0, 1.0),
        cross=TimeFunction("constant", value=0.2),
    )
    grid = TimeGrid.uniform(0.0, 1.0, 50)
    history = ResponseMomentHistory.constant(grid, -1.0)
    series = generalized_intensity_series(model, history, kappa=2.0, order=2)
    assert series.values[0, 0] == pytest.approx(0.4, rel=1e-14)
    assert series.values[1, 0] == 0.0
    assert series.values[2, 0] == 0.0


def test_history_append_and_times():
    grid = TimeGrid.uniform(0.0, 1.0, 5)
    h = ResponseMomentHistory.empty(grid, n_basis=2)
    assert h.n_filled == 0
    h.append(-1.0, [1.0, 0.5])
    h.append(-0.9, [1.0, 0.4])
    assert h.n_filled == 2
    assert np.array_equal(h.times, grid.points[:2])
    assert np.array_equal(h.r_basis[:, 1], [1.0, 0.4])
    for _ in range(3):
        h.append(-0.8, [1.0, 0.3])
    with pytest.raises(IndexError):
        h.append(-0.7, [1.0, 0.2])


def test_intensities_at_node_agrees_with_series():
    model = quiet_model()
    grid = TimeGrid.uniform(0.0, 1.0, 60)
    history = ResponseMomentHistory.constant(grid, -1.0)
    series = generalized_intensity_series(model, history, kappa=1.0, order=2)
    at = intensities_at(model, 1.0, history, grid.points[30], order=2)
    # a partially filled history must give the same answer up to its end
    partial = ResponseMomentHistory(
        grid=grid,
        r_h=history.r_h.copy(),
        r_basis=history.r_basis.copy(),
        n_filled=31,
    )
    at_partial = intensities_at(model, 1.0, partial, grid.points[30], order=2)
    assert np.allclose(at, series.values[:, 30], rtol=1e-13, atol=1e-15)
    assert np.allclose(at_partial, at, rtol=1e-14, atol=0.0)


def test_intensities_at_interpolates_between_nodes():
    model = quiet_model()
    grid = TimeGrid.uniform(0.0, 1.0, 11)
    history = ResponseMomentHistory.constant(grid, -1.0)
    t_mid = 0.5 * (grid.points[3] + grid.points[4])
    mid = intensities_at(model, 1.0, history, t_mid, order=0)
    lo = intensities_at(model, 1.0, history, grid.points[3], order=0)
    hi = intensities_at(model, 1.0, history, grid.points[4], order=0)
    assert min(lo[0], hi[0]) <= mid[0] <= max(lo[0], hi[0])


def test_intensities_at_allows_one_interval_extension():
    model = quiet_model()
    grid = TimeGrid.uniform(0.0, 1.0, 11)
    partial = ResponseMomentHistory.empty(grid, n_basis=1)
    partial.append(-1.0, [1.0])
    partial.append(-1.0, [1.0])
    # history ends at node 1 (t = 0.1); one interval ahead is fine
    val = intensities_at(model, 1.0, partial, 0.15, order=0)
    assert np.isfinite(val[0])
    with pytest.raises(HistoryTooShort):
        intensities_at(model, 1.0, partial, 0.35, order=0)
    with pytest.raises(HistoryTooShort):
        intensities_at(model, 1.0, partial, -0.1, order=0)
    empty = ResponseMomentHistory.empty(grid, n_basis=1)
    with pytest.raises(HistoryTooShort):
        intensities_at(model, 1.0, empty, 0.0, order=0)


def test_integrate_kernel_weighted():
    pts = np.linspace(0.0, 1.0, 1500)
    kernel = KernelSpec.exponential(1.0, 1.0)
    got = integrate_kernel_weighted(kernel, lambda s: np.ones_like(s), pts, t=1.0)
    assert got == pytest.approx(1.0 - np.exp(-1.0), abs=1e-6)
    with pytest.raises(ValueError):
        integrate_kernel_weighted(kernel, lambda s: np.ones_like(s), pts)
    plain = integrate_kernel_weighted(lambda s: s, lambda s: np.ones_like(s), pts)
    assert plain == pytest.approx(0.5, rel=1e-12)
