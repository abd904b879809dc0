import numpy as np
import pytest

from conftest import make_model, quiet_model
from nfkit import (
    GaussianInputModel,
    KernelSpec,
    NonPositiveSemidefinite,
    OutOfDomain,
    TimeFunction,
    TimeGrid,
    assemble_joint,
    kernel_eval,
    sample_joint,
    sample_joint_with,
)


def test_exponential_kernel_value():
    k = KernelSpec.exponential(sigma2=1.2, tau=0.5)
    assert kernel_eval(k, 1.0, 0.0) == pytest.approx(1.2 * np.exp(-2.0), rel=1e-14)
    assert kernel_eval(k, 0.0, 1.0) == kernel_eval(k, 1.0, 0.0)
    assert kernel_eval(k, 3.0, 3.0) == pytest.approx(1.2)


def test_squared_exponential_kernel_value():
    k = KernelSpec.squared_exponential(sigma2=2.0, tau=1.0)
    assert kernel_eval(k, 1.0, 0.0) == pytest.approx(2.0 * np.exp(-0.5), rel=1e-14)
    assert kernel_eval(k, -1.0, 1.0) == pytest.approx(2.0 * np.exp(-2.0), rel=1e-14)


def test_kernel_eval_broadcasts():
    k = KernelSpec.exponential(sigma2=1.0, tau=1.0)
    s = np.linspace(0.0, 1.0, 4)
    m = kernel_eval(k, s[:, None], s[None, :])
    assert m.shape == (4, 4)
    assert np.allclose(m, m.T)
    assert np.allclose(np.diag(m), 1.0)
    assert isinstance(kernel_eval(k, 0.5, 0.25), float)


def test_kernel_spec_validation():
    with pytest.raises(ValueError):
        KernelSpec("brownian")
    with pytest.raises(ValueError):
        KernelSpec.exponential(sigma2=-1.0, tau=1.0)
    with pytest.raises(ValueError):
        KernelSpec.exponential(sigma2=1.0, tau=0.0)


def test_table_kernel_on_nodes_only():
    times = np.array([0.0, 0.5, 1.0])
    values = np.array([[1.0, 0.5, 0.2], [0.5, 1.0, 0.5], [0.2, 0.5, 1.0]])
    k = KernelSpec.table(times, values)
    assert not k.stationary
    assert kernel_eval(k, 0.5, 1.0) == pytest.approx(0.5)
    got = kernel_eval(k, times[:, None], times[None, :])
    assert np.array_equal(got, values)
    with pytest.raises(OutOfDomain):
        kernel_eval(k, 0.25, 0.5)
    with pytest.raises(OutOfDomain):
        kernel_eval(k, 2.0, 0.0)


def test_table_kernel_validation():
    times = np.array([0.0, 1.0])
    with pytest.raises(ValueError):
        KernelSpec.table(times, np.array([[1.0, 0.3], [0.4, 1.0]]))
    with pytest.raises(ValueError):
        KernelSpec.table(np.array([1.0, 0.0]), np.eye(2))
    with pytest.raises(ValueError):
        KernelSpec.table(times, np.eye(3))


def test_table_kernel_from_csv(tmp_path):
    path = tmp_path / "kernel.csv"
    rows = ["s1,s2,value"]
    times = [0.0, 1.0]
    values = {(0.0, 0.0): 1.0, (0.0, 1.0): 0.3, (1.0, 0.0): 0.3, (1.0, 1.0): 1.0}
    for (a, b), v in values.items():
        rows.append(f"{a},{b},{v}")
    path.write_text("\n".join(rows) + "\n")
    k = KernelSpec.from_csv(path)
    assert np.array_equal(k.table_times, times)
    assert kernel_eval(k, 0.0, 1.0) == pytest.approx(0.3)


def test_table_kernel_csv_errors(tmp_path):
    bad_header = tmp_path / "bad.csv"
    bad_header.write_text("a,b,c\n0,0,1\n")
    with pytest.raises(ValueError):
        KernelSpec.from_csv(bad_header)
    missing = tmp_path / "missing.csv"
    missing.write_text("s1,s2,value\n0,0,1\n0,1,0.3\n1,1,1\n")
    with pytest.raises(ValueError):
        KernelSpec.from_csv(missing)


def test_model_validation():
    with pytest.raises(ValueError):
        GaussianInputModel(
            m_x0=0.0,
            c_x0x0=-0.1,
            m_xi=TimeFunction("zero"),
            kernel=KernelSpec.exponential(1.0, 1.0),
            cross=TimeFunction("zero"),
        )


def test_assemble_joint_structure():
    model = make_model()
    grid = TimeGrid.uniform(0.0, 1.0, 6)
    cov = assemble_joint(model, grid)
    assert cov.dim == 7
    assert cov.matrix[0, 0] == model.c_x0x0
    assert np.allclose(cov.matrix, cov.matrix.T)
    assert np.array_equal(cov.matrix[0, 1:], model.cross(grid.points))
    assert np.array_equal(cov.matrix[1:, 0], model.cross(grid.points))
    assert cov.mean[0] == model.m_x0
    assert np.allclose(cov.mean[1:], model.m_xi(grid.points))
    assert cov.jitter >= 0.0


def test_assemble_joint_rejects_excessive_cross():
    model = GaussianInputModel(
        m_x0=0.0,
        c_x0x0=0.01,
        m_xi=TimeFunction("zero"),
        kernel=KernelSpec.exponential(1.0, 1.0),
        cross=TimeFunction("constant", value=5.0),
    )
    with pytest.raises(NonPositiveSemidefinite):
        assemble_joint(model, TimeGrid.uniform(0.0, 1.0, 4))


def test_assemble_joint_handles_near_singular_kernel():
    model = quiet_model(sigma2=1.0, tau=1.0)
    model = GaussianInputModel(
        m_x0=model.m_x0,
        c_x0x0=model.c_x0x0,
        m_xi=model.m_xi,
        kernel=KernelSpec.squared_exponential(1.0, 1.0),
        cross=model.cross,
    )
    cov = assemble_joint(model, TimeGrid.uniform(0.0, 1.0, 50))
    assert cov.dim == 51
    draws = sample_joint(cov, 100, seed=3)
    assert np.all(np.isfinite(draws))


def test_sample_joint_reproducible():
    cov = assemble_joint(make_model(), TimeGrid.uniform(0.0, 1.0, 5))
    a = sample_joint(cov, 64, seed=11)
    b = sample_joint(cov, 64, seed=11)
    c = sample_joint(cov, 64, seed=12)
    assert np.array_equal(a, b)
    assert a.shape == (64, 6)
    assert not np.array_equal(a, c)


def test_sample_joint_with_advances_stream():
    cov = assemble_joint(make_model(), TimeGrid.uniform(0.0, 1.0, 5))
    rng = np.random.default_rng(7)
    first = sample_joint_with(cov, 32, rng)
    second = sample_joint_with(cov, 32, rng)
    assert not np.array_equal(first, second)


def test_sample_moments_match_model():
    model = make_model()
    grid = TimeGrid.uniform(0.0, 1.0, 4)
    cov = assemble_joint(model, grid)
    draws = sample_joint(cov, 60000, seed=5)
    sample_mean = draws.mean(axis=0)
    centered = draws - sample_mean
    sample_cov = centered.T @ centered / (draws.shape[0] - 1)
    assert np.allclose(sample_mean, cov.mean, atol=0.02)
    assert np.allclose(sample_cov, cov.matrix, atol=0.03)


def test_degenerate_initial_value_stays_constant():
    model = quiet_model(var_x0=0.0)
    cov = assemble_joint(model, TimeGrid.uniform(0.0, 1.0, 4))
    draws = sample_joint(cov, 500, seed=2)
    assert np.max(np.abs(draws[:, 0] - model.m_x0)) < 1e-10
    assert draws[:, 1:].std() > 0.5
