"""Shared builders for scenario objects used across the test modules."""

import numpy as np

from nfkit import (
    DriftSpec,
    GaussianInputModel,
    KernelSpec,
    ScenarioConfig,
    TimeFunction,
    TimeGrid,
)


def make_model(
    mean_x0=0.5,
    var_x0=0.2,
    xi_amplitude=0.5,
    sigma2=1.0,
    tau=1.0,
    cross_amplitude=0.2,
):
    return GaussianInputModel(
        m_x0=mean_x0,
        c_x0x0=var_x0,
        m_xi=TimeFunction("sinusoid", amplitude=xi_amplitude, frequency=1.0),
        kernel=KernelSpec("exponential", sigma2=sigma2, tau=tau),
        cross=TimeFunction("expdecay", amplitude=cross_amplitude, rate=1.0),
    )


def quiet_model(mean_x0=0.5, var_x0=0.2, sigma2=1.0, tau=1.0):
    """Zero-mean excitation, zero cross-covariance."""
    return GaussianInputModel(
        m_x0=mean_x0,
        c_x0x0=var_x0,
        m_xi=TimeFunction("zero"),
        kernel=KernelSpec("exponential", sigma2=sigma2, tau=tau),
        cross=TimeFunction("zero"),
    )


def make_scenario(
    name="case",
    drift=None,
    kappa=1.0,
    model=None,
    grid=None,
    pdf_grid=None,
    closure_order=2,
    output_times=None,
    n_paths=2000,
    seed=0,
    estimator="gaussian_kde",
    tolerances=None,
    **model_kw,
):
    drift = drift if drift is not None else DriftSpec.linear(-1.0)
    model = model if model is not None else make_model(**model_kw)
    grid = grid if grid is not None else TimeGrid.uniform(0.0, 1.0, 101)
    outputs = tuple(output_times) if output_times is not None else (grid.t_end,)
    return ScenarioConfig(
        name=name,
        drift=drift,
        kappa=kappa,
        input_model=model,
        time_grid=grid,
        pdf_grid=pdf_grid,
        closure_order=closure_order,
        output_times=outputs,
        tolerances=dict(tolerances or {}),
        n_paths=n_paths,
        seed=seed,
        estimator=estimator,
    )


def grid_pdf_moments(x, f):
    mass = np.trapezoid(f, x)
    mean = np.trapezoid(x * f, x) / mass
    var = np.trapezoid((x - mean) ** 2 * f, x) / mass
    return mass, mean, var
