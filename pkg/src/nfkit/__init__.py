"""Correlation-splitting identities and response-pdf evolution for random
differential equations driven by coloured Gaussian noise correlated with a
Gaussian initial value.

The package has three layers:

* exact finite-dimensional identities on polynomial functionals
  (:mod:`nfkit.polynomials`, :mod:`nfkit.nf_core`);
* the linear-drift closed forms and the closure solver for nonlinear drifts
  (:mod:`nfkit.effective_noise`, :mod:`nfkit.linear_exact`,
  :mod:`nfkit.genfpk_solver`);
* Monte Carlo ground truth and batch tooling
  (:mod:`nfkit.mc_oracle`, :mod:`nfkit.scenario`, :mod:`nfkit.cli`).
"""

__version__ = "0.1.0"

from .effective_noise import (
    EffectiveIntensitySeries,
    ResponseMomentHistory,
    effective_intensity_linear,
    effective_intensity_linear_at,
    generalized_intensities,
    generalized_intensity_series,
    intensities_at,
)
from .errors import (
    Blowup,
    DegenerateVariance,
    DegreeCapExceeded,
    DimensionMismatch,
    GridMismatch,
    HistoryTooShort,
    Instability,
    NfkitError,
    NonPositiveSemidefinite,
    OutOfDomain,
    ParseError,
    ValidationError,
)
from .gaussian_model import (
    RNG_ALGORITHM,
    GaussianInputModel,
    JointCovariance,
    KernelSpec,
    assemble_joint,
    kernel_eval,
    sample_joint,
    sample_joint_with,
)
from .genfpk_solver import (
    DriftSpec,
    DriftTerm,
    GenFpkCoefficients,
    PdfSnapshot,
    PdfTrajectory,
    build_coefficients,
    multi_indices,
    response_moments,
    rhs_genfpk,
    rhs_linear,
    solve,
    step,
)
from .grids import PdfGrid, TimeGrid, cumulative_trapezoid, trapezoid_weights
from .linear_exact import (
    GaussianMomentTrajectory,
    LinearScenario,
    char_function,
    closed_form_moments,
    closed_form_trajectory,
    exact_pdf,
    gaussian_pdf,
    moment_odes_integrate,
)
from .mc_oracle import (
    GAUSSIAN_KDE,
    HISTOGRAM,
    PathEnsemble,
    estimate_pdf,
    l1_distance,
    moment_check,
    nf_empirical_check,
    simulate,
    variational_check,
)
from .nf_core import (
    DEFAULT_DEGREE_CAP,
    GaussianMomentSpec,
    VariableLayout,
    apply_quadratic_shift,
    averaged_shift_expectation,
    gaussian_expectation,
    isserlis_moment,
    lemma_residuals,
    nf_lhs,
    nf_rhs,
    nf_rhs_terms,
)
from .polynomials import MultiPolynomial, parse_polynomial
from .scenario import ScenarioConfig, TimeFunction, parse_scenario, serialize
