"""Finite-difference evolution of the response pdf.

The equation marched here is

``df/dt = -d/dx[(h(x) + kappa m_xi(t)) f] + d2/dx2[ B(x, t) f ]``

where the diffusion bracket ``B`` collapses the excitation memory into
time-local coefficients: ``B = D_0(t)`` for a linear drift (the exact case),
and ``B = D_0(t) + sum_m D_m(t) sum_{|alpha|=m} Phi^alpha(x)/alpha!`` for the
closure of order ``M`` around a nonlinear drift, with
``phi_k(x) = eta_k (g_k'(x) - E[g_k'(X(t))])`` built from the nonlinear basis
functions only.

Spatial discretization is second-order central differences with the drift in
flux form and homogeneous Dirichlet boundaries; time stepping is the
classical fourth-order one-step method with a conservative stability bound
re-evaluated every step.  Response moments feeding the coefficients are
measured at step starts and recorded on the scenario grid nodes, so the
intensity quadratures of :mod:`nfkit.effective_noise` see the same node set
regardless of how many stability sub-steps run between nodes.  A linear-mode
solve and a closure solve of a structurally linear drift follow the exact
same code path and produce bit-identical trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .effective_noise import ResponseMomentHistory, intensities_at
from .errors import DegenerateVariance, Instability
from .gaussian_model import GaussianInputModel
from .grids import PdfGrid, TimeGrid
from .linear_exact import LinearScenario, closed_form_trajectory, gaussian_pdf

# Per-step loss of probability mass (before renormalization) above which the
# march is declared unstable.
MASS_DRIFT_LIMIT = 1e-2

# dt = CFL_SAFETY * min(dx^2 / (2 max|B|), dx / max|drift|)
CFL_SAFETY = 0.4

_MAX_STEPS = 2_000_000


# -- drift basis -----------------------------------------------------------------

DRIFT_FUNCTIONS = {
    "x": (lambda x: x, lambda x: np.ones_like(x)),
    "x^2": (lambda x: x**2, lambda x: 2.0 * x),
    "x^3": (lambda x: x**3, lambda x: 3.0 * x**2),
    "x^5": (lambda x: x**5, lambda x: 5.0 * x**4),
    "sin": (np.sin, np.cos),
    "tanh": (np.tanh, lambda x: 1.0 / np.cosh(x) ** 2),
}


@dataclass(frozen=True)
class DriftTerm:
    """One basis contribution ``coefficient * g(x)`` with ``g`` named in
    :data:`DRIFT_FUNCTIONS`."""

    coefficient: float
    name: str

    def __post_init__(self):
        if self.name not in DRIFT_FUNCTIONS:
            raise ValueError(f"unknown drift basis function {self.name!r}; known: {sorted(DRIFT_FUNCTIONS)}")

    def g(self, x):
        return DRIFT_FUNCTIONS[self.name][0](x)

    def g_prime(self, x):
        return DRIFT_FUNCTIONS[self.name][1](x)


@dataclass(frozen=True)
class DriftSpec:
    """Drift ``h(x) = sum_k eta_k g_k(x)`` with ``g_1(x) = x`` by convention."""

    terms: tuple[DriftTerm, ...]

    def __post_init__(self):
        if not self.terms:
            raise ValueError("drift needs at least the linear basis term")
        if self.terms[0].name != "x":
            raise ValueError("the first drift basis function must be 'x' (the linear part)")

    @classmethod
    def linear(cls, eta: float) -> "DriftSpec":
        return cls((DriftTerm(eta, "x"),))

    @classmethod
    def from_named(cls, pairs) -> "DriftSpec":
        return cls(tuple(DriftTerm(float(c), str(n)) for c, n in pairs))

    @property
    def eta(self) -> float:
        return self.terms[0].coefficient

    @property
    def nonlinear_terms(self) -> tuple[DriftTerm, ...]:
        return self.terms[1:]

    @property
    def n_basis(self) -> int:
        return len(self.terms)

    @property
    def is_linear(self) -> bool:
        return len(self.terms) == 1

    def h(self, x):
        out = 0.0
        for term in self.terms:
            out = out + term.coefficient * term.g(x)
        return out

    def h_prime(self, x):
        out = 0.0
        for term in self.terms:
            out = out + term.coefficient * term.g_prime(x)
        return out


# -- pdf containers -------------------------------------------------------------


@dataclass(frozen=True)
class PdfSnapshot:
    """Discretized density at one time; ``mass`` is its trapezoid integral."""

    grid: PdfGrid
    time: float
    values: np.ndarray
    mass: float

    @classmethod
    def wrap(cls, grid: PdfGrid, time: float, values: np.ndarray) -> "PdfSnapshot":
        values = np.asarray(values, dtype=float)
        return cls(grid, float(time), values, float(np.trapezoid(values, grid.points)))


@dataclass
class SolveMetadata:
    """March diagnostics kept alongside the solution snapshots."""

    mode: str
    closure_order: int
    domain: tuple[float, float]
    n_x: int
    n_steps: int = 0
    dt_history: list = field(default_factory=list)
    mass_drift_history: list = field(default_factory=list)
    clipped_total: float = 0.0
    negative_diffusion_steps: int = 0
    min_bracket: float = np.inf
    boundary_mass_max: float = 0.0

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "closure_order": self.closure_order,
            "domain": list(self.domain),
            "n_x": self.n_x,
            "n_steps": self.n_steps,
            "dt_min": float(np.min(self.dt_history)) if self.dt_history else None,
            "dt_max": float(np.max(self.dt_history)) if self.dt_history else None,
            "dt_history": [float(v) for v in self.dt_history],
            "mass_drift_max": float(np.max(self.mass_drift_history)) if self.mass_drift_history else 0.0,
            "clipped_total": float(self.clipped_total),
            "negative_diffusion_steps": self.negative_diffusion_steps,
            "min_bracket": float(self.min_bracket) if np.isfinite(self.min_bracket) else None,
            "boundary_mass_max": float(self.boundary_mass_max),
        }


@dataclass(frozen=True)
class PdfTrajectory:
    """Snapshots at the requested output times plus march diagnostics."""

    x_grid: PdfGrid
    times: np.ndarray
    snapshots: list[PdfSnapshot]
    metadata: SolveMetadata
    history: ResponseMomentHistory | None = None


# -- closure coefficients --------------------------------------------------------


def multi_indices(n_components: int, total: int) -> list[tuple[int, ...]]:
    """All multi-indices of the given length with ``|alpha| = total``, lex order."""
    if n_components == 0:
        return [()] if total == 0 else []
    out = []
    for first in range(total, -1, -1):
        for rest in multi_indices(n_components - 1, total - first):
            out.append((first,) + rest)
    return out


@dataclass(frozen=True)
class GenFpkCoefficients:
    """Time-local diffusion data: intensities plus frozen closure tables.

    ``phi_alpha`` rows hold ``Phi^alpha(x) / alpha!`` for each multi-index
    over the nonlinear basis, graded lexicographically.
    """

    order: int
    d_m: np.ndarray
    alphas: tuple[tuple[int, ...], ...]
    phi_alpha: np.ndarray

    def bracket(self, d_m: np.ndarray | None = None) -> np.ndarray:
        """Diffusion bracket ``B(x)``; ``d_m`` overrides the stored
        intensities (the march re-evaluates them at stage times)."""
        d = self.d_m if d_m is None else d_m
        out = np.full(self.phi_alpha.shape[1], d[0])
        for row, alpha in enumerate(self.alphas):
            out = out + d[sum(alpha)] * self.phi_alpha[row]
        return out


def build_coefficients(
    drift: DriftSpec,
    x: np.ndarray,
    r_basis: np.ndarray,
    d_m: np.ndarray,
    order: int,
) -> GenFpkCoefficients:
    """Assemble the closure tables from step-start response moments.

    ``phi_k(x) = eta_k (g_k'(x) - r_k)`` over the nonlinear basis terms only;
    a closure of order 0, or a drift with no nonlinear terms, yields a bare
    ``D_0`` bracket.
    """
    nl = drift.nonlinear_terms
    phis = [
        term.coefficient * (term.g_prime(x) - r_basis[k + 1])
        for k, term in enumerate(nl)
    ]
    alphas = []
    for m in range(1, order + 1):
        alphas.extend(multi_indices(len(nl), m))
    rows = np.empty((len(alphas), x.size))
    for row, alpha in enumerate(alphas):
        vals = np.ones_like(x)
        scale = 1.0
        for k, a in enumerate(alpha):
            if a:
                vals = vals * phis[k] ** a
                scale *= factorial(a)
        rows[row] = vals / scale
    return GenFpkCoefficients(order=order, d_m=np.asarray(d_m, dtype=float), alphas=tuple(alphas), phi_alpha=rows)


# -- discrete operators ----------------------------------------------------------


def response_moments(pdf: PdfSnapshot, drift: DriftSpec) -> tuple[float, np.ndarray]:
    """Normalized expectations ``E[h'(X)]`` and ``E[g_k'(X)]`` under the pdf.

    Normalizing by the pdf mass keeps constant derivatives exact: the linear
    basis always reports exactly 1, so a linear drift reports exactly
    ``eta`` whatever the discretized pdf looks like.
    """
    x = pdf.grid.points
    mass = np.trapezoid(pdf.values, x)
    r_basis = np.array(
        [np.trapezoid(term.g_prime(x) * pdf.values, x) / mass for term in drift.terms]
    )
    r_h = 0.0
    for term, r in zip(drift.terms, r_basis):
        r_h += term.coefficient * r
    return r_h, r_basis


def _field_rhs(values: np.ndarray, drift_coef: np.ndarray, bracket: np.ndarray, dx: float) -> np.ndarray:
    """Central-difference flux-form right-hand side with zero Dirichlet ghosts."""
    flux = drift_coef * values
    q = bracket * values
    out = np.empty_like(values)
    inv2dx = 1.0 / (2.0 * dx)
    invdx2 = 1.0 / (dx * dx)
    out[1:-1] = (flux[:-2] - flux[2:]) * inv2dx + (q[2:] - 2.0 * q[1:-1] + q[:-2]) * invdx2
    out[0] = -flux[1] * inv2dx + (q[1] - 2.0 * q[0]) * invdx2
    out[-1] = flux[-2] * inv2dx + (q[-2] - 2.0 * q[-1]) * invdx2
    return out


def rhs_linear(pdf: PdfSnapshot, eta: float, kappa: float, m_xi_t: float, d_eff_t: float) -> np.ndarray:
    """Right-hand side of the exact linear equation at one instant."""
    x = pdf.grid.points
    drift_coef = eta * x + kappa * m_xi_t
    bracket = np.full(x.size, float(d_eff_t))
    return _field_rhs(pdf.values, drift_coef, bracket, pdf.grid.dx)


def rhs_genfpk(
    pdf: PdfSnapshot,
    drift: DriftSpec,
    kappa: float,
    m_xi_t: float,
    coeffs: GenFpkCoefficients,
) -> np.ndarray:
    """Right-hand side of the closure equation at one instant."""
    x = pdf.grid.points
    drift_coef = drift.h(x) + kappa * m_xi_t
    return _field_rhs(pdf.values, drift_coef, coeffs.bracket(), pdf.grid.dx)


@dataclass(frozen=True)
class StepStats:
    mass_drift: float
    clipped: float


def _advance(pdf: PdfSnapshot, rhs, dt: float, t_new: float) -> tuple[PdfSnapshot, StepStats]:
    """One classical fourth-order step, then clip negatives and renormalize."""
    f = pdf.values
    t = pdf.time
    k1 = rhs(t, f)
    k2 = rhs(t + 0.5 * dt, f + (0.5 * dt) * k1)
    k3 = rhs(t + 0.5 * dt, f + (0.5 * dt) * k2)
    k4 = rhs(t_new, f + dt * k3)
    f_new = f + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    x = pdf.grid.points
    mass_pre = float(np.trapezoid(f_new, x))
    if not np.isfinite(mass_pre):
        raise Instability(f"non-finite mass after step to t={t_new}")
    drift = abs(mass_pre - pdf.mass)
    if drift > MASS_DRIFT_LIMIT:
        raise Instability(
            f"mass drifted by {drift:.3e} in one step at t={t_new}; dt={dt:.3e} exceeds stability"
        )
    clipped = 0.0
    if np.any(f_new < 0.0):
        clipped = -float(np.trapezoid(np.minimum(f_new, 0.0), x))
        f_new = np.maximum(f_new, 0.0)
    total = float(np.trapezoid(f_new, x))
    if total <= 0.0:
        raise Instability(f"pdf collapsed to zero mass at t={t_new}")
    f_new = f_new / total
    return PdfSnapshot.wrap(pdf.grid, t_new, f_new), StepStats(mass_drift=drift, clipped=clipped)


def step(pdf: PdfSnapshot, rhs, dt: float) -> PdfSnapshot:
    """Public one-step interface; ``rhs(t, values)`` supplies the field."""
    out, _ = _advance(pdf, rhs, dt, pdf.time + dt)
    return out


# -- full march -------------------------------------------------------------------


def auto_domain(drift: DriftSpec, model: GaussianInputModel, kappa: float, grid: TimeGrid, n_x: int = 1024) -> PdfGrid:
    """State domain sized to mean +- 10 sigma of the linear-theory envelope."""
    sc = LinearScenario(drift.eta, kappa, model, grid)
    traj = closed_form_trajectory(sc)
    sd = np.sqrt(np.clip(traj.variance, 0.0, None))
    lo = float(np.min(traj.mean - 10.0 * sd))
    hi = float(np.max(traj.mean + 10.0 * sd))
    if hi - lo <= 0.0:
        pad = max(1.0, abs(lo))
        lo, hi = lo - pad, hi + pad
    return PdfGrid(x_min=lo, x_max=hi, n_x=n_x)


def solve(config, mode: str = "genfpk") -> PdfTrajectory:
    """March the response pdf to the last requested output time.

    ``config`` is a scenario carrying ``drift``, ``model``, ``kappa``,
    ``time_grid``, optional ``pdf_grid``, ``closure_order`` and
    ``output_times``.  ``mode="linear"`` runs the exact linear equation
    (requires a structurally linear drift, uses closure order 0);
    ``mode="genfpk"`` runs the closure of ``config.closure_order``.
    """
    drift: DriftSpec = config.drift
    model: GaussianInputModel = config.model
    kappa = float(config.kappa)
    grid: TimeGrid = config.time_grid

    if mode not in ("linear", "genfpk"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "linear":
        if not drift.is_linear:
            raise ValueError("linear mode requires a drift with only the linear basis term")
        order = 0
    else:
        order = int(config.closure_order)
        if order < 0:
            raise ValueError("closure order must be >= 0")

    if model.c_x0x0 <= 0.0:
        raise DegenerateVariance("the initial pdf needs strictly positive variance")

    x_grid: PdfGrid = config.pdf_grid or auto_domain(drift, model, kappa, grid)
    x = x_grid.points
    dx = x_grid.dx

    outputs = sorted(set(float(t) for t in (config.output_times or (grid.t_end,))))
    for t in outputs:
        if not grid.t0 <= t <= grid.t_end:
            raise ValueError(f"output time {t} outside the grid span")
    t_target = outputs[-1]

    f0 = gaussian_pdf(x, model.m_x0, model.c_x0x0)
    f0 = f0 / np.trapezoid(f0, x)
    pdf = PdfSnapshot.wrap(x_grid, grid.t0, f0)

    meta = SolveMetadata(
        mode=mode,
        closure_order=order,
        domain=(x_grid.x_min, x_grid.x_max),
        n_x=x_grid.n_x,
    )

    history = ResponseMomentHistory.empty(grid, drift.n_basis)

    def record_node(snapshot: PdfSnapshot):
        if mode == "linear":
            history.append(drift.eta, np.ones(drift.n_basis))
        else:
            r_h, r_basis = response_moments(snapshot, drift)
            history.append(r_h, r_basis)

    record_node(pdf)

    snapshots = [pdf]
    snap_times = [grid.t0]

    # every grid node and output time must be landed on exactly
    events = np.unique(np.concatenate([grid.points, np.asarray(outputs)]))
    events = events[(events > grid.t0) & (events <= t_target)]
    out_set = set(outputs)

    event_ptr = 0
    node_ptr = 0
    h_x = drift.h(x)
    t = grid.t0
    while t < t_target:
        if meta.n_steps >= _MAX_STEPS:
            raise Instability(f"step budget exhausted after {meta.n_steps} steps at t={t}")

        # step-start closure tables (moments lagged to the step start)
        if mode == "linear":
            r_basis_now = np.ones(drift.n_basis)
        else:
            _, r_basis_now = response_moments(pdf, drift)
        d_now = intensities_at(model, kappa, history, t, order)
        coeffs = build_coefficients(drift, x, r_basis_now, d_now, order)
        bracket_now = coeffs.bracket()
        b_min = float(bracket_now.min())
        meta.min_bracket = min(meta.min_bracket, b_min)
        if b_min < 0.0:
            meta.negative_diffusion_steps += 1

        drift_now = h_x + kappa * float(model.m_xi(t))
        max_b = float(np.abs(bracket_now).max())
        max_v = float(np.abs(drift_now).max())
        dt_diff = dx * dx / (2.0 * max_b) if max_b > 0.0 else np.inf
        dt_adv = dx / max_v if max_v > 0.0 else np.inf
        dt_stab = CFL_SAFETY * min(dt_diff, dt_adv)

        t_event = float(events[event_ptr])
        if t_event - t <= dt_stab:
            dt, t_new = t_event - t, t_event
        else:
            dt, t_new = dt_stab, t + dt_stab

        def stage_rhs(ts, f, _cache={t: d_now}):
            d = _cache.get(ts)
            if d is None:
                d = intensities_at(model, kappa, history, ts, order)
                _cache[ts] = d
            drift_coef = h_x + kappa * float(model.m_xi(ts))
            return _field_rhs(f, drift_coef, coeffs.bracket(d), dx)

        pdf, stats = _advance(pdf, stage_rhs, dt, t_new)
        t = pdf.time
        meta.n_steps += 1
        meta.dt_history.append(dt)
        meta.mass_drift_history.append(stats.mass_drift)
        meta.clipped_total += stats.clipped
        meta.boundary_mass_max = max(
            meta.boundary_mass_max, float(max(pdf.values[0], pdf.values[-1]) * dx)
        )

        if t == t_event:
            event_ptr += 1
            if node_ptr + 1 < grid.n_points and t == grid.points[node_ptr + 1]:
                node_ptr += 1
                record_node(pdf)
            if t in out_set:
                snapshots.append(pdf)
                snap_times.append(t)

    return PdfTrajectory(
        x_grid=x_grid,
        times=np.asarray(snap_times),
        snapshots=snapshots,
        metadata=meta,
        history=history,
    )
