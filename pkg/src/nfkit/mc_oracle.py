"""Monte Carlo ground truth for the response statistics.

Paths of ``dx/dt = h(x) + kappa xi(t)`` are integrated per realization with
the classical fourth-order one-step method, driving each path with an exact
joint Gaussian draw of the initial value and the excitation at the grid
nodes (dense covariance factorization; the only route that handles arbitrary
kernels plus initial-value cross-correlation).  Between nodes the excitation
is linearly interpolated.

Densities are estimated by cell histograms or Gaussian kernels with the
Silverman bandwidth.  Finite-difference probes of the path sensitivities
check the pathwise exponential formulas: the initial-value sensitivity is
``exp(int_{t0}^t h'(X) du)`` and the excitation sensitivity at a node ``s``
is ``kappa exp(int_s^t h'(X) du)``, probed with a discrete bump of integral
``eps`` (amplitude ``eps / w_n`` at node ``n``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Blowup, GridMismatch
from .gaussian_model import assemble_joint, kernel_eval, sample_joint_with
from .genfpk_solver import DriftSpec, PdfSnapshot
from .grids import PdfGrid, TimeGrid, cumulative_trapezoid

BLOWUP_GUARD = 1e6

# above this many stored array elements (paths plus draws) the ensemble keeps
# only per-output-time slices and running moments
FULL_STORAGE_CAP = 60_000_000

_CHUNK = 20_000

HISTOGRAM = "histogram"
GAUSSIAN_KDE = "gaussian_kde"


@dataclass(frozen=True)
class PathEnsemble:
    """Simulated response ensemble with its generating draws.

    ``paths`` and ``draws`` are dense (n_paths x n_points and
    n_paths x (n_points + 1), draw column 0 the initial value) when the
    ensemble fits under :data:`FULL_STORAGE_CAP`; otherwise they are None and
    ``kept_values`` holds path values at the retained node indices only.
    ``mean``/``variance`` are always present.
    """

    grid: TimeGrid
    seed: int
    n_paths: int
    mean: np.ndarray
    variance: np.ndarray
    paths: np.ndarray | None = None
    draws: np.ndarray | None = None
    kept_values: dict | None = None

    def values_at(self, t_index: int) -> np.ndarray:
        """Path values at one grid node."""
        if self.paths is not None:
            return self.paths[:, t_index]
        if self.kept_values is not None and t_index in self.kept_values:
            return self.kept_values[t_index]
        raise KeyError(f"path values at node {t_index} were not retained")


def _integrate_paths(
    drift: DriftSpec,
    kappa: float,
    grid: TimeGrid,
    draws: np.ndarray,
    guard: float = BLOWUP_GUARD,
    out: np.ndarray | None = None,
) -> np.ndarray:
    """Vectorized path integration over the grid for a block of draws."""
    n = draws.shape[0]
    n_points = grid.n_points
    if out is None:
        out = np.empty((n, n_points))
    x = draws[:, 0].copy()
    out[:, 0] = x
    pts = grid.points
    for i in range(n_points - 1):
        dt = pts[i + 1] - pts[i]
        xi_a = draws[:, 1 + i]
        xi_b = draws[:, 2 + i]
        xi_mid = 0.5 * (xi_a + xi_b)
        k1 = drift.h(x) + kappa * xi_a
        k2 = drift.h(x + (0.5 * dt) * k1) + kappa * xi_mid
        k3 = drift.h(x + (0.5 * dt) * k2) + kappa * xi_mid
        k4 = drift.h(x + dt * k3) + kappa * xi_b
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if np.abs(x).max() > guard:
            raise Blowup(f"path magnitude exceeded {guard:g} at t={pts[i + 1]}")
        out[:, i + 1] = x
    return out


def simulate(
    sc,
    n_paths: int,
    seed: int,
    guard: float = BLOWUP_GUARD,
    chunk: int = _CHUNK,
    storage_cap: int = FULL_STORAGE_CAP,
) -> PathEnsemble:
    """Simulate a response ensemble for the scenario.

    The Gaussian draws come from one sequential stream consumed in row
    order.  Results are exactly reproducible from (scenario, seed, chunk);
    ``chunk`` only bounds transient memory, but changing it can move results
    by an ulp because matrix-product rounding depends on the batch shape, so
    it is held at a fixed default.
    """
    grid: TimeGrid = sc.time_grid
    drift: DriftSpec = sc.drift
    kappa = float(sc.kappa)
    model = sc.model

    cov = assemble_joint(model, grid)
    rng = np.random.default_rng(seed)

    n_points = grid.n_points
    full = 2 * n_paths * (n_points + 1) <= storage_cap
    if full:
        paths = np.empty((n_paths, n_points))
        draws = np.empty((n_paths, n_points + 1))
        kept = None
        kept_idx: tuple[int, ...] = ()
    else:
        paths = None
        draws = None
        kept_idx = _kept_indices(sc, grid)
        kept = {i: np.empty(n_paths) for i in kept_idx}

    sum_x = np.zeros(n_points)
    sum_x2 = np.zeros(n_points)

    done = 0
    while done < n_paths:
        m = min(chunk, n_paths - done)
        block_draws = sample_joint_with(cov, m, rng)
        block_paths = _integrate_paths(
            drift, kappa, grid, block_draws, guard,
            out=None if paths is None else paths[done : done + m],
        )
        if full:
            draws[done : done + m] = block_draws
        else:
            for i in kept_idx:
                kept[i][done : done + m] = block_paths[:, i]
        sum_x += block_paths.sum(axis=0)
        sum_x2 += np.square(block_paths).sum(axis=0)
        done += m

    mean = sum_x / n_paths
    if n_paths > 1:
        variance = (sum_x2 - n_paths * mean**2) / (n_paths - 1)
        variance = np.maximum(variance, 0.0)
    else:
        variance = np.zeros(n_points)

    return PathEnsemble(
        grid=grid,
        seed=seed,
        n_paths=n_paths,
        mean=mean,
        variance=variance,
        paths=paths,
        draws=draws,
        kept_values=kept,
    )


def _kept_indices(sc, grid: TimeGrid) -> tuple[int, ...]:
    idx = {grid.n_points - 1}
    for t in getattr(sc, "output_times", None) or ():
        idx.add(grid.index_of(float(t)))
    return tuple(sorted(idx))


# -- density estimation ---------------------------------------------------------


def silverman_bandwidth(samples: np.ndarray) -> float:
    """0.9 min(std, iqr/1.34) n^(-1/5); falls back to std when iqr is 0."""
    n = samples.size
    sd = float(np.std(samples, ddof=1)) if n > 1 else 0.0
    q75, q25 = np.percentile(samples, [75.0, 25.0])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.34) if iqr > 0.0 else sd
    if spread <= 0.0:
        spread = max(abs(float(samples[0])), 1.0) * 1e-3
    return 0.9 * spread * n ** (-0.2)


def estimate_pdf(ens: PathEnsemble, t_index: int, x_grid: PdfGrid, method: str = GAUSSIAN_KDE) -> PdfSnapshot:
    """Normalized density estimate at one grid node on the given state grid."""
    if ens.n_paths < 100:
        raise ValueError("density estimation needs at least 100 paths")
    samples = ens.values_at(t_index)
    x = x_grid.points
    if method == HISTOGRAM:
        edges = np.empty(x_grid.n_x + 1)
        edges[1:-1] = 0.5 * (x[1:] + x[:-1])
        edges[0] = x[0] - 0.5 * x_grid.dx
        edges[-1] = x[-1] + 0.5 * x_grid.dx
        counts, _ = np.histogram(samples, bins=edges)
        f = counts / (samples.size * x_grid.dx)
    elif method == GAUSSIAN_KDE:
        bw = silverman_bandwidth(samples)
        f = np.zeros(x_grid.n_x)
        inv = -0.5 / (bw * bw)
        for start in range(0, samples.size, _CHUNK):
            block = samples[start : start + _CHUNK]
            f += np.exp(inv * (x[:, None] - block[None, :]) ** 2).sum(axis=1)
        f /= samples.size * bw * np.sqrt(2.0 * np.pi)
    else:
        raise ValueError(f"unknown estimator {method!r}")
    mass = np.trapezoid(f, x)
    if mass <= 0.0:
        raise ValueError("all samples fell outside the state grid")
    f = f / mass
    return PdfSnapshot.wrap(x_grid, float(ens.grid.points[t_index]), f)


def l1_distance(a: PdfSnapshot, b: PdfSnapshot) -> float:
    """Trapezoid integral of |a - b| on their common grid."""
    if a.grid != b.grid:
        raise GridMismatch("pdf snapshots live on different state grids")
    return float(np.trapezoid(np.abs(a.values - b.values), a.grid.points))


# -- ensemble statistics ---------------------------------------------------------


def ensemble_summary(ens: PathEnsemble) -> list[tuple[float, float, float, int]]:
    """Rows of (t, mean, variance, n) for every grid node."""
    return [
        (float(t), float(m), float(v), ens.n_paths)
        for t, m, v in zip(ens.grid.points, ens.mean, ens.variance)
    ]


def moment_check(ens: PathEnsemble, mean_ref: np.ndarray, var_ref: np.ndarray) -> dict:
    """Largest deviation of ensemble moments from a reference trajectory,
    in units of the standard error (variance SE taken from the fourth
    central moment bound for Gaussian-like samples)."""
    n = ens.n_paths
    sd = np.sqrt(np.maximum(ens.variance, 1e-300))
    se_mean = sd / np.sqrt(n)
    se_var = ens.variance * np.sqrt(2.0 / max(n - 1, 1))
    mean_ratio = np.abs(ens.mean - mean_ref) / se_mean
    var_ratio = np.abs(ens.variance - var_ref) / se_var
    return {
        "mean_max_se": float(mean_ratio.max()),
        "var_max_se": float(var_ratio.max()),
        "mean_worst_index": int(mean_ratio.argmax()),
        "var_worst_index": int(var_ratio.argmax()),
    }


# -- variational probes -----------------------------------------------------------


@dataclass(frozen=True)
class VariationalReport:
    """Worst relative finite-difference error of the sensitivity formulas."""

    n_probe: int
    eps: float
    initial_max_rel: float
    excitation_max_rel: float | None
    excitation_skipped: bool

    def as_dict(self) -> dict:
        return {
            "n_probe": self.n_probe,
            "eps": self.eps,
            "initial_max_rel": self.initial_max_rel,
            "excitation_max_rel": self.excitation_max_rel,
            "excitation_skipped": self.excitation_skipped,
        }


def variational_check(sc, n_probe: int = 8, eps: float = 1e-5, seed: int = 0) -> VariationalReport:
    """Probe the pathwise sensitivity formulas by finite differences.

    For each probe draw the base path is re-integrated with (a) the initial
    value bumped by ``eps`` and (b) the excitation bumped at one interior
    node by ``eps / w_n``; the difference quotients are compared against the
    exponential formulas evaluated along the base path.  The excitation
    probe is skipped when ``kappa`` is zero (the path does not see the
    excitation at all).
    """
    grid: TimeGrid = sc.time_grid
    drift: DriftSpec = sc.drift
    kappa = float(sc.kappa)

    cov = assemble_joint(sc.model, grid)
    rng = np.random.default_rng(seed)
    draws = sample_joint_with(cov, n_probe, rng)
    base = _integrate_paths(drift, kappa, grid, draws)

    hp = drift.h_prime(base)
    growth = np.vstack([cumulative_trapezoid(hp[i], grid.points) for i in range(n_probe)])

    bumped = draws.copy()
    bumped[:, 0] += eps
    fd0 = (_integrate_paths(drift, kappa, grid, bumped) - base) / eps
    formula0 = np.exp(growth)
    rel0 = np.abs(fd0 - formula0) / np.maximum(np.abs(formula0), 1e-12)
    initial_max = float(rel0.max())

    if kappa == 0.0:
        return VariationalReport(n_probe, eps, initial_max, None, True)

    n_pts = grid.n_points
    nodes = np.unique(np.linspace(1, n_pts - 2, n_probe).round().astype(int))
    w = grid.weights
    excitation_max = 0.0
    for row, node in zip(range(n_probe), np.resize(nodes, n_probe)):
        b = draws[row : row + 1].copy()
        b[0, 1 + node] += eps / w[node]
        fd = (_integrate_paths(drift, kappa, grid, b)[0] - base[row]) / eps
        # formula valid beyond the bump's support [s_{n-1}, s_{n+1}]
        formula = kappa * np.exp(growth[row, node + 1 :] - growth[row, node])
        rel = np.abs(fd[node + 1 :] - formula) / np.maximum(np.abs(formula), 1e-12)
        excitation_max = max(excitation_max, float(rel.max()))

    return VariationalReport(n_probe, eps, initial_max, excitation_max, False)


# -- empirical correlation-splitting check ----------------------------------------


@dataclass(frozen=True)
class NfEmpiricalReport:
    """Monte Carlo test of the correlation-splitting identity on F = X(t)."""

    t: float
    lhs: float
    rhs: float
    diff: float
    se: float
    ratio: float

    @property
    def passed(self) -> bool:
        return self.ratio <= 5.0

    def as_dict(self) -> dict:
        return {
            "t": self.t, "lhs": self.lhs, "rhs": self.rhs,
            "diff": self.diff, "se": self.se, "ratio": self.ratio,
            "passed": self.passed,
        }


def nf_empirical_check(sc, ens: PathEnsemble, t_index: int | None = None) -> NfEmpiricalReport:
    """Compare E[xi(t) X(t)] against its correlation-splitting expansion.

    For a linear drift the path sensitivities are deterministic
    exponentials, so the expansion's derivative terms are closed-form:
    ``m_xi(t) E[X] + c_cross(t) e^(eta (t - t0)) + kappa int C(t,s)
    e^(eta (t - s)) ds``.  Both sides are estimated from the same ensemble;
    the standard error is that of the residual samples
    ``xi(t) X(t) - m_xi(t) X(t)``, whose expectation the deterministic terms
    must match.
    """
    if not sc.drift.is_linear:
        raise ValueError("the empirical identity check uses linear-drift closed-form sensitivities")
    if ens.draws is None:
        raise ValueError("the ensemble must retain its generating draws")
    grid = ens.grid
    if t_index is None:
        t_index = grid.n_points - 1
    t = float(grid.points[t_index])
    eta = sc.drift.eta
    kappa = float(sc.kappa)
    model = sc.model

    xi_t = ens.draws[:, 1 + t_index]
    x_t = ens.values_at(t_index)
    m_xi_t = float(model.m_xi(t))

    s = grid.points
    memory = kappa * np.trapezoid(
        kernel_eval(model.kernel, t, s[: t_index + 1]) * np.exp(eta * (t - s[: t_index + 1])),
        s[: t_index + 1],
    )
    det = float(model.cross(t)) * np.exp(eta * (t - grid.t0)) + memory

    residual = xi_t * x_t - m_xi_t * x_t
    diff = float(residual.mean() - det)
    se = float(residual.std(ddof=1) / np.sqrt(ens.n_paths))
    lhs = float((xi_t * x_t).mean())
    rhs = float(m_xi_t * x_t.mean() + det)
    return NfEmpiricalReport(t=t, lhs=lhs, rhs=rhs, diff=diff, se=se, ratio=abs(diff) / se)
