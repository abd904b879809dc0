"""Joint Gaussian description of an uncertain initial value and a coloured noise process.

The model is a scalar initial value X0 ~ N(m_x0, c_x0x0) together with a
Gaussian process Xi(s) given by a mean function, a two-time covariance kernel
and a cross-covariance function c(s) = Cov[X0, Xi(s)].  Restricted to a finite
time grid this is one joint Gaussian vector (X0, Xi(s_1), ..., Xi(s_N)); that
finite-dimensional object is what the identity checks and the Monte Carlo
oracle consume.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NonPositiveSemidefinite, OutOfDomain
from .grids import TimeGrid

# Reported in run metadata so a run can state how its randomness was produced.
RNG_ALGORITHM = "numpy.random.Generator(PCG64)"

_KERNEL_FAMILIES = ("exponential", "squared_exponential", "table")

# Relative jitter ladder for the positive-semidefiniteness check: start at
# 1e-14 * trace, multiply by 10, give up past 1e-10 * trace.
_JITTER_START = 1e-14
_JITTER_LIMIT = 1e-10


@dataclass(frozen=True)
class KernelSpec:
    """Two-time covariance kernel ``C(s1, s2)`` of the excitation process.

    Parameters
    ----------
    family : str
        ``"exponential"`` is ``sigma2 * exp(-|s1-s2|/tau)``,
        ``"squared_exponential"`` is ``sigma2 * exp(-(s1-s2)^2 / (2 tau^2))``,
        ``"table"`` interpolates nothing and answers only on its own nodes.
    sigma2, tau : float
        Variance scale and correlation time for the stationary families.
    table_times, table_values : ndarray
        Nodes and full symmetric covariance matrix for the ``"table"`` family.
    """

    family: str
    sigma2: float = 0.0
    tau: float = 1.0
    table_times: np.ndarray | None = field(default=None, repr=False)
    table_values: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.family not in _KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.family != "table":
            if self.sigma2 < 0:
                raise ValueError("kernel variance sigma2 must be >= 0")
            if self.tau <= 0:
                raise ValueError("kernel correlation time tau must be > 0")
        else:
            t = np.asarray(self.table_times, dtype=float)
            v = np.asarray(self.table_values, dtype=float)
            if t.ndim != 1 or v.shape != (t.size, t.size):
                raise ValueError("table kernel needs times (n,) and values (n, n)")
            if not np.all(np.diff(t) > 0):
                raise ValueError("table kernel times must be strictly increasing")
            if not np.allclose(v, v.T, atol=1e-12 * max(1.0, float(np.abs(v).max()))):
                raise ValueError("table kernel matrix must be symmetric")
            t.setflags(write=False)
            v.setflags(write=False)
            object.__setattr__(self, "table_times", t)
            object.__setattr__(self, "table_values", v)

    @property
    def stationary(self) -> bool:
        return self.family != "table"

    @classmethod
    def exponential(cls, sigma2: float, tau: float) -> "KernelSpec":
        return cls("exponential", sigma2=sigma2, tau=tau)

    @classmethod
    def squared_exponential(cls, sigma2: float, tau: float) -> "KernelSpec":
        return cls("squared_exponential", sigma2=sigma2, tau=tau)

    @classmethod
    def table(cls, times, values) -> "KernelSpec":
        return cls("table", table_times=np.asarray(times), table_values=np.asarray(values))

    @classmethod
    def from_csv(cls, path) -> "KernelSpec":
        """Load a tabulated kernel from a ``s1,s2,value`` CSV file.

        Every ordered pair of tabulated times must be present and the implied
        matrix symmetric.
        """
        entries = {}
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != ["s1", "s2", "value"]:
                raise ValueError(f"{path}: expected header 's1,s2,value'")
            for row in reader:
                entries[(float(row["s1"]), float(row["s2"]))] = float(row["value"])
        times = np.array(sorted({s for pair in entries for s in pair}))
        n = times.size
        if n == 0:
            raise ValueError(f"{path}: empty kernel table")
        values = np.empty((n, n))
        for i, s1 in enumerate(times):
            for j, s2 in enumerate(times):
                if (s1, s2) not in entries:
                    raise ValueError(f"{path}: missing kernel entry for ({s1}, {s2})")
                values[i, j] = entries[(s1, s2)]
        return cls.table(times, values)


def _table_indices(spec: KernelSpec, s: np.ndarray) -> np.ndarray:
    t = spec.table_times
    idx = np.clip(np.searchsorted(t, s), 0, t.size - 1)
    # searchsorted lands on the right neighbour for values between nodes
    left = np.clip(idx - 1, 0, t.size - 1)
    idx = np.where(np.abs(t[left] - s) < np.abs(t[idx] - s), left, idx)
    tol = 1e-9 * max(1.0, float(np.abs(t).max()))
    if np.any(np.abs(t[idx] - s) > tol):
        bad = np.asarray(s)[np.abs(t[idx] - s) > tol]
        raise OutOfDomain(f"times {bad[:3]}... are not nodes of the tabulated kernel")
    return idx


def kernel_eval(spec: KernelSpec, s1, s2):
    """Evaluate ``C(s1, s2)`` elementwise; scalars or broadcastable arrays."""
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    if spec.family == "exponential":
        out = spec.sigma2 * np.exp(-np.abs(s1 - s2) / spec.tau)
    elif spec.family == "squared_exponential":
        out = spec.sigma2 * np.exp(-((s1 - s2) ** 2) / (2.0 * spec.tau**2))
    else:
        s1b, s2b = np.broadcast_arrays(s1, s2)
        i = _table_indices(spec, s1b.ravel())
        j = _table_indices(spec, s2b.ravel())
        out = spec.table_values[i, j].reshape(s1b.shape)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class GaussianInputModel:
    """Gaussian initial value plus coloured Gaussian excitation, possibly correlated.

    ``m_xi`` and ``cross`` must accept numpy arrays of times.  ``cross(s)`` is
    the covariance between the initial value and the excitation at time s; it
    is the model ingredient the classical uncorrelated theory sets to zero.
    """

    m_x0: float
    c_x0x0: float
    m_xi: Callable[[np.ndarray], np.ndarray]
    kernel: KernelSpec
    cross: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        if self.c_x0x0 < 0:
            raise ValueError("initial-value variance must be >= 0")

    def mean_vector(self, grid: TimeGrid) -> np.ndarray:
        return np.concatenate(([self.m_x0], np.atleast_1d(np.asarray(self.m_xi(grid.points), dtype=float))))

    def cross_vector(self, grid: TimeGrid) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.cross(grid.points), dtype=float))


def _cholesky_with_jitter(matrix: np.ndarray) -> tuple[np.ndarray, float]:
    """Cholesky factor of a PSD matrix, adding diagonal jitter when needed.

    Jitter starts at 1e-14 * trace and grows tenfold up to 1e-10 * trace;
    failing beyond that raises NonPositiveSemidefinite.
    """
    trace = float(np.trace(matrix))
    if trace < 0:
        raise NonPositiveSemidefinite("covariance has negative trace")
    if trace == 0.0:
        if np.any(matrix != 0.0):
            raise NonPositiveSemidefinite("zero-trace covariance with nonzero entries")
        return np.zeros_like(matrix), 0.0
    jitter = 0.0
    while True:
        try:
            L = np.linalg.cholesky(matrix + jitter * np.eye(matrix.shape[0]))
            return L, jitter
        except np.linalg.LinAlgError:
            jitter = _JITTER_START * trace if jitter == 0.0 else jitter * 10.0
            if jitter > _JITTER_LIMIT * trace:
                raise NonPositiveSemidefinite(
                    f"covariance not PSD within jitter {_JITTER_LIMIT:g} * trace"
                ) from None


@dataclass(frozen=True)
class JointCovariance:
    """Joint mean and covariance of ``(X0, Xi(s_1), ..., Xi(s_N))`` on a grid."""

    grid: TimeGrid
    mean: np.ndarray
    matrix: np.ndarray
    jitter: float = 0.0

    @property
    def dim(self) -> int:
        return int(self.mean.size)


def assemble_joint(model: GaussianInputModel, grid: TimeGrid) -> JointCovariance:
    """Restrict the model to ``grid`` and validate positive semidefiniteness.

    Returns
    -------
    JointCovariance
        Mean vector and (1+N) x (1+N) covariance; entry (0, 0) is the
        initial-value variance, row 0 the cross-covariances, the rest the
        kernel evaluated on the grid.

    Raises
    ------
    NonPositiveSemidefinite
        If the assembled matrix fails a jittered Cholesky factorization.
    """
    pts = grid.points
    n = pts.size
    mean = model.mean_vector(grid)
    matrix = np.empty((n + 1, n + 1))
    matrix[0, 0] = model.c_x0x0
    c = model.cross_vector(grid)
    matrix[0, 1:] = c
    matrix[1:, 0] = c
    matrix[1:, 1:] = kernel_eval(model.kernel, pts[:, None], pts[None, :])
    _, jitter = _cholesky_with_jitter(matrix)
    return JointCovariance(grid=grid, mean=mean, matrix=matrix, jitter=jitter)


def _psd_factor(matrix: np.ndarray) -> np.ndarray:
    """Symmetric factor ``F`` with ``F F^T = matrix`` that keeps degenerate
    directions exactly degenerate (eigenvalues clipped at zero)."""
    vals, vecs = np.linalg.eigh(0.5 * (matrix + matrix.T))
    floor = -1e-10 * max(1.0, float(np.abs(vals).max()))
    if np.any(vals < floor):
        raise NonPositiveSemidefinite(f"eigenvalue {vals.min():.3e} below PSD tolerance")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def sample_joint(cov: JointCovariance, n_samples: int, seed: int) -> np.ndarray:
    """Draw ``n_samples`` rows from the joint Gaussian.

    Column 0 is the initial value, columns 1.. the excitation at grid nodes.
    Identical ``(cov, n_samples, seed)`` produce bit-identical output.
    """
    rng = np.random.default_rng(seed)
    return sample_joint_with(cov, n_samples, rng)


def sample_joint_with(cov: JointCovariance, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Like :func:`sample_joint` but consuming an existing generator stream."""
    factor = _psd_factor(cov.matrix)
    z = rng.standard_normal((n_samples, cov.dim))
    return cov.mean + z @ factor.T
