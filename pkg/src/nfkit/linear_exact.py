"""Exact Gaussian response statistics for the linear problem.

With drift rate ``eta`` the response stays Gaussian, so its pdf is pinned by
the mean and variance trajectories

``m(t) = m_x0 e^{eta (t-t0)} + kappa int m_xi(s) e^{eta (t-s)} ds``
``v(t) = c_x0x0 e^{2 eta (t-t0)} + 2 int D(s) e^{2 eta (t-s)} ds``

with ``D`` the effective intensity.  Both the closed forms above and a
classical fourth-order integration of the equivalent moment equations are
implemented; the two must agree and double-check each other.  ``D`` always
comes from :mod:`nfkit.effective_noise`, so the moment routes and the pdf
solver share one intensity source.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .effective_noise import effective_intensity_linear, effective_intensity_linear_at
from .errors import DegenerateVariance
from .gaussian_model import GaussianInputModel
from .grids import PdfGrid, TimeGrid


@dataclass(frozen=True)
class LinearScenario:
    """Linear drift rate, noise gain, Gaussian inputs and the working grid."""

    eta: float
    kappa: float
    model: GaussianInputModel
    grid: TimeGrid


@dataclass(frozen=True)
class GaussianMomentTrajectory:
    """Mean and variance at every grid node.

    ``negative_variance`` flags (never clamps) a variance that went below
    zero, which a correct linear evolution cannot produce.
    """

    grid: TimeGrid
    mean: np.ndarray
    variance: np.ndarray
    negative_variance: bool = False

    @classmethod
    def wrap(cls, grid, mean, variance):
        return cls(grid, mean, variance, negative_variance=bool(np.any(variance < 0)))


def _prefix_nodes(grid: TimeGrid, t: float) -> np.ndarray:
    if not grid.t0 <= t <= grid.t_end:
        raise ValueError(f"t={t} outside the grid span")
    n_below = int(np.searchsorted(grid.points, t, side="right"))
    nodes = grid.points[:n_below]
    if nodes[-1] != t:
        nodes = np.append(nodes, t)
    return nodes


def closed_form_moments(sc: LinearScenario, t: float) -> tuple[float, float]:
    """Mean and variance at time ``t`` from the quadrature closed forms."""
    nodes = _prefix_nodes(sc.grid, t)
    decay = np.exp(sc.eta * (t - nodes))
    m_xi = np.asarray(sc.model.m_xi(nodes), dtype=float)
    mean = sc.model.m_x0 * decay[0]
    d = np.array([effective_intensity_linear_at(sc.model, sc.eta, sc.kappa, sc.grid, s) for s in nodes])
    var = sc.model.c_x0x0 * decay[0] ** 2
    if nodes.size > 1:
        mean += sc.kappa * np.trapezoid(m_xi * decay, nodes)
        var += 2.0 * np.trapezoid(d * decay**2, nodes)
    return float(mean), float(var)


def closed_form_trajectory(sc: LinearScenario) -> GaussianMomentTrajectory:
    """Closed-form moments evaluated at every grid node."""
    pts = sc.grid.points
    d = effective_intensity_linear(sc.model, sc.eta, sc.kappa, sc.grid)
    m_xi = np.asarray(sc.model.m_xi(pts), dtype=float)
    mean = np.empty(pts.size)
    var = np.empty(pts.size)
    for i, t in enumerate(pts):
        decay = np.exp(sc.eta * (t - pts[: i + 1]))
        mean[i] = sc.model.m_x0 * decay[0]
        var[i] = sc.model.c_x0x0 * decay[0] ** 2
        if i > 0:
            mean[i] += sc.kappa * np.trapezoid(m_xi[: i + 1] * decay, pts[: i + 1])
            var[i] += 2.0 * np.trapezoid(d[: i + 1] * decay**2, pts[: i + 1])
    return GaussianMomentTrajectory.wrap(sc.grid, mean, var)


def moment_odes_integrate(sc: LinearScenario) -> GaussianMomentTrajectory:
    """Integrate ``m' = eta m + kappa m_xi`` and ``v' = 2 eta v + 2 D`` with
    the classical fourth-order one-step method on the grid.

    Node values of ``D`` reuse the tabulated intensity; midpoint stage values
    use the same trapezoid rule with the midpoint appended, so this route
    differs from :func:`closed_form_trajectory` only through its outer time
    integration, not through a different intensity.
    """
    pts = sc.grid.points
    d_nodes = effective_intensity_linear(sc.model, sc.eta, sc.kappa, sc.grid)

    def rhs(t, y, d_t):
        m, v = y
        m_xi_t = float(sc.model.m_xi(t))
        return np.array([sc.eta * m + sc.kappa * m_xi_t, 2.0 * sc.eta * v + 2.0 * d_t])

    mean = np.empty(pts.size)
    var = np.empty(pts.size)
    y = np.array([sc.model.m_x0, sc.model.c_x0x0])
    mean[0], var[0] = y
    for i in range(pts.size - 1):
        t, t_next = pts[i], pts[i + 1]
        h = t_next - t
        t_mid = t + 0.5 * h
        d_mid = effective_intensity_linear_at(sc.model, sc.eta, sc.kappa, sc.grid, t_mid)
        k1 = rhs(t, y, d_nodes[i])
        k2 = rhs(t_mid, y + 0.5 * h * k1, d_mid)
        k3 = rhs(t_mid, y + 0.5 * h * k2, d_mid)
        k4 = rhs(t_next, y + h * k3, d_nodes[i + 1])
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        mean[i + 1], var[i + 1] = y
    return GaussianMomentTrajectory.wrap(sc.grid, mean, var)


def gaussian_pdf(x: np.ndarray, mean: float, variance: float) -> np.ndarray:
    if variance <= 0:
        raise DegenerateVariance(f"variance {variance} is not positive")
    z = (np.asarray(x, dtype=float) - mean) ** 2 / (2.0 * variance)
    return np.exp(-z) / np.sqrt(2.0 * np.pi * variance)


def exact_pdf(sc: LinearScenario, t: float, x_grid) -> np.ndarray:
    """Gaussian response pdf at time ``t`` on the given state grid."""
    mean, var = closed_form_moments(sc, t)
    x = x_grid.points if isinstance(x_grid, PdfGrid) else np.asarray(x_grid, dtype=float)
    return gaussian_pdf(x, mean, var)


def char_function(sc: LinearScenario, y, t: float):
    """Characteristic function ``exp(i m(t) y - v(t) y^2 / 2)``."""
    mean, var = closed_form_moments(sc, t)
    y = np.asarray(y, dtype=float)
    out = np.exp(1j * mean * y - 0.5 * var * y**2)
    return complex(out) if out.ndim == 0 else out


def default_x_grid(sc: LinearScenario, t: float, n_x: int = 1024, width: float = 8.0) -> PdfGrid:
    """State grid covering mean +- ``width`` standard deviations at time ``t``."""
    mean, var = closed_form_moments(sc, t)
    if var <= 0:
        raise DegenerateVariance(f"variance {var} at t={t} is not positive")
    sd = float(np.sqrt(var))
    return PdfGrid(x_min=mean - width * sd, x_max=mean + width * sd, n_x=n_x)
