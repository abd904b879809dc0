"""Effective noise intensities: the memory of the excitation collapsed to
time-local diffusion coefficients.

Two routes are provided on purpose.  :func:`effective_intensity_linear`
evaluates the constant-drift-rate closed form with exact exponentials;
:func:`generalized_intensities` integrates a recorded response-moment history
``R_{h'}(s) = E[h'(X(s))]`` and reduces to the former (to roundoff) when the
history is constant.  All integrals are composite trapezoid on the grid
nodes, matching the quadrature used everywhere else in the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import HistoryTooShort
from .gaussian_model import GaussianInputModel, KernelSpec, kernel_eval
from .grids import TimeGrid, cumulative_trapezoid


def effective_intensity_linear(
    model: GaussianInputModel, eta: float, kappa: float, grid: TimeGrid
) -> np.ndarray:
    """Effective intensity of the linear problem at every grid node.

    ``D(t) = kappa e^{eta (t - t0)} c(t)
           + kappa^2 int_{t0}^{t} e^{eta (t - s)} C(t, s) ds``
    with the integral done by trapezoid over the nodes up to ``t``.
    """
    pts = grid.points
    cross = model.cross_vector(grid)
    out = np.empty(pts.size)
    for i, t in enumerate(pts):
        out[i] = _linear_intensity_core(model, eta, kappa, pts[: i + 1], t, cross_t=cross[i])
    return out


def effective_intensity_linear_at(
    model: GaussianInputModel, eta: float, kappa: float, grid: TimeGrid, t: float
) -> float:
    """Same quadrature as :func:`effective_intensity_linear` at an off-node
    time: the node set is the grid prefix below ``t`` plus ``t`` itself."""
    pts = grid.points
    if not grid.t0 <= t <= grid.t_end:
        raise ValueError(f"t={t} outside the grid span")
    n_below = int(np.searchsorted(pts, t, side="right"))
    nodes = pts[:n_below]
    if nodes.size == 0 or nodes[-1] != t:
        nodes = np.append(nodes, t)
    return _linear_intensity_core(model, eta, kappa, nodes, t, cross_t=float(model.cross(t)))


def _linear_intensity_core(model, eta, kappa, nodes, t, cross_t):
    boundary = kappa * np.exp(eta * (t - nodes[0])) * cross_t
    if nodes.size < 2:
        return float(boundary)
    integrand = np.exp(eta * (t - nodes)) * kernel_eval(model.kernel, t, nodes)
    return float(boundary + kappa**2 * np.trapezoid(integrand, nodes))


@dataclass
class ResponseMomentHistory:
    """Response moments recorded at grid nodes as a pdf march progresses.

    ``r_h`` holds ``E[h'(X(s))]``; ``r_basis`` one row per drift basis
    function with ``E[g_k'(X(s))]``.  Only the first ``n_filled`` entries are
    meaningful; the march appends as it reaches each node.
    """

    grid: TimeGrid
    r_h: np.ndarray
    r_basis: np.ndarray
    n_filled: int = 0

    @classmethod
    def empty(cls, grid: TimeGrid, n_basis: int) -> "ResponseMomentHistory":
        return cls(
            grid=grid,
            r_h=np.zeros(grid.n_points),
            r_basis=np.zeros((n_basis, grid.n_points)),
            n_filled=0,
        )

    @classmethod
    def constant(cls, grid: TimeGrid, value: float) -> "ResponseMomentHistory":
        """Fully filled history with a constant drift-rate moment (the linear
        case, where E[h'(X)] is the drift rate for any pdf)."""
        return cls(
            grid=grid,
            r_h=np.full(grid.n_points, float(value)),
            r_basis=np.ones((1, grid.n_points)),
            n_filled=grid.n_points,
        )

    def append(self, r_h_value: float, r_basis_values=None) -> None:
        if self.n_filled >= self.grid.n_points:
            raise IndexError("history already covers the whole grid")
        self.r_h[self.n_filled] = r_h_value
        if r_basis_values is not None:
            self.r_basis[:, self.n_filled] = r_basis_values
        self.n_filled += 1

    @property
    def times(self) -> np.ndarray:
        return self.grid.points[: self.n_filled]


def _intensity_core(model, kappa, nodes, r_values, order):
    """Shared quadrature for the generalized intensities at ``t = nodes[-1]``.

    Returns the array ``D_m`` for ``m = 0..order`` where
    ``D_m(t) = kappa E(t0, t) c(t) (t - t0)^m
             + kappa^2 int E(s, t) C(t, s) (t - s)^m ds``
    and ``E(s, t) = exp(int_s^t r du)`` with the inner integral a running
    trapezoid of the recorded moments.
    """
    t = nodes[-1]
    t0 = nodes[0]
    inner = cumulative_trapezoid(r_values, nodes)
    growth = np.exp(inner[-1] - inner)
    powers = (t - nodes)[None, :] ** np.arange(order + 1)[:, None]
    boundary = kappa * growth[0] * float(model.cross(t)) * (t - t0) ** np.arange(order + 1)
    if nodes.size < 2:
        return boundary
    integrand = growth * kernel_eval(model.kernel, t, nodes) * powers
    return boundary + kappa**2 * np.trapezoid(integrand, nodes, axis=1)


def generalized_intensities(
    model: GaussianInputModel,
    history: ResponseMomentHistory,
    kappa: float,
    t_index: int,
    order: int,
) -> np.ndarray:
    """Generalized effective intensities ``D_0 .. D_order`` at a grid node.

    Raises
    ------
    HistoryTooShort
        If the recorded history does not reach ``t_index``.
    """
    if not 0 <= t_index < history.n_filled:
        raise HistoryTooShort(
            f"history covers {history.n_filled} nodes, intensity requested at node {t_index}"
        )
    nodes = history.grid.points[: t_index + 1]
    return _intensity_core(model, kappa, nodes, history.r_h[: t_index + 1], order)


def intensities_at(
    model: GaussianInputModel,
    kappa: float,
    history: ResponseMomentHistory,
    t_star: float,
    order: int,
) -> np.ndarray:
    """Generalized intensities at an off-node time during a march step.

    ``t_star`` may sit past the last recorded node by at most one grid
    interval; the moment history is extended by its last value there (the
    march freezes moments at the step start).
    """
    if history.n_filled < 1:
        raise HistoryTooShort("empty history")
    nodes = history.times
    last = nodes[-1]
    if t_star < nodes[0]:
        raise HistoryTooShort(f"t={t_star} precedes the history start")
    if t_star == last:
        return _intensity_core(model, kappa, nodes, history.r_h[: history.n_filled], order)
    if t_star < last:
        n_below = int(np.searchsorted(nodes, t_star, side="right"))
        sub_nodes = np.append(nodes[:n_below], t_star)
        r = np.append(history.r_h[:n_below], _interp_r(history, n_below, t_star))
        return _intensity_core(model, kappa, sub_nodes, r, order)
    if history.n_filled < history.grid.n_points:
        nxt = history.grid.points[history.n_filled]
        if t_star > nxt + 1e-12 * max(1.0, abs(nxt)):
            raise HistoryTooShort(f"t={t_star} more than one interval past the history end")
    return _intensity_core(
        model,
        kappa,
        np.append(nodes, t_star),
        np.append(history.r_h[: history.n_filled], history.r_h[history.n_filled - 1]),
        order,
    )


def _interp_r(history, n_below, t_star):
    # linear interpolation between recorded neighbours for mid-history queries
    ts = history.times
    lo, hi = ts[n_below - 1], ts[n_below]
    w = (t_star - lo) / (hi - lo)
    return (1 - w) * history.r_h[n_below - 1] + w * history.r_h[n_below]


@dataclass(frozen=True)
class EffectiveIntensitySeries:
    """Generalized intensities tabulated on grid nodes, one row per order."""

    grid: TimeGrid
    order: int
    values: np.ndarray  # (order + 1, n_points)


def generalized_intensity_series(
    model: GaussianInputModel,
    history: ResponseMomentHistory,
    kappa: float,
    order: int,
) -> EffectiveIntensitySeries:
    """Tabulate ``generalized_intensities`` at every recorded node."""
    n = history.n_filled
    values = np.empty((order + 1, n))
    for i in range(n):
        values[:, i] = generalized_intensities(model, history, kappa, i, order)
    return EffectiveIntensitySeries(grid=history.grid, order=order, values=values)


def integrate_kernel_weighted(kernel, weight, points: np.ndarray, t: float | None = None) -> float:
    """Trapezoid of ``kernel(t, s) * weight(s)`` over the given nodes.

    ``kernel`` is either a :class:`KernelSpec` (then ``t`` is required) or a
    plain callable of ``s``.  This is the one quadrature kernel shared by the
    intensity formulas, exposed for direct testing.
    """
    points = np.asarray(points, dtype=float)
    if isinstance(kernel, KernelSpec):
        if t is None:
            raise ValueError("t is required when integrating a KernelSpec")
        vals = kernel_eval(kernel, t, points)
    else:
        vals = np.asarray(kernel(points), dtype=float)
    w = np.asarray(weight(points), dtype=float)
    return float(np.trapezoid(vals * w, points))
