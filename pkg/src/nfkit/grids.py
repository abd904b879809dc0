"""Time and state-space grids shared by the quadrature, solver and oracle layers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def trapezoid_weights(points: np.ndarray) -> np.ndarray:
    """Composite trapezoid weights for arbitrary strictly increasing nodes.

    The weights reproduce ``np.trapezoid(y, points)`` as ``weights @ y`` and
    sum to the span of the grid.
    """
    gaps = np.diff(points)
    w = np.zeros_like(points)
    w[:-1] += 0.5 * gaps
    w[1:] += 0.5 * gaps
    return w


def cumulative_trapezoid(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Running trapezoid integral of samples ``y`` over nodes ``x``; starts at 0."""
    out = np.empty_like(np.asarray(y, dtype=float))
    out[0] = 0.0
    if len(out) > 1:
        np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x), out=out[1:])
    return out


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing time nodes with trapezoid quadrature weights.

    Parameters
    ----------
    points : ndarray
        Node locations, strictly increasing, at least two of them.
    """

    points: np.ndarray
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("time grid needs at least two nodes")
        if not np.all(np.diff(pts) > 0):
            raise ValueError("time grid nodes must be strictly increasing")
        pts.setflags(write=False)
        w = trapezoid_weights(pts)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, t0: float, t_end: float, n_points: int) -> "TimeGrid":
        return cls(np.linspace(t0, t_end, n_points))

    @property
    def t0(self) -> float:
        return float(self.points[0])

    @property
    def t_end(self) -> float:
        return float(self.points[-1])

    @property
    def n_points(self) -> int:
        return int(self.points.size)

    @property
    def span(self) -> float:
        return self.t_end - self.t0

    def index_of(self, t: float, rtol: float = 1e-9) -> int:
        """Index of the node equal to ``t`` (within a relative tolerance)."""
        i = int(np.argmin(np.abs(self.points - t)))
        if abs(self.points[i] - t) > rtol * max(1.0, abs(self.span)):
            raise ValueError(f"t={t} is not a grid node")
        return i

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash((self.points.size, self.t0, self.t_end))


@dataclass(frozen=True)
class PdfGrid:
    """Uniform state-space grid on which discretized densities live."""

    x_min: float
    x_max: float
    n_x: int

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise ValueError("pdf grid needs x_max > x_min")
        if self.n_x < 16:
            raise ValueError("pdf grid needs at least 16 nodes")

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_x)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_x - 1)
