"""Grids, quadrature, Sobolev inner products, and gradient-smoothing BVP solvers.

The discrete H^p inner product and the elliptic boundary-value problems that
turn L^2 gradients into Sobolev gradients are built from a matched pair of
difference operators so that the Riesz identity

    <solve(rhs), z>_{H^p} = <rhs, z>_{L^2}

holds to round-off (not just to discretization order) for test functions z in
the class selected by the boundary conditions.  Concretely, first derivatives
are evaluated at cell midpoints (forward differences, cell weights) and second
derivatives by the compact three-point stencil with even-reflection rows at the
boundary; both pair exactly, by summation by parts, with the tridiagonal /
pentadiagonal system matrices assembled here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import solve_banded


class BvpBoundaryKind(Enum):
    """Boundary rows of the gradient-smoothing BVP."""

    DIRICHLET_ZERO = "dirichlet_zero"        # g = 0 at both ends (order 1)
    NATURAL_ODD_DERIV = "natural_odd_deriv"  # g' = g''' = 0 at both ends (order 2)


@dataclass(frozen=True)
class UniformGrid1D:
    """Uniform grid with n intervals on [lo, hi]; node i sits at lo + i*spacing."""

    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"grid needs n >= 2 intervals, got n={self.n}")
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.hi <= self.lo:
            raise ValueError(f"invalid grid bounds [{self.lo}, {self.hi}]")

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / self.n

    @property
    def num_nodes(self) -> int:
        return self.n + 1

    def nodes(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n + 1)


@dataclass(eq=False)
class TimeSignal:
    """Scalar function sampled on the nodes of a uniform grid."""

    grid: UniformGrid1D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.num_nodes,):
            raise ValueError(
                f"signal has {self.values.shape} values for a grid with "
                f"{self.grid.num_nodes} nodes"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("signal contains non-finite values")

    @classmethod
    def from_function(cls, grid: UniformGrid1D, fn) -> "TimeSignal":
        return cls(grid, np.asarray(fn(grid.nodes()), dtype=float))

    def copy(self) -> "TimeSignal":
        return TimeSignal(self.grid, self.values.copy())


@dataclass(frozen=True)
class SobolevMetric:
    """Order p and length scales defining the H^p inner product.

    lengths holds (l_1, ..., l_p); the q = 0 weight is fixed to one.
    """

    order: int
    lengths: tuple = ()

    def __post_init__(self):
        if self.order not in (0, 1, 2):
            raise ValueError(f"only orders 0..2 supported, got {self.order}")
        object.__setattr__(self, "lengths", tuple(float(l) for l in self.lengths))
        if len(self.lengths) != self.order:
            raise ValueError(
                f"metric of order {self.order} needs {self.order} length scales, "
                f"got {len(self.lengths)}"
            )
        if any(not np.isfinite(l) or l <= 0 for l in self.lengths):
            raise ValueError("length scales must be positive and finite")


def trapezoid(values, spacing: float) -> float:
    """Trapezoidal approximation of the integral of nodal samples."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size < 2:
        raise ValueError("trapezoid needs at least 2 samples")
    if not np.all(np.isfinite(v)):
        raise ValueError("trapezoid input contains non-finite values")
    return float(spacing * (v.sum() - 0.5 * (v[0] + v[-1])))


def trapezoid_weights(num_nodes: int, spacing: float) -> np.ndarray:
    w = np.full(num_nodes, spacing)
    w[0] = w[-1] = spacing / 2
    return w


def _cell_diff(values: np.ndarray, h: float) -> np.ndarray:
    """First derivative at the n cell midpoints."""
    return np.diff(values) / h


def _reflect_d2(values: np.ndarray, h: float) -> np.ndarray:
    """Compact second difference with even-reflection rows at the boundary."""
    out = np.empty_like(values)
    out[1:-1] = values[:-2] - 2.0 * values[1:-1] + values[2:]
    out[0] = 2.0 * (values[1] - values[0])
    out[-1] = 2.0 * (values[-2] - values[-1])
    return out / (h * h)


def inner_product(z1: TimeSignal, z2: TimeSignal, metric: SobolevMetric) -> float:
    """Discrete H^p inner product sum_q l_q^{2q} <d^q z1, d^q z2>_{L^2}."""
    if z1.grid != z2.grid:
        raise ValueError("inner_product requires signals on the same grid")
    h = z1.grid.spacing
    w = trapezoid_weights(z1.grid.num_nodes, h)
    total = float(np.dot(w * z1.values, z2.values))
    if metric.order >= 1:
        d1a = _cell_diff(z1.values, h)
        d1b = _cell_diff(z2.values, h)
        total += metric.lengths[0] ** 2 * float(h * np.dot(d1a, d1b))
    if metric.order >= 2:
        d2a = _reflect_d2(z1.values, h)
        d2b = _reflect_d2(z2.values, h)
        total += metric.lengths[1] ** 4 * float(np.dot(w * d2a, d2b))
    return total


def _solve_h1_dirichlet(rhs: np.ndarray, h: float, ell: float) -> np.ndarray:
    """(Id - l^2 d^2) g = rhs on the interior, g pinned to 0 at both ends."""
    m = rhs.size - 2
    r = ell * ell / (h * h)
    ab = np.zeros((3, m))
    ab[0, 1:] = -r
    ab[1, :] = 1.0 + 2.0 * r
    ab[2, :-1] = -r
    g = np.zeros_like(rhs)
    g[1:-1] = solve_banded((1, 1), ab, rhs[1:-1])
    return g


def _h2_natural_matrix(num_nodes: int, h: float, l1: float, l2: float) -> np.ndarray:
    """Dense Id - l1^2 D2 + l2^4 W^-1 D2^T W D2 with even-reflection D2 rows."""
    n = num_nodes
    d2 = np.zeros((n, n))
    idx = np.arange(1, n - 1)
    d2[idx, idx - 1] = 1.0
    d2[idx, idx] = -2.0
    d2[idx, idx + 1] = 1.0
    d2[0, 0], d2[0, 1] = -2.0, 2.0
    d2[-1, -1], d2[-1, -2] = -2.0, 2.0
    d2 /= h * h
    w = trapezoid_weights(n, h)
    d4 = (d2.T * w) @ d2 / w[:, None]
    return np.eye(n) - l1 * l1 * d2 + l2 ** 4 * d4


def _solve_h2_natural(rhs: np.ndarray, h: float, l1: float, l2: float) -> np.ndarray:
    mat = _h2_natural_matrix(rhs.size, h, l1, l2)
    ab = np.zeros((5, rhs.size))
    for off in range(-2, 3):
        diag = np.diagonal(mat, off)
        if off >= 0:
            ab[2 - off, off:] = diag
        else:
            ab[2 - off, :off] = diag
    return solve_banded((2, 2), ab, rhs)


def solve_gradient_bvp(
    rhs: TimeSignal, metric: SobolevMetric, bc: BvpBoundaryKind
) -> TimeSignal:
    """Solve the elliptic smoothing problem mapping an L^2 gradient to H^p.

    Order 1 with Dirichlet rows gives a tridiagonal solve; order 2 with the
    natural (odd derivatives vanish) rows gives a pentadiagonal solve.
    """
    h = rhs.grid.spacing
    if metric.order == 1:
        if bc is not BvpBoundaryKind.DIRICHLET_ZERO:
            raise ValueError("order-1 smoothing requires DIRICHLET_ZERO boundary rows")
        g = _solve_h1_dirichlet(rhs.values, h, metric.lengths[0])
    elif metric.order == 2:
        if bc is not BvpBoundaryKind.NATURAL_ODD_DERIV:
            raise ValueError("order-2 smoothing requires NATURAL_ODD_DERIV boundary rows")
        g = _solve_h2_natural(rhs.values, h, metric.lengths[0], metric.lengths[1])
    else:
        raise ValueError(f"no smoothing BVP for metric order {metric.order}")
    if not np.all(np.isfinite(g)):
        raise AssertionError("smoothing BVP produced non-finite values")
    return TimeSignal(rhs.grid, g)
