"""Forward, adjoint, and diagnostic solvers for the 1D boundary-flux control problem.

State u(t, x) obeys u_t = u_xx on a rod [a, b] with a prescribed flux phi(t) at
the left end, an insulated right end, and initial temperature u0(x).  The
objective is the misfit of the right-boundary trace against a target history;
the state constraint fixes the time-averaged thermal energy.  Both the misfit
gradient and the constraint's normal element come from backward heat solves
with the same operator and different data.

Space: second-order central differences, Neumann conditions by ghost-point
elimination.  Time: Crank-Nicolson.  The Laplacian rows are symmetric under
trapezoid node weights, so the spatial part of the adjoint pair is exact and
the gradient-verification plateaus are controlled by the time step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .numerics import (
    SobolevMetric,
    TimeSignal,
    UniformGrid1D,
    trapezoid,
    trapezoid_weights,
)


@dataclass(eq=False)
class HeatConfig:
    """Rod geometry, discretization, data, and metric for one control problem."""

    a: float
    b: float
    T: float
    nx: int
    nt: int
    u0: np.ndarray
    target: TimeSignal
    E0: float
    metric: SobolevMetric = field(default_factory=lambda: SobolevMetric(1, (0.01,)))

    def __post_init__(self):
        if self.b <= self.a:
            raise ValueError("domain requires a < b")
        if self.T <= 0:
            raise ValueError("horizon T must be positive")
        if self.nx < 4 or self.nt < 4:
            raise ValueError("nx and nt must both be at least 4")
        self.u0 = np.asarray(self.u0, dtype=float)
        if self.u0.shape != (self.nx + 1,):
            raise ValueError(f"u0 must have nx+1 = {self.nx + 1} samples")
        if self.target.grid.n != self.nt:
            raise ValueError("target grid must match the nt time intervals")
        if self.E0 <= 0:
            raise ValueError("constraint level E0 must be positive")

    @property
    def dx(self) -> float:
        return (self.b - self.a) / self.nx

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @property
    def tgrid(self) -> UniformGrid1D:
        return UniformGrid1D(0.0, self.T, self.nt)

    @property
    def xgrid(self) -> UniformGrid1D:
        return UniformGrid1D(self.a, self.b, self.nx)


@dataclass(eq=False)
class SpaceTimeField:
    """Scalar field on the tensor grid, values[m, i] = f(t_m, x_i)."""

    xgrid: UniformGrid1D
    tgrid: UniformGrid1D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.tgrid.num_nodes, self.xgrid.num_nodes)
        if self.values.shape != expected:
            raise ValueError(f"field shape {self.values.shape} != {expected}")

    def boundary_trace(self, side: str) -> np.ndarray:
        return self.values[:, 0] if side == "left" else self.values[:, -1]


def _laplacian_rows(nx: int, dx: float):
    """Tridiagonal Laplacian with ghost-eliminated Neumann rows.

    Row 0 is (-2, 2)/dx^2 and row nx is (2, -2)/dx^2; flux data enters
    separately through the boundary load vector.
    """
    lo = np.ones(nx)
    main = np.full(nx + 1, -2.0)
    up = np.ones(nx)
    up[0] = 2.0
    lo[-1] = 2.0
    return lo / dx**2, main / dx**2, up / dx**2


def _cn_march(
    nx: int,
    dx: float,
    nt: int,
    dt: float,
    u_init: np.ndarray,
    flux_left: np.ndarray | None,
    flux_right: np.ndarray | None,
    source: np.ndarray | None,
) -> np.ndarray:
    """Crank-Nicolson march of u_t = u_xx + source with Neumann flux data."""
    lo, main, up = _laplacian_rows(nx, dx)
    ab = np.zeros((3, nx + 1))
    ab[0, 1:] = -0.5 * dt * up
    ab[1, :] = 1.0 - 0.5 * dt * main
    ab[2, :-1] = -0.5 * dt * lo

    load = np.zeros((nt + 1, nx + 1))
    if flux_left is not None:
        load[:, 0] -= 2.0 * flux_left / dx
    if flux_right is not None:
        load[:, -1] += 2.0 * flux_right / dx
    if source is not None:
        load += source

    hist = np.empty((nt + 1, nx + 1))
    u = np.array(u_init, dtype=float)
    hist[0] = u
    for m in range(nt):
        lap = main * u
        lap[:-1] += up * u[1:]
        lap[1:] += lo * u[:-1]
        rhs = u + 0.5 * dt * (lap + load[m] + load[m + 1])
        u = solve_banded((1, 1), ab, rhs)
        hist[m + 1] = u
    return hist


def solve_forward(cfg: HeatConfig, flux: TimeSignal) -> SpaceTimeField:
    """March the controlled rod: u_x = flux at x=a, insulated at x=b."""
    if flux.grid.n != cfg.nt:
        raise ValueError("flux must live on the config time grid")
    hist = _cn_march(cfg.nx, cfg.dx, cfg.nt, cfg.dt, cfg.u0, flux.values, None, None)
    return SpaceTimeField(cfg.xgrid, cfg.tgrid, hist)


def objective(cfg: HeatConfig, u: SpaceTimeField) -> float:
    """Misfit (1/2) int (u(t,b) - target)^2 dt."""
    mis = u.boundary_trace("right") - cfg.target.values
    return 0.5 * trapezoid(mis**2, cfg.dt)


def energy_time_avg(cfg: HeatConfig, u: SpaceTimeField) -> float:
    """Time-averaged energy (1/2T) int int u^2 dx dt by nested trapezoid."""
    wx = trapezoid_weights(cfg.nx + 1, cfg.dx)
    per_time = (u.values**2) @ wx
    return trapezoid(per_time, cfg.dt) / (2.0 * cfg.T)


def solve_adjoint_objective(cfg: HeatConfig, u: SpaceTimeField) -> SpaceTimeField:
    """Backward solve whose left trace carries the misfit gradient.

    -u*_t - u*_xx = 0 with u*(T) = 0, u*_x = 0 at x=a and
    u*_x = u(t,b) - target at x=b; integrated as a forward march in T - t.
    """
    mis = u.boundary_trace("right") - cfg.target.values
    hist = _cn_march(
        cfg.nx, cfg.dx, cfg.nt, cfg.dt, np.zeros(cfg.nx + 1), None, mis[::-1], None
    )
    return SpaceTimeField(cfg.xgrid, cfg.tgrid, hist[::-1])


def solve_adjoint_constraint(cfg: HeatConfig, u: SpaceTimeField) -> SpaceTimeField:
    """Backward solve sourced by the state itself, insulated at both ends.

    -v*_t - v*_xx = u with v*(T) = 0; the 1/T of the averaged constraint is
    applied in normal_element_l2, not here.
    """
    hist = _cn_march(
        cfg.nx,
        cfg.dx,
        cfg.nt,
        cfg.dt,
        np.zeros(cfg.nx + 1),
        None,
        None,
        u.values[::-1],
    )
    return SpaceTimeField(cfg.xgrid, cfg.tgrid, hist[::-1])


def gradient_l2(u_star: SpaceTimeField) -> TimeSignal:
    """L^2 misfit gradient: minus the adjoint trace at the controlled end."""
    return TimeSignal(u_star.tgrid, -u_star.boundary_trace("left"))


def normal_element_l2(v_star: SpaceTimeField, T: float) -> TimeSignal:
    """L^2 normal element of the energy constraint: -(1/T) v*(t, a)."""
    return TimeSignal(v_star.tgrid, -v_star.boundary_trace("left") / T)


def solve_perturbation(cfg: HeatConfig, flux_dir: TimeSignal) -> SpaceTimeField:
    """Linearized state response: same march with zero initial data."""
    if flux_dir.grid.n != cfg.nt:
        raise ValueError("perturbation flux must live on the config time grid")
    hist = _cn_march(
        cfg.nx, cfg.dx, cfg.nt, cfg.dt, np.zeros(cfg.nx + 1), flux_dir.values, None, None
    )
    return SpaceTimeField(cfg.xgrid, cfg.tgrid, hist)
