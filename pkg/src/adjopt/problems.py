"""Wiring of the two concrete control problems into the generic descent driver.

The rod problem controls a boundary heat flux in time; the closure problem
controls an eddy-viscosity profile as a function of the flow state.  Both are
exposed as ProblemAdapter instances operating on plain arrays, with small
solution caches so a line search followed by a constraint evaluation reuses
the PDE solve at the accepted control.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import heat, les, les_adjoint
from .descent import ProblemAdapter
from .numerics import (
    BvpBoundaryKind,
    SobolevMetric,
    TimeSignal,
    UniformGrid1D,
    inner_product,
    solve_gradient_bvp,
    trapezoid_weights,
)


class _SolutionCache:
    """Tiny FIFO cache keyed by the control array bytes."""

    def __init__(self, capacity: int = 4):
        self.capacity = capacity
        self._store: dict = {}

    def get(self, arr: np.ndarray, builder):
        key = hashlib.sha1(arr.tobytes()).hexdigest()
        if key not in self._store:
            if len(self._store) >= self.capacity:
                self._store.pop(next(iter(self._store)))
            self._store[key] = builder()
        return self._store[key]


# ---------------------------------------------------------------------------
# boundary-flux control of the 1D rod


def flux_true(t: np.ndarray, c_lin: float = 18.0, c_osc: float = 1000.0) -> np.ndarray:
    """Flux used to synthesize the boundary-temperature target."""
    return np.exp(-4.0) * t * (c_lin - c_osc * np.cos(7.5 * np.pi * t))


def flux_initial_guess(t: np.ndarray, amplitude: float = 18.0) -> np.ndarray:
    return amplitude * np.sin(0.5 * np.pi * t) * np.exp(-4.0 * t)


def flux_perturbation(t: np.ndarray) -> np.ndarray:
    return 4.0 * t * np.exp((-4.0 + np.pi) * t)


def initial_temperature(x: np.ndarray, homogeneous: bool,
                        amplitude: float = 10.0) -> np.ndarray:
    return np.zeros_like(x) if homogeneous else amplitude * np.cos(np.pi * x)


@dataclass(eq=False)
class HeatProblem:
    """Target synthesis, constraint level, and adapter for one rod setup."""

    cfg: heat.HeatConfig
    phi0: np.ndarray
    homogeneous: bool

    @classmethod
    def build(cls, nx: int, nt: int, homogeneous_ic: bool,
              a: float = 0.0, b: float = 1.0, T: float = 1.0,
              ell: float = 0.01, E0: Optional[float] = None,
              u0_amplitude: float = 10.0, target_c_lin: float = 18.0,
              target_c_osc: float = 1000.0,
              init_amplitude: float = 18.0) -> "HeatProblem":
        tgrid = UniformGrid1D(0.0, T, nt)
        xgrid = UniformGrid1D(a, b, nx)
        t = tgrid.nodes()
        u0 = initial_temperature(xgrid.nodes(), homogeneous_ic, u0_amplitude)
        metric = SobolevMetric(1, (ell,))
        cfg = heat.HeatConfig(a, b, T, nx, nt, u0,
                              TimeSignal(tgrid, np.zeros(nt + 1)), 1.0, metric)
        target = heat.solve_forward(
            cfg, TimeSignal(tgrid, flux_true(t, target_c_lin, target_c_osc)))
        cfg.target = TimeSignal(tgrid, target.boundary_trace("right").copy())
        phi0 = flux_initial_guess(t, init_amplitude)
        if E0 is None:
            u_init = heat.solve_forward(cfg, TimeSignal(tgrid, phi0))
            E0 = heat.energy_time_avg(cfg, u_init)
        cfg.E0 = E0
        return cls(cfg, phi0, homogeneous_ic)

    @property
    def tgrid(self) -> UniformGrid1D:
        return self.cfg.tgrid

    def signal(self, values: np.ndarray) -> TimeSignal:
        return TimeSignal(self.tgrid, values)

    def adapter(self) -> ProblemAdapter:
        cfg = self.cfg
        cache = _SolutionCache()
        wt = trapezoid_weights(cfg.nt + 1, cfg.dt)

        def solution(arr: np.ndarray) -> heat.SpaceTimeField:
            return cache.get(arr, lambda: heat.solve_forward(cfg, self.signal(arr)))

        def eval_objective(arr):
            return heat.objective(cfg, solution(arr))

        def eval_constraint(arr):
            return heat.energy_time_avg(cfg, solution(arr))

        def gradient_l2(arr):
            u_star = heat.solve_adjoint_objective(cfg, solution(arr))
            return heat.gradient_l2(u_star).values

        def normal_l2(arr):
            v_star = heat.solve_adjoint_constraint(cfg, solution(arr))
            return heat.normal_element_l2(v_star, cfg.T).values

        def smooth(arr):
            return solve_gradient_bvp(self.signal(arr), cfg.metric,
                                      BvpBoundaryKind.DIRICHLET_ZERO).values

        def inner_l2(u, v):
            return float(np.dot(wt * u, v))

        def inner_h(u, v):
            return inner_product(self.signal(u), self.signal(v), cfg.metric)

        adapter = ProblemAdapter(
            eval_objective=eval_objective,
            eval_constraint=eval_constraint,
            gradient_l2=gradient_l2,
            normal_l2=normal_l2,
            smooth=smooth,
            inner_l2=inner_l2,
            inner_h=inner_h,
            metric=cfg.metric,
            constraint_level=cfg.E0,
        )
        if self.homogeneous:
            def retract(arr):
                value = eval_constraint(arr)
                if value <= 0:
                    raise RuntimeError(
                        f"cannot retract: constraint value {value:.3e} is not positive")
                return np.sqrt(cfg.E0 / value) * arr

            adapter.retract = retract
        return adapter


# ---------------------------------------------------------------------------
# eddy-viscosity closure calibration


@dataclass(eq=False)
class ClosureProblem:
    """Reference flow data and adapter for the closure-calibration problem."""

    cfg: les.NsConfig
    w0_les: les.SpectralField
    dns_palinstrophy: np.ndarray
    dns_enstrophy: np.ndarray
    phi0: les.StateFunction
    c_leith: float

    @classmethod
    def build(cls, cfg: les.NsConfig, tune_constant: bool = True,
              c_leith: float = 4.702e-3) -> "ClosureProblem":
        """Run the reference flow, resolve derived parameters, tune the guess.

        Resolution order: reference series and constraint level from the
        resolved run; s_max from the Leith-closure trajectory (factor 1.2
        headroom); objective normalization from the reference palinstrophy.
        """
        w0_dns = les.reference_initial_field(cfg)
        dns = les.run_dns(cfg, w0_dns)
        e0 = les.constraint_enstrophy(cfg, dns.filtered_enstrophy)
        p = dns.filtered_palinstrophy
        d_norm = float(np.dot(trapezoid_weights(cfg.nt + 1, cfg.dt), p**2))
        cfg = cfg.resolved(E0=e0, D=d_norm)
        w0_les = les.les_initial_field(cfg, w0_dns)

        if tune_constant:
            c_leith = les.tune_leith_constant(cfg, w0_les, e0, c_guess=c_leith)
        guess_traj = les.run_les(cfg, w0_les, les.leith_viscosity(c_leith, cfg.k_c))
        s_max = 1.2 * les.max_state_value(guess_traj)
        cfg = cfg.resolved(s_max=s_max)
        if cfg.nu0 is None:
            # keep the ansatz prefactor resolved over a few cells of the
            # uniform state grid near sigma = 0
            cfg = cfg.resolved(nu0=cfg.eta**3 * np.sqrt(3.0 * s_max / (cfg.n_sigma - 1)))
        phi0 = les.phi_from_viscosity(cfg, les.leith_viscosity(c_leith, cfg.k_c))
        return cls(cfg, w0_les, p, dns.filtered_enstrophy, phi0, c_leith)

    def state_function(self, values: np.ndarray) -> les.StateFunction:
        return les.StateFunction(values)

    def adapter(self) -> ProblemAdapter:
        cfg = self.cfg
        cache = _SolutionCache(capacity=3)
        grid = les_adjoint.sigma_grid(cfg.n_sigma)
        wt = trapezoid_weights(cfg.n_sigma, grid.spacing)
        metric = les_adjoint.sigma_metric(cfg)

        def trajectory(arr: np.ndarray) -> les.FlowHistory:
            return cache.get(
                arr, lambda: les.run_les(cfg, self.w0_les, les.StateFunction(arr))
            )

        def eval_objective(arr):
            return les.objective_j2(cfg, self.dns_palinstrophy,
                                    trajectory(arr).palinstrophy)

        def eval_constraint(arr):
            return les.constraint_enstrophy(cfg, trajectory(arr).enstrophy)

        def gradient_l2(arr):
            forward = trajectory(arr)
            source = les_adjoint.AdjointSource("objective", self.dns_palinstrophy)
            adj = les_adjoint.solve_les_adjoint(cfg, forward, les.StateFunction(arr), source)
            return les_adjoint.extract_state_gradient(cfg, forward, adj).values

        def normal_l2(arr):
            forward = trajectory(arr)
            adj = les_adjoint.solve_les_adjoint(cfg, forward, les.StateFunction(arr),
                                                les_adjoint.AdjointSource("constraint"))
            return les_adjoint.extract_state_gradient(cfg, forward, adj).values

        def smooth(arr):
            return solve_gradient_bvp(TimeSignal(grid, arr), metric,
                                      BvpBoundaryKind.NATURAL_ODD_DERIV).values

        def inner_l2(u, v):
            return float(np.dot(wt * u, v))

        def inner_h(u, v):
            return inner_product(TimeSignal(grid, u), TimeSignal(grid, v), metric)

        return ProblemAdapter(
            eval_objective=eval_objective,
            eval_constraint=eval_constraint,
            gradient_l2=gradient_l2,
            normal_l2=normal_l2,
            smooth=smooth,
            inner_l2=inner_l2,
            inner_h=inner_h,
            metric=metric,
            constraint_level=cfg.E0,
        )

    def perturbation(self, name: str) -> np.ndarray:
        """Named closure perturbations expressed as profile directions."""
        cfg = self.cfg
        sigma = np.linspace(0.0, 1.0, cfg.n_sigma)
        s = sigma * cfg.s_max
        pref = cfg.eta**3 * np.sqrt(s) + cfg.nu0
        if name == "leith_scaled":
            nu_dir = les.leith_viscosity(4.2e-3, cfg.k_c)(s)
        elif name == "exp_decay":
            nu_dir = np.exp(-2.0 * s / 30.0)
        else:
            raise ValueError(f"unknown perturbation {name!r}")
        return nu_dir / pref
