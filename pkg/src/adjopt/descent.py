"""Constraint-manifold machinery and the projected gradient descent driver.

The driver is generic over a problem adapter that evaluates the objective, the
scalar state constraint, and the L^2 gradient / normal element, and that knows
how to lift L^2 representers into the Sobolev metric.  Constrained problems
step along the gradient projected onto the subspace orthogonal (in the Sobolev
inner product) to the constraint's normal element; when the constraint is
homogeneous a rescaling retraction restores it exactly after every trial step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.optimize

log = logging.getLogger(__name__)


class LineSearchFailure(RuntimeError):
    """Bracketing could not enclose a minimum within the evaluation budget."""


class DegenerateNormalError(RuntimeError):
    """Constraint normal element is numerically zero; projection undefined."""


@dataclass
class ProblemAdapter:
    """Callbacks binding a concrete PDE problem to the descent driver.

    Controls are plain 1-D arrays; inner_l2/inner_h are the discrete L^2 and
    Sobolev inner products on control space, and smooth maps an L^2 representer
    to its Sobolev counterpart (the elliptic smoothing solve).
    """

    eval_objective: Callable[[np.ndarray], float]
    eval_constraint: Callable[[np.ndarray], float]
    gradient_l2: Callable[[np.ndarray], np.ndarray]
    normal_l2: Callable[[np.ndarray], np.ndarray]
    smooth: Callable[[np.ndarray], np.ndarray]
    inner_l2: Callable[[np.ndarray, np.ndarray], float]
    inner_h: Callable[[np.ndarray, np.ndarray], float]
    metric: object = None
    constraint_level: float = 1.0
    retract: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @property
    def retraction_available(self) -> bool:
        return self.retract is not None

    def sobolev_gradient(self, control: np.ndarray) -> np.ndarray:
        return self.smooth(self.gradient_l2(control))

    def sobolev_normal(self, control: np.ndarray) -> np.ndarray:
        return self.smooth(self.normal_l2(control))


@dataclass
class DescentOptions:
    max_iters: int = 500
    rel_tol: float = 1e-6
    step_cap: Optional[float] = None  # None: auto 0.05 ||phi0||_H / ||d0||_H
    constrained: bool = False
    use_pr_cg: bool = True
    bracket_grow: float = 2.0
    brent_tol: float = 1e-3
    max_line_evals: int = 40

    def __post_init__(self):
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.step_cap is not None and self.step_cap <= 0:
            raise ValueError("step_cap must be positive")


@dataclass
class IterationRecord:
    n: int
    objective: float
    constraint: float
    step: float
    grad_norm: float = math.nan
    pgrad_norm: float = math.nan


@dataclass
class DescentTrace:
    records: list[IterationRecord] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def append(self, rec: IterationRecord):
        if self.records and rec.n != self.records[-1].n + 1:
            raise ValueError("trace records must be appended in iteration order")
        self.records.append(rec)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    @property
    def constraints(self) -> np.ndarray:
        return np.array([r.constraint for r in self.records])


def project_tangent(direction: np.ndarray, normal: np.ndarray, inner_h) -> np.ndarray:
    """Remove the component of `direction` along `normal` in the H inner product."""
    nn = inner_h(normal, normal)
    dd = inner_h(direction, direction)
    if nn <= (1e-14) ** 2 * dd or nn == 0.0:
        raise DegenerateNormalError(
            f"normal element norm^2 {nn:.3e} is degenerate against direction norm^2 {dd:.3e}"
        )
    zeta = inner_h(direction, normal) / nn
    return direction - zeta * normal


def retract_rescale(control: np.ndarray, adapter: ProblemAdapter) -> np.ndarray:
    """Rescale a control back onto the homogeneous constraint manifold."""
    value = adapter.eval_constraint(control)
    if value <= 0:
        raise RuntimeError(f"cannot retract: constraint value {value:.3e} is not positive")
    return math.sqrt(adapter.constraint_level / value) * control


def brent_minimize(f, bracket, tol: float, max_evals: int):
    """Brent's method on a bracketing triple (lo, mid, hi) with f(mid) < ends."""
    lo, mid, hi = bracket
    try:
        xmin, fval, _, _ = scipy.optimize.brent(
            f, brack=(lo, mid, hi), tol=tol, full_output=True, maxiter=max(1, max_evals)
        )
    except ValueError as exc:
        raise LineSearchFailure(f"invalid bracket ({lo}, {mid}, {hi}): {exc}") from exc
    return float(xmin), float(fval)


def bracket_minimum(f, f0: float, step: float, grow: float, max_evals: int, cap=None):
    """Expand/shrink from 0 until (0, a, b) brackets a minimum of f.

    Returns (a, b, fa, fb) with f(a) < min(f0, f(b)).  If the function keeps
    decreasing up to the cap, returns (cap, None, f(cap), None).  Raises
    LineSearchFailure when no decrease is found within the budget.
    """
    evals = 0
    a = min(step, cap) if cap is not None else step
    fa = f(a)
    evals += 1
    while fa >= f0:
        a /= grow
        if evals >= max_evals or a < 1e-18:
            raise LineSearchFailure(
                f"no descent found after {evals} evaluations (last step {a:.3e})"
            )
        fa = f(a)
        evals += 1
    b = a * grow
    if cap is not None:
        b = min(b, cap)
    while True:
        if cap is not None and a >= cap:
            return a, None, fa, None
        fb = f(b)
        evals += 1
        if fb > fa:
            return a, b, fa, fb
        a, fa = b, fb
        b = a * grow
        if cap is not None:
            b = min(b, cap)
        if evals >= max_evals:
            # monotone decrease within budget: accept the furthest point
            return a, None, fa, None


def pr_cg_direction(g_now: np.ndarray, g_prev, d_prev, inner_h) -> np.ndarray:
    """Polak-Ribiere conjugate direction in the H metric, restarted on non-descent."""
    if g_prev is None or d_prev is None:
        return -g_now
    beta = max(0.0, inner_h(g_now, g_now - g_prev) / inner_h(g_prev, g_prev))
    d = -g_now + beta * d_prev
    if inner_h(d, g_now) >= 0:
        return -g_now
    return d


def _line_search(f, f0, tau_init, opts: DescentOptions, cap):
    """Bracket then Brent; returns (tau, f(tau))."""
    a, b, fa, fb = bracket_minimum(
        f, f0, tau_init, opts.bracket_grow, opts.max_line_evals, cap=cap
    )
    if b is None:
        return a, fa
    tau, fval = brent_minimize(f, (0.0, a, b), opts.brent_tol, opts.max_line_evals)
    if fval >= fa:  # Brent stalled; keep the bracket midpoint
        return a, fa
    return tau, fval


def descend(adapter: ProblemAdapter, phi0: np.ndarray, opts: DescentOptions):
    """Gradient / projected-gradient descent with line minimization.

    Unconstrained mode uses Polak-Ribiere conjugate directions; constrained
    mode projects the Sobolev gradient onto the tangent subspace of the
    constraint manifold and, when a retraction is available, renormalizes every
    trial point during the line search.
    """
    trace = DescentTrace()
    phi = np.asarray(phi0, dtype=float).copy()
    retracting = opts.constrained and adapter.retraction_available
    if retracting:
        phi = adapter.retract(phi)

    J = adapter.eval_objective(phi)
    C = adapter.eval_constraint(phi)
    if not np.isfinite(J):
        raise RuntimeError("objective is not finite at the initial control")
    trace.append(IterationRecord(0, J, C, 0.0))

    g_prev = None
    d_prev = None
    tau_prev = None
    cap = opts.step_cap

    for n in range(1, opts.max_iters + 1):
        g = adapter.sobolev_gradient(phi)
        gnorm = math.sqrt(adapter.inner_h(g, g))
        if opts.constrained:
            try:
                normal = adapter.sobolev_normal(phi)
                d = -project_tangent(g, normal, adapter.inner_h)
            except DegenerateNormalError as exc:
                msg = f"iter {n}: degenerate normal, falling back to plain gradient ({exc})"
                log.warning(msg)
                trace.warnings.append(msg)
                d = -g
        elif opts.use_pr_cg:
            d = pr_cg_direction(g, g_prev, d_prev, adapter.inner_h)
        else:
            d = -g
        dnorm = math.sqrt(adapter.inner_h(d, d))
        trace.records[-1].grad_norm = gnorm
        trace.records[-1].pgrad_norm = dnorm
        if dnorm == 0.0:
            break

        if opts.constrained and not retracting and cap is None:
            phinorm = math.sqrt(adapter.inner_h(phi, phi))
            cap = 0.05 * phinorm / dnorm  # keep first-step drift small
        use_cap = cap if (opts.constrained and not retracting) else None

        def point_at(tau):
            trial = phi + tau * d
            return adapter.retract(trial) if retracting else trial

        def f(tau):
            val = adapter.eval_objective(point_at(tau))
            return val if np.isfinite(val) else np.inf

        tau_init = tau_prev if tau_prev else 1.0
        if use_cap is not None:
            tau_init = min(tau_init, use_cap / 4)
        try:
            tau, J_new = _line_search(f, J, tau_init, opts, use_cap)
        except LineSearchFailure as exc:
            if use_cap is not None:
                tau = use_cap / 10
                J_new = f(tau)
                msg = f"iter {n}: line search failed ({exc}); fallback step {tau:.3e}"
                log.warning(msg)
                trace.warnings.append(msg)
            elif d_prev is not None and opts.use_pr_cg:
                # retry once along steepest descent
                d = -g
                d_prev = None
                try:
                    tau, J_new = _line_search(f, J, tau_init, opts, None)
                except LineSearchFailure:
                    break
            else:
                break
        if not np.isfinite(J_new):
            raise RuntimeError(f"objective became non-finite at iteration {n}")
        if J_new >= J:
            break

        phi = point_at(tau)
        J_prev, J = J, J_new
        C = adapter.eval_constraint(phi)
        trace.append(IterationRecord(n, J, C, tau))
        g_prev, d_prev, tau_prev = g, d, tau
        if (J_prev - J) / J_prev < opts.rel_tol:
            break

    return phi, trace
