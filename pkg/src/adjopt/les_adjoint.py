"""Adjoint solver for the filtered vorticity system and state-space gradients.

One backward solver serves both the objective gradient and the constraint's
normal element: the adjoint operator is identical, only the source term
differs.  The per-stage coefficients (the forward field, its gradient, the
eddy viscosity and its state derivative) are frozen from stored forward
snapshots and interpolated linearly in time at the Runge-Kutta abscissae.

The L^2 gradient with respect to the closure profile lives on the state
variable sigma = s / s_max: every space-time sample deposits its weight onto
the two bracketing sigma nodes with a piecewise-linear hat kernel, normalized
by the node quadrature weights so that the deposited density integrates (by
trapezoid) to exactly the direct space-time integral.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .les import FlowHistory, NsConfig, StateFunction, forcing_for, _if_factors
from .numerics import BvpBoundaryKind, SobolevMetric, TimeSignal, UniformGrid1D, \
    solve_gradient_bvp, trapezoid_weights
from .spectral import (
    AREA,
    box_mask,
    gradient_physical,
    inv_ksq,
    ksq,
    to_physical,
    to_spectral,
    velocity_physical,
    wavenumbers,
)


@dataclass(eq=False)
class AdjointSource:
    """Source of the backward solve: palinstrophy misfit or enstrophy average."""

    kind: str  # "objective" | "constraint"
    dns_palinstrophy: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("objective", "constraint"):
            raise ValueError(f"unknown adjoint source kind {self.kind!r}")
        if self.kind == "objective" and self.dns_palinstrophy is None:
            raise ValueError("objective source needs the reference palinstrophy series")


@dataclass(eq=False)
class AdjointHistory:
    """Backward trajectory stored forward in time: snapshots[m] is at t_m."""

    times: np.ndarray
    snapshots: np.ndarray  # (nt+1, n, n) complex coefficients

    @property
    def nt(self) -> int:
        return self.times.size - 1


def _state_coefficients(cfg: NsConfig, w_coeffs: np.ndarray, phi: StateFunction):
    """Frozen forward-state quantities entering the adjoint operator."""
    w1, w2 = gradient_physical(w_coeffs)
    s = w1 * w1 + w2 * w2
    sigma = np.clip(s / cfg.s_max, 0.0, 1.0)
    sqrt_s = np.sqrt(s)
    pref = cfg.eta**3 * sqrt_s + cfg.nu0
    phi_val = phi(sigma)
    dphi = phi.derivative(sigma)
    nu = pref * phi_val
    # d nu / d s by the product rule; the sqrt'(s) piece is zeroed at s = 0
    # where its product with (grad w . grad g) grad w vanishes anyway.
    dnu = np.where(s > 0, 0.5 * cfg.eta**3 * phi_val / np.where(s > 0, sqrt_s, 1.0), 0.0)
    dnu = dnu + pref * dphi / cfg.s_max
    return w1, w2, nu, dnu


def _adjoint_rhs(cfg: NsConfig, g: np.ndarray, w_coeffs: np.ndarray,
                 phi: StateFunction, w_source: np.ndarray) -> np.ndarray:
    """Explicit part of the backward equation in reversed time.

    d g / d tau = adv(psi, g) - psi* - alpha g + div(coupling + nu grad g) + W
    with psi* solving lap(psi*) = perp-div(g grad w).
    """
    n = g.shape[0]
    mask = box_mask(n, cfg.k_c)
    k1, k2 = wavenumbers(n)

    w1, w2, nu, dnu = _state_coefficients(cfg, w_coeffs, phi)
    psi = w_coeffs * inv_ksq(n)
    u1, u2 = velocity_physical(psi)
    g1, g2 = gradient_physical(g)
    gp = to_physical(g)

    adv = to_spectral(u1 * g1 + u2 * g2) * mask

    # streamfunction adjoint: lap psi* = d_y(g w_x) - d_x(g w_y)
    f1 = to_spectral(gp * w1)
    f2 = to_spectral(gp * w2)
    perp_div = (1j * k2 * f1 - 1j * k1 * f2) * mask
    psi_star = -perp_div * inv_ksq(n)

    # closure coupling: div( 2 (grad w . grad g) dnu grad w + nu grad g )
    dot = w1 * g1 + w2 * g2
    c1 = 2.0 * dot * dnu * w1 + nu * g1
    c2 = 2.0 * dot * dnu * w2 + nu * g2
    flux = (1j * k1 * to_spectral(c1) + 1j * k2 * to_spectral(c2)) * mask

    return adv - psi_star - cfg.alpha * g + flux + w_source


def solve_les_adjoint(cfg: NsConfig, forward: FlowHistory, phi: StateFunction,
                      source: AdjointSource) -> AdjointHistory:
    """March the adjoint system backward from a zero terminal condition."""
    if forward.snapshots is None:
        raise RuntimeError("adjoint solve needs the stored forward trajectory")
    n = forward.snapshots.shape[1]
    nt = forward.nt
    dt = cfg.dt
    e_full, e_half = _if_factors(n, cfg.nu_n, dt)
    mask = box_mask(n, cfg.k_c)

    def w_source_for(m: int) -> np.ndarray:
        wc = forward.snapshot(m)
        if source.kind == "constraint":
            return wc / cfg.T
        mis = (source.dns_palinstrophy[m] - forward.palinstrophy[m]) / cfg.D
        return -mis * ksq(n) * wc  # Delta w times the misfit weight

    snaps = np.empty((nt + 1, n, n), dtype=complex)
    g = np.zeros((n, n), dtype=complex)
    snaps[nt] = g
    for k in range(nt):
        # coefficients and source frozen per step at the later time node;
        # the resulting gradient error is first order in dt
        m = nt - k
        wc = forward.snapshot(m)
        ws = w_source_for(m)

        def tendency(gv):
            return _adjoint_rhs(cfg, gv, wc, phi, ws)

        k1v = tendency(g)
        k2v = tendency(e_half * (g + 0.5 * dt * k1v))
        k3v = tendency(e_full * g + dt * (-e_full * k1v + 2.0 * e_half * k2v))
        g = e_full * g + (dt / 6.0) * (e_full * k1v + 4.0 * e_half * k2v + k3v)
        g *= mask
        snaps[nt - 1 - k] = g
    return AdjointHistory(forward.times.copy(), snaps)


def extract_state_gradient(cfg: NsConfig, forward: FlowHistory,
                           adjoint: AdjointHistory) -> StateFunction:
    """Deposit -(eta^3 sqrt(s) + nu0) grad w . grad w* onto the sigma grid.

    Each space-time sample deposits through the exact transpose of the
    profile-spline evaluation used in the forward closure, so the pairing of
    the returned density with any profile direction reproduces the discrete
    directional derivative; samples clamped at sigma = 1 deposit entirely onto
    the last node.  Returns a density over sigma (node weights divided out).
    """
    from .les import ProfileDeposit

    n_sigma = cfg.n_sigma
    node_w = trapezoid_weights(n_sigma, 1.0 / (n_sigma - 1))
    deposit = ProfileDeposit(n_sigma)

    nt = forward.nt
    n = forward.snapshots.shape[1]
    cell = AREA / (n * n)
    wt = trapezoid_weights(nt + 1, cfg.dt)
    for m in range(nt + 1):
        w1, w2 = gradient_physical(forward.snapshot(m))
        g1, g2 = gradient_physical(adjoint.snapshots[m])
        s = w1 * w1 + w2 * w2
        q = -(cfg.eta**3 * np.sqrt(s) + cfg.nu0) * (w1 * g1 + w2 * g2) * cell * wt[m]
        deposit.add(s / cfg.s_max, q)
    return StateFunction(deposit.gradient() / node_w)


def direct_state_integral(cfg: NsConfig, forward: FlowHistory,
                          adjoint: AdjointHistory) -> float:
    """Space-time integral the deposited density must reproduce exactly."""
    nt = forward.nt
    n = forward.snapshots.shape[1]
    cell = AREA / (n * n)
    wt = trapezoid_weights(nt + 1, cfg.dt)
    total = 0.0
    for m in range(nt + 1):
        w1, w2 = gradient_physical(forward.snapshot(m))
        g1, g2 = gradient_physical(adjoint.snapshots[m])
        s = w1 * w1 + w2 * w2
        total += float(np.sum(-(cfg.eta**3 * np.sqrt(s) + cfg.nu0)
                              * (w1 * g1 + w2 * g2))) * cell * wt[m]
    return total


def sigma_grid(n_sigma: int) -> UniformGrid1D:
    return UniformGrid1D(0.0, 1.0, n_sigma - 1)


def sobolev_gradient_h2(g_l2: StateFunction, metric: SobolevMetric) -> StateFunction:
    """Smooth a sigma-space L^2 gradient into the order-2 Sobolev metric."""
    rhs = TimeSignal(sigma_grid(g_l2.n_sigma), g_l2.values)
    out = solve_gradient_bvp(rhs, metric, BvpBoundaryKind.NATURAL_ODD_DERIV)
    return StateFunction(out.values)


def sigma_metric(cfg: NsConfig) -> SobolevMetric:
    """Closure metric with length scales converted from s units to sigma units.

    The configured scales refer to the state variable s; the smoothing BVP is
    posed on sigma = s / s_max, so each length rescales by 1 / s_max.
    """
    l1, l2 = cfg.metric.lengths
    return SobolevMetric(2, (l1 / cfg.s_max, l2 / cfg.s_max))


def gradient_phi(cfg: NsConfig, forward: FlowHistory, phi: StateFunction,
                 dns_palinstrophy: np.ndarray) -> StateFunction:
    """Sobolev gradient of the palinstrophy-misfit objective."""
    source = AdjointSource("objective", dns_palinstrophy)
    adj = solve_les_adjoint(cfg, forward, phi, source)
    return sobolev_gradient_h2(extract_state_gradient(cfg, forward, adj), sigma_metric(cfg))


def normal_phi(cfg: NsConfig, forward: FlowHistory, phi: StateFunction) -> StateFunction:
    """Sobolev normal element of the mean-enstrophy constraint."""
    adj = solve_les_adjoint(cfg, forward, phi, AdjointSource("constraint"))
    return sobolev_gradient_h2(extract_state_gradient(cfg, forward, adj), sigma_metric(cfg))


# ---------------------------------------------------------------------------
# operator-level duality check helpers

def _central_dt(traj: np.ndarray, dt: float) -> np.ndarray:
    """Second-order time derivative of a snapshot sequence."""
    out = np.empty_like(traj)
    out[1:-1] = (traj[2:] - traj[:-2]) / (2.0 * dt)
    out[0] = (-3.0 * traj[0] + 4.0 * traj[1] - traj[2]) / (2.0 * dt)
    out[-1] = (3.0 * traj[-1] - 4.0 * traj[-2] + traj[-3]) / (2.0 * dt)
    return out


def apply_tangent_operator(cfg: NsConfig, forward: FlowHistory, phi: StateFunction,
                           q: np.ndarray) -> np.ndarray:
    """Linearized forward operator applied to a vorticity trajectory q.

    The paired streamfunction perturbation is eliminated through the Poisson
    solve, so the result is a single vorticity-equation residual trajectory.
    """
    nt = forward.nt
    n = q.shape[1]
    mask = box_mask(n, cfg.k_c)
    k1, k2 = wavenumbers(n)
    dq_dt = _central_dt(q, cfg.dt)
    out = np.empty_like(q)
    for m in range(nt + 1):
        wc = forward.snapshot(m)
        w1, w2, nu, dnu = _state_coefficients(cfg, wc, phi)
        u1, u2 = velocity_physical(wc * inv_ksq(n))
        qc = q[m]
        psi_q = qc * inv_ksq(n)
        v1, v2 = velocity_physical(psi_q)
        q1, q2 = gradient_physical(qc)
        adv = to_spectral(u1 * q1 + u2 * q2 + v1 * w1 + v2 * w2) * mask
        dot = w1 * q1 + w2 * q2
        c1 = 2.0 * dot * dnu * w1 + (cfg.nu_n + nu) * q1
        c2 = 2.0 * dot * dnu * w2 + (cfg.nu_n + nu) * q2
        flux = (1j * k1 * to_spectral(c1) + 1j * k2 * to_spectral(c2)) * mask
        out[m] = dq_dt[m] + adv + cfg.alpha * qc - flux
    return out


def apply_adjoint_operator(cfg: NsConfig, forward: FlowHistory, phi: StateFunction,
                           g: np.ndarray) -> np.ndarray:
    """Adjoint operator applied to an adjoint vorticity trajectory g."""
    nt = forward.nt
    n = g.shape[1]
    mask = box_mask(n, cfg.k_c)
    k1, k2 = wavenumbers(n)
    dg_dt = _central_dt(g, cfg.dt)
    out = np.empty_like(g)
    for m in range(nt + 1):
        wc = forward.snapshot(m)
        w1, w2, nu, dnu = _state_coefficients(cfg, wc, phi)
        u1, u2 = velocity_physical(wc * inv_ksq(n))
        gc = g[m]
        g1, g2 = gradient_physical(gc)
        gp = to_physical(gc)
        adv = to_spectral(u1 * g1 + u2 * g2) * mask
        f1 = to_spectral(gp * w1)
        f2 = to_spectral(gp * w2)
        psi_star = -(1j * k2 * f1 - 1j * k1 * f2) * mask * inv_ksq(n)
        dot = w1 * g1 + w2 * g2
        c1 = 2.0 * dot * dnu * w1 + (cfg.nu_n + nu) * g1
        c2 = 2.0 * dot * dnu * w2 + (cfg.nu_n + nu) * g2
        flux = (1j * k1 * to_spectral(c1) + 1j * k2 * to_spectral(c2)) * mask
        out[m] = -dg_dt[m] - adv + cfg.alpha * gc + psi_star - flux
    return out


def spacetime_pairing(a: np.ndarray, b: np.ndarray, dt: float) -> float:
    """int_0^T int a b dx dt over two spectral snapshot sequences."""
    nt = a.shape[0] - 1
    wt = trapezoid_weights(nt + 1, dt)
    vals = AREA * np.real(np.einsum("mij,mij->m", a, np.conj(b)))
    return float(np.dot(wt, vals))
