"""Pseudo-spectral solvers for 2D Navier-Stokes and its eddy-viscosity LES twin.

The resolved system evolves vorticity with a third-order integrating-factor
Runge-Kutta scheme: molecular diffusion is absorbed exactly into the
exponential factor, while advection, Ekman friction, band-limited forcing, and
the state-dependent closure flux are explicit.  The LES state stays band
limited to the filter cutoff because every nonlinear tendency is projected back
onto the resolved band, mirroring the filtered form of the governing equations.

The closure ansatz is nu(s) = (eta^3 sqrt(s) + nu0) * phi(s / s_max) with
s = |grad w|^2; the nondimensional profile phi, sampled on a uniform grid in
sigma = s / s_max and evaluated by cubic spline, is the optimization control.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import brentq

from .numerics import SobolevMetric
from .spectral import (
    SpectralField,
    box_mask,
    dealias_cutoff,
    dealias_mask,
    enstrophy,
    gradient_physical,
    inv_ksq,
    ksq,
    palinstrophy,
    restrict_to_grid,
    to_physical,
    to_spectral,
    velocity_physical,
    wavenumbers,
)

log = logging.getLogger(__name__)


@dataclass
class NsConfig:
    """Flow, discretization, filter, and closure-ansatz parameters."""

    nu_n: float = 4e-4          # kinematic viscosity
    alpha: float = 5e-3         # Ekman friction
    forcing_amplitude: float = 2.0
    forcing_k_lo: int = 4
    forcing_k_hi: int = 4
    forcing_seed: int = 7
    n_dns: int = 128
    n_les: int = 32
    k_c: int = 4                # LES filter cutoff
    dt: float = 1e-3
    T: float = 2.0
    nu0: Optional[float] = None  # closure viscosity floor; None: resolution rule
    eta: Optional[float] = None  # filter width; defaults to 2 pi / k_c
    s_max: Optional[float] = None
    n_sigma: int = 128
    D: Optional[float] = None    # objective normalization
    E0: Optional[float] = None   # enstrophy constraint level
    metric: SobolevMetric = field(default_factory=lambda: SobolevMetric(2, (1000.0, 100.0)))
    w0_seed: int = 11
    w0_kmax: int = 4
    w0_enstrophy: float = 150.0
    spin_time: float = 1.0

    def __post_init__(self):
        if min(self.nu_n, self.alpha, self.forcing_amplitude) <= 0:
            raise ValueError("nu_n, alpha, and the forcing amplitude must be positive")
        if not (1 <= self.forcing_k_lo <= self.forcing_k_hi < self.n_dns // 3):
            raise ValueError("forcing band must satisfy 1 <= k_lo <= k_hi < n_dns/3")
        if self.k_c > dealias_cutoff(self.n_les):
            raise ValueError("filter cutoff k_c must not exceed the LES dealiasing bound")
        if self.dt <= 0 or self.T <= 0:
            raise ValueError("dt and T must be positive")
        if self.s_max is not None and self.s_max <= 0:
            raise ValueError("s_max must be positive")
        if self.eta is None:
            self.eta = 2.0 * np.pi / self.k_c

    @property
    def nt(self) -> int:
        steps = self.T / self.dt
        n = int(round(steps))
        if abs(steps - n) > 1e-9:
            raise ValueError("T must be an integer multiple of dt")
        return n

    def resolved(self, **updates) -> "NsConfig":
        return replace(self, **updates)


def _natural_slope_bands(n: int, h: float):
    """Banded matrix of the natural-spline slope system (symmetric tridiagonal)."""
    ab = np.zeros((3, n))
    ab[0, 1:] = 1.0
    ab[1, :] = 4.0
    ab[1, 0] = ab[1, -1] = 2.0
    ab[2, :-1] = 1.0
    return ab


def _natural_slope_rhs(values: np.ndarray, h: float) -> np.ndarray:
    r = np.empty_like(values)
    r[1:-1] = 3.0 * (values[2:] - values[:-2]) / h
    r[0] = 3.0 * (values[1] - values[0]) / h
    r[-1] = 3.0 * (values[-1] - values[-2]) / h
    return r


def _natural_slopes(values: np.ndarray, h: float) -> np.ndarray:
    return solve_banded((1, 1), _natural_slope_bands(values.size, h), _natural_slope_rhs(values, h))


def _hermite_pieces(sigma: np.ndarray, n: int):
    """Cell index and local coordinate of clipped evaluation points."""
    h = 1.0 / (n - 1)
    pos = np.clip(sigma, 0.0, 1.0) / h
    idx = np.minimum(pos.astype(int), n - 2)
    u = pos - idx
    return idx, u, h


@dataclass(eq=False)
class StateFunction:
    """Profile phi(sigma) sampled on a uniform grid over [0, 1].

    Evaluation is a natural cubic spline in Hermite form; the slope system is
    solved once and cached.  Evaluations clip sigma to [0, 1], and the reported
    derivative is zero outside that range, matching the clamped forward use.
    """

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 4:
            raise ValueError("state function needs at least 4 samples")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("state function contains non-finite values")
        self._slopes = None

    @property
    def n_sigma(self) -> int:
        return self.values.size

    @property
    def sigma(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.values.size)

    def slopes(self) -> np.ndarray:
        if self._slopes is None:
            self._slopes = _natural_slopes(self.values, 1.0 / (self.values.size - 1))
        return self._slopes

    def __call__(self, sigma: np.ndarray) -> np.ndarray:
        v = self.values
        m = self.slopes()
        idx, u, h = _hermite_pieces(np.asarray(sigma, dtype=float), v.size)
        u2 = u * u
        u3 = u2 * u
        return ((2 * u3 - 3 * u2 + 1) * v[idx] + (-2 * u3 + 3 * u2) * v[idx + 1]
                + h * ((u3 - 2 * u2 + u) * m[idx] + (u3 - u2) * m[idx + 1]))

    def derivative(self, sigma: np.ndarray) -> np.ndarray:
        sigma = np.asarray(sigma, dtype=float)
        v = self.values
        m = self.slopes()
        idx, u, h = _hermite_pieces(sigma, v.size)
        u2 = u * u
        d = ((6 * u2 - 6 * u) * (v[idx] - v[idx + 1]) / h
             + (3 * u2 - 4 * u + 1) * m[idx] + (3 * u2 - 2 * u) * m[idx + 1])
        return np.where((sigma < 0.0) | (sigma > 1.0), 0.0, d)

    @classmethod
    def constant(cls, value: float, n_sigma: int) -> "StateFunction":
        return cls(np.full(n_sigma, float(value)))


class ProfileDeposit:
    """Accumulates the exact transpose of spline evaluation at sample points.

    add(sigma, q) accumulates sum_s q_s * d phi(sigma_s) / d values; gradient()
    finishes the chain through the slope system (one banded solve).  Because
    spline evaluation reproduces constants, the accumulated gradient sums to
    the total deposited weight exactly.
    """

    def __init__(self, n_sigma: int):
        self.n = n_sigma
        self.h = 1.0 / (n_sigma - 1)
        self._dv = np.zeros(n_sigma)
        self._dm = np.zeros(n_sigma)

    def add(self, sigma: np.ndarray, q: np.ndarray) -> None:
        idx, u, h = _hermite_pieces(np.asarray(sigma, dtype=float).ravel(), self.n)
        q = np.asarray(q, dtype=float).ravel()
        u2 = u * u
        u3 = u2 * u
        np.add.at(self._dv, idx, (2 * u3 - 3 * u2 + 1) * q)
        np.add.at(self._dv, idx + 1, (-2 * u3 + 3 * u2) * q)
        np.add.at(self._dm, idx, h * (u3 - 2 * u2 + u) * q)
        np.add.at(self._dm, idx + 1, h * (u3 - u2) * q)

    def gradient(self) -> np.ndarray:
        # chain rule through m = A^{-1} r(v); A is symmetric
        y = solve_banded((1, 1), _natural_slope_bands(self.n, self.h), self._dm)
        dv = self._dv.copy()
        c = 3.0 / self.h
        dv[2:] += c * y[1:-1]
        dv[:-2] -= c * y[1:-1]
        dv[1] += c * y[0]
        dv[0] -= c * y[0]
        dv[-1] += c * y[-1]
        dv[-2] -= c * y[-1]
        return dv


Closure = Union[StateFunction, Callable[[np.ndarray], np.ndarray]]


@dataclass(eq=False)
class FlowHistory:
    """Per-step record of a vorticity trajectory and its integral diagnostics."""

    times: np.ndarray
    enstrophy: np.ndarray
    palinstrophy: np.ndarray
    snapshots: Optional[np.ndarray] = None  # (nt+1, n, n) complex coefficients
    warnings: list = field(default_factory=list)

    @property
    def nt(self) -> int:
        return self.times.size - 1

    def snapshot(self, m: int) -> np.ndarray:
        if self.snapshots is None:
            raise RuntimeError("trajectory was run without snapshot storage")
        return self.snapshots[m]


# ---------------------------------------------------------------------------
# forcing and initial data


_FORCING_CACHE: dict = {}


def band_forcing(n: int, amplitude: float, k_lo: int, k_hi: int, seed: int) -> np.ndarray:
    """Time-independent forcing with seeded phases on k_lo <= max|k_i| <= k_hi.

    Normalized so that sum |f_k|^2 = amplitude^2.
    """
    key = (n, amplitude, k_lo, k_hi, seed)
    if key not in _FORCING_CACHE:
        rng = np.random.default_rng(seed)
        k1, k2 = wavenumbers(n)
        kmax = np.maximum(np.abs(k1), np.abs(k2))
        band = (kmax >= k_lo) & (kmax <= k_hi)
        raw = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        # round trip through physical space enforces conjugate symmetry
        coeffs = to_spectral(to_physical(np.where(band, raw, 0.0)))
        coeffs[~band] = 0.0
        norm = np.sqrt(np.sum(np.abs(coeffs) ** 2))
        _FORCING_CACHE[key] = coeffs * (amplitude / norm)
    return _FORCING_CACHE[key]


def forcing_for(cfg: NsConfig, n: int) -> np.ndarray:
    return band_forcing(n, cfg.forcing_amplitude, cfg.forcing_k_lo, cfg.forcing_k_hi, cfg.forcing_seed)


def initial_vorticity(cfg: NsConfig) -> SpectralField:
    """Seeded random vorticity with a filled low-wavenumber spectrum."""
    rng = np.random.default_rng(cfg.w0_seed)
    n = cfg.n_dns
    k1, k2 = wavenumbers(n)
    kmax = np.maximum(np.abs(k1), np.abs(k2))
    band = (kmax >= 1) & (kmax <= cfg.w0_kmax)
    raw = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / np.maximum(kmax, 1.0)
    coeffs = to_spectral(to_physical(np.where(band, raw, 0.0)))
    coeffs[~band] = 0.0
    coeffs[0, 0] = 0.0
    coeffs *= np.sqrt(cfg.w0_enstrophy / enstrophy(coeffs))
    return SpectralField(coeffs)


# ---------------------------------------------------------------------------
# closure ansatz


def eddy_viscosity(s: np.ndarray, phi: StateFunction, cfg: NsConfig) -> np.ndarray:
    """nu(s) = (eta^3 sqrt(s) + nu0) * phi(s / s_max), sigma clamped to [0, 1]."""
    if cfg.s_max is None:
        raise ValueError("config has no s_max; resolve it from the initial trajectory")
    if np.any(s < 0):
        raise ValueError("state variable s = |grad w|^2 must be non-negative")
    sigma = s / cfg.s_max
    return (cfg.eta**3 * np.sqrt(s) + cfg.nu0) * phi(sigma)


def leith_viscosity(c_leith: float, k_c: int) -> Callable[[np.ndarray], np.ndarray]:
    """Leith-model eddy viscosity (C k_c)^3 sqrt(s)."""
    coef = (c_leith * k_c) ** 3
    return lambda s: coef * np.sqrt(s)


def phi_from_viscosity(cfg: NsConfig, nu_fn: Callable) -> StateFunction:
    """Sample a raw nu(s) profile into the nondimensional ansatz profile."""
    if cfg.s_max is None:
        raise ValueError("config has no s_max; resolve it from the initial trajectory")
    sigma = np.linspace(0.0, 1.0, cfg.n_sigma)
    s = sigma * cfg.s_max
    return StateFunction(nu_fn(s) / (cfg.eta**3 * np.sqrt(s) + cfg.nu0))


def _closure_nu(closure: Closure, s: np.ndarray, cfg: NsConfig) -> np.ndarray:
    if isinstance(closure, StateFunction):
        return eddy_viscosity(s, closure, cfg)
    return closure(s)


# ---------------------------------------------------------------------------
# time stepping

_IF_CACHE: dict = {}


def _if_factors(n: int, nu: float, dt: float):
    key = (n, nu, dt)
    if key not in _IF_CACHE:
        k2 = ksq(n)
        _IF_CACHE[key] = (np.exp(-nu * k2 * dt), np.exp(-nu * k2 * dt / 2.0))
    return _IF_CACHE[key]


def _dns_tendency(cfg: NsConfig, w: np.ndarray, forcing: np.ndarray) -> np.ndarray:
    """Explicit tendency: dealiased advection, friction, forcing."""
    n = w.shape[0]
    psi = w * inv_ksq(n)
    u1, u2 = velocity_physical(psi)
    w1, w2 = gradient_physical(w)
    adv = to_spectral(u1 * w1 + u2 * w2) * dealias_mask(n)
    return -adv - cfg.alpha * w + forcing


def _les_tendency(cfg: NsConfig, w: np.ndarray, closure: Closure, forcing: np.ndarray,
                  neg_visc: list | None = None) -> np.ndarray:
    """Explicit tendency of the filtered system: advection and closure flux
    are projected back onto the resolved band."""
    n = w.shape[0]
    mask = box_mask(n, cfg.k_c)
    k1, k2 = wavenumbers(n)
    psi = w * inv_ksq(n)
    u1, u2 = velocity_physical(psi)
    w1, w2 = gradient_physical(w)
    adv = to_spectral(u1 * w1 + u2 * w2) * mask
    s = w1 * w1 + w2 * w2
    nu = _closure_nu(closure, s, cfg)
    if neg_visc is not None and np.min(nu) < -cfg.nu_n:
        neg_visc.append(float(np.min(nu)))
    flux = 1j * k1 * to_spectral(nu * w1) + 1j * k2 * to_spectral(nu * w2)
    return -adv + flux * mask - cfg.alpha * w + forcing


def _ifrk3_step(w: np.ndarray, dt: float, e_full: np.ndarray, e_half: np.ndarray,
                tendency) -> np.ndarray:
    """Integrating-factor classical RK3 (abscissae 0, 1/2, 1)."""
    k1 = tendency(w)
    k2 = tendency(e_half * (w + 0.5 * dt * k1))
    k3 = tendency(e_full * w + dt * (-e_full * k1 + 2.0 * e_half * k2))
    return e_full * w + (dt / 6.0) * (e_full * k1 + 4.0 * e_half * k2 + k3)


def step_dns(cfg: NsConfig, w: SpectralField) -> SpectralField:
    """One IMEX step of the resolved vorticity equation."""
    e_full, e_half = _if_factors(w.n, cfg.nu_n, cfg.dt)
    forcing = forcing_for(cfg, w.n)
    out = _ifrk3_step(w.coeffs, cfg.dt, e_full, e_half,
                      lambda c: _dns_tendency(cfg, c, forcing))
    return SpectralField(out)


def step_les(cfg: NsConfig, w: SpectralField, phi: Closure) -> SpectralField:
    """One IMEX step of the filtered vorticity equation with closure phi."""
    e_full, e_half = _if_factors(w.n, cfg.nu_n, cfg.dt)
    forcing = forcing_for(cfg, w.n) * box_mask(w.n, cfg.k_c)
    out = _ifrk3_step(w.coeffs, cfg.dt, e_full, e_half,
                      lambda c: _les_tendency(cfg, c, phi, forcing))
    return SpectralField(out)


def _cfl_number(cfg: NsConfig, w: np.ndarray) -> float:
    n = w.shape[0]
    u1, u2 = velocity_physical(w * inv_ksq(n))
    umax = max(np.max(np.abs(u1)), np.max(np.abs(u2)))
    return umax * cfg.dt / (2.0 * np.pi / n)


def _run(cfg: NsConfig, w0: SpectralField, tendency_builder, nt: int,
         store_fields: bool, on_snapshot=None) -> FlowHistory:
    n = w0.n
    e_full, e_half = _if_factors(n, cfg.nu_n, cfg.dt)
    times = cfg.dt * np.arange(nt + 1)
    ens = np.empty(nt + 1)
    pal = np.empty(nt + 1)
    snaps = np.empty((nt + 1, n, n), dtype=complex) if store_fields else None
    warnings: list = []
    tendency = tendency_builder(warnings)

    w = w0.coeffs.copy()
    for m in range(nt + 1):
        ens[m] = enstrophy(w)
        pal[m] = palinstrophy(w)
        if snaps is not None:
            snaps[m] = w
        if on_snapshot is not None:
            on_snapshot(m, w)
        if m == nt:
            break
        if m % 50 == 0:
            cfl = _cfl_number(cfg, w)
            if cfl > 1.0:
                msg = f"CFL number {cfl:.2f} > 1 at t={times[m]:.3f}"
                log.warning(msg)
                warnings.append(msg)
        w = _ifrk3_step(w, cfg.dt, e_full, e_half, tendency)
        if not np.all(np.isfinite(w)):
            raise RuntimeError(f"solution lost finiteness at t={times[m + 1]:.4f}")
    return FlowHistory(times, ens, pal, snaps, warnings)


@dataclass(eq=False)
class DnsResult:
    """Raw trajectory diagnostics plus the filtered reference series."""

    history: FlowHistory
    filtered_enstrophy: np.ndarray
    filtered_palinstrophy: np.ndarray
    final_field: SpectralField


def reference_initial_field(cfg: NsConfig) -> SpectralField:
    """Seeded initial vorticity, spun forward by spin_time when configured."""
    w0 = initial_vorticity(cfg)
    if cfg.spin_time > 0:
        spin_steps = int(round(cfg.spin_time / cfg.dt))
        forcing = forcing_for(cfg, w0.n)
        e_full, e_half = _if_factors(w0.n, cfg.nu_n, cfg.dt)
        w = w0.coeffs
        for _ in range(spin_steps):
            w = _ifrk3_step(w, cfg.dt, e_full, e_half,
                            lambda c: _dns_tendency(cfg, c, forcing))
        w0 = SpectralField(w)
    return w0


def run_dns(cfg: NsConfig, w0: Optional[SpectralField] = None,
            store_fields: bool = False) -> DnsResult:
    """March the resolved system over [0, T], recording filtered diagnostics."""
    if w0 is None:
        w0 = reference_initial_field(cfg)

    forcing = forcing_for(cfg, w0.n)
    fmask = box_mask(w0.n, cfg.k_c)
    filt_e = np.empty(cfg.nt + 1)
    filt_p = np.empty(cfg.nt + 1)
    final_holder = {}

    def on_snapshot(m, w):
        filtered = w * fmask
        filt_e[m] = enstrophy(filtered)
        filt_p[m] = palinstrophy(filtered)
        if m == cfg.nt:
            final_holder["field"] = w.copy()

    hist = _run(cfg, w0, lambda _w: (lambda c: _dns_tendency(cfg, c, forcing)),
                cfg.nt, store_fields, on_snapshot=on_snapshot)
    return DnsResult(hist, filt_e, filt_p, SpectralField(final_holder["field"]))


def run_les(cfg: NsConfig, w0: SpectralField, closure: Closure,
            store_fields: bool = True, nt: Optional[int] = None) -> FlowHistory:
    """March the filtered system with the given closure over [0, T]."""
    if w0.n != cfg.n_les:
        raise ValueError(f"LES initial field has n={w0.n}, config expects {cfg.n_les}")
    forcing = forcing_for(cfg, cfg.n_les) * box_mask(cfg.n_les, cfg.k_c)

    def builder(warnings):
        neg: list = []

        def tendency(c):
            out = _les_tendency(cfg, c, closure, forcing, neg_visc=neg)
            if len(neg) == 1:
                msg = f"total viscosity transiently negative (min eddy nu {neg[0]:.3e})"
                log.warning(msg)
                warnings.append(msg)
                neg.append(0.0)  # warn once
            return out

        return tendency

    return _run(cfg, w0, builder, cfg.nt if nt is None else nt, store_fields)


def les_initial_field(cfg: NsConfig, w0_dns: SpectralField) -> SpectralField:
    """Filtered initial condition restricted to the LES grid."""
    return SpectralField(restrict_to_grid(w0_dns.coeffs, cfg.n_les) * box_mask(cfg.n_les, cfg.k_c))


# ---------------------------------------------------------------------------
# diagnostics, objective, constraint


def diagnostics(history: FlowHistory):
    """Enstrophy and palinstrophy time series of a stored trajectory."""
    return history.enstrophy, history.palinstrophy


def eddy_turnover_time(times: np.ndarray, enstrophy_series: np.ndarray) -> float:
    """t_e = [ int E dt / (8 pi^2 T) ]^{-1/2}."""
    T = times[-1] - times[0]
    dt = times[1] - times[0]
    integral = dt * (enstrophy_series.sum() - 0.5 * (enstrophy_series[0] + enstrophy_series[-1]))
    return float(1.0 / np.sqrt(integral / (8.0 * np.pi**2 * T)))


def objective_j2(cfg: NsConfig, p_dns: np.ndarray, p_les: np.ndarray) -> float:
    """Palinstrophy mismatch (1/2D) int (P - P_les)^2 dt."""
    if cfg.D is None:
        raise ValueError("config has no normalization D; resolve it from the reference run")
    diff = (p_dns - p_les) ** 2
    integral = cfg.dt * (diff.sum() - 0.5 * (diff[0] + diff[-1]))
    return 0.5 * integral / cfg.D


def constraint_enstrophy(cfg: NsConfig, e_les: np.ndarray) -> float:
    """Time-averaged LES enstrophy [E_les]_T."""
    integral = cfg.dt * (e_les.sum() - 0.5 * (e_les[0] + e_les[-1]))
    return integral / cfg.T


def max_state_value(history: FlowHistory) -> float:
    """Max over space and time of s = |grad w|^2 along a trajectory."""
    smax = 0.0
    for m in range(history.nt + 1):
        w1, w2 = gradient_physical(history.snapshot(m))
        smax = max(smax, float(np.max(w1 * w1 + w2 * w2)))
    return smax


def tune_leith_constant(cfg: NsConfig, w0_les: SpectralField, e0: float,
                        c_guess: float = 4.702e-3, rtol: float = 1e-11) -> float:
    """Choose the Leith constant so the LES trajectory meets [E_les]_T = e0.

    The mean enstrophy decreases monotonically with the constant, so the
    bracket expands in the direction indicated by the sign of the residual.
    """

    def residual(c: float) -> float:
        hist = run_les(cfg, w0_les, leith_viscosity(c, cfg.k_c), store_fields=False)
        return constraint_enstrophy(cfg, hist.enstrophy) / e0 - 1.0

    lo = hi = c_guess
    f = residual(c_guess)
    if f > 0:  # too little damping: scan up
        flo = f
        for _ in range(24):
            hi *= 2.0
            try:
                fhi = residual(hi)
            except RuntimeError as exc:
                raise RuntimeError(
                    f"constraint level {e0:.4g} unreachable: trajectory unstable at "
                    f"constant {hi:.3e} before the mean enstrophy dropped to it"
                ) from exc
            if fhi <= 0:
                break
            lo, flo = hi, fhi
        else:
            raise RuntimeError("could not bracket the Leith constant against the constraint level")
    else:  # too much damping: scan down
        fhi = f
        for _ in range(24):
            lo /= 2.0
            if residual(lo) >= 0:
                break
            hi = lo
        else:
            raise RuntimeError("could not bracket the Leith constant against the constraint level")
    return float(brentq(residual, lo, hi, xtol=1e-14, rtol=rtol))


# ---------------------------------------------------------------------------
# trajectory and diagnostics output formats

_SNAP_HEADER = struct.Struct("<Id")


def write_snapshots(history: FlowHistory, path) -> None:
    """Flat binary dump: per snapshot a {n: u32 LE, t: f64 LE} header followed
    by n^2 f64 LE physical-space values, row-major."""
    if history.snapshots is None:
        raise RuntimeError("trajectory was run without snapshot storage")
    with open(path, "wb") as fh:
        for m in range(history.nt + 1):
            phys = to_physical(history.snapshots[m])
            n = phys.shape[0]
            fh.write(_SNAP_HEADER.pack(n, float(history.times[m])))
            fh.write(np.ascontiguousarray(phys, dtype="<f8").tobytes())


def read_snapshots(path):
    """Inverse of write_snapshots; returns a list of (t, values) pairs."""
    out = []
    with open(path, "rb") as fh:
        while True:
            head = fh.read(_SNAP_HEADER.size)
            if not head:
                break
            n, t = _SNAP_HEADER.unpack(head)
            data = np.frombuffer(fh.read(8 * n * n), dtype="<f8").reshape(n, n)
            out.append((t, data.copy()))
    return out


def write_diagnostics_csv(path, times: np.ndarray, ens: np.ndarray, pal: np.ndarray) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("t,enstrophy,palinstrophy\n")
        for t, e, p in zip(times, ens, pal):
            fh.write(f"{t:.17g},{e:.17g},{p:.17g}\n")
