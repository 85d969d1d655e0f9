"""Finite-difference verification of adjoint gradients and normal elements.

For a functional F with adjoint-based L^2 representer G, the diagnostic

    kappa(eps) = [F(phi + eps phi') - F(phi)] / (eps * <G, phi'>_L2)

should sit near one for intermediate eps: the large-eps flank is the O(eps)
finite-difference truncation, the small-eps flank the O(1/eps) subtractive
round-off, and the plateau between them measures the actual gradient error of
the discretization.  The sweep reuses the base values F(phi) and G across all
eps, so it is deterministic given the adapter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .descent import ProblemAdapter


@dataclass(eq=False)
class KappaSpec:
    adapter: ProblemAdapter
    base: np.ndarray
    direction: np.ndarray
    epsilons: np.ndarray = field(
        default_factory=lambda: np.logspace(0.0, -14.0, 25)
    )
    quantity: str = "objective"  # or "constraint"

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=float)
        self.direction = np.asarray(self.direction, dtype=float)
        self.epsilons = np.asarray(self.epsilons, dtype=float)
        if self.base.shape != self.direction.shape:
            raise ValueError("base point and direction must share a grid")
        if np.any(self.epsilons <= 0) or np.any(np.diff(self.epsilons) >= 0):
            raise ValueError("epsilons must be positive and sorted descending")
        if self.quantity not in ("objective", "constraint"):
            raise ValueError(f"unknown quantity {self.quantity!r}")


@dataclass(eq=False)
class KappaReport:
    epsilons: np.ndarray
    kappas: np.ndarray
    errors: np.ndarray  # |1 - kappa|
    quantity: str
    denominator: float

    def rows(self):
        return zip(self.epsilons, self.kappas, self.errors)


@dataclass
class PlateauFit:
    level: float
    width_decades: float
    left_slope: float
    right_slope: float


def kappa_sweep(spec: KappaSpec) -> KappaReport:
    """Evaluate kappa over the eps ladder against the adjoint-based pairing."""
    adapter = spec.adapter
    if spec.quantity == "objective":
        evaluate = adapter.eval_objective
        rep = adapter.gradient_l2(spec.base)
    else:
        evaluate = adapter.eval_constraint
        rep = adapter.normal_l2(spec.base)
    denom = adapter.inner_l2(rep, spec.direction)
    scale = np.sqrt(abs(adapter.inner_l2(rep, rep) * adapter.inner_l2(spec.direction, spec.direction)))
    if abs(denom) <= 1e-14 * max(scale, 1e-300):
        raise ValueError(
            f"degenerate direction: <{spec.quantity} representer, direction>_L2 = {denom:.3e}"
        )
    f0 = evaluate(spec.base)
    kappas = np.empty_like(spec.epsilons)
    for i, eps in enumerate(spec.epsilons):
        f_eps = evaluate(spec.base + eps * spec.direction)
        kappas[i] = (f_eps - f0) / (eps * denom)
    return KappaReport(spec.epsilons.copy(), kappas, np.abs(1.0 - kappas),
                       spec.quantity, denom)


def _median3(v: np.ndarray) -> np.ndarray:
    """3-point median filter; robust against isolated sign-cancellation dips."""
    if v.size < 3:
        return v.copy()
    stacked = np.vstack([v[:-2], v[1:-1], v[2:]])
    out = v.copy()
    out[1:-1] = np.median(stacked, axis=0)
    return out


def plateau_fit(report: KappaReport, band: float = 3.0) -> PlateauFit:
    """Locate the error plateau and fit the flanking log-log slopes.

    The plateau is the contiguous eps range (containing the filtered minimum)
    where the filtered error stays within `band` times its minimum; a curve
    with no flat region reports width 0.
    """
    eps = report.epsilons
    err = report.errors
    filt = _median3(err)
    imin = int(np.argmin(filt))
    inside = filt <= band * filt[imin]
    lo = imin
    while lo > 0 and inside[lo - 1]:
        lo -= 1
    hi = imin
    while hi < eps.size - 1 and inside[hi + 1]:
        hi += 1
    # epsilons are descending: hi indexes the smallest eps of the plateau
    width = float(np.log10(eps[lo] / eps[hi])) if hi > lo else 0.0
    level = float(np.median(err[lo : hi + 1]))

    def flank_slope(sl):
        if sl.stop - sl.start < 2:
            return float("nan")
        x = np.log10(eps[sl])
        y = np.log10(np.maximum(err[sl], 1e-300))
        return float(np.polyfit(x, y, 1)[0])

    right = flank_slope(slice(0, lo))            # eps larger than the plateau
    left = flank_slope(slice(hi + 1, eps.size))  # eps smaller than the plateau
    return PlateauFit(level, width, left, right)


def write_kappa_csv(path, report: KappaReport) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("epsilon,kappa,abs_one_minus_kappa\n")
        for eps, k, e in report.rows():
            fh.write(f"{eps:.17g},{k:.17g},{e:.17g}\n")
