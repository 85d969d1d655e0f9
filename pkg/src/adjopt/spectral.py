"""Doubly periodic 2D fields in Fourier space and the operators acting on them.

Fields live on [0, 2pi]^2 and are stored as normalized Fourier coefficients
c_k = fft2(f) / n^2, so Parseval reads  int f^2 dx = (2pi)^2 sum |c_k|^2
independently of the grid size, and moving a field between grids is plain
coefficient copying.  Nonlinear products are formed in physical space and
dealiased with the 2/3 rule applied per direction (modes with
max(|k1|, |k2|) > n//3 are zeroed).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

AREA = (2.0 * np.pi) ** 2


@lru_cache(maxsize=None)
def wavenumbers(n: int):
    """Integer wavenumbers (k1, k2) as broadcastable float arrays."""
    k = np.fft.fftfreq(n, d=1.0 / n)
    return k[:, None].copy(), k[None, :].copy()


@lru_cache(maxsize=None)
def ksq(n: int) -> np.ndarray:
    k1, k2 = wavenumbers(n)
    return k1**2 + k2**2


@lru_cache(maxsize=None)
def inv_ksq(n: int) -> np.ndarray:
    """1/|k|^2 with the zero mode mapped to 0."""
    k2 = ksq(n)
    out = np.zeros_like(k2)
    np.divide(1.0, k2, where=k2 > 0, out=out)
    return out


def dealias_cutoff(n: int) -> int:
    return n // 3


@lru_cache(maxsize=None)
def dealias_mask(n: int) -> np.ndarray:
    k1, k2 = wavenumbers(n)
    kc = dealias_cutoff(n)
    return (np.abs(k1) <= kc) & (np.abs(k2) <= kc)


@lru_cache(maxsize=None)
def box_mask(n: int, k_c: int) -> np.ndarray:
    k1, k2 = wavenumbers(n)
    return (np.abs(k1) <= k_c) & (np.abs(k2) <= k_c)


@dataclass(eq=False)
class SpectralField:
    """Real scalar field stored as n x n normalized Fourier coefficients."""

    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        n = self.coeffs.shape[0]
        if self.coeffs.shape != (n, n) or n & (n - 1):
            raise ValueError(f"coefficients must be square power-of-two, got {self.coeffs.shape}")

    @property
    def n(self) -> int:
        return self.coeffs.shape[0]

    @classmethod
    def from_physical(cls, values: np.ndarray) -> "SpectralField":
        values = np.asarray(values, dtype=float)
        return cls(np.fft.fft2(values) / values.shape[0] ** 2)

    def to_physical(self) -> np.ndarray:
        return np.real(np.fft.ifft2(self.coeffs * self.n**2))

    def copy(self) -> "SpectralField":
        return SpectralField(self.coeffs.copy())

    def hermitian_defect(self) -> float:
        """Max deviation from the conjugate symmetry of a real field."""
        flipped = np.conj(self.coeffs[tuple(np.ix_(*[-np.arange(self.n) % self.n] * 2))])
        return float(np.max(np.abs(self.coeffs - flipped)))


def grid_points(n: int):
    x = 2.0 * np.pi * np.arange(n) / n
    return np.meshgrid(x, x, indexing="ij")


def to_physical(coeffs: np.ndarray) -> np.ndarray:
    n = coeffs.shape[0]
    return np.real(np.fft.ifft2(coeffs * n**2))


def to_spectral(values: np.ndarray) -> np.ndarray:
    n = values.shape[0]
    return np.fft.fft2(values) / n**2


def gradient_physical(coeffs: np.ndarray):
    """(d/dx1, d/dx2) of a spectral field, returned in physical space."""
    n = coeffs.shape[0]
    k1, k2 = wavenumbers(n)
    return to_physical(1j * k1 * coeffs), to_physical(1j * k2 * coeffs)


def velocity_physical(psi_coeffs: np.ndarray):
    """Velocity (d/dx2 psi, -d/dx1 psi) in physical space."""
    n = psi_coeffs.shape[0]
    k1, k2 = wavenumbers(n)
    return to_physical(1j * k2 * psi_coeffs), to_physical(-1j * k1 * psi_coeffs)


def poisson_streamfunction(w: SpectralField) -> SpectralField:
    """Solve lap(psi) = -w for the streamfunction; requires zero-mean vorticity."""
    if abs(w.coeffs[0, 0]) > 1e-12:
        raise ValueError(f"vorticity mean {w.coeffs[0, 0]:.3e} exceeds 1e-12")
    return SpectralField(w.coeffs * inv_ksq(w.n))


def box_filter(w: SpectralField, k_c: int) -> SpectralField:
    """Sharp cutoff keeping modes with max(|k1|, |k2|) <= k_c."""
    return SpectralField(w.coeffs * box_mask(w.n, k_c))


def restrict_to_grid(coeffs: np.ndarray, n_out: int) -> np.ndarray:
    """Copy the retained coefficient block onto a coarser grid."""
    n_in = coeffs.shape[0]
    if n_out > n_in:
        raise ValueError("restriction target must not be finer than the source")
    half = n_out // 2
    out = np.zeros((n_out, n_out), dtype=complex)
    sl = [slice(0, half), slice(-half, None)]
    for a, b in [(0, 0), (0, 1), (1, 0), (1, 1)]:
        out[sl[a], sl[b]] = coeffs[sl[a], sl[b]]
    return out


def enstrophy(coeffs: np.ndarray) -> float:
    """(1/2) int w^2 dx via Parseval."""
    return 0.5 * AREA * float(np.sum(np.abs(coeffs) ** 2))


def palinstrophy(coeffs: np.ndarray) -> float:
    """(1/2) int |grad w|^2 dx via Parseval."""
    n = coeffs.shape[0]
    return 0.5 * AREA * float(np.sum(ksq(n) * np.abs(coeffs) ** 2))


def energy(coeffs: np.ndarray) -> float:
    """(1/2) int |u|^2 dx for the velocity induced by vorticity coefficients."""
    n = coeffs.shape[0]
    return 0.5 * AREA * float(np.sum(inv_ksq(n) * np.abs(coeffs) ** 2))


def l2_pairing(a: np.ndarray, b: np.ndarray) -> float:
    """int a b dx for two spectral coefficient arrays of real fields."""
    return AREA * float(np.real(np.sum(a * np.conj(b))))
