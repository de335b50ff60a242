"""Torus grids, Fourier transforms and the operators G = (-Δ)^-1, Λ = (-Δ)^-1/2.

Conventions
-----------
The torus is T = R^3 / N Z^3 sampled with P points per unit length, so the
grid has ``n = N * P`` points per side and spacing ``h = 1 / P``.  A field is
written as

    f(x) = sum_xi  c(xi) exp(i xi . x),     xi in (2 pi / N) Z^3,

and ``forward`` returns the coefficients ``c(xi)``.  Hence
``c = fftn(f) / n^3`` and ``∫_T |f|^2 = |T| sum |c|^2``.

For even ``n`` the Nyquist index ``n/2`` is assigned to the *positive* side:
its wave number is ``+pi P``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

__all__ = [
    "TorusGrid",
    "ComplexField",
    "fourier_transform",
    "poisson_green",
    "half_green",
    "forward",
    "inverse",
    "green_coefficients",
    "half_green_coefficients",
    "gradient",
    "l2_inner",
]


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid on T = R^3 / N Z^3 with P samples per unit length."""

    N: int
    P: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        if int(self.P) != self.P or self.P < 1:
            raise ValueError(f"P must be a positive integer, got {self.P!r}")

    @property
    def n(self) -> int:
        return self.N * self.P

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def size(self) -> int:
        return self.n**3

    @property
    def h(self) -> float:
        return 1.0 / self.P

    @property
    def volume(self) -> float:
        """|T| = N^3."""
        return float(self.N) ** 3

    @property
    def weight(self) -> float:
        """Quadrature weight h^3 of one grid point."""
        return self.h**3

    @cached_property
    def wave_index(self) -> np.ndarray:
        """Integer wave numbers k with xi = 2 pi k / N, Nyquist positive."""
        k = np.fft.fftfreq(self.n, d=1.0 / self.n).round().astype(int)
        if self.n % 2 == 0:
            k[self.n // 2] = self.n // 2
        return k

    @cached_property
    def xi1d(self) -> np.ndarray:
        return 2.0 * np.pi * self.wave_index / self.N

    @cached_property
    def x1d(self) -> np.ndarray:
        return np.arange(self.n) * self.h

    @cached_property
    def xi(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable frequency components (shapes (n,1,1), (1,n,1), (1,1,n))."""
        k = self.xi1d
        return (k[:, None, None], k[None, :, None], k[None, None, :])

    @cached_property
    def xi2(self) -> np.ndarray:
        a, b, c = self.xi
        return a**2 + b**2 + c**2

    @cached_property
    def xi_vectors(self) -> np.ndarray:
        """All grid frequencies as an array of shape (n, n, n, 3)."""
        a, b, c = np.meshgrid(self.xi1d, self.xi1d, self.xi1d, indexing="ij")
        return np.stack([a, b, c], axis=-1)

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True where at least one component sits at the Nyquist index."""
        m = np.zeros(self.n, dtype=bool)
        if self.n % 2 == 0:
            m[self.n // 2] = True
        return m[:, None, None] | m[None, :, None] | m[None, None, :]

    @cached_property
    def inv_xi2(self) -> np.ndarray:
        """1/|xi|^2 with the xi = 0 entry set to 0."""
        out = np.zeros(self.shape)
        nz = self.xi2 > 0
        out[nz] = 1.0 / self.xi2[nz]
        return out

    @cached_property
    def points(self) -> np.ndarray:
        """Grid points, shape (n, n, n, 3)."""
        a, b, c = np.meshgrid(self.x1d, self.x1d, self.x1d, indexing="ij")
        return np.stack([a, b, c], axis=-1)

    def ion_sites(self) -> np.ndarray:
        """Lattice sites n in Gamma = Z^3 / N Z^3, shape (N^3, 3), C order."""
        r = np.arange(self.N)
        a, b, c = np.meshgrid(r, r, r, indexing="ij")
        return np.stack([a.ravel(), b.ravel(), c.ravel()], axis=-1).astype(float)

    def check(self, values: np.ndarray) -> None:
        if np.shape(values) != self.shape:
            raise ValueError(f"field shape {np.shape(values)} does not match grid {self.shape}")


def forward(grid: TorusGrid, values: np.ndarray) -> np.ndarray:
    """Real-space samples to Fourier coefficients c(xi)."""
    grid.check(values)
    return sfft.fftn(values) / grid.size


def inverse(grid: TorusGrid, coeffs: np.ndarray) -> np.ndarray:
    """Fourier coefficients c(xi) to real-space samples."""
    grid.check(coeffs)
    return sfft.ifftn(coeffs) * grid.size


def green_coefficients(grid: TorusGrid, coeffs: np.ndarray) -> np.ndarray:
    return coeffs * grid.inv_xi2


def half_green_coefficients(grid: TorusGrid, coeffs: np.ndarray) -> np.ndarray:
    return coeffs * np.sqrt(grid.inv_xi2)


def gradient(grid: TorusGrid, values: np.ndarray) -> np.ndarray:
    """Spectral gradient, shape (3, n, n, n)."""
    c = forward(grid, values)
    return np.stack([inverse(grid, 1j * k * c) for k in grid.xi])


def l2_inner(grid: TorusGrid, f: np.ndarray, g: np.ndarray) -> complex:
    """<f, g> = ∫ conj(f) g, trapezoid rule (exact for grid trigonometric polynomials)."""
    return complex(np.vdot(f, g) * grid.weight)


@dataclass
class ComplexField:
    """Complex samples on a TorusGrid, stored in real or Fourier layout."""

    grid: TorusGrid
    values: np.ndarray
    layout: str = "real"

    def __post_init__(self):
        if self.layout not in ("real", "fourier"):
            raise ValueError(f"layout must be 'real' or 'fourier', got {self.layout!r}")
        self.values = np.asarray(self.values, dtype=complex)
        self.grid.check(self.values)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    def to_real(self) -> "ComplexField":
        return self if self.layout == "real" else fourier_transform(self, "inverse")

    def to_fourier(self) -> "ComplexField":
        return self if self.layout == "fourier" else fourier_transform(self, "forward")

    def norm(self) -> float:
        """L2(T) norm, evaluated in the current layout."""
        if self.layout == "real":
            return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.weight))
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.volume))


def fourier_transform(f: ComplexField, direction: str = "forward") -> ComplexField:
    """Switch layout.  ``direction`` is ``"forward"`` (real -> Fourier) or ``"inverse"``."""
    if direction == "forward":
        if f.layout != "real":
            raise ValueError("forward transform expects a real-space field")
        return ComplexField(f.grid, forward(f.grid, f.values), "fourier")
    if direction == "inverse":
        if f.layout != "fourier":
            raise ValueError("inverse transform expects a Fourier-space field")
        return ComplexField(f.grid, inverse(f.grid, f.values), "real")
    raise ValueError(f"unknown direction {direction!r}")


def _apply_diagonal(rho: ComplexField, op) -> ComplexField:
    c = rho.to_fourier().values
    out = ComplexField(rho.grid, op(rho.grid, c), "fourier")
    return out if rho.layout == "fourier" else out.to_real()


def poisson_green(rho: ComplexField) -> ComplexField:
    """phi = G rho: phi^(xi) = rho^(xi)/|xi|^2, zero mode dropped.  Layout is preserved."""
    return _apply_diagonal(rho, green_coefficients)


def half_green(rho: ComplexField) -> ComplexField:
    """Lambda rho: coefficients divided by |xi|, zero mode dropped."""
    return _apply_diagonal(rho, half_green_coefficients)
