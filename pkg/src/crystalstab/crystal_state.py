"""Finite-crystal states X = (psi, q, p): charge density, energy, charge, forces, distance to S.

Discrete model
--------------
The electron field lives on a :class:`TorusGrid`.  The ions enter only through
their Fourier coefficients on the grid frequencies,

    rho_i^(xi) = |T|^-1 sigma^(-xi) sum_n exp(-i xi.(n + q(n))),

with modes that touch the Nyquist index dropped so that the ion density is a
real trigonometric polynomial.  Energy, force and Hessian are all derived from
this one discrete energy, which keeps finite differences exact to round-off.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Any

import numpy as np
from scipy.optimize import minimize

from .ion_models import IonDensityModel, model_from_config
from .spectral_core import ComplexField, TorusGrid, forward, inverse, poisson_green

__all__ = [
    "Crystal",
    "CrystalState",
    "SolitaryPoint",
    "Perturbation",
    "ManifoldDistance",
    "charge_density",
    "energy",
    "energy_terms",
    "energy_quadrature",
    "charge",
    "charge_parseval",
    "force",
    "distance_to_manifold",
    "solitary_state",
    "torus_wrap",
]


def torus_wrap(y, N: float):
    """Representative of y in [-N/2, N/2)."""
    return y - N * np.floor(y / N + 0.5)


@dataclass(frozen=True, eq=False)
class Crystal:
    """Physical setup shared by states: grid, ion model, electron charge e, ion mass M."""

    grid: TorusGrid
    model: IonDensityModel
    e: float = 1.0
    M: float = 1.0

    def __post_init__(self):
        if not self.M > 0:
            raise ValueError("ion mass M must be positive")
        if not self.e >= 0:
            raise ValueError("e must be nonnegative")

    @property
    def N(self) -> int:
        return self.grid.N

    @property
    def Z(self) -> float:
        """Electrons per cell, eZ / e."""
        if self.e == 0:
            raise ValueError("Z is undefined for e = 0")
        return self.model.eZ / self.e

    @cached_property
    def sites(self) -> np.ndarray:
        return self.grid.ion_sites()

    @cached_property
    def form_factor(self) -> np.ndarray:
        """sigma^(-xi) on the grid, Nyquist-touching modes set to zero."""
        ff = self.model.fourier(-self.grid.xi_vectors)
        ff[self.grid.nyquist_mask] = 0.0
        return ff

    def phases(self, q: np.ndarray) -> list[np.ndarray]:
        """exp(-i xi_j a_j) per ion and axis, a = n + q(n); three arrays of shape (N^3, n)."""
        a = self.sites + q
        return [np.exp(-1j * a[:, j, None] * self.grid.xi1d[None, :]) for j in range(3)]

    def ion_coefficients(self, q: np.ndarray) -> np.ndarray:
        e0, e1, e2 = self.phases(q)
        s = np.einsum("ia,ib,ic->abc", e0, e1, e2, optimize=True)
        return self.form_factor * s / self.grid.volume

    def config(self) -> dict:
        return {"N": self.grid.N, "P": self.grid.P, "e": self.e, "M": self.M, "model": self.model.config()}


@dataclass(frozen=True)
class SolitaryPoint:
    """Point S_{alpha, r} = (exp(i alpha) sqrt(Z), r̄, 0) of the solitary manifold."""

    alpha: float = 0.0
    r: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha) % (2 * np.pi))
        object.__setattr__(self, "r", tuple(float(v) for v in self.r))


@dataclass
class CrystalState:
    crystal: Crystal
    psi: np.ndarray
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        g = self.crystal.grid
        self.psi = np.asarray(self.psi, dtype=complex)
        g.check(self.psi)
        self.q = np.asarray(self.q, dtype=float).reshape(-1, 3)
        self.p = np.asarray(self.p, dtype=float).reshape(-1, 3)
        if len(self.q) != g.N**3 or len(self.p) != g.N**3:
            raise ValueError(f"q and p need {g.N ** 3} rows of 3-vectors")

    @property
    def M(self) -> float:
        return self.crystal.M

    @property
    def e(self) -> float:
        return self.crystal.e

    def copy(self) -> "CrystalState":
        return CrystalState(self.crystal, self.psi.copy(), self.q.copy(), self.p.copy())

    def to_dict(self) -> dict[str, Any]:
        inter = np.empty(2 * self.psi.size)
        inter[0::2] = self.psi.real.ravel()
        inter[1::2] = self.psi.imag.ravel()
        return {**self.crystal.config(), "psi": inter.tolist(), "q": self.q.ravel().tolist(), "p": self.p.ravel().tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict[str, Any], model: IonDensityModel | None = None) -> "CrystalState":
        grid = TorusGrid(int(d["N"]), int(d["P"]))
        model = model or model_from_config(d["model"])
        crystal = Crystal(grid, model, float(d["e"]), float(d["M"]))
        inter = np.asarray(d["psi"], dtype=float)
        psi = (inter[0::2] + 1j * inter[1::2]).reshape(grid.shape)
        return cls(crystal, psi, np.asarray(d["q"]), np.asarray(d["p"]))

    @classmethod
    def from_json(cls, text: str, model: IonDensityModel | None = None) -> "CrystalState":
        return cls.from_dict(json.loads(text), model)


def solitary_state(crystal: Crystal, S: SolitaryPoint = SolitaryPoint()) -> CrystalState:
    g = crystal.grid
    psi = np.full(g.shape, np.exp(1j * S.alpha) * np.sqrt(crystal.Z), dtype=complex)
    q = np.tile(np.asarray(S.r, float), (g.N**3, 1))
    return CrystalState(crystal, psi, q, np.zeros_like(q))


# ---- density, energy, charge --------------------------------------------------------------
def _rho_coefficients(X: CrystalState) -> np.ndarray:
    c = X.crystal
    rho = c.ion_coefficients(X.q)
    if c.e != 0:
        rho = rho - c.e * forward(c.grid, np.abs(X.psi) ** 2)
    return rho


def charge_density(X: CrystalState) -> ComplexField:
    """rho = sum_n sigma(. - n - q(n)) - e |psi|^2 on the grid (real layout)."""
    return ComplexField(X.crystal.grid, inverse(X.crystal.grid, _rho_coefficients(X)), "real")


def energy_terms(X: CrystalState) -> dict[str, float]:
    g = X.crystal.grid
    psi_hat = forward(g, X.psi)
    rho_hat = _rho_coefficients(X)
    return {
        "field": 0.5 * g.volume * float(np.sum(g.xi2 * np.abs(psi_hat) ** 2)),
        "coulomb": 0.5 * g.volume * float(np.sum(g.inv_xi2 * np.abs(rho_hat) ** 2)),
        "ions": float(np.sum(X.p**2)) / (2 * X.crystal.M),
    }


def energy(X: CrystalState) -> float:
    """E = 1/2 ∫|∇psi|^2 + 1/2 <rho, G rho> + sum |p|^2 / 2M, evaluated spectrally."""
    return sum(energy_terms(X).values())


def energy_quadrature(X: CrystalState) -> float:
    """Real-space trapezoid evaluation of the same energy (independent oracle)."""
    g = X.crystal.grid
    grad = [inverse(g, 1j * k * forward(g, X.psi)) for k in g.xi]
    field = 0.5 * g.weight * sum(float(np.sum(np.abs(d) ** 2)) for d in grad)
    rho = charge_density(X)
    phi = poisson_green(rho)
    coul = 0.5 * g.weight * float(np.real(np.sum(np.conj(rho.values) * phi.values)))
    return field + coul + float(np.sum(X.p**2)) / (2 * X.crystal.M)


def charge(X: CrystalState) -> float:
    """Q = ∫ |psi|^2 (trapezoid rule)."""
    return float(np.sum(np.abs(X.psi) ** 2) * X.crystal.grid.weight)


def charge_parseval(X: CrystalState) -> float:
    g = X.crystal.grid
    return float(g.volume * np.sum(np.abs(forward(g, X.psi)) ** 2))


def force(X: CrystalState) -> np.ndarray:
    """f(n) = -(∇phi, sigma(. - n - q(n))) with phi = G rho; shape (N^3, 3).

    Equal to minus the q(n)-gradient of the discrete energy.
    """
    c = X.crystal
    g = c.grid
    phi_hat = g.inv_xi2 * _rho_coefficients(X)
    weight = np.conj(phi_hat) * c.form_factor
    e0, e1, e2 = c.phases(X.q)
    out = np.empty((g.N**3, 3))
    for j, k in enumerate(g.xi):
        s = np.einsum("abc,ia,ib,ic->i", weight * (1j * k), e0, e1, e2, optimize=True)
        out[:, j] = s.real
    return out


# ---- perturbations --------------------------------------------------------------------------
@dataclass
class Perturbation:
    """Real tangent vector Y = (Psi1, Psi2, kappa, pi) at a solitary point.

    The field part is psi - exp(i alpha) sqrt(Z) = exp(i alpha) (Psi1 + i Psi2).
    """

    psi1: np.ndarray
    psi2: np.ndarray
    kappa: np.ndarray
    pi: np.ndarray

    def norm(self, grid: TorusGrid) -> float:
        f = (np.sum(self.psi1**2) + np.sum(self.psi2**2)) * grid.weight
        return float(np.sqrt(f + np.sum(self.kappa**2) + np.sum(self.pi**2)))

    def scaled(self, s: float) -> "Perturbation":
        return Perturbation(s * self.psi1, s * self.psi2, s * self.kappa, s * self.pi)

    def apply(self, crystal: Crystal, S: SolitaryPoint, s: float = 1.0) -> CrystalState:
        base = solitary_state(crystal, S)
        psi = base.psi + s * np.exp(1j * S.alpha) * (self.psi1 + 1j * self.psi2)
        return CrystalState(crystal, psi, base.q + s * self.kappa, s * self.pi)


# ---- distance to the solitary manifold --------------------------------------------------------
@dataclass
class ManifoldDistance:
    d: float
    alpha: float
    r: np.ndarray
    psi_part: float
    q_part: float
    p_part: float


def _q_distance(q, r, N):
    return float(np.sqrt(np.sum(torus_wrap(q - r, N) ** 2)))


def _best_translation(q: np.ndarray, N: int, coarse: int = 16, nm_steps: int = 20) -> np.ndarray:
    ticks = N * np.arange(coarse) / coarse
    cand = np.stack(np.meshgrid(ticks, ticks, ticks, indexing="ij"), axis=-1).reshape(-1, 3)
    # sum over ions and axes of the squared torus distance, for every candidate
    acc = np.zeros(len(cand))
    for j in range(3):
        acc += np.sum(torus_wrap(q[None, :, j] - cand[:, None, j], N) ** 2, axis=1)
    r = cand[int(np.argmin(acc))]
    res = minimize(lambda v: _q_distance(q, v, N), r, method="Nelder-Mead", options={"maxiter": nm_steps})
    if _q_distance(q, res.x, N) < _q_distance(q, r, N):
        r = res.x
    # the squared distance is quadratic near its minimum: finish with the exact circular mean
    for _ in range(3):
        trial = r + np.mean(torus_wrap(q - r, N), axis=0)
        if _q_distance(q, trial, N) <= _q_distance(q, r, N):
            r = trial
    return np.mod(r, N)


def distance_to_manifold(X: CrystalState) -> ManifoldDistance:
    """min over (alpha, r) of ||psi - e^{i alpha} sqrt Z||_H1 + |q - r̄| + |p|.

    alpha is the phase of ∫psi; r is found on a 16^3 grid, refined by 20
    Nelder-Mead steps and a closed-form least-squares polish.
    """
    c = X.crystal
    g = c.grid
    total = np.sum(X.psi)
    alpha = float(np.angle(total)) % (2 * np.pi) if abs(total) > 0 else 0.0
    diff_hat = forward(g, X.psi - np.exp(1j * alpha) * np.sqrt(c.Z))
    psi_part = float(np.sqrt(g.volume * np.sum((1 + g.xi2) * np.abs(diff_hat) ** 2)))
    r = _best_translation(X.q, g.N)
    q_part = _q_distance(X.q, r, g.N)
    p_part = float(np.sqrt(np.sum(X.p**2)))
    return ManifoldDistance(psi_part + q_part + p_part, alpha, r, psi_part, q_part, p_part)
