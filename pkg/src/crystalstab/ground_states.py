"""Ground states: periodic solitary states, non-periodic ion arrangements, flat-density checks
and the energy-per-cell minimizer on the charge sphere.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .crystal_state import Crystal, CrystalState, SolitaryPoint, _rho_coefficients, energy, solitary_state
from .ion_models import IonDensityModel, _periodized_factor, check_jellium, check_spectral_condition
from .spectral_core import TorusGrid, forward, inverse

__all__ = [
    "NonJelliumWarning",
    "periodic_ground_state",
    "Arrangement",
    "nonperiodic_arrangement",
    "FlatDensityReport",
    "verify_flat_density",
    "CellMinimum",
    "minimize_energy_per_cell",
    "cell_hamiltonian",
]

log = logging.getLogger(__name__)


class NonJelliumWarning(UserWarning):
    """The ion density does not vanish on the nonzero dual lattice; the constant state has E > 0."""


def periodic_ground_state(
    alpha: float, r, Z: float, grid: TorusGrid, model: IonDensityModel, M: float = 1.0
) -> CrystalState:
    """The solitary state (e^{i alpha} sqrt Z, r̄, 0).

    The electron charge is e = eZ / Z so that the total charge vanishes.  A
    :class:`NonJelliumWarning` is issued when ``model`` fails the Jellium check.
    """
    if not Z > 0:
        raise ValueError("Z must be positive")
    crystal = Crystal(grid, model, e=model.eZ / Z, M=M)
    rep = check_jellium(model, tol=1e-10)
    if not rep.passed:
        warnings.warn(
            f"ion density is not Jellium (|sigma^| = {rep.max_abs:.3g} at 2 pi {rep.worst_m}); energy will not vanish",
            NonJelliumWarning,
            stacklevel=2,
        )
    return solitary_state(crystal, SolitaryPoint(alpha, r))


# ---- non-periodic arrangements --------------------------------------------------------------
@dataclass
class Arrangement:
    """Ion displacements q*(n), shape (N^3, 3), with the identities used to argue flatness."""

    q: np.ndarray
    mode: str
    provenance: list[str] = field(default_factory=list)


def _column_values(values, N: int, rng, name: str) -> np.ndarray:
    if values is None:
        return rng.uniform(0, N, size=(N, N))
    values = np.asarray(values, dtype=float)
    if values.shape != (N, N):
        raise ValueError(f"{name} must have shape ({N}, {N})")
    return values


def nonperiodic_arrangement(
    mode: str,
    N: int,
    r=(0.0, 0.0, 0.0),
    *,
    tau=None,
    a1=None,
    a2=None,
    model: IonDensityModel | None = None,
    seed: int = 0,
) -> Arrangement:
    """Column-wise modified ion arrangements.

    Parameters
    ----------
    mode : {"box_shear", "spectral"}
        ``box_shear``: q*(n) = (r1, r2, r3 + tau(n1, n2)).
        ``spectral``: q*(n) = (a1(n1, n2), a2(n1, n2), r3).
    N : int
        Cells per side.
    tau, a1, a2 : (N, N) arrays, optional
        Column offsets on R / N Z; drawn uniformly from ``seed`` when omitted.
    model : IonDensityModel, optional
        Checked against the spectral condition (sigma^ = 0 for xi_3 in 2 pi Z \\ 0
        and at (2 pi Z^2 \\ 0) x {0}).  Required in ``spectral`` mode.

    Raises
    ------
    ValueError
        If the model fails the spectral condition.
    """
    rng = np.random.default_rng(seed)
    r = np.asarray(r, dtype=float)
    n = TorusGrid(N, 1).ion_sites().astype(int)
    prov: list[str] = []
    if model is not None:
        spc = check_spectral_condition(model)
        if not spc.passed:
            raise ValueError(f"ion density fails the spectral condition (max |sigma^| = {max(spc.axis_max, spc.plane_max):.3g})")
        prov.append("sigma^ vanishes on {xi_3 in 2 pi Z \\ 0} and on (2 pi Z^2 \\ 0) x {0}")
    elif mode == "spectral":
        raise ValueError("spectral mode requires an ion model to check")
    if mode == "box_shear":
        tau = _column_values(tau, N, rng, "tau")
        q = np.tile(r, (len(n), 1))
        q[:, 2] += tau[n[:, 0], n[:, 1]]
        prov += [
            "each column (n1, n2) is a full period of shifted cells along x3",
            "sum_{n3} exp(i xi3 n3) = 0 for xi3 in (2 pi / N) Z \\ 2 pi Z",
            "at xi3 = 0 the sum reduces to the periodic lattice sum over (n1, n2)",
        ]
    elif mode == "spectral":
        a1 = _column_values(a1, N, rng, "a1")
        a2 = _column_values(a2, N, rng, "a2")
        q = np.empty((len(n), 3))
        q[:, 0] = a1[n[:, 0], n[:, 1]]
        q[:, 1] = a2[n[:, 0], n[:, 1]]
        q[:, 2] = r[2]
        prov += [
            "sum_{n3} exp(i xi3 n3) = 0 for xi3 in (2 pi / N) Z \\ 2 pi Z",
            "sigma^ = 0 for xi3 in 2 pi Z \\ 0",
        ]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return Arrangement(q, mode, prov)


# ---- flat density -----------------------------------------------------------------------------
@dataclass
class FlatDensityReport:
    real_space_max: float
    fourier_max: float
    worst_xi_index: tuple
    tol: float

    @property
    def passed(self) -> bool:
        return self.real_space_max < self.tol and self.fourier_max < self.tol


def _real_space_density(q: np.ndarray, model: IonDensityModel, grid: TorusGrid) -> np.ndarray:
    if not model.separable:
        raise ValueError("the real-space check needs a separable ion model")
    pos = grid.ion_sites() + q
    x = grid.x1d
    acc = np.zeros(grid.shape)
    for a in pos:
        f = [_periodized_factor(model, x - a[j], period=grid.N)[0] for j in range(3)]
        acc += f[0][:, None, None] * f[1][None, :, None] * f[2][None, None, :]
    return model.eZ * acc


def verify_flat_density(q, sigma_model: IonDensityModel, grid: TorusGrid, tol: float = 1e-8) -> FlatDensityReport:
    """Check that sum_n sigma(x - n - q(n)) is the constant eZ on the torus.

    (a) real space: direct image sums on ``grid``;
    (b) Fourier: |sigma^(xi) sum_n exp(i xi (n + q(n)))| / |T| for grid frequencies
    xi in (2 pi / N) Z^3 \\ 2 pi Z^3.
    """
    q = np.asarray(q, dtype=float).reshape(-1, 3)
    if len(q) != grid.N**3:
        raise ValueError(f"q needs {grid.N ** 3} rows")
    dens = _real_space_density(q, sigma_model, grid)
    real_max = float(np.max(np.abs(dens - sigma_model.eZ)))

    pos = grid.ion_sites() + q
    k = grid.xi1d
    e = [np.exp(1j * pos[:, j, None] * k[None, :]) for j in range(3)]
    s = np.einsum("ia,ib,ic->abc", *e, optimize=True)
    amp = np.abs(sigma_model.fourier(grid.xi_vectors) * s) / grid.volume
    on_coarse = np.all(np.stack(np.meshgrid(*(3 * [grid.wave_index % grid.N == 0]), indexing="ij")), axis=0)
    amp[on_coarse] = 0.0
    i = np.unravel_index(int(np.argmax(amp)), amp.shape)
    worst = tuple(int(grid.wave_index[j]) for j in i)
    return FlatDensityReport(real_max, float(amp[i]), worst, tol)


# ---- energy per cell ------------------------------------------------------------------------
@dataclass
class CellMinimum:
    psi: np.ndarray
    omega0: float
    omega0_imag: float
    residual: float
    energy: float
    iterations: int
    converged: bool
    history: list[tuple[int, float, float]]


def cell_hamiltonian(crystal: Crystal, psi: np.ndarray) -> np.ndarray:
    """H psi = -1/2 Δpsi - e phi psi with phi = G rho and the ions at q = 0."""
    g = crystal.grid
    X = CrystalState(crystal, psi, np.zeros((g.N**3, 3)), np.zeros((g.N**3, 3)))
    phi = inverse(g, g.inv_xi2 * _rho_coefficients(X)).real
    lap = inverse(g, 0.5 * g.xi2 * forward(g, psi))
    return lap - crystal.e * phi * psi


def _initial_field(grid: TorusGrid, init, Z: float, seed: int) -> np.ndarray:
    if isinstance(init, np.ndarray):
        psi = np.asarray(init, dtype=complex)
        grid.check(psi)
    elif init == "constant":
        psi = np.ones(grid.shape, dtype=complex)
    elif init == "random":
        rng = np.random.default_rng(seed)
        c = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        c *= 0.3 * np.exp(-grid.xi2 / 8.0)
        c[grid.nyquist_mask] = 0
        psi = 1.0 + inverse(grid, c)
    else:
        raise ValueError(f"unknown init {init!r}")
    return psi * np.sqrt(Z * grid.volume / (np.sum(np.abs(psi) ** 2) * grid.weight))


def minimize_energy_per_cell(
    sigma_model: IonDensityModel,
    Z: float,
    grid: TorusGrid,
    init="random",
    iters: int = 10_000,
    *,
    e: float | None = None,
    energy_tol: float = 1e-12,
    residual_tol: float = 1e-6,
    seed: int = 0,
) -> CellMinimum:
    """Minimize E(psi) with ions at q = 0 over the sphere ∫|psi|^2 = Z |T|.

    Projected gradient descent: the L2 gradient 2 H psi is projected to the
    tangent space of the sphere, a Barzilai–Borwein step with Armijo
    backtracking is taken, and the result is renormalized back to the sphere.
    Stops when the energy decrease is below ``energy_tol`` and the eigen-residual
    ||H psi - omega0 psi|| / ||psi|| is below ``residual_tol``.

    Returns
    -------
    CellMinimum
        Minimizer, omega0 = <psi, H psi> / <psi, psi>, residual, energy, and the
        (iter, E, residual) history.  ``converged`` is False if ``iters`` ran out.
    """
    e = sigma_model.eZ / Z if e is None else e
    crystal = Crystal(grid, sigma_model, e=e)
    zeros = np.zeros((grid.N**3, 3))
    radius2 = Z * grid.volume
    w = grid.weight

    def inner(a, b):
        return float(np.real(np.vdot(a, b)) * w)

    def E(psi):
        return energy(CrystalState(crystal, psi, zeros, zeros))

    def retract(v):
        return v * np.sqrt(radius2 / inner(v, v))

    def state(psi):
        Hpsi = cell_hamiltonian(crystal, psi)
        om = complex(np.vdot(psi, Hpsi) / np.vdot(psi, psi))
        res = float(np.linalg.norm(Hpsi - om.real * psi) / np.linalg.norm(psi))
        g = 2.0 * Hpsi
        g_perp = g - inner(psi, g) / radius2 * psi
        return g_perp, om, res

    psi = _initial_field(grid, init, Z, seed)
    En = E(psi)
    g_perp, om, res = state(psi)
    s = 1.0 / max(float(grid.xi2.max()), 1.0)
    history = [(0, En, res)]
    converged = False
    it = 0
    for it in range(1, iters + 1):
        gg = inner(g_perp, g_perp)
        if gg == 0.0:
            converged = res < residual_tol
            break
        while True:
            trial = retract(psi - s * g_perp)
            Et = E(trial)
            if Et <= En - 1e-4 * s * gg or s < 1e-14:
                break
            s *= 0.5
        g_new, om, res = state(trial)
        dpsi, dg = trial - psi, g_new - g_perp
        dE = En - Et
        psi, En, g_perp = trial, Et, g_new
        history.append((it, En, res))
        curv = inner(dpsi, dg)
        s = inner(dpsi, dpsi) / curv if curv > 0 else 2.0 * s
        if abs(dE) < energy_tol and res < residual_tol:
            converged = True
            break
    else:
        log.warning("cell minimizer stopped after %d iterations (residual %.3g)", iters, res)
    g_perp, om, res = state(psi)
    return CellMinimum(psi, om.real, om.imag, res, En, it, converged, history)
