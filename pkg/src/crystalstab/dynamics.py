"""Time integration of the coupled electron–ion system and the orbital-stability experiment.

The equations are

    i psi' = -1/2 Δpsi - e phi psi,    q' = p / M,    p' = f(X),    phi = G rho.

The default ``strang`` scheme splits the Hamiltonian into the free part
(field kinetic energy plus ion kinetic energy) and the Coulomb part.  Both
flows are exact: the free flow is a Fourier multiplier plus a linear ion
drift, and the Coulomb flow keeps |psi| and q fixed, so phi and f are frozen
during it.  ``picard`` runs fixed-point sweeps of the trapezoidal Duhamel
formula and is kept as an independent cross-check.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ._parallel import parallel_map
from .crystal_state import (
    Crystal,
    CrystalState,
    Perturbation,
    SolitaryPoint,
    charge,
    distance_to_manifold,
    energy,
    force,
    solitary_state,
    _rho_coefficients,
)
from .ion_models import IonDensityModel
from .spectral_core import TorusGrid, forward, inverse

__all__ = [
    "NumericalAbort",
    "IntegratorConfig",
    "step",
    "evolve",
    "Trajectory",
    "random_perturbation",
    "kernel_kick",
    "perturbed_state",
    "cfl_number",
    "orbital_stability_experiment",
]

log = logging.getLogger(__name__)


class NumericalAbort(RuntimeError):
    """Raised when a trajectory produces non-finite values."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Time-stepping parameters.

    Parameters
    ----------
    dt : float
        Step size (negative values run backwards).
    T_end : float
        Horizon for :func:`evolve`.
    scheme : {"strang", "picard"}
    monitor_every : int
        Record E, Q and d_V every this many steps.
    picard_sweeps : int
        Fixed-point sweeps per step in the ``picard`` scheme.
    """

    dt: float = 1e-3
    T_end: float = 1.0
    scheme: str = "strang"
    monitor_every: int = 10
    picard_sweeps: int = 3

    def __post_init__(self):
        if self.dt == 0 or not np.isfinite(self.dt):
            raise ValueError("dt must be finite and nonzero")
        if self.T_end < 0:
            raise ValueError("T_end must be nonnegative")
        if self.scheme not in ("strang", "picard"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.monitor_every < 1 or self.picard_sweeps < 1:
            raise ValueError("monitor_every and picard_sweeps must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.T_end / abs(self.dt)))


def cfl_number(grid: TorusGrid, dt: float) -> float:
    """Largest phase increment 1/2 |xi|^2 dt of the free flow on the grid."""
    return 0.5 * float(grid.xi2.max()) * abs(dt)


def _potential(X: CrystalState) -> np.ndarray:
    g = X.crystal.grid
    return inverse(g, g.inv_xi2 * _rho_coefficients(X)).real


def _free_flight(X: CrystalState, dt: float) -> tuple[np.ndarray, np.ndarray]:
    g = X.crystal.grid
    psi = inverse(g, np.exp(-0.5j * g.xi2 * dt) * forward(g, X.psi))
    return psi, X.q + dt * X.p / X.M


def _kick(X: CrystalState, dt: float) -> CrystalState:
    phase = np.exp(1j * X.e * _potential(X) * dt) if X.e != 0 else 1.0
    return CrystalState(X.crystal, X.psi * phase, X.q, X.p + dt * force(X))


def _strang(X: CrystalState, dt: float) -> CrystalState:
    Y = _kick(X, 0.5 * dt)
    psi, q = _free_flight(Y, dt)
    return _kick(CrystalState(X.crystal, psi, q, Y.p), 0.5 * dt)


def _picard(X: CrystalState, dt: float, sweeps: int) -> CrystalState:
    g = X.crystal.grid
    e = X.e

    def free(v, t):
        return inverse(g, np.exp(-0.5j * g.xi2 * t) * forward(g, v))

    src0 = 1j * e * _potential(X) * X.psi
    f0 = force(X)
    psi_free = free(X.psi, dt)
    Y = CrystalState(X.crystal, psi_free, X.q + dt * X.p / X.M, X.p + dt * f0)
    for _ in range(sweeps):
        src1 = 1j * e * _potential(Y) * Y.psi
        psi = psi_free + 0.5 * dt * (free(src0, dt) + src1)
        f1 = force(Y)
        p = X.p + 0.5 * dt * (f0 + f1)
        q = X.q + 0.5 * dt * (X.p + Y.p) / X.M
        Y = CrystalState(X.crystal, psi, q, p)
    return Y


def _check_finite(X: CrystalState) -> None:
    if not (np.all(np.isfinite(X.psi)) and np.all(np.isfinite(X.q)) and np.all(np.isfinite(X.p))):
        raise NumericalAbort("non-finite values in state")


def step(X: CrystalState, dt: float, scheme: str = "strang", picard_sweeps: int = 3) -> CrystalState:
    """Advance X by one step of size dt."""
    if scheme == "strang":
        out = _strang(X, dt)
    elif scheme == "picard":
        out = _picard(X, dt, picard_sweeps)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    _check_finite(out)
    return out


@dataclass
class Trajectory:
    rows: list[dict]
    final: CrystalState
    snapshots: list[tuple[float, CrystalState]]

    @property
    def columns(self) -> tuple[str, ...]:
        return ("t", "E", "Q", "dV")

    def table(self) -> np.ndarray:
        return np.array([[r[c] for c in self.columns] for r in self.rows])

    def drifts(self) -> dict[str, float]:
        """Absolute and relative drifts of E and Q against t=0, plus sup dV."""
        tab = self.table()
        E0, Q0 = tab[0, 1], tab[0, 2]
        dE = float(np.max(np.abs(tab[:, 1] - E0)))
        dQ = float(np.max(np.abs(tab[:, 2] - Q0)))
        return {
            "E_abs_max": float(np.max(np.abs(tab[:, 1]))),
            "E_drift": dE,
            "E_rel_drift": dE / abs(E0) if E0 != 0 else float("inf") if dE else 0.0,
            "Q_drift": dQ,
            "Q_rel_drift": dQ / abs(Q0) if Q0 != 0 else dQ,
            "dV_max": float(np.max(tab[:, 3])),
        }


def evolve(X0: CrystalState, config: IntegratorConfig, snapshot_every: int = 0, with_distance: bool = True) -> Trajectory:
    """Integrate to ``config.T_end`` and monitor E, Q and d_V(X(t), S).

    Raises
    ------
    NumericalAbort
        If the state becomes non-finite.
    """
    cfl = cfl_number(X0.crystal.grid, config.dt)
    if cfl > np.pi:
        log.warning("free-flight phase per step %.3g exceeds pi; high modes are under-resolved in time", cfl)

    def record(t, X):
        d = distance_to_manifold(X).d if with_distance else float("nan")
        return {"t": t, "E": energy(X), "Q": charge(X), "dV": d}

    X = X0
    rows = [record(0.0, X)]
    snaps = [(0.0, X)] if snapshot_every else []
    for k in range(1, config.n_steps + 1):
        X = step(X, config.dt, config.scheme, config.picard_sweeps)
        t = k * config.dt
        if k % config.monitor_every == 0 or k == config.n_steps:
            rows.append(record(t, X))
        if snapshot_every and k % snapshot_every == 0:
            snaps.append((t, X))
    return Trajectory(rows, X, snaps)


# ---- orbital stability ------------------------------------------------------------------------
def _smooth_zero_mean(grid: TorusGrid, rng, width: float) -> np.ndarray:
    c = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    c *= np.exp(-grid.xi2 / (2 * width**2))
    c[0, 0, 0] = 0.0
    c[grid.nyquist_mask] = 0.0
    return inverse(grid, c).real


def random_perturbation(crystal: Crystal, rng, width: float = 4.0) -> Perturbation:
    """Smooth random direction with zero-mean field parts, mean-zero kappa and pi = 0.

    Zero-mean Psi1 is orthogonal to the constant ground state (charge-preserving
    to first order); zero-mean Psi2 and mean-zero kappa are orthogonal to the gauge
    and translation directions.
    """
    g = crystal.grid
    kappa = rng.standard_normal((g.N**3, 3))
    kappa -= kappa.mean(axis=0)
    return Perturbation(_smooth_zero_mean(g, rng, width), _smooth_zero_mean(g, rng, width), kappa, np.zeros_like(kappa))


def kernel_kick(crystal: Crystal) -> Perturbation:
    """Momentum kick along v(n) = e_1 (-1)^(n_2 + n_3), normalized.

    For the box density the displacement v lies in the kernel of the Hessian,
    so a kick along it drifts away from the manifold linearly in time.
    """
    g = crystal.grid
    if g.N % 2:
        raise ValueError("the alternating kernel direction needs even N")
    s = crystal.sites
    v = np.zeros((g.N**3, 3))
    v[:, 0] = (-1.0) ** (s[:, 1] + s[:, 2])
    v /= np.linalg.norm(v)
    zero = np.zeros(g.shape)
    return Perturbation(zero, zero, np.zeros_like(v), v)


def perturbed_state(crystal: Crystal, Y: Perturbation, delta: float, S: SolitaryPoint = SolitaryPoint()) -> CrystalState:
    """S + s Y with charge renormalized to Z N^3 and s tuned so that d_V(X, S) = delta."""
    if delta == 0:
        return solitary_state(crystal, S)
    target = crystal.Z * crystal.grid.volume
    s = delta / max(Y.norm(crystal.grid), 1e-300)
    for _ in range(4):
        X = Y.apply(crystal, S, s)
        X.psi *= np.sqrt(target / charge(X))
        d = distance_to_manifold(X).d
        s *= delta / d
    X = Y.apply(crystal, S, s)
    X.psi *= np.sqrt(target / charge(X))
    return X


def _stability_run(args):
    crystal, Y, delta, cfg = args
    X0 = perturbed_state(crystal, Y, delta)
    traj = evolve(X0, cfg)
    tab = traj.table()
    return {"delta": delta, "d0": float(tab[0, 3]), "sup_d": float(tab[:, 3].max()), "E0": float(tab[0, 1]), "E_drift": traj.drifts()["E_drift"]}


def orbital_stability_experiment(
    sigma_model: IonDensityModel,
    delta_list,
    T_end: float = 10.0,
    *,
    direction: str = "random",
    N: int = 2,
    P: int = 8,
    e: float = 1.0,
    M: float = 1.0,
    dt: float = 1e-2,
    monitor_every: int = 10,
    seed: int = 0,
    workers: int | None = 1,
) -> list[dict]:
    """sup_t d_V(X(t), S) for perturbations of size delta of the ground state.

    Parameters
    ----------
    direction : {"random", "kernel"}
        ``random`` uses :func:`random_perturbation` (same direction for every
        delta); ``kernel`` uses :func:`kernel_kick`.

    Returns
    -------
    list of dict
        One row per delta with keys delta, d0, sup_d, E0, E_drift.
    """
    crystal = Crystal(TorusGrid(N, P), sigma_model, e, M)
    if direction == "random":
        Y = random_perturbation(crystal, np.random.default_rng(seed))
    elif direction == "kernel":
        Y = kernel_kick(crystal)
    else:
        raise ValueError(f"unknown direction {direction!r}")
    cfg = IntegratorConfig(dt=dt, T_end=T_end, monitor_every=monitor_every)
    return parallel_map(_stability_run, [(crystal, Y, float(d), cfg) for d in delta_list], workers)
