"""Bloch analysis of the linearized infinite crystal.

For a quasimomentum theta the state is expanded in plane waves
exp(i xi.y), xi = theta + 2 pi m with |m|_inf <= K_cut, and the unknowns are
ordered [Psi1 (n modes), Psi2 (n modes), kappa (3), pi (3)].  The energy matrix
is

    B = [[ diag(|xi|^2 + g^2/|xi|^2)   0             C         0    ]
         [ 0                           diag|xi|^2    0         0    ]
         [ C^H                         0             Sigma     0    ]
         [ 0                           0             0         I/M  ]],

    C = i g sigma^(-xi) xi^T / |xi|^2,    g = 2 e sqrt(Z) = 2 sqrt(e eZ),

with Sigma(theta) the full lattice sum from :func:`wiener_matrix`; since the
lattice sum covers every plane wave kept here, B stays positive semidefinite.
The linearized equations read Y' = J B Y with
J = [[0, 1/2], [-1/2, 0]] on (Psi1, Psi2) and [[0, 1], [-1, 0]] on (kappa, pi).
With Lambda = B^{1/2} and K = Lambda (iJ) Lambda, Z = Lambda Y obeys i Z' = K Z.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import brentq, linear_sum_assignment

from ._parallel import parallel_map
from .ion_models import IonDensityModel, distance_to_dual_lattice, gram_eigh, wiener_matrix

__all__ = [
    "BlochMatrices",
    "bloch_energy_matrix",
    "k_matrix",
    "similarity_residual",
    "coupling",
    "schur_min_eigenvalue",
    "SandwichResult",
    "positivity_sandwich",
    "calibrate_sandwich_epsilon",
    "SANDWICH_EPSILON",
    "DispersionTable",
    "dispersion_relations",
    "reduced_frequencies",
    "arrowhead_eigvalsh",
    "GrowthFit",
    "growth_exponent_fit",
    "linearized_evolve",
    "energy_norm",
    "DecayCurve",
    "synthesize_cell_norms",
    "weighted_norm",
    "dispersive_decay_experiment",
    "CLIP",
]

log = logging.getLogger(__name__)

CLIP = 1e-12

# 0.5 * min of b0 / (d^4 Sigma_0) over the training grid interior_theta_grid(3)
# (which contains the zone corner (pi, pi, pi), where d is largest), K_cut = 4,
# e = M = 1; produced by calibrate_sandwich_epsilon and frozen here.
SANDWICH_EPSILON = {
    "gaussian_sinc": 0.0005677419347591403,
    "sheared_mix": 0.0005677734739050598,
    "box": 0.0005687919767807949,
    "smoothed_box": 0.0005678444042902825,
}


def _modes(K_cut: int) -> np.ndarray:
    r = range(-K_cut, K_cut + 1)
    return np.array(list(itertools.product(r, r, r)), dtype=float)


def coupling(model: IonDensityModel, e: float) -> float:
    return 2.0 * np.sqrt(e * model.eZ)


@dataclass
class BlochMatrices:
    """Truncated Bloch matrices at one theta.

    ``Lambda``, ``Lambda_inv`` and ``K`` are filled by :func:`k_matrix`.
    """

    theta: np.ndarray
    K_cut: int
    modes: np.ndarray
    xi: np.ndarray
    B: np.ndarray
    e: float
    M: float
    g: float
    sigma: np.ndarray
    sigma0: float
    d: float
    Lambda: np.ndarray | None = None
    Lambda_inv: np.ndarray | None = None
    K: np.ndarray | None = None
    clip_count: int = 0
    _X: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.modes)

    @cached_property
    def J(self) -> np.ndarray:
        n = self.n
        J = np.zeros((2 * n + 6, 2 * n + 6))
        J[np.arange(n), n + np.arange(n)] = 0.5
        J[n + np.arange(n), np.arange(n)] = -0.5
        J[2 * n + np.arange(3), 2 * n + 3 + np.arange(3)] = 1.0
        J[2 * n + 3 + np.arange(3), 2 * n + np.arange(3)] = -1.0
        return J

    @property
    def A(self) -> np.ndarray:
        return self.J @ self.B

    @cached_property
    def omega(self) -> np.ndarray:
        """Eigenvalues of K, ascending."""
        return self._k_eig[0]

    @cached_property
    def omega_vectors(self) -> np.ndarray:
        return self._k_eig[1]

    @cached_property
    def _k_eig(self):
        if self.K is None:
            k_matrix(self)
        # K = [[0, iX], [-iX^H, 0]] in the (Psi1, kappa | Psi2, pi) split, so its
        # eigenpairs follow from the SVD X = U S V^H: omega = +-s, vectors (u, -+ i v) / sqrt 2.
        r, c = self.split
        U, sv, Vh = np.linalg.svd(self._X)
        V = Vh.conj().T
        dim = 2 * self.n + 6
        vecs = np.zeros((dim, 2 * len(sv)), dtype=complex)
        vecs[r, : len(sv)] = U / np.sqrt(2)
        vecs[c, : len(sv)] = -1j * V / np.sqrt(2)
        vecs[r, len(sv) :] = U / np.sqrt(2)
        vecs[c, len(sv) :] = 1j * V / np.sqrt(2)
        w = np.concatenate([sv, -sv])
        order = np.argsort(w, kind="stable")
        return w[order], vecs[:, order]

    @cached_property
    def split(self) -> tuple[np.ndarray, np.ndarray]:
        """Index sets of the (Psi1, kappa) and (Psi2, pi) parts."""
        n = self.n
        r = np.concatenate([np.arange(n), 2 * n + np.arange(3)])
        c = np.concatenate([n + np.arange(n), 2 * n + 3 + np.arange(3)])
        return r, c

    @property
    def reduced_block(self) -> np.ndarray:
        """The (Psi1, kappa) part of B; the rest of B is diagonal."""
        r, _ = self.split
        return self.B[np.ix_(r, r)]

    def index(self, block: str, m=(0, 0, 0)) -> int:
        """Position of a basis vector: block in {psi1, psi2, kappa, pi}."""
        n = self.n
        if block in ("psi1", "psi2"):
            i = int(np.flatnonzero(np.all(self.modes == np.asarray(m, float), axis=1))[0])
            return i if block == "psi1" else n + i
        j = int(m) if np.ndim(m) == 0 else 0
        return (2 * n if block == "kappa" else 2 * n + 3) + j


def bloch_energy_matrix(
    sigma_model: IonDensityModel,
    theta,
    K_cut: int = 4,
    e: float = 1.0,
    M: float = 1.0,
    M_max: int | None = None,
    exclusion: float = 1e-6,
) -> BlochMatrices:
    """Assemble B(theta) on the plane waves theta + 2 pi m, |m|_inf <= K_cut.

    Raises
    ------
    ValueError
        If theta is within ``exclusion`` of the dual lattice 2 pi Z^3.
    """
    theta = np.asarray(theta, dtype=float)
    d = float(distance_to_dual_lattice(theta))
    if d <= exclusion:
        raise ValueError(f"theta={theta.tolist()} is within {exclusion:g} of the dual lattice")
    modes = _modes(K_cut)
    xi = theta + 2 * np.pi * modes
    x2 = np.sum(xi**2, axis=1)
    n = len(modes)
    g = coupling(sigma_model, e)
    W = wiener_matrix(sigma_model, theta, M_max or max(8, K_cut), exclusion=exclusion)
    s_hat = sigma_model.fourier(-xi)
    B = np.zeros((2 * n + 6, 2 * n + 6), dtype=complex)
    B[np.arange(n), np.arange(n)] = x2 + g**2 / x2
    B[n + np.arange(n), n + np.arange(n)] = x2
    C = 1j * g * (s_hat / x2)[:, None] * xi
    B[:n, 2 * n : 2 * n + 3] = C
    B[2 * n : 2 * n + 3, :n] = C.conj().T
    B[2 * n : 2 * n + 3, 2 * n : 2 * n + 3] = W.matrix
    B[2 * n + 3 :, 2 * n + 3 :] = np.eye(3) / M
    return BlochMatrices(theta, K_cut, modes, xi, B, e, M, g, W.matrix, W.sigma0, d)


def k_matrix(mats: BlochMatrices, clip: float = CLIP) -> np.ndarray:
    """K = Lambda (iJ) Lambda with Lambda = B^{1/2}; also stores Lambda and its inverse.

    Eigenvalues of B below ``clip`` are raised to ``clip`` before taking roots;
    the number of clipped eigenvalues is kept in ``mats.clip_count``.

    Raises
    ------
    ValueError
        If B has an eigenvalue below -1e-8 times its norm.
    """
    r, c = mats.split
    lam, U = np.linalg.eigh(mats.reduced_block)
    if lam[0] < -1e-8 * max(abs(lam[-1]), 1.0):
        raise ValueError(f"B is indefinite (min eigenvalue {lam[0]:.3g})")
    diag_c = np.real(np.diag(mats.B)[c])
    mats.clip_count = int(np.sum(lam < clip) + np.sum(diag_c < clip))
    lam = np.maximum(lam, clip)
    root = np.sqrt(lam)
    root_c = np.sqrt(np.maximum(diag_c, clip))
    dim = len(r) + len(c)
    Lam = np.zeros((dim, dim), dtype=complex)
    Linv = np.zeros((dim, dim), dtype=complex)
    Lam[np.ix_(r, r)] = (U * root) @ U.conj().T
    Linv[np.ix_(r, r)] = (U / root) @ U.conj().T
    Lam[c, c] = root_c
    Linv[c, c] = 1.0 / root_c
    jv = np.concatenate([np.full(mats.n, 0.5), np.ones(3)])
    X = Lam[np.ix_(r, r)] * (jv * root_c)[None, :]
    K = np.zeros((dim, dim), dtype=complex)
    K[np.ix_(r, c)] = 1j * X
    K[np.ix_(c, r)] = -1j * X.conj().T
    mats.Lambda, mats.Lambda_inv, mats.K = Lam, Linv, K
    mats._X = X
    for key in ("_k_eig", "omega", "omega_vectors"):
        mats.__dict__.pop(key, None)
    return mats.K


def similarity_residual(mats: BlochMatrices) -> float:
    """||A - (-i) Lambda^{-1} K Lambda|| / ||A||."""
    if mats.K is None:
        k_matrix(mats)
    A = mats.A
    rec = -1j * mats.Lambda_inv @ mats.K @ mats.Lambda
    return float(np.linalg.norm(A - rec) / np.linalg.norm(A))


# ---- positivity --------------------------------------------------------------------------
def schur_min_eigenvalue(
    sigma_model: IonDensityModel, theta, K_cut: int = 4, e: float = 1.0, M: float = 1.0, M_max: int | None = None
) -> float:
    """Smallest eigenvalue of B(theta), resolved to relative accuracy.

    The (Psi1, kappa) part is reduced to its 3x3 Schur complement

        S(lam) = sum_m |sigma^|^2 xî xî^T (|xi|^4 - lam |xi|^2) / (|xi|^4 + g^2 - lam |xi|^2) + tail,

    (tail: lattice-sum terms outside the plane-wave cube), which is a Gram
    matrix of nonnegative rows for lam below min |xi|^2.  The root of
    lam = min eig S(lam) is found by bracketing; Psi2 and pi contribute
    min |xi|^2 and 1/M.
    """
    theta = np.asarray(theta, dtype=float)
    M_max = M_max or max(8, K_cut)
    r = range(-M_max, M_max + 1)
    m = np.array(list(itertools.product(r, r, r)), dtype=float)
    xi = theta + 2 * np.pi * m
    x2 = np.sum(xi**2, axis=1)
    w0 = np.abs(sigma_model.fourier(xi)) ** 2
    unit = xi / np.sqrt(x2)[:, None]
    inside = np.max(np.abs(m), axis=1) <= K_cut
    g2 = coupling(sigma_model, e) ** 2
    lam_hi = float(x2[inside].min())

    def mineig(lam):
        w = w0.copy()
        xi2 = x2[inside]
        w[inside] *= (xi2 * xi2 - lam * xi2) / (xi2 * xi2 + g2 - lam * xi2)
        return gram_eigh(unit * np.sqrt(np.maximum(w, 0.0))[:, None])[0][0]

    f0 = mineig(0.0)
    if f0 <= 0.0:
        lam = 0.0
    else:
        hi = min(f0, lam_hi * (1 - 1e-12))
        lam = brentq(lambda t: mineig(t) - t, 0.0, hi, xtol=1e-300, rtol=1e-14) if mineig(hi) < hi else hi
    return float(min(lam, lam_hi, 1.0 / M))


@dataclass
class SandwichResult:
    theta: np.ndarray
    b0: float
    lower: float
    upper: float
    sigma0: float
    d: float
    epsilon: float | None
    b0_direct: float

    @property
    def ratio(self) -> float:
        """b0 / (d^4 Sigma_0)."""
        return self.b0 / (self.d**4 * self.sigma0) if self.sigma0 > 0 else float("nan")

    @property
    def passed(self) -> bool:
        lower_ok = self.epsilon is None or self.b0 >= self.lower
        return 0 < self.b0 <= self.upper and lower_ok


def positivity_sandwich(mats: BlochMatrices, sigma_model: IonDensityModel, epsilon: float | None = "frozen") -> SandwichResult:
    """b0 = min eig B(theta) with the bounds eps d^4 Sigma_0 <= b0 <= Sigma_0.

    ``epsilon="frozen"`` uses :data:`SANDWICH_EPSILON` for the model kind (None if
    no value is frozen).  b0 comes from :func:`schur_min_eigenvalue`; the direct
    dense eigenvalue is reported as ``b0_direct``.

    Raises
    ------
    ValueError
        If the dense B(theta) is indefinite beyond round-off.
    """
    lam = np.linalg.eigvalsh(mats.reduced_block)
    if lam[0] < -1e-8 * max(abs(lam[-1]), 1.0):
        raise ValueError(f"B(theta) is indefinite: min eigenvalue {lam[0]:.3g}")
    b0 = schur_min_eigenvalue(sigma_model, mats.theta, mats.K_cut, mats.e, mats.M)
    b0_direct = float(min(lam[0], np.real(np.diag(mats.B)[mats.split[1]]).min()))
    if epsilon == "frozen":
        epsilon = SANDWICH_EPSILON.get(sigma_model.kind)
    lower = epsilon * mats.d**4 * mats.sigma0 if epsilon is not None else float("nan")
    return SandwichResult(mats.theta, b0, lower, mats.sigma0, mats.sigma0, mats.d, epsilon, b0_direct)


def _sandwich_ratio(args):
    model, theta, K_cut, e, M = args
    mats = bloch_energy_matrix(model, theta, K_cut, e, M)
    return positivity_sandwich(mats, model, epsilon=None).ratio


def calibrate_sandwich_epsilon(
    sigma_model: IonDensityModel, theta_grid, K_cut: int = 4, e: float = 1.0, M: float = 1.0, workers: int | None = 1
) -> float:
    """0.5 * min over ``theta_grid`` of b0 / (d^4 Sigma_0)."""
    ratios = parallel_map(_sandwich_ratio, [(sigma_model, t, K_cut, e, M) for t in theta_grid], workers)
    return 0.5 * float(np.nanmin(ratios))


# ---- dispersion ---------------------------------------------------------------------------
@dataclass
class DispersionTable:
    """Rows (theta, branch, omega); branches are tracked across the theta path."""

    thetas: np.ndarray
    omega: np.ndarray  # (n_theta, n_eigs), columns are tracked branches
    flat_branches: list[int]
    flat_values: list[float]
    skipped: list
    symmetry_defect: float  # max over theta of the distance between spec K and -spec K

    def rows(self) -> list[dict]:
        out = []
        for t, w in zip(self.thetas, self.omega):
            for k, om in enumerate(w):
                out.append({"theta1": t[0], "theta2": t[1], "theta3": t[2], "branch": k, "omega": float(om)})
        return out


def _dispersion_point(args):
    model, theta, K_cut, e, M, n_eigs = args
    mats = bloch_energy_matrix(model, theta, K_cut, e, M)
    k_matrix(mats)
    w, V = mats.omega, mats.omega_vectors
    sym = float(np.max(np.abs(np.sort(w) + np.sort(w)[::-1])))
    order = np.argsort(np.abs(w), kind="stable")[:n_eigs]
    return w[order], V[:, order], sym, float(np.max(np.abs(mats.K - mats.K.conj().T)))


def dispersion_relations(
    sigma_model: IonDensityModel,
    theta_grid,
    n_eigs: int = 12,
    K_cut: int = 2,
    e: float = 1.0,
    M: float = 1.0,
    flat_tol: float = 1e-6,
    exclusion: float = 1e-6,
    workers: int | None = 1,
) -> DispersionTable:
    """Lowest-|omega| eigenvalues of K(theta) along ``theta_grid``, tracked by eigenvector overlap.

    Consecutive grid points are matched by maximizing |<v_i, v_j>| (Hungarian
    assignment), with eigenvalue distance as a tie-breaker.  A branch whose
    values vary by less than ``flat_tol`` over the grid is registered as flat.
    """
    theta_grid = np.atleast_2d(np.asarray(theta_grid, dtype=float))
    keep, skipped = [], []
    for t in theta_grid:
        if distance_to_dual_lattice(t) <= exclusion:
            log.info("skipping theta=%s near the dual lattice", t.tolist())
            skipped.append(t)
        else:
            keep.append(t)
    res = parallel_map(_dispersion_point, [(sigma_model, t, K_cut, e, M, n_eigs) for t in keep], workers)
    omega = np.empty((len(keep), n_eigs))
    prev = None
    for i, (w, V, _, _) in enumerate(res):
        if prev is None:
            perm = np.arange(n_eigs)
        else:
            pw, pV = prev
            overlap = np.abs(pV.conj().T @ V)
            cost = -overlap + 1e-6 * np.abs(pw[:, None] - w[None, :])
            _, perm = linear_sum_assignment(cost)
        w, V = w[perm], V[:, perm]
        omega[i] = w
        prev = (w, V)
    var = np.ptp(omega, axis=0) if len(keep) else np.zeros(n_eigs)
    flat = [int(k) for k in np.flatnonzero(var < flat_tol)]
    sym = max((r[2] for r in res), default=0.0)
    return DispersionTable(np.array(keep), omega, flat, [float(omega[0, k]) for k in flat], skipped, sym)


def arrowhead_eigvalsh(d: np.ndarray, C: np.ndarray, S: np.ndarray, rtol: float = 1e-13) -> np.ndarray:
    """Eigenvalues of the Hermitian matrix [[diag(d), C], [C^H, S]] with C of shape (n, k), k small.

    Equal diagonal entries form clusters; within a cluster of size mu only
    rank(C_cluster) <= k directions couple to the border, so the value d is an
    exact eigenvalue of multiplicity mu - rank.  The coupled directions and the
    border form a small dense problem.
    """
    d = np.asarray(d, dtype=float)
    order = np.argsort(d, kind="stable")
    d, C = d[order], C[order]
    scale = max(float(np.abs(d).max()), 1.0)
    breaks = np.flatnonzero(np.diff(d) > rtol * scale) + 1
    exact, diag_eff, rows = [], [], []
    cmax = float(np.abs(C).max()) if C.size else 0.0
    for block in np.split(np.arange(len(d)), breaks):
        val = float(d[block].mean())
        Cb = C[block]
        if cmax == 0.0:
            rank, rb = 0, None
        else:
            u, sv, vh = np.linalg.svd(Cb, full_matrices=False)
            rank = int(np.sum(sv > 1e-15 * cmax))
            rb = sv[:rank, None] * vh[:rank]
        exact += [val] * (len(block) - rank)
        if rank:
            diag_eff += [val] * rank
            rows.append(rb)
    k = S.shape[0]
    m = len(diag_eff)
    Red = np.zeros((m + k, m + k), dtype=np.result_type(C, S, float))
    Red[np.arange(m), np.arange(m)] = diag_eff
    if m:
        R = np.vstack(rows)
        Red[:m, m:] = R
        Red[m:, :m] = R.conj().T
    Red[m:, m:] = S
    return np.sort(np.concatenate([np.array(exact), np.linalg.eigvalsh(Red)]))


def reduced_frequencies(
    sigma_model: IonDensityModel, theta, K_cut: int, e: float = 1.0, M: float = 1.0, method: str = "arrowhead"
) -> np.ndarray:
    """Nonnegative frequencies from omega^2 = eig(R^{1/2} B_r R^{1/2}), ascending.

    B_r is the (Psi1, kappa) part of B and R = diag(|xi|^2 / 4, 1/M); this
    second-order form has half the size of K and the same |omega|.  The matrix
    is diagonal plus a three-column border, which ``method="arrowhead"``
    exploits; ``method="dense"`` runs a full eigensolver.
    """
    theta = np.asarray(theta, dtype=float)
    modes = _modes(K_cut)
    xi = theta + 2 * np.pi * modes
    x2 = np.sum(xi**2, axis=1)
    n = len(modes)
    g = coupling(sigma_model, e)
    s_hat = sigma_model.fourier(-xi)
    Sigma = wiener_matrix(sigma_model, theta, max(8, K_cut)).matrix
    real = np.max(np.abs(np.imag(s_hat))) == 0.0
    # kappa -> i kappa turns the coupling i g sigma^ xi / |xi|^2 real when sigma^ is real
    C = g * (s_hat / x2)[:, None] * xi
    C = C.real if real else 1j * C
    S = Sigma.real if real else Sigma
    rf = np.sqrt(x2) / 2.0
    rk = 1.0 / np.sqrt(M)
    d = rf**2 * (x2 + g**2 / x2)
    Cs = C * rf[:, None] * rk
    Ss = S * rk * rk
    if method == "arrowhead":
        w2 = arrowhead_eigvalsh(d, Cs, Ss)
    elif method == "dense":
        Br = np.zeros((n + 3, n + 3), dtype=Cs.dtype)
        Br[np.arange(n), np.arange(n)] = d
        Br[:n, n:] = Cs
        Br[n:, :n] = Cs.conj().T
        Br[n:, n:] = Ss
        w2 = eigh(Br, eigvals_only=True, driver="evd")
    else:
        raise ValueError(f"unknown method {method!r}")
    return np.sqrt(np.maximum(w2, 0.0))


@dataclass
class GrowthFit:
    slope: float
    K_cut: int
    k: np.ndarray
    omega: np.ndarray
    radius: float


def growth_exponent_fit(
    sigma_model: IonDensityModel, theta, K_cut: int = 6, e: float = 1.0, M: float = 1.0, method: str = "arrowhead"
) -> GrowthFit:
    """Least-squares slope of log omega_k against log k.

    Only frequencies below R^2 / 2 are used, R being the radius of the largest
    ball around the origin contained in the plane-wave cube (beyond it the
    truncation, not the operator, sets the counting); the fit uses the upper
    half of those by index.

    Raises
    ------
    ValueError
        If fewer than 8 frequencies are available for the fit.
    """
    theta = np.asarray(theta, dtype=float)
    w = reduced_frequencies(sigma_model, theta, K_cut, e, M, method)
    R = float(np.min(2 * np.pi * K_cut - np.abs(theta)))
    w = w[w <= 0.5 * R * R]
    k = np.arange(1, len(w) + 1)
    sel = k > len(w) // 2
    if sel.sum() < 8:
        raise ValueError("too few eigenvalues for a growth fit; increase K_cut")
    slope = float(np.polyfit(np.log(k[sel]), np.log(w[sel]), 1)[0])
    return GrowthFit(slope, K_cut, k[sel], w[sel], R)


# ---- linearized evolution --------------------------------------------------------------------
def linearized_evolve(mats: BlochMatrices, Y0, t) -> np.ndarray:
    """Y(t) = Lambda^{-1} exp(-i K t) Lambda Y(0); ``t`` may be a scalar or a 1D array.

    Returns an array of shape (len(Y0),) or (len(t), len(Y0)).
    """
    if mats.K is None:
        k_matrix(mats)
    w, V = mats.omega, mats.omega_vectors
    c = V.conj().T @ (mats.Lambda @ np.asarray(Y0, dtype=complex))
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    Z = (V[None, :, :] * np.exp(-1j * np.outer(ts, w))[:, None, :]) @ c
    out = Z @ mats.Lambda_inv.T
    return out[0] if np.ndim(t) == 0 else out


def energy_norm(mats: BlochMatrices, Y) -> np.ndarray:
    """||Lambda Y|| for Y of shape (dim,) or (..., dim)."""
    if mats.K is None:
        k_matrix(mats)
    return np.linalg.norm(np.asarray(Y) @ mats.Lambda.T, axis=-1)


# ---- dispersive decay ---------------------------------------------------------------------------
def synthesize_cell_norms(L: int, P: int, thetas_idx: np.ndarray, modes: np.ndarray, Zt: np.ndarray) -> np.ndarray:
    """Per-cell norms ||Z(n)||, n in the L^3 supercell, of the Bloch synthesis.

    Parameters
    ----------
    thetas_idx : (k, 3) int
        theta = 2 pi j / L.
    modes : (m, 3)
        Plane-wave indices; xi = theta + 2 pi mode.
    Zt : (k, 2 m + 6) complex
        Coefficients ordered [Psi1 modes, Psi2 modes, kappa, pi].

    The fields are F(x) = L^{-3/2} sum_theta sum_m Z_m(theta) e^{i xi x} sampled with
    P points per unit length; lattice parts are L^{-3/2} sum_theta e^{i theta n} Z(theta).
    Cell norms are trapezoid sums over each unit cell.
    """
    n = P * L
    m = len(modes)
    norm2 = np.zeros((L, L, L))
    thetas_idx = np.asarray(thetas_idx, dtype=int)
    waves = (thetas_idx[:, None, :] + L * modes[None, :, :].astype(int)) % n
    for part in range(2):
        c = np.zeros((n, n, n), dtype=complex)
        np.add.at(c, (waves[..., 0], waves[..., 1], waves[..., 2]), Zt[:, part * m : (part + 1) * m])
        F = np.fft.ifftn(c) * n**3 / L**1.5
        cell = (np.abs(F) ** 2).reshape(L, P, L, P, L, P).sum(axis=(1, 3, 5)) / P**3
        norm2 += cell
    for part in range(2):
        for j in range(3):
            c = np.zeros((L, L, L), dtype=complex)
            np.add.at(c, (thetas_idx[:, 0] % L, thetas_idx[:, 1] % L, thetas_idx[:, 2] % L), Zt[:, 2 * m + 3 * part + j])
            v = np.fft.ifftn(c) * L**3 / L**1.5
            norm2 += np.abs(v) ** 2
    return np.sqrt(norm2)


def weighted_norm(cell_norms: np.ndarray, alpha: float) -> float:
    """(sum_n (1 + |n|)^{2 alpha} ||Z(n)||^2)^{1/2} with n taken in [-L/2, L/2)^3."""
    L = cell_norms.shape[0]
    c = np.arange(L)
    c = c - L * (c >= L // 2)
    r = np.sqrt(c[:, None, None] ** 2 + c[None, :, None] ** 2 + c[None, None, :] ** 2)
    return float(np.sqrt(np.sum((1.0 + r) ** (2 * alpha) * cell_norms**2)))


@dataclass
class DecayCurve:
    times: np.ndarray
    norms: np.ndarray
    alpha: float
    t_limit: float
    max_group_velocity: float
    L: int

    @property
    def ratio(self) -> float:
        return float(self.norms[-1] / self.norms[0])

    def rows(self) -> list[dict]:
        return [{"t": float(t), "weighted_norm": float(v)} for t, v in zip(self.times, self.norms)]


def _decay_point(args):
    model, theta, K_cut, e, M, center, rho, floor, h = args
    mats = bloch_energy_matrix(model, theta, K_cut, e, M)
    k_matrix(mats)
    w, V = mats.omega, mats.omega_vectors
    r = np.linalg.norm(theta - center) / rho
    bump = np.exp(1.0 - 1.0 / (1.0 - r * r)) if r < 1 else 0.0
    start = np.zeros(len(w), dtype=complex)
    start[mats.index("psi1")] = 1.0
    coef = V.conj().T @ start
    coef[np.abs(w) < floor] = 0.0  # drop the flat (numerically stationary) branches
    coef *= bump
    populated = np.abs(coef) > 1e-10 * max(np.abs(coef).max(), 1e-300)
    vmax = 0.0
    if np.any(populated):
        for j in range(3):
            dK = []
            for s in (1, -1):
                tp = theta.copy()
                tp[j] += s * h
                mp = bloch_energy_matrix(model, tp, K_cut, e, M)
                dK.append(k_matrix(mp))
            D = (dK[0] - dK[1]) / (2 * h)
            Vp = V[:, populated]
            gv = np.real(np.einsum("ik,ij,jk->k", Vp.conj(), D, Vp))
            vmax = max(vmax, float(np.max(np.abs(gv))))
    return w, V, coef, vmax


def dispersive_decay_experiment(
    sigma_model: IonDensityModel,
    L: int = 24,
    times=None,
    alpha: float = -2.0,
    *,
    K_cut: int = 1,
    P: int = 4,
    e: float = 1.0,
    M: float = 1.0,
    center=(np.pi, np.pi, np.pi),
    rho: float = 1.0,
    flat_floor: float = 1e-6,
    n_times: int = 6,
    safety: float = 0.9,
    workers: int | None = 1,
    provider=None,
) -> DecayCurve:
    """Weighted-norm decay of the Bloch synthesis of a smooth continuous-spectrum profile.

    The initial profile in the energy variables Z = Lambda Y is a smooth bump
    in theta around ``center`` (radius ``rho``, on the L^3 quasimomentum grid)
    times the projection of the Psi1 plane wave m = 0 onto the dispersive
    branches (|omega| >= ``flat_floor``).  Each theta evolves by exp(-i K t).

    The quadrature in theta resolves the oscillation only while
    (2 pi / L) t max|grad omega| < pi; ``times=None`` samples up to ``safety``
    times that limit, and explicit times beyond it raise.

    ``provider``, if given, replaces the Bloch computation: a callable
    theta -> (omega, V, coef, vmax) used for synthetic tests, with V of shape
    (2 m + 6, 2 m + 6) for the m plane waves of ``K_cut`` and vmax the largest
    group velocity at that theta.

    Raises
    ------
    ValueError
        If requested times exceed the phase-resolution limit, or alpha >= -3/2.
    """
    if alpha >= -1.5:
        raise ValueError("alpha must be below -3/2")
    center = np.asarray(center, dtype=float)
    h = 2 * np.pi / L
    lo = np.floor((center - rho) / h).astype(int)
    hi = np.ceil((center + rho) / h).astype(int)
    idx = np.array(list(itertools.product(*[range(a, b + 1) for a, b in zip(lo, hi)])))
    th = idx * h
    inside = np.linalg.norm(th - center, axis=1) < rho
    inside &= distance_to_dual_lattice(th) > 1e-9
    idx, th = idx[inside], th[inside]
    if provider is None:
        res = parallel_map(
            _decay_point, [(sigma_model, t, K_cut, e, M, center, rho, flat_floor, 1e-5) for t in th], workers
        )
    else:
        res = [provider(t) for t in th]
    modes = _modes(K_cut)
    vmax = max(r[3] for r in res)
    t_limit = np.inf if vmax == 0 else np.pi / (h * vmax)
    if times is None:
        tf = safety * t_limit if np.isfinite(t_limit) else 10.0
        times = np.linspace(0.0, tf, n_times)
    times = np.asarray(times, dtype=float)
    if np.any(times >= t_limit):
        raise ValueError(f"times up to {times.max():.3g} exceed the phase-resolution limit {t_limit:.3g}")
    norms = []
    for t in times:
        Zt = np.array([V @ (np.exp(-1j * w * t) * c) for w, V, c, _ in res])
        cells = synthesize_cell_norms(L, P, idx, modes, Zt)
        norms.append(weighted_norm(cells, alpha))
    return DecayCurve(times, np.array(norms), alpha, float(t_limit), float(vmax), L)
