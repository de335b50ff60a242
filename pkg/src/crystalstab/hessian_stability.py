"""Energy Hessian at a solitary point, its null space and its constrained spectrum.

Coordinates
-----------
A tangent vector is Y = (Psi1, Psi2, kappa, pi) with

    psi = e^{i alpha} (sqrt Z + Psi1 + i Psi2),   q = r + kappa,   p = pi,

and the inner product is ∫Psi1 Psi1' + ∫Psi2 Psi2' + sum kappa.kappa' + sum pi.pi'.
Under the Jellium condition the second variation is

    <Y, E'' Y> = ∫|∇Psi1|^2 + ∫|∇Psi2|^2 + <rho1, G rho1> + sum |pi|^2 / M,
    rho1 = -sum_n kappa(n).∇sigma(. - n - r) - 2 e sqrt(Z) Psi1.

Bloch decomposition over the ion lattice splits the (Psi1, kappa) part into
independent blocks, one for each theta in the discrete zone (2 pi / N) Z^3 mod 2 pi.
The block at theta acts on (u, kappa^(theta)) with u_xi = sqrt|T| Psi1^(xi) over
the grid frequencies xi ≡ theta, and equals X^H X for

    X = [ diag |xi|      0   ]
        [ W_u           W_k  ],   W row at xi != 0:  (-2 e sqrt Z u_xi - i sigma^(-xi) e^{-i xi r} xi.kappa^) / |xi|.

The Psi2 part is diagonal with entries |xi|^2 and the pi part is 1/M.  The real
Hessian is unitarily equivalent to the direct sum of these complex blocks, so
its spectrum (with multiplicity) is their union.  :func:`dense_hessian` builds
the same operator from real-space Hessian-vector products as an independent route.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from ._parallel import parallel_map
from .crystal_state import Crystal, Perturbation, SolitaryPoint, energy, solitary_state
from .ion_models import DEGENERACY_TOL, IonDensityModel, gram_eigh, wiener_matrix
from .spectral_core import TorusGrid, forward, inverse

__all__ = [
    "HessianBlock",
    "HessianMatrix",
    "assemble_hessian",
    "quadratic_form",
    "hessian_vector_product",
    "dense_hessian",
    "NullSpace",
    "null_space",
    "kernel_defect_dimension",
    "ConstrainedSpectrum",
    "constrained_spectrum",
    "finite_difference_form",
    "remainder_exponent",
    "KERNEL_RTOL",
]

log = logging.getLogger(__name__)

KERNEL_RTOL = 1e-8


@dataclass
class HessianBlock:
    """Complex block at one point theta of the discrete zone."""

    theta_index: tuple
    theta: np.ndarray
    wave: np.ndarray  # (m, 3) integer wave indices of the coset, xi = 2 pi wave / N
    xi: np.ndarray  # (m, 3)
    factor: np.ndarray  # X with X^H X = block; columns [u (m), kappa^ (3)]
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        B = self.factor.conj().T @ self.factor
        return 0.5 * (B + B.conj().T)

    @property
    def zero_mode(self) -> int | None:
        """Row index of xi = 0 inside the coset, if present."""
        z = np.flatnonzero(np.all(self.wave == 0, axis=1))
        return int(z[0]) if len(z) else None


@dataclass
class HessianMatrix:
    """Block form of E''(S): theta-blocks for (Psi1, kappa), diagonal Psi2 and pi parts."""

    crystal: Crystal
    point: SolitaryPoint
    blocks: list[HessianBlock]
    psi2_diag: np.ndarray
    pi_diag: np.ndarray

    @property
    def grid(self) -> TorusGrid:
        return self.crystal.grid

    @property
    def dimension(self) -> int:
        g = self.grid
        return 2 * g.size + 6 * g.N**3

    def eigenvalues(self) -> np.ndarray:
        """Full spectrum, sorted, with multiplicity."""
        parts = [b.eigenvalues for b in self.blocks] + [self.psi2_diag.ravel(), self.pi_diag]
        return np.sort(np.concatenate(parts))

    def largest(self) -> float:
        return float(self.eigenvalues()[-1])

    def to_dense(self) -> np.ndarray:
        """Block-diagonal complex matrix in the Fourier basis [Psi1 blocks, Psi2, pi]."""
        from scipy.linalg import block_diag

        return block_diag(*[b.matrix for b in self.blocks], np.diag(self.psi2_diag.ravel()), np.diag(self.pi_diag))


def _coset_waves(grid: TorusGrid, j) -> np.ndarray:
    k = grid.wave_index
    axes = [k[(k - jj) % grid.N == 0] for jj in j]
    return np.array(list(itertools.product(*axes)), dtype=int)


def _block(args) -> HessianBlock:
    crystal, r, j = args
    g = crystal.grid
    N = g.N
    wave = _coset_waves(g, j)
    xi = 2 * np.pi * wave / N
    nrm = np.linalg.norm(xi, axis=1)
    ff = crystal.model.fourier(-xi)
    nyq = np.any(wave == g.n // 2, axis=1) if g.n % 2 == 0 else np.zeros(len(wave), bool)
    ff[nyq] = 0.0
    m = len(wave)
    coup = 2.0 * crystal.e * np.sqrt(crystal.Z) if crystal.e != 0 else 0.0
    nz = nrm > 0
    kin = np.zeros((m, m + 3), dtype=complex)
    kin[np.arange(m), np.arange(m)] = nrm
    W = np.zeros((int(nz.sum()), m + 3), dtype=complex)
    idx = np.flatnonzero(nz)
    W[np.arange(len(idx)), idx] = -coup / nrm[idx]
    ph = np.exp(-1j * xi[idx] @ np.asarray(r, float))
    W[:, m:] = (-1j * ff[idx] * ph / nrm[idx])[:, None] * xi[idx]
    X = np.vstack([kin[nz], W])
    if not np.all(nz):
        X = np.vstack([X, np.zeros((1, m + 3))])
    evals, evecs = gram_eigh(X)
    theta = 2 * np.pi * np.asarray(j, float) / N
    theta = theta - 2 * np.pi * (theta > np.pi)
    return HessianBlock(tuple(int(v) for v in j), theta, wave, xi, X, evals, evecs)


def assemble_hessian(
    S: SolitaryPoint, grid: TorusGrid, model: IonDensityModel, e: float = 1.0, M: float = 1.0, workers: int | None = 1
) -> HessianMatrix:
    """E''(S) in block form; blocks are diagonalized independently (in parallel if requested)."""
    crystal = Crystal(grid, model, e, M)
    zone = list(itertools.product(range(grid.N), repeat=3))
    blocks = parallel_map(_block, [(crystal, S.r, j) for j in zone], workers)
    return HessianMatrix(crystal, S, blocks, grid.xi2.copy(), np.full(3 * grid.N**3, 1.0 / M))


# ---- quadratic form, three routes -------------------------------------------------------------
def _rho1_hat(crystal: Crystal, S: SolitaryPoint, Y: Perturbation) -> np.ndarray:
    g = crystal.grid
    a = crystal.sites + np.asarray(S.r, float)
    e0, e1, e2 = [np.exp(-1j * a[:, j, None] * g.xi1d[None, :]) for j in range(3)]
    s = sum(
        np.einsum("i,ia,ib,ic->abc", Y.kappa[:, j], e0, e1, e2, optimize=True) * (-1j * g.xi[j]) for j in range(3)
    )
    ion = crystal.form_factor * s / g.volume
    coup = 2.0 * crystal.e * np.sqrt(crystal.Z) if crystal.e != 0 else 0.0
    return ion - coup * forward(g, Y.psi1)


def quadratic_form(H: HessianMatrix, Y: Perturbation) -> float:
    """<Y, E''(S) Y> evaluated spectrally from the defining formula."""
    c = H.crystal
    g = c.grid
    kin = g.volume * float(np.sum(g.xi2 * (np.abs(forward(g, Y.psi1)) ** 2 + np.abs(forward(g, Y.psi2)) ** 2)))
    rho1 = _rho1_hat(c, H.point, Y)
    coul = g.volume * float(np.sum(g.inv_xi2 * np.abs(rho1) ** 2))
    return kin + coul + float(np.sum(Y.pi**2)) / c.M


def hessian_vector_product(crystal: Crystal, S: SolitaryPoint, Y: Perturbation) -> Perturbation:
    """E''(S) Y computed in real space: (-ΔPsi1 - 2 e sqrt Z phi1, -ΔPsi2, -(∇sigma_n, phi1)-type term, pi / M)."""
    g = crystal.grid
    phi1_hat = g.inv_xi2 * _rho1_hat(crystal, S, Y)
    coup = 2.0 * crystal.e * np.sqrt(crystal.Z) if crystal.e != 0 else 0.0
    lap1 = inverse(g, g.xi2 * forward(g, Y.psi1)).real
    lap2 = inverse(g, g.xi2 * forward(g, Y.psi2)).real
    h1 = lap1 - coup * inverse(g, phi1_hat).real
    a = crystal.sites + np.asarray(S.r, float)
    e0, e1, e2 = [np.exp(-1j * a[:, j, None] * g.xi1d[None, :]) for j in range(3)]
    w = np.conj(phi1_hat) * crystal.form_factor
    hk = np.empty_like(Y.kappa)
    for j, k in enumerate(g.xi):
        hk[:, j] = np.einsum("abc,ia,ib,ic->i", w * (-1j * k), e0, e1, e2, optimize=True).real
    return Perturbation(h1, lap2, hk, Y.pi / crystal.M)


def dense_hessian(crystal: Crystal, S: SolitaryPoint) -> np.ndarray:
    """Real symmetric matrix of E''(S) in an orthonormal basis, from Hessian-vector products.

    Field coordinates are grid values scaled by sqrt(h^3).  Intended for small grids.
    """
    g = crystal.grid
    nf, ni = g.size, g.N**3 * 3
    dim = 2 * nf + 2 * ni
    sw = np.sqrt(g.weight)
    out = np.empty((dim, dim))
    for col in range(dim):
        v = np.zeros(dim)
        v[col] = 1.0
        Y = Perturbation(
            v[:nf].reshape(g.shape) / sw,
            v[nf : 2 * nf].reshape(g.shape) / sw,
            v[2 * nf : 2 * nf + ni].reshape(-1, 3),
            v[2 * nf + ni :].reshape(-1, 3),
        )
        HY = hessian_vector_product(crystal, S, Y)
        out[:, col] = np.concatenate([HY.psi1.ravel() * sw, HY.psi2.ravel() * sw, HY.kappa.ravel(), HY.pi.ravel()])
    return 0.5 * (out + out.T)


def finite_difference_form(crystal: Crystal, S: SolitaryPoint, Y: Perturbation, eps: float = 1e-3) -> float:
    """(E(S + eps Y) + E(S - eps Y) - 2 E(S)) / eps^2."""
    E0 = energy(solitary_state(crystal, S))
    Ep = energy(Y.apply(crystal, S, eps))
    Em = energy(Y.apply(crystal, S, -eps))
    return (Ep + Em - 2 * E0) / eps**2


def remainder_exponent(H: HessianMatrix, Y: Perturbation, scales=None) -> tuple[float, np.ndarray, np.ndarray]:
    """Slope of log |E(S + sY) - s^2 <Y,E''Y> / 2| against log s, with Y normalized.

    Returns the fitted exponent together with the scales and remainders used.
    """
    scales = np.logspace(-3, -2, 6) if scales is None else np.asarray(scales, float)
    Y = Y.scaled(1.0 / Y.norm(H.grid))
    q = quadratic_form(H, Y)
    E0 = energy(solitary_state(H.crystal, H.point))
    rem = np.array([abs(energy(Y.apply(H.crystal, H.point, s)) - E0 - 0.5 * s * s * q) for s in scales])
    slope = np.polyfit(np.log(scales), np.log(rem), 1)[0]
    return float(slope), scales, rem


# ---- null space ----------------------------------------------------------------------------
@dataclass
class NullSpace:
    dimension: int
    tol: float
    by_theta: dict  # theta index -> kernel dimension of the (Psi1, kappa) block
    basis: list  # (label, vector) pairs in block coordinates
    span_residual: float  # largest distance of a kernel vector from span{(C, s̄, 0)}

    def to_json(self) -> dict:
        return {
            "dimension": self.dimension,
            "tol": self.tol,
            "by_theta": {",".join(map(str, k)): v for k, v in self.by_theta.items()},
            "basis": [
                {"label": lab, "re": np.real(v).tolist(), "im": np.imag(v).tolist()} for lab, v in self.basis
            ],
            "span_residual": self.span_residual,
        }


def null_space(H: HessianMatrix, tol: float | None = None) -> NullSpace:
    """Eigenvectors with eigenvalue below ``tol`` (default 1e-8 times the largest eigenvalue).

    The analytic kernel under the Wiener condition is spanned by constant
    Psi1 + i Psi2 and uniform translations kappa = s̄: in block coordinates,
    u at xi = 0 and kappa^ in the theta = 0 block, plus the constant Psi2 mode.
    """
    tol = KERNEL_RTOL * H.largest() if tol is None else tol
    basis, by_theta = [], {}
    worst = 0.0
    for b in H.blocks:
        k = b.eigenvalues < tol
        by_theta[b.theta_index] = int(k.sum())
        m = len(b.wave)
        allowed = np.zeros(m + 3, bool)
        if b.zero_mode is not None:
            allowed[b.zero_mode] = True
            allowed[m:] = True
        for v in b.eigenvectors[:, k].T:
            basis.append((f"block{b.theta_index}", v))
            worst = max(worst, float(np.linalg.norm(v[~allowed])))
    p2 = H.psi2_diag.ravel() < tol
    for i in np.flatnonzero(p2):
        v = np.zeros(H.psi2_diag.size)
        v[i] = 1.0
        basis.append(("psi2", v))
        if i != 0:
            worst = 1.0
    pi_k = int(np.sum(H.pi_diag < tol))
    dim = sum(by_theta.values()) + int(p2.sum()) + pi_k
    return NullSpace(dim, tol, by_theta, basis, worst)


def _zone(N: int):
    for j in itertools.product(range(N), repeat=3):
        if any(j):
            th = 2 * np.pi * np.asarray(j, float) / N
            yield j, th - 2 * np.pi * (th > np.pi)


def kernel_defect_dimension(
    sigma_model: IonDensityModel, N: int, M_max: int = 8, tol: float = DEGENERACY_TOL, details: bool = False
):
    """d = sum over theta in the discrete zone, theta != 0, of dim ker Sigma(theta).

    With ``details=True`` a list of (theta, dim) pairs is returned as well.
    """
    rows = []
    for _, th in _zone(N):
        W = wiener_matrix(sigma_model, th, M_max)
        rows.append((th, int(W.kernel(tol).shape[1])))
    d = sum(k for _, k in rows)
    return (d, rows) if details else d


# ---- constrained spectrum --------------------------------------------------------------------
@dataclass
class ConstrainedSpectrum:
    min_eig: float
    min_vector: np.ndarray
    min_label: tuple
    head: np.ndarray
    min_eig_h1: float
    head_h1: np.ndarray
    kernel_dimension: int
    fixed_r: bool


def constrained_spectrum(H: HessianMatrix, fixed_r: bool = False, n_head: int = 10, tol: float | None = None) -> ConstrainedSpectrum:
    """Spectrum of E''(S) on the normal space to the solitary manifold within the charge sphere.

    Removes the charge direction (constant Psi1), the gauge direction (constant
    Psi2) and, unless ``fixed_r``, the uniform translations.  Eigenvalues are
    reported for the plain l2 inner product and for the H1-weighted one, in which
    field modes carry weight 1 + |xi|^2.
    """
    tol = KERNEL_RTOL * H.largest() if tol is None else tol
    l2, h1 = [], []
    best = (np.inf, None, None)
    for b in H.blocks:
        m = len(b.wave)
        keep = np.ones(m + 3, bool)
        if b.zero_mode is not None:
            keep[b.zero_mode] = False
            if not fixed_r:
                keep[m:] = False
        X = b.factor[:, keep]
        ev, vec = gram_eigh(X)
        l2.append(ev)
        if ev[0] < best[0]:
            full = np.zeros(m + 3, dtype=complex)
            full[keep] = vec[:, 0]
            best = (float(ev[0]), full, ("block", b.theta_index))
        B = X.conj().T @ X
        wgt = np.concatenate([1.0 + np.sum(b.xi**2, axis=1), np.ones(3)])[keep]
        h1.append(eigh(0.5 * (B + B.conj().T), np.diag(wgt), eigvals_only=True))
    x2 = H.psi2_diag.ravel()[1:]
    l2 += [x2, H.pi_diag]
    h1 += [x2 / (1.0 + x2), H.pi_diag]
    if x2.min() < best[0]:
        best = (float(x2.min()), None, ("psi2", int(np.argmin(x2)) + 1))
    l2s = np.sort(np.concatenate(l2))
    h1s = np.sort(np.concatenate(h1))
    return ConstrainedSpectrum(
        float(l2s[0]), best[1], best[2], l2s[:n_head], float(h1s[0]), h1s[:n_head], int(np.sum(l2s < tol)), fixed_r
    )
