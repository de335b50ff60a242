"""Ion charge densities with closed-form Fourier transforms, Jellium and Wiener checks.

The transform convention for a single ion is ``sigma^(xi) = ∫ exp(i xi.x) sigma(x) dx``
so that ``sigma^(0) = eZ``.  All shipped kinds are real and even, hence
``sigma^`` is real and even as well.

Kinds
-----
``box``            eZ times the indicator of [-1/2, 1/2)^3.
``smoothed_box``   k-fold self-convolution of the 1D indicator in every axis.
``gaussian_sinc``  the box smeared by a Gaussian of variance 2 in every axis
                   (transform ``2 sin(s/2)/s * exp(-s^2)`` per axis).
``sheared_mix``    average of tent products in unimodular sheared coordinates.
                   Jellium holds and, unlike the separable kinds, the lattice
                   sum Sigma(theta) has no kernel on the N = 2 and N = 4 zones.
``tabulated``      real-space samples on a cube; the transform is the FFT
                   quadrature of the samples, available on its frequency grid.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.linalg import qr, svd
from scipy.special import comb, erf

from .spectral_core import ComplexField, TorusGrid

__all__ = [
    "IonDensityModel",
    "WienerMatrix",
    "JelliumReport",
    "SpcReport",
    "DEFAULT_SHEARS",
    "box",
    "smoothed_box",
    "gaussian_sinc",
    "sheared_mix",
    "tabulated_gaussian",
    "model_from_config",
    "ion_fourier",
    "check_jellium",
    "check_spectral_condition",
    "periodized_density",
    "periodized_values",
    "wiener_matrix",
    "wiener_scan",
    "interior_theta_grid",
    "distance_to_dual_lattice",
    "DEGENERACY_TOL",
    "gram_eigh",
]

DEGENERACY_TOL = 1e-10
KINDS = ("box", "smoothed_box", "gaussian_sinc", "sheared_mix", "tabulated")

# Unimodular shears found by a greedy cover of the N = 4 Brillouin zone: for
# every theta = (pi/2) v, v != 0, some shear A has no component of A^T v
# divisible by 4, so that term of the mixture is nonzero on the whole coset.
DEFAULT_SHEARS = (
    ((-1, -1, -1), (-1, -1, 0), (-1, 0, -1)),
    ((-1, 0, 0), (0, -1, 0), (0, 0, -1)),
    ((-1, -1, 0), (-1, -1, -1), (0, 1, 1)),
    ((-1, -1, 0), (0, 1, -1), (-1, -1, -1)),
    ((-1, -1, 0), (-1, 0, -1), (0, -1, 0)),
    ((-1, -1, 0), (-1, 0, -1), (0, 0, -1)),
    ((-1, -1, 0), (0, 0, -1), (-1, 0, -1)),
)


def _box_hat(s):
    # 2 sin(s/2) / s, equal to 1 at s = 0
    return np.sinc(np.asarray(s, dtype=float) / (2.0 * np.pi))


def bspline(x, k: int):
    """Centered cardinal B-spline of order k (k-fold convolution of the indicator).

    Uses half-open support so that ``bspline(., 1)`` is the indicator of [-1/2, 1/2).
    """
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for j in range(k + 1):
        y = x + k / 2.0 - j
        if k == 1:
            term = (y >= 0).astype(float)
        else:
            term = np.where(y > 0, y, 0.0) ** (k - 1)
        out += (-1) ** j * comb(k, j, exact=True) * term
    out /= math.factorial(k - 1)
    if k > 1:
        out[np.abs(x) >= k / 2.0] = 0.0
    return out


def _gs_1d(x):
    return 0.5 * (erf((x + 0.5) / 2.0) - erf((x - 0.5) / 2.0))


@dataclass(frozen=True, eq=False)
class IonDensityModel:
    """Charge density of one ion.  Build instances with the module factories."""

    kind: str
    eZ: float = 1.0
    k: int = 1
    shears: tuple = ()
    table: np.ndarray | None = field(default=None, repr=False)
    table_length: float = 0.0
    interpolate: bool = False
    profile: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown ion model kind {self.kind!r}; expected one of {KINDS}")
        if not (self.eZ > 0):
            raise ValueError("eZ must be positive")
        if self.kind == "smoothed_box" and (int(self.k) != self.k or self.k < 1):
            raise ValueError("smoothed_box needs an integer k >= 1")

    # ---- descriptive properties -------------------------------------------------
    @property
    def separable(self) -> bool:
        return self.kind in ("box", "smoothed_box", "gaussian_sinc")

    @property
    def power(self) -> int:
        return self.k if self.kind == "smoothed_box" else 1

    @property
    def support_radius(self) -> float | None:
        """Sup-norm radius outside which sigma vanishes (None if not compact)."""
        if self.kind in ("box", "smoothed_box"):
            return self.power / 2.0
        if self.kind == "sheared_mix":
            return float(max(np.abs(np.array(a, float)).sum(axis=1).max() for a in self.shears))
        return None

    @property
    def decay_constant(self) -> float | None:
        """C with |sigma^(xi)| <= C (1 + |xi|^2)^-1, or None (box decays like |xi|^-1 on axes)."""
        if self.kind == "box" or (self.kind == "smoothed_box" and self.k == 1):
            return None
        if self.kind == "smoothed_box":
            return 13.0 * self.eZ
        if self.kind == "gaussian_sinc":
            return self.eZ
        if self.kind == "sheared_mix":
            worst = max(np.linalg.norm(np.linalg.inv(np.array(a, float)), 2) for a in self.shears)
            return self.eZ * (1.0 + 12.0 * worst**2)
        return None

    def config(self) -> dict:
        cfg: dict[str, Any] = {"kind": self.kind, "eZ": self.eZ}
        if self.kind == "smoothed_box":
            cfg["k"] = self.k
        if self.kind == "sheared_mix":
            cfg["shears"] = [list(map(list, a)) for a in self.shears]
        if self.kind == "tabulated":
            cfg.pop("eZ")
            cfg.update(profile="gaussian", interpolate=self.interpolate)
            cfg.update(dict(zip(("amplitude", "width", "length", "spacing"), self.profile)))
        return cfg

    # ---- Fourier side --------------------------------------------------------------
    def factor_hat(self, s):
        """1D transform factor of the separable kinds (normalized to 1 at 0)."""
        if self.kind == "box":
            return _box_hat(s)
        if self.kind == "smoothed_box":
            return _box_hat(s) ** self.k
        if self.kind == "gaussian_sinc":
            s = np.asarray(s, dtype=float)
            return _box_hat(s) * np.exp(-(s**2))
        raise ValueError(f"{self.kind} is not separable")

    def fourier(self, xi) -> np.ndarray:
        """sigma^(xi) for xi of shape (..., 3)."""
        xi = np.asarray(xi, dtype=float)
        if xi.shape[-1] != 3:
            raise ValueError("xi must have a trailing dimension of size 3")
        if self.separable:
            f = self.factor_hat
            return self.eZ * f(xi[..., 0]) * f(xi[..., 1]) * f(xi[..., 2]) + 0j
        if self.kind == "sheared_mix":
            out = np.zeros(xi.shape[:-1])
            for a in self.shears:
                s = xi @ np.array(a, float)  # components of A^T xi
                out = out + np.prod(_box_hat(s) ** 2, axis=-1)
            return self.eZ * out / len(self.shears) + 0j
        return self._tabulated_fourier(xi)

    def _tabulated_fourier(self, xi):
        table, L = self.table, self.table_length
        nt = table.shape[0]
        kf = xi * L / (2.0 * np.pi)
        k = np.rint(kf)
        on_grid = np.all(np.abs(kf - k) < 1e-9, axis=-1) & np.all(np.abs(k) < nt / 2, axis=-1)
        if not np.all(on_grid):
            if not self.interpolate:
                raise ValueError(
                    "tabulated density queried off its frequency grid (2 pi / L) Z^3 "
                    "inside the table band; construct the model with interpolate=True"
                )
            return self._direct_sum(xi)
        coeff = self._fft_table
        idx = k.astype(int) % nt
        vals = coeff[idx[..., 0], idx[..., 1], idx[..., 2]]
        sign = (-1.0) ** np.sum(k, axis=-1)
        return vals * sign

    @property
    def _fft_table(self):
        cached = self.__dict__.get("_fft_cache")
        if cached is None:
            nt = self.table.shape[0]
            ht = self.table_length / nt
            cached = np.fft.ifftn(self.table) * nt**3 * ht**3
            object.__setattr__(self, "_fft_cache", cached)
        return cached

    def _direct_sum(self, xi):
        nt = self.table.shape[0]
        ht = self.table_length / nt
        x1 = -self.table_length / 2 + ht * np.arange(nt)
        flat = xi.reshape(-1, 3)
        out = np.empty(len(flat), dtype=complex)
        for i, v in enumerate(flat):
            e = [np.exp(1j * v[j] * x1) for j in range(3)]
            out[i] = np.einsum("abc,a,b,c->", self.table, e[0], e[1], e[2]) * ht**3
        return out.reshape(xi.shape[:-1])

    # ---- real space ----------------------------------------------------------------
    def factor(self, x):
        """1D real-space factor of the separable kinds (unit mass)."""
        if self.kind in ("box", "smoothed_box"):
            return bspline(x, self.power)
        if self.kind == "gaussian_sinc":
            return _gs_1d(np.asarray(x, dtype=float))
        raise ValueError(f"{self.kind} is not separable")

    def density(self, x) -> np.ndarray:
        """sigma(x) for x of shape (..., 3)."""
        x = np.asarray(x, dtype=float)
        if self.separable:
            f = self.factor
            return self.eZ * f(x[..., 0]) * f(x[..., 1]) * f(x[..., 2])
        if self.kind == "sheared_mix":
            out = np.zeros(x.shape[:-1])
            for a in self.shears:
                ainv = np.linalg.inv(np.array(a, float))
                y = x @ ainv.T
                out = out + np.prod(bspline(y, 2), axis=-1) / abs(np.linalg.det(a))
            return self.eZ * out / len(self.shears)
        raise ValueError("tabulated densities are only available through periodized_density")

    # ---- lattice sums -----------------------------------------------------------------
    def bloch_sum_1d(self, theta):
        """S(theta) = sum_m |f^(theta + 2 pi m)|^2 for the separable 1D factor."""
        theta = np.asarray(theta, dtype=float)
        if self.kind in ("box", "smoothed_box"):
            # Poisson summation: sum_m |chi_k^|^2 = sum_n B_2k(n) e^{-i n theta}
            kk = 2 * self.power
            n = np.arange(1, self.power + 1)
            b = bspline(n.astype(float), kk)
            out = bspline(np.zeros(1), kk)[0] + 2.0 * np.sum(
                b[:, None] * np.cos(np.multiply.outer(n, theta.ravel())), axis=0
            )
            return out.reshape(theta.shape)
        m = np.arange(-40, 41)
        vals = np.abs(self.factor_hat(np.add.outer(theta, 2 * np.pi * m))) ** 2
        return vals.sum(axis=-1)


# ---- factories -------------------------------------------------------------------------
def box(eZ: float = 1.0) -> IonDensityModel:
    return IonDensityModel("box", eZ=eZ)


def smoothed_box(k: int, eZ: float = 1.0) -> IonDensityModel:
    return IonDensityModel("smoothed_box", eZ=eZ, k=int(k))


def gaussian_sinc(eZ: float = 1.0) -> IonDensityModel:
    return IonDensityModel("gaussian_sinc", eZ=eZ)


def sheared_mix(eZ: float = 1.0, shears: Sequence = DEFAULT_SHEARS) -> IonDensityModel:
    shears = tuple(tuple(tuple(int(v) for v in row) for row in a) for a in shears)
    for a in shears:
        if round(abs(np.linalg.det(np.array(a, float)))) != 1:
            raise ValueError("sheared_mix needs integer matrices with |det| = 1")
    return IonDensityModel("sheared_mix", eZ=eZ, shears=shears)


def tabulated_gaussian(
    amplitude: float = 1.0,
    width: float = 1.0,
    length: float = 8.0,
    spacing: float = 1.0 / 16,
    interpolate: bool = False,
) -> IonDensityModel:
    """Tabulate ``amplitude * exp(-|x|^2 / width^2)`` on [-L/2, L/2)^3.

    Generally not Jellium.  ``eZ`` is read off the tabulated zero mode.
    """
    nt = int(round(length / spacing))
    x = -length / 2 + spacing * np.arange(nt)
    g = np.exp(-(x**2) / width**2)
    table = amplitude * g[:, None, None] * g[None, :, None] * g[None, None, :]
    eZ = float(table.sum() * spacing**3)
    return IonDensityModel(
        "tabulated",
        eZ=eZ,
        table=table,
        table_length=float(length),
        interpolate=interpolate,
        profile=(float(amplitude), float(width), float(length), float(spacing)),
    )


def model_from_config(cfg: Mapping[str, Any]) -> IonDensityModel:
    """Build a model from ``{"kind": ..., "eZ": ..., "k": ...}`` (plus kind-specific keys)."""
    if not isinstance(cfg, Mapping):
        raise ValueError("ion model config must be a JSON object")
    kind = cfg.get("kind")
    if kind not in KINDS:
        raise ValueError(f"ion model 'kind' must be one of {KINDS}, got {kind!r}")
    eZ = float(cfg.get("eZ", 1.0))
    if kind == "box":
        return box(eZ)
    if kind == "smoothed_box":
        if "k" not in cfg:
            raise ValueError("smoothed_box requires 'k'")
        return smoothed_box(int(cfg["k"]), eZ)
    if kind == "gaussian_sinc":
        return gaussian_sinc(eZ)
    if kind == "sheared_mix":
        return sheared_mix(eZ, cfg.get("shears", DEFAULT_SHEARS))
    profile = cfg.get("profile", "gaussian")
    if profile != "gaussian":
        raise ValueError("tabulated models currently support profile 'gaussian' only")
    return tabulated_gaussian(
        amplitude=float(cfg.get("amplitude", 1.0)),
        width=float(cfg.get("width", 1.0)),
        length=float(cfg.get("length", 8.0)),
        spacing=float(cfg.get("spacing", 1.0 / 16)),
        interpolate=bool(cfg.get("interpolate", False)),
    )


def ion_fourier(model: IonDensityModel, xi) -> complex | np.ndarray:
    """sigma^(xi).  A single 3-vector gives a scalar."""
    xi = np.asarray(xi, dtype=float)
    out = model.fourier(xi)
    return complex(out) if xi.ndim == 1 else out


# ---- Jellium -------------------------------------------------------------------------------
@dataclass
class JelliumReport:
    max_abs: float
    worst_m: tuple
    window: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_abs < self.tol


def _lattice(window: int, exclude_zero: bool = True) -> np.ndarray:
    r = range(-window, window + 1)
    m = np.array(list(itertools.product(r, r, r)), dtype=float)
    if exclude_zero:
        m = m[np.any(m != 0, axis=1)]
    return m


def check_jellium(model: IonDensityModel, tol: float = 1e-12, window: int = 5) -> JelliumReport:
    """Evaluate sigma^(2 pi m) for 0 < |m|_inf <= window."""
    m = _lattice(window)
    vals = np.abs(model.fourier(2 * np.pi * m))
    i = int(np.argmax(vals))
    return JelliumReport(float(vals[i]), tuple(int(v) for v in m[i]), window, tol)


@dataclass
class SpcReport:
    axis_max: float
    plane_max: float
    tol: float

    @property
    def passed(self) -> bool:
        return max(self.axis_max, self.plane_max) < self.tol


def check_spectral_condition(
    model: IonDensityModel, tol: float = 1e-12, window: int = 4, samples: int = 256, seed: int = 0
) -> SpcReport:
    """Check sigma^ = 0 on {xi_3 in 2 pi Z \\ 0} (sampled) and on (2 pi Z^2 \\ 0) x {0}."""
    rng = np.random.default_rng(seed)
    m3 = np.array([m for m in range(-window, window + 1) if m != 0], dtype=float)
    xy = rng.uniform(-2 * np.pi * window, 2 * np.pi * window, size=(samples, 2))
    xi = np.concatenate(
        [np.column_stack([np.repeat(xy, len(m3), axis=0), np.tile(2 * np.pi * m3, samples)])]
    )
    axis_max = float(np.max(np.abs(model.fourier(xi))))
    r = range(-window, window + 1)
    pl = np.array([(a, b, 0) for a in r for b in r if (a, b) != (0, 0)], dtype=float) * 2 * np.pi
    plane_max = float(np.max(np.abs(model.fourier(pl))))
    return SpcReport(axis_max, plane_max, tol)


# ---- periodized density -----------------------------------------------------------------------
def _periodized_factor(model: IonDensityModel, x, period: float = 1.0, tail_tol: float = 1e-14):
    """1D sum_n s(x - n * period) over enough images; returns (values, tail estimate)."""
    if model.kind == "gaussian_sinc":
        R = int(np.ceil(16.0 / period)) + 1
        tail = float(1.0 - erf((R * period - 1.0) / 2.0))
    else:
        R = int(np.ceil(model.power / (2.0 * period))) + 1
        tail = 0.0
    n = np.arange(-R, R + 1) * period
    x = np.mod(np.asarray(x, float), period)
    vals = model.factor(np.subtract.outer(x, n)).sum(axis=-1)
    return vals, tail


def periodized_density(model: IonDensityModel, grid: TorusGrid, tol: float = 1e-8) -> ComplexField:
    """rho_i(x) = sum_n sigma(x - n) over all n in Z^3, sampled on ``grid``."""
    return ComplexField(grid, periodized_values(model, grid, tol), "real")


def periodized_values(model: IonDensityModel, grid: TorusGrid, tol: float = 1e-8) -> np.ndarray:
    """Real samples of the periodized density; see :func:`periodized_density`.

    Separable kinds sum images axis by axis; ``sheared_mix`` sums images within
    its compact support; ``tabulated`` folds its samples into the unit cell
    (requires the table spacing to be a divisor of the grid spacing).
    """
    x = grid.x1d
    if model.separable:
        f, tail = _periodized_factor(model, x)
        if tail > tol:
            raise ValueError(f"image truncation tail {tail:.2e} exceeds tolerance {tol:.2e}")
        return model.eZ * f[:, None, None] * f[None, :, None] * f[None, None, :]
    if model.kind == "sheared_mix":
        R = int(np.ceil(model.support_radius)) + 1
        cell = np.arange(grid.P) / grid.P
        pts = np.stack(np.meshgrid(cell, cell, cell, indexing="ij"), axis=-1)
        acc = np.zeros(pts.shape[:-1])
        for n in itertools.product(range(-R, R + 1), repeat=3):
            acc += model.density(pts - np.array(n, float))
        return np.tile(acc, (grid.N, grid.N, grid.N))
    nt = model.table.shape[0]
    ht = model.table_length / nt
    pt = int(round(1.0 / ht))
    if abs(pt * ht - 1.0) > 1e-12 or pt % grid.P != 0 or abs(model.table_length / 2 - round(model.table_length / 2)) > 1e-12:
        raise ValueError("tabulated density needs unit-cell aligned samples matching the grid")
    folded = model.table.reshape(nt // pt, pt, nt // pt, pt, nt // pt, pt).sum(axis=(0, 2, 4))
    # table index j corresponds to x = -L/2 + j ht; -L/2 is an integer so x mod 1 = j ht mod 1
    step = pt // grid.P
    cellvals = folded[::step, ::step, ::step]
    return np.tile(cellvals, (grid.N, grid.N, grid.N))


# ---- Wiener matrix -------------------------------------------------------------------------------
def distance_to_dual_lattice(theta) -> float | np.ndarray:
    """dist(theta, 2 pi Z^3)."""
    theta = np.asarray(theta, dtype=float)
    red = theta - 2 * np.pi * np.round(theta / (2 * np.pi))
    return np.linalg.norm(red, axis=-1)


@dataclass
class WienerMatrix:
    theta: np.ndarray
    matrix: np.ndarray
    sigma0: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    M_max: int
    tail_bound: float
    tail_kind: str

    def kernel(self, tol: float = DEGENERACY_TOL) -> np.ndarray:
        return self.eigenvectors[:, self.eigenvalues < tol]


def _tail_bound(model, theta, partial_trace_sum, M_max):
    if model.separable:
        full = model.eZ**2 * float(np.prod(model.bloch_sum_1d(theta)))
        return max(full - partial_trace_sum, 0.0), "exact"
    if model.kind == "sheared_mix":
        r = range(-4 * M_max, 4 * M_max + 1)
        m = np.array(list(itertools.product(r, r, r)), float)
        m = m[np.max(np.abs(m), axis=1) > M_max]
        xi = theta + 2 * np.pi * m
        # shell sum out to 4 M_max; the remainder decays like the fourth power of the shear-axis components
        return float(np.sum(np.abs(model.fourier(xi)) ** 2)), "estimate"
    r = range(-2 * M_max, 2 * M_max + 1)
    m = np.array(list(itertools.product(r, r, r)), float)
    m = m[np.max(np.abs(m), axis=1) > M_max]
    try:
        shell = float(np.sum(np.abs(model.fourier(theta + 2 * np.pi * m)) ** 2))
    except ValueError:
        shell = float("nan")
    return shell, "estimate"


def gram_eigh(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of X^T X for a tall X with strongly graded rows.

    Rows are sorted by decreasing norm and reduced by column-pivoted Householder
    QR; the singular values of the small triangular factor then carry relative
    accuracy even when the eigenvalues span many orders of magnitude (a plain
    eigensolver on X^T X only resolves them to about 1e-16 times the largest).
    """
    X = np.asarray(X)
    k = X.shape[1]
    X = X[np.argsort(-np.linalg.norm(X, axis=1), kind="stable")]
    R, piv = qr(X, mode="r", pivoting=True)
    R = R[:k]
    try:
        _, s, vt = np.linalg.svd(R)
    except np.linalg.LinAlgError:  # divide and conquer can stall on subnormal entries
        _, s, vt = svd(R, lapack_driver="gesvd")
    V = np.empty((k, k), dtype=vt.dtype)
    V[piv] = vt.conj().T
    order = np.argsort(s)
    return s[order] ** 2, V[:, order]


def wiener_matrix(model: IonDensityModel, theta, M_max: int = 8, exclusion: float = 1e-8) -> WienerMatrix:
    """Sigma(theta) = sum_{|m|_inf <= M_max} xi xi^T / |xi|^2 |sigma^(xi)|^2, xi = theta + 2 pi m."""
    theta = np.asarray(theta, dtype=float)
    if M_max < 2:
        raise ValueError("M_max must be at least 2")
    if distance_to_dual_lattice(theta) <= exclusion:
        raise ValueError(f"theta={theta.tolist()} lies within {exclusion:g} of the dual lattice 2 pi Z^3")
    m = _lattice(M_max, exclude_zero=False)
    xi = theta + 2 * np.pi * m
    w = np.abs(model.fourier(xi)) ** 2 / np.sum(xi**2, axis=1)
    mat = (xi * w[:, None]).T @ xi
    mat = 0.5 * (mat + mat.T)
    evals, evecs = gram_eigh(xi * np.sqrt(w)[:, None])
    tail, kind = _tail_bound(model, theta, float(np.sum(w * np.sum(xi**2, axis=1))), M_max)
    return WienerMatrix(theta, mat, float(evals[0]), evals, evecs, M_max, tail, kind)


def interior_theta_grid(n: int) -> np.ndarray:
    """n^3 points 2 pi (i + 1) / (n + 1), i < n, per axis: strictly inside (0, 2 pi)^3."""
    t = 2 * np.pi * (np.arange(n) + 1) / (n + 1)
    return np.array(list(itertools.product(t, t, t)))


def _scan_one(args):
    model, theta, M_max = args
    return wiener_matrix(model, theta, M_max).sigma0


def wiener_scan(
    model: IonDensityModel,
    theta_grid,
    M_max: int = 8,
    tol: float = DEGENERACY_TOL,
    exclusion: float = 1e-8,
    workers: int = 1,
) -> list[dict]:
    """Sigma_0 on every grid point; rows are flagged when Sigma_0 < tol."""
    from ._parallel import parallel_map

    theta_grid = np.atleast_2d(np.asarray(theta_grid, dtype=float))
    bad = distance_to_dual_lattice(theta_grid) <= exclusion
    if np.any(bad):
        raise ValueError(f"theta grid touches the dual lattice at {theta_grid[bad][0].tolist()}")
    s0 = parallel_map(_scan_one, [(model, t, M_max) for t in theta_grid], workers)
    return [
        {"theta1": t[0], "theta2": t[1], "theta3": t[2], "sigma0": s, "degenerate": bool(s < tol)}
        for t, s in zip(theta_grid, s0)
    ]
