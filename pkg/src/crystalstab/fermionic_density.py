"""One-particle density of superpositions of plane-wave Slater determinants on a torus.

A state on (T^d)^n, T^d = R^d / (N Z)^d, is

    psi(x_1, ..., x_n) = sum_K C(K) Lambda_K(x),
    Lambda_K(x) = (n!)^{-1/2} sum_pi sgn(pi) prod_j exp(i k_j . x_pi(j)),

with K = (k_1, ..., k_n) a set of distinct momenta in (2 pi / N) Z^d.  Each
determinant has squared norm |T|^n and distinct sets are orthogonal, so the
charge is Z = sum_K |C(K)|^2 |T|^n.

The reported density is the one-particle marginal

    rho(x) = int delta(x - x_1) |psi|^2 dx_1 ... dx_n,

which integrates to Z.  It is the constant Z / |T| plus cross terms from
pairs of sets that differ in exactly one momentum; pairs differing in two or
more momenta do not contribute.  Momenta are stored as integer vectors m with
k = 2 pi m / N, and each set is kept sorted lexicographically.  Sorting a set
multiplies its coefficient by the parity of the sorting permutation.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._parallel import parallel_map

__all__ = [
    "SlaterState",
    "TrigPolynomial",
    "permutation_parity",
    "check_pair_distance",
    "slater_density",
    "brute_force_density_oracle",
    "ORACLE_MAX_COST",
]

ORACLE_MAX_COST = 10**7


def permutation_parity(perm) -> int:
    """Sign (+1 or -1) of a permutation given as a sequence of 0..n-1."""
    perm = list(perm)
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def _canonical(momenta) -> tuple[tuple[tuple[int, ...], ...], int]:
    ks = [tuple(int(v) for v in k) for k in momenta]
    order = sorted(range(len(ks)), key=lambda i: ks[i])
    return tuple(ks[i] for i in order), permutation_parity(order)


@dataclass
class SlaterState:
    """Superposition of plane-wave Slater determinants.

    Parameters
    ----------
    d : int
        Torus dimension, 1 to 3.
    N : int
        Side length of the torus.
    terms : list of (complex, sequence of integer d-vectors)
        Coefficients and momentum sets; k = 2 pi m / N for each integer vector m.
    Z : float, optional
        If given, coefficients are rescaled so that sum |C|^2 |T|^n = Z.

    Attributes
    ----------
    sets : list of tuple
        Canonical (sorted) momentum sets, one per distinct set.
    coefficients : ndarray of complex
        Coefficients with the sorting parity folded in.
    """

    d: int
    N: int
    terms: list
    Z: float | None = None
    sets: list = field(init=False)
    coefficients: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError("d must be 1, 2 or 3")
        if self.N < 1:
            raise ValueError("N must be positive")
        if not self.terms:
            raise ValueError("a state needs at least one term")
        merged: dict = {}
        n = None
        for c, momenta in self.terms:
            momenta = [np.atleast_1d(np.asarray(k)).tolist() for k in momenta]
            if any(len(k) != self.d for k in momenta):
                raise ValueError(f"momenta must be {self.d}-vectors")
            if n is None:
                n = len(momenta)
            elif len(momenta) != n:
                raise ValueError("all terms must have the same particle count")
            key, sgn = _canonical(momenta)
            if len(set(key)) != len(key):
                raise ValueError(f"repeated momentum in {key}: the determinant vanishes")
            merged[key] = merged.get(key, 0.0) + sgn * complex(c)
        self.sets = list(merged)
        self.coefficients = np.array([merged[k] for k in self.sets], dtype=complex)
        if self.Z is not None:
            norm = self.charge()
            if norm == 0:
                raise ValueError("cannot normalize a zero state")
            self.coefficients *= math.sqrt(self.Z / norm)
        self.Z = self.charge()

    @property
    def n(self) -> int:
        return len(self.sets[0])

    @property
    def volume(self) -> float:
        return float(self.N**self.d)

    def charge(self) -> float:
        """sum |C|^2 |T|^n, the squared norm of psi."""
        return float(np.sum(np.abs(self.coefficients) ** 2) * self.volume**self.n)

    def momenta(self, i: int) -> np.ndarray:
        """Physical momenta of term i, shape (n, d)."""
        return 2 * np.pi * np.array(self.sets[i], dtype=float) / self.N

    # ---- JSON ----------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "N": self.N,
            "terms": [
                {"c": [float(c.real), float(c.imag)], "k": [list(k) for k in K]}
                for c, K in zip(self.coefficients, self.sets)
            ],
        }

    @classmethod
    def from_dict(cls, spec: dict, Z: float | None = None) -> "SlaterState":
        """Build from {"d": .., "N": .., "terms": [{"c": [re, im], "k": [[..], ..]}, ..]}.

        A top-level "Z" entry normalizes the state unless ``Z`` is passed.
        """
        try:
            d, N = int(spec["d"]), int(spec["N"])
            terms = [(complex(t["c"][0], t["c"][1]), t["k"]) for t in spec["terms"]]
        except (KeyError, TypeError, IndexError) as exc:
            raise ValueError(f"malformed Slater state spec: {exc!r}") from exc
        return cls(d, N, terms, Z if Z is not None else spec.get("Z"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "SlaterState":
        return cls.from_dict(json.loads(text))


def _difference(a, b) -> int:
    return len(set(a) - set(b))


def check_pair_distance(state: SlaterState) -> bool:
    """True iff every two distinct momentum sets differ in at least two momenta."""
    for a, b in itertools.combinations(state.sets, 2):
        if _difference(a, b) < 2:
            return False
    return True


@dataclass
class TrigPolynomial:
    """rho(x) = sum_j amplitudes[j] exp(i (2 pi / N) frequencies[j] . x)."""

    d: int
    N: int
    frequencies: np.ndarray
    amplitudes: np.ndarray

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.d)
        ph = np.exp(1j * (2 * np.pi / self.N) * (x @ self.frequencies.T))
        return ph @ self.amplitudes

    @property
    def constant(self) -> complex:
        hit = np.all(self.frequencies == 0, axis=1)
        return complex(self.amplitudes[hit].sum())

    def max_deviation(self) -> float:
        """sup |rho - mean| bound: sum of |amplitudes| of the nonzero frequencies.

        The bound is attained whenever the nonzero frequencies are few and
        independent (a single swap); :meth:`sampled_deviation` gives the value
        on a grid.
        """
        hit = np.all(self.frequencies == 0, axis=1)
        return float(np.abs(self.amplitudes[~hit]).sum())

    def sampled_deviation(self, points_per_unit: int = 16) -> float:
        g = np.arange(self.N * points_per_unit) / points_per_unit
        x = np.stack(np.meshgrid(*([g] * self.d), indexing="ij"), axis=-1)
        vals = self(x)
        return float(np.max(np.abs(vals - self.constant)))

    def integral(self) -> complex:
        return self.constant * self.N**self.d


def slater_density(state: SlaterState) -> TrigPolynomial:
    """One-particle density as a trigonometric polynomial.

    Diagonal terms give the constant Z / |T|.  For sets K = S + {k} and
    K' = S + {k'} the cross term is

        C(K) conj(C(K')) |T|^{n-1} s / n  exp(i (k - k') . x),

    with s = (-1)^(i + j), where i and j are the positions of k in K and of k'
    in K' (both sorted).  Pairs differing in two or more momenta drop out.
    """
    n, vol = state.n, state.volume
    freqs = {(0,) * state.d: state.Z / vol}
    for a, (Ka, ca) in enumerate(zip(state.sets, state.coefficients)):
        for b, (Kb, cb) in enumerate(zip(state.sets, state.coefficients)):
            if a == b:
                continue
            only_a = set(Ka) - set(Kb)
            if len(only_a) != 1:
                continue
            (k,) = only_a
            (kp,) = set(Kb) - set(Ka)
            s = (-1) ** (Ka.index(k) + Kb.index(kp))
            f = tuple(u - v for u, v in zip(k, kp))
            freqs[f] = freqs.get(f, 0.0) + ca * np.conj(cb) * vol ** (n - 1) * s / n
    keys = list(freqs)
    return TrigPolynomial(state.d, state.N, np.array(keys, dtype=int).reshape(-1, state.d), np.array([freqs[k] for k in keys], dtype=complex))


# ---- brute-force oracle -----------------------------------------------------------------------
def _oracle_point(args):
    state, x, quad_res = args
    n, d, N = state.n, state.d, state.N
    nodes = np.arange(quad_res) * (N / quad_res)
    others = np.stack(np.meshgrid(*([nodes] * (d * (n - 1))), indexing="ij"), axis=-1).reshape(-1, n - 1, d)
    X = np.concatenate([np.broadcast_to(np.asarray(x, float), (len(others), 1, d)), others], axis=1)
    psi = np.zeros(len(X), dtype=complex)
    perms = [(p, permutation_parity(p)) for p in itertools.permutations(range(n))]
    for i, c in enumerate(state.coefficients):
        k = state.momenta(i)
        E = np.exp(1j * np.einsum("ad,pbd->pab", k, X))  # E[p, a, b] = exp(i k_a . x_b)
        det = np.zeros(len(X), dtype=complex)
        for p, sgn in perms:
            term = np.ones(len(X), dtype=complex)
            for j in range(n):
                term = term * E[:, j, p[j]]
            det += sgn * term
        psi += c * det / math.sqrt(math.factorial(n))
    cell = (N / quad_res) ** (d * (n - 1))
    return float(np.sum(np.abs(psi) ** 2) * cell)


def brute_force_density_oracle(state: SlaterState, grid_points, quad_res: int = 8, workers: int | None = 1) -> np.ndarray:
    """Sample the one-particle density by explicit antisymmetrization and quadrature.

    psi is built from all n! permutations at every point and |psi|^2 is
    integrated over the other n-1 coordinates with the periodic trapezoid rule
    (quad_res nodes per axis and particle; exact once quad_res exceeds the
    largest momentum-index difference).

    Parameters
    ----------
    grid_points : array_like, shape (p, d) or (p,) for d = 1
    quad_res : int

    Raises
    ------
    ValueError
        If d > 2, n > 3 or the work quad_res^(d n) exceeds ``ORACLE_MAX_COST``.
    """
    if state.d > 2 or state.n > 3:
        raise ValueError("the oracle is limited to d <= 2 and n <= 3")
    cost = quad_res ** (state.d * state.n)
    if cost > ORACLE_MAX_COST:
        raise ValueError(f"oracle cost {cost} exceeds {ORACLE_MAX_COST}")
    pts = np.asarray(grid_points, dtype=float).reshape(-1, state.d)
    if state.n == 1:
        return np.array([abs(sum(c * np.exp(1j * state.momenta(i)[0] @ x) for i, c in enumerate(state.coefficients))) ** 2 for x in pts])
    return np.array(parallel_map(_oracle_point, [(state, x, quad_res) for x in pts], workers))
