import numpy as np
import pytest
from hypothesis import given, strategies as st

from crystalstab.crystal_state import (
    Crystal,
    CrystalState,
    Perturbation,
    SolitaryPoint,
    charge,
    charge_density,
    charge_parseval,
    distance_to_manifold,
    energy,
    energy_quadrature,
    energy_terms,
    force,
    solitary_state,
    torus_wrap,
)
from crystalstab.ion_models import box, gaussian_sinc, sheared_mix
from crystalstab.spectral_core import TorusGrid


def _random_state(crystal, rng, amp=0.1):
    g = crystal.grid
    S = solitary_state(crystal, SolitaryPoint(0.3, (0.1, 0.2, 0.3)))
    c = np.zeros(g.shape, complex)
    low = (np.abs(g.wave_index) <= 2)
    sel = low[:, None, None] & low[None, :, None] & low[None, None, :]
    c[sel] = amp * (rng.standard_normal(sel.sum()) + 1j * rng.standard_normal(sel.sum()))
    psi = S.psi + np.fft.ifftn(c) * g.size
    return CrystalState(crystal, psi, S.q + 0.05 * rng.standard_normal(S.q.shape), 0.1 * rng.standard_normal(S.q.shape))


@given(
    st.floats(0, 2 * np.pi),
    st.tuples(*[st.floats(-3, 3)] * 3),
    st.sampled_from(["box", "gaussian_sinc", "sheared_mix"]),
)
def test_solitary_states_have_zero_energy(alpha, r, kind):
    model = {"box": box, "gaussian_sinc": gaussian_sinc, "sheared_mix": sheared_mix}[kind]()
    crystal = Crystal(TorusGrid(2, 4), model)
    X = solitary_state(crystal, SolitaryPoint(alpha, r))
    assert abs(energy(X)) < 1e-12
    assert np.max(np.abs(force(X))) < 1e-12
    assert charge(X) == pytest.approx(crystal.Z * crystal.grid.volume)
    assert distance_to_manifold(X).d < 1e-10


def test_energy_spectral_matches_quadrature(rng):
    crystal = Crystal(TorusGrid(2, 8), gaussian_sinc())
    X = _random_state(crystal, rng)
    assert energy(X) == pytest.approx(energy_quadrature(X), rel=1e-8)
    terms = energy_terms(X)
    assert set(terms) == {"field", "coulomb", "ions"}
    assert all(v >= 0 for v in terms.values())
    assert charge(X) == pytest.approx(charge_parseval(X), rel=1e-12)


@pytest.mark.parametrize("model", [box(), sheared_mix()], ids=lambda m: m.kind)
def test_force_is_minus_energy_gradient(model, rng):
    crystal = Crystal(TorusGrid(2, 8), model)
    X = _random_state(crystal, rng)
    X.q += 0.2 * rng.standard_normal(X.q.shape)
    f = force(X)
    h = 1e-5
    for i, j in [(0, 0), (3, 1), (7, 2)]:
        Xp, Xm = X.copy(), X.copy()
        Xp.q[i, j] += h
        Xm.q[i, j] -= h
        fd = -(energy(Xp) - energy(Xm)) / (2 * h)
        assert abs(f[i, j]) > 1e-4
        assert f[i, j] == pytest.approx(fd, rel=1e-6)


def test_charge_density_neutral_at_ground_state():
    crystal = Crystal(TorusGrid(2, 4), box())
    rho = charge_density(solitary_state(crystal)).to_real().values
    assert np.max(np.abs(rho)) < 1e-12


def test_json_roundtrip(rng):
    crystal = Crystal(TorusGrid(2, 4), sheared_mix(), e=0.5, M=2.0)
    X = _random_state(crystal, rng)
    Y = CrystalState.from_json(X.to_json())
    assert np.array_equal(Y.psi, X.psi) and np.array_equal(Y.q, X.q) and np.array_equal(Y.p, X.p)
    assert Y.crystal.e == 0.5 and Y.crystal.M == 2.0
    assert energy(Y) == pytest.approx(energy(X), rel=1e-14)


def test_state_validation():
    crystal = Crystal(TorusGrid(2, 4), box())
    with pytest.raises(ValueError):
        CrystalState(crystal, np.zeros((4, 4, 4)), np.zeros((8, 3)), np.zeros((8, 3)))
    with pytest.raises(ValueError):
        CrystalState(crystal, np.zeros(crystal.grid.shape), np.zeros((7, 3)), np.zeros((8, 3)))
    with pytest.raises(ValueError):
        Crystal(TorusGrid(1, 2), box(), M=0.0)


def test_torus_wrap():
    y = np.array([0.0, 1.9, 2.1, -2.1, 4.0])
    w = torus_wrap(y, 4)
    assert np.all((w >= -2) & (w < 2))
    assert np.allclose(np.mod(w - y, 4), 0)


def test_distance_detects_translation_and_phase():
    crystal = Crystal(TorusGrid(2, 4), box())
    X = solitary_state(crystal, SolitaryPoint(5.9, (1.95, 0.0, 1.99)))
    dist = distance_to_manifold(X)
    assert dist.d < 1e-10
    assert np.allclose(np.mod(dist.r - [1.95, 0, 1.99] + 1, 2) - 1, 0, atol=1e-10)


def test_distance_of_ion_displacement(rng):
    crystal = Crystal(TorusGrid(2, 4), box())
    kappa = rng.standard_normal((8, 3)) * 1e-2
    X = Perturbation(np.zeros(crystal.grid.shape), np.zeros(crystal.grid.shape), kappa, np.zeros((8, 3))).apply(
        crystal, SolitaryPoint()
    )
    # the optimal translation is the mean displacement
    expected = np.linalg.norm(kappa - kappa.mean(axis=0))
    assert distance_to_manifold(X).d == pytest.approx(expected, rel=1e-8)


def test_energy_gauge_invariant(rng):
    crystal = Crystal(TorusGrid(2, 4), gaussian_sinc())
    X = _random_state(crystal, rng)
    Y = X.copy()
    Y.psi = Y.psi * np.exp(1.234j)
    assert energy(Y) == pytest.approx(energy(X), rel=1e-13)
