import numpy as np
import pytest

from crystalstab.crystal_state import Crystal, CrystalState, energy
from crystalstab.ground_states import (
    NonJelliumWarning,
    cell_hamiltonian,
    minimize_energy_per_cell,
    nonperiodic_arrangement,
    periodic_ground_state,
    verify_flat_density,
)
from crystalstab.ion_models import box, gaussian_sinc, sheared_mix, smoothed_box, tabulated_gaussian
from crystalstab.spectral_core import TorusGrid, l2_inner


def test_periodic_ground_state_zero_energy():
    X = periodic_ground_state(0.4, [0.1, 0.2, 0.3], 2.0, TorusGrid(2, 4), gaussian_sinc(3.0))
    assert X.crystal.e == pytest.approx(1.5)
    assert abs(energy(X)) < 1e-12
    assert np.allclose(np.abs(X.psi) ** 2, 2.0)


def test_non_jellium_warns():
    with pytest.warns(NonJelliumWarning):
        X = periodic_ground_state(0.0, [0, 0, 0], 1.0, TorusGrid(1, 8), tabulated_gaussian(width=0.6))
    assert energy(X) > 1e-6


def test_bad_charge():
    with pytest.raises(ValueError):
        periodic_ground_state(0.0, [0, 0, 0], 0.0, TorusGrid(1, 4), box())


@pytest.mark.parametrize("model", [box(), smoothed_box(2)], ids=lambda m: m.kind)
def test_box_shear_is_flat(model):
    g = TorusGrid(4, 4)
    arr = nonperiodic_arrangement("box_shear", 4, (0.1, 0.2, 0.3), model=model, seed=7)
    # genuinely non-periodic: the column offsets differ
    assert np.ptp(arr.q[:, 2]) > 0.5
    rep = verify_flat_density(arr.q, model, g)
    assert rep.passed, rep


def test_spectral_arrangement_with_constant_columns_is_flat():
    a1 = np.full((4, 4), 0.37)
    a2 = np.full((4, 4), 1.21)
    arr = nonperiodic_arrangement("spectral", 4, (0, 0, 0.5), a1=a1, a2=a2, model=box())
    assert verify_flat_density(arr.q, box(), TorusGrid(4, 4)).passed


def test_spectral_arrangement_with_arbitrary_columns_leaks_in_plane():
    # the lattice sum only cancels off the plane xi_3 = 0; in that plane sigma^ is
    # nonzero away from 2 pi Z^2 and arbitrary (a1, a2) leave a residue
    arr = nonperiodic_arrangement("spectral", 4, (0, 0, 0.5), model=box(), seed=1)
    rep = verify_flat_density(arr.q, box(), TorusGrid(4, 4))
    assert not rep.passed
    assert rep.worst_xi_index[2] == 0
    g = TorusGrid(4, 4)
    pos = g.ion_sites() + arr.q
    k = g.xi1d
    e = [np.exp(1j * pos[:, j, None] * k[None, :]) for j in range(3)]
    s = np.einsum("ia,ib,ic->abc", *e)
    off_plane = np.abs(s[:, :, (g.wave_index % 4) != 0])
    assert off_plane.max() < 1e-12


def test_random_arrangement_not_flat(rng):
    q = rng.uniform(-0.5, 0.5, (8, 3))
    assert not verify_flat_density(q, box(), TorusGrid(2, 4)).passed


def test_arrangement_errors():
    with pytest.raises(ValueError):
        nonperiodic_arrangement("spectral", 2)
    with pytest.raises(ValueError):
        nonperiodic_arrangement("box_shear", 2, model=sheared_mix())
    with pytest.raises(ValueError):
        nonperiodic_arrangement("twist", 2, model=box())


def test_cell_hamiltonian_is_energy_gradient(rng):
    g = TorusGrid(1, 8)
    crystal = Crystal(g, tabulated_gaussian(width=0.6), e=0.5)
    zeros = np.zeros((1, 3))
    psi = 1.0 + 0.2 * (rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))
    v = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
    h = 1e-5
    Ep = energy(CrystalState(crystal, psi + h * v, zeros, zeros))
    Em = energy(CrystalState(crystal, psi - h * v, zeros, zeros))
    dE = (Ep - Em) / (2 * h)
    assert dE == pytest.approx(2 * l2_inner(g, cell_hamiltonian(crystal, psi), v).real, rel=1e-7)


def test_minimizer_jellium_reaches_constant():
    res = minimize_energy_per_cell(box(), 1.0, TorusGrid(1, 8), "random", 2000, seed=3)
    assert res.converged
    assert res.energy < 1e-10 and abs(res.omega0) < 1e-8
    assert np.ptp(np.abs(res.psi)) < 1e-4
    assert np.mean(np.abs(res.psi) ** 2) == pytest.approx(1.0, rel=1e-12)
    E = [h[1] for h in res.history]
    assert all(b <= a + 1e-15 for a, b in zip(E, E[1:]))


def test_minimizer_non_jellium_eigenproblem():
    model = tabulated_gaussian(width=0.6)
    res = minimize_energy_per_cell(model, 1.0, TorusGrid(1, 8), "random", 5000, seed=0)
    assert res.converged
    assert res.residual < 1e-6
    assert abs(res.omega0_imag) < 1e-12
    assert res.energy > 0
    # the constant field is not stationary here
    const = minimize_energy_per_cell(model, 1.0, TorusGrid(1, 8), "constant", 0)
    assert const.residual > 1e-4


def test_minimizer_constant_start_is_immediate_for_jellium():
    res = minimize_energy_per_cell(gaussian_sinc(), 2.0, TorusGrid(1, 4), "constant", 10)
    assert res.converged and res.iterations <= 1
    assert res.energy < 1e-12
