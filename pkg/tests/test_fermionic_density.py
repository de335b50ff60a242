import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from crystalstab.fermionic_density import (
    SlaterState,
    brute_force_density_oracle,
    check_pair_distance,
    permutation_parity,
    slater_density,
)

GRID_1D = np.linspace(0.0, 2.0, 17)[:-1]


def one_swap_state():
    return SlaterState(1, 2, [(1.0, [[0], [1]]), (0.6 - 0.3j, [[0], [2]])], Z=2.0)


def test_permutation_parity():
    assert permutation_parity([0, 1, 2]) == 1
    assert permutation_parity([1, 0, 2]) == -1
    assert permutation_parity([1, 2, 0]) == 1
    for p in itertools.permutations(range(4)):
        inversions = sum(p[i] > p[j] for i in range(4) for j in range(i + 1, 4))
        assert permutation_parity(p) == (-1) ** inversions


def test_pair_distance():
    single = SlaterState(1, 2, [(1.0, [[0], [1]])])
    assert check_pair_distance(single)
    assert not check_pair_distance(one_swap_state())
    disjoint = SlaterState(1, 2, [(1.0, [[0], [1]]), (1.0, [[2], [3]])])
    assert check_pair_distance(disjoint)


def test_state_validation_and_merging():
    with pytest.raises(ValueError):
        SlaterState(1, 2, [(1.0, [[1], [1]])])
    with pytest.raises(ValueError):
        SlaterState(1, 2, [(1.0, [[0], [1]]), (1.0, [[0], [1], [2]])])
    with pytest.raises(ValueError):
        SlaterState(2, 2, [(1.0, [[0], [1]])])
    with pytest.raises(ValueError):
        SlaterState(4, 2, [(1.0, [[0, 0, 0, 0]])])
    # reordering a set flips the sign, so these two terms cancel
    s = SlaterState(1, 2, [(1.0, [[0], [1]]), (1.0, [[1], [0]]), (1.0, [[2], [3]])])
    assert s.sets == [((0,), (1,)), ((2,), (3,))]
    assert s.coefficients[0] == 0


def test_single_determinant_density_is_constant():
    s = SlaterState(2, 3, [(1.0, [[0, 0], [1, -1], [2, 0]])], Z=3.0)
    rho = slater_density(s)
    assert len(rho.amplitudes) == 1
    assert rho.constant == pytest.approx(3.0 / 9.0)
    assert rho.max_deviation() == 0.0


def test_pair_distance_superposition_is_constant():
    s = SlaterState(1, 4, [(1.0, [[0], [1], [2]]), (0.3j, [[3], [4], [5]]), (-0.7, [[0], [4], [6]])], Z=3.0)
    assert check_pair_distance(s)
    rho = slater_density(s)
    assert rho.max_deviation() == 0.0
    assert rho.sampled_deviation(4) < 1e-12


def test_one_swap_breaks_uniformity():
    rho = slater_density(one_swap_state())
    assert rho.max_deviation() > 0
    assert rho.sampled_deviation() > 0.1 * rho.max_deviation()


def test_normalization_and_integral():
    s = SlaterState(2, 2, [(1.0, [[0, 0], [1, 0]]), (2.0, [[0, 0], [0, 1]])], Z=5.0)
    assert s.charge() == pytest.approx(5.0)
    rho = slater_density(s)
    assert rho.integral() == pytest.approx(5.0, abs=1e-8)


@pytest.mark.parametrize(
    "state",
    [
        SlaterState(1, 2, [(1.0, [[0], [1]])], Z=2.0),
        one_swap_state(),
        SlaterState(1, 3, [(1.0, [[0], [1], [2]]), (0.5j, [[0], [1], [-1]]), (0.2, [[0], [3], [-1]])], Z=3.0),
    ],
    ids=["single", "one-swap", "three-particles"],
)
def test_oracle_agreement_1d(state):
    rho = slater_density(state)
    ref = brute_force_density_oracle(state, GRID_1D, quad_res=12)
    vals = rho(GRID_1D[:, None])
    assert np.max(np.abs(vals.imag)) < 1e-10
    assert np.min(vals.real) > -1e-10
    assert np.max(np.abs(vals.real - ref)) < 1e-6


def test_oracle_agreement_2d():
    s = SlaterState(2, 2, [(1.0, [[0, 0], [1, 0]]), (0.4 - 0.2j, [[0, 0], [0, 1]]), (0.3, [[1, 1], [1, 0]])], Z=2.0)
    pts = np.random.default_rng(5).uniform(0, 2, size=(12, 2))
    ref = brute_force_density_oracle(s, pts, quad_res=6)
    assert np.max(np.abs(slater_density(s)(pts).real - ref)) < 1e-6


def test_single_particle_oracle():
    s = SlaterState(1, 2, [(1.0, [[0]]), (1.0, [[1]])], Z=1.0)
    ref = brute_force_density_oracle(s, GRID_1D)
    assert np.max(np.abs(slater_density(s)(GRID_1D[:, None]).real - ref)) < 1e-12


@given(st.floats(0, 2 * np.pi))
def test_global_phase_invariance(phase):
    base = one_swap_state()
    turned = SlaterState(1, 2, [(c * np.exp(1j * phase), K) for c, K in zip(base.coefficients, base.sets)])
    a = slater_density(base)(GRID_1D[:, None])
    b = slater_density(turned)(GRID_1D[:, None])
    assert np.allclose(a, b, atol=1e-12)


def test_oracle_guards():
    with pytest.raises(ValueError):
        brute_force_density_oracle(SlaterState(3, 2, [(1.0, [[0, 0, 0]])]), [[0, 0, 0]])
    with pytest.raises(ValueError):
        brute_force_density_oracle(SlaterState(1, 2, [(1.0, [[0], [1], [2], [3]])]), [0.0])
    with pytest.raises(ValueError):
        brute_force_density_oracle(SlaterState(2, 2, [(1.0, [[0, 0], [1, 0], [0, 1]])]), [[0, 0]], quad_res=20)


def test_json_round_trip():
    s = one_swap_state()
    t = SlaterState.from_json(s.to_json())
    assert t.sets == s.sets
    assert np.allclose(t.coefficients, s.coefficients)
    u = SlaterState.from_dict({"d": 1, "N": 2, "Z": 4.0, "terms": [{"c": [1, 0], "k": [[0], [1]]}]})
    assert u.Z == pytest.approx(4.0)
    with pytest.raises(ValueError):
        SlaterState.from_dict({"d": 1, "terms": []})
