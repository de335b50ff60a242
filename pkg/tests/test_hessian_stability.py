import numpy as np
import pytest

from crystalstab.crystal_state import Perturbation, SolitaryPoint
from crystalstab.dynamics import random_perturbation
from crystalstab.hessian_stability import (
    assemble_hessian,
    constrained_spectrum,
    dense_hessian,
    finite_difference_form,
    hessian_vector_product,
    kernel_defect_dimension,
    null_space,
    quadratic_form,
    remainder_exponent,
)
from crystalstab.ion_models import box, gaussian_sinc, sheared_mix
from crystalstab.spectral_core import TorusGrid

S = SolitaryPoint(0.8, (0.15, -0.3, 0.45))
G = TorusGrid(2, 4)


@pytest.fixture(scope="module")
def sheared():
    return assemble_hessian(S, G, sheared_mix())


@pytest.fixture(scope="module")
def boxed():
    return assemble_hessian(S, G, box())


def _flat(Y, g):
    sw = np.sqrt(g.weight)
    return np.concatenate([Y.psi1.ravel() * sw, Y.psi2.ravel() * sw, Y.kappa.ravel(), Y.pi.ravel()])


def _direction(crystal, seed):
    Y = random_perturbation(crystal, np.random.default_rng(seed))
    Y.pi[:] = np.random.default_rng(seed + 100).standard_normal(Y.pi.shape)
    return Y


def test_block_spectrum_matches_dense_route(sheared):
    D = dense_hessian(sheared.crystal, S)
    dense = np.linalg.eigvalsh(D)
    blocks = np.sort(sheared.eigenvalues())
    assert len(dense) == len(blocks)
    assert np.max(np.abs(dense - blocks)) < 1e-10 * blocks[-1]


def test_three_routes_of_the_quadratic_form(sheared):
    crystal = sheared.crystal
    D = dense_hessian(crystal, S)
    for seed in range(5):
        Y = _direction(crystal, seed)
        q = quadratic_form(sheared, Y)
        v = _flat(Y, G)
        assert v @ D @ v == pytest.approx(q, rel=1e-10)
        HY = hessian_vector_product(crystal, S, Y)
        assert v @ _flat(HY, G) == pytest.approx(q, rel=1e-10)
        assert finite_difference_form(crystal, S, Y, 1e-3) == pytest.approx(q, rel=1e-4)


@pytest.mark.parametrize("model", [box(), gaussian_sinc()], ids=lambda m: m.kind)
def test_remainder_is_cubic(model):
    H = assemble_hessian(S, TorusGrid(2, 4), model)
    Y = _direction(H.crystal, 11)
    slope, scales, rem = remainder_exponent(H, Y)
    assert 2.7 <= slope <= 3.3


def test_analytic_kernel_vectors(sheared):
    crystal = sheared.crystal
    zf = np.zeros(G.shape)
    zi = np.zeros((8, 3))
    gauge = Perturbation(zf, np.ones(G.shape), zi, zi)
    trans = Perturbation(zf, zf, np.tile([0.3, -0.2, 0.5], (8, 1)), zi)
    for Y in (gauge, trans):
        HY = hessian_vector_product(crystal, S, Y)
        assert np.linalg.norm(_flat(HY, G)) < 1e-10


def test_null_space_dimension_wiener_model(sheared):
    assert kernel_defect_dimension(sheared_mix(), 2) == 0
    ns = null_space(sheared)
    assert ns.dimension == 5
    assert ns.span_residual < 1e-8


def test_null_space_dimension_box(boxed):
    d = kernel_defect_dimension(box(), 2)
    assert d > 0
    assert null_space(boxed).dimension == 5 + d


def test_constrained_spectrum(sheared, boxed):
    a = constrained_spectrum(sheared)
    assert a.min_eig > 1e-6 and a.kernel_dimension == 0
    b = constrained_spectrum(boxed)
    assert abs(b.min_eig) < 1e-8 and b.kernel_dimension > 0
    # fixing r keeps the three translations
    assert constrained_spectrum(sheared, fixed_r=True).kernel_dimension == 3


def test_kernel_json(boxed):
    js = null_space(boxed).to_json()
    assert js["dimension"] == null_space(boxed).dimension
    assert isinstance(js["by_theta"], dict)


def test_kernel_defect_details():
    d, rows = kernel_defect_dimension(box(), 2, details=True)
    assert d == sum(k for _, k in rows)
    assert len(rows) == 7
