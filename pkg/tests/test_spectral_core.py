import numpy as np
import pytest
from hypothesis import given, strategies as st

from crystalstab.spectral_core import (
    ComplexField,
    TorusGrid,
    forward,
    fourier_transform,
    gradient,
    half_green,
    inverse,
    l2_inner,
    poisson_green,
)


def test_grid_basics():
    g = TorusGrid(2, 4)
    assert g.n == 8 and g.shape == (8, 8, 8)
    assert g.volume == 8.0
    assert g.weight == pytest.approx(1 / 64)
    # Nyquist index sits on the positive side
    assert g.wave_index[4] == 4
    assert g.xi1d[4] == pytest.approx(np.pi * g.P)
    assert g.inv_xi2[0, 0, 0] == 0.0
    assert g.ion_sites().shape == (8, 3)


@pytest.mark.parametrize("N,P", [(0, 4), (2, 0), (1.5, 2)])
def test_grid_rejects_bad_sizes(N, P):
    with pytest.raises(ValueError):
        TorusGrid(N, P)


@given(st.integers(1, 3), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_roundtrip_and_parseval(N, P, seed):
    g = TorusGrid(N, P)
    r = np.random.default_rng(seed)
    f = r.standard_normal(g.shape) + 1j * r.standard_normal(g.shape)
    c = forward(g, f)
    assert np.allclose(inverse(g, c), f, atol=1e-12)
    lhs = np.sum(np.abs(f) ** 2) * g.weight
    assert lhs == pytest.approx(g.volume * np.sum(np.abs(c) ** 2), rel=1e-12)
    assert l2_inner(g, f, f).real == pytest.approx(lhs, rel=1e-12)


def test_plane_wave_coefficient():
    g = TorusGrid(2, 4)
    x = g.points
    k = np.array([1, -2, 3])
    f = np.exp(1j * (2 * np.pi / g.N) * x @ k)
    c = forward(g, f)
    idx = tuple(np.flatnonzero(g.wave_index == v)[0] for v in k)
    assert c[idx] == pytest.approx(1.0)
    assert np.sum(np.abs(c)) == pytest.approx(1.0)


def test_poisson_green_inverts_laplacian(rng):
    g = TorusGrid(2, 8)
    x = g.points
    rho = np.cos(np.pi * x[..., 0]) * np.sin(2 * np.pi * x[..., 1]) + 0.3 * np.cos(np.pi * x[..., 2])
    phi = poisson_green(ComplexField(g, rho)).values
    lap = inverse(g, -g.xi2 * forward(g, phi))
    assert np.allclose(-lap, rho, atol=1e-12)


def test_green_is_half_green_squared(rng):
    g = TorusGrid(2, 4)
    f = ComplexField(g, rng.standard_normal(g.shape))
    a = poisson_green(f).values
    b = half_green(half_green(f)).values
    assert np.allclose(a, b, atol=1e-12)


def test_green_drops_zero_mode():
    g = TorusGrid(1, 4)
    phi = poisson_green(ComplexField(g, np.ones(g.shape))).values
    assert np.allclose(phi, 0)


def test_layout_switch_and_norm(rng):
    g = TorusGrid(1, 6)
    f = ComplexField(g, rng.standard_normal(g.shape))
    F = fourier_transform(f)
    assert F.layout == "fourier"
    assert F.norm() == pytest.approx(f.norm(), rel=1e-12)
    assert np.allclose(F.to_real().values, f.values)
    with pytest.raises(ValueError):
        fourier_transform(F, "forward")
    with pytest.raises(ValueError):
        ComplexField(g, np.full(g.shape, np.nan))
    with pytest.raises(ValueError):
        ComplexField(g, np.zeros((2, 2, 2)))


def test_gradient_of_plane_wave():
    g = TorusGrid(2, 4)
    x = g.points
    f = np.sin(np.pi * x[..., 1])
    d = gradient(g, f)
    assert np.allclose(d[1], np.pi * np.cos(np.pi * x[..., 1]), atol=1e-12)
    assert np.allclose(d[0], 0, atol=1e-12)
