import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from crystalstab.ion_models import (
    box,
    check_jellium,
    check_spectral_condition,
    distance_to_dual_lattice,
    gaussian_sinc,
    gram_eigh,
    interior_theta_grid,
    ion_fourier,
    model_from_config,
    periodized_values,
    sheared_mix,
    smoothed_box,
    tabulated_gaussian,
    wiener_matrix,
    wiener_scan,
)
from crystalstab.spectral_core import TorusGrid

JELLIUM = [box(), smoothed_box(2), smoothed_box(3), gaussian_sinc(), sheared_mix()]


@pytest.mark.parametrize("model", JELLIUM, ids=lambda m: m.kind + str(m.power if m.kind == "smoothed_box" else ""))
def test_jellium_models(model):
    rep = check_jellium(model, tol=1e-12, window=5)
    assert rep.passed, rep
    assert ion_fourier(model, [0.0, 0.0, 0.0]) == pytest.approx(model.eZ)


def test_box_transform_closed_form():
    xi = np.array([0.7, -1.3, 2.9])
    expected = np.prod(2 * np.sin(xi / 2) / xi)
    assert ion_fourier(box(2.5), xi) == pytest.approx(2.5 * expected)
    # smoothed boxes are powers of the box factor
    assert ion_fourier(smoothed_box(3), xi) == pytest.approx(expected**3)


@pytest.mark.parametrize("model", [gaussian_sinc(), sheared_mix()], ids=lambda m: m.kind)
def test_transform_matches_real_space_quadrature(model):
    # independent route: integrate exp(i xi.x) sigma(x) along a 1D slice for separable, full 3D otherwise
    xi = np.array([1.1, -0.4, 0.8])
    if model.separable:
        vals = []
        for s in xi:
            re = integrate.quad(lambda x: np.cos(s * x) * model.factor(np.array(x)), -12, 12, limit=400)[0]
            vals.append(re)
        ref = model.eZ * np.prod(vals)
    else:
        h = 1 / 24
        t = np.arange(-3 + h / 2, 3, h)
        X = np.stack(np.meshgrid(t, t, t, indexing="ij"), -1)
        ref = np.sum(np.exp(1j * X @ xi) * model.density(X)) * h**3
    assert ion_fourier(model, xi) == pytest.approx(ref, abs=2e-4)


def test_tabulated_is_not_jellium():
    m = tabulated_gaussian(width=0.6)
    assert not check_jellium(m, tol=1e-10).passed
    with pytest.raises(ValueError):
        m.fourier(np.array([[0.1, 0.0, 0.0]]))
    mi = tabulated_gaussian(width=0.6, interpolate=True)
    # interpolated route agrees with the continuous Gaussian transform (width^2 pi)^{3/2} exp(-w^2 |xi|^2 / 4)
    xi = np.array([0.3, 0.2, -0.1])
    ref = (0.36 * np.pi) ** 1.5 * np.exp(-0.36 * xi @ xi / 4)
    assert abs(mi.fourier(xi[None])[0] - ref) < 1e-8


@pytest.mark.parametrize("model", JELLIUM[:4] + [sheared_mix()], ids=lambda m: m.kind)
def test_periodized_density_flat(model):
    g = TorusGrid(2, 8) if model.kind == "sheared_mix" else TorusGrid(4, 12)
    vals = periodized_values(model, g)
    assert np.max(np.abs(vals - model.eZ)) < 1e-8


def test_tabulated_periodized_density_not_flat():
    m = tabulated_gaussian(width=0.6)
    vals = periodized_values(m, TorusGrid(1, 8))
    assert np.max(np.abs(vals - m.eZ)) > 1e-4
    assert np.mean(vals) == pytest.approx(m.eZ, rel=1e-10)


def test_spectral_condition():
    assert check_spectral_condition(box()).passed
    assert check_spectral_condition(smoothed_box(2)).passed
    assert not check_spectral_condition(sheared_mix()).passed


def test_box_wiener_degenerate():
    W = wiener_matrix(box(), [0.0, np.pi, np.pi])
    assert W.sigma0 < 1e-10
    K = W.kernel()
    assert K.shape[1] >= 1
    e1 = np.array([1.0, 0, 0])
    assert np.linalg.norm(e1 - K @ (K.T @ e1)) < 1e-8


def test_wiener_matrix_properties(rng):
    for model in (box(), gaussian_sinc(), sheared_mix()):
        th = rng.uniform(0.2, 2 * np.pi - 0.2, 3)
        W = wiener_matrix(model, th)
        assert np.allclose(W.matrix, W.matrix.T, atol=1e-15)
        assert np.all(W.eigenvalues >= 0)
        assert np.allclose(np.sort(np.linalg.eigvalsh(W.matrix)), W.eigenvalues, atol=1e-12 * W.eigenvalues[-1])
        # inversion symmetry sigma^(-xi) = conj sigma^(xi)
        assert np.allclose(wiener_matrix(model, -th).matrix, W.matrix, atol=1e-14)


def test_wiener_trace_identity():
    # trace Sigma = sum |sigma^|^2; the separable kinds have it in closed form
    th = np.array([0.9, 2.1, 4.0])
    for model in (box(), smoothed_box(2)):
        W = wiener_matrix(model, th, M_max=12)
        closed = model.eZ**2 * np.prod(model.bloch_sum_1d(th))
        assert np.trace(W.matrix) + W.tail_bound == pytest.approx(closed, rel=1e-12)
        assert W.tail_bound < 5e-2 * closed  # box decays only like |xi|^-2 per axis


def test_wiener_rejects_dual_lattice():
    with pytest.raises(ValueError):
        wiener_matrix(box(), [2 * np.pi, 0, 0])
    with pytest.raises(ValueError):
        wiener_scan(box(), [[0.0, 0.0, 0.0]])


def test_wiener_scan_flags_planes():
    rows = wiener_scan(box(), [[0.0, np.pi, np.pi], [np.pi, np.pi, np.pi], [1.0, 2.0, 3.0]])
    assert [r["degenerate"] for r in rows] == [True, False, False]


def test_interior_grid():
    g = interior_theta_grid(4)
    assert g.shape == (64, 3)
    assert np.all(distance_to_dual_lattice(g) > 1.0)
    assert distance_to_dual_lattice([2 * np.pi, -2 * np.pi, 0.1]) == pytest.approx(0.1)


@given(st.integers(2, 6), st.floats(1.0, 12.0), st.integers(0, 2**32 - 1))
def test_gram_eigh_relative_accuracy(k, spread, seed):
    r = np.random.default_rng(seed)
    X = r.standard_normal((40, k)) * np.logspace(0, -spread, 40)[:, None]
    lam, V = gram_eigh(X)
    G = X.T @ X
    assert np.allclose(V.T @ V, np.eye(k), atol=1e-10)
    # residuals relative to each eigenvalue's own scale
    for j in range(k):
        res = np.linalg.norm(G @ V[:, j] - lam[j] * V[:, j])
        assert res <= 1e-9 * max(lam[-1], 1e-300)


def test_model_from_config():
    assert model_from_config({"kind": "box", "eZ": 2.0}).eZ == 2.0
    assert model_from_config({"kind": "smoothed_box", "k": 2}).power == 2
    with pytest.raises(ValueError):
        model_from_config({"kind": "smoothed_box"})
    with pytest.raises(ValueError):
        model_from_config({"kind": "cube"})
    with pytest.raises(ValueError):
        model_from_config([1, 2])
