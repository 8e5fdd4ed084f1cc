import numpy as np
import pytest

from summlab.distance import (gauss_map_inverse, make_builtin,
                              make_user_supplied, to_cosphere,
                              verify_homogeneity)

BUILTINS = [
    ("euclidean", {}),
    ("bochner_riesz", {}),
    ("smooth_power_mean", {"m": 2}),
]


def test_builtin_values():
    rho = make_builtin("euclidean", 2)
    assert rho(np.array([3.0, 4.0])) == pytest.approx(5.0)
    br = make_builtin("bochner_riesz", 2)
    xi = np.array([3.0, 4.0])
    assert br(xi) == pytest.approx(25.0)
    # homogeneity with b = 1/2: rho(t^b xi) = t rho(xi)
    assert br(np.sqrt(2.0) * xi) == pytest.approx(2.0 * 25.0)
    pm = make_builtin("smooth_power_mean", 2, m=2)
    assert pm(np.array([1.0, 1.0])) == pytest.approx(2.0 ** 0.25)


def test_bad_arguments():
    with pytest.raises(ValueError):
        make_builtin("euclidean", 0)
    with pytest.raises(ValueError):
        make_builtin("triangle", 2)


@pytest.mark.parametrize("kind,kw", BUILTINS)
def test_homogeneity_sampled(kind, kw):
    rho = make_builtin(kind, 2, **kw)
    assert verify_homogeneity(rho, n_samples=100) <= 1e-8


@pytest.mark.parametrize("kind,kw", BUILTINS)
def test_positivity_on_rays(kind, kw):
    rho = make_builtin(kind, 3 if kind != "smooth_power_mean" else 2, **kw)
    rng = np.random.default_rng(1)
    xi = rng.normal(size=(50, rho.d))
    assert np.all(rho(xi) > 0)
    # continuity at 0 along rays, forced by homogeneity
    for s in (1e-2, 1e-4, 1e-8):
        assert np.all(rho((s ** rho.b) * xi) <= s * rho(xi) * (1 + 1e-12))


def test_to_cosphere():
    eu = make_builtin("euclidean", 2)
    cp = to_cosphere(eu, np.array([2.0, 0.0]))
    np.testing.assert_allclose(cp.point, [1.0, 0.0], atol=1e-14)
    br = make_builtin("bochner_riesz", 2)
    cp = to_cosphere(br, np.array([0.0, 3.0]))
    np.testing.assert_allclose(cp.point, [0.0, 1.0], atol=1e-14)
    pm = make_builtin("smooth_power_mean", 2, m=2)
    cp = to_cosphere(pm, np.array([1.0, 1.0]))
    np.testing.assert_allclose(cp.point, 2.0 ** -0.25 * np.ones(2), atol=1e-12)
    assert abs(pm(cp.point) - 1.0) <= 1e-10
    assert abs(np.linalg.norm(cp.normal) - 1.0) <= 1e-12


def test_to_cosphere_rejects_zero():
    eu = make_builtin("euclidean", 2)
    with pytest.raises(ValueError):
        to_cosphere(eu, np.zeros(2))


def test_gauss_map_inverse_builtins():
    eu = make_builtin("euclidean", 2)
    cp = gauss_map_inverse(eu, np.array([0.0, 5.0]))
    np.testing.assert_allclose(cp.point, [0.0, 1.0], atol=1e-10)
    br = make_builtin("bochner_riesz", 2)
    cp = gauss_map_inverse(br, np.array([3.0, 4.0]))
    np.testing.assert_allclose(cp.point, [0.6, 0.8], atol=1e-10)
    pm = make_builtin("smooth_power_mean", 2, m=2)
    x = np.array([1.0, 2.0])
    cp = gauss_map_inverse(pm, x)
    xhat = x / np.linalg.norm(x)
    assert np.linalg.norm(cp.normal - xhat) <= 1e-10
    assert abs(pm(cp.point) - 1.0) <= 1e-10


@pytest.mark.parametrize("kind,kw", BUILTINS)
def test_gauss_map_inverts_normal(kind, kw):
    rho = make_builtin(kind, 2, **kw)
    rng = np.random.default_rng(2)
    for v in rng.normal(size=(100, 2)):
        if np.linalg.norm(v) < 1e-3:
            continue
        star = to_cosphere(rho, v)
        back = gauss_map_inverse(rho, star.normal)
        assert np.linalg.norm(back.point - star.point) <= 1e-8


@pytest.mark.parametrize("kind,kw", BUILTINS)
def test_gradient_matches_differences(kind, kw):
    rho = make_builtin(kind, 2, **kw)
    rng = np.random.default_rng(3)
    xi = rng.normal(size=(60, 2))
    xi = xi[np.linalg.norm(xi, axis=1) > 0.3]
    g = rho.grad(xi)
    h = 1e-6
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd = (rho(xi + e) - rho(xi - e)) / (2 * h)
        np.testing.assert_allclose(g[:, i], fd, rtol=1e-5, atol=1e-8)


def test_user_supplied_accept_and_reject():
    good = make_user_supplied(lambda xi: np.linalg.norm(xi, axis=-1) ** 2,
                              d=2, b=0.5)
    assert good.b == 0.5
    with pytest.raises(ValueError):
        make_user_supplied(lambda xi: np.linalg.norm(xi, axis=-1) ** 2,
                           d=2, b=1.0)   # wrong exponent declared
