import math

import numpy as np
import pytest
from scipy.integrate import quad

from summlab.distance import make_builtin
from summlab.riesz import (RieszSpec, critical_index, maximal_over_t,
                           periodization_coefficients, riesz_mean_rd,
                           riesz_mean_torus, s_mean, subordination_residual,
                           transplant)
from summlab.spectral import GridFunction, SpectralField, TorusGrid, analyze, synthesize

EU2 = make_builtin("euclidean", 2)
EU1 = make_builtin("euclidean", 1)


def unit_mode(L, d, index):
    coeffs = np.zeros((2 * L + 1,) * d, dtype=complex)
    coeffs[tuple(L + i for i in index)] = 1.0
    return SpectralField(mode="torus", d=d, L=L, coeffs=coeffs)


def random_field(L, d, seed, mode="torus", period=1.0, hermitian=False):
    rng = np.random.default_rng(seed)
    shape = (2 * L + 1,) * d
    coeffs = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    if hermitian:
        flipped = np.conj(coeffs[tuple(slice(None, None, -1) for _ in range(d))])
        coeffs = 0.5 * (coeffs + flipped)
    return SpectralField(mode=mode, d=d, L=L, coeffs=coeffs, period=period)


def test_spec_validation():
    with pytest.raises(ValueError):
        RieszSpec(lam=-1.0, rho=EU2)
    spec = RieszSpec(lam=0.5, rho=EU2)
    assert spec.critical_index(1.0) == pytest.approx((2 - 1) / 2)
    d = 3
    assert critical_index(2 * d / (d + 1.0), d) == pytest.approx(0.0)


def test_center_mode_invariant():
    spec = RieszSpec(lam=0.7, rho=EU2)
    c = unit_mode(4, 2, (0, 0))
    for t in (0.3, 1.0, 7.0):
        out = riesz_mean_torus(c, t, spec)
        np.testing.assert_array_equal(out.coeffs, c.coeffs)


def test_single_mode_value():
    spec = RieszSpec(lam=1.0, rho=EU1)
    c = unit_mode(3, 1, (1,))
    out = riesz_mean_torus(c, 2.0, spec)
    assert out.coeffs[3 + 1] == pytest.approx(0.5)


@pytest.mark.parametrize("d", [1, 2])
def test_multiplier_against_per_mode_oracle(d):
    """Acceptance-style oracle: synthesized operator output against a direct
    per-mode sum with multipliers computed in scalar arithmetic."""
    spec = RieszSpec(lam=0.6, rho=make_builtin("euclidean", d))
    L = 6 if d == 2 else 24
    grid = TorusGrid(d=d, n=16 if d == 2 else 64)
    worst = 0.0
    for seed in range(20):
        c = random_field(L, d, seed)
        t = 1.3 + 0.2 * seed
        fast = synthesize(riesz_mean_torus(c, t, spec), grid).values
        lat = c.lattice().reshape(-1, d)
        mult = np.empty(len(lat))
        for i, ell in enumerate(lat):
            r = math.sqrt(sum(float(v) ** 2 for v in ell))
            s = r / t
            mult[i] = (1.0 - s) ** spec.lam if s < 1.0 - 1e-14 else 0.0
        x = grid.nodes()
        direct = (np.exp(2j * np.pi * (x @ lat.T)) @
                  (mult * c.coeffs.reshape(-1))).reshape(fast.shape)
        worst = max(worst, np.abs(fast - direct).max() / np.abs(direct).max())
    assert worst <= 1e-12


def test_rd_mode_and_band_limited_identity():
    rho = EU2
    spec = RieszSpec(lam=0.0, rho=rho)
    c = random_field(4, 2, 7, mode="rd", period=64.0)
    # all frequencies lie inside rho <= t for t = 1: identity at lam = 0
    out = riesz_mean_rd(c, 1.0, spec)
    np.testing.assert_allclose(out.coeffs, c.coeffs, atol=0)
    spec2 = RieszSpec(lam=0.5, rho=rho)
    # multiplier -> 1 on the support as t -> infinity
    t = 2.0 ** 10
    out2 = riesz_mean_rd(c, t, spec2)
    grid = TorusGrid(d=2, n=16, period=64.0)
    diff = synthesize(out2, grid).values - synthesize(c, grid).values
    freqs = np.linalg.norm(c.frequencies().reshape(-1, 2), axis=1)
    bound = np.max(1.0 - (1.0 - freqs / t) ** 0.5) * np.sum(np.abs(c.coeffs))
    assert np.abs(diff).max() <= bound + 1e-12
    assert np.abs(diff).max() <= 1e-3


def test_modified_mean_kills_low_frequencies():
    spec = RieszSpec(lam=1.0, rho=EU1)
    c = unit_mode(8, 1, (2,))
    # rho(l/t) = 2/t <= 4/5 for t = 2.5: the modified weight vanishes
    out = s_mean(c, 2.5 + 0.625, spec)
    assert np.abs(out.coeffs).max() == 0.0
    # single mode at rho(l/t) = 0.95: weight is (1 - 0.95) * 1
    out2 = s_mean(c, 2.0 / 0.95, spec)
    assert out2.coeffs[8 + 2] == pytest.approx(0.05, rel=1e-12)


def test_plain_minus_modified_is_low_frequency_part():
    spec = RieszSpec(lam=0.5, rho=EU2)
    c = random_field(5, 2, 9)
    t = 4.0
    full = riesz_mean_torus(c, t, spec)
    mod = s_mean(c, t, spec)
    lat = c.lattice().reshape(-1, 2)
    r = np.linalg.norm(lat, axis=1) / t
    from summlab.bumps import origin_cutoff
    low = origin_cutoff(r).reshape(c.coeffs.shape) * full.coeffs
    np.testing.assert_allclose(full.coeffs - mod.coeffs, low, atol=1e-14)


def test_linearity_and_realness():
    spec = RieszSpec(lam=0.5, rho=EU2)
    a = random_field(5, 2, 10)
    b = random_field(5, 2, 11)
    t = 3.7
    combo = SpectralField(mode="torus", d=2, L=5,
                          coeffs=2.0 * a.coeffs - 1.5j * b.coeffs)
    lhs = riesz_mean_torus(combo, t, spec).coeffs
    rhs = 2.0 * riesz_mean_torus(a, t, spec).coeffs \
        - 1.5j * riesz_mean_torus(b, t, spec).coeffs
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    h = random_field(5, 2, 12, hermitian=True)
    grid = TorusGrid(d=2, n=16)
    vals = synthesize(riesz_mean_torus(h, 2.9, spec), grid).values
    assert np.abs(vals.imag).max() <= 1e-10 * max(np.abs(vals.real).max(), 1.0)


def test_sup_error_decays_on_dyadic_tail():
    spec = RieszSpec(lam=0.5, rho=EU2)
    c = random_field(5, 2, 13)
    grid = TorusGrid(d=2, n=16)
    f = synthesize(c, grid).values
    errs = []
    for t in 2.0 ** np.arange(4, 9):
        g = synthesize(riesz_mean_torus(c, t, spec), grid).values
        errs.append(np.abs(g - f).max())
    assert all(b < a for a, b in zip(errs[:-1], errs[1:]))


# ---------------------------------------------------------------------------
# subordination identity
# ---------------------------------------------------------------------------

def test_subordination_vanishes_beyond_cutoff():
    spec = RieszSpec(lam=1.0, rho=EU2)
    xi = np.array([[0.95, 0.0], [0.0, 1.4]])   # rho >= 9/10
    resid, _ = subordination_residual(spec, N=4, M=6, xi_samples=xi)
    assert resid <= 1e-9


def test_subordination_residual_interior():
    spec = RieszSpec(lam=1.0, rho=EU2)
    xi = np.array([[0.5, 0.0], [0.3, 0.4], [0.05, 0.0], [1e-3, 0.0], [0.85, 0.0]])
    resid, quad_diff = subordination_residual(spec, N=4, M=6, xi_samples=xi)
    assert resid <= 1e-6
    assert quad_diff <= 1e-7


def test_subordination_requires_positive_index():
    spec = RieszSpec(lam=-0.2, rho=EU2)
    with pytest.raises(ValueError):
        subordination_residual(spec, 4, 6, np.array([[0.5, 0.0]]))


# ---------------------------------------------------------------------------
# transplantation
# ---------------------------------------------------------------------------

def gaussian_fhat(xi):
    return np.exp(-np.pi * np.sum(np.asarray(xi, dtype=float) ** 2, axis=-1))


def test_transplant_plain_riemann_sum_at_lam0():
    spec = RieszSpec(lam=0.0, rho=EU2)
    L = 16
    # transform supported (effectively) in rho <= 1/2 via a narrow gaussian
    fhat = lambda xi: np.exp(-40.0 * np.pi * np.sum(np.asarray(xi) ** 2, axis=-1))
    x = np.array([0.2, -0.1])
    v = transplant(fhat, L, 1.0, spec, x)
    mesh = np.meshgrid(*([np.arange(-L, L + 1)] * 2), indexing="ij")
    lat = np.stack([m.ravel() for m in mesh], axis=-1) / L
    inside = np.linalg.norm(lat, axis=1) < 1.0 - 1e-14
    plain = np.sum(fhat(lat[inside]) * np.exp(2j * np.pi * (lat[inside] @ x))) / L ** 2
    assert abs(v - plain) <= 1e-12 * abs(plain)


def test_transplant_converges_to_integral():
    spec = RieszSpec(lam=0.5, rho=EU2)
    t = 1.0
    oracle = 2 * np.pi * quad(
        lambda r: (1 - r / t) ** 0.5 * np.exp(-np.pi * r * r) * r, 0, t)[0]
    errs = [abs(transplant(gaussian_fhat, L, t, spec, np.zeros(2)) - oracle)
            for L in (8, 16, 32, 64)]
    assert all(b < a for a, b in zip(errs[:-1], errs[1:]))
    assert errs[-1] <= 1e-4


def test_periodization_matches_scaled_transform():
    grid = TorusGrid(d=2, n=32)
    f_space = lambda y: np.exp(-np.pi * np.sum(np.asarray(y) ** 2, axis=-1))
    L = 4
    per = periodization_coefficients(f_space, L, grid)
    c = analyze(per, 8)
    lat = c.lattice().reshape(-1, 2)
    expected = L ** (-2.0) * gaussian_fhat(lat / L)
    assert np.abs(c.coeffs.reshape(-1) - expected).max() <= 1e-8


# ---------------------------------------------------------------------------
# sup over a dilation ladder
# ---------------------------------------------------------------------------

def test_maximal_over_t():
    spec = RieszSpec(lam=1.0, rho=EU1)
    grid = TorusGrid(d=1, n=16)
    op = lambda c, t: riesz_mean_torus(c, t, spec)
    c = unit_mode(3, 1, (1,))
    out = maximal_over_t(op, c, [2.0, 4.0, 8.0], grid)
    np.testing.assert_allclose(np.abs(out.values), 7.0 / 8.0, atol=1e-12)
    single = maximal_over_t(op, c, [4.0], grid)
    np.testing.assert_allclose(np.abs(single.values), 0.75, atol=1e-12)
    with pytest.raises(ValueError):
        maximal_over_t(op, c, [], grid)


def test_maximal_over_t_grid_refinement():
    spec = RieszSpec(lam=0.5, rho=EU2)
    rng = np.random.default_rng(9)
    L = 7
    amp = np.exp(-np.add.outer(np.arange(-L, L + 1) ** 2,
                               np.arange(-L, L + 1) ** 2) / 8.0)
    c = SpectralField(mode="torus", d=2, L=L,
                      coeffs=amp * (rng.normal(size=(15, 15))
                                    + 1j * rng.normal(size=(15, 15))))
    grid = TorusGrid(d=2, n=32)
    op = lambda cc, t: riesz_mean_torus(cc, t, spec)
    coarse = maximal_over_t(op, c, 2.0 ** np.linspace(0, 4, 65), grid)
    fine = maximal_over_t(op, c, 2.0 ** np.linspace(0, 4, 129), grid)
    rel = np.abs(coarse.values - fine.values).max() / np.abs(fine.values).max()
    assert rel <= 0.01
