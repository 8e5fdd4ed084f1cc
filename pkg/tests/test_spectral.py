import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from summlab.spectral import (ContainerError, GridFunction, SpectralField,
                              TorusGrid, analyze, lp_norm, lp_norm_weighted,
                              read_container, synthesize, weak_lp_quasinorm,
                              weak_lp_weighted, write_container)


def random_field(L, d, seed=0):
    rng = np.random.default_rng(seed)
    shape = (2 * L + 1,) * d
    return SpectralField(mode="torus", d=d, L=L,
                         coeffs=rng.normal(size=shape) + 1j * rng.normal(size=shape))


def synthesize_direct(c, grid):
    """Brute-force lattice sum oracle."""
    lat = c.lattice().reshape(-1, c.d)
    x = grid.nodes()
    vals = np.exp(2j * np.pi * (x @ lat.T)) @ c.coeffs.reshape(-1)
    return vals.reshape((grid.n,) * grid.d)


def test_grid_validation():
    with pytest.raises(ValueError):
        TorusGrid(d=2, n=6)      # not a power of two
    with pytest.raises(ValueError):
        TorusGrid(d=2, n=2)


def test_analyze_constant_and_single_mode():
    grid = TorusGrid(d=1, n=8)
    g = GridFunction(grid=grid, values=np.ones(8, dtype=complex))
    c = analyze(g, 2)
    np.testing.assert_allclose(c.coeffs[2], 1.0, atol=1e-15)
    rest = c.coeffs.copy()
    rest[2] = 0
    np.testing.assert_allclose(rest, 0, atol=1e-15)

    grid = TorusGrid(d=1, n=16)
    x = grid.axis()
    g = GridFunction(grid=grid, values=np.exp(2j * np.pi * 3 * x))
    c = analyze(g, 4)
    np.testing.assert_allclose(c.coeffs[4 + 3], 1.0, atol=1e-13)


def test_round_trip_and_direct_oracle():
    c = random_field(L=5, d=2, seed=1)
    grid = TorusGrid(d=2, n=16)
    g = synthesize(c, grid)
    direct = synthesize_direct(c, grid)
    scale = np.abs(direct).max()
    assert np.abs(g.values - direct).max() / scale <= 1e-12
    c2 = analyze(g, 5)
    assert np.abs(c2.coeffs - c.coeffs).max() / np.abs(c.coeffs).max() <= 1e-12


def test_aliasing_rejected():
    c = random_field(L=8, d=1)
    with pytest.raises(ValueError):
        synthesize(c, TorusGrid(d=1, n=16))
    g = GridFunction(grid=TorusGrid(d=1, n=16), values=np.zeros(16, complex))
    with pytest.raises(ValueError):
        analyze(g, 8)


def test_parseval():
    c = random_field(L=6, d=2, seed=2)
    grid = TorusGrid(d=2, n=32)
    g = synthesize(c, grid)
    lhs = lp_norm(g, 2) ** 2
    rhs = np.sum(np.abs(c.coeffs) ** 2)
    assert abs(lhs - rhs) / rhs <= 1e-10


def test_lp_norm_examples():
    grid = TorusGrid(d=2, n=8)
    g = GridFunction(grid=grid, values=np.full((8, 8), -2.5 + 0j))
    for p in (0.5, 1.0, 2.0, np.inf):
        assert lp_norm(g, p) == pytest.approx(2.5)
    vals = np.zeros((8, 8), dtype=complex)
    vals[:4, :] = 1.0
    assert lp_norm(GridFunction(grid=grid, values=vals), 1) == pytest.approx(0.5)
    grid1 = TorusGrid(d=1, n=16)
    g1 = GridFunction(grid=grid1,
                      values=np.exp(2j * np.pi * grid1.axis()))
    assert lp_norm(g1, 2) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        lp_norm(g1, -1.0)


def test_weak_lp_examples():
    # indicator of measure m -> m^(1/p)
    grid = TorusGrid(d=1, n=16)
    vals = np.zeros(16, dtype=complex)
    vals[:4] = 1.0
    g = GridFunction(grid=grid, values=vals)
    assert weak_lp_quasinorm(g, 1.0) == pytest.approx(0.25)
    assert weak_lp_quasinorm(g, 0.5) == pytest.approx(0.0625)
    # direct enumeration: samples {4, 2, 1} with unit masses
    assert weak_lp_weighted(np.array([4.0, 2.0, 1.0]), np.array([1.0]), 1.0) \
        == pytest.approx(4.0)


def test_weak_lp_against_threshold_sweep():
    rng = np.random.default_rng(3)
    vals = rng.exponential(size=200)
    meas = np.full(1, 1.0 / 200)
    for p in (0.5, 1.0, 4.0 / 3.0, 2.0):
        fast = weak_lp_weighted(vals, meas, p)
        sweep = max(a * ((vals >= a).sum() / 200.0) ** (1.0 / p)
                    for a in vals)
        assert abs(fast - sweep) <= 1e-12 * max(fast, 1.0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(min_value=0, max_value=1e6), min_size=1, max_size=60),
       st.sampled_from([0.5, 1.0, 4.0 / 3.0, 2.0]))
def test_weak_below_strong(values, p):
    vals = np.asarray(values)
    meas = np.full(1, 1.0 / len(vals))
    assert weak_lp_weighted(vals, meas, p) <= lp_norm_weighted(vals, meas, p) * (1 + 1e-12)


def test_container_round_trip_bit_exact():
    c = random_field(L=4, d=2, seed=5)
    blob = write_container(c)
    c2 = read_container(blob)
    assert c2.mode == c.mode and c2.L == c.L and c2.d == c.d
    assert c2.coeffs.tobytes() == c.coeffs.tobytes()
    # grid functions too
    grid = TorusGrid(d=2, n=8, period=64.0)
    g = GridFunction(grid=grid, values=np.arange(64, dtype=complex).reshape(8, 8))
    g2 = read_container(write_container(g))
    assert g2.grid == grid
    assert g2.values.tobytes() == g.values.tobytes()


def test_container_rejects_corruption():
    c = random_field(L=3, d=1)
    blob = write_container(c)
    with pytest.raises(ContainerError):
        read_container(blob[:-8])            # truncated
    with pytest.raises(ContainerError):
        read_container(b"SLAG" + blob[4:])   # magic
    bad_version = blob[:4] + (99).to_bytes(4, "little") + blob[8:]
    with pytest.raises(ContainerError):
        read_container(bad_version)
