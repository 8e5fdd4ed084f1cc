import numpy as np
import pytest

from summlab.distance import make_builtin
from summlab.riesz import RieszSpec
from summlab.sharpness import (PlateFunction, omega_cone_grid, plate_transform,
                               predicted_exponent, riesz_on_plate,
                               riesz_on_plate_grid, riesz_on_plate_oracle)

EU2 = make_builtin("euclidean", 2)


def space_side_transform(plate, xi, n1=40, n2=60):
    w = plate.half_widths()
    g1, w1 = np.polynomial.legendre.leggauss(n1)
    g2, w2 = np.polynomial.legendre.leggauss(n2)
    Y1, Y2 = np.meshgrid(w[0] * g1, w[1] * g2, indexing="ij")
    wts = w[0] * w[1] * np.outer(w1, w2)
    mod = np.exp(2j * np.pi * plate.eps * plate.T * Y2)
    return complex(np.sum(wts * mod * np.exp(-2j * np.pi * (xi[0] * Y1 + xi[1] * Y2))))


def test_plate_validation():
    with pytest.raises(ValueError):
        PlateFunction(T=2.0)


def test_plate_transform_peak_and_zero():
    plate = PlateFunction(T=64.0)
    peak = plate_transform(plate, np.array([[0.0, plate.eps * plate.T]]))
    vol = np.prod(2.0 * plate.half_widths())
    assert peak == pytest.approx(vol)
    # a zero of the first sinc factor
    xi = np.array([[plate.T / (2.0 * plate.eps), plate.eps * plate.T]])
    assert abs(plate_transform(plate, xi)) <= 1e-15


def test_plate_transform_against_quadrature():
    plate = PlateFunction(T=64.0)
    rng = np.random.default_rng(5)
    xi = rng.uniform(-25.0, 25.0, size=(50, 2))
    xi[:, 1] += plate.eps * plate.T * rng.uniform(0.0, 1.0, 50)
    closed = plate_transform(plate, xi)
    direct = np.array([space_side_transform(plate, x) for x in xi])
    assert np.abs(closed - direct).max() <= 1e-8


def test_plate_norm_slope_exact():
    p = 1.3
    d = 2
    Ts = 2.0 ** np.arange(4, 10)
    norms = [PlateFunction(T=T, d=d).lp_norm(p) for T in Ts]
    slope = np.polyfit(np.log(Ts), np.log(norms), 1)[0]
    assert slope == pytest.approx((0.5 - d) / p, abs=1e-12)


def test_riesz_on_plate_matches_frequency_oracle():
    spec = RieszSpec(lam=0.5, rho=EU2)
    plate = PlateFunction(T=16.0)
    for (x, t) in [((0.05, 0.75), 2.0), ((0.0, 0.6), 2.5)]:
        v = riesz_on_plate(plate, spec, x, t)
        w = riesz_on_plate_oracle(plate, spec, np.array(x), t)
        assert abs(v - w) <= 1e-6 * abs(w)


def test_riesz_on_plate_lower_bound_at_tuned_time():
    spec = RieszSpec(lam=0.5, rho=EU2)
    T = 64.0
    plate = PlateFunction(T=T)
    x = np.array([0.02, 0.75])
    tc = plate.eps * T / (x[1] / np.linalg.norm(x))
    val = abs(riesz_on_plate(plate, spec, x, tc))
    scale = tc ** 0.5 * T ** -1.5          # t^((d-1)/2 - lam) T^(1/2 - d)
    c = val / scale
    assert c > 1e-3                        # a solidly nonzero stationary value


def test_riesz_on_plate_mistuned_time_suppressed():
    spec = RieszSpec(lam=0.5, rho=EU2)
    T = 64.0
    plate = PlateFunction(T=T)
    x = np.array([0.02, 0.75])
    tc = plate.eps * T / (x[1] / np.linalg.norm(x))
    tuned = abs(riesz_on_plate_grid(plate, spec, [x], [tc])[0, 0])
    for t_bad in (plate.eps * T / 8.0, 8.0 * plate.eps * T):
        off = abs(riesz_on_plate_grid(plate, spec, [x], [t_bad])[0, 0])
        assert tuned >= 10.0 * off


def test_riesz_on_plate_refinement_contract():
    spec = RieszSpec(lam=0.0, rho=EU2)
    plate = PlateFunction(T=32.0)
    v = riesz_on_plate(plate, spec, (0.03, 0.8), 3.0, tol=1e-4)
    assert np.isfinite(v)


def test_omega_cone_and_window_containment():
    eps = 0.125
    pts, meas = omega_cone_grid(eps)
    assert np.all(np.abs(pts[:, 0]) <= eps ** 2 * pts[:, 1])
    assert np.all((0.5 <= pts[:, 1]) & (pts[:, 1] <= 1.0))
    assert meas.sum() == pytest.approx(eps ** 2 * 0.75, rel=0.05)
    # stationary windows stay inside [0, T] for the ladder
    for T in 2.0 ** np.arange(4, 10):
        dH = pts[:, 1] / np.hypot(pts[:, 0], pts[:, 1])
        centers = eps * T / dH
        assert np.all(centers + eps * np.sqrt(T) <= T)
        assert np.all(centers - eps * np.sqrt(T) >= 0.0)


def test_predicted_exponent_values():
    assert predicted_exponent(2, 1, 2, 0.5) == pytest.approx(-0.25)
    assert predicted_exponent(2, 1, 2, 0.25) == pytest.approx(0.0)
    assert predicted_exponent(2, 1, 2, 0.0) == pytest.approx(0.25)
