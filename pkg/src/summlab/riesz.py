"""Summability operators: Riesz means on the torus and on R^d, the
origin-modified means, the low-frequency subordination identity, and the
lattice transplantation operator used to pass between the two settings.

The multiplier of a Riesz mean of index lam at parameter t is
(1 - rho(xi/t))_+^lam, which by homogeneity equals (1 - rho(xi) t^(-1/b))_+^lam.
Modes sitting within 1e-14 of the boundary rho(xi/t) = 1 get multiplier 0 for
every lam (the value is singular there for negative indices, and the means
are insensitive to a t-null set).
"""
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .bumps import origin_cutoff
from .distance import HomogeneousDistance
from .spectral import GridFunction, SpectralField, TorusGrid, synthesize

__all__ = [
    "RieszSpec",
    "critical_index",
    "riesz_multiplier",
    "modified_multiplier",
    "riesz_mean_torus",
    "riesz_mean_rd",
    "s_mean",
    "subordination_residual",
    "transplant",
    "periodization_coefficients",
    "maximal_over_t",
    "BOUNDARY_PAD",
]

BOUNDARY_PAD = 1e-14


def critical_index(p: float, d: int) -> float:
    """The smallest index at which the L^p summability theorems hold."""
    return d * (1.0 / p - 0.5) - 0.5


@dataclass(frozen=True)
class RieszSpec:
    """Parameters of a summability experiment.

    lam : index of the mean, must exceed -1 so the weight is integrable
    rho : the homogeneous distance
    p, q: optional exponents for downstream weak-type / strong-mean runs
    """

    lam: float
    rho: HomogeneousDistance
    p: Optional[float] = None
    q: Optional[float] = None

    def __post_init__(self):
        if self.lam <= -1.0:
            raise ValueError(f"index must exceed -1, got {self.lam}")
        if self.p is not None and not (1.0 <= self.p <= 2.0):
            raise ValueError(f"p must lie in [1, 2], got {self.p}")
        if self.q is not None and self.q < 1.0:
            raise ValueError(f"q must be >= 1, got {self.q}")

    def critical_index(self, p=None):
        p = self.p if p is None else p
        return critical_index(p, self.rho.d)


def riesz_multiplier(spec: RieszSpec, rho_values, t: float):
    """(1 - rho_values * t^(-1/b))_+^lam with the boundary convention.

    rho_values are precomputed rho(xi); the zero frequency always gets 1.
    """
    if t <= 0:
        raise ValueError(f"t must be positive, got {t}")
    s = np.asarray(rho_values, dtype=float) * spec.rho.scale_factor(t)
    inside = s < 1.0 - BOUNDARY_PAD
    base = np.where(inside, 1.0 - np.where(inside, s, 0.0), 1.0)
    mult = np.where(inside, base ** spec.lam, 0.0)
    return np.where(s == 0.0, 1.0, mult)


def modified_multiplier(spec: RieszSpec, rho_values, t: float):
    """The origin-modified weight (1 - upsilon0(s)) (1 - s)_+^lam, s = rho(xi/t)."""
    s = np.asarray(rho_values, dtype=float) * spec.rho.scale_factor(t)
    return (1.0 - origin_cutoff(s)) * riesz_multiplier(spec, rho_values, t) \
        * np.where(s == 0.0, 0.0, 1.0)


def _lattice_rho(spec: RieszSpec, c: SpectralField):
    freqs = c.frequencies().reshape(-1, c.d)
    vals = np.zeros(len(freqs))
    nz = np.any(freqs != 0.0, axis=1)
    vals[nz] = spec.rho(freqs[nz])
    return vals.reshape(c.coeffs.shape)


def _apply_multiplier(c: SpectralField, mult) -> SpectralField:
    return SpectralField(mode=c.mode, d=c.d, L=c.L, coeffs=c.coeffs * mult,
                         period=c.period)


def riesz_mean_torus(c: SpectralField, t: float, spec: RieszSpec) -> SpectralField:
    """Riesz mean of a Fourier series: coefficientwise multiplier application."""
    if c.mode != "torus":
        raise ValueError("expected a torus-mode field")
    return _apply_multiplier(c, riesz_multiplier(spec, _lattice_rho(spec, c), t))


def riesz_mean_rd(c: SpectralField, t: float, spec: RieszSpec) -> SpectralField:
    """Riesz mean of a band-limited R^d field (frequency-node-wise multiplier)."""
    if c.mode != "rd":
        raise ValueError("expected an rd-mode field")
    return _apply_multiplier(c, riesz_multiplier(spec, _lattice_rho(spec, c), t))


def s_mean(c: SpectralField, t: float, spec: RieszSpec) -> SpectralField:
    """Riesz mean with the smooth low-frequency part removed; works in both modes."""
    return _apply_multiplier(c, modified_multiplier(spec, _lattice_rho(spec, c), t))


# ---------------------------------------------------------------------------
# subordination identity
# ---------------------------------------------------------------------------

@lru_cache(maxsize=16)
def _weight_derivative(lam: float, n_root: int, order: int):
    """Lambdified exact derivative d^order/ds^order of u(s^(1/n_root)) where
    u(x) = origin_cutoff(x) (1-x)^lam.

    Symbolic differentiation keeps the check meaningful: for the orders used
    here (7 and up) central differences lose everything to roundoff.  Returns
    a pair (plateau_part, transition_part); the transition part is only valid
    where the mollifier argument is inside (0, 1).
    """
    import sympy as sp

    s = sp.symbols("s", positive=True)
    x = s ** sp.Rational(1, n_root)
    y = 10 * (x - sp.Rational(4, 5))
    bp = sp.exp(-1 / y)
    bq = sp.exp(-1 / (1 - y))
    step = bp / (bp + bq)
    trans = sp.diff((1 - step) * (1 - x) ** lam, s, order)
    plain = sp.diff((1 - x) ** lam, s, order)
    return (sp.lambdify(s, plain, modules="numpy"),
            sp.lambdify(s, trans, modules="numpy"))

_MOLLIFIER_EDGE = 2e-3


def _uN_derivative(svals, lam, n_root, order):
    fA, fB = _weight_derivative(float(lam), int(n_root), int(order))
    svals = np.asarray(svals, dtype=float)
    x = svals ** (1.0 / n_root)
    y = 10.0 * (x - 0.8)
    out = np.zeros_like(svals)
    ma = y <= _MOLLIFIER_EDGE           # mollifier flat at 1 (derivatives below 1e-50)
    mb = (y > _MOLLIFIER_EDGE) & (y < 1.0 - _MOLLIFIER_EDGE)
    if ma.any():
        out[ma] = fA(svals[ma])
    if mb.any():
        out[mb] = fB(svals[mb])
    return out                          # zero beyond y >= 1 - edge


def _origin_weight(s, lam):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    m = s < 0.9
    out[m] = origin_cutoff(s[m]) * (1.0 - s[m]) ** lam
    return out


def subordination_residual(spec: RieszSpec, N: int, M: int, xi_samples,
                           n_geo=60, n_uni=50, n_gauss=12):
    """Max residual of the low-frequency subordination identity over samples.

    For u(x) = upsilon0(x)(1-x)^lam and u_N(s) = u(s^(1/N)),

        u(rho(xi)) = (-1)^(M+1)/M! * int_r^smax (1 - r/s)^M s^M u_N^(M+1)(s) ds,

    r = rho(xi)^N.  The s-integral uses geometric panels from r up to the
    mollifier onset (the integrand behaves like a power there) and uniform
    panels across the transition, composite Gauss-Legendre inside each panel.
    Returns (max_residual, max_two_level_quadrature_difference).
    """
    if N < 1 or M < 1:
        raise ValueError("N and M must be positive integers")
    if spec.lam <= 0:
        raise ValueError("the identity check requires a positive index")
    lam = spec.lam
    xi_samples = np.atleast_2d(np.asarray(xi_samples, dtype=float))
    rho_vals = spec.rho(xi_samples)

    def integral(r, n_geo_, n_uni_, n_gauss_):
        smax = 0.9 ** N
        if r >= smax:
            return 0.0
        cut = 0.8 ** N
        if r < cut:
            edges = np.concatenate([np.geomspace(r, cut, n_geo_ + 1),
                                    np.linspace(cut, smax, n_uni_ + 1)[1:]])
        else:
            edges = np.linspace(r, smax, n_uni_ + 1)
        xg, wg = np.polynomial.legendre.leggauss(n_gauss_)
        a, b = edges[:-1], edges[1:]
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        ss = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
        vals = (1.0 - r / ss) ** M * ss ** M * _uN_derivative(ss, lam, N, M + 1)
        tot = float(np.sum(vals.reshape(len(a), -1) * wg[None, :] * half[:, None]))
        return (-1.0) ** (M + 1) / math.factorial(M) * tot

    worst = 0.0
    worst_quad = 0.0
    for r0 in rho_vals:
        lhs = float(_origin_weight(np.array([r0]), lam)[0])
        r = r0 ** N
        v1 = integral(r, n_geo, n_uni, n_gauss)
        v2 = integral(r, 2 * n_geo, 2 * n_uni, n_gauss + 2)
        worst = max(worst, abs(lhs - v1))
        worst_quad = max(worst_quad, abs(v1 - v2))
    if worst_quad > 1e-6:
        raise RuntimeError(
            f"subordination quadrature did not converge (two-level diff {worst_quad:.2e})")
    return worst, worst_quad


# ---------------------------------------------------------------------------
# transplantation
# ---------------------------------------------------------------------------

MAX_LATTICE_BUDGET = 2 ** 24


def _axis_extents(rho: HomogeneousDistance, level: float, n_dirs=4096, seed=3):
    """Per-axis half-widths of the bounding box of {rho <= level}.

    Maximizes |xi_i| over the unit level set on a direction sample and scales
    by homogeneity; padded by 1% (the box is only used to restrict lattice
    enumeration, correctness comes from the multiplier mask).
    """
    rng = np.random.default_rng(np.random.Philox(seed))
    dirs = rng.normal(size=(n_dirs, rho.d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    dirs = np.concatenate([dirs, np.eye(rho.d), -np.eye(rho.d)])
    pts = (rho(dirs) ** (-rho.b))[:, None] * dirs
    return 1.01 * np.max(np.abs(pts), axis=0) * level ** rho.b


def transplant(fhat, L: int, t: float, spec: RieszSpec, x_grid) -> np.ndarray:
    """Lattice Riemann sum for the Riesz mean of a Fourier integral:

        V f(x) = sum_l L^{-d} fhat(l/L) (1 - rho(l/(Lt)))_+^lam e^{2 pi i <x, l/L>}

    over lattice points with rho(l/L) inside the multiplier support.
    fhat is a callable taking an (n, d) array of frequencies.
    """
    if L < 1:
        raise ValueError("L must be a positive integer")
    d = spec.rho.d
    ext = _axis_extents(spec.rho, spec.rho.level_radius(t))
    halves = np.floor(ext * L).astype(int)
    if np.prod(2 * halves + 1.0) > MAX_LATTICE_BUDGET:
        raise ValueError("transplantation lattice box exceeds budget")
    axes = [np.arange(-h, h + 1) for h in halves]
    mesh = np.meshgrid(*axes, indexing="ij")
    lat = np.stack([m.ravel() for m in mesh], axis=-1) / float(L)
    rho_vals = np.zeros(len(lat))
    nz = np.any(lat != 0.0, axis=1)
    rho_vals[nz] = spec.rho(lat[nz])
    mult = riesz_multiplier(spec, rho_vals, t)
    live = mult != 0.0
    lat = lat[live]
    weights = mult[live] * fhat(lat) * L ** (-d)
    x = np.atleast_2d(np.asarray(x_grid, dtype=float))
    phases = np.exp(2j * np.pi * (x @ lat.T))
    out = phases @ weights
    return out if np.asarray(x_grid).ndim > 1 else out[0]


def periodization_coefficients(f_sampler, L: int, grid: TorusGrid):
    """Fourier coefficients of w -> sum_kappa f(L(w + kappa)) on the unit torus,
    computed from spatial samples (the wrap sum is truncated where f vanishes).

    f_sampler takes (n, d) points of R^d.  Returns a coefficient array on the
    grid's FFT layout divided into the centered box by the caller via analyze().
    """
    nodes = grid.nodes()
    d = grid.d
    reach = 3
    total = np.zeros(len(nodes), dtype=complex)
    shifts = np.meshgrid(*([np.arange(-reach, reach + 1)] * d), indexing="ij")
    shifts = np.stack([s.ravel() for s in shifts], axis=-1)
    for kappa in shifts:
        total += f_sampler(L * (nodes + kappa))
    return GridFunction(grid=grid, values=total.reshape((grid.n,) * d))


def maximal_over_t(op, c: SpectralField, t_grid, grid: TorusGrid) -> GridFunction:
    """Pointwise max over the t grid of |op(c, t)| synthesized on the grid."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size == 0:
        raise ValueError("t grid must be nonempty")
    out = np.zeros((grid.n,) * grid.d)
    for t in t_grid:
        vals = np.abs(synthesize(op(c, t), grid).values)
        np.maximum(out, vals, out=out)
    return GridFunction(grid=grid, values=out.astype(complex))
