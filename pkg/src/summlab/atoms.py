"""Moment-cancelling atoms and the cap maximal-operator scaling experiments.

An atom of exponent p and moment order M is a bounded function on a ball
whose monomial moments vanish through degree M; its size is normalized by
vol(B)^(-1/p).  The experiments measure sup over dilation parameters of the
cap-ring pieces applied to an atom, on grids graded out to the far field,
and fit the growth exponent of the L^p quasinorm in the ring index.

The fast evaluation path writes the cap-ring multiplier in stretched
coordinates aligned with the cap (unit steps across the ring, 2^(-j/2) steps
along it); the piece then becomes the Fourier transform of a compactly
supported density evaluated on a lattice by zero-padded FFT, interpolated in
magnitude.  A dense direct quadrature of the same integral serves as the
oracle in tests.
"""
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .decomp import CapSystem, RingSystem
from .spectral import lp_norm_weighted

__all__ = [
    "Atom",
    "make_atom",
    "atom_maximal",
    "atom_maximal_direct",
    "atom_scaling_scan",
    "graded_axis",
    "cell_measures",
    "classify_regions",
    "AtomScanResult",
    "DEFAULT_T_GRID",
]

DEFAULT_T_GRID = 2.0 ** np.linspace(-4.0, 4.0, 129)


@dataclass(frozen=True)
class Atom:
    """Grid samples of a moment-cancelling bump on the ball |y| <= radius."""

    p: float
    M: int
    d: int
    center: np.ndarray
    radius: float
    xs: np.ndarray              # 1-d axis of the sample grid (per axis)
    values: np.ndarray          # (ngrid,)*d real samples

    @property
    def h(self):
        return float(self.xs[1] - self.xs[0])

    def sup_budget(self):
        """vol(B)^(-1/p), the allowed sup norm."""
        d = self.d
        vol = math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0) * self.radius ** d
        return vol ** (-1.0 / self.p)

    def moments(self):
        """Grid-quadrature monomial moments through degree M."""
        grids = np.meshgrid(*([self.xs] * self.d), indexing="ij")
        out = {}
        for beta in _multi_indices(self.d, self.M):
            mono = np.ones_like(self.values)
            for g, b in zip(grids, beta):
                mono = mono * g ** b
            out[beta] = float(np.sum(mono * self.values) * self.h ** self.d)
        return out

    def transform_lattice(self, samples_per_unit=24):
        """Grid transform on a Cartesian frequency lattice (periodic with
        period 1/h, which is the alias period of the sample grid)."""
        n = len(self.xs)
        per = 1.0 / self.h
        npts = int(round(per * samples_per_unit))
        pad = np.zeros((npts,) * self.d, dtype=complex)
        pad[(slice(0, n),) * self.d] = self.values
        F = np.fft.fftshift(np.fft.fftn(pad))
        lat = np.fft.fftshift(np.fft.fftfreq(npts, d=self.h))
        ph = np.exp(-2j * np.pi * lat * self.xs[0])
        for ax in range(self.d):
            shape = [1] * self.d
            shape[ax] = npts
            F = F * ph.reshape(shape)
        return lat, F * self.h ** self.d


def _multi_indices(d, M):
    if d == 1:
        return [(b,) for b in range(M + 1)]
    out = []
    for b1 in range(M + 1):
        for rest in _multi_indices(d - 1, M - b1):
            out.append((b1,) + rest)
    return out


def make_atom(p: float, M: int, d: int = 2, seed: int = 0, ngrid: int = 65,
              radius: float = 1.0, n_waves: int = 6) -> Atom:
    """Random smooth atom: envelope bump times a random low-frequency field,
    with all monomial moments through degree M projected out against
    envelope-weighted monomials (grid quadrature), then rescaled to the sup
    budget.  Reseeds on a degenerate Gram matrix, errors after 5 attempts.
    """
    if M + 1 <= d * (1.0 / p - 1.0):
        raise ValueError(f"moment order too low: need M+1 > d(1/p - 1), "
                         f"got M={M}, p={p}, d={d}")
    from .bumps import smoothstep
    for attempt in range(5):
        rng = np.random.default_rng(np.random.Philox(key=seed + 1000003 * attempt))
        xs = np.linspace(-radius, radius, ngrid)
        grids = np.meshgrid(*([xs] * d), indexing="ij")
        r = np.sqrt(sum(g ** 2 for g in grids))
        env = 1.0 - smoothstep((r / radius - 0.35) / 0.6)
        f = np.zeros_like(env)
        for _ in range(n_waves):
            k = rng.uniform(-1.25, 1.25, d) / radius
            ph = rng.uniform(0.0, 2.0 * np.pi)
            f += rng.normal() * np.cos(2.0 * np.pi * sum(k[i] * grids[i] for i in range(d)) + ph)
        raw = env * f
        monos = []
        for beta in _multi_indices(d, M):
            mono = np.ones_like(env)
            for g, b in zip(grids, beta):
                mono = mono * g ** b
            monos.append(mono)
        basis = [env * m for m in monos]
        h = xs[1] - xs[0]
        G = np.array([[np.sum(m * bb) for bb in basis] for m in monos]) * h ** d
        if np.linalg.cond(G) > 1e12:
            continue
        rhs = np.array([np.sum(m * raw) for m in monos]) * h ** d
        coef = np.linalg.solve(G, rhs)
        vals = raw - sum(ci * bi for ci, bi in zip(coef, basis))
        peak = np.abs(vals).max()
        if peak == 0.0:
            continue
        atom = Atom(p=p, M=M, d=d, center=np.zeros(d), radius=radius, xs=xs,
                    values=vals * (Atom(p=p, M=M, d=d, center=np.zeros(d),
                                        radius=radius, xs=xs,
                                        values=vals).sup_budget() / peak))
        return atom
    raise RuntimeError("atom construction failed: degenerate Gram matrix after 5 seeds")


# ---------------------------------------------------------------------------
# cap-frame machinery (d = 2, radial distances)
# ---------------------------------------------------------------------------

def _cap_frame(caps: CapSystem, nu: int):
    ang = math.atan2(caps.directions[nu][1], caps.directions[nu][0])
    c, s = math.cos(ang), math.sin(ang)
    return np.array([[c, s], [-s, c]])           # rotates cap direction to +x


def _chart_multiplier(rings: RingSystem, caps: CapSystem, j: int, nu: int,
                      sig1, sig2):
    """phi_j(rho) * chi_nu on the stretched chart
    xi = R^T (1 + 2^-j s1, 2^(-j/2) s2) in the frame of cap nu."""
    S1, S2 = np.meshgrid(sig1, sig2, indexing="ij")
    X1 = 1.0 + 2.0 ** (-j) * S1
    X2 = 2.0 ** (-j / 2.0) * S2
    rho_v = np.hypot(X1, X2)                      # euclidean chart
    frame = _cap_frame(caps, nu)
    pts = np.stack([X1.ravel(), X2.ravel()], axis=-1) @ frame
    chi = caps.chi(pts, nu).reshape(X1.shape)
    return rings.window(j, rho_v) * chi, X1, X2


SIGMA_BOX = ((-2.6, 0.05), (-1.7, 1.7))


def _scan_lattice(w1max, w2max, dw_target=1.0 / 12.0, oversample=2.1):
    (a1, b1), (a2, b2) = SIGMA_BOX
    d1 = 1.0 / (oversample * w1max)
    d2 = 1.0 / (oversample * w2max)
    sig1 = a1 + d1 * np.arange(int((b1 - a1) / d1) + 1)
    sig2 = a2 + d2 * np.arange(int((b2 - a2) / d2) + 1)
    N1 = 1 << math.ceil(math.log2(1.0 / (dw_target * d1)))
    N2 = 1 << math.ceil(math.log2(1.0 / (dw_target * d2)))
    return sig1, sig2, d1, d2, N1, N2


def atom_maximal(atom: Atom, j: int, nu: int, caps: CapSystem,
                 rings: RingSystem, t_grid=None, x_grid=None,
                 w1max=150.0, w2max=48.0):
    """sup over the t grid of the cap-ring piece applied to the atom, on a
    tensor x grid given as a pair of axes in the cap frame.

    Returns the (len(ax1), len(ax2)) array of sup values.  Euclidean d = 2.
    """
    if caps.rho.d != 2 or caps.rho.kind != "euclidean":
        raise NotImplementedError("the fast maximal path covers euclidean d = 2")
    t_grid = DEFAULT_T_GRID if t_grid is None else np.asarray(t_grid, dtype=float)
    ax1, ax2 = x_grid
    alias_period = 1.0 / atom.h
    if alias_period < 2.0 * t_grid.max() - 1e-9:
        raise ValueError(
            f"atom grid too coarse: alias period {alias_period} must be at "
            f"least twice the largest dilation parameter {t_grid.max()}")
    sig1, sig2, d1, d2, N1, N2 = _scan_lattice(w1max, w2max)
    mult, X1, X2 = _chart_multiplier(rings, caps, j, nu, sig1, sig2)
    frame = _cap_frame(caps, nu)
    lat, AH = atom.transform_lattice()
    XX1, XX2 = np.meshgrid(ax1, ax2, indexing="ij")
    sup = np.zeros(XX1.shape)
    amp = 2.0 ** (-1.5 * j)
    x1reach = np.abs(ax1).max() + 2.0 * atom.radius
    x2reach = np.abs(ax2).max() + 2.0 * atom.radius
    for t in t_grid:
        # the w-reach shrinks with t, so the chart may be subsampled (keeps
        # the FFT small for small t without re-evaluating the windows)
        need1 = max(2.0 ** (-j) * t * x1reach * 1.02, 1e-3)
        need2 = max(2.0 ** (-j / 2.0) * t * x2reach * 1.02, 1e-3)
        m1 = _subsample_step(w1max, need1, d1)
        m2 = _subsample_step(w2max, need2, d2)
        sl1 = sig1[::m1]
        sl2 = sig2[::m2]
        sub = mult[::m1, ::m2]
        live = sub > 0.0
        xi = np.stack([t * X1[::m1, ::m2][live], t * X2[::m1, ::m2][live]],
                      axis=-1) @ frame
        MT = np.zeros(sub.shape, dtype=complex)
        MT[live] = sub[live] * _periodic_bilinear(lat, AH, xi)
        n1 = N1 // m1
        n2 = N2 // m2
        G = np.fft.fft2(np.conj(MT), s=(n1, n2))
        Iabs = np.fft.fftshift(np.abs(G)) * (d1 * m1 * d2 * m2)
        w1lat = np.fft.fftshift(np.fft.fftfreq(n1, d=d1 * m1))
        w2lat = np.fft.fftshift(np.fft.fftfreq(n2, d=d2 * m2))
        interp = RegularGridInterpolator((w1lat, w2lat), Iabs,
                                         bounds_error=False, fill_value=0.0)
        W1 = 2.0 ** (-j) * t * XX1
        W2 = 2.0 ** (-j / 2.0) * t * XX2
        vals = interp(np.stack([W1.ravel(), W2.ravel()], axis=-1)).reshape(W1.shape)
        np.maximum(sup, t * t * amp * vals, out=sup)
    return sup


def _subsample_step(w_full, w_need, d_sigma, min_per_unit=14.0):
    """Largest power-of-two chart stride keeping the lattice reach above
    w_need and the chart sampling at min_per_unit points per unit."""
    m = 1
    while (w_full / (2 * m) >= w_need
           and d_sigma * 2 * m <= 1.0 / min_per_unit):
        m *= 2
    return m


def _periodic_bilinear(lat, AH, pts):
    """Bilinear lookup on the periodic frequency lattice of an atom transform."""
    d = lat[1] - lat[0]
    n = len(lat)
    pts = np.atleast_2d(pts)
    u = np.mod((pts - lat[0]) / d, n)
    i0 = np.floor(u).astype(int)
    fr = u - i0
    i0 %= n
    i1 = (i0 + 1) % n
    f1 = fr[:, 0]; f2 = fr[:, 1]
    return (AH[i0[:, 0], i0[:, 1]] * (1 - f1) * (1 - f2)
            + AH[i1[:, 0], i0[:, 1]] * f1 * (1 - f2)
            + AH[i0[:, 0], i1[:, 1]] * (1 - f1) * f2
            + AH[i1[:, 0], i1[:, 1]] * f1 * f2)


def atom_maximal_direct(atom: Atom, j: int, nu: int, caps: CapSystem,
                        rings: RingSystem, x, t, n_sigma=(400, 400)):
    """Dense direct quadrature oracle for a single (x, t) pair (cap frame)."""
    (a1, b1), (a2, b2) = SIGMA_BOX
    sig1 = np.linspace(a1, b1, n_sigma[0])
    sig2 = np.linspace(a2, b2, n_sigma[1])
    mult, X1, X2 = _chart_multiplier(rings, caps, j, nu, sig1, sig2)
    frame = _cap_frame(caps, nu)
    xi = np.stack([t * X1.ravel(), t * X2.ravel()], axis=-1) @ frame
    grids = np.meshgrid(*([atom.xs] * 2), indexing="ij")
    ys = np.stack([g.ravel() for g in grids], axis=-1)
    av = atom.values.ravel()
    nz = av != 0.0
    ys = ys[nz]; av = av[nz]
    ahat = np.zeros(len(xi), dtype=complex)
    B = 4096
    for i in range(0, len(xi), B):
        ahat[i:i + B] = np.exp(-2j * np.pi * (xi[i:i + B] @ ys.T)) @ av
    ahat = (ahat * atom.h ** 2).reshape(mult.shape)
    w1 = 2.0 ** (-j) * t * x[0]
    w2 = 2.0 ** (-j / 2.0) * t * x[1]
    S1, S2 = np.meshgrid(sig1, sig2, indexing="ij")
    integ = mult * ahat * np.exp(2j * np.pi * (S1 * w1 + S2 * w2))
    val = np.trapezoid(np.trapezoid(integ, sig2, axis=1), sig1, axis=0)
    return t * t * 2.0 ** (-1.5 * j) * abs(val)


# ---------------------------------------------------------------------------
# scan grids and region bookkeeping
# ---------------------------------------------------------------------------

def graded_axis(j, per_octave=3, top=None):
    """Symmetric graded axis: linear core, then per-octave geometric nodes."""
    if top is None:
        top = 2.0 ** (j + 4)
    pts = [0.0, 0.25, 0.5, 0.75, float(top)]
    v = 1.0
    while v < top:
        pts.extend(min(v * 2.0 ** (k / per_octave), float(top))
                   for k in range(per_octave))
        v *= 2.0
    pts = np.array(sorted(set(pts)))
    return np.concatenate([-pts[::-1][:-1], pts])


def cell_measures(ax):
    """Cell widths of the Voronoi cells of a sorted axis."""
    mids = 0.5 * (ax[1:] + ax[:-1])
    edges = np.concatenate([[ax[0] - (mids[0] - ax[0])], mids,
                            [ax[-1] + (ax[-1] - mids[-1])]])
    return np.diff(edges)


def classify_regions(j, x1, x2):
    """Partition of scan points (cap frame): 0 = core box, 1 = elongated box
    minus core, 2 = outer box, transverse-dominant, 3 = outer box,
    normal-dominant, 4/5 = beyond the box split the same way.

    The boxes are |x1| <= 5*2^j, |x2| <= 5*2^(j/2) (outer), |x1| <= 5*2^(j/2),
    |x2| <= 5 (elongated), |x1|,|x2| <= 5 (core); the transverse-dominant set
    is |x2| >= 2^(-j/2)|x1|.
    """
    X1, X2 = np.meshgrid(np.abs(x1), np.abs(x2), indexing="ij")
    in_core = (X1 <= 5.0) & (X2 <= 5.0)
    in_elong = (X1 <= 5.0 * 2.0 ** (j / 2.0)) & (X2 <= 5.0)
    in_outer = (X1 <= 5.0 * 2.0 ** j) & (X2 <= 5.0 * 2.0 ** (j / 2.0))
    transverse = X2 >= 2.0 ** (-j / 2.0) * X1
    out = np.full(X1.shape, 5, dtype=int)
    out[~transverse] = 5
    out[transverse] = 4
    out[in_outer & transverse] = 2
    out[in_outer & ~transverse] = 3
    out[in_elong] = 1
    out[in_core] = 0
    return out


@dataclass
class AtomScanResult:
    p: float
    M: int
    j_values: np.ndarray
    lp_values: np.ndarray
    fitted_slope: float
    predicted_slope: float

    def rows(self):
        for j, v in zip(self.j_values, self.lp_values):
            yield (int(j), self.p, self.M, v, math.log2(v),
                   self.predicted_slope, self.fitted_slope)


def dominant_direction(atom: Atom, radii=(1.0, 2.0, 4.0), n_angles=256):
    """Angle at which the atom's transform carries the most ring mass
    (radial average over the given radii).  Keeps the scan's fixed cap away
    from accidental angular nulls of the particular atom."""
    ang = 2.0 * np.pi * np.arange(n_angles) / n_angles
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    grids = np.meshgrid(*([atom.xs] * 2), indexing="ij")
    ys = np.stack([g.ravel() for g in grids], axis=-1)
    av = atom.values.ravel()
    nz = av != 0.0
    ys = ys[nz]; av = av[nz]
    mass = np.zeros(n_angles)
    for r in radii:
        ah = np.exp(-2j * np.pi * r * (dirs @ ys.T)) @ av
        mass += np.abs(ah) ** 2
    return float(ang[int(np.argmax(mass))])


def atom_scaling_scan(p, M, d=2, j_range=range(4, 10), lam=0.5, seed=0,
                      t_grid=None, per_octave=3, atom: Optional[Atom] = None,
                      caps_for=None) -> AtomScanResult:
    """Fit the growth exponent of ||sup_t cap piece of an atom||_p in j.

    p may be a single exponent or a sequence (one sup map per j is shared
    across exponents); returns one result per exponent in that case.  The
    fixed cap is the one nearest the atom's dominant transform direction.
    """
    from .distance import make_builtin
    p_list = list(np.atleast_1d(p))
    if atom is None:
        atom = make_atom(p_list[0], M, d=d, seed=seed)
    rho = make_builtin("euclidean", d)
    rings = RingSystem(lam=lam, j_max=max(j_range) + 2)
    theta_star = dominant_direction(atom)
    target = np.array([math.cos(theta_star), math.sin(theta_star)])
    norms = {pp: [] for pp in p_list}
    js = list(j_range)
    for j in js:
        caps = caps_for(j) if caps_for is not None else None
        if caps is None:
            from .decomp import make_cap_system
            caps = make_cap_system(j, rho)
        nu = int(np.argmax(caps.directions @ target))
        ax1 = graded_axis(j, per_octave)
        ax2 = graded_axis(j, per_octave)
        sup = atom_maximal(atom, j, nu, caps, rings, t_grid=t_grid,
                           x_grid=(ax1, ax2))
        meas = np.outer(cell_measures(ax1), cell_measures(ax2))
        for pp in p_list:
            norms[pp].append(lp_norm_weighted(sup, meas, pp))
    results = []
    for pp in p_list:
        slope = float(np.polyfit(js, np.log2(norms[pp]), 1)[0])
        pred = (d + 1) / 2.0 * (1.0 / pp - 1.0)
        results.append(AtomScanResult(p=pp, M=M, j_values=np.array(js),
                                      lp_values=np.array(norms[pp]),
                                      fitted_slope=slope, predicted_slope=pred))
    return results if len(results) > 1 else results[0]
