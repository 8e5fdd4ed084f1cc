"""Frequency- and physical-space decomposition toolkit.

* ring windows concentrating where the Riesz weight degenerates,
* angular cap partitions of the unit level set with their kernels,
* radial shells in space,
* dyadic band projectors, translated maximal functions, the square function,
* dyadic Whitney decompositions and the cube-energy profile used by the
  Calderon-Zygmund argument.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import ndimage

from .bumps import dyadic_window, origin_cutoff, plateau, shell_profile, smoothstep
from .distance import HomogeneousDistance, to_cosphere
from .spectral import GridFunction, SpectralField, TorusGrid

__all__ = [
    "RingSystem",
    "CapSystem",
    "KernelTile",
    "kernel_eval",
    "multiplier_shell_decay",
    "lp_projector",
    "peetre_maximal",
    "square_function",
    "WhitneyCube",
    "whitney_decompose",
    "CZProfile",
    "cz_profile",
    "PEETRE_BALL_FACTOR",
]

PEETRE_BALL_FACTOR = 2.0 ** 10      # translation ball radius = factor * d * 2^-k


# ---------------------------------------------------------------------------
# ring windows
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RingSystem:
    """Edge windows phi_j, j = 1..j_max, slicing (1-s)_+^lam near s = 1.

    phi_j(s) = 2^(j lam) (1-s)_+^lam (1 - upsilon0(s)) w(2^j (1-s)) where w is
    the dyadic bump supported in [1/4, 1]; the j = 1 window absorbs all
    coarser dyadic bumps so that sum_j 2^(-j lam) phi_j recovers the whole
    modified weight.
    """

    lam: float
    j_max: int

    def __post_init__(self):
        if self.j_max < 2:
            raise ValueError("need j_max >= 2")

    def window(self, j, s):
        """phi_j evaluated at s (array ok)."""
        if not 1 <= j <= self.j_max:
            raise ValueError(f"ring index {j} outside 1..{self.j_max}")
        s = np.asarray(s, dtype=float)
        u = 1.0 - s
        pos = u > 0.0
        base = np.where(pos, np.where(pos, u, 1.0) ** self.lam, 0.0)
        if j == 1:
            bump = sum(dyadic_window(2.0 ** jj * u) for jj in range(-2, 2))
        else:
            bump = dyadic_window(2.0 ** j * u)
        return 2.0 ** (j * self.lam) * base * (1.0 - origin_cutoff(s)) * bump

    def modified_weight(self, s):
        """(1 - upsilon0(s)) (1-s)_+^lam, the function the windows reassemble."""
        s = np.asarray(s, dtype=float)
        u = 1.0 - s
        pos = u > 0.0
        base = np.where(pos, np.where(pos, u, 1.0) ** self.lam, 0.0)
        return (1.0 - origin_cutoff(s)) * base

    def reconstruction_residual(self, n_grid=4000):
        """Sup norm of sum_j 2^(-j lam) phi_j - modified weight over the
        family's complete-coverage domain [0, 1 - 2^-(jmax+1)].

        The finest window is supported up to 1 - 2^-(jmax+2), but on the last
        half-octave it no longer overlaps a finer neighbor, so the partition
        sum is complete only one half-octave lower.
        """
        s = np.linspace(0.0, 1.0 - 2.0 ** (-self.j_max - 1), n_grid)
        total = sum(2.0 ** (-j * self.lam) * self.window(j, s)
                    for j in range(1, self.j_max + 1))
        return float(np.max(np.abs(total - self.modified_weight(s))))

    def derivative_growth(self, n_grid=60000):
        """max |phi_j'| / max |phi_{j-1}'| for j = 2..j_max (grid differences)."""
        s = np.linspace(0.0, 1.0 - 2.0 ** (-self.j_max - 4), n_grid)
        ds = s[1] - s[0]
        maxima = []
        for j in range(1, self.j_max + 1):
            v = self.window(j, s)
            maxima.append(np.max(np.abs(np.diff(v))) / ds)
        return np.array([maxima[j] / maxima[j - 1] for j in range(1, self.j_max)])


# ---------------------------------------------------------------------------
# angular caps
# ---------------------------------------------------------------------------

def _golden_spiral(n):
    """Quasi-uniform points on S^2 (golden-angle spiral)."""
    k = np.arange(n) + 0.5
    phi = np.arccos(1.0 - 2.0 * k / n)
    theta = np.pi * (1.0 + 5.0 ** 0.5) * k
    return np.stack([np.sin(phi) * np.cos(theta),
                     np.sin(phi) * np.sin(theta),
                     np.cos(phi)], axis=-1)


@dataclass(frozen=True)
class CapSystem:
    """Partition of directions into smooth caps of chordal radius ~ 2^(-j/2).

    Centers sit on the unit level set of rho; the direction layout is uniform
    angles (d = 2) or a golden-angle spiral (d = 3), with densities chosen so
    the cap count is a small multiple of 2^(j(d-1)/2) and neighboring centers
    stay >= 2^(-j/2) apart.
    """

    j: int
    rho: HomogeneousDistance
    centers: np.ndarray = field(repr=False)       # points on the unit level set
    directions: np.ndarray = field(repr=False)    # center / |center|
    normals: np.ndarray = field(repr=False)       # outward normals at centers

    @property
    def count(self):
        return len(self.centers)

    @property
    def radius(self):
        """Chordal support radius of each cap weight."""
        return 1.5 * 2.0 ** (-self.j / 2.0)

    def weight(self, dirs, nu):
        """Unnormalized cap bump at unit directions (n, d)."""
        dist = np.linalg.norm(np.atleast_2d(dirs) - self.directions[nu], axis=-1)
        r = dist / self.radius
        return 1.0 - smoothstep(2.0 * r - 1.0)

    def chi(self, xi, nu):
        """Normalized degree-0 cap cutoff at frequencies xi (n, d)."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        dirs = xi / np.linalg.norm(xi, axis=-1, keepdims=True)
        total = np.zeros(len(dirs))
        for mu in self._near(nu):
            total += self.weight(dirs, mu)
        return self.weight(dirs, nu) / total

    def chi_all(self, dirs):
        """All cap weights normalized at unit directions; shape (count, n)."""
        dirs = np.atleast_2d(dirs)
        w = np.empty((self.count, len(dirs)))
        for nu in range(self.count):
            w[nu] = self.weight(dirs, nu)
        return w / np.sum(w, axis=0, keepdims=True)

    def _near(self, nu):
        """Caps whose support can overlap cap nu (center distance < 2 radius)."""
        dd = np.linalg.norm(self.directions - self.directions[nu], axis=-1)
        return np.nonzero(dd < 2.0 * self.radius + 1e-12)[0]

    def projection(self, nu, h):
        """Component of h orthogonal to the cap normal."""
        e = self.normals[nu]
        h = np.asarray(h, dtype=float)
        return h - np.tensordot(h, e, axes=(-1, 0))[..., None] * e

    def min_separation(self):
        from scipy.spatial import cKDTree
        tree = cKDTree(self.centers)
        dist, _ = tree.query(self.centers, k=2)
        return float(dist[:, 1].min())

    def max_overlap(self, n_sample=4000, seed=11):
        rng = np.random.default_rng(np.random.Philox(seed))
        dirs = rng.normal(size=(n_sample, self.rho.d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        count = np.zeros(len(dirs), dtype=int)
        for nu in range(self.count):
            count += self.weight(dirs, nu) > 0.0
        return int(count.max())

    def partition_residual(self, n_sample=2000, seed=12):
        rng = np.random.default_rng(np.random.Philox(seed))
        dirs = rng.normal(size=(n_sample, self.rho.d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        return float(np.max(np.abs(self.chi_all(dirs).sum(axis=0) - 1.0)))


def make_cap_system(j, rho: HomogeneousDistance) -> CapSystem:
    if rho.d == 2:
        spacing = 2.0 * 2.0 ** (-j / 2.0)
        n = max(6, int(round(2.0 * np.pi / spacing)))
        ang = 2.0 * np.pi * np.arange(n) / n
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    elif rho.d == 3:
        n = max(8, int(round(3.6 * 2.0 ** j)))
        dirs = _golden_spiral(n)
    else:
        raise NotImplementedError("caps are built for d = 2 and d = 3")
    centers = np.stack([to_cosphere(rho, u).point for u in dirs])
    normals = np.stack([to_cosphere(rho, u).normal for u in dirs])
    return CapSystem(j=j, rho=rho, centers=centers, directions=dirs, normals=normals)


# ---------------------------------------------------------------------------
# cap-ring kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelTile:
    """One angular piece of a ring kernel: the inverse transform of
    phi_j(rho(.)) chi_{j,nu}(.), evaluated by direct quadrature over the
    compact cap-ring support.  Shell-truncated variants multiply by the
    radial shell window in space.
    """

    j: int
    nu: int
    caps: CapSystem
    rings: RingSystem

    @property
    def center(self):
        return self.caps.centers[self.nu]

    @property
    def normal(self):
        return self.caps.normals[self.nu]

    def amplitude_scale(self):
        """2^(-j(d+1)/2), the expected kernel sup scale."""
        d = self.caps.rho.d
        return 2.0 ** (-self.j * (d + 1) / 2.0)


MAX_KERNEL_NODES = 2 ** 24


def _tile_quadrature(tile: KernelTile, x, refine=1):
    """Trapezoid nodes/weights over the cap-ring support in (level, angle)."""
    rho = tile.caps.rho
    if rho.d != 2:
        raise NotImplementedError("direct kernel quadrature is implemented for d = 2")
    j = tile.j
    x = np.asarray(x, dtype=float)
    xn = np.linalg.norm(x)
    n_s = int(refine * max(256, 10 * xn * 2.0 ** (-j))) + 1
    half_angle = 1.05 * tile.caps.radius      # chordal ~ angle for these widths
    n_t = int(refine * max(288, 10 * xn * half_angle)) + 1
    if n_s * n_t > MAX_KERNEL_NODES:
        raise ValueError("kernel quadrature budget exceeded")
    center_angle = np.arctan2(tile.caps.directions[tile.nu][1],
                              tile.caps.directions[tile.nu][0])
    s = np.linspace(1.0 - 2.0 ** (-j), 1.0, n_s)            # rho level
    ang = center_angle + np.linspace(-half_angle, half_angle, n_t)
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    base = np.stack([to_cosphere(rho, u).point for u in dirs])   # (n_t, 2)
    # xi(s, theta) = s^b * base(theta); jacobian via exact radial part and
    # finite-difference tangent along theta
    S = s[:, None]
    pts = (S ** rho.b)[..., None] * base[None, :, :]             # (n_s, n_t, 2)
    dbase = np.gradient(base, ang, axis=0)                       # (n_t, 2)
    radial = rho.b * S ** (rho.b - 1.0)
    cross = base[:, 0] * dbase[:, 1] - base[:, 1] * dbase[:, 0]  # (n_t,)
    jac = np.abs(radial * (S ** rho.b) * cross[None, :])
    w_s = np.full(n_s, s[1] - s[0]); w_s[[0, -1]] *= 0.5
    w_t = np.full(n_t, ang[1] - ang[0]); w_t[[0, -1]] *= 0.5
    weights = jac * w_s[:, None] * w_t[None, :]
    return pts, weights, ang


def kernel_eval(tile: KernelTile, x, n_shell: Optional[int] = None,
                tol=1e-6, refine_levels=(1, 2)):
    """Kernel value at x by direct cap-ring quadrature with a two-level
    refinement check; raises if the levels disagree beyond tol relative."""
    x = np.asarray(x, dtype=float)
    vals = []
    for refine in refine_levels:
        pts, weights, ang = _tile_quadrature(tile, x, refine)
        mult = tile.rings.window(tile.j, tile.caps.rho(pts)) \
            * tile.caps.chi(pts.reshape(-1, 2), tile.nu).reshape(pts.shape[:2])
        phase = np.exp(2j * np.pi * (pts @ x))
        vals.append(complex(np.sum(mult * weights * phase)))
    v1, v2 = vals[-2], vals[-1]
    # floors the comparison at the deep-decay noise level: values below
    # 1e-6 of the kernel peak are quadrature-roundoff dominated
    scale = max(abs(v2), 1e-6 * tile.amplitude_scale())
    if abs(v1 - v2) > tol * scale:
        raise RuntimeError(
            f"kernel quadrature refinement disagreement {abs(v1 - v2) / scale:.2e} "
            f"at x = {x}")
    out = v2
    if n_shell is not None:
        out *= float(shell_profile(2.0 ** (-tile.j) * np.linalg.norm(x), n_shell))
    return out


def _radial_ring_kernel(rings: RingSystem, rho: HomogeneousDistance, j,
                        s_grid):
    """K_j(|x|) for a radial multiplier (euclidean / bochner_riesz), d = 2:
    K_j(r) = 2 pi int phi_j(rho(q)) J0(2 pi q r) q dq."""
    from scipy.special import j0
    if rho.kind not in ("euclidean", "bochner_riesz"):
        raise NotImplementedError("radial shell table needs a radial multiplier")
    # radii where rho(q) spans the ring support
    lo_level, hi_level = 1.0 - 2.0 ** (-j), 1.0
    to_radius = (lambda s: s) if rho.kind == "euclidean" else np.sqrt
    qlo, qhi = to_radius(lo_level), to_radius(hi_level)
    nq = 600
    q = np.linspace(qlo, qhi, nq)
    rho_q = q if rho.kind == "euclidean" else q ** 2
    w = rings.window(j, rho_q) * q
    wq = np.full(nq, q[1] - q[0]); wq[[0, -1]] *= 0.5
    return 2.0 * np.pi * (j0(2.0 * np.pi * np.outer(s_grid, q)) @ (w * wq))


def multiplier_shell_decay(rings: RingSystem, rho: HomogeneousDistance,
                           j: int, n_values, xi_samples,
                           M0=2.0, M1=2.0):
    """Transform of the shell-truncated ring kernel against the reference
    envelope 2^(-n M0) (1 + 2^j dist(xi, unit level set))^(-M1).

    Returns a table of rows (n, |xi|, dist, value, envelope, ratio) and the
    max ratio.  Radial multipliers only (d = 2).
    """
    from scipy.special import j0
    xi_samples = np.atleast_2d(np.asarray(xi_samples, dtype=float))
    xi_norm = np.linalg.norm(xi_samples, axis=1)
    # distance to the unit level set along the ray (radial surface: radius 1)
    dist = np.abs(xi_norm - 1.0)
    rows = []
    max_ratio = 0.0
    for n in n_values:
        if n < 0:
            raise ValueError("shell index must be >= 0")
        s_hi = 2.0 ** (j + n)
        s_lo = 0.0 if n == 0 else 2.0 ** (j + n - 2)
        ns = int(min(MAX_KERNEL_NODES, 24 * (s_hi - s_lo) + 200))
        s = np.linspace(max(s_lo, 1e-9), s_hi, ns)
        Kj = _radial_ring_kernel(rings, rho, j, s)
        shell = shell_profile(2.0 ** (-j) * s, n)
        ws = np.full(ns, s[1] - s[0]); ws[[0, -1]] *= 0.5
        core = Kj * shell * s * ws
        for xn, dv in zip(xi_norm, dist):
            val = abs(2.0 * np.pi * np.sum(core * j0(2.0 * np.pi * xn * s)))
            env = 2.0 ** (-n * M0) * (1.0 + 2.0 ** j * dv) ** (-M1)
            ratio = val / env
            rows.append((n, xn, dv, val, env, ratio))
            max_ratio = max(max_ratio, ratio)
    return rows, max_ratio


# ---------------------------------------------------------------------------
# band projectors, translated maxima, square function
# ---------------------------------------------------------------------------

def band_profile(rho_values, b):
    """The dyadic band window: 1 where rho is in [2^(-1/b)/4, 4 * 2^(1/b)],
    supported in half/double that interval."""
    lo = 0.25 * 2.0 ** (-1.0 / b)
    hi = 4.0 * 2.0 ** (1.0 / b)
    return plateau(np.asarray(rho_values, dtype=float), lo, 0.5 * lo, hi, 2.0 * hi)


def lp_projector(c: SpectralField, k: int, rho: HomogeneousDistance) -> SpectralField:
    """Band projector: multiply coefficients by the window at scale 2^k."""
    freqs = c.frequencies().reshape(-1, c.d)
    vals = np.zeros(len(freqs))
    nz = np.any(freqs != 0.0, axis=1)
    vals[nz] = rho(freqs[nz])
    mult = band_profile(vals * 2.0 ** (-k / rho.b), rho.b).reshape(c.coeffs.shape)
    mult.reshape(-1)[~nz] = 0.0
    return SpectralField(mode=c.mode, d=c.d, L=c.L, coeffs=c.coeffs * mult,
                         period=c.period)


def _disk_maximum(arr, r_pix):
    """Max filter over the wrapped euclidean disk of radius r_pix (pixels),
    decomposed into rows of a disk footprint (separable 1-d passes)."""
    out = np.full_like(arr, -np.inf)
    for dy in range(-r_pix, r_pix + 1):
        wx = int(np.floor(np.sqrt(max(r_pix * r_pix - dy * dy, 0))))
        rolled = np.roll(arr, -dy, axis=0)
        line = ndimage.maximum_filter1d(rolled, size=2 * wx + 1, axis=1, mode="wrap")
        np.maximum(out, line, out=out)
    return out


def peetre_maximal(c: SpectralField, k: int, grid: TorusGrid,
                   rho: HomogeneousDistance,
                   ball_factor=PEETRE_BALL_FACTOR) -> GridFunction:
    """Translated maximal function of the band piece at scale 2^k:
    max of |band piece| over grid offsets within radius ball_factor * d * 2^-k
    (wrap-around).  The default factor matches the operator used in the
    analysis; desk-scale experiments pass a small factor so the ball does not
    wrap the whole box.
    """
    from .spectral import synthesize
    if grid.spacing > 2.0 ** (-k - 2):
        raise ValueError(
            f"grid spacing {grid.spacing} too coarse for band scale k={k}; "
            f"need <= {2.0 ** (-k - 2)}")
    piece = np.abs(synthesize(lp_projector(c, k, rho), grid).values)
    radius = ball_factor * grid.d * 2.0 ** (-k)
    r_pix = int(np.floor(radius / grid.spacing))
    if 2 * r_pix + 1 >= grid.n:
        vals = np.full_like(piece, piece.max())
    elif r_pix < 1:
        vals = piece
    elif grid.d == 2:
        vals = _disk_maximum(piece, r_pix)
    else:
        vals = ndimage.maximum_filter(piece, size=2 * r_pix + 1, mode="wrap")
    return GridFunction(grid=grid, values=vals.astype(complex))


def square_function(c: SpectralField, grid: TorusGrid, k_range,
                    rho: HomogeneousDistance,
                    ball_factor=PEETRE_BALL_FACTOR,
                    return_pieces=False):
    """l^2 aggregate over scales of the translated maximal functions."""
    from .spectral import synthesize
    total = np.zeros((grid.n,) * grid.d)
    pieces = {}
    for k in k_range:
        mk = np.abs(peetre_maximal(c, k, grid, rho, ball_factor).values)
        total += mk ** 2
        if return_pieces:
            pieces[k] = synthesize(lp_projector(c, k, rho), grid).values
    out = GridFunction(grid=grid, values=np.sqrt(total).astype(complex))
    return (out, pieces) if return_pieces else out


# ---------------------------------------------------------------------------
# Whitney decomposition (integer cell units, chessboard metric, wrap-around)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WhitneyCube:
    corner: Tuple[int, ...]      # cell indices
    size: int                    # side length in cells
    dist: int                    # chessboard cell distance to the complement


def _chessboard_dt(mask):
    """Chessboard distance (in cells) to the complement, wrap-around."""
    reps = (3,) * mask.ndim
    big = np.tile(mask, reps)
    dt = ndimage.distance_transform_cdt(big, metric="chessboard")
    n = mask.shape[0]
    sl = tuple(slice(n, 2 * n) for _ in range(mask.ndim))
    return dt[sl]


def whitney_decompose(mask) -> List[WhitneyCube]:
    """Dyadic Whitney decomposition of a grid open set (boolean mask).

    Returns disjoint dyadic cubes covering the mask, each satisfying
    size <= dist <= 4 size exactly, where dist is the chessboard distance
    (in cells) from the cube to the complement and size doubles as the
    diameter in the same metric.  Cells adjacent to the complement sit at
    distance 1.
    """
    mask = np.asarray(mask, dtype=bool)
    n = mask.shape[0]
    if any(s != n for s in mask.shape):
        raise ValueError("mask must be a square box")
    if mask.all():
        raise ValueError("mask covers the full grid; no complement to measure from")
    if not mask.any():
        raise ValueError("mask is empty")
    dt = _chessboard_dt(mask)
    cubes: List[WhitneyCube] = []
    covered = np.zeros_like(mask)
    size = n // 2
    while size >= 1:
        # block-reduce min(dt) and all(mask) and none(covered) per cube
        view = tuple(slice(0, n) for _ in range(mask.ndim))
        shape = sum((((n // size), size),) * mask.ndim, ())
        dtb = dt[view].reshape(shape)
        mb = mask[view].reshape(shape)
        cb = covered[view].reshape(shape)
        axes = tuple(range(1, 2 * mask.ndim, 2))
        dmin = dtb.min(axis=axes)
        inside = mb.all(axis=axes)
        free = ~cb.any(axis=axes)
        accept = inside & free & (dmin >= size)
        for idx in np.argwhere(accept):
            corner = tuple(int(i) * size for i in idx)
            cubes.append(WhitneyCube(corner=corner, size=size,
                                     dist=int(dmin[tuple(idx)])))
            sl = tuple(slice(c, c + size) for c in corner)
            covered[sl] = True
        size //= 2
    for w in cubes:
        if not (w.size <= w.dist <= 4 * w.size):
            raise AssertionError(f"Whitney contract violated: {w}")
    return cubes


# ---------------------------------------------------------------------------
# cube classes and the energy profile
# ---------------------------------------------------------------------------

@dataclass
class CZProfile:
    """Level sets of the square function, the dyadic cube classification,
    Whitney cubes of the dilated level sets, per-cube energies, the stacked
    profile U, and the good/bad split at the given threshold."""

    grid: TorusGrid
    p: float
    alpha: float
    sf: GridFunction
    levels: List[int]
    skipped_levels: List[int]
    mu_of_cube: Dict[int, np.ndarray]            # k -> integer map of cube classes
    whitney: Dict[int, List[WhitneyCube]]        # mu -> cubes
    gamma: Dict[int, np.ndarray]                 # mu -> per-cube energies
    good: Dict[int, np.ndarray]                  # mu -> boolean (gamma <= alpha)
    U: GridFunction = None
    U_l1: float = 0.0
    sf_lp_p: float = 0.0
    dilate_threshold: float = 0.0
    ball_factor: float = PEETRE_BALL_FACTOR


def _dyadic_box_maximal(mask, scales_pix):
    out = np.zeros(mask.shape)
    m = mask.astype(float)
    for s in scales_pix:
        np.maximum(out, ndimage.uniform_filter(m, size=int(s), mode="wrap"), out=out)
    return out


def cz_profile(c: SpectralField, p: float, alpha: float, grid: TorusGrid,
               rho: HomogeneousDistance, k_range,
               ball_factor=1.0, dilate_threshold=None,
               max_dilate_scale=0.25) -> CZProfile:
    """Build the full cube-energy profile of a field.

    Every dyadic cube of side 2^-k (k in k_range) is classified by the unique
    level mu at which it holds at least half its measure above 2^mu but less
    than half above 2^(mu+1).  Level sets are dilated through a box-maximal
    with threshold 10^-d (the scale range is capped so the dilate of a small
    set cannot swallow the whole box), Whitney-decomposed, and each Whitney
    cube is charged the energy of its class-mu cubes.

    Levels whose dilate covers the entire box admit no Whitney decomposition
    and are recorded in skipped_levels (they contribute nothing to U).
    """
    if not (0 < p <= 2):
        raise ValueError("p must lie in (0, 2]")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    d = grid.d
    thresh = 10.0 ** (-d) if dilate_threshold is None else dilate_threshold
    sf, pieces = square_function(c, grid, k_range, rho, ball_factor,
                                 return_pieces=True)
    svals = np.abs(sf.values)
    n = grid.n
    finite = svals[svals > 0]
    if finite.size == 0:
        empty = GridFunction(grid=grid, values=np.zeros((n,) * d, dtype=complex))
        return CZProfile(grid=grid, p=p, alpha=alpha, sf=sf, levels=[],
                         skipped_levels=[], mu_of_cube={}, whitney={}, gamma={},
                         good={}, U=empty, U_l1=0.0, sf_lp_p=0.0,
                         dilate_threshold=thresh, ball_factor=ball_factor)
    mu_lo = int(np.floor(np.log2(finite.min()))) - 1
    mu_hi = int(np.ceil(np.log2(svals.max())))
    levels = list(range(mu_lo, mu_hi + 1))

    # cube classification: mu(R) = max mu with |R cap {sf > 2^mu}| >= |R| / 2,
    # i.e. ceil(log2 v) - 1 for v the ceil(m/2)-th largest sample in R.
    mu_of_cube = {}
    for k in k_range:
        side = 2.0 ** (-k)
        cells = int(round(side / grid.spacing))
        if cells < 1 or n % cells != 0 or cells > n:
            continue
        nb = n // cells
        blocks = svals.reshape(sum(((nb, cells),) * d, ()))
        axes = tuple(range(1, 2 * d, 2))
        flat = np.moveaxis(blocks, axes, tuple(range(d, 2 * d))).reshape(
            (nb,) * d + (cells ** d,))
        m = cells ** d
        kth = m - int(np.ceil(m / 2.0))
        v = np.partition(flat, kth, axis=-1)[..., kth]
        mu_of_cube[k] = np.where(v > 0, np.ceil(np.log2(np.maximum(v, 1e-300))) - 1,
                                 -(2 ** 30)).astype(int)

    scales_pix = []
    s = max_dilate_scale * n
    while s >= 1:
        scales_pix.append(max(int(round(s)), 1))
        s /= 2
    whitney: Dict[int, List[WhitneyCube]] = {}
    gamma: Dict[int, np.ndarray] = {}
    good: Dict[int, np.ndarray] = {}
    skipped = []
    U = np.zeros((n,) * d)
    for mu in levels:
        om = svals > 2.0 ** mu
        if not om.any():
            continue
        dil = _dyadic_box_maximal(om, scales_pix) > thresh
        if dil.all():
            skipped.append(mu)
            continue
        if not dil.any():
            continue
        cubes = whitney_decompose(dil)
        energies = np.zeros(len(cubes))
        for i, w in enumerate(cubes):
            tot = 0.0
            for k, mu_map in mu_of_cube.items():
                cells = int(round(2.0 ** (-k) / grid.spacing))
                if cells > w.size:
                    continue
                lo = tuple(cc // cells for cc in w.corner)
                hi = tuple((cc + w.size) // cells for cc in w.corner)
                sel = tuple(slice(a, b) for a, b in zip(lo, hi))
                hit = mu_map[sel] == mu
                if not hit.any():
                    continue
                piece = pieces[k]
                wsl = tuple(slice(cc, cc + w.size) for cc in w.corner)
                en = np.abs(piece[wsl]) ** 2
                enb = en.reshape(sum(((w.size // cells, cells),) * d, ()))
                axes = tuple(range(1, 2 * d, 2))
                per_cube = enb.sum(axis=axes) * grid.cellvol
                tot += per_cube[hit].sum()
            w_meas = (w.size * grid.spacing) ** d
            energies[i] = np.sqrt(tot / w_meas)
            wsl = tuple(slice(cc, cc + w.size) for cc in w.corner)
            U[wsl] += energies[i] ** p
        whitney[mu] = cubes
        gamma[mu] = energies
        good[mu] = energies <= alpha
    Ug = GridFunction(grid=grid, values=U.astype(complex))
    from .spectral import lp_norm
    return CZProfile(grid=grid, p=p, alpha=alpha, sf=sf, levels=levels,
                     skipped_levels=skipped, mu_of_cube=mu_of_cube,
                     whitney=whitney, gamma=gamma, good=good, U=Ug,
                     U_l1=lp_norm(Ug, 1.0),
                     sf_lp_p=lp_norm(sf, p) ** p,
                     dilate_threshold=thresh, ball_factor=ball_factor)
