"""Grids, coefficient boxes, discrete transforms, and norm estimators.

Two settings share one FFT backbone:

* torus mode: multiple Fourier series on the unit torus, coefficients on
  the integer lattice box |l_i| <= L;
* rd mode: band-limited functions on R^d represented by periodization on a
  box of period `period` (default 64).  Frequencies live on the lattice
  l / period; a coefficient stores the lattice sum weight, so R^d integrals
  are plain coefficient sums.

All reductions go through numpy's pairwise summation in a fixed index
order, so results are identical regardless of how callers parallelize.
"""
import io
import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TorusGrid",
    "GridFunction",
    "SpectralField",
    "analyze",
    "synthesize",
    "lp_norm",
    "weak_lp_quasinorm",
    "lp_norm_weighted",
    "weak_lp_weighted",
    "write_container",
    "read_container",
    "ContainerError",
]

MAX_NODE_BUDGET = 2 ** 26


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid with n nodes per axis on a box of the given period.

    Node coordinates along each axis are period * {0, 1/n, ..., (n-1)/n};
    the cell volume is (period / n)^d.
    """

    d: int
    n: int
    period: float = 1.0

    def __post_init__(self):
        if self.n < 4 or (self.n & (self.n - 1)) != 0:
            raise ValueError(f"grid size must be a power of two >= 4, got {self.n}")
        if self.n ** self.d > MAX_NODE_BUDGET:
            raise ValueError(f"grid {self.n}^{self.d} exceeds node budget {MAX_NODE_BUDGET}")
        if self.period <= 0:
            raise ValueError("period must be positive")

    @property
    def cellvol(self):
        return (self.period / self.n) ** self.d

    @property
    def spacing(self):
        return self.period / self.n

    def axis(self):
        return self.period * np.arange(self.n) / self.n

    def nodes(self):
        """All node coordinates, shape (n^d, d)."""
        axes = [self.axis()] * self.d
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass(frozen=True)
class GridFunction:
    """Complex samples on a TorusGrid."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.grid.n,) * self.grid.d:
            raise ValueError("value array shape does not match the grid")


@dataclass(frozen=True)
class SpectralField:
    """Coefficients on the centered lattice box |l_i| <= L.

    mode 'torus': coefficient of the character exp(2 pi i <l, x>).
    mode 'rd'   : coefficient at frequency l / period; the values are
                  period^{-d} * fhat(l / period), so synthesis is the
                  periodized Riemann sum for the inverse transform.
    """

    mode: str
    d: int
    L: int
    coeffs: np.ndarray
    period: float = 1.0

    def __post_init__(self):
        if self.mode not in ("torus", "rd"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.coeffs.shape != (2 * self.L + 1,) * self.d:
            raise ValueError("coefficient array must be a centered box (2L+1)^d")
        if self.mode == "torus" and self.period != 1.0:
            raise ValueError("torus mode has unit period")

    def lattice(self):
        """Integer lattice points, shape (2L+1, ..., d)."""
        ax = np.arange(-self.L, self.L + 1)
        mesh = np.meshgrid(*([ax] * self.d), indexing="ij")
        return np.stack(mesh, axis=-1)

    def frequencies(self):
        """Physical frequencies: lattice / period."""
        return self.lattice() / self.period

    def zeros_like(self):
        return SpectralField(mode=self.mode, d=self.d, L=self.L,
                             coeffs=np.zeros_like(self.coeffs), period=self.period)


def _check_resolution(grid, L):
    if grid.n < 2 * L + 2:
        raise ValueError(
            f"grid with {grid.n} nodes per axis aliases a coefficient box of "
            f"half-width {L}; need n >= {2 * L + 2}")


def analyze(g: GridFunction, L: int, mode="torus", period=None) -> SpectralField:
    """Trapezoid-exact discrete transform onto the centered box |l_i| <= L.

    Exact for trigonometric polynomials of degree <= L on the grid.
    """
    grid = g.grid
    _check_resolution(grid, L)
    per = grid.period if period is None else period
    chat = np.fft.fftn(g.values) / grid.n ** grid.d
    idx = np.arange(-L, L + 1) % grid.n
    box = chat[np.ix_(*([idx] * grid.d))]
    return SpectralField(mode=mode, d=grid.d, L=L, coeffs=box.copy(),
                         period=1.0 if mode == "torus" else per)


def synthesize(c: SpectralField, grid: TorusGrid) -> GridFunction:
    """Evaluate the coefficient box on the grid via zero-padded inverse FFT."""
    _check_resolution(grid, c.L)
    if c.d != grid.d:
        raise ValueError("dimension mismatch")
    full = np.zeros((grid.n,) * grid.d, dtype=complex)
    idx = np.arange(-c.L, c.L + 1) % grid.n
    full[np.ix_(*([idx] * grid.d))] = c.coeffs
    vals = np.fft.ifftn(full) * grid.n ** grid.d
    return GridFunction(grid=grid, values=vals)


def lp_norm_weighted(values, measures, p):
    """(sum |v|^p m)^(1/p) over paired samples/measures; p = inf gives the max."""
    if p <= 0:
        raise ValueError(f"p must be positive, got {p}")
    a = np.abs(np.asarray(values)).ravel()
    if np.isinf(p):
        return float(a.max()) if a.size else 0.0
    m = np.asarray(measures, dtype=float).ravel()
    if m.size == 1:
        return float((np.sum(a ** p) * m[0]) ** (1.0 / p))
    return float(np.sum(a ** p * m) ** (1.0 / p))


def weak_lp_weighted(values, measures, p):
    """Exact sup_alpha alpha * meas({|v| > alpha})^(1/p) for the discrete measure."""
    if p <= 0 or np.isinf(p):
        raise ValueError(f"weak quasinorm needs finite p > 0, got {p}")
    a = np.abs(np.asarray(values)).ravel()
    if a.size == 0:
        return 0.0
    m = np.asarray(measures, dtype=float).ravel()
    if m.size == 1:
        m = np.full(a.size, m[0])
    order = np.argsort(a)[::-1]
    a = a[order]
    csum = np.cumsum(m[order])
    return float(np.max(a * csum ** (1.0 / p)))


def lp_norm(g: GridFunction, p) -> float:
    """Riemann-sum L^p norm on the grid; p = inf returns the max."""
    return lp_norm_weighted(g.values, np.array([g.grid.cellvol]), p)


def weak_lp_quasinorm(g: GridFunction, p) -> float:
    """Grid-measure weak-L^p quasinorm (exact sup over thresholds)."""
    return weak_lp_weighted(g.values, np.array([g.grid.cellvol]), p)


# ---------------------------------------------------------------------------
# binary container ("SLAB"): header + little-endian f64 pairs, row-major
# ---------------------------------------------------------------------------

_MAGIC = b"SLAB"
_VERSION = 1
_MODE_CODE = {"torus": 0, "rd": 1, "gridfunction": 2}
_MODE_NAME = {v: k for k, v in _MODE_CODE.items()}


class ContainerError(ValueError):
    pass


def write_container(obj) -> bytes:
    """Serialize a SpectralField or GridFunction (bit-exact round trip)."""
    if isinstance(obj, SpectralField):
        mode = obj.mode
        dims = (2 * obj.L + 1,) * obj.d
        period = obj.period
        arr = obj.coeffs
    elif isinstance(obj, GridFunction):
        mode = "gridfunction"
        dims = (obj.grid.n,) * obj.grid.d
        period = obj.grid.period
        arr = obj.values
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<IBB", _VERSION, _MODE_CODE[mode], len(dims)))
    buf.write(struct.pack(f"<{len(dims)}Q", *dims))
    buf.write(struct.pack("<d", period))
    data = np.ascontiguousarray(arr, dtype=np.complex128)
    buf.write(data.astype("<c16").tobytes())
    return buf.getvalue()


def read_container(blob: bytes):
    """Inverse of write_container; raises ContainerError on any corruption."""
    if len(blob) < 10 or blob[:4] != _MAGIC:
        raise ContainerError("bad magic; not a SLAB container")
    version, mode_code, d = struct.unpack_from("<IBB", blob, 4)
    if version != _VERSION:
        raise ContainerError(f"unsupported container version {version}")
    if mode_code not in _MODE_NAME:
        raise ContainerError(f"unknown mode code {mode_code}")
    off = 10
    if len(blob) < off + 8 * d + 8:
        raise ContainerError("truncated header")
    dims = struct.unpack_from(f"<{d}Q", blob, off)
    off += 8 * d
    (period,) = struct.unpack_from("<d", blob, off)
    off += 8
    count = int(np.prod(dims))
    need = off + 16 * count
    if len(blob) != need:
        raise ContainerError(f"payload length mismatch: expected {need} bytes, got {len(blob)}")
    arr = np.frombuffer(blob, dtype="<c16", count=count, offset=off).reshape(dims)
    arr = arr.astype(np.complex128)
    mode = _MODE_NAME[mode_code]
    if mode == "gridfunction":
        n = dims[0]
        if any(x != n for x in dims):
            raise ContainerError("grid container must be square")
        return GridFunction(grid=TorusGrid(d=d, n=n, period=period), values=arr)
    L = (dims[0] - 1) // 2
    if any(x != 2 * L + 1 for x in dims):
        raise ContainerError("coefficient container must be a centered box")
    return SpectralField(mode=mode, d=d, L=L, coeffs=arr, period=period)
