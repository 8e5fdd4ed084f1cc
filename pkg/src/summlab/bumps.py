"""Smooth cutoff profiles shared across the library.

Everything here is built from the classic exponential mollifier, so all
profiles are C^infinity with exact plateaus (no approximation at the
plateau edges: the transition function is identically 0 / 1 outside the
open transition interval).
"""
import numpy as np

__all__ = [
    "smoothstep",
    "plateau",
    "origin_cutoff",
    "dyadic_lowpass",
    "dyadic_window",
    "shell_profile",
]


def smoothstep(y):
    """C^inf monotone step: 0 for y <= 0, 1 for y >= 1.

    smoothstep(y) = B(y) / (B(y) + B(1-y)) with B(y) = exp(-1/y) for y > 0.
    """
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    lo = y <= 0.0
    hi = y >= 1.0
    mid = ~(lo | hi)
    out[lo] = 0.0
    out[hi] = 1.0
    ym = y[mid]
    bp = np.exp(-1.0 / ym)
    bq = np.exp(-1.0 / (1.0 - ym))
    out[mid] = bp / (bp + bq)
    if out.ndim == 0:
        return float(out)
    return out


def plateau(v, lo, lo_edge, hi, hi_edge):
    """Smooth plateau: 1 on [lo, hi], 0 outside (lo_edge, hi_edge).

    Requires lo_edge < lo <= hi < hi_edge.
    """
    v = np.asarray(v, dtype=float)
    rise = smoothstep((v - lo_edge) / (lo - lo_edge))
    fall = 1.0 - smoothstep((v - hi) / (hi_edge - hi))
    return rise * fall


def origin_cutoff(s):
    """Low-frequency cutoff: 1 for s <= 4/5, 0 for s >= 9/10, monotone."""
    return 1.0 - smoothstep(10.0 * (np.asarray(s, dtype=float) - 0.8))


def dyadic_lowpass(v):
    """1 for v <= 1/2, 0 for v >= 1; the generator of the dyadic partition."""
    return 1.0 - smoothstep(2.0 * np.asarray(v, dtype=float) - 1.0)


def dyadic_window(v):
    """Bump supported in [1/4, 1] with sum_{j in Z} dyadic_window(2^j v) = 1 for v > 0."""
    v = np.asarray(v, dtype=float)
    return dyadic_lowpass(v) - dyadic_lowpass(2.0 * v)


def shell_profile(r, n):
    """Radial shell windows: n=0 is 1 for r <= 1/2 and 0 for r >= 1;
    for n >= 1 the difference of dilates.  They telescope exactly:
    sum_{n>=0} shell_profile(r, n) = 1.
    """
    r = np.asarray(r, dtype=float)
    if n == 0:
        return dyadic_lowpass(r)
    return dyadic_lowpass(2.0 ** (-n) * r) - dyadic_lowpass(2.0 ** (1 - n) * r)
