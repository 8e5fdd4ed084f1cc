"""Homogeneous distance functions and the geometry of their unit level set.

A homogeneous distance is a positive function rho on R^d \\ {0}, smooth away
from the origin, satisfying rho(t^b xi) = t rho(xi) for some exponent b > 0.
Equivalently rho(c xi) = c^(1/b) rho(xi) for c > 0.  The unit level set
{rho = 1} plays the role of the sphere; its outward normal at a point is
grad rho normalized.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "HomogeneousDistance",
    "CospherePoint",
    "make_builtin",
    "make_user_supplied",
    "to_cosphere",
    "gauss_map_inverse",
]

_FD_STEP = 1e-6


@dataclass(frozen=True)
class HomogeneousDistance:
    """Immutable description of a homogeneous distance function.

    Attributes
    ----------
    d : int
        ambient dimension
    b : float
        homogeneity exponent: rho(t^b xi) = t rho(xi)
    kind : str
        one of 'euclidean', 'bochner_riesz', 'smooth_power_mean', 'user_supplied'
    power : int or None
        the exponent m for the smooth power mean (rho = (sum xi_i^{2m})^{1/2m})
    even : bool
        whether rho(-xi) = rho(xi); true for all builtins
    """

    d: int
    b: float
    kind: str
    _rho: Callable = field(repr=False)
    _grad: Optional[Callable] = field(repr=False, default=None)
    power: Optional[int] = None
    even: bool = True

    def __call__(self, xi):
        """Evaluate rho; xi has shape (..., d)."""
        return self._rho(np.asarray(xi, dtype=float))

    def grad(self, xi):
        """Evaluate grad rho, by closed form when available, else central differences."""
        xi = np.asarray(xi, dtype=float)
        if self._grad is not None:
            return self._grad(xi)
        return self._fd_grad(xi)

    def _fd_grad(self, xi):
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        h = _FD_STEP * np.maximum(1.0, np.linalg.norm(xi, axis=-1))
        out = np.empty_like(xi)
        for i in range(self.d):
            e = np.zeros(self.d)
            e[i] = 1.0
            out[:, i] = (self._rho(xi + h[:, None] * e) - self._rho(xi - h[:, None] * e)) / (2.0 * h)
        return out.reshape(np.asarray(xi).shape) if out.shape[0] > 1 else out[0]

    def scale_factor(self, t):
        """rho(xi / t) = scale_factor(t) * rho(xi); equals t^(-1/b)."""
        return float(t) ** (-1.0 / self.b)

    def level_radius(self, t):
        """The rho-level of the multiplier support boundary at parameter t: t^(1/b)."""
        return float(t) ** (1.0 / self.b)


@dataclass(frozen=True)
class CospherePoint:
    """A point on {rho = 1} together with its outward unit normal."""

    point: np.ndarray
    normal: np.ndarray


def _euclidean(d):
    rho = lambda xi: np.linalg.norm(xi, axis=-1)

    def grad(xi):
        xi = np.asarray(xi, dtype=float)
        n = np.linalg.norm(xi, axis=-1, keepdims=True)
        return xi / n

    return HomogeneousDistance(d=d, b=1.0, kind="euclidean", _rho=rho, _grad=grad)


def _bochner_riesz(d):
    rho = lambda xi: np.sum(np.asarray(xi, dtype=float) ** 2, axis=-1)
    grad = lambda xi: 2.0 * np.asarray(xi, dtype=float)
    return HomogeneousDistance(d=d, b=0.5, kind="bochner_riesz", _rho=rho, _grad=grad)


def _smooth_power_mean(d, m):
    m = int(m)
    if m < 1:
        raise ValueError("smooth_power_mean requires integer m >= 1")

    def rho(xi):
        xi = np.asarray(xi, dtype=float)
        return np.sum(xi ** (2 * m), axis=-1) ** (1.0 / (2 * m))

    def grad(xi):
        xi = np.asarray(xi, dtype=float)
        s = np.sum(xi ** (2 * m), axis=-1, keepdims=True)
        return xi ** (2 * m - 1) * s ** (1.0 / (2 * m) - 1.0)

    return HomogeneousDistance(d=d, b=1.0, kind="smooth_power_mean", _rho=rho,
                               _grad=grad, power=m)


def make_builtin(kind, d, m=None):
    """Construct a builtin distance.

    kind='euclidean'          rho = |xi|,     b = 1
    kind='bochner_riesz'      rho = |xi|^2,   b = 1/2
    kind='smooth_power_mean'  rho = (sum xi_i^{2m})^{1/(2m)}, b = 1 (pass m >= 1)
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if kind == "euclidean":
        return _euclidean(d)
    if kind == "bochner_riesz":
        return _bochner_riesz(d)
    if kind == "smooth_power_mean":
        return _smooth_power_mean(d, 2 if m is None else m)
    raise ValueError(f"unknown distance kind {kind!r}")


def verify_homogeneity(dist, n_samples=100, tol=1e-8, seed=0):
    """Check |rho(t^b xi) - t rho(xi)| <= tol * t * rho(xi) on random (t, xi) pairs."""
    rng = np.random.default_rng(np.random.Philox(seed))
    xi = rng.normal(size=(n_samples, dist.d))
    xi = xi[np.linalg.norm(xi, axis=1) > 1e-3]
    t = rng.uniform(0.1, 10.0, size=len(xi))
    lhs = dist((t[:, None] ** dist.b) * xi)
    rhs = t * dist(xi)
    return float(np.max(np.abs(lhs - rhs) / np.abs(rhs)))


def make_user_supplied(rho, d, b, grad=None, even=True, tol=1e-8):
    """Wrap a caller-provided distance; rejects it if the declared homogeneity fails."""
    dist = HomogeneousDistance(d=d, b=float(b), kind="user_supplied",
                               _rho=rho, _grad=grad, even=even)
    resid = verify_homogeneity(dist, tol=tol)
    if resid > tol:
        raise ValueError(
            f"declared homogeneity exponent b={b} fails verification "
            f"(residual {resid:.3e} > {tol:.0e})")
    return dist


def to_cosphere(dist, xi):
    """Radial normalization of xi onto {rho = 1}: xi* = rho(xi)^(-b) xi."""
    xi = np.asarray(xi, dtype=float)
    r = dist(xi)
    if np.any(r == 0.0) or (xi.ndim == 1 and not np.any(xi)):
        raise ValueError("cannot normalize the zero vector onto the unit level set")
    point = (np.asarray(r) ** (-dist.b))[..., None] * xi
    g = dist.grad(point)
    normal = g / np.linalg.norm(g, axis=-1, keepdims=True)
    if xi.ndim == 1:
        return CospherePoint(point=point.reshape(-1), normal=normal.reshape(-1))
    return CospherePoint(point=point, normal=normal)


def gauss_map_inverse(dist, x, tol=1e-10, max_iter=50):
    """Find the unit-level point whose outward normal is parallel to x.

    Projected Newton iteration in level-set chart coordinates: each step
    moves tangentially and renormalizes onto {rho = 1}, so iterates stay on
    the level set exactly.  Requires a strictly convex level set near the
    solution (all builtins qualify).
    """
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        raise ValueError("x must be nonzero")
    xhat = x / np.linalg.norm(x)
    cp = to_cosphere(dist, x)
    pt = cp.point.copy()

    def normal_at(p):
        g = dist.grad(p)
        return g / np.linalg.norm(g)

    for _ in range(max_iter):
        n = normal_at(pt)
        resid = xhat - np.dot(xhat, n) * n      # tangential mismatch
        err = np.linalg.norm(xhat - n)
        if err <= tol:
            return CospherePoint(point=pt, normal=n)
        # secant estimate of d(normal)/d(tangent step) along the residual direction
        direction = resid / max(np.linalg.norm(resid), 1e-300)
        h = max(1e-7, 0.01 * err)
        probe = to_cosphere(dist, pt + h * direction).point
        dn = (normal_at(probe) - n) / h
        # Newton step length along `direction` solving <xhat - n - s*dn, direction> = 0
        denom = np.dot(dn, direction)
        s = np.dot(resid, direction) / denom if abs(denom) > 1e-14 else np.linalg.norm(resid)
        s = np.clip(s, -0.5, 0.5)
        new_pt = to_cosphere(dist, pt + s * direction).point
        # damp only while far from the solution; near it the full step is quadratic
        if err > 1e-4 and np.linalg.norm(normal_at(new_pt) - xhat) > err:
            new_pt = to_cosphere(dist, pt + 0.25 * s * direction).point
        pt = new_pt
    n = normal_at(pt)
    if np.linalg.norm(xhat - n) <= tol:
        return CospherePoint(point=pt, normal=n)
    raise RuntimeError(
        f"normal inversion did not converge in {max_iter} iterations "
        f"(residual {np.linalg.norm(xhat - n):.3e}); flat or degenerate direction?")
