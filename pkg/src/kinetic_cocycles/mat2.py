"""Plane vectors, 2x2 matrices and the closed-form flows of the rotation and
stretch generators.

Everything here is an immutable value type built on plain floats; the
propagation hot loops multiply millions of these, and for 2x2 work Python
floats are considerably faster than small numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError

TWO_PI = 2.0 * math.pi

#: |u x v| below this (for unit u, v) counts as parallel
PARALLEL_TOL = 1e-12

#: number of grid points used to bracket roots of the alignment mismatch
ALIGNMENT_SCAN_POINTS = 1024


@dataclass(frozen=True, slots=True)
class Vec2:
    x: float
    y: float

    def __add__(self, other: Vec2) -> Vec2:
        return Vec2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: Vec2) -> Vec2:
        return Vec2(self.x - other.x, self.y - other.y)

    def __mul__(self, c: float) -> Vec2:
        return Vec2(c * self.x, c * self.y)

    __rmul__ = __mul__

    def __neg__(self) -> Vec2:
        return Vec2(-self.x, -self.y)

    def dot(self, other: Vec2) -> float:
        return self.x * other.x + self.y * other.y

    def cross(self, other: Vec2) -> float:
        """z-component of the 3d cross product (the wedge u ^ v)."""
        return self.x * other.y - self.y * other.x

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def normalized(self) -> Vec2:
        n = self.norm()
        if n == 0.0 or not math.isfinite(n):
            raise ValueError(f"cannot normalize {self!r}")
        return Vec2(self.x / n, self.y / n)

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y)

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @classmethod
    def from_angle(cls, angle: float) -> Vec2:
        return cls(math.cos(angle), math.sin(angle))


@dataclass(frozen=True, slots=True)
class Mat2:
    """Row-major 2x2 real matrix ((a11, a12), (a21, a22))."""

    a11: float
    a12: float
    a21: float
    a22: float

    @classmethod
    def identity(cls) -> Mat2:
        return _IDENTITY

    @classmethod
    def zero(cls) -> Mat2:
        return cls(0.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_rows(cls, rows) -> Mat2:
        (a, b), (c, d) = rows
        return cls(float(a), float(b), float(c), float(d))

    @classmethod
    def from_array(cls, arr) -> Mat2:
        arr = np.asarray(arr, dtype=float)
        return cls(arr[0, 0], arr[0, 1], arr[1, 0], arr[1, 1])

    def to_array(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])

    def rows(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return ((self.a11, self.a12), (self.a21, self.a22))

    def __matmul__(self, other):
        if isinstance(other, Mat2):
            return Mat2(
                self.a11 * other.a11 + self.a12 * other.a21,
                self.a11 * other.a12 + self.a12 * other.a22,
                self.a21 * other.a11 + self.a22 * other.a21,
                self.a21 * other.a12 + self.a22 * other.a22,
            )
        if isinstance(other, Vec2):
            return Vec2(
                self.a11 * other.x + self.a12 * other.y,
                self.a21 * other.x + self.a22 * other.y,
            )
        return NotImplemented

    def __add__(self, other: Mat2) -> Mat2:
        return Mat2(
            self.a11 + other.a11, self.a12 + other.a12,
            self.a21 + other.a21, self.a22 + other.a22,
        )

    def __sub__(self, other: Mat2) -> Mat2:
        return Mat2(
            self.a11 - other.a11, self.a12 - other.a12,
            self.a21 - other.a21, self.a22 - other.a22,
        )

    def __mul__(self, c: float) -> Mat2:
        return Mat2(c * self.a11, c * self.a12, c * self.a21, c * self.a22)

    __rmul__ = __mul__

    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21

    def trace(self) -> float:
        return self.a11 + self.a22

    def norm(self) -> float:
        """Euclidean (Frobenius) norm."""
        return math.sqrt(
            self.a11 * self.a11 + self.a12 * self.a12
            + self.a21 * self.a21 + self.a22 * self.a22
        )

    def opnorm(self) -> float:
        """Spectral norm (largest singular value)."""
        f2 = (
            self.a11 * self.a11 + self.a12 * self.a12
            + self.a21 * self.a21 + self.a22 * self.a22
        )
        d = self.det()
        disc = max(f2 * f2 - 4.0 * d * d, 0.0)
        return math.sqrt(0.5 * (f2 + math.sqrt(disc)))

    def max_abs(self) -> float:
        return max(abs(self.a11), abs(self.a12), abs(self.a21), abs(self.a22))

    def inverse(self) -> Mat2:
        d = self.det()
        if d == 0.0:
            raise ZeroDivisionError("singular matrix")
        return Mat2(self.a22 / d, -self.a12 / d, -self.a21 / d, self.a11 / d)

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.a11, self.a12, self.a21, self.a22))

    def is_kinetic(self) -> bool:
        """Companion form ((0, 1), (b, a))."""
        return self.a11 == 0.0 and self.a12 == 1.0

    def power(self, n: int) -> Mat2:
        """self**n for n >= 0 by binary exponentiation."""
        if n < 0:
            raise ValueError("negative power")
        result = _IDENTITY
        base = self
        while n:
            if n & 1:
                result = base @ result
            n >>= 1
            if n:
                base = base @ base
        return result


_IDENTITY = Mat2(1.0, 0.0, 0.0, 1.0)

#: the stretch generator ((0, 1), (1, 0))
STRETCH = Mat2(0.0, 1.0, 1.0, 0.0)

#: unstable / stable eigenvectors of the stretch flow
STRETCH_UNSTABLE = Vec2(1.0, 1.0)
STRETCH_STABLE = Vec2(-1.0, 1.0)

#: the target direction used by the perturbation pipeline, (1, 1)/sqrt(2)
DIAGONAL = STRETCH_UNSTABLE.normalized()


def kinetic(alpha: float, beta: float) -> Mat2:
    """Generator of x'' + alpha x' + beta x = 0 in (x, x') coordinates."""
    return Mat2(0.0, 1.0, -beta, -alpha)


def rotation_generator(theta: float) -> Mat2:
    if not theta > 0.0:
        raise ValueError(f"rotation frequency must be positive, got {theta!r}")
    return Mat2(0.0, 1.0, -theta * theta, 0.0)


def rotation_flow(theta: float, t: float) -> Mat2:
    """Time-t solution of the elliptical rotation generator R_theta."""
    if not theta > 0.0:
        raise ValueError(f"rotation frequency must be positive, got {theta!r}")
    c = math.cos(theta * t)
    s = math.sin(theta * t)
    return Mat2(c, s / theta, -theta * s, c)


def stretch_flow(t: float) -> Mat2:
    """exp(S t) for S = ((0, 1), (1, 0)); raises OverflowError for huge |t|."""
    c = math.cosh(t)
    s = math.sinh(t)
    return Mat2(c, s, s, c)


def clockwise_angle(u: Vec2, v: Vec2) -> float:
    """Clockwise angle carrying u onto v, in (0, 2*pi]."""
    a = (math.atan2(u.y, u.x) - math.atan2(v.y, v.x)) % TWO_PI
    return TWO_PI if a == 0.0 else a


def _mismatch(theta: float, u: Vec2, v: Vec2) -> float:
    w = rotation_flow(theta, 1.0) @ u
    return w.cross(v) / w.norm()


def solve_alignment_theta(u: Vec2, v: Vec2, *, tol: float = 1e-9) -> float:
    """Frequency theta in (0, 2*pi] with rotation_flow(theta, 1) u parallel to v.

    The clockwise angle from u to v is only a starting guess: the time-1 map of
    R_theta is an *elliptical* rotation, so the angle itself aligns u with v
    only in special positions. All sign changes of the normalized wedge
    product on a uniform grid are bracketed, each bracket is bisected, and
    the root closest to the initial guess wins. Parallel inputs return 2*pi,
    whose time-1 flow is the identity.
    """
    if u.norm() == 0.0 or v.norm() == 0.0:
        raise ValueError("alignment needs nonzero vectors")
    u = u.normalized()
    v = v.normalized()
    if abs(u.cross(v)) <= PARALLEL_TOL:
        return TWO_PI

    guess = clockwise_angle(u, v)
    grid = [TWO_PI * k / ALIGNMENT_SCAN_POINTS for k in range(1, ALIGNMENT_SCAN_POINTS + 1)]
    values = [_mismatch(th, u, v) for th in grid]

    roots = []
    for k in range(len(grid) - 1):
        f0, f1 = values[k], values[k + 1]
        if f0 == 0.0:
            roots.append(grid[k])
        elif f0 * f1 < 0.0:
            roots.append(_bisect(grid[k], grid[k + 1], f0, u, v))
    if values[-1] == 0.0:
        roots.append(grid[-1])

    if not roots:
        best = min(range(len(grid)), key=lambda k: abs(values[k]))
        raise AlignmentError(
            "no sign change of the alignment mismatch on (0, 2pi]",
            abs(math.asin(max(-1.0, min(1.0, values[best])))),
        )
    theta = min(roots, key=lambda r: (abs(r - guess), r))
    residual = abs(_mismatch(theta, u, v))
    if residual > tol:
        raise AlignmentError("bisection did not converge", math.asin(min(1.0, residual)))
    return theta


def _bisect(lo: float, hi: float, f_lo: float, u: Vec2, v: Vec2) -> float:
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        f_mid = _mismatch(mid, u, v)
        if f_mid == 0.0:
            return mid
        if (f_mid < 0.0) == (f_lo < 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
