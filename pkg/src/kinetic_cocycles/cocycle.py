"""Generator fields over a suspension flow, propagation of the fundamental
solution, Liouville accounting and Lyapunov exponent estimation.

An orbit segment is cut into *pieces*: maximal intervals inside one tower
on which a single generator "value" applies (the default kinetic pair or one
flowbox override). Every roof crossing and every flowbox face is a cut, so
each piece has a smooth generator and is integrated on its own:

* rotation / stretch / tuned-rotation overrides use their closed-form flows;
* generators constant along the piece use the classical RK4 step matrix,
  raised to the number of steps by repeated squaring (same numbers as
  stepping, far cheaper);
* height-dependent kinetic generators build all RK4 step matrices at once
  with numpy and multiply them pairwise.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Iterator, Sequence

import numpy as np

from .baseflow import (
    FlowboxSpec,
    SuspensionFlow,
    SuspensionPoint,
    flow as flow_point,
    is_periodic,
    sample_mu,
)
from .errors import ConfigurationError, PropagationError
from .mat2 import (
    STRETCH,
    TWO_PI,
    Mat2,
    Vec2,
    kinetic,
    rotation_flow,
    rotation_generator,
    stretch_flow,
)

DEFAULT_STEP = 1e-3
DEFAULT_HORIZON = 1e5

#: renormalize accumulated matrices once their norm exceeds this
RENORM_THRESHOLD = 1e8

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


# --------------------------------------------------------- scalar presets


@dataclass(frozen=True)
class Expression:
    """a0 + a1 cos(2 pi w1) + a2 sin(2 pi w1) + a3 cos(2 pi s / period).

    ``w1`` is the first base coordinate and ``s`` the height in the tower.
    """

    a0: float = 0.0
    a1: float = 0.0
    a2: float = 0.0
    a3: float = 0.0
    period: float = 3.0

    @classmethod
    def const(cls, c: float) -> Expression:
        return cls(float(c))

    def __call__(self, base, s: float) -> float:
        v = self.a0
        if self.a1 or self.a2:
            x = 2.0 * math.pi * base[0]
            v += self.a1 * math.cos(x) + self.a2 * math.sin(x)
        if self.a3:
            v += self.a3 * math.cos(2.0 * math.pi * s / self.period)
        return v

    def many(self, bases: np.ndarray, heights: np.ndarray) -> np.ndarray:
        v = np.full(len(heights), self.a0, dtype=float)
        if self.a1 or self.a2:
            x = 2.0 * math.pi * bases[:, 0]
            v += self.a1 * np.cos(x) + self.a2 * np.sin(x)
        if self.a3:
            v += self.a3 * np.cos(2.0 * math.pi * heights / self.period)
        return v

    def on_fiber(self, base, heights: np.ndarray) -> np.ndarray:
        return self(base, 0.0) - self.a3 + self.a3 * np.cos(2.0 * math.pi * heights / self.period)

    def __neg__(self) -> Expression:
        return Expression(-self.a0, -self.a1, -self.a2, -self.a3, self.period)

    def shifted(self, c: float) -> Expression:
        return replace(self, a0=self.a0 + c)

    @property
    def fiber_constant(self) -> bool:
        return self.a3 == 0.0

    @property
    def is_constant(self) -> bool:
        return self.a1 == 0.0 and self.a2 == 0.0 and self.a3 == 0.0

    @property
    def is_zero(self) -> bool:
        return self.is_constant and self.a0 == 0.0

    @property
    def bound(self) -> float:
        return abs(self.a0) + abs(self.a1) + abs(self.a2) + abs(self.a3)

    def coefficients(self) -> tuple[float, float, float, float]:
        return (self.a0, self.a1, self.a2, self.a3)


# -------------------------------------------------------------- RK4 pieces


def n_steps(duration: float, step: float) -> int:
    return max(1, math.ceil(duration / step - 1e-9))


@lru_cache(maxsize=16384)
def _rk4_constant(a11: float, a12: float, a21: float, a22: float, n: int, h: float) -> Mat2:
    # classical RK4 applied to X' = A X with constant A is exactly the
    # degree-4 Taylor polynomial of exp(hA)
    hA = Mat2(a11, a12, a21, a22) * h
    hA2 = hA @ hA
    hA3 = hA2 @ hA
    hA4 = hA3 @ hA
    M = Mat2.identity() + hA + hA2 * 0.5 + hA3 * (1.0 / 6.0) + hA4 * (1.0 / 24.0)
    return M.power(n)


def rk4_constant_flow(A: Mat2, duration: float, step: float) -> Mat2:
    n = n_steps(duration, step)
    return _rk4_constant(A.a11, A.a12, A.a21, A.a22, n, duration / n)


def _bmul(X, Y):
    a1, b1, c1, d1 = X
    a2, b2, c2, d2 = Y
    return (a1 * a2 + b1 * c2, a1 * b2 + b1 * d2, c1 * a2 + d1 * c2, c1 * b2 + d1 * d2)


def _batched_product(M) -> Mat2:
    """M[n-1] @ ... @ M[0] for a batch stored as four component arrays."""
    a, b, c, d = M
    while len(a) > 1:
        if len(a) % 2:
            one, zero = np.ones(1), np.zeros(1)
            a, b, c, d = (np.concatenate([a, one]), np.concatenate([b, zero]),
                          np.concatenate([c, zero]), np.concatenate([d, one]))
        later = (a[1::2], b[1::2], c[1::2], d[1::2])
        earlier = (a[0::2], b[0::2], c[0::2], d[0::2])
        a, b, c, d = _bmul(later, earlier)
    return Mat2(float(a[0]), float(b[0]), float(c[0]), float(d[0]))


def rk4_kinetic_flow(alpha: Expression, beta: Expression, base, s0: float, s1: float,
                     step: float) -> Mat2:
    """Fixed-step RK4 for X' = A(s) X along one fiber, A kinetic in s."""
    n = n_steps(s1 - s0, step)
    h = (s1 - s0) / n
    s = s0 + h * np.arange(n)

    def gen(ss):
        z = np.zeros_like(ss)
        return (z, z + 1.0, -beta.on_fiber(base, ss), -alpha.on_fiber(base, ss))

    A0, Am, A1 = gen(s), gen(s + 0.5 * h), gen(s + h)
    one, zero = np.ones(n), np.zeros(n)

    def shift(K, c):  # I + c K
        return (one + c * K[0], c * K[1], c * K[2], one + c * K[3])

    K1 = A0
    K2 = _bmul(Am, shift(K1, 0.5 * h))
    K3 = _bmul(Am, shift(K2, 0.5 * h))
    K4 = _bmul(A1, shift(K3, h))
    w = h / 6.0
    M = tuple(
        (one if i in (0, 3) else zero) + w * (K1[i] + 2.0 * K2[i] + 2.0 * K3[i] + K4[i])
        for i in range(4)
    )
    return _batched_product(M)


def _gauss_legendre(f, lo: float, hi: float) -> float:
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    return float(half * np.dot(_GL_WEIGHTS, f(mid + half * _GL_NODES)))


# ----------------------------------------------------------- generator values


@dataclass(frozen=True)
class Kinetic:
    """((0, 1), (-beta, -alpha)) with preset scalar fields."""

    alpha: Expression = field(default_factory=Expression)
    beta: Expression = field(default_factory=Expression)

    is_kinetic = True

    @property
    def is_traceless(self) -> bool:
        return self.alpha.is_zero

    @property
    def constant_matrix(self) -> Mat2 | None:
        if self.alpha.is_constant and self.beta.is_constant:
            return kinetic(self.alpha.a0, self.beta.a0)
        return None

    @property
    def norm_bound(self) -> float:
        return math.sqrt(1.0 + self.alpha.bound ** 2 + self.beta.bound ** 2)

    def matrix(self, base, s: float) -> Mat2:
        return kinetic(self.alpha(base, s), self.beta(base, s))

    def matrices_many(self, bases, heights):
        n = len(heights)
        return (np.zeros(n), np.ones(n), -self.beta.many(bases, heights),
                -self.alpha.many(bases, heights))

    def flow(self, base, s0: float, s1: float, step: float) -> Mat2:
        if self.alpha.fiber_constant and self.beta.fiber_constant:
            return rk4_constant_flow(self.matrix(base, s0), s1 - s0, step)
        return rk4_kinetic_flow(self.alpha, self.beta, base, s0, s1, step)

    def trace_integral(self, base, s0: float, s1: float) -> float:
        if self.alpha.fiber_constant:
            return -self.alpha(base, s0) * (s1 - s0)
        return -_gauss_legendre(lambda s: self.alpha.on_fiber(base, s), s0, s1)


@dataclass(frozen=True)
class Rotation:
    """Constant elliptical rotation generator R_theta."""

    theta: float

    is_kinetic = True
    is_traceless = True

    def __post_init__(self):
        rotation_generator(self.theta)  # validates theta > 0

    @property
    def constant_matrix(self) -> Mat2:
        return rotation_generator(self.theta)

    @property
    def norm_bound(self) -> float:
        return max(1.0, self.theta ** 2)

    def matrix(self, base, s: float) -> Mat2:
        return rotation_generator(self.theta)

    def matrices_many(self, bases, heights):
        n = len(heights)
        return (np.zeros(n), np.ones(n), np.full(n, -self.theta ** 2), np.zeros(n))

    def flow(self, base, s0, s1, step) -> Mat2:
        return rotation_flow(self.theta, s1 - s0)

    def trace_integral(self, base, s0, s1) -> float:
        return 0.0


@dataclass(frozen=True)
class Stretch:
    is_kinetic = True
    is_traceless = True
    constant_matrix = STRETCH
    norm_bound = 1.0

    def matrix(self, base, s: float) -> Mat2:
        return STRETCH

    def matrices_many(self, bases, heights):
        n = len(heights)
        return (np.zeros(n), np.ones(n), np.ones(n), np.zeros(n))

    def flow(self, base, s0, s1, step) -> Mat2:
        return stretch_flow(s1 - s0)

    def trace_integral(self, base, s0, s1) -> float:
        return 0.0


@dataclass(frozen=True)
class Constant:
    """Arbitrary constant generator, integrated by RK4."""

    value: Mat2

    @property
    def is_kinetic(self) -> bool:
        return self.value.is_kinetic()

    @property
    def is_traceless(self) -> bool:
        return self.value.trace() == 0.0

    @property
    def constant_matrix(self) -> Mat2:
        return self.value

    @property
    def norm_bound(self) -> float:
        return self.value.opnorm()

    def matrix(self, base, s: float) -> Mat2:
        return self.value

    def matrices_many(self, bases, heights):
        n = len(heights)
        M = self.value
        return tuple(np.full(n, x) for x in (M.a11, M.a12, M.a21, M.a22))

    def flow(self, base, s0, s1, step) -> Mat2:
        return rk4_constant_flow(self.value, s1 - s0, step)

    def trace_integral(self, base, s0, s1) -> float:
        return self.value.trace() * (s1 - s0)


@dataclass(frozen=True, eq=False)
class TunedRotation:
    """R_theta whose frequency depends on the base point of the fiber.

    ``rule`` maps a base point to a frequency in (0, 2 pi]; it is called once
    per fiber visit, so it should cache.
    """

    rule: Callable

    is_kinetic = True
    is_traceless = True
    constant_matrix = None
    norm_bound = TWO_PI ** 2

    def theta(self, base) -> float:
        return self.rule(base)

    def matrix(self, base, s: float) -> Mat2:
        return rotation_generator(self.rule(base))

    def matrices_many(self, bases, heights):
        n = len(heights)
        th = np.array([self.rule(tuple(float(x) for x in b)) for b in bases])
        return (np.zeros(n), np.ones(n), -th ** 2, np.zeros(n))

    def flow(self, base, s0, s1, step) -> Mat2:
        return rotation_flow(self.rule(base), s1 - s0)

    def trace_integral(self, base, s0, s1) -> float:
        return 0.0


Value = Kinetic | Rotation | Stretch | Constant | TunedRotation


# ------------------------------------------------------------ the field


@dataclass(frozen=True)
class GeneratorField:
    """A measurable map from the suspension space to 2x2 generators.

    ``default`` applies everywhere except on the override flowboxes, which
    must be pairwise disjoint up to shared faces.
    """

    flow: SuspensionFlow
    default: Value
    overrides: tuple[tuple[FlowboxSpec, Value], ...] = ()
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "overrides", tuple(tuple(o) for o in self.overrides))
        boxes = [box for box, _ in self.overrides]
        for box in boxes:
            self.flow.validate_box(box)
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                if boxes[i].overlaps(boxes[j]):
                    raise ConfigurationError(f"override boxes {i} and {j} overlap")

    # constructors ----------------------------------------------------------

    @classmethod
    def kinetic(cls, flow: SuspensionFlow, alpha=0.0, beta=0.0, name: str = "") -> GeneratorField:
        alpha = alpha if isinstance(alpha, Expression) else Expression.const(alpha)
        beta = beta if isinstance(beta, Expression) else Expression.const(beta)
        return cls(flow, Kinetic(alpha, beta), name=name)

    @classmethod
    def schrodinger(cls, flow: SuspensionFlow, potential, energy: float, name: str = "") -> GeneratorField:
        """alpha = 0, beta = E - Q."""
        Q = potential if isinstance(potential, Expression) else Expression.const(potential)
        return cls(flow, Kinetic(Expression(), (-Q).shifted(energy)), name=name)

    @classmethod
    def constant(cls, flow: SuspensionFlow, value, name: str = "") -> GeneratorField:
        if isinstance(value, Mat2):
            value = Constant(value)
        return cls(flow, value, name=name)

    def with_overrides(self, *pairs, name: str | None = None) -> GeneratorField:
        return replace(self, overrides=self.overrides + tuple(pairs),
                       name=self.name if name is None else name)

    def replace_override(self, box: FlowboxSpec, value: Value, name: str | None = None) -> GeneratorField:
        idx = self.override_index(box)
        if idx < 0:
            raise ConfigurationError("no override on the requested flowbox")
        ov = list(self.overrides)
        ov[idx] = (box, value)
        return replace(self, overrides=tuple(ov), name=self.name if name is None else name)

    def override_index(self, box: FlowboxSpec) -> int:
        for i, (b, _) in enumerate(self.overrides):
            if b == box:
                return i
        return -1

    # classification --------------------------------------------------------

    def values(self) -> list[Value]:
        return [self.default] + [v for _, v in self.overrides]

    @property
    def field_class(self) -> str:
        vals = self.values()
        if not all(v.is_kinetic for v in vals):
            return "general"
        if all(v.is_traceless for v in vals):
            return "traceless_kinetic"
        return "kinetic"

    @property
    def is_kinetic(self) -> bool:
        return self.field_class != "general"

    @property
    def is_traceless(self) -> bool:
        return all(v.is_traceless for v in self.values())

    # evaluation ------------------------------------------------------------

    def value_at(self, base, s: float) -> Value:
        for box, val in self.overrides:
            if box.contains(base, s):
                return val
        return self.default

    def layout(self, base, hw: float) -> list[tuple[float, float, Value, int]]:
        """Cover [0, hw) of the fiber over ``base`` by (lo, hi, value, box)."""
        spans = []
        for i, (box, val) in enumerate(self.overrides):
            if box.region.contains(base):
                hi = min(box.b, hw)
                if hi > box.a:
                    spans.append((box.a, hi, val, i))
        if not spans:
            return [(0.0, hw, self.default, -1)]
        spans.sort(key=lambda sp: sp[0])
        out = []
        cur = 0.0
        for lo, hi, val, i in spans:
            if lo > cur:
                out.append((cur, lo, self.default, -1))
            out.append((lo, hi, val, i))
            cur = hi
        if cur < hw:
            out.append((cur, hw, self.default, -1))
        return out

    def matrices_many(self, bases: np.ndarray, heights: np.ndarray) -> np.ndarray:
        """Vectorized evaluation, returns an (n, 2, 2) array."""
        comps = [np.array(c, dtype=float) for c in self.default.matrices_many(bases, heights)]
        for box, val in self.overrides:
            mask = box.region.contains_many(bases) & (heights >= box.a) & (heights < box.b)
            if mask.any():
                sub = val.matrices_many(bases[mask], heights[mask])
                for c, s in zip(comps, sub):
                    c[mask] = s
        return np.stack(comps, axis=1).reshape(-1, 2, 2)


def evaluate(gen: GeneratorField, P: SuspensionPoint) -> Mat2:
    return gen.value_at(P.base, P.height).matrix(P.base, P.height)


# -------------------------------------------------------------- pieces


@dataclass(slots=True)
class Piece:
    t0: float  # start time relative to the orbit start
    base: tuple
    s0: float
    s1: float
    value: object
    box: int  # override index, -1 for the default generator

    @property
    def duration(self) -> float:
        return self.s1 - self.s0


def iter_pieces(gen: GeneratorField, P: SuspensionPoint, duration: float) -> Iterator[Piece]:
    """Cut phi^[0, duration](P) at roof crossings and flowbox faces."""
    F = gen.flow
    forward, roof = F.base.forward, F.roof
    w = P.base
    t0 = -P.height
    while t0 < duration:
        hw = roof(w)
        for lo, hi, val, i in gen.layout(w, hw):
            ts = t0 + lo
            te = t0 + hi
            if te <= 0.0:
                continue
            if ts >= duration:
                break
            s0 = P.height if ts < 0.0 and t0 == -P.height else lo
            if ts < 0.0:
                ts = 0.0
            if te > duration:
                te = duration
                s1 = duration - t0
            else:
                s1 = hi
            if s1 > s0:
                yield Piece(ts, w, s0, s1, val, i)
        t0 += hw
        w = forward(w)


# ----------------------------------------------------------- propagation


@dataclass(frozen=True)
class PropagationResult:
    """Phi(t, P) = matrix * exp(renorm_log).

    ``log_det`` is the accumulated trace integral, so that
    ``log|det matrix| + 2 renorm_log == log_det`` up to integration error.
    """

    matrix: Mat2
    log_det: float
    renorm_log: float = 0.0

    def full(self) -> Mat2:
        return self.matrix * math.exp(self.renorm_log)

    def log_abs_det(self) -> float:
        return math.log(abs(self.matrix.det())) + 2.0 * self.renorm_log


def propagate(gen: GeneratorField, P: SuspensionPoint, t: float, step: float = DEFAULT_STEP) -> PropagationResult:
    """Fundamental solution Phi_A(t, P) of X' = A(phi^s P) X, X(0) = Id."""
    if t < 0:
        raise ValueError("propagation time must be non-negative")
    if not step > 0:
        raise ValueError("step must be positive")
    M = Mat2.identity()
    log_det = 0.0
    renorm = 0.0
    for pc in iter_pieces(gen, P, t):
        M = pc.value.flow(pc.base, pc.s0, pc.s1, step) @ M
        log_det += pc.value.trace_integral(pc.base, pc.s0, pc.s1)
        nrm = M.norm()
        if not math.isfinite(nrm):
            raise PropagationError("non-finite fundamental solution", pc.t0)
        if nrm > RENORM_THRESHOLD:
            M = M * (1.0 / nrm)
            renorm += math.log(nrm)
    return PropagationResult(M, log_det, renorm)


def propagate_vector(gen: GeneratorField, P: SuspensionPoint, v: Vec2, t: float,
                     step: float = DEFAULT_STEP) -> tuple[Vec2, float]:
    """Return ``(unit direction, log growth)`` of Phi(t, P) v."""
    w = v.normalized()
    growth = math.log(v.norm())
    for pc in iter_pieces(gen, P, t):
        w = pc.value.flow(pc.base, pc.s0, pc.s1, step) @ w
        n = w.norm()
        if not (math.isfinite(n) and n > 0.0):
            raise PropagationError("vector propagation blew up", pc.t0)
        growth += math.log(n)
        w = w * (1.0 / n)
    return w, growth


def check_cocycle_property(gen: GeneratorField, P: SuspensionPoint, s: float, t: float,
                           step: float = DEFAULT_STEP) -> float:
    """Relative residual ||Phi(t+s, P) - Phi(t, phi^s P) Phi(s, P)||."""
    if s < 0 or t < 0:
        raise ValueError("s and t must be non-negative")
    whole = propagate(gen, P, s + t, step)
    first = propagate(gen, P, s, step)
    second = propagate(gen, flow_point(gen.flow, P, s), t, step)
    # compare in the scale of `whole`
    shift = first.renorm_log + second.renorm_log - whole.renorm_log
    composed = (second.matrix @ first.matrix) * math.exp(shift)
    return (whole.matrix - composed).norm() / whole.matrix.norm()


def liouville_logdet(gen: GeneratorField, P: SuspensionPoint, t: float) -> float:
    """Integral of tr A along phi^[0, t](P), piecewise Gauss-Legendre."""
    if t < 0:
        raise ValueError("t must be non-negative")
    total = 0.0
    for pc in iter_pieces(gen, P, t):
        total += pc.value.trace_integral(pc.base, pc.s0, pc.s1)
    return total


def spectrum_sum_via_trace(gen: GeneratorField, P: SuspensionPoint, T: float) -> float:
    if not T > 0:
        raise ValueError("T must be positive")
    return liouville_logdet(gen, P, T) / T


def top_lyapunov(gen: GeneratorField, P: SuspensionPoint, v0: Vec2, T: float,
                 step: float = DEFAULT_STEP) -> float:
    """Finite-time exponent (1/T) log ||Phi(T, P) v0|| / ||v0||."""
    if v0.norm() == 0.0:
        raise ValueError("v0 must be nonzero")
    if not T > 0:
        raise ValueError("T must be positive")
    _, growth = propagate_vector(gen, P, v0, T, step)
    return (growth - math.log(v0.norm())) / T


# ------------------------------------------------------------ spectra


@dataclass(frozen=True)
class OrbitExponents:
    lambda1: float
    lambda1_frames: float
    lambda2_frames: float
    trace_average: float
    series: tuple = ()


def orbit_exponents(gen: GeneratorField, P: SuspensionPoint, v0: Vec2, T: float,
                    step: float = DEFAULT_STEP, checkpoints: Sequence[float] = ()) -> OrbitExponents:
    """One pass along the orbit: top exponent from v0, an orthonormalized
    pair of frames (the first column is v0, so it reproduces the top
    exponent) and the trace integral. ``checkpoints`` are times at which
    finite-time values ``(t, lambda1, lambda2, logdet_avg)`` are recorded
    (at the first piece boundary at or after each checkpoint)."""
    q1 = v0.normalized()
    q2 = Vec2(-q1.y, q1.x)
    log1 = log2 = trace = 0.0
    pending = sorted(c for c in checkpoints if 0 < c <= T)
    series = []
    k = 0
    for pc in iter_pieces(gen, P, T):
        Fm = pc.value.flow(pc.base, pc.s0, pc.s1, step)
        trace += pc.value.trace_integral(pc.base, pc.s0, pc.s1)
        w1 = Fm @ q1
        w2 = Fm @ q2
        r11 = w1.norm()
        if not (math.isfinite(r11) and r11 > 0.0):
            raise PropagationError("frame propagation blew up", pc.t0)
        q1 = w1 * (1.0 / r11)
        w2 = w2 - q1 * q1.dot(w2)
        r22 = w2.norm()
        if not (math.isfinite(r22) and r22 > 0.0):
            raise PropagationError("second frame collapsed", pc.t0)
        q2 = w2 * (1.0 / r22)
        log1 += math.log(r11)
        log2 += math.log(r22)
        t_end = pc.t0 + pc.duration
        while k < len(pending) and t_end >= pending[k] - 1e-12:
            series.append((t_end, log1 / t_end, trace / t_end - log1 / t_end, trace / t_end))
            k += 1
    return OrbitExponents(log1 / T, log1 / T, log2 / T, trace / T, tuple(series))


@dataclass(frozen=True)
class LyapunovReport:
    lambda1: float
    lambda2: float
    sum_via_trace: float
    horizon: float
    n_samples: int
    stderr: float
    lambda1_frames: float
    lambda2_frames: float
    stderr_sum: float = 0.0
    resampled: int = 0
    finite_time: tuple = ()

    def __post_init__(self):
        if self.lambda1 < self.lambda2:
            raise ValueError("lambda1 < lambda2")

    @property
    def gap(self) -> float:
        return self.lambda1 - self.lambda2

    def as_dict(self) -> dict:
        return {
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "sum_via_trace": self.sum_via_trace,
            "horizon": self.horizon,
            "n_samples": self.n_samples,
            "stderr": self.stderr,
            "stderr_sum": self.stderr_sum,
            "lambda1_frames": self.lambda1_frames,
            "lambda2_frames": self.lambda2_frames,
            "resampled": self.resampled,
        }


def _std_error(xs) -> float:
    xs = np.asarray(xs, dtype=float)
    if len(xs) < 2:
        return 0.0
    return float(np.std(xs, ddof=1) / math.sqrt(len(xs)))


def sample_start(F: SuspensionFlow, seed_seq: np.random.SeedSequence) -> tuple[SuspensionPoint, Vec2, int]:
    """A mu-random start point and a uniformly random unit vector, drawn from
    one independent stream. Short periodic base orbits are redrawn."""
    rng = np.random.default_rng(seed_seq)
    resampled = 0
    while True:
        (P,) = sample_mu(F, 1, rng)
        if not is_periodic(F, P.base):
            break
        resampled += 1
    v0 = Vec2.from_angle(rng.uniform(0.0, TWO_PI))
    return P, v0, resampled


def _orbit_task(args):
    gen, child, T, step, checkpoints = args
    P, v0, resampled = sample_start(gen.flow, child)
    return orbit_exponents(gen, P, v0, T, step, checkpoints), resampled


def lyapunov_spectrum(gen: GeneratorField, T: float = DEFAULT_HORIZON, n_samples: int = 4,
                      step: float = DEFAULT_STEP, seed: int = 0, *,
                      checkpoints: Sequence[float] = (), workers: int = 1) -> LyapunovReport:
    """Estimate (lambda1, lambda2) by averaging over mu-random orbits.

    lambda1 comes from a random vector; lambda2 is the time-averaged trace
    minus lambda1 (Liouville), which is exact bookkeeping rather than a second
    noisy estimate. The orthonormalized-pair estimates are reported too.
    Each orbit has its own child seed and results are reduced in index
    order, so the report depends only on ``seed``.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    children = np.random.SeedSequence(seed).spawn(n_samples)
    tasks = [(gen, c, T, step, tuple(checkpoints)) for c in children]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_orbit_task, tasks))
    else:
        results = [_orbit_task(t) for t in tasks]

    l1 = [r.lambda1 for r, _ in results]
    sums = [r.trace_average for r, _ in results]
    lam1 = float(np.mean(l1))
    s = float(np.mean(sums))
    lam2 = s - lam1
    if lam2 > lam1:
        # finite-time estimate below half the trace sum: the pair is ordered
        lam1, lam2 = max(lam1, lam2), min(lam1, lam2)
    series = ()
    if checkpoints and all(len(r.series) == len(results[0][0].series) for r, _ in results):
        rows = np.array([r.series for r, _ in results])
        series = tuple(tuple(float(x) for x in row) for row in rows.mean(axis=0))
    return LyapunovReport(
        lambda1=lam1,
        lambda2=lam2,
        sum_via_trace=s,
        horizon=T,
        n_samples=n_samples,
        stderr=_std_error(l1),
        lambda1_frames=float(np.mean([r.lambda1_frames for r, _ in results])),
        lambda2_frames=float(np.mean([r.lambda2_frames for r, _ in results])),
        stderr_sum=_std_error(sums),
        resampled=sum(k for _, k in results),
        finite_time=series,
    )


def integrability_proxy(gen: GeneratorField, points: Sequence[SuspensionPoint],
                        grid: int = 11, step: float = DEFAULT_STEP) -> np.ndarray:
    """sup over t in [0, 1] of log+ ||Phi(t, P)^{+-1}|| for each point, with
    the sup taken over ``grid`` equally spaced times."""
    out = np.empty(len(points))
    ts = np.linspace(0.0, 1.0, grid)[1:]
    for k, P in enumerate(points):
        best = 0.0
        M = Mat2.identity()
        prev = 0.0
        Q = P
        for t in ts:
            res = propagate(gen, Q, t - prev, step)
            M = res.full() @ M
            Q = flow_point(gen.flow, Q, t - prev)
            prev = t
            n = M.opnorm()
            # singular values multiply to |det|, so ||M^-1|| = ||M|| / |det M|
            ninv = n / abs(M.det())
            best = max(best, math.log(max(n, 1.0)), math.log(max(ninv, 1.0)))
        out[k] = best
    return out
