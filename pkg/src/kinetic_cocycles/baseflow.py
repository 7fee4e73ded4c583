"""Special (suspension) flows built under a roof function over an invertible
ergodic base map.

A point of the suspension space is a base point together with a height
``0 <= s < h(base)``. Base points are tuples of floats (length 1 on the
circle, length 2 on the torus) so they hash and compare cheaply.

The identification ``(w, h(w)) ~ (T w, 0)`` is always resolved towards the
successor: heights are half-open and never equal the roof.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigurationError

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

Base = tuple  # tuple[float] on the circle, tuple[float, float] on the torus


def _frac(x: float) -> float:
    y = x % 1.0
    # x % 1.0 can round up to exactly 1.0 for tiny negative x
    return 0.0 if y >= 1.0 else y


# ---------------------------------------------------------------- base maps


@dataclass(frozen=True)
class CircleRotation:
    rotation_number: float = GOLDEN
    kind: str = field(default="circle_rotation", init=False)
    dim: int = field(default=1, init=False)

    def __post_init__(self):
        if not 0.0 < self.rotation_number < 1.0:
            raise ConfigurationError("rotation_number must lie in (0, 1)")

    def forward(self, w: Base) -> Base:
        return (_frac(w[0] + self.rotation_number),)

    def inverse(self, w: Base) -> Base:
        return (_frac(w[0] - self.rotation_number),)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.random((n, 1))

    def forward_many(self, pts: np.ndarray) -> np.ndarray:
        return np.mod(pts + self.rotation_number, 1.0)


#: torus coordinates live on the grid 2**-50 Z / Z; on it 2x + y and its
#: inverse are computed exactly in double precision, so T and T^-1 are exact
#: inverses and backward lookbacks replay forward orbits bit for bit
TORUS_GRID = 2.0**50


def snap_torus(x: float) -> float:
    return _frac(round(x * TORUS_GRID) / TORUS_GRID)


@dataclass(frozen=True)
class TorusCatMap:
    """Arnold's cat map ((2, 1), (1, 1)) mod 1 on the 2-torus."""

    kind: str = field(default="torus_cat_map", init=False)
    dim: int = field(default=2, init=False)

    def forward(self, w: Base) -> Base:
        x, y = w
        return (_frac(2.0 * x + y), _frac(x + y))

    def inverse(self, w: Base) -> Base:
        x, y = w
        return (_frac(x - y), _frac(2.0 * y - x))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        pts = np.floor(rng.random((n, 2)) * TORUS_GRID) / TORUS_GRID
        return pts

    def forward_many(self, pts: np.ndarray) -> np.ndarray:
        x, y = pts[:, 0], pts[:, 1]
        return np.mod(np.stack([2.0 * x + y, x + y], axis=1), 1.0)


BaseSystem = CircleRotation | TorusCatMap


def base_distance(a: Base, b: Base) -> float:
    """Sup distance on the flat torus of the right dimension."""
    d = 0.0
    for x, y in zip(a, b):
        e = abs(x - y) % 1.0
        d = max(d, min(e, 1.0 - e))
    return d


# ------------------------------------------------------------------- roofs


@dataclass(frozen=True)
class RoofFunction:
    """Either ``h = H0`` or ``h(w) = H0 + c cos(2 pi w_1)``."""

    H0: float = 3.0
    amplitude: float = 0.0

    def __post_init__(self):
        if not self.H0 - abs(self.amplitude) > 2.0:
            raise ConfigurationError(
                f"roof infimum H0 - |c| = {self.H0 - abs(self.amplitude)} must exceed 2"
            )

    @property
    def kind(self) -> str:
        return "constant" if self.amplitude == 0.0 else "cosine"

    def __call__(self, w: Base) -> float:
        if self.amplitude == 0.0:
            return self.H0
        return self.H0 + self.amplitude * math.cos(2.0 * math.pi * w[0])

    def many(self, pts: np.ndarray) -> np.ndarray:
        if self.amplitude == 0.0:
            return np.full(len(pts), self.H0)
        return self.H0 + self.amplitude * np.cos(2.0 * math.pi * pts[:, 0])

    @property
    def infimum(self) -> float:
        return self.H0 - abs(self.amplitude)

    @property
    def supremum(self) -> float:
        return self.H0 + abs(self.amplitude)

    def integral(self) -> float:
        # the cosine term integrates to zero against Lebesgue measure on
        # either the circle or the torus
        return self.H0


# ------------------------------------------------------------ base regions


@dataclass(frozen=True)
class Arc:
    """[lo, hi) on the circle."""

    lo: float
    hi: float

    def __post_init__(self):
        if not 0.0 <= self.lo <= self.hi <= 1.0:
            raise ConfigurationError(f"invalid arc [{self.lo}, {self.hi})")

    @property
    def measure(self) -> float:
        return self.hi - self.lo

    def contains(self, w: Base) -> bool:
        return self.lo <= w[0] < self.hi

    def contains_many(self, pts: np.ndarray) -> np.ndarray:
        return (pts[:, 0] >= self.lo) & (pts[:, 0] < self.hi)

    def intersects(self, other) -> bool:
        if isinstance(other, Everywhere):
            return self.measure > 0
        if not isinstance(other, Arc):
            raise ConfigurationError("cannot intersect regions of different spaces")
        return max(self.lo, other.lo) < min(self.hi, other.hi)


@dataclass(frozen=True)
class Square:
    """[0, side)^2 on the torus."""

    side: float

    def __post_init__(self):
        if not 0.0 <= self.side <= 1.0:
            raise ConfigurationError(f"invalid square side {self.side}")

    @classmethod
    def of_measure(cls, r: float) -> Square:
        return cls(math.sqrt(r))

    @property
    def measure(self) -> float:
        return self.side * self.side

    def contains(self, w: Base) -> bool:
        return w[0] < self.side and w[1] < self.side

    def contains_many(self, pts: np.ndarray) -> np.ndarray:
        return (pts[:, 0] < self.side) & (pts[:, 1] < self.side)

    def intersects(self, other) -> bool:
        if isinstance(other, Everywhere):
            return self.measure > 0
        if not isinstance(other, Square):
            raise ConfigurationError("cannot intersect regions of different spaces")
        return min(self.side, other.side) > 0


@dataclass(frozen=True)
class Everywhere:
    measure: float = field(default=1.0, init=False)

    def contains(self, w: Base) -> bool:
        return True

    def contains_many(self, pts: np.ndarray) -> np.ndarray:
        return np.ones(len(pts), dtype=bool)

    def intersects(self, other) -> bool:
        return other.measure > 0


Region = Arc | Square | Everywhere


def region_of_measure(base: BaseSystem, r: float) -> Region:
    """Coordinate region at the origin with base measure r."""
    if not 0.0 < r < 1.0:
        raise ConfigurationError(f"region measure must lie in (0, 1), got {r}")
    if base.dim == 1:
        return Arc(0.0, r)
    return Square.of_measure(r)


@dataclass(frozen=True)
class FlowboxSpec:
    """The flow-saturated box phi^[a, b](region) below the roof."""

    region: Region
    a: float
    b: float

    def __post_init__(self):
        if not (0.0 <= self.a < self.b):
            raise ConfigurationError(f"flowbox needs 0 <= a < b, got [{self.a}, {self.b}]")

    @property
    def duration(self) -> float:
        return self.b - self.a

    def contains(self, w: Base, s: float) -> bool:
        return self.a <= s < self.b and self.region.contains(w)

    def overlaps(self, other: FlowboxSpec) -> bool:
        """Positive-measure overlap (shared faces do not count)."""
        if max(self.a, other.a) >= min(self.b, other.b):
            return False
        return self.region.intersects(other.region)


# ----------------------------------------------------------------- the flow


@dataclass(frozen=True, slots=True)
class SuspensionPoint:
    base: tuple
    height: float


@dataclass(frozen=True)
class SuspensionFlow:
    base: BaseSystem = field(default_factory=CircleRotation)
    roof: RoofFunction = field(default_factory=RoofFunction)

    @property
    def mass(self) -> float:
        return self.roof.integral()

    @property
    def H(self) -> float:
        return self.roof.infimum

    def point(self, base, height: float = 0.0) -> SuspensionPoint:
        if isinstance(base, (int, float)):
            base = (float(base),)
        base = tuple(float(x) for x in base)
        if self.base.dim == 2:
            base = tuple(snap_torus(x) for x in base)
        if len(base) != self.base.dim:
            raise ConfigurationError(f"base point {base} has wrong dimension")
        return normalize(self, SuspensionPoint(base, float(height)))

    def validate_box(self, box: FlowboxSpec) -> None:
        if box.b > self.H:
            raise ConfigurationError(
                f"flowbox top b = {box.b} must stay below the roof infimum H = {self.H}"
            )


def normalize(F: SuspensionFlow, P: SuspensionPoint) -> SuspensionPoint:
    """Bring the height into [0, h(base)) by walking the base orbit."""
    w, s = P.base, P.height
    T, h = F.base, F.roof
    hw = h(w)
    while s >= hw:
        s -= hw
        w = T.forward(w)
        hw = h(w)
    while s < 0.0:
        w = T.inverse(w)
        s += h(w)
    if s >= h(w):  # rounding in the addition above
        s = 0.0
        w = T.forward(w)
    return SuspensionPoint(w, s)


def flow(F: SuspensionFlow, P: SuspensionPoint, t: float) -> SuspensionPoint:
    """phi^t(P); negative t runs the base map backwards."""
    return normalize(F, SuspensionPoint(P.base, P.height + t))


def towers(F: SuspensionFlow, P: SuspensionPoint) -> Iterator[tuple[float, tuple, float]]:
    """Yield ``(start_time, base, roof)`` for each tower the forward orbit of P
    visits. ``start_time`` is the (possibly negative for the first tower)
    time at which the orbit is at height zero of that tower."""
    w = P.base
    t0 = -P.height
    T, h = F.base, F.roof
    while True:
        hw = h(w)
        yield t0, w, hw
        t0 += hw
        w = T.forward(w)


@dataclass(frozen=True)
class CrossingEvent:
    box: int
    entry: float
    exit: float


def itinerary(
    F: SuspensionFlow,
    P: SuspensionPoint,
    T_max: float,
    boxes: Sequence[FlowboxSpec],
) -> list[CrossingEvent]:
    """Visits of the orbit segment phi^[0, T_max](P) to each flowbox.

    Times come from roof sums along the base itinerary, not from stepping.
    Events are clipped to [0, T_max]; the first event has entry 0 when P is
    already inside a box.
    """
    if not T_max > 0:
        raise ValueError("T_max must be positive")
    events: list[CrossingEvent] = []
    if not boxes:
        return events
    for t0, w, hw in towers(F, P):
        if t0 >= T_max:
            break
        for i, box in enumerate(boxes):
            if not box.region.contains(w):
                continue
            entry = t0 + box.a
            exit_ = t0 + min(box.b, hw)
            if exit_ <= 0.0 or entry >= T_max:
                continue
            events.append(CrossingEvent(i, max(entry, 0.0), min(exit_, T_max)))
    events.sort(key=lambda e: (e.entry, e.box))
    return events


def occupation_time(F: SuspensionFlow, P: SuspensionPoint, T_max: float, box: FlowboxSpec) -> float:
    """Integral over [0, T_max] of the box indicator along the orbit of P."""
    return sum(e.exit - e.entry for e in itinerary(F, P, T_max, [box]))


def measure_of_flowbox(F: SuspensionFlow, box: FlowboxSpec) -> float:
    """mu(phi^[a, b](B)) = (b - a) mu~(B) / int h dmu~ (needs b <= inf h)."""
    if box.b > F.H:
        raise ConfigurationError(f"flowbox top b = {box.b} exceeds the roof infimum {F.H}")
    return box.duration * box.region.measure / F.mass


# ----------------------------------------------------------- sampling mu


def sample_mu_arrays(F: SuspensionFlow, n: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Draw n i.i.d. points from the normalized invariant measure mu.

    The base point is drawn from mu~ reweighted by h (rejection against the
    roof supremum), the height uniformly below the roof. Returns
    ``(bases, heights)`` with shapes ``(n, dim)`` and ``(n,)``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    roof = F.roof
    if roof.amplitude == 0.0:
        bases = F.base.sample(rng, n)
    else:
        chunks = []
        have = 0
        hmax = roof.supremum
        while have < n:
            m = max(2 * (n - have), 64)
            cand = F.base.sample(rng, m)
            keep = rng.random(m) * hmax < roof.many(cand)
            chunks.append(cand[keep])
            have += int(keep.sum())
        bases = np.concatenate(chunks)[:n]
    heights = rng.random(n) * roof.many(bases)
    return bases, heights


def sample_mu(F: SuspensionFlow, n: int, seed) -> list[SuspensionPoint]:
    bases, heights = sample_mu_arrays(F, n, seed)
    return [SuspensionPoint(tuple(float(x) for x in b), float(s)) for b, s in zip(bases, heights)]


def is_periodic(F: SuspensionFlow, w: Base, max_period: int = 64, tol: float = 1e-12) -> bool:
    """Cheap detection of short periodic base orbits (e.g. rational points
    of the cat map)."""
    z = w
    for _ in range(max_period):
        z = F.base.forward(z)
        if base_distance(z, w) <= tol:
            return True
    return False
