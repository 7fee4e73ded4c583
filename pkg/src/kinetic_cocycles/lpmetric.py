"""L^p-type distances between generator fields.

sigma_hat_p(A, B) = (int ||A - B||^p dmu)^(1/p) with the spectral operator
norm, and the bounded metric sigma_p = x / (1 + x).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .baseflow import Arc, Everywhere, FlowboxSpec, Square, SuspensionFlow, measure_of_flowbox, sample_mu_arrays
from .cocycle import GeneratorField
from .errors import ConfigurationError

MIN_MC_SAMPLES = 1000


@dataclass(frozen=True)
class LpConfig:
    p: float = 1.0
    mc_samples: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if not (self.p >= 1.0 and math.isfinite(self.p)):
            raise ConfigurationError(f"p must be a finite real >= 1, got {self.p!r}")
        if self.mc_samples < MIN_MC_SAMPLES:
            raise ConfigurationError(f"mc_samples must be >= {MIN_MC_SAMPLES}")


@dataclass(frozen=True)
class DistanceEstimate:
    value: float
    stderr: float
    exact: bool
    method: str  # "exact", "flowbox" or "monte_carlo"

    def __float__(self) -> float:
        return self.value


def matrix_opnorms(D: np.ndarray) -> np.ndarray:
    """Spectral norms of a stack of 2x2 matrices with shape (n, 2, 2)."""
    a, b, c, d = D[:, 0, 0], D[:, 0, 1], D[:, 1, 0], D[:, 1, 1]
    f2 = a * a + b * b + c * c + d * d
    det = a * d - b * c
    disc = np.sqrt(np.maximum(f2 * f2 - 4.0 * det * det, 0.0))
    return np.sqrt(0.5 * (f2 + disc))


def sample_region(F: SuspensionFlow, region, rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform (w.r.t. the base measure) points of a base region, shape (n, dim)."""
    if isinstance(region, Arc):
        return (region.lo + (region.hi - region.lo) * rng.random(n)).reshape(n, 1)
    if isinstance(region, Square):
        return region.side * rng.random((n, 2))
    if isinstance(region, Everywhere):
        return F.base.sample(rng, n)
    raise TypeError(f"cannot sample region {region!r}")


def _check_same_flow(A: GeneratorField, B: GeneratorField) -> None:
    if A.flow != B.flow:
        raise ConfigurationError("generator fields live over different suspension flows")


def _from_integral(I: float, se_I: float, p: float, exact: bool, method: str) -> DistanceEstimate:
    if not math.isfinite(I):
        return DistanceEstimate(math.inf, math.inf, exact, method)
    value = I ** (1.0 / p)
    if I > 0.0:
        se = se_I * value / (p * I)  # delta method for I^(1/p)
    else:
        se = 0.0
    return DistanceEstimate(value, se, exact, method)


def _support_boxes(A: GeneratorField, B: GeneratorField) -> list[FlowboxSpec] | None:
    """Boxes carrying A - B when both fields share the default value, or
    None if the override layouts overlap partially."""
    if A.default != B.default:
        return None
    boxes = [box for box, _ in A.overrides]
    for box, _ in B.overrides:
        if box in boxes:
            continue
        if any(box.overlaps(other) for other in boxes):
            return None
        boxes.append(box)
    return boxes


def _value_on(gen: GeneratorField, box: FlowboxSpec):
    i = gen.override_index(box)
    return gen.overrides[i][1] if i >= 0 else gen.default


def _exact_integral(A: GeneratorField, B: GeneratorField, boxes, p: float) -> float | None:
    total = 0.0
    for box in boxes:
        va = _value_on(A, box)
        vb = _value_on(B, box)
        if va == vb:
            continue
        ma, mb = va.constant_matrix, vb.constant_matrix
        if ma is None or mb is None:
            return None
        total += (ma - mb).opnorm() ** p * measure_of_flowbox(A.flow, box)
    return total


def box_integral(A: GeneratorField, B: GeneratorField, box: FlowboxSpec, p: float,
                 n: int, rng: np.random.Generator) -> tuple[float, float]:
    """int over the flowbox of ||A - B||^p dmu and its standard error, from n
    uniform points in the box."""
    F = A.flow
    bases = sample_region(F, box.region, rng, n)
    heights = box.a + (box.b - box.a) * rng.random(n)
    D = A.matrices_many(bases, heights) - B.matrices_many(bases, heights)
    vals = matrix_opnorms(D) ** p
    m = measure_of_flowbox(F, box)
    if not np.all(np.isfinite(vals)):
        return math.inf, math.inf
    return m * float(vals.mean()), m * float(vals.std(ddof=1)) / math.sqrt(n)


def sigma_hat_p(A: GeneratorField, B: GeneratorField, cfg: LpConfig = LpConfig()) -> DistanceEstimate:
    """Estimate (int ||A - B||^p dmu)^(1/p), possibly +inf.

    Exact when A - B is constant on finitely many flowboxes and zero
    elsewhere; flowbox-restricted Monte Carlo when A - B is supported on
    flowboxes; plain Monte Carlo over mu otherwise.
    """
    _check_same_flow(A, B)
    p = cfg.p
    boxes = _support_boxes(A, B)
    if boxes is not None:
        if not boxes:
            return DistanceEstimate(0.0, 0.0, True, "exact")
        I = _exact_integral(A, B, boxes, p)
        if I is not None:
            return _from_integral(I, 0.0, p, True, "exact")
        rng = np.random.default_rng(cfg.seed)
        I = var = 0.0
        for box in boxes:
            part, se = box_integral(A, B, box, p, cfg.mc_samples, rng)
            I += part
            var += se * se
        return _from_integral(I, math.sqrt(var), p, False, "flowbox")
    bases, heights = sample_mu_arrays(A.flow, cfg.mc_samples, cfg.seed)
    return sigma_hat_from_samples(A, B, bases, heights, p)


def sigma_hat_from_samples(A: GeneratorField, B: GeneratorField, bases, heights, p: float) -> DistanceEstimate:
    """Plain Monte Carlo on given mu-samples (reuse them for common random
    numbers across p)."""
    with np.errstate(all="ignore"):
        D = A.matrices_many(bases, heights) - B.matrices_many(bases, heights)
        vals = matrix_opnorms(D) ** p
    if not np.all(np.isfinite(vals)):
        return DistanceEstimate(math.inf, math.inf, False, "monte_carlo")
    n = len(vals)
    se = float(vals.std(ddof=1)) / math.sqrt(n) if n > 1 else 0.0
    return _from_integral(float(vals.mean()), se, p, False, "monte_carlo")


def bounded(x: float) -> float:
    """x / (1 + x), with 1 for infinite x."""
    if math.isinf(x):
        return 1.0
    return x / (1.0 + x)


def sigma_p(A: GeneratorField, B: GeneratorField, cfg: LpConfig = LpConfig()) -> float:
    return bounded(sigma_hat_p(A, B, cfg).value)


def support_budget(A: GeneratorField | None, p: float, eps: float, c_bound: float) -> float:
    """Largest mu-measure delta such that a difference bounded by c_bound on a
    set of measure < delta keeps sigma_hat_p below eps."""
    if not eps > 0:
        raise ConfigurationError("eps must be positive")
    if not c_bound > 0:
        raise ConfigurationError("c_bound must be positive")
    if p < 1:
        raise ConfigurationError("p must be >= 1")
    return (eps / c_bound) ** p


def flowbox_distance_bound(c_bound: float, measure: float, p: float) -> float:
    """c * m^(1/p): sigma_hat_p of a difference of norm c on a set of measure m."""
    return c_bound * measure ** (1.0 / p)


def sup_norm_bound(gen: GeneratorField) -> float:
    return max(v.norm_bound for v in gen.values())
