"""Flat ``key = value`` experiment configuration.

Blank lines and ``#`` comments are ignored. Scalar-field expressions are
four comma-separated coefficients ``a0,a1,a2,a3`` meaning

    a0 + a1 cos(2 pi w1) + a2 sin(2 pi w1) + a3 cos(2 pi s / roof_h0)

with w1 the first base coordinate and s the height in the tower.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .baseflow import GOLDEN, CircleRotation, FlowboxSpec, RoofFunction, SuspensionFlow, TorusCatMap, region_of_measure
from .cocycle import Expression, GeneratorField, Rotation, Stretch
from .errors import ConfigurationError

BASES = ("rotation", "cat_map")
ROOFS = ("constant", "cosine")
GENERATORS = ("damped_pendulum", "traceless", "schrodinger")

Coeffs = tuple[float, float, float, float]


@dataclass(frozen=True)
class ExperimentConfig:
    base: str = "rotation"
    rotation_number: float = GOLDEN
    roof: str = "constant"
    roof_h0: float = 3.0
    roof_amplitude: float = 0.0
    generator: str = "damped_pendulum"
    alpha: Coeffs = (0.0, 0.0, 0.0, 0.0)
    beta: Coeffs = (0.0, 0.0, 0.0, 0.0)
    potential: Coeffs = (0.0, 0.0, 0.0, 0.0)
    energy: float = 0.0
    # optional flowbox override, used to build fields for `distance`
    box_r: float = 0.0
    box_a: float = 0.0
    box_b: float = 1.0
    box_value: str = "none"
    p: float = 1.0
    eps: float = 0.1
    horizon: float = 1e5
    step: float = 1e-3
    samples: int = 2
    mc_samples: int = 100_000
    seed: int = 0
    r: float | None = None
    enforce_budget: bool = True
    workers: int = 1
    out: str = "out"

    def __post_init__(self):
        validate(self)


_COEFF_KEYS = {"alpha", "beta", "potential"}
_INT_KEYS = {"samples", "mc_samples", "seed", "workers"}
_STR_KEYS = {"base", "roof", "generator", "box_value", "out"}
_BOOL_KEYS = {"enforce_budget"}


def _fail(key: str, msg: str):
    raise ConfigurationError(f"{key}: {msg}")


def validate(c: ExperimentConfig) -> None:
    if c.base not in BASES:
        _fail("base", f"must be one of {', '.join(BASES)}")
    if c.roof not in ROOFS:
        _fail("roof", f"must be one of {', '.join(ROOFS)}")
    if c.generator not in GENERATORS:
        _fail("generator", f"must be one of {', '.join(GENERATORS)}")
    if c.roof == "constant" and c.roof_amplitude != 0.0:
        _fail("roof_amplitude", "must be 0 for a constant roof")
    if not c.roof_h0 - abs(c.roof_amplitude) > 2.0:
        _fail("roof_h0", "roof_h0 - |roof_amplitude| must exceed 2")
    if not 0.0 < c.rotation_number < 1.0:
        _fail("rotation_number", "must lie in (0, 1)")
    for key in ("roof_h0", "roof_amplitude", "energy", "p", "eps", "horizon", "step", "box_a", "box_b", "box_r"):
        if not math.isfinite(getattr(c, key)):
            _fail(key, "must be finite")
    for key in _COEFF_KEYS:
        coeffs = getattr(c, key)
        if len(coeffs) != 4 or not all(math.isfinite(x) for x in coeffs):
            _fail(key, "needs four finite coefficients a0,a1,a2,a3")
    if c.generator == "traceless" and any(c.alpha):
        _fail("alpha", "must be zero for the traceless preset")
    if c.generator == "schrodinger" and (any(c.alpha) or any(c.beta)):
        _fail("beta", "the schrodinger preset takes `potential` and `energy` instead of alpha/beta")
    if c.p < 1.0:
        _fail("p", "must be >= 1")
    if not c.eps > 0.0:
        _fail("eps", "must be positive")
    if not c.horizon > 0.0:
        _fail("horizon", "must be positive")
    if not c.step > 0.0:
        _fail("step", "must be positive")
    if c.samples < 1:
        _fail("samples", "must be >= 1")
    if c.mc_samples < 1000:
        _fail("mc_samples", "must be >= 1000")
    if c.seed < 0:
        _fail("seed", "must be non-negative")
    if c.workers < 1:
        _fail("workers", "must be >= 1")
    if c.r is not None and not 0.0 < c.r < 1.0:
        _fail("r", "must lie in (0, 1) or be auto")
    if c.box_value != "none":
        kind = c.box_value.split(":")[0]
        if kind not in ("rotation", "stretch"):
            _fail("box_value", "must be none, stretch or rotation:<theta>")
        if kind == "rotation":
            try:
                th = float(c.box_value.split(":", 1)[1])
            except (IndexError, ValueError):
                _fail("box_value", "rotation needs a frequency, e.g. rotation:6.283185307179586")
            if not th > 0.0:
                _fail("box_value", "rotation frequency must be positive")
        if not 0.0 < c.box_r < 1.0:
            _fail("box_r", "must lie in (0, 1)")
        if not 0.0 <= c.box_a < c.box_b <= c.roof_h0 - abs(c.roof_amplitude):
            _fail("box_b", "need 0 <= box_a < box_b <= roof infimum")


# ------------------------------------------------------------ text format


def _parse_value(key: str, raw: str):
    try:
        if key in _COEFF_KEYS:
            parts = [float(x) for x in raw.split(",")]
            if len(parts) > 4:
                raise ValueError
            return tuple(parts + [0.0] * (4 - len(parts)))
        if key in _INT_KEYS:
            return int(raw)
        if key in _STR_KEYS:
            return raw
        if key in _BOOL_KEYS:
            low = raw.lower()
            if low not in ("true", "false"):
                raise ValueError
            return low == "true"
        if key == "r":
            return None if raw.lower() == "auto" else float(raw)
        return float(raw)
    except ValueError:
        _fail(key, f"cannot parse {raw!r}")


def parse_config(text: str) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected `key = value`")
        key, raw = (x.strip() for x in line.split("=", 1))
        if key not in known:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw)
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def _format_value(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(c: ExperimentConfig) -> str:
    return "".join(f"{f.name} = {_format_value(getattr(c, f.name))}\n" for f in fields(c))


def config_dict(c: ExperimentConfig) -> dict:
    return {f.name: (list(v) if isinstance(v := getattr(c, f.name), tuple) else v) for f in fields(c)}


def with_overrides(c: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(c, **{k: v for k, v in kw.items() if v is not None})


# ------------------------------------------------------------ builders


def build_flow(c: ExperimentConfig) -> SuspensionFlow:
    base = CircleRotation(c.rotation_number) if c.base == "rotation" else TorusCatMap()
    return SuspensionFlow(base, RoofFunction(c.roof_h0, c.roof_amplitude))


def _expr(coeffs: Coeffs, period: float) -> Expression:
    return Expression(*coeffs, period=period)


def build_generator(c: ExperimentConfig, flow: SuspensionFlow | None = None) -> GeneratorField:
    flow = flow or build_flow(c)
    H0 = c.roof_h0
    if c.generator == "schrodinger":
        gen = GeneratorField.schrodinger(flow, _expr(c.potential, H0), c.energy, name="schrodinger")
    else:
        gen = GeneratorField.kinetic(flow, _expr(c.alpha, H0), _expr(c.beta, H0), name=c.generator)
    if c.box_value != "none":
        region = region_of_measure(flow.base, c.box_r)
        box = FlowboxSpec(region, c.box_a, c.box_b)
        if c.box_value == "stretch":
            val = Stretch()
        else:
            val = Rotation(float(c.box_value.split(":", 1)[1]))
        gen = gen.with_overrides((box, val))
    return gen

