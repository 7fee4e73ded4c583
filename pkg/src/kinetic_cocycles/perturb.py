"""The three-stage perturbation A -> A0 -> B0 -> B producing simple spectrum.

Two flowboxes stacked over a small base region B_r carry the perturbations:
V_R = phi^[0,1](B_r) below V_S = phi^[1,2](B_r). The stages are

    A0: A with the time-1 identity rotation R_{2 pi} on V_R and V_S;
    B0: A0 with a tuned rotation on V_R that turns the invariant direction
        g back onto v = (1, 1)/sqrt(2) at the top face of V_R;
    B:  B0 with the stretch S on V_S, expanding v by e on every crossing.

Each stage differs from the previous one only on a set of small measure, so
the distance budget is controlled by the base measure r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .baseflow import (
    FlowboxSpec,
    SuspensionFlow,
    SuspensionPoint,
    flow as flow_point,
    measure_of_flowbox,
    region_of_measure,
    sample_mu,
)
from .cocycle import (
    DEFAULT_STEP,
    GeneratorField,
    Kinetic,
    LyapunovReport,
    Rotation,
    Stretch,
    TunedRotation,
    iter_pieces,
    liouville_logdet,
    lyapunov_spectrum,
    propagate,
    propagate_vector,
)
from .errors import BudgetError, ConfigurationError, LookbackError, PipelineError
from .lpmetric import (
    LpConfig,
    bounded,
    flowbox_distance_bound,
    sample_region,
    sigma_hat_p,
    sup_norm_bound,
    support_budget,
)
from .mat2 import DIAGONAL, STRETCH, TWO_PI, Vec2, rotation_flow, rotation_generator, solve_alignment_theta

#: chosen r is this fraction of the largest r allowed by every stage budget
R_SAFETY = 0.5

#: number of base steps the lookback may take before giving up
LOOKBACK_MAX_RETURNS = 1_000_000

ROTATION_BOUND = TWO_PI ** 2
STRETCH_BOUND = (STRETCH - rotation_generator(TWO_PI)).opnorm()  # 1 + 4 pi^2

STAGES = ("A0", "B0", "B")


@dataclass(frozen=True)
class PerturbationPlan:
    flow: SuspensionFlow
    r: float
    V_R: FlowboxSpec
    V_S: FlowboxSpec
    eps: float = 0.1
    p: float = 1.0
    v: Vec2 = DIAGONAL

    @classmethod
    def create(cls, flow: SuspensionFlow, r: float, eps: float = 0.1, p: float = 1.0) -> PerturbationPlan:
        if not eps > 0:
            raise ConfigurationError("eps must be positive")
        if not p >= 1:
            raise ConfigurationError("p must be >= 1")
        if not flow.H > 2.0:
            raise ConfigurationError("the roof must stay above 2 to fit both flowboxes")
        region = region_of_measure(flow.base, r)
        V_R = FlowboxSpec(region, 0.0, 1.0)
        V_S = FlowboxSpec(region, 1.0, 2.0)
        return cls(flow, r, V_R, V_S, eps, p)

    @property
    def region(self):
        return self.V_R.region

    @property
    def mu_VR(self) -> float:
        return measure_of_flowbox(self.flow, self.V_R)

    @property
    def mu_VS(self) -> float:
        return measure_of_flowbox(self.flow, self.V_S)

    def on_face(self, P: SuspensionPoint, tol: float = 1e-12) -> bool:
        """P lies on the face phi^1(B_r) between the two boxes."""
        return self.region.contains(P.base) and abs(P.height - 1.0) <= tol


# ------------------------------------------------------------------ budget


def stage_bounds(A: GeneratorField, plan: PerturbationPlan) -> dict:
    """Uniform norm bound of each stage difference and the measure of its support."""
    return {
        "A0": (ROTATION_BOUND + sup_norm_bound(A), plan.mu_VR + plan.mu_VS),
        "B0": (ROTATION_BOUND, plan.mu_VR),
        "B": (STRETCH_BOUND, plan.mu_VS),
    }


# support measure of each stage in units of r / mass
_SUPPORT_MULTIPLE = {"A0": 2.0, "B0": 1.0, "B": 1.0}


def required_r(A: GeneratorField, flow: SuspensionFlow, p: float, eps: float) -> dict:
    """Per stage, the largest r for which that stage stays within eps/3."""
    bounds = {"A0": ROTATION_BOUND + sup_norm_bound(A), "B0": ROTATION_BOUND, "B": STRETCH_BOUND}
    out = {}
    for stage, c in bounds.items():
        delta = support_budget(A, p, eps / 3.0, c)
        out[stage] = delta * flow.mass / _SUPPORT_MULTIPLE[stage]
    return out


def choose_r(A: GeneratorField, p: float, eps: float) -> float:
    return R_SAFETY * min(min(required_r(A, A.flow, p, eps).values()), 1.0)


def _enforce(stage: str, A: GeneratorField, plan: PerturbationPlan) -> None:
    c, m = stage_bounds(A, plan)[stage]
    if not flowbox_distance_bound(c, m, plan.p) < plan.eps / 3.0:
        raise BudgetError(stage, plan.r, required_r(A, plan.flow, plan.p, plan.eps)[stage])


# ------------------------------------------------------------------ stages


def build_A0(A: GeneratorField, plan: PerturbationPlan, enforce_budget: bool = True) -> GeneratorField:
    if not A.is_kinetic:
        raise ConfigurationError("the input field must be kinetic")
    if A.flow != plan.flow:
        raise ConfigurationError("plan and field use different flows")
    if enforce_budget:
        _enforce("A0", A, plan)
    R = Rotation(TWO_PI)
    return A.with_overrides((plan.V_R, R), (plan.V_S, R), name="A0")


def lookback(plan: PerturbationPlan, P: SuspensionPoint,
             max_returns: int = LOOKBACK_MAX_RETURNS) -> tuple[SuspensionPoint, float]:
    """Last visit of the face phi^1(B_r) before P, and the time elapsed since.

    Undefined strictly inside V_R, where g is being rotated.
    """
    F = plan.flow
    region = plan.region
    w, s = P.base, P.height
    if region.contains(w):
        if s >= 1.0:
            return SuspensionPoint(w, 1.0), s - 1.0
        if s > 0.0:
            raise ValueError("the direction field is undefined inside V_R")
    dt = s
    for _ in range(max_returns):
        w = F.base.inverse(w)
        dt += F.roof(w)
        if region.contains(w):
            return SuspensionPoint(w, 1.0), dt - 1.0
    raise LookbackError(f"no visit of the reference face within {max_returns} returns")


def g_field(gen: GeneratorField, plan: PerturbationPlan, P: SuspensionPoint,
            step: float = DEFAULT_STEP) -> Vec2:
    """Unit direction g(P): v on phi^1(B_r), transported by ``gen`` elsewhere."""
    start, dt = lookback(plan, P)
    if dt == 0.0:
        return plan.v
    w, _ = propagate_vector(gen, start, plan.v, dt, step)
    return w


class AlignmentRule:
    """theta*(w) for w in B_r: the rotation frequency carrying g(w, 0) onto
    the line of v in unit time. Results are cached per base point."""

    def __init__(self, A0: GeneratorField, plan: PerturbationPlan, step: float = DEFAULT_STEP):
        self.A0 = A0
        self.plan = plan
        self.step = step
        self._cache: dict = {}

    def direction(self, base) -> Vec2:
        return g_field(self.A0, self.plan, SuspensionPoint(tuple(base), 0.0), self.step)

    def __call__(self, base) -> float:
        key = tuple(base)
        th = self._cache.get(key)
        if th is None:
            th = solve_alignment_theta(self.direction(key), self.plan.v)
            self._cache[key] = th
        return th

    def residual(self, base) -> float:
        """|R_theta*(1) g ^ v| for unit g."""
        u = self.direction(base)
        w = rotation_flow(self(base), 1.0) @ u
        return abs(w.normalized().cross(self.plan.v))

    def __getstate__(self):
        return {"A0": self.A0, "plan": self.plan, "step": self.step, "_cache": {}}


def build_B0(A0: GeneratorField, plan: PerturbationPlan, enforce_budget: bool = True,
             step: float = DEFAULT_STEP) -> GeneratorField:
    if A0.override_index(plan.V_R) < 0:
        raise ConfigurationError("B0 must be built from the A0 stage of the same plan")
    if enforce_budget:
        _enforce("B0", A0, plan)
    return A0.replace_override(plan.V_R, TunedRotation(AlignmentRule(A0, plan, step)), name="B0")


def build_B(B0: GeneratorField, plan: PerturbationPlan, enforce_budget: bool = True) -> GeneratorField:
    if B0.override_index(plan.V_S) < 0:
        raise ConfigurationError("B must be built from the B0 stage of the same plan")
    if enforce_budget:
        _enforce("B", B0, plan)
    return B0.replace_override(plan.V_S, Stretch(), name="B")


def alignment_rule(gen: GeneratorField, plan: PerturbationPlan) -> AlignmentRule:
    val = gen.overrides[gen.override_index(plan.V_R)][1]
    if not isinstance(val, TunedRotation):
        raise ConfigurationError("field has no tuned rotation on V_R")
    return val.rule


# ------------------------------------------------------- scalar cocycles


@dataclass(frozen=True)
class ReturnLedger:
    s: tuple  # arrival times at phi^1(B_r)
    l: tuple  # exit times of V_S, l_n = s_n + 1
    delta: tuple  # s_n - l_{n-1}
    J: int  # completed V_S crossings

    def check(self) -> bool:
        ok = all(abs(b - a - 1.0) <= 1e-9 for a, b in zip(self.s, self.l))
        return ok and all(d > 0 for d in self.delta)


@dataclass(frozen=True)
class ScalarCocycleTrace:
    """log|b| along phi^[0, T](P0), where b(t) g(phi^t P0) = Phi(t, P0) g(P0)."""

    log_b: float
    horizon: float
    increments: tuple  # log growth across each complete V_S crossing
    ledger: ReturnLedger
    end_point: SuspensionPoint
    end_direction: Vec2
    face_residual: float  # max |direction ^ v| at arrivals on phi^1(B_r)

    @property
    def exponent(self) -> float:
        return self.log_b / self.horizon

    @property
    def J(self) -> int:
        return self.ledger.J


def scalar_cocycle_track(gen: GeneratorField, plan: PerturbationPlan, P0: SuspensionPoint, T: float,
                         step: float = DEFAULT_STEP, g0: Vec2 | None = None) -> ScalarCocycleTrace:
    """Follow g along the orbit under ``gen`` and account for its growth.

    Without ``g0`` the start must lie on phi^1(B_r), where g = v. Passing the
    end point and direction of a previous track continues it.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    iS = gen.override_index(plan.V_S)
    if iS < 0:
        raise ConfigurationError("field has no override on V_S")
    if g0 is None:
        if not plan.on_face(P0):
            raise ValueError("start point must lie on the face phi^1(B_r)")
        g0 = plan.v
    w = g0.normalized()
    log_b = 0.0
    incs = []
    s_list, l_list, d_list = [], [], []
    face_res = 0.0
    a, b = plan.V_S.a, plan.V_S.b
    for pc in iter_pieces(gen, P0, T):
        at_entry = pc.box == iS and pc.s0 == a
        if at_entry:
            face_res = max(face_res, abs(w.cross(plan.v)))
            s_list.append(pc.t0)
            if l_list:
                d_list.append(pc.t0 - l_list[-1])
        u = pc.value.flow(pc.base, pc.s0, pc.s1, step) @ w
        n = u.norm()
        gain = math.log(n)
        log_b += gain
        w = u * (1.0 / n)
        if at_entry and pc.s1 == b:
            incs.append(gain)
            l_list.append(pc.t0 + 1.0)
    ledger = ReturnLedger(tuple(s_list), tuple(l_list), tuple(d_list), len(incs))
    end = flow_point(gen.flow, P0, T)
    return ScalarCocycleTrace(log_b, T, tuple(incs), ledger, end, w, face_res)


def first_face_point(plan: PerturbationPlan, P: SuspensionPoint,
                     max_returns: int = LOOKBACK_MAX_RETURNS) -> tuple[float, SuspensionPoint]:
    """(s0, phi^s0 P) for the first s0 >= 0 with phi^s0 P on phi^1(B_r)."""
    F = plan.flow
    w, s = P.base, P.height
    if plan.region.contains(w) and s <= 1.0:
        return 1.0 - s, SuspensionPoint(w, 1.0)
    t = F.roof(w) - s
    for _ in range(max_returns):
        w = F.base.forward(w)
        if plan.region.contains(w):
            return t + 1.0, SuspensionPoint(w, 1.0)
        t += F.roof(w)
    raise LookbackError("orbit does not reach the reference face")


@dataclass(frozen=True)
class SplittingVerdict:
    lambda_B_g: float
    lambda_B0_g: float
    difference: float
    mu_VS: float
    visits: int
    visit_rate: float
    increment_max_error: float
    identity_residual: float  # difference - J/T, exact bookkeeping
    trace_residual: float  # time-averaged trace of B vs B0
    lambda1: float
    lambda2: float
    sum_rule_residual: float  # 2 lambda(B0, g) - (lambda1 + lambda2)
    margin_ok: bool
    simple: bool
    tolerance: float = 1e-2
    trace_tolerance: float = 1e-7

    @property
    def difference_ok(self) -> bool:
        return abs(self.difference - self.mu_VS) <= self.tolerance

    @property
    def trace_ok(self) -> bool:
        return self.trace_residual <= self.trace_tolerance

    @property
    def passed(self) -> bool:
        return self.difference_ok and self.trace_ok and self.margin_ok and self.simple

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(difference_ok=self.difference_ok, trace_ok=self.trace_ok, passed=self.passed)
        return d


def simple_threshold(T: float) -> float:
    return 10.0 / T


def verify_splitting(B: GeneratorField, B0: GeneratorField, plan: PerturbationPlan, T: float,
                     seed: int = 0, step: float = DEFAULT_STEP, spectrum: LyapunovReport | None = None,
                     n_samples: int = 2) -> SplittingVerdict:
    """Compare lambda(B, g) with lambda(B0, g) along one mu-random orbit
    started at its first arrival on phi^1(B_r)."""
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    (P,) = sample_mu(plan.flow, 1, rng)
    _, P0 = first_face_point(plan, P)
    tb = scalar_cocycle_track(B, plan, P0, T, step)
    tb0 = scalar_cocycle_track(B0, plan, P0, T, step)
    diff = tb.exponent - tb0.exponent
    trace_res = abs(liouville_logdet(B, P0, T) - liouville_logdet(B0, P0, T)) / T
    if spectrum is None:
        spectrum = lyapunov_spectrum(B, T, n_samples, step, seed)
    inc_err = max((abs(x - 1.0) for x in tb.increments), default=0.0)
    return SplittingVerdict(
        lambda_B_g=tb.exponent,
        lambda_B0_g=tb0.exponent,
        difference=diff,
        mu_VS=plan.mu_VS,
        visits=tb.J,
        visit_rate=tb.J / T,
        increment_max_error=inc_err,
        identity_residual=diff - tb.J / T,
        trace_residual=trace_res,
        lambda1=spectrum.lambda1,
        lambda2=spectrum.lambda2,
        sum_rule_residual=2.0 * tb0.exponent - (spectrum.lambda1 + spectrum.lambda2),
        margin_ok=spectrum.lambda1 - tb0.exponent >= 0.5 * plan.mu_VS,
        simple=spectrum.gap > simple_threshold(T),
    )


# ---------------------------------------------------------------- pipeline


@dataclass(frozen=True)
class StageDistance:
    stage: str
    bound: float  # c * m^(1/p)
    estimate: float  # sigma_hat_p
    stderr: float
    method: str

    @property
    def sigma(self) -> float:
        return bounded(self.estimate)


@dataclass
class PipelineReport:
    r: float
    p: float
    eps: float
    mu_VR: float
    mu_VS: float
    already_simple: bool
    input_spectrum: LyapunovReport
    distances: list = field(default_factory=list)
    sigma_total: float = 0.0
    sigma_hat_total: float = 0.0
    sigma_total_bound: float = 0.0
    det_residuals: dict = field(default_factory=dict)
    spectrum: LyapunovReport | None = None
    verdict: SplittingVerdict | None = None
    prediction: float = math.nan
    potential: dict | None = None

    @property
    def simple(self) -> bool:
        if self.already_simple:
            return True
        return self.verdict is not None and self.verdict.simple

    def as_dict(self) -> dict:
        d = {
            "r": self.r,
            "p": self.p,
            "eps": self.eps,
            "mu_VR": self.mu_VR,
            "mu_VS": self.mu_VS,
            "already_simple": self.already_simple,
            "simple": self.simple,
            "input_spectrum": self.input_spectrum.as_dict(),
            "stages": [
                {"stage": s.stage, "bound": s.bound, "sigma_hat": s.estimate, "stderr": s.stderr,
                 "sigma": s.sigma, "method": s.method}
                for s in self.distances
            ],
            "sigma_total": self.sigma_total,
            "sigma_hat_total": self.sigma_hat_total,
            "sigma_total_bound": self.sigma_total_bound,
            "det_residuals": self.det_residuals,
            "prediction_lambda1": self.prediction,
        }
        if self.spectrum is not None:
            d["spectrum"] = self.spectrum.as_dict()
        if self.verdict is not None:
            d["verdict"] = self.verdict.as_dict()
        if self.potential is not None:
            d["potential"] = self.potential
        return d


def determinant_chain(fields, points, times, step: float = DEFAULT_STEP) -> float:
    """Largest relative deviation of det Phi between the fields at (P, t)."""
    worst = 0.0
    for P, t in zip(points, times):
        logs = [propagate(f, P, t, step).log_abs_det() for f in fields]
        for x in logs[1:]:
            worst = max(worst, abs(math.expm1(x - logs[0])))
    return worst


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(name, exc) from exc


def potential_report(A: GeneratorField, B: GeneratorField, plan: PerturbationPlan, energy: float,
                     distance, n_entries: int = 8) -> dict:
    """Perturbed potential Q~ = E - beta_B on the boxes. Both overrides only
    touch the beta entry, so ||Q~ - Q||_p is the distance between A and B."""
    rule = alignment_rule(B, plan)
    rng = np.random.default_rng(0)
    bases = sample_region(plan.flow, plan.region, rng, n_entries)
    entries = [tuple(float(x) for x in b) for b in bases]
    return {
        "energy": energy,
        "Q_on_VS": energy + 1.0,
        "Q_on_VR": [{"base": list(w), "Q": energy - rule(w) ** 2} for w in entries],
        "lp_bound": distance.bound,
        "lp_estimate": distance.estimate,
        "lp_stderr": distance.stderr,
    }


def run_pipeline(A: GeneratorField, p: float = 1.0, eps: float = 0.1, seed: int = 0, *,
                 T: float = 1e5, n_samples: int = 2, step: float = DEFAULT_STEP, r: float | None = None,
                 enforce_budget: bool = True, pretest: bool = True, lp_samples: int = 2000,
                 n_det_points: int = 20, energy: float | None = None,
                 checkpoints=(), workers: int = 1) -> tuple[GeneratorField, PipelineReport]:
    """Perturb A into a field with simple Lyapunov spectrum.

    Returns A itself when its spectrum is already detectably simple.
    """
    if not A.is_kinetic:
        raise PipelineError("input", ConfigurationError("the input field must be kinetic"))
    if r is None:
        r = _stage("plan", choose_r, A, p, eps)
    plan = _stage("plan", PerturbationPlan.create, A.flow, r, eps, p)

    rep_A = _stage("pretest", lyapunov_spectrum, A, T, n_samples, step, seed,
                   checkpoints=checkpoints, workers=workers)
    report = PipelineReport(r, p, eps, plan.mu_VR, plan.mu_VS, False, rep_A)
    if pretest and rep_A.gap > 6.0 * rep_A.stderr + simple_threshold(T):
        report.already_simple = True
        report.spectrum = rep_A
        return A, report

    A0 = _stage("A0", build_A0, A, plan, enforce_budget)
    B0 = _stage("B0", build_B0, A0, plan, enforce_budget, step)
    B = _stage("B", build_B, B0, plan, enforce_budget)

    # A0 and B differ from their predecessors by constants on the boxes (up to
    # the original field), so those distances are exact or cheap flowbox
    # integrals. The tuned rotation would need one lookback per sample, so
    # that stage is reported by its uniform bound.
    cfg = LpConfig(p, lp_samples, seed)
    bounds = stage_bounds(A, plan)
    for name, pair in (("A0", (A, A0)), ("B0", None), ("B", (B0, B))):
        c, m = bounds[name]
        bound = flowbox_distance_bound(c, m, p)
        if pair is None:
            report.distances.append(StageDistance(name, bound, bound, 0.0, "bound"))
            continue
        est = _stage(name, sigma_hat_p, *pair, cfg)
        report.distances.append(StageDistance(name, bound, est.value, est.stderr, est.method))
    report.sigma_hat_total = sum(d.estimate for d in report.distances)
    report.sigma_total = bounded(report.sigma_hat_total)
    report.sigma_total_bound = sum(d.bound for d in report.distances)

    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])
    pts = sample_mu(A.flow, n_det_points, rng)
    times = rng.uniform(0.0, 10.0, n_det_points)
    report.det_residuals = {
        "B_vs_B0": _stage("B", determinant_chain, (B0, B), pts, times, step),
        "B0_vs_A0": _stage("B0", determinant_chain, (A0, B0), pts, times, step),
    }

    spec_B = _stage("B", lyapunov_spectrum, B, T, n_samples, step, seed,
                    checkpoints=checkpoints, workers=workers)
    report.spectrum = spec_B
    verdict = _stage("B", verify_splitting, B, B0, plan, T, seed, step, spec_B)
    report.verdict = verdict
    report.prediction = verdict.lambda_B0_g + plan.mu_VS

    if energy is not None:
        A_total = StageDistance("total", report.sigma_total_bound, report.sigma_hat_total,
                                math.sqrt(sum(d.stderr ** 2 for d in report.distances)), "triangle")
        report.potential = potential_report(A, B, plan, energy, A_total)
    return B, report


def is_schrodinger(gen: GeneratorField) -> bool:
    d = gen.default
    return isinstance(d, Kinetic) and d.alpha.is_zero
