"""Named invariant checks run by ``kcoc verify``.

Each check returns a non-negative defect that must not exceed its entry in
TOLERANCES. Checks are sized to finish in well under a minute in total.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .baseflow import (
    GOLDEN,
    Arc,
    CircleRotation,
    FlowboxSpec,
    RoofFunction,
    SuspensionFlow,
    TorusCatMap,
    flow,
    itinerary,
    measure_of_flowbox,
    sample_mu,
    sample_mu_arrays,
)
from .cocycle import (
    Expression,
    GeneratorField,
    Rotation,
    Stretch,
    check_cocycle_property,
    liouville_logdet,
    lyapunov_spectrum,
    propagate,
)
from .config import ExperimentConfig, parse_config, serialize_config
from .lpmetric import LpConfig, flowbox_distance_bound, sigma_hat_from_samples, sigma_hat_p, support_budget
from .mat2 import DIAGONAL, TWO_PI, Mat2, Vec2, rotation_flow, solve_alignment_theta, stretch_flow
from .perturb import (
    PerturbationPlan,
    build_A0,
    build_B,
    build_B0,
    determinant_chain,
    first_face_point,
    g_field,
    scalar_cocycle_track,
    verify_splitting,
)

TOLERANCES: dict[str, float] = {
    "mat2.det_multiplicative": 1e-12,
    "mat2.rotation_group_law": 1e-12,
    "mat2.stretch_eigenvector": 1e-12,
    "mat2.alignment_residual": 1e-9,
    "baseflow.circle_invertibility": 1e-12,
    "baseflow.torus_invertibility": 0.0,
    "baseflow.flow_group_law": 1e-9,
    "baseflow.flowbox_measure": 5e-3,
    "baseflow.birkhoff_visit_rate": 1e-2,
    "cocycle.closed_form_agreement": 1e-9,
    "cocycle.cocycle_law": 1e-6,
    "cocycle.liouville": 1e-6,
    "cocycle.step_halving": 1.0 / 8.0,
    "cocycle.sum_rule": 1e-6,
    "cocycle.constant_spectrum": 1e-3,
    "lpmetric.symmetry": 0.0,
    "lpmetric.triangle": 0.0,
    "lpmetric.monotone_in_p": 0.0,
    "lpmetric.support_budget_closed_form": 1e-12,
    "lpmetric.shrinking_support": 1e-12,
    "perturb.stage_layout": 0.0,
    "perturb.determinant_chain": 1e-7,
    "perturb.g_invariance": 1e-6,
    "perturb.alignment": 1e-6,
    "perturb.stretch_increment": 1e-6,
    "perturb.splitting_identity": 1e-2,
    "perturb.budget_chain": 0.0,
    "cli.config_roundtrip": 0.0,
}


@dataclass(frozen=True)
class CheckResult:
    name: str
    defect: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.defect <= self.tolerance


CHECKS: dict[str, Callable[[int], float]] = {}


def check(name: str):
    def deco(fn):
        CHECKS[name] = fn
        return fn
    return deco


def _rng(seed: int, name: str) -> np.random.Generator:
    salt = sum(ord(c) for c in name)
    return np.random.default_rng([seed, salt])


def _circle_flow() -> SuspensionFlow:
    return SuspensionFlow(CircleRotation(GOLDEN), RoofFunction(3.0))


def _generic_field(F: SuspensionFlow) -> GeneratorField:
    return GeneratorField.kinetic(F, Expression(0.3, 0.1, 0.0, 0.1), Expression(2.0, 0.5, 0.2, 0.3))


def _rand_mat(rng) -> Mat2:
    return Mat2(*rng.normal(size=4))


@check("mat2.det_multiplicative")
def _(seed):
    rng = _rng(seed, "det")
    worst = 0.0
    for _ in range(200):
        A, B = _rand_mat(rng), _rand_mat(rng)
        d = (A @ B).det() - A.det() * B.det()
        worst = max(worst, abs(d) / max(1.0, abs(A.det() * B.det())))
    return worst


@check("mat2.rotation_group_law")
def _(seed):
    rng = _rng(seed, "rot")
    worst = 0.0
    for _ in range(200):
        th, s, t = rng.uniform(0.1, TWO_PI), rng.uniform(0, 5), rng.uniform(0, 5)
        D = rotation_flow(th, s + t) - rotation_flow(th, s) @ rotation_flow(th, t)
        worst = max(worst, D.max_abs() / max(1.0, th))
    return worst


@check("mat2.stretch_eigenvector")
def _(seed):
    w = stretch_flow(1.0) @ DIAGONAL
    return (w - DIAGONAL * math.e).norm()


@check("mat2.alignment_residual")
def _(seed):
    rng = _rng(seed, "align")
    worst = 0.0
    for _ in range(50):
        u = Vec2.from_angle(rng.uniform(0, TWO_PI))
        th = solve_alignment_theta(u, DIAGONAL)
        w = (rotation_flow(th, 1.0) @ u).normalized()
        worst = max(worst, abs(w.cross(DIAGONAL)))
    return worst


@check("baseflow.circle_invertibility")
def _(seed):
    T = CircleRotation(GOLDEN)
    rng = _rng(seed, "circ")
    worst = 0.0
    for x in rng.random(50):
        w = (float(x),)
        for _ in range(100):
            w = T.forward(w)
        for _ in range(100):
            w = T.inverse(w)
        d = abs(w[0] - x)
        worst = max(worst, min(d, 1.0 - d))
    return worst


@check("baseflow.torus_invertibility")
def _(seed):
    T = TorusCatMap()
    pts = T.sample(_rng(seed, "torus"), 20)
    worst = 0.0
    for p in pts:
        w = tuple(float(x) for x in p)
        z = w
        for _ in range(500):
            z = T.forward(z)
        for _ in range(500):
            z = T.inverse(z)
        worst = max(worst, abs(z[0] - w[0]), abs(z[1] - w[1]))
    return worst


@check("baseflow.flow_group_law")
def _(seed):
    F = _circle_flow()
    rng = _rng(seed, "group")
    worst = 0.0
    for P in sample_mu(F, 100, rng):
        s, t = rng.uniform(0, 20, 2)
        a = flow(F, flow(F, P, s), t)
        b = flow(F, P, s + t)
        d = abs(a.base[0] - b.base[0])
        worst = max(worst, min(d, 1.0 - d), abs(a.height - b.height))
    return worst


@check("baseflow.flowbox_measure")
def _(seed):
    F = _circle_flow()
    box = FlowboxSpec(Arc(0.0, 0.2), 0.5, 2.0)
    bases, heights = sample_mu_arrays(F, 200_000, _rng(seed, "fbm"))
    inside = box.region.contains_many(bases) & (heights >= box.a) & (heights < box.b)
    return abs(inside.mean() - measure_of_flowbox(F, box))


@check("baseflow.birkhoff_visit_rate")
def _(seed):
    F = _circle_flow()
    box = FlowboxSpec(Arc(0.0, 0.2), 1.0, 2.0)
    (P,) = sample_mu(F, 1, _rng(seed, "birk"))
    T = 2e4
    events = itinerary(F, P, T, [box])
    full = sum(1 for e in events if e.exit - e.entry > 1.0 - 1e-9)
    return abs(full / T - measure_of_flowbox(F, box))


@check("cocycle.closed_form_agreement")
def _(seed):
    F = _circle_flow()
    P = F.point(0.1, 0.0)
    worst = 0.0
    for val, exact in ((Rotation(TWO_PI), lambda t: rotation_flow(TWO_PI, t)),
                       (Rotation(1.0), lambda t: rotation_flow(1.0, t)),
                       (Stretch(), stretch_flow)):
        g = GeneratorField.constant(F, val)
        for t in (0.5, 2.0, 5.0):
            worst = max(worst, (propagate(g, P, t).full() - exact(t)).max_abs())
    for th in (1.0, math.pi):
        g = GeneratorField.kinetic(F, 0.0, th * th)
        worst = max(worst, (propagate(g, P, 5.0).full() - rotation_flow(th, 5.0)).max_abs())
    return worst


@check("cocycle.cocycle_law")
def _(seed):
    F = _circle_flow()
    gen = _generic_field(F)
    rng = _rng(seed, "coc")
    worst = 0.0
    for P in sample_mu(F, 30, rng):
        s, t = rng.uniform(0, 5, 2)
        worst = max(worst, check_cocycle_property(gen, P, s, t))
    return worst


@check("cocycle.liouville")
def _(seed):
    F = _circle_flow()
    gen = _generic_field(F)
    rng = _rng(seed, "liou")
    worst = 0.0
    for P in sample_mu(F, 30, rng):
        t = rng.uniform(0, 20)
        res = propagate(gen, P, t)
        worst = max(worst, abs(res.log_abs_det() - liouville_logdet(gen, P, t)))
    return worst


@check("cocycle.step_halving")
def _(seed):
    # error ratio err(h/2) / err(h); order 4 predicts 1/16
    F = _circle_flow()
    g = GeneratorField.kinetic(F, 0.0, TWO_PI ** 2)
    P = F.point(0.1, 0.0)
    exact = rotation_flow(TWO_PI, 5.0)
    e1 = (propagate(g, P, 5.0, 1e-3).full() - exact).max_abs()
    e2 = (propagate(g, P, 5.0, 5e-4).full() - exact).max_abs()
    return e2 / e1


@check("cocycle.sum_rule")
def _(seed):
    F = _circle_flow()
    rep = lyapunov_spectrum(_generic_field(F), 200.0, 2, seed=seed)
    return max(0.0, abs(rep.lambda1_frames + rep.lambda2_frames - rep.sum_via_trace) - 2 * rep.stderr_sum)


@check("cocycle.constant_spectrum")
def _(seed):
    F = _circle_flow()
    rep = lyapunov_spectrum(GeneratorField.constant(F, Stretch()), 1e4, 2, seed=seed)
    return max(abs(rep.lambda1 - 1.0), abs(rep.lambda2 + 1.0))


def _lp_pairs(F, rng, n):
    out = []
    for _ in range(n):
        out.append(GeneratorField.kinetic(F, Expression(*rng.normal(size=3)), Expression(*rng.normal(size=3))))
    return out


@check("lpmetric.symmetry")
def _(seed):
    F = _circle_flow()
    A, B = _lp_pairs(F, _rng(seed, "sym"), 2)
    cfg = LpConfig(1.5, 5000, seed)
    return abs(sigma_hat_p(A, B, cfg).value - sigma_hat_p(B, A, cfg).value)


@check("lpmetric.triangle")
def _(seed):
    F = _circle_flow()
    rng = _rng(seed, "tri")
    bases, heights = sample_mu_arrays(F, 5000, rng)
    worst = 0.0
    for _ in range(20):
        A, B, C = _lp_pairs(F, rng, 3)
        ab = sigma_hat_from_samples(A, B, bases, heights, 2.0).value
        bc = sigma_hat_from_samples(B, C, bases, heights, 2.0).value
        ac = sigma_hat_from_samples(A, C, bases, heights, 2.0).value
        worst = max(worst, ac - ab - bc - 1e-12)
    return max(worst, 0.0)


@check("lpmetric.monotone_in_p")
def _(seed):
    F = _circle_flow()
    rng = _rng(seed, "mono")
    bases, heights = sample_mu_arrays(F, 5000, rng)
    worst = 0.0
    for _ in range(20):
        A, B = _lp_pairs(F, rng, 2)
        vals = [sigma_hat_from_samples(A, B, bases, heights, p).value for p in (1.0, 1.5, 2.0, 3.0)]
        worst = max(worst, max(a - b for a, b in zip(vals, vals[1:])) - 1e-12)
    return max(worst, 0.0)


@check("lpmetric.support_budget_closed_form")
def _(seed):
    a = abs(support_budget(None, 1.0, 0.1, TWO_PI ** 2) - 0.1 / TWO_PI ** 2)
    b = abs(support_budget(None, 2.0, 0.2, 2.0) - 0.01)
    return max(a, b)


@check("lpmetric.shrinking_support")
def _(seed):
    # halving the support must at least halve the distance
    F = _circle_flow()
    A = GeneratorField.kinetic(F, 0.0, 1.0)
    big = A.with_overrides((FlowboxSpec(Arc(0.0, 0.2), 0.0, 1.0), Stretch()))
    small = A.with_overrides((FlowboxSpec(Arc(0.0, 0.1), 0.0, 1.0), Stretch()))
    cfg = LpConfig(1.0, 1000, seed)
    ratio = sigma_hat_p(A, small, cfg).value / sigma_hat_p(A, big, cfg).value
    return max(0.0, ratio - 0.5)


def _small_pipeline(seed):
    F = _circle_flow()
    A = GeneratorField.constant(F, Rotation(TWO_PI))
    plan = PerturbationPlan.create(F, 0.2)
    A0 = build_A0(A, plan, enforce_budget=False)
    B0 = build_B0(A0, plan, enforce_budget=False)
    B = build_B(B0, plan, enforce_budget=False)
    return F, plan, A, A0, B0, B


def _generic_pipeline(seed):
    F = _circle_flow()
    A = GeneratorField.schrodinger(F, Expression(0.0, 0.5), 4.0)
    plan = PerturbationPlan.create(F, 0.05)
    A0 = build_A0(A, plan, enforce_budget=False)
    B0 = build_B0(A0, plan, enforce_budget=False)
    B = build_B(B0, plan, enforce_budget=False)
    return F, plan, A, A0, B0, B


@check("perturb.stage_layout")
def _(seed):
    F, plan, A, A0, B0, B = _generic_pipeline(seed)
    rng = _rng(seed, "layout")
    bad = 0
    R2pi = Rotation(TWO_PI).constant_matrix
    for P in sample_mu(F, 300, rng):
        inR = plan.V_R.contains(P.base, P.height)
        inS = plan.V_S.contains(P.base, P.height)
        a = A.value_at(P.base, P.height).matrix(P.base, P.height)
        exp_A0 = R2pi if (inR or inS) else a
        exp_B = Stretch().constant_matrix if inS else None
        vals = [f.value_at(P.base, P.height).matrix(P.base, P.height) for f in (A0, B0, B)]
        bad += vals[0] != exp_A0
        if not inR:
            bad += vals[1] != exp_A0
        else:
            bad += not (vals[1].a11 == 0 and vals[1].a12 == 1 and vals[1].a22 == 0 and vals[1].a21 < 0)
        if inS:
            bad += vals[2] != exp_B
        else:
            bad += vals[2] != vals[1]
    return float(bad)


@check("perturb.determinant_chain")
def _(seed):
    F, plan, A, A0, B0, B = _generic_pipeline(seed)
    rng = _rng(seed, "detc")
    pts = sample_mu(F, 10, rng)
    return determinant_chain((A0, B0, B), pts, rng.uniform(0, 10, len(pts)))


@check("perturb.g_invariance")
def _(seed):
    F, plan, A, A0, B0, B = _generic_pipeline(seed)
    rng = _rng(seed, "ginv")
    worst = 0.0
    for P in sample_mu(F, 20, rng):
        if plan.V_R.contains(P.base, P.height) and P.height > 0:
            continue
        # flow to the next point outside the interior of V_R
        t = rng.uniform(0.0, 5.0)
        Q = flow(F, P, t)
        if plan.V_R.contains(Q.base, Q.height) and Q.height > 0:
            continue
        g0 = g_field(B0, plan, P)
        g1 = g_field(B0, plan, Q)
        w = (propagate(B0, P, t).full() @ g0).normalized()
        worst = max(worst, abs(w.cross(g1)))
    return worst


@check("perturb.alignment")
def _(seed):
    F, plan, A, A0, B0, B = _generic_pipeline(seed)
    rule = B0.overrides[B0.override_index(plan.V_R)][1].rule
    rng = _rng(seed, "alg")
    worst = 0.0
    for x in rng.uniform(0.0, plan.r, 30):
        worst = max(worst, rule.residual((float(x),)))
    return worst


@check("perturb.stretch_increment")
def _(seed):
    F, plan, A, A0, B0, B = _small_pipeline(seed)
    (P,) = sample_mu(F, 1, _rng(seed, "inc"))
    _, P0 = first_face_point(plan, P)
    tr = scalar_cocycle_track(B, plan, P0, 3000.0)
    return max(abs(x - 1.0) for x in tr.increments)


@check("perturb.splitting_identity")
def _(seed):
    F, plan, A, A0, B0, B = _small_pipeline(seed)
    v = verify_splitting(B, B0, plan, 2e4, seed)
    return abs(v.difference - plan.mu_VS)


@check("perturb.budget_chain")
def _(seed):
    from .perturb import run_pipeline

    F = _circle_flow()
    A = GeneratorField.constant(F, Rotation(TWO_PI))
    _, rep = run_pipeline(A, 1.0, 0.1, seed, T=2e3, n_samples=1, n_det_points=2, pretest=False)
    bad = sum(d.bound >= 0.1 / 3 for d in rep.distances) + (rep.sigma_total >= 0.1)
    return float(bad)


@check("cli.config_roundtrip")
def _(seed):
    bad = 0
    for c in (
        ExperimentConfig(),
        ExperimentConfig(generator="traceless", beta=(-1.0, 0.25, 0.0, 0.1)),
        ExperimentConfig(generator="schrodinger", potential=(0.0, 0.5, 0.0, 0.0), energy=4.0, r=0.01),
        ExperimentConfig(base="cat_map", roof="cosine", roof_amplitude=0.4, alpha=(0.1, 0.0, 0.0, 0.0)),
    ):
        bad += parse_config(serialize_config(c)) != c
    return float(bad)


def run_checks(seed: int = 0, names=None) -> list[CheckResult]:
    results = []
    for name, fn in CHECKS.items():
        if names is not None and name not in names:
            continue
        results.append(CheckResult(name, float(fn(seed)), TOLERANCES[name]))
    return results


def format_table(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'invariant':<{width}}  {'defect':>12}  {'tolerance':>10}  status"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {r.defect:12.3e}  {r.tolerance:10.1e}  {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
