import math
import pickle

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinetic_cocycles.baseflow import Arc, FlowboxSpec, SuspensionFlow, flow, sample_mu
from kinetic_cocycles.cocycle import (
    Constant,
    Expression,
    GeneratorField,
    Kinetic,
    Rotation,
    Stretch,
    check_cocycle_property,
    evaluate,
    integrability_proxy,
    iter_pieces,
    liouville_logdet,
    lyapunov_spectrum,
    propagate,
    spectrum_sum_via_trace,
    top_lyapunov,
)
from kinetic_cocycles.errors import ConfigurationError, PropagationError
from kinetic_cocycles.mat2 import STRETCH, TWO_PI, Mat2, Vec2, rotation_flow, rotation_generator, stretch_flow

BOX_R = FlowboxSpec(Arc(0, 0.2), 0, 1)
BOX_S = FlowboxSpec(Arc(0, 0.2), 1, 2)


def generic(F):
    return GeneratorField.kinetic(F, Expression(0.3, 0.1, 0.05, 0.1), Expression(2.0, 0.5, 0.2, 0.3))


def test_expression_eval():
    e = Expression(1.0, 2.0, 3.0, 4.0, period=3.0)
    assert e((0.0,), 0.0) == pytest.approx(1 + 2 + 4)
    assert e((0.25,), 1.5) == pytest.approx(1 + 3 - 4)
    b = np.array([[0.0], [0.25]])
    assert np.allclose(e.many(b, np.array([0.0, 1.5])), [7.0, 0.0])
    assert e.bound == 10.0 and not e.fiber_constant
    assert Expression().is_zero and Expression(1.0).is_constant


def test_evaluate_kinetic(circle):
    gen = GeneratorField.kinetic(circle, 0.5, 2.0)
    assert evaluate(gen, circle.point(0.7, 1.1)) == Mat2(0.0, 1.0, -2.0, -0.5)


def test_evaluate_overrides(circle):
    gen = GeneratorField.kinetic(circle, 0.5, 2.0).with_overrides((BOX_R, Rotation(TWO_PI)), (BOX_S, Stretch()))
    assert evaluate(gen, circle.point(0.1, 1.5)) == STRETCH
    assert evaluate(gen, circle.point(0.1, 0.5)) == Mat2(0.0, 1.0, -4 * math.pi ** 2, 0.0)
    assert evaluate(gen, circle.point(0.3, 0.5)) == Mat2(0.0, 1.0, -2.0, -0.5)


def test_overlapping_boxes_rejected(circle):
    gen = GeneratorField.kinetic(circle, 0.0, 1.0)
    with pytest.raises(ConfigurationError):
        gen.with_overrides((BOX_R, Stretch()), (FlowboxSpec(Arc(0.1, 0.3), 0.5, 1.5), Stretch()))


def test_box_above_roof_rejected(wavy):
    with pytest.raises(ConfigurationError):
        GeneratorField.kinetic(wavy, 0.0, 1.0).with_overrides((FlowboxSpec(Arc(0, 0.1), 0, 2.8), Stretch()))


def test_field_classes(circle):
    assert GeneratorField.kinetic(circle, 0.5, 1.0).field_class == "kinetic"
    assert GeneratorField.kinetic(circle, 0.0, 1.0).field_class == "traceless_kinetic"
    assert GeneratorField.schrodinger(circle, Expression(0, 1), 2.0).field_class == "traceless_kinetic"
    assert GeneratorField.constant(circle, Mat2(1, 0, 0, 2)).field_class == "general"
    g = GeneratorField.kinetic(circle, 0.0, 1.0).with_overrides((BOX_S, Stretch()))
    assert g.field_class == "traceless_kinetic"


def test_schrodinger_beta(circle):
    gen = GeneratorField.schrodinger(circle, Expression(0.0, 0.5), 3.0)
    P = circle.point(0.0, 0.0)
    assert evaluate(gen, P) == Mat2(0.0, 1.0, -2.5, 0.0)


def test_iter_pieces_partition(circle):
    gen = GeneratorField.kinetic(circle, 0.0, 1.0).with_overrides((BOX_R, Rotation(1.0)), (BOX_S, Stretch()))
    P = circle.point(0.9, 2.2)
    pieces = list(iter_pieces(gen, P, 40.0))
    assert pieces[0].t0 == 0.0
    total = sum(p.duration for p in pieces)
    assert total == pytest.approx(40.0, abs=1e-12)
    for a, b in zip(pieces, pieces[1:]):
        assert b.t0 == pytest.approx(a.t0 + a.duration, abs=1e-12)


def test_propagate_stretch_kinetic(circle):
    # S as a kinetic field: alpha = 0, beta = -1
    gen = GeneratorField.kinetic(circle, 0.0, -1.0)
    res = propagate(gen, circle.point(0.1, 0.5), 1.0)
    assert (res.full() - stretch_flow(1.0)).max_abs() <= 1e-9


def test_propagate_zero_generator(circle):
    gen = GeneratorField.constant(circle, Mat2.zero())
    for t in (0.0, 1.0, 17.3):
        assert propagate(gen, circle.point(0.4), t).full() == Mat2.identity()


def test_propagate_damped_constant(circle):
    gen = GeneratorField.kinetic(circle, 2.0, 0.0)
    M = propagate(gen, circle.point(0.2), 1.0).full()
    e2 = math.exp(-2)
    ref = Mat2(1.0, (1 - e2) / 2, 0.0, e2)
    assert (M - ref).max_abs() <= 1e-12


@pytest.mark.parametrize("theta", [1.0, math.pi, TWO_PI])
def test_closed_form_override(circle, theta):
    gen = GeneratorField.constant(circle, Rotation(theta))
    P = circle.point(0.3, 0.4)
    for t in np.linspace(0, 5, 11):
        assert (propagate(gen, P, float(t)).full() - rotation_flow(theta, float(t))).max_abs() <= 1e-9


def test_closed_form_override_stretch(circle):
    gen = GeneratorField.constant(circle, Stretch())
    for t in np.linspace(0, 5, 11):
        M = propagate(gen, circle.point(0.3, 0.4), float(t)).full()
        assert (M - stretch_flow(float(t))).max_abs() <= 1e-9 * math.cosh(t)


def test_rk4_step_halving(circle):
    gen = GeneratorField.kinetic(circle, 0.0, TWO_PI ** 2)
    P = circle.point(0.0)
    exact = rotation_flow(TWO_PI, 5.0)
    e1 = (propagate(gen, P, 5.0, 1e-3).full() - exact).max_abs()
    e2 = (propagate(gen, P, 5.0, 5e-4).full() - exact).max_abs()
    assert e1 / e2 >= 8.0


def test_rk4_height_dependent_order(circle):
    # the batched path for s-dependent generators is also fourth order
    gen = GeneratorField.kinetic(circle, Expression(0.0, 0.0, 0.0, 0.5), Expression(3.0, 0.0, 0.0, 1.0))
    P = circle.point(0.0)
    ref = propagate(gen, P, 2.5, 1.25e-4).full()
    e1 = (propagate(gen, P, 2.5, 2e-2).full() - ref).max_abs()
    e2 = (propagate(gen, P, 2.5, 1e-2).full() - ref).max_abs()
    assert e1 / e2 > 12


def test_propagate_validates(circle):
    gen = GeneratorField.kinetic(circle, 0.0, 1.0)
    with pytest.raises(ValueError):
        propagate(gen, circle.point(0), -1.0)
    with pytest.raises(ValueError):
        propagate(gen, circle.point(0), 1.0, 0.0)


def test_propagate_blowup(circle):
    # e^{1000 t} overflows inside a single piece; renormalization cannot help
    gen = GeneratorField.constant(circle, Mat2(1000.0, 0.0, 0.0, 0.0))
    with pytest.raises(PropagationError) as info:
        propagate(gen, circle.point(0.0), 5.0)
    assert info.value.time == 0.0


def test_long_stretch_stays_finite(circle):
    res = propagate(GeneratorField.constant(circle, Stretch()), circle.point(0.0), 2000.0)
    # ||e^{St}||_F = sqrt(2 cosh 2t), so its log is t up to e^{-4t}
    assert res.renorm_log + math.log(res.matrix.norm()) == pytest.approx(2000.0, rel=1e-12)


def test_renormalization_bookkeeping(circle):
    # eigenvalues 1 and 0.9: the norm passes 1e8 while the matrix stays well
    # conditioned, so its determinant is still resolvable in floating point
    gen = GeneratorField.kinetic(circle, -1.9, 0.9)
    P = circle.point(0.2)
    res = propagate(gen, P, 30.0)
    assert res.renorm_log > 0
    assert abs(res.log_abs_det() - res.log_det) <= 1e-8
    assert res.log_det == pytest.approx(57.0, abs=1e-10)


def test_cocycle_zero_split(circle):
    assert check_cocycle_property(generic(circle), circle.point(0.3, 1.0), 0.0, 2.0) <= 1e-12


def test_cocycle_rotation(circle):
    gen = GeneratorField.constant(circle, Rotation(2.2))
    assert check_cocycle_property(gen, circle.point(0.3, 1.0), 1.7, 3.1) <= 1e-9


def test_cocycle_generic(circle):
    assert check_cocycle_property(generic(circle), circle.point(0.3, 1.0), 1.0, 1.0, 1e-3) <= 1e-6


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 0.999), st.floats(0, 2.99), st.floats(0, 5), st.floats(0, 5))
def test_cocycle_property_random(x, s0, s, t):
    F = SuspensionFlow()
    gen = generic(F).with_overrides((BOX_S, Stretch()))
    assert check_cocycle_property(gen, F.point(x, s0), s, t) <= 1e-6


def test_liouville_examples(circle):
    P = circle.point(0.1, 0.3)
    assert liouville_logdet(GeneratorField.kinetic(circle, 0.0, 1.0), P, 7.0) == 0.0
    assert liouville_logdet(GeneratorField.kinetic(circle, 0.5, 1.0), P, 10.0) == pytest.approx(-5.0, abs=1e-12)


def test_liouville_with_override(circle):
    box = FlowboxSpec(Arc(0, 1.0), 0, 1)
    gen = GeneratorField.kinetic(circle, 0.5, 1.0).with_overrides((box, Rotation(1.0)))
    # starts at the bottom of a tower: crosses the box once over [0, 1]
    P = circle.point(0.5, 0.0)
    assert liouville_logdet(gen, P, 2.5) == pytest.approx(-0.5 * 1.5, abs=1e-12)


def test_liouville_quadrature(circle):
    # height-dependent friction integrates to a0 t + a3 * (H0 / 2 pi) sin(2 pi t / H0)
    gen = GeneratorField.kinetic(circle, Expression(0.5, 0, 0, 0.3), Expression(1.0))
    t = 2.0
    exact = -(0.5 * t + 0.3 * 3 / TWO_PI * math.sin(TWO_PI * t / 3))
    assert liouville_logdet(gen, circle.point(0.2, 0.0), t) == pytest.approx(exact, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 0.999), st.floats(0, 2.99), st.floats(0, 20))
def test_determinant_law(x, s0, t):
    F = SuspensionFlow()
    gen = generic(F).with_overrides((BOX_R, Rotation(1.0)))
    P = F.point(x, s0)
    assert abs(propagate(gen, P, t).log_abs_det() - liouville_logdet(gen, P, t)) <= 1e-6


def test_top_lyapunov_examples(circle):
    P = circle.point(0.1)
    T = 1000.0
    assert top_lyapunov(GeneratorField.constant(circle, Stretch()), P, Vec2(1, 1), 20.0) == pytest.approx(1.0, abs=1e-6)
    assert abs(top_lyapunov(GeneratorField.constant(circle, Rotation(2.0)), P, Vec2(0.3, 1), T)) <= 10 / T
    assert abs(top_lyapunov(GeneratorField.kinetic(circle, 2.0, 0.0), P, Vec2(0.3, 1), T)) <= 10 / T
    with pytest.raises(ValueError):
        top_lyapunov(GeneratorField.constant(circle, Stretch()), P, Vec2(0, 0), 1.0)


def test_spectrum_stretch(circle):
    rep = lyapunov_spectrum(GeneratorField.constant(circle, Stretch()), 1e4, 2, seed=1)
    assert rep.lambda1 == pytest.approx(1.0, abs=1e-3) and rep.lambda2 == pytest.approx(-1.0, abs=1e-3)


def test_spectrum_damped(circle):
    rep = lyapunov_spectrum(GeneratorField.kinetic(circle, 0.5, 0.0), 2e3, 2, seed=1)
    assert rep.lambda1 == pytest.approx(0.0, abs=1e-2) and rep.lambda2 == pytest.approx(-0.5, abs=1e-2)


def test_spectrum_elliptic(circle):
    rep = lyapunov_spectrum(GeneratorField.schrodinger(circle, Expression(), 1.0), 2e3, 2, seed=1)
    assert rep.lambda1 == pytest.approx(0.0, abs=1e-2) and rep.lambda2 == pytest.approx(0.0, abs=1e-2)


def test_spectrum_sum_rule_and_frames(circle):
    rep = lyapunov_spectrum(generic(circle), 300.0, 3, seed=2)
    assert rep.lambda1 >= rep.lambda2
    assert rep.lambda1 + rep.lambda2 == pytest.approx(rep.sum_via_trace, abs=1e-12)
    assert rep.lambda1_frames + rep.lambda2_frames == pytest.approx(rep.sum_via_trace, abs=1e-6)
    assert rep.lambda1_frames == rep.lambda1


def test_spectrum_deterministic(circle):
    a = lyapunov_spectrum(generic(circle), 100.0, 3, seed=5)
    b = lyapunov_spectrum(generic(circle), 100.0, 3, seed=5)
    assert a == b
    assert lyapunov_spectrum(generic(circle), 100.0, 3, seed=6) != a


def test_spectrum_workers_match(circle):
    a = lyapunov_spectrum(generic(circle), 50.0, 3, seed=5)
    b = lyapunov_spectrum(generic(circle), 50.0, 3, seed=5, workers=2)
    assert a == b


def test_spectrum_single_sample(circle):
    rep = lyapunov_spectrum(GeneratorField.constant(circle, Stretch()), 50.0, 1)
    assert rep.stderr == 0.0 and rep.n_samples == 1


def test_spectrum_checkpoints(circle):
    rep = lyapunov_spectrum(GeneratorField.kinetic(circle, 0.5, 0.0), 100.0, 2, checkpoints=[25, 50, 100])
    assert len(rep.finite_time) == 3
    ts = [row[0] for row in rep.finite_time]
    assert ts == sorted(ts) and ts[-1] == pytest.approx(100.0)
    assert all(row[3] == pytest.approx(-0.5) for row in rep.finite_time)


def test_sum_via_trace(circle):
    P = circle.point(0.3)
    assert spectrum_sum_via_trace(GeneratorField.kinetic(circle, 0.0, 2.0), P, 10.0) == 0.0
    assert spectrum_sum_via_trace(GeneratorField.kinetic(circle, 0.5, 2.0), P, 10.0) == pytest.approx(-0.5, abs=1e-8)


def test_integrability_proxy(circle):
    pts = sample_mu(circle, 200, 3)
    vals = integrability_proxy(generic(circle).with_overrides((BOX_S, Stretch())), pts)
    assert np.all(np.isfinite(vals)) and np.all(vals >= 0)
    # log+ ||e^{S t}|| <= t for t <= 1
    s_vals = integrability_proxy(GeneratorField.constant(circle, Stretch()), pts[:20])
    assert np.all(s_vals <= 1.0 + 1e-12)


def test_field_pickles(circle):
    gen = generic(circle).with_overrides((BOX_S, Stretch()))
    assert pickle.loads(pickle.dumps(gen)) == gen


def test_matrices_many_matches_evaluate(circle):
    gen = generic(circle).with_overrides((BOX_R, Rotation(1.5)), (BOX_S, Stretch()))
    pts = sample_mu(circle, 300, 9)
    bases = np.array([P.base for P in pts])
    heights = np.array([P.height for P in pts])
    M = gen.matrices_many(bases, heights)
    for k, P in enumerate(pts):
        assert np.allclose(M[k], evaluate(gen, P).to_array(), atol=1e-13)


def test_constant_general_generator(circle):
    A = Mat2(0.1, 0.2, -0.3, 0.05)
    gen = GeneratorField.constant(circle, A)
    w, V = np.linalg.eig(A.to_array() * 2.0)
    ref = (V @ np.diag(np.exp(w)) @ np.linalg.inv(V)).real
    assert np.allclose(propagate(gen, circle.point(0.5), 2.0).full().to_array(), ref, atol=1e-12)
    assert not gen.is_kinetic
