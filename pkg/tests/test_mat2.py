import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinetic_cocycles.errors import AlignmentError
from kinetic_cocycles.mat2 import (
    DIAGONAL,
    STRETCH,
    TWO_PI,
    Mat2,
    Vec2,
    clockwise_angle,
    kinetic,
    rotation_flow,
    rotation_generator,
    solve_alignment_theta,
    stretch_flow,
)

finite = st.floats(-10, 10, allow_nan=False)
mats = st.builds(Mat2, finite, finite, finite, finite)
thetas = st.floats(0.05, TWO_PI)
times = st.floats(-4, 4)


def expm(A: Mat2, t: float) -> np.ndarray:
    # independent oracle: eigendecomposition of a diagonalizable matrix
    w, V = np.linalg.eig(A.to_array() * t)
    return (V @ np.diag(np.exp(w)) @ np.linalg.inv(V)).real


def close(M: Mat2, ref, tol):
    return np.max(np.abs(M.to_array() - np.asarray(ref))) <= tol


def test_kinetic_form():
    assert kinetic(0.5, 2.0) == Mat2(0.0, 1.0, -2.0, -0.5)
    assert kinetic(0.5, 2.0).is_kinetic()


def test_rotation_generator_values():
    assert rotation_generator(TWO_PI) == Mat2(0.0, 1.0, -4 * math.pi ** 2, 0.0)
    assert rotation_generator(1.0) == Mat2(0.0, 1.0, -1.0, 0.0)


@pytest.mark.parametrize("theta", [0.0, -1.0])
def test_rotation_rejects_nonpositive(theta):
    with pytest.raises(ValueError):
        rotation_generator(theta)
    with pytest.raises(ValueError):
        rotation_flow(theta, 1.0)


def test_rotation_flow_values():
    assert close(rotation_flow(TWO_PI, 1.0), np.eye(2), 1e-14)
    assert close(rotation_flow(2.3, 0.0), np.eye(2), 0)
    assert close(rotation_flow(math.pi / 2, 1.0), [[0, 2 / math.pi], [-math.pi / 2, 0]], 1e-15)


@pytest.mark.parametrize("theta,t", [(1.0, 0.7), (math.pi, 2.5), (TWO_PI, 0.3)])
def test_rotation_flow_matches_exponential(theta, t):
    assert close(rotation_flow(theta, t), expm(rotation_generator(theta), t), 1e-12)


def test_stretch_flow_values():
    e = math.e
    w = stretch_flow(1.0) @ Vec2(1.0, 1.0)
    assert abs(w.x - e) < 1e-15 and abs(w.y - e) < 1e-15
    w = stretch_flow(1.0) @ Vec2(-1.0, 1.0)
    assert abs(w.x + 1 / e) < 1e-15 and abs(w.y - 1 / e) < 1e-15
    assert stretch_flow(0.0) == Mat2.identity()
    assert close(stretch_flow(0.8), expm(STRETCH, 0.8), 1e-12)


def test_stretch_overflow():
    with pytest.raises(OverflowError):
        stretch_flow(1e4)


@given(thetas, times)
def test_rotation_flow_unimodular(theta, t):
    assert abs(rotation_flow(theta, t).det() - 1.0) <= 1e-12


@given(thetas, times, times)
def test_rotation_flow_group_law(theta, s, t):
    D = rotation_flow(theta, s + t) - rotation_flow(theta, s) @ rotation_flow(theta, t)
    assert D.max_abs() <= 1e-12 * max(1.0, theta)


@given(thetas, times)
def test_rotation_flow_solves_ode(theta, t):
    h = 1e-6
    deriv = (rotation_flow(theta, t + h) - rotation_flow(theta, t - h)) * (0.5 / h)
    rhs = rotation_generator(theta) @ rotation_flow(theta, t)
    assert (deriv - rhs).max_abs() <= 1e-6 * max(1.0, theta ** 2)


@given(st.floats(-5, 5))
def test_stretch_inverse(t):
    assert (stretch_flow(t) @ stretch_flow(-t) - Mat2.identity()).max_abs() <= 1e-12 * math.cosh(t) ** 2


@given(mats, mats)
def test_det_multiplicative(A, B):
    assert abs((A @ B).det() - A.det() * B.det()) <= 1e-9 * (1 + abs(A.det() * B.det()) + A.norm() ** 2 * B.norm() ** 2)


@given(mats)
def test_opnorm_matches_numpy(A):
    assert abs(A.opnorm() - np.linalg.norm(A.to_array(), 2)) <= 1e-9 * (1 + A.norm())
    assert A.opnorm() <= A.norm() + 1e-12


@given(mats, st.integers(0, 12))
def test_power_matches_repeated_product(A, n):
    A = A * (1.0 / max(1.0, A.norm()))
    ref = np.linalg.matrix_power(A.to_array(), n)
    assert np.allclose(A.power(n).to_array(), ref, atol=1e-12)


def test_inverse():
    A = Mat2(2.0, 1.0, 1.0, 1.0)
    assert A @ A.inverse() == Mat2.identity()
    with pytest.raises(ZeroDivisionError):
        Mat2(1.0, 2.0, 2.0, 4.0).inverse()


def test_vec_normalize_zero():
    with pytest.raises(ValueError):
        Vec2(0.0, 0.0).normalized()


def test_clockwise_angle():
    assert clockwise_angle(Vec2(1, 0), Vec2(0, -1)) == pytest.approx(math.pi / 2)
    assert clockwise_angle(Vec2(1, 0), Vec2(0, 1)) == pytest.approx(3 * math.pi / 2)
    assert clockwise_angle(Vec2(1, 1), Vec2(1, 1)) == TWO_PI


def test_alignment_quarter_turn():
    # R_theta(1)(1, 0) = (cos theta, -theta sin theta) is vertical at 3 pi / 2
    assert solve_alignment_theta(Vec2(1, 0), Vec2(0, 1)) == pytest.approx(1.5 * math.pi, abs=1e-10)


def test_alignment_parallel_is_full_turn():
    assert solve_alignment_theta(DIAGONAL, DIAGONAL) == TWO_PI
    assert solve_alignment_theta(DIAGONAL, -DIAGONAL) == TWO_PI


def test_alignment_diagonal_to_horizontal():
    th = solve_alignment_theta(DIAGONAL, Vec2(1, 0))
    # root of cos(theta) = theta sin(theta) on (0, pi), found independently
    f = lambda x: math.cos(x) - x * math.sin(x)
    lo, hi = 0.1, 1.5
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if f(mid) > 0 else (lo, mid)
    assert th == pytest.approx(lo, abs=1e-9)
    assert th == pytest.approx(0.860334, abs=1e-6)


@settings(max_examples=200)
@given(st.floats(0, TWO_PI), st.floats(0, TWO_PI))
def test_alignment_residual(a, b):
    u, v = Vec2.from_angle(a), Vec2.from_angle(b)
    th = solve_alignment_theta(u, v)
    assert 0 < th <= TWO_PI
    w = rotation_flow(th, 1.0) @ u
    assert abs(w.cross(v)) / w.norm() <= 1e-9


def test_alignment_rejects_zero():
    with pytest.raises(ValueError):
        solve_alignment_theta(Vec2(0, 0), DIAGONAL)


def test_alignment_error_carries_residual():
    err = AlignmentError("x", 0.25)
    assert err.residual == 0.25 and "2.500e-01" in str(err)
