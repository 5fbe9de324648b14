import logging
import math

import numpy as np
import pytest

from nepv import FixedShift, SolverConfig, invit_step, residual, solve
from nepv.core import random_unit_vector
from nepv.flow import (
    curvature_term,
    flow_at_times,
    flow_rhs,
    heuristic_steplength,
    reference_trajectory,
    rosenbrock_euler_projected_step,
    shift_from_steplength,
    steplength_from_shift,
)
from nepv.problems import DenseProblem, build_linear

SQ2 = np.sqrt(2.0)
V110 = np.array([1.0, 1.0, 0.0]) / SQ2


def _fd_jacobian(problem, y, t=1e-6):
    n = y.size
    out = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = t
        out[:, j] = (flow_rhs(problem, y + e) - flow_rhs(problem, y - e)) / (2 * t)
    return out


def test_rhs_vanishes_at_eigenvector(sine1_star, sine1):
    _, v = sine1_star
    assert np.linalg.norm(flow_rhs(sine1, v)) <= 1e-10


def test_rhs_closed_form(lin3):
    np.testing.assert_allclose(flow_rhs(lin3, V110), np.array([0.5, -0.5, 0.0]) / SQ2, atol=1e-15)


def test_rhs_equals_residual_and_is_tangent(sine1, rng):
    for _ in range(100):
        y = random_unit_vector(4, rng)
        f = flow_rhs(sine1, y)
        np.testing.assert_array_equal(f, residual(sine1, y))
        assert abs(f @ y) <= 1e-12


def test_shift_steplength_arithmetic():
    assert steplength_from_shift(2.0, -8.0) == pytest.approx(0.1, abs=1e-16)
    assert shift_from_steplength(2.0, 0.1) == pytest.approx(-8.0, abs=1e-14)
    hs = [steplength_from_shift(2.0, s) for s in (-10.0, -100.0, -1000.0)]
    assert hs[0] > hs[1] > hs[2] > 0
    for h in (1e-3, 0.37, 25.0):
        assert steplength_from_shift(2.0, shift_from_steplength(2.0, h)) == pytest.approx(h, rel=1e-15)


def test_shift_steplength_domain():
    with pytest.raises(ValueError):
        steplength_from_shift(1.0, 1.0)
    with pytest.raises(ValueError):
        steplength_from_shift(1.0, 2.0)
    with pytest.raises(ValueError):
        shift_from_steplength(1.0, 0.0)


def test_step_equals_inverse_iteration(sine1, rng):
    for _ in range(20):
        y = random_unit_vector(4, rng)
        p = float(y @ sine1.apply_A(y, y))
        sigma = p - rng.uniform(0.5, 30.0)
        a = rosenbrock_euler_projected_step(sine1, y, 1.0 / (p - sigma))
        b = invit_step(sine1, y, sigma)
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_step_fixes_eigenvector(sine1_star, sine1):
    _, v = sine1_star
    for h in (1e-3, 0.1, 10.0):
        w = rosenbrock_euler_projected_step(sine1, v, h)
        assert min(np.linalg.norm(w - v), np.linalg.norm(w + v)) <= 1e-12


def test_step_against_explicit_euler_is_second_order(sine1, rng):
    y = random_unit_vector(4, rng)
    f = flow_rhs(sine1, y)
    errs = []
    for h in (1e-3, 1e-4):
        ee = y + h * f
        errs.append(np.linalg.norm(rosenbrock_euler_projected_step(sine1, y, h) - ee / np.linalg.norm(ee)))
    order = math.log10(errs[0] / errs[1])
    assert abs(order - 2) < 0.1


def test_local_error_order_against_reference(sine1, rng):
    y = random_unit_vector(4, rng)
    errs = []
    hs = (1e-2, 1e-3)
    for h in hs:
        ref = flow_at_times(sine1, y, [h], max_dt=h / 50)[-1].y
        errs.append(np.linalg.norm(rosenbrock_euler_projected_step(sine1, y, h) - ref))
    slope = math.log(errs[0] / errs[1]) / math.log(hs[0] / hs[1])
    assert abs(slope - 2) <= 0.2


def test_exact_local_error_prefactor(sine1, rng):
    # unprojected Rosenbrock-Euler: y(h) - y1 = h^2 q + O(h^3) with the exact q
    y = random_unit_vector(4, rng)
    f = flow_rhs(sine1, y)
    F = _fd_jacobian(sine1, y)
    I = np.eye(4)
    gaps = []
    for h in (2e-3, 1e-3):
        y1 = y + h * np.linalg.solve(I - h * F, f)
        yh = flow_at_times(sine1, y, [h], max_dt=h / 50)[-1].y
        q = -0.5 * np.linalg.solve(I - h * F, (I + h * F) @ (F @ f))
        gaps.append(np.linalg.norm(yh - y1 - h**2 * q) / h**2)
    # the remainder is O(h): halving h halves it
    assert gaps[1] == pytest.approx(gaps[0] / 2, rel=0.05)
    assert gaps[1] < 0.01 * np.linalg.norm(F @ f)
    # and the step-length model uses ||q|| ~ ||f'f|| / 2
    q0 = -0.5 * F @ f
    assert np.linalg.norm(q0) == pytest.approx(0.5 * np.linalg.norm(curvature_term(sine1, y)), rel=1e-6)


def test_curvature_zero_at_eigenvector(sine1_star, sine1):
    _, v = sine1_star
    assert np.linalg.norm(curvature_term(sine1, v)) <= 1e-9


def test_curvature_hand_computed(lin3):
    np.testing.assert_allclose(curvature_term(lin3, V110), -0.25 * V110, atol=1e-15)


def test_curvature_matches_fd(sine1, rng):
    for _ in range(5):
        v = random_unit_vector(4, rng)
        f = flow_rhs(sine1, v)
        t = 1e-6
        fd = (flow_rhs(sine1, v + t * f) - flow_rhs(sine1, v - t * f)) / (2 * t)
        e = curvature_term(sine1, v)
        assert np.linalg.norm(fd - e) <= 1e-5 * np.linalg.norm(e)


def test_heuristic_arithmetic():
    # diag(2, 4, 6) at (1,1,0)/sqrt2 has ||f'f|| = 1
    p = build_linear(diagonal=[2.0, 4.0, 6.0])
    plan = heuristic_steplength(p, V110, eps=2.0, h_max=10.0)
    assert plan.error_estimate_norm == pytest.approx(1.0, rel=1e-15)
    assert plan.h == pytest.approx(2.0, rel=1e-15)
    assert not plan.clipped
    assert plan.sigma == pytest.approx(3.0 - 1.0 / plan.h, abs=1e-14)
    clipped = heuristic_steplength(p, V110, eps=2.0, h_max=1.5)
    assert clipped.h == 1.5 and clipped.clipped


def test_heuristic_at_stationary_point(lin3):
    plan = heuristic_steplength(lin3, np.array([0.0, 1.0, 0.0]), eps=2.0, h_max=1e4)
    assert plan.error_estimate_norm == 0.0
    assert plan.h == 1e4 and plan.clipped
    assert plan.sigma == 2.0 - 1e-4


def test_heuristic_rejects_bad_parameters(lin3):
    with pytest.raises(ValueError):
        heuristic_steplength(lin3, V110, eps=0.0, h_max=1.0)
    with pytest.raises(ValueError):
        heuristic_steplength(lin3, V110, eps=1.0, h_max=-1.0)


def test_reference_linear_reaches_dominant(rng):
    A = rng.standard_normal((5, 5))
    p = build_linear(matrix=A + A.T)
    states = reference_trajectory(p, rng.standard_normal(5), t_end=50.0, dt=1e-2)
    assert states[-1].t == pytest.approx(50.0)
    y = states[-1].y
    assert np.linalg.norm(residual(p, y)) <= 1e-8
    assert y @ p.matrix @ y == pytest.approx(np.linalg.eigvalsh(p.matrix)[0], abs=1e-9)
    assert max(abs(np.linalg.norm(s.y) - 1) for s in states) <= 1e-10


def test_reference_sine_reaches_eigenvector(sine1, sine1_star):
    lam, _ = sine1_star
    states = reference_trajectory(sine1, np.random.default_rng(11).standard_normal(4), t_end=30.0, dt=1e-3)
    y = states[-1].y
    assert np.linalg.norm(residual(sine1, y)) <= 1e-8
    assert y @ sine1.apply_A(y, y) == pytest.approx(lam, abs=1e-8)


def test_reference_arguments(lin3):
    with pytest.raises(ValueError):
        reference_trajectory(lin3, np.ones(3), 1.0, 0.0)
    with pytest.raises(ValueError):
        flow_at_times(lin3, np.ones(3), [1.0, 0.5], 0.1)


def test_reference_nan_aborts():
    class _Blowup(DenseProblem):
        def __init__(self):
            super().__init__(2, lambda v: np.diag([np.nan, 1.0]), lambda v: np.diag([np.nan, 1.0]))

    with pytest.raises(FloatingPointError, match="t="):
        reference_trajectory(_Blowup(), np.ones(2), 1.0, 0.1)


def test_reference_warns_on_drift(lin3, caplog):
    big = build_linear(diagonal=[1.0, 50.0, 100.0])
    with caplog.at_level(logging.WARNING, logger="nepv.flow"):
        reference_trajectory(big, np.ones(3), 0.5, 0.05)
    assert "drift" in caplog.text


def test_stationary_solver_output_has_small_rhs(sine05):
    rep = solve(sine05, SolverConfig(shift=FixedShift(-20.0), residual_tol=1e-10))
    assert np.linalg.norm(flow_rhs(sine05, rep.eigenpair.vector)) <= 1e-10
