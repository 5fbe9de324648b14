"""Normalized gradient flow ``y' = p(y) y - A(y) y`` and its discretizations.

The projected Rosenbrock-Euler step with step length ``h`` is exactly one
J-version inverse-iteration step with shift ``sigma = p(y) - 1/h``.  The
adaptive step heuristic picks ``h`` from a local error model of that step:
``h = sqrt(2 eps / ||f'(v) f(v)||)`` capped at ``h_max``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .core import SolveFailed

__all__ = [
    "FlowState",
    "StepPlan",
    "flow_rhs",
    "rosenbrock_euler_projected_step",
    "shift_from_steplength",
    "steplength_from_shift",
    "curvature_term",
    "heuristic_steplength",
    "reference_trajectory",
    "flow_at_times",
]

log = logging.getLogger(__name__)

DRIFT_TOL = 1e-10


@dataclass(frozen=True)
class FlowState:
    t: float
    y: np.ndarray


@dataclass(frozen=True)
class StepPlan:
    h: float
    sigma: float
    error_estimate_norm: float
    clipped: bool


def _rq_and_Ay(problem, y):
    Ay = problem.apply_A(y, y)
    return float(y @ Ay) / float(y @ y), Ay


def flow_rhs(problem, y):
    """Right-hand side ``p(y) y - A(y) y``.

    The Rayleigh quotient uses ``y'y`` in the denominator, so the function
    is also defined off the unit sphere (needed for finite differences).
    """
    y = np.asarray(y, dtype=float)
    p, Ay = _rq_and_Ay(problem, y)
    return p * y - Ay


def shift_from_steplength(p, h):
    if not h > 0:
        raise ValueError(f"step length must be positive, got {h!r}")
    return p - 1.0 / h


def steplength_from_shift(p, sigma):
    if not sigma < p:
        raise ValueError(f"shift {sigma!r} must lie below the Rayleigh quotient {p!r}")
    return 1.0 / (p - sigma)


def rosenbrock_euler_projected_step(problem, y, h):
    """One linearly implicit Euler step of the flow, then renormalization.

    Solves ``((1/h - p(y)) I + J(y)) z = y / h`` through the problem's
    shifted solve with ``sigma = p(y) - 1/h`` and returns ``z / ||z||``.
    """
    y = np.asarray(y, dtype=float)
    p, _ = _rq_and_Ay(problem, y)
    sigma = shift_from_steplength(p, h)
    z = problem.solve_shifted(y, sigma, y / h)
    nrm = np.linalg.norm(z)
    if not np.isfinite(nrm) or nrm == 0.0:
        raise SolveFailed("Rosenbrock-Euler step produced a degenerate vector", sigma=sigma)
    return z / nrm


def curvature_term(problem, v):
    """``f'(v) f(v)`` for the flow right-hand side at a unit vector ``v``.

    Uses ``f'(v) = -(I - v v^T)(J(v) - p I) + v v^T (A(v) - p I)`` and only
    applies, never forming the projector or ``J``.
    """
    v = np.asarray(v, dtype=float)
    p, Av = _rq_and_Ay(problem, v)
    f = p * v - Av
    g = problem.apply_J(v, f)
    t = p * f - g
    tangential = t - (v @ t) * v
    # v^T (A - pI) f, with A symmetric so v^T A f = (A v)^T f
    radial = float(Av @ f) - p * float(v @ f)
    return tangential + radial * v


def heuristic_steplength(problem, v, eps, h_max):
    """Step length for a target local error ``eps``, capped at ``h_max``."""
    if not eps > 0 or not h_max > 0:
        raise ValueError("eps and h_max must be positive")
    p, _ = _rq_and_Ay(problem, np.asarray(v, dtype=float))
    e_norm = float(np.linalg.norm(curvature_term(problem, v)))
    if e_norm == 0.0:
        h, clipped = float(h_max), True
    else:
        h = math.sqrt(2.0 * eps / e_norm)
        clipped = h > h_max
        if clipped:
            h = float(h_max)
    return StepPlan(h=h, sigma=p - 1.0 / h, error_estimate_norm=e_norm, clipped=clipped)


def _rk4_step(problem, y, dt):
    k1 = flow_rhs(problem, y)
    k2 = flow_rhs(problem, y + 0.5 * dt * k1)
    k3 = flow_rhs(problem, y + 0.5 * dt * k2)
    k4 = flow_rhs(problem, y + dt * k3)
    z = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    nrm = np.linalg.norm(z)
    return z / nrm, abs(nrm - 1.0)


def _advance(problem, y, t, t_target, dt):
    drift = 0.0
    while t < t_target:
        step = min(dt, t_target - t)
        if step <= 1e-15 * max(1.0, abs(t_target)):
            break
        y, d = _rk4_step(problem, y, step)
        drift = max(drift, d)
        t += step
        if not np.all(np.isfinite(y)):
            raise FloatingPointError(f"non-finite flow state at t={t!r}")
    return y, drift


def reference_trajectory(problem, y0, t_end, dt):
    """Classical RK4 with renormalization, sampled at multiples of ``dt``."""
    if not dt > 0 or t_end < 0:
        raise ValueError("need dt > 0 and t_end >= 0")
    y = np.asarray(y0, dtype=float)
    y = y / np.linalg.norm(y)
    states = [FlowState(0.0, y)]
    nsteps = int(math.ceil(t_end / dt - 1e-12))
    worst = 0.0
    for i in range(1, nsteps + 1):
        y, d = _rk4_step(problem, y, dt)
        worst = max(worst, d)
        t = i * dt
        if not np.all(np.isfinite(y)):
            raise FloatingPointError(f"non-finite flow state at t={t!r}")
        states.append(FlowState(t, y))
    if worst > DRIFT_TOL:
        log.warning("RK4 norm drift %.2e per step exceeds %.0e; reduce dt", worst, DRIFT_TOL)
    return states


def flow_at_times(problem, y0, times, max_dt):
    """Flow states at the given increasing ``times`` (RK4, step <= ``max_dt``)."""
    y = np.asarray(y0, dtype=float)
    y = y / np.linalg.norm(y)
    t = 0.0
    out = []
    worst = 0.0
    for target in times:
        if target < t:
            raise ValueError("times must be non-decreasing and non-negative")
        y, d = _advance(problem, y, t, float(target), max_dt)
        worst = max(worst, d)
        t = float(target)
        out.append(FlowState(t, y))
    if worst > DRIFT_TOL:
        log.warning("RK4 norm drift %.2e per step exceeds %.0e; reduce max_dt", worst, DRIFT_TOL)
    return out
