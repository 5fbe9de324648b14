"""Inverse iteration for ``A(v) v = lam v``.

One step of the J-version is ``v <- (J(v) - sigma I)^{-1} v`` followed by
normalization; the A-version uses ``A(v)`` in place of ``J(v)``.  For
``sigma > lam`` the iterates alternate in sign, so every distance between
iterates is measured with :func:`sign_aligned_distance`.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .core import Eigenpair, SolveFailed, normalize, random_unit_vector
from .flow import heuristic_steplength

__all__ = [
    "Version",
    "Status",
    "FixedShift",
    "HeuristicShift",
    "SolverConfig",
    "IterationRecord",
    "ConvergenceReport",
    "invit_step",
    "sign_aligned_distance",
    "solve",
]

log = logging.getLogger(__name__)


class Version(str, enum.Enum):
    J = "J"
    A = "A"


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITER = "MaxIterReached"
    SOLVE_FAILED = "SolveFailed"


@dataclass(frozen=True)
class FixedShift:
    sigma: float


@dataclass(frozen=True)
class HeuristicShift:
    """Shift ``p(v) - 1/h`` with ``h`` from the local-error heuristic."""

    eps: float = 2.0
    h_max: float = 1e4

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("heuristic eps must be positive")
        if not self.h_max > 0:
            raise ValueError("heuristic h_max must be positive")


@dataclass(frozen=True)
class SolverConfig:
    version: Version = Version.J
    shift: Union[FixedShift, HeuristicShift] = field(default_factory=HeuristicShift)
    residual_tol: float = 1e-10
    max_iter: int = 1000
    record_trace: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "version", Version(self.version))
        if not self.residual_tol > 0:
            raise ValueError("residual_tol must be positive")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be >= 1")
        if not isinstance(self.shift, (FixedShift, HeuristicShift)):
            raise TypeError("shift must be FixedShift or HeuristicShift")


@dataclass(frozen=True)
class IterationRecord:
    """State at iterate ``k`` and the shift used to leave it.

    ``h`` is ``1/(p - sigma)`` and is NaN when ``sigma >= p`` (fixed shifts
    above the Rayleigh quotient have no step-length interpretation).
    ``step_alignment`` is the sign-aligned distance to iterate ``k - 1``
    (NaN for ``k = 0``).
    """

    k: int
    sigma: float
    h: float
    rayleigh: float
    residual_norm: float
    step_alignment: float


@dataclass
class ConvergenceReport:
    status: Status
    eigenpair: Optional[Eigenpair]
    trace: list = field(default_factory=list)
    iterations: int = 0
    iterates: list = field(default_factory=list, repr=False)
    last_vector: Optional[np.ndarray] = field(default=None, repr=False)
    error: Optional[SolveFailed] = None

    @property
    def converged(self):
        return self.status is Status.CONVERGED


def sign_aligned_distance(u, w):
    """``min(||u - w||, ||u + w||)``: distance between lines, up to sign."""
    u = np.asarray(u)
    w = np.asarray(w)
    return float(min(np.linalg.norm(u - w), np.linalg.norm(u + w)))


def invit_step(problem, v, sigma, version=Version.J):
    """One normalized inverse-iteration step with shift ``sigma``."""
    version = Version(version)
    if version is Version.J:
        w = problem.solve_shifted(v, sigma, v)
    else:
        w = problem.solve_shifted_A(v, sigma, v)
    nrm = np.linalg.norm(w)
    if not np.isfinite(nrm) or nrm == 0.0:
        raise SolveFailed("shifted solve returned a zero or non-finite vector", sigma=sigma)
    return w / nrm


def _fixed_h(p, sigma):
    return 1.0 / (p - sigma) if p > sigma else math.nan


def solve(problem, config, v0=None):
    """Run inverse iteration until the residual drops below tolerance.

    Parameters
    ----------
    problem : NepvProblem
    config : SolverConfig
    v0 : array_like, optional
        Starting vector; defaults to a normal draw seeded by ``config.seed``.

    Returns
    -------
    ConvergenceReport
        A failed solve does not raise: the report carries status
        ``SolveFailed``, the trace up to the failure and the exception.
    """
    if v0 is None:
        v = random_unit_vector(problem.dim, np.random.default_rng(config.seed))
    else:
        v = normalize(problem.check_dim(v0))
    shift = config.shift
    report = ConvergenceReport(status=Status.MAX_ITER, eigenpair=None)
    prev = None

    for k in range(config.max_iter + 1):
        if not np.all(np.isfinite(v)):
            report.status = Status.SOLVE_FAILED
            report.error = SolveFailed("non-finite iterate", step=k)
            break
        Av = problem.apply_A(v, v)
        p = float(v @ Av) / float(v @ v)
        rnorm = float(np.linalg.norm(p * v - Av))

        if isinstance(shift, FixedShift):
            sigma, h = float(shift.sigma), _fixed_h(p, shift.sigma)
        else:
            plan = heuristic_steplength(problem, v, shift.eps, shift.h_max)
            sigma, h = plan.sigma, plan.h

        if config.record_trace:
            align = math.nan if prev is None else sign_aligned_distance(v, prev)
            report.trace.append(IterationRecord(k, sigma, h, p, rnorm, align))
            report.iterates.append(v)
        report.iterations = k
        report.last_vector = v

        if rnorm <= config.residual_tol:
            report.status = Status.CONVERGED
            report.eigenpair = Eigenpair(lam=p, vector=v, residual_norm=rnorm)
            break
        if k == config.max_iter:
            break

        try:
            v_next = invit_step(problem, v, sigma, config.version)
        except SolveFailed as exc:
            if isinstance(shift, FixedShift):
                exc.step = k
                report.status = Status.SOLVE_FAILED
                report.error = exc
                break
            # halve the step once and retry
            h = h / 2
            sigma = p - 1.0 / h
            log.debug("solve failed at step %d, retrying with h=%g", k, h)
            try:
                v_next = invit_step(problem, v, sigma, config.version)
            except SolveFailed as exc2:
                exc2.step = k
                report.status = Status.SOLVE_FAILED
                report.error = exc2
                break
            if config.record_trace:
                old = report.trace[-1]
                report.trace[-1] = IterationRecord(k, sigma, h, old.rayleigh, old.residual_norm, old.step_alignment)
        prev = v
        v = v_next

    return report
