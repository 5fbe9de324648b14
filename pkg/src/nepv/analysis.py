"""Local convergence analysis at a computed eigenpair.

Near an eigenvector ``v*`` one step maps the error through

    phi'(v*) = |lam* - sigma| (I - v* v*^T) (J(v*) - sigma I)^{-1},

whose spectral radius is the convergence factor
``gamma = |lam* - sigma| / |mu2 - sigma|`` with ``mu2`` the eigenvalue of
``J(v*)`` closest to ``sigma`` other than ``lam*``.  The same spectrum
decides stability of ``v*`` as a stationary point of the gradient flow.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .core import SolveFailed, rayleigh_quotient, residual
from .iteration import FixedShift, SolverConfig, Version, invit_step, sign_aligned_distance, solve

__all__ = [
    "Stability",
    "StabilityReport",
    "NotAnEigenvector",
    "fixed_point_derivative",
    "convergence_factor",
    "stability_matrix",
    "empirical_convergence_factor",
    "tail_mean",
    "empirical_gamma",
    "reference_solution",
    "jacobian_derivative_defect",
    "collect_eigenpairs",
]

PRECONDITION_RESIDUAL = 1e-8
NOISE_FLOOR = 1e-14


class NotAnEigenvector(ValueError):
    """The vector handed to an analysis routine is not a converged eigenvector."""


class Stability(str, enum.Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class StabilityReport:
    """Spectral summary of ``J(v*)`` for one eigenpair and shift.

    ``gamma`` uses the literal definition (only one copy of ``lam*`` is
    removed from the spectrum); ``gamma_deflated`` removes the whole cluster
    of eigenvalues at ``lam*``.  They differ only when ``lam*`` is multiple,
    as it is for problems with a continuous phase symmetry.
    """

    eigenvalues_of_J: np.ndarray = field(repr=False)
    lambda_star: float
    sigma: float
    mu2: complex
    gamma: float
    mu2_deflated: complex
    gamma_deflated: float
    lambda_multiplicity: int
    stable: Stability
    complete_spectrum: bool = True

    def as_dict(self):
        return {
            "lambda_star": self.lambda_star,
            "sigma": self.sigma,
            "mu2": [self.mu2.real, self.mu2.imag],
            "gamma": self.gamma,
            "mu2_deflated": [self.mu2_deflated.real, self.mu2_deflated.imag],
            "gamma_deflated": self.gamma_deflated,
            "lambda_multiplicity": self.lambda_multiplicity,
            "stable": self.stable.value,
            "complete_spectrum": self.complete_spectrum,
        }


def _require_eigenvector(problem, v, tol=PRECONDITION_RESIDUAL):
    v = problem.check_dim(v)
    v = v / np.linalg.norm(v)
    r = float(np.linalg.norm(residual(problem, v)))
    if r > tol:
        raise NotAnEigenvector(f"residual {r:.3e} exceeds {tol:.0e}")
    return v


def fixed_point_derivative(problem, v_star, sigma):
    """Dense ``phi'(v*)`` built from ``n`` shifted solves on unit vectors."""
    v = _require_eigenvector(problem, v_star)
    lam = rayleigh_quotient(problem, v)
    n = problem.dim
    cols = np.empty((n, n))
    e = np.zeros(n)
    for j in range(n):
        e[j] = 1.0
        cols[:, j] = problem.solve_shifted(v, sigma, e)
        e[j] = 0.0
    cols -= np.outer(v, v @ cols)
    return abs(lam - sigma) * cols


def stability_matrix(problem, y_star):
    """``F(y*) = (I - y* y*^T)(lam* I - J(y*))``, the flow linearization."""
    y = _require_eigenvector(problem, y_star)
    lam = rayleigh_quotient(problem, y)
    M = lam * np.eye(problem.dim) - problem.matrix_J(y)
    return M - np.outer(y, y @ M)


def _closest(values, sigma):
    if len(values) == 0:
        return complex("nan"), math.inf, False
    d = np.abs(values - sigma)
    order = np.argsort(d, kind="stable")
    tie = len(values) > 1 and abs(d[order[1]] - d[order[0]]) <= 1e-12
    return complex(values[order[0]]), float(d[order[0]]), tie


def _iterative_spectrum(problem, v, lam, sigma, k):
    # Arnoldi on the deflated shift-invert operator; returns eigenvalues of J
    n = problem.dim
    Q = np.column_stack([v, problem.invariant_directions(v)])
    Q, _ = np.linalg.qr(Q)

    def project(x):
        return x - Q @ (Q.T @ x)

    def matvec(x):
        x = project(np.asarray(x, dtype=float).ravel())
        return project(problem.solve_shifted(v, sigma, x))

    op = spla.LinearOperator((n, n), matvec=matvec, dtype=float)
    k = min(k, n - Q.shape[1] - 2)
    nu = spla.eigs(op, k=k, which="LM", v0=project(np.ones(n)), return_eigenvectors=False, tol=1e-12)
    return sigma + 1.0 / nu, Q.shape[1]


def convergence_factor(problem, v_star, sigma, dense_limit=4096, n_eigs=8, cluster_tol=1e-7):
    """Theoretical convergence factor and stability label at ``v*``.

    For ``dim <= dense_limit`` the whole spectrum of ``J(v*)`` is computed by
    a dense nonsymmetric eigensolve.  Larger problems use Arnoldi on
    ``(I - QQ^T)(J(v*) - sigma I)^{-1}``, with ``Q`` spanning ``v*`` and the
    problem's invariant directions, and only get the ``n_eigs`` eigenvalues
    nearest ``sigma``.

    Eigenvalues within ``cluster_tol * max(1, |lam*|)`` of ``lam*`` are taken
    to be copies of ``lam*``.
    """
    v = _require_eigenvector(problem, v_star)
    lam = rayleigh_quotient(problem, v)
    tol = cluster_tol * max(1.0, abs(lam))

    if problem.dim <= dense_limit:
        ev = np.linalg.eigvals(problem.matrix_J(v))
        complete = True
        near = np.abs(ev - lam) <= tol
        multiplicity = int(near.sum())
        if multiplicity == 0:
            raise NotAnEigenvector("lam* not found in the spectrum of J(v*)")
        drop_one = np.argmin(np.abs(ev - lam))
        literal = np.delete(ev, drop_one)
        others = ev[~near]
    else:
        found, known = _iterative_spectrum(problem, v, lam, sigma, n_eigs)
        near = np.abs(found - lam) <= tol
        multiplicity = known + int(near.sum())
        others = found[~near]
        ev = np.concatenate([np.full(known, lam, dtype=complex), found.astype(complex)])
        literal = ev[1:]
        complete = False

    mu2, d2, tie = _closest(literal, sigma)
    mu2d, d2d, tied = _closest(others, sigma)
    gamma = abs(lam - sigma) / d2 if d2 > 0 else math.inf
    gamma_d = abs(lam - sigma) / d2d if d2d > 0 else math.inf

    margin = 1e-12 * max(1.0, abs(lam))
    if np.any(others.real < lam - margin):
        label = Stability.UNSTABLE
    elif complete and multiplicity == 1 and not tie and np.all(others.real > lam + margin):
        label = Stability.STABLE
    else:
        label = Stability.INDETERMINATE

    return StabilityReport(
        eigenvalues_of_J=ev,
        lambda_star=lam,
        sigma=float(sigma),
        mu2=mu2,
        gamma=float(gamma),
        mu2_deflated=mu2d,
        gamma_deflated=float(gamma_d),
        lambda_multiplicity=multiplicity,
        stable=label,
        complete_spectrum=complete,
    )


def empirical_convergence_factor(trace, v_ref, floor=NOISE_FLOOR):
    """Error quotients ``d(v_{k+1}, v_ref) / d(v_k, v_ref)``, sign-aligned.

    Entries whose denominator is below ``floor`` are ``None``.
    """
    d = [sign_aligned_distance(v, v_ref) for v in trace]
    return [None if d[k] < floor else d[k + 1] / d[k] for k in range(len(d) - 1)]


def tail_mean(quotients, distances=None, floor=NOISE_FLOOR, fraction=0.25, mask=None):
    """Mean of the last ``fraction`` of quotients before the noise floor.

    The usable prefix ends at the first quotient that is absent or whose
    numerator distance (when ``distances`` is given) is below ``floor``.
    With ``mask`` only quotients ``k`` with ``mask[k]`` true are averaged,
    e.g. the steps taken with a clipped step length, where the shift is
    effectively constant.
    """
    usable = []
    for k, q in enumerate(quotients):
        if q is None or (distances is not None and distances[k + 1] < floor):
            break
        if mask is None or mask[k]:
            usable.append(q)
    if not usable:
        return math.nan
    m = max(1, math.ceil(fraction * len(usable)))
    return float(np.mean(usable[-m:]))


def empirical_gamma(problem, report, sigma=None, version=Version.J, clipped_only=None):
    """Tail-mean empirical convergence factor of a converged solver run.

    The reference vector is the final iterate polished with extra steps at
    ``sigma`` (default: the last shift of the run).  For heuristic runs the
    tail is taken over steps whose step length was clipped at ``h_max``
    (``clipped_only`` gives that ``h_max``), since only there is the shift
    constant enough for a fixed-shift factor to apply.
    """
    if not report.iterates or len(report.iterates) < 3:
        return math.nan
    if sigma is None:
        sigma = report.trace[-1].sigma
    v_ref = reference_solution(problem, report.last_vector, sigma, version)
    q = empirical_convergence_factor(report.iterates, v_ref)
    d = [sign_aligned_distance(v, v_ref) for v in report.iterates]
    mask = None
    if clipped_only is not None:
        mask = [r.h >= clipped_only for r in report.trace[:-1]]
    return tail_mean(q, d, mask=mask)


def reference_solution(problem, v, sigma, version=Version.J, steps=20):
    """Polish ``v`` with extra fixed-shift steps; stops early on a failed solve.

    Gives the high-accuracy reference needed by the empirical quotients.
    """
    for _ in range(steps):
        try:
            v = invit_step(problem, v, sigma, version)
        except SolveFailed:
            break
    return v


def jacobian_derivative_defect(problem, v_star, step=1e-6):
    """Relative norm of the central difference of ``v -> J(v) v*`` at ``v*``.

    Differentiating ``J(v) v = A(v) v`` shows that this derivative vanishes
    wherever the fixed vector equals the evaluation point; at ``v*`` it is
    why the J-version behaves locally like linear inverse iteration.
    """
    v = _require_eigenvector(problem, v_star)
    n = problem.dim
    D = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        D[:, j] = (problem.apply_J(v + e, v) - problem.apply_J(v - e, v)) / (2 * step)
    return float(np.linalg.norm(D, 2) / np.linalg.norm(problem.matrix_J(v), 2))


def collect_eigenpairs(problem, shifts, starts_per_shift=5, seed=0, tol=1e-11, max_iter=500):
    """Distinct eigenpairs found from random starts over a list of shifts.

    Two vectors are the same eigenvector when their sign-aligned distance is
    below ``1e-6``.  Returns a list of ``(lam, v)`` sorted by ``lam``.
    """
    rng = np.random.default_rng(seed)
    found = []
    for sigma in shifts:
        cfg = SolverConfig(shift=FixedShift(float(sigma)), residual_tol=tol, max_iter=max_iter, record_trace=False)
        for _ in range(starts_per_shift):
            v0 = rng.standard_normal(problem.dim)
            rep = solve(problem, cfg, v0)
            if not rep.converged:
                continue
            v = rep.eigenpair.vector
            if all(sign_aligned_distance(v, w) > 1e-6 for _, w in found):
                found.append((rep.eigenpair.lam, v))
    return sorted(found, key=lambda t: t[0])
