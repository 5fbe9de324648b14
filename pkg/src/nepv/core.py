"""Problem abstraction for eigenvalue problems with eigenvector nonlinearities.

A problem is a symmetric matrix-valued function ``A(v)`` that is invariant
under nonzero scaling of ``v``, together with the Jacobian
``J(v) = d(A(v) v)/dv``.  We look for ``(lam, v)`` with ``A(v) v = lam v``.

Problems are exposed matrix-free: subclasses implement ``apply_A``,
``apply_J`` and ``solve_shifted``; dense assemblies are only built on demand.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NepvProblem",
    "Eigenpair",
    "SolveFailed",
    "VerificationError",
    "ProblemDiagnostics",
    "normalize",
    "random_unit_vector",
    "rayleigh_quotient",
    "residual",
    "verify_problem",
]

UNIT_TOL = 1e-13


class SolveFailed(RuntimeError):
    """A shifted linear solve was singular or produced non-finite values."""

    def __init__(self, message, sigma=None, diagnostic=None, step=None):
        super().__init__(message)
        self.sigma = sigma
        self.diagnostic = diagnostic
        self.step = step

    def __str__(self):
        parts = [super().__str__()]
        if self.sigma is not None:
            parts.append(f"sigma={self.sigma!r}")
        if self.diagnostic is not None:
            parts.append(f"diagnostic={self.diagnostic!r}")
        if self.step is not None:
            parts.append(f"step={self.step}")
        return ", ".join(parts)


class VerificationError(AssertionError):
    """Raised by :func:`verify_problem` when a structural property fails."""

    def __init__(self, failed, diagnostics):
        names = ", ".join(f"{k}={diagnostics.as_dict()[k]:.3e}" for k in failed)
        super().__init__(f"problem verification failed: {names}")
        self.failed = failed
        self.diagnostics = diagnostics


class NepvProblem:
    """Base class for a scaling-invariant problem ``A(v) v = lam v``.

    Subclasses must set ``dim`` and implement :meth:`apply_A`,
    :meth:`apply_J` and :meth:`solve_shifted`.  :meth:`solve_shifted_A` is
    only needed by the A-version of the iteration.

    Instances are treated as read-only once built, so one problem may be
    shared by several threads running independent solves.
    """

    dim: int

    def apply_A(self, v, x):
        """Return ``A(v) @ x``."""
        raise NotImplementedError

    def apply_J(self, v, x):
        """Return ``J(v) @ x``."""
        raise NotImplementedError

    def solve_shifted(self, v, sigma, rhs):
        """Return ``(J(v) - sigma I)^{-1} rhs``; raise :class:`SolveFailed`."""
        raise NotImplementedError

    def solve_shifted_A(self, v, sigma, rhs):
        """Return ``(A(v) - sigma I)^{-1} rhs``; raise :class:`SolveFailed`."""
        raise NotImplementedError(f"{type(self).__name__} has no A-version solve")

    def invariant_directions(self, v):
        """Extra directions known to share the eigenvalue of ``v`` in ``J(v)``.

        Problems with a continuous symmetry (a complex phase, say) have
        eigenvectors that come in families; the tangent of the family at an
        eigenvector ``v`` is an eigenvector of ``J(v)`` for the same
        eigenvalue.  Returns an ``(n, k)`` array, ``k = 0`` by default.
        """
        return np.zeros((self.dim, 0))

    def matrix_A(self, v):
        """Dense ``A(v)`` assembled column by column."""
        return _assemble(lambda x: self.apply_A(v, x), self.dim)

    def matrix_J(self, v):
        """Dense ``J(v)`` assembled column by column."""
        return _assemble(lambda x: self.apply_J(v, x), self.dim)

    def check_dim(self, v):
        v = np.asarray(v, dtype=float)
        if v.ndim != 1 or v.shape[0] != self.dim:
            raise ValueError(
                f"vector of shape {v.shape} does not match problem dimension {self.dim}"
            )
        return v


def _assemble(apply, n):
    out = np.empty((n, n))
    e = np.zeros(n)
    for j in range(n):
        e[j] = 1.0
        out[:, j] = apply(e)
        e[j] = 0.0
    return out


@dataclass(frozen=True)
class Eigenpair:
    """Converged eigenpair with the residual norm it was accepted at."""

    lam: float
    vector: np.ndarray = field(repr=False)
    residual_norm: float = float("nan")


def normalize(x):
    """Return ``x / ||x||``; a zero or non-finite vector raises ``ValueError``."""
    x = np.asarray(x, dtype=float)
    nrm = np.linalg.norm(x)
    if not np.isfinite(nrm) or nrm == 0.0:
        raise ValueError("cannot normalize a zero or non-finite vector")
    return x / nrm


def random_unit_vector(n, rng):
    """Standard normal draw from ``rng``, normalized."""
    return normalize(rng.standard_normal(n))


def rayleigh_quotient(problem, v):
    """Rayleigh quotient ``v^T A(v) v / v^T v``."""
    v = problem.check_dim(v)
    return float(v @ problem.apply_A(v, v)) / float(v @ v)


def residual(problem, v):
    """Residual ``p(v) v - A(v) v``; zero exactly when ``v`` is an eigenvector."""
    v = problem.check_dim(v)
    Av = problem.apply_A(v, v)
    p = float(v @ Av) / float(v @ v)
    return p * v - Av


@dataclass
class ProblemDiagnostics:
    """Worst violations observed by :func:`verify_problem`.

    All entries are relative: symmetry is scaled by ``||x|| ||y|| ||A||``-ish
    magnitudes of the applies, the others by the norm of the reference value.
    """

    symmetry: float = 0.0
    scaling: float = 0.0
    jacobian_identity: float = 0.0
    jacobian_fd: float = 0.0
    trials: int = 0

    def as_dict(self):
        return {
            "symmetry": self.symmetry,
            "scaling": self.scaling,
            "jacobian_identity": self.jacobian_identity,
            "jacobian_fd": self.jacobian_fd,
        }


def verify_problem(
    problem,
    trial_count=5,
    seed=0,
    tol=None,
    fd_step=1e-6,
):
    """Randomized structural checks of a problem bundle.

    For ``trial_count`` random unit vectors ``v`` (seeded normal draws) this
    measures

    * symmetry of ``A(v)``: ``|x.A(v)y - y.A(v)x| / (||x|| ||y|| ||A(v)||_est)``,
    * scaling invariance ``A(alpha v) x = A(v) x`` for alpha in (-2, 0.5, 3),
    * the identity ``J(v) v = A(v) v``,
    * ``J(v) x`` against a central difference of ``u -> A(u) u`` at ``v``
      along ``x`` with step ``fd_step``.

    Parameters
    ----------
    tol : dict, optional
        Maximum allowed value per key of :meth:`ProblemDiagnostics.as_dict`.
        Keys that are missing are not enforced.

    Returns
    -------
    ProblemDiagnostics

    Raises
    ------
    VerificationError
        If any enforced tolerance is exceeded.
    """
    if trial_count < 1:
        raise ValueError("trial_count must be >= 1")
    rng = np.random.default_rng(seed)
    n = problem.dim
    diag = ProblemDiagnostics(trials=trial_count)
    for _ in range(trial_count):
        v = random_unit_vector(n, rng)
        x = rng.standard_normal(n)
        y = rng.standard_normal(n)

        Ax = problem.apply_A(v, x)
        Ay = problem.apply_A(v, y)
        scale = max(np.linalg.norm(Ax) * np.linalg.norm(y), np.linalg.norm(Ay) * np.linalg.norm(x), 1e-300)
        diag.symmetry = max(diag.symmetry, abs(x @ Ay - y @ Ax) / scale)

        for alpha in (-2.0, 0.5, 3.0):
            err = np.linalg.norm(problem.apply_A(alpha * v, x) - Ax)
            diag.scaling = max(diag.scaling, err / max(np.linalg.norm(Ax), 1e-300))

        Av = problem.apply_A(v, v)
        Jv = problem.apply_J(v, v)
        diag.jacobian_identity = max(
            diag.jacobian_identity,
            np.linalg.norm(Jv - Av) / max(np.linalg.norm(Av), 1e-300),
        )

        d = normalize(x)
        up = v + fd_step * d
        um = v - fd_step * d
        fd = (problem.apply_A(up, up) - problem.apply_A(um, um)) / (2 * fd_step)
        Jd = problem.apply_J(v, d)
        diag.jacobian_fd = max(
            diag.jacobian_fd, np.linalg.norm(fd - Jd) / max(np.linalg.norm(Jd), 1e-300)
        )

    if tol:
        values = diag.as_dict()
        unknown = set(tol) - set(values)
        if unknown:
            raise KeyError(f"unknown tolerance keys: {sorted(unknown)}")
        failed = [k for k, t in tol.items() if values[k] > t]
        if failed:
            raise VerificationError(failed, diag)
    return diag
