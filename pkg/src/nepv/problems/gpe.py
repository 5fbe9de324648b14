"""Rotating two-dimensional Gross-Pitaevskii ground states.

Discretizes

    (-1/2 Lap - i Omega d/dphi + V) psi + b |psi|^2 psi = lam psi

on ``(-L, L)^2`` with homogeneous Dirichlet boundaries, ``N`` interior points
per direction (spacing ``dx = 2L/(N+1)``) and grid index ``N*(k-1) + j`` with
the x-index ``j`` running fastest.  The complex unknown ``z`` (with
``psi = z / dx``) is embedded as the real vector ``v = (Re z, Im z)`` so the
problem becomes scaling invariant of dimension ``2 N^2``.

The Jacobian is a sparse matrix plus a rank-one term, so the shifted solve
factors only the sparse part ``C`` and corrects with Sherman-Morrison.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..core import NepvProblem, SolveFailed

__all__ = [
    "default_potential",
    "GpeParams",
    "GpeGrid",
    "GpeProblem",
    "build_gpe",
    "gaussian_superposition",
    "initial_guess",
    "density_and_phase",
    "count_vortices",
    "write_fields",
]

log = logging.getLogger(__name__)


def default_potential(x, y):
    """Asymmetric harmonic trap ``(x^2 + 1.2 y^2) / 2``."""
    return 0.5 * (x**2 + 1.2 * y**2)


@dataclass(frozen=True)
class GpeParams:
    b: float = 200.0
    omega: float = 0.85
    L: float = 15.0
    N: int = 32
    potential: Callable = field(default=default_potential, compare=False)

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 4:
            raise ValueError("N must be an integer >= 4")
        if not self.L > 0:
            raise ValueError("L must be positive")

    @property
    def dx(self):
        return 2.0 * self.L / (self.N + 1)

    @property
    def beta(self):
        return self.b / self.dx**2


@dataclass(frozen=True)
class GpeGrid:
    N: int
    L: float
    dx: float
    xs: np.ndarray = field(repr=False)
    ys: np.ndarray = field(repr=False)

    @classmethod
    def from_params(cls, params):
        N = int(params.N)
        dx = params.dx
        pts = -params.L + dx * np.arange(1, N + 1)
        return cls(N=N, L=float(params.L), dx=dx, xs=pts, ys=pts.copy())

    def index(self, j, k):
        """Zero-based position of the 1-based grid point ``(x_j, y_k)``."""
        return self.N * (k - 1) + (j - 1)

    def mesh(self):
        """``(X, Y)`` arrays of shape ``(N, N)`` indexed ``[k, j]``."""
        return np.meshgrid(self.xs, self.ys, indexing="xy")


def _first_difference(n, dx):
    off = np.full(n - 1, 1.0 / (2 * dx))
    return sp.diags([-off, off], [-1, 1], shape=(n, n), format="csr")


def _second_difference(n, dx):
    main = np.full(n, -2.0 / dx**2)
    off = np.full(n - 1, 1.0 / dx**2)
    return sp.diags([off, main, off], [-1, 0, 1], shape=(n, n), format="csr")


def _linear_embedding(params, grid):
    n = grid.N
    I = sp.identity(n, format="csr")
    D = _first_difference(n, grid.dx)
    D2 = _second_difference(n, grid.dx)
    lap = sp.kron(D2, I) + sp.kron(I, D2)
    # y d/dx - x d/dy with x as the fast index
    ang = sp.kron(sp.diags(grid.ys), D) - sp.kron(D, sp.diags(grid.xs))
    X, Y = grid.mesh()
    V = np.asarray(params.potential(X, Y), dtype=float).ravel()
    re = -0.5 * lap + sp.diags(V)
    im = -params.omega * ang
    E = sp.bmat([[re, -im], [im, re]], format="csr")
    return E, V


class GpeProblem(NepvProblem):
    """Real-embedded discretized GPE; see the module docstring."""

    def __init__(self, params: GpeParams):
        self.params = params
        self.grid = GpeGrid.from_params(params)
        self.nc = self.grid.N**2
        self.dim = 2 * self.nc
        self.beta = params.beta
        self.E, self.V = _linear_embedding(params, self.grid)
        self.E.sort_indices()
        self._eye = sp.identity(self.dim, format="csr")
        self._local = threading.local()
        if self.dim > 50_000:
            log.info(
                "GPE N=%d: dimension %d, about %.0f MB per factorization (estimate)",
                self.grid.N, self.dim, self.memory_estimate() / 2**20,
            )

    def memory_estimate(self):
        """Rough peak bytes of the shifted solves.

        The minimum-degree LU of the 2-D pattern fills to about
        ``0.36 n log2(n)**2`` entries (fitted for N = 32 to 200), each a
        value plus an index.  The cached factor is still alive while the
        next one is built, so two are counted.
        """
        n = self.dim
        fill = 0.36 * n * np.log2(n) ** 2
        return int(2 * 12 * fill + 12 * self.E.nnz + 8 * 10 * n)

    # pieces of the nonlinearity -------------------------------------------

    def _split(self, v):
        return v[: self.nc], v[self.nc:]

    def _density(self, v):
        v1, v2 = self._split(v)
        return v1 * v1 + v2 * v2

    def _C_blocks(self, v):
        # 3diag(v1)^2 + diag(v2)^2, 2diag(v1 v2), diag(v1)^2 + 3diag(v2)^2
        v1, v2 = self._split(v)
        return 3 * v1 * v1 + v2 * v2, 2 * v1 * v2, v1 * v1 + 3 * v2 * v2

    def B_times(self, v, x):
        d = self._density(v)
        x1, x2 = self._split(x)
        return np.concatenate([d * x1, d * x2])

    def _M_times(self, v, x):
        a, c, e = self._C_blocks(v)
        x1, x2 = self._split(x)
        return np.concatenate([a * x1 + c * x2, c * x1 + e * x2])

    # NepvProblem interface ---------------------------------------------------

    def apply_A(self, v, x):
        v = np.asarray(v, dtype=float)
        s = float(v @ v)
        return self.E @ x + (self.beta / s) * self.B_times(v, x)

    def apply_J(self, v, x):
        v = np.asarray(v, dtype=float)
        x = np.asarray(x, dtype=float)
        s = float(v @ v)
        Bv = self.B_times(v, v)
        nonlin = self._M_times(v, x) - (2.0 / s) * Bv * float(v @ x)
        return self.E @ x + (self.beta / s) * nonlin

    def sparse_A(self, v):
        v = np.asarray(v, dtype=float)
        d = self._density(v) * (self.beta / float(v @ v))
        return (self.E + sp.diags(np.concatenate([d, d]))).tocsc()

    def sparse_C(self, v, sigma):
        """Sparse part ``C`` of ``J(v) - sigma I`` for unit ``v``."""
        a, c, e = self._C_blocks(v)
        b = self.beta
        main = sp.diags(np.concatenate([b * a - sigma, b * e - sigma]))
        cross = sp.diags([b * c, b * c], [self.nc, -self.nc], shape=(self.dim, self.dim))
        return (self.E + main + cross).tocsc()

    def invariant_directions(self, v):
        # multiplication by i maps an eigenvector family along itself
        v1, v2 = self._split(np.asarray(v, dtype=float))
        return np.concatenate([-v2, v1])[:, None]

    # shifted solves -------------------------------------------------------

    def _factor(self, M):
        # SuperLU computes its own fill-reducing order on A^T + A per call;
        # C is symmetric so a symmetric-mode factorization is used
        try:
            lu = spla.splu(
                M,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.1,
                options=dict(SymmetricMode=True),
            )
        except RuntimeError as exc:
            raise SolveFailed(f"sparse factorization failed: {exc}") from exc
        return lu.solve

    def smw_solve(self, v, sigma, rhs):
        """``(J(v) - sigma I)^{-1} rhs`` by a sparse solve plus rank-one fix.

        With ``C`` the sparse part and ``J - sigma I = C - 2 beta B(v)v v^T``:
        ``u1 = C^{-1} rhs``, ``w = 2 beta C^{-1} B(v) v`` and the result is
        ``u1 + (v.u1 / (1 - v.w)) w``.  The factorization and ``w`` are
        cached per thread for the last ``(v, sigma)``.
        """
        v = np.asarray(v, dtype=float)
        nrm = np.linalg.norm(v)
        if abs(nrm - 1.0) > 1e-12:
            v = v / nrm
        key = (v.tobytes(), float(sigma))
        cache = getattr(self._local, "smw", None)
        if cache is None or cache[0] != key:
            solve_C = self._factor(self.sparse_C(v, sigma))
            w = solve_C(2.0 * self.beta * self.B_times(v, v))
            denom = 1.0 - float(v @ w)
            cache = (key, solve_C, w, denom)
            self._local.smw = cache
        _, solve_C, w, denom = cache
        if not np.isfinite(denom) or abs(denom) < 1e-12:
            raise SolveFailed("rank-one correction breaks down", sigma=sigma, diagnostic=denom)
        u1 = solve_C(np.asarray(rhs, dtype=float))
        out = u1 + (float(v @ u1) / denom) * w
        if not np.all(np.isfinite(out)):
            raise SolveFailed("non-finite solution of shifted system", sigma=sigma)
        return out

    def solve_shifted(self, v, sigma, rhs):
        return self.smw_solve(v, sigma, rhs)

    def solve_shifted_A(self, v, sigma, rhs):
        M = self.sparse_A(v) - sigma * self._eye
        out = self._factor(M.tocsc())(np.asarray(rhs, dtype=float))
        if not np.all(np.isfinite(out)):
            raise SolveFailed("non-finite solution of shifted system", sigma=sigma)
        return out


def build_gpe(params=None, **kwargs):
    """Build the embedded GPE problem from ``GpeParams`` or keyword values."""
    if params is None:
        params = GpeParams(**kwargs)
    elif kwargs:
        raise TypeError("pass either params or keyword values, not both")
    return GpeProblem(params)


def gaussian_superposition(seed, L, count=10):
    """Random complex sum of Gaussians on ``(-L, L)^2``, independent of any grid.

    Centers are uniform in ``[-L/2, L/2]^2``, widths uniform in
    ``[L/8, L/4]``, phases uniform on the circle.
    """
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-L / 2, L / 2, size=(count, 2))
    widths = rng.uniform(L / 8, L / 4, size=count)
    phases = np.exp(1j * rng.uniform(0, 2 * np.pi, size=count))

    def psi(x, y):
        x = np.asarray(x, dtype=float)[..., None]
        y = np.asarray(y, dtype=float)[..., None]
        r2 = (x - centers[:, 0]) ** 2 + (y - centers[:, 1]) ** 2
        return np.sum(phases * np.exp(-r2 / (2 * widths**2)), axis=-1)

    return psi


def initial_guess(grid, seed):
    """Unit real-embedded starting vector sampled from a Gaussian superposition."""
    X, Y = grid.mesh()
    z = grid.dx * gaussian_superposition(seed, grid.L)(X, Y).ravel()
    v = np.concatenate([z.real, z.imag])
    return v / np.linalg.norm(v)


def _to_complex_field(v, grid):
    v = np.asarray(v, dtype=float)
    nc = grid.N**2
    if v.shape != (2 * nc,):
        raise ValueError(f"expected a vector of length {2 * nc}, got {v.shape}")
    z = v[:nc] + 1j * v[nc:]
    return z.reshape(grid.N, grid.N) / grid.dx


def density_and_phase(v, grid, undefined_below=1e-14):
    """Particle density ``|psi|^2`` and phase on the ``[k, j]`` (y, x) grid.

    The phase is ``atan2(Im, Re)``; where ``|psi| < undefined_below`` it is NaN.
    """
    psi = _to_complex_field(v, grid)
    density = np.abs(psi) ** 2
    phase = np.arctan2(psi.imag, psi.real)
    phase[np.abs(psi) < undefined_below] = np.nan
    return density, phase


def count_vortices(v, grid, density_fraction=0.02):
    """Number of grid plaquettes with nonzero phase winding inside the cloud.

    A plaquette counts when the phase differences around its four corners
    (each wrapped to ``(-pi, pi]``) sum to ``+-2 pi`` and the mean corner
    density exceeds ``density_fraction`` of the peak density, which keeps
    phase noise in the empty outer region out of the count.
    """
    psi = _to_complex_field(v, grid)
    ph = np.angle(psi)
    density = np.abs(psi) ** 2

    def wrap(a):
        return (a + np.pi) % (2 * np.pi) - np.pi

    c00, c01 = ph[:-1, :-1], ph[:-1, 1:]
    c11, c10 = ph[1:, 1:], ph[1:, :-1]
    winding = wrap(c01 - c00) + wrap(c11 - c01) + wrap(c10 - c11) + wrap(c00 - c10)
    charge = np.rint(winding / (2 * np.pi)).astype(int)
    rho = 0.25 * (density[:-1, :-1] + density[:-1, 1:] + density[1:, 1:] + density[1:, :-1])
    inside = rho > density_fraction * density.max()
    return int(np.count_nonzero(charge[inside]))


def write_fields(out_dir, v, grid, params=None):
    """Write ``density.csv``, ``phase.csv`` and ``grid.json`` into ``out_dir``.

    CSV rows follow ascending y, columns ascending x, values as ``%.17g``
    (undefined phases as ``nan``).
    """
    density, phase = density_and_phase(v, grid)
    os.makedirs(out_dir, exist_ok=True)
    np.savetxt(os.path.join(out_dir, "density.csv"), density, fmt="%.17g", delimiter=",")
    np.savetxt(os.path.join(out_dir, "phase.csv"), phase, fmt="%.17g", delimiter=",")
    meta = {
        "N": grid.N,
        "L": grid.L,
        "dx": grid.dx,
        "x0": float(grid.xs[0]),
        "y0": float(grid.ys[0]),
        "rows": "y ascending",
        "columns": "x ascending",
        "density_normalization": "sum(density) * dx^2 = 1",
    }
    if params is not None:
        meta.update({"b": params.b, "omega": params.omega, "beta": params.beta})
    with open(os.path.join(out_dir, "grid.json"), "w", newline="\n") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    return density, phase
