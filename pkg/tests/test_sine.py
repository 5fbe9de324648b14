import numpy as np
import pytest

from nepv.core import random_unit_vector
from nepv.problems import build_sine
from nepv.problems.sine import A0_INT, A1_INT, B_INT, SineMatrices

from conftest import dominant_pair


def test_matrices_are_integers_over_ten():
    m = SineMatrices.from_beta(0.7)
    np.testing.assert_array_equal(m.A0 * 10, A0_INT)
    np.testing.assert_allclose(m.A1 / 0.7 * 10, A1_INT, rtol=1e-15)
    np.testing.assert_array_equal(m.B * 10, B_INT)
    for M in (m.A0, m.A1, m.B):
        np.testing.assert_array_equal(M, M.T)
    with pytest.raises(ValueError):
        m.A0[0, 0] = 1.0


@pytest.mark.parametrize("beta", [0.0, 0.5, 1.0])
def test_entry_11_at_e1(beta):
    p = build_sine(beta)
    assert p.matrix_A(np.eye(4)[0])[0, 0] == pytest.approx(1.0 + beta * 2.0 * np.sin(-1.4), abs=1e-15)


def test_beta0_is_linear(sine0, rng):
    v = rng.standard_normal(4)
    A0 = np.array(A0_INT) / 10
    np.testing.assert_array_equal(sine0.matrix_A(v), A0)
    np.testing.assert_array_equal(sine0.matrix_J(v), A0)


def test_beta0_eigenpairs_match_dense():
    from nepv.analysis import collect_eigenpairs

    p = build_sine(0.0)
    lams = [lam for lam, _ in collect_eigenpairs(p, shifts=[-7, -3, -0.5, 5], starts_per_shift=3)]
    ref = np.linalg.eigvalsh(np.array(A0_INT) / 10)
    np.testing.assert_allclose(sorted(lams), ref, atol=1e-10)


def test_scaling_invariance(sine1, rng):
    v = rng.standard_normal(4)
    A = sine1.matrix_A(v)
    for alpha in (2.0, -0.5, -4.0):
        # powers of two scale exactly
        np.testing.assert_array_equal(sine1.matrix_A(alpha * v), A)
    np.testing.assert_allclose(sine1.matrix_A(3.0 * v), A, atol=1e-14)


def test_symmetry_and_rank_one_jacobian_correction(sine1, rng):
    for _ in range(10):
        v = random_unit_vector(4, rng)
        A = sine1.matrix_A(v)
        np.testing.assert_array_equal(A, A.T)
        s = np.linalg.svd(sine1.matrix_J(v) - A, compute_uv=False)
        assert s[1] <= 1e-14 * max(s[0], 1.0)


def test_jacobian_closed_form(sine1, rng):
    m = sine1.mats
    v = rng.standard_normal(4)
    s, q = v @ v, v @ m.B @ v
    ref = m.A0 + np.sin(q / s) * m.A1 + 2 * np.cos(q / s) / s**2 * np.outer(m.A1 @ v, s * (v @ m.B) - q * v)
    np.testing.assert_allclose(sine1.matrix_J(v), ref, atol=1e-14)


@pytest.mark.parametrize(
    "beta, lam",
    [(0.0, -6.395113), (0.5, -6.07378), (1.0, -6.013655)],
)
def test_dominant_eigenvalue(beta, lam):
    got, _ = dominant_pair(build_sine(beta))
    assert got == pytest.approx(lam, abs=2e-6)


def test_dominant_matches_reported_value_at_beta1(sine1_star):
    lam, _ = sine1_star
    assert abs(lam - (-6.01)) < 0.05
