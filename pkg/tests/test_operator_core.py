import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cocyclelab.errors import DimensionMismatch, NoNegativeSpace, NonSymmetric, SingularMass
from cocyclelab.operator_core import (as_mass, generalized_eigen, inertia_of, make_certificate,
                                      project_negative, quadratic_form)


def cert_of(P, M=None):
    P = np.asarray(P, dtype=float)
    return make_certificate(P, np.eye(len(P)) if M is None else M, 1.0, 0.1, 1.0)


def test_identity_eigen():
    lam, V = generalized_eigen(np.eye(3), np.eye(3))
    np.testing.assert_allclose(lam, [1, 1, 1])
    np.testing.assert_allclose(V.T @ V, np.eye(3), atol=1e-14)


def test_diagonal_eigen():
    lam, V = generalized_eigen(np.diag([-2.0, 0.0, 5.0]), np.eye(3))
    np.testing.assert_allclose(lam, [-2, 0, 5])
    np.testing.assert_allclose(np.abs(V), np.eye(3), atol=1e-14)


def test_swap_eigen():
    lam, V = generalized_eigen(np.array([[0.0, 1.0], [1.0, 0.0]]), np.eye(2))
    np.testing.assert_allclose(lam, [-1, 1], atol=1e-14)
    s = 1 / np.sqrt(2)
    assert abs(abs(V[:, 0] @ [s, -s]) - 1) < 1e-14
    assert abs(abs(V[:, 1] @ [s, s]) - 1) < 1e-14


def test_inertia_examples():
    assert inertia_of(np.diag([-2.0, 0.0, 5.0]), np.eye(3), zero_tol=1e-8).as_tuple() == (1, 1, 1)
    assert inertia_of(np.eye(4), np.eye(4)).as_tuple() == (0, 0, 4)


def test_mass_validation():
    with pytest.raises(NonSymmetric):
        as_mass([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(SingularMass):
        as_mass(np.diag([1.0, 0.0]))
    with pytest.raises(SingularMass):
        as_mass(np.diag([1.0, -1.0]))
    with pytest.raises(DimensionMismatch):
        generalized_eigen(np.eye(2), np.eye(3))


def test_non_self_adjoint_rejected():
    with pytest.raises(NonSymmetric):
        generalized_eigen(np.array([[0.0, 1.0], [0.0, 0.0]]), np.eye(2))


def test_quadratic_form_examples():
    c = cert_of(np.diag([-1.0, 1.0]))
    assert quadratic_form(c, np.eye(2), [0.0, 0.0]) == 0
    assert quadratic_form(c, np.eye(2), [1.0, 0.0]) == -1
    assert quadratic_form(c, np.eye(2), [1.0, 1.0]) == 0
    with pytest.raises(DimensionMismatch):
        quadratic_form(c, np.eye(2), [1.0, 0.0, 0.0])


def test_project_negative_examples():
    c = cert_of(np.diag([-1.0, 1.0]))
    np.testing.assert_allclose(project_negative(c, np.eye(2), [3.0, 7.0]), [3.0])
    np.testing.assert_allclose(project_negative(c, np.eye(2), c.neg_basis[:, 0]), [1.0])
    np.testing.assert_allclose(project_negative(c, np.eye(2), [0.0, 5.0]), [0.0])
    with pytest.raises(NoNegativeSpace):
        project_negative(cert_of(np.eye(2)), np.eye(2), [1.0, 0.0])


def test_orientation_convention():
    # largest entry of each negative basis vector is positive
    c = cert_of(np.diag([-1.0, -3.0, 2.0]))
    for j in range(c.inertia.n_neg):
        col = c.neg_basis[:, j]
        assert col[np.argmax(np.abs(col))] > 0


@st.composite
def spd_and_sym(draw):
    n = draw(st.integers(2, 6))
    seed = draw(st.integers(0, 2 ** 31))
    r = np.random.default_rng(seed)
    G = r.standard_normal((n, n))
    M = G @ G.T + n * np.eye(n)
    S = r.standard_normal((n, n))
    S = S + S.T
    return M, S


@settings(max_examples=40, deadline=None)
@given(spd_and_sym())
def test_generalized_eigen_property(data):
    M, S = data
    P = np.linalg.solve(M, S)  # M-self-adjoint
    lam, V = generalized_eigen(P, M)
    np.testing.assert_allclose(V.T @ M @ V, np.eye(len(M)), atol=1e-9)
    np.testing.assert_allclose(P @ V, V * lam, atol=1e-8 * max(1, np.abs(lam).max()))


@settings(max_examples=40, deadline=None)
@given(spd_and_sym())
def test_inertia_invariant_under_congruence(data):
    # Sylvester: the inertia of the form depends only on S = M P, not on M
    M, S = data
    ref = inertia_of(S, np.eye(len(S)))
    assert inertia_of(np.linalg.solve(M, S), M) == ref


@settings(max_examples=40, deadline=None)
@given(spd_and_sym(), st.floats(-3, 3), st.floats(-3, 3))
def test_projection_is_linear(data, a, b):
    M, S = data
    c = make_certificate(np.linalg.solve(M, S), M, 1, 0.1, 1)
    if c.inertia.n_neg == 0:
        return
    r = np.random.default_rng(0)
    u, v = r.standard_normal((2, len(M)))
    lhs = project_negative(c, M, a * u + b * v)
    rhs = a * project_negative(c, M, u) + b * project_negative(c, M, v)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9 * (1 + abs(a) + abs(b)) * 10)
