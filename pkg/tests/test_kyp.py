import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg

from cocyclelab.discretization import LinearModel, build_delay_model, build_parabolic_model
from cocyclelab.errors import BadRange, HamiltonianImaginaryAxis, Infeasible
from cocyclelab.frequency import ModelTransfer, certify_condition
from cocyclelab.kyp import (KypProblem, audit_inertia, hamiltonian, kyp_margin, riccati_solution,
                            solve_kyp, substitution_check)
from cocyclelab.operator_core import as_mass, make_certificate
from conftest import delay_params, parabolic_params


def scalar(a, C=1.0):
    return LinearModel(A=np.array([[-a]]), B=np.array([1.0]), C=np.array([C]),
                       M=as_mass([[1.0]]), kind="scalar", params=None)


def test_scalar_stable_shift():
    sol = solve_kyp(KypProblem(scalar(2.0), nu=0.0, mu0=1.0))
    assert sol.feasible and sol.cert.P[0, 0] > 0
    assert sol.cert.inertia.as_tuple() == (0, 0, 1)
    assert sol.kyp_margin < 0 and sol.cert.delta == pytest.approx(-sol.kyp_margin)


def test_scalar_unstable_shift():
    prob = KypProblem(scalar(2.0), nu=3.0, mu0=1.0)
    sol = solve_kyp(prob)
    lo, hi = (-3 - np.sqrt(8)) / 2, (-3 + np.sqrt(8)) / 2
    assert lo < sol.cert.P[0, 0] < hi
    assert sol.cert.inertia.as_tuple() == (1, 0, 0)
    assert audit_inertia(sol, prob)
    assert kyp_margin(sol.cert, prob) < 0


def test_scalar_huge_mu0_infeasible():
    with pytest.raises(Infeasible):
        solve_kyp(KypProblem(scalar(2.0), nu=0.0, mu0=1e6))


def test_margin_boundary_and_perturbation():
    prob = KypProblem(scalar(1.0, C=0.0), nu=0.0, mu0=1.0)
    zero = make_certificate(np.zeros((1, 1)), np.eye(1), 0.0, 0.0, 1.0)
    assert kyp_margin(zero, prob) == pytest.approx(0.0, abs=1e-15)
    sol = solve_kyp(KypProblem(scalar(2.0), nu=3.0, mu0=1.0))
    bad = make_certificate(sol.cert.P + 50.0, np.eye(1), 3.0, 0.0, 1.0)
    assert kyp_margin(bad, KypProblem(scalar(2.0), nu=3.0, mu0=1.0)) > 0


def test_scalar_margin_by_hand():
    # P = -1.5 at nu = 3: block [[2*1*(-1.5), -1.5 + 0.5], [., -1]] has top eigenvalue < 0
    prob = KypProblem(scalar(2.0), nu=3.0, mu0=1.0)
    cert = make_certificate(np.array([[-1.5]]), np.eye(1), 3.0, 0.0, 1.0)
    K = np.array([[-3.0, -1.0], [-1.0, -1.0]])
    np.testing.assert_allclose(prob.block(cert.MP), K)
    assert kyp_margin(cert, prob) == pytest.approx(np.linalg.eigvalsh(K)[-1])


def test_parabolic_audit():
    prob = KypProblem(build_parabolic_model(parabolic_params(n_modes=8)), nu=2.5, mu0=1.0)
    sol = solve_kyp(prob)
    assert sol.cert.inertia.n_neg == 1 and audit_inertia(sol, prob)
    assert substitution_check(sol, prob)[1]


def test_delay_audit():
    prob = KypProblem(build_delay_model(delay_params(lam=1.0, n_grid=64)), nu=2.0, mu0=0.1)
    sol = solve_kyp(prob)
    assert sol.cert.inertia.n_neg == 1 and audit_inertia(sol, prob)
    assert substitution_check(sol, prob)[1]


def test_riccati_residual_and_care_crosscheck():
    model = build_delay_model(delay_params(lam=1.0, tau=0.5, n_grid=16))
    prob = KypProblem(model, nu=0.0, mu0=0.5)
    delta = 0.05
    X = riccati_solution(prob, delta)
    Ab, B, M = prob.A_shift, model.B[:, None], model.M
    S, R = prob.F2[:, None], -prob.F3 - delta
    res = Ab.T @ X + X @ Ab + prob.F1 + delta * M + (X @ B + S) @ (B.T @ X + S.T) / R
    assert np.abs(res).max() < 1e-9 * max(1.0, np.abs(X).max())
    # with X = -Y the equation is a standard CARE with an indefinite weight
    Y = linalg.solve_continuous_are(Ab, B, -(prob.F1 + delta * M), np.array([[R]]), s=-S)
    np.testing.assert_allclose(X, -Y, atol=1e-8 * np.abs(X).max())


def test_hamiltonian_structure():
    prob = KypProblem(build_parabolic_model(parabolic_params(n_modes=5)), nu=2.5, mu0=2.0)
    H = hamiltonian(prob, 0.1)
    n = 5
    J = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
    np.testing.assert_allclose(J @ H, (J @ H).T, atol=1e-12)


def test_imaginary_axis_reported():
    prob = KypProblem(scalar(2.0), nu=0.0, mu0=2.0)  # frequency margin touches zero at w = 0
    with pytest.raises(Infeasible):
        solve_kyp(prob)
    with pytest.raises(BadRange):
        riccati_solution(prob, 2.0)


def test_sector_with_zero_lower_bound_is_standard_form():
    model = build_parabolic_model(parabolic_params(n_modes=6))
    a = KypProblem(model, nu=2.5, mu0=3.0)
    b = KypProblem(model, nu=2.5, mu0=3.0, sector=(0.0, 3.0))
    np.testing.assert_array_equal(a.F1, b.F1)
    np.testing.assert_allclose(a.F2, b.F2)
    assert a.F3 == b.F3
    np.testing.assert_allclose(solve_kyp(a).cert.P, solve_kyp(b).cert.P)
    with pytest.raises(BadRange):
        KypProblem(model, nu=2.5, mu0=3.0, sector=(1.0, 0.5))


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([0.5, 1.0, 2.0, 4.0]), st.floats(0.05, 10.0), st.booleans())
def test_scalar_equivalence_property(a, mu0, unstable):
    nu = a + 1.0 if unstable else 0.0
    if abs(mu0 - a) < 1e-3 and not unstable:
        return  # boundary: both sides degenerate
    freq = certify_condition(ModelTransfer(scalar(a)), nu, mu0, n_omega=512).satisfied
    try:
        feasible = solve_kyp(KypProblem(scalar(a), nu=nu, mu0=mu0)).feasible
    except Infeasible:
        feasible = False
    assert feasible == freq


def test_write_P(tmp_path):
    sol = solve_kyp(KypProblem(scalar(2.0), nu=3.0, mu0=1.0))
    sol.write_P(tmp_path / "P.txt")
    np.testing.assert_allclose(np.loadtxt(tmp_path / "P.txt", ndmin=2), sol.cert.P, rtol=1e-15)


def test_imaginary_axis_error_type():
    assert issubclass(HamiltonianImaginaryAxis, Infeasible)
