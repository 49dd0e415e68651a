"""Finite-dimensional Kalman-Yakubovich-Popov solve for the operator P.

With ``Ab = A + nu I`` and the quadratic form
``F(u, xi) = u^T F1 u + 2 xi F2 u + F3 xi^2`` the inequality certified is

    2 (Ab u + B xi)^T X u + F(u, xi) <= -delta (u^T M u + xi^2),   X = M P,

for all ``(u, xi)``.  Eliminating ``xi`` gives the Riccati equation

    Ab^T X + X Ab + F1 + delta M + (X B + F2^T) R^{-1} (B^T X + F2) = 0,  R = -F3 - delta,

solved through the stable invariant subspace of its Hamiltonian matrix.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .discretization import LinearModel
from .errors import (BadRange, DimensionMismatch, HamiltonianImaginaryAxis, Infeasible)
from .operator_core import QuadraticCertificate, make_certificate

IMAG_AXIS_TOL = 1e-9
DELTA_FLOOR = 1e-12


@dataclass(frozen=True)
class KypProblem:
    """Model, shift and the quadratic form ``(F1, F2, F3)``.

    The default is the form ``xi (mu0 C u - xi)``.  Passing ``sector=(mu1, mu2)``
    uses ``(xi - mu1 C u)(mu2 C u - xi)`` instead.
    """
    model: LinearModel
    nu: float
    mu0: float
    sector: tuple = None
    F1: np.ndarray = field(init=False, repr=False)
    F2: np.ndarray = field(init=False, repr=False)
    F3: float = field(init=False)

    def __post_init__(self):
        C = np.asarray(self.model.C, dtype=float)
        if self.sector is None:
            if not self.mu0 > 0:
                raise BadRange("mu0 must be > 0")
            F1 = np.zeros((C.size, C.size))
            F2 = 0.5 * self.mu0 * C
        else:
            mu1, mu2 = map(float, self.sector)
            if not mu2 > mu1:
                raise BadRange("sector needs mu2 > mu1")
            F1 = -mu1 * mu2 * np.outer(C, C)
            F2 = 0.5 * (mu1 + mu2) * C
        object.__setattr__(self, "F1", F1)
        object.__setattr__(self, "F2", F2)
        object.__setattr__(self, "F3", -1.0)

    @property
    def A_shift(self):
        return self.model.shifted(self.nu)

    def block(self, X, delta=0.0):
        """Symmetric matrix of the form ``2 (Ab u + B xi)^T X u + F + delta |(u, xi)|^2``."""
        Ab, B, M = self.A_shift, self.model.B, self.model.M
        n = Ab.shape[0]
        top = Ab.T @ X + X @ Ab + self.F1 + delta * M
        off = X @ B + self.F2
        K = np.empty((n + 1, n + 1))
        K[:n, :n] = 0.5 * (top + top.T)
        K[:n, n] = K[n, :n] = off
        K[n, n] = self.F3 + delta
        return K


@dataclass(frozen=True)
class KypSolution:
    cert: QuadraticCertificate
    kyp_margin: float
    feasible: bool
    delta_tried: float = float("nan")

    def summary(self):
        c = self.cert
        return {"nu": c.nu, "mu0": c.mu0, "delta": c.delta, "kyp_margin": self.kyp_margin,
                "feasible": self.feasible, "inertia": list(c.inertia.as_tuple()), "n": c.n}

    def write_P(self, path):
        """Dense row-major text of ``P`` (model coordinates), one row per line."""
        np.savetxt(path, self.cert.P, fmt="%.17e",
                   header=f"P operator, n={self.cert.n}, row-major; V(u) = u^T M P u")


def _block_metric(M):
    n = M.shape[0]
    D = np.zeros((n + 1, n + 1))
    D[:n, :n] = M
    D[n, n] = 1.0
    return D


def kyp_margin(cert, prob):
    """Largest eigenvalue of the KYP block matrix relative to ``blockdiag(M, 1)``.

    Measured in the M-norm of the state, so a certificate satisfying the
    inequality with constant delta has margin ``<= -delta`` (equivalence constant 1).
    """
    n = prob.model.n
    if cert.n != n or cert.M.shape != prob.model.M.shape:
        raise DimensionMismatch(f"certificate of size {cert.n} for model of size {n}")
    K = prob.block(cert.MP)
    lam = linalg.eigh(K, _block_metric(prob.model.M), eigvals_only=True)
    return float(lam[-1])


def hamiltonian(prob, delta):
    Ab, B, M = prob.A_shift, prob.model.B[:, None], prob.model.M
    R = -prob.F3 - delta
    S = prob.F2[:, None]
    Ah = Ab + B @ S.T / R
    G = B @ B.T / R
    Qh = prob.F1 + delta * M + S @ S.T / R
    return np.block([[Ah, G], [-Qh, -Ah.T]])


def riccati_solution(prob, delta):
    """Stabilizing solution X of the Riccati equation at a given delta.

    Raises HamiltonianImaginaryAxis when the Hamiltonian has eigenvalues within
    ``1e-9`` (relative) of the imaginary axis, Infeasible when the stable subspace
    is not a graph over the first block.
    """
    if not 0 < delta < -prob.F3:
        raise BadRange("delta must lie in (0, -F3)")
    H = hamiltonian(prob, delta)
    n = prob.model.n
    ev = linalg.eigvals(H)
    scale = max(1.0, np.abs(ev).max())
    if np.min(np.abs(ev.real)) < IMAG_AXIS_TOL * scale:
        raise HamiltonianImaginaryAxis(f"Hamiltonian eigenvalue within {IMAG_AXIS_TOL:g} of the imaginary axis")
    T, Z, sdim = linalg.schur(H, output="real", sort="lhp")
    if sdim != n:
        raise Infeasible(f"stable subspace has dimension {sdim}, expected {n}")
    Z1, Z2 = Z[:n, :n], Z[n:, :n]
    if np.linalg.cond(Z1) > 1e12:
        raise Infeasible("stable subspace is not a graph (ill-conditioned first block)")
    X = linalg.solve(Z1.T, Z2.T).T
    return 0.5 * (X + X.T)


def _attempt(prob, delta):
    X = riccati_solution(prob, delta)
    M = prob.model.M
    P = linalg.solve(M, X, assume_a="pos")
    cert = make_certificate(P, M, prob.nu, delta, prob.mu0)
    margin = kyp_margin(cert, prob)
    return cert, margin


def default_delta_seed(prob):
    return 1e-2 * np.linalg.norm(prob.A_shift, 2)


def solve_kyp(prob, delta_seed=None, refine_steps=6):
    """Find P with the largest delta reachable from ``delta_seed`` by halving.

    ``delta_seed`` defaults to ``1e-2 |A + nu I|`` and is clamped below ``-F3``
    (R must stay positive).  After the first feasible delta a few bisection steps
    toward the last infeasible value increase it.  The certificate reports
    ``delta = -kyp_margin``.
    """
    seed = default_delta_seed(prob) if delta_seed is None else float(delta_seed)
    seed = min(seed, 0.5 * -prob.F3)
    if not seed > 0:
        raise BadRange("delta seed must be > 0")
    delta, last_bad, last_exc = seed, None, None
    found = None
    while delta >= DELTA_FLOOR:
        try:
            cert, margin = _attempt(prob, delta)
            if margin < 0:
                found = (cert, margin, delta)
                break
            last_exc = Infeasible(f"margin {margin:.3e} >= 0 at delta={delta:.3e}")
        except Infeasible as exc:
            last_exc = exc
        last_bad = delta
        delta *= 0.5
    if found is None:
        if isinstance(last_exc, HamiltonianImaginaryAxis):
            raise last_exc
        raise Infeasible(f"no delta in [{DELTA_FLOOR:g}, {seed:.3g}] gives a certificate: {last_exc}")
    if last_bad is not None:
        lo, hi = found[2], last_bad
        for _ in range(refine_steps):
            mid = 0.5 * (lo + hi)
            try:
                cert, margin = _attempt(prob, mid)
            except Infeasible:
                hi = mid
                continue
            if margin < 0:
                lo, found = mid, (cert, margin, mid)
            else:
                hi = mid
    cert, margin, delta = found
    cert = make_certificate(cert.P, cert.M, prob.nu, -margin, prob.mu0)
    return KypSolution(cert=cert, kyp_margin=margin, feasible=True, delta_tried=delta)


def unstable_count(prob):
    ev = np.linalg.eigvals(prob.A_shift)
    return int(np.sum(ev.real > 0))


def audit_inertia(sol, prob):
    """True iff P is nonsingular and its negative index equals the unstable dimension of A + nu I."""
    inert = sol.cert.inertia
    return bool(inert.n_zero == 0 and inert.n_neg == unstable_count(prob))


def substitution_check(sol, prob, n_samples=1000, seed=0, slack=1e-8):
    """Monte Carlo check of the KYP inequality on random ``(u, xi)`` pairs.

    Returns the largest value of ``lhs + delta |(u, xi)|^2`` over pairs normalized
    to unit length; a valid certificate keeps it at or below ``slack``.
    """
    rng = np.random.default_rng(seed)
    n = prob.model.n
    Z = rng.standard_normal((n_samples, n + 1))
    D = _block_metric(prob.model.M)
    Z /= np.sqrt(np.einsum("ki,ij,kj->k", Z, D, Z))[:, None]
    K = prob.block(sol.cert.MP, delta=sol.cert.delta)
    vals = np.einsum("ki,ij,kj->k", Z, K, Z)
    scale = max(1.0, np.abs(K).max())
    return float(vals.max() / scale), bool(vals.max() <= slack * scale)
