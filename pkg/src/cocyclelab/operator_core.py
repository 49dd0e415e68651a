"""Symmetric eigenstructure in a weighted inner product.

Everything here works with a mass matrix ``M`` that represents the inner
product of the state space on a truncation: ``(u, v)_M = u^T M v``.  An
operator ``S`` is self-adjoint in that product when ``M S`` is symmetric.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DimensionMismatch, NonSymmetric, NoNegativeSpace, SingularMass

MASS_SYM_TOL = 1e-12
OPERATOR_SYM_TOL = 1e-10
ZERO_TOL_FACTOR = 1e-8


def _rel_asymmetry(a):
    scale = max(np.abs(a).max(), np.finfo(float).tiny)
    return np.abs(a - a.T).max() / scale


def as_mass(M):
    """Validate a mass matrix and return it as a float array."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"mass matrix must be square, got {M.shape}")
    if _rel_asymmetry(M) > MASS_SYM_TOL:
        raise NonSymmetric("mass matrix is not symmetric")
    try:
        linalg.cholesky(M, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularMass("mass matrix is not positive definite") from exc
    if np.linalg.eigvalsh(M).min() <= 0.0:
        raise SingularMass("mass matrix has a non-positive eigenvalue")
    return M


def mass_norm(M, u):
    u = np.asarray(u, dtype=float)
    return float(np.sqrt(max(u @ M @ u, 0.0)))


def generalized_eigen(S, M, sym_tol=OPERATOR_SYM_TOL):
    """Eigenpairs of an M-self-adjoint operator ``S``.

    The problem ``S v = lam v`` is reduced with the Cholesky factor
    ``M = L L^T`` to the symmetric problem ``L^{-1} (M S) L^{-T} w = lam w``,
    and ``v = L^{-T} w``.  Returns ``(eigenvalues, vectors)`` sorted ascending,
    with the columns of ``vectors`` M-orthonormal.
    """
    M = as_mass(M)
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape != M.shape:
        raise DimensionMismatch(f"operator {S.shape} vs mass {M.shape}")
    MS = M @ S
    if _rel_asymmetry(MS) > sym_tol:
        raise NonSymmetric(f"M S is not symmetric (rel. asymmetry {_rel_asymmetry(MS):.2e})")
    MS = 0.5 * (MS + MS.T)
    L = linalg.cholesky(M, lower=True)
    K = linalg.solve_triangular(L, linalg.solve_triangular(L, MS, lower=True).T, lower=True)
    K = 0.5 * (K + K.T)
    lam, W = linalg.eigh(K)
    V = linalg.solve_triangular(L.T, W, lower=False)
    return lam, V


@dataclass(frozen=True)
class Inertia:
    n_neg: int
    n_zero: int
    n_pos: int

    def as_tuple(self):
        return (self.n_neg, self.n_zero, self.n_pos)


def _count(lam, zero_tol):
    if zero_tol is None:
        zero_tol = ZERO_TOL_FACTOR * max(np.abs(lam).max(), np.finfo(float).tiny)
    return Inertia(int(np.sum(lam < -zero_tol)),
                   int(np.sum(np.abs(lam) <= zero_tol)),
                   int(np.sum(lam > zero_tol)))


def inertia_of(S, M, zero_tol=None):
    """Count negative, zero and positive eigenvalues of an M-self-adjoint ``S``.

    ``zero_tol`` defaults to ``1e-8 * max|eigenvalue|``.
    """
    lam, _ = generalized_eigen(S, M)
    return _count(lam, zero_tol)


def _orient(V):
    # largest-magnitude entry of each column made positive
    V = V.copy()
    for j in range(V.shape[1]):
        if V[np.argmax(np.abs(V[:, j])), j] < 0:
            V[:, j] = -V[:, j]
    return V


@dataclass(frozen=True)
class QuadraticCertificate:
    """The operator P with its spectral data and the constants of the squeezing inequality.

    ``P`` is stored as an operator in coordinates (self-adjoint in the M-product);
    ``MP`` is the symmetric Gram matrix of the form ``V(u) = (Pu, u)_M``.
    """
    P: np.ndarray
    M: np.ndarray
    nu: float
    delta: float
    mu0: float
    inertia: Inertia
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    neg_basis: np.ndarray = field(repr=False)

    @property
    def n(self):
        return self.P.shape[0]

    @property
    def MP(self):
        G = self.M @ self.P
        return 0.5 * (G + G.T)

    @property
    def neg_eigenvalues(self):
        return self.eigenvalues[: self.inertia.n_neg]

    def flipped(self):
        """Certificate for ``-P`` (used by falsifiability controls)."""
        return make_certificate(-self.P, self.M, self.nu, self.delta, self.mu0)


def make_certificate(P, M, nu, delta, mu0, zero_tol=None):
    M = as_mass(M)
    P = np.atleast_2d(np.asarray(P, dtype=float))
    lam, V = generalized_eigen(P, M)
    inertia = _count(lam, zero_tol)
    neg = _orient(V[:, : inertia.n_neg])
    V = V.copy()
    V[:, : inertia.n_neg] = neg
    return QuadraticCertificate(P=P, M=M, nu=float(nu), delta=float(delta), mu0=float(mu0),
                                inertia=inertia, eigenvalues=lam, eigenvectors=V,
                                neg_basis=neg)


def _check_vec(cert, M, u):
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != cert.n or M.shape[0] != cert.n:
        raise DimensionMismatch(f"vector of length {u.shape[-1]} for operator of size {cert.n}")
    return u


def quadratic_form(cert, M, u):
    """``V(u) = u^T M P u``; ``u`` may carry leading batch dimensions."""
    M = np.asarray(M, dtype=float)
    u = _check_vec(cert, M, u)
    G = M @ cert.P
    G = 0.5 * (G + G.T)
    return np.einsum("...i,ij,...j->...", u, G, u)


def project_negative(cert, M, u):
    """Coordinates ``(e_i, u)_M`` against the oriented negative basis."""
    if cert.inertia.n_neg == 0:
        raise NoNegativeSpace("operator has no negative eigenvalues")
    M = np.asarray(M, dtype=float)
    u = _check_vec(cert, M, u)
    return u @ (M @ cert.neg_basis)
