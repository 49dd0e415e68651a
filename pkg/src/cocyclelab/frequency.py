"""Transfer functions and certification of the frequency-domain condition.

The condition certified here is ``Re W(i w - nu) + 1/mu0 > 0`` for every real w,
with ``W(p) = C (A - p I)^{-1} B``.
"""
from dataclasses import dataclass

import numpy as np

from .discretization import simpson_weights
from .errors import BadRange, NearSingular, PoleAt

SERIES_CUTOFF = 1e-2


def _segment_moments(z):
    """``E0 = int_0^1 e^{zt} dt`` and ``E1 = int_0^1 t e^{zt} dt`` for complex z."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < SERIES_CUTOFF
    zs = np.where(small, 1.0, z)
    ez = np.exp(zs)
    E0 = (ez - 1.0) / zs
    E1 = (ez * (zs - 1.0) + 1.0) / zs ** 2
    if np.any(small):
        zz = z[small]
        s0 = np.zeros_like(zz)
        s1 = np.zeros_like(zz)
        term = np.ones_like(zz)
        for k in range(10):
            # term = z^k / k!
            s0 += term / (k + 1)
            s1 += term / (k + 2)
            term = term * zz / (k + 1)
        E0 = np.where(small, 0, E0)
        E1 = np.where(small, 0, E1)
        E0[small] = s0
        E1[small] = s1
    return E0, E1


def kernel_laplace(rho, p, a, b):
    """``int_a^b rho(s) e^{p s} ds`` for a piecewise-linear sample table, exactly."""
    nodes = np.union1d(rho.nodes[(rho.nodes > a) & (rho.nodes < b)], [a, b])
    r = rho(nodes)
    s0, h = nodes[:-1], np.diff(nodes)
    keep = h > 0
    s0, h, r0, r1 = s0[keep], h[keep], r[:-1][keep], r[1:][keep]
    E0, E1 = _segment_moments(p * h)
    return complex(np.sum(h * np.exp(p * s0) * (r0 * E0 + (r1 - r0) * E1)))


def delay_transfer(p, params):
    """``W(p) = -(b/(lam + p)) int_{-tau}^0 rho(s) e^{ps} ds``."""
    p = complex(p)
    if abs(p + params.lam) < 1e-12:
        raise PoleAt(f"p = {p} is the pole -lam")
    return -params.b / (params.lam + p) * kernel_laplace(params.rho, p, -params.tau, 0.0)


def resolvent_kernel(x, k):
    """``cosh(k x) / (k sinh k)`` via exponentials of a root with Re k >= 0."""
    return (np.exp(k * (x - 1.0)) + np.exp(-k * (x + 1.0))) / (k * (1.0 - np.exp(-2.0 * k)))


def parabolic_root(p, params):
    k = np.sqrt(complex((p + params.beta) / params.alpha))
    if k.real < 0:
        k = -k
    return k


def parabolic_transfer(p, params, pole_tol=1e-10):
    """``W(p) = -int_0^1 rho(x) u(x, p) dx`` with the cosh resolvent kernel, by Simpson."""
    p = complex(p)
    # nearest eigenvalue lam_k = -alpha pi^2 k^2 - beta; only that one can be close
    kk = np.sqrt(max(-(p.real + params.beta) / params.alpha, 0.0)) / np.pi
    for k in {int(np.floor(kk)), int(np.ceil(kk))}:
        lam_k = -params.alpha * np.pi ** 2 * k ** 2 - params.beta
        if abs(p - lam_k) < pole_tol * max(1.0, abs(lam_k)):
            raise PoleAt(f"p = {p} is the eigenvalue lambda_{k} = {lam_k}")
    k = parabolic_root(p, params)
    x, w = simpson_weights(params.quad_intervals)
    return complex(-np.sum(w * params.rho(x) * resolvent_kernel(x, k)))


def generic_transfer(model, p, rtol=1e-9):
    """``C (A - pI)^{-1} B`` by a complex dense solve with a residual check."""
    p = complex(p)
    K = model.A.astype(complex) - p * np.eye(model.n)
    B = model.B.astype(complex)
    try:
        y = np.linalg.solve(K, B)
    except np.linalg.LinAlgError as exc:
        raise NearSingular(f"A - pI singular at p = {p}") from exc
    res = np.linalg.norm(K @ y - B)
    if not np.isfinite(res) or res > rtol * np.linalg.norm(B):
        raise NearSingular(f"resolvent residual {res:.2e} at p = {p}")
    return complex(model.C @ y)


class DelayTransfer:
    """Closed-form delay transfer function as a callable, with its admissible shifts."""

    def __init__(self, params):
        self.params = params

    def __call__(self, p):
        return delay_transfer(p, self.params)

    def check_nu(self, nu, theorem_range=False):
        if nu < 0:
            raise BadRange("nu must be >= 0")
        if abs(nu - self.params.lam) < 1e-12:
            raise BadRange("nu must differ from lam")


class ParabolicTransfer:
    def __init__(self, params):
        self.params = params

    def __call__(self, p):
        return parabolic_transfer(p, self.params)

    def check_nu(self, nu, theorem_range=False):
        a, b = self.params.alpha, self.params.beta
        if np.any(np.abs(nu + self.params.eigenvalues) < 1e-12):
            raise BadRange("A + nu I has a zero eigenvalue")
        if theorem_range and not (b < nu < b + np.pi ** 2 * a):
            raise BadRange(f"nu must lie in (beta, beta + pi^2 alpha) = ({b}, {b + np.pi ** 2 * a})")


class ModelTransfer:
    def __init__(self, model):
        self.model = model

    def __call__(self, p):
        return generic_transfer(self.model, p)

    def check_nu(self, nu, theorem_range=False):
        ev = np.linalg.eigvals(self.model.shifted(nu))
        if np.min(np.abs(ev.real)) < 1e-9 * max(1.0, np.abs(ev).max()):
            raise BadRange("A + nu I has an eigenvalue on the imaginary axis")


@dataclass(frozen=True)
class FrequencyReport:
    nu: float
    mu0: float
    omega_grid: np.ndarray
    margins: np.ndarray
    min_margin: float
    tail_bound: float
    satisfied: bool
    tail_constant: float = float("nan")

    @property
    def argmin_omega(self):
        return float(self.omega_grid[int(np.argmin(self.margins))])

    def summary(self):
        return {"nu": self.nu, "mu0": self.mu0, "n_omega": int(self.omega_grid.size),
                "omega_max": float(np.abs(self.omega_grid).max()),
                "min_margin": self.min_margin, "argmin_omega": self.argmin_omega,
                "tail_constant": self.tail_constant, "tail_bound": self.tail_bound,
                "satisfied": self.satisfied}


def default_grid(omega_max=1e3, n_omega=2048, omega_min=1e-3):
    """Symmetric grid: ``n_omega/2`` log-spaced |w| in [omega_min, omega_max], mirrored, plus 0."""
    half = np.logspace(np.log10(omega_min), np.log10(omega_max), n_omega // 2)
    return np.concatenate([-half[::-1], [0.0], half]), half


def certify_condition(transfer, nu, mu0, omega_max=1e3, n_omega=2048, theorem_range=False):
    """Sweep ``Re W(i w - nu) + 1/mu0`` and bound it beyond the grid.

    Beyond ``omega_max`` the bound ``|W(i w - nu)| <= K/|w|`` is used, with ``K``
    twice the sampled supremum of ``|w W|`` over the outer decade of the grid.
    """
    if not mu0 > 0:
        raise BadRange("mu0 must be > 0")
    if not omega_max > 1e-3 or n_omega < 4:
        raise BadRange("need omega_max > 1e-3 and n_omega >= 4")
    if hasattr(transfer, "check_nu"):
        transfer.check_nu(nu, theorem_range)
    omega, half = default_grid(omega_max, n_omega)
    w_pos = np.array([transfer(1j * w - nu) for w in np.concatenate([[0.0], half])])
    # real data: W(conj p) = conj W(p); spot-check, then mirror
    for w, val in zip(half[:: max(1, half.size // 4)], w_pos[1:][:: max(1, half.size // 4)]):
        mirror = transfer(-1j * w - nu)
        if abs(mirror - np.conj(val)) > 1e-10 * (1.0 + abs(val)):
            raise BadRange(f"transfer function not conjugate-symmetric at w = {w}")
    re = w_pos.real
    margins_pos = re + 1.0 / mu0
    margins = np.concatenate([margins_pos[1:][::-1], margins_pos])
    outer = half >= omega_max / 10.0
    K = 2.0 * float(np.max(half[outer] * np.abs(w_pos[1:][outer])))
    tail = 1.0 / mu0 - K / omega_max
    min_margin = float(margins.min())
    return FrequencyReport(nu=float(nu), mu0=float(mu0), omega_grid=omega, margins=margins,
                           min_margin=min_margin, tail_bound=float(tail),
                           satisfied=bool(min_margin > 0 and tail > 0), tail_constant=K)


def gain_below_decay(lam, mu0):
    """Sufficient condition lam > mu0 (shift nu = 0)."""
    return lam > mu0


def short_delay_condition(lam, tau, mu0):
    """Sufficient condition -tau e^{tau lam + 1} + 1/mu0 > 0 (shift nu = lam + 1/tau)."""
    return -tau * np.exp(tau * lam + 1.0) + 1.0 / mu0 > 0
