"""Finite-dimensional truncations (A, B, C, M) of the delay and parabolic models.

Delay model
    x'(t) = -lam x(t) + b f(t, v(t)) + g(t),  v(t) = int_{-tau}^0 rho(s) x(t+s) ds,
    posed in R x L2(-tau, 0).  State layout ``u = (x, phi_0, ..., phi_{N-1})`` with
    ``phi_i = phi(s_i)``, ``s_i = -tau + i*h``, ``h = tau/N``; the value at s = 0 is
    identified with ``x``.

Parabolic model
    u_t = alpha u_xx - beta u + g0(t, x) on (0, 1), u_x(t, 0) = 0,
    boundary flux at x = 1 driven by f(t, v(t)), v(t) = int_0^1 rho(x) u(t, x) dx.
    Galerkin coordinates in the cosine basis cos(k pi x), k = 0..n_modes-1.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import BadParams
from .operator_core import as_mass

DELAY_SCHEMES = ("upwind", "upwind2")


@dataclass(frozen=True)
class SampledFunction:
    """A function given by a sample table, evaluated by linear interpolation."""
    nodes: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if nodes.ndim != 1 or nodes.shape != values.shape or nodes.size < 2:
            raise BadParams("sample table needs matching 1-D nodes and values (>= 2 points)")
        if np.any(np.diff(nodes) < 0):
            raise BadParams("sample nodes must be non-decreasing")
        if not np.all(np.isfinite(values)):
            raise BadParams("sample values must be finite")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)

    def __call__(self, s):
        return np.interp(s, self.nodes, self.values)

    @classmethod
    def constant(cls, c, a, b):
        return cls(np.array([a, b]), np.array([c, c]))

    @classmethod
    def from_callable(cls, fn, a, b, n=257):
        s = np.linspace(a, b, n)
        return cls(s, np.asarray(fn(s), dtype=float) * np.ones_like(s))

    @classmethod
    def delta_approximant(cls, tau, n):
        """``n * indicator[-tau, -tau + 1/n]`` with a steep (1e-9 wide) edge."""
        if 1.0 / n >= tau:
            raise BadParams("approximant support must fit inside [-tau, 0]")
        edge = -tau + 1.0 / n
        eps = 1e-9 * tau
        return cls(np.array([-tau, edge, edge + eps, 0.0]), np.array([n, n, 0.0, 0.0]))

    def is_constant(self):
        return bool(np.all(self.values == self.values[0]))

    def to_dict(self):
        return {"nodes": self.nodes.tolist(), "values": self.values.tolist()}


@dataclass(frozen=True)
class DelayParams:
    lam: float
    b: float
    tau: float
    rho: SampledFunction
    n_grid: int = 64
    scheme: str = "upwind2"

    def __post_init__(self):
        problems = []
        if self.scheme not in DELAY_SCHEMES:
            problems.append(f"scheme must be one of {DELAY_SCHEMES}")
        if not self.lam > 0:
            problems.append("lam must be > 0")
        if self.b not in (1, -1, 1.0, -1.0):
            problems.append("b must be +1 or -1")
        if not self.tau > 0:
            problems.append("tau must be > 0")
        if int(self.n_grid) != self.n_grid or self.n_grid < 8:
            problems.append("n_grid must be an integer >= 8")
        if problems:
            raise BadParams("; ".join(problems))
        lo, hi = self.rho.nodes[0], self.rho.nodes[-1]
        if lo > -self.tau + 1e-12 * self.tau or hi < -1e-12 * self.tau:
            raise BadParams("rho table must cover [-tau, 0]")

    @property
    def h(self):
        return self.tau / self.n_grid

    @property
    def nodes(self):
        """History nodes s_0 = -tau, ..., s_{N-1} = -h (s = 0 belongs to x)."""
        return -self.tau + self.h * np.arange(self.n_grid)

    def with_grid(self, n_grid):
        return DelayParams(self.lam, self.b, self.tau, self.rho, n_grid, self.scheme)

    def with_scheme(self, scheme):
        return DelayParams(self.lam, self.b, self.tau, self.rho, self.n_grid, scheme)


@dataclass(frozen=True)
class ParabolicParams:
    alpha: float
    beta: float
    rho: SampledFunction
    n_modes: int = 16
    n_quad: int = 0

    def __post_init__(self):
        problems = []
        if not self.alpha > 0:
            problems.append("alpha must be > 0")
        if not self.beta > 0:
            problems.append("beta must be > 0")
        if int(self.n_modes) != self.n_modes or self.n_modes < 4:
            problems.append("n_modes must be an integer >= 4")
        if problems:
            raise BadParams("; ".join(problems))
        if self.rho.nodes[0] > 1e-12 or self.rho.nodes[-1] < 1.0 - 1e-12:
            raise BadParams("rho table must cover [0, 1]")

    @property
    def quad_intervals(self):
        # even interval count for composite Simpson; fine enough to resolve the
        # boundary layer of the resolvent kernel up to |p| ~ 1e3
        n = self.n_quad or max(2048, 16 * self.n_modes)
        return n + (n % 2)

    @property
    def eigenvalues(self):
        k = np.arange(self.n_modes)
        return -self.alpha * np.pi ** 2 * k ** 2 - self.beta

    def with_modes(self, n_modes):
        return ParabolicParams(self.alpha, self.beta, self.rho, n_modes, self.n_quad)


def simpson_weights(n_intervals, a=0.0, b=1.0):
    if n_intervals % 2:
        raise BadParams("composite Simpson needs an even number of intervals")
    h = (b - a) / n_intervals
    w = np.ones(n_intervals + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return np.linspace(a, b, n_intervals + 1), w * h / 3.0


def trapezoid_weights(n_intervals, a, b):
    h = (b - a) / n_intervals
    w = np.full(n_intervals + 1, h)
    w[0] = w[-1] = 0.5 * h
    return np.linspace(a, b, n_intervals + 1), w


@dataclass(frozen=True)
class LinearModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    M: np.ndarray
    kind: str
    params: object = field(repr=False)

    @property
    def n(self):
        return self.A.shape[0]

    def shifted(self, nu):
        return self.A + nu * np.eye(self.n)


def delay_quadrature(p):
    """Trapezoid weights of ``int rho(s) phi(s) ds`` on nodes s_0..s_{N-1}, 0."""
    nodes, w = trapezoid_weights(p.n_grid, -p.tau, 0.0)
    return w * p.rho(nodes)


def build_delay_model(p):
    """One-sided (upwind) transport truncation of the delay model.

    Row 0 is ``-lam x``.  History rows approximate ``d phi/ds`` from the right,
    with the value at s = 0 taken from ``x``:

    * ``upwind``: ``(phi_{i+1} - phi_i)/h`` (first order);
    * ``upwind2``: ``(-3 phi_i + 4 phi_{i+1} - phi_{i+2})/(2h)``, first order in
      the last row only (second order overall).

    Both keep A block upper triangular, so its spectrum is ``{-lam}`` plus the
    negative diagonal of the transport block.  ``M = diag(1, h/2, h, ..., h)``.
    """
    if not isinstance(p, DelayParams):
        raise BadParams("expected DelayParams")
    N, h = p.n_grid, p.h
    n = N + 1
    A = np.zeros((n, n))
    A[0, 0] = -p.lam

    def col(j):
        # history node j (j == N is s = 0, i.e. x)
        return 0 if j == N else j + 1

    for i in range(N):
        r = i + 1
        if p.scheme == "upwind" or i == N - 1:
            A[r, r] -= 1.0 / h
            A[r, col(i + 1)] += 1.0 / h
        else:
            A[r, r] -= 1.5 / h
            A[r, col(i + 1)] += 2.0 / h
            A[r, col(i + 2)] -= 0.5 / h
    B = np.zeros(n)
    B[0] = float(p.b)
    q = delay_quadrature(p)
    C = np.empty(n)
    C[0] = q[-1]
    C[1:] = q[:-1]
    m = np.full(n, h)
    m[0], m[1] = 1.0, 0.5 * h
    return LinearModel(A=A, B=B, C=C, M=as_mass(np.diag(m)), kind="delay", params=p)


def parabolic_mass(n_modes):
    m = np.full(n_modes, 0.5)
    m[0] = 1.0
    return m


def parabolic_load(p):
    """Boundary load ``(B xi, cos(k pi .)) = alpha xi cos(k pi)`` (heating-feedback sign)."""
    k = np.arange(p.n_modes)
    return p.alpha * np.cos(k * np.pi)


def build_parabolic_model(p):
    """Cosine-Galerkin truncation; A is exactly diagonal in this basis.

    ``B`` holds coordinates ``M^{-1} load`` so that ``u' = A u + B xi`` is the
    Galerkin system; ``C_k = int_0^1 rho cos(k pi x) dx`` by composite Simpson.
    """
    if not isinstance(p, ParabolicParams):
        raise BadParams("expected ParabolicParams")
    m = parabolic_mass(p.n_modes)
    A = np.diag(p.eigenvalues.astype(float))
    B = parabolic_load(p) / m
    x, w = simpson_weights(p.quad_intervals)
    k = np.arange(p.n_modes)
    C = (w * p.rho(x)) @ np.cos(np.pi * np.outer(x, k))
    return LinearModel(A=A, B=B, C=C, M=as_mass(np.diag(m)), kind="parabolic", params=p)


def parabolic_modes_of(p, u_of_x, n_intervals=None):
    """Galerkin coordinates ``(u, phi_k)/(phi_k, phi_k)`` of a function on [0, 1]."""
    x, w = simpson_weights(n_intervals or p.quad_intervals)
    k = np.arange(p.n_modes)
    return ((w * u_of_x(x)) @ np.cos(np.pi * np.outer(x, k))) / parabolic_mass(p.n_modes)
