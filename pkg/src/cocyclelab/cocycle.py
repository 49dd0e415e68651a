"""Time integration of the forced nonlinear delay and parabolic problems.

Every flow maps ``(t0, u0, horizon)`` to model coordinates at ``t0 + horizon`` and
is sigma-periodic in ``t0``: nonlinearity and forcing are periodic signals.
States may carry a leading batch dimension; the trajectories in a batch evolve
independently.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .discretization import (LinearModel, build_delay_model, build_parabolic_model,
                             parabolic_modes_of, trapezoid_weights)
from .errors import BadParams, GridMismatch, NonFiniteState, StepTooLarge

LOGISTIC_CAP = 700.0
STEP_TOL = 1e-3


def _grid_count(horizon, dt, what="horizon"):
    k = horizon / dt
    kr = int(round(k))
    if kr < 0 or abs(k - kr) > 1e-9 * max(1.0, k):
        raise GridMismatch(f"{what} {horizon} is not a multiple of the step {dt}")
    return kr


# ---------------------------------------------------------------------------
# periodic signals, nonlinearities, forcing


@dataclass(frozen=True)
class PeriodicSignal:
    """``mean + sum a_k cos(2 pi k t/sigma) + sum b_k sin(2 pi k t/sigma) + table(t mod sigma)``.

    ``table`` is an optional pair ``(nodes, values)`` on ``[0, sigma]`` with equal
    end values, interpolated linearly.
    """
    sigma: float
    mean: float = 0.0
    cos: tuple = ()
    sin: tuple = ()
    table: tuple = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise BadParams("period sigma must be > 0")
        object.__setattr__(self, "cos", tuple(float(c) for c in self.cos))
        object.__setattr__(self, "sin", tuple(float(c) for c in self.sin))
        if self.table is not None:
            nodes, values = (np.asarray(a, dtype=float) for a in self.table)
            if nodes.shape != values.shape or nodes.size < 2:
                raise BadParams("signal table needs matching nodes and values")
            if abs(nodes[0]) > 1e-12 * self.sigma or abs(nodes[-1] - self.sigma) > 1e-12 * self.sigma:
                raise BadParams("signal table must span [0, sigma]")
            if abs(values[0] - values[-1]) > 1e-12 * max(1.0, np.abs(values).max()):
                raise BadParams("signal table is not periodic (end values differ)")
            object.__setattr__(self, "table", (nodes, values))

    @classmethod
    def constant(cls, c, sigma=1.0):
        return cls(sigma=sigma, mean=float(c))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        w = 2.0 * np.pi / self.sigma
        out = np.full(t.shape, self.mean)
        for k, a in enumerate(self.cos, start=1):
            out = out + a * np.cos(k * w * t)
        for k, b in enumerate(self.sin, start=1):
            out = out + b * np.sin(k * w * t)
        if self.table is not None:
            out = out + np.interp(np.mod(t, self.sigma), *self.table)
        return out if out.ndim else float(out)

    def is_zero(self):
        return self.mean == 0 and not any(self.cos) and not any(self.sin) and (
            self.table is None or not np.any(self.table[1]))

    def sample(self, n=1024):
        t = np.linspace(0.0, self.sigma, n + 1)
        return t, np.asarray(self(t)) * np.ones_like(t)

    def to_dict(self):
        d = {"sigma": self.sigma, "mean": self.mean, "cos": list(self.cos), "sin": list(self.sin)}
        if self.table is not None:
            d["table"] = [self.table[0].tolist(), self.table[1].tolist()]
        return d


NONLINEARITY_KINDS = ("sigmoid", "saturating-linear", "linear", "custom-table")


@dataclass(frozen=True)
class Nonlinearity:
    """Scalar nonlinearity ``f(t, v)`` with slope in ``[0, mu0]``.

    kinds and their ``params``:

    * ``sigmoid``: ``b1``, ``b2`` (PeriodicSignal); ``f = b1(t) logistic(v) + b2(t)``, ``b1 > 0``;
    * ``saturating-linear``: ``slope``, ``cap``; ``f = slope * clip(v, -cap, cap)``;
    * ``linear``: ``slope``; ``f = slope * v`` (``slope = 0`` gives f = 0);
    * ``custom-table``: ``nodes``, ``values`` nondecreasing, constant beyond the ends.
    """
    kind: str
    params: dict
    mu0: float = None

    def __post_init__(self):
        if self.kind not in NONLINEARITY_KINDS:
            raise BadParams(f"nonlinearity kind must be one of {NONLINEARITY_KINDS}")
        p = dict(self.params)
        if self.kind == "sigmoid":
            for key in ("b1", "b2"):
                if not isinstance(p.get(key), PeriodicSignal):
                    p[key] = PeriodicSignal.constant(float(p.get(key, 0.0)))
            _, b1 = p["b1"].sample()
            if np.any(b1 <= 0):
                raise BadParams("sigmoid coefficient b1(t) must be positive")
            bound = float(b1.max() / 4.0)
        elif self.kind in ("saturating-linear", "linear"):
            slope = float(p.get("slope", 0.0))
            if slope < 0:
                raise BadParams("slope must be >= 0")
            if self.kind == "saturating-linear" and not float(p.get("cap", 0)) > 0:
                raise BadParams("cap must be > 0")
            bound = slope
        else:
            nodes = np.asarray(p["nodes"], dtype=float)
            values = np.asarray(p["values"], dtype=float)
            if nodes.ndim != 1 or nodes.shape != values.shape or np.any(np.diff(nodes) <= 0):
                raise BadParams("custom table needs increasing nodes and matching values")
            slopes = np.diff(values) / np.diff(nodes)
            if np.any(slopes < 0):
                raise BadParams("custom table must be nondecreasing")
            p["nodes"], p["values"] = nodes, values
            bound = float(slopes.max()) if slopes.size else 0.0
        object.__setattr__(self, "params", p)
        mu0 = bound if self.mu0 is None else float(self.mu0)
        if mu0 < bound - 1e-12:
            raise BadParams(f"declared mu0 = {mu0} is below the slope bound {bound}")
        object.__setattr__(self, "mu0", mu0)

    @classmethod
    def sigmoid(cls, b1, b2=0.0, mu0=None):
        return cls("sigmoid", {"b1": b1, "b2": b2}, mu0)

    @classmethod
    def linear(cls, slope=0.0):
        return cls("linear", {"slope": slope})

    @classmethod
    def zero(cls):
        return cls.linear(0.0)

    def is_zero(self):
        return self.kind == "linear" and self.params["slope"] == 0.0

    def __call__(self, t, v):
        v = np.asarray(v, dtype=float)
        p = self.params
        if self.kind == "sigmoid":
            return p["b1"](t) * expit(np.clip(v, -LOGISTIC_CAP, LOGISTIC_CAP)) + p["b2"](t)
        if self.kind == "linear":
            return p["slope"] * v
        if self.kind == "saturating-linear":
            return p["slope"] * np.clip(v, -p["cap"], p["cap"])
        return np.interp(v, p["nodes"], p["values"])

    def tabulate(self, times):
        """Callable ``(i, v) -> f(times[i], v)`` with the time dependence precomputed."""
        times = np.asarray(times, dtype=float)
        if self.kind == "sigmoid":
            b1 = np.asarray(self.params["b1"](times)) * np.ones_like(times)
            b2 = np.asarray(self.params["b2"](times)) * np.ones_like(times)
            return lambda i, v: b1[i] * expit(np.clip(v, -LOGISTIC_CAP, LOGISTIC_CAP)) + b2[i]
        return lambda i, v: self(times[i], v)

    def slope_range(self, sigma=None, v_max=50.0, n_t=64, n_v=2001):
        """Min and max of the central-difference slope over a ``(t, v)`` sample grid."""
        sigma = sigma or self._sigma()
        t = np.linspace(0.0, sigma, n_t, endpoint=False)
        v = np.linspace(-v_max, v_max, n_v)
        h = 1e-5
        lo, hi = np.inf, -np.inf
        for tk in t:
            d = (self(tk, v + h) - self(tk, v - h)) / (2 * h)
            lo, hi = min(lo, d.min()), max(hi, d.max())
        return float(lo), float(hi)

    def _sigma(self):
        if self.kind == "sigmoid":
            return self.params["b1"].sigma
        return 1.0

    def to_dict(self):
        p = {}
        for k, val in self.params.items():
            if isinstance(val, PeriodicSignal):
                p[k] = val.to_dict()
            elif isinstance(val, np.ndarray):
                p[k] = val.tolist()
            else:
                p[k] = val
        return {"kind": self.kind, "mu0": self.mu0, "params": p}


def evaluate_nonlinearity(f, t, v):
    return f(t, v)


@dataclass(frozen=True)
class Forcing:
    """sigma-periodic forcing ``g(t)`` (delay) or ``g(t) * profile(x)`` (parabolic)."""
    signal: PeriodicSignal
    profile: object = None

    @property
    def sigma(self):
        return self.signal.sigma

    @classmethod
    def zero(cls, sigma=1.0):
        return cls(PeriodicSignal(sigma))

    @classmethod
    def harmonic(cls, amplitude, sigma, profile=None):
        return cls(PeriodicSignal(sigma, cos=(amplitude,)), profile)

    def is_zero(self):
        return self.signal.is_zero()


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class TrajectoryGrid:
    """States in model coordinates at ``t0 + k dt``, shape ``(K+1, n)``."""
    t0: float
    dt: float
    states: np.ndarray
    model: LinearModel = field(repr=False)
    sigma: float = None

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        if self.states.shape[0] < 1:
            raise GridMismatch("trajectory has no states")
        if not self.dt > 0:
            raise GridMismatch("dt must be > 0")
        if self.sigma is not None:
            _grid_count(self.sigma, self.dt, "period")

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.states.shape[0])

    @property
    def t_end(self):
        return self.t0 + self.dt * (self.states.shape[0] - 1)

    def __len__(self):
        return self.states.shape[0]

    def index_of(self, t):
        return _grid_count(t - self.t0, self.dt, "time offset")

    def at(self, t):
        return self.states[self.index_of(t)]

    def period_samples(self, sigma=None):
        """States at ``t0 + k sigma``."""
        sigma = sigma or self.sigma
        step = _grid_count(sigma, self.dt, "period")
        return self.states[::step]

    def window(self, t_start, t_stop):
        i, j = self.index_of(t_start), self.index_of(t_stop)
        return TrajectoryGrid(t_start, self.dt, self.states[i:j + 1], self.model, self.sigma)

    def header(self):
        p = self.model.params
        desc = {k: getattr(p, k) for k in ("lam", "b", "tau", "n_grid", "scheme", "alpha", "beta", "n_modes")
                if hasattr(p, k)}
        return f"kind={self.model.kind} n={self.model.n} t0={self.t0!r} dt={self.dt!r} params={desc}"

    def to_table(self, path):
        """Tabular text: one line per step, columns ``t, u_0, ..., u_{n-1}``."""
        cols = ",".join(["t"] + [f"u{i}" for i in range(self.states.shape[1])])
        data = np.column_stack([self.times, self.states])
        np.savetxt(path, data, delimiter=",", fmt="%.12e", header=self.header() + "\n" + cols)


# ---------------------------------------------------------------------------
# flows


class _Flow:
    """Shared plumbing: step bookkeeping, batching and trajectory assembly."""

    model = None
    dt = None
    sigma = None

    def _steps(self, horizon):
        return _grid_count(horizon, self.dt)

    def advance(self, t0, U0, horizon):
        """State(s) at ``t0 + horizon``; ``U0`` has shape ``(n,)`` or ``(batch, n)``."""
        U0 = np.asarray(U0, dtype=float)
        single = U0.ndim == 1
        out, _ = self._run(float(t0), np.atleast_2d(U0).copy(), self._steps(horizon), 0)
        return out[0] if single else out

    def trajectory(self, t0, u0, horizon, save_every=1):
        """TrajectoryGrid sampled every ``save_every`` internal steps."""
        u0 = np.asarray(u0, dtype=float)
        if u0.ndim != 1:
            raise GridMismatch("trajectory takes a single state; use advance for batches")
        n_steps = self._steps(horizon)
        if n_steps % save_every:
            raise GridMismatch("save_every must divide the number of steps")
        _, saved = self._run(float(t0), u0[None, :].copy(), n_steps, save_every)
        return TrajectoryGrid(t0=float(t0), dt=self.dt * save_every, states=saved[:, 0, :],
                              model=self.model, sigma=self._sigma_if_aligned(save_every))

    def trajectories(self, t0, U0, horizon, save_every=1):
        """One TrajectoryGrid per row of ``U0``, integrated as a batch."""
        U0 = np.atleast_2d(np.asarray(U0, dtype=float))
        n_steps = self._steps(horizon)
        if n_steps % save_every:
            raise GridMismatch("save_every must divide the number of steps")
        _, saved = self._run(float(t0), U0.copy(), n_steps, save_every)
        sigma = self._sigma_if_aligned(save_every)
        return [TrajectoryGrid(t0=float(t0), dt=self.dt * save_every, states=saved[:, i, :],
                               model=self.model, sigma=sigma) for i in range(U0.shape[0])]

    def _sigma_if_aligned(self, save_every):
        if self.sigma is None:
            return None
        try:
            _grid_count(self.sigma, self.dt * save_every)
        except GridMismatch:
            return None
        return self.sigma

    def _check(self, U):
        if not np.all(np.isfinite(U)):
            raise NonFiniteState("state became non-finite")


class DelayFlow(_Flow):
    """Method of steps for ``x' = -lam x + b f(t, v) + g(t)``, ``v = int rho(s) x(t+s) ds``.

    The history is stored on a uniform grid of spacing ``dt = h/m`` (``h`` the model
    grid spacing), so shifting the history by one step is exact.  Each step is the
    classical four-stage Runge-Kutta rule; ``v`` at a stage time is the trapezoid
    sum over the shifted nodes, using linear interpolation of the stored history
    for half steps and the stage value itself at ``s = 0``.
    """

    def __init__(self, params, f, g, substeps=1, step_tol=STEP_TOL):
        if g.profile is not None:
            raise BadParams("delay forcing is scalar (no spatial profile)")
        self.params = params
        self.model = build_delay_model(params)
        self.f, self.g = f, g
        self.sigma = g.sigma
        self.m = int(substeps)
        if self.m < 1:
            raise BadParams("substeps must be >= 1")
        self.dt = params.h / self.m
        if self.dt > params.tau / 8:
            raise StepTooLarge("dt must be <= tau/8")
        self.nf = params.n_grid * self.m
        nodes, w = trapezoid_weights(self.nf, -params.tau, 0.0)
        self.fine_nodes = nodes
        self.wr = w * params.rho(nodes)
        self.step_tol = step_tol
        self._lin = f.is_zero()

    def fine_history(self, U):
        """Model coordinates ``(x, phi_0..phi_{N-1})`` to the fine buffer at ``t-tau .. t``."""
        U = np.atleast_2d(U)
        coarse = np.concatenate([self.params.nodes, [0.0]])
        vals = np.concatenate([U[:, 1:], U[:, :1]], axis=1)
        if self.m == 1:
            return vals
        return np.stack([np.interp(self.fine_nodes, coarse, row) for row in vals])

    def coordinates(self, window):
        """Fine buffer (oldest first, newest = x) to model coordinates."""
        return np.concatenate([window[:, -1:], window[:, :-1:self.m]], axis=1)

    def _run(self, t0, U, n_steps, save_every):
        nf, dt, wr = self.nf, self.dt, self.wr
        chunk = max(4 * nf, 1024)
        buf = np.empty((U.shape[0], nf + 1 + chunk))
        buf[:, :nf + 1] = self.fine_history(U)
        pos = 0  # buf[:, pos:pos+nf+1] is the current window
        saved = []
        if save_every:
            saved.append(self.coordinates(buf[:, pos:pos + nf + 1]))
        wi, wl = wr[:-1], wr[-1]
        lam, b = self.params.lam, float(self.params.b)
        # signals at half steps: index 2k is t0 + k dt
        th = t0 + 0.5 * dt * np.arange(2 * n_steps + 1)
        gv = np.asarray(self.g.signal(th)) * np.ones_like(th)
        fv = None if self._lin else self.f.tabulate(th)

        def rhs(i, x, v):
            out = gv[i] - lam * x
            return out if fv is None else out + b * fv(i, v)

        for k in range(n_steps):
            if pos + nf + 1 >= buf.shape[1]:
                buf[:, :nf + 1] = buf[:, pos:pos + nf + 1]
                pos = 0
            W = buf[:, pos:pos + nf + 1]
            x = W[:, -1]
            base0 = W[:, :-1] @ wi
            base1 = W[:, 1:] @ wi
            baseh = 0.5 * (base0 + base1)
            k1 = rhs(2 * k, x, base0 + wl * x)
            x2 = x + 0.5 * dt * k1
            k2 = rhs(2 * k + 1, x2, baseh + wl * x2)
            x3 = x + 0.5 * dt * k2
            k3 = rhs(2 * k + 1, x3, baseh + wl * x3)
            x4 = x + dt * k3
            k4 = rhs(2 * k + 2, x4, base1 + wl * x4)
            x_new = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            # embedded comparison with the second-order combination of k1 and k4
            err = np.abs(x_new - (x + 0.5 * dt * (k1 + k4)))
            if np.any(err > self.step_tol * (1.0 + np.abs(x))):
                raise StepTooLarge(f"step error indicator {err.max():.2e} at t = {t0 + k * dt:.6g}")
            if not np.all(np.isfinite(x_new)):
                raise NonFiniteState(f"non-finite state at t = {t0 + (k + 1) * dt:.6g}")
            buf[:, pos + nf + 1] = x_new
            pos += 1
            if save_every and (k + 1) % save_every == 0:
                saved.append(self.coordinates(buf[:, pos:pos + nf + 1]))
        end = self.coordinates(buf[:, pos:pos + nf + 1])
        return end, (np.stack(saved) if save_every else None)


def _phi1(z):
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-5
    zs = np.where(small, 1.0, z)
    return np.where(small, 1.0 + z / 2.0 + z * z / 6.0, np.expm1(zs) / zs)


def _phi2(z):
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    return np.where(small, 0.5 + z / 6.0 + z * z / 24.0, (np.expm1(zs) - zs) / zs ** 2)


class ParabolicFlow(_Flow):
    """Exponential integrator (ETD2RK) for the cosine-Galerkin parabolic system.

    ``u' = L u + N(t, u)`` with ``L`` diagonal and ``N = B f(t, C u) + g(t) G``.  The
    linear part is advanced exactly; the nonlinear boundary term and the forcing
    are explicit with one corrector pass.
    """

    def __init__(self, params, f, g, dt, check_dt=True):
        self.params = params
        self.model = build_parabolic_model(params)
        self.f, self.g = f, g
        self.sigma = g.sigma
        self.dt = float(dt)
        if not self.dt > 0:
            raise BadParams("dt must be > 0")
        M = np.diag(self.model.M)
        lip = f.mu0 * np.sqrt(np.sum(self.model.C ** 2 / M)) * np.sqrt(np.sum(M * self.model.B ** 2))
        self.dt_max = np.inf if lip == 0 else 0.1 / lip
        if check_dt and self.dt > self.dt_max * (1 + 1e-12):
            raise StepTooLarge(f"dt = {self.dt} exceeds 0.1/(mu0 |C| |B|) = {self.dt_max:.3g}")
        lam = params.eigenvalues
        z = lam * self.dt
        self.E = np.exp(z)
        self.P1 = self.dt * _phi1(z)
        self.P2 = self.dt * _phi2(z)
        if g.profile is None:
            self.G = np.zeros(params.n_modes)
            if not g.is_zero():
                self.G[0] = 1.0
        else:
            self.G = parabolic_modes_of(params, g.profile)
        self._lin = f.is_zero()

    def _N(self, t, U):
        out = np.multiply.outer(np.ones(U.shape[0]), self.g.signal(t) * self.G)
        if not self._lin:
            out = out + np.multiply.outer(self.f(t, U @ self.model.C), self.model.B)
        return out

    def _run(self, t0, U, n_steps, save_every):
        saved = [U.copy()] if save_every else []
        dt = self.dt
        for k in range(n_steps):
            t = t0 + k * dt
            N0 = self._N(t, U)
            A = self.E * U + self.P1 * N0
            U = A + self.P2 * (self._N(t + dt, A) - N0)
            self._check(U)
            if save_every and (k + 1) % save_every == 0:
                saved.append(U.copy())
        return U, (np.stack(saved) if save_every else None)


class LinearFlow(_Flow):
    """Classical RK4 for ``u' = A u + B f(t, C u) + g(t) G`` on an arbitrary model."""

    def __init__(self, model, f, g, dt, G=None):
        self.model = model
        self.f, self.g = f, g
        self.sigma = g.sigma
        self.dt = float(dt)
        self.G = np.zeros(model.n) if G is None else np.asarray(G, dtype=float)

    def _F(self, t, U):
        out = U @ self.model.A.T + np.multiply.outer(np.ones(U.shape[0]), self.g.signal(t) * self.G)
        if not self.f.is_zero():
            out = out + np.multiply.outer(self.f(t, U @ self.model.C), self.model.B)
        return out

    def _run(self, t0, U, n_steps, save_every):
        saved = [U.copy()] if save_every else []
        dt = self.dt
        for k in range(n_steps):
            t = t0 + k * dt
            k1 = self._F(t, U)
            k2 = self._F(t + dt / 2, U + dt / 2 * k1)
            k3 = self._F(t + dt / 2, U + dt / 2 * k2)
            k4 = self._F(t + dt, U + dt * k3)
            U = U + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            self._check(U)
            if save_every and (k + 1) % save_every == 0:
                saved.append(U.copy())
        return U, (np.stack(saved) if save_every else None)


def integrate_delay(params, f, g, t0, u0, horizon, dt=None, save_every=None):
    """Method-of-steps trajectory; ``dt`` must be ``h/m`` for an integer ``m``.

    States are saved on the model grid spacing ``h`` unless ``save_every`` says otherwise.
    """
    m = 1 if dt is None else params.h / dt
    if abs(m - round(m)) > 1e-9 * m or round(m) < 1:
        raise GridMismatch(f"dt must equal h/m for integer m (h = {params.h})")
    m = int(round(m))
    flow = DelayFlow(params, f, g, substeps=m)
    return flow.trajectory(t0, u0, horizon, save_every or m)


def integrate_parabolic(params, f, g, t0, u0, horizon, dt, save_every=1):
    flow = ParabolicFlow(params, f, g, dt)
    return flow.trajectory(t0, u0, horizon, save_every)


def delay_history_state(params, x_of_s):
    """Model coordinates of a history function on ``[-tau, 0]``."""
    return np.concatenate([[float(x_of_s(0.0))], np.asarray(x_of_s(params.nodes), dtype=float)])
