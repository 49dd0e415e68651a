"""Numerical checks of the reduction principle for one-dimensional negative space.

Squeezing of the quadratic form along trajectory pairs, the map
``G(zeta) = Pi psi^{t2-t1}(t1, v + zeta e)`` and its inversion, fibre
reconstruction by backward shooting, periodic-orbit detection through the
Poincare samples, stability probes and the attraction of transients to the fibre.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import (BracketFailure, GridMismatch, NoNegativeSpace, NotContracting,
                     NotConverged)
from .operator_core import project_negative, quadratic_form

TOL_FIBRE = 1e-6
TOL_PERIODIC_REL = 1e-7
MAX_DOUBLINGS = 60


def _mnorm(M, U):
    U = np.asarray(U, dtype=float)
    return np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", U, M, U), 0.0))


# ---------------------------------------------------------------------------
# squeezing


@dataclass(frozen=True)
class SqueezingReport:
    pairs_checked: int
    worst_violation: float
    nu: float
    delta: float
    tol: float
    scale: float
    worst_pair: tuple = None

    @property
    def relative_violation(self):
        return self.worst_violation / self.scale if self.scale > 0 else 0.0

    @property
    def passed(self):
        return bool(np.isfinite(self.worst_violation) and self.worst_violation <= self.tol)

    def summary(self):
        return {"pairs_checked": self.pairs_checked, "worst_violation": self.worst_violation,
                "tol": self.tol, "scale": self.scale, "nu": self.nu, "delta": self.delta,
                "passed": self.passed}


def _same_grid(u, v):
    if (u.states.shape != v.states.shape or abs(u.t0 - v.t0) > 1e-12 * max(1.0, abs(u.t0))
            or abs(u.dt - v.dt) > 1e-12 * u.dt):
        raise GridMismatch("trajectories do not share t0, dt and length")
    if u.model.n != v.model.n:
        raise GridMismatch("trajectories come from different models")


def verify_squeezing(u, v, cert, M, samples=200, seed=0, rel_tol=1e-6):
    """Check ``e^{2 nu r} V(w(r)) - e^{2 nu l} V(w(l)) <= -delta int_l^r e^{2 nu s} |w|^2 ds``.

    ``w = u - v``.  Both sides are multiplied by ``e^{-2 nu r}`` before comparing.
    Random ``l < r`` grid pairs are drawn with an even number of steps between them,
    so the trapezoid integral has a Richardson error estimate ``|T_h - T_2h|/3``.
    ``tol = rel_tol * scale + max error estimate`` with ``scale = max |w|_M^2``.
    """
    _same_grid(u, v)
    M = np.asarray(M, dtype=float)
    W = u.states - v.states
    Vw = quadratic_form(cert, M, W)
    n2 = _mnorm(M, W) ** 2
    scale = float(n2.max())
    K = W.shape[0]
    if scale == 0.0 or K < 3:
        return SqueezingReport(0 if K < 3 else samples, 0.0, cert.nu, cert.delta,
                               rel_tol * scale, scale)
    rng = np.random.default_rng(seed)
    dt, nu, delta = u.dt, cert.nu, cert.delta
    worst, worst_pair, quad_err = -np.inf, None, 0.0
    for _ in range(samples):
        half = int(rng.integers(1, (K - 1) // 2 + 1))
        left = int(rng.integers(0, K - 2 * half))
        right = left + 2 * half
        s = dt * np.arange(2 * half + 1)
        weight = np.exp(-2.0 * nu * (s[-1] - s)) * n2[left:right + 1]
        Th = dt * (weight.sum() - 0.5 * (weight[0] + weight[-1]))
        w2 = weight[::2]
        T2h = 2 * dt * (w2.sum() - 0.5 * (w2[0] + w2[-1]))
        lhs = Vw[right] - np.exp(-2.0 * nu * s[-1]) * Vw[left]
        viol = lhs + delta * Th
        quad_err = max(quad_err, delta * abs(Th - T2h) / 3.0)
        if viol > worst:
            worst, worst_pair = float(viol), (left, right)
    return SqueezingReport(samples, worst, nu, delta, rel_tol * scale + quad_err, scale,
                           worst_pair)


# ---------------------------------------------------------------------------
# pipeline: flow + certificate


class ReductionPipeline:
    """A flow together with a certificate whose negative space is one-dimensional."""

    def __init__(self, flow, cert, tol_fibre=TOL_FIBRE):
        if cert.inertia.n_neg != 1:
            raise NoNegativeSpace(f"fibre inversion needs exactly one negative direction, got {cert.inertia.n_neg}")
        self.flow, self.cert = flow, cert
        self.M = flow.model.M
        self.e = cert.neg_basis[:, 0]
        self.tol_fibre = tol_fibre

    @property
    def sigma(self):
        return self.flow.sigma

    def pi(self, U):
        return project_negative(self.cert, self.M, U)[..., 0]

    def norm(self, U):
        return _mnorm(self.M, U)


def g_map(zeta, t1, t2, v_anchor, pipeline):
    """``Pi`` of the state at ``t2`` started at ``t1`` from ``v_anchor + zeta e``."""
    if not t2 > t1:
        raise GridMismatch("g_map needs t1 < t2")
    z = np.asarray(zeta, dtype=float)
    U0 = np.asarray(v_anchor)[None, :] + np.multiply.outer(np.atleast_1d(z), pipeline.e)
    out = pipeline.pi(pipeline.flow.advance(t1, U0, t2 - t1))
    return out.reshape(z.shape) if z.ndim else float(out[0])


def _endpoints(zeta, t1, t2, v_anchor, pipeline):
    U0 = np.asarray(v_anchor)[None, :] + np.multiply.outer(zeta, pipeline.e)
    U = pipeline.flow.advance(t1, U0, t2 - t1)
    return U, pipeline.pi(U)


def invert_g_map(target, t1, t2, v_anchor, pipeline, bracket=None, tol=None, max_iter=200,
                 return_states=False):
    """Solve ``g_map(zeta) = target`` for one target or an array of targets.

    The bracket (default ``target - Pi v_anchor -/+ 1``) is widened by doubling up
    to 60 times until it straddles the target; then a bisection-safeguarded
    Illinois iteration runs, vectorized over targets.  ``g_map`` is required to be
    increasing (checked at the bracket ends); a decreasing probe raises
    BracketFailure with ``monotone=False``.
    """
    tol = pipeline.tol_fibre if tol is None else tol
    T = np.atleast_1d(np.asarray(target, dtype=float))
    k = T.size
    if bracket is None:
        c = T - pipeline.pi(np.asarray(v_anchor))
        a, b = c - 1.0, c + 1.0
    else:
        a = np.full(k, float(bracket[0]))
        b = np.full(k, float(bracket[1]))
    _, ga = _endpoints(a, t1, t2, v_anchor, pipeline)
    _, gb = _endpoints(b, t1, t2, v_anchor, pipeline)
    for _ in range(MAX_DOUBLINGS):
        if np.any(gb < ga):
            raise BracketFailure("g_map decreasing on the bracket (monotonicity breakdown)",
                                 monotone=False)
        lo_bad, hi_bad = ga > T, gb < T
        if not (lo_bad.any() or hi_bad.any()):
            break
        width = b - a
        if lo_bad.any():
            a = np.where(lo_bad, a - width, a)
            _, g_new = _endpoints(a[lo_bad], t1, t2, v_anchor, pipeline)
            ga = ga.copy()
            ga[lo_bad] = g_new
        if hi_bad.any():
            b = np.where(hi_bad, b + width, b)
            _, g_new = _endpoints(b[hi_bad], t1, t2, v_anchor, pipeline)
            gb = gb.copy()
            gb[hi_bad] = g_new
    else:
        raise BracketFailure(f"no straddling bracket after {MAX_DOUBLINGS} doublings "
                             "(target unreachable at this horizon)", monotone=True)
    fa, fb = ga - T, gb - T
    z = 0.5 * (a + b)
    U = None
    resid = np.full(k, np.inf)
    side = np.zeros(k, dtype=int)
    done = (np.abs(fa) <= tol) | (np.abs(fb) <= tol)
    z = np.where(np.abs(fa) <= tol, a, np.where(np.abs(fb) <= tol, b, z))
    for it in range(max_iter):
        cand = np.where(fb != fa, (a * fb - b * fa) / np.where(fb != fa, fb - fa, 1.0), 0.5 * (a + b))
        bad = ~np.isfinite(cand) | (cand <= np.minimum(a, b)) | (cand >= np.maximum(a, b))
        if it % 4 == 3:
            bad[:] = True  # periodic bisection keeps the bracket shrinking geometrically
        z = np.where(done, z, np.where(bad, 0.5 * (a + b), cand))
        U, gz = _endpoints(z, t1, t2, v_anchor, pipeline)
        fz = gz - T
        resid = np.abs(fz)
        done = resid <= tol
        tiny = np.abs(b - a) <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(z))
        if np.all(done | tiny):
            break
        left = fz < 0
        # Illinois: halve the retained endpoint's value when the same side is kept twice
        fb = np.where(left & (side == -1), 0.5 * fb, fb)
        fa = np.where(~left & (side == 1), 0.5 * fa, fa)
        a = np.where(left, z, a)
        fa = np.where(left, fz, fa)
        b = np.where(left, b, z)
        fb = np.where(left, fb, fz)
        side = np.where(left, -1, 1)
    out_z = z if np.ndim(target) else float(z[0])
    if return_states:
        return out_z, U, resid
    return out_z


# ---------------------------------------------------------------------------
# periodic orbits


@dataclass
class PeriodicOrbit:
    t0: float
    period: float
    dt: float
    states_over_period: np.ndarray = field(repr=False)
    stability: str = "undetermined"
    pi_coordinate: float = float("nan")
    closure: float = float("nan")

    def state_at(self, t):
        n = self.states_over_period.shape[0] - 1
        k = (t - self.t0) / self.dt
        kr = int(round(k))
        if abs(k - kr) > 1e-6:
            raise GridMismatch(f"time {t} is not on the orbit grid")
        return self.states_over_period[kr % n]

    def summary(self):
        return {"t0": self.t0, "period": self.period, "stability": self.stability,
                "pi_coordinate": self.pi_coordinate, "closure": self.closure}


def _eventually_monotone(seq, noise):
    """True iff nonzero increments beyond ``noise`` share one sign."""
    d = np.diff(seq)
    d = d[np.abs(d) > noise]
    return bool(np.all(d > 0) or np.all(d < 0))


def _nonincreasing(seq, noise):
    return bool(np.all(np.diff(seq) <= noise))


@dataclass(frozen=True)
class PeriodicDiagnostics:
    d: np.ndarray
    pi: np.ndarray
    transient: int
    pi_monotone: bool
    d_decreasing: bool
    tol: float


def periodic_diagnostics(traj, sigma, cert, tol=None, transient=None):
    samples = traj.period_samples(sigma)
    K = samples.shape[0] - 1
    M = traj.model.M
    scale = max(float(_mnorm(M, samples).max()), 1e-300)
    tol = TOL_PERIODIC_REL * scale if tol is None else tol
    d = _mnorm(M, np.diff(samples, axis=0))
    pi = project_negative(cert, M, samples)[:, 0] if cert.inertia.n_neg else np.zeros(K + 1)
    transient = K // 2 if transient is None else int(transient)
    floor = 1e-2 * tol
    return PeriodicDiagnostics(d=d, pi=pi, transient=transient,
                               pi_monotone=_eventually_monotone(pi[transient:], floor),
                               d_decreasing=_nonincreasing(d[transient:], floor), tol=tol)


def detect_periodic(traj, sigma, cert, tol=None, transient=None, flow=None, max_extra=400):
    """Locate the sigma-periodic limit of a trajectory from its Poincare samples.

    Requires at least 20 periods.  After the transient window (default: first half
    of the samples) the increments ``d_k = |u_{k+1} - u_k|_M`` must be
    nonincreasing and the sequence ``Pi u_k`` monotone, both up to a noise floor
    of ``tol/100``; the last increment must be ``<= tol`` (default ``1e-7`` times
    the state scale).  With ``flow`` given, integration continues until
    ``d_k <= tol/10`` and one period of states is returned.
    """
    n_periods = int(round((traj.t_end - traj.t0) / sigma))
    if n_periods < 20:
        raise NotConverged(f"trajectory spans {n_periods} periods, need >= 20")
    diag = periodic_diagnostics(traj, sigma, cert, tol, transient)
    tol = diag.tol
    if not (diag.d[-1] <= tol and diag.d_decreasing and diag.pi_monotone):
        raise NotConverged(
            f"no periodic limit: last d = {diag.d[-1]:.3e} (tol {tol:.1e}), "
            f"d nonincreasing = {diag.d_decreasing}, Pi monotone = {diag.pi_monotone}",
            d_tail=diag.d[diag.transient:], pi_sequence=diag.pi)
    t_anchor = traj.t0 + n_periods * sigma
    u = traj.states[-1]
    closure = float(diag.d[-1])
    if flow is None:
        step = int(round(sigma / traj.dt))
        states = traj.states[-(step + 1):]
        dt = traj.dt
    else:
        M = traj.model.M
        for _ in range(max_extra):
            if closure <= tol / 10:
                break
            nxt = flow.advance(t_anchor, u, sigma)
            closure = float(_mnorm(M, nxt - u))
            u, t_anchor = nxt, t_anchor + sigma
        else:
            raise NotConverged(f"refinement stalled at d = {closure:.3e}", d_tail=diag.d,
                               pi_sequence=diag.pi)
        tr = flow.trajectory(t_anchor, u, sigma)
        states, dt = tr.states, tr.dt
        closure = float(_mnorm(M, states[-1] - states[0]))
    pi0 = float(project_negative(cert, traj.model.M, states[0])[0]) if cert.inertia.n_neg else float("nan")
    return PeriodicOrbit(t0=float(t_anchor), period=float(sigma), dt=float(dt),
                         states_over_period=np.array(states), pi_coordinate=pi0, closure=closure)


def distinct_orbits(orbits, M, tol):
    """Group orbits whose anchor states (at a common phase) agree to ``tol``."""
    reps = []
    for orb in orbits:
        x = orb.state_at(orbits[0].t0)
        if not any(_mnorm(M, x - r.state_at(orbits[0].t0)) <= tol for r in reps):
            reps.append(orb)
    return reps


def classify_stability(orbit, probes, radius, flow, periods=20, seed=0, e=None):
    """Tag an orbit stable, unstable or undetermined by perturbed runs.

    Probes start at M-distance ``radius`` from the orbit (``+-e`` first when given,
    then random directions).  Stable: all stay within ``10 radius`` and their
    per-period distances end below the start.  Unstable: some probe leaves
    ``100 radius``.  Otherwise undetermined.
    """
    M = flow.model.M
    rng = np.random.default_rng(seed)
    n = M.shape[0]
    dirs = []
    if e is not None:
        dirs += [e, -e]
    while len(dirs) < probes:
        dirs.append(rng.standard_normal(n))
    D = np.array(dirs[:max(probes, len(dirs))])
    D = D / _mnorm(M, D)[:, None]
    base = orbit.state_at(orbit.t0)
    U = base[None, :] + radius * D
    t = orbit.t0
    dist = [radius * np.ones(D.shape[0])]
    escaped = False
    for _ in range(periods):
        U = flow.advance(t, U, orbit.period)
        t += orbit.period
        dk = _mnorm(M, U - orbit.state_at(t))
        dist.append(dk)
        if np.any(dk > 100 * radius):
            escaped = True
            break
    dist = np.array(dist)
    if escaped:
        orbit.stability = "unstable"
    elif np.all(dist <= 10 * radius) and np.all(dist[-1] < dist[0]):
        orbit.stability = "stable"
    else:
        orbit.stability = "undetermined"
    return orbit.stability


# ---------------------------------------------------------------------------
# amenable pairs


@dataclass(frozen=True)
class AmenableCheck:
    max_v: float
    allowance: float

    @property
    def passed(self):
        return bool(self.max_v < self.allowance)

    def summary(self):
        return {"max_v": self.max_v, "allowance": self.allowance, "passed": self.passed}


def amenable_v_check(u, v, cert, M, back_horizon=np.inf, rel_tol=1e-6):
    """Largest ``V(u(t) - v(t))`` over the common grid, against the decay allowance.

    ``allowance = rel_tol * scale + e^{-2 nu H} * max|V|`` with ``scale = max |u-v|_M^2``
    and ``H`` the backward horizon over which both trajectories were pre-integrated.
    """
    _same_grid(u, v)
    W = u.states - v.states
    Vw = quadratic_form(cert, np.asarray(M), W)
    scale = float((_mnorm(M, W) ** 2).max())
    decay = 0.0 if not np.isfinite(back_horizon) else np.exp(-2 * cert.nu * back_horizon)
    allowance = rel_tol * scale + decay * float(np.abs(Vw).max())
    return AmenableCheck(float(Vw.max()), allowance)


# ---------------------------------------------------------------------------
# fibres


@dataclass
class FibreReconstruction:
    q: float
    zeta_grid: np.ndarray
    points: np.ndarray
    residuals: np.ndarray
    back_horizon: float
    change: float = float("nan")
    contraction: float = float("nan")
    contracting: bool = True

    @property
    def pi_monotone(self):
        return bool(np.all(np.diff(self.zeta_grid) > 0))

    def summary(self):
        return {"q": self.q, "n_points": int(self.zeta_grid.size), "back_horizon": self.back_horizon,
                "max_residual": float(self.residuals.max()), "change": self.change,
                "contraction": self.contraction, "contracting": self.contracting}

    def to_table(self, path):
        cols = ",".join(["zeta", "residual"] + [f"u{i}" for i in range(self.points.shape[1])])
        np.savetxt(path, np.column_stack([self.zeta_grid, self.residuals, self.points]),
                   delimiter=",", fmt="%.12e", header=cols)


def _fibre_points(q, zetas, H, pipeline, reference, tol):
    t1 = q - H
    anchor = reference(t1)
    _, U, resid = invert_g_map(zetas, t1, q, anchor, pipeline, tol=tol, return_states=True)
    return U, resid


def reconstruct_fibre(q, zeta_grid, back_horizon, pipeline, reference, tol=None,
                      contraction_check=True, strict=False, noise=None):
    """Approximate ``Phi(q, zeta)`` by shooting from ``q - back_horizon``.

    ``reference(t)`` returns a bounded reference trajectory's state (the anchor at
    the start of the shot).  With ``contraction_check`` the shot is repeated with
    2x and 4x the horizon; ``change`` is the largest M-distance between the 2x and
    4x points and ``contraction = change(2x, 4x) / change(1x, 2x)``.  Changes below
    ``noise`` (default ``10 tol``) count as converged.  Returned points are those of
    the longest horizon.
    """
    tol = pipeline.tol_fibre if tol is None else tol
    sigma = pipeline.sigma
    m = back_horizon / sigma
    if abs(m - round(m)) > 1e-9 * m or round(m) < 3:
        raise GridMismatch("back_horizon must be an integer number (>= 3) of periods")
    Z = np.sort(np.atleast_1d(np.asarray(zeta_grid, dtype=float)))
    U1, r1 = _fibre_points(q, Z, back_horizon, pipeline, reference, tol)
    if not contraction_check:
        return FibreReconstruction(q, Z, U1, r1, back_horizon)
    U2, r2 = _fibre_points(q, Z, 2 * back_horizon, pipeline, reference, tol)
    U4, r4 = _fibre_points(q, Z, 4 * back_horizon, pipeline, reference, tol)
    c12 = float(pipeline.norm(U1 - U2).max())
    c24 = float(pipeline.norm(U2 - U4).max())
    noise = 10 * tol if noise is None else noise
    if c24 <= noise:
        ratio = c24 / c12 if c12 > noise else 0.0
    else:
        ratio = c24 / c12 if c12 > 0 else np.inf
    contracting = bool(ratio < 1.0)
    rec = FibreReconstruction(q, Z, U4, r4, 4 * back_horizon, change=c24, contraction=ratio,
                              contracting=contracting)
    if strict and not contracting:
        raise NotContracting(f"doubling the horizon did not shrink the change ({c12:.2e} -> {c24:.2e})")
    return rec


def fibre_point(q, zeta, pipeline, reference, back_horizon, tol=None):
    U, _ = _fibre_points(q, np.atleast_1d(zeta), back_horizon, pipeline, reference,
                         pipeline.tol_fibre if tol is None else tol)
    return U[0] if np.ndim(zeta) == 0 else U


# ---------------------------------------------------------------------------
# attraction


@dataclass(frozen=True)
class AttractionReport:
    times: np.ndarray
    distances: np.ndarray
    tol_fibre: float
    noise: float

    @property
    def decreasing(self):
        return _nonincreasing(self.distances, self.noise)

    @property
    def final(self):
        return float(self.distances[-1])

    @property
    def passed(self):
        return bool(self.decreasing and self.final <= 10 * self.tol_fibre)

    def summary(self):
        return {"n_samples": int(self.distances.size), "final": self.final,
                "decreasing": self.decreasing, "passed": self.passed,
                "distances": self.distances.tolist()}


def attraction_check(traj, pipeline, reference, back_horizon, tol=None, noise=None):
    """Distances ``|u(t_k) - Phi(t_k, Pi u(t_k))|_M`` at ``t_k = t0 + k sigma``.

    The fibre point at each sample time comes from a single shot over
    ``back_horizon``.  ``decreasing`` allows increments up to ``noise`` (default
    ``tol``, the inversion tolerance).
    """
    tol = pipeline.tol_fibre if tol is None else tol
    sigma = pipeline.sigma
    samples = traj.period_samples(sigma)
    M = pipeline.M
    if not np.all(np.isfinite(samples)):
        raise NotConverged("trajectory is not finite")
    times = traj.t0 + sigma * np.arange(samples.shape[0])
    dist = np.empty(samples.shape[0])
    for k, (tk, uk) in enumerate(zip(times, samples)):
        zeta = pipeline.pi(uk)
        phi = fibre_point(tk, zeta, pipeline, reference, back_horizon, tol)
        dist[k] = float(_mnorm(M, uk - phi))
    return AttractionReport(times=times, distances=dist, tol_fibre=pipeline.tol_fibre,
                            noise=tol if noise is None else noise)


# ---------------------------------------------------------------------------
# periodic orbits on the fibre


def fibre_return_map(q, zetas, pipeline, reference, back_horizon, tol=None):
    """``h(zeta) = Pi psi^sigma(q, Phi(q, zeta))`` on an array of fibre coordinates."""
    U = fibre_point(q, np.atleast_1d(zetas), pipeline, reference, back_horizon, tol)
    return pipeline.pi(pipeline.flow.advance(q, U, pipeline.sigma)), U


def orbits_on_fibre(q, zeta_grid, pipeline, reference, back_horizon, tol=1e-10, iters=60):
    """Fixed points of the fibre return map located by sign changes of ``h(zeta) - zeta``.

    Each sign change is refined with Brent's method.  Returns a list of
    ``(zeta, state)`` pairs at phase ``q``.
    """
    Z = np.sort(np.asarray(zeta_grid, dtype=float))
    h, _ = fibre_return_map(q, Z, pipeline, reference, back_horizon, tol)
    r = h - Z
    roots = []
    def excess(z):
        return fibre_return_map(q, z, pipeline, reference, back_horizon, tol)[0][0] - z

    for i in np.nonzero(np.sign(r[:-1]) * np.sign(r[1:]) <= 0)[0]:
        if r[i] == 0 or r[i + 1] == 0:
            c = Z[i] if r[i] == 0 else Z[i + 1]
        else:
            c = optimize.brentq(excess, Z[i], Z[i + 1], xtol=1e-10, rtol=1e-12, maxiter=iters)
        roots.append((c, fibre_point(q, c, pipeline, reference, back_horizon, tol)))
    # a grid point that is itself a root shows up in two neighbouring intervals
    out = []
    for z, s in roots:
        if not out or abs(z - out[-1][0]) > 1e-6 * max(1.0, abs(z)):
            out.append((z, s))
    return out


def orbit_from_state(flow, t0, u0, cert=None):
    tr = flow.trajectory(t0, u0, flow.sigma)
    pi0 = float(project_negative(cert, flow.model.M, u0)[0]) if cert is not None else float("nan")
    return PeriodicOrbit(t0=float(t0), period=float(flow.sigma), dt=tr.dt,
                         states_over_period=tr.states, pi_coordinate=pi0,
                         closure=float(_mnorm(flow.model.M, tr.states[-1] - tr.states[0])))
