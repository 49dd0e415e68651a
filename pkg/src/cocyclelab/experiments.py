"""End-to-end runs assembled from a RunConfig.

Each ``run_*`` function returns a :class:`StepResult` holding a JSON-ready
summary, tables for CSV export and a pass flag.  Intermediate objects (the
certificate, detected orbits, the fibre) are cached on the :class:`Context` so
a pipeline computes each of them once.
"""
from dataclasses import dataclass, field

import numpy as np

from .cocycle import DelayFlow, ParabolicFlow, delay_history_state
from .discretization import build_delay_model, build_parabolic_model
from .errors import NotConverged
from .frequency import DelayTransfer, ParabolicTransfer, certify_condition
from .kyp import KypProblem, audit_inertia, solve_kyp, unstable_count
from .reduction import (ReductionPipeline, amenable_v_check, attraction_check,
                        classify_stability, detect_periodic, distinct_orbits,
                        periodic_diagnostics, reconstruct_fibre, verify_squeezing)


@dataclass
class StepResult:
    name: str
    passed: bool
    summary: dict
    tables: dict = field(default_factory=dict)  # name -> (column names, 2-D array)


class Context:
    def __init__(self, cfg):
        self.cfg = cfg
        self.a = cfg.analysis
        self.params = cfg.params()
        self.kind = cfg.model.kind
        self.model = (build_delay_model if self.kind == "delay" else build_parabolic_model)(self.params)
        self.f = cfg.nonlinearity_obj()
        self.g = cfg.forcing_obj()
        self.mu0 = cfg.mu0
        self.nu = self.a.nu
        self.sigma = self.g.sigma
        self._flow = self._sol = self._orbits = self._fibre = None
        self._stable_ref = None

    def rng(self, stream):
        return np.random.default_rng([self.cfg.seed, stream])

    @property
    def transfer(self):
        return DelayTransfer(self.params) if self.kind == "delay" else ParabolicTransfer(self.params)

    @property
    def flow(self):
        if self._flow is None:
            if self.kind == "delay":
                self._flow = DelayFlow(self.params, self.f, self.g, substeps=self.a.substeps)
            else:
                self._flow = ParabolicFlow(self.params, self.f, self.g, self.a.dt)
        return self._flow

    @property
    def problem(self):
        return KypProblem(self.model, self.nu, self.mu0)

    @property
    def solution(self):
        if self._sol is None:
            self._sol = solve_kyp(self.problem, self.a.delta_seed)
        return self._sol

    @property
    def cert(self):
        return self.solution.cert

    @property
    def pipeline(self):
        return ReductionPipeline(self.flow, self.cert, tol_fibre=self.a.tol_fibre)

    def periods(self, k):
        return k * self.sigma

    def random_initial(self, count, stream):
        """Smooth random initial states with amplitude ``initial_amplitude``."""
        rng = self.rng(stream)
        amp = self.a.initial_amplitude
        out = []
        for _ in range(count):
            if self.kind == "delay":
                c = amp * rng.standard_normal(3)
                tau = self.params.tau
                out.append(delay_history_state(
                    self.params, lambda s, c=c: c[0] + c[1] * np.cos(np.pi * s / tau)
                    + c[2] * np.sin(2 * np.pi * s / tau)))
            else:
                k = np.arange(self.params.n_modes)
                out.append(amp * rng.standard_normal(k.size) / (1.0 + k ** 2))
        return np.array(out)

    def steps_per_period(self):
        return int(round(self.sigma / self.flow.dt))


# ---------------------------------------------------------------------------


def run_check_freq(ctx):
    rep = certify_condition(ctx.transfer, ctx.nu, ctx.mu0, ctx.a.omega_max, ctx.a.n_omega,
                            theorem_range=ctx.a.theorem_mode)
    table = (["omega", "margin"], np.column_stack([rep.omega_grid, rep.margins]))
    return StepResult("check-freq", rep.satisfied, rep.summary(), {"freq_margins": table})


def run_solve_kyp(ctx):
    sol = ctx.solution
    audit = audit_inertia(sol, ctx.problem)
    summary = sol.summary()
    summary.update({"audit_passed": audit, "unstable_dim": unstable_count(ctx.problem)})
    tables = {"P": ([f"c{j}" for j in range(sol.cert.n)], sol.cert.P),
              "P_eigenvalues": (["eigenvalue"], sol.cert.eigenvalues[:, None])}
    return StepResult("solve-kyp", bool(sol.feasible and audit), summary, tables)


def run_simulate(ctx):
    u0 = ctx.random_initial(1, stream=1)[0]
    tr = ctx.flow.trajectory(0.0, u0, ctx.periods(ctx.a.simulate_periods))
    summary = {"t0": tr.t0, "dt": tr.dt, "n_states": len(tr), "n": ctx.model.n,
               "final_norm": float(np.sqrt(tr.states[-1] @ ctx.model.M @ tr.states[-1])),
               "finite": bool(np.all(np.isfinite(tr.states)))}
    cols = ["t"] + [f"u{i}" for i in range(ctx.model.n)]
    return StepResult("simulate", summary["finite"], summary,
                      {"trajectory": (cols, np.column_stack([tr.times, tr.states]))})


def run_verify_squeeze(ctx):
    a = ctx.a
    U0 = ctx.random_initial(2 * a.squeeze_pairs, stream=2)
    trs = ctx.flow.trajectories(0.0, U0, ctx.periods(a.squeeze_periods))
    rows, flip_ratio, ok = [], 0.0, True
    for i in range(a.squeeze_pairs):
        u, v = trs[2 * i], trs[2 * i + 1]
        rep = verify_squeezing(u, v, ctx.cert, ctx.model.M, a.squeeze_samples, seed=ctx.cfg.seed + i)
        flip = verify_squeezing(u, v, ctx.cert.flipped(), ctx.model.M, a.squeeze_samples,
                                seed=ctx.cfg.seed + i)
        ok &= rep.passed
        flip_ratio = max(flip_ratio, flip.worst_violation / flip.tol)
        rows.append([i, rep.worst_violation, rep.tol, rep.scale, flip.worst_violation, flip.tol])
    rows = np.array(rows)
    summary = {"pairs": a.squeeze_pairs, "samples": a.squeeze_samples, "nu": ctx.cert.nu,
               "delta": ctx.cert.delta, "worst_violation": float(rows[:, 1].max()),
               "worst_relative": float((rows[:, 1] / rows[:, 3]).max()),
               "all_pass": bool(ok), "flip_violation_over_tol": float(flip_ratio),
               "flip_control_fails": bool(flip_ratio > 10.0)}
    cols = ["pair", "worst_violation", "tol", "scale", "flip_worst_violation", "flip_tol"]
    return StepResult("verify-squeeze", bool(ok and flip_ratio > 10.0), summary,
                      {"squeeze_pairs": (cols, rows)})


def find_orbits(ctx):
    """Detect the periodic limits of ``n_random`` runs (cached)."""
    if ctx._orbits is not None:
        return ctx._orbits
    a = ctx.a
    U0 = ctx.random_initial(a.n_random, stream=3)
    spp = ctx.steps_per_period()
    trs = ctx.flow.trajectories(0.0, U0, ctx.periods(a.periodic_periods), save_every=spp)
    runs = []
    for i, tr in enumerate(trs):
        scale = float(np.sqrt(np.einsum("ki,ij,kj->k", tr.states, ctx.model.M, tr.states).max()))
        tol = a.tol_periodic_rel * scale
        diag = periodic_diagnostics(tr, ctx.sigma, ctx.cert, tol)
        try:
            orb = detect_periodic(tr, ctx.sigma, ctx.cert, tol=tol, flow=ctx.flow)
            err = None
        except NotConverged as exc:
            orb, err = None, str(exc)
        runs.append({"run": i, "orbit": orb, "diag": diag, "error": err, "scale": scale})
    ctx._orbits = runs
    return runs


def _distinct(ctx, runs):
    orbs = [r["orbit"] for r in runs if r["orbit"] is not None]
    if not orbs:
        return []
    scale = max(r["scale"] for r in runs)
    return distinct_orbits(orbs, ctx.model.M, 1e-4 * scale)


def run_find_periodic(ctx):
    runs = find_orbits(ctx)
    reps = _distinct(ctx, runs)
    n_per = int(np.ceil(ctx.a.stability_time / ctx.sigma))
    e = ctx.cert.neg_basis[:, 0] if ctx.cert.inertia.n_neg else None
    for orb in reps:
        classify_stability(orb, ctx.a.stability_probes, ctx.a.stability_radius, ctx.flow,
                           periods=n_per, seed=ctx.cfg.seed, e=e)
    rows = [[r["run"], r["orbit"] is not None, r["diag"].pi_monotone, r["diag"].d_decreasing,
             r["diag"].d[-1], r["orbit"].pi_coordinate if r["orbit"] else np.nan] for r in runs]
    converged = all(r["orbit"] is not None for r in runs)
    monotone = all(r["diag"].pi_monotone for r in runs)
    summary = {"runs": len(runs), "converged": sum(r["orbit"] is not None for r in runs),
               "pi_monotone": sum(r["diag"].pi_monotone for r in runs),
               "distinct_orbits": len(reps),
               "orbits": [o.summary() for o in reps],
               "failures": [r["error"] for r in runs if r["error"]]}
    cols = ["run", "converged", "pi_monotone", "d_decreasing", "last_d", "pi_orbit"]
    return StepResult("find-periodic", bool(converged and monotone), summary,
                      {"periodic_runs": (cols, np.array(rows, dtype=float))})


def reference_orbit(ctx):
    """A stable detected orbit (the first in run order) as the fibre reference."""
    if ctx._stable_ref is None:
        reps = _distinct(ctx, find_orbits(ctx))
        if not reps:
            raise NotConverged("no periodic orbit available as a reference trajectory")
        ctx._stable_ref = reps[0]
    return ctx._stable_ref


def fibre(ctx):
    if ctx._fibre is None:
        a = ctx.a
        ref = reference_orbit(ctx)
        pl = ctx.pipeline
        q = ref.t0
        u = ref.state_at(q)
        z0 = float(pl.pi(u))
        scale = float(pl.norm(u)) or 1.0
        Z = z0 + np.linspace(-a.zeta_span, a.zeta_span, a.n_zeta) * scale
        rec = reconstruct_fibre(q, Z, ctx.periods(a.back_periods), pl, ref.state_at, tol=a.tol_shoot)
        ctx._fibre = (rec, scale)
    return ctx._fibre


def run_reconstruct_fibre(ctx):
    rec, scale = fibre(ctx)
    pl = ctx.pipeline
    pis = pl.pi(rec.points)
    strictly = bool(np.all(np.diff(pis) > 0))
    ok = bool(rec.residuals.max() <= ctx.a.tol_fibre and strictly and rec.contraction <= 0.5)
    summary = rec.summary()
    summary.update({"pi_strictly_increasing": strictly, "state_scale": scale,
                    "tol_fibre": ctx.a.tol_fibre})
    cols = ["zeta", "residual"] + [f"u{i}" for i in range(rec.points.shape[1])]
    return StepResult("reconstruct-fibre", ok, summary,
                      {"fibre": (cols, np.column_stack([rec.zeta_grid, rec.residuals, rec.points]))})


def run_amenable(ctx, n_points=5, periods=5):
    rec, scale = fibre(ctx)
    idx = np.linspace(0, rec.points.shape[0] - 1, n_points).round().astype(int)
    P = rec.points[idx]
    trs = ctx.flow.trajectories(rec.q, P, ctx.periods(periods))
    worst, ok = -np.inf, True
    for i in range(n_points):
        for j in range(i + 1, n_points):
            c = amenable_v_check(trs[i], trs[j], ctx.cert, ctx.model.M, back_horizon=rec.back_horizon)
            ok &= c.passed
            worst = max(worst, c.max_v - c.allowance)
    # transient counterprobe: same Pi as a fibre point, displaced along the top eigenvector of P
    pos = ctx.cert.eigenvectors[:, -1]
    mid = P[n_points // 2]
    start = mid + ctx.a.attraction_perturbation * scale * pos / np.sqrt(pos @ ctx.model.M @ pos)
    probe = ctx.flow.trajectory(rec.q, start, ctx.periods(periods))
    # strict test (no transient credit): a point off the fibre must give V > 0
    ctrl = amenable_v_check(probe, trs[n_points // 2], ctx.cert, ctx.model.M)
    summary = {"points": n_points, "pairs_pass": bool(ok), "worst_minus_allowance": float(worst),
               "control_max_v": ctrl.max_v, "control_allowance": ctrl.allowance, "control_violates": not ctrl.passed}
    return StepResult("amenable", bool(ok and not ctrl.passed), summary)


def run_attraction(ctx):
    a = ctx.a
    ref = reference_orbit(ctx)
    pl = ctx.pipeline
    q = ref.t0
    u = ref.state_at(q)
    rng = ctx.rng(4)
    d = rng.standard_normal(ctx.model.n)
    d /= float(pl.norm(d))
    scale = float(pl.norm(u)) or 1.0
    tr = ctx.flow.trajectory(q, u + a.attraction_perturbation * scale * d, ctx.periods(a.attraction_periods))
    rep = attraction_check(tr, pl, ref.state_at, ctx.periods(a.attraction_back_periods), tol=a.tol_shoot)
    return StepResult("attraction", rep.passed, rep.summary(),
                      {"attraction": (["t", "distance"], np.column_stack([rep.times, rep.distances]))})


COMMANDS = {
    "check-freq": [run_check_freq],
    "solve-kyp": [run_solve_kyp],
    "simulate": [run_simulate],
    "verify-squeeze": [run_verify_squeeze],
    "find-periodic": [run_find_periodic],
    "reconstruct-fibre": [run_reconstruct_fibre, run_amenable],
    "attraction": [run_attraction],
    "full-pipeline": [run_check_freq, run_solve_kyp, run_simulate, run_verify_squeeze,
                      run_find_periodic, run_reconstruct_fibre, run_amenable, run_attraction],
}
