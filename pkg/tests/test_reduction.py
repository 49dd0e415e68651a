import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cocyclelab.cocycle import DelayFlow, Forcing, LinearFlow, Nonlinearity, ParabolicFlow
from cocyclelab.discretization import LinearModel, build_parabolic_model
from cocyclelab.errors import GridMismatch, NoNegativeSpace, NotConverged
from cocyclelab.experiments import Context, fibre, reference_orbit
from cocyclelab.kyp import KypProblem, solve_kyp
from cocyclelab.operator_core import as_mass, make_certificate
from cocyclelab.reduction import (ReductionPipeline, amenable_v_check, attraction_check,
                                  classify_stability, detect_periodic, fibre_point, g_map,
                                  invert_g_map, orbit_from_state, reconstruct_fibre,
                                  verify_squeezing)
from conftest import delay_params, load_config, parabolic_params


@pytest.fixture(scope="module")
def delay_ctx():
    # the reference delay setup on a coarser grid (n = 33) to keep unit tests quick
    return Context(load_config("delay_reference", model__n_grid=32, analysis__periodic_periods=300,
                               analysis__n_random=2))


def linear_parabolic(sigma=0.2, amplitude=1.0):
    pp = parabolic_params(n_modes=8)
    flow = ParabolicFlow(pp, Nonlinearity.zero(), Forcing.harmonic(amplitude, sigma), 0.004)
    sol = solve_kyp(KypProblem(flow.model, nu=2.5, mu0=1.0))
    return flow, sol.cert, pp


def exact_mode0(beta, omega, amplitude=1.0):
    # periodic response of u0' = -beta u0 + a cos(omega t)
    def ref(t, n=8):
        u = np.zeros(n)
        u[0] = (amplitude * np.exp(1j * omega * t) / (beta + 1j * omega)).real
        return u
    return ref


# -- squeezing ---------------------------------------------------------------


def test_squeeze_identical_trajectories(delay_ctx):
    tr = delay_ctx.flow.trajectory(0.0, delay_ctx.random_initial(1, 0)[0], 0.5)
    rep = verify_squeezing(tr, tr, delay_ctx.cert, delay_ctx.model.M)
    assert rep.worst_violation == 0 and rep.passed


def test_squeeze_pass_and_flip(delay_ctx):
    U = delay_ctx.random_initial(2, 5)
    u, v = delay_ctx.flow.trajectories(0.0, U, 1.0)
    cert = delay_ctx.cert
    rep = verify_squeezing(u, v, cert, delay_ctx.model.M)
    assert rep.passed
    flip = verify_squeezing(u, v, cert.flipped(), delay_ctx.model.M)
    assert flip.worst_violation > 10 * flip.tol


def test_squeeze_rejects_misaligned(delay_ctx):
    u = delay_ctx.flow.trajectory(0.0, delay_ctx.random_initial(1, 0)[0], 0.5)
    v = delay_ctx.flow.trajectory(0.1, delay_ctx.random_initial(1, 0)[0], 0.5)
    with pytest.raises(GridMismatch):
        verify_squeezing(u, v, delay_ctx.cert, delay_ctx.model.M)


def test_squeeze_transitivity(delay_ctx):
    # the inequality on [l, m] and [m, r] adds up to the one on [l, r]
    U = delay_ctx.random_initial(2, 6)
    u, v = delay_ctx.flow.trajectories(0.0, U, 0.5)
    cert, M = delay_ctx.cert, delay_ctx.model.M
    w = u.states - v.states
    V = np.einsum("ki,ij,kj->k", w, cert.MP, w)
    n2 = np.einsum("ki,ij,kj->k", w, M, w)
    s = u.times
    E = np.exp(2 * cert.nu * s)

    def slack(i, j):
        f = E[i:j + 1] * n2[i:j + 1]
        integral = u.dt * (f.sum() - 0.5 * (f[0] + f[-1]))
        return E[j] * V[j] - E[i] * V[i] + cert.delta * integral

    l, m, r = 0, 30, len(u) - 1
    assert slack(l, m) <= 0 and slack(m, r) <= 0
    assert slack(l, r) == pytest.approx(slack(l, m) + slack(m, r), rel=1e-12)


# -- g map and its inverse ------------------------------------------------------


def test_g_map_linear_zero_and_scaling():
    pp = parabolic_params(n_modes=8)
    flow = ParabolicFlow(pp, Nonlinearity.zero(), Forcing.zero(0.2), 0.004)
    cert = solve_kyp(KypProblem(flow.model, nu=2.5, mu0=1.0)).cert
    pl = ReductionPipeline(flow, cert)
    zero = np.zeros(8)
    assert g_map(0.0, 0.0, 0.6, zero, pl) == 0.0
    a, b = g_map(0.7, 0.0, 0.6, zero, pl), g_map(1.4, 0.0, 0.6, zero, pl)
    assert b == pytest.approx(2 * a, rel=1e-12)
    assert invert_g_map(0.0, 0.0, 0.6, zero, pl) == pytest.approx(0.0, abs=1e-6)


def test_invert_affine_forced():
    flow, cert, _ = linear_parabolic()
    pl = ReductionPipeline(flow, cert)
    anchor = np.linspace(1, 0, 8)
    c = g_map(0.0, 0.0, 0.6, anchor, pl)
    slope = g_map(1.0, 0.0, 0.6, anchor, pl) - c
    target = 0.37
    z = invert_g_map(target, 0.0, 0.6, anchor, pl, tol=1e-12)
    assert z == pytest.approx((target - c) / slope, abs=1e-9)


def test_g_map_monotone_and_roundtrip(delay_ctx):
    pl = delay_ctx.pipeline
    anchor = delay_ctx.random_initial(1, 7)[0]
    Z = np.linspace(-4, 4, 17)
    G = g_map(Z, 0.0, 0.6, anchor, pl)
    assert np.all(np.diff(G) > 0)
    z_true = 1.234
    target = g_map(z_true, 0.0, 0.6, anchor, pl)
    assert abs(invert_g_map(target, 0.0, 0.6, anchor, pl, tol=1e-12) - z_true) <= 1e-8


def test_pipeline_needs_one_negative_direction():
    pp = parabolic_params(n_modes=8)
    flow = ParabolicFlow(pp, Nonlinearity.zero(), Forcing.zero(0.2), 0.004)
    cert = solve_kyp(KypProblem(flow.model, nu=0.5, mu0=1.0)).cert
    with pytest.raises(NoNegativeSpace):
        ReductionPipeline(flow, cert)


# -- periodic orbits --------------------------------------------------------------


def test_detect_linear_forced_delay():
    p = delay_params(lam=1.0, n_grid=32)
    sigma = 1.0
    flow = DelayFlow(p, Nonlinearity.zero(), Forcing.harmonic(1.0, sigma))
    cert = solve_kyp(KypProblem(flow.model, nu=2.0, mu0=0.1)).cert
    tr = flow.trajectory(0.0, np.zeros(p.n_grid + 1), 40 * sigma)
    orb = detect_periodic(tr, sigma, cert)
    x = orb.states_over_period[:-1, 0]
    t = orb.t0 + orb.dt * np.arange(x.size)
    amp = abs(2 * np.mean(x * np.exp(-2j * np.pi * t / sigma)))
    assert abs(amp - 1 / np.sqrt(1 + (2 * np.pi) ** 2)) <= 1e-4
    assert classify_stability(orb, 4, 1e-3, flow, periods=5) == "stable"


def test_detect_equilibrium():
    p = delay_params(lam=1.0, n_grid=16)
    flow = DelayFlow(p, Nonlinearity.sigmoid(4.0, -2.0), Forcing.zero(0.5))
    cert = solve_kyp(KypProblem(flow.model, nu=2.0, mu0=1.0)).cert
    tr = flow.trajectory(0.0, np.zeros(p.n_grid + 1), 20 * 0.5)
    orb = detect_periodic(tr, 0.5, cert)
    assert np.all(orb.states_over_period == 0)


def test_detect_needs_enough_periods(delay_ctx):
    tr = delay_ctx.flow.trajectory(0.0, delay_ctx.random_initial(1, 0)[0], 10 * delay_ctx.sigma)
    with pytest.raises(NotConverged):
        detect_periodic(tr, delay_ctx.sigma, delay_ctx.cert)


def test_detect_reports_unconverged(delay_ctx):
    tr = delay_ctx.flow.trajectory(0.0, delay_ctx.random_initial(1, 0)[0], 20 * delay_ctx.sigma)
    with pytest.raises(NotConverged) as info:
        detect_periodic(tr, delay_ctx.sigma, delay_ctx.cert)
    assert info.value.pi_sequence is not None


def test_unstable_scalar_mode():
    model = LinearModel(A=np.array([[1.0]]), B=np.array([0.0]), C=np.array([1.0]),
                        M=as_mass([[1.0]]), kind="scalar", params=None)
    flow = LinearFlow(model, Nonlinearity.zero(), Forcing.zero(1.0), 0.01)
    orb = orbit_from_state(flow, 0.0, np.zeros(1))
    assert classify_stability(orb, 2, 1e-3, flow, periods=10) == "unstable"


# -- fibres, amenable pairs, attraction ------------------------------------------------


def test_fibre_fixed_point(delay_ctx):
    ref = reference_orbit(delay_ctx)
    pl = delay_ctx.pipeline
    q = ref.t0
    u = ref.state_at(q)
    rec = reconstruct_fibre(q, [pl.pi(u)], 3 * pl.sigma, pl, ref.state_at, tol=1e-10,
                            contraction_check=False)
    assert pl.norm(rec.points[0] - u) <= 1e-6 * pl.norm(u)


def test_fibre_horizon_must_be_whole_periods(delay_ctx):
    ref = reference_orbit(delay_ctx)
    with pytest.raises(GridMismatch):
        reconstruct_fibre(ref.t0, [0.0], 2.5 * delay_ctx.sigma, delay_ctx.pipeline, ref.state_at)


def test_fibre_pi_injective(delay_ctx):
    rec, _ = fibre(delay_ctx)
    pl = delay_ctx.pipeline
    P = rec.points
    for i in range(len(P)):
        for j in range(i + 1, len(P)):
            assert pl.norm(P[i] - P[j]) > 0
            assert np.sign(pl.pi(P[i] - P[j])) == np.sign(rec.zeta_grid[i] - rec.zeta_grid[j])


def test_amenable_identical_is_zero(delay_ctx):
    tr = delay_ctx.flow.trajectory(0.0, delay_ctx.random_initial(1, 0)[0], 0.5)
    assert amenable_v_check(tr, tr, delay_ctx.cert, delay_ctx.model.M).max_v == 0


def test_amenable_fibre_pair(delay_ctx):
    rec, _ = fibre(delay_ctx)
    u, v = delay_ctx.flow.trajectories(rec.q, rec.points[[2, 6]], 2 * delay_ctx.sigma)
    chk = amenable_v_check(u, v, delay_ctx.cert, delay_ctx.model.M, back_horizon=rec.back_horizon)
    assert chk.max_v < 0 and chk.passed


def test_attraction_start_on_fibre(delay_ctx):
    rec, _ = fibre(delay_ctx)
    ref = reference_orbit(delay_ctx)
    tr = delay_ctx.flow.trajectory(rec.q, rec.points[3], 3 * delay_ctx.sigma)
    rep = attraction_check(tr, delay_ctx.pipeline, ref.state_at, rec.back_horizon, tol=1e-10)
    assert np.all(rep.distances <= 1e-6)


def test_attraction_linear_rate():
    sigma = 0.2
    flow, cert, pp = linear_parabolic(sigma)
    pl = ReductionPipeline(flow, cert)
    ref = exact_mode0(pp.beta, 2 * np.pi / sigma)
    u0 = ref(0.0) + np.array([0.3, 1.0, -0.5, 0.2, 0, 0, 0, 0])
    tr = flow.trajectory(0.0, u0, 6 * sigma)
    rep = attraction_check(tr, pl, ref, 4 * sigma, tol=1e-13)
    assert rep.decreasing
    d = rep.distances
    use = d > 1e-9
    rate = -np.polyfit(rep.times[use][1:], np.log(d[use][1:]), 1)[0]
    gap = pp.beta + np.pi ** 2 * pp.alpha  # slowest transverse mode
    assert abs(rate - gap) <= 0.2 * gap


def test_fibre_point_linear_exact():
    # for the linear system the fibre through the reference is the mode-0 line
    sigma = 0.2
    flow, cert, pp = linear_parabolic(sigma)
    pl = ReductionPipeline(flow, cert)
    ref = exact_mode0(pp.beta, 2 * np.pi / sigma)
    u = fibre_point(1.0, 0.5, pl, ref, 10 * sigma, tol=1e-13)
    assert np.abs(u[1:]).max() <= 1e-8
    assert pl.pi(u) == pytest.approx(0.5, abs=1e-12)
