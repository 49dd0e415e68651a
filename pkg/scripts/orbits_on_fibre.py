"""Locate every periodic orbit on one fibre of the reference delay system and tag its stability.

The fibre return map zeta -> Pi psi^sigma(q, Phi(q, zeta)) is scanned on a grid;
sign changes of h(zeta) - zeta are refined and each orbit is probed with
perturbations along the negative direction and random directions.

    python3 scripts/orbits_on_fibre.py [--config configs/delay_reference.yaml]
"""
import argparse

import numpy as np

from cocyclelab.config import parse_config
from cocyclelab.experiments import Context, reference_orbit
from cocyclelab.reduction import classify_stability, orbit_from_state, orbits_on_fibre


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--config", default="configs/delay_reference.yaml")
    ap.add_argument("--n-zeta", type=int, default=41)
    args = ap.parse_args()
    ctx = Context(parse_config(args.config))
    ref = reference_orbit(ctx)
    pl = ctx.pipeline
    q = ref.t0
    u = ref.state_at(q)
    scale = float(pl.norm(u))
    z0 = float(pl.pi(u))
    Z = z0 + np.linspace(-3, 3, args.n_zeta) * scale
    H = ctx.periods(ctx.a.back_periods * 4)
    found = orbits_on_fibre(q, Z, pl, ref.state_at, H)
    periods = int(np.ceil(ctx.a.stability_time / ctx.sigma))
    print(f"phase q = {q:g}, reference Pi = {z0:+.5f}, {len(found)} orbit(s) on the fibre")
    for zeta, state in found:
        orb = orbit_from_state(ctx.flow, q, state, ctx.cert)
        tag = classify_stability(orb, ctx.a.stability_probes, ctx.a.stability_radius, ctx.flow,
                                 periods=periods, seed=ctx.cfg.seed, e=pl.e)
        print(f"  zeta = {zeta:+.6f}  closure = {orb.closure:.2e}  {tag}")


if __name__ == "__main__":
    main()
