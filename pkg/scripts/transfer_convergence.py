"""Grid-refinement table of the truncated transfer functions against the closed forms.

Prints the error and observed order (log2 of successive error ratios) for both
delay transport schemes and for the cosine-Galerkin parabolic truncation.

    python3 scripts/transfer_convergence.py
"""
import numpy as np

from cocyclelab.discretization import (DelayParams, ParabolicParams, SampledFunction,
                                       build_delay_model, build_parabolic_model)
from cocyclelab.frequency import delay_transfer, generic_transfer, parabolic_transfer

POINTS = [0.0, 1.0, 0.5j, 2j, 5j, 1 + 3j, -0.5 + 1j, 10j]


def table(name, sizes, make, exact):
    print(f"\n{name}")
    print("p".ljust(12) + "".join(f"n={n:<10d}" for n in sizes) + "orders")
    for p in POINTS:
        errs = np.array([abs(generic_transfer(make(n), p) - exact(p)) for n in sizes])
        orders = np.log2(errs[:-1] / errs[1:])
        print(f"{str(p):12s}" + "".join(f"{e:<12.2e}" for e in errs) + " ".join(f"{o:5.2f}" for o in orders))


def main():
    rho = SampledFunction(np.array([-1.0, -0.4, 0.0]), np.array([0.5, 2.0, 1.0]))
    grids = (16, 32, 64, 128, 256)
    for scheme in ("upwind", "upwind2"):
        base = DelayParams(1.0, 1, 1.0, rho, 16, scheme)
        table(f"delay, scheme {scheme}", grids, lambda n, b=base: build_delay_model(b.with_grid(n)),
              lambda p, b=base: delay_transfer(p, b))
    base = ParabolicParams(1.0, 2.0, SampledFunction(np.array([0.0, 1.0]), np.array([0.0, 1.0])), 8, 4096)
    table("parabolic, weight rho(x) = x", (8, 16, 32, 64),
          lambda n: build_parabolic_model(base.with_modes(n)), lambda p: parabolic_transfer(p, base))


if __name__ == "__main__":
    main()
