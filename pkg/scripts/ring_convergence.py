"""Discrete ring modulus against the closed form as grid and ray count grow."""

import argparse
import math
import time

from qcmod.core import Annulus, CellGrid
from qcmod.modulus import discrete_modulus, ring_modulus, sample_ring_family


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=2, choices=(2, 3))
    ap.add_argument("--r1", type=float, default=1.0)
    ap.add_argument("--r2", type=float, default=math.e)
    ap.add_argument("--levels", type=int, default=4, help="number of refinements")
    args = ap.parse_args()

    ring = Annulus([0.0] * args.n, args.r1, args.r2)
    exact = ring_modulus(args.n, args.r1, args.r2)
    res, rays = (64, 32) if args.n == 2 else (16, 32)
    print(f"{'grid':>6} {'rays':>5} {'estimate':>12} {'lower':>12} {'ratio':>9} {'secs':>6}")
    for _ in range(args.levels):
        t0 = time.perf_counter()
        est = discrete_modulus(sample_ring_family(ring, rays), CellGrid.square(args.r2, res, args.n))
        dt = time.perf_counter() - t0
        print(f"{res:>6} {rays:>5} {est.value:>12.6f} {est.lower_bound:>12.6f} {est.value / exact:>9.5f} {dt:>6.1f}")
        res, rays = res * 2, rays * 2
    print(f"closed form {exact:.6f}")


if __name__ == "__main__":
    main()
