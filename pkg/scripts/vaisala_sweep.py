"""Modulus inequality margins for catalog maps over a range of annuli."""

import argparse

import numpy as np

from qcmod.analysis import verify_vaisala
from qcmod.core import Annulus
from qcmod.mapping import catalog


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--maps", nargs="+", default=["identity", "beltrami_k_tau"])
    ap.add_argument("--outer", type=float, default=0.8)
    ap.add_argument("--inner", type=float, nargs="+", default=[0.1, 0.2, 0.4, 0.6])
    ap.add_argument("--resolution", type=int, default=256)
    ap.add_argument("--rays", type=int, default=128)
    args = ap.parse_args()

    print(f"{'map':>16} {'r1':>5} {'r2':>5} {'lhs':>9} {'analytic':>9} {'rhs':>9} {'holds':>6}")
    for name in args.maps:
        f = catalog(name)
        for r1 in args.inner:
            rep = verify_vaisala(f, Annulus(np.zeros(f.n), r1, args.outer), rays=args.rays,
                                 resolution=args.resolution)
            exact = "-" if rep.lhs_analytic is None else f"{rep.lhs_analytic:.4f}"
            print(f"{name:>16} {r1:>5.2f} {args.outer:>5.2f} {rep.lhs:>9.4f} {exact:>9} {rep.rhs:>9.4f} "
                  f"{str(rep.holds):>6}")


if __name__ == "__main__":
    main()
