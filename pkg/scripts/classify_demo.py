"""Classify the isolated singularity at 0 for a few catalog maps and routes."""

import argparse

import numpy as np

from qcmod.analysis import ClassifyParams, Route, classify_singularity
from qcmod.mapping import catalog


def radius(X):
    return np.linalg.norm(np.atleast_2d(X), axis=1)


CASES = [
    ("radial_exp", {"beta": 0.5}, "|z|^0.5", lambda X: radius(X) ** 0.5, Route.DIVERGENCE_ROUTE),
    ("radial_exp", {"beta": 0.5}, "|z|^0.5", lambda X: radius(X) ** 0.5, Route.FMO_ROUTE),
    ("beltrami_k_tau", {}, "(1-|z|)/(1+|z|)", lambda X: (1 - radius(X)) / (1 + radius(X)), Route.FMO_ROUTE),
    ("inversion", {}, "1", lambda X: np.ones(len(np.atleast_2d(X))), Route.FMO_ROUTE),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=9, help="radii per eps list")
    args = ap.parse_args()
    P = ClassifyParams(epsilons=tuple(np.geomspace(0.05, 5e-6, args.points)))
    for name, params, qdesc, Q, route in CASES:
        rep = classify_singularity(catalog(name, **params), [0.0, 0.0], Q, route, P, qdesc)
        why = f" ({rep.failed_hypothesis})" if rep.failed_hypothesis else ""
        print(f"{name:>15} Q={qdesc:<16} {route.value:<17} beta_n={rep.beta_n:.3f} -> {rep.verdict.value}{why}")


if __name__ == "__main__":
    main()
