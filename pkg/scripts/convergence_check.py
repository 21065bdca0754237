"""Iterate a model from many uniform random initial states and report the spread of the limits."""
import argparse
import json
import time

import numpy as np

from opinion_lattice.dynamics import simulate
from opinion_lattice.fixtures import load_fixture
from opinion_lattice.io import load_model
from opinion_lattice.model import validate


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", help="model JSON (default: bundled three-agent affine model, gamma 0.5)")
    ap.add_argument("--starts", type=int, default=500)
    ap.add_argument("--tol", type=float, default=1e-8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    model = load_model(args.model) if args.model else load_fixture("three_agent_affine_g05")
    rng = np.random.default_rng(args.seed)
    t0 = time.perf_counter()
    runs = [simulate(model, x0, tol=args.tol) for x0 in rng.random((args.starts, model.n * model.q))]
    points = np.array([r.x for r in runs])
    report = validate(model)
    print(json.dumps({
        "starts": args.starts,
        "converged": int(sum(r.converged for r in runs)),
        "max_iterations": int(max(r.iterations for r in runs)),
        "spread": float((points.max(axis=0) - points.min(axis=0)).max()),
        "kappa": report.kappa,
        "seconds": round(time.perf_counter() - t0, 3),
    }, indent=2))


if __name__ == "__main__":
    main()
