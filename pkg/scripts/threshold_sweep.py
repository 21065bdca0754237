"""Bounded-confidence sweep on the three-agent network: status per threshold.

For each threshold the run starts from the innate opinions and from a grid of
initial states for agent 2 (the only agent the source reaches). ``--reversed``
swaps the switching rule so the source is heard only when the mismatch is at
least the threshold, for comparison with the stated rule.
"""
import argparse
import csv
import sys
from collections import Counter

import numpy as np

from opinion_lattice.dynamics import simulate
from opinion_lattice.fixtures import load_fixture
from opinion_lattice.model import CustomBoundedRule, mismatch


def reversed_rule(model):
    rule = model.rule

    def evaluator(m, x, l, i, k):
        return rule.p[l, i, k] if mismatch(m, x, l, i, k) >= rule.eps[i] else 0.0

    return model.replace(rule=CustomBoundedRule(evaluator, 0 * rule.p, rule.p, c=rule.c))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps", type=float, nargs="+", default=[0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    ap.add_argument("--grid", type=int, default=21, help="initial states per axis for agent 2")
    ap.add_argument("--reversed", action="store_true")
    ap.add_argument("--out", help="CSV output (default: stdout)")
    args = ap.parse_args(argv)

    base = load_fixture("three_agent_bc_eps0")
    rows = []
    for eps in args.eps:
        model = base.replace(rule=type(base.rule)(base.rule.p, np.full(base.n, eps), base.rule.c))
        if args.reversed:
            model = reversed_rule(model)
        default = simulate(model, max_iter=20_000)
        statuses = Counter()
        limits = set()
        for u in np.linspace(0, 1, args.grid):
            for v in np.linspace(0, 1, args.grid):
                x0 = model.s.copy()
                x0[1], x0[base.n + 1] = u, v
                traj = simulate(model, x0, max_iter=20_000)
                statuses[traj.status] += 1
                if traj.converged:
                    limits.add(tuple(np.round(traj.x[[1, base.n + 1]], 4)))
        rows.append([eps, default.status, default.period or "", statuses["converged"], statuses["cycle"],
                     statuses["max_iter"], len(limits)])
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["eps", "status_from_innate", "period", "grid_converged", "grid_cycle", "grid_max_iter",
                "distinct_limits"])
    w.writerows(rows)
    if args.out:
        out.close()


if __name__ == "__main__":
    main()
