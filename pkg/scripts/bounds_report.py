"""Fixed point, bounds and sign-search statistics for every bundled fixture."""
import argparse
import warnings

import numpy as np

from opinion_lattice.dynamics import simulate
from opinion_lattice.fixedpoint import bounds, solve_affine_exact
from opinion_lattice.fixtures import available, load_fixture
from opinion_lattice.model import AffineRule, ClampWarning, validate


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.parse_args(argv)
    warnings.simplefilter("ignore", ClampWarning)
    for name in available():
        model = load_fixture(name)
        b = bounds(model)
        report = validate(model, mu_pairs=2000)
        print(f"== {name}: {model.description}")
        print(f"   kappa={report.kappa:.4f} ({report.kappa_status}), sub-stochastic={report.sub_stochastic_ok}")
        print(f"   x_lower={np.round(b.x_lower, 4).tolist()}")
        print(f"   x_upper={np.round(b.x_upper, 4).tolist()}")
        if isinstance(model.rule, AffineRule):
            res = solve_affine_exact(model)
            print(f"   x*={np.round(res.fixed_point, 4).tolist()} via {res.method}, "
                  f"regimes tested={res.regimes_tested}, locked={res.locked_fraction:.2f}")
        else:
            traj = simulate(model, enforce_substochastic=False)
            x = np.round(traj.x, 4).tolist() if traj.converged else None
            print(f"   simulate: {traj.status}, x={x}, inside bounds={b.contains(traj.x)}")


if __name__ == "__main__":
    main()
