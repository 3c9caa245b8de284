"""Backtracking FoRB on B(x) = x^3, which has no global Lipschitz constant.

Run with ``python3 demos/linesearch_cubic.py``. As the iterates approach the
origin the local Lipschitz constant 3 x^2 shrinks, so the accepted steps are
allowed to grow; the printout shows this every 40 iterations.
"""

import numpy as np

from monosplit import ForwardOracle, SolverConfig, SplitInclusion, StepPlan, prox_gallery
from monosplit import run_forb_linesearch


def main():
    B = ForwardOracle(1, lambda x: x ** 3, label="cubic")
    P = SplitInclusion(prox_gallery("zero", {"dim": 1}), B)
    plan = StepPlan.with_linesearch(lambda0=10.0, delta=0.9, sigma=0.5)
    run = run_forb_linesearch(P, SolverConfig(x0=[1.0], step=plan, max_iters=100_000,
                                              residual_tol=1e-12))
    X = run.iterate_array()[:, 0]
    print(f"status {run.status} after {run.iterations} iterations, "
          f"{sum(run.backtracks)} backtracks in total")
    print(f"{'k':>5}{'x_k':>14}{'lambda_k':>14}{'backtracks':>12}")
    for k in range(0, run.iterations, 40):
        print(f"{k:>5}{X[k]:>14.4e}{run.lambdas[k]:>14.4e}{run.backtracks[k]:>12d}")
    print(f"oracle calls: {run.oracle_calls}")
    print(f"smallest accepted step {np.min(run.lambdas):.4g}")


if __name__ == "__main__":
    main()
