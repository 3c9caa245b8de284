"""Compare FoRB, Tseng and forward-backward on the planar rotation problem.

Run with ``python3 demos/rotation_rates.py``. For each method the empirical
rate over iterations 10..200 is printed next to the closed-form value:
Tseng contracts by sqrt(1 - lam^2 + lam^4), forward-backward grows by
sqrt(1 + lam^2), and the FoRB rate is the largest root modulus of its
two-step recursion written in complex form.
"""

import math

import numpy as np

from monosplit import SolverConfig, StepPlan, estimate_rate, make_rotation, run_baseline, run_forb


def forb_root(lam):
    return max(abs(np.roots([1.0, -(1 + 2j * lam), 1j * lam])))


def main():
    P = make_rotation(1).inclusion
    rows = []
    for lam in (0.1, 0.3, 0.45, 0.499):
        cfg = SolverConfig(x0=[1.0, 0.0], step=StepPlan.constant(lam), max_iters=200,
                           residual_tol=0.0)
        rows.append(("forb", lam, estimate_rate(run_forb(P, cfg), window=(10, 200)).rho,
                     forb_root(lam)))
    for lam in (0.3, 1 / math.sqrt(2)):
        cfg = SolverConfig(x0=[1.0, 0.0], step=StepPlan.constant(lam), max_iters=200,
                           residual_tol=0.0)
        rows.append(("tseng", lam, estimate_rate(run_baseline("tseng", P, cfg),
                                                 window=(10, 200)).rho,
                     math.sqrt(1 - lam ** 2 + lam ** 4)))
        rows.append(("forward_backward", lam,
                     # stops at the divergence cutoff, so fit whatever was produced
                     estimate_rate(run_baseline("forward_backward", P, cfg)).rho,
                     math.sqrt(1 + lam ** 2)))

    print(f"{'method':<18}{'lambda':>8}{'measured':>12}{'closed form':>14}")
    for name, lam, rho, exact in rows:
        print(f"{name:<18}{lam:>8.4f}{rho:>12.6f}{exact:>14.6f}")
    # the two roots merge at lam = 1/2, so the modulus approaches 1/sqrt2 slowly
    print(f"\nFoRB root modulus near lam = 1/2 (1/sqrt2 = {1 / math.sqrt(2):.6f}):")
    for lam in (0.49, 0.499, 0.4999, 0.49999):
        print(f"  lam={lam:<8} {forb_root(lam):.6f}")


if __name__ == "__main__":
    main()
