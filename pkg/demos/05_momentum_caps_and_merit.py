"""Quantities the convergence accounting rests on, checked numerically.

Three things are demonstrated: the momentum weight sums stay strictly
under their closed-form caps (certified with directed rounding -- float64
alone cannot distinguish the finite sums from the caps); the merit weight
tau balances objective descent against constraint violation and satisfies
its defining identity; and along a plain SQP run the merit function built
from trajectory-estimated constants decreases almost monotonically.
"""

import numpy as np

from projsqp import (
    CommonHyper,
    HeavyBallState,
    circle_problem,
    estimate_constants,
    merit,
    sqp_baseline_step,
    tau_from_constants,
)
from projsqp.series import check_geometric_sums, check_sqrt_weighted_sums

print("== weight-sum caps (100000 terms) ==")
for decay in (0.5, 0.9, 0.99):
    geo = check_geometric_sums(decay)
    root = check_sqrt_weighted_sums(decay)
    print(f"decay {decay}: geometric sums {tuple(round(s, 3) for s in geo.sums)} "
          f"< caps {tuple(round(c, 3) for c in geo.caps)} "
          f"(strict: {geo.strict}, log10 slack {geo.log10_slacks[0]:.0f})")
    print(f"           sqrt-weighted {tuple(round(s, 2) for s in root.sums)} "
          f"< caps {tuple(round(c, 2) for c in root.caps)} (strict: {root.strict})")

print("\n== the merit weight and its identity ==")
problem = circle_problem()
hyper = CommonHyper(alpha=0.02)
theta = np.array([0.0, 1.0])
state = HeavyBallState.init(2)
evals = []
iterates = [theta.copy()]
for _ in range(300):
    ev = problem.evaluate(theta)
    evals.append(ev)
    d, state = sqp_baseline_step(state, ev, hyper)
    theta = theta + hyper.alpha * d
    iterates.append(theta.copy())

constants = estimate_constants(evals)
tau = tau_from_constants(constants)
identity_gap = abs((1.0 - tau * constants.kappa_grad * constants.rho_max
                    / (constants.sigma_min * constants.rho_min)) - tau)
print(f"estimated sigma_min = {constants.sigma_min:.4f}, "
      f"kappa_grad = {constants.kappa_grad:.4f}")
print(f"tau = {tau:.6f}, identity gap = {identity_gap:.2e}")

print("\n== merit descent along the run ==")
merits = []
for x in iterates:
    ev = problem.evaluate_exact(x)
    merits.append(merit(ev.f_est, ev.c, tau))
diffs = np.diff(merits)
frac = (diffs[10:] <= 1e-12).mean()
print(f"merit decreased on {frac:.1%} of iterations after the warmup")
print(f"merit: start {merits[0]:.6f} -> end {merits[-1]:.6f} "
      f"(solution value {tau * 1.0:.6f})")
