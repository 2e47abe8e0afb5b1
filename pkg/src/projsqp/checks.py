"""Self-contained oracle checks behind the `check` CLI subcommand.

Each check re-derives an expected value through an independent route
(direct KKT solve, finite differences, closed forms, certified sums) and
compares the library against it.  Kept fast so the whole suite runs in a
few seconds.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import model
from .harness import ExperimentConfig, run_experiment
from .linalg import JacobianFactor, kkt_solve_direct, normal_step, project_null, projection_matrix
from .metrics import TauConstants, tau_from_constants
from .optimizers import CommonHyper, HeavyBallState, heavyball_step
from .problems import SpringConfig, SpringProblem, circle_problem, spring_residual_exact
from .series import check_geometric_sums, check_sqrt_weighted_sums


def _random_instance(rng):
    m = int(rng.integers(1, 6))
    n = int(rng.integers(max(m + 1, 2), 21))
    jac = rng.standard_normal((m, n))
    return jac, rng.standard_normal(n), rng.standard_normal(m)


def check_step_decomposition(samples: int = 100, seed: int = 0):
    """Decomposed step v + u equals the direct KKT solve's first block."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        jac, q, c = _random_instance(rng)
        s, _ = kkt_solve_direct(jac, q, c)
        step = normal_step(jac, c, 1.0) - project_null(jac, q)
        worst = max(worst, np.linalg.norm(s - step) / (1.0 + np.linalg.norm(s)))
    return worst <= 1e-7, f"max relative gap {worst:.3e} (tol 1e-7)"


def check_projected_ascent_invariance(samples: int = 100, seed: int = 1):
    """Replacing q by its null-space projection leaves the s block unchanged."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        jac, q, c = _random_instance(rng)
        s1, _ = kkt_solve_direct(jac, q, c)
        s2, _ = kkt_solve_direct(jac, project_null(jac, q), c)
        worst = max(worst, np.linalg.norm(s1 - s2) / (1.0 + np.linalg.norm(s1)))
    return worst <= 1e-10, f"max relative gap {worst:.3e} (tol 1e-10)"


def check_projection_algebra(seed: int = 2):
    """Explicit projector is symmetric and projection is idempotent."""
    rng = np.random.default_rng(seed)
    worst_sym = 0.0
    worst_idem = 0.0
    for _ in range(20):
        jac, q, _ = _random_instance(rng)
        p = projection_matrix(jac)
        worst_sym = max(worst_sym, np.abs(p - p.T).max())
        pq = project_null(jac, q)
        worst_idem = max(worst_idem,
                         np.linalg.norm(project_null(jac, pq) - pq) / max(np.linalg.norm(q), 1.0))
    ok = worst_sym <= 1e-10 and worst_idem <= 1e-8
    return ok, f"symmetry {worst_sym:.3e} (tol 1e-10), idempotence {worst_idem:.3e} (tol 1e-8)"


def check_gradient_fidelity(seed: int = 3):
    """Autodiff gradient and Jacobian rows vs central finite differences."""
    problem = SpringProblem(widths=(1, 8, 8, 1))
    rng = np.random.default_rng(seed)
    theta = model.init_params(problem.spec, rng) + 0.05 * rng.standard_normal(problem.n)
    ev = problem.evaluate(theta)
    worst = 0.0
    for _ in range(20):
        v = rng.standard_normal(problem.n)
        v /= np.linalg.norm(v)
        step = 1e-5
        up = problem.evaluate(theta + step * v, need_jacobian=False)
        dn = problem.evaluate(theta - step * v, need_jacobian=False)
        fd = (up.f_est - dn.f_est) / (2 * step)
        worst = max(worst, abs(ev.g @ v - fd) / (1.0 + abs(fd)))
        fd_rows = (problem.evaluate(theta + step * v).c - problem.evaluate(theta - step * v).c) / (2 * step)
        worst = max(worst, np.abs(ev.J @ v - fd_rows).max() / (1.0 + np.abs(fd_rows).max()))
    return worst <= 1e-5, f"max relative gap {worst:.3e} (tol 1e-5)"


def check_jets(seed: int = 4):
    """Jet derivatives of a random net vs central finite differences in t."""
    spec = model.MlpSpec((1, 8, 8, 1))
    rng = np.random.default_rng(seed)
    theta = model.init_params(spec, rng) + 0.1 * rng.standard_normal(spec.n_params)
    ts = rng.uniform(0.1, 0.9, size=7)
    tape = ad.Tape()
    leaves = model.param_leaves(spec, theta, tape)
    jet = model.forward_jet(spec, leaves, tape, ts)
    step = 1e-4
    up = model.forward(spec, theta, (ts + step)[None, :])[0]
    dn = model.forward(spec, theta, (ts - step)[None, :])[0]
    mid = model.forward(spec, theta, ts[None, :])[0]
    fd1 = (up - dn) / (2 * step)
    fd2 = (up - 2 * mid + dn) / step ** 2
    e1 = np.abs(jet.d1.value[0] - fd1).max() / (1.0 + np.abs(fd1).max())
    e2 = np.abs(jet.d2.value[0] - fd2).max() / (1.0 + np.abs(fd2).max())
    ok = e1 <= 1e-4 and e2 <= 1e-4
    return ok, f"u' gap {e1:.3e}, u'' gap {e2:.3e} (tol 1e-4)"


def check_exact_solution_residual():
    """Closed-form oscillator solution satisfies the ODE on the grid."""
    cfg = SpringConfig()
    worst = max(abs(spring_residual_exact(t, cfg)) for t in np.linspace(0, 1, cfg.n_residual))
    return worst <= 1e-9, f"max |residual| {worst:.3e} (tol 1e-9)"


def check_series_caps():
    """Momentum weight sums stay strictly under their closed-form caps."""
    details = []
    ok = True
    for decay in (0.5, 0.9, 0.99):
        geo = check_geometric_sums(decay)
        root = check_sqrt_weighted_sums(decay)
        ok = ok and geo.strict and root.strict
        details.append(f"decay={decay}: geometric {'<' if geo.strict else '>='} caps, "
                       f"sqrt-weighted {'<' if root.strict else '>='} caps")
    return ok, "; ".join(details)


def check_tau_identity(samples: int = 100, seed: int = 5):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        rho_min = rng.uniform(0.05, 1.0)
        consts = TauConstants(
            sigma_min=rng.uniform(0.1, 10.0),
            rho_min=rho_min,
            rho_max=rng.uniform(rho_min, 1.0),
            kappa_grad=rng.uniform(0.1, 10.0),
        )
        tau = tau_from_constants(consts)
        lhs = 1.0 - tau * consts.kappa_grad * consts.rho_max / (consts.sigma_min * consts.rho_min)
        worst = max(worst, abs(lhs - tau))
    return worst <= 1e-12, f"max identity gap {worst:.3e} (tol 1e-12)"


def check_reduction_to_baseline(seed: int = 6):
    """Heavy-ball with beta=0, rho=1, h=1 reproduces the direct KKT step."""
    problem = circle_problem()
    hyper = CommonHyper(alpha=0.05, beta=0.0, rho=1.0, h=1.0)
    theta = np.array([0.3, 1.2])
    state = HeavyBallState.init(2)
    worst = 0.0
    for _ in range(50):
        ev = problem.evaluate(theta)
        d, state = heavyball_step(state, ev, hyper)
        s, _ = kkt_solve_direct(ev.J, ev.g, ev.c)
        worst = max(worst, np.linalg.norm(d - s) / (1.0 + np.linalg.norm(s)))
        theta = theta + hyper.alpha * d
    return worst <= 1e-7, f"max relative gap {worst:.3e} (tol 1e-7)"


def check_linearized_feasibility():
    """Short constrained runs keep J d = -rho c to tolerance."""
    worst = 0.0
    for optimizer in ("sqp-adam", "sqp-heavyball", "adam-con"):
        config = ExperimentConfig(problem="circle", optimizer=optimizer,
                                  iters=500, alpha=0.01, stride=100)
        worst = max(worst, run_experiment(config).max_feas_viol)
    return worst <= 1e-7, f"max scaled violation {worst:.3e} (tol 1e-7)"


ALL_CHECKS = (
    ("step decomposition vs direct KKT", check_step_decomposition),
    ("projected-gradient invariance of s", check_projected_ascent_invariance),
    ("projection symmetry and idempotence", check_projection_algebra),
    ("gradient fidelity vs finite differences", check_gradient_fidelity),
    ("input jets vs finite differences", check_jets),
    ("closed-form solution satisfies ODE", check_exact_solution_residual),
    ("momentum series caps", check_series_caps),
    ("merit weight identity", check_tau_identity),
    ("heavy-ball reduction to plain SQP", check_reduction_to_baseline),
    ("linearized feasibility along runs", check_linearized_feasibility),
)


def run_all_checks(report=print) -> bool:
    all_ok = True
    for name, fn in ALL_CHECKS:
        ok, detail = fn()
        all_ok = all_ok and ok
        report(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return all_ok
