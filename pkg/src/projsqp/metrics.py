"""Stationarity and merit quantities reported along a run.

First-order optimality here means the projected full-batch gradient
vanishes and the constraints hold, so the tracked pair is
||P grad f||_2^2 and ||c||_1, always computed from exact gradients even
when training itself is mini-batched.  The merit function tau * f + ||c||_1
and the constant tau tying the two scales together are reporting
quantities only; no stepper consumes them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyTrajectory
from .linalg import JacobianFactor


@dataclass(frozen=True)
class StationarityReport:
    """One iterate's stationarity row; running_avg is the mean of
    h_max^-1 * proj_grad_sq + rho_min * cviol_l1 over iterations so far."""

    proj_grad_sq: float
    cviol_l1: float
    merit: float
    running_avg: float = float("nan")


@dataclass(frozen=True)
class TauConstants:
    """Problem constants (or empirical proxies) that set the merit weight."""

    sigma_min: float
    rho_min: float
    rho_max: float
    kappa_grad: float

    def __post_init__(self):
        if min(self.sigma_min, self.rho_min, self.rho_max, self.kappa_grad) <= 0.0:
            raise ValueError("all constants must be strictly positive")
        if not self.rho_min <= self.rho_max <= 1.0:
            raise ValueError("need rho_min <= rho_max <= 1")


def merit(f_value: float, c: np.ndarray, tau: float) -> float:
    """tau * f + ||c||_1."""
    if tau <= 0.0:
        raise ValueError(f"tau must be positive, got {tau}")
    return tau * float(f_value) + float(np.abs(np.asarray(c, dtype=float)).sum())


def tau_from_constants(constants: TauConstants) -> float:
    """tau = s r_min / (s r_min + k r_max), which balances the merit terms.

    Satisfies 1 - tau * k r_max / (s r_min) = tau identically.
    """
    a = constants.sigma_min * constants.rho_min
    return a / (a + constants.kappa_grad * constants.rho_max)


def stationarity(problem, theta, tau: float = 1.0,
                 running_avg: float = float("nan")) -> StationarityReport:
    """Stationarity row at an iterate, from the exact full-batch gradient."""
    ev = problem.evaluate_exact(theta)
    pg = JacobianFactor(ev.J).project(ev.g)
    return StationarityReport(
        proj_grad_sq=float(pg @ pg),
        cviol_l1=float(np.abs(ev.c).sum()),
        merit=merit(ev.f_est, ev.c, tau),
        running_avg=running_avg,
    )


class RunningAverage:
    """Sequential mean of h_max^-1 * proj_grad_sq + rho_min * cviol_l1.

    Terms are accumulated in arrival order so recomputing over a stored
    trajectory in the same order reproduces the value bit for bit.
    """

    def __init__(self, h_max: float, rho_min: float):
        if h_max <= 0.0 or not 0.0 < rho_min <= 1.0:
            raise ValueError("need h_max > 0 and rho_min in (0, 1]")
        self.h_max = h_max
        self.rho_min = rho_min
        self.total = 0.0
        self.count = 0

    def update(self, proj_grad_sq: float, cviol_l1: float) -> float:
        self.total += proj_grad_sq / self.h_max + self.rho_min * cviol_l1
        self.count += 1
        return self.total / self.count

    @property
    def value(self) -> float:
        if self.count == 0:
            raise EmptyTrajectory("no stationarity terms accumulated")
        return self.total / self.count


def estimate_constants(evals, rho_min: float = 1.0, rho_max: float = 1.0
                       ) -> TauConstants:
    """Empirical proxies from a trajectory of full-batch evaluations.

    sigma_min is the smallest singular value of J seen (via the eigenvalues
    of J J.T), kappa_grad the largest exact gradient norm.  These are
    trajectory estimates, not global constants; label them as such when
    reporting.
    """
    evals = list(evals)
    if not evals:
        raise EmptyTrajectory("cannot estimate constants from an empty trajectory")
    sigma_min = np.inf
    kappa = 0.0
    for ev in evals:
        eigs = np.linalg.eigvalsh(ev.J @ ev.J.T)
        sigma_min = min(sigma_min, float(np.sqrt(max(eigs.min(), 0.0))))
        kappa = max(kappa, float(np.linalg.norm(ev.g)))
    return TauConstants(sigma_min=sigma_min, rho_min=rho_min,
                        rho_max=rho_max, kappa_grad=kappa)
