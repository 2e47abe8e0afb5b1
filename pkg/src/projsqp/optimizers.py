"""Constrained and unconstrained momentum steppers behind one interface.

Every constrained step is assembled from two pieces computed fresh each
iteration: a normal component that moves toward the linearized constraint
manifold (scaled by rho), and a tangential component built from projected
gradient information.  The steppers differ only in how momentum and
diagonal scaling shape the tangential part:

* heavy-ball: running sum of projected, h-scaled negative gradients,
  projected once more before use;
* projected Adam: same running sum plus a second-moment vector of the
  projected steps, with the bias-corrected step factor
  (1-b1) sqrt(1-b2^k) / sqrt(1-b2), which is nondecreasing in k;
* projection-less Adam: momentum accumulates raw gradients, and only the
  assembled direction is projected;
* unconstrained Adam: no constraints, no projection;
* plain SQP: no momentum at all, the direction solves the identity-Hessian
  KKT system directly (the deterministic baseline and oracle).

State is tiny (momentum vectors and a counter) and owned by one run at a
time; projections and factorizations are never cached across iterations
because the iterate moves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .linalg import JacobianFactor, kkt_solve_direct
from .problems import ProblemEval

Schedule = Union[float, Callable[[int], float]]


@dataclass(frozen=True)
class CommonHyper:
    """Shared hyperparameters; constant rho/h by default, callables allowed."""

    alpha: float
    beta: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    rho: Schedule = 1.0
    h: Schedule = 1.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must be in [0, 1), got {self.beta}")
        if not 0.0 <= self.beta1 < 1.0:
            raise ValueError(f"beta1 must be in [0, 1), got {self.beta1}")
        if not self.beta1 < self.beta2 < 1.0:
            raise ValueError(
                f"beta2 must be in (beta1, 1), got beta2={self.beta2}, beta1={self.beta1}"
            )
        if self.eps <= 0.0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        for name, value in (("rho", self.rho), ("h", self.h)):
            if not callable(value):
                self._check_schedule_value(name, float(value))

    @staticmethod
    def _check_schedule_value(name: str, value: float) -> float:
        if name == "rho" and not 0.0 < value <= 1.0:
            raise ValueError(f"rho values must be in (0, 1], got {value}")
        if name == "h" and value <= 0.0:
            raise ValueError(f"h values must be positive, got {value}")
        return value

    def rho_at(self, k: int) -> float:
        value = self.rho(k) if callable(self.rho) else self.rho
        return self._check_schedule_value("rho", float(value))

    def h_at(self, k: int) -> float:
        value = self.h(k) if callable(self.h) else self.h
        return self._check_schedule_value("h", float(value))


@dataclass
class HeavyBallState:
    """Momentum vector r (starts at zero) and the iteration counter."""

    r: np.ndarray
    k: int = 0

    @classmethod
    def init(cls, n: int) -> "HeavyBallState":
        return cls(r=np.zeros(n), k=0)


@dataclass
class AdamState:
    """First momentum r, second momentum s (componentwise >= 0), counter."""

    r: np.ndarray
    s: np.ndarray
    k: int = 0

    @classmethod
    def init(cls, n: int) -> "AdamState":
        return cls(r=np.zeros(n), s=np.zeros(n), k=0)


def bias_correction(k: int, beta1: float, beta2: float) -> float:
    """Step factor (1-b1) sqrt(1-b2^k) / sqrt(1-b2); nondecreasing in k."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return (1.0 - beta1) * math.sqrt(1.0 - beta2 ** k) / math.sqrt(1.0 - beta2)


class _NoConstraints:
    """Projector stand-in for an empty constraint set."""

    def project(self, q):
        return q

    def normal_step(self, c, rho):
        return 0.0


def _projector(ev: ProblemEval, jitter: bool):
    if ev.J is None or ev.J.shape[0] == 0:
        return _NoConstraints()
    return JacobianFactor(ev.J, jitter=jitter)


def heavyball_step(state: HeavyBallState, ev: ProblemEval, hyper: CommonHyper,
                   jitter: bool = False) -> tuple[np.ndarray, HeavyBallState]:
    """One heavy-ball step: d = v + P(beta r + u), u = -P g / h.

    The caller applies the update x <- x + alpha d.
    """
    k = state.k + 1
    proj = _projector(ev, jitter)
    v = proj.normal_step(ev.c, hyper.rho_at(k))
    u = (-1.0 / hyper.h_at(k)) * proj.project(ev.g)
    r = hyper.beta * state.r + u
    d = v + proj.project(r)
    return d, HeavyBallState(r=r, k=k)


def adam_sqp_step(state: AdamState, ev: ProblemEval, hyper: CommonHyper,
                  jitter: bool = False) -> tuple[np.ndarray, AdamState]:
    """One projected-Adam step.

    Both running averages are fed the projected step u = -P g / h, and the
    diagonally rescaled momentum is projected again before it joins the
    normal component: d = v + eta_k P [r / sqrt(s + eps)].
    """
    k = state.k + 1
    proj = _projector(ev, jitter)
    v = proj.normal_step(ev.c, hyper.rho_at(k))
    u = (-1.0 / hyper.h_at(k)) * proj.project(ev.g)
    r = hyper.beta1 * state.r + u
    s = hyper.beta2 * state.s + u * u
    eta = bias_correction(k, hyper.beta1, hyper.beta2)
    d = v + eta * proj.project(r / np.sqrt(s + hyper.eps))
    return d, AdamState(r=r, s=s, k=k)


def adam_con_step(state: AdamState, ev: ProblemEval, hyper: CommonHyper,
                  jitter: bool = False) -> tuple[np.ndarray, AdamState]:
    """Projection-less Adam: momentum accumulates the raw gradient.

    Only the assembled direction is projected, so linearized feasibility
    still holds, but the running averages carry range-space components the
    projected variant filters out.
    """
    k = state.k + 1
    proj = _projector(ev, jitter)
    v = proj.normal_step(ev.c, hyper.rho_at(k))
    u = (-1.0 / hyper.h_at(k)) * ev.g
    r = hyper.beta1 * state.r + u
    s = hyper.beta2 * state.s + u * u
    eta = bias_correction(k, hyper.beta1, hyper.beta2)
    d = v + eta * proj.project(r / np.sqrt(s + hyper.eps))
    return d, AdamState(r=r, s=s, k=k)


def adam_unc_step(state: AdamState, g: np.ndarray, hyper: CommonHyper
                  ) -> tuple[np.ndarray, AdamState]:
    """Unconstrained Adam; identical to the projected step with no
    constraints (v = 0 and identity projection)."""
    k = state.k + 1
    u = (-1.0 / hyper.h_at(k)) * np.asarray(g, dtype=float)
    r = hyper.beta1 * state.r + u
    s = hyper.beta2 * state.s + u * u
    eta = bias_correction(k, hyper.beta1, hyper.beta2)
    d = eta * (r / np.sqrt(s + hyper.eps))
    return d, AdamState(r=r, s=s, k=k)


def sqp_baseline_step(state: HeavyBallState, ev: ProblemEval, hyper: CommonHyper,
                      jitter: bool = False) -> tuple[np.ndarray, HeavyBallState]:
    """Deterministic identity-Hessian SQP direction from the full KKT solve.

    Equivalent to heavy-ball with beta = 0, rho = 1, h = 1; kept separate
    because it doubles as the oracle for the decomposed steppers.
    """
    d, _ = kkt_solve_direct(ev.J, ev.g, ev.c)
    return d, HeavyBallState(r=state.r, k=state.k + 1)


@dataclass(frozen=True)
class Stepper:
    """Uniform wrapper the harness iterates: state factory plus step."""

    optimizer_id: str
    init_state: Callable[[int], object]
    step: Callable
    needs_jacobian: bool
    has_eta: bool


def _adam_unc_adapter(state, ev, hyper, jitter=False):
    return adam_unc_step(state, ev.g, hyper)


STEPPERS = {
    "sqp-heavyball": Stepper("sqp-heavyball", HeavyBallState.init, heavyball_step,
                             needs_jacobian=True, has_eta=False),
    "sqp-adam": Stepper("sqp-adam", AdamState.init, adam_sqp_step,
                        needs_jacobian=True, has_eta=True),
    "adam-con": Stepper("adam-con", AdamState.init, adam_con_step,
                        needs_jacobian=True, has_eta=True),
    "adam-unc": Stepper("adam-unc", AdamState.init, _adam_unc_adapter,
                        needs_jacobian=False, has_eta=True),
    "sqp": Stepper("sqp", HeavyBallState.init, sqp_baseline_step,
                   needs_jacobian=True, has_eta=False),
}


def make_stepper(optimizer_id: str) -> Stepper:
    try:
        return STEPPERS[optimizer_id]
    except KeyError:
        raise ValueError(
            f"unknown optimizer id {optimizer_id!r}; choose from {sorted(STEPPERS)}"
        ) from None
