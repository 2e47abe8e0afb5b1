"""Equality-constrained test problems.

Each problem exposes one evaluation interface: a stochastic objective
estimate with its gradient, plus exact constraint values and the constraint
Jacobian.  Constraints are never subsampled; only the objective may be.

Two analytic fixtures with known solutions (a circle-constrained quadratic
and a linearly-constrained quadratic) support oracle tests, and the main
problem trains a small tanh network on a damped-oscillator ODE: data-fit
plus weighted mean squared residual as the objective, with the residual
pinned to zero at a few fixed times as hard constraints.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import model
from .autodiff import ValueJet
from .errors import DimensionMismatch, Overdamped


@dataclass
class ProblemEval:
    """One evaluation at an iterate.

    f_est and g are the (possibly mini-batch) objective estimate and its
    gradient; c and J are always the full constraint values and Jacobian.
    J may be None when the caller asked to skip it (unconstrained steppers).
    """

    f_est: float
    g: np.ndarray
    c: np.ndarray
    J: np.ndarray | None


@dataclass(frozen=True)
class BatchSpec:
    """Fraction of objective sample points used per iteration."""

    fraction: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError(f"batch fraction must be in (0, 1], got {self.fraction}")

    def batch_size(self, n_points: int) -> int:
        size = int(round(self.fraction * n_points))
        if size < 1:
            raise ValueError(
                f"fraction {self.fraction} of {n_points} points leaves an empty batch"
            )
        return size


class BatchStream:
    """Without-replacement mini-batch indices, reshuffled every epoch."""

    def __init__(self, n_points: int, batch_size: int, rng: np.random.Generator):
        if not 1 <= batch_size <= n_points:
            raise ValueError(f"batch size {batch_size} out of range 1..{n_points}")
        self.n_points = n_points
        self.batch_size = batch_size
        self.rng = rng
        self._order = np.arange(n_points)
        self._pos = n_points  # force a shuffle on first use

    @property
    def batches_per_epoch(self) -> int:
        return math.ceil(self.n_points / self.batch_size)

    def next_indices(self) -> np.ndarray:
        if self._pos >= self.n_points:
            self._order = self.rng.permutation(self.n_points)
            self._pos = 0
        idx = self._order[self._pos:self._pos + self.batch_size]
        self._pos += self.batch_size
        return idx


class CircleProblem:
    """min (x1-2)^2 + x2^2 subject to x1^2 + x2^2 = 1.

    Unique minimizer (1, 0) with multiplier 1.  Gradient noise, when
    enabled, is isotropic Gaussian added to the exact gradient.
    """

    n = 2
    m = 1
    solution = np.array([1.0, 0.0])
    multiplier = np.array([1.0])

    def __init__(self, noise_sigma: float = 0.0):
        if noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        self.noise_sigma = noise_sigma

    def evaluate(self, theta, rng=None, indices=None, need_jacobian=True) -> ProblemEval:
        x0, x1 = float(theta[0]), float(theta[1])
        f = (x0 - 2.0) ** 2 + x1 * x1
        g = np.array([2.0 * (x0 - 2.0), 2.0 * x1])
        if self.noise_sigma > 0.0:
            if rng is None:
                raise ValueError("noise_sigma > 0 needs an rng")
            g = g + self.noise_sigma * rng.standard_normal(2)
        c = np.array([x0 * x0 + x1 * x1 - 1.0])
        jac = np.array([[2.0 * x0, 2.0 * x1]]) if need_jacobian else None
        return ProblemEval(f, g, c, jac)

    def evaluate_exact(self, theta) -> ProblemEval:
        x0, x1 = float(theta[0]), float(theta[1])
        return ProblemEval(
            (x0 - 2.0) ** 2 + x1 * x1,
            np.array([2.0 * (x0 - 2.0), 2.0 * x1]),
            np.array([x0 * x0 + x1 * x1 - 1.0]),
            np.array([[2.0 * x0, 2.0 * x1]]),
        )


class LinearProblem:
    """min 0.5 ||x||^2 subject to x1 + x2 = 1.

    Minimizer (0.5, 0.5) with multiplier -0.5; the Jacobian is constant so
    the null-space projector is the same at every iterate.
    """

    n = 2
    m = 1
    solution = np.array([0.5, 0.5])
    multiplier = np.array([-0.5])

    def __init__(self, noise_sigma: float = 0.0):
        if noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        self.noise_sigma = noise_sigma

    def evaluate(self, theta, rng=None, indices=None, need_jacobian=True) -> ProblemEval:
        x = np.asarray(theta, dtype=float)
        g = x.copy()
        if self.noise_sigma > 0.0:
            if rng is None:
                raise ValueError("noise_sigma > 0 needs an rng")
            g = g + self.noise_sigma * rng.standard_normal(2)
        c = np.array([x[0] + x[1] - 1.0])
        jac = np.array([[1.0, 1.0]]) if need_jacobian else None
        return ProblemEval(0.5 * float(x @ x), g, c, jac)

    def evaluate_exact(self, theta) -> ProblemEval:
        x = np.asarray(theta, dtype=float)
        return ProblemEval(
            0.5 * float(x @ x), x.copy(),
            np.array([x[0] + x[1] - 1.0]), np.array([[1.0, 1.0]]),
        )


@dataclass(frozen=True)
class SpringConfig:
    """Damped harmonic oscillator setup: m u'' + mu u' + k u = 0 on [0, 1].

    Defaults give the under-damped regime (decay rate 2, angular frequency
    sqrt(396)); the closed-form solution has amplitude and phase chosen
    here since they only rescale the data.
    """

    mass: float = 1.0
    friction: float = 4.0
    stiffness: float = 400.0
    amplitude: float = 0.5
    phase: float = 0.0
    n_residual: int = 30
    n_data: int = 10
    data_end: float = 0.4
    constraint_times: tuple[float, ...] = (4.0 / 29.0, 12.0 / 29.0, 21.0 / 29.0)
    residual_weight: float = 1e-4

    @property
    def decay(self) -> float:
        return self.friction / (2.0 * self.mass)

    @property
    def natural_freq(self) -> float:
        return math.sqrt(self.stiffness / self.mass)

    def __post_init__(self):
        if self.natural_freq ** 2 <= self.decay ** 2:
            raise Overdamped(
                f"w0^2 = {self.natural_freq ** 2:g} must exceed delta^2 = {self.decay ** 2:g}"
            )


def spring_exact(t, config: SpringConfig = SpringConfig()) -> np.ndarray:
    """Closed-form under-damped solution u(t) = exp(-dt) 2A cos(phi + w t)."""
    t = np.asarray(t, dtype=float)
    w = math.sqrt(config.natural_freq ** 2 - config.decay ** 2)
    return np.exp(-config.decay * t) * (
        2.0 * config.amplitude * np.cos(config.phase + t * w)
    )


def spring_exact_jet(t: float, config: SpringConfig = SpringConfig()) -> ValueJet:
    """(u, u', u'') of the closed form at one time, via jet arithmetic."""
    w = math.sqrt(config.natural_freq ** 2 - config.decay ** 2)
    tj = ValueJet(float(t), 1.0, 0.0)
    return ((-config.decay) * tj).exp() * (
        (config.phase + w * tj).cos() * (2.0 * config.amplitude)
    )


def spring_residual_exact(t: float, config: SpringConfig = SpringConfig()) -> float:
    """ODE residual of the closed-form solution (analytically zero)."""
    jet = spring_exact_jet(t, config)
    return config.mass * jet.d2 + config.friction * jet.d1 + config.stiffness * jet.val


class SpringProblem:
    """Train a one-input tanh network against the oscillator ODE.

    Objective: mean squared error on a few early-time solution samples plus
    a small weight times the mean squared ODE residual over (a batch of)
    collocation points.  Constraints: the residual itself at three fixed
    times, held at zero exactly.
    """

    def __init__(self, config: SpringConfig = SpringConfig(),
                 widths: tuple[int, ...] = (1, 32, 32, 32, 1)):
        self.config = config
        self.spec = model.MlpSpec(widths)
        self.n = self.spec.n_params
        self.m = len(config.constraint_times)
        self.residual_times = np.linspace(0.0, 1.0, config.n_residual)
        self.data_times = np.linspace(0.0, config.data_end, config.n_data)
        self.data_targets = spring_exact(self.data_times, config)
        self.constraint_times_arr = np.asarray(config.constraint_times, dtype=float)
        self.n_batch_points = config.n_residual

    def evaluate(self, theta, rng=None, indices=None, need_jacobian=True) -> ProblemEval:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n,):
            raise DimensionMismatch(f"theta has shape {theta.shape}, need ({self.n},)")
        idx = np.arange(self.config.n_residual) if indices is None else np.asarray(indices)
        cfg = self.config

        # Objective tape: mean squared residual over the batch plus data fit.
        tape = ad.Tape()
        leaves = model.param_leaves(self.spec, theta, tape)
        jet = model.forward_jet_stacked(self.spec, leaves, tape, self.residual_times[idx])
        resid = ad.jet_combine(jet, cfg.stiffness, cfg.friction, cfg.mass)
        res_term = ad.mean(ad.square(resid))
        pred = model.forward_on_tape(self.spec, leaves, tape, self.data_times[None, :])
        err = ad.sub(pred, tape.constant(self.data_targets[None, :]))
        f_node = ad.add(ad.mean(ad.square(err)), ad.mul(res_term, cfg.residual_weight))
        g = model.grads_to_flat(self.spec, ad.backward(tape, f_node))

        if need_jacobian:
            c, jac = self._constraints_with_rows(theta)
        else:
            c = self.constraint_values(theta)
            jac = None
        return ProblemEval(float(f_node.value), g, c, jac)

    def _constraints_with_rows(self, theta) -> tuple[np.ndarray, np.ndarray]:
        # Constraints get their own small tape over just the pinned times;
        # its graph is columnwise, so one sweep yields all Jacobian rows.
        tape = ad.Tape()
        leaves = model.param_leaves(self.spec, theta, tape)
        jet = model.forward_jet_stacked(self.spec, leaves, tape, self.constraint_times_arr)
        resid = ad.jet_combine(jet, self.config.stiffness, self.config.friction,
                               self.config.mass)
        per_leaf = ad.backward_columns(tape, resid)
        jac = np.concatenate([g.reshape(self.m, -1) for g in per_leaf], axis=1)
        return resid.value[0].copy(), jac

    def constraint_values(self, theta) -> np.ndarray:
        """Residuals at the pinned times, values only."""
        u0, u1, u2 = model.forward_jet_values(self.spec, theta, self.constraint_times_arr)
        cfg = self.config
        return cfg.mass * u2 + cfg.friction * u1 + cfg.stiffness * u0

    def evaluate_exact(self, theta) -> ProblemEval:
        return self.evaluate(theta)

    def predict(self, theta, t) -> np.ndarray:
        return model.forward(self.spec, theta, np.atleast_1d(np.asarray(t, float))[None, :])[0]

    def test_mse(self, theta, n_grid: int = 200) -> float:
        """Mean squared error against the closed form on a uniform grid."""
        grid = np.linspace(0.0, 1.0, n_grid)
        pred = self.predict(theta, grid)
        return float(np.mean((pred - spring_exact(grid, self.config)) ** 2))

    def dump_training_data(self, path) -> None:
        """Write the training setup (times, targets, constraint times) as CSV."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["kind", "t", "target"])
            for t, y in zip(self.data_times, self.data_targets):
                writer.writerow(["data", repr(float(t)), repr(float(y))])
            for t in self.residual_times:
                writer.writerow(["residual", repr(float(t)), ""])
            for t in self.constraint_times_arr:
                writer.writerow(["constraint", repr(float(t)), ""])


def circle_problem(noise_sigma: float = 0.0) -> CircleProblem:
    return CircleProblem(noise_sigma)


def linear_problem(noise_sigma: float = 0.0) -> LinearProblem:
    return LinearProblem(noise_sigma)


def make_problem(problem_id: str, noise_sigma: float = 0.0,
                 widths: tuple[int, ...] = (1, 32, 32, 32, 1),
                 spring_config: SpringConfig | None = None):
    """Build a problem from its harness identifier."""
    if problem_id == "circle":
        return CircleProblem(noise_sigma)
    if problem_id == "linear":
        return LinearProblem(noise_sigma)
    if problem_id == "spring":
        return SpringProblem(spring_config or SpringConfig(), widths)
    raise ValueError(f"unknown problem id {problem_id!r}")
