"""Experiment runner: config parsing, seeded runs, trajectory CSV output.

A run is a pure function of its config: one root seed expands into named
sub-streams (init, batch, noise) through fixed spawn keys, so adding a new
stream later cannot perturb existing ones, and re-running a config yields
byte-identical CSV output.  Because of that contract, wall-clock timing is
off by default (the wall_s column records 0.0); enable `timing=on` when
cost measurements matter more than byte-level reproducibility.

Config files are flat key=value lines; the CLI can override any key with
repeated `--set key=value` flags.
"""

from __future__ import annotations

import math
import struct
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import model
from .errors import ConfigInvalid, EmptyTrajectory, NotPositiveDefinite, ProjSqpError
from .linalg import JacobianFactor
from .metrics import RunningAverage, merit
from .optimizers import AdamState, CommonHyper, HeavyBallState, bias_correction, make_stepper
from .problems import BatchSpec, BatchStream, SpringConfig, make_problem

CSV_HEADER = "k,f,cviol_l1,proj_grad_sq,merit,dnorm,eta,wall_s"

# Fixed spawn keys per named stream; order is append-only.
STREAM_IDS = {"init": 0, "batch": 1, "noise": 2}

PROBLEM_IDS = ("circle", "linear", "spring")
OPTIMIZER_IDS = ("sqp-heavyball", "sqp-adam", "adam-con", "adam-unc", "sqp")

_DEFAULT_X0 = {"circle": (0.0, 1.0), "linear": (1.0, 0.0)}


def substream(root_seed: int, name: str) -> np.random.Generator:
    """Counter-split child generator for one named stream."""
    key = STREAM_IDS[name]
    return np.random.default_rng(np.random.SeedSequence(root_seed, spawn_key=(key,)))


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str
    optimizer: str
    iters: int
    alpha: float
    beta: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    rho: float = 1.0
    h: float = 1.0
    batch_fraction: float = 1.0
    seed: int = 0
    stride: int = 1
    out: str | None = None
    noise_sigma: float = 0.0
    widths: tuple[int, ...] = (1, 32, 32, 32, 1)
    residual_weight: float = 1e-4
    merit_tau: float = 1.0
    x0: tuple[float, ...] | None = None
    jitter: bool = False
    timing: bool = False

    def validate(self) -> None:
        if self.problem not in PROBLEM_IDS:
            raise ConfigInvalid("problem", f"unknown id {self.problem!r}, choose from {PROBLEM_IDS}")
        if self.optimizer not in OPTIMIZER_IDS:
            raise ConfigInvalid("optimizer", f"unknown id {self.optimizer!r}, choose from {OPTIMIZER_IDS}")
        if self.iters < 1:
            raise ConfigInvalid("iters", f"need at least 1 iteration, got {self.iters}")
        if self.stride < 1:
            raise ConfigInvalid("stride", f"stride must be >= 1, got {self.stride}")
        if not 0.0 < self.batch_fraction <= 1.0:
            raise ConfigInvalid("batch_fraction", f"must be in (0, 1], got {self.batch_fraction}")
        if self.noise_sigma < 0.0:
            raise ConfigInvalid("noise_sigma", f"must be nonnegative, got {self.noise_sigma}")
        if self.merit_tau <= 0.0:
            raise ConfigInvalid("merit_tau", f"must be positive, got {self.merit_tau}")
        if self.x0 is not None and self.problem != "spring" and len(self.x0) != 2:
            raise ConfigInvalid("x0", f"analytic problems take 2 coordinates, got {len(self.x0)}")
        try:
            self.hyper()
        except ValueError as exc:
            raise ConfigInvalid("hyper", str(exc)) from None

    def hyper(self) -> CommonHyper:
        return CommonHyper(alpha=self.alpha, beta=self.beta, beta1=self.beta1,
                           beta2=self.beta2, eps=self.eps, rho=self.rho, h=self.h)

    def group_label(self) -> str:
        """Identity of a sweep group: everything except seed and out path."""
        parts = [
            f"problem={self.problem}", f"optimizer={self.optimizer}",
            f"iters={self.iters}", f"alpha={self.alpha!r}",
            f"batch_fraction={self.batch_fraction!r}", f"noise_sigma={self.noise_sigma!r}",
        ]
        return ";".join(parts)


@dataclass(frozen=True)
class TrajectoryRecord:
    k: int
    f_full: float
    cviol_l1: float
    proj_grad_sq: float
    merit: float
    dnorm: float
    eta: float
    wall_s: float

    def csv_row(self) -> str:
        return ",".join(
            [str(self.k)]
            + [repr(float(v)) for v in (self.f_full, self.cviol_l1, self.proj_grad_sq,
                                        self.merit, self.dnorm, self.eta, self.wall_s)]
        )


@dataclass
class RunResult:
    config: ExperimentConfig
    records: list[TrajectoryRecord]
    final_theta: np.ndarray
    final_state: object
    max_feas_viol: float
    running_avg: float
    iters_per_epoch: int
    csv_path: str | None = None
    checkpoint_path: str | None = None

    @property
    def final_record(self) -> TrajectoryRecord:
        if not self.records:
            raise EmptyTrajectory("run produced no records")
        return self.records[-1]


def _coerce(field_name: str, raw: str, kind):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "on", "yes"):
                return True
            if low in ("0", "false", "off", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind is tuple:
            return tuple(float(x) if "." in x or "e" in x.lower() else int(x)
                         for x in raw.split(","))
        return kind(raw)
    except ValueError as exc:
        raise ConfigInvalid(field_name, str(exc)) from None


_FIELD_TYPES = {
    "problem": str, "optimizer": str, "iters": int, "alpha": float,
    "beta": float, "beta1": float, "beta2": float, "eps": float,
    "rho": float, "h": float, "batch_fraction": float, "seed": int,
    "stride": int, "out": str, "noise_sigma": float, "widths": tuple,
    "residual_weight": float, "merit_tau": float, "x0": tuple,
    "jitter": bool, "timing": bool,
}


def parse_config_file(path) -> dict[str, str]:
    """Flat key=value lines; '#' starts a comment, blank lines ignored."""
    mapping: dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigInvalid(f"line {lineno}", f"expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            mapping[key.strip()] = value.strip()
    return mapping


def apply_overrides(mapping: dict[str, str], overrides) -> dict[str, str]:
    out = dict(mapping)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigInvalid("--set", f"expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def iters_per_epoch(problem_id: str, batch_fraction: float) -> int:
    """One epoch is one full pass over the objective's sample points."""
    if problem_id != "spring":
        return 1
    n_points = SpringConfig().n_residual
    batch = BatchSpec(batch_fraction).batch_size(n_points)
    return math.ceil(n_points / batch)


def config_from_mapping(mapping: dict[str, str]) -> ExperimentConfig:
    values = {}
    epochs = None
    for key, raw in mapping.items():
        if key == "epochs":
            epochs = _coerce("epochs", raw, int)
            continue
        if key not in _FIELD_TYPES:
            raise ConfigInvalid(key, "unknown config key")
        values[key] = _coerce(key, raw, _FIELD_TYPES[key])
    if epochs is not None:
        if "iters" in values:
            raise ConfigInvalid("epochs", "give either epochs or iters, not both")
        if epochs < 1:
            raise ConfigInvalid("epochs", f"need at least 1 epoch, got {epochs}")
        values["iters"] = epochs * iters_per_epoch(
            values.get("problem", ""), values.get("batch_fraction", 1.0)
        )
    missing = [k for k in ("problem", "optimizer", "iters", "alpha") if k not in values]
    if missing:
        raise ConfigInvalid(missing[0], "required key missing")
    config = ExperimentConfig(**values)
    config.validate()
    return config


def _initial_theta(config: ExperimentConfig, problem) -> np.ndarray:
    if config.problem == "spring":
        return model.init_params(problem.spec, substream(config.seed, "init"))
    x0 = config.x0 if config.x0 is not None else _DEFAULT_X0[config.problem]
    return np.asarray(x0, dtype=float)


def run_experiment(config: ExperimentConfig) -> RunResult:
    """Iterate the configured stepper; deterministic for a fixed config."""
    config.validate()
    problem = make_problem(
        config.problem,
        noise_sigma=config.noise_sigma,
        widths=config.widths,
        spring_config=(SpringConfig(residual_weight=config.residual_weight)
                       if config.problem == "spring" else None),
    )
    stepper = make_stepper(config.optimizer)
    hyper = config.hyper()
    theta = _initial_theta(config, problem)
    state = stepper.init_state(problem.n)

    batch_stream = None
    if config.problem == "spring" and config.batch_fraction < 1.0:
        size = BatchSpec(config.batch_fraction).batch_size(problem.n_batch_points)
        batch_stream = BatchStream(problem.n_batch_points, size, substream(config.seed, "batch"))
    noise_rng = substream(config.seed, "noise") if config.noise_sigma > 0.0 else None
    exact_per_iter = noise_rng is None and batch_stream is None and stepper.needs_jacobian

    records: list[TrajectoryRecord] = []
    run_avg = RunningAverage(h_max=config.h, rho_min=config.rho)
    max_feas = 0.0
    t0 = time.perf_counter()

    for k in range(1, config.iters + 1):
        indices = batch_stream.next_indices() if batch_stream is not None else None
        ev = problem.evaluate(theta, rng=noise_rng, indices=indices,
                              need_jacobian=stepper.needs_jacobian)
        try:
            d, state = stepper.step(state, ev, hyper, jitter=config.jitter)
        except NotPositiveDefinite as exc:
            raise NotPositiveDefinite(f"iteration {k}: {exc}") from None

        if stepper.needs_jacobian:
            resid = ev.J @ d + hyper.rho_at(k) * ev.c
            feas = float(np.abs(resid).max() / (1.0 + np.abs(ev.c).max()))
            if feas > max_feas:
                max_feas = feas

        if k % config.stride == 0 or k == config.iters:
            exact = ev if exact_per_iter else problem.evaluate_exact(theta)
            pg = JacobianFactor(exact.J).project(exact.g)
            pg_sq = float(pg @ pg)
            cviol = float(np.abs(exact.c).sum())
            records.append(TrajectoryRecord(
                k=k,
                f_full=float(exact.f_est),
                cviol_l1=cviol,
                proj_grad_sq=pg_sq,
                merit=merit(exact.f_est, exact.c, config.merit_tau),
                dnorm=float(np.linalg.norm(d)),
                eta=(bias_correction(k, config.beta1, config.beta2)
                     if stepper.has_eta else float("nan")),
                wall_s=(time.perf_counter() - t0 if config.timing else 0.0),
            ))
            run_avg.update(pg_sq, cviol)

        theta = theta + config.alpha * d

    result = RunResult(
        config=config,
        records=records,
        final_theta=theta,
        final_state=state,
        max_feas_viol=max_feas,
        running_avg=run_avg.value,
        iters_per_epoch=iters_per_epoch(config.problem, config.batch_fraction),
    )
    if config.out:
        result.csv_path = f"{config.out}.csv"
        result.checkpoint_path = f"{config.out}.ckpt"
        write_trajectory_csv(result.csv_path, records)
        save_checkpoint(result.checkpoint_path, config, theta, state)
    return result


def write_trajectory_csv(path, records) -> None:
    lines = [CSV_HEADER] + [rec.csv_row() for rec in records]
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


_CKPT_MAGIC = b"PSC1"
_STATE_KINDS = {"heavyball": 0, "adam": 1}


def save_checkpoint(path, config: ExperimentConfig, theta: np.ndarray, state) -> None:
    """Run checkpoint: widths (int32, count first), parameters and optimizer
    state as little-endian float64.  Analytic problems store zero widths."""
    widths = config.widths if config.problem == "spring" else ()
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<i", len(widths)))
        if widths:
            fh.write(struct.pack(f"<{len(widths)}i", *widths))
        theta = np.asarray(theta, dtype=float)
        fh.write(struct.pack("<i", theta.size))
        fh.write(theta.astype("<f8").tobytes())
        if isinstance(state, AdamState):
            fh.write(struct.pack("<ii", _STATE_KINDS["adam"], state.k))
            fh.write(state.r.astype("<f8").tobytes())
            fh.write(state.s.astype("<f8").tobytes())
        else:
            fh.write(struct.pack("<ii", _STATE_KINDS["heavyball"], state.k))
            fh.write(state.r.astype("<f8").tobytes())


def load_checkpoint(path):
    """Returns (widths or None, theta, optimizer state)."""
    with open(path, "rb") as fh:
        if fh.read(4) != _CKPT_MAGIC:
            raise ValueError(f"not a run checkpoint: {path}")
        (n_widths,) = struct.unpack("<i", fh.read(4))
        widths = struct.unpack(f"<{n_widths}i", fh.read(4 * n_widths)) if n_widths else None
        (n,) = struct.unpack("<i", fh.read(4))
        theta = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
        kind, k = struct.unpack("<ii", fh.read(8))
        r = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
        if kind == _STATE_KINDS["adam"]:
            s = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
            state = AdamState(r=r, s=s, k=k)
        else:
            state = HeavyBallState(r=r, k=k)
    return widths, theta, state


@dataclass
class SweepOutcome:
    results: list[RunResult | None]
    errors: list[str | None]
    summary_rows: list[dict]
    summary_path: str | None = None


def _run_isolated(config: ExperimentConfig):
    try:
        return run_experiment(config), None
    except (ProjSqpError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def run_sweep(configs, n_jobs: int = 1, summary_path=None) -> SweepOutcome:
    """Run each config independently; failures are isolated and reported.

    Runs may execute in parallel (each owns its state and seed streams), and
    the per-run outputs are identical to sequential execution.
    """
    configs = list(configs)
    if not configs:
        raise EmptyTrajectory("sweep needs at least one config")
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            outcomes = list(pool.map(_run_isolated, configs))
    else:
        outcomes = [_run_isolated(cfg) for cfg in configs]
    results = [res for res, _ in outcomes]
    errors = [err for _, err in outcomes]

    groups: dict[str, list[RunResult]] = {}
    failures: dict[str, int] = {}
    for config, result in zip(configs, results):
        label = config.group_label()
        failures.setdefault(label, 0)
        if result is None:
            failures[label] += 1
        else:
            groups.setdefault(label, []).append(result)

    summary_rows = []
    for label in sorted(set(list(groups) + list(failures))):
        runs = groups.get(label, [])
        if not runs:
            raise EmptyTrajectory(f"group {label!r} has no successful runs")
        finals = np.array([
            [r.final_record.f_full, r.final_record.cviol_l1, r.final_record.proj_grad_sq]
            for r in runs
        ])
        std = finals.std(axis=0, ddof=1) if len(runs) > 1 else np.full(3, float("nan"))
        summary_rows.append({
            "group": label,
            "n": len(runs),
            "failures": failures.get(label, 0),
            "final_f_mean": float(finals[:, 0].mean()),
            "final_f_std": float(std[0]),
            "final_cviol_mean": float(finals[:, 1].mean()),
            "final_cviol_std": float(std[1]),
            "final_pg2_mean": float(finals[:, 2].mean()),
            "final_pg2_std": float(std[2]),
        })

    outcome = SweepOutcome(results=results, errors=errors, summary_rows=summary_rows)
    if summary_path:
        write_summary_csv(summary_path, summary_rows)
        outcome.summary_path = str(summary_path)
    return outcome


_SUMMARY_COLUMNS = ("group", "n", "failures", "final_f_mean", "final_f_std",
                    "final_cviol_mean", "final_cviol_std",
                    "final_pg2_mean", "final_pg2_std")


def write_summary_csv(path, rows) -> None:
    lines = [",".join(_SUMMARY_COLUMNS)]
    for row in rows:
        cells = []
        for col in _SUMMARY_COLUMNS:
            value = row[col]
            cells.append(repr(float(value)) if isinstance(value, float) else str(value))
        lines.append(",".join(cells))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
