"""Equality-constrained stochastic optimization with projected momentum.

The library couples a null-space step decomposition (normal step toward the
linearized constraints plus a projected tangential step) with heavy-ball
and Adam-style momentum that runs on projected gradient estimates, a small
reverse-mode tape with second-order input jets for residual-constrained
training problems, and a seeded benchmark harness that writes trajectory
CSVs.
"""

from .errors import (
    ConfigInvalid,
    DimensionMismatch,
    DivisionByZero,
    EmptyTrajectory,
    NotPositiveDefinite,
    Overdamped,
    ProjSqpError,
)
from .linalg import (
    CholeskyFactor,
    JacobianFactor,
    cholesky_solve,
    kkt_solve_direct,
    normal_step,
    project_null,
    projection_matrix,
)
from .autodiff import Jet2, Node, Tape, ValueJet, backward, jet_propagate
from .model import MlpSpec, forward, init_params, load_params, save_params
from .problems import (
    BatchSpec,
    BatchStream,
    CircleProblem,
    LinearProblem,
    ProblemEval,
    SpringConfig,
    SpringProblem,
    circle_problem,
    linear_problem,
    make_problem,
    spring_exact,
    spring_exact_jet,
)
from .optimizers import (
    AdamState,
    CommonHyper,
    HeavyBallState,
    adam_con_step,
    adam_sqp_step,
    adam_unc_step,
    bias_correction,
    heavyball_step,
    make_stepper,
    sqp_baseline_step,
)
from .metrics import (
    RunningAverage,
    StationarityReport,
    TauConstants,
    estimate_constants,
    merit,
    stationarity,
    tau_from_constants,
)
from .harness import (
    ExperimentConfig,
    RunResult,
    TrajectoryRecord,
    config_from_mapping,
    run_experiment,
    run_sweep,
)
from .series import check_geometric_sums, check_sqrt_weighted_sums

__version__ = "0.1.0"
