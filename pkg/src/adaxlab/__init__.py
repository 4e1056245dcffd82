"""Adaptive optimizers with long-term gradient memory, the synthetic
problems that separate them from Adam-style forgetting, closed-form
diagnostics, and a small MLP training harness."""

from .optim import (
    ADAPTIVE,
    ADAX_FAMILY,
    BoxDomain,
    KINDS,
    NumericsError,
    OptimizerConfig,
    OptimizerState,
    UpdateStep,
    adax_bias_correct,
    apply_step,
    first_moment,
    growth_correction,
    project_box,
    schedules,
    second_moment,
)
from .oracle import (
    DiagnosticRecord,
    adam_step_lower_bound,
    adam_vt_closed,
    adax_ratio_bound,
    adax_vhat_closed,
    amsgrad_tmax,
    avg_second_moment,
    diagnostics,
    first_crossing,
    gamma_diag,
    mc_bias_check,
)
from .nn import (
    Dataset,
    MlpClassifier,
    MlpParams,
    TrainReport,
    forward_backward,
    init_params,
    make_blobs,
    train,
)
from .problems import (
    DecayProblem,
    QuadraticProblem,
    ReddiProblem,
    Trajectory,
    regret,
    regret_series,
    run,
)

__all__ = [
    "ADAPTIVE",
    "ADAX_FAMILY",
    "BoxDomain",
    "Dataset",
    "DecayProblem",
    "DiagnosticRecord",
    "KINDS",
    "MlpClassifier",
    "MlpParams",
    "NumericsError",
    "OptimizerConfig",
    "OptimizerState",
    "QuadraticProblem",
    "ReddiProblem",
    "Trajectory",
    "TrainReport",
    "UpdateStep",
    "adam_step_lower_bound",
    "adam_vt_closed",
    "adax_bias_correct",
    "adax_ratio_bound",
    "adax_vhat_closed",
    "amsgrad_tmax",
    "apply_step",
    "avg_second_moment",
    "diagnostics",
    "first_crossing",
    "first_moment",
    "forward_backward",
    "gamma_diag",
    "growth_correction",
    "init_params",
    "make_blobs",
    "mc_bias_check",
    "project_box",
    "regret",
    "regret_series",
    "run",
    "schedules",
    "second_moment",
    "train",
]

__version__ = "0.1.0"
