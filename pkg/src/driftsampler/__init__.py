"""One-step neural samplers for Boltzmann distributions via smoothed-score drifting."""

from .drift import (
    DriftConfig,
    DriftField,
    drift_field,
    sampler_score_meanshift,
    target_drift_mc,
    target_drift_second_order,
)
from .energy import (
    EnergyTarget,
    GridSpec,
    QuadraticEnergy,
    SampleBatch,
    get_target,
    sample_reference,
    smoothed_score_oracle,
    target_names,
)
from .exceptions import (
    CapabilityError,
    DriftSamplerError,
    InvalidInputError,
    NumericError,
    SingularCurvatureError,
    TrainingAborted,
)
from .metrics import (
    MetricsReport,
    cov_error,
    evaluate,
    mean_energy,
    mean_error,
    mmd_rbf,
    quadrant_counts,
)
from .net import (
    AdamState,
    Architecture,
    GeneratorParams,
    adam_step,
    forward,
    init_params,
    load_checkpoint,
    mse_loss_and_grads,
    save_checkpoint,
)
from .train import TrainConfig, TrainState, drift_step, eval_latent_rng, train

__version__ = "0.1.0"
