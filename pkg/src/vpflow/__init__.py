"""Particle-based Gaussian mixture variational inference via Wasserstein-Fisher-Rao gradient flows."""

from .data import Dataset, DataFormatError, Split, load_csv, make_splits, minibatches, standardize
from .flows import (
    FlowConfig,
    FlowState,
    NegativePrecisionError,
    gflowvi_step,
    inverse_mirror_map,
    md_weight_update,
    mirror_map,
    ngflowvi_step,
    run_flow,
    step,
)
from .harness import ExperimentConfig, IterationRecord, load_config, run_experiment
from .metrics import MetricReport, estimate_kl, estimate_negated_elbo, predictive_loss
from .mixture import GaussianParticle, ParticleMixture, mixture_log_density, sample_mixture
from .targets import (
    BnnArch,
    BnnTarget,
    GmmTarget,
    GmmTargetSpec,
    LogisticRegressionTarget,
    TargetModel,
    make_bnn_target,
    make_gmm_target,
    make_logistic_regression_target,
)

__version__ = "0.1.0"
