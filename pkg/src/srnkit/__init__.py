"""Stable rank normalization, spectral normalization and Nystrom projection for numpy matrices,
with a small MLP trainer and margin/sensitivity measures."""
from .errors import (
    ConvergenceFailure, DegenerateData, DimensionMismatch, EmptyAfterSkip, InfeasibleError,
    MatrixFormatError, NoConvergence, NonFiniteError, NotSymmetricError, SamplingDegenerate,
    SmoothingExhausted, SrnkitError, ZeroMarginError, ZeroMatrixError, ZeroOutputError,
)
from .linalg import (
    PowerIterState, SvdFactors, frobenius_norm, power_iteration_top, power_iteration_topk,
    power_step, reshape_conv_weight, spectral_norm, svd,
)
from .normalize import (
    SrnConfig, SrnResult, frobenius_distance_profile, spectral_normalize_approx,
    spectral_normalize_optimal, srn_closed_form, srn_greedy, srn_layer_step, stable_rank,
)
from .nystrom import NystromConfig, hard_threshold_rank, nystrom_lowrank, smooth_spd, symmetrize
from .lrlayer import LrLayerState, lr_grads, lr_losses, lr_project_step
from .mlp import (
    Dataset, MlpModel, TrainConfig, apply_normalizer, backward, evaluate, forward, init_mlp,
    make_blobs, make_label_noise, random_centers, softmax_cross_entropy, train,
)
from .measures import (
    MeasureReport, elhist, jac_norm, jac_norms, layer_cushion, lipschitz_upper, log_percentile_90,
    margin, margins, measure_report, noise_sensitivity, r_g, spec_fro, spec_l1, validate_report,
)

__version__ = "0.1.0"
