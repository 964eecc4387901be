"""Leave-one-out stable conformal prediction.

One model fit plus closed-form stability corrections gives prediction
intervals that contain the full conformal set, along with the usual
baselines (oracle, full, split, replace-one, majority-vote split) and a
conformal screening layer with Benjamini-Hochberg selection.
"""

from .core import ScoreKind, conformal_quantile, lower_quantile, score
from .data import (
    DataError,
    Dataset,
    MeanModel,
    SyntheticSpec,
    ar1_covariance,
    beta_vector,
    gen_synthetic,
    holdout_split,
    load_csv,
    write_csv,
    zscore_normalize,
)
from .models import (
    KernelKind,
    KernelSpec,
    LinearModel,
    LipschitzProfile,
    MLPModel,
    huber_dz,
    huber_loss,
    init_mlp,
    kernel_matrix,
    lipschitz_profile_linear_huber,
    mlp_forward,
    mlp_gradient,
)
from .trainers import (
    BaggingConfig,
    BaseLearnerSpec,
    ConvergenceError,
    FitCounter,
    RlmConfig,
    SgdConfig,
    epoch_order,
    fit_bagging,
    fit_rlm,
    fit_sgd,
    fit_sgd_coupled_loo,
)
from .stability import (
    BoundKind,
    BoundOverflowError,
    StabilityBounds,
    bagging_bound_derandomized,
    bagging_bound_probabilistic,
    rlm_bounds,
    sgd_bounds_approx_nn,
    sgd_bounds_convex,
    sgd_bounds_nonconvex,
)
from .learners import (
    BaggingLearner,
    ConstantLearner,
    KernelRlmLearner,
    KernelSgdLearner,
    Learner,
    MlpLearner,
    RlmLearner,
    SgdLearner,
)
from .conformal import (
    GridSpec,
    Method,
    PredictionInterval,
    default_grid,
    full_cp,
    loo_stabcp,
    majority_region,
    mm_split_cp,
    oracle_cp,
    ro_stabcp,
    split_cp,
)
from .screening import (
    ScreeningConfig,
    ScreeningMethod,
    ScreeningResult,
    bh_procedure,
    fdp_power,
    loo_pvalues,
    ro_pvalues,
    run_screening,
    split_pvalues,
)

__version__ = "0.1.0"
