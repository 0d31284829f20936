"""Truncation-based defense and evaluation toolkit for sparse attacks."""

from .adversary import (
    AdvConfig,
    change_prob_bound,
    change_prob_mc,
    conditional_log_density,
    erased_density,
    erasure_keep_prob,
    map_error_lower_mc,
    perturb,
    perturb_many,
)
from .attacks import (
    AttackBudget,
    AttackResult,
    RhoReport,
    generate_adv_set,
    median_adv_magnitude,
    pointwise_attack,
    robust_accuracy,
    sparse_random_search,
)
from .bounds import (
    BoundValue,
    BudgetBounds,
    WindowError,
    asymptotic_corrections,
    budget_bounds,
    candidate_classifier_weights,
    candidate_weights,
    eps_shift,
    head_cutoff,
    head_l1_norm,
    head_length,
    loss_bound_at_budget,
    robust_error_lower_bound,
    robust_error_upper_bound_diag,
    robust_error_upper_bound_general,
    tolerable_budget_upper,
    truncated_budget_lower,
)
from .datasets import (
    IdxFormatError,
    LabeledDataset,
    load_idx_images,
    load_idx_labels,
    load_mnist_pair,
    load_synthetic,
    normalize_pixels,
    save_synthetic,
    split,
    upscaled_digits,
)
from .gmm import (
    GaussianMixture,
    SnrVector,
    bayes_weights,
    normalize,
    sample,
    snr_vector,
    standard_error,
)
from .linear import TruncatedLinearClassifier, fit_truncated_linear
from .network import (
    MNIST_DIMS,
    REDUCED_DIMS,
    FeedForwardNet,
    Gradients,
    TrainConfig,
    backward,
    cross_entropy,
    forward,
    init_net,
    load_model,
    predict,
    save_model,
    sgd_step,
)
from .special import erfc, normal_sf
from .training import History, adversarial_train, train
from .truncation import (
    DimensionMismatch,
    InvalidTruncation,
    NonFiniteInput,
    TruncationError,
    check_truncation,
    removed_to_keep,
    survivor_mask,
    truncated_inner_product,
    truncated_matvec,
    truncated_matvec_batch,
    truncated_row_sums,
)

__version__ = "0.1.0"
