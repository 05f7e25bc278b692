"""Bayes error rates for known Gaussian mixtures, f-divergence sampling bounds,
and BOLT-loss training of from-scratch dense networks."""

from .bayes import (
    BoundReport,
    ClassMixture,
    bayes_error_decomposed,
    bound_binary_empirical,
    bound_multiclass_empirical,
    exact_bayes_error_grid,
    gaussian_binary_bayes_error,
    mu_lambda,
)
from .data import (
    ClassSpec,
    Dataset,
    Rng,
    SyntheticSpec,
    derive_seed,
    load_idx,
    minibatches,
    split,
    standard_normal,
    synthesize,
    write_idx,
)
from .divergence import (
    HINGE,
    KL,
    ConvexGenerator,
    Gaussian,
    GridSpec,
    kl_optimal_witness,
    numeric_f_divergence,
    q_function,
    variational_bound_estimate,
)
from .losses import (
    HVector,
    SHIFTED_SIGMOID,
    SHIFTED_SOFTMAX,
    bolt_grad_h,
    bolt_loss,
    ce_grad_logits,
    cross_entropy,
    map_outputs,
    predict,
    score_lambda,
)
from .net import (
    BOLT,
    CE,
    DenseNet,
    OptimizerState,
    PlateauSchedule,
    adam_step,
    backward,
    evaluate,
    forward,
    init_network,
    load_model,
    plateau_update,
    save_model,
    sgd_step,
    train,
)

__version__ = "0.1.0"
