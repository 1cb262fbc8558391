"""Desk-scale laboratory for SGD-noise scaling laws.

Trains perceptrons and small fully-connected ReLU networks with
temperature-controlled mini-batch SGD on the margin hinge loss until the
loss is exactly zero, measures the observables (w1, ||w_perp||, delta_w,
t*, test error, T_max), and provides the extreme-value oracle and the
power-law / curve-collapse analysis used to extract scaling exponents.
"""

from sgdlab.data import (
    ChiDistribution,
    Dataset,
    chi_pdf,
    dataset_to_csv,
    load_idx_dataset,
    sample_chi_dataset,
    split_train_test,
    true_label,
)
from sgdlab.evt import (
    MaxStatistic,
    RatioDistribution,
    frechet_cdf,
    frechet_scale,
    maxima_to_csv,
    predicted_gamma,
    q_pdf,
    sample_max_statistic,
)
from sgdlab.mlp import (
    EarlyStopConfig,
    GridExhaustedError,
    MlpState,
    bisect_tmax,
    centered_predictor,
    cross_entropy_train_early_stop,
    find_tmax,
    grad_loss,
    init_network,
    input_gradient_alignment,
    sgd_train,
)
from sgdlab.perceptron import (
    PerceptronState,
    alignment_ratio,
    fitting_margin_check,
    hinge_loss,
    predict,
    sgd_step,
    train_to_zero,
)
from sgdlab.records import RunRecord, TrainConfig
from sgdlab.scaling import (
    CollapseResult,
    CrossoverFit,
    EmptyOverlapError,
    NonCrossoverError,
    PowerLawFit,
    best_collapse_exponent,
    collapse_score,
    exponent_report,
    extract_crossover,
    fit_power_law,
    fit_two_var_scaling,
)
from sgdlab.sweep import (
    SweepResult,
    SweepSpec,
    load_result,
    persist,
    resume,
    run_sweep,
)

__version__ = "0.1.0"
