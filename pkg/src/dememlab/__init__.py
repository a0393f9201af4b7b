"""dememlab: a desk-scale lab for data availability poisoning, machine
unlearning, weight-space recovery attacks, and Monte-Carlo certificates
of how deeply a model has forgotten."""

from .rng import RngStream
from .params import ParameterVector, gaussian_perturb, l2_project
from .data import (
    Dataset,
    SplitPlan,
    SplitViews,
    apply_split,
    load_dataset,
    make_blobs,
    make_class_plan,
    make_grid_images,
    make_subset_plan,
    save_dataset,
)
from .model import (
    Classifier,
    LossSpec,
    feature_map,
    forward,
    init_classifier,
    load_checkpoint,
    loss_and_grad,
    per_sample_grads,
    save_checkpoint,
)
from .trainer import TrainConfig, fit_new, retrain_from_scratch, train
from .availability import (
    PerturbationSet,
    SurrogateSpec,
    apply,
    emax_generate,
    emin_generate,
    feature_collide,
    feature_dissim,
    shortcut_linear,
    shortcut_pixels,
)
from .unlearner import (
    CertConfig,
    PrivacyBudget,
    calibrate_sigma,
    if_update,
    indistinguishability_check,
    unlearn_certified,
    unlearn_ft,
    unlearn_ga,
)
from .certifier import (
    CertificateReport,
    RecoveryConfig,
    adjusted_quantile_levels,
    certify_depth,
    estimate_radius_mass,
    recovery_attack,
    transfer_bound,
    unlearning_friendliness,
)
from .evalmetrics import accuracy, mia

__version__ = "0.1.0"
