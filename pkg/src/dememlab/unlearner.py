"""Unlearning algorithms: fine-tuning, gradient ascent, Newton-style
removal updates (exact Hessian or WoodFisher), and certified noisy
fine-tuning with its noise calibration.

Sign convention for the removal update: at a minimizer of the full
objective, the retain-set gradient equals -(k/r) times the forget-set
gradient, so the Newton step toward the retain minimizer *adds*
alpha * (k/r) * H^{-1} g_f. That direction and scale make the update
reproduce closed-form retraining exactly on quadratic objectives, which
is the ground truth the tests pin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import (
    CapabilityError,
    ConfigError,
    DomainError,
    NumericError,
    SampleSizeError,
)
from .model import Classifier, LossSpec, loss_and_grad, per_sample_grads
from .params import ParameterVector, gaussian_perturb, l2_project
from .rng import RngStream
from .trainer import TrainConfig, train

EXACT_HESSIAN_MAX_PARAMS = 2000


def unlearn_ft(
    clf: Classifier,
    d_r: Dataset,
    epochs: int,
    lr: float,
    seed: int,
    batch_size: int = 64,
    momentum: float = 0.9,
    weight_decay: float = 0.0,
) -> Classifier:
    """Fine-tune on the retain set only; forgetting happens by neglect."""
    if len(d_r) == 0:
        raise DomainError("retain set is empty")
    cfg = TrainConfig(
        epochs=epochs,
        batch_size=batch_size,
        lr=lr,
        momentum=momentum,
        weight_decay=weight_decay,
        augment="none",
        seed=seed,
    )
    out, _ = train(clf, d_r, cfg)
    return out


def unlearn_ga(
    clf: Classifier,
    d_f: Dataset,
    epochs: int,
    lr: float,
    seed: int,
    spec: LossSpec | None = None,
    batch_size: int | None = None,
) -> Classifier:
    """Gradient ascent on the forget-set loss: theta <- theta + lr * g."""
    if len(d_f) == 0:
        raise DomainError("forget set is empty")
    spec = spec or LossSpec(kind="cross_entropy")
    batch_size = batch_size or len(d_f)
    rng = RngStream(seed)
    theta = clf.params
    n = len(d_f)
    for epoch in range(epochs):
        order = rng.child(("shuffle", epoch)).generator().permutation(n)
        for start in range(0, n, batch_size):
            batch = d_f.take(order[start : start + batch_size])
            _, g = loss_and_grad(clf.with_params(theta), batch, spec)
            theta = theta.with_values(theta.values + lr * g.values)
    return clf.with_params(theta)


def exact_hessian(
    clf: Classifier, d_ref: Dataset, spec: LossSpec, step: float = 1e-5
) -> np.ndarray:
    """Dense Hessian of the training objective on d_ref.

    Computed by central differences of the analytic gradient and then
    symmetrized; exact to roundoff for quadratic objectives.
    """
    p = clf.params.size
    if p > EXACT_HESSIAN_MAX_PARAMS:
        raise CapabilityError(
            f"exact Hessian limited to {EXACT_HESSIAN_MAX_PARAMS} parameters, got {p}"
        )
    base = clf.params.values
    hess = np.empty((p, p))
    for j in range(p):
        up, down = base.copy(), base.copy()
        up[j] += step
        down[j] -= step
        _, gu = loss_and_grad(clf.with_params(clf.params.with_values(up)), d_ref, spec)
        _, gd = loss_and_grad(
            clf.with_params(clf.params.with_values(down)), d_ref, spec
        )
        hess[:, j] = (gu.values - gd.values) / (2.0 * step)
    return 0.5 * (hess + hess.T)


def woodfisher_inverse(
    grads, damping: float, total: int | None = None
) -> np.ndarray:
    """Inverse of the damped empirical Fisher, built one gradient at a time.

    Rank-one Sherman-Morrison recursion starting from (1/damping) I:
    each gradient g contributes an update with denominator N + g' Hinv g,
    where N is the number of reference gradients.
    """
    if not damping > 0:
        raise DomainError("damping must be positive")
    grads = list(grads)
    if not grads:
        raise DomainError("need at least one reference gradient")
    n_ref = total if total is not None else len(grads)
    dim = grads[0].size
    hinv = np.eye(dim) / damping
    for g in grads:
        v = np.asarray(g.values if isinstance(g, ParameterVector) else g)
        hv = hinv @ v
        hinv -= np.outer(hv, hv) / (n_ref + float(v @ hv))
    return hinv


def if_update(
    clf: Classifier,
    d_f: Dataset,
    alpha: float,
    hessian_mode: str,
    spec: LossSpec,
    d_ref: Dataset,
    damping: float = 1e-4,
) -> Classifier:
    """Newton-style removal of the forget set's influence.

    theta <- theta + alpha * (|d_f|/|d_ref|) * H^{-1} grad L(theta; d_f),
    with H the Hessian of the training objective on d_ref ("exact" mode,
    dense, damped if not positive-definite) or its WoodFisher
    approximation built from d_ref per-sample gradients.
    """
    if not alpha > 0:
        raise ConfigError("alpha must be positive")
    if len(d_f) == 0:
        return clf
    if len(d_ref) == 0:
        raise DomainError("reference set is empty")
    _, g_f = loss_and_grad(clf, d_f, spec)
    scale = len(d_f) / len(d_ref)

    if hessian_mode == "exact":
        hess = exact_hessian(clf, d_ref, spec)
        update = _solve_spd(hess, g_f.values, damping)
    elif hessian_mode == "woodfisher":
        hinv = woodfisher_inverse(per_sample_grads(clf, d_ref, spec), damping)
        update = hinv @ g_f.values
    else:
        raise ConfigError(f"unknown hessian mode {hessian_mode!r}")

    theta = clf.params
    return clf.with_params(theta.with_values(theta.values + alpha * scale * update))


def _solve_spd(hess: np.ndarray, rhs: np.ndarray, damping: float) -> np.ndarray:
    try:
        chol = np.linalg.cholesky(hess)
    except np.linalg.LinAlgError:
        try:
            chol = np.linalg.cholesky(hess + damping * np.eye(hess.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise NumericError("Hessian not positive-definite after damping") from exc
    y = np.linalg.solve(chol, rhs)
    return np.linalg.solve(chol.T, y)


@dataclass(frozen=True)
class CertConfig:
    """Noisy clipped fine-tuning budget: T steps, step size gamma, clip
    radii C0 (initial weights) and C1 (per-step gradient), privacy (eps, zeta)."""

    steps: int
    gamma: float
    c0: float
    c1: float
    epsilon: float
    zeta: float

    def __post_init__(self):
        if not 0 < self.zeta < 1:
            raise ConfigError("zeta must be in (0,1)")
        if not 0 < self.epsilon < 3.0 * math.log(1.0 / self.zeta):
            raise ConfigError("epsilon must be in (0, 3 ln(1/zeta))")
        if self.steps < 1:
            raise ConfigError("steps must be at least 1")
        if not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        if not self.c0 > 0:
            raise ConfigError("c0 must be positive")
        if self.c1 < 0:  # c1 = 0 is the degenerate no-update test mode
            raise ConfigError("c1 must be non-negative")


def calibrate_sigma(
    c0: float, c1: float, gamma: float, steps: int, epsilon: float, zeta: float
) -> float:
    """Per-step noise std meeting the (eps, zeta) guarantee:
    sigma^2 = 9 ln(1/zeta) / (eps^2 T) * (C0 + C1 * gamma * T)^2."""
    if not 0 < zeta < 1:
        raise ConfigError("zeta must be in (0,1)")
    if not 0 < epsilon < 3.0 * math.log(1.0 / zeta):
        raise ConfigError("epsilon must be in (0, 3 ln(1/zeta))")
    if steps < 1 or not gamma > 0 or not c0 > 0 or c1 < 0:
        raise ConfigError("invalid calibration inputs")
    variance = (
        9.0 * math.log(1.0 / zeta) / (epsilon**2 * steps)
    ) * (c0 + c1 * gamma * steps) ** 2
    return math.sqrt(variance)


def noise_optimal_steps(c0: float, c1: float, gamma: float) -> float:
    """Step count minimizing the calibrated noise variance: T* = C0/(C1*gamma).

    Proportional to 1/C1 at fixed C0 and gamma: halving the gradient clip
    radius doubles the steps needed for the most noise-efficient schedule.
    """
    if not c1 > 0 or not gamma > 0 or not c0 > 0:
        raise ConfigError("c0, c1, gamma must be positive")
    return c0 / (c1 * gamma)


def admissible_step_range(
    sigma: float, c0: float, c1: float, gamma: float, epsilon: float, zeta: float
) -> tuple[float, float]:
    """Real step counts at which the calibrated noise equals sigma exactly.

    Solves sigma^2 = 9 ln(1/zeta)/(eps^2 T) (C0 + C1 gamma T)^2 for T;
    returns the two positive roots (low, high). Raises if sigma is below
    the minimum achievable noise for these radii.
    """
    log_term = math.log(1.0 / zeta)
    a = 3.0 * math.sqrt(log_term) * c1 * gamma
    b = -sigma * epsilon
    c = 3.0 * math.sqrt(log_term) * c0
    disc = b * b - 4.0 * a * c
    if disc < 0:
        raise DomainError("sigma below the minimum calibrated noise for these radii")
    root = math.sqrt(disc)
    u_low = (-b - root) / (2.0 * a)
    u_high = (-b + root) / (2.0 * a)
    return u_low**2, u_high**2


def unlearn_certified(
    clf: Classifier,
    d_r: Dataset,
    cert: CertConfig,
    seed: int,
    spec: LossSpec | None = None,
    sigma_override: float | None = None,
) -> tuple[Classifier, float]:
    """Clipped initialization, then T noisy clipped full-batch steps on d_r.

    Returns the model plus the calibrated per-step noise std (sigma_override
    substitutes the injected noise for testing but is never reported).
    """
    if len(d_r) == 0:
        raise DomainError("retain set is empty")
    spec = spec or LossSpec(kind="cross_entropy")
    sigma = calibrate_sigma(
        cert.c0, cert.c1, cert.gamma, cert.steps, cert.epsilon, cert.zeta
    )
    noise_sigma = sigma if sigma_override is None else sigma_override
    zero = clf.params.zeros_like()
    theta = l2_project(clf.params, zero, cert.c0)
    rng = RngStream(seed)
    for t in range(cert.steps):
        _, g = loss_and_grad(clf.with_params(theta), d_r, spec)
        clipped = l2_project(g, zero, cert.c1)
        stepped = theta.values - cert.gamma * clipped.values
        if noise_sigma > 0:
            phi = rng.child(("noise", t)).generator().normal(
                0.0, noise_sigma, size=theta.size
            )
            stepped = stepped + phi
        theta = theta.with_values(stepped)
    return clf.with_params(theta), sigma


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    zeta: float

    def __post_init__(self):
        if self.epsilon < 0:
            raise ConfigError("epsilon must be non-negative")
        if not 0 <= self.zeta < 1:
            raise ConfigError("zeta must be in [0,1)")


@dataclass(frozen=True)
class IndistinguishabilityResult:
    holds_empirically: bool
    p_a: float
    p_b: float


def indistinguishability_check(
    runs_a,
    runs_b,
    center: ParameterVector,
    radius: float,
    budget: PrivacyBudget,
) -> IndistinguishabilityResult:
    """Empirical two-sided check of the (eps, zeta) inequalities on an l2 ball.

    Membership frequencies replace the true output distributions, so this
    is a falsification probe for one ball, not a proof over all sets.
    """
    runs_a, runs_b = list(runs_a), list(runs_b)
    if len(runs_a) < 30 or len(runs_b) < 30:
        raise SampleSizeError("need at least 30 runs per side")
    if radius < 0:
        raise DomainError("radius must be non-negative")

    def inside_fraction(runs):
        hits = sum(1 for theta in runs if theta.distance(center) <= radius)
        return hits / len(runs)

    p_a, p_b = inside_fraction(runs_a), inside_fraction(runs_b)
    factor = math.exp(budget.epsilon)
    slack = 1e-12
    holds = (
        p_a <= factor * p_b + budget.zeta + slack
        and p_b <= factor * p_a + budget.zeta + slack
    )
    return IndistinguishabilityResult(holds_empirically=holds, p_a=p_a, p_b=p_b)
