"""Shallow-forgetting analysis in weight space.

Three tools: projected-SGD recovery attacks (can suppressed knowledge be
relearned inside an l2 ball around the current weights?), Monte-Carlo
quantile certificates bounding the performance reachable by any model
within a shifted Gaussian neighborhood of the weights, and the transfer
of those certificates to statistically indistinguishable models.

The certificate quantiles get an exact Clopper-Pearson finite-sample
adjustment: the reported upper bound is the smallest sampled value whose
one-sided lower confidence on Pr[A <= t] clears the shifted level q_bar,
so the certificate is honest at the stated overall confidence.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import ConfigError, DomainError, SampleSizeError
from .model import Classifier, LossSpec, logits, loss_and_grad
from .params import ParameterVector, gaussian_perturb, l2_project
from .rng import RngStream
from .statsfns import (
    clopper_pearson_interval,
    clopper_pearson_lower,
    clopper_pearson_upper,
    normal_cdf,
    normal_quantile,
)


@dataclass(frozen=True)
class RecoveryConfig:
    eta: float
    steps: int
    lr: float
    batch_size: int = 32
    recovery_fraction: float = 1.0
    momentum: float = 0.9
    seed: int = 0
    checkpoint_every: int | None = None

    def __post_init__(self):
        if self.eta < 0:
            raise ConfigError("eta must be non-negative")
        if self.steps < 0 or self.batch_size < 1:
            raise ConfigError("steps must be >= 0 and batch_size >= 1")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if not 0 < self.recovery_fraction <= 1:
            raise ConfigError("recovery_fraction must be in (0, 1]")


def projected_descent(
    theta: ParameterVector,
    grad_fn,
    eta: float,
    steps: int,
    lr: float,
    momentum: float = 0.0,
    callback=None,
) -> ParameterVector:
    """Gradient descent re-projected onto the eta-ball around the start
    after every step. grad_fn(step, theta) -> flat gradient array."""
    start = theta
    velocity = np.zeros(theta.size)
    for step in range(steps):
        g = grad_fn(step, theta)
        velocity = momentum * velocity + g
        moved = theta.with_values(theta.values - lr * velocity)
        theta = l2_project(moved, start, eta)
        if callback is not None:
            callback(step, theta)
    return theta


def recovery_attack(
    clf: Classifier,
    recovery_data: Dataset,
    cfg: RecoveryConfig,
    eval_data: Dataset | None = None,
    spec: LossSpec | None = None,
):
    """Projected SGD on the recovery loss within ||theta - start||_2 <= eta.

    Returns (model, trajectory); each trajectory record holds the step,
    the distance from the start, and accuracy on eval_data (defaults to
    the recovery data itself).
    """
    if len(recovery_data) == 0:
        raise DomainError("recovery set is empty")
    spec = spec or LossSpec(kind="cross_entropy")
    target = eval_data if eval_data is not None else recovery_data
    rng = RngStream(cfg.seed)

    if cfg.recovery_fraction < 1.0:
        keep = max(1, int(round(cfg.recovery_fraction * len(recovery_data))))
        order = rng.child("subsample").generator().permutation(len(recovery_data))
        recovery_data = recovery_data.take(np.sort(order[:keep]))

    n = len(recovery_data)
    batch_gen = rng.child("batches").generator()
    every = cfg.checkpoint_every or max(1, cfg.steps // 20)
    start = clf.params

    def acc(theta):
        current = clf.with_params(theta)
        pred = np.argmax(logits(current, target.features), axis=1)
        return float(np.mean(pred == target.labels))

    trajectory = [
        {"step": 0, "distance": 0.0, "accuracy": acc(start)}
    ]

    def grad_fn(step, theta):
        idx = batch_gen.choice(n, size=min(cfg.batch_size, n), replace=False)
        batch = recovery_data.take(idx)
        _, g = loss_and_grad(clf.with_params(theta), batch, spec)
        return g.values

    def callback(step, theta):
        if (step + 1) % every == 0 or step + 1 == cfg.steps:
            trajectory.append(
                {
                    "step": step + 1,
                    "distance": theta.distance(start),
                    "accuracy": acc(theta),
                }
            )

    theta = projected_descent(
        start, grad_fn, cfg.eta, cfg.steps, cfg.lr, cfg.momentum, callback
    )
    return clf.with_params(theta), trajectory


def adjusted_quantile_levels(q: float, eta: float, sigma: float):
    """Shifted quantile levels (q_bar, q_under) for a weight shift of eta."""
    if not 0 < q < 1:
        raise DomainError("q must be in (0,1)")
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    if eta < 0:
        raise DomainError("eta must be non-negative")
    base = normal_quantile(q)
    shift = eta / sigma
    return float(normal_cdf(base + shift)), float(normal_cdf(base - shift))


@dataclass(frozen=True)
class CertificateReport:
    q: float
    eta: float
    sigma: float
    n_samples: int
    q_bar: float
    q_under: float
    upper_bound: float
    lower_bound: float
    one_minus_alpha: float
    adjustment: str
    mc_values: np.ndarray
    mc_digest: str
    eta_relative: float
    upper_vacuous: bool = False
    lower_vacuous: bool = False

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            "eta": self.eta,
            "sigma": self.sigma,
            "n_samples": self.n_samples,
            "q_bar": self.q_bar,
            "q_under": self.q_under,
            "upper_bound": self.upper_bound,
            "lower_bound": self.lower_bound,
            "one_minus_alpha": self.one_minus_alpha,
            "adjustment": self.adjustment,
            "mc_digest": self.mc_digest,
            "eta_relative": self.eta_relative,
            "upper_vacuous": self.upper_vacuous,
            "lower_vacuous": self.lower_vacuous,
        }

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")


def _digest(values: np.ndarray) -> str:
    blob = ",".join(format(v, ".17g") for v in values).encode()
    return hashlib.sha256(blob).hexdigest()


def bounds_from_samples(
    mc_values,
    q_bar: float,
    q_under: float,
    one_minus_alpha: float | None = 0.999,
    metric_range=(0.0, 1.0),
    quantum: float = 0.0,
):
    """Quantile bounds from Monte-Carlo metric samples.

    With a confidence level, each bound takes an exact one-sided
    Clopper-Pearson adjustment (the level split evenly between the two
    bounds). With one_minus_alpha=None the raw empirical quantiles are
    used. `quantum` is the metric's grid spacing; lower-bound candidates
    also sit one quantum below each sampled value, which is what lets a
    degenerate (all-equal) sample certify a tight lower bound.

    Returns (upper, lower, upper_vacuous, lower_vacuous).
    """
    values = np.sort(np.asarray(mc_values, dtype=np.float64))
    n = values.size
    if n == 0:
        raise DomainError("no Monte-Carlo samples")
    lo, hi = metric_range
    uniq = np.unique(values)
    count_le = np.searchsorted(values, uniq, side="right")
    count_lt = np.searchsorted(values, uniq, side="left")

    if one_minus_alpha is None:
        level_lo = count_le / n
        level_hi = count_le / n
        alpha_each = None
    else:
        alpha_each = (1.0 - one_minus_alpha) / 2.0
        level_lo = np.array(
            [clopper_pearson_lower(int(m), n, alpha_each) for m in count_le]
        )
        level_hi = np.array(
            [clopper_pearson_upper(int(m), n, alpha_each) for m in count_le]
        )

    upper, upper_vacuous = hi, True
    ok = np.nonzero(level_lo >= q_bar)[0]
    if ok.size:
        upper, upper_vacuous = float(uniq[ok[0]]), False

    lower, lower_vacuous = lo, True
    # candidates at each sampled value, and one quantum below it
    if alpha_each is None:
        below = count_lt / n
        at = count_le / n
    else:
        below = np.array(
            [clopper_pearson_upper(int(m), n, alpha_each) for m in count_lt]
        )
        at = level_hi
    for j in range(uniq.size - 1, -1, -1):
        if at[j] <= q_under:
            lower, lower_vacuous = float(uniq[j]), False
            break
        if quantum > 0 and below[j] <= q_under:
            candidate = uniq[j] - quantum
            if candidate > lo:
                lower, lower_vacuous = float(candidate), False
            break
    lower = min(lower, upper)
    return upper, lower, upper_vacuous, lower_vacuous


def mc_accuracy_samples(
    clf: Classifier,
    d_star: Dataset,
    sigma: float,
    n_samples: int,
    rng: RngStream,
    jobs: int = 1,
) -> np.ndarray:
    """Accuracy of the model under i.i.d. Gaussian weight noise, sorted.

    Draws are taken serially from child streams (so the result is
    independent of the worker count); evaluation fans out across threads.
    """
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    thetas = [
        gaussian_perturb(clf.params, sigma, rng.child(("mc", i)))
        for i in range(n_samples)
    ]

    def evaluate(theta):
        pred = np.argmax(logits(clf.with_params(theta), d_star.features), axis=1)
        return float(np.mean(pred == d_star.labels))

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            values = list(pool.map(evaluate, thetas))
    else:
        values = [evaluate(t) for t in thetas]
    return np.sort(np.asarray(values))


def certify_depth(
    clf: Classifier,
    d_star: Dataset,
    q: float,
    eta: float,
    sigma: float,
    n_samples: int,
    rng: RngStream,
    one_minus_alpha: float = 0.999,
    jobs: int = 1,
) -> CertificateReport:
    """Monte-Carlo quantile certificate for accuracy on d_star.

    Upper bound: with probability >= q, no model drawn from
    N(theta + v, sigma^2 I) with ||v||_2 <= eta scores above it on d_star.
    Lower bound symmetric. Both bounds are reported from one sample set
    and hold simultaneously at the stated confidence.
    """
    if n_samples < 100:
        raise SampleSizeError("need at least 100 Monte-Carlo samples")
    if len(d_star) == 0:
        raise DomainError("target set is empty")
    q_bar, q_under = adjusted_quantile_levels(q, eta, sigma)
    if q_bar >= 1.0 - 1.0 / n_samples:
        raise SampleSizeError(
            f"q_bar={q_bar:.6f} needs more than {n_samples} samples"
        )
    values = mc_accuracy_samples(clf, d_star, sigma, n_samples, rng, jobs=jobs)
    quantum = 1.0 / len(d_star)
    upper, lower, up_vac, lo_vac = bounds_from_samples(
        values, q_bar, q_under, one_minus_alpha, (0.0, 1.0), quantum
    )
    norm = clf.params.norm()
    return CertificateReport(
        q=q,
        eta=eta,
        sigma=sigma,
        n_samples=n_samples,
        q_bar=q_bar,
        q_under=q_under,
        upper_bound=upper,
        lower_bound=lower,
        one_minus_alpha=one_minus_alpha,
        adjustment="clopper-pearson",
        mc_values=values,
        mc_digest=_digest(values),
        eta_relative=eta / norm if norm > 0 else math.inf,
        upper_vacuous=up_vac,
        lower_vacuous=lo_vac,
    )


def transfer_bound(epsilon: float, zeta: float, p_hat: float) -> float:
    """Probability that certified bounds transfer to an (eps, zeta)-
    indistinguishable model: max(0, e^-eps (p_hat - zeta))."""
    if epsilon < 0:
        raise DomainError("epsilon must be non-negative")
    if not 0 <= zeta < 1:
        raise DomainError("zeta must be in [0,1)")
    if not 0 <= p_hat <= 1:
        raise DomainError("p_hat must be in [0,1]")
    return max(0.0, math.exp(-epsilon) * (p_hat - zeta))


@dataclass(frozen=True)
class TransferReport:
    epsilon: float
    zeta: float
    eta: float
    p_hat: float
    p_hat_interval: tuple
    transfer_probability: float


def estimate_radius_mass(
    runs,
    theta_hat: ParameterVector,
    eta: float,
    confidence: float = 0.95,
):
    """Fraction of run outputs inside the eta-ball, with its exact
    binomial confidence interval."""
    runs = list(runs)
    if len(runs) < 30:
        raise SampleSizeError("need at least 30 runs")
    if eta < 0:
        raise DomainError("eta must be non-negative")
    hits = sum(1 for theta in runs if theta.distance(theta_hat) <= eta)
    p_hat = hits / len(runs)
    interval = clopper_pearson_interval(hits, len(runs), confidence)
    return p_hat, interval


def make_transfer_report(
    runs, theta_hat: ParameterVector, eta: float, budget_epsilon: float,
    budget_zeta: float, confidence: float = 0.95,
) -> TransferReport:
    p_hat, interval = estimate_radius_mass(runs, theta_hat, eta, confidence)
    return TransferReport(
        epsilon=budget_epsilon,
        zeta=budget_zeta,
        eta=eta,
        p_hat=p_hat,
        p_hat_interval=interval,
        transfer_probability=transfer_bound(budget_epsilon, budget_zeta, p_hat),
    )


@dataclass(frozen=True)
class FriendlinessReport:
    """Paired certificates: retain-set (lower bound matters) and
    forget-set (upper bound matters)."""

    retain: CertificateReport
    forget: CertificateReport


def unlearning_friendliness(
    clf: Classifier,
    d_r: Dataset,
    d_f: Dataset,
    q: float,
    eta: float,
    sigma: float,
    n_samples: int,
    rng: RngStream,
    one_minus_alpha: float = 0.999,
    jobs: int = 1,
) -> FriendlinessReport:
    """Certify both sides with the same noise draws.

    A model whose retain lower bound is higher and forget upper bound is
    lower than another's is the friendlier starting point for unlearning.
    """
    retain = certify_depth(
        clf, d_r, q, eta, sigma, n_samples, rng, one_minus_alpha, jobs
    )
    forget = certify_depth(
        clf, d_f, q, eta, sigma, n_samples, rng, one_minus_alpha, jobs
    )
    return FriendlinessReport(retain=retain, forget=forget)


def friendlier_than(a: FriendlinessReport, b: FriendlinessReport) -> bool:
    return (
        a.retain.lower_bound >= b.retain.lower_bound
        and a.forget.upper_bound <= b.forget.upper_bound
    )
