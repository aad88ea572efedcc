"""Ratio-estimator statistics: regularised denominators, delta-method
confidence intervals and replica (batch-means) diagnostics."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats as sps

from .accumulate import EstimateReport, PairAccumulator
from .exceptions import ConfigurationError, DomainError

Z95 = 1.96
PILOT_CAP = 4096


def smooth_ramp(z, epsilon: float):
    """Cubic-smoothed ramp: 0 below ``-eps``, identity above ``eps``, C2 in between."""
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    z_arr = np.asarray(z, dtype=np.float64)
    e2 = 6.0 * epsilon * epsilon
    out = np.where(
        z_arr <= -epsilon,
        0.0,
        np.where(
            z_arr <= 0.0,
            (z_arr + epsilon) ** 3 / e2,
            np.where(z_arr <= epsilon, (epsilon - z_arr) ** 3 / e2 + z_arr, z_arr),
        ),
    )
    return float(out) if out.ndim == 0 else out


def g_epsilon(z, epsilon: float):
    """Regularised denominator ``eps + smooth_ramp(z - eps)``.

    Returns ``z`` itself, untouched, wherever ``z >= 2 eps``; elsewhere the
    value is at least ``eps``.
    """
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    z_arr = np.asarray(z, dtype=np.float64)
    out = np.where(z_arr >= 2.0 * epsilon, z_arr, epsilon + smooth_ramp(z_arr - epsilon, epsilon))
    if out.ndim == 0:
        return float(z) if float(z) >= 2.0 * epsilon else float(out)
    return out


def pilot_size(total: int) -> int:
    """Length of the stream prefix used to pick epsilon."""
    return max(2, min(PILOT_CAP, total // 16))


def default_epsilon(pilot_mean_b: float) -> float:
    """Regularisation width: a quarter of the pilot denominator magnitude."""
    value = 0.25 * abs(pilot_mean_b)
    if not value > 0:
        raise DomainError("pilot denominator mean is zero; cannot choose epsilon")
    return value


def ratio_standard_error(acc: PairAccumulator) -> tuple[float, float]:
    """Return ``(sigma_h, ratio)`` for the delta-method ratio ``mean_a / mean_b``.

    ``sigma_h^2 = var_a / a^2 + var_b / b^2 - 2 cov_ab / (a b)`` is the relative
    variance of the ratio per sample; it is evaluated as
    ``(var_a - 2 r cov_ab + r^2 var_b) / (r b)^2``, which is algebraically
    identical but stays finite when ``a`` vanishes.
    """
    if acc.count < 2:
        raise DomainError("need at least two samples for a variance")
    a, b = acc.mean_a, acc.mean_b
    r = a / b
    num = acc.var_a - 2.0 * r * acc.cov_ab + r * r * acc.var_b
    if num < 0.0:
        warnings.warn("ratio variance negative after rounding; clamped to zero", RuntimeWarning)
        num = 0.0
    if r == 0.0:
        return math.inf, r
    return math.sqrt(num) / abs(r * b), r


def ratio_with_ci(
    acc: PairAccumulator,
    epsilon: float | None = None,
    *,
    quantity: str = "ratio",
    offset: float = 0.0,
    dt: float | None = None,
    seed: int | None = None,
    beta: float | None = None,
    metadata: dict | None = None,
) -> EstimateReport:
    """Ratio estimate ``mean_a / g_eps(mean_b)`` with its 95% interval.

    ``offset`` is added to the estimate after the ratio is formed (used for
    analytic constants); the standard error is unaffected by it.
    """
    sigma_h, r = ratio_standard_error(acc)
    denom = acc.mean_b if epsilon is None else g_epsilon(acc.mean_b, epsilon)
    estimate = acc.mean_a / denom + offset
    se = abs(r) * sigma_h / math.sqrt(acc.count)
    rel_ci = Z95 * se / abs(estimate) if estimate != 0 else math.inf
    meta = dict(metadata or {})
    meta.update({"epsilon": epsilon, "sigma_h": sigma_h, "regularized": denom != acc.mean_b})
    return EstimateReport(
        quantity=quantity,
        estimate=estimate,
        standard_error=se,
        relative_ci=rel_ci,
        samples=acc.count,
        dt=dt,
        seed=seed,
        beta=beta,
        degenerate_count=acc.degenerate,
        metadata=meta,
    )


def mean_relative_ci(acc: PairAccumulator) -> float:
    """``1.96 sigma_B / (sqrt(N) |mean_B|)`` for the denominator alone."""
    return Z95 * math.sqrt(acc.var_b) / (math.sqrt(acc.count) * abs(acc.mean_b))


@dataclass(frozen=True)
class ReplicaPlan:
    """``replicas`` independent runs of ``samples_per_replica`` draws each."""

    replicas: int
    samples_per_replica: int

    def __post_init__(self) -> None:
        if self.replicas < 30:
            raise ConfigurationError("at least 30 replicas are needed for a normality summary")
        if self.samples_per_replica < 2:
            raise ConfigurationError("each replica needs at least two samples")

    @property
    def total(self) -> int:
        return self.replicas * self.samples_per_replica


@dataclass
class ReplicaSummary:
    values: np.ndarray
    mean: float
    std: float
    skewness: float
    excess_kurtosis: float
    negative_count: int
    scale: float = 1.0
    extra: dict = field(default_factory=dict)

    @property
    def scaled_values(self) -> np.ndarray:
        return self.values * self.scale

    def to_dict(self) -> dict:
        return {
            "replicas": int(self.values.size),
            "mean": self.mean,
            "std": self.std,
            "skewness": self.skewness,
            "excess_kurtosis": self.excess_kurtosis,
            "negative_count": self.negative_count,
            "scale": self.scale,
            **self.extra,
        }


def summarize_replicas(values: Sequence[float], scale: float = 1.0) -> ReplicaSummary:
    """Moments and sign count of replica estimates."""
    vals = np.asarray(values, dtype=np.float64)
    return ReplicaSummary(
        values=vals,
        mean=float(np.mean(vals)),
        std=float(np.std(vals, ddof=1)),
        skewness=float(sps.skew(vals)),
        excess_kurtosis=float(sps.kurtosis(vals)),
        negative_count=int(np.count_nonzero(vals * scale < 0)),
        scale=scale,
    )


def replica_diagnostics(
    plan: ReplicaPlan,
    runner: Callable[[int, int], float],
    scale: float = 1.0,
) -> ReplicaSummary:
    """Run ``runner(replica_index, samples)`` for every replica and summarise.

    ``runner`` must be deterministic in its arguments. ``scale`` converts
    raw estimates to the quantity whose sign is audited.
    """
    values = [float(runner(r, plan.samples_per_replica)) for r in range(plan.replicas)]
    return summarize_replicas(values, scale)


def histogram_csv(values: Sequence[float], bins: int = 32) -> str:
    """CSV text of a histogram with the fitted normal parameters on every row."""
    vals = np.asarray(values, dtype=np.float64)
    counts, edges = np.histogram(vals, bins=bins)
    mean = float(np.mean(vals))
    std = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["bin_left", "bin_right", "count", "fitted_mean", "fitted_std", "fitted_density"])
    width = edges[1] - edges[0]
    for left, right, count in zip(edges[:-1], edges[1:], counts):
        centre = 0.5 * (left + right)
        dens = sps.norm.pdf(centre, mean, std) * vals.size * width if std > 0 else 0.0
        writer.writerow([repr(float(left)), repr(float(right)), int(count), repr(mean), repr(std), repr(float(dens))])
    return buf.getvalue()
