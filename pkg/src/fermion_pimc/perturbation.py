"""Computable error indicator for the partner substitution in the interaction.

The perturbed matrix replaces each entry's interaction factor by an average
over Gaussian shifts of the partner paths. Its log-partition estimate,
differenced at ``beta +- delta_beta`` with common random numbers, gives a
second mean-field estimate. Its distance from the plain determinant
estimate indicates the bias of the partner substitution.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kern
from .accumulate import EstimateReport, PairAccumulator, tree_merge
from .determinant import KernelPotential, _check_sample
from .estimators import (
    block_count, choose_epsilon, meanfield_report, rows_in_block, run_blocks, replica_seed,
)
from .exceptions import ConfigurationError, SignProblemError
from .paths import BLOCK_SIZE, XI_STREAM, BridgeSample, TimeGrid, block_generator, draw_block
from .potentials import PotentialSpec, nuclei_factor
from .statistics import Z95
from .system import SystemSpec

#: Samples per xi draw call; draws are sequential so the panel values do not depend on it.
XI_CHUNK = 64

TESTED_C_STAR = (0.6, 2.0)


@dataclass(frozen=True)
class PerturbationConfig:
    c_star: float = 2.0
    n_xi: int = 100
    delta_beta: float = 0.01
    per_entry: bool = False

    def __post_init__(self) -> None:
        if not self.c_star > 0:
            raise ConfigurationError("c_star must be positive")
        if not isinstance(self.n_xi, (int, np.integer)) or self.n_xi < 1:
            raise ConfigurationError("n_xi must be a positive integer")
        if not self.delta_beta > 0:
            raise ConfigurationError("delta_beta must be positive")
        low, high = TESTED_C_STAR
        if not low <= self.c_star <= high:
            warnings.warn(
                f"c_star={self.c_star} lies outside the tested range [{low}, {high}]",
                stacklevel=3,
            )

    def shift_scale(self, beta: float) -> float:
        return math.sqrt(beta / self.c_star)

    def panel_rows(self, n: int) -> int:
        return n * n * self.n_xi if self.per_entry else self.n_xi

    def to_dict(self) -> dict:
        return {"c_star": self.c_star, "n_xi": self.n_xi, "delta_beta": self.delta_beta,
                "per_entry": self.per_entry}

    @classmethod
    def from_dict(cls, data: dict) -> "PerturbationConfig":
        unknown = set(data) - {"c_star", "n_xi", "delta_beta", "per_entry"}
        if unknown:
            raise ConfigurationError(f"unknown perturbation fields: {sorted(unknown)}")
        return cls(**data)


def xi_block(seed: int, block: int, n: int, d: int, config: PerturbationConfig,
             count: int = BLOCK_SIZE) -> np.ndarray:
    """Standard normal shift panels ``(count, rows, n, d)`` for one block of samples.

    Row ``i`` is the panel of sample ``block * BLOCK_SIZE + i``; it is the
    same whatever ``count`` is.
    """
    if not 0 < count <= BLOCK_SIZE:
        raise ConfigurationError(f"count must lie in 1..{BLOCK_SIZE}")
    rng = block_generator(seed, block, XI_STREAM)
    rows = config.panel_rows(n)
    out = np.empty((count, rows, n, d))
    for start in range(0, count, XI_CHUNK):
        stop = min(count, start + XI_CHUNK)
        out[start:stop] = rng.standard_normal((stop - start, rows, n, d))
    return out


def xi_panel(seed: int, index: int, n: int, d: int, config: PerturbationConfig) -> np.ndarray:
    block, row = divmod(int(index), BLOCK_SIZE)
    return xi_block(seed, block, n, d, config, count=row + 1)[row]


def perturbed_log_w(sample: BridgeSample, spec: PotentialSpec, grid: TimeGrid, beta: float,
                    config: PerturbationConfig, xi: np.ndarray) -> tuple[np.ndarray, bool]:
    _check_sample(sample, grid, beta)
    rows = config.panel_rows(sample.n)
    xi = np.ascontiguousarray(xi, dtype=np.float64)
    if xi.shape != (rows, sample.n, sample.d):
        raise ConfigurationError(f"xi panel must have shape {(rows, sample.n, sample.d)}, got {xi.shape}")
    pot = KernelPotential.from_spec(spec, sample.d)
    logw = np.empty((sample.n, sample.n))
    ok = kern.perturbed_entry_logs(
        np.ascontiguousarray(sample.x0), np.ascontiguousarray(sample.bridge), xi, float(beta),
        *pot.args(), config.shift_scale(beta), config.per_entry, logw,
    )
    return logw, bool(ok)


def perturbed_w(sample: BridgeSample, spec: PotentialSpec, grid: TimeGrid, beta: float,
                config: PerturbationConfig, xi_seed: int | None = None,
                xi: np.ndarray | None = None) -> np.ndarray:
    """Perturbed weight matrix of one sample (unscaled).

    The shift panel comes from ``xi`` if given, otherwise from the xi stream
    of ``xi_seed`` at the sample's index. Degenerate samples return NaNs.
    """
    if xi is None:
        if xi_seed is None:
            raise ConfigurationError("give either xi_seed or an explicit xi panel")
        xi = xi_panel(xi_seed, sample.seed_path[1], sample.n, sample.d, config)
    logw, ok = perturbed_log_w(sample, spec, grid, beta, config, xi)
    if not ok:
        return np.full_like(logw, np.nan)
    return np.exp(logw)


@dataclass(frozen=True)
class PerturbedBlockTask:
    """Per block: plain ``(A, B)`` at ``beta`` and perturbed ``(B+, B-)``."""

    system: SystemSpec
    steps: int
    seed: int
    samples: int
    config: PerturbationConfig
    coupled: bool = True

    def __call__(self, block: int) -> tuple[PairAccumulator, PairAccumulator]:
        return perturbed_block_values(self.system, TimeGrid(self.steps), self.seed, block,
                                      rows_in_block(self.samples, block), self.config,
                                      self.coupled, reduce=True)


def _perturbed_b(system, grid, blk, xis, beta, config):
    size = len(blk)
    out = np.empty(size)
    flag = np.empty(size, dtype=np.int64)
    pot = KernelPotential.from_spec(system.potential, system.d)
    kern.perturbed_block(blk.x0, blk.bridges, xis, blk.log_density, beta, *pot.args(),
                         config.shift_scale(beta), config.per_entry, out, flag)
    return out, flag


def perturbed_block_values(system: SystemSpec, grid: TimeGrid, seed: int, block: int,
                           count: int, config: PerturbationConfig, coupled: bool = True,
                           reduce: bool = False):
    """Plain and perturbed per-sample values on one block.

    ``coupled=False`` draws the ``beta - delta_beta`` leg from an unrelated
    seed, which is only useful to measure what the coupling buys.
    """
    density = system.density()
    blk = draw_block(seed, block, system.n, system.d, grid, density, count=count)
    xis = xi_block(seed, block, system.n, system.d, config, count)
    pot = KernelPotential.from_spec(system.potential, system.d)
    groups = system.groups()
    a = np.empty(count)
    b = np.empty(count)
    flag = np.empty(count, dtype=np.int64)
    kern.pair_block(blk.x0, blk.bridges, blk.log_density, system.beta, *pot.args(),
                    groups, int(groups.max()) + 1, a, b, flag)
    up, flag_up = _perturbed_b(system, grid, blk, xis, system.beta + config.delta_beta, config)
    if coupled:
        blk_down, xis_down = blk, xis
    else:
        other = replica_seed(seed, 1)
        blk_down = draw_block(other, block, system.n, system.d, grid, density, count=count)
        xis_down = xi_block(other, block, system.n, system.d, config, count)
    down, flag_down = _perturbed_b(system, grid, blk_down, xis_down,
                                   system.beta - config.delta_beta, config)
    if not reduce:
        return a, b, flag, up, down, flag_up | flag_down
    return (PairAccumulator.from_arrays(a, b, int(flag.sum())),
            PairAccumulator.from_arrays(up, down, int((flag_up | flag_down).sum())))


@dataclass
class PerturbationResult:
    """Plain estimate, perturbed estimate and the indicator ``|h_perturb - h_nu|``."""

    h_nu: EstimateReport
    h_perturb: EstimateReport
    log_ratio_variance: float
    config: PerturbationConfig
    coupled: bool = True
    metadata: dict = field(default_factory=dict)

    @property
    def indicator(self) -> float:
        return abs(self.h_perturb.estimate - self.h_nu.estimate)

    @property
    def relative_indicator(self) -> float:
        return self.indicator / abs(self.h_nu.estimate)

    def to_dict(self) -> dict:
        return {
            "h_nu": self.h_nu.to_dict(),
            "h_perturb": self.h_perturb.to_dict(),
            "indicator": self.indicator,
            "relative_indicator": self.relative_indicator,
            "log_ratio_variance": self.log_ratio_variance,
            "coupled": self.coupled,
            "config": self.config.to_dict(),
            **self.metadata,
        }


def central_difference_report(acc: PairAccumulator, system: SystemSpec, grid: TimeGrid,
                              seed: int | None, config: PerturbationConfig,
                              wall_time: float = 0.0) -> tuple[EstimateReport, float]:
    """``h_perturb`` from the accumulator of ``(B+, B-)`` pairs.

    Returns the report and the per-sample delta-method variance of
    ``log(mean B+) - log(mean B-)``.
    """
    up, down = acc.mean_a, acc.mean_b
    if up <= 0 or down <= 0:
        raise SignProblemError(
            f"perturbed partition estimate is non-positive (B+ mean {up:.3e}, B- mean {down:.3e})"
        )
    step = config.delta_beta
    beta = system.beta
    log_norm_up = system.log_normalization(beta + step)
    log_norm_down = system.log_normalization(beta - step)
    log_z_up = math.log(up) - log_norm_up
    log_z_down = math.log(down) - log_norm_down
    factor_up = nuclei_factor(system.potential, beta + step).log_value
    factor_down = nuclei_factor(system.potential, beta - step).log_value
    estimate = -((log_z_up + factor_up) - (log_z_down + factor_down)) / (2.0 * step)
    var_log_ratio = max(
        0.0, acc.var_a / up**2 + acc.var_b / down**2 - 2.0 * acc.cov_ab / (up * down)
    )
    se = math.sqrt(var_log_ratio / acc.count) / (2.0 * step)
    report = EstimateReport(
        quantity="perturbed_meanfield_energy",
        estimate=estimate,
        standard_error=se,
        relative_ci=Z95 * se / abs(estimate),
        samples=acc.count,
        dt=grid.physical_dt(beta),
        seed=seed,
        beta=beta,
        degenerate_count=acc.degenerate,
        wall_time=wall_time,
        flags=[],
        metadata={"log_z_plus": log_z_up, "log_z_minus": log_z_down, **config.to_dict()},
    )
    return report, var_log_ratio


def perturbed_meanfield(system: SystemSpec, grid: TimeGrid, samples: int, seed: int,
                        config: PerturbationConfig | None = None, workers: int = 1,
                        coupled: bool = True) -> PerturbationResult:
    """Plain and perturbed mean-field estimates from one pass over the draws.

    Both ``beta +- delta_beta`` legs reuse the initial positions (drawn from
    the density at ``beta``), the unit bridges and the xi panels.
    """
    config = config or PerturbationConfig()
    if not config.delta_beta < system.beta / 10:
        raise ConfigurationError("delta_beta must be below beta / 10")
    if samples < 2:
        raise ConfigurationError("need at least two samples")
    start = time.perf_counter()
    task = PerturbedBlockTask(system, grid.steps, int(seed), int(samples), config, coupled)
    parts = run_blocks(task, block_count(samples), workers)
    plain = tree_merge([p[0] for p in parts])
    perturbed = tree_merge([p[1] for p in parts])
    wall = time.perf_counter() - start
    eps = choose_epsilon(system, grid, samples, seed)
    h_nu = meanfield_report(plain, system, grid, seed, eps, wall)
    h_perturb, var_log = central_difference_report(perturbed, system, grid, seed, config, wall)
    return PerturbationResult(h_nu, h_perturb, var_log, config, coupled)
