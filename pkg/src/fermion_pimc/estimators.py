"""Monte Carlo drivers for the partition function and the mean-field energy.

Samples are processed in blocks of :data:`~fermion_pimc.paths.BLOCK_SIZE`.
Each block is reduced to a :class:`PairAccumulator`. Blocks are then merged
along a fixed index tree, so the result does not depend on how many worker
processes evaluated them.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels as kern
from .accumulate import EstimateReport, PairAccumulator, tree_merge
from .determinant import KernelPotential
from .exceptions import ConfigurationError, EstimationError, SignProblemError
from .paths import BLOCK_SIZE, TimeGrid, draw_block
from .potentials import nuclei_factor
from .statistics import Z95, default_epsilon, pilot_size, ratio_with_ci
from .system import SystemSpec

#: Fraction of degenerate samples above which a run is flagged.
DEGENERATE_RATE_LIMIT = 1e-6

__all__ = [
    "PairAccumulator",
    "EstimateReport",
    "PairBlockTask",
    "run_blocks",
    "block_pair_values",
    "accumulate_pairs",
    "estimate_partition",
    "estimate_meanfield",
    "partition_report",
    "meanfield_report",
    "convergence_sweep",
    "replica_seed",
]


def replica_seed(seed: int, replica: int) -> int:
    """Independent 64-bit seed for replica ``replica`` of a base seed."""
    state = np.random.SeedSequence([int(seed), int(replica), 0x5EED]).generate_state(1, np.uint64)
    return int(state[0])


def block_count(samples: int) -> int:
    return -(-int(samples) // BLOCK_SIZE)


def rows_in_block(samples: int, block: int) -> int:
    return min(BLOCK_SIZE, int(samples) - block * BLOCK_SIZE)


@dataclass(frozen=True)
class PairBlockTask:
    """Evaluate ``(A_i, B_i)`` on one block of the sample stream."""

    system: SystemSpec
    steps: int
    seed: int
    samples: int

    def __call__(self, block: int) -> PairAccumulator:
        a, b, flag = block_pair_values(self.system, TimeGrid(self.steps), self.seed, block,
                                       rows_in_block(self.samples, block))
        return PairAccumulator.from_arrays(a, b, int(flag.sum()))


def block_pair_values(system: SystemSpec, grid: TimeGrid, seed: int, block: int,
                      count: int | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-sample ``(A_i, B_i, degenerate_flag)`` for one block of the stream."""
    blk = draw_block(seed, block, system.n, system.d, grid, system.density(), count=count)
    size = len(blk)
    a = np.empty(size)
    b = np.empty(size)
    flag = np.empty(size, dtype=np.int64)
    groups = system.groups()
    pot = KernelPotential.from_spec(system.potential, system.d)
    kern.pair_block(blk.x0, blk.bridges, blk.log_density, system.beta, *pot.args(),
                    groups, int(groups.max()) + 1, a, b, flag)
    return a, b, flag


def run_blocks(task: Callable[[int], PairAccumulator], blocks: Sequence[int] | int,
               workers: int = 1) -> list[PairAccumulator]:
    """Evaluate ``task`` on each block index, in order.

    ``workers > 1`` distributes blocks over processes; the returned list is
    ordered by block regardless.
    """
    indices = list(range(blocks)) if isinstance(blocks, int) else list(blocks)
    if workers < 1:
        raise ConfigurationError("workers must be at least 1")
    if workers == 1 or len(indices) <= 1:
        return [task(b) for b in indices]
    chunk = max(1, len(indices) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, indices, chunksize=chunk))


def accumulate_pairs(system: SystemSpec, grid: TimeGrid, samples: int, seed: int,
                     workers: int = 1) -> PairAccumulator:
    """Merged accumulator over the first ``samples`` draws of ``seed``."""
    if samples < 2:
        raise ConfigurationError("need at least two samples")
    task = PairBlockTask(system, grid.steps, int(seed), int(samples))
    return tree_merge(run_blocks(task, block_count(samples), workers))


def _flags(acc: PairAccumulator) -> list[str]:
    flags = []
    if acc.degenerate > DEGENERATE_RATE_LIMIT * acc.count:
        flags.append("degenerate_rate_exceeded")
    return flags


def _check_usable(acc: PairAccumulator) -> None:
    if acc.degenerate >= acc.count:
        raise EstimationError("every sample in the batch was degenerate")


def partition_report(acc: PairAccumulator, system: SystemSpec, grid: TimeGrid, seed: int | None,
                     wall_time: float = 0.0, log_normalization: float | None = None) -> EstimateReport:
    """Partition-function estimate from a denominator accumulator."""
    _check_usable(acc)
    log_norm = system.log_normalization() if log_normalization is None else log_normalization
    factor = nuclei_factor(system.potential, system.beta)
    scale = math.exp(factor.log_value - log_norm)
    sd_b = math.sqrt(acc.var_b)
    estimate = scale * acc.mean_b
    se = scale * sd_b / math.sqrt(acc.count)
    rel_ci = Z95 * sd_b / (math.sqrt(acc.count) * abs(acc.mean_b)) if acc.mean_b else math.inf
    return EstimateReport(
        quantity="partition_function",
        estimate=estimate,
        standard_error=se,
        relative_ci=rel_ci,
        samples=acc.count,
        dt=grid.physical_dt(system.beta),
        seed=seed,
        beta=system.beta,
        degenerate_count=acc.degenerate,
        wall_time=wall_time,
        flags=_flags(acc),
        metadata={"log_normalization": log_norm, "nuclei_log_factor": factor.log_value,
                  "steps": grid.steps},
    )


def meanfield_report(acc: PairAccumulator, system: SystemSpec, grid: TimeGrid, seed: int | None,
                     epsilon: float | None, wall_time: float = 0.0) -> EstimateReport:
    """Mean-field estimate ``mean A / g_eps(mean B)`` plus the nuclear constant."""
    _check_usable(acc)
    se_b = math.sqrt(acc.var_b / acc.count)
    if abs(acc.mean_b) < 2.0 * se_b:
        raise SignProblemError(
            f"denominator mean {acc.mean_b:.3e} is within two standard errors ({se_b:.3e}) of zero"
        )
    offset = nuclei_factor(system.potential, system.beta).nuclear_energy
    report = ratio_with_ci(
        acc, epsilon, quantity="meanfield_energy", offset=offset,
        dt=grid.physical_dt(system.beta), seed=seed, beta=system.beta,
        metadata={"nuclear_energy": offset, "steps": grid.steps},
    )
    report.wall_time = wall_time
    report.flags = _flags(acc)
    return report


def estimate_partition(system: SystemSpec, grid: TimeGrid, samples: int, seed: int,
                       workers: int = 1) -> EstimateReport:
    """Partition-function estimate over ``samples`` draws."""
    start = time.perf_counter()
    acc = accumulate_pairs(system, grid, samples, seed, workers)
    return partition_report(acc, system, grid, seed, time.perf_counter() - start)


def choose_epsilon(system: SystemSpec, grid: TimeGrid, samples: int, seed: int) -> float:
    """Regularisation width from the pilot prefix of the same stream."""
    pilot = accumulate_pairs(system, grid, pilot_size(samples), seed)
    return default_epsilon(pilot.mean_b)


def estimate_meanfield(system: SystemSpec, grid: TimeGrid, samples: int, seed: int,
                       workers: int = 1, epsilon: float | None = None,
                       regularize: bool = True) -> EstimateReport:
    """Mean-field energy estimate ``h = E[A] / E[B]`` over ``samples`` draws.

    ``epsilon`` defaults to a quarter of the pilot denominator mean;
    ``regularize=False`` disables the regularised denominator altogether.
    """
    start = time.perf_counter()
    acc = accumulate_pairs(system, grid, samples, seed, workers)
    if regularize and epsilon is None:
        epsilon = choose_epsilon(system, grid, samples, seed)
    return meanfield_report(acc, system, grid, seed, epsilon if regularize else None,
                            time.perf_counter() - start)


def estimate_both(system: SystemSpec, grid: TimeGrid, samples: int, seed: int,
                  workers: int = 1) -> tuple[EstimateReport, EstimateReport]:
    """Partition function and mean-field energy from one pass."""
    start = time.perf_counter()
    acc = accumulate_pairs(system, grid, samples, seed, workers)
    wall = time.perf_counter() - start
    eps = choose_epsilon(system, grid, samples, seed)
    return (partition_report(acc, system, grid, seed, wall),
            meanfield_report(acc, system, grid, seed, eps, wall))


def convergence_sweep(system: SystemSpec, grid: TimeGrid, sizes: Sequence[int], seed: int,
                      workers: int = 1) -> list[tuple[EstimateReport, EstimateReport]]:
    """``(Z, h)`` reports for each prefix length in ``sizes``.

    All sizes share the sample stream of ``seed``; the blocks of the largest
    size are evaluated once and merged per prefix.
    """
    sizes = [int(s) for s in sizes]
    if any(b <= a for a, b in zip(sizes, sizes[1:])) or not sizes or sizes[0] < 2:
        raise ConfigurationError("sizes must be increasing and at least 2")
    largest = sizes[-1]
    full = largest // BLOCK_SIZE
    start = time.perf_counter()
    parts = run_blocks(PairBlockTask(system, grid.steps, int(seed), full * BLOCK_SIZE), full, workers)
    out = []
    for size in sizes:
        whole, rest = divmod(size, BLOCK_SIZE)
        acc = tree_merge(parts, 0, whole)
        if rest:
            tail = PairBlockTask(system, grid.steps, int(seed), size)(whole)
            acc = acc.merge(tail)
        wall = time.perf_counter() - start
        eps = choose_epsilon(system, grid, size, seed)
        out.append((partition_report(acc, system, grid, seed, wall),
                    meanfield_report(acc, system, grid, seed, eps, wall)))
    return out
