"""Reference values: exact harmonic-trap recursion and brute-force
permutation sums.

The recursion alternates in sign and loses roughly ``n * beta`` digits to
cancellation, so it is evaluated in mpmath at raised precision.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import lru_cache

import mpmath
import numpy as np

from . import _kernels as kern
from .accumulate import EstimateReport, PairAccumulator, tree_merge
from .determinant import KernelPotential
from .estimators import block_count, meanfield_report, partition_report, rows_in_block, run_blocks
from .exceptions import ConfigurationError, DomainError, PrecisionError, UnsupportedConfigurationError
from .paths import TimeGrid, draw_block
from .statistics import default_epsilon, pilot_size
from .system import SystemSpec

MAX_TENSOR_PARTICLES = 8
_WORK_DPS = 60


class Statistics(str, Enum):
    FERMION = "Fermion"
    BOSON = "Boson"
    DISTINGUISHABLE = "Distinguishable"

    def weight(self, parity: int, is_identity: bool) -> float:
        if self is Statistics.FERMION:
            return -1.0 if parity else 1.0
        if self is Statistics.BOSON:
            return 1.0
        return 1.0 if is_identity else 0.0


# ---------------------------------------------------------------- recursion


def _check_ho_args(n: int, beta: float, d: int) -> None:
    if n < 0:
        raise DomainError("n must be non-negative")
    if not beta > 0:
        raise DomainError("beta must be positive")
    if d not in (1, 2, 3):
        raise DomainError("d must be 1, 2 or 3")


def single_particle_partition(beta, d: int):
    """``(exp(-beta/2) / (1 - exp(-beta)))^d`` as an mpmath number."""
    beta = mpmath.mpf(beta)
    return (mpmath.exp(-beta / 2) / (1 - mpmath.exp(-beta))) ** d


def _recursion(n: int, beta, d: int, statistics: Statistics):
    beta = mpmath.mpf(beta)
    if statistics is Statistics.DISTINGUISHABLE:
        return single_particle_partition(beta, d) ** n
    z1 = [None] + [single_particle_partition(k * beta, d) for k in range(1, n + 1)]
    table = [mpmath.mpf(1)]
    for m in range(1, n + 1):
        acc = mpmath.mpf(0)
        for k in range(1, m + 1):
            sign = 1 if (statistics is Statistics.BOSON or k % 2 == 1) else -1
            acc += sign * z1[k] * table[m - k]
        table.append(acc / m)
    return table[n]


def exact_ho_log_partition(n: int, beta: float, d: int,
                           statistics: Statistics = Statistics.FERMION) -> float:
    """``log Z_n`` of the isotropic unit harmonic trap."""
    _check_ho_args(n, beta, d)
    with mpmath.workdps(_WORK_DPS + int(2 * n * beta) + 2 * n):
        value = _recursion(n, beta, d, Statistics(statistics))
        if value <= 0:
            raise PrecisionError("recursion produced a non-positive partition function")
        return float(mpmath.log(value))


def exact_ho_partition(n: int, beta: float, d: int,
                       statistics: Statistics = Statistics.FERMION) -> float:
    """``Z_n(beta)`` for ``n`` non-interacting particles in the trap.

    Fermions use the alternating recursion, bosons the same recursion
    without the sign, distinguishable particles ``Z_1^n`` (no ``1/n!``).
    Values below the double range raise :class:`PrecisionError`; use
    :func:`exact_ho_log_partition` there.
    """
    log_z = exact_ho_log_partition(n, beta, d, statistics)
    value = math.exp(log_z)
    if value == 0.0 or math.isinf(value):
        raise PrecisionError(f"Z_n out of double range (log Z = {log_z}); use the log variant")
    return value


def exact_ho_meanfield(n: int, beta: float, d: int, tolerance: float = 1e-9,
                       statistics: Statistics = Statistics.FERMION,
                       initial_step: float | None = None) -> float:
    """``-d/dbeta log Z_n`` by central differences with step halving.

    The step starts at ``beta / 10`` and halves until two successive
    estimates differ by less than ``tolerance``; more than 20 halvings
    raise :class:`PrecisionError`.
    """
    _check_ho_args(n, beta, d)
    if not tolerance > 0:
        raise DomainError("tolerance must be positive")
    step = beta / 10 if initial_step is None else initial_step
    stats = Statistics(statistics)
    dps = _WORK_DPS + int(2 * n * (beta + step)) + 2 * n + 20
    with mpmath.workdps(dps):
        b = mpmath.mpf(beta)

        def log_z(x):
            return mpmath.log(_recursion(n, x, d, stats))

        def central(h):
            h = mpmath.mpf(h)
            return -(log_z(b + h) - log_z(b - h)) / (2 * h)

        previous = central(step)
        for _ in range(20):
            step /= 2
            current = central(step)
            if abs(current - previous) < tolerance:
                return float(current)
            previous = current
    raise PrecisionError("central differences did not converge within 20 halvings")


def single_particle_meanfield(beta: float, d: int) -> float:
    """Closed form ``d (1/2 + 1/(e^beta - 1))``."""
    return d * (0.5 + 1.0 / math.expm1(beta))


# ------------------------------------------------------------- permutations


@lru_cache(maxsize=None)
def permutations_with_parity(n: int) -> tuple[np.ndarray, np.ndarray]:
    """All permutations of ``range(n)`` in lexicographic order and their parities."""
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64).reshape(-1, n)
    parities = np.empty(perms.shape[0], dtype=np.int64)
    for row, perm in enumerate(perms):
        seen = [False] * n
        transpositions = 0
        for start in range(n):
            length = 0
            j = start
            while not seen[j]:
                seen[j] = True
                j = perm[j]
                length += 1
            if length:
                transpositions += length - 1
        parities[row] = transpositions % 2
    perms.setflags(write=False)
    parities.setflags(write=False)
    return perms, parities


def permutation_weights(n: int, statistics: Statistics,
                        spins: tuple[float, ...] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Permutations with non-zero statistical weight and those weights.

    With ``spins`` only permutations mapping each particle to one of equal
    spin are kept.
    """
    perms, parities = permutations_with_parity(n)
    identity = np.arange(n)
    keep_rows = []
    weights = []
    for perm, parity in zip(perms, parities):
        if spins is not None and any(spins[k] != spins[perm[k]] for k in range(n)):
            continue
        w = Statistics(statistics).weight(int(parity), bool(np.array_equal(perm, identity)))
        if w != 0.0:
            keep_rows.append(perm)
            weights.append(w)
    return np.array(keep_rows, dtype=np.int64).reshape(-1, n), np.array(weights, dtype=np.float64)


def signed_permutation_sum(w: np.ndarray, statistics: Statistics = Statistics.FERMION) -> float:
    """``sum_sigma weight(sigma) prod_k w[k, sigma(k)]`` by enumeration."""
    w = np.asarray(w, dtype=np.float64)
    n = w.shape[0]
    perms, weights = permutation_weights(n, statistics)
    rows = np.arange(n)
    return float(sum(weight * np.prod(w[rows, perm]) for perm, weight in zip(perms, weights)))


# ------------------------------------------------------------ tensor oracle


@dataclass(frozen=True)
class TensorBlockTask:
    system: SystemSpec
    steps: int
    seed: int
    samples: int
    perms: np.ndarray
    weights: np.ndarray

    def __call__(self, block: int) -> PairAccumulator:
        a, b, flag = _tensor_values(self.system, TimeGrid(self.steps), self.seed, block,
                                    rows_in_block(self.samples, block), self.perms, self.weights)
        return PairAccumulator.from_arrays(a, b, int(flag.sum()))


def _tensor_values(system, grid, seed, block, count, perms, weights):
    blk = draw_block(seed, block, system.n, system.d, grid, system.density(), count=count)
    size = len(blk)
    a = np.empty(size)
    b = np.empty(size)
    flag = np.empty(size, dtype=np.int64)
    pot = KernelPotential.from_spec(system.potential, system.d)
    kern.tensor_block(blk.x0, blk.bridges, blk.log_density, system.beta, *pot.args(),
                      perms, weights, a, b, flag)
    return a, b, flag


def _tensor_task(system: SystemSpec, grid: TimeGrid, samples: int, seed: int,
                 statistics: Statistics) -> TensorBlockTask:
    if system.n > MAX_TENSOR_PARTICLES:
        raise UnsupportedConfigurationError(
            f"tensor oracle enumerates n! permutations; n={system.n} exceeds the limit of "
            f"{MAX_TENSOR_PARTICLES}. Use the determinant estimator for larger systems."
        )
    perms, weights = permutation_weights(system.n, Statistics(statistics), system.spins)
    return TensorBlockTask(system, grid.steps, int(seed), int(samples), perms, weights)


def tensor_log_normalization(system: SystemSpec, statistics: Statistics) -> float:
    """Distinguishable particles carry no factorial; the others use ``n!``
    (or ``n_up! n_down!`` with spins)."""
    if Statistics(statistics) is Statistics.DISTINGUISHABLE:
        return 0.5 * system.dimension * math.log(2 * math.pi * system.beta)
    return system.log_normalization()


def tensor_accumulate(system: SystemSpec, grid: TimeGrid, samples: int, seed: int,
                      statistics: Statistics = Statistics.FERMION, workers: int = 1) -> PairAccumulator:
    task = _tensor_task(system, grid, samples, seed, statistics)
    return tree_merge(run_blocks(task, block_count(samples), workers))


def tensor_estimate(system: SystemSpec, grid: TimeGrid, samples: int, seed: int,
                    statistics: Statistics = Statistics.FERMION,
                    workers: int = 1) -> tuple[EstimateReport, EstimateReport]:
    """Permutation-sum estimates ``(Z, h)`` on the same draws as the determinant.

    Spin restriction is taken from ``system.spins``.
    """
    start = time.perf_counter()
    stats = Statistics(statistics)
    acc = tensor_accumulate(system, grid, samples, seed, stats, workers)
    wall = time.perf_counter() - start
    pilot = tensor_accumulate(system, grid, pilot_size(samples), seed, stats)
    eps = default_epsilon(pilot.mean_b)
    z_report = partition_report(acc, system, grid, seed, wall,
                                log_normalization=tensor_log_normalization(system, stats))
    h_report = meanfield_report(acc, system, grid, seed, eps, wall)
    for rep in (z_report, h_report):
        rep.quantity = f"tensor_{rep.quantity}"
        rep.metadata["statistics"] = stats.value
        rep.metadata["normalization"] = (
            "no 1/n! (product of one-particle traces)" if stats is Statistics.DISTINGUISHABLE
            else "1/n! per exchange group"
        )
    return z_report, h_report


def tensor_sample_values(system: SystemSpec, grid: TimeGrid, seed: int, block: int = 0,
                         count: int | None = None,
                         statistics: Statistics = Statistics.FERMION
                         ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-sample ``(A_i, B_i, degenerate_flag)`` of the permutation sum for one block."""
    task = _tensor_task(system, grid, 2, seed, statistics)
    return _tensor_values(system, grid, seed, block, count, task.perms, task.weights)


# ------------------------------------------------------- cycle coefficients


def cycle_coefficient_exact(m: int) -> Fraction:
    if m < 2:
        raise DomainError("cycle length must be at least 2")
    if m == 2:
        return Fraction(2)
    return sum((Fraction(1, k) for k in range(1, m)), Fraction(0))


def cycle_coefficient(m: int) -> float:
    """Width coefficient of an ``m``-cycle marginal: 2 for ``m = 2``, else ``H_{m-1}``."""
    return float(cycle_coefficient_exact(m))
