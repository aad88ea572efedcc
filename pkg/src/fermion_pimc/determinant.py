"""Per-sample determinant machinery.

For one draw (initial positions plus unit bridges) this module builds the
``n x n`` matrix ``W`` of path weights and its elementwise beta-derivative.
It then reduces them to the numerator/denominator pair ``(A_i, B_i)``
consumed by the estimators:

    B_i = det W / p(x0)
    A_i = -[Tr(adj(W) dW/dbeta) - dn/(2 beta) det W] / p(x0)

Entries are kept in log form until the determinant is taken, with the
largest log-entry factored out of every matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels as kern
from .exceptions import ConfigurationError, NumericError, UnsupportedConfigurationError
from .paths import BridgeSample, ImportanceDensity, TimeGrid
from .potentials import PotentialSpec
from .system import spin_groups


@dataclass(frozen=True)
class KernelPotential:
    """Potential flattened into the arrays the compiled kernels take."""

    omega_sq: np.ndarray
    quartic: float
    nuc_pos: np.ndarray
    nuc_z: np.ndarray
    coupling: float

    @classmethod
    def from_spec(cls, spec: PotentialSpec, d: int) -> "KernelPotential":
        pos, charges = spec.nuclei_arrays(d)
        return cls(spec.omega_squared(d), spec.quartic, pos, charges, spec.coupling)

    def args(self) -> tuple:
        return (self.omega_sq, self.quartic, self.nuc_pos, self.nuc_z, self.coupling)


@dataclass(frozen=True)
class WEvaluation:
    """``W = exp(log_scale) * w`` and ``dW/dbeta = exp(log_scale) * dw_dbeta``."""

    w: np.ndarray
    dw_dbeta: np.ndarray | None
    log_scale: float
    degenerate: bool = False

    def unscaled(self) -> tuple[np.ndarray, np.ndarray | None]:
        factor = math.exp(self.log_scale)
        dw = None if self.dw_dbeta is None else self.dw_dbeta * factor
        return self.w * factor, dw


@dataclass(frozen=True)
class SamplePair:
    """Numerator ``A_i`` and denominator ``B_i`` of one draw."""

    a_value: float
    b_value: float
    degenerate: bool = False


def nu_map(j: int, k: int, ell: int) -> int:
    """Partner endpoint used for particle ``j`` in entry ``(k, ell)``."""
    return k if j == ell else j


def _check_sample(sample: BridgeSample, grid: TimeGrid, beta: float) -> None:
    if sample.steps != grid.steps:
        raise ConfigurationError(f"sample has {sample.steps} steps, grid has {grid.steps}")
    if not beta > 0:
        raise ConfigurationError("beta must be positive")


def entry_logs(
    sample: BridgeSample, spec: PotentialSpec, grid: TimeGrid, beta: float,
    direct_quadrature: bool = False,
) -> tuple[np.ndarray, np.ndarray, bool]:
    """``(log W, dlogW/dbeta, ok)`` for one sample.

    Trap-only potentials use the moment expansion of the quadrature unless
    ``direct_quadrature`` forces node-by-node evaluation.
    """
    _check_sample(sample, grid, beta)
    n = sample.n
    logw = np.empty((n, n))
    dlogw = np.empty((n, n))
    pot = KernelPotential.from_spec(spec, sample.d)
    kernel = kern.entry_logs if direct_quadrature else kern.any_entry_logs
    ok = kernel(
        np.ascontiguousarray(sample.x0), np.ascontiguousarray(sample.bridge), float(beta),
        *pot.args(), logw, dlogw,
    )
    return logw, dlogw, bool(ok)


def build_w(
    sample: BridgeSample,
    spec: PotentialSpec,
    grid: TimeGrid,
    beta: float,
    with_derivative: bool = True,
    rescale: bool = True,
) -> WEvaluation:
    """Matrix of path weights for one sample.

    With ``rescale`` the largest log-entry is factored into ``log_scale``
    so that the stored matrix has maximum entry 1.
    """
    logw, dlogw, ok = entry_logs(sample, spec, grid, beta)
    if not ok:
        nan = np.full_like(logw, np.nan)
        return WEvaluation(nan, nan if with_derivative else None, 0.0, degenerate=True)
    shift = float(logw.max()) if rescale else 0.0
    w = np.exp(logw - shift)
    dw = w * dlogw if with_derivative else None
    return WEvaluation(w, dw, shift)


def det_and_adjugate(w: np.ndarray) -> tuple[float, np.ndarray]:
    """Determinant by pivoted LU and adjugate (``det * inverse``, or cofactors
    when the 1-norm condition number exceeds 1e12)."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ConfigurationError("det_and_adjugate needs a square matrix")
    if not np.all(np.isfinite(w)):
        raise NumericError("matrix has non-finite entries")
    if w.shape[0] == 0:
        return 1.0, np.zeros((0, 0))
    det, adj, _ = kern.det_adjugate(np.ascontiguousarray(w))
    return float(det), adj


def _pair_from_logs(logw, dlogw, groups, log_p, beta, d) -> SamplePair:
    n = logw.shape[0]
    prod, dprod, log_shift = kern.combine_groups(logw, dlogw, groups, int(groups.max()) + 1)
    scale = math.exp(log_shift - log_p)
    b = prod * scale
    a = -(dprod - d * n / (2.0 * beta) * prod) * scale
    return SamplePair(float(a), float(b))


def sample_pair(
    sample: BridgeSample,
    spec: PotentialSpec,
    grid: TimeGrid,
    beta: float,
    density: ImportanceDensity,
) -> SamplePair:
    """``(A_i, B_i)`` for one draw; degenerate draws give flagged zeros."""
    logw, dlogw, ok = entry_logs(sample, spec, grid, beta)
    if not ok:
        return SamplePair(0.0, 0.0, True)
    log_p = float(density.log_value(sample.x0.reshape(-1)))
    return _pair_from_logs(logw, dlogw, np.zeros(sample.n, dtype=np.int64), log_p, beta, sample.d)


def spin_split_pair(
    sample: BridgeSample,
    spec: PotentialSpec,
    grid: TimeGrid,
    beta: float,
    spins: Sequence[float],
    density: ImportanceDensity | None = None,
) -> SamplePair:
    """``(A_i, B_i)`` with ``B_i = det(W_up) det(W_down) / p(x0)``.

    The factorial normalisation ``n_up! n_down!`` is applied by the
    estimator, as ``n!`` is for :func:`sample_pair`.
    """
    if not spec.is_separable:
        raise UnsupportedConfigurationError(
            "spin-split determinants require a particle-wise separable potential"
        )
    if len(spins) != sample.n or any(float(s) not in (0.5, -0.5) for s in spins):
        raise ConfigurationError("spins must give +0.5 or -0.5 for every particle")
    density = density or ImportanceDensity(beta, sample.n * sample.d)
    logw, dlogw, ok = entry_logs(sample, spec, grid, beta)
    if not ok:
        return SamplePair(0.0, 0.0, True)
    log_p = float(density.log_value(sample.x0.reshape(-1)))
    return _pair_from_logs(logw, dlogw, spin_groups(spins, sample.n), log_p, beta, sample.d)
