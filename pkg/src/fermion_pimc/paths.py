"""Reproducible Brownian-bridge sampling on the unit interval.

Every random number is derived from a counter-based Philox stream keyed by
``(seed, stream)`` and positioned by block index, so a block of samples is a
pure function of ``(seed, block)``. Samples are generated in fixed-size
blocks; sample ``i`` lives in block ``i // BLOCK_SIZE``. Within a block the
draw order is fixed: mixture-component uniforms, then initial-position
normals, then Wiener increments. Because the layout never depends on how
many samples a caller asks for, any prefix of the stream is reproduced
bit-for-bit and any worker split yields the same values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .exceptions import ConfigurationError, DomainError

BLOCK_SIZE = 1024

#: Stream identifiers that partition one seed into independent substreams.
PATH_STREAM = 0
XI_STREAM = 1

_U64 = 1 << 64


def _check_dimension(d: int) -> None:
    if d not in (1, 2, 3):
        raise ConfigurationError(f"dimension d must be 1, 2 or 3, got {d!r}")


def _check_count(n: int) -> None:
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ConfigurationError(f"particle count n must be a positive integer, got {n!r}")


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < _U64:
        raise ConfigurationError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
    return seed


def block_generator(seed: int, block: int, stream: int = PATH_STREAM) -> np.random.Generator:
    """Return the Philox generator owning ``block`` of ``stream`` under ``seed``.

    The block index occupies the most significant counter word, so blocks
    never overlap unless a single block consumes 2**192 draws.
    """
    seed = _check_seed(seed)
    if block < 0 or stream < 0:
        raise ConfigurationError("block and stream indices must be non-negative")
    bit_gen = np.random.Philox(key=seed | (int(stream) << 64), counter=int(block) << 192)
    return np.random.Generator(bit_gen)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``s_m = m / steps`` on the unit interval."""

    steps: int

    def __post_init__(self) -> None:
        if not isinstance(self.steps, (int, np.integer)) or self.steps < 1:
            raise ConfigurationError(f"grid needs at least one step, got {self.steps!r}")

    @classmethod
    def from_dt(cls, beta: float, dt: float) -> "TimeGrid":
        """Grid whose physical step ``beta / steps`` equals ``dt``.

        ``beta / dt`` must be an integer up to 1e-9 relative slack.
        """
        if not (beta > 0 and dt > 0):
            raise ConfigurationError("beta and dt must both be positive")
        ratio = beta / dt
        steps = int(round(ratio))
        if steps < 1 or abs(ratio - steps) > 1e-9 * max(1.0, ratio):
            raise ConfigurationError(
                f"beta={beta} is not an integer multiple of dt={dt} (beta/dt={ratio})"
            )
        return cls(steps)

    @property
    def delta_s(self) -> float:
        return 1.0 / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.steps + 1, dtype=np.float64) / self.steps

    def physical_dt(self, beta: float) -> float:
        return beta / self.steps

    def node_index(self, s: float) -> int:
        m = int(round(s * self.steps))
        if m < 0 or m > self.steps or abs(m / self.steps - s) > 1e-12:
            raise DomainError(f"s={s} is not a node of a {self.steps}-step grid")
        return m

    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.steps + 1, 1.0 / self.steps)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w


@dataclass(frozen=True)
class ImportanceDensity:
    """Equal-weight mixture of centred Gaussians with variances ``beta`` and ``1/beta``.

    Normalised over ``R^dimension`` where ``dimension = d * n``.
    """

    beta: float
    dimension: int

    def __post_init__(self) -> None:
        if not self.beta > 0:
            raise ConfigurationError(f"beta must be positive, got {self.beta}")
        if self.dimension < 1:
            raise ConfigurationError(f"dimension must be positive, got {self.dimension}")

    @property
    def sigma1_sq(self) -> float:
        return float(self.beta)

    @property
    def sigma2_sq(self) -> float:
        return 1.0 / self.beta

    def log_value(self, x: np.ndarray) -> np.ndarray | float:
        """Log density of points given as ``(..., dimension)`` or ``(..., n, d)`` arrays."""
        x = np.asarray(x, dtype=np.float64)
        if not np.all(np.isfinite(x)):
            raise DomainError("density evaluated at a non-finite point")
        flat = np.atleast_1d(x)
        if flat.shape[-1] != self.dimension and flat.ndim >= 2:
            flat = flat.reshape(flat.shape[:-2] + (-1,))
        if flat.shape[-1] != self.dimension:
            raise DomainError(
                f"point has {flat.shape[-1]} coordinates, density expects {self.dimension}"
            )
        r2 = np.einsum("...i,...i->...", flat, flat)
        return log_mixture_density(r2, self.beta, self.dimension)

    def value(self, x: np.ndarray) -> np.ndarray | float:
        return np.exp(self.log_value(x))

    def component_scales(self, uniforms: np.ndarray) -> np.ndarray:
        """Standard deviation chosen per sample from mixture uniforms."""
        return np.where(uniforms < 0.5, math.sqrt(self.sigma1_sq), math.sqrt(self.sigma2_sq))


def log_mixture_density(r2, beta: float, dimension: int):
    """Log of the two-Gaussian mixture given squared radii ``r2``."""
    half = 0.5 * dimension
    log1 = -half * math.log(2.0 * math.pi * beta) - r2 / (2.0 * beta)
    log2 = -half * math.log(2.0 * math.pi / beta) - 0.5 * beta * r2
    return math.log(0.5) + np.logaddexp(log1, log2)


def density_value(density: ImportanceDensity, x0: np.ndarray) -> float:
    """Mixture density at a single point of ``R^{dn}``; strictly positive."""
    return float(density.value(np.asarray(x0, dtype=np.float64).reshape(-1)))


@dataclass(frozen=True)
class BridgeSample:
    """One Monte Carlo draw: initial positions plus one unit bridge per particle."""

    x0: np.ndarray  # (n, d)
    bridge: np.ndarray  # (n, M+1, d)
    seed_path: tuple[int, int]

    @property
    def n(self) -> int:
        return self.x0.shape[0]

    @property
    def d(self) -> int:
        return self.x0.shape[1]

    @property
    def steps(self) -> int:
        return self.bridge.shape[1] - 1


@dataclass(frozen=True)
class SampleBlock:
    """A contiguous run of samples in array form, as consumed by the kernels."""

    first_index: int
    x0: np.ndarray  # (B, n, d)
    bridges: np.ndarray  # (B, n, M+1, d)
    log_density: np.ndarray  # (B,)

    def __len__(self) -> int:
        return self.x0.shape[0]

    def sample(self, row: int, seed: int) -> BridgeSample:
        return BridgeSample(
            x0=self.x0[row].copy(),
            bridge=self.bridges[row].copy(),
            seed_path=(int(seed), self.first_index + row),
        )


def unit_bridges(increments: np.ndarray) -> np.ndarray:
    """Standard bridges from unit-variance increments of shape ``(B, n, M, d)``.

    Returns ``(B, n, M+1, d)`` with ``B(s_m) = W(s_m) - s_m W(1)`` where
    ``W`` is the scaled partial sum; both endpoints are exactly zero.
    """
    increments = np.ascontiguousarray(increments, dtype=np.float64)
    b, n, steps, d = increments.shape
    out = np.empty((b, n, steps + 1, d))
    _kernels.unit_bridges(increments, out)
    return out


def draw_block(
    seed: int,
    block: int,
    n: int,
    d: int,
    grid: TimeGrid,
    density: ImportanceDensity,
    count: int | None = None,
) -> SampleBlock:
    """Generate block ``block`` of the path stream.

    ``count`` truncates the block after generation; the values of the
    retained rows do not depend on it.
    """
    _check_count(n)
    _check_dimension(d)
    if density.dimension != n * d:
        raise ConfigurationError(
            f"density dimension {density.dimension} does not match n*d={n * d}"
        )
    rng = block_generator(seed, block, PATH_STREAM)
    uniforms = rng.random(BLOCK_SIZE)
    normals0 = rng.standard_normal((BLOCK_SIZE, n, d))
    increments = rng.standard_normal((BLOCK_SIZE, n, grid.steps, d))
    keep = BLOCK_SIZE if count is None else int(count)
    if not 0 < keep <= BLOCK_SIZE:
        raise ConfigurationError(f"count must lie in 1..{BLOCK_SIZE}, got {count}")
    scales = density.component_scales(uniforms[:keep])
    x0 = normals0[:keep] * scales[:, None, None]
    bridges = unit_bridges(increments[:keep])
    log_p = density.log_value(x0.reshape(keep, -1))
    return SampleBlock(block * BLOCK_SIZE, x0, bridges, np.asarray(log_p, dtype=np.float64))


def sample_bridge(
    seed: int,
    index: int,
    n: int,
    d: int,
    grid: TimeGrid,
    density: ImportanceDensity,
) -> BridgeSample:
    """Sample number ``index`` of the stream under ``seed``.

    Regenerates the enclosing block, so this is a pure function of its
    arguments but costs one block of draws. Use :func:`draw_block` for bulk.
    """
    if index < 0:
        raise ConfigurationError("sample index must be non-negative")
    block, row = divmod(int(index), BLOCK_SIZE)
    return draw_block(seed, block, n, d, grid, density, count=row + 1).sample(row, seed)


def bridge_path_point(sample: BridgeSample, k: int, ell: int, s: float, beta: float) -> np.ndarray:
    """Point ``sqrt(beta) B_k(s) + (1-s) x_k(0) + s x_ell(0)`` at grid node ``s``."""
    if not (0 <= k < sample.n and 0 <= ell < sample.n):
        raise IndexError(f"particle indices ({k}, {ell}) out of range for n={sample.n}")
    m = TimeGrid(sample.steps).node_index(s)
    s_node = m / sample.steps
    return (
        math.sqrt(beta) * sample.bridge[k, m]
        + (1.0 - s_node) * sample.x0[k]
        + s_node * sample.x0[ell]
    )
