"""Physical system description shared by estimators and oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any, Sequence

import numpy as np

from .exceptions import ConfigurationError, UnsupportedConfigurationError
from .paths import ImportanceDensity, TimeGrid
from .potentials import PotentialSpec


@dataclass(frozen=True)
class SystemSpec:
    """``n`` particles in ``d`` dimensions at inverse temperature ``beta``.

    ``spins`` is an optional per-particle list of +0.5 / -0.5. When given,
    exchange is restricted to particles of equal spin.
    """

    n: int
    d: int
    beta: float
    potential: PotentialSpec
    spins: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ConfigurationError(f"n must be a positive integer, got {self.n!r}")
        if self.d not in (1, 2, 3):
            raise ConfigurationError(f"d must be 1, 2 or 3, got {self.d!r}")
        if not (isinstance(self.beta, (int, float)) and math.isfinite(self.beta) and self.beta > 0):
            raise ConfigurationError(f"beta must be a positive finite number, got {self.beta!r}")
        object.__setattr__(self, "beta", float(self.beta))
        self.potential.check_dimension(self.d)
        if self.spins is not None:
            spins = tuple(float(s) for s in self.spins)
            if len(spins) != self.n or any(s not in (0.5, -0.5) for s in spins):
                raise ConfigurationError("spins must list +0.5 or -0.5 for each particle")
            if not self.potential.is_separable:
                raise UnsupportedConfigurationError(
                    "spin-split determinants are only defined for particle-wise separable potentials"
                )
            object.__setattr__(self, "spins", spins)

    def with_beta(self, beta: float) -> "SystemSpec":
        return replace(self, beta=beta)

    @property
    def dimension(self) -> int:
        return self.n * self.d

    def density(self, beta: float | None = None) -> ImportanceDensity:
        return ImportanceDensity(self.beta if beta is None else beta, self.dimension)

    def grid(self, dt: float) -> TimeGrid:
        return TimeGrid.from_dt(self.beta, dt)

    def groups(self) -> np.ndarray:
        """Exchange group label per particle (all zero without spins)."""
        return spin_groups(self.spins, self.n)

    def exchange_factorial(self) -> int:
        """``n!`` or ``n_up! n_down!`` for spin-split systems."""
        labels = self.groups()
        out = 1
        for g in np.unique(labels):
            out *= math.factorial(int(np.count_nonzero(labels == g)))
        return out

    def log_normalization(self, beta: float | None = None) -> float:
        """``log(exchange_factorial * (2 pi beta)^{dn/2})``."""
        b = self.beta if beta is None else beta
        return math.log(self.exchange_factorial()) + 0.5 * self.dimension * math.log(2 * math.pi * b)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "n": self.n,
            "d": self.d,
            "beta": self.beta,
            "potential": self.potential.to_dict(),
        }
        if self.spins is not None:
            out["spins"] = list(self.spins)
        return out


def spin_groups(spins: Sequence[float] | None, n: int) -> np.ndarray:
    if spins is None:
        return np.zeros(n, dtype=np.int64)
    return np.array([0 if s > 0 else 1 for s in spins], dtype=np.int64)
