"""Mergeable moment accumulators and report records."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np


@dataclass(frozen=True)
class PairAccumulator:
    """Running moments of paired samples ``(A_i, B_i)``.

    Stores means and central moment sums up to order four for each
    component plus the co-moment. :meth:`merge` uses the pairwise update
    formulas for central moments, which are exact in real arithmetic and
    well conditioned in floating point.
    """

    count: int = 0
    mean_a: float = 0.0
    mean_b: float = 0.0
    m2_a: float = 0.0
    m2_b: float = 0.0
    m3_a: float = 0.0
    m3_b: float = 0.0
    m4_a: float = 0.0
    m4_b: float = 0.0
    co_ab: float = 0.0
    degenerate: int = 0

    @classmethod
    def from_arrays(cls, a: np.ndarray, b: np.ndarray, degenerate: int = 0) -> "PairAccumulator":
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("A and B must be one-dimensional arrays of equal length")
        count = a.size
        if count == 0:
            return cls(degenerate=int(degenerate))
        mean_a = float(np.sum(a) / count)
        mean_b = float(np.sum(b) / count)
        da = a - mean_a
        db = b - mean_b
        da2 = da * da
        db2 = db * db
        return cls(
            count=count,
            mean_a=mean_a,
            mean_b=mean_b,
            m2_a=float(np.sum(da2)),
            m2_b=float(np.sum(db2)),
            m3_a=float(np.sum(da2 * da)),
            m3_b=float(np.sum(db2 * db)),
            m4_a=float(np.sum(da2 * da2)),
            m4_b=float(np.sum(db2 * db2)),
            co_ab=float(np.sum(da * db)),
            degenerate=int(degenerate),
        )

    def merge(self, other: "PairAccumulator") -> "PairAccumulator":
        if other.count == 0:
            return PairAccumulator(**{**asdict(self), "degenerate": self.degenerate + other.degenerate})
        if self.count == 0:
            return PairAccumulator(**{**asdict(other), "degenerate": self.degenerate + other.degenerate})
        n1, n2 = float(self.count), float(other.count)
        n = n1 + n2
        da = other.mean_a - self.mean_a
        db = other.mean_b - self.mean_b

        def combine(mean1, m2_1, m3_1, m4_1, mean2, m2_2, m3_2, m4_2, delta):
            mean = mean1 + delta * n2 / n
            m2 = m2_1 + m2_2 + delta * delta * n1 * n2 / n
            m3 = (
                m3_1
                + m3_2
                + delta**3 * n1 * n2 * (n1 - n2) / (n * n)
                + 3.0 * delta * (n1 * m2_2 - n2 * m2_1) / n
            )
            m4 = (
                m4_1
                + m4_2
                + delta**4 * n1 * n2 * (n1 * n1 - n1 * n2 + n2 * n2) / (n**3)
                + 6.0 * delta * delta * (n1 * n1 * m2_2 + n2 * n2 * m2_1) / (n * n)
                + 4.0 * delta * (n1 * m3_2 - n2 * m3_1) / n
            )
            return mean, m2, m3, m4

        mean_a, m2_a, m3_a, m4_a = combine(
            self.mean_a, self.m2_a, self.m3_a, self.m4_a,
            other.mean_a, other.m2_a, other.m3_a, other.m4_a, da,
        )
        mean_b, m2_b, m3_b, m4_b = combine(
            self.mean_b, self.m2_b, self.m3_b, self.m4_b,
            other.mean_b, other.m2_b, other.m3_b, other.m4_b, db,
        )
        co_ab = self.co_ab + other.co_ab + da * db * n1 * n2 / n
        return PairAccumulator(
            count=self.count + other.count,
            mean_a=mean_a,
            mean_b=mean_b,
            m2_a=m2_a,
            m2_b=m2_b,
            m3_a=m3_a,
            m3_b=m3_b,
            m4_a=m4_a,
            m4_b=m4_b,
            co_ab=co_ab,
            degenerate=self.degenerate + other.degenerate,
        )

    # Raw-sum views, for callers that think in terms of sums.
    @property
    def sum_a(self) -> float:
        return self.mean_a * self.count

    @property
    def sum_b(self) -> float:
        return self.mean_b * self.count

    @property
    def var_a(self) -> float:
        return self.m2_a / (self.count - 1) if self.count > 1 else math.nan

    @property
    def var_b(self) -> float:
        return self.m2_b / (self.count - 1) if self.count > 1 else math.nan

    @property
    def cov_ab(self) -> float:
        return self.co_ab / (self.count - 1) if self.count > 1 else math.nan

    def central_moments(self, which: str = "b") -> dict[str, float]:
        """Population central moments (orders 2..4) of one component."""
        if self.count == 0:
            return {"mean": math.nan, "m2": math.nan, "m3": math.nan, "m4": math.nan}
        n = self.count
        if which == "a":
            return {"mean": self.mean_a, "m2": self.m2_a / n, "m3": self.m3_a / n, "m4": self.m4_a / n}
        return {"mean": self.mean_b, "m2": self.m2_b / n, "m3": self.m3_b / n, "m4": self.m4_b / n}


def tree_merge(parts: list[PairAccumulator], lo: int = 0, hi: int | None = None) -> PairAccumulator:
    """Merge ``parts[lo:hi]`` along a fixed binary tree of index ranges.

    The split point is the largest power of two below the range length,
    so the tree over the first ``2^k`` parts is a subtree of every longer
    run. Partial sums of a prefix are therefore reproduced bit for bit.
    """
    if hi is None:
        hi = len(parts)
    if hi <= lo:
        return PairAccumulator()
    if hi - lo == 1:
        return parts[lo]
    span = hi - lo
    half = 1 << ((span - 1).bit_length() - 1)
    return tree_merge(parts, lo, lo + half).merge(tree_merge(parts, lo + half, hi))


@dataclass
class EstimateReport:
    """Point estimate with its statistical error and provenance."""

    quantity: str
    estimate: float
    standard_error: float
    relative_ci: float
    samples: int
    dt: float | None
    seed: int | None
    beta: float | None = None
    degenerate_count: int = 0
    wall_time: float = 0.0
    flags: list[str] = field(default_factory=list)
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def ci_low(self) -> float:
        return self.estimate - abs(self.estimate) * self.relative_ci

    @property
    def ci_high(self) -> float:
        return self.estimate + abs(self.estimate) * self.relative_ci

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["ci_low"] = self.ci_low
        out["ci_high"] = self.ci_high
        return out
