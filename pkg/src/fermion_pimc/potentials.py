"""Model potentials in Hartree atomic units.

A :class:`PotentialSpec` combines a one-body external part, an optional
set of fixed nuclei and a pairwise Coulomb coupling ``lambda``. The
functions here are plain NumPy reference evaluations. The compiled
kernels carry their own copies of the same formulas, and the test suite
checks the two against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Sequence

import numpy as np

from .exceptions import ConfigurationError, SingularityError

#: Distances below this are treated as a Coulomb singularity.
SINGULARITY_DISTANCE = 1e-12


class PotentialKind(str, Enum):
    HARMONIC = "Harmonic"
    HARMONIC_COULOMB = "HarmonicCoulomb"
    MOLECULAR_COULOMB = "MolecularCoulomb"
    CUSTOM_SEPARABLE = "CustomSeparable"


@dataclass(frozen=True)
class Nucleus:
    position: tuple[float, ...]
    charge: float


@dataclass(frozen=True)
class PotentialSpec:
    """Description of ``V = sum_k V_ext(x_k) + sum_{k<j} lambda / |x_k - x_j|``.

    ``V_ext(y) = sum_i omega_i^2 y_i^2 / 2 + quartic |y|^4 - sum_j Z_j / |y - X_j|``.

    ``trap`` switches the harmonic part on or off. It defaults to on for
    the harmonic kinds and off for ``MolecularCoulomb``. ``frequencies``
    and ``quartic`` are only honoured for ``CustomSeparable``; the other
    kinds use unit isotropic frequencies.
    """

    kind: PotentialKind = PotentialKind.HARMONIC
    coupling: float = 0.0
    nuclei: tuple[Nucleus, ...] = ()
    trap: bool | None = None
    frequencies: tuple[float, ...] | None = None
    quartic: float = 0.0
    _resolved_trap: bool = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        kind = PotentialKind(self.kind)
        object.__setattr__(self, "kind", kind)
        nuclei = tuple(
            Nucleus(tuple(map(float, nuc.position)), float(nuc.charge))
            if isinstance(nuc, Nucleus)
            else Nucleus(tuple(map(float, nuc[0])), float(nuc[1]))
            for nuc in self.nuclei
        )
        object.__setattr__(self, "nuclei", nuclei)
        object.__setattr__(self, "coupling", float(self.coupling))
        object.__setattr__(self, "quartic", float(self.quartic))
        if self.frequencies is not None:
            object.__setattr__(self, "frequencies", tuple(map(float, self.frequencies)))
        trap = self.trap
        if trap is None:
            trap = kind is not PotentialKind.MOLECULAR_COULOMB
        object.__setattr__(self, "_resolved_trap", bool(trap))
        self._validate()

    def _validate(self) -> None:
        if not math.isfinite(self.coupling) or self.coupling < 0:
            raise ConfigurationError(f"coupling lambda must be finite and >= 0, got {self.coupling}")
        if self.kind in (PotentialKind.HARMONIC, PotentialKind.CUSTOM_SEPARABLE) and self.coupling:
            raise ConfigurationError(f"{self.kind.value} is separable; coupling must be 0")
        if self.nuclei and self.kind is not PotentialKind.MOLECULAR_COULOMB:
            raise ConfigurationError("nuclei are only allowed for MolecularCoulomb")
        if self.kind is not PotentialKind.CUSTOM_SEPARABLE and (
            self.frequencies is not None or self.quartic
        ):
            raise ConfigurationError("frequencies/quartic are only allowed for CustomSeparable")
        if self.quartic < 0 or not math.isfinite(self.quartic):
            raise ConfigurationError("quartic coefficient must be finite and >= 0")
        dims = {len(nuc.position) for nuc in self.nuclei}
        if len(dims) > 1:
            raise ConfigurationError("all nuclei must share one spatial dimension")
        for nuc in self.nuclei:
            if not nuc.charge > 0:
                raise ConfigurationError(f"nuclear charge must be positive, got {nuc.charge}")
        for i, a in enumerate(self.nuclei):
            for b in self.nuclei[i + 1 :]:
                if math.dist(a.position, b.position) < SINGULARITY_DISTANCE:
                    raise ConfigurationError("nuclei positions must be pairwise distinct")

    @property
    def has_trap(self) -> bool:
        return self._resolved_trap

    @property
    def is_separable(self) -> bool:
        """True when the potential is a sum of one-body terms."""
        return self.coupling == 0.0

    def check_dimension(self, d: int) -> None:
        for nuc in self.nuclei:
            if len(nuc.position) != d:
                raise ConfigurationError(f"nucleus position has dimension {len(nuc.position)}, system has d={d}")
        if self.frequencies is not None and len(self.frequencies) != d:
            raise ConfigurationError(f"frequencies has length {len(self.frequencies)}, system has d={d}")

    def omega_squared(self, d: int) -> np.ndarray:
        """Per-axis curvature of the harmonic part (zeros without a trap)."""
        if not self.has_trap:
            return np.zeros(d)
        if self.frequencies is None:
            return np.ones(d)
        return np.asarray(self.frequencies, dtype=np.float64) ** 2

    def nuclei_arrays(self, d: int) -> tuple[np.ndarray, np.ndarray]:
        self.check_dimension(d)
        positions = np.array([nuc.position for nuc in self.nuclei], dtype=np.float64).reshape(-1, d)
        charges = np.array([nuc.charge for nuc in self.nuclei], dtype=np.float64)
        return positions, charges

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind.value, "coupling": self.coupling}
        if self.nuclei:
            out["nuclei"] = [
                {"position": list(nuc.position), "charge": nuc.charge} for nuc in self.nuclei
            ]
        if self.trap is not None:
            out["trap"] = self.trap
        if self.frequencies is not None:
            out["frequencies"] = list(self.frequencies)
        if self.quartic:
            out["quartic"] = self.quartic
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PotentialSpec":
        allowed = {"kind", "coupling", "lambda", "nuclei", "trap", "frequencies", "quartic"}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigurationError(f"unknown potential field(s): {sorted(unknown)}")
        coupling = data.get("coupling", data.get("lambda", 0.0))
        nuclei = tuple(
            Nucleus(tuple(map(float, item["position"])), float(item["charge"]))
            for item in data.get("nuclei", ())
        )
        try:
            kind = PotentialKind(data.get("kind", "Harmonic"))
        except ValueError as exc:
            valid = ", ".join(k.value for k in PotentialKind)
            raise ConfigurationError(f"potential.kind must be one of {valid}") from exc
        return cls(
            kind=kind,
            coupling=coupling,
            nuclei=nuclei,
            trap=data.get("trap"),
            frequencies=data.get("frequencies"),
            quartic=data.get("quartic", 0.0),
        )


def harmonic() -> PotentialSpec:
    """Confining trap ``|x|^2 / 2`` with no interactions."""
    return PotentialSpec(PotentialKind.HARMONIC)


def harmonic_coulomb(coupling: float) -> PotentialSpec:
    """Trap plus pairwise repulsion ``coupling / |x_k - x_j|``."""
    return PotentialSpec(PotentialKind.HARMONIC_COULOMB, coupling=coupling)


def _as_point(y) -> np.ndarray:
    return np.asarray(y, dtype=np.float64).reshape(-1)


def _distance(a: np.ndarray, b: np.ndarray) -> float:
    r = float(np.linalg.norm(a - b))
    if r < SINGULARITY_DISTANCE:
        raise SingularityError(f"distance {r:.3e} below singularity threshold")
    return r


def external_term(spec: PotentialSpec, y) -> float:
    """One-body potential energy at ``y``: trap part minus nuclear attraction."""
    y = _as_point(y)
    omega_sq = spec.omega_squared(y.size)
    r2 = float(y @ y)
    value = 0.5 * float(omega_sq @ (y * y)) + spec.quartic * r2 * r2
    for nuc in spec.nuclei:
        value -= nuc.charge / _distance(y, np.asarray(nuc.position))
    return value


def interaction_term(spec: PotentialSpec, y_k, others: Iterable) -> float:
    """``sum_j lambda / (2 |y_k - y_j|)``; each ordered pair carries half the weight."""
    if spec.coupling == 0.0:
        return 0.0
    y_k = _as_point(y_k)
    return sum(0.5 * spec.coupling / _distance(y_k, _as_point(z)) for z in others)


def gradient_terms(spec: PotentialSpec, y_k, others: Sequence) -> np.ndarray:
    """Gradient of ``external_term + interaction_term`` with respect to ``y_k``."""
    y_k = _as_point(y_k)
    grad = spec.omega_squared(y_k.size) * y_k + 4.0 * spec.quartic * float(y_k @ y_k) * y_k
    for nuc in spec.nuclei:
        diff = y_k - np.asarray(nuc.position)
        grad += nuc.charge * diff / _distance(y_k, np.asarray(nuc.position)) ** 3
    if spec.coupling:
        for z in others:
            diff = y_k - _as_point(z)
            grad -= 0.5 * spec.coupling * diff / _distance(y_k, _as_point(z)) ** 3
    return grad


def total_potential(spec: PotentialSpec, points) -> float:
    """Full many-body potential of ``points`` with shape ``(n, d)``."""
    pts = np.asarray(points, dtype=np.float64)
    total = 0.0
    for k in range(pts.shape[0]):
        others = [pts[j] for j in range(pts.shape[0]) if j != k]
        total += external_term(spec, pts[k]) + interaction_term(spec, pts[k], others)
    return total


@dataclass(frozen=True)
class NucleiFactor:
    """``exp(-(beta/2) sum_{i != j} Z_i Z_j / |X_i - X_j|)`` and its exponent."""

    log_value: float
    nuclear_energy: float

    @property
    def value(self) -> float:
        return math.exp(self.log_value)


def nuclei_factor(spec: PotentialSpec, beta: float) -> NucleiFactor:
    """Constant factor from nucleus-nucleus repulsion.

    ``nuclear_energy`` is ``(1/2) sum_{i != j} Z_i Z_j / |X_i - X_j|``, the
    amount added to every mean-field estimate.
    """
    energy = 0.0
    for i, a in enumerate(spec.nuclei):
        for j, b in enumerate(spec.nuclei):
            if i != j:
                energy += 0.5 * a.charge * b.charge / math.dist(a.position, b.position)
    return NucleiFactor(log_value=-beta * energy, nuclear_energy=energy)
