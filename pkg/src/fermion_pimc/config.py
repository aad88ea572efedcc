"""Run configuration files.

A configuration is a YAML mapping (JSON is accepted, being a YAML subset)::

    n: 6
    d: 3
    beta: 1.0
    potential: {kind: HarmonicCoulomb, lambda: 0.5}
    delta_t: 0.025        # or: steps: 40
    samples: 262144
    seed: 1
    statistics: Fermion
    spins: [0.5, 0.5, -0.5]          # optional
    perturbation: {c_star: 2, n_xi: 100, delta_beta: 0.01}   # optional
    replicas: {replicas: 256, samples_per_replica: 4096}      # optional
    workers: 1
    output: results.csv

Validation errors name the offending field and, when the text came from a
file, its line.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .exceptions import ConfigurationError
from .oracles import Statistics
from .paths import TimeGrid
from .perturbation import PerturbationConfig
from .potentials import PotentialSpec
from .statistics import ReplicaPlan
from .system import SystemSpec

_FIELDS = (
    "n", "d", "beta", "potential", "delta_t", "steps", "samples", "seed", "statistics",
    "spins", "perturbation", "replicas", "workers", "output",
)
_U64 = 1 << 64


@dataclass(frozen=True)
class RunConfig:
    potential: PotentialSpec
    n: int
    d: int
    beta: float
    steps: int
    delta_t: float
    samples: int = 1 << 18
    seed: int = 0
    statistics: Statistics = Statistics.FERMION
    spins: tuple[float, ...] | None = None
    perturbation: PerturbationConfig | None = None
    replicas: ReplicaPlan | None = None
    workers: int = 1
    output: str | None = None

    @property
    def system(self) -> SystemSpec:
        return SystemSpec(self.n, self.d, self.beta, self.potential, self.spins)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.steps)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "n": self.n,
            "d": self.d,
            "beta": self.beta,
            "potential": self.potential.to_dict(),
            "delta_t": self.delta_t,
            "steps": self.steps,
            "samples": self.samples,
            "seed": self.seed,
            "statistics": self.statistics.value,
            "workers": self.workers,
        }
        if self.spins is not None:
            out["spins"] = list(self.spins)
        if self.perturbation is not None:
            out["perturbation"] = self.perturbation.to_dict()
        if self.replicas is not None:
            out["replicas"] = {"replicas": self.replicas.replicas,
                               "samples_per_replica": self.replicas.samples_per_replica}
        if self.output is not None:
            out["output"] = self.output
        return out

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def replace(self, **changes: Any) -> "RunConfig":
        """Copy with fields overridden; ``delta_t`` or ``steps`` re-derive the other."""
        data = self.to_dict()
        if "delta_t" in changes and "steps" not in changes:
            data.pop("steps")
        if "steps" in changes and "delta_t" not in changes:
            data.pop("delta_t")
        if "beta" in changes and not ({"delta_t", "steps"} & set(changes)):
            data.pop("steps")
        for key, value in changes.items():
            if value is None:
                continue
            if key == "potential" and isinstance(value, PotentialSpec):
                value = value.to_dict()
            data[key] = value
        return RunConfig.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict[str, Any], source: str | None = None,
                  lines: dict[tuple, int] | None = None) -> "RunConfig":
        return _Builder(data, source, lines or {}).build()


def _field_error(source, lines, path: tuple, message: str) -> ConfigurationError:
    where = source or "<config>"
    line = None
    for cut in range(len(path), 0, -1):
        if path[:cut] in lines:
            line = lines[path[:cut]]
            break
    location = f"{where}:{line}" if line is not None else where
    name = ".".join(str(p) for p in path) or "<root>"
    return ConfigurationError(f"{location}: field '{name}': {message}")


class _Builder:
    def __init__(self, data, source, lines):
        self.data = data
        self.source = source
        self.lines = lines

    def fail(self, path, message):
        return _field_error(self.source, self.lines, path, message)

    def integer(self, key, minimum=None, maximum=None, default=None):
        value = self.data.get(key, default)
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.fail((key,), f"expected an integer, got {value!r}")
        if minimum is not None and value < minimum:
            raise self.fail((key,), f"must be at least {minimum}, got {value}")
        if maximum is not None and value >= maximum:
            raise self.fail((key,), f"must be below {maximum}, got {value}")
        return value

    def real(self, key, default=None):
        value = self.data.get(key, default)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.fail((key,), f"expected a number, got {value!r}")
        value = float(value)
        if not (math.isfinite(value) and value > 0):
            raise self.fail((key,), f"must be positive and finite, got {value}")
        return value

    def build(self) -> RunConfig:
        if not isinstance(self.data, dict):
            raise self.fail((), "configuration must be a mapping")
        unknown = sorted(set(self.data) - set(_FIELDS))
        if unknown:
            raise self.fail((unknown[0],), f"unknown field; valid fields are {', '.join(_FIELDS)}")
        for key in ("n", "d", "beta"):
            if key not in self.data:
                raise self.fail((key,), "is required")
        n = self.integer("n", minimum=1)
        d = self.integer("d", minimum=1)
        if d > 3:
            raise self.fail(("d",), "must be 1, 2 or 3")
        beta = self.real("beta")
        steps, delta_t = self.grid(beta)
        potential = self.nested("potential", PotentialSpec.from_dict, {"kind": "Harmonic"})
        try:
            potential.check_dimension(d)
        except ConfigurationError as exc:
            raise self.fail(("potential",), str(exc)) from None
        try:
            statistics = Statistics(self.data.get("statistics", "Fermion"))
        except ValueError:
            valid = ", ".join(s.value for s in Statistics)
            raise self.fail(("statistics",), f"must be one of {valid}") from None
        spins = self.data.get("spins")
        if spins is not None:
            if not isinstance(spins, list):
                raise self.fail(("spins",), "expected a list of +0.5/-0.5")
            spins = tuple(spins)
        perturbation = None
        if "perturbation" in self.data:
            with warnings.catch_warnings():
                warnings.simplefilter("default")
                perturbation = self.nested("perturbation", PerturbationConfig.from_dict)
        replicas = None
        if "replicas" in self.data:
            replicas = self.nested("replicas", lambda m: ReplicaPlan(**m))
        output = self.data.get("output")
        if output is not None and not isinstance(output, str):
            raise self.fail(("output",), "expected a path string")
        config = RunConfig(
            potential=potential,
            n=n,
            d=d,
            beta=beta,
            steps=steps,
            delta_t=delta_t,
            samples=self.integer("samples", minimum=2, default=1 << 18),
            seed=self.integer("seed", minimum=0, maximum=_U64, default=0),
            statistics=statistics,
            spins=spins,
            perturbation=perturbation,
            replicas=replicas,
            workers=self.integer("workers", minimum=1, default=1),
            output=output,
        )
        try:
            system = config.system
        except ConfigurationError as exc:
            field = "spins" if spins is not None else "potential"
            raise self.fail((field,), str(exc)) from None
        return RunConfig(**{**config.__dict__, "spins": system.spins})

    def grid(self, beta):
        has_dt = "delta_t" in self.data
        has_steps = "steps" in self.data
        if not (has_dt or has_steps):
            raise self.fail(("delta_t",), "give delta_t or steps")
        if has_steps:
            steps = self.integer("steps", minimum=1)
            if not has_dt:
                return steps, beta / steps
            delta_t = self.real("delta_t")
            if abs(delta_t * steps - beta) > 1e-9 * beta:
                raise self.fail(("delta_t",), f"delta_t * steps = {delta_t * steps} differs from beta = {beta}")
            return steps, delta_t
        delta_t = self.real("delta_t")
        try:
            return TimeGrid.from_dt(beta, delta_t).steps, delta_t
        except ConfigurationError as exc:
            raise self.fail(("delta_t",), str(exc)) from None

    def nested(self, key, factory, default=None):
        value = self.data.get(key, default)
        if not isinstance(value, dict):
            raise self.fail((key,), "expected a mapping")
        try:
            return factory(value)
        except (ConfigurationError, TypeError, ValueError, KeyError) as exc:
            raise self.fail((key,), str(exc)) from None


def _line_map(node, path=(), out=None) -> dict[tuple, int]:
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            key = path + (key_node.value,)
            out[key] = key_node.start_mark.line + 1
            _line_map(value_node, key, out)
    return out


def loads(text: str, source: str | None = None) -> RunConfig:
    """Parse configuration text."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source or '<config>'}:{mark.line + 1}" if mark else (source or "<config>")
        raise ConfigurationError(f"{where}: malformed configuration: {exc}") from None
    return RunConfig.from_dict(data if data is not None else {}, source,
                               _line_map(node) if node is not None else {})


def load(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read configuration {path}: {exc}") from None
    return loads(text, str(path))


def dump(config: RunConfig, path: str | Path) -> None:
    Path(path).write_text(config.dumps(), encoding="utf-8")
