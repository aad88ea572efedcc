"""Named experiment presets with their published parameters and reference values.

Each preset expands to one or more rows and runs one estimator per row. It
returns a :class:`PresetResult` whose rows serialise to CSV. The sample
count defaults to the published value and can be overridden for desk-scale
runs.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .accumulate import PairAccumulator, tree_merge
from .estimators import (
    PairBlockTask, block_pair_values, convergence_sweep, estimate_both, estimate_meanfield,
    replica_seed, run_blocks,
)
from .exceptions import ConfigurationError
from .oracles import exact_ho_meanfield, exact_ho_partition, tensor_estimate
from .paths import BLOCK_SIZE, TimeGrid
from .perturbation import PerturbationConfig, perturbed_meanfield
from .potentials import harmonic, harmonic_coulomb
from .statistics import histogram_csv, summarize_replicas
from .system import SystemSpec


@dataclass(frozen=True)
class Row:
    n: int
    d: int
    beta: float
    delta_t: float
    coupling: float = 0.0
    reference: float | None = None

    def system(self) -> SystemSpec:
        pot = harmonic_coulomb(self.coupling) if self.coupling else harmonic()
        return SystemSpec(self.n, self.d, self.beta, pot)

    def grid(self, dt_override: float | None = None) -> TimeGrid:
        return TimeGrid.from_dt(self.beta, dt_override or self.delta_t)


@dataclass
class PresetResult:
    name: str
    columns: list[str]
    rows: list[dict[str, Any]]
    settings: dict[str, Any]
    details: dict[str, Any] = field(default_factory=dict)
    wall_time: float = 0.0

    def csv_text(self) -> str:
        return rows_to_csv(self.columns, self.rows)

    def manifest(self, version: str) -> dict[str, Any]:
        return {
            "preset": self.name,
            "code_version": version,
            "settings": self.settings,
            "wall_time": self.wall_time,
            "columns": self.columns,
            "rows": self.rows,
            "details": self.details,
        }


def format_value(value: Any) -> str:
    """Locale-free text for CSV cells; floats use the shortest round-trip form."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "" if value is None else str(value)


def rows_to_csv(columns: list[str], rows: list[dict[str, Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(row.get(c)) for c in columns])
    return buf.getvalue()


def _rel(estimate: float, reference: float) -> float:
    return abs(estimate - reference) / abs(reference)


# ------------------------------------------------------------------ runners


def _run_table_partition(preset, samples, seed, workers, dt):
    out = []
    for row in preset.rows:
        grid = row.grid(dt)
        z_rep, _ = estimate_both(row.system(), grid, samples, seed, workers)
        exact = exact_ho_partition(row.n, row.beta, row.d)
        out.append({
            "beta": row.beta, "M_x": samples, "Z_exact": exact, "delta_t": grid.physical_dt(row.beta),
            "Z_bar": z_rep.estimate, "rel_diff": _rel(z_rep.estimate, exact),
            "rel_ci": z_rep.relative_ci, "seed": seed,
        })
    return out, {}


def _run_table_meanfield_exact(preset, samples, seed, workers, dt):
    out = []
    for row in preset.rows:
        grid = row.grid(dt)
        h_rep = estimate_meanfield(row.system(), grid, samples, seed, workers)
        exact = exact_ho_meanfield(row.n, row.beta, row.d)
        out.append({
            "beta": row.beta, "M_x": samples, "h_exact": exact, "delta_t": grid.physical_dt(row.beta),
            "h_bar": h_rep.estimate, "rel_diff": _rel(h_rep.estimate, exact),
            "rel_ci": h_rep.relative_ci, "seed": seed,
        })
    return out, {}


def _run_table_meanfield_ref(preset, samples, seed, workers, dt):
    out = []
    for row in preset.rows:
        grid = row.grid(dt)
        h_rep = estimate_meanfield(row.system(), grid, samples, seed, workers)
        out.append({
            "beta": row.beta, "n": row.n, "d": row.d, "lambda": row.coupling, "M_x": samples,
            "h_ref": row.reference, "delta_t": grid.physical_dt(row.beta), "h_nu": h_rep.estimate,
            "rel_diff": _rel(h_rep.estimate, row.reference), "rel_ci": h_rep.relative_ci,
            "seed": seed,
        })
    return out, {}


def _run_table_tensor(preset, samples, seed, workers, dt):
    out = []
    for row in preset.rows:
        grid = row.grid(dt)
        system = row.system()
        h_nu = estimate_meanfield(system, grid, samples, seed, workers)
        tensor_samples = max(2, samples // 16)
        _, h_tensor = tensor_estimate(system, grid, tensor_samples, seed, workers=workers)
        out.append({
            "beta": row.beta, "h_ref": row.reference, "delta_t": grid.physical_dt(row.beta),
            "M_x": samples, "M_x_tensor": tensor_samples, "h_tensor": h_tensor.estimate,
            "h_nu": h_nu.estimate, "rel_diff_tensor": _rel(h_nu.estimate, h_tensor.estimate),
            "rel_ci_tensor": h_tensor.relative_ci, "seed": seed,
        })
    return out, {"tensor_samples_rule": "M_x / 16, mirroring the published 2^22 versus 2^26 split"}


def _run_table_perturb(preset, samples, seed, workers, dt):
    out = []
    cfg = PerturbationConfig()
    for row in preset.rows:
        grid = row.grid(dt)
        res = perturbed_meanfield(row.system(), grid, samples, seed, cfg, workers)
        out.append({
            "beta": row.beta, "n": row.n, "h_ref": row.reference, "delta_t": grid.physical_dt(row.beta),
            "M_x": samples, "h_nu": res.h_nu.estimate,
            "rel_diff_nu": _rel(res.h_nu.estimate, row.reference),
            "h_perturb": res.h_perturb.estimate,
            "rel_diff_perturb": _rel(res.h_perturb.estimate, row.reference),
            "indicator": res.indicator, "rel_ci_nu": res.h_nu.relative_ci,
            "rel_ci_perturb": res.h_perturb.relative_ci, "seed": seed,
        })
    return out, {"perturbation": cfg.to_dict()}


def doubling_sizes(smallest: int, largest: int) -> list[int]:
    if largest < smallest:
        raise ConfigurationError(f"sample count must be at least {smallest}")
    sizes = []
    size = smallest
    while size <= largest:
        sizes.append(size)
        size *= 2
    return sizes


def _run_convergence(preset, samples, seed, workers, dt):
    row = preset.rows[0]
    grid = row.grid(dt)
    z_exact = exact_ho_partition(row.n, row.beta, row.d)
    h_exact = exact_ho_meanfield(row.n, row.beta, row.d)
    out = []
    for z_rep, h_rep in convergence_sweep(row.system(), grid, doubling_sizes(1 << 10, samples), seed, workers):
        out.append({
            "M_x": z_rep.samples, "rel_error_Z": _rel(z_rep.estimate, z_exact),
            "rel_error_h": _rel(h_rep.estimate, h_exact),
            "rel_ci_Z": z_rep.relative_ci, "rel_ci_h": h_rep.relative_ci,
        })
    return out, {"Z_exact": z_exact, "h_exact": h_exact, "delta_t": grid.physical_dt(row.beta),
                 "seed": seed}


def prefix_accumulators(system: SystemSpec, grid: TimeGrid, seed: int, sizes: list[int],
                        workers: int = 1) -> list[PairAccumulator]:
    """Accumulators over each prefix length of one stream (sizes must be block multiples)."""
    if any(s % BLOCK_SIZE for s in sizes):
        raise ConfigurationError(f"prefix sizes must be multiples of {BLOCK_SIZE}")
    blocks = max(sizes) // BLOCK_SIZE
    parts = run_blocks(PairBlockTask(system, grid.steps, seed, blocks * BLOCK_SIZE), blocks, workers)
    return [tree_merge(parts, 0, s // BLOCK_SIZE) for s in sizes]


def _run_histogram(preset, samples, seed, workers, dt, replicas=256):
    row = preset.rows[0]
    system = row.system()
    grid = row.grid(dt)
    if samples < 64 * BLOCK_SIZE:
        raise ConfigurationError(f"fig-histogram needs at least {64 * BLOCK_SIZE} samples per replica")
    sizes = [samples // 64, samples // 16, samples // 4, samples]
    scale = math.exp(system.log_normalization())
    per_size: list[list[float]] = [[] for _ in sizes]
    for r in range(replicas):
        accs = prefix_accumulators(system, grid, replica_seed(seed, r), sizes, workers)
        for slot, acc in zip(per_size, accs):
            # scaled estimate n! (2 pi beta)^{dn/2} Z equals the mean denominator
            slot.append(acc.mean_b)
    out = []
    summaries = {}
    for size, values in zip(sizes, per_size):
        summary = summarize_replicas(values)
        summaries[str(size)] = {**summary.to_dict(), "values": list(map(float, values))}
        reader = csv.DictReader(io.StringIO(histogram_csv(values)))
        for item in reader:
            out.append({"M2": size, **{k: float(v) if k != "count" else int(v) for k, v in item.items()}})
    return out, {"replicas": replicas, "summaries": summaries, "scale": scale,
                 "delta_t": grid.physical_dt(row.beta), "seed": seed}


def _run_moments(preset, samples, seed, workers, dt):
    row = preset.rows[0]
    system = row.system()
    grid = row.grid(dt)
    blocks = -(-samples // BLOCK_SIZE)
    a_parts, b_parts = [], []
    for block in range(blocks):
        a, b, _ = block_pair_values(system, grid, seed, block, min(BLOCK_SIZE, samples - block * BLOCK_SIZE))
        a_parts.append(a)
        b_parts.append(b)
    a_all = np.concatenate(a_parts)
    b_all = np.concatenate(b_parts)
    out = []
    for size in doubling_sizes(1 << 10, samples):
        a = a_all[:size]
        b = b_all[:size]
        h = float(a.mean() / b.mean())
        influence = (a - h * b) / b.mean()
        centred = influence - influence.mean()
        b_centred = b - b.mean()
        out.append({
            "M_x": size, "h_nu": h, "b_mean": float(b.mean()),
            **{f"influence_m{k}": float(np.mean(centred**k)) for k in (2, 3, 4)},
            **{f"b_m{k}": float(np.mean(b_centred**k)) for k in (2, 3, 4)},
        })
    return out, {"delta_t": grid.physical_dt(row.beta), "seed": seed,
                 "influence": "(A - h B) / mean(B), the linearised per-sample contribution to h"}


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    rows: tuple[Row, ...]
    published_samples: int
    columns: tuple[str, ...]
    runner: Callable

    def run(self, samples: int | None = None, seed: int = 0, workers: int = 1,
            dt: float | None = None) -> PresetResult:
        samples = int(samples or self.published_samples)
        start = time.perf_counter()
        rows, details = self.runner(self, samples, int(seed), workers, dt)
        settings = {
            "samples": samples, "seed": int(seed), "delta_t_override": dt,
            "rows": [r.__dict__ | {"potential": r.system().potential.to_dict()} for r in self.rows],
        }
        return PresetResult(self.name, list(self.columns), rows, settings, details,
                            time.perf_counter() - start)


def _grid_rows(betas, dts, **common):
    return tuple(Row(beta=b, delta_t=t, **common) for b in betas for t in dts)


_DTS = (0.025, 0.0125)

PRESETS: dict[str, Preset] = {
    p.name: p
    for p in (
        Preset("table1", "V1 d=3 n=6 partition function, beta in {1, 1.5, 2}",
               _grid_rows((1.0, 1.5, 2.0), _DTS, n=6, d=3), 1 << 28,
               ("beta", "M_x", "Z_exact", "delta_t", "Z_bar", "rel_diff", "rel_ci"),
               _run_table_partition),
        Preset("table2", "V1 d=3 n=6 mean-field energy, beta in {1, 1.5, 2}",
               _grid_rows((1.0, 1.5, 2.0), _DTS, n=6, d=3), 1 << 28,
               ("beta", "M_x", "h_exact", "delta_t", "h_bar", "rel_diff", "rel_ci"),
               _run_table_meanfield_exact),
        Preset("table3", "V2 d=3 n=6 lambda=0.5, mean-field energy for beta in {0.5, 1, 1.5, 2}",
               tuple(Row(6, 3, b, t, 0.5, ref) for b, ref in
                     ((0.5, 41.66), (1.0, 26.692), (1.5, 22.63), (2.0, 22.1)) for t in _DTS),
               1 << 26,
               ("beta", "h_ref", "delta_t", "h_nu", "rel_diff", "rel_ci"),
               _run_table_meanfield_ref),
        Preset("table4", "d=2 beta in {1, 0.3}, V2 lambda=0.5 mean-field energy for n from 3 to 20",
               tuple(Row(n, 2, b, t, 0.5, ref) for b, n, ref in
                     ((1.0, 3, 8.719), (1.0, 6, 22.82), (1.0, 10, 49.0),
                      (0.3, 6, 46.45), (0.3, 10, 84.92), (0.3, 20, 203.0)) for t in _DTS),
               1 << 22,
               ("beta", "n", "h_ref", "delta_t", "h_nu", "rel_diff", "rel_ci"),
               _run_table_meanfield_ref),
        Preset("table5", "V2 d=3 n=6 lambda=0.5 determinant versus permutation-sum energy",
               tuple(Row(6, 3, b, t, 0.5, ref) for b, ref in
                     ((0.5, 41.66), (1.0, 26.692), (1.5, 22.63)) for t in _DTS),
               1 << 26,
               ("beta", "h_ref", "delta_t", "h_tensor", "h_nu", "rel_diff_tensor", "rel_ci_tensor"),
               _run_table_tensor),
        Preset("table6", "V2 d=3 lambda=0.5 perturbation indicator, n in {3, 6}, beta in {1, 1.5}",
               tuple(Row(n, 3, b, t, 0.5, ref) for b, n, ref in
                     ((1.0, 3, 11.355), (1.0, 6, 26.692), (1.5, 3, 9.157), (1.5, 6, 22.63))
                     for t in _DTS),
               1 << 22,
               ("beta", "n", "h_ref", "delta_t", "h_nu", "rel_diff_nu", "h_perturb",
                "rel_diff_perturb", "indicator"),
               _run_table_perturb),
        Preset("fig1", "V1 d=3 n=6 beta=1 error versus sample size, dt=0.0125",
               (Row(6, 3, 1.0, 0.0125),), 1 << 28,
               ("M_x", "rel_error_Z", "rel_error_h"),
               _run_convergence),
        Preset("fig-histogram", "V1 d=3 n=6 beta=2 replica histograms of the scaled partition estimate",
               (Row(6, 3, 2.0, 0.025),), 1 << 24,
               ("M2", "bin_left", "bin_right", "count", "fitted_mean", "fitted_std", "fitted_density"),
               _run_histogram),
        Preset("fig-moments", "V2 d=3 n=6 lambda=0.5 beta=0.5 central moments versus sample size",
               (Row(6, 3, 0.5, 0.025, 0.5),), 1 << 22,
               ("M_x", "h_nu", "influence_m2", "influence_m3", "influence_m4",
                "b_mean", "b_m2", "b_m3", "b_m4"),
               _run_moments),
    )
}


def list_presets() -> list[tuple[str, str]]:
    return [(p.name, p.description) for p in PRESETS.values()]


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown preset {name!r}; valid presets: {', '.join(PRESETS)}"
        ) from None


def run_preset(name: str, samples: int | None = None, seed: int = 0, workers: int = 1,
               dt: float | None = None) -> PresetResult:
    return get_preset(name).run(samples, seed, workers, dt)
