"""Fermion path-integral Monte Carlo from the command line.

Every subcommand writes a table (CSV, or JSON with ``--format json``) to
``--out`` or standard output. With ``--out`` a JSON manifest recording the
configuration, code version and wall time is written next to the table.
Exit status: 0 on success, 2 for configuration errors, 3 when an estimate
fails (sign-dominated or degenerate), 4 for numerical precision failures.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from importlib import metadata
from pathlib import Path
from typing import Any, Sequence

from . import config as config_io
from .accumulate import EstimateReport
from .estimators import estimate_meanfield, estimate_partition, replica_seed
from .exceptions import ConfigurationError, EstimationError, FermionPIMCError, PrecisionError
from .oracles import Statistics, exact_ho_meanfield, exact_ho_partition, tensor_estimate
from .perturbation import PerturbationConfig, perturbed_meanfield
from .presets import format_value, get_preset, list_presets, rows_to_csv
from .statistics import ReplicaPlan, replica_diagnostics

REPORT_COLUMNS = ["quantity", "estimate", "standard_error", "relative_ci", "ci_low", "ci_high",
                  "samples", "dt", "seed", "beta", "degenerate_count", "flags"]


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        from . import __version__
        return __version__


def report_row(report: EstimateReport) -> dict[str, Any]:
    row = report.to_dict()
    row["flags"] = ";".join(report.flags)
    return row


# ------------------------------------------------------------------ config


def _base_config(args) -> config_io.RunConfig:
    if args.config:
        cfg = config_io.load(args.config)
    else:
        data: dict[str, Any] = {
            "n": args.n, "d": args.d, "beta": args.beta,
            "potential": {"kind": "HarmonicCoulomb" if args.coupling else "Harmonic",
                          "coupling": args.coupling},
            "delta_t": args.dt or 0.025,
        }
        cfg = config_io.RunConfig.from_dict(data, "<command line>")
    return cfg.replace(seed=args.seed, samples=args.samples, delta_t=args.dt,
                       workers=args.workers)


def _output_path(args, cfg: config_io.RunConfig | None) -> str | None:
    if args.out:
        return args.out
    return cfg.output if cfg is not None else None


# ------------------------------------------------------------------ commands


def cmd_exact_ho(args):
    stats = Statistics(args.statistics)
    z = exact_ho_partition(args.n, args.beta, args.d, stats)
    h = exact_ho_meanfield(args.n, args.beta, args.d, statistics=stats)
    rows = [{"n": args.n, "d": args.d, "beta": args.beta, "statistics": stats.value,
             "Z_exact": z, "h_exact": h}]
    return ["n", "d", "beta", "statistics", "Z_exact", "h_exact"], rows, {}, None


def cmd_estimate_z(args):
    cfg = _base_config(args)
    rep = estimate_partition(cfg.system, cfg.grid, cfg.samples, cfg.seed, cfg.workers)
    return REPORT_COLUMNS, [report_row(rep)], {"config": cfg.to_dict()}, cfg


def cmd_estimate_h(args):
    cfg = _base_config(args)
    rep = estimate_meanfield(cfg.system, cfg.grid, cfg.samples, cfg.seed, cfg.workers)
    return REPORT_COLUMNS, [report_row(rep)], {"config": cfg.to_dict()}, cfg


def cmd_tensor(args):
    cfg = _base_config(args)
    reps = tensor_estimate(cfg.system, cfg.grid, cfg.samples, cfg.seed, cfg.statistics, cfg.workers)
    return REPORT_COLUMNS, [report_row(r) for r in reps], {"config": cfg.to_dict()}, cfg


def cmd_perturb(args):
    cfg = _base_config(args)
    pert = cfg.perturbation or PerturbationConfig()
    res = perturbed_meanfield(cfg.system, cfg.grid, cfg.samples, cfg.seed, pert, cfg.workers)
    row = {"h_nu": res.h_nu.estimate, "h_perturb": res.h_perturb.estimate,
           "indicator": res.indicator, "relative_indicator": res.relative_indicator,
           "rel_ci_nu": res.h_nu.relative_ci, "rel_ci_perturb": res.h_perturb.relative_ci,
           "samples": cfg.samples, "seed": cfg.seed, "dt": cfg.delta_t, **pert.to_dict()}
    columns = ["h_nu", "h_perturb", "indicator", "relative_indicator", "rel_ci_nu",
               "rel_ci_perturb", "samples", "seed", "dt", "c_star", "n_xi", "delta_beta", "per_entry"]
    return columns, [row], {"config": cfg.to_dict(), "result": res.to_dict()}, cfg


def cmd_replicas(args):
    cfg = _base_config(args)
    plan = cfg.replicas or ReplicaPlan(30, max(2, cfg.samples // 30))
    system = cfg.system

    def runner(replica: int, samples: int) -> float:
        return estimate_partition(system, cfg.grid, samples, replica_seed(cfg.seed, replica),
                                  cfg.workers).estimate

    scale = math.exp(system.log_normalization())
    summary = replica_diagnostics(plan, runner, scale)
    rows = [{"replica": r, "Z_bar": float(v), "Z_scaled": float(v * scale)}
            for r, v in enumerate(summary.values)]
    details = {"config": cfg.to_dict(), "summary": {**summary.to_dict(), "std_scaled": summary.std * scale}}
    return ["replica", "Z_bar", "Z_scaled"], rows, details, cfg


def cmd_preset(args):
    if not args.name or args.list:
        rows = [{"name": name, "description": desc} for name, desc in list_presets()]
        return ["name", "description"], rows, {"listing": True}, None
    preset = get_preset(args.name)
    result = preset.run(args.samples, args.seed or 0, args.workers or 1, args.dt)
    return result.columns, result.rows, result.manifest(code_version()), None


# ------------------------------------------------------------------ parser


def _common(parser: argparse.ArgumentParser, system_flags: bool = True) -> None:
    parser.add_argument("--seed", type=int, default=None, help="64-bit seed")
    parser.add_argument("--samples", type=int, default=None, help="sample count M_x")
    parser.add_argument("--dt", type=float, default=None, help="time step (beta / steps)")
    parser.add_argument("--workers", type=int, default=None, help="worker processes")
    parser.add_argument("--out", default=None, help="output path (default: stdout)")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    if system_flags:
        parser.add_argument("--config", default=None, help="YAML or JSON run configuration")
        parser.add_argument("--n", type=int, default=6, help="particles (without --config)")
        parser.add_argument("--d", type=int, default=3, help="dimension (without --config)")
        parser.add_argument("--beta", type=float, default=1.0, help="inverse temperature (without --config)")
        parser.add_argument("--lambda", dest="coupling", type=float, default=0.0,
                            help="Coulomb coupling (without --config)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fermion-pimc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exact-ho", help="exact partition function and energy of the harmonic trap")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--statistics", choices=[s.value for s in Statistics], default="Fermion")
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(handler=cmd_exact_ho)

    for name, handler, text in (
        ("estimate-z", cmd_estimate_z, "determinant estimate of the partition function"),
        ("estimate-h", cmd_estimate_h, "determinant estimate of the mean-field energy"),
        ("tensor", cmd_tensor, "permutation-sum estimates (n <= 8)"),
        ("perturb", cmd_perturb, "perturbed mean-field energy and error indicator"),
        ("replicas", cmd_replicas, "independent replica estimates of the partition function"),
    ):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.set_defaults(handler=handler)

    p = sub.add_parser("preset", help="run a named experiment; without a name, list presets")
    p.add_argument("name", nargs="?")
    p.add_argument("--list", action="store_true")
    _common(p, system_flags=False)
    p.set_defaults(handler=cmd_preset)
    return parser


def _emit(columns, rows, details, fmt: str, out: str | None, command: str, wall: float,
          cfg) -> None:
    if details.get("listing") and fmt == "csv":
        text = "".join(f"{row['name']}: {row['description']}\n" for row in rows)
    elif fmt == "csv":
        text = rows_to_csv(columns, rows)
    else:
        text = json.dumps({"columns": columns, "rows": rows}, indent=2, default=format_value) + "\n"
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.write_text(text, encoding="utf-8")
    manifest = {"command": command, "code_version": code_version(), "wall_time": wall,
                "output": str(path), **details}
    if cfg is not None:
        manifest.setdefault("config", cfg.to_dict())
    Path(str(path) + ".manifest.json").write_text(
        json.dumps(manifest, indent=2, default=format_value) + "\n", encoding="utf-8")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    start = time.perf_counter()
    try:
        columns, rows, details, cfg = args.handler(args)
        _emit(columns, rows, details, args.format, _output_path(args, cfg), args.command,
              time.perf_counter() - start, cfg)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EstimationError as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return 3
    except PrecisionError as exc:
        print(f"precision failure: {exc}", file=sys.stderr)
        return 4
    except FermionPIMCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
