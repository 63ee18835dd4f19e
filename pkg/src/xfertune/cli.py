"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import Config, load_config
from .core import Dataset, ValidationError, dataset_stats
from .harness import (
    DatasetSpec,
    ExperimentSpec,
    dump_manifest,
    generate_dataset,
    load_manifest,
    preset,
    run_experiment,
)
from .partitioner import partition_files
from .scan import scan_directory
from .schedulers import Algorithm, allocate_mc, allocate_promc, assign_params
from .simulator import SimulationError, run_simulation
from .units import format_size

log = logging.getLogger("xfertune")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
DEFAULT_PROFILE = "stampede-comet"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_dataset(source: str) -> Dataset:
    p = Path(source)
    if p.is_dir():
        return scan_directory(p)
    if not p.exists():
        raise ValidationError(f"manifest not found: {source}")
    return load_manifest(p)


def _config(args) -> Config:
    cfg = load_config(args.profile)
    return cfg.with_overrides(
        algorithm=getattr(args, "algo", None),
        k_chunks=getattr(args, "chunks", None),
        max_cc=getattr(args, "max_cc", None),
    )


def _emit(text: str, out: Optional[Path], filename: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / filename).write_text(text)


# -- plan ----------------------------------------------------------------------


def build_plan(ds: Dataset, cfg: Config) -> dict:
    sched = cfg.scheduler
    profile = cfg.profile
    chunks = assign_params(partition_files(ds, profile, sched.k_chunks), profile, sched.max_cc)
    count, total, avg = dataset_stats(ds)
    sc_first = min(chunks, key=lambda c: c.chunk_type)
    return {
        "dataset": {"name": ds.name, "files": count, "total_size": total, "avg_file_size": float(avg)},
        "config": cfg.to_dict(),
        "bdp": profile.bdp,
        "k_chunks": sched.k_chunks,
        "max_cc": sched.max_cc,
        "chunks": [
            {
                "type": c.chunk_type.label,
                "files": len(c.files),
                "total_size": c.total_size,
                "avg_file_size": float(c.avg_file_size),
                "params": c.params.as_dict(),
            }
            for c in chunks
        ],
        "initial_allocation": {
            "sc": {c.chunk_type.label: (c.params.concurrency if c is sc_first else 0) for c in chunks},
            "mc": {t.label: n for t, n in sorted(allocate_mc(chunks, sched.max_cc).items())},
            "promc": {t.label: n for t, n in sorted(allocate_promc(chunks, sched.max_cc, sched.delta).items())},
        },
    }


def _plan_table(plan: dict) -> str:
    lines = [
        f"dataset {plan['dataset']['name']}: {plan['dataset']['files']} files, "
        f"{format_size(plan['dataset']['total_size'])}; BDP {format_size(plan['bdp'])}; "
        f"k={plan['k_chunks']} maxCC={plan['max_cc']}",
        f"{'chunk':<8}{'files':>8}{'total':>16}{'avg':>16}{'pp':>6}{'p':>4}{'cc':>4}{'MC':>5}{'ProMC':>7}",
    ]
    for c in plan["chunks"]:
        p = c["params"]
        lines.append(
            f"{c['type']:<8}{c['files']:>8}{c['total_size']:>16}{c['avg_file_size']:>16.0f}"
            f"{p['pipelining']:>6}{p['parallelism']:>4}{p['concurrency']:>4}"
            f"{plan['initial_allocation']['mc'][c['type']]:>5}{plan['initial_allocation']['promc'][c['type']]:>7}"
        )
    return "\n".join(lines) + "\n"


def cmd_plan(args) -> int:
    ds = _load_dataset(args.manifest)
    plan = build_plan(ds, _config(args))
    if args.format == "table":
        text = _plan_table(plan)
    elif args.format == "json":
        text = json.dumps(plan, indent=1, sort_keys=True) + "\n"
    else:
        raise UsageError("plan supports --format json or table")
    _emit(text, args.out, "plan.json" if args.format == "json" else "plan.txt")
    return EXIT_OK


# -- simulate ------------------------------------------------------------------


def cmd_simulate(args) -> int:
    ds = _load_dataset(args.manifest)
    cfg = _config(args)
    sched = cfg.scheduler
    chunks = partition_files(ds, cfg.profile, sched.k_chunks)
    report = run_simulation(chunks, cfg.profile, sched, cfg.model.build())
    report.config = {"run": cfg.to_dict(), "dataset": ds.name, "files": len(ds.files), "seed": args.seed}
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    (out / "report.csv").write_text(report.to_csv())
    summary = (
        f"{report.algorithm} k={report.k_chunks} maxCC={report.max_cc}: "
        f"{report.total_bytes} bytes in {report.total_time:.3f}s = {report.aggregate_throughput * 8 / 1e9:.3f} Gbps\n"
    )
    if args.format == "json":
        sys.stdout.write(report.to_json())
    elif args.format == "csv":
        sys.stdout.write(report.to_csv())
    else:
        sys.stdout.write(summary)
    return EXIT_OK


# -- sweep ---------------------------------------------------------------------


def cmd_sweep(args) -> int:
    path = Path(args.spec)
    if not path.exists():
        raise ValidationError(f"experiment spec not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: invalid JSON: {e}") from None
    if args.seed is not None and isinstance(data.get("dataset"), dict):
        data["dataset"] = {**data["dataset"], "seed": args.seed}
    if args.jobs is not None:
        data["jobs"] = args.jobs
    spec = ExperimentSpec.from_dict(data, base_dir=path.parent)
    result = run_experiment(spec)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "sweep.csv").write_text(result.to_csv())
        (args.out / "sweep.json").write_text(result.to_json())
    if args.format == "json":
        sys.stdout.write(result.to_json())
    else:
        sys.stdout.write(result.to_csv())
    return EXIT_RUNTIME if result.failed else EXIT_OK


# -- gen-dataset / scan --------------------------------------------------------


def cmd_gen_dataset(args) -> int:
    if args.spec:
        data = json.loads(Path(args.spec).read_text())
        spec = preset(data["preset"], data.get("seed")) if "preset" in data else DatasetSpec.from_dict(data)
    elif args.preset:
        spec = preset(args.preset)
    elif args.generator:
        fields = {"generator": args.generator}
        for key in ("size", "count", "total_size", "bandwidth", "min_size", "max_size", "name"):
            v = getattr(args, key)
            if v is not None:
                fields[key] = v
        if args.bucket:
            fields["buckets"] = [b.split(":") for b in args.bucket]
        spec = DatasetSpec.from_dict(fields)
    else:
        raise UsageError("gen-dataset needs --spec, --preset or --generator")
    if args.seed is not None:
        spec = DatasetSpec(**{**spec.__dict__, "seed": args.seed})
    ds = generate_dataset(spec)
    text = dump_manifest(ds, spec)
    if args.out is None:
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    return EXIT_OK


def cmd_scan(args) -> int:
    ds = scan_directory(args.directory)
    text = dump_manifest(ds)
    if args.out is None:
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _chunk_count(text: str) -> int:
    v = _positive_int(text)
    if v > 4:
        raise argparse.ArgumentTypeError(f"chunk count must be in 1..4, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="xfertune", description="Plan and simulate tuned bulk file transfers.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, algo=False):
        p.add_argument("--profile", default=DEFAULT_PROFILE,
                       help=f"config file or builtin profile name (default {DEFAULT_PROFILE})")
        p.add_argument("--chunks", type=_chunk_count, help="number of chunks, 1-4")
        p.add_argument("--max-cc", type=_positive_int, dest="max_cc", help="channel budget")
        p.add_argument("--seed", type=int, default=0)
        if algo:
            p.add_argument("--algo", choices=[a.value for a in Algorithm])

    p = sub.add_parser("plan", help="show chunks, parameters and initial allocations")
    p.add_argument("manifest", help="manifest JSON or directory")
    common(p)
    p.add_argument("--format", choices=["json", "table"], default="table")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="run the fluid simulator")
    p.add_argument("manifest", help="manifest JSON or directory")
    common(p, algo=True)
    p.add_argument("--format", choices=["json", "csv", "table"], default="table")
    p.add_argument("--out", type=Path, default=Path("sim-out"))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run an experiment matrix")
    p.add_argument("spec", help="experiment spec JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=_positive_int)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen-dataset", help="write a synthetic manifest")
    p.add_argument("--spec", help="dataset spec JSON")
    p.add_argument("--preset")
    p.add_argument("--generator", choices=["uniform", "bucketed", "mixed", "small_dominated"])
    p.add_argument("--size")
    p.add_argument("--count", type=int)
    p.add_argument("--total-size", dest="total_size")
    p.add_argument("--bandwidth")
    p.add_argument("--min-size", dest="min_size")
    p.add_argument("--max-size", dest="max_size")
    p.add_argument("--bucket", action="append", help="LO:HI:COUNT, repeatable")
    p.add_argument("--name")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("scan", help="build a manifest from a directory tree")
    p.add_argument("directory")
    p.add_argument("--out")
    p.set_defaults(func=cmd_scan)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationError, UsageError, OSError, KeyError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"xfertune: error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except SimulationError as e:
        print(f"xfertune: simulation failed: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    main_exit()
