"""Synthetic datasets, manifests and experiment sweeps.

Manifests are JSON::

    {"header": {"name": ..., "seed": ..., "generator": ..., "prng": "numpy.PCG64"},
     "entries": [{"id": "f0000", "size_bytes": 1048576}, ...]}

Every generator draws from ``numpy.random.Generator(PCG64(seed))``, so a
manifest is reproduced exactly from its header.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import Config, ModelConfig
from .core import ChunkType, Dataset, FileEntry, NetworkProfile, ValidationError
from .partitioner import threshold_ladder
from .schedulers import Algorithm, SchedulerConfig
from .simulator import SimReport, SimulationError, simulate_dataset
from .units import parse_rate, parse_size, parse_time

log = logging.getLogger(__name__)

PRNG_NAME = "numpy.PCG64"
MB = 10**6
GB = 10**9

GENERATORS = ("uniform", "bucketed", "mixed", "small_dominated")


class InfeasibleSpecError(ValidationError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    """What to generate.

    ``uniform``          ``count`` files of ``size`` bytes.
    ``bucketed``         ``buckets`` = [(lo, hi, count), ...]; sizes log-uniform in (lo, hi].
    ``mixed``            four size classes (relative to ``bandwidth``) of about equal volume,
                         ``total_size`` bytes overall, sizes within [min_size, max_size].
    ``small_dominated``  as ``mixed`` with the Small class carrying twice the volume.
    """

    generator: str
    seed: int = 0
    total_size: Optional[int] = None
    name: str = ""
    size: Optional[int] = None
    count: Optional[int] = None
    buckets: tuple = ()
    bandwidth: float = 1.25e9
    min_size: int = 1 * MB
    max_size: int = 5 * GB

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ValidationError(f"unknown generator {self.generator!r}; expected one of {', '.join(GENERATORS)}")

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetSpec":
        d = dict(data)
        for key in ("total_size", "size", "min_size", "max_size"):
            if d.get(key) is not None:
                d[key] = parse_size(d[key])
        if "bandwidth" in d:
            d["bandwidth"] = parse_rate(d["bandwidth"])
        if "buckets" in d:
            d["buckets"] = tuple((parse_size(lo), parse_size(hi), int(n)) for lo, hi, n in d["buckets"])
        try:
            return cls(**d)
        except TypeError as e:
            raise ValidationError(f"bad dataset spec: {e}") from None

    def to_dict(self) -> dict:
        out = {"generator": self.generator, "seed": self.seed, "name": self.name or self.generator}
        if self.generator == "uniform":
            out.update(size=self.size, count=self.count)
        elif self.generator == "bucketed":
            out["buckets"] = [list(b) for b in self.buckets]
        else:
            out.update(total_size=self.total_size, bandwidth=self.bandwidth,
                       min_size=self.min_size, max_size=self.max_size)
        return out


def _log_uniform(rng: np.random.Generator, lo: int, hi: int, n: int) -> np.ndarray:
    """Integer sizes in (lo, hi], log-uniformly spread."""
    lo_f, hi_f = math.log(lo + 1), math.log(hi)
    vals = np.exp(rng.uniform(lo_f, hi_f, n))
    return np.clip(np.round(vals), lo + 1, hi).astype(np.int64)


def _fill_volume(rng: np.random.Generator, lo: int, hi: int, volume: int) -> list[int]:
    """Draw sizes in (lo, hi] until ``volume`` bytes are reached.

    The final file is trimmed to land exactly on the volume. A remainder too
    small to be a file of this bucket is folded into an earlier file that has
    room for it.
    """
    if volume <= lo:
        raise InfeasibleSpecError(f"cannot place {volume} bytes in a bucket whose files exceed {lo} bytes")
    out: list[int] = []
    used = 0
    batch = max(16, int(volume / max(1, math.sqrt((lo + 1) * hi))) + 1)
    while True:
        for s in _log_uniform(rng, lo, hi, batch).tolist():
            if used + s >= volume:
                rest = volume - used
                if rest > lo:
                    out.append(rest)
                    return out
                for i in range(len(out) - 1, -1, -1):
                    if out[i] + rest <= hi:
                        out[i] += rest
                        return out
                # every file is nearly full: split the remainder with the last one
                last = out.pop()
                a, b = last + rest - (last + rest) // 2, (last + rest) // 2
                if not (lo < b <= a <= hi):
                    raise InfeasibleSpecError(f"cannot place {volume} bytes exactly in ({lo}, {hi}]")
                out.extend([a, b])
                return out
            out.append(s)
            used += s


def generate_dataset(spec: DatasetSpec) -> Dataset:
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    name = spec.name or spec.generator
    if spec.generator == "uniform":
        if not spec.size or not spec.count or spec.size <= 0 or spec.count <= 0:
            raise InfeasibleSpecError("uniform generator needs positive size and count")
        if spec.total_size is not None and spec.size * spec.count != spec.total_size:
            raise InfeasibleSpecError(f"{spec.count} x {spec.size} bytes != total_size {spec.total_size}")
        return Dataset.from_sizes([spec.size] * spec.count, name)

    if spec.generator == "bucketed":
        if not spec.buckets:
            raise InfeasibleSpecError("bucketed generator needs at least one bucket")
        sizes: list[int] = []
        for lo, hi, n in spec.buckets:
            if not 0 <= lo < hi or n < 0:
                raise InfeasibleSpecError(f"bad bucket ({lo}, {hi}, {n})")
            sizes.extend(_log_uniform(rng, lo, hi, n).tolist())
        if spec.total_size is not None:
            cap = sum(hi * n for lo, hi, n in spec.buckets)
            if cap < spec.total_size:
                raise InfeasibleSpecError(f"buckets can hold at most {cap} bytes < total_size {spec.total_size}")
        if not sizes:
            raise InfeasibleSpecError("bucketed spec produces no files")
        return Dataset.from_sizes(sizes, name)

    # mixed / small_dominated
    if spec.total_size is None or spec.total_size <= 0:
        raise InfeasibleSpecError(f"{spec.generator} generator needs total_size")
    t20, t5, t2 = (math.floor(t) for t in threshold_ladder(spec.bandwidth))
    if not spec.min_size <= t20 or not spec.max_size > t2:
        raise InfeasibleSpecError(
            f"size range [{spec.min_size}, {spec.max_size}] does not span all four classes "
            f"(cut-offs {t20}, {t5}, {t2})"
        )
    ranges = [(spec.min_size - 1, t20), (t20, t5), (t5, t2), (t2, spec.max_size)]
    shares = [2, 1, 1, 1] if spec.generator == "small_dominated" else [1, 1, 1, 1]
    volumes = [spec.total_size * s // sum(shares) for s in shares]
    volumes[-1] += spec.total_size - sum(volumes)
    sizes = []
    for (lo, hi), vol in zip(ranges, volumes):
        sizes.extend(_fill_volume(rng, lo, hi, vol))
    order = rng.permutation(len(sizes))
    return Dataset.from_sizes([sizes[i] for i in order], name)


# named fixtures --------------------------------------------------------------

PRESETS = {
    # four near-equal classes, 1 MB - 9.2 GB, 300.5 GB in total
    "mixed": DatasetSpec("mixed", seed=0, total_size=300_500 * MB, name="mixed",
                         min_size=1 * MB, max_size=9_200 * MB),
    "small-dominated": DatasetSpec("small_dominated", seed=0, total_size=375_625 * MB, name="small-dominated",
                                   min_size=1 * MB, max_size=9_200 * MB),
    "four-type-16GB": DatasetSpec("mixed", seed=0, total_size=16 * GB, name="four-type-16GB",
                                  min_size=1 * MB, max_size=5 * GB),
    # 6,232 files between 1 MB and 5 GB; bucket counts are an approximation
    "mixed-6232": DatasetSpec("bucketed", seed=0, name="mixed-6232", buckets=(
        (1 * MB - 1, 62_500_000, 5200),
        (62_500_000, 250 * MB, 700),
        (250 * MB, 625 * MB, 250),
        (625 * MB, 5 * GB, 82),
    )),
    # 427 files of 250-750 MB
    "dark-energy": DatasetSpec("bucketed", seed=0, name="dark-energy", buckets=((250 * MB, 750 * MB, 427),)),
    # ~120K files; 45% below 100 KB, 93% below 1 MB, tail up to 13 GB
    "genome": DatasetSpec("bucketed", seed=0, name="genome", buckets=(
        (999, 100_000, 54_000),
        (100_000, 1 * MB, 57_600),
        (1 * MB, 100 * MB, 8_000),
        (100 * MB, 13 * GB, 400),
    )),
}


def preset(name: str, seed: Optional[int] = None) -> DatasetSpec:
    if name not in PRESETS:
        raise ValidationError(f"unknown dataset preset {name!r}; known: {', '.join(sorted(PRESETS))}")
    spec = PRESETS[name]
    if seed is not None:
        spec = DatasetSpec(**{**spec.__dict__, "seed": seed})
    return spec


# manifests -------------------------------------------------------------------


def manifest_dict(ds: Dataset, spec: Optional[DatasetSpec] = None) -> dict:
    header = {"name": ds.name, "seed": spec.seed if spec else None,
              "generator": spec.generator if spec else "external", "prng": PRNG_NAME if spec else None}
    if spec is not None:
        header["spec"] = spec.to_dict()
    return {"header": header, "entries": [{"id": f.id, "size_bytes": f.size} for f in ds.files]}


def dump_manifest(ds: Dataset, spec: Optional[DatasetSpec] = None) -> str:
    return json.dumps(manifest_dict(ds, spec), indent=1, sort_keys=True) + "\n"


def write_manifest(path: "str | Path", ds: Dataset, spec: Optional[DatasetSpec] = None) -> None:
    Path(path).write_text(dump_manifest(ds, spec))


def parse_manifest(data: dict, default_name: str = "dataset") -> Dataset:
    if not isinstance(data, dict) or "entries" not in data:
        raise ValidationError("manifest must be an object with an 'entries' list")
    header = data.get("header") or {}
    try:
        files = tuple(FileEntry(str(e["id"]), int(e["size_bytes"])) for e in data["entries"])
    except (KeyError, TypeError, ValueError) as e:
        raise ValidationError(f"malformed manifest entry: {e}") from None
    return Dataset(files, header.get("name") or default_name)


def load_manifest(path: "str | Path") -> Dataset:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: invalid JSON: {e}") from None
    return parse_manifest(data, path.stem)


# experiments -----------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentSpec:
    profile: NetworkProfile
    dataset: "DatasetSpec | str | Path"
    algorithms: tuple = (Algorithm.SC, Algorithm.MC, Algorithm.PROMC)
    k_chunks: tuple = (2,)
    max_cc: tuple = (2, 4, 8, 16)
    scheduler: dict = field(default_factory=dict)
    model: ModelConfig = field(default_factory=ModelConfig)
    jobs: int = 1

    @classmethod
    def from_dict(cls, data: dict, base_dir: "str | Path" = ".") -> "ExperimentSpec":
        d = dict(data)
        from .config import load_config

        prof = d.pop("profile")
        if isinstance(prof, dict):
            base = Config.from_dict(prof)
        else:
            p = Path(base_dir) / prof
            base = load_config(p if p.exists() else prof)
        ds = d.pop("dataset")
        if isinstance(ds, dict):
            dataset = preset(ds["preset"], ds.get("seed")) if "preset" in ds else DatasetSpec.from_dict(ds)
        else:
            dataset = Path(base_dir) / ds
        bs = base.scheduler
        sched = {
            "realloc_period": bs.realloc_period,
            "realloc_ratio": bs.realloc_ratio,
            "realloc_consecutive": bs.realloc_consecutive,
            "delta": {t.label: w for t, w in sorted(bs.delta.items())},
        }
        overrides = dict(d.pop("scheduler", {}) or {})
        if "realloc_period" in overrides:
            overrides["realloc_period"] = parse_time(overrides["realloc_period"])
        if "delta" in overrides:
            overrides["delta"] = {**sched["delta"], **{ChunkType.parse(t).label: float(w) for t, w in overrides["delta"].items()}}
        bad = set(overrides) - {"realloc_period", "realloc_ratio", "realloc_consecutive", "delta"}
        if bad:
            raise ValidationError(f"unknown scheduler override keys: {sorted(bad)}")
        sched.update(overrides)
        SchedulerConfig(max_cc=1, **sched)  # reject bad values before any run starts
        model = base.model
        if "model" in d:
            m = d.pop("model")
            model = ModelConfig(parse_size(m.get("k_io", model.k_io)), float(m.get("reconnect_factor", model.reconnect_factor)))
        unknown = set(d) - {"algorithms", "k_chunks", "max_cc", "jobs"}
        if unknown:
            raise ValidationError(f"unknown experiment keys: {sorted(unknown)}")
        return cls(
            profile=base.profile,
            dataset=dataset,
            algorithms=tuple(Algorithm.parse(a) for a in d.get("algorithms", ["sc", "mc", "promc"])),
            k_chunks=tuple(int(k) for k in d.get("k_chunks", [2])),
            max_cc=tuple(int(c) for c in d.get("max_cc", [2, 4, 8, 16])),
            scheduler=sched,
            model=model,
            jobs=int(d.get("jobs", 1)),
        )

    def echo(self) -> dict:
        ds = self.dataset.to_dict() if isinstance(self.dataset, DatasetSpec) else {"manifest": str(self.dataset)}
        p = Config(self.profile, SchedulerConfig(max_cc=self.profile.max_cc), self.model).to_dict()
        p.pop("scheduler")
        return {
            "profile": p,
            "dataset": ds,
            "algorithms": [a.value for a in self.algorithms],
            "k_chunks": list(self.k_chunks),
            "max_cc": list(self.max_cc),
            "scheduler": dict(sorted(self.scheduler.items())),
        }


CSV_COLUMNS = ["algorithm", "k", "maxCC", "throughput", "total_time", "status"]


@dataclass
class ExperimentReport:
    spec: ExperimentSpec
    rows: list[dict]
    reports: dict

    @property
    def failed(self) -> list[dict]:
        return [r for r in self.rows if r["status"] != "ok"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([
                r["algorithm"], r["k"], r["maxCC"],
                "" if r["throughput"] is None else repr(r["throughput"]),
                "" if r["total_time"] is None else repr(r["total_time"]),
                r["status"],
            ])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"spec": self.spec.echo(), "rows": self.rows}, indent=1, sort_keys=True) + "\n"


def _resolve_dataset(spec: ExperimentSpec) -> Dataset:
    if isinstance(spec.dataset, DatasetSpec):
        return generate_dataset(spec.dataset)
    return load_manifest(spec.dataset)


def _run_one(args) -> tuple:
    ds, profile, sched_kwargs, model_cfg, algo, k, cc = args
    try:
        config = SchedulerConfig(algorithm=algo, k_chunks=k, max_cc=cc, **sched_kwargs)
        report = simulate_dataset(ds, profile.with_max_cc(cc), config, model_cfg.build())
        return report, None
    except (SimulationError, ValidationError) as e:
        return None, f"{type(e).__name__}: {e}"


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    """Simulate every (algorithm, k, maxCC) combination of ``spec``."""
    ds = _resolve_dataset(spec)
    sched_kwargs = dict(spec.scheduler)
    factors = list(itertools.product(spec.algorithms, spec.k_chunks, spec.max_cc))
    jobs = [(ds, spec.profile, sched_kwargs, spec.model, a, k, cc) for a, k, cc in factors]
    if spec.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]

    rows, reports = [], {}
    for (algo, k, cc), (report, err) in zip(factors, results):
        if err is not None:
            log.warning("run %s k=%d maxCC=%d failed: %s", algo.value, k, cc, err)
            rows.append({"algorithm": algo.value, "k": k, "maxCC": cc, "throughput": None,
                         "total_time": None, "status": f"error: {err}"})
            continue
        reports[(algo.value, k, cc)] = report
        rows.append({"algorithm": algo.value, "k": k, "maxCC": cc,
                     "throughput": report.aggregate_throughput, "total_time": report.total_time,
                     "status": "ok"})
    return ExperimentReport(spec, rows, reports)


def sweep(ds: Dataset, profile: NetworkProfile, algorithms: Sequence, k_chunks: Sequence[int],
          max_cc: Sequence[int], model: Optional[ModelConfig] = None, **sched) -> dict:
    """In-process convenience: {(algorithm, k, maxCC): SimReport}."""
    model = model or ModelConfig()
    out: dict[tuple, SimReport] = {}
    for algo, k, cc in itertools.product(algorithms, k_chunks, max_cc):
        algo = Algorithm.parse(algo)
        cfg = SchedulerConfig(algorithm=algo, k_chunks=k, max_cc=cc, **sched)
        out[(algo.value, k, cc)] = simulate_dataset(ds, profile.with_max_cc(cc), cfg, model.build())
    return out
