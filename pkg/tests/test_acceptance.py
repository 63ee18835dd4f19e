"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v`` (lines appear in the
"acceptance criteria" summary section) or ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import json
import math
import os
import subprocess
import sys
import tempfile
import time
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from xfertune.config import builtin_profiles, load_profile
from xfertune.core import Chunk, ChunkType, Dataset, NetworkProfile, TransferParams
from xfertune.estimator import concurrency_term, find_optimal_parameters
from xfertune.kernels import classify_sizes
from xfertune.harness import DatasetSpec, generate_dataset, preset, sweep
from xfertune.partitioner import PartitionSpec, partition_files
from xfertune.schedulers import Algorithm, SchedulerConfig, allocate_mc
from xfertune.simulator import run_simulation, simulate_dataset
from xfertune.units import parse_size

S, M, L, H = ChunkType.SMALL, ChunkType.MEDIUM, ChunkType.LARGE, ChunkType.HUGE
MB, GB = 10**6, 10**9
FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"
FP_REL = 1e-9  # float round-off allowance for "A >= B" throughput comparisons


# 1 ------------------------------------------------------------------------------


def check_1():
    got = allocate_mc([S, M, L], 8)
    want = {S: 3, M: 2, L: 3}
    return got == want, f"(Small, Medium, Large) = ({got[S]}, {got[M]}, {got[L]})"


# 2 ------------------------------------------------------------------------------


def check_2():
    prof = load_profile("stampede-comet")
    rng = np.random.default_rng(2)
    bw = int(prof.bandwidth)
    ranges = {M: (bw // 20 + 1, bw // 5), L: (bw // 5 + 1, bw // 2), H: (bw // 2 + 1, 100 * GB)}
    bad = []
    for t, (lo, hi) in ranges.items():
        for avg in [lo, hi] + rng.integers(lo, hi, 200).tolist():
            for cc in range(2, 65):
                p = find_optimal_parameters(avg, prof.bdp, prof.buffer_size, cc)
                if p.concurrency != 2:
                    bad.append((t.label, avg, cc, p.concurrency))
    ok = not bad and prof.bdp == 50 * MB and prof.rtt == 0.04
    return ok, f"BDP {prof.bdp / MB:g} MB, RTT {prof.rtt * 1e3:g} ms; {len(bad)} non-2 concurrency values" + (
        f", e.g. {bad[0]}" if bad else "")


# 3 ------------------------------------------------------------------------------


def check_3():
    rows, ok = [], True
    for name, data in builtin_profiles().items():
        prof = load_profile(name)
        published = parse_size(data["published_bdp"])
        err = abs(prof.bdp - published) / published
        good = err <= 0.01
        ok &= good
        rows.append(f"{name} {prof.bdp / MB:g}/{published / MB:g} MB{'' if good else ' (off ' + format(err, '.0%') + ')'}")
    return ok, "; ".join(rows)


# 4 ------------------------------------------------------------------------------


def check_4(n=10_000, cross_check=500):
    """Exact integer form: 5*rtt <= BDP/avg < 20*rtt with rtt = u microseconds and
    avg = total/count becomes 5*u*total <= BDP*count*10**6 < 20*u*total."""
    rng = np.random.default_rng(4)
    violations = mismatches = 0
    for i in range(n):
        bw = int(rng.integers(1, 100_001)) * MB          # whole MB/s
        rtt_us = int(rng.integers(1, 1_000_001))         # whole microseconds
        prof = NetworkProfile(float(bw), rtt_us / 1e6, 32 * MB)
        lo, hi = bw // 20, bw // 5
        sizes = rng.integers(lo + 1, hi + 1, int(rng.integers(1, 6))).tolist() + [max(1, lo // 2), hi + 1, bw]
        bucket = classify_sizes(sizes, PartitionSpec.for_bandwidth(prof.bandwidth, 3).integer_thresholds)
        medium = [s for s, b in zip(sizes, bucket) if b == 1]
        total, count = sum(medium), len(medium)
        scaled = prof.bdp * count * 10**6
        if not (prof.bdp == bw * rtt_us // 10**6 and 5 * rtt_us * total <= scaled < 20 * rtt_us * total):
            violations += 1
        if i < cross_check:
            (mid,) = [c for c in partition_files(Dataset.from_sizes(sizes), prof, 3) if c.chunk_type is M]
            y = concurrency_term(mid.avg_file_size, prof.bdp)
            mismatches += sorted(f.size for f in mid.files) != sorted(medium) or y != Fraction(prof.bdp * count, total)
    return violations == 0 and mismatches == 0, (
        f"{violations} violations over {n} profiles; partitioner/estimator agree on {cross_check - mismatches}/{cross_check}")


# 5 ------------------------------------------------------------------------------


def _oracle_bucket(size, bw, k):
    b = 0
    for d in (20, 5, 2)[: k - 1]:
        if size > Fraction(bw, d):
            b += 1
    return b


def check_5(n=1500):
    rng = np.random.default_rng(5)
    problems = []
    for i in range(n):
        bw = int(rng.integers(1, 10_000)) * MB
        prof = NetworkProfile(float(bw), 0.01, MB)
        count = int(rng.integers(1, 40))
        sizes = np.exp(rng.uniform(0, math.log(4 * bw), count)).astype(np.int64) + 1
        # pin some files exactly on the cut-offs
        for d in (20, 5, 2):
            if rng.random() < 0.3:
                sizes[rng.integers(count)] = bw // d
        ds = Dataset.from_sizes(sizes.tolist())
        k = i % 4 + 1
        chunks = partition_files(ds, prof, k)
        ids = [f.id for c in chunks for f in c.files]
        if sorted(ids) != sorted(f.id for f in ds.files) or len(set(ids)) != len(ids):
            problems.append(("set partition", i))
        if k == 1:
            avg = Fraction(ds.total_size, len(ds.files))
            if chunks[0].chunk_type != _oracle_bucket(avg, bw, 4):
                problems.append(("k=1 type", i))
        else:
            for c in chunks:
                if any(_oracle_bucket(f.size, bw, k) != int(c.chunk_type) for f in c.files):
                    problems.append(("bounds", i))
        for c in chunks:
            again = partition_files(Dataset(c.files), prof, k)
            if [x.files for x in again] != [c.files]:
                problems.append(("idempotence", i))
    return not problems, f"{len(problems)} problems over {n} datasets" + (f", first {problems[0]}" if problems else "")


# 6 ------------------------------------------------------------------------------

WAN = NetworkProfile(1.25e9, 0.04, 32 * MB, 1, name="wan")
SMALL_BUF = NetworkProfile(1.25e9, 0.045, 4 * MB, 1, name="small-buffer")
LAN = NetworkProfile(1.25e9, 0.0002, MB, 1, name="lan")


def _random_run(rng):
    prof = [WAN, SMALL_BUF, LAN][int(rng.integers(3))]
    count = int(rng.integers(1, 30))
    sizes = np.exp(rng.uniform(math.log(1e5), math.log(2e9), count)).astype(np.int64) + 1
    algo = [Algorithm.SC, Algorithm.MC, Algorithm.PROMC][int(rng.integers(3))]
    cfg = SchedulerConfig(algorithm=algo, k_chunks=int(rng.integers(1, 5)), max_cc=int(rng.integers(1, 17)),
                          realloc_period=float(rng.choice([0.05, 0.2, 1.0, 5.0])),
                          realloc_consecutive=int(rng.integers(1, 4)))
    return Dataset.from_sizes(sizes.tolist()), prof, cfg


def _allocation_violations(rep, cfg):
    out = []
    log = rep.allocation_log
    prev = None
    for e in log:
        alloc = e["allocation"]
        unfinished = set(e["unfinished"])
        total = sum(alloc.values())
        if total > cfg.max_cc:
            out.append(f"{e['reason']}: {total} > maxCC")
        for t, n in alloc.items():
            if n < 0:
                out.append("negative")
            if t not in unfinished and n != 0:
                out.append(f"{e['reason']}: finished {t} holds {n}")
        if cfg.algorithm is Algorithm.SC:
            if sum(1 for n in alloc.values() if n > 0) > 1:
                out.append("two SC chunks active")
        elif unfinished and total != cfg.max_cc:
            out.append(f"{e['reason']}: {total} channels placed, expected {cfg.max_cc}")
        if e["reason"].startswith("periodic:"):
            donor = ChunkType.parse(e["reason"].split(":")[1].split("->")[0])
            if alloc[donor.label] < 1:
                out.append("donor dropped to 0")
            if cfg.algorithm is not Algorithm.PROMC:
                out.append("periodic move outside ProMC")
        if e["reason"].startswith("completion:") and prev is not None:
            for t in unfinished:
                if alloc[t] < prev["allocation"][t]:
                    out.append(f"completion took channels from running {t}")
        prev = e
    if log[-1]["allocation"] and any(log[-1]["allocation"].values()):
        out.append("channels still held at the end")
    return out


def check_6(n=1200):
    rng = np.random.default_rng(6)
    bad, moves, handoffs = [], 0, 0
    for i in range(n):
        ds, prof, cfg = _random_run(rng)
        rep = simulate_dataset(ds, prof, cfg)
        v = _allocation_violations(rep, cfg)
        if v:
            bad.append((i, v[0]))
        moves += sum(1 for e in rep.allocation_log if e["reason"].startswith("periodic:"))
        handoffs += sum(1 for e in rep.allocation_log if e["reason"].startswith("completion:"))
    detail = f"{len(bad)} violating runs of {n} ({moves} periodic moves, {handoffs} completion handoffs checked)"
    return not bad, detail + (f"; first {bad[0]}" if bad else "")


# 7 ------------------------------------------------------------------------------


def check_7(n=400):
    rng = np.random.default_rng(7)
    lost, nondet = 0, 0
    for _ in range(n):
        ds, prof, cfg = _random_run(rng)
        a = simulate_dataset(ds, prof, cfg)
        b = simulate_dataset(ds, prof, cfg)
        ids = sorted(r["id"] for r in a.file_records)
        if a.total_bytes != ds.total_size or sum(r["size"] for r in a.file_records) != ds.total_size \
                or ids != sorted(f.id for f in ds.files):
            lost += 1
        if a.to_json() != b.to_json() or a.to_csv() != b.to_csv():
            nondet += 1
    return lost == 0 and nondet == 0, f"{lost} runs lost bytes, {nondet} runs differed on rerun, of {n}"


# 8 ------------------------------------------------------------------------------


def check_8():
    prof = load_profile("stampede-comet")
    ccs = (2, 4, 8, 16)
    mixed = generate_dataset(preset("mixed"))
    small = generate_dataset(preset("small-dominated"))
    r = sweep(mixed, prof, ["sc", "mc"], [1, 2], ccs)
    r2 = sweep(small, prof, ["mc", "promc"], [2], ccs)
    thr = {k: v.aggregate_throughput for k, v in {**r, **{("sd",) + k: v for k, v in r2.items()}}.items()}
    failures = []
    for cc in (4, 8, 16):
        if thr[("mc", 2, cc)] < thr[("sc", 2, cc)] * (1 - FP_REL):
            failures.append(f"MC<SC at {cc}")
    for cc in ccs:
        if thr[("sd", "promc", 2, cc)] < thr[("sd", "mc", 2, cc)] * (1 - FP_REL):
            failures.append(f"ProMC<MC at {cc}")
        if thr[("sc", 1, cc)] > thr[("sc", 2, cc)] * (1 + FP_REL):
            failures.append(f"1-chunk SC > 2-chunk SC at {cc}")
    mbps = lambda x: f"{x / MB:.0f}"
    detail = ("MC/SC MB/s " + " ".join(f"{cc}:{mbps(thr[('mc', 2, cc)])}/{mbps(thr[('sc', 2, cc)])}" for cc in ccs)
              + "; ProMC-MC rel " + " ".join(
                  f"{(thr[('sd', 'promc', 2, cc)] / thr[('sd', 'mc', 2, cc)] - 1):+.1e}" for cc in ccs)
              + "; SC 1/2-chunk " + " ".join(f"{mbps(thr[('sc', 1, cc)])}/{mbps(thr[('sc', 2, cc)])}" for cc in ccs))
    return not failures, ("; ".join(failures) + " | " if failures else "") + detail


# 9 ------------------------------------------------------------------------------


def _single_chunk_throughput(sizes, prof, params, chunk_type=S):
    chunk = Chunk(chunk_type, Dataset.from_sizes(sizes).files, params)
    cfg = SchedulerConfig(algorithm="mc", k_chunks=1, max_cc=params.concurrency)
    return run_simulation([chunk], prof, cfg).aggregate_throughput


def check_9():
    notes, ok = [], True
    # pipelining on 1 MB files, 60 ms RTT, one channel
    prof = load_profile("lonestar-gordon", 1)
    base = _single_chunk_throughput([MB] * 200, prof, TransferParams(0, 1, 1))
    best = _single_chunk_throughput([MB] * 200, prof, TransferParams(10, 1, 1))
    gain = best / base
    ok &= gain >= 1.5
    notes.append(f"pipelining 10 vs 0 on 1MB files: {gain:.2f}x")

    # parallelism 2 vs 1 on a huge file helps iff buffer < BDP
    rng = np.random.default_rng(9)
    mismatches, checked = 0, 0
    profiles = [load_profile(n, 1) for n in builtin_profiles()]
    for _ in range(150):
        bw = int(rng.integers(10, 5000)) * MB
        rtt_us = int(rng.integers(100, 200_000))
        buf = int(rng.integers(1, 2 * bw * rtt_us // 10**6 + 2))
        profiles.append(NetworkProfile(float(bw), rtt_us / 1e6, buf, 1))
    for p in profiles:
        t1 = _single_chunk_throughput([100 * GB], p, TransferParams(0, 1, 1), H)
        t2 = _single_chunk_throughput([100 * GB], p, TransferParams(0, 2, 1), H)
        helps = t2 > t1 * (1 + 1e-9)
        mismatches += helps != (p.buffer_size < p.bdp)
        checked += 1
    ok &= mismatches == 0
    notes.append(f"parallelism helps iff buffer<BDP: {mismatches}/{checked} mismatches")

    # concurrency with a disk cap: 4 MB buffer, 45 ms => ~89 MB/s per channel, cap 500 MB/s
    p = NetworkProfile(1.25e9, 0.045, 4 * MB, 1, io_cap=500e6)
    per_channel = p.buffer_size / p.rtt
    agg = {n: _single_chunk_throughput([100 * MB] * 2520, p, TransferParams(100, 1, n)) for n in range(1, 11)}
    rising = [n for n in range(2, 11) if (n * per_channel) <= p.io_cap]
    flat = [n for n in range(2, 11) if (n - 1) * per_channel >= p.io_cap]
    ceiling = p.io_cap * (100 * MB) / (100 * MB + 4 * MB)   # io_cap times the per-file startup factor
    up = all(agg[n] > agg[n - 1] * (1 + 1e-6) for n in rising)
    # once the cap binds, extra channels only hide inter-file gaps: no more than 0.1% gain
    level = all(agg[n] <= ceiling * (1 + 1e-9) and agg[n] / agg[n - 1] - 1 < 1e-3 for n in flat)
    ok &= up and level and bool(rising) and bool(flat)
    notes.append("concurrency MB/s " + " ".join(f"{n}:{agg[n] / MB:.0f}" for n in agg)
                 + f" (rises to n={rising[-1]}, flat from n={flat[0]})")
    return ok, "; ".join(notes)


# 10 -----------------------------------------------------------------------------


def _cli(*args, cwd):
    return subprocess.run([sys.executable, "-m", "xfertune", *map(str, args)], cwd=cwd, capture_output=True, text=True)


def check_10():
    import jsonschema

    def schema(n):
        return json.loads(resources.files("xfertune").joinpath(f"schemas/{n}").read_text())

    csv_cols = schema("csv.schema.json")
    manifest = FIXTURES / "mixed-small.manifest.json"
    profile = FIXTURES / "stampede-comet.json"
    problems = []
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        plan = _cli("plan", manifest, "--profile", profile, "--format", "json", cwd=tmp)
        if plan.returncode != 0:
            problems.append(f"plan exit {plan.returncode}")
        else:
            jsonschema.validate(json.loads(plan.stdout), schema("plan.schema.json"))
        outputs = []
        for d in ("a", "b"):
            sim = _cli("simulate", manifest, "--profile", profile, "--algo", "promc", "--max-cc", 8, "--seed", 1,
                       "--out", tmp / d, cwd=tmp)
            if sim.returncode != 0:
                problems.append(f"simulate exit {sim.returncode}")
                continue
            jsonschema.validate(json.loads((tmp / d / "report.json").read_text()), schema("report.schema.json"))
            if (tmp / d / "report.csv").read_text().splitlines()[0].split(",") != csv_cols["report"]["columns"]:
                problems.append("report csv header")
            outputs.append(((tmp / d / "report.json").read_bytes(), (tmp / d / "report.csv").read_bytes()))
        if len(outputs) == 2 and outputs[0] != outputs[1]:
            problems.append("simulate rerun differs")
        sweeps = []
        for d in ("s1", "s2"):
            sw = _cli("sweep", FIXTURES / "sweep.json", "--out", tmp / d, cwd=tmp)
            if sw.returncode != 0:
                problems.append(f"sweep exit {sw.returncode}")
                continue
            lines = (tmp / d / "sweep.csv").read_text().splitlines()
            if lines[0].split(",") != csv_cols["experiment"]["columns"] or len(lines) != 13:
                problems.append("sweep csv shape")
            jsonschema.validate(json.loads((tmp / d / "sweep.json").read_text()), schema("experiment.schema.json"))
            sweeps.append((tmp / d / "sweep.csv").read_bytes() + (tmp / d / "sweep.json").read_bytes())
        if len(sweeps) == 2 and sweeps[0] != sweeps[1]:
            problems.append("sweep rerun differs")
        codes = {
            "empty manifest": (_cli("plan", FIXTURES / "empty.manifest.json", cwd=tmp).returncode, 1),
            "bad k": (_cli("plan", manifest, "--chunks", 7, cwd=tmp).returncode, 1),
            "bad unit": (_cli("gen-dataset", "--generator", "uniform", "--size", "3 parsecs", "--count", 2,
                              cwd=tmp).returncode, 1),
        }
        for what, (got, want) in codes.items():
            if got != want:
                problems.append(f"{what}: exit {got}, expected {want}")
    return not problems, "; ".join(problems) or "plan/simulate/sweep schema-valid, reruns byte-identical, exit codes 0/1 as specified"


# pytest wrappers ------------------------------------------------------------------

CRITERIA = {
    1: ("MC round-robin (3,2,3)", check_1),
    2: ("concurrency is 2 for Medium/Large/Huge on Stampede-Comet", check_2),
    3: ("published BDP values within 1%", check_3),
    4: ("BDP/avg in [5 RTT, 20 RTT) for Medium chunks", check_4),
    5: ("partition correctness", check_5),
    6: ("channel conservation and reallocation safety", check_6),
    7: ("byte conservation and determinism", check_7),
    8: ("qualitative orderings on the reference model", check_8),
    9: ("pipelining / parallelism / concurrency regimes", check_9),
    10: ("CLI contract", check_10),
}
BUDGET = {1: 1, 2: 1, 3: 1, 4: 1, 5: 5, 6: 60, 7: 60, 8: 120, 9: 10, 10: 30}


def _run(number, acceptance):
    title, fn = CRITERIA[number]
    t0 = time.perf_counter()
    ok, detail = fn()
    elapsed = time.perf_counter() - t0
    if elapsed > BUDGET[number]:
        ok, detail = False, f"over time budget; {detail}"
    acceptance(number, title, ok, f"{detail} [{elapsed:.2f}s, budget {BUDGET[number]}s]")
    assert ok, detail


def test_criterion_01_mc_round_robin(acceptance):
    _run(1, acceptance)


def test_criterion_02_concurrency_two(acceptance):
    _run(2, acceptance)


def test_criterion_03_bdp_fixtures(acceptance):
    _run(3, acceptance)


def test_criterion_04_bdp_ratio_bound(acceptance):
    _run(4, acceptance)


def test_criterion_05_partition(acceptance):
    _run(5, acceptance)


def test_criterion_06_channel_safety(acceptance):
    _run(6, acceptance)


def test_criterion_07_bytes_and_determinism(acceptance):
    _run(7, acceptance)


def test_criterion_08_orderings(acceptance):
    _run(8, acceptance)


def test_criterion_09_mechanisms(acceptance):
    _run(9, acceptance)


def test_criterion_10_cli(acceptance):
    _run(10, acceptance)


if __name__ == "__main__":
    failed = 0
    for number in CRITERIA:
        def show(n, title, ok, detail):
            print(f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}", flush=True)
        try:
            _run(number, show)
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
