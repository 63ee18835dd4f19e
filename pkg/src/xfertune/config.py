"""Run configuration: network profile, scheduler settings and model overrides.

Config files are JSON objects using human-unit strings::

    {
      "name": "stampede-comet",
      "bandwidth": "10Gbps", "rtt": "40ms", "buffer_size": "32MB",
      "max_cc": 8, "io_cap": "12.5Gbps",
      "scheduler": {"algorithm": "mc", "k_chunks": 2, "realloc_period": "5s",
                    "realloc_ratio": 2.0, "realloc_consecutive": 3,
                    "delta": {"Small": 6, "Medium": 3, "Large": 2, "Huge": 1}},
      "model": {"k_io": "4MB", "reconnect_factor": 1.0}
    }

Every key except ``bandwidth``, ``rtt`` and ``buffer_size`` is optional.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

from .core import ChunkType, NetworkProfile, ValidationError
from .schedulers import SchedulerConfig
from .simulator import DEFAULT_K_IO, ReferenceModel
from .units import format_rate, format_size, format_time, parse_rate, parse_size, parse_time

_PROFILE_KEYS = {"name", "bandwidth", "rtt", "buffer_size", "max_cc", "io_cap", "scheduler", "model",
                 "published_bdp", "network", "note"}
_SCHED_KEYS = {"algorithm", "k_chunks", "max_cc", "delta", "realloc_period", "realloc_ratio", "realloc_consecutive"}
_MODEL_KEYS = {"k_io", "reconnect_factor"}


@dataclass(frozen=True)
class ModelConfig:
    k_io: int = DEFAULT_K_IO
    reconnect_factor: float = 1.0

    def build(self) -> ReferenceModel:
        return ReferenceModel(k_io=self.k_io, reconnect_factor=self.reconnect_factor)


@dataclass(frozen=True)
class Config:
    profile: NetworkProfile
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    model: ModelConfig = field(default_factory=ModelConfig)

    @classmethod
    def from_dict(cls, data: dict) -> "Config":
        unknown = set(data) - _PROFILE_KEYS
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        try:
            bandwidth = parse_rate(data["bandwidth"])
            rtt = parse_time(data["rtt"])
            buffer_size = parse_size(data["buffer_size"])
        except KeyError as e:
            raise ValidationError(f"config is missing required key {e.args[0]!r}") from None
        io_cap = parse_rate(data["io_cap"]) if data.get("io_cap") is not None else None
        sched = dict(data.get("scheduler") or {})
        bad = set(sched) - _SCHED_KEYS
        if bad:
            raise ValidationError(f"unknown scheduler keys: {sorted(bad)}")
        max_cc = int(sched.pop("max_cc", data.get("max_cc", SchedulerConfig.max_cc)))
        profile = NetworkProfile(bandwidth, rtt, buffer_size, max_cc, io_cap, data.get("name", ""))
        if "realloc_period" in sched:
            sched["realloc_period"] = parse_time(sched["realloc_period"])
        if "delta" in sched:
            sched["delta"] = {ChunkType.parse(k): float(v) for k, v in sched["delta"].items()}
        scheduler = SchedulerConfig(max_cc=max_cc, **sched)
        m = dict(data.get("model") or {})
        bad = set(m) - _MODEL_KEYS
        if bad:
            raise ValidationError(f"unknown model keys: {sorted(bad)}")
        model = ModelConfig(
            k_io=parse_size(m.get("k_io", DEFAULT_K_IO)),
            reconnect_factor=float(m.get("reconnect_factor", 1.0)),
        )
        return cls(profile, scheduler, model)

    def to_dict(self) -> dict:
        p, s = self.profile, self.scheduler
        return {
            "name": p.name,
            "bandwidth": format_rate(p.bandwidth),
            "rtt": format_time(p.rtt),
            "buffer_size": format_size(p.buffer_size),
            "max_cc": s.max_cc,
            "io_cap": format_rate(p.io_cap),
            "scheduler": {
                "algorithm": s.algorithm.value,
                "k_chunks": s.k_chunks,
                "delta": {t.label: _num(s.delta[t]) for t in sorted(s.delta)},
                "realloc_period": format_time(s.realloc_period),
                "realloc_ratio": s.realloc_ratio,
                "realloc_consecutive": s.realloc_consecutive,
            },
            "model": {"k_io": format_size(self.model.k_io), "reconnect_factor": self.model.reconnect_factor},
        }

    def with_overrides(self, algorithm=None, k_chunks=None, max_cc=None) -> "Config":
        sched = self.scheduler
        changes: dict[str, Any] = {}
        if algorithm is not None:
            changes["algorithm"] = algorithm
        if k_chunks is not None:
            changes["k_chunks"] = k_chunks
        if max_cc is not None:
            changes["max_cc"] = max_cc
        if not changes:
            return self
        sched = replace(sched, **changes)
        profile = self.profile.with_max_cc(sched.max_cc)
        return Config(profile, sched, self.model)


def _num(x: float):
    return int(x) if float(x).is_integer() else x


def builtin_profiles() -> dict[str, dict]:
    text = resources.files("xfertune").joinpath("data/profiles.json").read_text()
    return json.loads(text)


def load_profile(name: str, max_cc: int = 1) -> NetworkProfile:
    """One of the shipped network profiles, e.g. ``"stampede-comet"``."""
    profiles = builtin_profiles()
    if name not in profiles:
        raise ValidationError(f"unknown profile {name!r}; known: {', '.join(sorted(profiles))}")
    data = dict(profiles[name], name=name, max_cc=max_cc)
    return Config.from_dict(data).profile


def load_config(source: "str | Path") -> Config:
    """Load a config file, or a shipped profile by name."""
    path = Path(source)
    if not path.exists():
        profiles = builtin_profiles()
        if str(source) in profiles:
            return Config.from_dict(dict(profiles[str(source)], name=str(source)))
        raise ValidationError(f"no such config file or builtin profile: {source}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: invalid JSON: {e}") from None
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    return Config.from_dict(data)
