"""Domain types shared by every other module.

All sizes are bytes, rates are bytes/second and times are seconds. Human
units ("10Gbps", "40ms") are converted at the edges by :mod:`xfertune.units`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence


class ValidationError(ValueError):
    """Raised when a domain object is constructed with invalid values."""


class EmptyDatasetError(ValidationError):
    def __init__(self, msg: str = "empty dataset"):
        super().__init__(msg)


class ChunkType(enum.IntEnum):
    """File-size class of a chunk. Integer value follows increasing file size."""

    SMALL = 0
    MEDIUM = 1
    LARGE = 2
    HUGE = 3

    @property
    def label(self) -> str:
        return self.name.capitalize()

    @classmethod
    def parse(cls, value: "str | int | ChunkType") -> "ChunkType":
        if isinstance(value, ChunkType):
            return value
        if isinstance(value, int):
            return cls(value)
        key = value.strip().upper()
        # older write-ups of the MC round robin call the second class "Middle"
        if key == "MIDDLE":
            key = "MEDIUM"
        try:
            return cls[key]
        except KeyError:
            raise ValidationError(f"unknown chunk type {value!r}") from None


# Round-robin order used by MC and as the universal tie-break order.
PRIORITY_ORDER: tuple[ChunkType, ...] = (
    ChunkType.HUGE,
    ChunkType.SMALL,
    ChunkType.LARGE,
    ChunkType.MEDIUM,
)


def priority_rank(chunk_type: ChunkType) -> int:
    return PRIORITY_ORDER.index(chunk_type)


@dataclass(frozen=True)
class NetworkProfile:
    """End-to-end path description.

    ``io_cap`` is the aggregate disk throughput of the end systems; when left
    as ``None`` it defaults to 1.25 x bandwidth so the network stays the
    bottleneck.
    """

    bandwidth: float
    rtt: float
    buffer_size: int
    max_cc: int = 1
    io_cap: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValidationError(f"bandwidth must be > 0, got {self.bandwidth!r}")
        if not self.rtt > 0:
            raise ValidationError(f"rtt must be > 0, got {self.rtt!r}")
        if not self.buffer_size > 0:
            raise ValidationError(f"buffer_size must be > 0, got {self.buffer_size!r}")
        if int(self.max_cc) != self.max_cc or self.max_cc < 1:
            raise ValidationError(f"max_cc must be an integer >= 1, got {self.max_cc!r}")
        if self.io_cap is None:
            object.__setattr__(self, "io_cap", 1.25 * self.bandwidth)
        elif not self.io_cap > 0:
            raise ValidationError(f"io_cap must be > 0, got {self.io_cap!r}")
        object.__setattr__(self, "max_cc", int(self.max_cc))

    @property
    def bdp(self) -> int:
        return bdp(self)

    def with_max_cc(self, max_cc: int) -> "NetworkProfile":
        return NetworkProfile(self.bandwidth, self.rtt, self.buffer_size, max_cc, self.io_cap, self.name)

    def replace(self, **changes) -> "NetworkProfile":
        values = dict(
            bandwidth=self.bandwidth,
            rtt=self.rtt,
            buffer_size=self.buffer_size,
            max_cc=self.max_cc,
            io_cap=self.io_cap,
            name=self.name,
        )
        values.update(changes)
        return NetworkProfile(**values)


def bdp(profile: NetworkProfile) -> int:
    """Bandwidth-delay product in bytes, rounded to the nearest byte."""
    return int(round(profile.bandwidth * profile.rtt))


@dataclass(frozen=True)
class FileEntry:
    id: str
    size: int

    def __post_init__(self):
        if int(self.size) != self.size or self.size <= 0:
            raise ValidationError(f"file {self.id!r}: size must be a positive integer, got {self.size!r}")
        object.__setattr__(self, "size", int(self.size))


@dataclass(frozen=True)
class Dataset:
    files: tuple[FileEntry, ...]
    name: str = "dataset"

    def __post_init__(self):
        files = tuple(self.files)
        object.__setattr__(self, "files", files)
        seen = set()
        for f in files:
            if f.id in seen:
                raise ValidationError(f"duplicate file id {f.id!r}")
            seen.add(f.id)

    @classmethod
    def from_sizes(cls, sizes: Iterable[int], name: str = "dataset", prefix: str = "f") -> "Dataset":
        sizes = list(sizes)
        width = max(1, len(str(len(sizes) - 1)))
        return cls(tuple(FileEntry(f"{prefix}{i:0{width}d}", int(s)) for i, s in enumerate(sizes)), name)

    def __len__(self) -> int:
        return len(self.files)

    @property
    def total_size(self) -> int:
        return sum(f.size for f in self.files)


def dataset_stats(ds: Dataset) -> tuple[int, int, Fraction]:
    """Return ``(count, total_bytes, average_bytes)``; the average is exact."""
    if not ds.files:
        raise EmptyDatasetError()
    total = ds.total_size
    return len(ds.files), total, Fraction(total, len(ds.files))


@dataclass(frozen=True)
class TransferParams:
    pipelining: int
    parallelism: int
    concurrency: int

    def __post_init__(self):
        if self.pipelining < 0:
            raise ValidationError(f"pipelining must be >= 0, got {self.pipelining}")
        if self.parallelism < 1:
            raise ValidationError(f"parallelism must be >= 1, got {self.parallelism}")
        if self.concurrency < 1:
            raise ValidationError(f"concurrency must be >= 1, got {self.concurrency}")

    def as_dict(self) -> dict:
        return {"pipelining": self.pipelining, "parallelism": self.parallelism, "concurrency": self.concurrency}


@dataclass(frozen=True)
class Chunk:
    """A group of whole files sharing one parameter set."""

    chunk_type: ChunkType
    files: tuple[FileEntry, ...]
    params: Optional[TransferParams] = None
    total_size: int = field(init=False)
    avg_file_size: Fraction = field(init=False)

    def __post_init__(self):
        files = tuple(self.files)
        if not files:
            raise EmptyDatasetError("chunk must contain at least one file")
        object.__setattr__(self, "files", files)
        object.__setattr__(self, "chunk_type", ChunkType.parse(self.chunk_type))
        total = sum(f.size for f in files)
        object.__setattr__(self, "total_size", total)
        object.__setattr__(self, "avg_file_size", Fraction(total, len(files)))

    def with_params(self, params: TransferParams) -> "Chunk":
        return Chunk(self.chunk_type, self.files, params)

    def __len__(self) -> int:
        return len(self.files)


def sort_by_priority(items: Sequence, key=lambda c: c.chunk_type) -> list:
    return sorted(items, key=lambda c: priority_rank(key(c)))
