"""Chunk-based tuning of bulk file transfers.

Files are grouped into size chunks, each chunk gets its own pipelining,
parallelism and concurrency, and a channel budget is shared between chunks
by one of three schedulers. A deterministic fluid-flow simulator evaluates
the resulting plans.
"""

from .core import (
    Chunk,
    ChunkType,
    Dataset,
    EmptyDatasetError,
    FileEntry,
    NetworkProfile,
    TransferParams,
    ValidationError,
    bdp,
)
from .estimator import find_optimal_parameters
from .partitioner import partition_files
from .schedulers import (
    Algorithm,
    SchedulerConfig,
    allocate_mc,
    allocate_promc,
    periodic_reallocate,
    reallocate_on_completion,
)
from .simulator import ReferenceModel, SimReport, SimulationError, run_simulation, simulate_dataset
from .harness import DatasetSpec, ExperimentSpec, generate_dataset, run_experiment
from .scan import scan_directory

__version__ = "0.1.0"

__all__ = [
    "Algorithm",
    "Chunk",
    "ChunkType",
    "Dataset",
    "DatasetSpec",
    "EmptyDatasetError",
    "ExperimentSpec",
    "FileEntry",
    "NetworkProfile",
    "ReferenceModel",
    "SchedulerConfig",
    "SimReport",
    "SimulationError",
    "TransferParams",
    "ValidationError",
    "allocate_mc",
    "allocate_promc",
    "bdp",
    "find_optimal_parameters",
    "generate_dataset",
    "partition_files",
    "periodic_reallocate",
    "reallocate_on_completion",
    "run_experiment",
    "run_simulation",
    "scan_directory",
    "simulate_dataset",
]
