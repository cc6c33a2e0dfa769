"""Mini-slot contention simulator with compiled and pure-Python kernels."""

from ._backend import available_kernels, backend_name, kernel
from ._engine import (EpisodeResult, IntervalReport, MeasuredThroughput,
                      SimState, SlotOutcome, measure_throughput, run_episode,
                      run_interval, run_slot)

__all__ = [
    "available_kernels", "backend_name", "kernel",
    "EpisodeResult", "IntervalReport", "MeasuredThroughput", "SimState",
    "SlotOutcome", "measure_throughput", "run_episode", "run_interval",
    "run_slot",
]
