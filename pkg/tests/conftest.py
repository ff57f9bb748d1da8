"""Shared fixtures: the trained reference benchmark is built once per session."""

import time

import pytest

from spkfact.benchmark import default_experiment, run_benchmark


@pytest.fixture(scope="session")
def benchmark():
    """(BenchmarkResult, wall seconds) for the pinned reference experiment."""
    start = time.monotonic()
    result = run_benchmark(default_experiment())
    elapsed = time.monotonic() - start
    return result, elapsed
