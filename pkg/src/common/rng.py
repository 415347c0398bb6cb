"""
Deterministic random streams.

Every random quantity in a run is drawn from a generator keyed by the
master seed plus a task tuple, so results do not depend on the order in
which (possibly parallel) tasks are executed.
"""
import numpy as np

STREAM_POSTERIOR = 1
STREAM_FORECAST = 2
STREAM_SIMULATION = 3


def task_rng(seed: int, *task: int) -> np.random.Generator:
    """Generator for the stream identified by ``(seed, *task)``."""
    if seed is None:
        raise ValueError("a master seed is required")
    key = [int(seed)] + [int(t) for t in task]
    if any(k < 0 for k in key):
        raise ValueError(f"seed and task indices must be non-negative, got {key}")
    return np.random.default_rng(np.random.SeedSequence(key))
