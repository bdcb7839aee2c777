"""Seed derivation and bounded parallel training.

All randomness in the CLI flows from one base seed: stage-specific seeds are
derived by hashing ``"{base}:{stage}"`` with SHA-256 and taking the top four
bytes. The HIERDECOMP_THREADS environment variable caps how many independent
trainings run concurrently (default 1); results are returned in submission
order, so parallelism never changes outputs.
"""
from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")

__all__ = ["derive_seed", "max_threads", "run_tasks"]


def derive_seed(base: int, stage: str) -> int:
    digest = hashlib.sha256(f"{base}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


def max_threads() -> int:
    raw = os.environ.get("HIERDECOMP_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"HIERDECOMP_THREADS must be an integer, got {raw!r}") from None
    return max(value, 1)


def run_tasks(tasks: Sequence[Callable[[], T]]) -> list[T]:
    """Run independent zero-argument tasks, preserving order."""
    workers = max_threads()
    if workers == 1 or len(tasks) <= 1:
        return [task() for task in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(task) for task in tasks]
        return [f.result() for f in futures]
