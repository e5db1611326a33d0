"""Deterministic accounting of transient numerical workspace.

Peak-memory numbers reported by the benchmark harness are analytic rather
than sampled from the OS: every internal buffer the solvers and backward
passes allocate is registered with the active tracker, and the reported
peak is the largest number of simultaneously live accounted bytes.  This
makes the memory results portable and bit-reproducible, independent of
allocator, garbage collector, or interpreter version.

Library code allocates its transient buffers through :func:`alloc` /
:func:`zeros` and releases them with :func:`release`.  Outside a tracking
scope these helpers degrade to plain ``numpy`` allocation with no
bookkeeping cost beyond a truthiness check.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np

__all__ = ["WorkspaceTracker", "alloc", "zeros", "release", "track"]


class WorkspaceTracker:
    """Live/peak byte counts for one measurement scope."""

    __slots__ = ("live_bytes", "peak_bytes")

    def __init__(self) -> None:
        self.live_bytes = 0
        self.peak_bytes = 0

    def add(self, nbytes: int) -> None:
        self.live_bytes += nbytes
        if self.live_bytes > self.peak_bytes:
            self.peak_bytes = self.live_bytes

    def remove(self, nbytes: int) -> None:
        self.live_bytes -= nbytes


_lock = threading.Lock()
_active: list[WorkspaceTracker] = []


def alloc(shape, dtype=np.float64) -> np.ndarray:
    """Allocate an uninitialized array, charging it to active trackers."""
    arr = np.empty(shape, dtype=dtype)
    if _active:
        with _lock:
            for tracker in _active:
                tracker.add(arr.nbytes)
    return arr


def zeros(shape, dtype=np.float64) -> np.ndarray:
    """Allocate a zero-filled array, charging it to active trackers."""
    arr = alloc(shape, dtype=dtype)
    arr.fill(0)
    return arr


def release(arr: np.ndarray | None) -> None:
    """Credit a previously :func:`alloc`-ed array back to active trackers.

    Releasing is what lets sequential, non-overlapping buffers of size S
    report a peak of S rather than 2S.  Buffers that are returned to the
    caller are deliberately not released; they stay live for the rest of
    the scope.
    """
    if arr is None:
        return
    if _active:
        with _lock:
            for tracker in _active:
                tracker.remove(arr.nbytes)


@contextmanager
def track():
    """Open a tracking scope and yield its :class:`WorkspaceTracker`.

    Scopes may nest; inner allocations are charged to every open scope.
    The tracker's ``peak_bytes`` remains readable after the scope closes.
    """
    tracker = WorkspaceTracker()
    with _lock:
        _active.append(tracker)
    try:
        yield tracker
    finally:
        with _lock:
            _active.remove(tracker)
