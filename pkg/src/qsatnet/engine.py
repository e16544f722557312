"""Deterministic discrete-event core: simulated clock, ordered event queue,
and seeded random streams.

Random streams are counter-based so that every draw is a pure function of
(root seed, stream key, counter index).  The pinned algorithm (do not change
without bumping the stream version tag) is:

    value_i = splitmix64_finalizer(key64 + (i + 1) * 0x9E3779B97F4A7C15)

where key64 is the first 8 bytes of BLAKE2b over the tagged stream key.
Uniforms map the top 53 bits to [0, 1); normals use the Box-Muller transform
and consume two counter slots per value.  All integer arithmetic is modulo
2**64, so streams are identical across platforms.
"""

from __future__ import annotations

import hashlib
import heapq
import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_STREAM_VERSION_TAG = b"qsatnet-rng-v1"


class EngineError(RuntimeError):
    """Scheduling violations and handler failures inside the event loop."""


def _mix64(x: int) -> int:
    x &= _MASK64
    x = ((x ^ (x >> 30)) * _MIX1) & _MASK64
    x = ((x ^ (x >> 27)) * _MIX2) & _MASK64
    return x ^ (x >> 31)


def _mix64_array(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64, copy=True)
    x ^= x >> np.uint64(30)
    x *= np.uint64(_MIX1)
    x ^= x >> np.uint64(27)
    x *= np.uint64(_MIX2)
    x ^= x >> np.uint64(31)
    return x


def derive_key(root_seed: int, parts: tuple) -> int:
    """Hash (root seed, key parts) to the 64-bit stream key.

    Parts may be ints or strings, e.g. a module tag plus entity id plus grid
    index.  Distinct part tuples give statistically independent streams.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(_STREAM_VERSION_TAG)
    h.update(struct.pack(">Q", root_seed & _MASK64))
    for p in parts:
        if isinstance(p, bool) or not isinstance(p, (int, str)):
            raise TypeError(f"stream key parts must be int or str, got {p!r}")
        if isinstance(p, int):
            h.update(b"i" + struct.pack(">q", p))
        else:
            h.update(b"s" + p.encode("utf-8") + b"\x00")
    return int.from_bytes(h.digest(), "big")


class RngStream:
    """One keyed random stream with sequential and indexed access.

    Sequential draws advance the internal counter; ``uniform_at`` reads the
    value at an absolute counter index without moving it.  A stream used for
    indexed access should not also be drawn from sequentially (the two views
    share the same counter line).  A single stream must not be shared across
    concurrent callers; derive one stream per worker instead.
    """

    def __init__(self, key: int):
        self.key = key & _MASK64
        self._counter = 0

    def _raw(self, start: int, n: int) -> np.ndarray:
        idx = np.arange(start + 1, start + n + 1, dtype=np.uint64)
        return _mix64_array(np.uint64(self.key) + idx * np.uint64(_GOLDEN))

    def random(self, n: Optional[int] = None):
        """Uniform draws in [0, 1); one counter slot per value."""
        if n is None:
            u = self.uniform_at(self._counter)
            self._counter += 1
            return u
        m = int(n)
        u = (self._raw(self._counter, m) >> np.uint64(11)) * 2.0**-53
        self._counter += m
        return u

    def standard_normal(self, n: Optional[int] = None):
        """Normal draws via Box-Muller; two counter slots per value."""
        m = 1 if n is None else int(n)
        u = (self._raw(self._counter, 2 * m) >> np.uint64(11)) * 2.0**-53
        self._counter += 2 * m
        z = np.sqrt(-2.0 * np.log1p(-u[0::2])) * np.cos(2.0 * np.pi * u[1::2])
        return float(z[0]) if n is None else z

    def uniform_at(self, index: int) -> float:
        """Uniform in [0, 1) at an absolute counter index (stateless)."""
        x = _mix64((self.key + ((index + 1) * _GOLDEN)) & _MASK64)
        return (x >> 11) * 2.0**-53

    def uniforms_at(self, start: int, n: int) -> np.ndarray:
        """Vectorized ``uniform_at`` over indices start .. start+n-1."""
        return (self._raw(start, n) >> np.uint64(11)) * 2.0**-53


def make_stream(root_seed: int, *parts) -> RngStream:
    """Stream for a key tuple without an Engine instance (sweeps, CLI)."""
    return RngStream(derive_key(root_seed, parts))


@dataclass
class Event:
    time: float
    seq: int
    kind: str
    payload: dict = field(default_factory=dict)
    handler: Optional[Callable[["Event"], None]] = None


class Engine:
    """Single-threaded event loop; dequeue order is (time, seq) lexicographic."""

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self._now = 0.0
        self._next_seq = 0
        self._queue: list[tuple[float, int, Event]] = []
        self.scheduled_count = 0
        self.processed_count = 0

    @property
    def now(self) -> float:
        return self._now

    @property
    def pending_count(self) -> int:
        return len(self._queue)

    def stream(self, *parts) -> RngStream:
        return RngStream(derive_key(self.seed, parts))

    def schedule(self, time: float, kind: str, handler: Callable[[Event], None],
                 payload: Optional[dict] = None) -> Event:
        """Enqueue an event; seq is assigned in schedule-call order."""
        t = float(time)
        if t < self._now:
            raise EngineError(
                f"cannot schedule '{kind}' at t={t} before current t={self._now}")
        ev = Event(t, self._next_seq, kind, payload if payload is not None else {}, handler)
        self._next_seq += 1
        heapq.heappush(self._queue, (ev.time, ev.seq, ev))
        self.scheduled_count += 1
        return ev

    def run_until(self, t_end: float) -> int:
        """Process every event with time <= t_end; returns the count processed.

        The clock never decreases and finishes at t_end even if the queue
        drains early.  A handler exception aborts the run with the offending
        event identified.
        """
        t_end = float(t_end)
        if t_end < self._now:
            raise EngineError(f"run_until({t_end}) is before current t={self._now}")
        processed = 0
        while self._queue and self._queue[0][0] <= t_end:
            _, _, ev = heapq.heappop(self._queue)
            self._now = ev.time
            try:
                if ev.handler is not None:
                    ev.handler(ev)
            except EngineError:
                raise
            except Exception as exc:
                raise EngineError(
                    f"handler failed on event '{ev.kind}' (seq={ev.seq}, t={ev.time}): {exc}"
                ) from exc
            self.processed_count += 1
            processed += 1
        self._now = t_end
        return processed


def seconds_to_ns(t: float) -> int:
    """Simulation seconds to integer nanoseconds, rounding half to even."""
    if not math.isfinite(t):
        raise ValueError(f"non-finite time {t!r}")
    return round(t * 1e9)


def ns_to_seconds(ns: int) -> float:
    return ns / 1e9
