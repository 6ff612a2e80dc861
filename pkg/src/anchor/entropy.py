"""Entropy pool with continuous per-source health tests.

Samples from any number of sources are absorbed into a 32-byte hash state.
Each source is watched by a repetition-count test and an adaptive-proportion
test over a sliding window; a source that trips either test is marked
``Failed`` until :meth:`EntropyPool.reset_source` is called.
"""
from __future__ import annotations

import enum
import logging
import math
import os
import time
from collections import Counter, deque
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Protocol

from .crypto import H, expand
from .errors import EmptySample, InsufficientEntropy, UnknownSource

log = logging.getLogger(__name__)

REPETITION_CUTOFF = 32
WINDOW_SIZE = 512
FALSE_POSITIVE_LOG2 = 20
# Conservative per-sample min-entropy assumed for the proportion test (bits).
ASSUMED_MIN_ENTROPY = 1
MIN_SAMPLES = 16
MAX_SAMPLE = 64
MAX_EXTRACT = 1024

_ABSORB = b"\x01"
_OUTPUT = b"\x02"
_FORWARD = b"\x03"


def proportion_cutoff(window: int = WINDOW_SIZE, min_entropy: int = ASSUMED_MIN_ENTROPY,
                      alpha_log2: int = FALSE_POSITIVE_LOG2) -> int:
    """Smallest count c with P[Binom(window, 2**-min_entropy) > c] <= 2**-alpha_log2.

    A window whose most frequent value occurs more than c times fails the test.
    Computed exactly with rational arithmetic.
    """
    p = Fraction(1, 2 ** min_entropy)
    alpha = Fraction(1, 2 ** alpha_log2)
    tail = Fraction(1)  # P[X >= k] for k = 0
    for k in range(window + 1):
        tail -= math.comb(window, k) * p ** k * (1 - p) ** (window - k)
        # tail is now P[X > k]
        if tail <= alpha:
            return k
    return window


PROPORTION_CUTOFF = proportion_cutoff()


class Status(enum.Enum):
    HEALTHY = "Healthy"
    SUSPECT = "Suspect"
    FAILED = "Failed"


@dataclass(frozen=True)
class SourceHealth:
    source_id: str
    last_sample: bytes
    repetition_run: int
    window_counts: dict[bytes, int]
    status: Status
    credited: int

    @property
    def max_window_count(self) -> int:
        return max(self.window_counts.values(), default=0)


@dataclass
class _Monitor:
    source_id: str
    last_sample: bytes = b""
    repetition_run: int = 0
    window: deque = field(default_factory=lambda: deque(maxlen=WINDOW_SIZE))
    counts: Counter = field(default_factory=Counter)
    failed: bool = False
    credited: int = 0

    def observe(self, sample: bytes) -> None:
        if sample == self.last_sample:
            self.repetition_run += 1
        else:
            self.last_sample = sample
            self.repetition_run = 1

        if len(self.window) == self.window.maxlen:
            old = self.window[0]
            self.counts[old] -= 1
            if not self.counts[old]:
                del self.counts[old]
        self.window.append(sample)
        self.counts[sample] += 1

        if self.repetition_run >= REPETITION_CUTOFF or self.counts[sample] > PROPORTION_CUTOFF:
            if not self.failed:
                log.warning("entropy source %r failed health test", self.source_id)
            self.failed = True

    @property
    def status(self) -> Status:
        if self.failed:
            return Status.FAILED
        if self.repetition_run >= REPETITION_CUTOFF // 2:
            return Status.SUSPECT
        return Status.HEALTHY


class EntropyPool:
    """Single-writer entropy pool; callers serialize ``add_sample`` and ``extract``."""

    def __init__(self) -> None:
        self.pool_state = bytes(32)
        self.samples_absorbed = 0
        self._sources: dict[str, _Monitor] = {}

    def add_sample(self, source_id: str, sample: bytes) -> None:
        if not sample:
            raise EmptySample(f"empty sample from {source_id!r}")
        if len(sample) > MAX_SAMPLE:
            raise ValueError(f"sample longer than {MAX_SAMPLE} bytes")
        sid = source_id.encode()
        if len(sid) > 255:
            raise ValueError("source id too long")

        mon = self._sources.get(source_id)
        if mon is None:
            mon = self._sources[source_id] = _Monitor(source_id)
        was_failed = mon.failed
        mon.observe(sample)
        if not was_failed and not mon.failed:
            mon.credited += 1

        self.pool_state = H(_ABSORB, self.pool_state, bytes([len(sid)]), sid,
                            bytes([len(sample)]), sample)
        self.samples_absorbed += 1

    def health_check(self, source_id: str) -> SourceHealth:
        try:
            mon = self._sources[source_id]
        except KeyError:
            raise UnknownSource(source_id) from None
        return SourceHealth(mon.source_id, mon.last_sample, mon.repetition_run,
                            dict(mon.counts), mon.status, mon.credited)

    def reset_source(self, source_id: str) -> None:
        if source_id not in self._sources:
            raise UnknownSource(source_id)
        self._sources[source_id] = _Monitor(source_id)

    @property
    def sources(self) -> list[str]:
        return list(self._sources)

    def extract(self, n: int) -> bytes:
        if not 1 <= n <= MAX_EXTRACT:
            raise ValueError(f"extract size must be in 1..{MAX_EXTRACT}")
        if self.samples_absorbed < MIN_SAMPLES:
            raise InsufficientEntropy(
                f"{self.samples_absorbed} samples absorbed, need {MIN_SAMPLES}")
        if all(m.failed for m in self._sources.values()):
            raise InsufficientEntropy("every entropy source has failed")
        out = expand(H(_OUTPUT, self.pool_state), n)
        self.pool_state = H(_FORWARD, self.pool_state)
        return out


class Source(Protocol):
    source_id: str

    def sample(self) -> bytes: ...


class OsRandomSource:
    source_id = "os"

    def __init__(self, size: int = 32):
        self.size = size

    def sample(self) -> bytes:
        return os.urandom(self.size)


class JitterSource:
    """Coarse timing jitter: low bytes of perf_counter deltas around a tiny busy loop."""

    source_id = "jitter"

    def __init__(self, size: int = 16):
        self.size = size

    def sample(self) -> bytes:
        out = bytearray()
        for _ in range(self.size):
            t0 = time.perf_counter_ns()
            acc = 0
            for i in range(37):
                acc ^= i * t0
            out.append((time.perf_counter_ns() - t0) & 0xFF)
        return bytes(out)


class ScriptedSource:
    """Replays newline-delimited hex samples; blank lines and ``#`` comments are skipped."""

    def __init__(self, samples: Iterable[bytes], source_id: str = "script", cycle: bool = False):
        self.source_id = source_id
        self._samples = list(samples)
        if not self._samples:
            raise EmptySample("entropy script contains no samples")
        self._cycle = cycle
        self._pos = 0

    @classmethod
    def from_file(cls, path: str | os.PathLike, **kw) -> "ScriptedSource":
        return cls(parse_script(Path(path).read_text()), **kw)

    def sample(self) -> bytes:
        if self._pos >= len(self._samples):
            if not self._cycle:
                raise InsufficientEntropy("entropy script exhausted")
            self._pos = 0
        s = self._samples[self._pos]
        self._pos += 1
        return s

    def __iter__(self) -> Iterator[bytes]:
        return iter(self._samples)


def parse_script(text: str) -> list[bytes]:
    samples = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            samples.append(bytes.fromhex(line))
    return samples


def gather(pool: EntropyPool, sources: Iterable[Source], rounds: int = MIN_SAMPLES) -> EntropyPool:
    """Poll every source ``rounds`` times, feeding the pool."""
    sources = list(sources)
    for _ in range(rounds):
        for src in sources:
            pool.add_sample(src.source_id, src.sample())
    return pool


def default_pool(script: str | os.PathLike | None = None) -> EntropyPool:
    """A ready-to-extract pool. With ``script`` only the scripted samples are used,
    which makes every downstream draw reproducible."""
    pool = EntropyPool()
    if script is not None:
        src = ScriptedSource.from_file(script, cycle=True)
        gather(pool, [src], rounds=max(MIN_SAMPLES, len(src._samples)))
    else:
        gather(pool, [OsRandomSource(), JitterSource()])
    return pool
