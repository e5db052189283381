"""Packet-trace data model, trace file I/O and synthetic corpus generation.

A trace is an ordered sequence of timestamped, directed, sized packets.
Raw traces (as parsed from disk) contain only real packets; simulated
traces additionally carry dummy and control cells.

File format: one packet per line, ``%.6f<TAB>%+d`` where the sign of the
size encodes the direction (positive = outgoing, negative = incoming).
An optional third column ``R|D|C`` marks the packet kind in annotated
output. A corpus on disk is one file per trace named
``<label>-<instance>.trace``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyTrace,
    InvalidParams,
    MalformedLine,
    NonMonotonicTime,
    TooFewEvents,
)


class Direction(Enum):
    """Packet direction relative to the client (outgoing = client to bridge)."""

    OUTGOING = 1
    INCOMING = -1


class Kind(Enum):
    REAL = "R"
    DUMMY = "D"
    CONTROL = "C"


_KIND_BY_CODE = {k.value: k for k in Kind}


@dataclass(frozen=True, slots=True)
class PacketEvent:
    """One packet on the link: time in seconds, direction, size in bytes."""

    time: float
    direction: Direction
    size: int
    kind: Kind = Kind.REAL

    def __post_init__(self) -> None:
        if self.time < 0:
            raise InvalidParams(f"packet time must be >= 0, got {self.time}")
        if self.size <= 0:
            raise InvalidParams(f"packet size must be > 0, got {self.size}")
        if self.kind is Kind.CONTROL and self.direction is not Direction.OUTGOING:
            raise InvalidParams("control packets flow client->bridge only")

    @property
    def signed_size(self) -> int:
        return self.size * self.direction.value


@dataclass(frozen=True)
class Trace:
    """An ordered packet sequence with an opaque page label."""

    events: tuple[PacketEvent, ...]
    label: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(self.events))
        for prev, cur in zip(self.events, self.events[1:]):
            if cur.time < prev.time:
                raise NonMonotonicTime(
                    f"time {cur.time} after {prev.time} in trace {self.label!r}"
                )

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def filtered(self, direction: Direction | None) -> tuple[PacketEvent, ...]:
        if direction is None:
            return self.events
        return tuple(e for e in self.events if e.direction is direction)

    @property
    def duration(self) -> float:
        if not self.events:
            return 0.0
        return self.events[-1].time - self.events[0].time

    def total_bytes(self, direction: Direction | None = None) -> int:
        return sum(e.size for e in self.filtered(direction))


@dataclass(frozen=True)
class Corpus:
    """A set of labeled traces plus provenance metadata."""

    traces: tuple[Trace, ...]
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "traces", tuple(self.traces))
        if not self.traces:
            raise EmptyTrace("corpus has no traces")
        for t in self.traces:
            if not t.events:
                raise EmptyTrace(f"trace {t.label!r} is empty")

    def __len__(self) -> int:
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces)

    @property
    def labels(self) -> list[str]:
        return [t.label for t in self.traces]


def parse_trace(text: str, label: str = "") -> Trace:
    """Parse the tab-separated trace format into a Trace.

    Accepts the optional third ``R|D|C`` column written by ``--annotate``;
    without it every packet is real.
    """
    events: list[PacketEvent] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) not in (2, 3):
            raise MalformedLine(f"line {lineno}: expected 2 or 3 fields, got {len(parts)}")
        try:
            time = float(parts[0])
            signed = int(parts[1])
        except ValueError as exc:
            raise MalformedLine(f"line {lineno}: {exc}") from exc
        if not math.isfinite(time) or time < 0:
            raise MalformedLine(f"line {lineno}: bad timestamp {parts[0]!r}")
        if signed == 0:
            raise MalformedLine(f"line {lineno}: size must be non-zero")
        kind = Kind.REAL
        if len(parts) == 3:
            kind = _KIND_BY_CODE.get(parts[2].strip())
            if kind is None:
                raise MalformedLine(f"line {lineno}: bad kind {parts[2]!r}")
        direction = Direction.OUTGOING if signed > 0 else Direction.INCOMING
        try:
            events.append(PacketEvent(time, direction, abs(signed), kind))
        except InvalidParams as exc:
            raise MalformedLine(f"line {lineno}: {exc}") from exc
    if not events:
        raise EmptyTrace(f"trace {label!r} has no packets")
    for prev, cur in zip(events, events[1:]):
        if cur.time < prev.time:
            raise NonMonotonicTime(f"time {cur.time} after {prev.time}")
    return Trace(tuple(events), label)


def serialize_trace(trace: Trace, annotate: bool = False) -> str:
    """Render a trace in the on-disk format (signs mandatory on output)."""
    lines = []
    for e in trace.events:
        base = "%.6f\t%+d" % (e.time, e.signed_size)
        if annotate:
            base += "\t" + e.kind.value
        lines.append(base)
    return "\n".join(lines) + "\n"


def interarrival_times(
    trace: Trace, direction: Direction | None = None
) -> list[float]:
    """Consecutive time differences of the (direction-filtered) trace."""
    events = trace.filtered(direction)
    if len(events) < 2:
        raise TooFewEvents(
            f"need >= 2 events after filtering, got {len(events)}"
        )
    return [b.time - a.time for a, b in zip(events, events[1:])]


def instantaneous_bandwidth(
    trace: Trace, window: int = 2, direction: Direction | None = None
) -> list[tuple[int, float]]:
    """Sliding-window bandwidth, one value per window of `window` packets.

    Each value is (index of the window's first inter-arrival gap,
    bytes-per-second over the window). A zero time span yields +inf:
    back-to-back packets are by definition in a burst.
    """
    if window < 2:
        raise InvalidParams(f"window must be >= 2, got {window}")
    events = trace.filtered(direction)
    if len(events) < window:
        raise TooFewEvents(f"need >= {window} events, got {len(events)}")
    out = []
    for i in range(len(events) - window + 1):
        chunk = events[i : i + window]
        span = chunk[-1].time - chunk[0].time
        total = sum(e.size for e in chunk)
        out.append((i, total / span if span > 0 else math.inf))
    return out


def merge_traces(a: Trace, b: Trace, offset: float) -> Trace:
    """Interleave two traces, shifting b by `offset` seconds.

    Models a second tab opened `offset` seconds after the first; the merged
    trace keeps the first tab's label (the classification target). Ties are
    stable: a's events precede b's.
    """
    if offset < 0:
        raise InvalidParams(f"offset must be >= 0, got {offset}")
    shifted = [
        PacketEvent(e.time + offset, e.direction, e.size, e.kind) for e in b.events
    ]
    merged = sorted(list(a.events) + shifted, key=lambda e: e.time)
    return Trace(tuple(merged), a.label)


@dataclass(frozen=True)
class BurstProfile:
    """Knobs of the synthetic page-load generator.

    Each page draws a latent signature (burst count, burst length and
    inter-burst gap scale) from these ranges; instances jitter around it.
    Defaults are calibrated so the k-NN harness separates unprotected
    pages well above chance.
    """

    cell_size: int = 1500
    bursts_mu_range: tuple[int, int] = (6, 22)
    burst_len_mu_range: tuple[int, int] = (4, 16)
    gap_log_mu_range: tuple[float, float] = (math.log(0.06), math.log(0.5))
    gap_log_sigma: float = 0.30
    request_iat_log_mu: float = math.log(0.002)
    request_iat_log_sigma: float = 0.3
    response_iat_log_mu_range: tuple[float, float] = (math.log(0.0012), math.log(0.004))
    response_iat_log_sigma: float = 0.25
    server_think_log_mu_range: tuple[float, float] = (math.log(0.012), math.log(0.035))
    server_think_log_sigma: float = 0.25
    bursts_jitter: float = 0.12
    burst_len_jitter: float = 0.22


DEFAULT_PROFILE = BurstProfile()


def _synth_trace(page: int, instance: int, profile: BurstProfile, seed: int) -> Trace:
    rng_page = np.random.default_rng([seed, 13, page])
    bursts_mu = rng_page.integers(*profile.bursts_mu_range, endpoint=True)
    len_mu = rng_page.integers(*profile.burst_len_mu_range, endpoint=True)
    gap_log_mu = rng_page.uniform(*profile.gap_log_mu_range)
    req_len_p = rng_page.uniform(0.35, 0.75)  # geometric(p) request burst length
    resp_iat_log_mu = rng_page.uniform(*profile.response_iat_log_mu_range)
    think_log_mu = rng_page.uniform(*profile.server_think_log_mu_range)

    rng = np.random.default_rng([seed, 29, page, instance])
    n_bursts = max(2, int(round(rng.normal(bursts_mu, profile.bursts_jitter * bursts_mu))))

    events: list[PacketEvent] = []
    size = profile.cell_size
    t = 0.0
    for _ in range(n_bursts):
        # client request: one to a few outgoing cells back to back
        n_req = 1 + rng.geometric(req_len_p)
        events.append(PacketEvent(t, Direction.OUTGOING, size))
        for _ in range(n_req - 1):
            t += rng.lognormal(profile.request_iat_log_mu, profile.request_iat_log_sigma)
            events.append(PacketEvent(t, Direction.OUTGOING, size))
        # server response burst after a short think time
        t += rng.lognormal(think_log_mu, profile.server_think_log_sigma)
        n_resp = max(2, int(round(rng.normal(len_mu, profile.burst_len_jitter * len_mu))))
        events.append(PacketEvent(t, Direction.INCOMING, size))
        for _ in range(n_resp - 1):
            t += rng.lognormal(resp_iat_log_mu, profile.response_iat_log_sigma)
            events.append(PacketEvent(t, Direction.INCOMING, size))
        # idle gap until the next request
        t += rng.lognormal(gap_log_mu, profile.gap_log_sigma)
    return Trace(tuple(events), label=f"page{page:03d}")


def synth_corpus(
    pages: int,
    instances: int,
    profile: BurstProfile = DEFAULT_PROFILE,
    seed: int = 0,
) -> Corpus:
    """Generate a deterministic synthetic corpus of page-load traces.

    Every page gets a distinct latent burst signature derived from the
    seed, so classifiers see real structure; the same seed reproduces the
    corpus byte for byte.
    """
    if pages < 2:
        raise InvalidParams(f"pages must be >= 2, got {pages}")
    if instances < 1:
        raise InvalidParams(f"instances must be >= 1, got {instances}")
    traces = [
        _synth_trace(page, inst, profile, seed)
        for page in range(pages)
        for inst in range(instances)
    ]
    meta = {
        "generator": "synthetic-bursts",
        "seed": str(seed),
        "pages": str(pages),
        "instances": str(instances),
        "cell_size": str(profile.cell_size),
    }
    return Corpus(tuple(traces), meta)


def save_corpus(corpus: Corpus, directory: str, annotate: bool = False) -> None:
    """Write one `<label>-<instance>.trace` file per trace."""
    os.makedirs(directory, exist_ok=True)
    counters: dict[str, int] = {}
    for trace in corpus:
        idx = counters.get(trace.label, 0)
        counters[trace.label] = idx + 1
        path = os.path.join(directory, f"{trace.label}-{idx}.trace")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(serialize_trace(trace, annotate=annotate))


def load_corpus(directory: str, metadata: dict[str, str] | None = None) -> Corpus:
    """Load every `*.trace` file from a directory, sorted by file name."""
    names = sorted(n for n in os.listdir(directory) if n.endswith(".trace"))
    if not names:
        raise EmptyTrace(f"no .trace files under {directory}")
    traces = []
    for name in names:
        label = name[: -len(".trace")].rsplit("-", 1)[0]
        with open(os.path.join(directory, name), encoding="utf-8") as fh:
            traces.append(parse_trace(fh.read(), label=label))
    meta = dict(metadata or {})
    meta.setdefault("source", os.path.abspath(directory))
    return Corpus(tuple(traces), meta)


def instances_per_label(corpus: Corpus) -> dict[str, int]:
    counts: dict[str, int] = {}
    for t in corpus:
        counts[t.label] = counts.get(t.label, 0) + 1
    return counts


def iter_label_instance(corpus: Corpus) -> Iterable[tuple[str, int, Trace]]:
    """Yield (label, instance index, trace) with per-label running indices."""
    counters: dict[str, int] = {}
    for trace in corpus:
        idx = counters.get(trace.label, 0)
        counters[trace.label] = idx + 1
        yield trace.label, idx, trace
