"""Constant-rate reference defenses: BuFLO and Tamaraw trace transforms.

Both reshape a trace into fixed-size cells emitted on a rigid clock,
queuing real data into the earliest free slot of its direction. That
queuing is exactly their cost: unlike adaptive padding they delay real
packets, which shows up as positive latency overhead.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from .errors import InvalidParams
from .traces import Corpus, Direction, Kind, PacketEvent, Trace


@dataclass(frozen=True)
class BuFLOParams:
    """Bidirectional constant-rate padding with a minimum duration."""

    tau: float = 10.0       # minimum padding duration, seconds
    rho: float = 0.02       # inter-packet period, seconds
    cell_size: int = 1500

    def __post_init__(self) -> None:
        if self.tau <= 0 or self.rho <= 0 or self.cell_size <= 0:
            raise InvalidParams("BuFLO parameters must all be positive")


@dataclass(frozen=True)
class TamarawParams:
    """Per-direction constant rates, padded to a multiple of L cells."""

    rho_out: float = 0.053
    rho_in: float = 0.138
    cell_size: int = 1500
    pad_multiple: int = 100  # L

    def __post_init__(self) -> None:
        if self.rho_out <= 0 or self.rho_in <= 0 or self.cell_size <= 0:
            raise InvalidParams("Tamaraw rates and cell size must be positive")
        if self.pad_multiple < 1:
            raise InvalidParams("pad multiple must be >= 1")


def buflo(trace: Trace, params: BuFLOParams = BuFLOParams()) -> Trace:
    """Emit one cell per direction every rho, real data first-come-first-served.

    Transmission runs until all real data is delivered and at least tau
    seconds have passed, so short pages are stretched to the minimum
    duration while long pages reveal that they outlast it.
    """
    if not trace.events:
        raise InvalidParams("cannot pad an empty trace")
    t0 = trace.events[0].time
    queues = {
        d: deque(e for e in trace.events if e.direction is d)
        for d in (Direction.OUTGOING, Direction.INCOMING)
    }
    min_slots = math.ceil(params.tau / params.rho) + 1  # duration >= tau
    out: list[PacketEvent] = []
    j = 0
    while j < min_slots or any(queues.values()):
        t = t0 + j * params.rho
        for d in (Direction.OUTGOING, Direction.INCOMING):
            q = queues[d]
            if q and q[0].time <= t:
                q.popleft()
                out.append(PacketEvent(t, d, params.cell_size, Kind.REAL))
            else:
                out.append(PacketEvent(t, d, params.cell_size, Kind.DUMMY))
        j += 1
    return Trace(tuple(out), trace.label)


def tamaraw(trace: Trace, params: TamarawParams = TamarawParams()) -> Trace:
    """Per-direction constant-rate streams padded up to a multiple of L.

    Each direction keeps its own clock; once its real data is done it
    keeps emitting dummies until the total cell count reaches the next
    multiple of L, grouping pages into anonymity sets by padded size.
    """
    if not trace.events:
        raise InvalidParams("cannot pad an empty trace")
    t0 = trace.events[0].time
    rates = {Direction.OUTGOING: params.rho_out, Direction.INCOMING: params.rho_in}
    out: list[PacketEvent] = []
    for d in (Direction.OUTGOING, Direction.INCOMING):
        q = deque(e for e in trace.events if e.direction is d)
        if not q:
            continue  # zero cells is already a multiple of L
        rho = rates[d]
        emitted = 0
        j = 0
        while q:
            t = t0 + j * rho
            if q[0].time <= t:
                q.popleft()
                out.append(PacketEvent(t, d, params.cell_size, Kind.REAL))
            else:
                out.append(PacketEvent(t, d, params.cell_size, Kind.DUMMY))
            emitted += 1
            j += 1
        target = math.ceil(emitted / params.pad_multiple) * params.pad_multiple
        while emitted < target:
            out.append(PacketEvent(t0 + j * rho, d, params.cell_size, Kind.DUMMY))
            emitted += 1
            j += 1
    out.sort(key=lambda e: e.time)  # stable: outgoing first on ties
    return Trace(tuple(out), trace.label)


def transform_corpus(corpus: Corpus, defense: str, params=None) -> Corpus:
    """Apply a baseline defense to every trace of a corpus."""
    if defense == "buflo":
        params = params or BuFLOParams()
        padded = tuple(buflo(t, params) for t in corpus)
    elif defense == "tamaraw":
        params = params or TamarawParams()
        padded = tuple(tamaraw(t, params) for t in corpus)
    else:
        raise InvalidParams(f"unknown baseline defense {defense!r}")
    meta = dict(corpus.metadata)
    meta["defense"] = defense
    return Corpus(padded, meta)
