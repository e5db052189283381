"""Event-driven two-endpoint simulation of the defense over a trace.

The input trace's outgoing packets are replayed as client application
data and its incoming packets as bridge application data, offset so
their link-observation times match the recording. The output is
everything an on-link adversary at the client side of the link sees:
real packets (bit-exact at their original timestamps), dummy cells and
control cells, in time order.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParams, MissingRealEvents, SimulationCapExceeded
from .histograms import HistogramSet
from .padding import (
    AppData,
    Endpoint,
    LinkPacket,
    TimerFired,
    endpoint_handle,
)
from .traces import Corpus, Direction, Kind, PacketEvent, Trace

#: Timer events allowed per trace before the run is declared runaway.
TIMER_EVENT_CAP = 1_000_000


@dataclass(frozen=True)
class LinkModel:
    """One-way propagation delay between client and bridge."""

    one_way_delay: float = 0.0

    def __post_init__(self) -> None:
        if not 0 <= self.one_way_delay < float("inf"):
            raise InvalidParams(f"one-way delay must be finite and >= 0")


@dataclass(frozen=True)
class OverheadReport:
    """Relative cost of a padded trace versus its original."""

    bandwidth_overhead: float
    latency_overhead: float
    dummy_count: int
    control_count: int


_EV_APP = 0
_EV_ARRIVE = 1
_EV_TIMER = 2


def simulate(
    trace: Trace,
    client: Endpoint,
    bridge: Endpoint,
    link: LinkModel = LinkModel(),
    seed: int = 0,
) -> Trace:
    """Run the defense over one raw trace and return the padded trace.

    Deterministic for a fixed (trace, endpoint configs, seed). The run
    continues past the last real packet until both endpoints reach the
    soft stop; a timer-event cap turns runaway configurations into an
    error rather than a truncated trace.
    """
    rng = np.random.default_rng(seed)
    owd = link.one_way_delay
    seq = itertools.count()
    queue: list[tuple] = []

    for event in trace.events:
        if event.kind is not Kind.REAL:
            raise InvalidParams("simulate expects a raw (all-real) trace")
        if event.direction is Direction.OUTGOING:
            heapq.heappush(queue, (event.time, next(seq), _EV_APP, "client", event))
        else:
            # inject early so the link observation matches the recording;
            # clamped at zero for delays longer than the first response
            heapq.heappush(
                queue,
                (max(event.time - owd, 0.0), next(seq), _EV_APP, "bridge", event),
            )

    endpoints = {"client": client, "bridge": bridge}
    peer = {"client": "bridge", "bridge": "client"}
    # last timer epoch already scheduled, per (endpoint, machine)
    scheduled: dict[tuple[str, str], int] = {}
    observed: list[PacketEvent] = []
    timer_pops = 0

    def sync_timers(name: str) -> None:
        ep = endpoints[name]
        for mname, machine in ep.machines():
            key = (name, mname)
            if machine.pending_expiry is None:
                continue
            if scheduled.get(key) != machine.timer_epoch:
                scheduled[key] = machine.timer_epoch
                heapq.heappush(
                    queue,
                    (machine.pending_expiry, next(seq), _EV_TIMER, name, mname,
                     machine.timer_epoch),
                )

    while queue:
        item = heapq.heappop(queue)
        now, _, kind = item[0], item[1], item[2]
        name = item[3]
        ep = endpoints[name]
        if kind == _EV_APP:
            emissions = endpoint_handle(ep, AppData(item[4]), now, rng)
        elif kind == _EV_ARRIVE:
            emissions = endpoint_handle(ep, LinkPacket(item[4]), now, rng)
        else:
            timer_pops += 1
            if timer_pops > TIMER_EVENT_CAP:
                raise SimulationCapExceeded(
                    f"over {TIMER_EVENT_CAP} timer events; runaway histograms"
                )
            emissions = endpoint_handle(ep, TimerFired(item[4], item[5]), now, rng)
        for packet in emissions:
            if name == "bridge" and packet.kind is not Kind.REAL:
                # bridge padding is observed after crossing the link;
                # real forwards already carry their recorded link time
                packet = PacketEvent(packet.time + owd, packet.direction,
                                     packet.size, packet.kind)
            observed.append(packet)
            arrival = packet.time + (owd if peer[name] == "bridge" else 0.0)
            heapq.heappush(
                queue, (arrival, next(seq), _EV_ARRIVE, peer[name], packet)
            )
        sync_timers(name)

    observed.sort(key=lambda p: p.time)  # stable: insertion order breaks ties
    return Trace(tuple(observed), trace.label)


def simulate_corpus(
    corpus: Corpus,
    hists: HistogramSet,
    link: LinkModel = LinkModel(),
    base_seed: int = 0,
    cell_size: int = 1500,
) -> Corpus:
    """Simulate every trace with per-trace seeds `base_seed XOR index`."""
    padded = []
    for index, trace in enumerate(corpus):
        client = Endpoint.from_histogram_set("client", hists, cell_size)
        bridge = Endpoint.from_histogram_set("bridge", hists, cell_size)
        padded.append(simulate(trace, client, bridge, link, seed=base_seed ^ index))
    meta = dict(corpus.metadata)
    meta["defense"] = "wtfpad"
    meta["base_seed"] = str(base_seed)
    return Corpus(tuple(padded), meta)


def overheads(original: Trace, padded: Trace) -> OverheadReport:
    """Bandwidth and latency cost of a padded trace.

    Bandwidth compares total bytes; latency compares the time of the
    last real packet. Losing a real packet is always a bug and raises.
    """
    if not original.events or not padded.events:
        raise InvalidParams("overheads need non-empty traces")
    for direction in (Direction.OUTGOING, Direction.INCOMING):
        orig_n = len(original.filtered(direction))
        pad_n = sum(
            1 for e in padded.filtered(direction) if e.kind is Kind.REAL
        )
        if pad_n != orig_n:
            raise MissingRealEvents(
                f"{direction.name.lower()}: {orig_n} real packets in, {pad_n} out"
            )
    orig_bytes = original.total_bytes()
    pad_bytes = padded.total_bytes()
    bandwidth = (pad_bytes - orig_bytes) / orig_bytes

    orig_last = original.events[-1].time
    pad_last = max(e.time for e in padded.events if e.kind is Kind.REAL)
    if orig_last > 0:
        latency = (pad_last - orig_last) / orig_last
    else:
        latency = 0.0 if pad_last == orig_last else float("inf")

    dummies = sum(1 for e in padded.events if e.kind is Kind.DUMMY)
    controls = sum(1 for e in padded.events if e.kind is Kind.CONTROL)
    return OverheadReport(bandwidth, latency, dummies, controls)
