"""Adaptive padding state machines, defense endpoints and control cells.

Each endpoint (client and bridge) runs two identical three-state
machines: a send machine triggered by application data pushed toward
the peer, and a receive machine triggered by packets arriving from the
peer. A machine idles (IDLE) until its trigger fires, then races a
sampled burst-mode delay against the next trigger (BURST); when the
delay expires it emits a dummy and streams a fake burst from the
gap-mode histogram (GAP) until the infinity bins stop it.

Real application data is always forwarded immediately: padding only
ever adds packets, never delays them.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (
    ClockRegression,
    InvalidParams,
    InvalidTransition,
    MalformedControl,
    PayloadTooLarge,
)
from .histograms import INFINITY, HistogramSet, TokenHistogram
from .traces import Direction, Kind, PacketEvent

DEFAULT_CELL_SIZE = 1500


class Mode(Enum):
    IDLE = "S"
    BURST = "B"
    GAP = "G"


class MachineEvent(Enum):
    PUSH_REAL = "push-real"
    RECEIVE = "receive"
    TIMEOUT = "timeout-expired"
    START_OF_TRANSMISSION = "start-of-transmission"
    END_OF_SESSION = "end-of-session"


# --- machine actions ---

@dataclass(frozen=True)
class SendReal:
    """Forward the pending application packet right now."""


@dataclass(frozen=True)
class SendDummy:
    """Emit one padding cell toward the peer."""


@dataclass(frozen=True)
class SetTimer:
    delay: float


@dataclass(frozen=True)
class CancelTimer:
    """Discard the pending timeout (it was preempted by real traffic)."""


MachineAction = SendReal | SendDummy | SetTimer | CancelTimer


class PaddingMachine:
    """One adaptive-padding state machine with its two histograms.

    `is_send` selects the trigger event: push-real for send machines,
    receive for receive machines. Only send machines forward packets.
    """

    __slots__ = (
        "mode",
        "burst_hist",
        "gap_hist",
        "is_send",
        "pending_expiry",
        "sampled_delay",
        "timer_set_at",
        "timer_epoch",
    )

    def __init__(
        self, burst_hist: TokenHistogram, gap_hist: TokenHistogram, is_send: bool
    ) -> None:
        self.mode = Mode.IDLE
        self.burst_hist = burst_hist
        self.gap_hist = gap_hist
        self.is_send = is_send
        self.pending_expiry: float | None = None
        self.sampled_delay: float | None = None
        self.timer_set_at: float | None = None
        self.timer_epoch = 0

    @property
    def trigger(self) -> MachineEvent:
        return MachineEvent.PUSH_REAL if self.is_send else MachineEvent.RECEIVE

    def _set_timer(self, delay: float, now: float, actions: list[MachineAction]) -> None:
        self.sampled_delay = delay
        self.timer_set_at = now
        self.pending_expiry = now + delay
        self.timer_epoch += 1
        actions.append(SetTimer(delay))

    def _clear_timer(self) -> None:
        self.sampled_delay = None
        self.timer_set_at = None
        self.pending_expiry = None
        self.timer_epoch += 1


def _sample_burst_mode(m: PaddingMachine, now: float, rng: np.random.Generator,
                       actions: list[MachineAction]) -> None:
    """Draw from the burst histogram: finite arms a timer (BURST),
    infinity consumes its token and settles the machine in IDLE."""
    if m.burst_hist.total_tokens == 0:
        m.burst_hist.refill()
    delay = m.burst_hist.sample_delay(rng)
    if delay == INFINITY:
        m.burst_hist.consume_token(INFINITY)
        m.mode = Mode.IDLE
    else:
        m.mode = Mode.BURST
        m._set_timer(delay, now, actions)


def _sample_gap_mode(m: PaddingMachine, now: float, rng: np.random.Generator,
                     actions: list[MachineAction]) -> None:
    """Draw from the gap histogram: finite keeps the fake burst going
    (GAP), infinity ends it and falls back to a burst-mode draw."""
    if m.gap_hist.total_tokens == 0:
        m.gap_hist.refill()
    delay = m.gap_hist.sample_delay(rng)
    if delay == INFINITY:
        m.gap_hist.consume_token(INFINITY)
        _sample_burst_mode(m, now, rng, actions)
    else:
        m.mode = Mode.GAP
        m._set_timer(delay, now, actions)


def step(
    m: PaddingMachine,
    event: MachineEvent,
    now: float,
    rng: np.random.Generator,
) -> list[MachineAction]:
    """Advance one machine by one event; returns the actions to perform.

    Trigger events forward data (send machines) with zero delay and
    restart the burst-mode race, correcting token accounting when they
    preempt a pending timeout. Timeouts emit one dummy each and walk the
    burst/gap sampling chain; two consecutive infinity draws (gap then
    burst) put the machine back to IDLE, which is the soft stop.
    """
    actions: list[MachineAction] = []
    trig = m.trigger
    if event is MachineEvent.START_OF_TRANSMISSION and not m.is_send:
        event = MachineEvent.RECEIVE  # the start flag is a receive trigger

    if event is trig:
        if m.is_send:
            actions.append(SendReal())
        if m.mode is Mode.IDLE:
            _sample_burst_mode(m, now, rng, actions)
        elif m.mode is Mode.BURST:
            elapsed = now - m.timer_set_at
            m.burst_hist.return_token(m.sampled_delay, elapsed)
            m._clear_timer()
            actions.append(CancelTimer())
            _sample_burst_mode(m, now, rng, actions)
        else:  # GAP: a real packet ends the fake burst, back to burst mode
            elapsed = now - m.timer_set_at
            m.gap_hist.return_token(m.sampled_delay, elapsed)
            m._clear_timer()
            actions.append(CancelTimer())
            _sample_burst_mode(m, now, rng, actions)
        return actions

    if event is MachineEvent.TIMEOUT:
        if m.mode is Mode.IDLE or m.pending_expiry is None:
            raise InvalidTransition("timeout with no pending timer")
        expired = m.sampled_delay
        m._clear_timer()
        if m.mode is Mode.BURST:
            m.burst_hist.consume_token(expired)
            actions.append(SendDummy())
            _sample_gap_mode(m, now, rng, actions)
        else:  # GAP
            m.gap_hist.consume_token(expired)
            actions.append(SendDummy())
            _sample_gap_mode(m, now, rng, actions)
        return actions

    if event is MachineEvent.END_OF_SESSION:
        return actions  # padding winds down by itself (soft stop)

    raise InvalidTransition(f"{event.value} is not valid for this machine")


# --- endpoint events ---

@dataclass(frozen=True)
class AppData:
    """Application data ready to cross the link (drives the send machine)."""

    packet: PacketEvent


@dataclass(frozen=True)
class LinkPacket:
    """A packet arriving from the peer (drives the receive machine)."""

    packet: PacketEvent


@dataclass(frozen=True)
class TimerFired:
    machine: str  # "send" | "recv"
    epoch: int


EndpointEvent = AppData | LinkPacket | TimerFired

ROLE_CLIENT = "client"
ROLE_BRIDGE = "bridge"


class Endpoint:
    """One side of the defended link: two machines plus padding counters."""

    __slots__ = (
        "role",
        "send",
        "recv",
        "cell_size",
        "padding_sent",
        "padding_received",
        "start_sent",
        "last_now",
    )

    def __init__(
        self,
        role: str,
        send: PaddingMachine,
        recv: PaddingMachine,
        cell_size: int = DEFAULT_CELL_SIZE,
    ) -> None:
        if role not in (ROLE_CLIENT, ROLE_BRIDGE):
            raise InvalidParams(f"unknown endpoint role {role!r}")
        self.role = role
        self.send = send
        self.recv = recv
        self.cell_size = cell_size
        self.padding_sent = 0
        self.padding_received = 0
        self.start_sent = False
        self.last_now = -INFINITY

    @classmethod
    def from_histogram_set(
        cls, role: str, hists: HistogramSet, cell_size: int = DEFAULT_CELL_SIZE
    ) -> "Endpoint":
        """Build an endpoint with private copies of the configured histograms.

        The bridge's machines swap the direction pairs: its send machine
        emits incoming-direction traffic.
        """
        h = hists.copy()
        if role == ROLE_CLIENT:
            send = PaddingMachine(h.outgoing_burst, h.outgoing_gap, is_send=True)
            recv = PaddingMachine(h.incoming_burst, h.incoming_gap, is_send=False)
        else:
            send = PaddingMachine(h.incoming_burst, h.incoming_gap, is_send=True)
            recv = PaddingMachine(h.outgoing_burst, h.outgoing_gap, is_send=False)
        return cls(role, send, recv, cell_size)

    @property
    def outgoing_direction(self) -> Direction:
        return Direction.OUTGOING if self.role == ROLE_CLIENT else Direction.INCOMING

    def machines(self) -> list[tuple[str, PaddingMachine]]:
        return [("send", self.send), ("recv", self.recv)]

    def is_quiescent(self) -> bool:
        return all(
            m.mode is Mode.IDLE and m.pending_expiry is None
            for _, m in self.machines()
        )


def endpoint_handle(
    ep: Endpoint, event: EndpointEvent, now: float, rng: np.random.Generator
) -> list[PacketEvent]:
    """Apply one event to an endpoint and return the packets it emits.

    Application data passes through at its own timestamp. Every arriving
    packet, dummies and control cells included, counts as a receive
    trigger; distinguishing them would leak exactly the structure the
    receive machine is meant to conceal. The client flags the start of a
    transmission with a control cell the first time its send machine
    wakes up.
    """
    if now < ep.last_now:
        raise ClockRegression(f"event at {now} after {ep.last_now}")
    ep.last_now = now

    emissions: list[PacketEvent] = []

    def run(machine: PaddingMachine, mevent: MachineEvent, real: PacketEvent | None) -> None:
        was_idle = ep.send.mode is Mode.IDLE
        actions = step(machine, mevent, now, rng)
        if (
            machine is ep.send
            and ep.role == ROLE_CLIENT
            and was_idle
            and ep.send.mode is not Mode.IDLE
            and not ep.start_sent
        ):
            # flag the bridge before the first request leaves uncovered
            ep.start_sent = True
            emissions.append(
                PacketEvent(now, Direction.OUTGOING, ep.cell_size, Kind.CONTROL)
            )
        for action in actions:
            if isinstance(action, SendReal):
                assert real is not None
                emissions.append(real)
            elif isinstance(action, SendDummy):
                ep.padding_sent += 1
                emissions.append(
                    PacketEvent(now, ep.outgoing_direction, ep.cell_size, Kind.DUMMY)
                )

    if isinstance(event, AppData):
        run(ep.send, MachineEvent.PUSH_REAL, event.packet)
    elif isinstance(event, LinkPacket):
        if event.packet.kind is Kind.DUMMY:
            ep.padding_received += 1
        run(ep.recv, MachineEvent.RECEIVE, None)
    elif isinstance(event, TimerFired):
        machine = ep.send if event.machine == "send" else ep.recv
        if event.epoch != machine.timer_epoch or machine.pending_expiry is None:
            return []  # superseded timer
        run(machine, MachineEvent.TIMEOUT, None)
    else:
        raise InvalidParams(f"unknown endpoint event {event!r}")
    return emissions


# --- control cells ---

CONTROL_SET_HISTOGRAMS = 0x01
CONTROL_START = 0x02


@dataclass(frozen=True)
class StartOfTransmission:
    """Tells the bridge a new page load begins; start padding."""


@dataclass
class SetHistograms:
    """Ships the four histograms the bridge must pad with."""

    histograms: HistogramSet


ControlPayload = StartOfTransmission | SetHistograms


def encode_control(payload: ControlPayload, cell_size: int = DEFAULT_CELL_SIZE) -> bytes:
    """Serialize a control payload into one zero-padded cell."""
    if isinstance(payload, StartOfTransmission):
        body = bytes([CONTROL_START])
    elif isinstance(payload, SetHistograms):
        parts = [bytes([CONTROL_SET_HISTOGRAMS, 4])]
        for _, h in payload.histograms.roles():
            parts.append(struct.pack(">Id", h.n_bins, h.max_iat))
            parts.append(struct.pack(f">{h.n_bins}I", *h.tokens))
        body = b"".join(parts)
    else:
        raise InvalidParams(f"unknown control payload {payload!r}")
    if len(body) > cell_size:
        raise PayloadTooLarge(f"{len(body)} bytes exceed the {cell_size}-byte cell")
    return body + b"\x00" * (cell_size - len(body))


def decode_control(data: bytes) -> ControlPayload:
    """Parse a control cell; the wire carries token counts only, so the
    decoded histograms use them as their refill snapshot."""
    if not data:
        raise MalformedControl("empty control cell")
    kind = data[0]
    if kind == CONTROL_START:
        if any(b != 0 for b in data[1:]):
            raise MalformedControl("non-zero padding after payload")
        return StartOfTransmission()
    if kind != CONTROL_SET_HISTOGRAMS:
        raise MalformedControl(f"unknown control type 0x{kind:02x}")
    if len(data) < 2 or data[1] != 4:
        raise MalformedControl("set-histograms must carry exactly 4 histograms")
    offset = 2
    hists = []
    try:
        for _ in range(4):
            n, max_iat = struct.unpack_from(">Id", data, offset)
            offset += struct.calcsize(">Id")
            tokens = struct.unpack_from(f">{n}I", data, offset)
            offset += 4 * n
            hists.append(TokenHistogram(n, max_iat, list(tokens)))
    except (struct.error, InvalidParams) as exc:
        raise MalformedControl(str(exc)) from exc
    if any(b != 0 for b in data[offset:]):
        raise MalformedControl("non-zero padding after payload")
    return SetHistograms(HistogramSet(*hists))
