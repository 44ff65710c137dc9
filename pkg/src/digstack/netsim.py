"""Constrained-link accounting and a deterministic in-process transport.

Low-rate wireless meshes move 127-byte frames; headers, addressing and
security eat 26 to 41 of those bytes before any application payload.
`FrameBudget` captures that split, `frames_required` turns message
sizes into frame counts, and `SimulatedLink` provides a logical-clock
datagram network the discovery agents can run on without sockets.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .dnscodec import DnsMessage, measure

FRAME_SIZE = 127
MIN_OVERHEAD = 26
MAX_OVERHEAD = 41

# All link addresses are opaque strings; this one fans out to everybody.
MULTICAST = "ff02::all-nodes"


@dataclass(frozen=True)
class FrameBudget:
    """Frame size and per-frame overhead of the radio link.

    The default overhead is the worst case (41 bytes), which leaves 86
    payload bytes per 127-byte frame.
    """

    frame_size: int = FRAME_SIZE
    overhead: int = MAX_OVERHEAD

    def __post_init__(self) -> None:
        if self.frame_size <= 0:
            raise ValueError("frame_size must be positive")
        if not 0 <= self.overhead < self.frame_size:
            raise ValueError("overhead must leave room for payload")

    @property
    def payload_per_frame(self) -> int:
        return self.frame_size - self.overhead


def frames_required(nbytes: int, budget: FrameBudget = FrameBudget()) -> int:
    """Frames needed to move `nbytes` of payload; zero bytes ride for free."""
    if nbytes < 0:
        raise ValueError("negative byte count")
    return math.ceil(nbytes / budget.payload_per_frame)


@dataclass(frozen=True)
class MessageCost:
    label: str
    nbytes: int
    frames: int


@dataclass(frozen=True)
class TransmissionReport:
    messages: tuple[MessageCost, ...]
    budget: FrameBudget

    @property
    def total_bytes(self) -> int:
        return sum(m.nbytes for m in self.messages)

    @property
    def total_frames(self) -> int:
        return sum(m.frames for m in self.messages)

    @property
    def on_air_bytes(self) -> int:
        return self.total_frames * self.budget.frame_size


def simulate_exchange(
    messages: Sequence[DnsMessage | bytes],
    budget: FrameBudget = FrameBudget(),
    labels: Iterable[str] | None = None,
) -> TransmissionReport:
    """Account a message sequence against the frame budget.

    Messages may be pre-encoded bytes or codec messages, which are
    measured in their compressed form.
    """
    names = list(labels) if labels is not None else [f"msg{i}" for i in range(len(messages))]
    if len(names) != len(messages):
        raise ValueError("labels must match messages one to one")
    costs = []
    for name, msg in zip(names, messages):
        nbytes = len(msg) if isinstance(msg, (bytes, bytearray)) else measure(msg)
        costs.append(MessageCost(name, nbytes, frames_required(nbytes, budget)))
    return TransmissionReport(tuple(costs), budget)


@dataclass(frozen=True)
class FrameComparison:
    frames_original: int
    frames_optimized: int
    bytes_saved: int


def compare(
    original: DnsMessage | bytes,
    optimized: DnsMessage | bytes,
    budget: FrameBudget = FrameBudget(),
) -> FrameComparison:
    """Frame counts for the two forms of one exchange, plus bytes saved."""
    size = lambda m: len(m) if isinstance(m, (bytes, bytearray)) else measure(m)
    original_bytes, optimized_bytes = size(original), size(optimized)
    return FrameComparison(
        frames_original=frames_required(original_bytes, budget),
        frames_optimized=frames_required(optimized_bytes, budget),
        bytes_saved=original_bytes - optimized_bytes,
    )


# --- simulated transport --------------------------------------------------------


@dataclass(frozen=True)
class Datagram:
    clock: int
    src: str
    dst: str
    payload: bytes


class LinkEndpoint:
    """One attachment point on a simulated link."""

    def __init__(self, link: SimulatedLink, address: str) -> None:
        self.link = link
        self.address = address
        self.inbox: deque[tuple[bytes, str]] = deque()
        self.multicast_address = MULTICAST

    def send(self, dst: str, payload: bytes) -> None:
        self.link.send(self.address, dst, payload)

    def poll(self, timeout: float | None = None) -> list[tuple[bytes, str]]:
        """Drain everything already delivered.  The timeout is a real-socket
        concern; a simulated link has no waiting to do."""
        drained = list(self.inbox)
        self.inbox.clear()
        return drained


class SimulatedLink:
    """Single-threaded datagram network with a logical clock.

    Delivery is synchronous and in attachment order, so every run is
    deterministic.  Each datagram is logged, which is what the message
    economy checks count.
    """

    def __init__(self, budget: FrameBudget = FrameBudget()) -> None:
        self.budget = budget
        self.clock = 0
        self.log: list[Datagram] = []
        self._endpoints: dict[str, LinkEndpoint] = {}
        self._responders: dict[str, Callable[[bytes, str], None]] = {}

    def attach(self, address: str, responder: Callable[[bytes, str], None] | None = None) -> LinkEndpoint:
        if address in self._endpoints:
            raise ValueError(f"address {address!r} already attached")
        endpoint = LinkEndpoint(self, address)
        self._endpoints[address] = endpoint
        if responder is not None:
            self._responders[address] = responder
        return endpoint

    def detach(self, address: str) -> None:
        self._endpoints.pop(address, None)
        self._responders.pop(address, None)

    def send(self, src: str, dst: str, payload: bytes) -> None:
        self.clock += 1
        self.log.append(Datagram(self.clock, src, dst, payload))
        if dst == MULTICAST:
            targets = [a for a in self._endpoints if a != src]
        else:
            targets = [dst] if dst in self._endpoints else []
        for address in targets:
            self._endpoints[address].inbox.append((payload, src))
            responder = self._responders.get(address)
            if responder is not None:
                self._endpoints[address].inbox.pop()
                responder(payload, src)

    def transmission_report(self) -> TransmissionReport:
        return simulate_exchange(
            [d.payload for d in self.log],
            self.budget,
            labels=[f"{d.src}->{d.dst}" for d in self.log],
        )


def render_report(report: TransmissionReport) -> str:
    """Fixed-width text table for a transmission report."""
    width = max([len(m.label) for m in report.messages] + [7])
    lines = [f"{'message':<{width}}  {'bytes':>5}  {'frames':>6}"]
    for m in report.messages:
        lines.append(f"{m.label:<{width}}  {m.nbytes:>5}  {m.frames:>6}")
    lines.append(f"{'total':<{width}}  {report.total_bytes:>5}  {report.total_frames:>6}")
    return "\n".join(lines)
