"""Lightweight mDNS: how smart objects announce themselves and how a
directory learns about them without flooding a constrained link.

The economy rules: answers never carry authority/additional sections,
metadata travels as one joined TXT record, and a directory that already
knows an instance stops after the PTR round instead of re-resolving
SRV/TXT/AAAA.  Old registrations are kept alive by periodic re-probing
instead of letting them linger.
"""

from __future__ import annotations

import itertools
import socket
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Protocol

from .dnscodec import (
    CodecError,
    DnsHeader,
    DnsMessage,
    DomainName,
    Question,
    ResourceRecord,
    RType,
    SrvData,
    decode,
    encode,
    response_for,
)
from .semantics import ServiceMetadata, from_txt, to_txt

MDNS_GROUP = "224.0.0.251"
MDNS_PORT = 5353

_query_ids = itertools.count(0x1000)


class LmdnsError(Exception):
    pass


class HandshakeTimeout(LmdnsError):
    """A registration handshake that never completed; lists what is missing."""

    def __init__(self, instance: str, missing: list[str]) -> None:
        super().__init__(f"no {'/'.join(missing)} answer from {instance}")
        self.instance = instance
        self.missing = missing


class Transport(Protocol):
    """What probe/handshake need from a transport; both the simulated
    link endpoint and the UDP transport satisfy it."""

    multicast_address: object

    def send(self, dst, payload: bytes) -> None: ...

    def poll(self, timeout: float | None = None) -> list[tuple[bytes, object]]: ...


@dataclass
class SmartObjectProfile:
    """Everything one smart object announces.

    `instance` is a single label; `service_path` and `aliases` are the
    subtype paths it answers PTR queries for; `hostname` is the SRV
    target (defaults to instance.domain).
    """

    instance: str
    service_path: str
    meta: ServiceMetadata
    port: int
    addr6: bytes
    domain: str = "local"
    hostname: str | None = None
    aliases: list[str] = field(default_factory=list)
    addr4: bytes | None = None
    ttl: int = 604800
    priority: int = 0
    capacity: int = 0

    def __post_init__(self) -> None:
        if "." in self.instance:
            raise ValueError("instance must be a single label")
        if len(self.addr6) != 16:
            raise ValueError("addr6 must be 16 bytes")
        if self.addr4 is not None and len(self.addr4) != 4:
            raise ValueError("addr4 must be 4 bytes")

    @property
    def instance_name(self) -> DomainName:
        return DomainName.from_text(f"{self.instance}.{self.domain}")

    @property
    def host_name(self) -> DomainName:
        if self.hostname:
            return DomainName.from_text(self.hostname)
        return self.instance_name

    def ptr_owner_names(self) -> list[DomainName]:
        """Names this object answers PTR queries on: each subtype path,
        bare and under the domain."""
        names = []
        for path in [self.service_path, *self.aliases]:
            names.append(DomainName.from_text(path))
            names.append(DomainName.from_text(f"{path}.{self.domain}"))
        return names

    def srv_data(self) -> SrvData:
        return SrvData(self.priority, self.capacity, self.port, self.host_name)


def answer_query(profile: SmartObjectProfile, query: DnsMessage) -> DnsMessage | None:
    """The agent's answer to one query, or None for silence.

    Replies carry no authority/additional records, and TXT data is the
    single joined string.  A records are served only when the profile
    carries an IPv4 address.
    """
    if query.header.qr:
        return None
    answers: list[ResourceRecord] = []
    instance_name = profile.instance_name
    host_name = profile.host_name
    for q in query.questions:
        if q.rrtype == RType.PTR and q.name in profile.ptr_owner_names():
            answers.append(ResourceRecord(q.name, RType.PTR, profile.ttl, instance_name))
        elif q.rrtype == RType.SRV and q.name == instance_name:
            answers.append(ResourceRecord(q.name, RType.SRV, profile.ttl, profile.srv_data()))
        elif q.rrtype == RType.TXT and q.name in (instance_name, host_name):
            joined = to_txt(profile.meta, "single")[0].encode("utf-8")
            answers.append(ResourceRecord(q.name, RType.TXT, profile.ttl, (joined,)))
        elif q.rrtype == RType.AAAA and q.name in (instance_name, host_name):
            answers.append(ResourceRecord(q.name, RType.AAAA, profile.ttl, profile.addr6))
        elif q.rrtype == RType.A and q.name in (instance_name, host_name) and profile.addr4 is not None:
            answers.append(ResourceRecord(q.name, RType.A, profile.ttl, profile.addr4))
    if not answers:
        return None
    return response_for(query, answers)


class SmartObjectAgent:
    """Binds a profile to a simulated link and answers queries in place."""

    def __init__(self, profile: SmartObjectProfile, link, address: str | None = None) -> None:
        self.profile = profile
        self.endpoint = link.attach(address or f"obj:{profile.instance}", responder=self._handle)

    def _handle(self, payload: bytes, src) -> None:
        try:
            query = decode(payload)
        except CodecError:
            return
        reply = answer_query(self.profile, query)
        if reply is not None:
            self.endpoint.send(src, encode(reply))


def serve_udp(profile: SmartObjectProfile, transport: Transport, should_stop: Callable[[], bool]) -> None:
    """Blocking answer loop for real-socket deployments."""
    while not should_stop():
        for payload, src in transport.poll(0.1):
            try:
                query = decode(payload)
            except CodecError:
                continue
            reply = answer_query(profile, query)
            if reply is not None:
                transport.send(src, encode(reply))


@dataclass(frozen=True)
class ProbeResult:
    instance: str
    responder: object


def ptr_question(service_path: str, msg_id: int | None = None) -> DnsMessage:
    qid = next(_query_ids) & 0xFFFF if msg_id is None else msg_id
    return DnsMessage(
        header=DnsHeader(id=qid),
        questions=(Question(DomainName.from_text(service_path), RType.PTR),),
    )


def probe(transport: Transport, service_path: str, window: float = 1.0) -> list[ProbeResult]:
    """Multicast one PTR question and collect the instances that answer.

    Duplicate announcements for the same instance are collapsed onto the
    first responder seen.
    """
    query = ptr_question(service_path)
    transport.send(transport.multicast_address, encode(query))
    found: dict[str, ProbeResult] = {}
    deadline = time.monotonic() + window
    while True:
        remaining = deadline - time.monotonic()
        batch = transport.poll(max(0.0, remaining))
        if not batch:
            break
        for payload, src in batch:
            try:
                reply = decode(payload)
            except CodecError:
                continue
            if not reply.header.qr or reply.header.id != query.header.id:
                continue
            for rr in reply.answers:
                if rr.rrtype == RType.PTR:
                    instance = str(rr.rdata).lower()
                    found.setdefault(instance, ProbeResult(instance, src))
        if remaining <= 0:
            break
    return list(found.values())


@dataclass(frozen=True)
class InstanceRecords:
    """What a completed registration handshake yields."""

    instance: str
    srv: SrvData
    meta: ServiceMetadata
    addr6: bytes
    addr4: bytes | None = None


def _ask(transport: Transport, responder, name: DomainName, rrtype: int, window: float) -> ResourceRecord | None:
    query = DnsMessage(header=DnsHeader(id=next(_query_ids) & 0xFFFF), questions=(Question(name, rrtype),))
    transport.send(responder, encode(query))
    deadline = time.monotonic() + window
    while True:
        remaining = deadline - time.monotonic()
        batch = transport.poll(max(0.0, remaining))
        if not batch:
            return None
        for payload, _src in batch:
            try:
                reply = decode(payload)
            except CodecError:
                continue
            if reply.header.qr and reply.header.id == query.header.id:
                for rr in reply.answers:
                    if rr.rrtype == rrtype:
                        return rr
        if remaining <= 0:
            return None


def registration_handshake(
    known: Iterable[str],
    discovered: ProbeResult,
    transport: Transport,
    *,
    window: float = 1.0,
    want_a: bool = False,
) -> InstanceRecords | None:
    """Resolve a probed instance, or skip it entirely when already known.

    A known instance costs zero messages.  A new one costs exactly one
    SRV, one TXT and one AAAA exchange (plus A when asked for).
    """
    instance = discovered.instance.lower()
    if instance in {k.lower() for k in known}:
        return None
    name = DomainName.from_text(instance)
    srv_rr = _ask(transport, discovered.responder, name, RType.SRV, window)
    txt_rr = _ask(transport, discovered.responder, name, RType.TXT, window)
    aaaa_owner = srv_rr.rdata.target if srv_rr is not None else name
    aaaa_rr = _ask(transport, discovered.responder, aaaa_owner, RType.AAAA, window)
    a_rr = _ask(transport, discovered.responder, aaaa_owner, RType.A, window) if want_a else None
    missing = [label for label, rr in (("SRV", srv_rr), ("TXT", txt_rr), ("AAAA", aaaa_rr)) if rr is None]
    if want_a and a_rr is None:
        missing.append("A")
    if missing:
        raise HandshakeTimeout(instance, missing)
    meta = from_txt([chunk.decode("utf-8") for chunk in txt_rr.rdata])
    return InstanceRecords(
        instance=instance,
        srv=srv_rr.rdata,
        meta=meta,
        addr6=aaaa_rr.rdata,
        addr4=a_rr.rdata if a_rr is not None else None,
    )


def select_responder(records: Iterable[InstanceRecords]) -> InstanceRecords:
    """Pick among equivalent services: lowest priority wins, then the
    highest announced capacity, then the lexicographically first name."""
    candidates = list(records)
    if not candidates:
        raise ValueError("no candidates")
    return min(candidates, key=lambda r: (r.srv.priority, -r.srv.capacity, r.instance))


class RefreshOutcome(Enum):
    KEEP = "keep"
    REFRESHED = "refreshed"
    EXPIRED = "expired"


@dataclass(frozen=True)
class RefreshPolicy:
    """When to re-probe a registration and when to let it die."""

    refresh_interval: float
    max_missed: int = 3

    def __post_init__(self) -> None:
        if self.refresh_interval <= 0:
            raise ValueError("refresh_interval must be positive")
        if self.max_missed < 1:
            raise ValueError("max_missed must be at least 1")

    @classmethod
    def from_lifetime(cls, lt: float) -> RefreshPolicy:
        """Default policy: re-probe at a quarter of the lifetime."""
        return cls(refresh_interval=lt / 4, max_missed=3)


@dataclass
class RefreshState:
    missed: int = 0


def refresh(
    age: float,
    policy: RefreshPolicy,
    probe_alive: Callable[[], bool],
    state: RefreshState | None = None,
) -> RefreshOutcome:
    """One refresh decision for a registration of the given age.

    Below the interval nothing happens.  Past it, one probe runs: an
    answer refreshes the entry, silence counts toward `max_missed`
    consecutive misses, after which the entry expires.
    """
    if age < policy.refresh_interval:
        return RefreshOutcome.KEEP
    if state is None:
        state = RefreshState()
    if probe_alive():
        state.missed = 0
        return RefreshOutcome.REFRESHED
    state.missed += 1
    if state.missed >= policy.max_missed:
        return RefreshOutcome.EXPIRED
    return RefreshOutcome.KEEP


class UdpTransport:
    """Datagram transport over real sockets with the probe/poll contract.

    Multicast membership is optional so the same class serves plain
    loopback tests and actual mDNS segments.
    """

    def __init__(
        self,
        bind: tuple[str, int] = ("0.0.0.0", 0),
        *,
        multicast_group: tuple[str, int] = (MDNS_GROUP, MDNS_PORT),
        join_multicast: bool = False,
    ) -> None:
        self.multicast_address = multicast_group
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind(bind)
        if join_multicast:
            membership = socket.inet_aton(multicast_group[0]) + socket.inet_aton("0.0.0.0")
            self._sock.setsockopt(socket.IPPROTO_IP, socket.IP_ADD_MEMBERSHIP, membership)
        self.address = self._sock.getsockname()

    def send(self, dst, payload: bytes) -> None:
        self._sock.sendto(payload, tuple(dst))

    def poll(self, timeout: float | None = None) -> list[tuple[bytes, object]]:
        batch: list[tuple[bytes, object]] = []
        self._sock.settimeout(timeout if timeout and timeout > 0 else 0.001)
        try:
            payload, src = self._sock.recvfrom(4096)
            batch.append((payload, src))
        except (socket.timeout, BlockingIOError):
            return batch
        # Drain whatever else is already queued without waiting again.
        self._sock.settimeout(0.001)
        while True:
            try:
                payload, src = self._sock.recvfrom(4096)
                batch.append((payload, src))
            except (socket.timeout, BlockingIOError):
                break
        return batch

    def close(self) -> None:
        self._sock.close()
