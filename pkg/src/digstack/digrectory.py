"""The local directory: registered smart objects, DNS answering, publishing.

A directory owns one domain.  Objects land here by direct registration,
by the mDNS handshake, or from an EPCIS repository, and are answered
over DNS with optimized replies (answer section only, compressed).  The
directory keeps a revision counter so the pointer publisher can ship
deltas to the global lookup service and prune acknowledged tombstones.
"""

from __future__ import annotations

import hashlib
import ipaddress
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

from .digcovery import GeoPoint, PointerSummary
from .dnscodec import (
    DnsMessage,
    DomainName,
    Question,
    ResourceRecord,
    RType,
    SrvData,
    response_for,
)
from .lmdns import InstanceRecords
from .semantics import ServiceMetadata, from_txt, to_txt
from .webapi import EndpointUnreachable, HttpDigcoveryClient


class DirectoryError(Exception):
    pass


class DomainMismatch(DirectoryError):
    pass


class UnknownInstance(DirectoryError):
    pass


class ParseError(DirectoryError):
    """Bad entry in a registration file; carries the 1-based position."""

    def __init__(self, position: int, reason: str) -> None:
        super().__init__(f"entry {position}: {reason}")
        self.position = position
        self.reason = reason


@dataclass
class DirectoryEntry:
    """One smart object as the directory stores it."""

    instance: str
    domain: str
    ptr_paths: tuple[str, ...]
    srv: SrvData
    meta: ServiceMetadata
    addr6: Optional[bytes] = None
    addr4: Optional[bytes] = None
    ttl: int = 604800
    geo: Optional[GeoPoint] = None
    origin: str = "local"
    last_seen: float = 0.0
    revision: int = 0

    def __post_init__(self) -> None:
        if not self.instance:
            raise ValueError("instance must be non-empty")
        if not self.ptr_paths:
            raise ValueError("at least one service path required")
        if not isinstance(self.ptr_paths, tuple):
            self.ptr_paths = tuple(self.ptr_paths)
        if self.ttl <= 0:
            raise ValueError("ttl must be positive")

    @property
    def instance_name(self) -> str:
        return f"{self.instance}.{self.domain}"

    @property
    def hostname(self) -> str:
        return str(self.srv.target)

    def content_key(self) -> tuple:
        """Everything that makes a re-registration an update, not a refresh."""
        return (
            self.instance.lower(),
            self.ptr_paths,
            self.srv,
            tuple(to_txt(self.meta, "single")),
            self.addr6,
            self.addr4,
            self.ttl,
            self.geo,
        )

    def to_dict(self) -> dict:
        return {
            "instance": self.instance,
            "domain": self.domain,
            "ptr_paths": list(self.ptr_paths),
            "hostname": self.hostname,
            "port": self.srv.port,
            "priority": self.srv.priority,
            "capacity": self.srv.capacity,
            "addr6": str(ipaddress.IPv6Address(self.addr6)) if self.addr6 else None,
            "addr4": str(ipaddress.IPv4Address(self.addr4)) if self.addr4 else None,
            "ttl": self.ttl,
            "geo": {"lat": self.geo.lat, "lon": self.geo.lon} if self.geo else None,
            "origin": self.origin,
            "meta": {
                "rt": self.meta.rt,
                "ins": self.meta.ins,
                "lt": self.meta.lt,
                "model": self.meta.model,
                "if": self.meta.if_,
                "verbs": list(self.meta.verbs),
                "extra": dict(self.meta.extra),
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> DirectoryEntry:
        meta_data = data.get("meta", {})
        meta = ServiceMetadata(
            rt=meta_data["rt"],
            ins=int(meta_data.get("ins", 1)),
            lt=int(meta_data.get("lt", 86400)),
            model=meta_data.get("model", ""),
            if_=meta_data.get("if", ""),
            verbs=tuple(meta_data.get("verbs", ())),
            extra=dict(meta_data.get("extra", {})),
        )
        geo = data.get("geo")
        return cls(
            instance=data["instance"],
            domain=data["domain"],
            ptr_paths=tuple(data["ptr_paths"]),
            srv=SrvData(
                priority=int(data.get("priority", 0)),
                capacity=int(data.get("capacity", 0)),
                port=int(data["port"]),
                target=DomainName.from_text(data["hostname"]),
            ),
            meta=meta,
            addr6=ipaddress.IPv6Address(data["addr6"]).packed if data.get("addr6") else None,
            addr4=ipaddress.IPv4Address(data["addr4"]).packed if data.get("addr4") else None,
            ttl=int(data.get("ttl", 604800)),
            geo=GeoPoint(geo["lat"], geo["lon"]) if geo else None,
            origin=data.get("origin", "local"),
        )


def entry_from_instance_records(
    records: InstanceRecords,
    domain: str,
    ptr_paths: Iterable[str],
    geo: Optional[GeoPoint] = None,
) -> DirectoryEntry:
    """Adopt what the mDNS handshake resolved into a directory entry."""
    return DirectoryEntry(
        instance=records.instance.split(".")[0],
        domain=domain,
        ptr_paths=tuple(ptr_paths),
        srv=records.srv,
        meta=records.meta,
        addr6=records.addr6,
        addr4=records.addr4,
        ttl=records.meta.lt,
        geo=geo,
        origin="mdns",
    )


class Digrectory:
    """Registry plus DNS answer logic for one domain."""

    def __init__(
        self,
        domain: str,
        *,
        clock: Callable[[], float] = time.time,
        journal_path: Optional[str] = None,
    ) -> None:
        self.domain = domain
        self.clock = clock
        self._entries: dict[str, DirectoryEntry] = {}
        self._tombstones: list[PointerSummary] = []
        self._revision = 0
        self._journal_path = Path(journal_path) if journal_path else None
        if self._journal_path and self._journal_path.exists():
            self._replay_journal()

    # -- registration --

    def register(self, entry: DirectoryEntry, *, journal: bool = True) -> str:
        """Admit or refresh an entry; returns created/updated/refreshed."""
        if entry.domain.lower() != self.domain.lower():
            raise DomainMismatch(f"{entry.domain!r} registered with the {self.domain!r} directory")
        key = entry.instance.lower()
        stored = self._entries.get(key)
        entry.last_seen = self.clock()
        if stored is not None and stored.content_key() == entry.content_key():
            stored.last_seen = entry.last_seen
            return "refreshed"
        self._revision += 1
        entry.revision = self._revision
        self._entries[key] = entry
        outcome = "updated" if stored is not None else "created"
        if journal:
            self._append_journal({"op": "register", "entry": entry.to_dict()})
        return outcome

    def withdraw(self, instance: str, *, journal: bool = True) -> DirectoryEntry:
        key = instance.lower()
        if key not in self._entries:
            raise UnknownInstance(instance)
        entry = self._entries.pop(key)
        self._revision += 1
        for path in entry.ptr_paths:
            self._tombstones.append(
                PointerSummary(
                    instance=entry.instance,
                    service_path=path,
                    domain=self.domain,
                    rt=entry.meta.rt,
                    geo=entry.geo,
                    revision=self._revision,
                    removed=True,
                )
            )
        if journal:
            self._append_journal({"op": "withdraw", "instance": entry.instance})
        return entry

    def expire_stale(self, now: Optional[float] = None) -> list[DirectoryEntry]:
        """Drop entries not seen within their ttl; tombstones follow."""
        now = self.clock() if now is None else now
        stale = [e.instance for e in self._entries.values() if now - e.last_seen > e.ttl]
        return [self.withdraw(name) for name in stale]

    def get(self, instance: str) -> DirectoryEntry:
        try:
            return self._entries[instance.lower()]
        except KeyError:
            raise UnknownInstance(instance) from None

    def live_entries(self) -> list[DirectoryEntry]:
        return sorted(self._entries.values(), key=lambda e: e.instance.lower())

    @property
    def revision(self) -> int:
        return self._revision

    # -- journal --

    def _append_journal(self, op: dict) -> None:
        if self._journal_path is None:
            return
        with self._journal_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(op) + "\n")

    def _replay_journal(self) -> None:
        with self._journal_path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    op = json.loads(line)
                    if op["op"] == "register":
                        self.register(DirectoryEntry.from_dict(op["entry"]), journal=False)
                    elif op["op"] == "withdraw":
                        self.withdraw(op["instance"], journal=False)
                    else:
                        raise ValueError(f"unknown op {op['op']!r}")
                except (KeyError, TypeError, ValueError) as err:
                    raise ParseError(lineno, str(err)) from None

    # -- pointers --

    def pointer_summaries(self) -> list[PointerSummary]:
        """One live pointer per (instance, service path)."""
        out = []
        for entry in self.live_entries():
            for path in entry.ptr_paths:
                out.append(
                    PointerSummary(
                        instance=entry.instance,
                        service_path=path,
                        domain=self.domain,
                        rt=entry.meta.rt,
                        geo=entry.geo,
                        revision=entry.revision,
                    )
                )
        return out

    def pending_tombstones(self) -> list[PointerSummary]:
        return list(self._tombstones)

    def prune_tombstones(self, up_to_revision: int) -> None:
        self._tombstones = [t for t in self._tombstones if t.revision > up_to_revision]

    # -- DNS answering --

    def _ptr_answers(self, qname: DomainName) -> list[ResourceRecord]:
        answers = []
        for entry in self.live_entries():
            for path in entry.ptr_paths:
                for owner in (path, f"{path}.{self.domain}"):
                    if qname == DomainName.from_text(owner):
                        answers.append(
                            ResourceRecord(
                                qname, RType.PTR, entry.ttl, DomainName.from_text(entry.instance_name)
                            )
                        )
                        break
        return answers

    def _entry_for_name(self, qname: DomainName) -> Optional[DirectoryEntry]:
        for entry in self._entries.values():
            if qname == DomainName.from_text(entry.instance_name) or qname == entry.srv.target:
                return entry
        return None

    def answer(self, query: DnsMessage) -> Optional[DnsMessage]:
        """Optimized reply: answer section only, NXDOMAIN when unknown."""
        if query.header.qr or not query.questions:
            return None
        question = query.questions[0]
        qname, rrtype = question.name, question.rrtype
        answers: list[ResourceRecord] = []
        if rrtype == RType.PTR:
            answers = self._ptr_answers(qname)
        else:
            entry = self._entry_for_name(qname)
            if entry is not None:
                if rrtype == RType.SRV and qname == DomainName.from_text(entry.instance_name):
                    answers = [ResourceRecord(qname, RType.SRV, entry.ttl, entry.srv)]
                elif rrtype == RType.TXT:
                    strings = tuple(s.encode("utf-8") for s in to_txt(entry.meta, "single"))
                    answers = [ResourceRecord(qname, RType.TXT, entry.ttl, strings)]
                elif rrtype == RType.AAAA and entry.addr6:
                    answers = [ResourceRecord(qname, RType.AAAA, entry.ttl, entry.addr6)]
                elif rrtype == RType.A and entry.addr4:
                    answers = [ResourceRecord(qname, RType.A, entry.ttl, entry.addr4)]
        if not answers:
            return response_for(query, [], rcode=3)
        return response_for(query, answers)


def load_entry_file(path: str) -> list[DirectoryEntry]:
    """Registration file: a JSON array of entry objects."""
    raw = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as err:
        raise ParseError(err.lineno, err.msg) from None
    if not isinstance(data, list):
        raise ParseError(1, "expected a JSON array of entries")
    entries = []
    for position, item in enumerate(data, start=1):
        try:
            entries.append(DirectoryEntry.from_dict(item))
        except (KeyError, TypeError, ValueError) as err:
            raise ParseError(position, str(err)) from None
    return entries


class PointerPublisher:
    """Ships pointer deltas to the lookup service, tracking a revision
    watermark so only changes since the last acknowledged publish go out."""

    def __init__(self, directory: Digrectory, client: HttpDigcoveryClient) -> None:
        self.directory = directory
        self.client = client
        self.watermark = 0

    def pending(self) -> list[PointerSummary]:
        fresh = [s for s in self.directory.pointer_summaries() if s.revision > self.watermark]
        tombs = [t for t in self.directory.pending_tombstones() if t.revision > self.watermark]
        return fresh + tombs

    def publish(self) -> int:
        """One delta publish; returns how many pointers the service accepted."""
        goal = self.directory.revision
        batch = self.pending()
        if not batch:
            return 0
        accepted = self.client.publish_pointers(self.directory.domain, batch)
        self.watermark = goal
        self.directory.prune_tombstones(goal)
        return accepted

    def publish_with_retry(self, attempts: int = 3, backoff: float = 0.2) -> int:
        for attempt in range(attempts):
            try:
                return self.publish()
            except EndpointUnreachable:
                if attempt == attempts - 1:
                    raise
                time.sleep(backoff * (2**attempt))
        return 0


# --- EPCIS bridge ------------------------------------------------------------------


EPC_PREFIX = bytes.fromhex("fd00657063730000")


class EpcCollision(DirectoryError):
    pass


@dataclass
class MockEpcis:
    """Stand-in EPCIS repository: tag ids with capture attributes."""

    tags: dict[str, dict] = field(default_factory=dict)

    def capture(self, epc: str, attributes: dict) -> None:
        self.tags[epc] = dict(attributes)

    def decommission(self, epc: str) -> None:
        self.tags.pop(epc, None)


class EpcMapper:
    """Deterministic EPC to IPv6 mapping inside a ULA prefix.

    The interface identifier is the first 8 bytes of the tag id's
    SHA-256, which keeps the mapping stable across restarts; the mapper
    refuses hash collisions so the reverse direction stays unambiguous.
    """

    def __init__(self, prefix: bytes = EPC_PREFIX) -> None:
        if len(prefix) != 8:
            raise ValueError("prefix must be 8 bytes")
        self.prefix = prefix
        self._by_epc: dict[str, bytes] = {}
        self._by_addr: dict[bytes, str] = {}

    def address_for(self, epc: str) -> bytes:
        digest = hashlib.sha256(epc.encode("utf-8")).digest()[:8]
        return self.prefix + digest

    def register(self, epc: str) -> bytes:
        addr = self.address_for(epc)
        owner = self._by_addr.get(addr)
        if owner is not None and owner != epc:
            raise EpcCollision(f"{epc!r} and {owner!r} map to the same address")
        self._by_epc[epc] = addr
        self._by_addr[addr] = epc
        return addr

    def epc_for(self, addr: bytes) -> str:
        try:
            return self._by_addr[addr]
        except KeyError:
            raise KeyError(f"no tag mapped to {addr.hex()}") from None

    def remove(self, epc: str) -> None:
        addr = self._by_epc.pop(epc, None)
        if addr is not None:
            del self._by_addr[addr]

    def __len__(self) -> int:
        return len(self._by_epc)


def metadata_from_attributes(attributes: dict) -> ServiceMetadata:
    """EPCIS capture attributes to service metadata, core keys split out."""
    known = {"rt", "ins", "lt", "model", "if", "verbs"}
    extra = {
        k: str(v)
        for k, v in attributes.items()
        if k not in known and k not in ("instance", "service_path", "port", "hostname")
    }
    return ServiceMetadata(
        rt=attributes["rt"],
        ins=int(attributes.get("ins", 1)),
        lt=int(attributes.get("lt", 86400)),
        model=str(attributes.get("model", "")),
        if_=str(attributes.get("if", "")),
        verbs=tuple(attributes.get("verbs", ())),
        extra=extra,
    )


def _epc_instance(epc: str, attributes: dict) -> str:
    if "instance" in attributes:
        return str(attributes["instance"])
    tail = epc.split(":")[-1]
    return "tag_" + tail.replace(".", "_")


@dataclass
class ResolvedTag:
    instance_name: str
    addr6: str
    port: int
    meta: ServiceMetadata


class EpcisDriver:
    """Keeps a directory in step with an EPCIS repository and resolves
    tags through either the object API or the DNS path."""

    def __init__(self, epcis: MockEpcis, directory: Digrectory, mapper: Optional[EpcMapper] = None) -> None:
        self.epcis = epcis
        self.directory = directory
        self.mapper = mapper or EpcMapper()

    def sync(self) -> int:
        """Register every captured tag; returns how many changed the directory."""
        changed = 0
        for epc, attributes in sorted(self.epcis.tags.items()):
            instance = _epc_instance(epc, attributes)
            addr6 = self.mapper.register(epc)
            meta = metadata_from_attributes(attributes)
            entry = DirectoryEntry(
                instance=instance,
                domain=self.directory.domain,
                ptr_paths=(str(attributes.get("service_path", "_epc._sub._coap._udp")),),
                srv=SrvData(
                    priority=0,
                    capacity=0,
                    port=int(attributes.get("port", 5683)),
                    target=DomainName.from_text(
                        str(attributes.get("hostname", f"{instance}.{self.directory.domain}"))
                    ),
                ),
                meta=meta,
                addr6=addr6,
                ttl=meta.lt,
                origin="epcis",
            )
            if self.directory.register(entry, journal=False) != "refreshed":
                changed += 1
        return changed

    def expire_tag(self, epc: str) -> None:
        attributes = self.epcis.tags.get(epc, {})
        instance = _epc_instance(epc, attributes)
        self.epcis.decommission(epc)
        self.directory.withdraw(instance, journal=False)
        self.mapper.remove(epc)

    # -- resolution, two ways --

    def resolve(self, epc: str, via: str = "api") -> ResolvedTag:
        if via == "api":
            return self._resolve_api(epc)
        if via == "dns":
            return self._resolve_dns(epc)
        raise ValueError(f"unknown resolution path {via!r}")

    def _resolve_api(self, epc: str) -> ResolvedTag:
        attributes = self.epcis.tags.get(epc)
        if attributes is None:
            raise UnknownInstance(epc)
        entry = self.directory.get(_epc_instance(epc, attributes))
        return ResolvedTag(
            instance_name=entry.instance_name,
            addr6=str(ipaddress.IPv6Address(entry.addr6)),
            port=entry.srv.port,
            meta=entry.meta,
        )

    def _resolve_dns(self, epc: str) -> ResolvedTag:
        attributes = self.epcis.tags.get(epc)
        if attributes is None:
            raise UnknownInstance(epc)
        instance = _epc_instance(epc, attributes)
        name = DomainName.from_text(f"{instance}.{self.directory.domain}")

        def ask(rrtype: RType, owner: DomainName) -> ResourceRecord:
            query = DnsMessage(questions=(Question(owner, rrtype),))
            reply = self.directory.answer(query)
            if reply is None or reply.header.rcode != 0 or not reply.answers:
                raise UnknownInstance(f"{epc}: no {rrtype.name} answer")
            return reply.answers[0]

        srv = ask(RType.SRV, name).rdata
        txt = ask(RType.TXT, name).rdata
        aaaa = ask(RType.AAAA, srv.target).rdata
        return ResolvedTag(
            instance_name=str(name),
            addr6=str(ipaddress.IPv6Address(aaaa)),
            port=srv.port,
            meta=from_txt([chunk.decode("utf-8") for chunk in txt]),
        )
