#!/usr/bin/env python3
"""End-to-end loopback demo: two local directories publish into the global
lookup service, a client discovers domains by service pattern, then resolves
one instance down to host, port, address, and metadata over plain DNS.

Everything runs in this process on 127.0.0.1; no hardware or network needed.

    python scripts/run_demo.py
"""
from __future__ import annotations

import ipaddress
import random
import socket
import time

from digstack import fixtures, netsim
from digstack.digcovery import Digcovery, DomainRecord, GeoPoint
from digstack.digrectory import DirectoryEntry, Digrectory, PointerPublisher
from digstack.dnscodec import (
    CodecError,
    DnsHeader,
    DnsMessage,
    DomainName,
    Question,
    RType,
    SrvData,
    decode,
    encode,
)
from digstack.dnsserver import UdpDnsServer
from digstack.semantics import ServiceMetadata, from_txt
from digstack.webapi import DigcoveryHttpServer, HttpDigcoveryClient, dns_front_answer


def dns_ask(addr: tuple[str, int], name: str, rrtype: RType) -> DnsMessage | None:
    """One UDP question against a directory endpoint; None on timeout."""
    qid = random.randrange(0x10000)
    query = DnsMessage(
        header=DnsHeader(id=qid, rd=1),
        questions=(Question(DomainName.from_text(name), rrtype),),
    )
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as sock:
        sock.settimeout(2.0)
        sock.sendto(encode(query), addr)
        deadline = time.monotonic() + 2.0
        while time.monotonic() < deadline:
            try:
                data = sock.recvfrom(65535)[0]
            except socket.timeout:
                return None
            try:
                reply = decode(data)
            except CodecError:
                continue
            if reply.header.id == qid and reply.header.qr:
                return reply
    return None


def greenhouse_entries(domain: str) -> list[DirectoryEntry]:
    """A second campus: one thermostat and one CO2 sensor."""
    thermo = DirectoryEntry(
        instance="thermo_house",
        domain=domain,
        ptr_paths=("_thermo._sub._coap._udp", "_coap._udp"),
        srv=SrvData(0, 0, 5683, DomainName.from_text(f"node1.{domain}")),
        meta=ServiceMetadata(rt="temperature", model="t300", if_="core.s", verbs=["status"]),
        addr6=ipaddress.IPv6Address("2001:db8:77::10").packed,
        geo=GeoPoint(38.004, -1.168),
    )
    co2 = DirectoryEntry(
        instance="co2_house",
        domain=domain,
        ptr_paths=("_gas._sub._coap._udp", "_coap._udp"),
        srv=SrvData(0, 0, 5684, DomainName.from_text(f"node2.{domain}")),
        meta=ServiceMetadata(rt="co2", model="g90", if_="core.s", verbs=["status"]),
        addr6=ipaddress.IPv6Address("2001:db8:77::11").packed,
        geo=GeoPoint(38.0041, -1.1682),
    )
    return [thermo, co2]


def main() -> None:
    # --- global tier: lookup service with an HTTP API and a DNS front ------
    core = Digcovery()
    api = DigcoveryHttpServer(core, "127.0.0.1", 0)
    api.start()
    front = UdpDnsServer(lambda msg: dns_front_answer(core, msg), "127.0.0.1", 0)
    front.start()
    print(f"lookup service   http {api.url}   dns udp {front.address[0]}:{front.address[1]}")

    # --- local tier: two directories, each behind its own DNS endpoint -----
    lab = Digrectory("rd.esiot.com")
    lab.register(fixtures.light_lab_entry())
    house = Digrectory("rd.greenhouse.example")
    for entry in greenhouse_entries("rd.greenhouse.example"):
        house.register(entry)

    servers: list[UdpDnsServer] = []
    client = HttpDigcoveryClient(api.url)
    try:
        for directory in (lab, house):
            server = UdpDnsServer(directory.answer, "127.0.0.1", 0)
            server.start()
            servers.append(server)
            client.register_domain(
                DomainRecord(directory.domain, server.address[0], server.address[1])
            )
            shipped = PointerPublisher(directory, client).publish()
            print(
                f"directory        {directory.domain:<24} dns udp "
                f"{server.address[0]}:{server.address[1]}   published {shipped} pointers"
            )

        # --- discovery: pattern over HTTP, then the same over plain DNS ----
        print()
        for pattern in ("*.*", "_lamp.*", "_gas.*"):
            domains = [hit["domain"] for hit in client.discover(pattern)]
            print(f"discover {pattern:<12} -> {', '.join(domains) or '(nothing)'}")
        reply = dns_ask(front.address, "_lamp.*", RType.PTR)
        ptr_domains = sorted(str(rr.rdata) for rr in reply.answers)
        print(f"dns ptr  _lamp.*      -> {', '.join(ptr_domains)}")

        # --- structured query: everything readable in one domain -----------
        hits = client.query({"term": {"domain": "rd.greenhouse.example"}})
        names = sorted({hit["instance"] for hit in hits["results"]})
        print(f"query    by domain    -> {', '.join(names)}")

        # --- resolution: walk one instance down to the wire -----------------
        print()
        hit = client.query({"wildcard": "_lamp.*"})["results"][0]
        endpoint = next(d for d in client.discover("_lamp.*") if d["domain"] == hit["domain"])
        addr = (endpoint["host"], endpoint["dns_port"])
        name = f"{hit['instance']}.{hit['domain']}"
        srv = dns_ask(addr, name, RType.SRV).answers[0].rdata
        txt = dns_ask(addr, name, RType.TXT).answers[0].rdata
        aaaa = dns_ask(addr, str(srv.target), RType.AAAA).answers[0].rdata
        meta = from_txt([chunk.decode() for chunk in txt])
        print(f"resolve {name}")
        print(f"  host {srv.target} port {srv.port} addr {ipaddress.IPv6Address(aaaa)}")
        print(f"  rt={meta.rt} model={meta.model} if={meta.if_} verbs={','.join(meta.verbs)}")

        # --- what the optimized replies cost on a 127-byte radio link ------
        print()
        print(f"frame budget: {netsim.FRAME_SIZE}-byte frames, {netsim.FrameBudget().overhead}-byte overhead")
        for label, original, optimized in fixtures.frame_comparison_pairs():
            c = netsim.compare(original, optimized)
            print(
                f"  {label:<10} {c.frames_original} frame(s) -> {c.frames_optimized},"
                f" {c.bytes_saved} bytes saved"
            )
    finally:
        for server in servers:
            server.stop()
        front.stop()
        api.stop()


if __name__ == "__main__":
    main()
