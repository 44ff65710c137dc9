"""Threaded UDP DNS server shell shared by the directory and lookup frontends."""

from __future__ import annotations

import socket
import threading
from dataclasses import replace
from typing import Callable, Optional

from .dnscodec import CodecError, DnsMessage, decode, encode

UDP_PAYLOAD_LIMIT = 512


class UdpDnsServer:
    """Decode, hand to the answer function, encode, reply.

    Undecodable datagrams and None answers are dropped silently, as a
    resolver would.  Replies beyond the classic UDP payload limit go out
    with the truncation bit set so the caller knows to narrow the query.
    """

    def __init__(
        self,
        answer: Callable[[DnsMessage], Optional[DnsMessage]],
        host: str = "127.0.0.1",
        port: int = 0,
    ) -> None:
        self._answer = answer
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.settimeout(0.2)
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._sock.getsockname()[:2]

    def start(self) -> UdpDnsServer:
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()
        return self

    def _loop(self) -> None:
        while not self._stop.is_set():
            try:
                data, peer = self._sock.recvfrom(65535)
            except socket.timeout:
                continue
            except OSError:
                break
            try:
                query = decode(data)
            except CodecError:
                continue
            try:
                reply = self._answer(query)
            except Exception:
                continue
            if reply is None:
                continue
            wire = encode(reply)
            if len(wire) > UDP_PAYLOAD_LIMIT:
                wire = encode(replace(reply, header=replace(reply.header, tc=1)))
            self._sock.sendto(wire, peer)

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
        self._sock.close()

    def __enter__(self) -> UdpDnsServer:
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
