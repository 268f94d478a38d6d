"""Datagram transport for a live two-way exchange on one host.

Provider time and true time are both the host's ``time.time_ns``; the
receiver's offset is layered on top by its :class:`~gictime.clock.GicClock`.
The shims stand in for an on-path adversary: one holds packets, the other
answers with a response captured from an earlier exchange.
"""

from __future__ import annotations

import socket
import socketserver
import struct
import threading
import time
from collections.abc import Callable

from .timesync import TimeServer

NTP_EPOCH_OFFSET_S = 2_208_988_800


class _Handler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        data, sock = self.request
        clock = self.server.clock
        t2 = clock()
        response = self.server.time_server.handle(data, t2, t3=clock)
        if response is not None:
            sock.sendto(response, self.client_address)


class UdpTimeServer(socketserver.ThreadingUDPServer):
    """Provider endpoint on a loopback port, served from a background thread."""

    daemon_threads = True

    def __init__(self, time_server: TimeServer, host: str = "127.0.0.1", port: int = 0,
                 clock: Callable[[], int] = time.time_ns):
        super().__init__((host, port), _Handler)
        self.time_server = time_server
        self.clock = clock
        self._thread: threading.Thread | None = None

    def start(self) -> tuple[str, int]:
        self._thread = threading.Thread(target=self.serve_forever, name="gictime-provider", daemon=True)
        self._thread.start()
        return self.server_address

    def stop(self) -> None:
        self.shutdown()
        self.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self) -> UdpTimeServer:
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()


class UdpChannel:
    """Receiver side.  ``request_delay`` and ``response_delay`` hold each leg."""

    def __init__(self, address: tuple[str, int], timeout: float = 2.0,
                 request_delay: float = 0.0, response_delay: float = 0.0,
                 clock: Callable[[], int] = time.time_ns):
        self.address = address
        self.timeout = timeout
        self.request_delay = request_delay
        self.response_delay = response_delay
        self.clock = clock

    def now(self) -> int:
        return self.clock()

    def exchange(self, request: bytes) -> tuple[bytes, int] | None:
        with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as sock:
            sock.settimeout(self.timeout)
            if self.request_delay:
                time.sleep(self.request_delay)
            sock.sendto(request, self.address)
            try:
                payload, _ = sock.recvfrom(4096)
            except socket.timeout:
                return None
            if self.response_delay:
                time.sleep(self.response_delay)
            return payload, self.clock()


class ReplayShim:
    """Forwards each request but answers with a previously captured response."""

    def __init__(self, inner):
        self.inner = inner
        self.captured: bytes | None = None

    def now(self) -> int:
        return self.inner.now()

    def capture(self, request: bytes) -> None:
        reply = self.inner.exchange(request)
        if reply is None:
            raise RuntimeError("nothing to capture: the provider did not answer")
        self.captured = reply[0]

    def exchange(self, request: bytes) -> tuple[bytes, int] | None:
        reply = self.inner.exchange(request)
        if reply is None or self.captured is None:
            return reply
        return self.captured, reply[1]


def time_encodings(t_ns: int) -> list[bytes]:
    """Common wire encodings of one instant, for leak checks."""
    seconds, frac_ns = divmod(t_ns, 1_000_000_000)
    ntp_seconds = (seconds + NTP_EPOCH_OFFSET_S) % 2**32
    ntp_fraction = (frac_ns << 32) // 1_000_000_000
    encodings = [
        struct.pack(">q", t_ns),
        struct.pack("<q", t_ns),
        struct.pack(">II", ntp_seconds, ntp_fraction),
        struct.pack(">I", ntp_seconds),
        struct.pack(">d", t_ns / 1e9),
    ]
    if 0 <= seconds < 2**32:
        encodings.append(struct.pack(">I", seconds))
    return encodings


def leaks_time(data: bytes, t_ns: int) -> bool:
    return any(enc in data for enc in time_encodings(t_ns))
