"""Event-loop transport for the two-way exchange.

Every hop costs ``latency``.  The provider takes another ``latency`` between
receiving a request and stamping its reply.  The adversary adds its own delay
per leg on top.
"""

from __future__ import annotations

from ..adversary import REQUEST, RESPONSE, DelayPolicy, InFlight, delay_channel
from ..timesync import TimeServer
from .events import EventLoop


class SimulatedChannel:
    def __init__(
        self,
        loop: EventLoop,
        server: TimeServer,
        policy: DelayPolicy | None = None,
        latency: int = 0,
    ):
        self.loop = loop
        self.server = server
        self.policy = policy or DelayPolicy()
        self.latency = latency
        self.exchanges = 0
        self.last_times: tuple[int, int, int, int] | None = None

    def now(self) -> int:
        return self.loop.now

    def exchange(self, request: bytes) -> tuple[bytes, int] | None:
        index = self.exchanges
        self.exchanges += 1
        t1 = self.loop.now
        reply: list[tuple[bytes, int]] = []

        def provider_receives(loop: EventLoop) -> None:
            t2 = loop.now
            response = self.server.handle(request, t2)
            if response is None:
                return
            t3 = t2 + self.server.processing
            loop.schedule(t3, "provider-send", lambda lp: provider_sends(lp, t2, response))

        def provider_sends(loop: EventLoop, t2: int, response: bytes) -> None:
            t3 = loop.now
            t4 = delay_channel(self.policy, InFlight(response, t3, RESPONSE, index), self.latency)
            if t4 is None:
                return

            def receiver_receives(lp: EventLoop) -> None:
                self.last_times = (t1, t2, t3, lp.now)
                reply.append((response, lp.now))

            loop.schedule(t4, "receiver-receive", receiver_receives)

        self.loop.schedule(t1, "receiver-send")
        t2 = delay_channel(self.policy, InFlight(request, t1, REQUEST, index), self.latency)
        if t2 is not None:
            self.loop.schedule(t2, "provider-receive", provider_receives)
        self.loop.run()
        return reply[0] if reply else None
