"""Deterministic discrete-event engine, simulation clock, and the packet type.

Simulated time is an integer tick count (1 tick = 1 ms of simulated time).
Events are delivered in strict lexicographic (time, sequence) order, which
makes a run a pure function of (configuration, seed).
"""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass, field

import numpy as np

from .errors import Drained, InvalidPriority, InvalidTtl, PastEvent

MASK64 = (1 << 64) - 1

EVENT_KINDS = (
    "ControlTick",
    "PacketSend",
    "PacketArrive",
    "LinkChange",
    "DeviceJoin",
    "DeviceLeave",
    "AttackStart",
    "AttackStop",
    "Heartbeat",
    "Timeout",
)

PACKET_KINDS = ("DATA", "CONTROL", "SENSE", "ACTUATE", "SECURITY", "SERVICE")

DEFAULT_CONTROL_PERIOD = 10  # ticks between control updates


def digest64(data: bytes) -> int:
    """64-bit FNV-1a digest of a byte string.

    Not cryptographic; used for content addressing and tamper checks
    inside the simulation only.
    """
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & MASK64
    return h


def mix64(x: int) -> int:
    """SplitMix64 finalizer; a fast invertible 64-bit mixing function."""
    x &= MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & MASK64
    x ^= x >> 31
    return x & MASK64


class Rng:
    """Splittable deterministic random source (numpy PCG64 over a SeedSequence).

    Identical seed and identical split order give bit-identical draws, which
    is what makes whole-run replay possible.
    """

    def __init__(self, seed: int, _ss: np.random.SeedSequence | None = None):
        self.seed = seed
        self._ss = _ss if _ss is not None else np.random.SeedSequence(seed)
        self.gen = np.random.Generator(np.random.PCG64(self._ss))

    def split(self) -> "Rng":
        child = self._ss.spawn(1)[0]
        return Rng(self.seed, child)

    def randint(self, low: int, high: int) -> int:
        """Uniform integer in [low, high)."""
        return int(self.gen.integers(low, high))

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        return float(self.gen.uniform(low, high))


@dataclass(frozen=True)
class Packet:
    id: int
    src: int
    dst: int
    kind: str
    priority: int
    deadline: int | None
    created_at_sender_clock: float
    position: tuple[float, float] | None
    speed: tuple[float, float] | None
    payload_size: int
    payload_digest: int
    auth_tag: int | None
    ttl: int
    flow_id: int
    seq_in_flow: int
    payload: bytes = b""
    emergency: bool = False
    malicious_payload: bool = False

    def replace(self, **kw) -> "Packet":
        d = self.__dict__.copy()
        d.update(kw)
        return Packet(**d)


@dataclass(order=True)
class Event:
    at: int
    seq: int
    kind: str = field(compare=False)
    src: int = field(compare=False, default=-1)
    dst: int = field(compare=False, default=-1)
    payload: dict = field(compare=False, default_factory=dict)
    detail: str = field(compare=False, default="")


class Engine:
    """Single-threaded event queue with a monotone clock and a trace digest.

    The trace is a newline-delimited log `tick,seq,kind,src,dst,detail`,
    hashed incrementally; two runs are considered identical iff their
    trace digests agree.
    """

    def __init__(self, seed: int = 0, trace_sink=None):
        self.now = 0
        self.rng = Rng(seed)
        self._seq = 0
        self._heap: list[tuple[int, int, Event]] = []
        self._hash = hashlib.sha256()
        self.trace_sink = trace_sink  # callable(line) or None
        self.handlers: dict[str, callable] = {}
        self._next_packet_id = 0
        self._flow_seq: dict[int, int] = {}

    # -- queue --

    def schedule(self, at: int, kind: str, src: int = -1, dst: int = -1,
                 payload: dict | None = None, detail: str = "") -> Event:
        if at < self.now:
            raise PastEvent(f"event at t={at} scheduled at t={self.now}")
        ev = Event(at, self._seq, kind, src, dst, payload or {}, detail)
        self._seq += 1
        heapq.heappush(self._heap, (at, ev.seq, ev))
        return ev

    def advance(self) -> tuple[int, Event]:
        if not self._heap:
            raise Drained("event queue empty")
        at, seq, ev = heapq.heappop(self._heap)
        self.now = at
        line = f"{at},{seq},{ev.kind},{ev.src},{ev.dst},{ev.detail}\n"
        self._hash.update(line.encode("utf-8"))
        if self.trace_sink is not None:
            self.trace_sink(line)
        return at, ev

    def peek_time(self) -> int | None:
        return self._heap[0][0] if self._heap else None

    def pending(self) -> int:
        return len(self._heap)

    def on(self, kind: str, handler) -> None:
        self.handlers[kind] = handler

    def run(self, until: int | None = None, stop_when=None) -> None:
        """Drain the queue, dispatching registered handlers.

        Stops when the queue empties, when the next event lies beyond
        `until`, or when `stop_when()` turns true.
        """
        while self._heap:
            if until is not None and self._heap[0][0] > until:
                break
            if stop_when is not None and stop_when():
                break
            _, ev = self.advance()
            handler = self.handlers.get(ev.kind)
            if handler is not None:
                handler(ev)

    def trace_digest(self) -> str:
        return self._hash.hexdigest()

    # -- packets --

    def make_packet(self, src: int, dst: int, kind: str = "DATA",
                    priority: int = 4, deadline: int | None = None,
                    payload: bytes = b"", flow_id: int = 0, ttl: int = 16,
                    created_at_sender_clock: float | None = None,
                    position: tuple[float, float] | None = None,
                    speed: tuple[float, float] | None = None,
                    auth_tag: int | None = None,
                    emergency: bool = False,
                    malicious_payload: bool = False) -> Packet:
        if not 0 <= priority <= 7:
            raise InvalidPriority(f"priority {priority} outside [0,7]")
        if ttl < 1:
            raise InvalidTtl(f"ttl {ttl} < 1")
        if kind not in PACKET_KINDS:
            raise ValueError(f"unknown packet kind {kind!r}")
        seq = self._flow_seq.get(flow_id, 0)
        self._flow_seq[flow_id] = seq + 1
        pkt = Packet(
            id=self._next_packet_id,
            src=src, dst=dst, kind=kind,
            priority=priority, deadline=deadline,
            created_at_sender_clock=(float(self.now)
                                     if created_at_sender_clock is None
                                     else created_at_sender_clock),
            position=position, speed=speed,
            payload_size=len(payload),
            payload_digest=digest64(payload),
            auth_tag=auth_tag, ttl=ttl,
            flow_id=flow_id, seq_in_flow=seq,
            payload=payload,
            emergency=emergency,
            malicious_payload=malicious_payload,
        )
        self._next_packet_id += 1
        return pkt
