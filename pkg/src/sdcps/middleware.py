"""Middleware kernel scheduler and the bridge services between control layers.

The kernel scheduler is strict-priority across 8 classes with
earliest-deadline-first ordering inside each class. The services cover
controller registration, same/cross-layer messaging, clock synchronization
and time translation, position tracking/prediction, system-wide resource
views, and controller failover.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (DuplicateController, Expired, NoSibling, StaleTrack,
                     UnknownEndpoint, Unsynchronized)
from .kernels import graph_to_csr, sync_offsets

N_PRIORITY_CLASSES = 8
HEARTBEAT_PERIOD = 20       # ticks between heartbeats
HEARTBEAT_MISS_LIMIT = 3    # consecutive misses before failover
TRACK_STALENESS_BOUND = 100  # ticks a position track stays usable


class Scheduler:
    """8 priority queues, each ordered by (deadline, arrival sequence)."""

    def __init__(self, trace_sink=None):
        self.queues = [[] for _ in range(N_PRIORITY_CLASSES)]
        self._arrival = 0
        self.expired = 0
        self.trace_sink = trace_sink
        self._size = 0

    def __len__(self):
        return self._size

    def _trace(self, tick, packet, action):
        if self.trace_sink is not None:
            dl = "" if packet.deadline is None else packet.deadline
            self.trace_sink(f"{tick},{packet.id},{packet.priority},{dl},{action}\n")

    def enqueue(self, packet, now: int) -> None:
        if packet.deadline is not None and packet.deadline < now:
            self.expired += 1
            self._trace(now, packet, "expire")
            raise Expired(f"packet {packet.id} deadline {packet.deadline} < now {now}")
        key = math.inf if packet.deadline is None else packet.deadline
        heapq.heappush(self.queues[packet.priority], (key, self._arrival, packet))
        self._arrival += 1
        self._size += 1
        self._trace(now, packet, "enqueue")

    def dispatch(self, now: int):
        """Most urgent class first, EDF inside the class; None when idle."""
        for q in self.queues:
            if q:
                _, _, packet = heapq.heappop(q)
                self._size -= 1
                self._trace(now, packet, "dispatch")
                return packet
        return None

    def drain(self) -> list:
        out = []
        for q in self.queues:
            out.extend(p for _, _, p in q)
            q.clear()
        self._size = 0
        return out


# ---------------------------------------------------------------- clocks

@dataclass
class ClockModel:
    """Affine local clock c(t) = a*t + b with skew/offset estimates."""
    skew: float = 1.0
    offset: float = 0.0
    skew_est: float | None = None
    offset_est: float | None = None

    def local_time(self, t: float) -> float:
        return self.skew * t + self.offset


def translate_time(sender_clock: ClockModel, remote_ts: float,
                   receiver_clock: ClockModel | None = None) -> float:
    """Map a sender-local timestamp into reference time and, when a receiver
    model is given, on into the receiver's local clock."""
    if sender_clock.skew_est is None or sender_clock.offset_est is None:
        raise Unsynchronized("sender clock estimates absent")
    ref = (remote_ts - sender_clock.offset_est) / sender_clock.skew_est
    if receiver_clock is None:
        return ref
    if receiver_clock.skew_est is None or receiver_clock.offset_est is None:
        raise Unsynchronized("receiver clock estimates absent")
    return receiver_clock.skew_est * ref + receiver_clock.offset_est


def estimate_skew(timestamp_pairs) -> tuple[float, float]:
    """Least-squares (skew, offset) fit from exchanged (reference, local) pairs."""
    ref = np.asarray([p[0] for p in timestamp_pairs], dtype=np.float64)
    loc = np.asarray([p[1] for p in timestamp_pairs], dtype=np.float64)
    skew, offset = np.polyfit(ref, loc, 1)
    return float(skew), float(offset)


def sync_round(clocks: dict[int, ClockModel], graph, eta: float = 0.5,
               rounds: int = 1) -> None:
    """Run synchronous neighbor-averaging rounds on the offset estimates."""
    order = sorted(clocks)
    nbr_idx, nbr_ptr, _ = graph_to_csr(
        {v: {w: 1.0 for w in graph.adj.get(v, {}) if w in clocks} for v in order},
        order=order)
    b0 = np.array([clocks[v].offset_est if clocks[v].offset_est is not None
                   else clocks[v].offset for v in order])
    b = sync_offsets(b0, nbr_idx, nbr_ptr, eta, rounds)
    for v, off in zip(order, b):
        clocks[v].offset_est = float(off)
        if clocks[v].skew_est is None:
            clocks[v].skew_est = clocks[v].skew


def offset_spread(clocks: dict[int, ClockModel]) -> float:
    vals = [c.offset_est if c.offset_est is not None else c.offset
            for c in clocks.values()]
    return max(vals) - min(vals) if vals else 0.0


# ---------------------------------------------------------------- tracking

@dataclass
class Track:
    node: int
    position: tuple[float, float]
    velocity: tuple[float, float]
    timestamp: int


def predict_position(track: Track, horizon_dt: float, now: int | None = None,
                     staleness_bound: int = TRACK_STALENESS_BOUND) -> tuple[float, float]:
    """Linear extrapolation of a node's position over horizon_dt."""
    if now is not None and now - track.timestamp > staleness_bound:
        raise StaleTrack(f"track for {track.node} is {now - track.timestamp} ticks old")
    px, py = track.position
    vx, vy = track.velocity
    return (px + vx * horizon_dt, py + vy * horizon_dt)


# ---------------------------------------------------------------- registry

@dataclass
class RegistryEntry:
    controller_id: int
    role: str
    layer: int
    last_heartbeat: int = 0
    address: str = ""
    status: str = "RUNNING"


class ControllerRegistry:
    """Liveness and layer bookkeeping for every registered controller."""

    def __init__(self, heartbeat_period: int = HEARTBEAT_PERIOD,
                 miss_limit: int = HEARTBEAT_MISS_LIMIT):
        self.entries: dict[int, RegistryEntry] = {}
        self.heartbeat_period = heartbeat_period
        self.miss_limit = miss_limit

    def register_controller(self, entry: RegistryEntry) -> None:
        if entry.controller_id in self.entries:
            raise DuplicateController(f"controller {entry.controller_id} already registered")
        self.entries[entry.controller_id] = entry

    def note_heartbeat(self, controller_id: int, now: int) -> None:
        self.entries[controller_id].last_heartbeat = now

    def suspects(self, now: int) -> list[int]:
        """Controllers that have missed at least `miss_limit` heartbeat periods."""
        limit = self.miss_limit * self.heartbeat_period
        return sorted(c for c, e in self.entries.items()
                      if e.status == "RUNNING" and now - e.last_heartbeat >= limit)

    def mark_failed(self, controller_id: int) -> None:
        self.entries[controller_id].status = "FAILED"

    def route_message(self, hierarchy, src: int, dst: int, same_layer: bool) -> list[int]:
        """Same-layer messages go peer-to-peer; cross-layer ones walk the tree."""
        if src not in self.entries or dst not in self.entries:
            raise UnknownEndpoint(f"unregistered endpoint {src} or {dst}")
        if same_layer:
            return [src, dst]
        up = hierarchy.path_to_root(src)
        down = hierarchy.path_to_root(dst)
        meet = next(v for v in up if v in set(down))
        tail = down[:down.index(meet)][::-1]
        return up[:up.index(meet) + 1] + tail


def track_system_resources(reports: dict[int, dict]) -> dict:
    """Aggregate per-controller compute reports into a global view."""
    total_tasks = sum(r["tasks"] for r in reports.values())
    least = min(sorted(reports), key=lambda c: (reports[c]["tasks"], c)) \
        if reports else None
    return {"per_controller": dict(sorted(reports.items())),
            "total_tasks": total_tasks,
            "least_loaded": least}


# ---------------------------------------------------------------- failover

@dataclass
class FailoverPlan:
    failed: int
    new_owner: int
    adopted_children: list[int]
    escalated: bool = False


def failover(registry: ControllerRegistry, hierarchy, failed_id: int,
             loads: dict[int, int] | None = None) -> FailoverPlan:
    """Reassign a failed controller's children to the least-loaded running
    sibling (ties to lowest id); with no sibling, the parent adopts them."""
    registry.mark_failed(failed_id)
    children = hierarchy.children(failed_id)
    parent = hierarchy.parent.get(failed_id)
    siblings = [s for s in hierarchy.children(parent)
                if s != failed_id
                and s in registry.entries
                and registry.entries[s].status == "RUNNING"] if parent is not None else []
    if siblings:
        load_of = (loads or {})
        new_owner = min(siblings, key=lambda s: (load_of.get(s, 0), s))
        escalated = False
    else:
        if parent is None:
            raise NoSibling(f"root controller {failed_id} has no failover target")
        new_owner = parent
        escalated = True
    for c in children:
        hierarchy.parent[c] = new_owner
    return FailoverPlan(failed=failed_id, new_owner=new_owner,
                        adopted_children=children, escalated=escalated)
