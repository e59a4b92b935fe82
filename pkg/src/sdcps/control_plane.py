"""Controller nodes and their software-defined sub-controllers.

Covers path calculation and forwarding-table generation (SDN), the device
registry (SDIoT), deduplicating storage with an LRU cache (SDS), abstract
compute-resource tracking (SDCompute), packet priority assignment, the
escalating decision workflow, and controller state images.
"""

from __future__ import annotations

import heapq
import json
from collections import OrderedDict
from dataclasses import dataclass, field

from .errors import (DeadController, DuplicateDevice, ImageMismatch, NotFound,
                     Saturated, UnknownDevice, Unreachable, UnknownNode)
from .core import digest64
from .topology import NetGraph, Hierarchy, connected_components

DEVICE_KINDS = ("SENSOR", "AGG_SENSOR", "ACTUATOR", "ACCESS_POINT", "HOST")
DEVICE_STATUSES = ("BUSY", "SENDING", "RECEIVING", "ASLEEP", "LOW_BATTERY", "OK")


# ---------------------------------------------------------------- SDN

def compute_path(graph: NetGraph, src: int, dst: int,
                 policy: str = "SHORTEST") -> tuple[list[int], float]:
    """Policy-optimal path from src to dst.

    SHORTEST returns the minimum-weight path, ties broken by the
    lexicographically smallest node-id sequence. MST returns the unique
    path in the id-tie-broken minimum spanning tree of src's component.
    """
    if src not in graph.roles or dst not in graph.roles:
        raise UnknownNode(f"unknown endpoint {src} or {dst}")
    if policy == "SHORTEST":
        paths = shortest_paths_from(graph, src)
        if dst not in paths:
            raise Unreachable(f"no path {src} -> {dst}")
        return paths[dst]
    if policy == "MST":
        tree = _mst_adjacency(graph)
        path = _tree_path(tree, src, dst)
        if path is None:
            raise Unreachable(f"no path {src} -> {dst}")
        cost = sum(graph.adj[a][b] for a, b in zip(path, path[1:]))
        return path, cost
    raise ValueError(f"unknown path policy {policy!r}")


def shortest_paths_from(graph: NetGraph, src: int) -> dict[int, tuple[list[int], float]]:
    """Single-source Dijkstra keyed by (cost, path) so equal-cost ties resolve
    to the lexicographically smallest node sequence."""
    done: dict[int, tuple[list[int], float]] = {}
    heap = [(0.0, (src,))]
    while heap:
        cost, path = heapq.heappop(heap)
        v = path[-1]
        if v in done:
            continue
        done[v] = (list(path), cost)
        for w in sorted(graph.adj.get(v, {})):
            if w not in done:
                heapq.heappush(heap, (cost + graph.adj[v][w], path + (w,)))
    return done


def _mst_adjacency(graph: NetGraph) -> dict[int, set[int]]:
    parent = {v: v for v in graph.roles}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    tree: dict[int, set[int]] = {v: set() for v in graph.roles}
    for i, j, _w in sorted(graph.edges(), key=lambda e: (e[2], e[0], e[1])):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            tree[i].add(j)
            tree[j].add(i)
    return tree


def _tree_path(tree: dict[int, set[int]], src: int, dst: int) -> list[int] | None:
    prev = {src: src}
    stack = [src]
    while stack:
        v = stack.pop()
        if v == dst:
            break
        for w in sorted(tree[v]):
            if w not in prev:
                prev[w] = v
                stack.append(w)
    if dst not in prev:
        return None
    path = [dst]
    while path[-1] != src:
        path.append(prev[path[-1]])
    return path[::-1]


@dataclass
class ForwardingTable:
    owner: int
    entries: dict[int, int]  # destination -> next hop
    epoch: int

    def dump(self) -> str:
        lines = [f"{self.owner},{d},{self.entries[d]},{self.epoch}"
                 for d in sorted(self.entries)]
        return "\n".join(lines) + ("\n" if lines else "")


def generate_forwarding_tables(graph: NetGraph, switches: list[int]
                               ) -> tuple[dict[int, ForwardingTable], list[tuple[int, int]]]:
    """Build next-hop tables for every switch; unreachable (switch, dst)
    pairs are omitted from the table and reported back."""
    tables = {}
    unreachable = []
    all_dsts = graph.vertices()
    for sw in switches:
        paths = shortest_paths_from(graph, sw)
        entries = {}
        for dst in all_dsts:
            if dst == sw:
                continue
            if dst in paths:
                entries[dst] = paths[dst][0][1]
            else:
                unreachable.append((sw, dst))
        tables[sw] = ForwardingTable(owner=sw, entries=entries, epoch=graph.epoch)
    return tables, unreachable


class SdnUnit:
    """Path calculation, forwarding-table storage, and network status tracking."""

    def __init__(self, graph: NetGraph, switches: list[int]):
        self.graph = graph
        self.switches = sorted(switches)
        self.tables: dict[int, ForwardingTable] = {}
        self.unreachable: list[tuple[int, int]] = []
        self.rebuild()

    def rebuild(self, only: list[int] | None = None) -> None:
        targets = self.switches if only is None else sorted(only)
        tables, unreachable = generate_forwarding_tables(self.graph, targets)
        self.tables.update(tables)
        self.unreachable = [(s, d) for (s, d) in self.unreachable
                            if s not in tables] + unreachable

    def on_network_change(self, change: dict) -> list[int]:
        """Regenerate the tables of every switch in the component touched by
        the change (conservative but sound). Returns the switches rebuilt."""
        i, j = change["edge"]
        comps = connected_components(self.graph)
        affected = set()
        for comp in comps:
            if i in comp or j in comp:
                affected |= comp
        touched = [s for s in self.switches if s in affected]
        self.rebuild(only=touched)
        return touched

    def next_hop(self, sw: int, dst: int) -> int:
        table = self.tables.get(sw)
        if table is None or dst not in table.entries:
            raise Unreachable(f"switch {sw} has no route to {dst}")
        return table.entries[dst]

    def walk(self, src_switch: int, dst: int, max_hops: int | None = None) -> list[int]:
        """Follow next-hop entries from a switch to dst; the traversed path."""
        limit = max_hops if max_hops is not None else len(self.graph.roles)
        path = [src_switch]
        while path[-1] != dst:
            if len(path) > limit:
                raise Unreachable(f"routing loop walking {src_switch} -> {dst}")
            nxt = self.next_hop(path[-1], dst) if path[-1] in self.tables \
                else self._neighbor_step(path[-1], dst)
            path.append(nxt)
        return path

    def _neighbor_step(self, v: int, dst: int) -> int:
        # non-switch vertices forward to an adjacent switch (or to dst directly)
        if dst in self.graph.adj.get(v, {}):
            return dst
        for w in sorted(self.graph.adj.get(v, {})):
            if w in self.tables:
                return w
        raise Unreachable(f"vertex {v} has no adjacent switch")

    def state_dict(self) -> dict:
        return {
            "switches": self.switches,
            "tables": {str(s): {"entries": {str(d): h for d, h in sorted(t.entries.items())},
                                "epoch": t.epoch}
                       for s, t in sorted(self.tables.items())},
        }

    def load_state(self, state: dict) -> None:
        self.switches = list(state["switches"])
        self.tables = {
            int(s): ForwardingTable(owner=int(s),
                                    entries={int(d): h for d, h in t["entries"].items()},
                                    epoch=t["epoch"])
            for s, t in state["tables"].items()
        }


# ---------------------------------------------------------------- SDIoT

@dataclass
class DeviceRecord:
    id: int
    kind: str
    status: str
    location: tuple[float, float]
    last_seen: int
    owner_controller: int


class SdiotUnit:
    """Device registry: join/extract, status and location tracking."""

    def __init__(self, owner: int):
        self.owner = owner
        self.records: dict[int, DeviceRecord] = {}

    def register_device(self, record: DeviceRecord) -> None:
        if record.id in self.records:
            raise DuplicateDevice(f"device {record.id} already registered")
        self.records[record.id] = record

    def extract_device(self, dev_id: int) -> DeviceRecord:
        if dev_id not in self.records:
            raise UnknownDevice(f"device {dev_id} not registered")
        return self.records.pop(dev_id)

    def track_device(self, report: dict, now: int) -> DeviceRecord:
        dev_id = report["id"]
        rec = self.records.get(dev_id)
        if rec is None:
            raise UnknownDevice(f"device {dev_id} not registered")
        at = report.get("at", now)
        if at < rec.last_seen:
            return rec  # stale report, ignored
        if "status" in report:
            rec.status = report["status"]
        if "location" in report:
            rec.location = tuple(report["location"])
        rec.last_seen = at
        return rec

    def state_dict(self) -> dict:
        return {str(i): {"kind": r.kind, "status": r.status,
                         "location": list(r.location),
                         "last_seen": r.last_seen, "owner": r.owner_controller}
                for i, r in sorted(self.records.items())}

    def load_state(self, state: dict) -> None:
        self.records = {
            int(i): DeviceRecord(id=int(i), kind=d["kind"], status=d["status"],
                                 location=tuple(d["location"]),
                                 last_seen=d["last_seen"],
                                 owner_controller=d["owner"])
            for i, d in state.items()
        }


# ---------------------------------------------------------------- SDS

class SdsUnit:
    """Key-value store with content deduplication and an LRU read cache."""

    def __init__(self, cache_capacity: int = 16):
        self.cache_capacity = cache_capacity
        self.keys: dict[str, int] = {}            # key -> content digest
        self.blobs: dict[int, tuple[bytes, int]] = {}  # digest -> (bytes, refcount)
        self.cache: OrderedDict[str, bytes] = OrderedDict()
        self.hits = 0
        self.misses = 0

    def put(self, key: str, value: bytes) -> int:
        digest = digest64(value)
        old = self.keys.get(key)
        if old is not None and old != digest:
            self._decref(old)
        if old != digest:
            blob = self.blobs.get(digest)
            self.blobs[digest] = (value, (blob[1] + 1) if blob else 1)
        self.keys[key] = digest
        if key in self.cache:
            self.cache[key] = value
            self.cache.move_to_end(key)
        return digest

    def _decref(self, digest: int) -> None:
        value, refs = self.blobs[digest]
        if refs <= 1:
            del self.blobs[digest]
        else:
            self.blobs[digest] = (value, refs - 1)

    def get(self, key: str) -> bytes:
        if key in self.cache:
            self.hits += 1
            self.cache.move_to_end(key)
            return self.cache[key]
        self.misses += 1
        digest = self.keys.get(key)
        if digest is None:
            raise NotFound(f"key {key!r} not stored")
        value = self.blobs[digest][0]
        self.cache[key] = value
        if len(self.cache) > self.cache_capacity:
            self.cache.popitem(last=False)
        return value

    def physical_blob_count(self) -> int:
        return len(self.blobs)

    def state_dict(self) -> dict:
        return {
            "capacity": self.cache_capacity,
            "keys": {k: str(d) for k, d in sorted(self.keys.items())},
            "blobs": {str(d): [v.hex(), r] for d, (v, r) in sorted(self.blobs.items())},
            "cache": [[k, v.hex()] for k, v in self.cache.items()],
        }

    def load_state(self, state: dict) -> None:
        self.cache_capacity = state["capacity"]
        self.keys = {k: int(d) for k, d in state["keys"].items()}
        self.blobs = {int(d): (bytes.fromhex(v), r)
                      for d, (v, r) in state["blobs"].items()}
        self.cache = OrderedDict((k, bytes.fromhex(v)) for k, v in state["cache"])


# ---------------------------------------------------------------- SDCompute

class SdComputeUnit:
    """Abstract capacity counters standing in for the physical compute fabric."""

    def __init__(self, cpu_capacity: int = 64, mem_capacity: int = 64):
        self.cpu_capacity = cpu_capacity
        self.mem_capacity = mem_capacity
        self.cpu_used = 0
        self.mem_used = 0
        self.tasks = 0

    def track_resources(self) -> dict:
        return {"cpu_used": self.cpu_used, "cpu_capacity": self.cpu_capacity,
                "mem_used": self.mem_used, "mem_capacity": self.mem_capacity,
                "tasks": self.tasks}

    def has_room(self, cpu: int = 1, mem: int = 1) -> bool:
        return (self.cpu_used + cpu <= self.cpu_capacity
                and self.mem_used + mem <= self.mem_capacity)

    def take(self, cpu: int = 1, mem: int = 1) -> None:
        self.cpu_used += cpu
        self.mem_used += mem
        self.tasks += 1

    def release(self, cpu: int = 1, mem: int = 1) -> None:
        self.cpu_used = max(0, self.cpu_used - cpu)
        self.mem_used = max(0, self.mem_used - mem)
        self.tasks = max(0, self.tasks - 1)

    def state_dict(self) -> dict:
        return {"cpu_capacity": self.cpu_capacity, "mem_capacity": self.mem_capacity,
                "cpu_used": self.cpu_used, "mem_used": self.mem_used,
                "tasks": self.tasks}

    def load_state(self, state: dict) -> None:
        self.__dict__.update(state)


def assign_task(units: dict[int, SdComputeUnit], cpu: int = 1, mem: int = 1) -> int:
    """Place a task on the least-loaded controller (ties to the lowest id)."""
    candidates = [(units[i].tasks, i) for i in sorted(units)
                  if units[i].has_room(cpu, mem)]
    if not candidates:
        raise Saturated("no controller with free capacity")
    _, chosen = min(candidates)
    units[chosen].take(cpu, mem)
    return chosen


# ---------------------------------------------------------------- priority

DEFAULT_QOS_RULES = [
    ({"emergency": True}, 0),
    ({"kind": "SECURITY"}, 1),
    ({"kind": "CONTROL"}, 2),
    ({"kind": "ACTUATE"}, 3),
    ({"kind": "SENSE"}, 3),
]
DEFAULT_PRIORITY = 4


def organize_priority(packet, qos_rules=None, default: int = DEFAULT_PRIORITY) -> int:
    """First matching QoS rule wins; emergency traffic maps to priority 0."""
    rules = DEFAULT_QOS_RULES if qos_rules is None else qos_rules
    for match, prio in rules:
        if all(getattr(packet, attr, None) == want for attr, want in match.items()):
            return prio
    return default


# ---------------------------------------------------------------- controllers

@dataclass
class Decision:
    request_id: int
    outcome: str           # GRANTED | DENIED | ESCALATED | TIMEOUT
    decided_by: int
    depth: int
    reason: str = ""

    def log_line(self, tick: int) -> str:
        return f"{tick},{self.request_id},{self.outcome},{self.decided_by},{self.depth}"


@dataclass
class Request:
    id: int
    subject_role: str
    action: str
    entities: frozenset
    state: dict = field(default_factory=dict)


class ControllerNode:
    """A controller in the hierarchy bundling its sub-controller units."""

    def __init__(self, node_id: int, role: str, parent: int | None = None):
        self.id = node_id
        self.role = role
        self.parent = parent
        self.children: list[int] = []
        self.status = "RUNNING"
        self.owned_entities: set = set()
        self.response_delay = 0  # ticks a parent takes to answer an escalation
        self.sdn: SdnUnit | None = None
        self.sdiot = SdiotUnit(owner=node_id)
        self.sds = SdsUnit()
        self.sdcompute = SdComputeUnit()
        self.policies = None   # security.PolicySet
        self.security = None   # security.SecurityState

    def units(self) -> dict:
        out = {"sdiot": self.sdiot, "sds": self.sds, "sdcompute": self.sdcompute}
        if self.sdn is not None:
            out["sdn"] = self.sdn
        if self.security is not None:
            out["security"] = self.security
        return out


@dataclass(frozen=True)
class ControllerImage:
    controller_id: int
    captured_at: int
    blob: bytes


def capture_image(controller: ControllerNode, now: int) -> ControllerImage:
    """Canonical byte snapshot of every sub-controller table."""
    state = {name: unit.state_dict() for name, unit in controller.units().items()}
    blob = json.dumps(state, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return ControllerImage(controller_id=controller.id, captured_at=now, blob=blob)


def restore_image(controller: ControllerNode, image: ControllerImage) -> None:
    if image.controller_id != controller.id:
        raise ImageMismatch(f"image for {image.controller_id}, controller {controller.id}")
    state = json.loads(image.blob.decode("utf-8"))
    for name, unit in controller.units().items():
        if name in state:
            unit.load_state(state[name])


def handle_request(controllers: dict[int, ControllerNode], hierarchy: Hierarchy,
                   start: int, request: Request, hop_timeout: int = 50) -> Decision:
    """Resolve a control request, escalating up the tree when the receiving
    controller cannot decide it locally.

    A request is self-decidable iff every entity it references is owned by
    the controller and a non-default policy rule matches; otherwise it climbs
    one level per hop until the root, which either decides or denies.
    """
    from .security import check_policy  # late import: security has no deps on us

    cur = start
    depth = 0
    while True:
        c = controllers[cur]
        if c.status != "RUNNING":
            raise DeadController(f"controller {cur} not running")
        if request.entities <= c.owned_entities and c.policies is not None:
            effect, matched = check_policy(c.policies, request.subject_role,
                                           request.action, request.state,
                                           with_match=True)
            if matched:
                outcome = "GRANTED" if effect == "ALLOW" else "DENIED"
                return Decision(request.id, outcome, cur, depth)
        if cur == hierarchy.root:
            return Decision(request.id, "DENIED", cur, depth, reason="Unresolvable")
        parent = hierarchy.parent[cur]
        pc = controllers[parent]
        if pc.status != "RUNNING":
            raise DeadController(f"parent {parent} failed before failover")
        if pc.response_delay > hop_timeout:
            return Decision(request.id, "TIMEOUT", cur, depth,
                            reason=f"hop to {parent} exceeded {hop_timeout}")
        cur = parent
        depth += 1
