"""Communication graph, controller tree, partitions, and location clusters.

Node ids are dense integers assigned top-down: 0 is the global root, then
local controllers, then switches, then hosts. The graph is undirected and
carries an epoch counter bumped on every mutation so downstream consumers
(forwarding tables, cluster maps) can tell stale state from fresh.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import (DuplicateEdge, InvalidCount, NoCenters, NoSuchEdge,
                     TooManyPartitions, UnknownNode)

ROLES = ("GLOBAL", "SUPER", "AREA_COORD", "LOCAL", "SWITCH", "HOST")


@dataclass
class NetGraph:
    roles: dict[int, str] = field(default_factory=dict)
    adj: dict[int, dict[int, float]] = field(default_factory=dict)
    epoch: int = 0
    listeners: list = field(default_factory=list)

    def add_vertex(self, v: int, role: str) -> None:
        self.roles[v] = role
        self.adj.setdefault(v, {})

    def add_edge(self, i: int, j: int, weight: float = 1.0) -> None:
        if i == j:
            raise DuplicateEdge(f"self-loop ({i},{i}) rejected")
        if weight <= 0:
            raise ValueError("edge weight must be positive")
        if j in self.adj.get(i, {}):
            raise DuplicateEdge(f"edge ({i},{j}) already present")
        self.adj.setdefault(i, {})[j] = weight
        self.adj.setdefault(j, {})[i] = weight

    def has_edge(self, i: int, j: int) -> bool:
        return j in self.adj.get(i, {})

    def edges(self):
        for i in sorted(self.adj):
            for j in sorted(self.adj[i]):
                if i < j:
                    yield i, j, self.adj[i][j]

    def vertices(self):
        return sorted(self.roles)

    def dump(self) -> str:
        """Topology dump: header `#epoch N` then one `i j weight` line per edge."""
        lines = [f"#epoch {self.epoch}"]
        for i, j, w in self.edges():
            wtxt = f"{w:g}"
            lines.append(f"{i} {j} {wtxt}")
        return "\n".join(lines) + "\n"


@dataclass
class Hierarchy:
    parent: dict[int, int] = field(default_factory=dict)  # child -> parent
    level: dict[int, int] = field(default_factory=dict)   # node -> depth, root=0
    root: int = 0

    def children(self, v: int) -> list[int]:
        return sorted(c for c, p in self.parent.items() if p == v)

    def height(self) -> int:
        return max(self.level.values()) if self.level else 0

    def path_to_root(self, v: int) -> list[int]:
        path = [v]
        while path[-1] != self.root:
            path.append(self.parent[path[-1]])
        return path


@dataclass
class Partition:
    id: int
    area_coordinator: int
    members: list[int]


@dataclass
class Cluster:
    id: int
    coordinator: int
    center: tuple[float, float]
    members: list[int]


def build_hierarchy(n_local: int, switches_per_local: int,
                    hosts_per_switch: int) -> tuple[Hierarchy, NetGraph]:
    """Build the depth-3 controller tree and its mirror communication graph.

    One global root, `n_local` local controllers beneath it, a fixed number
    of switches per local, hosts hanging off every switch. The graph also
    gets switch-switch edges between sibling switches so host traffic under
    one local controller does not transit the control tree.
    """
    for name, v in (("n_local", n_local),
                    ("switches_per_local", switches_per_local),
                    ("hosts_per_switch", hosts_per_switch)):
        if v < 1:
            raise InvalidCount(f"{name} must be >= 1, got {v}")

    h = Hierarchy(root=0)
    g = NetGraph()
    g.add_vertex(0, "GLOBAL")
    h.level[0] = 0

    nid = 1
    locals_ = []
    for _ in range(n_local):
        g.add_vertex(nid, "LOCAL")
        h.parent[nid] = 0
        h.level[nid] = 1
        g.add_edge(0, nid)
        locals_.append(nid)
        nid += 1

    switches = []
    for loc in locals_:
        sibs = []
        for _ in range(switches_per_local):
            g.add_vertex(nid, "SWITCH")
            h.parent[nid] = loc
            h.level[nid] = 2
            g.add_edge(loc, nid)
            sibs.append(nid)
            nid += 1
        for a in range(len(sibs)):
            for b in range(a + 1, len(sibs)):
                g.add_edge(sibs[a], sibs[b])
        switches.extend(sibs)

    for sw in switches:
        for _ in range(hosts_per_switch):
            g.add_vertex(nid, "HOST")
            h.parent[nid] = sw
            h.level[nid] = 3
            g.add_edge(sw, nid)
            nid += 1

    return h, g


def neighbors(graph: NetGraph, i: int) -> set[int]:
    if i not in graph.roles:
        raise UnknownNode(f"node {i} not in graph")
    return set(graph.adj.get(i, {}))


def partition_nodes(locals_: list[int], p: int) -> list[Partition]:
    """Split local controllers into p contiguous groups of near-equal size.

    The first member of each group doubles as its area coordinator (the
    experimental tree has no dedicated coordinator tier).
    """
    n = len(locals_)
    if not 1 <= p <= n:
        raise TooManyPartitions(f"p={p} outside [1,{n}]")
    base, extra = divmod(n, p)
    parts = []
    idx = 0
    for k in range(p):
        size = base + (1 if k < extra else 0)
        members = locals_[idx:idx + size]
        idx += size
        parts.append(Partition(id=k, area_coordinator=members[0],
                               members=list(members)))
    return parts


def apply_link_event(graph: NetGraph, change: dict) -> NetGraph:
    """Apply an add/remove/reweight edge change, bump the epoch, notify listeners."""
    op = change["op"]
    i, j = change["edge"]
    if op == "add":
        graph.add_edge(i, j, change.get("weight", 1.0))
    elif op == "remove":
        if not graph.has_edge(i, j):
            raise NoSuchEdge(f"edge ({i},{j}) absent")
        del graph.adj[i][j]
        del graph.adj[j][i]
    elif op == "reweight":
        if not graph.has_edge(i, j):
            raise NoSuchEdge(f"edge ({i},{j}) absent")
        w = change["weight"]
        if w <= 0:
            raise ValueError("edge weight must be positive")
        graph.adj[i][j] = w
        graph.adj[j][i] = w
    else:
        raise ValueError(f"unknown link change op {op!r}")
    graph.epoch += 1
    for cb in graph.listeners:
        cb(change)
    return graph


def assign_clusters(positions: dict[int, tuple[float, float]],
                    centers: list[tuple[float, float]]) -> list[Cluster]:
    """Assign every node to its nearest center (Euclidean, ties to lowest id)."""
    if not centers:
        raise NoCenters("at least one cluster center required")
    clusters = [Cluster(id=k, coordinator=-1, center=c, members=[])
                for k, c in enumerate(centers)]
    for node in sorted(positions):
        x, y = positions[node]
        best_k, best_d = 0, math.inf
        for k, (cx, cy) in enumerate(centers):
            d = (x - cx) ** 2 + (y - cy) ** 2
            if d < best_d - 1e-12:
                best_k, best_d = k, d
        clusters[best_k].members.append(node)
    for cl in clusters:
        if cl.members:
            cl.coordinator = cl.members[0]
    return clusters


def connected_components(graph: NetGraph) -> list[set[int]]:
    seen: set[int] = set()
    comps = []
    for v in graph.vertices():
        if v in seen:
            continue
        comp = {v}
        stack = [v]
        while stack:
            u = stack.pop()
            for w in graph.adj.get(u, {}):
                if w not in comp:
                    comp.add(w)
                    stack.append(w)
        seen |= comp
        comps.append(comp)
    return comps
