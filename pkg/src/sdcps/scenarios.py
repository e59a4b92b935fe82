"""System bring-up, the four experimental scenarios, and metrics collection.

A request is one 8-packet DATA flow between uniformly random hosts,
delivered end to end through the forwarding tables under middleware
scheduling. Every packet is processed by the source's local controller
and, when the destination lives under a different local, by the global
controller as well; both are single servers with fixed per-packet service
budgets, so throughput is a deterministic function of the topology.

Configuration effort is reported as `config_work`, a deterministic count
of controller initializations and table entries written during setup;
wall-clock times are recorded alongside but never asserted on.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

from . import control_plane as cp
from . import security as sec_mod
from .core import Engine
from .errors import ConfigInvalid, EmptyReport
from .middleware import ControllerRegistry, RegistryEntry, Scheduler, failover
from .security import PolicyRule, PolicySet, SecurityState
from .topology import build_hierarchy, partition_nodes

PACKETS_PER_REQUEST = 8
INGRESS_HOPS = 2        # host -> switch -> local controller
INTRA_EGRESS_HOPS = 2   # local -> switch -> host
CROSS_UPLINK_HOPS = 1   # local -> global
CROSS_EGRESS_HOPS = 3   # global -> local -> switch -> host


@dataclass
class SystemConfig:
    n_local: int = 8
    switches_per_local: int = 2
    hosts_per_switch: int = 8
    partitions: int = 2
    seed: int = 0
    control_period: int = 10
    local_service: int = 16          # ticks per packet at a local controller
    global_service: int | None = None  # defaults to max(1, n_local // 4)
    heartbeat_period: int = 20
    heartbeat_miss_limit: int = 3
    flows_outstanding: int | None = None  # defaults to 4 * n_local
    rate_threshold: int = 20
    detect_window: int = 50
    denial_threshold: int = 3
    cooldown: int = 200
    cache_capacity: int = 16
    plant_a: float = 1.0
    plant_b: float = 1.0
    plant_gain: float = -0.5

    def validate(self) -> None:
        for name in ("n_local", "switches_per_local", "hosts_per_switch",
                     "control_period", "local_service", "heartbeat_period"):
            if getattr(self, name) < 1:
                raise ConfigInvalid(f"{name} must be >= 1")
        if not 1 <= self.partitions <= self.n_local:
            raise ConfigInvalid("partitions must be in [1, n_local]")

    def effective_global_service(self) -> int:
        return self.global_service if self.global_service is not None \
            else max(1, self.n_local // 4)

    def effective_flows(self) -> int:
        return self.flows_outstanding if self.flows_outstanding is not None \
            else 4 * self.n_local


class Server:
    """Single-server queue around a middleware scheduler."""

    __slots__ = ("controller_id", "service_time", "sched", "busy")

    def __init__(self, controller_id: int, service_time: int):
        self.controller_id = controller_id
        self.service_time = service_time
        self.sched = Scheduler()
        self.busy = False


DEFAULT_POLICIES = PolicySet(rules=[
    PolicyRule(subject_role="SUPERVISOR", action=None, condition=None, effect="ALLOW"),
    PolicyRule(subject_role="OPERATOR", action="read", condition=None, effect="ALLOW"),
    PolicyRule(subject_role=None, action="heat_on",
               condition=("temperature", "<=", 25), effect="ALLOW"),
], default_effect="DENY")


class System:
    """A fully set-up simulation instance (topology, controllers, servers)."""

    def __init__(self, config: SystemConfig, trace_sink=None):
        self.config = config
        self.engine = Engine(seed=config.seed, trace_sink=trace_sink)
        self.hierarchy = None
        self.graph = None
        self.controllers: dict[int, cp.ControllerNode] = {}
        self.registry = ControllerRegistry(config.heartbeat_period,
                                           config.heartbeat_miss_limit)
        self.partitions = []
        self.locals: list[int] = []
        self.switches: list[int] = []
        self.hosts: list[int] = []
        self.host_owner: dict[int, int] = {}
        self.servers: dict[int, Server] = {}
        self.images: dict[int, cp.ControllerImage] = {}
        self.images_held: dict[int, dict[int, cp.ControllerImage]] = {}
        self.config_work = 0
        # plants: one scalar loop per local controller
        self.plant_x: dict[int, float] = {}
        self.plant_xhat: dict[int, float] = {}
        self.sensor_bias: dict[int, tuple[float, int, int]] = {}
        self.actuator_override: dict[int, tuple[float, int, int]] = {}
        self.taps: list[sec_mod.Tap] = []


def setup(config: SystemConfig, trace_sink=None) -> System:
    """Bring the system up: build the tree, create and type the controllers,
    partition the environment, configure every software-defined unit until
    established, start the controllers, then capture and redistribute state
    images from the root."""
    config.validate()
    sys_ = System(config, trace_sink=trace_sink)

    hierarchy, graph = build_hierarchy(config.n_local, config.switches_per_local,
                                       config.hosts_per_switch)
    sys_.hierarchy, sys_.graph = hierarchy, graph
    for v in graph.vertices():
        role = graph.roles[v]
        if role == "LOCAL":
            sys_.locals.append(v)
        elif role == "SWITCH":
            sys_.switches.append(v)
        elif role == "HOST":
            sys_.hosts.append(v)

    # controller objects for the global root and every local
    controller_ids = [hierarchy.root] + sys_.locals
    for cid in controller_ids:
        node = cp.ControllerNode(cid, graph.roles[cid],
                                 parent=hierarchy.parent.get(cid))
        node.policies = DEFAULT_POLICIES
        sys_.controllers[cid] = node
        sys_.registry.register_controller(
            RegistryEntry(controller_id=cid, role=node.role,
                          layer=hierarchy.level[cid]))
        sys_.config_work += 1
    sys_.controllers[hierarchy.root].children = list(sys_.locals)

    # partition the locals into sub-domains, one area coordinator each
    sys_.partitions = partition_nodes(sys_.locals, config.partitions)

    # configure every unit (STEP5) and count the work
    for loc in sys_.locals:
        node = sys_.controllers[loc]
        own_switches = hierarchy.children(loc)
        node.sdn = cp.SdnUnit(graph, own_switches)
        sys_.config_work += sum(len(t.entries) for t in node.sdn.tables.values())
        for sw in own_switches:
            for host in hierarchy.children(sw):
                node.sdiot.register_device(cp.DeviceRecord(
                    id=host, kind="HOST", status="OK", location=(0.0, 0.0),
                    last_seen=0, owner_controller=loc))
                sys_.host_owner[host] = loc
                node.owned_entities.add(host)
                sys_.config_work += 1
        node.owned_entities.update(own_switches)
        node.sds = cp.SdsUnit(cache_capacity=config.cache_capacity)
        node.security = SecurityState(config.rate_threshold, config.detect_window,
                                     config.denial_threshold, config.cooldown)
        sys_.config_work += len(node.policies.rules) + 2  # storage + compute tables
        node.established = True

    root = sys_.controllers[hierarchy.root]
    root.owned_entities = set(sys_.hosts) | set(sys_.switches) | set(sys_.locals)
    root.security = SecurityState(config.rate_threshold, config.detect_window,
                                  config.denial_threshold, config.cooldown)
    sys_.config_work += len(root.policies.rules) + 2
    root.established = True

    for node in sys_.controllers.values():
        node.status = "RUNNING"

    # root captures every controller image, then redistributes (STEP7/8)
    for cid in controller_ids:
        sys_.images[cid] = cp.capture_image(sys_.controllers[cid], now=0)
        sys_.config_work += 1
    for cid in controller_ids:
        sys_.images_held[cid] = dict(sys_.images)

    # service plane: one server per local plus the global root
    for loc in sys_.locals:
        sys_.servers[loc] = Server(loc, config.local_service)
    sys_.servers[hierarchy.root] = Server(hierarchy.root,
                                          config.effective_global_service())

    # per-local scalar plant loop
    for loc in sys_.locals:
        sys_.plant_x[loc] = 1.0
        sys_.plant_xhat[loc] = 1.0

    return sys_


class TrafficSim:
    """Event handlers driving closed-loop request traffic over a System."""

    def __init__(self, system: System, attacks: list | None = None,
                 keyring=None):
        self.sys = system
        self.cfg = system.config
        self.engine = system.engine
        self.rng = self.engine.rng.split()
        self.keyring = keyring
        self.plaintext_digests: set[int] = set()
        self.requests_served = 0
        self.flows_issued = 0
        self.dropped = 0
        self.expired = 0
        self.flows: dict[int, list] = {}  # flow_id -> [src, dst, remaining]
        self.attacks = attacks or []
        self.security_active = bool(self.attacks)
        self._next_flow = 0
        self.served_log: list[tuple[int, int]] = []

        e = self.engine
        e.on("PacketSend", self._on_packet_send)
        e.on("PacketArrive", self._on_packet_arrive)
        e.on("Heartbeat", self._on_heartbeat)
        e.on("ControlTick", self._on_control_tick)
        e.on("Timeout", self._on_timeout)
        e.on("AttackStart", lambda ev: None)
        e.on("AttackStop", lambda ev: None)

    # -- bootstrap --

    def start(self) -> None:
        for k in range(self.cfg.effective_flows()):
            self.engine.schedule(k, "PacketSend", payload={"new_flow": True},
                                 detail="flow")
        self.engine.schedule(self.cfg.heartbeat_period, "Heartbeat")
        self.engine.schedule(self.cfg.control_period, "ControlTick")
        for spec in self.attacks:
            sec_mod.inject_attack(self.engine, spec, hooks=self)
        if self.security_active:
            self.engine.schedule(self.cfg.detect_window, "Timeout",
                                 payload={"scan": True})

    # -- attack hooks --

    def register_tap(self, tap) -> None:
        self.sys.taps.append(tap)

    def set_sensor_bias(self, target, bias, start, stop) -> None:
        self.sys.sensor_bias[target] = (bias, start, stop)

    def set_actuator_override(self, target, value, start, stop) -> None:
        self.sys.actuator_override[target] = (value, start, stop)

    # -- flows --

    def _spawn_flow(self, now: int) -> None:
        hosts = self.sys.hosts
        n = len(hosts)
        si = self.rng.randint(0, n)
        dj = self.rng.randint(0, n - 1)
        if dj >= si:
            dj += 1
        src, dst = hosts[si], hosts[dj]
        flow_id = self._next_flow
        self._next_flow += 1
        self.flows[flow_id] = [src, dst, PACKETS_PER_REQUEST]
        self.flows_issued += 1
        owner = self.sys.host_owner[src]
        if self.keyring is not None:
            self.keyring.flow_keys.setdefault(
                flow_id, (0x9E3779B97F4A7C15 * (flow_id + 1)) & ((1 << 64) - 1))
        for i in range(PACKETS_PER_REQUEST):
            payload = bytes([flow_id % 251, i]) * 4 if self.keyring is not None else b""
            pkt = self.engine.make_packet(src=src, dst=dst, kind="DATA",
                                          priority=4, flow_id=flow_id,
                                          payload=payload)
            if self.keyring is not None:
                self.plaintext_digests.add(pkt.payload_digest)
                pkt = sec_mod.seal(pkt, self.keyring)
            self._enter_server(owner, pkt, now + INGRESS_HOPS)

    def _enter_server(self, controller_id: int, pkt, at: int) -> None:
        # defer actual enqueue to the packet's arrival tick at the server
        self.engine.schedule(at, "PacketSend",
                             payload={"enqueue": controller_id, "pkt": pkt},
                             src=pkt.src, dst=pkt.dst)

    def _do_enqueue(self, controller_id: int, pkt, now: int) -> None:
        node = self.sys.controllers[controller_id]
        if self.security_active and node.security is not None:
            if node.security.should_drop(pkt.src, pkt.dst, now=now) or \
                    node.security.should_drop("*", pkt.dst, now=now):
                self.dropped += 1
                return
            node.security.detector.note_packet(pkt.src, pkt.dst)
        server = self.sys.servers.get(controller_id)
        if server is None or node.status != "RUNNING":
            self.dropped += 1
            return
        server.sched.enqueue(pkt, now)
        if not server.busy:
            server.busy = True
            self.engine.schedule(now + server.service_time, "PacketSend",
                                 payload={"served_by": controller_id})

    def _on_packet_send(self, ev) -> None:
        p = ev.payload
        if "new_flow" in p:
            self._spawn_flow(ev.at)
        elif "enqueue" in p:
            self._do_enqueue(p["enqueue"], p["pkt"], ev.at)
        elif "served_by" in p:
            self._complete_service(p["served_by"], ev.at)
        elif "attack" in p:
            self._attack_packet(p, ev.at)

    def _complete_service(self, controller_id: int, now: int) -> None:
        server = self.sys.servers[controller_id]
        node = self.sys.controllers[controller_id]
        if node.status != "RUNNING":
            server.busy = False
            return
        pkt = server.sched.dispatch(now)
        if pkt is None:
            server.busy = False
            return
        if len(server.sched):
            self.engine.schedule(now + server.service_time, "PacketSend",
                                 payload={"served_by": controller_id})
        else:
            server.busy = False
        self._route_onward(controller_id, pkt, now)

    def _route_onward(self, controller_id: int, pkt, now: int) -> None:
        if pkt.flow_id not in self.flows:
            return  # attack traffic terminates at the server
        dst_owner = self.sys.host_owner.get(pkt.dst)
        root = self.sys.hierarchy.root
        if controller_id == root:
            self._deliver(pkt, now + CROSS_EGRESS_HOPS)
        elif dst_owner == controller_id:
            self._deliver(pkt, now + INTRA_EGRESS_HOPS)
        else:
            self._enter_server(root, pkt, now + CROSS_UPLINK_HOPS)

    def _deliver(self, pkt, at: int) -> None:
        if self.sys.taps:
            self._tap_check(pkt)
        self.engine.schedule(at, "PacketArrive", src=pkt.src, dst=pkt.dst,
                             payload={"flow": pkt.flow_id})

    def _tap_check(self, pkt) -> None:
        path = self._tree_path(pkt.src, pkt.dst)
        edges = {(min(a, b), max(a, b)) for a, b in zip(path, path[1:])}
        for tap in self.sys.taps:
            e = (min(tap.edge), max(tap.edge))
            if e in edges:
                tap.records.append(pkt.payload)

    def _tree_path(self, src: int, dst: int) -> list[int]:
        h = self.sys.hierarchy
        up = h.path_to_root(src)
        down = h.path_to_root(dst)
        meet = next(v for v in up if v in set(down))
        return up[:up.index(meet) + 1] + down[:down.index(meet)][::-1]

    def _on_packet_arrive(self, ev) -> None:
        flow = self.flows.get(ev.payload["flow"])
        if flow is None:
            return
        flow[2] -= 1
        if flow[2] == 0:
            del self.flows[ev.payload["flow"]]
            self.requests_served += 1
            self.served_log.append((ev.at, self.requests_served))
            self.engine.schedule(ev.at, "PacketSend",
                                 payload={"new_flow": True}, detail="flow")

    # -- attacks --

    def _attack_packet(self, payload: dict, now: int) -> None:
        kind = payload["attack"]
        target = payload.get("flood_dst", payload.get("dst", 0))
        if kind in ("DOS_FLOOD", "DDOS_FLOOD"):
            owner = self.sys.host_owner.get(target, target)
            if owner not in self.sys.servers:
                owner = self.sys.hierarchy.root
            pkt = self.engine.make_packet(src=payload["flood_src"], dst=target,
                                          kind="DATA", priority=4,
                                          flow_id=-1, ttl=16)
            self._do_enqueue(owner, pkt, now)
        elif kind == "USER_PRIV_ESC":
            owner = self.sys.host_owner.get(target, self.sys.hierarchy.root)
            node = self.sys.controllers.get(owner)
            if node is None or node.security is None:
                return
            effect = sec_mod.check_policy(node.policies, payload["subject"],
                                          payload["action"], {})
            if effect == "DENY":
                node.security.detector.note_denial(payload["subject"])

    def _on_timeout(self, ev) -> None:
        p = ev.payload
        if p.get("scan"):
            for cid in [self.sys.hierarchy.root] + self.sys.locals:
                node = self.sys.controllers[cid]
                if node.security is None or node.status != "RUNNING":
                    continue
                findings = node.security.detector.scan_window(ev.at)
                node.security.record(findings)
                for f in findings:
                    sec_mod.prevent(node.security, f, ev.at)
                    sec_mod.handle(node.security, f, ev.at)
                node.security.expire_rules(ev.at)
            self.engine.schedule(ev.at + self.cfg.detect_window, "Timeout",
                                 payload={"scan": True})
        elif "kill" in p:
            self._kill_controller(p["kill"])

    def _kill_controller(self, cid: int) -> None:
        self.sys.controllers[cid].status = "FAILED"

    # -- liveness --

    def _on_heartbeat(self, ev) -> None:
        now = ev.at
        reg = self.sys.registry
        for cid, node in self.sys.controllers.items():
            if node.status == "RUNNING":
                reg.note_heartbeat(cid, now)
        for failed in reg.suspects(now):
            self._failover(failed, now)
        self.engine.schedule(now + self.cfg.heartbeat_period, "Heartbeat")

    def _failover(self, failed: int, now: int) -> None:
        loads = {cid: len(s.sched) for cid, s in self.sys.servers.items()}
        plan = failover(self.sys.registry, self.sys.hierarchy, failed, loads)
        new_owner = plan.new_owner
        for host, owner in list(self.sys.host_owner.items()):
            if owner == failed:
                self.sys.host_owner[host] = new_owner
        old_server = self.sys.servers.get(failed)
        if old_server is not None:
            for pkt in old_server.sched.drain():
                self._do_enqueue(new_owner, pkt, now)
            old_server.busy = False
        self.engine.schedule(now, "Timeout",
                             payload={"failover_done": failed},
                             detail=f"failover->{new_owner}")

    # -- plants --

    def _on_control_tick(self, ev) -> None:
        now = ev.at
        cfg = self.cfg
        for loc in self.sys.locals:
            if self.sys.controllers[loc].status != "RUNNING":
                continue
            x = self.sys.plant_x[loc]
            y = x
            bias = self.sys.sensor_bias.get(loc)
            if bias is not None and bias[1] <= now < bias[2]:
                y = x + bias[0]
            xhat = y  # full-observation readout
            u = cfg.plant_gain * xhat
            override = self.sys.actuator_override.get(loc)
            if override is not None and override[1] <= now < override[2]:
                u = override[0]
            self.sys.plant_x[loc] = cfg.plant_a * x + cfg.plant_b * u
            self.sys.plant_xhat[loc] = xhat
        self.engine.schedule(now + cfg.control_period, "ControlTick")


# ---------------------------------------------------------------- scenarios

SCENARIO_IDS = ("Sc1", "Sc2", "Sc3", "Sc4")

DEFAULT_SWEEPS = {
    "Sc1": {"n_local": [2, 4, 8, 16]},
    "Sc2": {"hosts_per_switch": [2, 4, 8, 16]},
    "Sc3": {"sim_time": [1000, 2000, 4000, 8000, 16000]},
    "Sc4": {"shape": [(4, 16), (8, 8), (16, 4)]},
}
DEFAULT_REQUESTS = 10_000
DEFAULT_SIM_TIME = 8_000


@dataclass
class ScenarioSpec:
    id: str
    sweep: dict
    requests: int | None = None
    sim_time: int | None = None
    seeds: list[int] = field(default_factory=lambda: [0])


def default_scenario(scenario_id: str, seeds: list[int] | None = None,
                     sweep: dict | None = None,
                     sim_time: int | None = None) -> ScenarioSpec:
    if scenario_id not in SCENARIO_IDS:
        raise ConfigInvalid(f"unknown scenario {scenario_id!r}")
    sweep = sweep or DEFAULT_SWEEPS[scenario_id]
    if scenario_id in ("Sc1", "Sc2"):
        return ScenarioSpec(scenario_id, sweep, requests=DEFAULT_REQUESTS,
                            seeds=seeds or [0])
    if scenario_id == "Sc3":
        return ScenarioSpec(scenario_id, sweep, seeds=seeds or [0])
    return ScenarioSpec(scenario_id, sweep,
                        sim_time=sim_time or DEFAULT_SIM_TIME, seeds=seeds or [0])


@dataclass
class MetricsRecord:
    scenario: str
    n_local: int
    switches_per_local: int
    hosts_per_switch: int
    seed: int
    sim_time: int
    requests_served: int
    config_work: int
    config_wall_ms: float
    test_wall_ms: float
    trace_digest: str = ""


def run_cell(config: SystemConfig, scenario_id: str,
             requests: int | None = None, sim_time: int | None = None,
             attacks: list | None = None, trace_sink=None, keyring=None
             ) -> tuple[MetricsRecord, TrafficSim]:
    """One (configuration, seed) simulation cell."""
    t0 = time.perf_counter()
    system = setup(config, trace_sink=trace_sink)
    config_wall_ms = (time.perf_counter() - t0) * 1000.0

    sim = TrafficSim(system, attacks=attacks, keyring=keyring)
    sim.start()
    t1 = time.perf_counter()
    if requests is not None:
        system.engine.run(stop_when=lambda: sim.requests_served >= requests)
        horizon = system.engine.now
    else:
        system.engine.run(until=sim_time)
        horizon = sim_time
    test_wall_ms = (time.perf_counter() - t1) * 1000.0

    record = MetricsRecord(
        scenario=scenario_id,
        n_local=config.n_local,
        switches_per_local=config.switches_per_local,
        hosts_per_switch=config.hosts_per_switch,
        seed=config.seed,
        sim_time=horizon,
        requests_served=sim.requests_served,
        config_work=system.config_work,
        config_wall_ms=round(config_wall_ms, 3),
        test_wall_ms=round(test_wall_ms, 3),
        trace_digest=system.engine.trace_digest(),
    )
    return record, sim


def run_scenario(spec: ScenarioSpec, base_config: SystemConfig | None = None
                 ) -> list[MetricsRecord]:
    """Run every (swept value, seed) cell of a scenario, in sweep order."""
    base = base_config or SystemConfig()
    records = []
    for value in _sweep_values(spec):
        for seed in spec.seeds:
            cfg = _cell_config(base, spec, value, seed)
            sim_time = value if spec.id == "Sc3" else spec.sim_time
            rec, _ = run_cell(cfg, spec.id, requests=spec.requests,
                              sim_time=sim_time)
            records.append(rec)
    return records


def _sweep_values(spec: ScenarioSpec) -> list:
    (key, values), = spec.sweep.items()
    return list(values)


def _cell_config(base: SystemConfig, spec: ScenarioSpec, value, seed: int
                 ) -> SystemConfig:
    kw = asdict(base)
    kw["seed"] = seed
    if spec.id == "Sc1":
        kw["n_local"] = value
        kw["hosts_per_switch"] = 8
    elif spec.id == "Sc2":
        kw["n_local"] = 8
        kw["hosts_per_switch"] = value
    elif spec.id == "Sc3":
        kw["n_local"] = 8
        kw["hosts_per_switch"] = 8
    elif spec.id == "Sc4":
        kw["n_local"], kw["hosts_per_switch"] = value
    kw["partitions"] = min(kw["partitions"], kw["n_local"])
    kw["global_service"] = None
    kw["flows_outstanding"] = None
    return SystemConfig(**kw)


# ---------------------------------------------------------------- reporting

CSV_COLUMNS = ["scenario", "n_local", "switches_per_local", "hosts_per_switch",
               "seed", "sim_time", "requests_served", "config_work",
               "config_wall_ms", "test_wall_ms"]


def emit_report(records: list[MetricsRecord], fmt: str = "csv") -> str:
    """Render records as CSV (stable column order) or JSON lines."""
    if not records:
        raise EmptyReport("no records to report")
    if fmt == "csv":
        lines = [",".join(CSV_COLUMNS)]
        for r in records:
            d = asdict(r)
            lines.append(",".join(str(d[c]) for c in CSV_COLUMNS))
        return "\n".join(lines) + "\n"
    if fmt == "jsonl":
        import json
        return "".join(json.dumps(asdict(r), sort_keys=True) + "\n"
                       for r in records)
    raise ValueError(f"unknown report format {fmt!r}")
