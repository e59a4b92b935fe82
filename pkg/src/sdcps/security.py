"""Security pipeline: policies, keyed sealing, attack injection, windowed
detection, prevention rules, handling, auditing, and the knowledge base.

The keyed digest and stream transform are deliberately non-cryptographic
64-bit mixing constructions (SplitMix64 finalizer over FNV-1a content
digests); they model eavesdrop/forgery defenses deterministically and make
no real-world security claim.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .core import MASK64, Packet, digest64, mix64
from .errors import AlreadyPrevented, InvalidSpec, NoKey

ATTACK_KINDS = ("DOS_FLOOD", "DDOS_FLOOD", "PACKET_FORGE", "EAVESDROP",
                "USER_PRIV_ESC", "SENSOR_TAMPER", "ACTUATOR_TAMPER")

# window detector defaults
RATE_THRESHOLD = 20        # packets per (src,dst) per window
WINDOW_TICKS = 50
DENIAL_THRESHOLD = 3       # denials per subject per window
COOLDOWN_TICKS = 200


# ---------------------------------------------------------------- policies

@dataclass(frozen=True)
class PolicyRule:
    subject_role: str | None   # None matches any role
    action: str | None         # None matches any action
    condition: tuple | None    # (state var, op in {<,<=,>,>=,==}, threshold)
    effect: str                # ALLOW | DENY


@dataclass
class PolicySet:
    rules: list[PolicyRule] = field(default_factory=list)
    default_effect: str = "DENY"


_OPS = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "==": lambda a, b: a == b,
}


def check_policy(policies: PolicySet, subject_role: str, action: str,
                 state: dict, with_match: bool = False):
    """First matching rule wins; the default effect applies otherwise."""
    for rule in policies.rules:
        if rule.subject_role is not None and rule.subject_role != subject_role:
            continue
        if rule.action is not None and rule.action != action:
            continue
        if rule.condition is not None:
            var, op, threshold = rule.condition
            if var not in state or not _OPS[op](state[var], threshold):
                continue
        return (rule.effect, True) if with_match else rule.effect
    return (policies.default_effect, False) if with_match else policies.default_effect


# ---------------------------------------------------------------- sealing

@dataclass
class KeyRing:
    flow_keys: dict[int, int] = field(default_factory=dict)
    encryption_on: bool = False


def _keystream(key: int, nonce: int, length: int) -> bytes:
    out = bytearray()
    state = mix64(key ^ mix64(nonce))
    while len(out) < length:
        state = mix64(state + 0x9E3779B97F4A7C15)
        out.extend(state.to_bytes(8, "little"))
    return bytes(out[:length])


def _tag_over(packet: Packet, payload_digest: int, key: int) -> int:
    acc = key
    for part in (packet.src, packet.dst, digest64(packet.kind.encode()),
                 packet.flow_id, packet.seq_in_flow, payload_digest):
        acc = mix64(acc ^ (part & MASK64))
    return acc


def seal(packet: Packet, keyring: KeyRing) -> Packet:
    """Authenticate (and optionally encrypt) a packet with its flow key.

    With encryption on, the payload is replaced by its keyed-stream
    transform first; the digest and tag then cover the transformed bytes,
    so verification never needs the plaintext.
    """
    key = keyring.flow_keys.get(packet.flow_id)
    if key is None:
        raise NoKey(f"no key for flow {packet.flow_id}")
    payload = packet.payload
    if keyring.encryption_on:
        ks = _keystream(key, (packet.flow_id << 20) | packet.seq_in_flow, len(payload))
        payload = bytes(a ^ b for a, b in zip(payload, ks))
    pd = digest64(payload)
    return packet.replace(payload=payload, payload_digest=pd,
                          auth_tag=_tag_over(packet, pd, key))


def unseal(packet: Packet, keyring: KeyRing) -> Packet:
    """Invert the stream transform (XOR is involutive)."""
    key = keyring.flow_keys.get(packet.flow_id)
    if key is None:
        raise NoKey(f"no key for flow {packet.flow_id}")
    payload = packet.payload
    if keyring.encryption_on:
        ks = _keystream(key, (packet.flow_id << 20) | packet.seq_in_flow, len(payload))
        payload = bytes(a ^ b for a, b in zip(payload, ks))
    return packet.replace(payload=payload, payload_digest=digest64(payload))


def verify_tag(packet: Packet, keyring: KeyRing) -> bool:
    key = keyring.flow_keys.get(packet.flow_id)
    if key is None:
        raise NoKey(f"no key for flow {packet.flow_id}")
    if packet.auth_tag is None:
        return False
    return packet.auth_tag == _tag_over(packet, packet.payload_digest, key)


# ---------------------------------------------------------------- attacks

@dataclass
class AttackSpec:
    kind: str
    start: int
    stop: int
    target: int | tuple = 0
    rate: int = 0                   # packets per tick (floods)
    sources: tuple = ()             # DDoS senders
    bias: float = 0.0               # sensor tamper additive bias
    override: float = 0.0           # actuator tamper value
    subject: str = "USER"           # priv-esc subject role
    action: str = "SUPERVISOR_ONLY"

    def validate(self) -> None:
        if self.kind not in ATTACK_KINDS:
            raise InvalidSpec(f"unknown attack kind {self.kind!r}")
        if self.start >= self.stop:
            raise InvalidSpec("start must precede stop")
        if self.kind in ("DOS_FLOOD", "DDOS_FLOOD") and self.rate <= 0:
            raise InvalidSpec("flood rate must be positive")
        if self.kind == "DDOS_FLOOD" and not self.sources:
            raise InvalidSpec("DDoS needs at least one source")


@dataclass
class Tap:
    edge: tuple[int, int]
    records: list[bytes] = field(default_factory=list)


def inject_attack(engine, spec: AttackSpec, hooks=None) -> dict:
    """Schedule the events realizing an attack spec.

    `hooks`, when given, receives side-channel artifacts the event stream
    cannot express: taps, sensor bias, actuator overrides.
    """
    spec.validate()
    engine.schedule(spec.start, "AttackStart", detail=spec.kind)
    engine.schedule(spec.stop, "AttackStop", detail=spec.kind)
    summary = {"kind": spec.kind, "scheduled_packets": 0}
    if spec.kind in ("DOS_FLOOD", "DDOS_FLOOD"):
        sources = list(spec.sources) if spec.kind == "DDOS_FLOOD" else [-2]
        n = 0
        for t in range(spec.start, spec.stop):
            for r in range(spec.rate):
                src = sources[(n) % len(sources)]
                engine.schedule(t, "PacketSend", src=src, dst=spec.target,
                                payload={"attack": spec.kind, "flood_src": src,
                                         "flood_dst": spec.target},
                                detail="flood")
                n += 1
        summary["scheduled_packets"] = n
    elif spec.kind == "EAVESDROP":
        tap = Tap(edge=tuple(spec.target))
        summary["tap"] = tap
        if hooks is not None:
            hooks.register_tap(tap)
    elif spec.kind == "SENSOR_TAMPER":
        if hooks is not None:
            hooks.set_sensor_bias(spec.target, spec.bias, spec.start, spec.stop)
    elif spec.kind == "ACTUATOR_TAMPER":
        if hooks is not None:
            hooks.set_actuator_override(spec.target, spec.override,
                                        spec.start, spec.stop)
    elif spec.kind == "PACKET_FORGE":
        for t in range(spec.start, spec.stop):
            engine.schedule(t, "PacketSend", src=-2, dst=spec.target,
                            payload={"attack": "PACKET_FORGE"}, detail="forge")
            summary["scheduled_packets"] += 1
    elif spec.kind == "USER_PRIV_ESC":
        for t in range(spec.start, spec.stop):
            engine.schedule(t, "PacketSend", src=-2, dst=spec.target,
                            payload={"attack": "USER_PRIV_ESC",
                                     "subject": spec.subject,
                                     "action": spec.action},
                            detail="privesc")
            summary["scheduled_packets"] += 1
    return summary


# ---------------------------------------------------------------- findings

FINDING_ORDER = {"DETECTED": 0, "PREVENTED": 1, "HANDLED": 2}


@dataclass
class Finding:
    id: int
    kind: str
    evidence: dict
    at: int
    target: object
    state: str = "DETECTED"

    def transition(self, new_state: str) -> None:
        if FINDING_ORDER[new_state] <= FINDING_ORDER[self.state]:
            raise ValueError(f"finding {self.id}: {self.state} -> {new_state} goes backward")
        self.state = new_state

    def log_line(self) -> str:
        ev = ";".join(f"{k}={self.evidence[k]}" for k in sorted(self.evidence))
        return f"{self.at},{self.kind},{self.target},{self.state},{ev}"


@dataclass
class KnowledgeBase:
    signatures: set = field(default_factory=set)
    history: list = field(default_factory=list)

    def note(self, finding: Finding) -> None:
        self.history.append(finding.id)
        self.signatures.add((finding.kind, tuple(sorted(finding.evidence))))

    def load_signatures(self, lines) -> int:
        """Hot-load a signature set, one `kind:feature=value,...` per line."""
        added = 0
        for line in lines:
            line = line.strip()
            if not line:
                continue
            kind, _, feats = line.partition(":")
            sig = (kind, tuple(sorted(f.split("=", 1)[0] for f in feats.split(",") if f)))
            if sig not in self.signatures:
                self.signatures.add(sig)
                added += 1
        return added


class Detector:
    """Sliding-window traffic statistics and threshold detection.

    Per window of `window` ticks it flags: per-(src,dst) rates above
    `rate_threshold` (DoS; the multi-source variant is reported as DDoS),
    any authentication-tag failure (forgery), and per-subject denial counts
    of `denial_threshold` or more (privilege escalation attempts).
    """

    def __init__(self, rate_threshold: int = RATE_THRESHOLD,
                 window: int = WINDOW_TICKS,
                 denial_threshold: int = DENIAL_THRESHOLD):
        self.rate_threshold = rate_threshold
        self.window = window
        self.denial_threshold = denial_threshold
        self.pair_counts: dict[tuple[int, int], int] = {}
        self.auth_failures: list[tuple[int, int, int]] = []  # (src, dst, flow)
        self.denials: dict[str, int] = {}
        self._next_finding_id = 0

    def note_packet(self, src: int, dst: int, auth_ok: bool = True,
                    flow_id: int = 0) -> None:
        self.pair_counts[(src, dst)] = self.pair_counts.get((src, dst), 0) + 1
        if not auth_ok:
            self.auth_failures.append((src, dst, flow_id))

    def note_denial(self, subject: str) -> None:
        self.denials[subject] = self.denials.get(subject, 0) + 1

    def scan_window(self, now: int) -> list[Finding]:
        """Close the current window: emit findings and reset the statistics."""
        findings = []

        by_dst: dict[int, list[tuple[int, int]]] = {}
        for (src, dst), count in sorted(self.pair_counts.items()):
            by_dst.setdefault(dst, []).append((src, count))
            if count > self.rate_threshold:
                findings.append(self._finding("DOS_FLOOD", now, dst,
                                              {"src": src, "rate": count,
                                               "threshold": self.rate_threshold}))
        for dst, pairs in sorted(by_dst.items()):
            total = sum(c for _, c in pairs)
            if len(pairs) >= 2 and total > self.rate_threshold \
                    and all(c <= self.rate_threshold for _, c in pairs):
                findings.append(self._finding("DDOS_FLOOD", now, dst,
                                              {"sources": len(pairs), "rate": total,
                                               "threshold": self.rate_threshold}))

        for src, dst, flow in self.auth_failures:
            findings.append(self._finding("PACKET_FORGE", now, dst,
                                          {"src": src, "flow": flow}))

        for subject, count in sorted(self.denials.items()):
            if count >= self.denial_threshold:
                findings.append(self._finding("USER_PRIV_ESC", now, subject,
                                              {"denials": count}))

        self.pair_counts.clear()
        self.auth_failures.clear()
        self.denials.clear()
        return findings

    def _finding(self, kind, now, target, evidence) -> Finding:
        f = Finding(id=self._next_finding_id, kind=kind, evidence=evidence,
                    at=now, target=target)
        self._next_finding_id += 1
        return f


# ---------------------------------------------------------------- pipeline

@dataclass
class DropRule:
    kind: str          # PAIR | FLOW_UNVERIFIED | SUBJECT_LOCK
    key: object
    expires_at: int | None = None


class SecurityState:
    """Per-controller security pipeline state (detector, rules, findings, KB)."""

    def __init__(self, rate_threshold: int = RATE_THRESHOLD,
                 window: int = WINDOW_TICKS,
                 denial_threshold: int = DENIAL_THRESHOLD,
                 cooldown: int = COOLDOWN_TICKS):
        self.detector = Detector(rate_threshold, window, denial_threshold)
        self.cooldown = cooldown
        self.drop_rules: list[DropRule] = []
        self.findings: dict[int, Finding] = {}
        self.kb = KnowledgeBase()
        self.last_audit: int | None = None
        self.inventory: dict[int, dict] | None = None

    def record(self, findings: list[Finding]) -> None:
        for f in findings:
            self.findings[f.id] = f

    def should_drop(self, src: int, dst: int, subject: str | None = None,
                    flow_id: int | None = None, verified: bool = True,
                    now: int | None = None) -> bool:
        for rule in self.drop_rules:
            if rule.expires_at is not None and now is not None and now >= rule.expires_at:
                continue
            if rule.kind == "PAIR" and rule.key == (src, dst):
                return True
            if rule.kind == "FLOW_UNVERIFIED" and rule.key == flow_id and not verified:
                return True
            if rule.kind == "SUBJECT_LOCK" and subject is not None and rule.key == subject:
                return True
        return False

    def expire_rules(self, now: int) -> None:
        self.drop_rules = [r for r in self.drop_rules
                           if r.expires_at is None or now < r.expires_at]

    def state_dict(self) -> dict:
        return {
            "drop_rules": [[r.kind, list(r.key) if isinstance(r.key, tuple) else r.key,
                            r.expires_at] for r in self.drop_rules],
            "findings": {str(i): [f.kind, f.state, f.at, str(f.target)]
                         for i, f in sorted(self.findings.items())},
            "kb_history": list(self.kb.history),
            "kb_signatures": sorted(f"{k}:{','.join(feats)}"
                                    for k, feats in self.kb.signatures),
        }

    def load_state(self, state: dict) -> None:
        self.drop_rules = [DropRule(kind=k, key=tuple(key) if isinstance(key, list) else key,
                                    expires_at=exp)
                           for k, key, exp in state["drop_rules"]]
        self.kb.history = list(state["kb_history"])
        self.kb.signatures = set()
        self.kb.load_signatures(state["kb_signatures"])


def prevent(sec: SecurityState, finding: Finding, now: int) -> DropRule:
    """Install the drop rule matching a detected finding's attack class."""
    if finding.state != "DETECTED":
        raise AlreadyPrevented(f"finding {finding.id} already {finding.state}")
    if finding.kind in ("DOS_FLOOD", "DDOS_FLOOD"):
        key = (finding.evidence.get("src", -2), finding.target) \
            if finding.kind == "DOS_FLOOD" else ("*", finding.target)
        rule = DropRule(kind="PAIR", key=key, expires_at=now + sec.cooldown)
    elif finding.kind == "PACKET_FORGE":
        rule = DropRule(kind="FLOW_UNVERIFIED", key=finding.evidence.get("flow"),
                        expires_at=None)
    elif finding.kind == "USER_PRIV_ESC":
        rule = DropRule(kind="SUBJECT_LOCK", key=finding.target,
                        expires_at=now + sec.cooldown)
    else:
        rule = DropRule(kind="PAIR", key=("*", finding.target),
                        expires_at=now + sec.cooldown)
    sec.drop_rules.append(rule)
    finding.transition("PREVENTED")
    return rule


def handle(sec: SecurityState, finding: Finding, now: int) -> None:
    """Complete mitigation and archive the finding in the knowledge base."""
    if finding.state == "DETECTED":
        finding.transition("PREVENTED")
    finding.transition("HANDLED")
    sec.kb.note(finding)


def audit_map(graph, registry=None, previous: dict | None = None
              ) -> tuple[dict[int, dict], list[Finding]]:
    """Inventory every infrastructure vertex; diff against the previous
    inventory, flagging unknown nodes as anomalies."""
    inventory = {}
    for v in graph.vertices():
        role = graph.roles[v]
        if role == "HOST":
            continue
        owner = None
        if registry is not None and v in registry.entries:
            owner = registry.entries[v].controller_id
        inventory[v] = {"role": role, "owner": owner}
    anomalies = []
    if previous is not None:
        for v in sorted(set(inventory) - set(previous)):
            anomalies.append(Finding(id=-1, kind="AUDIT_ANOMALY",
                                     evidence={"node": v,
                                               "role": inventory[v]["role"]},
                                     at=0, target=v))
    return inventory, anomalies


def security_status(sec: SecurityState, now: int) -> dict:
    by_state = {"DETECTED": 0, "PREVENTED": 0, "HANDLED": 0}
    for f in sec.findings.values():
        by_state[f.state] += 1
    return {"tick": now,
            "findings": by_state,
            "active_rules": sum(1 for r in sec.drop_rules
                                if r.expires_at is None or now < r.expires_at),
            "last_audit": sec.last_audit,
            "kb_size": len(sec.kb.signatures)}
