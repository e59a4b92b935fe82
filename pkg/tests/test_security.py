import numpy as np
import pytest

from sdcps import security as sec
from sdcps.core import Engine, Rng, digest64
from sdcps.errors import AlreadyPrevented, InvalidSpec, NoKey
from sdcps.topology import build_hierarchy


def allow_read():
    return sec.PolicySet(rules=[
        sec.PolicyRule("SUPERVISOR", None, None, "ALLOW"),
        sec.PolicyRule("OPERATOR", "read", None, "ALLOW"),
        sec.PolicyRule(None, "heat_on", ("temperature", "<=", 25), "ALLOW"),
    ], default_effect="DENY")


class TestPolicies:
    def test_supervisor_allows_anything(self):
        assert sec.check_policy(allow_read(), "SUPERVISOR", "erase", {}) == "ALLOW"

    def test_operator_limited_to_read(self):
        p = allow_read()
        assert sec.check_policy(p, "OPERATOR", "read", {}) == "ALLOW"
        assert sec.check_policy(p, "OPERATOR", "write", {}) == "DENY"

    def test_condition_gates_action(self):
        p = allow_read()
        assert sec.check_policy(p, "USER", "heat_on", {"temperature": 20}) == "ALLOW"
        assert sec.check_policy(p, "USER", "heat_on", {"temperature": 30}) == "DENY"
        # boundary is inclusive
        assert sec.check_policy(p, "USER", "heat_on", {"temperature": 25}) == "ALLOW"

    def test_missing_state_var_falls_through(self):
        assert sec.check_policy(allow_read(), "USER", "heat_on", {}) == "DENY"

    def test_first_match_wins(self):
        p = sec.PolicySet(rules=[
            sec.PolicyRule(None, "x", None, "DENY"),
            sec.PolicyRule(None, "x", None, "ALLOW"),
        ], default_effect="ALLOW")
        assert sec.check_policy(p, "U", "x", {}) == "DENY"

    def test_with_match_flag(self):
        effect, matched = sec.check_policy(allow_read(), "USER", "zz", {},
                                           with_match=True)
        assert (effect, matched) == ("DENY", False)


class TestSealing:
    def _ring(self, flow=7, key=0xDEADBEEF, enc=False):
        return sec.KeyRing(flow_keys={flow: key}, encryption_on=enc)

    def test_seal_then_verify(self):
        e = Engine()
        kr = self._ring()
        p = sec.seal(e.make_packet(src=1, dst=2, flow_id=7, payload=b"hi"), kr)
        assert sec.verify_tag(p, kr)

    def test_tampered_payload_fails(self):
        e = Engine()
        kr = self._ring()
        p = sec.seal(e.make_packet(src=1, dst=2, flow_id=7, payload=b"hi"), kr)
        bad = p.replace(payload=b"ho", payload_digest=digest64(b"ho"))
        assert not sec.verify_tag(bad, kr)

    def test_wrong_key_fails(self):
        e = Engine()
        p = sec.seal(e.make_packet(src=1, dst=2, flow_id=7, payload=b"hi"),
                     self._ring(key=1))
        assert not sec.verify_tag(p, self._ring(key=2))

    def test_missing_tag_fails(self):
        e = Engine()
        kr = self._ring()
        assert not sec.verify_tag(e.make_packet(src=1, dst=2, flow_id=7), kr)

    def test_no_key(self):
        e = Engine()
        with pytest.raises(NoKey):
            sec.seal(e.make_packet(src=1, dst=2, flow_id=99), self._ring())

    def test_encryption_round_trip(self):
        e = Engine()
        kr = self._ring(enc=True)
        plain = b"the quick brown fox"
        p = sec.seal(e.make_packet(src=1, dst=2, flow_id=7, payload=plain), kr)
        assert p.payload != plain
        assert sec.verify_tag(p, kr)  # verification on ciphertext
        assert sec.unseal(p, kr).payload == plain

    def test_ciphertext_digest_differs_from_plaintext(self):
        e = Engine()
        kr = self._ring(enc=True)
        plain = b"sensor reading 42"
        p = sec.seal(e.make_packet(src=1, dst=2, flow_id=7, payload=plain), kr)
        assert p.payload_digest != digest64(plain)

    def test_distinct_sequence_numbers_get_distinct_ciphertexts(self):
        e = Engine()
        kr = self._ring(enc=True)
        a = sec.seal(e.make_packet(src=1, dst=2, flow_id=7, payload=b"same"), kr)
        b = sec.seal(e.make_packet(src=1, dst=2, flow_id=7, payload=b"same"), kr)
        assert a.payload != b.payload

    def test_bulk_seal_verify_and_forgery_rejection(self):
        e = Engine()
        rng = Rng(5)
        kr = sec.KeyRing(flow_keys={f: 1000 + f for f in range(20)})
        for i in range(2000):
            flow = rng.randint(0, 20)
            payload = bytes([rng.randint(0, 256) for _ in range(4)])
            p = sec.seal(e.make_packet(src=1, dst=2, flow_id=flow,
                                       payload=payload), kr)
            assert sec.verify_tag(p, kr)
            forged = p.replace(auth_tag=(p.auth_tag ^ (1 << rng.randint(0, 64))))
            assert not sec.verify_tag(forged, kr)


class TestAttackSpecs:
    def test_flood_needs_rate(self):
        with pytest.raises(InvalidSpec):
            sec.AttackSpec("DOS_FLOOD", 0, 10, rate=0).validate()

    def test_start_before_stop(self):
        with pytest.raises(InvalidSpec):
            sec.AttackSpec("DOS_FLOOD", 10, 10, rate=1).validate()

    def test_unknown_kind(self):
        with pytest.raises(InvalidSpec):
            sec.AttackSpec("VOODOO", 0, 10).validate()

    def test_ddos_needs_sources(self):
        with pytest.raises(InvalidSpec):
            sec.AttackSpec("DDOS_FLOOD", 0, 10, rate=1).validate()

    def test_flood_schedules_rate_times_duration(self):
        e = Engine()
        summary = sec.inject_attack(
            e, sec.AttackSpec("DOS_FLOOD", 5, 15, target=3, rate=4))
        assert summary["scheduled_packets"] == 40
        # 40 sends plus AttackStart and AttackStop
        assert e.pending() == 42

    def test_ddos_round_robins_sources(self):
        e = Engine()
        spec = sec.AttackSpec("DDOS_FLOOD", 0, 2, target=3, rate=3,
                              sources=(10, 11))
        sec.inject_attack(e, spec)
        srcs = []
        while e.pending():
            _, ev = e.advance()
            if ev.kind == "PacketSend":
                srcs.append(ev.src)
        assert set(srcs) == {10, 11}
        assert abs(srcs.count(10) - srcs.count(11)) <= 1


class TestDetector:
    def test_flood_above_threshold_detected(self):
        d = sec.Detector(rate_threshold=20, window=50)
        for _ in range(25):
            d.note_packet(1, 2)
        f = d.scan_window(50)
        assert [x.kind for x in f] == ["DOS_FLOOD"]
        assert f[0].evidence["rate"] == 25

    def test_rate_at_threshold_not_flagged(self):
        d = sec.Detector(rate_threshold=20)
        for _ in range(20):
            d.note_packet(1, 2)
        assert d.scan_window(50) == []

    def test_window_reset(self):
        d = sec.Detector(rate_threshold=20)
        for _ in range(15):
            d.note_packet(1, 2)
        d.scan_window(50)
        for _ in range(15):
            d.note_packet(1, 2)
        assert d.scan_window(100) == []

    def test_ddos_aggregate(self):
        d = sec.Detector(rate_threshold=20)
        for src in (5, 6, 7):
            for _ in range(10):
                d.note_packet(src, 2)
        f = d.scan_window(50)
        assert [x.kind for x in f] == ["DDOS_FLOOD"]
        assert f[0].evidence["sources"] == 3

    def test_forgery_per_auth_failure(self):
        d = sec.Detector()
        d.note_packet(1, 2, auth_ok=False, flow_id=9)
        d.note_packet(1, 2, auth_ok=False, flow_id=9)
        f = d.scan_window(50)
        assert [x.kind for x in f] == ["PACKET_FORGE"] * 2

    def test_privilege_escalation_denial_count(self):
        d = sec.Detector(denial_threshold=3)
        for _ in range(3):
            d.note_denial("mallory")
        d.note_denial("alice")
        f = d.scan_window(50)
        assert [(x.kind, x.target) for x in f] == [("USER_PRIV_ESC", "mallory")]

    def test_false_positive_free_under_benign_random_load(self):
        # benign load spread across many pairs never crosses the threshold
        rng = np.random.default_rng(0)
        for trial in range(20):
            d = sec.Detector(rate_threshold=20)
            pairs = [(int(rng.integers(0, 40)), int(rng.integers(40, 80)))
                     for _ in range(200)]
            for s, t in pairs:
                d.note_packet(s, t)
            findings = d.scan_window(50)
            from collections import Counter
            per_pair = Counter(pairs)
            per_dst = Counter(t for _, t in pairs)
            expect_dos = any(c > 20 for c in per_pair.values())
            expect_ddos = any(c > 20 for c in per_dst.values())
            if not expect_dos and not expect_ddos:
                assert findings == []


class TestFindings:
    def _finding(self, kind="DOS_FLOOD", target=2, evidence=None):
        return sec.Finding(id=0, kind=kind, target=target, at=50,
                           evidence=evidence or {"src": 1, "rate": 30})

    def test_lifecycle_forward_only(self):
        f = self._finding()
        f.transition("PREVENTED")
        f.transition("HANDLED")
        with pytest.raises(ValueError):
            f.transition("PREVENTED")

    def test_prevent_installs_pair_rule(self):
        state = sec.SecurityState()
        f = self._finding()
        rule = sec.prevent(state, f, now=50)
        assert rule.kind == "PAIR" and rule.key == (1, 2)
        assert f.state == "PREVENTED"
        assert state.should_drop(1, 2, now=60)
        assert not state.should_drop(1, 3, now=60)

    def test_prevent_twice_rejected(self):
        state = sec.SecurityState()
        f = self._finding()
        sec.prevent(state, f, now=50)
        with pytest.raises(AlreadyPrevented):
            sec.prevent(state, f, now=51)

    def test_rule_cooldown_expiry(self):
        state = sec.SecurityState(cooldown=200)
        sec.prevent(state, self._finding(), now=50)
        assert state.should_drop(1, 2, now=249)
        assert not state.should_drop(1, 2, now=250)
        state.expire_rules(250)
        assert state.drop_rules == []

    def test_forge_rule_drops_unverified_only(self):
        state = sec.SecurityState()
        f = self._finding(kind="PACKET_FORGE", evidence={"src": 1, "flow": 9})
        sec.prevent(state, f, now=50)
        assert state.should_drop(1, 2, flow_id=9, verified=False, now=60)
        assert not state.should_drop(1, 2, flow_id=9, verified=True, now=60)

    def test_subject_lock(self):
        state = sec.SecurityState()
        f = self._finding(kind="USER_PRIV_ESC", target="mallory",
                          evidence={"denials": 5})
        sec.prevent(state, f, now=50)
        assert state.should_drop(1, 2, subject="mallory", now=60)
        assert not state.should_drop(1, 2, subject="alice", now=60)

    def test_handle_archives_in_kb(self):
        state = sec.SecurityState()
        f = self._finding()
        sec.handle(state, f, now=50)
        assert f.state == "HANDLED"
        assert f.id in state.kb.history

    def test_log_line_format(self):
        f = self._finding()
        assert f.log_line() == "50,DOS_FLOOD,2,DETECTED,rate=30;src=1"


class TestKnowledgeBase:
    def test_load_signatures(self):
        kb = sec.KnowledgeBase()
        n = kb.load_signatures(["DOS_FLOOD:src=1,rate=30", "",
                                "PACKET_FORGE:flow=2"])
        assert n == 2
        assert ("DOS_FLOOD", ("rate", "src")) in kb.signatures

    def test_duplicate_signatures_ignored(self):
        kb = sec.KnowledgeBase()
        kb.load_signatures(["DOS_FLOOD:src=1"])
        assert kb.load_signatures(["DOS_FLOOD:src=2"]) == 0


class TestAudit:
    def test_inventory_excludes_hosts(self):
        _, g = build_hierarchy(2, 2, 3)
        inv, anomalies = sec.audit_map(g)
        assert anomalies == []
        assert all(g.roles[v] != "HOST" for v in inv)
        assert len(inv) == 1 + 2 + 4

    def test_new_node_flagged(self):
        _, g = build_hierarchy(2, 1, 1)
        inv0, _ = sec.audit_map(g)
        g.add_vertex(999, "SWITCH")
        inv1, anomalies = sec.audit_map(g, previous=inv0)
        assert [a.evidence["node"] for a in anomalies] == [999]

    def test_status_summary(self):
        state = sec.SecurityState()
        f = sec.Finding(id=0, kind="DOS_FLOOD", evidence={}, at=1, target=2)
        state.record([f])
        sec.prevent(state, f, now=1)
        s = sec.security_status(state, now=2)
        assert s["findings"] == {"DETECTED": 0, "PREVENTED": 1, "HANDLED": 0}
        assert s["active_rules"] == 1


class TestStateRoundTrip:
    def test_drop_rules_survive_dump_and_load(self):
        state = sec.SecurityState()
        sec.prevent(state, sec.Finding(id=0, kind="DOS_FLOOD",
                                       evidence={"src": 1}, at=5, target=2),
                    now=5)
        fresh = sec.SecurityState()
        fresh.load_state(state.state_dict())
        assert fresh.should_drop(1, 2, now=6)
