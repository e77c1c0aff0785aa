import random

import pytest
from hypothesis import given, settings, strategies as st

from p4fuzz import RuntimeFault, load_entries, parse_program
from p4fuzz.entries import Exact, Lpm, TableConfig
from p4fuzz.interpreter import Interpreter, SwitchState, register_op, run_pipeline, table_lookup
from p4fuzz.packet import Packet

from conftest import ALL_FIXTURES, load
from oracles import crc32_bitwise, naive_lookup

LOOKUP = parse_program("""
header_type h_t { fields { a : 8; b : 16; c : 8; } }
header h_t h;
parser start { extract(h); return ingress; }
action set(v) { modify_field(h.c, v); }
action nop() { no_op(); }
table ex { reads { h.a : exact; h.c : exact; } actions { set; nop; } default_action : nop(); }
table lp { reads { h.a : exact; h.b : lpm; } actions { set; nop; } default_action : nop(); }
table tc { reads { h.a : ternary; h.b : ternary; } actions { set; nop; } default_action : nop(); }
control ingress { apply(ex); apply(lp); apply(tc); }
""")
WIDTHS = {"h.a": 8, "h.b": 16, "h.c": 8}


def eth_ip(dst_mac, dst_ip, ttl=64):
    return Packet(["ethernet", "ipv4"], {"ethernet.dstAddr": dst_mac, "ethernet.etherType": 0x0800,
                                         "ipv4.dstAddr": dst_ip, "ipv4.ttl": ttl})


def test_exact_hit_on_ethertype():
    ld = load("mirroring")
    cfg = ld.plain_config.copy()
    e = cfg.apply_command("table_add tiMirror aiMirror 0x0800 =>")
    assert table_lookup(ld.ir, "tiMirror", eth_ip(1, 2), cfg) == e


def test_lpm_prefers_longer_prefix():
    ld = load("rate_limiter")
    cfg = load_entries("table_add forward fwd 10.0.0.0/8 => 1\ntable_add forward fwd 10.1.0.0/16 => 2",
                       ld.ir)
    hit = table_lookup(ld.ir, "forward", eth_ip(0, 0x0A010203), cfg)
    assert hit.matches == (Lpm(0x0A010000, 16),)
    assert table_lookup(ld.ir, "forward", eth_ip(0, 0x0B000000), cfg) is None


def test_zero_entries_default(running):
    cfg = load_entries("", running.ir)
    assert table_lookup(running.ir, "ethernet_forward", eth_ip(0x00005E005301, 0), cfg) is None


def test_running_example_hand_trace(running):
    ir, cfg = running.ir, running.plain_config
    st_ = SwitchState.fresh(ir, cfg)
    # on_l2_hit (vrf 7), then 10.9.9.9 misses 10.1.0.0/16
    r = run_pipeline(ir, eth_ip(0x00005E005301, 0x0A090909), cfg, st_)
    assert [(s.table, s.action, s.entry is None) for s in r.trace.steps] == [
        ("ethernet_forward", "on_l2_hit", False), ("ipv4_forward", "on_l3_miss", True)]
    assert r.dropped and r.outputs == []
    # 10.1.2.3 hits on_l3_hit, ttl decremented
    r = run_pipeline(ir, eth_ip(0x00005E005301, 0x0A010203, ttl=5), cfg, st_)
    assert r.trace.pairs() == {("ethernet_forward", "on_l2_hit"), ("ipv4_forward", "on_l3_hit")}
    assert r.packet.fields["ipv4.ttl"] == 4 and r.packet.fields["l3_metadata.vrf"] == 7
    assert not r.dropped and len(r.outputs) == 1
    # unknown MAC: vrf stays 0 so the (vrf=7) LPM entry cannot match
    r = run_pipeline(ir, eth_ip(0x1, 0x0A010203), cfg, st_)
    assert r.trace.pairs() == {("ethernet_forward", "on_l2_miss"), ("ipv4_forward", "on_l3_miss")}
    # non-IP packet never reaches ipv4_forward
    r = run_pipeline(ir, Packet(["ethernet"], {"ethernet.etherType": 0x0806}), cfg, st_)
    assert [s.table for s in r.trace.steps] == ["ethernet_forward"]


def _mirror(bug: bool, extra: str = ""):
    ld = load("mirroring")
    cfg = load_entries(ld.entries_text + extra, ld.ir)
    st_ = SwitchState.fresh(ld.ir, cfg, buggy_multicast_default_action=bug)
    return run_pipeline(ld.ir, eth_ip(0x2, 0x01020304), cfg, st_)


def test_mirror_bug_suppresses_copies():
    r = _mirror(True)
    assert r.packet.fields["mirror_metadata.requested"] == 1
    assert r.packet.fields["standard_metadata.mcast_grp"] == 1
    assert r.packet.fields["standard_metadata.mcast_copies"] == 0
    assert len(r.outputs) == 1 and r.outputs[0].egress_port == 2


def test_mirror_without_bug_multicasts():
    r = _mirror(False)
    assert sorted(o.egress_port for o in r.outputs) == [3, 4]
    assert r.packet.fields["standard_metadata.mcast_copies"] == 2


def test_mirror_bug_needs_empty_table():
    r = _mirror(True, "table_add tiMirror aiMirror 0x0800 =>\n")
    assert sorted(o.egress_port for o in r.outputs) == [3, 4]
    # a miss on a non-empty table is not affected either
    r = _mirror(True, "table_add tiMirror aiMirror 0x86dd =>\n")
    assert r.trace.steps[-1].entry is None
    assert r.packet.fields["standard_metadata.mcast_copies"] == 2


def test_mirror_assertion_fires_only_in_bug_mode():
    ld = load("mirroring")
    for bug, fired in ((True, 1), (False, 0)):
        cfg = ld.config
        st_ = SwitchState.fresh(ld.iir.program, cfg, buggy_multicast_default_action=bug)
        r = Interpreter(ld.iir.program).run(eth_ip(0x2, 0x01020304), cfg, st_)
        assert ld.iir.layout.decode(r.packet.fields, "assertion") == fired


def test_register_ops():
    ld = load("rate_limiter")
    st_ = SwitchState.fresh(ld.ir)
    assert register_op(st_, "flow_counter", 0, "read") == 0
    register_op(st_, "flow_counter", 0, "add", 1)
    register_op(st_, "flow_counter", 0, "add", 1)
    assert register_op(st_, "flow_counter", 0, "read") == 2
    with pytest.raises(RuntimeFault):
        register_op(st_, "flow_counter", 16, "read")


def test_register_wraps_at_width():
    ir = parse_program("""
header_type h_t { fields { a : 8; } }
header h_t h;
register r8 { width : 8; instance_count : 2; }
parser start { extract(h); return ingress; }
control ingress { }
""")
    st_ = SwitchState.fresh(ir)
    register_op(st_, "r8", 1, "write", 255)
    assert register_op(st_, "r8", 1, "add", 1) == 0


def test_rate_limiter_counter_rolls_over():
    ld = load("rate_limiter")
    cfg = ld.plain_config
    st_ = SwitchState.fresh(ld.ir, cfg)
    pkt = Packet(["ethernet", "ipv4"], {"ethernet.etherType": 0x0800, "ipv4.srcAddr": 0x01020304,
                                        "ipv4.dstAddr": 0x0A000001})
    limited = []
    for _ in range(32):
        r = run_pipeline(ld.ir, pkt.copy(), cfg, st_)
        limited.append(("limit", "rl_drop") in r.trace.pairs())
    # 4-bit counter: values 12..15 are limited, then it wraps to 0
    assert limited == ([False] * 11 + [True] * 4 + [False]) * 2


def test_out_of_bounds_register_faults():
    ir = parse_program("""
header_type h_t { fields { i : 8; } }
header h_t h;
register r { width : 8; instance_count : 4; }
parser start { extract(h); return ingress; }
action bump() { count(r, h.i); }
table t { actions { bump; } default_action : bump(); }
control ingress { apply(t); }
""")
    cfg = load_entries("", ir)
    r = run_pipeline(ir, Packet(["h"], {"h.i": 9}), cfg, SwitchState.fresh(ir))
    assert r.fault and r.dropped


def test_hash_is_crc32_of_big_endian_fields():
    ld = load("load_balancer")
    cfg = ld.plain_config
    vals = {"ethernet.etherType": 0x0800, "ipv4.protocol": 6, "ipv4.srcAddr": 0x0A000001,
            "ipv4.dstAddr": 0x0A000002, "tcp.srcPort": 1234, "tcp.dstPort": 80}
    r = run_pipeline(ld.ir, Packet(["ethernet", "ipv4", "tcp"], dict(vals)), cfg, SwitchState.fresh(ld.ir))
    data = (vals["ipv4.srcAddr"].to_bytes(4, "big") + vals["ipv4.dstAddr"].to_bytes(4, "big")
            + bytes([6]) + (1234).to_bytes(2, "big") + (80).to_bytes(2, "big"))
    assert r.packet.fields["lb_metadata.bucket"] == crc32_bitwise(data) % 4


def test_add_header_in_vlan_fixture():
    ld = load("vlan")
    r = run_pipeline(ld.ir, Packet(["ethernet"], {"ethernet.etherType": 0x0800}), ld.plain_config,
                     SwitchState.fresh(ld.ir))
    assert r.packet.headers == ["ethernet", "vlan[0]"]
    assert r.packet.fields["vlan[0].etherType"] == 0x0800
    assert r.packet.fields["ethernet.etherType"] == 0x8100


@pytest.mark.parametrize("name", ALL_FIXTURES)
def test_determinism(name):
    ld = load(name)
    rng = random.Random(3)
    pkts = [ld.random_packet(rng) for _ in range(200)]

    def go():
        st_ = SwitchState.fresh(ld.ir, ld.plain_config)
        out = [run_pipeline(ld.ir, p.copy(), ld.plain_config, st_) for p in pkts]
        return [(r.packet.fields, [o.fields for o in r.outputs], r.trace.steps) for r in out], st_.snapshot()

    assert go() == go()


def test_trace_no_longer_than_applies():
    for name in ALL_FIXTURES:
        ld = load(name)
        rng = random.Random(11)
        st_ = SwitchState.fresh(ld.ir, ld.plain_config)
        for _ in range(100):
            r = run_pipeline(ld.ir, ld.random_packet(rng), ld.plain_config, st_)
            assert len(r.trace.steps) <= len(ld.ir.tables)


# -- lookups against the brute-force oracle ---------------------------------

entry_rows = st.lists(
    st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(0, 16), st.integers(0, 15),
              st.integers(0, 0xFFFF), st.integers(0, 7)),
    max_size=12)


@given(entry_rows, st.lists(st.tuples(st.integers(0, 3), st.integers(0, 0xFFFF), st.integers(0, 3)),
                            min_size=1, max_size=20), st.randoms(use_true_random=False))
@settings(max_examples=200, deadline=None)
def test_lookup_matches_oracle(rows, packets, rnd):
    cfg = TableConfig(LOOKUP)
    for a, c, plen, tmask, bval, prio in rows:
        for line in (f"table_add ex set {a} {c} => {prio}",
                     f"table_add lp set {a} {bval}/{plen} => {prio}",
                     f"table_add tc set {a}&&&{tmask & 3} {bval}&&&0xff00 => {prio} {prio}"):
            try:
                cfg.apply_command(line)
            except Exception:
                pass  # duplicate key
    interp = Interpreter(LOOKUP)
    for table in ("ex", "lp", "tc"):
        t = LOOKUP.table(table)
        keys = [(k.field, k.match, WIDTHS[k.field]) for k in t.keys]
        oracle_rows = []
        for e in cfg.entries[table]:
            ms = []
            for m in e.matches:
                if isinstance(m, Exact):
                    ms.append(("exact", m.value))
                elif isinstance(m, Lpm):
                    ms.append(("lpm", m.value, m.prefix_len))
                else:
                    ms.append(("ternary", m.value, m.mask))
            oracle_rows.append((ms, e.priority or 0, e.seq, e))
        for a, b, c in packets:
            f = {"h.a": a, "h.b": b, "h.c": c}
            assert interp.lookup(table, f, cfg) == naive_lookup(keys, oracle_rows, f)
    # exact/lpm results do not depend on insertion order
    shuffled = TableConfig(LOOKUP)
    lines = [e.command() for t in ("ex", "lp") for e in cfg.entries[t]]
    rnd.shuffle(lines)
    for line in lines:
        shuffled.apply_command(line)
    for table in ("ex", "lp"):
        for a, b, c in packets:
            f = {"h.a": a, "h.b": b, "h.c": c}
            x, y = interp.lookup(table, f, cfg), Interpreter(LOOKUP).lookup(table, f, shuffled)
            assert (x is None) == (y is None)
            if x is not None:
                assert (x.matches, x.params) == (y.matches, y.params)


def test_ternary_ties_break_by_insertion():
    cfg = TableConfig(LOOKUP)
    first = cfg.apply_command("table_add tc set 0&&&0 0&&&0 => 1 5")
    cfg.apply_command("table_add tc set 1&&&0xff 0&&&0 => 2 5")
    assert Interpreter(LOOKUP).lookup("tc", {"h.a": 1, "h.b": 0, "h.c": 0}, cfg) == first
