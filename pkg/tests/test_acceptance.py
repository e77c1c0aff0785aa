"""Acceptance gate: one check per criterion, each reported as a PASS/FAIL line.

Run under pytest (lines appear in the terminal summary) or directly with
``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import json
import random
import shutil
import sys
import tempfile
import zlib
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from p4fuzz import fixture_path, fixture_text  # noqa: E402
from p4fuzz.analysis import build_dependency_graph, enumerate_parser_paths, mutable_fields_for_table  # noqa: E402
from p4fuzz.cli import main as cli_main  # noqa: E402
from p4fuzz.control_plane import ControlPlane, from_scratch_crc, parse_cp_script  # noqa: E402
from p4fuzz.crc import crc32, crc_pop, crc_push  # noqa: E402
from p4fuzz.fuzz.corpus import random_values  # noqa: E402
from p4fuzz.fuzz.coverage import CoverageTracker  # noqa: E402
from p4fuzz.packet import Packet, parse_packet, serialize_packet  # noqa: E402
from p4fuzz.report import strip_wall_clock  # noqa: E402

from checks import flip_violations, transparency_mismatches  # noqa: E402
from conftest import ALL_FIXTURES, COVERAGE_FIXTURES, load, run_fixture  # noqa: E402
from oracles import crc32_bitwise  # noqa: E402

RESULTS: dict[str, tuple[bool, str]] = {}


def throughput():
    _, s = run_fixture("running_example", iterations=300_000, time_budget=None, stop_on_full_coverage=False)
    rate = s.iterations / s.wall_time
    return rate >= 50_000, f"{rate:,.0f} iterations/s on running_example (floor 50,000)"


def coverage_speed():
    parts, ok = [], True
    for name in COVERAGE_FIXTURES:
        _, s = run_fixture(name, iterations=1_000_000, time_budget=None)
        good = s.coverage == 1.0 and s.iterations <= 1_000_000 and s.wall_time < 60
        ok &= good
        parts.append(f"{name} {s.coverage:.0%} in {s.iterations} it/{s.wall_time:.2f}s")
    return ok, "; ".join(parts)


def mirroring_bug():
    _, bug = run_fixture("mirroring", iterations=100_000, time_budget=10.0,
                         buggy_multicast_default_action=True, stop_on_violation=True)
    v = bug.first_violation("mirrored")
    _, clean = run_fixture("mirroring", iterations=1_000_000, time_budget=None,
                           stop_on_full_coverage=False)
    ok = v is not None and v.iteration <= 100_000 and v.wall_time <= 10 and not clean.violations
    found = f"iteration {v.iteration} ({v.wall_time * 1000:.1f} ms)" if v else "never"
    return ok, (f"bug on: violation at {found}; bug off: {len(clean.violations)} violations "
                f"in {clean.iterations} iterations")


def factor_analysis():
    _, full = run_fixture("magic32", iterations=10_000, time_budget=None)
    _, nomagic = run_fixture("magic32", iterations=1_000_000, time_budget=None, magic_values=False)
    hits = {("host_route", "to_host_a"), ("host_route", "to_host_b")}
    missed_hits = not hits & set(nomagic.covered_pairs)
    fewer = []
    for seed in range(10):
        kw = dict(iterations=10_000, time_budget=None, seed=seed, stop_on_full_coverage=False)
        a = run_fixture("magic32", **kw)[1].paths_covered
        b = run_fixture("magic32", coverage_guidance=False, **kw)[1].paths_covered
        fewer.append((b, a))
    ok = full.coverage == 1.0 and missed_hits and all(b < a for b, a in fewer)
    return ok, (f"full: 100% after {full.iterations} it; magic off: "
                f"{len(nomagic.covered_pairs)}/{nomagic.total_actions} actions after {nomagic.iterations} it; "
                f"guidance off vs full paths at 1e4: {fewer}")


def parser_analysis():
    ld = load("running_example")
    ok = len(ld.templates) == 2
    rng = random.Random(0)
    checked = 0
    for name in ALL_FIXTURES:
        f = load(name)
        widths = f.ir.field_widths()
        for t in enumerate_parser_paths(f.ir):
            for _ in range(500):
                pkt = parse_packet(serialize_packet(Packet(list(t.headers), random_values(t, widths, rng)),
                                                    f.ir), f.ir)
                ok &= tuple(pkt.headers) == t.headers
                checked += 1
    return ok, f"running_example: {len(ld.templates)} templates; {checked} serializations re-parsed"


def dependency_graph():
    ld = load("running_example")
    g = build_dependency_graph(ld.ir)
    want = {("ethernet.dstAddr", "l3_metadata.vrf", 0), ("ethernet.dstAddr", "ethernet_forward", 0),
            ("l3_metadata.vrf", "ipv4_forward", 1), ("ipv4.dstAddr", "ipv4_forward", 1),
            ("ethernet_forward", "ipv4_forward", 0)}
    edges = g.edge_list()
    mut = mutable_fields_for_table(g, "ipv4_forward")
    small = [n for n in ALL_FIXTURES if len(load(n).ir.tables) <= 3]
    bad = {n: flip_violations(load(n), packets=300, seed=4) for n in small}
    ok = (len(edges) == 5 and set(edges) == want
          and mut == {"ipv4.dstAddr", "ethernet.dstAddr", "l3_metadata.vrf"}
          and not any(bad.values()))
    return ok, (f"{len(edges)} edges, mutable(ipv4_forward)={sorted(mut)}; "
                f"flip oracle on {small}: {sum(map(len, bad.values()))} violations")


def transparency():
    bad = {n: transparency_mismatches(load(n), 10_000, seed=9) for n in ALL_FIXTURES}
    n_bad = sum(map(len, bad.values()))
    return n_bad == 0, f"{len(ALL_FIXTURES)} fixtures x 10,000 packets, {n_bad} mismatches"


def crc_properties():
    rng = random.Random(1)
    inverse = True
    for _ in range(1000):
        chunks = [rng.randbytes(rng.randrange(0, 32)) for _ in range(rng.randrange(1, 8))]
        c = start = rng.getrandbits(32)
        for ch in chunks:
            c = crc_push(c, ch)
        inverse &= c == zlib.crc32(b"".join(chunks), start)
        for ch in reversed(chunks):
            c = crc_pop(c, ch)
        inverse &= c == start
    script = parse_cp_script("""
var a = 0; var b : addr = 0;
handler inc() on packet when (x == 1) { set a = a + 1; call note(a); }
handler dec() on packet when (x == 2) { set a = a - 1; }
handler note(v) { set b = b + v; }
handler deep(n) { call deep(n + 1); }
handler go() on packet when (x == 3) { call deep(0); }
""")
    cfg = load("dv_router").plain_config
    incremental = True
    for _ in range(1000):
        cp = ControlPlane(script, cfg.copy())
        for _ in range(rng.randrange(1, 10)):
            cp.on_packet_in({"x": rng.randrange(1, 4)}, [], original=0)
        incremental &= cp.state_crc == from_scratch_crc(cp)
    check = crc32(b"123456789")
    ok = inverse and incremental and check == 0xCBF43926 == crc32_bitwise(b"123456789")
    return ok, (f"push/pop inverse over 1000 sequences: {inverse}; incremental == from-scratch over "
                f"1000 handler sequences: {incremental}; check value {check:#010x}")


def cp_seeding():
    ld = load("dv_router")
    cp = ControlPlane(parse_cp_script(fixture_text("dv_router.cp"), ld.ir), ld.plain_config.copy())
    rng = random.Random(2)
    pool = [(d << 24, p, (d + p) % 50 + 1) for d in (10, 20, 172, 192) for p in (8, 16, 24)]
    seq = [rng.choice(pool) for _ in range(50)]

    def send(adv):
        f = {"dv.dst": adv[0], "dv.plen": adv[1], "dv.port": adv[2]}
        return cp.on_packet_in(f, ["ethernet", "dv"], original=adv)

    seeds = [s for adv in seq for s in send(adv)]
    replay = [s for adv in seq for s in send(adv)]
    novel = len(set(seq))
    ok = len(seeds) == novel and all(s.pkt_typ == 3 for s in seeds) and not replay
    _, stats = run_fixture("dv_router", iterations=200_000, time_budget=None)
    ok &= stats.cp_seeds >= 1 and stats.coverage == 1.0
    return ok, (f"{len(seeds)} seeds for {novel} novel updates, {len(replay)} on replay; "
                f"campaign: {stats.cp_seeds} control-plane seeds, coverage {stats.coverage:.0%}")


def bloom_tracker():
    worst, fn, runs = 0.0, 0, 0
    for name in ALL_FIXTURES:
        for m, k in ((1 << 20, 4), (4096, 3), (1024, 2), (64, 2)):
            _, s = run_fixture(name, iterations=20_000, time_budget=None, bloom_m=m, bloom_k=k,
                               stop_on_full_coverage=False)
            runs += 1
            fn += s.bloom_false_negatives
            worst = max(worst, s.bloom_measured_fp_rate / s.bloom_analytic_fp_rate)
    # sampled rate in a regime dense enough for sampling to resolve it
    sampled = []
    for m, k, n in ((1024, 3, 150), (4096, 4, 500), (256, 2, 40)):
        t = CoverageTracker(8, m=m, k=k)
        rng = random.Random(m)
        while len(t.shadow) < n:
            t.is_novel(rng.getrandbits(48))
        fn += t.false_negatives()
        sampled.append(t.measured_fp_rate(100_000, seed=k) / t.analytic_fp_rate())
    ok = fn == 0 and worst <= 2.0 and max(sampled) <= 2.0
    return ok, (f"{runs} campaigns + 3 dense filters: {fn} false negatives; worst measured/analytic "
                f"{worst:.3f} (campaigns), {max(sampled):.3f} (100k random probes)")


def determinism():
    ok, parts = True, []
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        for p in fixture_path("running_example.p4").parent.iterdir():
            if p.is_file():
                shutil.copy(p, tmp / p.name)
        for conf in ("running_example.conf", "firewall.conf", "mirroring_bug.conf", "dv_router.conf"):
            blobs = []
            for _ in range(2):
                rep = tmp / "r.json"
                cli_main(["fuzz", str(tmp / conf), "--deterministic", "-q", "--report", str(rep)])
                blobs.append(json.dumps(strip_wall_clock(json.loads(rep.read_text())),
                                        sort_keys=True).encode())
            same = blobs[0] == blobs[1]
            ok &= same
            parts.append(f"{conf}: {'identical' if same else 'DIFFERENT'}")
    return ok, "; ".join(parts)


CRITERIA = [
    ("throughput", "software loop >= 50k iterations/s", throughput),
    ("coverage_speed", "five fixtures reach 100% coverage < 60 s and 1e6 iterations", coverage_speed),
    ("mirroring_bug", "violation found < 10 s / 1e5 it; none when fixed", mirroring_bug),
    ("factor_analysis", "magic values and coverage guidance ablations", factor_analysis),
    ("parser_analysis", "2 templates; serializations re-parse", parser_analysis),
    ("dependency_graph", "5 labeled edges, mutable set, flip oracle", dependency_graph),
    ("transparency", "instrumented and plain runs agree", transparency),
    ("crc", "push/pop inverse, incremental state hash, check value", crc_properties),
    ("cp_seeding", "one seed per novel state, none on replay", cp_seeding),
    ("bloom", "no false negatives, FP rate <= 2x analytic", bloom_tracker),
    ("determinism", "--deterministic reports identical", determinism),
]
SLOW = {"mirroring_bug", "factor_analysis", "coverage_speed", "bloom", "transparency"}


def _line(key: str, title: str, ok: bool, detail: str) -> str:
    return f"{'PASS' if ok else 'FAIL'}  {key:<17} {title}: {detail}"


@pytest.mark.parametrize("key,title,check", [
    pytest.param(*c, id=c[0], marks=[pytest.mark.slow] if c[0] in SLOW else []) for c in CRITERIA])
def test_criterion(key, title, check):
    ok, detail = check()
    line = _line(key, title, ok, detail)
    RESULTS[key] = (ok, line)
    print(line)
    assert ok, line


if __name__ == "__main__":
    only = set(sys.argv[1:])
    failed = 0
    for key, title, check in CRITERIA:
        if only and key not in only:
            continue
        ok, detail = check()
        failed += not ok
        print(_line(key, title, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
