import random
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from p4fuzz import parse_program
from p4fuzz.analysis import build_dependency_graph
from p4fuzz.errors import ConfigError, NoTemplates
from p4fuzz.fuzz import (BloomFilter, CampaignConfig, CoverageTracker, MagicValueStore, MutationConfig,
                         Mutator, Promote, Recycle, Violation, config_from_mapping,
                         generate_packet, init_corpus, mutate, parse_config_text, process_result,
                         run_campaign)
from p4fuzz.packet import Packet, parse_packet, serialize_packet
from p4fuzz.report import CampaignReport

from conftest import ALL_FIXTURES, fixture_settings, load, run_fixture
from oracles import bloom_fp_bound

# -- configuration -----------------------------------------------------------------


def test_defaults_validate():
    c = CampaignConfig().validate()
    assert c.mutation.weights() == [0.4, 0.4, 0.05, 0.15]


def test_text_config():
    c = parse_config_text("""
# comment
program = x.p4
iterations = 1e3
p_magic = 0.7
p_table = 0.1
assertion = assert a(h.x == 1)
assertion = assert b(h.x == 2)
magic_values = off
time_budget = none
""")
    assert c.iterations == 1000 and c.mutation.p_magic == 0.7 and c.time_budget is None
    assert c.assertions == ("assert a(h.x == 1)", "assert b(h.x == 2)") and c.magic_values is False


def test_json_config_nested_mutation():
    c = parse_config_text('{"seed": 3, "mutation": {"p_repeat": 0.15, "p_random": 0.05}}')
    assert c.seed == 3 and c.mutation.p_repeat == 0.15


@pytest.mark.parametrize("data,needle", [
    ({"p_magic": 0.9}, "p_magic + p_table + p_repeat + p_random"),
    ({"p_table": -0.1, "p_magic": 0.9}, "p_table"),
    ({"iterations": "lots"}, "iterations"),
    ({"max_chain": 0}, "max_chain"),
    ({"bloom_k": 0}, "bloom_k"),
    ({"colour": "red"}, "colour"),
    ({"stop_on_violation": "maybe"}, "stop_on_violation"),
])
def test_config_errors_name_the_field(data, needle):
    with pytest.raises(ConfigError, match=needle.replace("+", r"\+")):
        config_from_mapping(data)


def test_probabilities_summing_to_one_and_a_half():
    with pytest.raises(ConfigError, match="sum to 1, got 1.5"):
        MutationConfig(p_magic=0.5, p_table=0.5, p_repeat=0.25, p_random=0.25).validate()


# -- corpus ----------------------------------------------------------------------


def test_init_corpus_one_seed_per_template(running, rng):
    corpus = init_corpus(running.templates, running.ir, rng, build_dependency_graph(running.ir))
    assert [s.headers for s in corpus] == [("ethernet",), ("ethernet", "ipv4")]
    assert corpus[1].values["ethernet.etherType"] == 0x0800
    assert corpus[0].values["ethernet.etherType"] != 0x0800
    assert corpus[1].tables == ["ethernet_forward", "ipv4_forward"]


def test_init_corpus_no_templates(rng):
    with pytest.raises(NoTemplates):
        init_corpus([], parse_program("control ingress { }\n"), rng)


def test_generate_packet_is_uniform(running):
    rng = random.Random(5)
    corpus = init_corpus(running.templates, running.ir, rng)
    counts = Counter(generate_packet(corpus, rng)[0].template_index for _ in range(10_000))
    assert 0.45 <= counts[0] / 10_000 <= 0.55
    seed, pkt = generate_packet(corpus, rng)
    assert pkt.fields["fp4.pkt_typ"] == 0 and tuple(pkt.headers) == seed.headers


# -- magic values ----------------------------------------------------------------


def test_magic_store_from_entries(running):
    store = MagicValueStore(running.ir)
    for es in running.plain_config.entries.values():
        for e in es:
            store.register_table_entry(e)
    entries = [e for es in running.plain_config.entries.values() for e in es]
    assert len(store) == len({e.matches for e in entries})
    assert not store.register_table_entry(running.plain_config.entries["ethernet_forward"][0])


COPY = parse_program("""
header_type h_t { fields { y : 8; } }
header_type m_t { fields { x : 8; z : 8; } }
header h_t h;
metadata m_t meta;
parser start { extract(h); return ingress; }
action copy() { modify_field(meta.x, h.y); }
action hit() { no_op(); }
action miss() { no_op(); }
table t0 { actions { copy; } default_action : copy(); }
table t1 { reads { meta.x : exact; } actions { hit; miss; } default_action : miss(); }
table t2 { actions { miss; } default_action : miss(); }
control ingress { apply(t0); apply(t1); if (meta.z == 3) { apply(t2); } }
""")


def test_magic_back_propagates_through_copies():
    from p4fuzz.entries import load_entries
    store = MagicValueStore(COPY)
    cfg = load_entries("table_add t1 hit 77 =>\n", COPY)
    assert store.register_table_entry(cfg.entries["t1"][0])
    assert store.applicable(frozenset({"h.y"})) == [(("h.y", 77),)]
    store.add_static()
    # meta.z has no packet origin, so it projects away
    assert store.applicable(frozenset({"h.y"})) == [(("h.y", 77),)]


def test_magic_rejects_oversized_value():
    store = MagicValueStore(COPY)
    with pytest.raises(ValueError):
        store.add("x", {"h.y": 300})


# -- mutation --------------------------------------------------------------------


def _mutator(ld, store=True, **mut):
    g = build_dependency_graph(ld.ir)
    ms = None
    if store:
        ms = MagicValueStore(ld.ir)
        ms.add_static()
        for es in ld.plain_config.entries.values():
            for e in es:
                ms.register_table_entry(e)
    return Mutator(ld.ir, MutationConfig(**mut) if mut else MutationConfig(), g, ms), g


@pytest.mark.parametrize("name", ALL_FIXTURES)
def test_mutation_keeps_parser_path(name):
    ld = load(name)
    m, g = _mutator(ld)
    rng = random.Random(2)
    corpus = init_corpus(ld.templates, ld.ir, rng, g)
    for _ in range(400):
        seed = rng.choice(corpus)
        values = m.mutate(dict(seed.values), seed, rng)
        assert values["fp4.pkt_typ"] == 2
        for ref, v in seed.template.constrained:
            assert values[ref] == v
        pkt = parse_packet(serialize_packet(Packet(list(seed.headers), values), ld.ir), ld.ir)
        assert tuple(pkt.headers) == seed.headers


def test_magic_only_mutation_writes_entry_values():
    ld = load("magic32")
    m, g = _mutator(ld, p_magic=1.0, p_table=0.0, p_repeat=0.0, p_random=0.0, max_chain=1)
    rng = random.Random(0)
    (seed,) = init_corpus(ld.templates, ld.ir, rng, g)[1:]
    seen = {m.mutate(dict(seed.values), seed, rng)["ipv4.dstAddr"] for _ in range(200)}
    assert seen == {0x0A000001, 0xAC100509}
    assert m.counts["magic"] == 200


def test_table_strategy_only_touches_table_fields(running):
    m, g = _mutator(running, p_magic=0.0, p_table=1.0, p_repeat=0.0, p_random=0.0)
    rng = random.Random(0)
    seed = init_corpus(running.templates, running.ir, rng, g)[1]
    allowed = {"ethernet.dstAddr", "ipv4.dstAddr"}
    for _ in range(200):
        v = m.mutate(dict(seed.values), seed, rng)
        changed = {k for k in seed.values if v[k] != seed.values[k]}
        assert changed <= allowed


def test_repeat_first_sends_seed_unchanged(running):
    m, g = _mutator(running, p_magic=0.0, p_table=0.0, p_repeat=1.0, p_random=0.0)
    rng = random.Random(0)
    seed = init_corpus(running.templates, running.ir, rng, g)[0]
    v = m.mutate(dict(seed.values), seed, rng)
    assert {k: v[k] for k in seed.values} == seed.values and m.applied == 0


def test_width_cap_limits_changed_bits(running):
    m, g = _mutator(running, store=False, p_magic=0.0, p_table=0.0, p_repeat=0.0, p_random=1.0,
                    max_chain=1, width_cap=8)
    rng = random.Random(0)
    seed = init_corpus(running.templates, running.ir, rng, g)[1]
    for _ in range(200):
        v = m.mutate(dict(seed.values), seed, rng)
        for k in ("ethernet.dstAddr", "ipv4.dstAddr"):
            diff = v[k] ^ seed.values[k]
            if diff:
                assert diff.bit_length() - (diff & -diff).bit_length() < 8


def test_module_level_mutate(running):
    g = build_dependency_graph(running.ir)
    rng = random.Random(1)
    seed = init_corpus(running.templates, running.ir, rng, g)[1]
    pkt = mutate(seed.packet(), MutationConfig(), None, g, rng, seed, running.ir)
    assert pkt.fields["fp4.pkt_typ"] == 2 and pkt.fields["ethernet.etherType"] == 0x0800


# -- coverage tracking -----------------------------------------------------------


def _bits(layout, kind, idxs):
    return {ref: int(i in idxs) for i, ref in enumerate(layout.field_refs(kind))}


def test_process_result_outcomes():
    ld = load("mirroring")
    layout = ld.iir.layout
    tracker = CoverageTracker(len(layout.visited))
    rng = random.Random(0)
    corpus = init_corpus(ld.templates, ld.ir, rng)
    parent = corpus[0]
    fields = {**_bits(layout, "visited", {0}), **_bits(layout, "assertion", set())}
    out = process_result(fields, tracker, corpus, layout, parent, dict(parent.values))
    assert isinstance(out, Promote) and corpus[-1] is out.seed and out.seed.provenance == "coverage"
    assert isinstance(process_result(fields, tracker, corpus, layout, parent, parent.values), Recycle)
    fields.update(_bits(layout, "assertion", {0}))
    out = process_result(fields, tracker, corpus, layout, parent, parent.values)
    assert isinstance(out, Violation) and out.assertions == ["mirrored"]
    assert tracker.paths_covered == 1 and tracker.actions_covered == 1


@settings(max_examples=50)
@given(st.sets(st.integers(0, 1 << 40), max_size=300))
def test_bloom_has_no_false_negatives(keys):
    t = CoverageTracker(8, m=512, k=3)
    for key in keys:
        t.is_novel(key)
    assert t.false_negatives() == 0
    assert all(key in t.bloom for key in keys)


@pytest.mark.parametrize("m,k,n", [(1024, 3, 150), (4096, 4, 500), (256, 2, 40)])
def test_bloom_fp_rate_near_analytic(m, k, n):
    t = CoverageTracker(8, m=m, k=k)
    rng = random.Random(m)
    while len(t.shadow) < n:
        t.is_novel(rng.getrandbits(48))
    assert t.false_negatives() == 0
    bound = bloom_fp_bound(len(t.shadow), m, k)
    assert t.analytic_fp_rate() == pytest.approx(bound)
    assert t.measured_fp_rate(20_000, seed=1) <= 2 * bound
    assert t.fp_rate() == pytest.approx(t.measured_fp_rate(100_000, seed=2), rel=0.15)


def test_bloom_rejects_bad_sizes():
    with pytest.raises(ValueError):
        BloomFilter(4, 1)


# -- campaigns -------------------------------------------------------------------


def test_zero_budget():
    _, stats = run_fixture("running_example", iterations=0, time_budget=None)
    assert stats.iterations == 0 and stats.coverage == 0.0 and stats.stop_reason == "budget"
    assert stats.coverage_log[-1].iterations == 0


def test_time_budget_stop():
    _, stats = run_fixture("running_example", iterations=None, time_budget=0.05,
                           stop_on_full_coverage=False)
    assert stats.stop_reason == "time" and stats.iterations > 0


def test_campaign_needs_a_budget():
    ld = load("running_example")
    with pytest.raises(ConfigError):
        run_campaign(ld.iir, ld.config, CampaignConfig(iterations=None))


def test_run_campaign_leaves_config_untouched():
    ld = load("dv_router")
    from p4fuzz.fuzz import prepare_campaign
    c = prepare_campaign(fixture_settings("dv_router", iterations=30_000, time_budget=None))
    before = c.config.commands()
    stats = run_campaign(c.iir, c.config, c.settings, script=c.cp_script)
    assert c.config.commands() == before and stats.cp_seeds >= 1
    assert ld.name == "dv_router"


def test_control_plane_unlocks_route():
    _, stats = run_fixture("dv_router", iterations=200_000, time_budget=None)
    assert stats.coverage == 1.0 and stats.cp_seeds >= 1
    assert ("ipv4_lpm", "set_nhop") in stats.covered_pairs


def test_coverage_log_monotone():
    _, stats = run_fixture("firewall", iterations=20_000, time_budget=None)
    log = stats.coverage_log
    assert [p.iterations for p in log] == sorted(p.iterations for p in log)
    for a, b in zip(log, log[1:]):
        assert b.actions_covered >= a.actions_covered and b.paths_covered >= a.paths_covered
    assert stats.coverage_csv().splitlines()[0] == "wall_ms,iterations,actions_covered,paths_covered"


def test_determinism_same_seed():
    a = [run_fixture("load_balancer", iterations=3000, time_budget=None, stop_on_full_coverage=False)[1]
         for _ in range(2)]
    reports = [CampaignReport.build(s, program="lb", source="", config={}).comparable() for s in a]
    assert reports[0] == reports[1]


def test_different_seeds_differ():
    a = run_fixture("firewall", iterations=2000, time_budget=None, seed=1)[1]
    b = run_fixture("firewall", iterations=2000, time_budget=None, seed=2)[1]
    assert (a.coverage_log, a.strategy_counts) != (b.coverage_log, b.strategy_counts)


def test_guidance_off_keeps_initial_corpus():
    _, stats = run_fixture("rate_limiter", iterations=5000, time_budget=None, coverage_guidance=False)
    assert stats.corpus_size == len(load("rate_limiter").templates)
    assert set(k for k, v in stats.strategy_counts.items() if v) == {"random"}
    assert stats.magic_assignments == 0


def test_magic_off_has_empty_store():
    _, stats = run_fixture("magic32", iterations=5000, time_budget=None, magic_values=False)
    assert stats.magic_assignments == 0 and stats.strategy_counts["magic"] == 0


def test_mirroring_bug_record():
    _, stats = run_fixture("mirroring", iterations=100_000, time_budget=None,
                           buggy_multicast_default_action=True, stop_on_violation=True)
    assert stats.stop_reason == "violation" and len(stats.violations) == 1
    v = stats.violations[0]
    assert v.assertion == "mirrored" and "ipv4" in v.headers
    lines = v.packet_hex.splitlines()
    assert all(ln == ln.lower() for ln in lines)
    assert all(len(ln.split()[1:17]) <= 16 for ln in lines)


def test_campaign_bloom_statistics():
    _, stats = run_fixture("firewall", iterations=20_000, time_budget=None, bloom_m=2048, bloom_k=3,
                           stop_on_full_coverage=False)
    assert stats.bloom_false_negatives == 0
    assert stats.bloom_measured_fp_rate <= 2 * stats.bloom_analytic_fp_rate + 1e-12


def test_promoted_seeds_stay_on_their_paths():
    from p4fuzz.fuzz.campaign import _Loop
    ld = load("vlan")
    s = fixture_settings("vlan", iterations=3000, time_budget=None, stop_on_full_coverage=False)
    loop = _Loop(ld.iir, ld.config.copy(), s, None, None)
    loop.run()
    assert len(loop.corpus) > len(ld.templates)
    for seed in loop.corpus:
        pkt = parse_packet(serialize_packet(seed.packet(), ld.ir), ld.ir)
        assert tuple(pkt.headers) == seed.headers
