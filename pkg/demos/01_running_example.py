"""Walk through the pipeline on the two-table L2/L3 forwarder.

1. parse the program and look at the parser paths the fuzzer will seed from
2. inspect the dependency graph that steers table-directed mutation
3. instrument it and read the fp4 header layout
4. fuzz until every (table, action) pair has been seen
"""

from p4fuzz import fixture_text, instrument_program, load_entries, parse_program, parse_assertions
from p4fuzz.analysis import build_dependency_graph, enumerate_parser_paths, mutable_fields_for_table
from p4fuzz.fuzz import CampaignConfig, run_campaign

source = fixture_text("running_example.p4")
ir = parse_program(source)

print("== parser paths ==")
for t in enumerate_parser_paths(ir):
    print(f"  {' -> '.join(t.headers):<18} {t.length:>3} bytes, fixed: {dict(t.constrained) or '-'}")

print("\n== dependency graph (edge label = stage of the consumer) ==")
g = build_dependency_graph(ir)
for src, dst, stage in g.edge_list():
    print(f"  {src:<18} -> {dst:<18} [{stage}]")
print("  fields that can change ipv4_forward's lookup:", sorted(mutable_fields_for_table(g, "ipv4_forward")))

# an extra assertion, supplied the same way the CLI's --assert does
extra = parse_assertions(ir, ["assert ttl_ok(ipv4.ttl != 0)"])
iir = instrument_program(ir, list(ir.assertions) + extra)
print(f"\n== fp4 header: {iir.layout.width} bits ==")
for b in iir.layout.bits:
    what = f"{b.table}.{b.original_action}" if b.kind == "visited" else f"assertion {b.assertion}"
    print(f"  bit {b.index}: {b.field:<28} {what}")
print(f"  then pkt_typ (2 bits) and {iir.layout.padding} bits of padding")

config = load_entries(fixture_text("running_example.entries"), iir.program, iir.action_aliases())
stats = run_campaign(iir, config, CampaignConfig(iterations=100_000, seed=0))

print(f"\n== campaign: {stats.stop_reason} after {stats.iterations} packets ==")
print("  coverage:", f"{stats.actions_covered}/{stats.total_actions}", sorted(stats.covered_pairs))
print("  strategies used:", stats.strategy_counts)
print("  ttl_ok violations:", len(stats.violations))
if stats.violations:
    v = stats.violations[0]
    print(f"  first at packet {v.iteration}; ipv4.ttl = {v.original['ipv4.ttl']}")
    print("   ", v.packet_hex.replace("\n", "\n    "))
