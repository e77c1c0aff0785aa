"""A scripted controller turns data-plane packets into new table entries.

The distance-vector router punts advertisements to the CPU port. The control
plane script installs a route for each one, and every change of its state
hash feeds the triggering packet back into the corpus. Without the script
the routed action is unreachable because the routing table starts empty.
"""

from dataclasses import replace

from p4fuzz import fixture_path, fixture_text
from p4fuzz.fuzz import fuzz, load_config

print(fixture_text("dv_router.cp"))
settings = replace(load_config(fixture_path("dv_router.conf")), time_budget=None, iterations=300_000)

c, with_cp = fuzz(settings)
print(f"with the controller: {with_cp.coverage:.0%} coverage after {with_cp.iterations} packets, "
      f"{with_cp.cp_seeds} control-plane seed(s)")

_, without = fuzz(replace(settings, cp_script=None, iterations=100_000))
missing = {(b.table, b.original_action) for b in c.iir.layout.visited} - set(without.covered_pairs)
print(f"without it: {without.coverage:.0%} coverage, never reached {sorted(missing)}")
