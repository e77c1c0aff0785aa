"""Why magic values and coverage feedback matter.

magic32 has one table keyed on a 32-bit address with two entries. Random
mutation has a 2 in 2**32 chance per packet of hitting either entry; values
harvested from the entries hit them immediately.
"""

from p4fuzz import fixture_path
from p4fuzz.fuzz import fuzz, load_config
from dataclasses import replace

base = replace(load_config(fixture_path("magic32.conf")), time_budget=None)

rows = []
for label, kw in [("full", {}),
                  ("no magic values", {"magic_values": False}),
                  ("no coverage guidance", {"coverage_guidance": False})]:
    _, s = fuzz(replace(base, iterations=10_000, stop_on_full_coverage=False, **kw))
    rows.append((label, s.actions_covered, s.total_actions, s.paths_covered, s.corpus_size))

print(f"{'configuration':<22} {'actions':>8} {'paths':>6} {'corpus':>7}   (10,000 packets each)")
for label, a, total, p, c in rows:
    print(f"{label:<22} {a:>4}/{total:<3} {p:>6} {c:>7}")

_, s = fuzz(replace(base, iterations=300_000, magic_values=False))
print(f"\nwithout magic values, after {s.iterations:,} packets the covered actions are still "
      f"{sorted(a for _, a in s.covered_pairs)}")
