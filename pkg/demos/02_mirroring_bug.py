"""Hunt a data-plane bug with an assertion.

The mirroring program asks for a copy of every IPv4 packet through the
default action of an empty table. On the buggy target that default action's
multicast is silently dropped, so `mirrored` fails; on a correct target the
same campaign runs clean.
"""

from dataclasses import replace

from p4fuzz import fixture_path
from p4fuzz.fuzz import fuzz, load_config
from p4fuzz.printer import format_expr

settings = load_config(fixture_path("mirroring_bug.conf"))

campaign, stats = fuzz(settings)
for a in campaign.program.assertions:
    print(f"assertion {a.name}: {format_expr(a.expr)}")
v = stats.first_violation()
print(f"\nbuggy target: {stats.stop_reason} after {stats.iterations} packets, {stats.wall_time * 1000:.1f} ms")
print(f"  violated {v.assertion}; seed provenance {v.provenance}; headers {' / '.join(v.headers)}")
print("  packet:\n   ", v.packet_hex.replace("\n", "\n    "))

_, clean = fuzz(replace(settings, buggy_multicast_default_action=False, iterations=200_000,
                        time_budget=None, stop_on_full_coverage=False))
print(f"\ncorrect target: {len(clean.violations)} violations in {clean.iterations} packets "
      f"({clean.iterations / clean.wall_time:,.0f} packets/s)")
