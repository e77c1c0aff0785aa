"""Coverage growth on every shipped fixture, as the CSV log records it."""

from dataclasses import replace

from p4fuzz import FIXTURES, fixture_path
from p4fuzz.fuzz import fuzz, load_config

print(f"{'fixture':<16} {'packets to 100%':>16} {'ms':>8}  actions covered at each step")
for name in FIXTURES:
    settings = replace(load_config(fixture_path(f"{name}.conf")), time_budget=None)
    _, s = fuzz(settings)
    steps = " ".join(f"{p.actions_covered}@{p.iterations}" for p in s.coverage_log if p.iterations)
    done = s.iterations if s.coverage == 1.0 else "-"
    print(f"{name:<16} {done:>16} {s.wall_time * 1000:>8.1f}  {steps}")
