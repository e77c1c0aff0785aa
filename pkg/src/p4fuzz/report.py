"""Campaign reports: a JSON document describing one finished run."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

from .fuzz.campaign import CampaignStats, CoveragePoint, ViolationRecord

SCHEMA_VERSION = 1

# fields that depend on the wall clock; excluded when comparing runs
WALL_CLOCK_KEYS = ("wall_time", "wall_ms", "throughput")


def source_hash(source: str) -> str:
    return hashlib.sha256(source.encode()).hexdigest()


@dataclass
class CampaignReport:
    program: str
    program_sha256: str
    config: dict
    total_actions: int
    covered_pairs: list[list[str]]
    coverage: float
    stats: dict
    strategy_counts: dict[str, int]
    violations: list[dict] = field(default_factory=list)
    coverage_log: list[dict] = field(default_factory=list)
    layout: dict = field(default_factory=dict)
    schema: int = SCHEMA_VERSION

    @classmethod
    def build(cls, stats: CampaignStats, *, program: str, source: str, config: dict,
              layout: dict | None = None) -> "CampaignReport":
        counters = {
            "iterations": stats.iterations,
            "generated": stats.generated,
            "mutated": stats.mutated,
            "promoted": stats.promoted,
            "recycled": stats.recycled,
            "cp_seeds": stats.cp_seeds,
            "cp_errors": stats.cp_errors,
            "corpus_size": stats.corpus_size,
            "magic_assignments": stats.magic_assignments,
            "actions_covered": stats.actions_covered,
            "paths_covered": stats.paths_covered,
            "violation_count": len(stats.violations),
            "stop_reason": stats.stop_reason,
            "bloom_false_negatives": stats.bloom_false_negatives,
            "bloom_false_positive_events": stats.bloom_false_positive_events,
            "bloom_measured_fp_rate": stats.bloom_measured_fp_rate,
            "bloom_analytic_fp_rate": stats.bloom_analytic_fp_rate,
            "wall_time": stats.wall_time,
            "throughput": stats.iterations / stats.wall_time if stats.wall_time > 0 else 0.0,
        }
        return cls(
            program=program,
            program_sha256=source_hash(source),
            config=config,
            total_actions=stats.total_actions,
            covered_pairs=[list(p) for p in stats.covered_pairs],
            coverage=stats.coverage,
            stats=counters,
            strategy_counts=dict(stats.strategy_counts),
            violations=[v.to_dict() for v in stats.violations],
            coverage_log=[asdict(p) for p in stats.coverage_log],
            layout=layout or {},
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignReport":
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "CampaignReport":
        return cls.from_dict(json.loads(text))

    def violation_records(self) -> list[ViolationRecord]:
        return [ViolationRecord.from_dict(v) for v in self.violations]

    def coverage_points(self) -> list[CoveragePoint]:
        return [CoveragePoint(**p) for p in self.coverage_log]

    def comparable(self) -> dict:
        """The report with wall-clock values removed."""
        return strip_wall_clock(self.to_dict())

    def summary(self) -> str:
        s = self.stats
        lines = [
            f"program     {self.program} (sha256 {self.program_sha256[:12]})",
            f"iterations  {s['iterations']} ({s['stop_reason']})",
            f"coverage    {len(self.covered_pairs)}/{self.total_actions} actions "
            f"({self.coverage:.1%}), {s['paths_covered']} paths",
            f"corpus      {s['corpus_size']} seeds, {s['promoted']} promoted, "
            f"{s['cp_seeds']} from the control plane",
            "strategies  " + ", ".join(f"{k}={v}" for k, v in sorted(self.strategy_counts.items())),
            f"violations  {len(self.violations)}",
        ]
        for v in self.violations[:5]:
            lines.append(f"  {v['assertion']} at iteration {v['iteration']} "
                         f"({v['provenance']} seed), headers {'/'.join(v['headers'])}")
            lines.extend("    " + ln for ln in v["packet_hex"].splitlines())
        if len(self.violations) > 5:
            lines.append(f"  ... {len(self.violations) - 5} more")
        return "\n".join(lines)


def strip_wall_clock(obj):
    if isinstance(obj, dict):
        return {k: strip_wall_clock(v) for k, v in obj.items() if k not in WALL_CLOCK_KEYS}
    if isinstance(obj, list):
        return [strip_wall_clock(v) for v in obj]
    return obj
