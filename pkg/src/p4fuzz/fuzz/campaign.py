"""The fuzzing loop: generate, mutate, run, judge."""

from __future__ import annotations

import csv
import io
import random
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..analysis import build_dependency_graph, enumerate_parser_paths
from ..control_plane import ControlPlane, parse_cp_script
from ..entries import TableConfig, load_entries
from ..errors import ConfigError
from ..frontend import parse_assertions, parse_program
from ..instrument import InstrumentedIR, instrument_program
from ..interpreter import Interpreter, SwitchState
from ..ir import ProgramIR
from ..packet import Packet, hexdump, serialize_packet
from .config import CampaignConfig, MutationConfig  # noqa: F401  (re-export)
from .corpus import CONTROL_PLANE, COVERAGE, SeedPacket, init_corpus
from .coverage import CoverageTracker
from .magic import MagicValueStore
from .mutate import PKT_TYP, Mutator

_CHECK_EVERY = 256


@dataclass
class ViolationRecord:
    assertion: str
    iteration: int
    wall_time: float
    headers: list[str]
    original: dict[str, int]
    packet_hex: str
    provenance: str

    def to_dict(self) -> dict:
        return {
            "assertion": self.assertion,
            "iteration": self.iteration,
            "wall_time": self.wall_time,
            "headers": list(self.headers),
            "original": dict(self.original),
            "packet_hex": self.packet_hex,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ViolationRecord":
        return cls(d["assertion"], d["iteration"], d["wall_time"], list(d["headers"]),
                   dict(d["original"]), d["packet_hex"], d["provenance"])


@dataclass
class CoveragePoint:
    wall_ms: float
    iterations: int
    actions_covered: int
    paths_covered: int


@dataclass
class CampaignStats:
    total_actions: int = 0
    iterations: int = 0
    generated: int = 0
    mutated: int = 0
    promoted: int = 0
    recycled: int = 0
    cp_seeds: int = 0
    cp_errors: int = 0
    violations: list[ViolationRecord] = field(default_factory=list)
    coverage_log: list[CoveragePoint] = field(default_factory=list)
    covered_pairs: list[tuple[str, str]] = field(default_factory=list)
    strategy_counts: dict[str, int] = field(default_factory=dict)
    corpus_size: int = 0
    magic_assignments: int = 0
    wall_time: float = 0.0
    stop_reason: str = "budget"
    bloom_false_negatives: int = 0
    bloom_false_positive_events: int = 0
    bloom_measured_fp_rate: float = 0.0
    bloom_analytic_fp_rate: float = 0.0

    @property
    def actions_covered(self) -> int:
        return len(self.covered_pairs)

    @property
    def paths_covered(self) -> int:
        return self.coverage_log[-1].paths_covered if self.coverage_log else 0

    @property
    def coverage(self) -> float:
        return self.actions_covered / self.total_actions if self.total_actions else 1.0

    def first_violation(self, assertion: str | None = None) -> ViolationRecord | None:
        for v in self.violations:
            if assertion is None or v.assertion == assertion:
                return v
        return None

    def coverage_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["wall_ms", "iterations", "actions_covered", "paths_covered"])
        for p in self.coverage_log:
            w.writerow([f"{p.wall_ms:.3f}", p.iterations, p.actions_covered, p.paths_covered])
        return out.getvalue()


# outcomes of judging one finished packet

@dataclass
class Promote:
    seed: SeedPacket


class Recycle:
    pass


@dataclass
class Violation:
    assertions: list[str]


RECYCLE = Recycle()


def process_result(fields: dict, tracker: CoverageTracker, corpus: list[SeedPacket], layout,
                   parent: SeedPacket, original: dict[str, int]):
    """Judge one pipeline output. ``fields`` carries the fp4 bits, ``original``
    the pre-pipeline field values of the packet."""
    visited = layout.decode(fields, "visited")
    tracker.observe(visited)
    fired = layout.decode(fields, "assertion")
    if fired:
        names = [b.assertion for i, b in enumerate(layout.assertions) if fired >> i & 1]
        return Violation(names)
    if tracker.is_novel(visited):
        seed = SeedPacket(parent.template_index, parent.template,
                          {k: original[k] for k in parent.values}, parent.tables, COVERAGE)
        corpus.append(seed)
        return Promote(seed)
    return RECYCLE


@dataclass
class Campaign:
    """Everything a run needs, already loaded and wired together."""

    iir: InstrumentedIR
    config: TableConfig
    settings: CampaignConfig
    source: str = ""
    cp_source: str | None = None
    cp_script: object = None

    @property
    def program(self) -> ProgramIR:
        return self.iir.program

    @property
    def base(self) -> ProgramIR:
        return self.iir.base


def prepare_campaign(settings: CampaignConfig, *, source: str | None = None,
                     entries: str | None = None, cp_script: str | None = None) -> Campaign:
    """Load program, entries and script named by ``settings`` (or given inline)."""
    settings.validate()
    if source is None:
        if not settings.program:
            raise ConfigError("program is required")
        source = Path(settings.program).read_text()
    if entries is None and settings.entries:
        entries = Path(settings.entries).read_text()
    if cp_script is None and settings.cp_script:
        cp_script = Path(settings.cp_script).read_text()
    ir = parse_program(source)
    extra = parse_assertions(ir, settings.assertions) if settings.assertions else []
    iir = instrument_program(ir, list(ir.assertions) + extra, max_width=settings.max_header_width)
    config = load_entries(entries or "", iir.program, iir.action_aliases())
    script = parse_cp_script(cp_script, iir.program) if cp_script else None
    return Campaign(iir, config, settings, source, cp_script, script)


def run_campaign(iir: InstrumentedIR, config: TableConfig, settings: CampaignConfig | None = None,
                 *, script=None, budget: int | None = None, time_budget: float | None = None,
                 on_progress=None) -> CampaignStats:
    """Run one campaign. ``config`` is used as the starting table state and is
    not modified; ``budget``/``time_budget`` override the settings."""
    settings = (settings or CampaignConfig()).validate()
    if budget is not None:
        settings = replace(settings, iterations=budget)
    if time_budget is not None:
        settings = replace(settings, time_budget=time_budget)
    if settings.iterations is None and settings.time_budget is None:
        raise ConfigError("a campaign needs an iteration or time budget")
    return _Loop(iir, config.copy(), settings, script, on_progress).run()


class _Loop:
    def __init__(self, iir: InstrumentedIR, config: TableConfig, settings: CampaignConfig, script,
                 on_progress):
        self.iir, self.config, self.settings = iir, config, settings
        self.on_progress = on_progress
        prog = iir.program
        layout = iir.layout
        self.layout = layout
        self.rng = random.Random(settings.seed)
        self.state = SwitchState.fresh(prog, config,
                                       buggy_multicast_default_action=settings.buggy_multicast_default_action)
        self.interp = Interpreter(prog, iir.action_aliases())
        self.graph = build_dependency_graph(iir.base)
        self.templates = enumerate_parser_paths(iir.base, settings.max_depth)

        self.store = None
        if settings.magic_values and settings.coverage_guidance:
            self.store = MagicValueStore(iir.base)
            self.store.add_static()
            for entries in config.entries.values():
                for e in entries:
                    self.store.register_table_entry(e)
        mcfg = settings.mutation
        if not settings.coverage_guidance:
            mcfg = replace(mcfg, p_magic=0.0, p_table=0.0, p_repeat=0.0, p_random=1.0)
        self.mutator = Mutator(iir.base, mcfg, self.graph, self.store)

        self.corpus = init_corpus(self.templates, iir.base, self.rng, self.graph)
        self.tracker = CoverageTracker(len(layout.visited), settings.bloom_m, settings.bloom_k)
        self.stats = CampaignStats(total_actions=len(layout.visited))
        self.cp = None
        if script is not None:
            self.cp = ControlPlane(script, config, on_entry=self._on_entry)
            self.state.mc_groups = config.mc_groups

    def _on_entry(self, entry):
        if self.store is not None:
            self.store.register_table_entry(entry)

    def _log(self, it: int, t0: float):
        tr = self.tracker
        log = self.stats.coverage_log
        point = CoveragePoint((time.perf_counter() - t0) * 1000.0, it, tr.actions_covered, tr.paths_covered)
        if log and (log[-1].actions_covered, log[-1].paths_covered) == (point.actions_covered,
                                                                        point.paths_covered):
            return
        log.append(point)

    def _violation(self, names, it, t0, seed, values):
        headers = list(seed.template.headers)
        original = {k: values[k] for k in seed.values}
        data = serialize_packet(Packet(headers, dict(original)), self.iir.base)
        for name in names:
            self.stats.violations.append(ViolationRecord(
                name, it, time.perf_counter() - t0, headers, original, hexdump(data), seed.provenance))

    def _cp_seed(self, cs, seed: SeedPacket):
        _, values = cs.original
        self.stats.cp_seeds += 1
        if self.settings.coverage_guidance:
            self.corpus.append(SeedPacket(seed.template_index, seed.template,
                                          {k: values[k] for k in seed.values}, seed.tables,
                                          CONTROL_PLANE, cs.state_crc, 3))

    def run(self) -> CampaignStats:
        s = self.settings
        stats = self.stats
        rng = self.rng
        corpus = self.corpus
        tracker = self.tracker
        layout = self.layout
        mutator = self.mutator
        mutate = mutator.mutate
        execute = self.interp.execute
        config, state = self.config, self.state
        dec_visited = layout.decoder("visited")
        dec_assert = layout.decoder("assertion")
        assert_names = [b.assertion for b in layout.assertions]
        shadow = tracker.shadow
        is_novel = tracker.is_novel
        guided = s.coverage_guidance
        cp = self.cp
        randrange = rng.randrange
        max_it = s.iterations
        deadline_s = s.time_budget
        stop_full = s.stop_on_full_coverage
        stop_violation = s.stop_on_violation
        full_mask = tracker.full_mask
        last_paths = -1
        last_actions = -1

        t0 = time.perf_counter()
        deadline = None if deadline_s is None else t0 + deadline_s
        it = 0
        stop = "budget"
        mutated = promoted = recycled = 0
        self._log(0, t0)
        while True:
            if max_it is not None and it >= max_it:
                break
            if it & (_CHECK_EVERY - 1) == 0:
                if deadline is not None and time.perf_counter() >= deadline:
                    stop = "time"
                    break
                if self.on_progress is not None and it:
                    self.on_progress(it, tracker)
            if stop_full and tracker.actions == full_mask and full_mask:
                stop = "full_coverage"
                break
            it += 1
            seed = corpus[randrange(len(corpus))]
            values = dict(seed.values)
            values[PKT_TYP] = 0
            mutate(values, seed, rng)
            if mutator.applied:
                mutated += 1
            f, valid, ports, rs, fault = execute(values, seed.template.headers, config, state)

            visited = dec_visited(f)
            tracker.actions |= visited
            fired = dec_assert(f)
            if fired:
                names = [n for i, n in enumerate(assert_names) if fired >> i & 1]
                self._violation(names, it, t0, seed, values)
                if stop_violation:
                    stop = "violation"
            elif visited in shadow:
                recycled += 1
            elif is_novel(visited):
                if guided:
                    corpus.append(SeedPacket(seed.template_index, seed.template,
                                             {k: values[k] for k in seed.values}, seed.tables, COVERAGE))
                promoted += 1
            else:
                recycled += 1

            if cp is not None:
                seeds = []
                if rs.digests:
                    for d in rs.digests:
                        seeds += cp.on_digest(d, valid, (seed.template.headers, values))
                elif cp.wants(ports):
                    seeds = cp.on_packet_in(f, valid, (seed.template.headers, values))
                for cs in seeds:
                    self._cp_seed(cs, seed)

            if tracker.actions != last_actions or len(shadow) != last_paths:
                last_actions, last_paths = tracker.actions, len(shadow)
                self._log(it, t0)
            if stop == "violation":
                break

        stats.wall_time = time.perf_counter() - t0
        stats.iterations = stats.generated = it
        stats.mutated, stats.promoted, stats.recycled = mutated, promoted, recycled
        stats.stop_reason = stop
        self._finish(it, t0)
        return stats

    def _finish(self, it: int, t0: float):
        stats, tracker = self.stats, self.tracker
        if not stats.coverage_log or stats.coverage_log[-1].iterations != it:
            tr = tracker
            stats.coverage_log.append(CoveragePoint((time.perf_counter() - t0) * 1000.0, it,
                                                    tr.actions_covered, tr.paths_covered))
        stats.covered_pairs = self.layout.pairs(tracker.actions)
        stats.strategy_counts = dict(self.mutator.counts)
        stats.corpus_size = len(self.corpus)
        stats.magic_assignments = len(self.store) if self.store is not None else 0
        stats.bloom_false_negatives = tracker.false_negatives()
        stats.bloom_false_positive_events = tracker.false_positive_events
        stats.bloom_measured_fp_rate = tracker.fp_rate()
        stats.bloom_analytic_fp_rate = tracker.analytic_fp_rate()
        if self.cp is not None:
            stats.cp_errors = sum(not e.ok for e in self.cp.events)


def fuzz(settings: CampaignConfig, **kwargs) -> tuple[Campaign, CampaignStats]:
    """Load everything named by ``settings`` and run it."""
    c = prepare_campaign(settings, **kwargs)
    return c, run_campaign(c.iir, c.config, c.settings, script=c.cp_script)


__all__ = [
    "Campaign", "CampaignStats", "CoveragePoint", "MutationConfig", "Promote", "Recycle",
    "Violation", "ViolationRecord", "fuzz", "prepare_campaign", "process_result", "run_campaign",
]
