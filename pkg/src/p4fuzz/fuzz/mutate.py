"""Packet mutation strategies.

Every strategy only writes fields the seed's parser path leaves free, and a
write that would push a default-arm field onto an explicit arm is undone,
so a mutated packet always parses along its seed's path.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from ..analysis import DepGraph, mutable_fields_for_table
from ..ir import ProgramIR
from .config import MutationConfig
from .corpus import SeedPacket
from .magic import MagicValueStore

PKT_TYP = "fp4.pkt_typ"


@dataclass
class _Plan:
    free: list[tuple[str, int]]
    excluded: dict[str, frozenset]
    tables: list[list[tuple[str, int]]]
    magic: list[tuple[tuple[str, int], ...]]
    magic_version: int


class Mutator:
    def __init__(self, ir: ProgramIR, config: MutationConfig, graph: DepGraph,
                 store: MagicValueStore | None = None):
        self.ir = ir
        self.config = config.validate()
        self.graph = graph
        self.store = store
        self.widths = ir.field_widths()
        w = config.weights()
        self._cum = [sum(w[:i + 1]) for i in range(4)]
        self._plans: dict[tuple, _Plan] = {}
        self._table_fields = {t: mutable_fields_for_table(graph, t) for t in graph.table_guards}
        self.counts = {"magic": 0, "table": 0, "repeat": 0, "random": 0}
        self.applied = 0  # mutations applied to the last packet

    def plan(self, seed: SeedPacket) -> _Plan:
        key = (seed.template_index, tuple(seed.tables))
        p = self._plans.get(key)
        version = self.store.version if self.store is not None else 0
        if p is not None and p.magic_version == version:
            return p
        t = seed.template
        free_set = set(t.free)
        free = [(r, self.widths[r]) for r in t.free]
        tables = []
        for name in seed.tables:
            fs = [(r, self.widths[r]) for r in t.free if r in self._table_fields.get(name, ())]
            if fs:
                tables.append(fs)
        excluded = t.excluded_map
        magic = []
        if self.store is not None:
            for assignment in self.store.applicable(frozenset(free_set)):
                kept = tuple((r, v) for r, v in assignment if v not in excluded.get(r, ()))
                if kept:
                    magic.append(kept)
        p = self._plans[key] = _Plan(free, excluded, tables, magic, version)
        return p

    def _rand(self, rng: random.Random, old: int, width: int) -> int:
        cap = self.config.width_cap
        if cap is None or width <= cap:
            return rng.getrandbits(width)
        off = rng.randrange(width - cap + 1)
        window = ((1 << cap) - 1) << off
        return (old & ~window) | (rng.getrandbits(cap) << off)

    def _write(self, values: dict, excluded: dict, ref: str, v: int):
        bad = excluded.get(ref)
        if bad is None or v not in bad:
            values[ref] = v

    def _random_subset(self, values, plan: _Plan, rng: random.Random):
        free = plan.free
        if not free:
            return
        k = rng.randint(1, min(len(free), 4))
        for ref, w in rng.sample(free, k):
            self._write(values, plan.excluded, ref, self._rand(rng, values.get(ref, 0), w))

    def mutate(self, values: dict[str, int], seed: SeedPacket, rng: random.Random) -> dict[str, int]:
        """Mutate ``values`` in place and mark the packet completed."""
        plan = self.plan(seed)
        cfg = self.config
        counts = self.counts
        c0, c1, c2, _ = self._cum
        rounds = rng.randint(1, cfg.max_chain) * (1 + cfg.recirculation)
        applied = 0
        for i in range(rounds):
            x = rng.random()
            if x < c0:
                if plan.magic:
                    counts["magic"] += 1
                    for ref, v in rng.choice(plan.magic):
                        values[ref] = v
                    applied += 1
                    continue
            elif x < c1:
                if plan.tables:
                    counts["table"] += 1
                    for ref, w in rng.choice(plan.tables):
                        self._write(values, plan.excluded, ref, self._rand(rng, values.get(ref, 0), w))
                    applied += 1
                    continue
            elif x < c2:
                counts["repeat"] += 1
                if i == 0:
                    break  # send the seed as-is
                continue
            counts["random"] += 1
            self._random_subset(values, plan, rng)
            applied += 1
        self.applied = applied
        values[PKT_TYP] = 2
        return values


def mutate(packet, config: MutationConfig, magic_store: MagicValueStore | None, depgraph: DepGraph,
           rng: random.Random, seed: SeedPacket, ir: ProgramIR):
    """One-shot form of :meth:`Mutator.mutate` on a :class:`~p4fuzz.packet.Packet`."""
    m = Mutator(ir, config, depgraph, magic_store)
    m.mutate(packet.fields, seed, rng)
    return packet
