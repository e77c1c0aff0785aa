"""Seed packets and corpus initialisation."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..analysis import DepGraph, SeedTemplate, tables_for_seed
from ..errors import NoTemplates
from ..ir import ProgramIR
from ..packet import Packet

INITIAL = "initial"
COVERAGE = "coverage"
CONTROL_PLANE = "control_plane"


@dataclass
class SeedPacket:
    template_index: int
    template: SeedTemplate
    values: dict[str, int]
    tables: list[str] = field(default_factory=list)
    provenance: str = INITIAL
    state_hash: int | None = None
    pkt_typ: int = 0

    @property
    def headers(self) -> tuple[str, ...]:
        return self.template.headers

    def packet(self) -> Packet:
        return Packet(list(self.template.headers), dict(self.values))


def random_values(template: SeedTemplate, widths: dict[str, int], rng: random.Random) -> dict[str, int]:
    """Constrained fields at their transition constants; free fields random,
    resampled until they avoid default-arm exclusions."""
    values = dict(template.constrained)
    excluded = template.excluded_map
    for ref in template.free:
        w = widths[ref]
        v = rng.getrandbits(w)
        bad = excluded.get(ref)
        while bad and v in bad:
            v = rng.getrandbits(w)
        values[ref] = v
    return values


def init_corpus(templates: list[SeedTemplate], ir: ProgramIR, rng: random.Random,
                graph: DepGraph | None = None) -> list[SeedPacket]:
    if not templates:
        raise NoTemplates("the parser accepts no packets, so there is nothing to seed")
    widths = ir.field_widths()
    corpus = []
    for i, t in enumerate(templates):
        tables = tables_for_seed(t, graph) if graph is not None else []
        corpus.append(SeedPacket(i, t, random_values(t, widths, rng), tables))
    return corpus


def generate_packet(corpus: list[SeedPacket], rng: random.Random) -> tuple[SeedPacket, Packet]:
    """Uniformly chosen seed, materialised as a fresh packet (fp4 fields zero)."""
    seed = corpus[rng.randrange(len(corpus))]
    pkt = seed.packet()
    pkt.fields["fp4.pkt_typ"] = 0
    return seed, pkt
