"""Magic values: constants harvested from table entries and conditionals."""

from __future__ import annotations

from ..analysis import static_assignments
from ..entries import Exact, Lpm, TableEntry, Ternary
from ..ir import FieldRef, ProgramIR, is_metadata_ref


def direct_copy_sources(ir: ProgramIR) -> dict[str, set[str]]:
    """``dst -> {src}`` for every ``modify_field(dst, src_field)`` in the program."""
    out: dict[str, set[str]] = {}
    for a in ir.actions:
        for p in a.body:
            if p.op == "modify_field" and len(p.args) == 2 and isinstance(p.args[1], FieldRef):
                out.setdefault(p.args[0].ref, set()).add(p.args[1].ref)
    return out


class MagicValueStore:
    def __init__(self, ir: ProgramIR):
        self.ir = ir
        self.assignments: list[tuple[str, tuple[tuple[str, int], ...]]] = []
        self._seen: set[tuple[tuple[str, int], ...]] = set()
        self._copies = direct_copy_sources(ir)
        self.version = 0

    def __len__(self) -> int:
        return len(self.assignments)

    def _origins(self, ref: str) -> list[str]:
        """Packet fields whose value is copied unchanged into ``ref``."""
        out, todo, seen = [], [ref], {ref}
        while todo:
            r = todo.pop()
            for src in sorted(self._copies.get(r, ())):
                if src in seen:
                    continue
                seen.add(src)
                if is_metadata_ref(self.ir, src) and src != "standard_metadata.ingress_port":
                    todo.append(src)
                else:
                    out.append(src)
        return out

    def add(self, origin: str, values: dict[str, int]) -> bool:
        """Store one assignment (plus back-propagated copies); False if already known."""
        expanded = dict(values)
        for ref, v in values.items():
            if is_metadata_ref(self.ir, ref):
                for src in self._origins(ref):
                    if v < 1 << self.ir.field_width(src):
                        expanded.setdefault(src, v)
        key = tuple(sorted(expanded.items()))
        if not key or key in self._seen:
            return False
        for ref, v in key:
            if not 0 <= v < 1 << self.ir.field_width(ref):
                raise ValueError(f"magic value {v:#x} does not fit {ref}")
        self._seen.add(key)
        self.assignments.append((origin, key))
        self.version += 1
        return True

    def register_table_entry(self, entry: TableEntry) -> bool:
        t = self.ir.table(entry.table)
        values = {}
        for k, m in zip(t.keys, entry.matches):
            if isinstance(m, Exact):
                values[k.field] = m.value
            elif isinstance(m, Lpm):
                if m.prefix_len:
                    values[k.field] = m.value
            elif isinstance(m, Ternary):
                if m.mask:
                    values[k.field] = m.value & m.mask
        return self.add(f"table:{entry.table}", values)

    def add_static(self) -> int:
        return sum(self.add(origin, values) for origin, values in static_assignments(self.ir))

    def applicable(self, present: frozenset[str]) -> list[tuple[tuple[str, int], ...]]:
        """Assignments projected onto ``present`` fields, dropping empty ones."""
        out, seen = [], set()
        for _, key in self.assignments:
            proj = tuple((r, v) for r, v in key if r in present)
            if proj and proj not in seen:
                seen.add(proj)
                out.append(proj)
        return out


def register_table_entry(store: MagicValueStore, entry: TableEntry) -> bool:
    return store.register_table_entry(entry)
