"""Static analyses: parser-path seed templates and the stage-labelled
field/table dependency graph used to target mutations."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .ir import (INGRESS, INGRESS_PORT, START, And, Apply, CallControl, Compare, Const,
                 FieldRef, If, Not, Or, ParamRef, ProgramIR, Valid, expr_fields, walk_stmts)
from .packet import Packet, header_size, serialize_packet

DEFAULT_MAX_DEPTH = 4


# -- seed templates -----------------------------------------------------------

@dataclass(frozen=True)
class SeedTemplate:
    states: tuple[str, ...]
    headers: tuple[str, ...]
    constrained: tuple[tuple[str, int], ...]
    excluded: tuple[tuple[str, frozenset], ...]  # default arms: field must avoid these
    free: tuple[str, ...]
    length: int

    @property
    def constrained_map(self) -> dict[str, int]:
        return dict(self.constrained)

    @property
    def excluded_map(self) -> dict[str, frozenset]:
        return dict(self.excluded)

    @property
    def present_fields(self) -> frozenset[str]:
        return frozenset(self.free) | frozenset(r for r, _ in self.constrained)

    def admits(self, values: dict[str, int]) -> bool:
        """Whether ``values`` keeps a packet on this parser path."""
        for ref, v in self.constrained:
            if values.get(ref, 0) != v:
                return False
        for ref, bad in self.excluded:
            if values.get(ref, 0) in bad:
                return False
        return True

    def packet(self, values: dict[str, int], payload: bytes = b"") -> Packet:
        fields = dict(values)
        fields.update(self.constrained)
        return Packet(list(self.headers), fields, payload)

    def serialize(self, ir: ProgramIR, values: dict[str, int], payload: bytes = b"") -> bytes:
        return serialize_packet(self.packet(values, payload), ir)


def _program_inputs(ir: ProgramIR) -> list[str]:
    """Metadata inputs a fuzzer may set: the ingress port, when anything reads it."""
    used = set()
    for t in ir.tables:
        used.update(k.field for k in t.keys)
    for a in ir.actions:
        for p in a.body:
            used.update(x.ref for x in p.args if isinstance(x, FieldRef))
    for c in ir.controls:
        walk_stmts(c.body, lambda s: used.update(expr_fields(s.cond)) if isinstance(s, If) else None)
    for s in ir.parser_states:
        if s.select:
            used.add(s.select)
    return [INGRESS_PORT] if INGRESS_PORT in used else []


def enumerate_parser_paths(ir: ProgramIR, max_depth: int = DEFAULT_MAX_DEPTH) -> list[SeedTemplate]:
    """One template per accepting parser path, no state visited more than
    ``max_depth`` times, sorted by state sequence."""
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    inputs = _program_inputs(ir)
    found = []

    def finish(states, headers, constrained, excluded):
        present = [r for h in headers for r, _ in ir.header_fields(h)] + inputs
        free = tuple(r for r in present if r not in constrained)
        length = sum(header_size(ir, h) for h in headers)
        found.append(SeedTemplate(tuple(states), tuple(headers), tuple(constrained.items()),
                                  tuple((r, frozenset(v)) for r, v in excluded.items()), free, length))

    if not ir.parser_states:
        finish([], [], {}, {})
        return found

    def dfs(state, states, headers, constrained, excluded, visits):
        if state == INGRESS:
            finish(states, headers, constrained, excluded)
            return
        if visits.get(state, 0) >= max_depth:
            return
        s = ir.state(state)
        visits = {**visits, state: visits.get(state, 0) + 1}
        states = states + [state]
        if s.extract:
            base, _, idx = s.extract.partition("[")
            if idx:
                i = sum(1 for h in headers if h.split("[", 1)[0] == base)
                if i >= ir.instance(base).count:
                    return
                elem = f"{base}[{i}]"
            else:
                elem = base
            headers = headers + [elem]
        if s.select is None:
            dfs(s.default, states, headers, constrained, excluded, visits)
            return
        ref = s.select
        if ref.startswith("latest."):
            ref = f"{headers[-1]}.{ref[7:]}"
        for const, target in s.arms:
            if ref in constrained and constrained[ref] != const:
                continue
            if const in excluded.get(ref, ()):
                continue
            dfs(target, states, headers, {**constrained, ref: const}, excluded, visits)
        if s.default is not None:
            arm_values = {c for c, _ in s.arms}
            if ref in constrained and constrained[ref] in arm_values:
                return
            new_ex = dict(excluded)
            if ref not in constrained:
                new_ex[ref] = set(excluded.get(ref, set())) | arm_values
            dfs(s.default, states, headers, constrained, new_ex, visits)

    dfs(START, [], [], {}, {}, {})
    found.sort(key=lambda t: (t.states, t.constrained))
    return found


# -- dependency graph ---------------------------------------------------------

def register_node(name: str) -> str:
    return f"register:{name}"


@dataclass
class DepGraph:
    fields: set[str] = field(default_factory=set)
    tables: dict[str, int | None] = field(default_factory=dict)
    registers: set[str] = field(default_factory=set)
    nonmutable: set[str] = field(default_factory=set)
    edges: dict[tuple[str, str], int] = field(default_factory=dict)
    table_guards: dict[str, tuple[frozenset, frozenset]] = field(default_factory=dict)

    def add_edge(self, src: str, dst: str, label: int):
        if src == dst:
            return
        old = self.edges.get((src, dst))
        if old is None or label < old:
            self.edges[(src, dst)] = label

    def edge_list(self) -> list[tuple[str, str, int]]:
        return sorted((s, d, l) for (s, d), l in self.edges.items())

    def predecessors(self) -> dict[str, list[tuple[str, int]]]:
        out: dict[str, list[tuple[str, int]]] = {}
        for (s, d), l in self.edges.items():
            out.setdefault(d, []).append((s, l))
        return out

    def to_dot(self) -> str:
        lines = ["digraph deps {", "  rankdir=LR;"]
        for t, stage in sorted(self.tables.items()):
            lines.append(f'  "{t}" [shape=box, label="{t} (stage {stage})"];')
        for r in sorted(self.registers):
            style = ", style=dashed" if r in self.nonmutable else ""
            lines.append(f'  "{r}" [shape=cylinder{style}];')
        for s, d, l in self.edge_list():
            lines.append(f'  "{s}" -> "{d}" [label="{l}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _guard_headers(cond, positive: bool = True):
    """Headers a condition forces valid/invalid when it holds."""
    must, must_not = set(), set()
    if isinstance(cond, Valid):
        (must if positive else must_not).add(cond.header)
    elif isinstance(cond, And) and positive:
        for side in (cond.left, cond.right):
            a, b = _guard_headers(side, True)
            must |= a
            must_not |= b
    elif isinstance(cond, Not):
        a, b = _guard_headers(cond.operand, not positive)
        must |= a
        must_not |= b
    return must, must_not


def _arg_sources(arg, keys) -> list[str]:
    """Fields an operand's runtime value depends on."""
    if isinstance(arg, FieldRef):
        return [arg.ref]
    if isinstance(arg, ParamRef):
        return list(keys)
    return []


def build_dependency_graph(ir: ProgramIR) -> DepGraph:
    g = DepGraph()
    g.fields = set(ir.field_widths())
    g.tables = {t.name: t.stage for t in ir.tables}
    g.registers = {register_node(r.name) for r in ir.registers}

    applied = []  # (table, cond_fields, must, must_not)

    def walk(body, cond_fields, must, must_not):
        for s in body:
            if isinstance(s, Apply):
                applied.append((s.table, frozenset(cond_fields), frozenset(must), frozenset(must_not)))
            elif isinstance(s, If):
                cf = cond_fields | set(expr_fields(s.cond))
                m, mn = _guard_headers(s.cond)
                walk(s.then, cf, must | m, must_not | mn)
                m2, mn2 = _guard_headers(Not(s.cond))
                walk(s.orelse, cf, must | m2, must_not | mn2)
            elif isinstance(s, CallControl):
                walk(ir.control(s.name).body, cond_fields, must, must_not)

    walk(ir.control(INGRESS).body, set(), set(), set())

    read_regs = set()
    writes: dict[str, set[str]] = {}
    reads: dict[str, set[str]] = {}
    for tname, cond_fields, must, must_not in applied:
        t = ir.table(tname)
        stage = t.stage or 0
        keys = [k.field for k in t.keys]
        g.table_guards[tname] = (must, must_not)
        for k in keys:
            g.add_edge(k, tname, stage)
        for c in cond_fields:
            g.add_edge(c, tname, stage)
        reads[tname] = set(keys) | set(cond_fields) | {f"valid:{h}" for h in must | must_not}
        w = writes.setdefault(tname, set())
        for aname in t.actions:
            for p in ir.action(aname).body:
                op, args = p.op, p.args
                if op in ("modify_field", "add_to_field", "subtract_from_field"):
                    dst = args[0].ref
                    w.add(dst)
                    for src in _arg_sources(args[1], keys):
                        g.add_edge(src, dst, stage)
                    if len(args) == 3:
                        for src in _arg_sources(args[2], keys):
                            g.add_edge(src, dst, stage)
                elif op == "hash":
                    dst = args[0].ref
                    w.add(dst)
                    for a in args[1:]:
                        for src in _arg_sources(a, keys):
                            g.add_edge(src, dst, stage)
                elif op == "register_read":
                    dst, reg = args[0].ref, register_node(args[1].name)
                    read_regs.add(reg)
                    w.add(dst)
                    g.add_edge(reg, dst, stage)
                    for src in _arg_sources(args[2], keys):
                        g.add_edge(src, dst, stage)
                elif op == "register_write":
                    reg = register_node(args[0].name)
                    w.add(reg)
                    for a in args[1:]:
                        for src in _arg_sources(a, keys):
                            g.add_edge(src, reg, stage)
                elif op == "count":
                    reg = register_node(args[0].name)
                    w.add(reg)
                    for src in _arg_sources(args[1], keys):
                        g.add_edge(src, reg, stage)
                elif op in ("add_header", "remove_header"):
                    elem = args[0].name
                    w.add(f"valid:{elem}")
                    w.update(r for r, _ in ir.header_fields(elem))
                elif op == "drop":
                    w.add("standard_metadata.drop")
                elif op == "multicast":
                    w.add("standard_metadata.mcast_grp")
                    for src in _arg_sources(args[0], keys):
                        g.add_edge(src, "standard_metadata.mcast_grp", stage)
    g.nonmutable = g.registers - read_regs

    # field-level flow (data edges only) for transitive table->table influence
    flow: dict[str, set[str]] = {}
    for (s, d) in g.edges:
        if d not in g.tables:
            flow.setdefault(s, set()).add(d)

    def reach(start: set[str]) -> set[str]:
        seen, todo = set(start), deque(start)
        while todo:
            for n in flow.get(todo.popleft(), ()):
                if n not in seen:
                    seen.add(n)
                    todo.append(n)
        return seen

    for t1, _, _, _ in applied:
        s1 = g.tables[t1]
        affected = reach(writes.get(t1, set()))
        for t2, _, _, _ in applied:
            s2 = g.tables[t2]
            if t1 != t2 and s1 is not None and s2 is not None and s1 < s2 and affected & reads[t2]:
                g.add_edge(t1, t2, s1)
    return g


def mutable_fields_for_table(g: DepGraph, table: str) -> set[str]:
    """Field nodes reaching ``table`` through edges labelled <= its stage."""
    limit = g.tables[table]
    if limit is None:
        return set()
    preds = g.predecessors()
    seen, todo = {table}, deque([table])
    while todo:
        for src, label in preds.get(todo.popleft(), ()):
            if label <= limit and src not in seen:
                seen.add(src)
                todo.append(src)
    return {n for n in seen if n in g.fields}


def tables_for_seed(template: SeedTemplate, g: DepGraph) -> list[str]:
    """Tables reachable for this parser path whose mutable fields the seed carries."""
    present = template.present_fields
    headers = set(template.headers)
    out = []
    for t, stage in g.tables.items():
        if t not in g.table_guards:
            continue  # never applied
        must, must_not = g.table_guards[t]
        if not must <= headers or must_not & headers:
            continue
        if mutable_fields_for_table(g, t) & present:
            out.append(t)
    return sorted(out, key=lambda t: (g.tables[t], t))


def static_assignments(ir: ProgramIR) -> list[tuple[str, dict[str, int]]]:
    """Constants that satisfy conditionals and assertion comparisons.

    Returns ``(origin, {field: value})`` pairs; ordering comparisons also
    contribute the boundary neighbours.
    """
    out = []

    def consts(expr, origin):
        stack = [expr]
        while stack:
            e = stack.pop()
            if isinstance(e, Compare) and isinstance(e.right, Const):
                ref, c = e.left.ref, e.right.value
                width = ir.field_width(ref)
                candidates = [c]
                if e.op in ("<", "<=", ">", ">=", "!="):
                    candidates += [c - 1, c + 1]
                for v in candidates:
                    if 0 <= v < (1 << width):
                        out.append((origin, {ref: v}))
            elif isinstance(e, (And, Or)):
                stack.extend((e.left, e.right))
            elif isinstance(e, Not):
                stack.append(e.operand)

    for c in ir.controls:
        walk_stmts(c.body, lambda s: consts(s.cond, f"if:{c.name}") if isinstance(s, If) else None)
    for a in ir.assertions:
        consts(a.expr, f"assert:{a.name}")
    return out
