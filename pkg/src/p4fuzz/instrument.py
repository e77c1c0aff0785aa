"""Coverage and assertion instrumentation.

Each (table, action) pair gets one visited bit in an ``fp4`` header; actions
shared between tables are first duplicated so the bit identifies the table
too. Assertions become a ``fp4_check`` control that the interpreter runs
after the output decision is made, marking one bit per failed assertion.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, replace

from .errors import LayoutOverflow
from .frontend import parse_program
from .ir import (FP4_CHECK_CONTROL, FP4_HEADER, FP4_HEADER_TYPE, And, AssertionDecl,
                 Const, ControlDef, FieldDecl, FieldRef, HeaderInstance, HeaderType, If,
                 Mark, Not, Primitive, ProgramIR, Valid, expr_fields, is_metadata_ref,
                 split_ref, walk_stmts)
from .printer import format_program

DEFAULT_MAX_WIDTH = 512
PKT_TYP_WIDTH = 2

PKT_FRESH = 0
PKT_NEEDS_MUTATION = 1
PKT_COMPLETED = 2
PKT_STATE_CHANGE = 3

_RENAME_PRAGMA = re.compile(r"^@pragma fp4_rename (\S+) (\S+) (\S+)\s*$", re.MULTILINE)


@dataclass(frozen=True)
class LayoutBit:
    index: int
    kind: str  # "visited" or "assertion"
    field: str
    table: str | None = None
    action: str | None = None
    original_action: str | None = None
    assertion: str | None = None


@dataclass(frozen=True)
class Fp4HeaderLayout:
    bits: tuple[LayoutBit, ...]
    padding: int

    @property
    def visited(self) -> tuple[LayoutBit, ...]:
        return tuple(b for b in self.bits if b.kind == "visited")

    @property
    def assertions(self) -> tuple[LayoutBit, ...]:
        return tuple(b for b in self.bits if b.kind == "assertion")

    @property
    def pkt_typ_offset(self) -> int:
        return len(self.bits)

    @property
    def width(self) -> int:
        return len(self.bits) + PKT_TYP_WIDTH + self.padding

    def field_refs(self, kind: str) -> list[str]:
        return [f"{FP4_HEADER}.{b.field}" for b in self.bits if b.kind == kind]

    def decode(self, fields: dict, kind: str = "visited") -> int:
        """Pack the ``kind`` bits of a packet into an int, bit i = i-th such bit."""
        value = 0
        for i, ref in enumerate(self.field_refs(kind)):
            if fields.get(ref):
                value |= 1 << i
        return value

    def decoder(self, kind: str = "visited"):
        """Compiled equivalent of :meth:`decode` for the hot loop (fields must be present)."""
        refs = self.field_refs(kind)
        if not refs:
            return lambda f: 0
        body = " | ".join(f"f[{r!r}] << {i}" if i else f"f[{r!r}]" for i, r in enumerate(refs))
        return eval(f"lambda f: {body}")

    def pairs(self, visited: int) -> list[tuple[str, str]]:
        """(table, original action) pairs set in a visited bitstring."""
        return [(b.table, b.original_action) for i, b in enumerate(self.visited) if visited >> i & 1]

    def descriptor(self) -> dict:
        return {
            "header": FP4_HEADER,
            "header_type": FP4_HEADER_TYPE,
            "width": self.width,
            "bits": [{k: v for k, v in vars(b).items() if v is not None} for b in self.bits],
            "pkt_typ": {"offset": self.pkt_typ_offset, "width": PKT_TYP_WIDTH},
            "padding": self.padding,
        }

    def descriptor_json(self) -> str:
        return json.dumps(self.descriptor(), indent=2, sort_keys=True)


@dataclass(frozen=True)
class InstrumentedIR:
    program: ProgramIR
    base: ProgramIR
    layout: Fp4HeaderLayout
    renames: tuple[tuple[str, str, str], ...] = ()  # (table, original, renamed)

    @property
    def original_headers(self) -> tuple[str, ...]:
        """Header elements whose contents are snapshotted before processing."""
        return tuple(self.base.header_elements(metadata=False))

    def action_aliases(self) -> dict[tuple[str, str], str]:
        return {(t, orig): new for t, orig, new in self.renames}


def shared_action_renames(ir: ProgramIR) -> dict[tuple[str, str], str]:
    """Map (table, action) to a fresh name for every action used by 2+ tables."""
    taken = {a.name for a in ir.actions}
    out = {}
    for a in ir.actions:
        users = ir.tables_using(a.name)
        if len(users) < 2:
            continue
        for t in users:
            name = f"{a.name}_{t}"
            while name in taken:
                name += "_"
            taken.add(name)
            out[(t, a.name)] = name
    return out


def duplicate_shared_actions(ir: ProgramIR, renames: dict | None = None) -> ProgramIR:
    """Give every table private copies of the actions it shares with others."""
    if renames is None:
        renames = shared_action_renames(ir)
    if not renames:
        return ir
    actions = []
    for a in ir.actions:
        copies = [(t, new) for (t, orig), new in renames.items() if orig == a.name]
        if not copies:
            actions.append(a)
            continue
        order = [t.name for t in ir.tables]
        for _, new in sorted(copies, key=lambda c: order.index(c[0])):
            actions.append(replace(a, name=new))
    tables = []
    for t in ir.tables:
        acts = tuple(renames.get((t.name, a), a) for a in t.actions)
        tables.append(replace(t, actions=acts, default_action=renames.get((t.name, t.default_action),
                                                                          t.default_action)))
    return replace(ir, actions=tuple(actions), tables=tuple(tables))


def _stage_key(stage):
    return math.inf if stage is None else stage


def compute_layout(ir: ProgramIR, assertions, renames=None, max_width: int = DEFAULT_MAX_WIDTH) -> Fp4HeaderLayout:
    originals = {new: orig for (_, orig), new in (renames or {}).items()}
    pairs = sorted(((t.stage, t.name, a) for t in ir.tables for a in t.actions),
                   key=lambda p: (_stage_key(p[0]), p[1], p[2]))
    bits = []
    for _, table, action in pairs:
        bits.append(LayoutBit(len(bits), "visited", f"visited_{action}", table, action,
                              originals.get(action, action)))
    for a in assertions:
        bits.append(LayoutBit(len(bits), "assertion", f"assert_{a.name}", assertion=a.name))
    if len(bits) > max_width:
        raise LayoutOverflow(f"{len(bits)} visited/assertion bits exceed the {max_width}-bit limit")
    used = len(bits) + PKT_TYP_WIDTH
    return Fp4HeaderLayout(tuple(bits), (-used) % 8)


def _check_condition(ir: ProgramIR, assertion: AssertionDecl):
    """Fails exactly when the assertion is false and its headers are valid."""
    cond = Not(assertion.expr)
    headers = []
    for ref in expr_fields(assertion.expr):
        if not is_metadata_ref(ir, ref):
            hdr = split_ref(ref)[0]
            if hdr not in headers:
                headers.append(hdr)
    for hdr in reversed(headers):
        cond = And(Valid(hdr), cond)
    return cond


def instrument(ir: ProgramIR, assertions=None, renames=None,
               max_width: int = DEFAULT_MAX_WIDTH) -> InstrumentedIR:
    """Add the fp4 header, per-action visited marks and assertion checks.

    ``ir`` must already have private actions per table (see
    :func:`duplicate_shared_actions`); ``renames`` records that mapping so
    entries written against the original names still resolve.
    """
    shared = [a.name for a in ir.actions if len(ir.tables_using(a.name)) > 1]
    if shared:
        raise ValueError(f"actions shared between tables: {shared}; duplicate them first")
    assertions = tuple(ir.assertions if assertions is None else assertions)
    renames = dict(renames or {})
    layout = compute_layout(ir, assertions, renames, max_width)

    flds = [FieldDecl(b.field, 1) for b in layout.bits] + [FieldDecl("pkt_typ", PKT_TYP_WIDTH)]
    if layout.padding:
        flds.append(FieldDecl("_pad", layout.padding))
    header_type = HeaderType(FP4_HEADER_TYPE, tuple(flds))

    mark_of = {b.action: b.field for b in layout.visited}
    actions = []
    for a in ir.actions:
        if a.name in mark_of:
            setbit = Primitive("modify_field", (FieldRef(f"{FP4_HEADER}.{mark_of[a.name]}"), Const(1)))
            a = replace(a, body=a.body + (setbit,))
        actions.append(a)

    checks = tuple(
        If(_check_condition(ir, a), (Mark(f"{FP4_HEADER}.{bit.field}"),))
        for a, bit in zip(assertions, layout.assertions)
    )
    program = replace(
        ir,
        header_types=ir.header_types + (header_type,),
        instances=ir.instances + (HeaderInstance(FP4_HEADER, FP4_HEADER_TYPE),),
        actions=tuple(actions),
        controls=ir.controls + (ControlDef(FP4_CHECK_CONTROL, checks),),
        assertions=assertions,
    )
    rename_rows = tuple(sorted((t, orig, new) for (t, orig), new in renames.items()))
    base = replace(ir, assertions=assertions)
    return InstrumentedIR(program, base, layout, rename_rows)


def instrument_program(ir: ProgramIR, assertions=None, max_width: int = DEFAULT_MAX_WIDTH) -> InstrumentedIR:
    """Duplicate shared actions, then instrument."""
    renames = shared_action_renames(ir)
    return instrument(duplicate_shared_actions(ir, renames), assertions, renames, max_width)


def strip_instrumentation(program: ProgramIR) -> ProgramIR:
    """Remove everything the instrumenter added."""
    def is_fp4(prim):
        return any(isinstance(a, FieldRef) and a.ref.startswith(FP4_HEADER + ".") for a in prim.args)

    actions = tuple(replace(a, body=tuple(p for p in a.body if not is_fp4(p))) for a in program.actions)
    return replace(
        program,
        header_types=tuple(t for t in program.header_types if t.name != FP4_HEADER_TYPE),
        instances=tuple(i for i in program.instances if i.name != FP4_HEADER),
        actions=actions,
        controls=tuple(c for c in program.controls if c.name != FP4_CHECK_CONTROL),
    )


def emit_instrumented_source(iir: InstrumentedIR) -> str:
    lines = [f"@pragma fp4_rename {t} {orig} {new}" for t, orig, new in iir.renames]
    head = "\n".join(lines) + "\n\n" if lines else ""
    return head + format_program(iir.program)


def load_instrumented(source: str) -> InstrumentedIR:
    """Rebuild an :class:`InstrumentedIR` from emitted source."""
    program = parse_program(source)
    renames = {(t, orig): new for t, orig, new in _RENAME_PRAGMA.findall(source)}
    originals = {new: orig for (_, orig), new in renames.items()}
    htype = program.header_type(FP4_HEADER_TYPE)
    bits, padding = [], 0
    for f in htype.fields:
        if f.name.startswith("visited_"):
            action = f.name[len("visited_"):]
            table = program.tables_using(action)[0]
            bits.append(LayoutBit(len(bits), "visited", f.name, table, action, originals.get(action, action)))
        elif f.name.startswith("assert_"):
            bits.append(LayoutBit(len(bits), "assertion", f.name, assertion=f.name[len("assert_"):]))
        elif f.name == "_pad":
            padding = f.width
    base = strip_instrumentation(program)
    layout = Fp4HeaderLayout(tuple(bits), padding)
    return InstrumentedIR(program, base, layout, tuple(sorted((t, o, n) for (t, o), n in renames.items())))


def instrumented_marks(program: ProgramIR) -> dict[str, int]:
    """Number of fp4 set-bit statements per action (for invariant checks)."""
    counts = {}
    for a in program.actions:
        counts[a.name] = sum(
            1 for p in a.body
            if p.op == "modify_field" and isinstance(p.args[0], FieldRef)
            and p.args[0].ref.startswith(FP4_HEADER + ".visited_"))
    return counts


def check_marks(program: ProgramIR) -> list[str]:
    """Control-level marks in the check block, in order."""
    marks: list[str] = []
    for c in program.controls:
        if c.name == FP4_CHECK_CONTROL:
            walk_stmts(c.body, lambda s: marks.append(s.field) if isinstance(s, Mark) else None)
    return marks
