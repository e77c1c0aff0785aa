"""Typed program representation for the P4-14 subset.

All node types are frozen dataclasses so an IR can be shared freely and
compared structurally. Field references are plain strings of the form
``instance.field`` (``vlan[1].vid`` for header-stack elements).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields, is_dataclass, replace
from functools import cached_property
from typing import Union

MAX_FIELD_WIDTH = 128
INGRESS = "ingress"
START = "start"

STANDARD_METADATA = "standard_metadata"
STANDARD_METADATA_ALIASES = ("std_metadata",)
STANDARD_METADATA_FIELDS = (
    ("ingress_port", 9),
    ("egress_spec", 9),
    ("egress_port", 9),
    ("drop", 1),
    ("mcast_grp", 16),
    ("mcast_copies", 16),
)
INGRESS_PORT = "standard_metadata.ingress_port"

FP4_HEADER = "fp4"
FP4_HEADER_TYPE = "fp4_header_t"
FP4_CHECK_CONTROL = "fp4_check"


@dataclass(frozen=True)
class FieldDecl:
    name: str
    width: int


@dataclass(frozen=True)
class HeaderType:
    name: str
    fields: tuple[FieldDecl, ...]
    is_metadata: bool = False

    @property
    def width(self) -> int:
        return sum(f.width for f in self.fields)


@dataclass(frozen=True)
class HeaderInstance:
    name: str
    type_name: str
    metadata: bool = False
    count: int = 0  # > 0 declares a header stack

    def element_names(self) -> list[str]:
        if self.count:
            return [f"{self.name}[{i}]" for i in range(self.count)]
        return [self.name]


# operands -----------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class FieldRef:
    ref: str


@dataclass(frozen=True)
class ParamRef:
    name: str


@dataclass(frozen=True)
class NameRef:
    """A header instance or register named as a primitive argument."""
    name: str


Operand = Union[Const, FieldRef, ParamRef, NameRef]


# boolean expressions ------------------------------------------------------

@dataclass(frozen=True)
class Compare:
    op: str
    left: FieldRef
    right: Union[Const, FieldRef]


@dataclass(frozen=True)
class Valid:
    header: str


@dataclass(frozen=True)
class And:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Or:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Not:
    operand: "Expr"


@dataclass(frozen=True)
class BoolLit:
    value: bool


Expr = Union[Compare, Valid, And, Or, Not, BoolLit]

COMPARE_OPS = ("==", "!=", "<", "<=", ">", ">=")


def expr_fields(expr: Expr) -> list[str]:
    """Field references in ``expr``, in first-occurrence order."""
    out: list[str] = []

    def walk(e):
        if isinstance(e, Compare):
            for side in (e.left, e.right):
                if isinstance(side, FieldRef) and side.ref not in out:
                    out.append(side.ref)
        elif isinstance(e, (And, Or)):
            walk(e.left)
            walk(e.right)
        elif isinstance(e, Not):
            walk(e.operand)

    walk(expr)
    return out


def expr_headers(expr: Expr) -> list[str]:
    out: list[str] = []

    def walk(e):
        if isinstance(e, Valid) and e.header not in out:
            out.append(e.header)
        elif isinstance(e, (And, Or)):
            walk(e.left)
            walk(e.right)
        elif isinstance(e, Not):
            walk(e.operand)

    walk(expr)
    return out


# program structure --------------------------------------------------------

@dataclass(frozen=True)
class ParserState:
    name: str
    extract: str | None = None
    select: str | None = None
    arms: tuple[tuple[int, str], ...] = ()
    default: str | None = None


@dataclass(frozen=True)
class Primitive:
    op: str
    args: tuple[Operand, ...] = ()


@dataclass(frozen=True)
class ActionDef:
    name: str
    params: tuple[str, ...] = ()
    body: tuple[Primitive, ...] = ()


@dataclass(frozen=True)
class TableKey:
    field: str
    match: str  # exact | lpm | ternary


@dataclass(frozen=True)
class TableDef:
    name: str
    keys: tuple[TableKey, ...]
    actions: tuple[str, ...]
    default_action: str
    default_args: tuple[int, ...] = ()
    size: int | None = None
    stage: int | None = None


@dataclass(frozen=True)
class Apply:
    table: str


@dataclass(frozen=True)
class If:
    cond: Expr
    then: tuple["Stmt", ...] = ()
    orelse: tuple["Stmt", ...] = ()


@dataclass(frozen=True)
class CallControl:
    name: str


@dataclass(frozen=True)
class Mark:
    """Set a one-bit bookkeeping field. Only emitted by the instrumenter."""
    field: str


Stmt = Union[Apply, If, CallControl, Mark]


@dataclass(frozen=True)
class ControlDef:
    name: str
    body: tuple[Stmt, ...] = ()


@dataclass(frozen=True)
class RegisterDecl:
    name: str
    width: int
    size: int


@dataclass(frozen=True)
class AssertionDecl:
    name: str
    expr: Expr


@dataclass(frozen=True)
class ProgramIR:
    header_types: tuple[HeaderType, ...] = ()
    instances: tuple[HeaderInstance, ...] = ()
    parser_states: tuple[ParserState, ...] = ()
    actions: tuple[ActionDef, ...] = ()
    tables: tuple[TableDef, ...] = ()
    controls: tuple[ControlDef, ...] = ()
    registers: tuple[RegisterDecl, ...] = ()
    assertions: tuple[AssertionDecl, ...] = ()

    # lookups; cached_property writes straight into __dict__, so it is
    # compatible with frozen dataclasses and invisible to __eq__.

    @cached_property
    def _types(self) -> dict[str, HeaderType]:
        return {t.name: t for t in self.header_types}

    @cached_property
    def _instances(self) -> dict[str, HeaderInstance]:
        return {i.name: i for i in self.instances}

    @cached_property
    def _actions(self) -> dict[str, ActionDef]:
        return {a.name: a for a in self.actions}

    @cached_property
    def _tables(self) -> dict[str, TableDef]:
        return {t.name: t for t in self.tables}

    @cached_property
    def _states(self) -> dict[str, ParserState]:
        return {s.name: s for s in self.parser_states}

    @cached_property
    def _controls(self) -> dict[str, ControlDef]:
        return {c.name: c for c in self.controls}

    @cached_property
    def _registers(self) -> dict[str, RegisterDecl]:
        return {r.name: r for r in self.registers}

    def header_type(self, name: str) -> HeaderType:
        return self._types[name]

    def instance(self, name: str) -> HeaderInstance:
        return self._instances[name.split("[", 1)[0]]

    def action(self, name: str) -> ActionDef:
        return self._actions[name]

    def table(self, name: str) -> TableDef:
        return self._tables[name]

    def state(self, name: str) -> ParserState:
        return self._states[name]

    def control(self, name: str) -> ControlDef:
        return self._controls[name]

    def register(self, name: str) -> RegisterDecl:
        return self._registers[name]

    def has_action(self, name: str) -> bool:
        return name in self._actions

    def has_table(self, name: str) -> bool:
        return name in self._tables

    def has_state(self, name: str) -> bool:
        return name in self._states

    def has_control(self, name: str) -> bool:
        return name in self._controls

    def has_register(self, name: str) -> bool:
        return name in self._registers

    def has_instance(self, name: str) -> bool:
        base, _, idx = name.partition("[")
        inst = self._instances.get(base)
        if inst is None:
            return False
        if not idx:
            return not inst.count
        idx = idx.rstrip("]")
        return bool(inst.count) and idx.isdigit() and int(idx) < inst.count

    @cached_property
    def _field_widths(self) -> dict[str, int]:
        widths = {f"{STANDARD_METADATA}.{n}": w for n, w in STANDARD_METADATA_FIELDS}
        for inst in self.instances:
            htype = self._types.get(inst.type_name)
            if htype is None:
                continue
            for elem in inst.element_names():
                for f in htype.fields:
                    widths[f"{elem}.{f.name}"] = f.width
        return widths

    def field_width(self, ref: str) -> int:
        return self._field_widths[ref]

    def has_field(self, ref: str) -> bool:
        return ref in self._field_widths

    def field_widths(self) -> dict[str, int]:
        """Every addressable field (header, metadata, standard metadata)."""
        return dict(self._field_widths)

    def header_fields(self, elem: str) -> list[tuple[str, int]]:
        """``(ref, width)`` of one header instance or stack element, wire order."""
        inst = self.instance(elem)
        htype = self._types[inst.type_name]
        return [(f"{elem}.{f.name}", f.width) for f in htype.fields]

    def header_elements(self, metadata: bool | None = None) -> list[str]:
        out = []
        for inst in self.instances:
            if metadata is None or inst.metadata == metadata:
                out.extend(inst.element_names())
        return out

    def tables_using(self, action: str) -> list[str]:
        return [t.name for t in self.tables if action in t.actions]


def split_ref(ref: str) -> tuple[str, str]:
    inst, _, fname = ref.rpartition(".")
    return inst, fname


def is_metadata_ref(ir: ProgramIR, ref: str) -> bool:
    inst, _ = split_ref(ref)
    if inst == STANDARD_METADATA:
        return True
    return ir.instance(inst).metadata


def with_stages(ir: ProgramIR, stages: dict[str, int]) -> ProgramIR:
    return replace(ir, tables=tuple(replace(t, stage=stages.get(t.name)) for t in ir.tables))


def walk_stmts(body, visit):
    """Depth-first visit of every statement, including nested if-branches."""
    for stmt in body:
        visit(stmt)
        if isinstance(stmt, If):
            walk_stmts(stmt.then, visit)
            walk_stmts(stmt.orelse, visit)


# canonical JSON -----------------------------------------------------------

_NODE_TYPES = {cls.__name__: cls for cls in (
    FieldDecl, HeaderType, HeaderInstance, Const, FieldRef, ParamRef, NameRef,
    Compare, Valid, And, Or, Not, BoolLit, ParserState, Primitive, ActionDef,
    TableKey, TableDef, Apply, If, CallControl, Mark, ControlDef, RegisterDecl,
    AssertionDecl, ProgramIR,
)}


def to_data(obj):
    if is_dataclass(obj):
        out = {"_type": type(obj).__name__}
        for f in fields(obj):
            out[f.name] = to_data(getattr(obj, f.name))
        return out
    if isinstance(obj, (tuple, list)):
        return [to_data(x) for x in obj]
    return obj


def from_data(data):
    if isinstance(data, dict):
        cls = _NODE_TYPES[data["_type"]]
        kwargs = {k: from_data(v) for k, v in data.items() if k != "_type"}
        return cls(**kwargs)
    if isinstance(data, list):
        return tuple(from_data(x) for x in data)
    return data


def program_to_json(ir: ProgramIR) -> str:
    return json.dumps(to_data(ir), sort_keys=True, indent=2)


def program_from_json(text: str) -> ProgramIR:
    return from_data(json.loads(text))
