"""Reference pipeline interpreter.

A program is compiled once into nested closures over a flat field dict
``f`` (every header, metadata and standard-metadata field, invalid headers
reading as zero) and an ordered list of valid header elements. Table
lookups use indexes rebuilt only when the installed configuration changes.
"""

from __future__ import annotations

import operator
import zlib
from dataclasses import dataclass, field
from operator import itemgetter
from typing import Callable, NamedTuple

from .entries import Exact, Lpm, TableConfig, TableEntry
from .errors import RuntimeFault
from .ir import (FP4_CHECK_CONTROL, FP4_HEADER, INGRESS, And, Apply, BoolLit, CallControl,
                 Compare, Const, FieldRef, If, Mark, Not, Or, ParamRef, ProgramIR,
                 Valid)
from .packet import Packet, header_rank

STD = "standard_metadata."
DROP = STD + "drop"
EGRESS_SPEC = STD + "egress_spec"
EGRESS_PORT = STD + "egress_port"
MCAST_GRP = STD + "mcast_grp"
MCAST_COPIES = STD + "mcast_copies"

_CMP = {"==": operator.eq, "!=": operator.ne, "<": operator.lt,
        "<=": operator.le, ">": operator.gt, ">=": operator.ge}


# -- switch state -------------------------------------------------------------

@dataclass
class SwitchState:
    registers: dict[str, list[int]] = field(default_factory=dict)
    widths: dict[str, int] = field(default_factory=dict)
    mc_groups: dict[int, tuple[int, ...]] = field(default_factory=dict)
    buggy_multicast_default_action: bool = False

    @classmethod
    def fresh(cls, ir: ProgramIR, config: TableConfig | None = None, *,
              buggy_multicast_default_action: bool = False) -> "SwitchState":
        st = cls({r.name: [0] * r.size for r in ir.registers}, {r.name: r.width for r in ir.registers},
                 dict(config.mc_groups) if config else {}, buggy_multicast_default_action)
        for reg, idx, value in (config.register_writes if config else ()):
            register_op(st, reg, idx, "write", value)
        return st

    def copy(self) -> "SwitchState":
        return SwitchState({k: list(v) for k, v in self.registers.items()}, dict(self.widths),
                           dict(self.mc_groups), self.buggy_multicast_default_action)

    def snapshot(self) -> tuple:
        return tuple(sorted((k, tuple(v)) for k, v in self.registers.items()))


def register_op(state: SwitchState, register: str, index: int, op: str, value: int = 0) -> int:
    """``read``, ``write`` or ``add`` one register cell; returns the cell's new value."""
    cells = state.registers[register]
    if not 0 <= index < len(cells):
        raise RuntimeFault(f"register {register} index {index} out of bounds (size {len(cells)})")
    mask = (1 << state.widths[register]) - 1
    if op == "write":
        cells[index] = value & mask
    elif op == "add":
        cells[index] = (cells[index] + value) & mask
    elif op != "read":
        raise ValueError(f"unknown register op {op!r}")
    return cells[index]


# -- results ------------------------------------------------------------------

class TraceStep(NamedTuple):
    table: str
    entry: TableEntry | None  # None means the default action ran
    action: str  # original (pre-duplication) action name


@dataclass
class ExecutionTrace:
    steps: list[TraceStep]
    register_ops: list[tuple]
    digests: list[dict]
    dropped: bool
    copies: int

    def pairs(self) -> set[tuple[str, str]]:
        return {(s.table, s.action) for s in self.steps}


@dataclass
class RunResult:
    packet: Packet  # final packet state, dropped or not, including metadata
    outputs: list[Packet]
    trace: ExecutionTrace
    dropped: bool
    fault: str | None = None

    def non_fp4_fields(self) -> dict[str, int]:
        return {k: v for k, v in self.packet.fields.items() if not k.startswith(FP4_HEADER + ".")}


class _Run:
    """Per-packet scratch state shared by the compiled closures."""

    __slots__ = ("state", "trace", "reg_ops", "digests", "default_empty", "suppressed", "bug")

    def __init__(self, state: SwitchState):
        self.state = state
        self.trace: list = []
        self.reg_ops: list = []
        self.digests: list = []
        self.default_empty = False
        self.suppressed = False
        self.bug = state.buggy_multicast_default_action


# -- compilation --------------------------------------------------------------

def _mask(width: int) -> int:
    return (1 << width) - 1


class Interpreter:
    def __init__(self, ir: ProgramIR, aliases: dict[tuple[str, str], str] | None = None):
        self.ir = ir
        self.aliases = dict(aliases or {})
        self.widths = ir.field_widths()
        self.zero = dict.fromkeys(self.widths, 0)
        self.rank = header_rank(ir)
        self.elem_fields = {e: [r for r, _ in ir.header_fields(e)] for e in ir.header_elements()}
        self.actions = {a.name: self._compile_action(a) for a in ir.actions}
        self._indexes: dict[str, tuple] = {}
        self._config: TableConfig | None = None
        self._version = -1
        self._controls: dict[str, Callable] = {}
        self.ingress = self._compile_control(INGRESS)
        self.check = self._compile_control(FP4_CHECK_CONTROL) if ir.has_control(FP4_CHECK_CONTROL) else None
        self.instrumented = ir.has_instance(FP4_HEADER)
        self.header_refs = [r for e in ir.header_elements(metadata=False) if e != FP4_HEADER
                            for r in self.elem_fields[e]]

    # operands

    def _getter(self, arg, params_of=None):
        if isinstance(arg, Const):
            v = arg.value
            return lambda f, p: v
        if isinstance(arg, ParamRef):
            i = params_of.index(arg.name)
            return lambda f, p: p[i]
        if isinstance(arg, FieldRef):
            r = arg.ref
            return lambda f, p: f[r]
        raise TypeError(f"not a value operand: {arg!r}")

    def _compile_action(self, a):
        prims = [self._compile_primitive(p, a.params) for p in a.body]
        prims = [p for p in prims if p is not None]
        if not prims:
            return lambda f, valid, params, rs: None
        if len(prims) == 1:
            return prims[0]
        if len(prims) == 2:
            p0, p1 = prims

            def run2(f, valid, params, rs):
                p0(f, valid, params, rs)
                p1(f, valid, params, rs)
            return run2

        def run(f, valid, params, rs):
            for p in prims:
                p(f, valid, params, rs)
        return run

    def _compile_primitive(self, prim, params):
        op, args = prim.op, prim.args
        g = lambda arg: self._getter(arg, params)  # noqa: E731

        if op == "modify_field":
            dst = args[0].ref
            m = _mask(self.widths[dst])
            src = args[1]
            if len(args) == 3:
                get_v, get_m = g(src), g(args[2])

                def masked(f, valid, p, rs):
                    mm = get_m(f, p) & m
                    f[dst] = (f[dst] & ~mm) | (get_v(f, p) & mm)
                return masked
            if isinstance(src, Const):
                v = src.value & m

                def set_const(f, valid, p, rs):
                    f[dst] = v
                return set_const
            if isinstance(src, ParamRef):
                i = params.index(src.name)

                def set_param(f, valid, p, rs):
                    f[dst] = p[i] & m
                return set_param
            s = src.ref

            def copy_field(f, valid, p, rs):
                f[dst] = f[s] & m
            return copy_field

        if op in ("add_to_field", "subtract_from_field"):
            dst = args[0].ref
            m = _mask(self.widths[dst])
            get = g(args[1])
            sign = 1 if op == "add_to_field" else -1

            def arith(f, valid, p, rs):
                f[dst] = (f[dst] + sign * get(f, p)) & m
            return arith

        if op in ("add_header", "remove_header"):
            elem = args[0].name
            refs = self.elem_fields[elem]
            rank = self.rank

            if op == "add_header":
                def add_header(f, valid, p, rs):
                    if elem in valid:
                        return
                    for r in refs:
                        f[r] = 0
                    r0 = rank.get(elem, len(rank))
                    pos = len(valid)
                    for i, h in enumerate(valid):
                        if rank.get(h, len(rank)) > r0:
                            pos = i
                            break
                    valid.insert(pos, elem)
                return add_header

            def remove_header(f, valid, p, rs):
                if elem in valid:
                    valid.remove(elem)
                    for r in refs:
                        f[r] = 0
            return remove_header

        if op == "register_read":
            dst, reg, get_i = args[0].ref, args[1].name, g(args[2])
            m = _mask(self.widths[dst])

            def reg_read(f, valid, p, rs):
                i = get_i(f, p)
                v = register_op(rs.state, reg, i, "read")
                rs.reg_ops.append(("read", reg, i, v))
                f[dst] = v & m
            return reg_read

        if op == "register_write":
            reg, get_i, get_v = args[0].name, g(args[1]), g(args[2])

            def reg_write(f, valid, p, rs):
                i = get_i(f, p)
                v = register_op(rs.state, reg, i, "write", get_v(f, p))
                rs.reg_ops.append(("write", reg, i, v))
            return reg_write

        if op == "count":
            reg, get_i = args[0].name, g(args[1])

            def count(f, valid, p, rs):
                i = get_i(f, p)
                v = register_op(rs.state, reg, i, "add", 1)
                rs.reg_ops.append(("add", reg, i, v))
            return count

        if op == "hash":
            dst = args[0].ref
            m = _mask(self.widths[dst])
            get_size = g(args[1])
            srcs = [(a.ref, (self.widths[a.ref] + 7) // 8) for a in args[2:]]

            def hash_(f, valid, p, rs):
                size = get_size(f, p)
                data = b"".join(f[r].to_bytes(n, "big") for r, n in srcs)
                f[dst] = (zlib.crc32(data) % size if size else 0) & m
            return hash_

        if op == "drop":
            def drop(f, valid, p, rs):
                f[DROP] = 1
            return drop

        if op == "multicast":
            get = g(args[0])

            def multicast(f, valid, p, rs):
                f[MCAST_GRP] = get(f, p) & 0xFFFF
                rs.suppressed = rs.bug and rs.default_empty
            return multicast

        if op == "digest":
            refs = [a.ref for a in args]

            def digest(f, valid, p, rs):
                rs.digests.append({r: f[r] for r in refs})
            return digest

        if op == "no_op":
            return None
        raise ValueError(f"unsupported primitive {op!r}")

    # control flow

    def _compile_expr(self, e):
        if isinstance(e, Compare):
            l, opf = e.left.ref, _CMP[e.op]
            if isinstance(e.right, Const):
                c = e.right.value
                return lambda f, valid: opf(f[l], c)
            r = e.right.ref
            return lambda f, valid: opf(f[l], f[r])
        if isinstance(e, Valid):
            h = e.header
            return lambda f, valid: h in valid
        if isinstance(e, And):
            a, b = self._compile_expr(e.left), self._compile_expr(e.right)
            return lambda f, valid: a(f, valid) and b(f, valid)
        if isinstance(e, Or):
            a, b = self._compile_expr(e.left), self._compile_expr(e.right)
            return lambda f, valid: a(f, valid) or b(f, valid)
        if isinstance(e, Not):
            a = self._compile_expr(e.operand)
            return lambda f, valid: not a(f, valid)
        if isinstance(e, BoolLit):
            v = e.value
            return lambda f, valid: v
        raise TypeError(f"not an expression: {e!r}")

    def _compile_control(self, name: str):
        if name not in self._controls:
            self._controls[name] = None  # cycles are rejected by the frontend
            self._controls[name] = self._compile_block(self.ir.control(name).body)
        return self._controls[name]

    def _compile_block(self, body):
        stmts = [self._compile_stmt(s) for s in body]
        if len(stmts) == 1:
            return stmts[0]

        def block(f, valid, rs):
            for s in stmts:
                s(f, valid, rs)
        return block

    def _compile_stmt(self, s):
        if isinstance(s, Apply):
            return self._compile_apply(s.table)
        if isinstance(s, If):
            cond = self._compile_expr(s.cond)
            then = self._compile_block(s.then)
            orelse = self._compile_block(s.orelse) if s.orelse else None

            def if_(f, valid, rs):
                if cond(f, valid):
                    then(f, valid, rs)
                elif orelse is not None:
                    orelse(f, valid, rs)
            return if_
        if isinstance(s, CallControl):
            body = self._compile_control(s.name)
            return lambda f, valid, rs: body(f, valid, rs)
        if isinstance(s, Mark):
            ref = s.field

            def mark(f, valid, rs):
                f[ref] = 1
            return mark
        raise TypeError(f"not a statement: {s!r}")

    def _compile_apply(self, table: str):
        indexes = self._indexes

        def apply(f, valid, rs):
            lookup, default, empty = indexes[table]
            hit = lookup(f) if lookup is not None else None
            if hit is None:
                fn, params, orig = default
                rs.default_empty = empty
                rs.trace.append(TraceStep(table, None, orig))
            else:
                entry, fn, params = hit
                rs.default_empty = False
                rs.trace.append(TraceStep(table, entry, entry.action))
            fn(f, valid, params, rs)
        return apply

    # table indexes

    def _action_for(self, table: str, orig: str):
        return self.actions[self.aliases.get((table, orig), orig)]

    def _sync(self, config: TableConfig):
        if config is self._config and config.version == self._version:
            return
        self._indexes.clear()
        for t in self.ir.tables:
            self._indexes[t.name] = self._build_index(t, config)
        self._config, self._version = config, config.version

    def _build_index(self, t, config: TableConfig):
        entries = config.entries.get(t.name, [])
        d_orig, d_params = config.default_of(t.name)
        default = (self._action_for(t.name, d_orig), d_params, d_orig)
        empty = not entries
        if not entries:
            return None, default, empty
        hits = [(e, self._action_for(t.name, e.action), e.params) for e in entries]
        kinds = [k.match for k in t.keys]
        refs = [k.field for k in t.keys]
        if not refs:
            first = hits[0]
            return (lambda f: first), default, empty
        if all(k == "exact" for k in kinds):
            get = itemgetter(*refs)
            table = {}
            for h in hits:
                vals = tuple(m.value for m in h[0].matches)
                table.setdefault(vals[0] if len(vals) == 1 else vals, h)
            tget = table.get
            return (lambda f: tget(get(f))), default, empty
        if "ternary" not in kinds:
            li = kinds.index("lpm")
            lref = refs[li]
            width = self.widths[lref]
            ex_refs = [r for i, r in enumerate(refs) if i != li]
            ex_get = itemgetter(*ex_refs) if ex_refs else (lambda f: ())
            groups: dict[int, dict] = {}
            for h in hits:
                ms = h[0].matches
                lm = ms[li]
                ex = tuple(m.value for i, m in enumerate(ms) if i != li)
                ex = ex[0] if len(ex) == 1 else ex
                groups.setdefault(lm.prefix_len, {}).setdefault((ex, lm.value), h)
            ordered = [(((1 << plen) - 1) << (width - plen), d.get)
                       for plen, d in sorted(groups.items(), reverse=True)]

            def lpm_lookup(f):
                ex = ex_get(f)
                v = f[lref]
                for mask, dget in ordered:
                    hit = dget((ex, v & mask))
                    if hit is not None:
                        return hit
                return None
            return lpm_lookup, default, empty
        rows = []
        for h in sorted(hits, key=lambda h: (-(h[0].priority or 0), h[0].seq)):
            conds = []
            for ref, m in zip(refs, h[0].matches):
                w = self.widths[ref]
                if isinstance(m, Exact):
                    conds.append((ref, _mask(w), m.value))
                elif isinstance(m, Lpm):
                    mask = ((1 << m.prefix_len) - 1) << (w - m.prefix_len)
                    conds.append((ref, mask, m.value))
                else:
                    conds.append((ref, m.mask, m.value))
            rows.append((tuple(conds), h))

        def ternary_lookup(f):
            for conds, h in rows:
                for ref, mask, value in conds:
                    if f[ref] & mask != value:
                        break
                else:
                    return h
            return None
        return ternary_lookup, default, empty

    # execution

    def lookup(self, table: str, fields: dict, config: TableConfig) -> TableEntry | None:
        """Matched entry for ``fields``, or ``None`` for the default action."""
        self._sync(config)
        lookup = self._indexes[table][0]
        f = dict(self.zero)
        f.update(fields)
        hit = lookup(f) if lookup is not None else None
        return None if hit is None else hit[0]

    def execute(self, fields: dict, headers: list[str], config: TableConfig, state: SwitchState):
        """Low-level run. Returns ``(f, valid, ports, run, fault)``; ``ports``
        is the list of egress ports (empty when dropped)."""
        self._sync(config)
        f = dict(self.zero)
        f.update(fields)
        valid = list(headers)
        rs = _Run(state)
        fault = None
        try:
            self.ingress(f, valid, rs)
        except RuntimeFault as exc:
            fault = str(exc)
            f[DROP] = 1
        if f[DROP]:
            ports = []
        else:
            grp = f[MCAST_GRP]
            if grp and not rs.suppressed:
                ports = list(state.mc_groups.get(grp, ()))
                f[MCAST_COPIES] = len(ports)
                f[EGRESS_PORT] = ports[0] if ports else 0
            else:
                ports = [f[EGRESS_SPEC]]
                f[EGRESS_PORT] = f[EGRESS_SPEC]
        if self.check is not None and fault is None:
            self.check(f, valid, rs)
        return f, valid, ports, rs, fault

    def run(self, pkt: Packet, config: TableConfig, state: SwitchState) -> RunResult:
        f, valid, ports, rs, fault = self.execute(pkt.fields, pkt.headers, config, state)
        original = pkt.original
        if original is None and self.instrumented:
            original = pkt.snapshot()
        final = Packet(valid, f, pkt.payload, original)
        outputs = []
        for port in ports:
            out = {r: f[r] for e in valid if e != FP4_HEADER for r in self.elem_fields[e]}
            outputs.append(Packet(list(valid), out, pkt.payload, original, port))
        trace = ExecutionTrace(rs.trace, rs.reg_ops, rs.digests, not ports, len(ports))
        return RunResult(final, outputs, trace, not ports, fault)


_INTERPRETERS: dict[int, tuple[ProgramIR, Interpreter]] = {}


def interpreter_for(ir: ProgramIR, aliases=None) -> Interpreter:
    key = id(ir)
    slot = _INTERPRETERS.get(key)
    if slot is None or slot[0] is not ir or slot[1].aliases != dict(aliases or {}):
        slot = _INTERPRETERS[key] = (ir, Interpreter(ir, aliases))
    return slot[1]


def run_pipeline(ir: ProgramIR, pkt: Packet, config: TableConfig, state: SwitchState,
                 aliases=None) -> RunResult:
    return interpreter_for(ir, aliases).run(pkt, config, state)


def table_lookup(ir: ProgramIR, table: str, pkt: Packet, config: TableConfig, aliases=None):
    return interpreter_for(ir, aliases).lookup(table, pkt.fields, config)
