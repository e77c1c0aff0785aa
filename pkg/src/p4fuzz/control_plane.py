"""Scripted control plane with rolling state and configuration hashes.

Script format::

    cpu_port 64;                        # optional: only packets sent here reach handlers
    var last_dst : addr = 0;            # int (default) or addr
    handler boot() on start { ... }     # runs once, with no input packet
    handler learn() on packet when (valid(dv) && dv.plen <= 32) {
        set last_dst = dv.dst;
        table_add ipv4_lpm set_nhop {dv.dst}/{dv.plen} => {dv.port};
        call note(dv.port);
    }
    handler note(port) { if (port == 0) { set last_dst = 0; } }
    handler seen() on digest when (meta.flag == 1) { ... }

Effects are ``set``, ``call``, ``if``/``else`` and the runtime-CLI table
commands, whose ``{expr}`` holes are filled with decimal values. The state
hash covers ``name=value`` lines for the sorted variables followed by one
``call:handler(args)`` line per active frame; it is maintained incrementally
with :func:`crc_push` / :func:`crc_pop`.
"""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass

from .crc import crc_pop, crc_push, crc32
from .entries import TableConfig, TableEntry
from .errors import EffectError, EntryError, HandlerDepthExceeded, ScriptError
from .ir import ProgramIR

DEFAULT_MAX_DEPTH = 16

_TOKEN = re.compile(r"""
    (?P<ws>\s+|\#[^\n]*|//[^\n]*)
  | (?P<num>0[xX][0-9a-fA-F_]+|0[bB][01_]+|\d[\d_]*)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*(?:\[\d+\])?(?:\.[A-Za-z_][A-Za-z0-9_]*)*)
  | (?P<op>&&&|==|!=|<=|>=|&&|\|\||=>|[-+<>!=(){};,:/.&\[\]])
""", re.VERBOSE)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    out, pos, line = [], 0, 1
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ScriptError(f"line {line}: unexpected character {text[pos]!r}")
        kind = m.lastgroup
        if kind != "ws":
            out.append(_Tok(kind, m.group(), line, pos))
        line += m.group().count("\n")
        pos = m.end()
    out.append(_Tok("eof", "", line, pos))
    return out


# -- expressions ---------------------------------------------------------------

_BIN = {"+": operator.add, "-": operator.sub, "==": operator.eq, "!=": operator.ne,
        "<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge}


@dataclass(frozen=True)
class Num:
    value: int


@dataclass(frozen=True)
class Name:
    name: str  # variable, parameter or packet/digest field


@dataclass(frozen=True)
class IsValid:
    header: str


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class BoolOp:
    op: str  # "&&", "||", "!"
    args: tuple


# -- effects -------------------------------------------------------------------

@dataclass(frozen=True)
class SetVar:
    name: str
    expr: object


@dataclass(frozen=True)
class Call:
    handler: str
    args: tuple


@dataclass(frozen=True)
class TableCommand:
    parts: tuple  # str fragments and expressions, joined with spaces
    line: int


@dataclass(frozen=True)
class IfEffect:
    cond: object
    then: tuple
    orelse: tuple = ()


@dataclass(frozen=True)
class Handler:
    name: str
    params: tuple[str, ...]
    trigger: str | None  # "packet", "digest", "start" or None (callable only)
    when: object | None
    body: tuple


@dataclass(frozen=True)
class VarDecl:
    name: str
    kind: str  # "int" or "addr"
    initial: int


@dataclass(frozen=True)
class CpScript:
    variables: tuple[VarDecl, ...]
    handlers: tuple[Handler, ...]
    cpu_port: int | None = None

    def handler(self, name: str) -> Handler:
        for h in self.handlers:
            if h.name == name:
                return h
        raise KeyError(name)


_HOLE = re.compile(r"\{([^{}]*)\}")
_TABLE_CMDS = ("table_add", "table_modify", "table_delete", "table_set_default")


class _ScriptParser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg: str) -> ScriptError:
        return ScriptError(f"line {self.tok.line}: {msg}, found {self.tok.text or 'end of input'!r}")

    def next(self) -> _Tok:
        t = self.tok
        self.i += 1
        return t

    def accept(self, text: str) -> bool:
        if self.tok.text == text and self.tok.kind in ("op", "name"):
            self.i += 1
            return True
        return False

    def expect(self, text: str):
        if not self.accept(text):
            raise self.error(f"expected {text!r}")

    def name(self) -> str:
        if self.tok.kind != "name":
            raise self.error("expected a name")
        return self.next().text

    def number(self) -> int:
        neg = self.accept("-")
        if self.tok.kind != "num":
            raise self.error("expected a number")
        v = int(self.next().text.replace("_", ""), 0)
        return -v if neg else v

    def script(self) -> CpScript:
        variables, handlers, cpu_port = [], [], None
        while self.tok.kind != "eof":
            if self.accept("cpu_port"):
                cpu_port = self.number()
                self.expect(";")
            elif self.accept("var"):
                name = self.name()
                kind = "int"
                if self.accept(":"):
                    kind = self.name()
                    if kind not in ("int", "addr"):
                        raise self.error("variable type must be int or addr")
                self.expect("=")
                value = self.number()
                self.expect(";")
                variables.append(VarDecl(name, kind, value))
            elif self.accept("handler"):
                handlers.append(self.handler())
            else:
                raise self.error("expected cpu_port, var or handler")
        return CpScript(tuple(variables), tuple(handlers), cpu_port)

    def handler(self) -> Handler:
        name = self.name()
        self.expect("(")
        params = []
        if not self.accept(")"):
            params.append(self.name())
            while self.accept(","):
                params.append(self.name())
            self.expect(")")
        trigger = when = None
        if self.accept("on"):
            trigger = self.name()
            if trigger not in ("packet", "digest", "start"):
                raise self.error("trigger must be packet, digest or start")
        if self.accept("when"):
            self.expect("(")
            when = self.expr()
            self.expect(")")
        return Handler(name, tuple(params), trigger, when, self.block())

    def block(self) -> tuple:
        self.expect("{")
        body = []
        while not self.accept("}"):
            body.append(self.effect())
        return tuple(body)

    def effect(self):
        line = self.tok.line
        if self.accept("set"):
            name = self.name()
            self.expect("=")
            e = self.expr()
            self.expect(";")
            return SetVar(name, e)
        if self.accept("call"):
            name = self.name()
            self.expect("(")
            args = []
            if not self.accept(")"):
                args.append(self.expr())
                while self.accept(","):
                    args.append(self.expr())
                self.expect(")")
            self.expect(";")
            return Call(name, tuple(args))
        if self.accept("if"):
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            then = self.block()
            orelse = self.block() if self.accept("else") else ()
            return IfEffect(cond, then, orelse)
        if self.tok.kind == "name" and self.tok.text in _TABLE_CMDS:
            start = self.tok.pos
            while self.tok.text != ";":
                if self.next().kind == "eof":
                    raise self.error("unterminated table command")
            raw = self.text[start:self.next().pos]
            parts = []
            for i, piece in enumerate(_HOLE.split(raw)):
                if i % 2 == 0:
                    if piece:
                        parts.append(piece)
                    continue
                sub = _ScriptParser(piece)
                e = sub.expr()
                if sub.tok.kind != "eof":
                    raise sub.error("unexpected token in {...}")
                parts.append(e)
            return TableCommand(tuple(parts), line)
        raise self.error("expected an effect (set, call, if or a table command)")

    # precedence climbing: || < && < ! < comparison < +/-

    def expr(self):
        left = self.and_expr()
        while self.accept("||"):
            left = BoolOp("||", (left, self.and_expr()))
        return left

    def and_expr(self):
        left = self.not_expr()
        while self.accept("&&"):
            left = BoolOp("&&", (left, self.not_expr()))
        return left

    def not_expr(self):
        if self.accept("!"):
            return BoolOp("!", (self.not_expr(),))
        return self.comparison()

    def comparison(self):
        left = self.sum()
        if self.tok.text in ("==", "!=", "<", "<=", ">", ">="):
            op = self.next().text
            left = BinOp(op, left, self.sum())
        return left

    def sum(self):
        left = self.atom()
        while self.tok.text in ("+", "-") and self.tok.kind == "op":
            op = self.next().text
            left = BinOp(op, left, self.atom())
        return left

    def atom(self):
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if self.tok.kind == "num":
            return Num(self.number())
        if self.tok.text in ("true", "false"):
            return Num(int(self.next().text == "true"))
        if self.tok.text == "valid" and self.toks[self.i + 1].text == "(":
            self.i += 2
            h = self.name()
            self.expect(")")
            return IsValid(h)
        return Name(self.name())


def parse_cp_script(text: str, ir: ProgramIR | None = None) -> CpScript:
    script = _ScriptParser(text).script()
    if ir is not None:
        validate_script(script, ir)
    return script


def validate_script(script: CpScript, ir: ProgramIR):
    names = [h.name for h in script.handlers]
    dup = {n for n in names if names.count(n) > 1}
    if dup:
        raise ScriptError(f"duplicate handler(s): {', '.join(sorted(dup))}")
    var_names = {v.name for v in script.variables}
    if len(var_names) != len(script.variables):
        raise ScriptError("duplicate variable declaration")
    handlers = {h.name: h for h in script.handlers}

    def check_expr(e, params, where):
        if isinstance(e, Name):
            if e.name not in params and e.name not in var_names and not ir.has_field(e.name):
                raise ScriptError(f"{where}: unknown name {e.name!r}")
        elif isinstance(e, IsValid):
            if not ir.has_instance(e.header):
                raise ScriptError(f"{where}: unknown header {e.header!r}")
        elif isinstance(e, BinOp):
            check_expr(e.left, params, where)
            check_expr(e.right, params, where)
        elif isinstance(e, BoolOp):
            for a in e.args:
                check_expr(a, params, where)

    def check_body(body, params, where):
        for eff in body:
            if isinstance(eff, SetVar):
                if eff.name not in var_names:
                    raise ScriptError(f"{where}: assignment to undeclared variable {eff.name!r}")
                check_expr(eff.expr, params, where)
            elif isinstance(eff, Call):
                if eff.handler not in handlers:
                    raise ScriptError(f"{where}: call to unknown handler {eff.handler!r}")
                if len(eff.args) != len(handlers[eff.handler].params):
                    raise ScriptError(f"{where}: {eff.handler} takes {len(handlers[eff.handler].params)} arguments")
                for a in eff.args:
                    check_expr(a, params, where)
            elif isinstance(eff, IfEffect):
                check_expr(eff.cond, params, where)
                check_body(eff.then, params, where)
                check_body(eff.orelse, params, where)
            elif isinstance(eff, TableCommand):
                words = eff.parts[0].split() if isinstance(eff.parts[0], str) else []
                if len(words) < 2 or not ir.has_table(words[1]):
                    raise ScriptError(f"{where} (line {eff.line}): table command names no declared table")
                for p in eff.parts:
                    if not isinstance(p, str):
                        check_expr(p, params, where)

    for h in script.handlers:
        where = f"handler {h.name}"
        if h.trigger is not None and h.params:
            raise ScriptError(f"{where}: triggered handlers take no parameters")
        if h.when is not None:
            check_expr(h.when, set(h.params), where)
        check_body(h.body, set(h.params), where)


# -- state -----------------------------------------------------------------------

def _render(kind: str, value: int) -> str:
    return f"0x{value:x}" if kind == "addr" else str(value)


class RollingStateHash:
    """Variables (fixed, sorted) followed by a stack of frame lines, hashed incrementally."""

    def __init__(self, variables: dict[str, tuple[str, int]]):
        self.order = sorted(variables)
        self.kinds = {n: k for n, (k, _) in variables.items()}
        self.values = {n: v for n, (_, v) in variables.items()}
        self.lines = [self._line(n) for n in self.order]
        self.pos = {n: i for i, n in enumerate(self.order)}
        self.frames: list[bytes] = []
        self.crc = crc_push(0, b"".join(self.lines))

    def _line(self, name: str) -> bytes:
        return f"{name}={_render(self.kinds[name], self.values[name])}\n".encode()

    def serialize(self) -> bytes:
        return b"".join(self.lines) + b"".join(self.frames)

    def set(self, name: str, value: int):
        i = self.pos[name]
        crc = self.crc
        for fr in reversed(self.frames):
            crc = crc_pop(crc, fr)
        for ln in reversed(self.lines[i:]):
            crc = crc_pop(crc, ln)
        self.values[name] = value
        self.lines[i] = self._line(name)
        for ln in self.lines[i:]:
            crc = crc_push(crc, ln)
        for fr in self.frames:
            crc = crc_push(crc, fr)
        self.crc = crc

    def push_frame(self, handler: str, args) -> None:
        fr = f"call:{handler}({','.join(str(a) for a in args)})\n".encode()
        self.frames.append(fr)
        self.crc = crc_push(self.crc, fr)

    def pop_frame(self) -> None:
        self.crc = crc_pop(self.crc, self.frames.pop())

    def snapshot(self):
        return dict(self.values), list(self.lines), list(self.frames), self.crc

    def restore(self, snap):
        values, lines, frames, crc = snap
        self.values, self.lines, self.frames, self.crc = dict(values), list(lines), list(frames), crc


@dataclass
class CpSeed:
    original: object  # Packet snapshot of the triggering input
    state_crc: int
    config_crc: int
    handler: str
    pkt_typ: int = 3


@dataclass
class CpEvent:
    handler: str
    ok: bool
    error: str | None = None
    emitted: bool = False


class ControlPlane:
    """Runs one script against a shared :class:`TableConfig`."""

    def __init__(self, script: CpScript, config: TableConfig, *, max_depth: int = DEFAULT_MAX_DEPTH,
                 on_entry=None):
        self.script = script
        self.config = config
        self.max_depth = max_depth
        self.on_entry = on_entry  # callback(TableEntry) for committed table_add effects
        self.state = RollingStateHash({v.name: (v.kind, v.initial) for v in script.variables})
        self.kinds = {v.name: v.kind for v in script.variables}
        self.config_crc = config.config_hash()
        self.active_input = None
        self.events: list[CpEvent] = []
        self.seeds: list[CpSeed] = []
        for h in script.handlers:
            if h.trigger == "start":
                self._run_top(h, {}, [], None)
        self.seen_state = {self.state.crc}
        self.seen_config = {self.config_crc}

    @property
    def state_crc(self) -> int:
        return self.state.crc

    @property
    def variables(self) -> dict[str, int]:
        return dict(self.state.values)

    def serialize(self) -> bytes:
        return self.state.serialize()

    # evaluation

    def _eval(self, e, env):
        if isinstance(e, Num):
            return e.value
        if isinstance(e, Name):
            params, fields, _ = env
            if e.name in params:
                return params[e.name]
            if e.name in self.state.values:
                return self.state.values[e.name]
            return fields.get(e.name, 0)
        if isinstance(e, IsValid):
            return int(e.header in env[2])
        if isinstance(e, BinOp):
            return int(_BIN[e.op](self._eval(e.left, env), self._eval(e.right, env)))
        if isinstance(e, BoolOp):
            if e.op == "!":
                return int(not self._eval(e.args[0], env))
            if e.op == "&&":
                return int(bool(self._eval(e.args[0], env)) and bool(self._eval(e.args[1], env)))
            return int(bool(self._eval(e.args[0], env)) or bool(self._eval(e.args[1], env)))
        raise TypeError(e)

    def _exec(self, body, env, depth, added):
        for eff in body:
            if isinstance(eff, SetVar):
                v = self._eval(eff.expr, env)
                if v < 0:
                    raise EffectError(f"variable {eff.name} would become negative")
                self.state.set(eff.name, v)
            elif isinstance(eff, IfEffect):
                branch = eff.then if self._eval(eff.cond, env) else eff.orelse
                self._exec(branch, env, depth, added)
            elif isinstance(eff, Call):
                args = [self._eval(a, env) for a in eff.args]
                self._call(self.script.handler(eff.handler), args, env, depth + 1, added)
            elif isinstance(eff, TableCommand):
                line = "".join(p if isinstance(p, str) else str(self._eval(p, env)) for p in eff.parts)
                line = " ".join(line.split())
                try:
                    result = self.config.apply_command(line, allow_identical=True)
                except EntryError as exc:
                    raise EffectError(f"{line}: {exc}") from None
                if isinstance(result, TableEntry) and line.startswith("table_add"):
                    added.append(result)

    def _call(self, handler: Handler, args, env, depth, added):
        if depth > self.max_depth:
            raise HandlerDepthExceeded(f"handler call depth exceeds {self.max_depth}")
        params = dict(zip(handler.params, args))
        self.state.push_frame(handler.name, args)
        self._exec(handler.body, (params, env[1], env[2]), depth, added)
        self.state.pop_frame()

    def _run_top(self, handler: Handler, fields, headers, original) -> CpEvent:
        snap_state = self.state.snapshot()
        snap_config = self.config.copy()
        added: list[TableEntry] = []
        self.active_input = original
        try:
            self._call(handler, [], ({}, fields, headers), 1, added)
        except (EffectError, HandlerDepthExceeded) as exc:
            self.state.restore(snap_state)
            self.config.restore(snap_config)
            ev = CpEvent(handler.name, False, str(exc))
            self.events.append(ev)
            return ev
        self.config_crc = self.config.config_hash()
        if self.on_entry is not None:
            for entry in added:
                self.on_entry(entry)
        ev = CpEvent(handler.name, True)
        self.events.append(ev)
        return ev

    def _matching(self, trigger: str, fields, headers) -> Handler | None:
        for h in self.script.handlers:
            if h.trigger == trigger and (h.when is None or self._eval(h.when, ({}, fields, headers))):
                return h
        return None

    def _settle(self, ev: CpEvent, original) -> list[CpSeed]:
        novel = self.state.crc not in self.seen_state or self.config_crc not in self.seen_config
        self.seen_state.add(self.state.crc)
        self.seen_config.add(self.config_crc)
        if ev.ok and novel and original is not None:
            seed = CpSeed(original, self.state.crc, self.config_crc, ev.handler)
            self.seeds.append(seed)
            ev.emitted = True
            return [seed]
        return []

    def wants(self, ports) -> bool:
        return self.script.cpu_port is None or self.script.cpu_port in ports

    def on_packet_in(self, fields: dict, headers, original=None) -> list[CpSeed]:
        """Deliver one data-plane packet; returns the seeds emitted (0 or 1)."""
        h = self._matching("packet", fields, headers)
        if h is None:
            return []
        ev = self._run_top(h, fields, headers, original)
        return self._settle(ev, original)

    def on_digest(self, digest: dict, headers, original=None) -> list[CpSeed]:
        h = self._matching("digest", digest, headers)
        if h is None:
            return []
        ev = self._run_top(h, digest, headers, original)
        return self._settle(ev, original)


def serialize_cp_state(cp: ControlPlane) -> bytes:
    return cp.serialize()


def from_scratch_crc(cp: ControlPlane) -> int:
    return crc32(cp.serialize())
