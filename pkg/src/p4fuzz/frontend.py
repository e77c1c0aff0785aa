"""Parser and validator for the P4-14 subset.

Supported top-level declarations: ``header_type``, ``header``/``metadata``
instances (header stacks via ``header t name[N];``), ``register`` and
``counter``, ``parser`` states with ``extract`` and ``select``, ``action``,
``table`` and ``control``. Assertions are annotation lines::

    @assert ttl_check(ipv4.ttl != 0 || std_metadata.drop == 1)

The name is optional. ``@pragma`` lines are skipped.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import (CycleError, Diagnostic, FrontendError, P4ReferenceError,
                     P4SyntaxError, P4TypeError)
from .ir import (COMPARE_OPS, INGRESS, MAX_FIELD_WIDTH, STANDARD_METADATA,
                 STANDARD_METADATA_ALIASES, START, ActionDef, And, Apply,
                 AssertionDecl, BoolLit, CallControl, Compare, Const, ControlDef,
                 FieldDecl, FieldRef, HeaderInstance, HeaderType, If, Mark, NameRef,
                 Not, Or, ParamRef, ParserState, Primitive, ProgramIR, RegisterDecl,
                 TableDef, TableKey, Valid, expr_fields, expr_headers, walk_stmts,
                 with_stages)

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<pragma>@pragma[^\n]*)
  | (?P<annot>@[A-Za-z_]\w*)
  | (?P<num>0[xX][0-9a-fA-F_]+|0[bB][01_]+|\d+)
  | (?P<ident>[A-Za-z_]\w*)
  | (?P<op>\|\||&&|==|!=|<=|>=|[<>!{}()\[\];:,.=])
""", re.VERBOSE | re.DOTALL)


@dataclass(frozen=True)
class Token:
    kind: str  # num | ident | op | annot | eof
    text: str
    line: int
    col: int


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise P4SyntaxError(f"unexpected character {source[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        text = m.group()
        if kind not in ("ws", "comment", "pragma"):
            tokens.append(Token(kind, text, line, pos - line_start + 1))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            line_start = pos + text.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


def parse_int(text: str) -> int:
    return int(text.replace("_", ""), 0)


_PRIMITIVES = {
    # name: (min args, max args)
    "modify_field": (2, 3),
    "add_to_field": (2, 2),
    "subtract_from_field": (2, 2),
    "add_header": (1, 1),
    "remove_header": (1, 1),
    "register_read": (3, 3),
    "register_write": (3, 3),
    "count": (2, 2),
    "hash": (3, None),
    "drop": (0, 0),
    "multicast": (1, 1),
    "digest": (1, None),
    "no_op": (0, 0),
}


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.i = 0
        self.positions: dict[tuple[str, str], tuple[int, int]] = {}

    # token helpers

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, expected: str) -> P4SyntaxError:
        t = self.tok
        found = t.text or "end of input"
        return P4SyntaxError(f"expected {expected}, found {found!r}", t.line, t.col)

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind in ("op", "ident")

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.error(repr(text))
        t = self.tok
        self.i += 1
        return t

    def ident(self, what: str = "identifier") -> str:
        if self.tok.kind != "ident":
            raise self.error(what)
        t = self.tok
        self.i += 1
        return t.text

    def number(self) -> int:
        if self.tok.kind != "num":
            raise self.error("number")
        t = self.tok
        self.i += 1
        return parse_int(t.text)

    def mark(self, kind: str, name: str, tok: Token):
        self.positions.setdefault((kind, name), (tok.line, tok.col))

    # declarations

    def program(self):
        decls = {k: [] for k in ("types", "instances", "states", "actions", "tables",
                                 "controls", "registers", "assertions")}
        while self.tok.kind != "eof":
            t = self.tok
            if t.kind == "annot":
                if t.text != "@assert":
                    raise P4SyntaxError(f"unknown annotation {t.text}", t.line, t.col)
                self.i += 1
                decls["assertions"].append(self.assertion_body(len(decls["assertions"]), t))
                continue
            if t.kind != "ident":
                raise self.error("declaration")
            kw = t.text
            if kw == "header_type":
                decls["types"].append(self.header_type())
            elif kw in ("header", "metadata"):
                decls["instances"].append(self.instance())
            elif kw in ("register", "counter"):
                decls["registers"].append(self.register())
            elif kw == "parser":
                decls["states"].append(self.parser_state())
            elif kw == "action":
                decls["actions"].append(self.action())
            elif kw == "table":
                decls["tables"].append(self.table())
            elif kw == "control":
                decls["controls"].append(self.control())
            else:
                raise self.error("declaration")
        return decls

    def header_type(self) -> HeaderType:
        self.expect("header_type")
        tok = self.tok
        name = self.ident("header type name")
        self.mark("type", name, tok)
        self.expect("{")
        self.expect("fields")
        self.expect("{")
        flds = []
        while not self.accept("}"):
            ftok = self.tok
            fname = self.ident("field name")
            self.expect(":")
            width = self.number()
            self.expect(";")
            self.mark("field", f"{name}.{fname}", ftok)
            flds.append(FieldDecl(fname, width))
        self.expect("}")
        return HeaderType(name, tuple(flds))

    def instance(self) -> HeaderInstance:
        kw = self.tok.text
        self.i += 1
        ttok = self.tok
        type_name = self.ident("header type name")
        tok = self.tok
        name = self.ident("instance name")
        count = 0
        if self.accept("["):
            count = self.number()
            self.expect("]")
            if count < 1:
                raise P4TypeError("header stack size must be positive", tok.line, tok.col)
        self.expect(";")
        self.mark("instance", name, tok)
        self.mark("instance_type", name, ttok)
        return HeaderInstance(name, type_name, kw == "metadata", count)

    def register(self) -> RegisterDecl:
        kw = self.tok.text
        self.i += 1
        tok = self.tok
        name = self.ident("register name")
        self.mark("register", name, tok)
        self.expect("{")
        width, size = (32 if kw == "counter" else None), None
        while not self.accept("}"):
            key = self.ident("attribute")
            self.expect(":")
            if key == "width":
                width = self.number()
            elif key == "instance_count":
                size = self.number()
            elif key == "type" and kw == "counter":
                self.ident("counter type")
            else:
                raise P4SyntaxError(f"unknown {kw} attribute {key!r}", tok.line, tok.col)
            self.expect(";")
        if width is None or size is None:
            raise P4SyntaxError(f"{kw} {name} needs width and instance_count", tok.line, tok.col)
        return RegisterDecl(name, width, size)

    def header_ref(self) -> str:
        name = self.ident("header instance")
        if self.accept("["):
            if self.tok.kind == "num":
                idx = str(self.number())
            else:
                idx = self.ident("stack index")
            self.expect("]")
            return f"{name}[{idx}]"
        return name

    def field_ref(self) -> str:
        hdr = self.header_ref()
        self.expect(".")
        fname = self.ident("field name")
        if hdr in STANDARD_METADATA_ALIASES:
            hdr = STANDARD_METADATA
        return f"{hdr}.{fname}"

    def parser_state(self) -> ParserState:
        self.expect("parser")
        tok = self.tok
        name = self.ident("parser state name")
        self.mark("state", name, tok)
        self.expect("{")
        extract = None
        if self.accept("extract"):
            self.expect("(")
            etok = self.tok
            extract = self.header_ref()
            self.mark("extract", name, etok)
            self.expect(")")
            self.expect(";")
        self.expect("return")
        if self.accept("select"):
            self.expect("(")
            stok = self.tok
            select = self.field_ref()
            self.mark("select", name, stok)
            self.expect(")")
            self.expect("{")
            arms, default = [], None
            while not self.accept("}"):
                atok = self.tok
                if self.accept("default"):
                    self.expect(":")
                    default = self.ident("next state")
                    self.mark("target", f"{name}.default", atok)
                else:
                    value = self.number()
                    self.expect(":")
                    arms.append((value, self.ident("next state")))
                    self.mark("target", f"{name}.{len(arms) - 1}", atok)
                self.expect(";")
            state = ParserState(name, extract, select, tuple(arms), default)
        else:
            ttok = self.tok
            target = self.ident("next state")
            self.mark("target", f"{name}.default", ttok)
            self.expect(";")
            state = ParserState(name, extract, None, (), target)
        self.expect("}")
        return state

    def action(self) -> ActionDef:
        self.expect("action")
        tok = self.tok
        name = self.ident("action name")
        self.mark("action", name, tok)
        self.expect("(")
        params = []
        if not self.at(")"):
            params.append(self.ident("parameter"))
            while self.accept(","):
                params.append(self.ident("parameter"))
        self.expect(")")
        self.expect("{")
        body = []
        while not self.accept("}"):
            ptok = self.tok
            op = self.ident("primitive")
            self.expect("(")
            args = []
            if not self.at(")"):
                args.append(self.operand(params))
                while self.accept(","):
                    args.append(self.operand(params))
            self.expect(")")
            self.expect(";")
            self.mark("primitive", f"{name}.{len(body)}", ptok)
            body.append(Primitive(op, tuple(args)))
        return ActionDef(name, tuple(params), tuple(body))

    def operand(self, params):
        if self.tok.kind == "num":
            return Const(self.number())
        nxt = self.peek()
        if nxt.text == "." or (nxt.text == "[" and self.peek(4).text == "."):
            return FieldRef(self.field_ref())
        if nxt.text == "[":
            return NameRef(self.header_ref())
        name = self.ident("operand")
        if name in params:
            return ParamRef(name)
        return NameRef(name)

    def table(self) -> TableDef:
        self.expect("table")
        tok = self.tok
        name = self.ident("table name")
        self.mark("table", name, tok)
        self.expect("{")
        keys, actions = [], []
        default_action, default_args, size = None, (), None
        while not self.accept("}"):
            atok = self.tok
            attr = self.ident("table attribute")
            if attr == "reads":
                self.expect("{")
                while not self.accept("}"):
                    ktok = self.tok
                    fref = self.field_ref()
                    self.expect(":")
                    kind = self.ident("match kind")
                    self.expect(";")
                    self.mark("key", f"{name}.{len(keys)}", ktok)
                    keys.append(TableKey(fref, kind))
            elif attr == "actions":
                self.expect("{")
                while not self.accept("}"):
                    ntok = self.tok
                    aname = self.ident("action name")
                    self.expect(";")
                    self.mark("table_action", f"{name}.{aname}", ntok)
                    actions.append(aname)
            elif attr == "default_action":
                self.expect(":")
                self.mark("default_action", name, self.tok)
                default_action = self.ident("action name")
                self.expect("(")
                args = []
                if not self.at(")"):
                    args.append(self.number())
                    while self.accept(","):
                        args.append(self.number())
                self.expect(")")
                self.expect(";")
                default_args = tuple(args)
            elif attr == "size":
                self.expect(":")
                size = self.number()
                self.expect(";")
            else:
                raise P4SyntaxError(f"unknown table attribute {attr!r}", atok.line, atok.col)
        if default_action is None:
            raise P4SyntaxError(f"table {name} must declare a default_action", tok.line, tok.col)
        return TableDef(name, tuple(keys), tuple(actions), default_action, default_args, size)

    def control(self) -> ControlDef:
        self.expect("control")
        tok = self.tok
        name = self.ident("control name")
        self.mark("control", name, tok)
        return ControlDef(name, self.block())

    def block(self) -> tuple:
        self.expect("{")
        body = []
        while not self.accept("}"):
            body.append(self.statement())
        return tuple(body)

    def statement(self):
        tok = self.tok
        if self.accept("apply"):
            self.expect("(")
            name = self.ident("table name")
            self.expect(")")
            self.expect(";")
            self.mark("apply", name, tok)
            return Apply(name)
        if self.accept("if"):
            cond = self.expr()
            then = self.block()
            orelse = ()
            if self.accept("else"):
                orelse = (self.statement(),) if self.at("if") else self.block()
            return If(cond, then, orelse)
        if self.accept("fp4_mark"):
            self.expect("(")
            fref = self.field_ref()
            self.expect(")")
            self.expect(";")
            self.mark("mark", fref, tok)
            return Mark(fref)
        name = self.ident("statement")
        self.expect("(")
        self.expect(")")
        self.expect(";")
        self.mark("call", name, tok)
        return CallControl(name)

    # expressions

    def expr(self):
        left = self.and_expr()
        while self.accept("||") or self.accept("or"):
            left = Or(left, self.and_expr())
        return left

    def and_expr(self):
        left = self.not_expr()
        while self.accept("&&") or self.accept("and"):
            left = And(left, self.not_expr())
        return left

    def not_expr(self):
        if self.accept("!") or self.accept("not"):
            return Not(self.not_expr())
        return self.atom()

    def atom(self):
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if self.accept("true"):
            return BoolLit(True)
        if self.accept("false"):
            return BoolLit(False)
        if self.at("valid") and self.peek().text == "(":
            self.i += 1
            self.expect("(")
            tok = self.tok
            hdr = self.header_ref()
            self.mark("valid", hdr, tok)
            self.expect(")")
            return Valid(hdr)
        tok = self.tok
        left = self.field_ref()
        self.mark("expr_field", left, tok)
        if self.tok.text not in COMPARE_OPS:
            raise self.error("comparison operator")
        op = self.tok.text
        self.i += 1
        if self.tok.kind == "num":
            right = Const(self.number())
        else:
            rtok = self.tok
            right = FieldRef(self.field_ref())
            self.mark("expr_field", right.ref, rtok)
        return Compare(op, FieldRef(left), right)

    def assertion_body(self, index: int, tok: Token) -> tuple[AssertionDecl, Token]:
        name = f"assertion{index}"
        if self.tok.kind == "ident" and self.peek().text == "(":
            name = self.ident()
        self.expect("(")
        expr = self.expr()
        self.expect(")")
        self.accept(";")
        self.mark("assertion", name, tok)
        return AssertionDecl(name, expr), tok


# validation ---------------------------------------------------------------

class _Checker:
    def __init__(self, ir: ProgramIR, positions):
        self.ir = ir
        self.pos = positions
        self.diags: list[Diagnostic] = []

    def report(self, cls, message: str, key=None):
        line, col = self.pos.get(key, (None, None)) if key else (None, None)
        self.diags.append(Diagnostic(cls.kind, message, line, col))

    def raise_if_any(self):
        if not self.diags:
            return
        first = self.diags[0]
        cls = {P4SyntaxError.kind: P4SyntaxError, P4ReferenceError.kind: P4ReferenceError,
               P4TypeError.kind: P4TypeError}.get(first.kind, FrontendError)
        raise cls(first.message, first.line, first.col, diagnostics=list(self.diags))

    def unique(self, items, kind):
        seen = set()
        for item in items:
            if item.name in seen:
                self.report(P4ReferenceError, f"duplicate {kind} {item.name!r}", (kind, item.name))
            seen.add(item.name)

    def check_field(self, ref: str, key, context: str):
        if not self.ir.has_field(ref):
            self.report(P4ReferenceError, f"unknown field {ref!r} in {context}", key)
            return False
        return True

    def check_const(self, value: int, width: int, key, context: str):
        if value < 0 or value >= (1 << width):
            self.report(P4TypeError, f"constant {value} does not fit in {width} bits in {context}", key)

    def run(self):
        ir = self.ir
        self.unique(ir.header_types, "type")
        self.unique(ir.instances, "instance")
        self.unique(ir.parser_states, "state")
        self.unique(ir.actions, "action")
        self.unique(ir.tables, "table")
        self.unique(ir.controls, "control")
        self.unique(ir.registers, "register")
        self.unique(ir.assertions, "assertion")
        self.check_types()
        self.check_parser()
        self.check_actions()
        self.check_tables()
        self.check_controls()
        for a in ir.assertions:
            self.check_expr(a.expr, ("assertion", a.name), f"assertion {a.name}")

    def check_types(self):
        ir = self.ir
        for t in ir.header_types:
            for f in t.fields:
                if not 1 <= f.width <= MAX_FIELD_WIDTH:
                    self.report(P4TypeError, f"field {t.name}.{f.name} width {f.width} outside 1..{MAX_FIELD_WIDTH}",
                                ("field", f"{t.name}.{f.name}"))
        for inst in ir.instances:
            if inst.name == STANDARD_METADATA or inst.name in STANDARD_METADATA_ALIASES:
                self.report(P4ReferenceError, f"{inst.name!r} is reserved", ("instance", inst.name))
            if not any(t.name == inst.type_name for t in ir.header_types):
                self.report(P4ReferenceError, f"instance {inst.name} has undeclared type {inst.type_name!r}",
                            ("instance_type", inst.name))
                continue
            if not inst.metadata:
                width = ir.header_type(inst.type_name).width
                if width % 8:
                    self.report(P4TypeError, f"header {inst.name} is {width} bits, not byte aligned",
                                ("instance", inst.name))
            elif inst.count:
                self.report(P4TypeError, f"metadata {inst.name} cannot be a stack", ("instance", inst.name))

    def check_parser(self):
        ir = self.ir
        if ir.parser_states and not ir.has_state(START):
            self.report(P4ReferenceError, "parser has no 'start' state")
        for s in ir.parser_states:
            if s.extract is not None:
                base, _, idx = s.extract.partition("[")
                if not any(i.name == base and not i.metadata for i in ir.instances):
                    self.report(P4ReferenceError, f"state {s.name} extracts undeclared header {base!r}",
                                ("extract", s.name))
                else:
                    inst = ir.instance(base)
                    if bool(inst.count) != bool(idx) or (idx and idx != "next]"):
                        self.report(P4TypeError, f"state {s.name}: stacks extract as {base}[next]",
                                    ("extract", s.name))
            targets = [t for _, t in s.arms] + ([s.default] if s.default else [])
            for k, target in enumerate(targets):
                if target != INGRESS and not ir.has_state(target):
                    key = ("target", f"{s.name}.{k if k < len(s.arms) else 'default'}")
                    self.report(P4ReferenceError, f"state {s.name} transitions to undeclared state {target!r}", key)
            if s.select is not None:
                width = self.select_width(s)
                if width is None:
                    continue
                seen = set()
                for value, _ in s.arms:
                    if value in seen:
                        self.report(P4TypeError, f"state {s.name} has duplicate select value {value:#x}",
                                    ("select", s.name))
                    seen.add(value)
                    self.check_const(value, width, ("select", s.name), f"state {s.name}")

    def select_width(self, s: ParserState):
        ir = self.ir
        inst, _, fname = s.select.rpartition(".")
        if inst == "latest":
            if s.extract is None:
                self.report(P4ReferenceError, f"state {s.name} selects on latest without extract",
                            ("select", s.name))
                return None
            base = s.extract.split("[", 1)[0]
            if not any(i.name == base for i in ir.instances):
                return None
            ref = f"{ir.instance(base).element_names()[0]}.{fname}"
        else:
            ref = s.select
        if not self.check_field(ref, ("select", s.name), f"state {s.name}"):
            return None
        return ir.field_width(ref)

    def check_actions(self):
        ir = self.ir
        for a in ir.actions:
            for k, prim in enumerate(a.body):
                key = ("primitive", f"{a.name}.{k}")
                where = f"action {a.name}"
                arity = _PRIMITIVES.get(prim.op)
                if arity is None:
                    self.report(P4ReferenceError, f"unknown primitive {prim.op!r} in {where}", key)
                    continue
                lo, hi = arity
                if len(prim.args) < lo or (hi is not None and len(prim.args) > hi):
                    self.report(P4SyntaxError, f"{prim.op} takes {lo}..{hi or 'n'} arguments in {where}", key)
                    continue
                self.check_primitive(a, prim, key, where)

    def check_primitive(self, a: ActionDef, prim: Primitive, key, where):
        ir = self.ir
        args = prim.args

        def need_field(arg):
            if not isinstance(arg, FieldRef):
                self.report(P4TypeError, f"{prim.op} expects a field, got {arg} in {where}", key)
                return None
            return arg.ref if self.check_field(arg.ref, key, where) else None

        def need_value(arg, width=None):
            if isinstance(arg, FieldRef):
                self.check_field(arg.ref, key, where)
            elif isinstance(arg, NameRef):
                self.report(P4ReferenceError, f"unknown parameter {arg.name!r} in {where}", key)
            elif isinstance(arg, Const) and width is not None:
                self.check_const(arg.value, width, key, where)

        def need_header(arg):
            if not isinstance(arg, NameRef) or not any(
                    i.name == arg.name.split("[")[0] and not i.metadata for i in ir.instances):
                self.report(P4ReferenceError, f"{prim.op} expects a header instance in {where}", key)
            elif not ir.has_instance(arg.name):
                self.report(P4ReferenceError, f"unknown header {arg.name!r} in {where}", key)

        def need_register(arg):
            if not isinstance(arg, NameRef) or not ir.has_register(arg.name):
                self.report(P4ReferenceError, f"{prim.op} expects a declared register in {where}", key)
                return None
            return ir.register(arg.name)

        op = prim.op
        if op in ("modify_field", "add_to_field", "subtract_from_field"):
            dst = need_field(args[0])
            width = ir.field_width(dst) if dst else None
            need_value(args[1], width)
            if len(args) == 3:
                need_value(args[2], width)
        elif op in ("add_header", "remove_header"):
            need_header(args[0])
        elif op == "register_read":
            need_field(args[0])
            need_register(args[1])
            need_value(args[2])
        elif op == "register_write":
            reg = need_register(args[0])
            need_value(args[1])
            need_value(args[2], reg.width if reg else None)
        elif op == "count":
            need_register(args[0])
            need_value(args[1])
        elif op == "hash":
            need_field(args[0])
            if not isinstance(args[1], Const) or args[1].value < 1:
                self.report(P4TypeError, f"hash output size must be a positive constant in {where}", key)
            for arg in args[2:]:
                need_field(arg)
        elif op == "multicast":
            need_value(args[0], 16)
        elif op == "digest":
            for arg in args:
                need_field(arg)

    def check_tables(self):
        ir = self.ir
        for t in ir.tables:
            lpm = 0
            for k, key in enumerate(t.keys):
                self.check_field(key.field, ("key", f"{t.name}.{k}"), f"table {t.name}")
                if key.match not in ("exact", "lpm", "ternary"):
                    self.report(P4SyntaxError, f"unknown match kind {key.match!r} in table {t.name}",
                                ("key", f"{t.name}.{k}"))
                lpm += key.match == "lpm"
            if lpm > 1:
                self.report(P4TypeError, f"table {t.name} has more than one lpm key", ("table", t.name))
            for aname in t.actions:
                if not ir.has_action(aname):
                    self.report(P4ReferenceError, f"table {t.name} references undeclared action {aname!r}",
                                ("table_action", f"{t.name}.{aname}"))
            if t.default_action not in t.actions:
                self.report(P4ReferenceError,
                            f"default action {t.default_action!r} of table {t.name} is not in its actions list",
                            ("default_action", t.name))
            elif ir.has_action(t.default_action):
                nparams = len(ir.action(t.default_action).params)
                if nparams != len(t.default_args):
                    self.report(P4TypeError, f"default action of table {t.name} needs {nparams} arguments",
                                ("default_action", t.name))

    def check_controls(self):
        ir = self.ir
        if not ir.has_control(INGRESS):
            self.report(P4ReferenceError, "program has no 'ingress' control")
        applied: dict[str, int] = {}

        def visit(stmt):
            if isinstance(stmt, Apply):
                if not ir.has_table(stmt.table):
                    self.report(P4ReferenceError, f"apply of undeclared table {stmt.table!r}", ("apply", stmt.table))
                applied[stmt.table] = applied.get(stmt.table, 0) + 1
            elif isinstance(stmt, If):
                self.check_expr(stmt.cond, None, "control condition")
            elif isinstance(stmt, CallControl):
                if not ir.has_control(stmt.name):
                    self.report(P4ReferenceError, f"call of undeclared control {stmt.name!r}", ("call", stmt.name))
            elif isinstance(stmt, Mark):
                if self.check_field(stmt.field, ("mark", stmt.field), "fp4_mark") and \
                        ir.field_width(stmt.field) != 1:
                    self.report(P4TypeError, f"fp4_mark needs a 1-bit field, got {stmt.field}", ("mark", stmt.field))

        for c in ir.controls:
            walk_stmts(c.body, visit)
        for name, n in applied.items():
            if n > 1:
                self.report(P4TypeError, f"table {name} is applied {n} times", ("apply", name))

    def check_expr(self, expr, key, where):
        for ref in expr_fields(expr):
            self.check_field(ref, key or ("expr_field", ref), where)
        for hdr in expr_headers(expr):
            if not self.ir.has_instance(hdr):
                self.report(P4ReferenceError, f"unknown header {hdr!r} in {where}", key or ("valid", hdr))

        def walk(e):
            if isinstance(e, Compare):
                if e.op not in COMPARE_OPS:
                    self.report(P4SyntaxError, f"unknown operator {e.op!r} in {where}", key)
                if isinstance(e.right, Const) and self.ir.has_field(e.left.ref):
                    self.check_const(e.right.value, self.ir.field_width(e.left.ref), key or ("expr_field", e.left.ref),
                                     where)
            elif isinstance(e, (And, Or)):
                walk(e.left)
                walk(e.right)
            elif isinstance(e, Not):
                walk(e.operand)

        walk(expr)


def _build(decls) -> ProgramIR:
    instances = tuple(decls["instances"])
    meta_types = {i.type_name for i in instances if i.metadata}
    types = tuple(HeaderType(t.name, t.fields, t.name in meta_types) for t in decls["types"])
    return ProgramIR(
        header_types=types,
        instances=instances,
        parser_states=tuple(decls["states"]),
        actions=tuple(decls["actions"]),
        tables=tuple(decls["tables"]),
        controls=tuple(decls["controls"]),
        registers=tuple(decls["registers"]),
        assertions=tuple(a for a, _ in decls["assertions"]),
    )


def parse_program(source: str) -> ProgramIR:
    """Parse and validate program text; stages are assigned on the result.

    Raises a :class:`FrontendError` subclass whose ``diagnostics`` carries
    every problem found with line/column positions.
    """
    parser = _Parser(tokenize(source))
    ir = _build(parser.program())
    checker = _Checker(ir, parser.positions)
    checker.run()
    checker.raise_if_any()
    return assign_stages(ir)


def parse_assertions(ir: ProgramIR, annotations) -> list[AssertionDecl]:
    """Compile assertion annotations against a validated program.

    Each annotation is ``assert(expr)`` or ``assert name(expr)``, with or
    without a leading ``@``. A violation is the expression evaluating false.
    """
    out = []
    for k, text in enumerate(annotations):
        text = text.strip()
        if text.startswith("@"):
            text = text[1:]
        parser = _Parser(tokenize(text))
        tok = parser.tok
        parser.expect("assert")
        decl, _ = parser.assertion_body(len(ir.assertions) + k, tok)
        if parser.tok.kind != "eof":
            raise parser.error("end of assertion")
        checker = _Checker(ir, parser.positions)
        checker.check_expr(decl.expr, ("assertion", decl.name), f"assertion {decl.name}")
        checker.raise_if_any()
        out.append(decl)
    return out


def assign_stages(ir: ProgramIR) -> ProgramIR:
    """Give each table the smallest stage consistent with control order.

    Sequential applies occupy increasing stages; the two arms of an ``if``
    start from the same stage, and whatever follows starts after the deeper
    arm. Control calls are inlined.
    """
    stages: dict[str, int] = {}

    def run(body, floor: int, active: tuple[str, ...]) -> int:
        for stmt in body:
            if isinstance(stmt, Apply):
                stages[stmt.table] = max(stages.get(stmt.table, 0), floor)
                floor = stages[stmt.table] + 1
            elif isinstance(stmt, If):
                floor = max(run(stmt.then, floor, active), run(stmt.orelse, floor, active))
            elif isinstance(stmt, CallControl):
                if stmt.name in active:
                    raise CycleError(f"control flow cycle through {' -> '.join(active + (stmt.name,))}")
                floor = run(ir.control(stmt.name).body, floor, active + (stmt.name,))
        return floor

    if ir.has_control(INGRESS):
        run(ir.control(INGRESS).body, 0, (INGRESS,))
    return with_stages(ir, stages)
