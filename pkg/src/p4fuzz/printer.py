"""Canonical pretty-printer. ``parse_program(format_program(ir)) == ir``."""

from __future__ import annotations

from .ir import (And, Apply, BoolLit, CallControl, Compare, Const, FieldRef, If, Mark,
                 NameRef, Not, Or, ParamRef, ProgramIR, Valid)

_INDENT = "    "


def format_expr(e, parent: int = 0) -> str:
    # precedence: or=1, and=2, not=3, atoms=4
    if isinstance(e, Or):
        s, prec = f"{format_expr(e.left, 1)} || {format_expr(e.right, 2)}", 1
    elif isinstance(e, And):
        s, prec = f"{format_expr(e.left, 2)} && {format_expr(e.right, 3)}", 2
    elif isinstance(e, Not):
        return f"!{format_expr(e.operand, 3)}"
    elif isinstance(e, Valid):
        return f"valid({e.header})"
    elif isinstance(e, BoolLit):
        return "true" if e.value else "false"
    elif isinstance(e, Compare):
        s, prec = f"{e.left.ref} {e.op} {format_operand(e.right)}", 4
        if parent == 3:
            return f"({s})"
        return s
    else:
        raise TypeError(f"not an expression: {e!r}")
    return f"({s})" if prec < parent else s


def format_operand(arg) -> str:
    if isinstance(arg, Const):
        return str(arg.value)
    if isinstance(arg, FieldRef):
        return arg.ref
    if isinstance(arg, (ParamRef, NameRef)):
        return arg.name
    raise TypeError(f"not an operand: {arg!r}")


def _hex(value: int, width: int) -> str:
    return f"0x{value:0{max(1, (width + 3) // 4)}x}"


def _stmts(body, depth: int, out: list[str]):
    pad = _INDENT * depth
    for stmt in body:
        if isinstance(stmt, Apply):
            out.append(f"{pad}apply({stmt.table});")
        elif isinstance(stmt, CallControl):
            out.append(f"{pad}{stmt.name}();")
        elif isinstance(stmt, Mark):
            out.append(f"{pad}fp4_mark({stmt.field});")
        elif isinstance(stmt, If):
            out.append(f"{pad}if ({format_expr(stmt.cond)}) {{")
            _stmts(stmt.then, depth + 1, out)
            if stmt.orelse:
                out.append(f"{pad}}} else {{")
                _stmts(stmt.orelse, depth + 1, out)
            out.append(f"{pad}}}")


def format_program(ir: ProgramIR) -> str:
    out: list[str] = []
    for t in ir.header_types:
        out.append(f"header_type {t.name} {{")
        out.append(f"{_INDENT}fields {{")
        for f in t.fields:
            out.append(f"{_INDENT * 2}{f.name} : {f.width};")
        out.append(f"{_INDENT}}}")
        out.append("}")
        out.append("")
    for inst in ir.instances:
        kw = "metadata" if inst.metadata else "header"
        stack = f"[{inst.count}]" if inst.count else ""
        out.append(f"{kw} {inst.type_name} {inst.name}{stack};")
    if ir.instances:
        out.append("")
    for r in ir.registers:
        out.append(f"register {r.name} {{")
        out.append(f"{_INDENT}width : {r.width};")
        out.append(f"{_INDENT}instance_count : {r.size};")
        out.append("}")
        out.append("")
    for s in ir.parser_states:
        out.append(f"parser {s.name} {{")
        if s.extract:
            out.append(f"{_INDENT}extract({s.extract});")
        if s.select is None:
            out.append(f"{_INDENT}return {s.default};")
        else:
            width = _select_width(ir, s)
            out.append(f"{_INDENT}return select({s.select}) {{")
            for value, target in s.arms:
                out.append(f"{_INDENT * 2}{_hex(value, width)} : {target};")
            if s.default:
                out.append(f"{_INDENT * 2}default : {s.default};")
            out.append(f"{_INDENT}}}")
        out.append("}")
        out.append("")
    for a in ir.actions:
        out.append(f"action {a.name}({', '.join(a.params)}) {{")
        for p in a.body:
            out.append(f"{_INDENT}{p.op}({', '.join(format_operand(x) for x in p.args)});")
        out.append("}")
        out.append("")
    for t in ir.tables:
        out.append(f"table {t.name} {{")
        if t.keys:
            out.append(f"{_INDENT}reads {{")
            for k in t.keys:
                out.append(f"{_INDENT * 2}{k.field} : {k.match};")
            out.append(f"{_INDENT}}}")
        out.append(f"{_INDENT}actions {{")
        for aname in t.actions:
            out.append(f"{_INDENT * 2}{aname};")
        out.append(f"{_INDENT}}}")
        args = ", ".join(str(v) for v in t.default_args)
        out.append(f"{_INDENT}default_action : {t.default_action}({args});")
        if t.size is not None:
            out.append(f"{_INDENT}size : {t.size};")
        out.append("}")
        out.append("")
    for c in ir.controls:
        out.append(f"control {c.name} {{")
        _stmts(c.body, 1, out)
        out.append("}")
        out.append("")
    for a in ir.assertions:
        out.append(f"@assert {a.name}({format_expr(a.expr)})")
    while out and out[-1] == "":
        out.pop()
    return "\n".join(out) + "\n"


def _select_width(ir: ProgramIR, state) -> int:
    inst, _, fname = state.select.rpartition(".")
    if inst == "latest":
        inst = ir.instance(state.extract.split("[", 1)[0]).element_names()[0]
    try:
        return ir.field_width(f"{inst}.{fname}")
    except KeyError:
        return 8
