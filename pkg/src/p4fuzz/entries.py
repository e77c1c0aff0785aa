"""Table entries and the runtime-CLI text format.

Canonical command strings (used for hashing the table configuration) render
every number as lowercase ``0x`` hex::

    table_add ipv4_forward on_l3_hit 0x7 0x0a010000/16 =>
    table_add acl deny 0x0a000000&&&0xff000000 => 0x1 10

Entries always record the *original* action name; programs whose shared
actions were duplicated resolve it through an alias map.
"""

from __future__ import annotations

import copy
import ipaddress
import re
from dataclasses import dataclass, replace

from .crc import crc32
from .errors import EntryError
from .ir import ProgramIR, TableDef


@dataclass(frozen=True)
class Exact:
    value: int


@dataclass(frozen=True)
class Lpm:
    value: int
    prefix_len: int


@dataclass(frozen=True)
class Ternary:
    value: int
    mask: int


MatchSpec = Exact | Lpm | Ternary


@dataclass(frozen=True)
class TableEntry:
    table: str
    action: str
    matches: tuple[MatchSpec, ...]
    params: tuple[int, ...] = ()
    priority: int | None = None
    seq: int = 0

    @property
    def key(self) -> tuple:
        return (self.matches, self.priority)

    def command(self) -> str:
        keys = " ".join(_format_match(m) for m in self.matches)
        tail = [f"0x{p:x}" for p in self.params]
        if self.priority is not None:
            tail.append(str(self.priority))
        parts = ["table_add", self.table, self.action]
        if keys:
            parts.append(keys)
        return " ".join(parts) + " => " + " ".join(tail)


def _format_match(m: MatchSpec) -> str:
    if isinstance(m, Exact):
        return f"0x{m.value:x}"
    if isinstance(m, Lpm):
        return f"0x{m.value:x}/{m.prefix_len}"
    return f"0x{m.value:x}&&&0x{m.mask:x}"


_MAC = re.compile(r"^[0-9a-fA-F]{1,2}(:[0-9a-fA-F]{1,2}){5}$")


def parse_value(token: str) -> int:
    """Decimal, hex, binary, MAC, IPv4 or IPv6 literal."""
    tok = token.replace("_", "")
    try:
        if _MAC.match(tok):
            return int("".join(f"{int(b, 16):02x}" for b in tok.split(":")), 16)
        if tok.count(".") == 3 or ":" in tok:
            return int(ipaddress.ip_address(tok))
        return int(tok, 0)
    except ValueError:
        raise EntryError(f"bad value {token!r}") from None


def _lpm_mask(width: int, plen: int) -> int:
    return ((1 << plen) - 1) << (width - plen)


def parse_match(token: str, kind: str, width: int) -> MatchSpec:
    if kind == "exact":
        if "/" in token or "&&&" in token:
            raise EntryError(f"exact key given as {token!r}")
        value = parse_value(token)
        _fits(value, width, token)
        return Exact(value)
    if kind == "lpm":
        text, sep, plen = token.partition("/")
        value = parse_value(text)
        _fits(value, width, token)
        plen = int(plen) if sep else width
        if not 0 <= plen <= width:
            raise EntryError(f"prefix length {plen} outside 0..{width}")
        return Lpm(value & _lpm_mask(width, plen), plen)
    text, sep, mask = token.partition("&&&")
    value = parse_value(text)
    mask = parse_value(mask) if sep else (1 << width) - 1
    _fits(value, width, token)
    _fits(mask, width, token)
    return Ternary(value & mask, mask)


def _fits(value: int, width: int, token: str):
    if value < 0 or value >> width:
        raise EntryError(f"value {token!r} does not fit in {width} bits")


class TableConfig:
    """All runtime state installed by the control plane: entries, default
    overrides, multicast groups and initial register writes."""

    def __init__(self, ir: ProgramIR, aliases: dict[tuple[str, str], str] | None = None):
        self.ir = ir
        self.aliases = dict(aliases or {})
        self._unalias = {(t, new): orig for (t, orig), new in self.aliases.items()}
        self.entries: dict[str, list[TableEntry]] = {t.name: [] for t in ir.tables}
        self.defaults: dict[str, tuple[str, tuple[int, ...]]] = {}
        self.mc_groups: dict[int, tuple[int, ...]] = {}
        self.register_writes: list[tuple[str, int, int]] = []
        self.version = 0
        self._seq = 0

    # -- helpers -------------------------------------------------------------

    def copy(self) -> "TableConfig":
        out = copy.copy(self)
        out.entries = {t: list(es) for t, es in self.entries.items()}
        out.defaults = dict(self.defaults)
        out.mc_groups = dict(self.mc_groups)
        out.register_writes = list(self.register_writes)
        return out

    def restore(self, snap: "TableConfig"):
        """Roll back in place to a copy taken earlier with :meth:`copy`."""
        self.entries = {t: list(es) for t, es in snap.entries.items()}
        self.defaults = dict(snap.defaults)
        self.mc_groups = dict(snap.mc_groups)
        self.register_writes = list(snap.register_writes)
        self._seq = snap._seq
        self.version = max(self.version, snap.version) + 1

    def _table(self, name: str) -> TableDef:
        if not self.ir.has_table(name):
            raise EntryError(f"unknown table {name!r}")
        return self.ir.table(name)

    def resolve_action(self, table: str, action: str) -> str:
        """Original action name for ``action`` used in ``table``."""
        t = self._table(table)
        orig = self._unalias.get((table, action), action)
        if self.aliases.get((table, orig), orig) not in t.actions:
            raise EntryError(f"action {action!r} is not an action of table {table!r}")
        return orig

    def _arity(self, table: str, orig: str) -> int:
        return len(self.ir.action(self.aliases.get((table, orig), orig)).params)

    def entry_count(self) -> int:
        return sum(len(es) for es in self.entries.values())

    # -- building entries ----------------------------------------------------

    def make_entry(self, table: str, action: str, key_tokens, param_tokens) -> TableEntry:
        t = self._table(table)
        orig = self.resolve_action(table, action)
        if len(key_tokens) != len(t.keys):
            raise EntryError(f"table {table!r} takes {len(t.keys)} keys, got {len(key_tokens)}")
        matches = tuple(parse_match(tok, k.match, self.ir.field_width(k.field))
                        for tok, k in zip(key_tokens, t.keys))
        arity = self._arity(table, orig)
        needs_priority = any(k.match == "ternary" for k in t.keys)
        want = arity + (1 if needs_priority else 0)
        if len(param_tokens) != want:
            what = f"{arity} action parameters" + (" and a priority" if needs_priority else "")
            raise EntryError(f"{table}/{action}: expected {what}, got {len(param_tokens)} values")
        values = [parse_value(p) for p in param_tokens]
        priority = values.pop() if needs_priority else None
        return TableEntry(table, orig, matches, tuple(values), priority)

    def find(self, table: str, key) -> TableEntry | None:
        for e in self.entries.get(table, ()):
            if e.key == key:
                return e
        return None

    def add(self, entry: TableEntry, *, allow_identical: bool = False) -> TableEntry:
        existing = self.find(entry.table, entry.key)
        if existing is not None:
            if allow_identical and (existing.action, existing.params) == (entry.action, entry.params):
                return existing
            raise EntryError(f"duplicate match key in table {entry.table!r}: {entry.command()}")
        t = self._table(entry.table)
        if t.size is not None and len(self.entries[entry.table]) >= t.size:
            raise EntryError(f"table {entry.table!r} is full ({t.size} entries)")
        entry = replace(entry, seq=self._seq)
        self._seq += 1
        self.entries[entry.table].append(entry)
        self.version += 1
        return entry

    def modify(self, table: str, key, action: str, params) -> TableEntry:
        old = self.find(table, key)
        if old is None:
            raise EntryError(f"no entry with that key in table {table!r}")
        new = replace(old, action=action, params=tuple(params))
        es = self.entries[table]
        es[es.index(old)] = new
        self.version += 1
        return new

    def delete(self, table: str, key) -> TableEntry:
        old = self.find(table, key)
        if old is None:
            raise EntryError(f"no entry with that key in table {table!r}")
        self.entries[table].remove(old)
        self.version += 1
        return old

    def set_default(self, table: str, action: str, params=()):
        orig = self.resolve_action(table, action)
        if len(params) != self._arity(table, orig):
            raise EntryError(f"default action {action!r} of {table!r} takes "
                             f"{self._arity(table, orig)} parameters")
        self.defaults[table] = (orig, tuple(params))
        self.version += 1

    def default_of(self, table: str) -> tuple[str, tuple[int, ...]]:
        if table in self.defaults:
            return self.defaults[table]
        t = self.ir.table(table)
        return self._unalias.get((table, t.default_action), t.default_action), t.default_args

    # -- text ----------------------------------------------------------------

    def apply_command(self, line: str, *, allow_identical: bool = False):
        """Execute one runtime-CLI command line."""
        head, arrow, tail = line.partition("=>")
        words = head.split()
        rest = tail.split()
        if not words:
            return None
        cmd = words[0]
        if cmd == "table_add":
            if len(words) < 3 or not arrow:
                raise EntryError("usage: table_add <table> <action> <keys...> => <params...>")
            entry = self.make_entry(words[1], words[2], words[3:], rest)
            return self.add(entry, allow_identical=allow_identical)
        if cmd == "table_modify":
            if len(words) < 3 or not arrow:
                raise EntryError("usage: table_modify <table> <action> <keys...> => <params...>")
            entry = self.make_entry(words[1], words[2], words[3:], rest)
            return self.modify(entry.table, entry.key, entry.action, entry.params)
        if cmd == "table_delete":
            if len(words) < 2:
                raise EntryError("usage: table_delete <table> <keys...> [=> priority]")
            t = self._table(words[1])
            if len(words) - 2 != len(t.keys):
                raise EntryError(f"table {t.name!r} takes {len(t.keys)} keys")
            matches = tuple(parse_match(tok, k.match, self.ir.field_width(k.field))
                            for tok, k in zip(words[2:], t.keys))
            priority = parse_value(rest[0]) if rest else None
            return self.delete(t.name, (matches, priority))
        if cmd == "table_set_default":
            if len(words) != 3:
                raise EntryError("usage: table_set_default <table> <action> [=> <params...>]")
            return self.set_default(words[1], words[2], tuple(parse_value(p) for p in rest))
        if cmd == "mc_group_add":
            if len(words) < 2:
                raise EntryError("usage: mc_group_add <group> <port...>")
            self.mc_groups[parse_value(words[1])] = tuple(parse_value(p) for p in words[2:])
            self.version += 1
            return None
        if cmd == "register_write":
            if len(words) != 4:
                raise EntryError("usage: register_write <register> <index> <value>")
            if not self.ir.has_register(words[1]):
                raise EntryError(f"unknown register {words[1]!r}")
            self.register_writes.append((words[1], parse_value(words[2]), parse_value(words[3])))
            return None
        raise EntryError(f"unknown command {cmd!r}")

    def commands(self) -> list[str]:
        """Canonical strings for every table entry and default override."""
        out = [e.command() for es in self.entries.values() for e in es]
        for table, (action, params) in self.defaults.items():
            tail = " ".join(f"0x{p:x}" for p in params)
            out.append(f"table_set_default {table} {action} => {tail}")
        return out

    def config_hash(self) -> int:
        return hash_table_config(self.commands())


def hash_table_config(commands) -> int:
    """CRC-32 of the newline-joined, lexicographically sorted command strings."""
    return crc32("\n".join(sorted(commands)).encode())


def load_entries(text: str, ir: ProgramIR, aliases=None) -> TableConfig:
    config = TableConfig(ir, aliases)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            config.apply_command(line)
        except EntryError as exc:
            raise EntryError(f"line {lineno}: {exc}") from None
    return config
