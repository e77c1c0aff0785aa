"""Packets, and conversion between packets and wire bytes."""

from __future__ import annotations

from dataclasses import dataclass

from .ir import FP4_HEADER, INGRESS, START, ProgramIR

MAX_PARSER_STEPS = 1024


@dataclass
class Packet:
    """A parsed packet.

    ``headers`` lists the valid header elements in wire order; ``fields``
    maps ``element.field`` to its value for those headers, plus any metadata
    inputs such as ``standard_metadata.ingress_port``.
    """

    headers: list[str]
    fields: dict[str, int]
    payload: bytes = b""
    original: "Packet | None" = None
    egress_port: int | None = None

    def copy(self) -> "Packet":
        return Packet(list(self.headers), dict(self.fields), self.payload, self.original, self.egress_port)

    def snapshot(self) -> "Packet":
        """Independent copy of the header contents, without bookkeeping."""
        return Packet(list(self.headers), dict(self.fields), self.payload)

    def get(self, ref: str, default: int = 0) -> int:
        return self.fields.get(ref, default)


@dataclass(frozen=True)
class Dropped:
    reason: str


@dataclass(frozen=True)
class _HeaderCodec:
    elem: str
    nbytes: int
    fields: tuple[tuple[str, int, int], ...]  # (ref, shift, mask)

    def decode(self, data: bytes, offset: int, out: dict):
        word = int.from_bytes(data[offset:offset + self.nbytes], "big")
        for ref, shift, mask in self.fields:
            out[ref] = (word >> shift) & mask

    def encode(self, values: dict) -> bytes:
        word = 0
        for ref, shift, mask in self.fields:
            word |= (values.get(ref, 0) & mask) << shift
        return word.to_bytes(self.nbytes, "big")


_CODECS: dict[int, tuple[ProgramIR, dict[str, _HeaderCodec]]] = {}


def _codec(ir: ProgramIR, elem: str) -> _HeaderCodec:
    # keyed by identity: hashing a whole program on every call is too slow
    slot = _CODECS.get(id(ir))
    if slot is None or slot[0] is not ir:
        slot = _CODECS[id(ir)] = (ir, {})
    codec = slot[1].get(elem)
    if codec is None:
        codec = slot[1][elem] = _make_codec(ir, elem)
    return codec


def _make_codec(ir: ProgramIR, elem: str) -> _HeaderCodec:
    flds = ir.header_fields(elem)
    total = sum(w for _, w in flds)
    nbytes = (total + 7) // 8
    shift = nbytes * 8
    out = []
    for ref, w in flds:
        shift -= w
        out.append((ref, shift, (1 << w) - 1))
    return _HeaderCodec(elem, nbytes, tuple(out))


def header_codec(ir: ProgramIR, elem: str) -> _HeaderCodec:
    return _codec(ir, elem)


def header_size(ir: ProgramIR, elem: str) -> int:
    return _codec(ir, elem).nbytes


def _stack_index(base: str, headers: list[str]) -> int:
    return sum(1 for h in headers if h.split("[", 1)[0] == base)


def parse_packet(data: bytes, ir: ProgramIR, *, ingress_port: int | None = None) -> Packet | Dropped:
    """Run the parser state machine over ``data``.

    Instrumented programs carry their ``fp4`` header in front of the
    original packet. Bytes past the last extracted header become the payload.
    """
    headers: list[str] = []
    fields: dict[str, int] = {}
    offset = 0
    if ir.has_instance(FP4_HEADER):
        codec = _codec(ir, FP4_HEADER)
        if len(data) < codec.nbytes:
            return Dropped("truncated fp4 header")
        codec.decode(data, 0, fields)
        offset = codec.nbytes
    if ir.parser_states:
        state = START
        latest = None
        for _ in range(MAX_PARSER_STEPS):
            if state == INGRESS:
                break
            s = ir.state(state)
            if s.extract:
                base, _, idx = s.extract.partition("[")
                if idx:
                    inst = ir.instance(base)
                    i = _stack_index(base, headers)
                    if i >= inst.count:
                        return Dropped(f"header stack {base} overflow")
                    elem = f"{base}[{i}]"
                else:
                    elem = base
                codec = _codec(ir, elem)
                if len(data) - offset < codec.nbytes:
                    return Dropped(f"truncated {elem} header")
                codec.decode(data, offset, fields)
                offset += codec.nbytes
                headers.append(elem)
                latest = elem
            if s.select is None:
                state = s.default
                continue
            ref = s.select
            if ref.startswith("latest."):
                ref = f"{latest}.{ref[7:]}"
            value = fields.get(ref, 0) if ref != "standard_metadata.ingress_port" else (ingress_port or 0)
            for const, target in s.arms:
                if const == value:
                    state = target
                    break
            else:
                if s.default is None:
                    return Dropped(f"no transition for {ref}={value:#x} in state {s.name}")
                state = s.default
        else:
            return Dropped("parser did not terminate")
    if ingress_port is not None:
        fields["standard_metadata.ingress_port"] = ingress_port
    return Packet(headers, fields, bytes(data[offset:]))


def serialize_packet(pkt: Packet, ir: ProgramIR) -> bytes:
    """Deparse valid headers in order, followed by the payload."""
    parts = []
    if ir.has_instance(FP4_HEADER):
        parts.append(_codec(ir, FP4_HEADER).encode(pkt.fields))
    for elem in pkt.headers:
        if elem != FP4_HEADER:
            parts.append(_codec(ir, elem).encode(pkt.fields))
    parts.append(pkt.payload)
    return b"".join(parts)


def header_rank(ir: ProgramIR) -> dict[str, int]:
    """Deparse order of every header element: parser discovery order first,
    then declaration order for headers the parser never extracts."""
    order: list[str] = []
    seen_states = set()

    def visit(name: str):
        if name == INGRESS or name in seen_states or not ir.has_state(name):
            return
        seen_states.add(name)
        s = ir.state(name)
        if s.extract:
            base = s.extract.split("[", 1)[0]
            for elem in ir.instance(base).element_names():
                if elem not in order:
                    order.append(elem)
        for _, target in s.arms:
            visit(target)
        if s.default:
            visit(s.default)

    if ir.parser_states:
        visit(START)
    for elem in ir.header_elements(metadata=False):
        if elem not in order and elem != FP4_HEADER:
            order.append(elem)
    return {elem: i for i, elem in enumerate(order)}


def hexdump(data: bytes, width: int = 16) -> str:
    """Lowercase hex, ``width`` bytes per line, with an offset column."""
    lines = []
    for off in range(0, len(data), width):
        chunk = data[off:off + width]
        lines.append(f"{off:04x}  " + " ".join(f"{b:02x}" for b in chunk))
    return "\n".join(lines)
