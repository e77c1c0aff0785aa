"""Rolling CRC-32 (IEEE, reflected) that can both append and un-append bytes.

Values are finalized CRCs as returned by :func:`zlib.crc32`, so
``crc_push(0, data) == zlib.crc32(data)``. Popping runs the table-driven
update backwards: the top byte of every table entry is distinct, which
identifies the table index used at each step.
"""

from __future__ import annotations

import zlib

_POLY = 0xEDB88320
_MASK = 0xFFFFFFFF


def _make_table() -> list[int]:
    table = []
    for i in range(256):
        c = i
        for _ in range(8):
            c = (c >> 1) ^ _POLY if c & 1 else c >> 1
        table.append(c)
    return table


_TABLE = _make_table()
_BY_TOP = {entry >> 24: i for i, entry in enumerate(_TABLE)}
assert len(_BY_TOP) == 256


def crc_push(crc: int, data: bytes) -> int:
    return zlib.crc32(data, crc)


def crc_pop(crc: int, data: bytes) -> int:
    """Inverse of :func:`crc_push`: ``crc_pop(crc_push(c, b), b) == c``."""
    reg = crc ^ _MASK
    for byte in reversed(data):
        i = _BY_TOP[reg >> 24]
        reg = (((reg ^ _TABLE[i]) << 8) & _MASK) | (i ^ byte)
    return reg ^ _MASK


def crc32(data: bytes) -> int:
    return zlib.crc32(data)
