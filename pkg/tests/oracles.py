"""Reference implementations used to check the library, written without
reusing any of its code paths."""

from __future__ import annotations

import itertools
import math


def crc32_bitwise(data: bytes, crc: int = 0) -> int:
    """Bit-at-a-time reflected CRC-32 (poly 0xEDB88320), no tables, no zlib."""
    crc ^= 0xFFFFFFFF
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = (crc >> 1) ^ (0xEDB88320 if crc & 1 else 0)
    return crc ^ 0xFFFFFFFF


def naive_lookup(keys, entries, fields):
    """Winning entry for ``fields`` by brute force.

    ``keys`` is [(ref, match_kind, width)], ``entries`` is a list of
    (matches, priority, seq, payload) where each match is ("exact", v),
    ("lpm", v, plen) or ("ternary", v, mask).
    """
    best, best_rank = None, None
    for matches, priority, seq, payload in entries:
        plen_total = 0
        ok = True
        for (ref, _, width), m in zip(keys, matches):
            x = fields[ref]
            if m[0] == "exact":
                ok = x == m[1]
            elif m[0] == "lpm":
                shift = width - m[2]
                ok = (x >> shift) == (m[1] >> shift) if m[2] else True
                plen_total += m[2]
            else:
                ok = x & m[2] == m[1] & m[2]
            if not ok:
                break
        if not ok:
            continue
        if any(m[0] == "ternary" for m in matches):
            rank = (priority, -seq)
        else:
            rank = (plen_total, -seq)
        if best_rank is None or rank > best_rank:
            best, best_rank = payload, rank
    return best


def parser_paths_by_choice(states: dict, start: str, max_depth: int):
    """Enumerate accepting paths by trying every arm sequence.

    ``states`` maps name -> (header, [(const, next)], default_next | None,
    select_is_latest). Returns sorted (state sequence, header sequence,
    constraint list) triples, where a constraint is (arm constant or
    ("not", consts)). Stack headers ``h[next]`` are numbered in order.
    """
    out = []

    def go(name, seq, headers, cons, visits, stack_idx):
        if name == "ingress":
            out.append((tuple(seq), tuple(headers), tuple(cons)))
            return
        if visits.get(name, 0) >= max_depth:
            return
        visits = dict(visits)
        visits[name] = visits.get(name, 0) + 1
        header, arms, default, _ = states[name]
        headers = list(headers)
        stack_idx = dict(stack_idx)
        if header is not None:
            if header.endswith("[next]"):
                base = header[:-6]
                i = stack_idx.get(base, 0)
                stack_idx[base] = i + 1
                headers.append(f"{base}[{i}]")
            else:
                headers.append(header)
        for const, nxt in arms:
            go(nxt, seq + [name], headers, cons + [const], visits, stack_idx)
        if default is not None:
            go(default, seq + [name], headers, cons + [("not", tuple(c for c, _ in arms))], visits,
               stack_idx)

    go(start, [], [], [], {}, {})
    return sorted(out)


def stage_by_topological_enumeration(nodes, edges):
    """Smallest stage per node over the DAG ``edges`` (u must precede v),
    computed by checking every candidate assignment up to len(nodes)."""
    n = len(nodes)
    best = None
    for stages in itertools.product(range(n), repeat=n):
        s = dict(zip(nodes, stages))
        if all(s[u] < s[v] for u, v in edges):
            if best is None or sum(stages) < sum(best.values()):
                best = s
    return best


def bloom_fp_bound(n: int, m: int, k: int) -> float:
    return (1.0 - math.exp(-k * n / m)) ** k
