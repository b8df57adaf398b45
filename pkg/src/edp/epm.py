"""EDP-based map: largest-element-wins key/value view over an EDP.

A map is read by linearizing the (downward closed) set of extensions into a
total order that extends the subset order, then folding the key/value
payloads over it.  Incomparable extensions are ordered by ``tie_order``, a
sort key; the default is the extension id, which nobody can steer without
breaking the hash.

Payloads that do not decode as key/value pairs are ordinary events and
leave the map untouched.
"""

from __future__ import annotations

import heapq
from functools import cmp_to_key
from typing import Callable, Iterable, Optional

from .codec import Reader, lp
from .errors import DecodeError, NotDownwardClosed, UnknownExtension
from .op import Operation, Replica
from .state import EdpState, UpwardExtension

TAG_KV = 0x4B

TieOrder = Callable[[UpwardExtension], object]
Decoder = Callable[[bytes], Optional[tuple]]


def encode_kv(key: bytes, value: bytes) -> bytes:
    return bytes([TAG_KV]) + lp(bytes(key)) + lp(bytes(value))


def decode_kv(payload: bytes) -> Optional[tuple]:
    """``(key, value)`` for a well-formed map payload, ``None`` for any other event."""
    try:
        r = Reader(payload)
        if r.byte() != TAG_KV:
            return None
        key, value = r.lp(), r.lp()
        r.end()
    except DecodeError:
        return None
    return key, value


def by_hash(u: UpwardExtension) -> bytes:
    return u.id


def map_apply(m: dict, u: UpwardExtension, decode: Decoder = decode_kv) -> dict:
    """``m (+) u``: rebind the key carried by ``u``'s top element, if any."""
    kv = decode(u.payload)
    if kv is None:
        return m
    out = dict(m)
    out[kv[0]] = kv[1]
    return out


def linearize(t: Iterable[UpwardExtension], tie_order: TieOrder = by_hash) -> list:
    """Total order on a downward-closed set that extends the subset order.

    Greedy topological sort: of the extensions whose lower bounds are all
    placed, the one smallest under ``tie_order`` goes next.  The result is the
    lexicographically smallest linear extension, so it depends only on the
    set and the tie order.
    """
    members = {u.id: u for u in t}
    children: dict = {k: [] for k in members}
    blocked: dict = {}
    for k, u in members.items():
        parents = u.mlb_ids
        if not parents <= members.keys():
            raise NotDownwardClosed(f"{u!r} is missing lower bounds in the input set")
        blocked[k] = len(parents)
        for p in parents:
            children[p].append(k)
    heap = [(tie_order(u), k) for k, u in members.items() if blocked[k] == 0]
    heapq.heapify(heap)
    out = []
    while heap:
        _, k = heapq.heappop(heap)
        out.append(members[k])
        for c in children[k]:
            blocked[c] -= 1
            if blocked[c] == 0:
                heapq.heappush(heap, (tie_order(members[c]), c))
    return out


def linearize_cmp(t: Iterable[UpwardExtension],
                  before: Callable[[UpwardExtension, UpwardExtension], bool]) -> list:
    """Like :func:`linearize`, with the tie order given as a strict "u1 before u2" relation."""
    key = cmp_to_key(lambda a, b: -1 if before(a, b) else (1 if before(b, a) else 0))
    return linearize(t, tie_order=key)


def downward_closure_of(t: Iterable, state: EdpState) -> list:
    """``T`` closed downward within ``state``; ``t`` holds extensions or ids."""
    out: dict = {}
    for item in t:
        k = item.id if isinstance(item, UpwardExtension) else item
        if k not in state:
            raise UnknownExtension(f"{bytes(k).hex()[:12]} is not in the state")
        out.update(state[k].ancestors())
    return list(out.values())


def fold(sequence: Iterable[UpwardExtension], decode: Decoder = decode_kv) -> dict:
    m: dict = {}
    for u in sequence:
        kv = decode(u.payload)
        if kv is not None:
            m[kv[0]] = kv[1]
    return m


def get(state: EdpState, t: Optional[Iterable] = None, tie_order: TieOrder = by_hash) -> dict:
    """The map as of logical time ``t`` (default: the whole state)."""
    if isinstance(state, Replica):
        state = state.state
    t = state.max() if t is None else t
    return fold(linearize(downward_closure_of(t, state), tie_order))


def put(replica: Replica, key: bytes, value: bytes) -> Operation:
    """Write ``key -> value`` above the replica's current frontier and apply it locally."""
    return replica.append(encode_kv(key, value))
