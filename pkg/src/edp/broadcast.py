"""Anti-entropy: frontier gossip plus iterative fetch of missing ancestors.

Each tick a node sends its frontier ``max(U)`` (as operations) to every peer
it can reach.  Operations referencing unknown ancestors are parked and the
missing ids are requested, first from the peer that caused the need and then
round-robin from the others.  Responses are checked against what was asked
for and pass through the normal ``effect`` path, so the hash chain does the
integrity verification.

Message wire format::

    version(1) | kind(1) | u64 count | items

where items are length-prefixed operation encodings (frontier, response)
or raw 32-byte ids (request), sorted ascending.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Union

from .codec import VERSION, Reader, lp, u64
from .errors import DecodeError, UnresolvedAncestors
from .hashing import DIGEST_SIZE, ElementId
from .op import Operation, Replica, compress
from .state import EdpState

log = logging.getLogger(__name__)

KIND_FRONTIER = 0x10
KIND_FETCH_REQUEST = 0x11
KIND_FETCH_RESPONSE = 0x12

# smallest possible encoded operation: version, tag, two u64 counts
_MIN_OP = 2 + 8 + 8


def _op_set(ops: Iterable[Operation]) -> frozenset:
    return frozenset(ops)


@dataclass(frozen=True)
class Frontier:
    ops: frozenset = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "ops", _op_set(self.ops))

    @property
    def ids(self) -> frozenset:
        return frozenset(o.id for o in self.ops)

    def __len__(self) -> int:
        return len(self.ops)


@dataclass(frozen=True)
class FetchRequest:
    ids: frozenset = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "ids", frozenset(ElementId(i) for i in self.ids))


@dataclass(frozen=True)
class FetchResponse:
    ops: frozenset = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "ops", _op_set(self.ops))


Message = Union[Frontier, FetchRequest, FetchResponse]


def encode_message(msg: Message) -> bytes:
    if isinstance(msg, FetchRequest):
        items = sorted(msg.ids)
        return bytes([VERSION, KIND_FETCH_REQUEST]) + u64(len(items)) + b"".join(items)
    kind = KIND_FRONTIER if isinstance(msg, Frontier) else KIND_FETCH_RESPONSE
    ops = sorted(msg.ops, key=lambda o: o.id)
    return bytes([VERSION, kind]) + u64(len(ops)) + b"".join(lp(o.encode()) for o in ops)


def decode_message(data: bytes) -> Message:
    r = Reader(data)
    if r.byte() != VERSION:
        raise DecodeError("unsupported message version")
    kind = r.byte()
    if kind == KIND_FETCH_REQUEST:
        n = r.count(DIGEST_SIZE)
        ids = [r.take(DIGEST_SIZE) for _ in range(n)]
        r.end()
        return FetchRequest(frozenset(ids))
    if kind not in (KIND_FRONTIER, KIND_FETCH_RESPONSE):
        raise DecodeError(f"unknown message kind {kind:#x}")
    n = r.count(8 + _MIN_OP)
    ops = [Operation.decode(r.lp()) for _ in range(n)]
    r.end()
    cls = Frontier if kind == KIND_FRONTIER else FetchResponse
    return cls(frozenset(ops))


def frontier_of(state: EdpState) -> Frontier:
    return Frontier(frozenset(compress(u) for u in state.max()))


def frontier_join(a: Frontier, b: Frontier, resolver: EdpState) -> Frontier:
    """``max(a | b)`` under the extension order; ``resolver`` supplies the histories."""
    union = a.ops | b.ops
    missing = [o.id for o in union if o.id not in resolver]
    if missing:
        raise UnresolvedAncestors(missing)
    exts = {o.id: resolver[o.id] for o in union}
    keep = [o for o in union
            if not any(k != o.id and o.id in u.closure for k, u in exts.items())]
    return Frontier(frozenset(keep))


def on_receive_frontier(replica: Replica, frontier: Frontier) -> Optional[FetchRequest]:
    """Apply what can be applied; ask for whatever ancestors are still missing."""
    for op in sorted(frontier.ops, key=lambda o: o.id):
        replica.effect(op)
    wanted = replica.pending.missing_hashes()
    return FetchRequest(wanted) if wanted else None


class GossipNode:
    """Message handling for one correct replica on the (simulated) network.

    ``receive`` and ``tick`` return lists of ``(peer, bytes)`` to send.
    """

    def __init__(self, replica: Replica, index: int, *, retry_after: int = 2) -> None:
        self.replica = replica
        self.index = index
        self.retry_after = max(1, retry_after)
        self.malformed = 0
        self._source: dict = {}        # wanted id -> peer that made us want it
        self._attempts: dict = {}      # wanted id -> number of requests sent
        self._last_request: dict = {}  # wanted id -> tick of the last request
        self._now = 0

    def frontier_message(self) -> bytes:
        return encode_message(Frontier(frozenset(self.replica.frontier_ops())))

    def receive(self, sender: int, data: bytes) -> list:
        try:
            msg = decode_message(data)
        except DecodeError as exc:
            self.malformed += 1
            log.debug("node %d: malformed message from %d: %s", self.index, sender, exc)
            return []
        if isinstance(msg, FetchRequest):
            ops = [compress(self.replica.index[i]) for i in sorted(msg.ids)
                   if i in self.replica.index]
            return [(sender, encode_message(FetchResponse(frozenset(ops))))] if ops else []
        if isinstance(msg, FetchResponse):
            asked = set(self._attempts)
            for op in sorted(msg.ops, key=lambda o: o.id):
                if op.id in asked:
                    self.replica.effect(op)
                else:
                    self.malformed += 1
            return self._request_new(sender)
        request = on_receive_frontier(self.replica, msg)
        return self._request_new(sender) if request else []

    def _request_new(self, sender: int) -> list:
        """Immediately ask ``sender`` for ancestors we have not asked anyone for yet."""
        wanted = self.replica.pending.missing_hashes()
        self._forget(wanted)
        fresh = sorted(h for h in wanted if h not in self._attempts)
        for h in fresh:
            self._source[h] = sender
            self._attempts[h] = 1
            self._last_request[h] = self._now
        if not fresh:
            return []
        return [(sender, encode_message(FetchRequest(frozenset(fresh))))]

    def _forget(self, wanted: frozenset) -> None:
        for h in [h for h in self._attempts if h not in wanted]:
            del self._attempts[h], self._source[h], self._last_request[h]

    def tick(self, now: int, peers: list) -> list:
        """Periodic step: gossip the frontier and retry outstanding fetches."""
        self._now = now
        out = []
        if peers:
            frontier = self.frontier_message()
            out.extend((p, frontier) for p in peers)
        wanted = self.replica.pending.missing_hashes()
        self._forget(wanted)
        if not peers:
            return out
        batches: dict = {}
        for h in sorted(wanted):
            if h in self._attempts and now - self._last_request[h] < self.retry_after:
                continue
            source = self._source.setdefault(h, peers[0])
            k = self._attempts.get(h, 0)
            start = peers.index(source) if source in peers else 0
            target = peers[(start + k) % len(peers)]
            self._attempts[h] = k + 1
            self._last_request[h] = now
            batches.setdefault(target, []).append(h)
        for target in sorted(batches):
            out.append((target, encode_message(FetchRequest(frozenset(batches[target])))))
        return out
