"""Operation-based EDP: hash-compressed updates, await-by-buffering, replicas.

An :class:`Operation` carries a payload and the ids of its maximal lower
bounds.  Its id is the id of the element it introduces, so an operation is
a compressed upward extension: :func:`reconstruct` re-inflates it against a
state that already holds the ancestors.  Operations whose ancestors are not
known yet wait in a :class:`PendingBuffer` and are applied as soon as the
missing ancestors arrive.
"""

from __future__ import annotations

import logging
from collections import OrderedDict, defaultdict, deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Optional

from .codec import VERSION, Reader
from .errors import AssertionFailed, DecodeError, InvalidExtension, UnresolvedAncestors
from .hashing import DIGEST_SIZE, TAG_ELEMENT, ElementId, element_preimage, hash_element
from .state import (EdpState, PayloadPredicate, UpwardExtension, initial_state,
                    validate_extension)

log = logging.getLogger(__name__)

DEFAULT_PENDING_CAPACITY = 10_000


@dataclass(frozen=True)
class Operation:
    payload: bytes
    mlb_hashes: frozenset = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "payload", bytes(self.payload))
        object.__setattr__(self, "mlb_hashes", frozenset(ElementId(h) for h in self.mlb_hashes))

    @cached_property
    def id(self) -> ElementId:
        return hash_element(self.payload, self.mlb_hashes)

    def encode(self) -> bytes:
        """Wire form: version byte followed by the hashed canonical encoding."""
        return bytes([VERSION]) + element_preimage(self.payload, self.mlb_hashes)

    @classmethod
    def decode(cls, data: bytes) -> "Operation":
        r = Reader(data)
        op = cls.read(r)
        r.end()
        return op

    @classmethod
    def read(cls, r: Reader) -> "Operation":
        if r.byte() != VERSION:
            raise DecodeError("unsupported operation version")
        if r.byte() != TAG_ELEMENT:
            raise DecodeError("not an element encoding")
        payload = r.lp()
        n = r.count(DIGEST_SIZE)
        digests = [r.take(DIGEST_SIZE) for _ in range(n)]
        if any(a >= b for a, b in zip(digests, digests[1:])):
            raise DecodeError("mlb digests not strictly ascending")
        return cls(payload, frozenset(digests))

    def __repr__(self) -> str:
        return f"Operation({self.id.short()}, {self.payload[:16]!r}, mlb={len(self.mlb_hashes)})"


def compress(u: UpwardExtension) -> Operation:
    if not isinstance(u, UpwardExtension) or not u.is_intact():
        raise InvalidExtension("cannot compress a tampered extension")
    return Operation(u.payload, u.mlb_ids)


def reconstruct(o: Operation, state: EdpState) -> UpwardExtension:
    missing = [h for h in o.mlb_hashes if h not in state]
    if missing:
        raise UnresolvedAncestors(missing)
    return UpwardExtension(o.payload, [state[h] for h in o.mlb_hashes])


def generate(state: EdpState, u: UpwardExtension) -> Operation:
    """Check the preconditions for a local update and compress it. Side-effect free."""
    if u in state:
        raise AssertionFailed("u_not_in_state", f"{u!r} is already applied")
    if not u.parents:
        raise AssertionFailed("mlb_nonempty", "an update needs maximal lower bounds")
    if any(p.id not in state for p in u.parents):
        raise AssertionFailed("mlb_in_state", "maximal lower bounds must already be applied")
    return compress(u)


class PendingBuffer:
    """Operations waiting for ancestors, oldest evicted first when full."""

    def __init__(self, capacity: int = DEFAULT_PENDING_CAPACITY) -> None:
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.arrivals = 0
        self.evicted = 0
        self._ops: "OrderedDict[ElementId, tuple[Operation, int]]" = OrderedDict()
        self._missing: dict = {}
        self._waiting: dict = defaultdict(set)

    def __len__(self) -> int:
        return len(self._ops)

    def __contains__(self, op_id) -> bool:
        return op_id in self._ops

    def __iter__(self):
        return (op for op, _ in self._ops.values())

    def get(self, op_id) -> Optional[Operation]:
        entry = self._ops.get(op_id)
        return entry[0] if entry else None

    def add(self, op: Operation, missing: Iterable[ElementId]) -> list:
        """Park ``op``; returns operations evicted to make room."""
        evicted = []
        while len(self._ops) >= self.capacity:
            old_id = next(iter(self._ops))
            evicted.append(self._drop(old_id))
            self.evicted += 1
        self._ops[op.id] = (op, self.arrivals)
        self.arrivals += 1
        self._missing[op.id] = set(missing)
        for h in self._missing[op.id]:
            self._waiting[h].add(op.id)
        return evicted

    def _drop(self, op_id) -> Operation:
        op, _ = self._ops.pop(op_id)
        for h in self._missing.pop(op_id):
            waiters = self._waiting.get(h)
            if waiters is not None:
                waiters.discard(op_id)
                if not waiters:
                    del self._waiting[h]
        return op

    def resolve(self, h: ElementId) -> list:
        """Mark ``h`` as applied; return (and remove) operations that became ready."""
        ready = []
        for op_id in self._waiting.pop(h, ()):
            missing = self._missing[op_id]
            missing.discard(h)
            if not missing:
                ready.append(op_id)
        ready.sort(key=lambda k: self._ops[k][1])
        return [self._drop(k) for k in ready]

    def missing_hashes(self) -> frozenset:
        """Ancestor ids referenced by parked operations that are not parked themselves."""
        return frozenset(h for h in self._waiting if h not in self._ops)


class Replica:
    """A single op-based EDP replica: state, hash index and pending buffer.

    Not thread-safe; one logical owner calls :meth:`effect` and :meth:`generate`.
    """

    def __init__(self, genesis_payload: bytes, *, is_valid: Optional[PayloadPredicate] = None,
                 capacity: int = DEFAULT_PENDING_CAPACITY, name: str = "") -> None:
        self.name = name
        self._state = initial_state(genesis_payload, is_valid)
        self.pending = PendingBuffer(capacity)
        self.rejected = 0
        self._rejected_ids: "OrderedDict[ElementId, None]" = OrderedDict()

    # -- queries ------------------------------------------------------------
    @property
    def state(self) -> EdpState:
        """A snapshot of the current state; later effects do not change it."""
        return self._state.copy()

    @property
    def index(self) -> Mapping:
        """Hash index: element id -> applied upward extension (read-only use)."""
        return self._state.members

    @property
    def genesis(self) -> UpwardExtension:
        return self._state.genesis

    def __contains__(self, op_id) -> bool:
        return op_id in self._state

    def __len__(self) -> int:
        return len(self._state)

    def extension(self, op_id) -> UpwardExtension:
        return self._state[op_id]

    def frontier(self) -> list:
        return self._state.max()

    def frontier_ops(self) -> list:
        return [compress(u) for u in self._state.max()]

    # -- updates ------------------------------------------------------------
    def new_extension(self, payload: bytes) -> UpwardExtension:
        """``u(y, U max(U))``: a fresh element placed above the whole current frontier."""
        return UpwardExtension(payload, self._state.max())

    def generate(self, u: UpwardExtension) -> Operation:
        op = generate(self._state, u)
        if not self._state.is_valid(u.payload):
            raise AssertionFailed("payload_valid", "payload rejected by the validity predicate")
        return op

    def append(self, payload: bytes) -> Operation:
        """Generate an update above the current frontier and deliver it to ourselves."""
        op = self.generate(self.new_extension(payload))
        self.effect(op)
        return op

    def admissible(self, u: UpwardExtension) -> bool:
        """Extra acceptance rule applied after structural validation (subclass hook)."""
        return True

    def effect(self, op: Operation) -> list:
        """Deliver ``op``. Returns the ids applied by this call, in application order."""
        if not isinstance(op, Operation):
            return []
        oid = op.id
        if oid in self._state or oid in self.pending or oid in self._rejected_ids:
            return []
        if not op.mlb_hashes or not self._state.is_valid(op.payload):
            self._reject(op, "empty mlb or invalid payload")
            return []
        missing = [h for h in op.mlb_hashes if h not in self._state]
        if missing:
            for old in self.pending.add(op, missing):
                log.debug("%s: pending buffer full, evicted %s", self.name, old.id.short())
            return []
        applied: list = []
        if self._apply(op):
            applied.append(oid)
            queue = deque([oid])
            while queue:
                for ready in self.pending.resolve(queue.popleft()):
                    if self._apply(ready):
                        applied.append(ready.id)
                        queue.append(ready.id)
        return applied

    def _apply(self, op: Operation) -> bool:
        u = reconstruct(op, self._state)
        if not validate_extension(u, self._state):
            self._reject(op, "invalid extension")
            return False
        if not self.admissible(u):
            self._reject(op, "not admissible")
            return False
        self._state._insert(u)
        return True

    def _reject(self, op: Operation, why: str) -> None:
        log.debug("%s: discarding %s: %s", self.name, op.id.short(), why)
        self.rejected += 1
        self._rejected_ids[op.id] = None
        if len(self._rejected_ids) > self.pending.capacity:
            self._rejected_ids.popitem(last=False)
