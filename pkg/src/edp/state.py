"""State-based EDP: states are sets of single-element upward extensions.

An :class:`UpwardExtension` is the formation history of one element: the
element itself plus everything below it.  It is stored as the element's
payload and links to the extensions of its maximal lower bounds; the literal
relation (the set of ordered id pairs) is derived on demand from those links
with ``{y}^2 | {y} x X(P) | P``.  :func:`extension_from_relation` goes the
other way and is what untrusted literal input must pass through.

Join is set union, restricted to members that are valid against the union.
"""

from __future__ import annotations

import logging
from collections import defaultdict, deque
from typing import Callable, Iterable, Iterator, Mapping, Optional

from .errors import (AlreadyPresent, EmptyMlb, GenesisMismatch, InvalidExtension,
                     InvalidPayload, UnknownElement)
from .hashing import ElementId, hash_element
from .poset import RelationalStructure, check_poset, mlb as poset_mlb, reflexive_elements

log = logging.getLogger(__name__)

PayloadPredicate = Callable[[bytes], bool]


def accept_all(payload: bytes) -> bool:
    return True


class UpwardExtension:
    """One element together with its full downward closure.

    Two extensions are equal iff their ids are equal; the id hashes the
    payload together with the ids of the maximal lower bounds, so it pins the
    whole history.  Passing ``id`` explicitly is only meant for modelling
    untrusted input; such objects are checked by :meth:`is_intact`.
    """

    __slots__ = ("payload", "id", "parents", "_intact", "_closure")

    def __init__(self, payload: bytes, parents: Iterable["UpwardExtension"] = (),
                 *, id: Optional[bytes] = None) -> None:
        self.payload = bytes(payload)
        by_id = {}
        for p in parents:
            by_id.setdefault(p.id, p)
        self.parents = tuple(by_id[k] for k in sorted(by_id))
        computed = hash_element(self.payload, by_id)
        if id is None:
            self.id = computed
            self._intact = True if all(p._intact is True for p in self.parents) else None
        else:
            self.id = ElementId(bytes(id))
            self._intact = None if self.id == computed else False
        self._closure: Optional[frozenset] = None

    # -- identity ---------------------------------------------------------
    def __eq__(self, other: object) -> bool:
        if isinstance(other, UpwardExtension):
            return self.id == other.id
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self.id)

    def __repr__(self) -> str:
        shown = self.payload[:16]
        return f"<UpwardExtension {self.id.short()} {shown!r} mlb={len(self.parents)}>"

    @property
    def mlb_ids(self) -> frozenset:
        return frozenset(p.id for p in self.parents)

    @property
    def is_genesis(self) -> bool:
        return not self.parents

    # -- integrity --------------------------------------------------------
    def is_intact(self) -> bool:
        """Whether every id in the history matches its payload and parent ids."""
        if self._intact is not None:
            return self._intact
        order = _postorder(self, lambda n: n._intact is None)
        for node in order:
            if node._intact is None:
                node._intact = (hash_element(node.payload, node.mlb_ids) == node.id
                                and all(p._intact for p in node.parents))
        return bool(self._intact)

    # -- derived views ----------------------------------------------------
    def ancestors(self) -> dict:
        """Map id -> extension for every element of the downward closure (self included)."""
        seen: dict = {}
        stack = [self]
        while stack:
            node = stack.pop()
            if node.id in seen:
                continue
            seen[node.id] = node
            stack.extend(node.parents)
        return seen

    @property
    def closure(self) -> frozenset:
        """``X(u)``: ids of the downward closure, including this element."""
        if self._closure is None:
            for node in _postorder(self, lambda n: n._closure is None):
                if node._closure is None:
                    if len(node.parents) == 1:
                        node._closure = node.parents[0]._closure | {node.id}
                    else:
                        acc = {node.id}
                        for p in node.parents:
                            acc |= p._closure
                        node._closure = frozenset(acc)
        return self._closure

    def __le__(self, other: "UpwardExtension") -> bool:
        """Subset order on extensions: ``self`` lies in the history of ``other``."""
        return self.id in other.closure

    def __lt__(self, other: "UpwardExtension") -> bool:
        return self.id != other.id and self.id in other.closure

    @property
    def relation(self) -> frozenset:
        """The literal relation ``u_x``: all pairs (a, b) with a >= b inside the closure."""
        return frozenset((a.id, b) for a in self.ancestors().values() for b in a.closure)

    @property
    def element_payloads(self) -> dict:
        return {k: v.payload for k, v in self.ancestors().items()}


def _postorder(root: UpwardExtension, expand: Callable[[UpwardExtension], bool]) -> list:
    """Iterative post-order over the history, descending only into nodes where ``expand``."""
    out: list = []
    seen: set = set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            out.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen and expand(p):
                stack.append((p, False))
    return out


def extension_from_relation(relation: Iterable[tuple], payloads: Mapping) -> UpwardExtension:
    """Decode a literal upward extension (relation + payloads) into linked form.

    Raises :class:`InvalidExtension` unless the relation is a poset bounded
    below and above, every element has a payload, and every element id equals
    the hash of its payload and its maximal lower bounds.
    """
    relation = frozenset(relation)
    elements = reflexive_elements(relation)
    if not elements:
        raise InvalidExtension("empty relation")
    s = RelationalStructure(elements, frozenset(
        (a, b) for a, b in relation if a in elements and b in elements))
    if s.relation != relation:
        raise InvalidExtension("relation mentions elements without a reflexive pair")
    report = check_poset(s)
    if report.bottom is None:
        raise InvalidExtension(f"not a bottom-bounded poset: {report}")
    tops = [x for x in elements if all((x, y) in relation for y in elements)]
    if len(tops) != 1:
        raise InvalidExtension("not bounded above by a single element")
    missing = [x for x in elements if x not in payloads]
    if missing:
        raise InvalidExtension(f"{len(missing)} element(s) without payload")
    built: dict = {}
    # ascending by closure size is a topological order
    for x in sorted(elements, key=lambda e: sum(1 for a, b in relation if a == e)):
        parents = [built[p] for p in poset_mlb(x, s)]
        ext = UpwardExtension(payloads[x], parents)
        if ext.id != x:
            raise InvalidExtension(f"id mismatch for element {x!r}")
        built[x] = ext
    top = built[tops[0]]
    if top.relation != relation:
        raise InvalidExtension("relation differs from the reconstructed history")
    return top


class EdpState:
    """A set of upward extensions sharing one genesis.

    The constructor does not validate; it can hold whatever a peer sent.
    :func:`join` and :func:`extend` only ever produce valid states.
    """

    __slots__ = ("genesis", "is_valid", "_members", "_max")

    def __init__(self, genesis: UpwardExtension, extensions: Iterable[UpwardExtension] = (),
                 is_valid: PayloadPredicate = accept_all) -> None:
        self.genesis = genesis
        self.is_valid = is_valid
        self._members: dict = {genesis.id: genesis}
        for u in extensions:
            self._members.setdefault(u.id, u)
        self._max: Optional[frozenset] = None

    def copy(self) -> "EdpState":
        out = EdpState(self.genesis, (), self.is_valid)
        out._members = dict(self._members)
        out._max = self._max
        return out

    def _insert(self, u: UpwardExtension) -> None:
        """In-place add of an already validated extension (replica internal)."""
        self._members[u.id] = u
        if self._max is not None:
            self._max = (self._max - u.mlb_ids) | {u.id}

    # -- container protocol -------------------------------------------------
    def __contains__(self, item) -> bool:
        if isinstance(item, UpwardExtension):
            return item.id in self._members
        return item in self._members

    def __getitem__(self, id: bytes) -> UpwardExtension:
        try:
            return self._members[id]
        except KeyError:
            raise UnknownElement(f"unknown element {bytes(id).hex()[:12]}") from None

    def get(self, id: bytes, default=None):
        return self._members.get(id, default)

    def __iter__(self) -> Iterator[UpwardExtension]:
        return (self._members[k] for k in sorted(self._members))

    def __len__(self) -> int:
        return len(self._members)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EdpState):
            return NotImplemented
        return self.genesis.id == other.genesis.id and self._members.keys() == other._members.keys()

    def __hash__(self) -> int:
        return hash(frozenset(self._members))

    def __repr__(self) -> str:
        return f"<EdpState genesis={self.genesis.id.short()} size={len(self)}>"

    @property
    def ids(self) -> frozenset:
        return frozenset(self._members)

    @property
    def members(self) -> Mapping:
        return self._members

    def max_ids(self) -> frozenset:
        if self._max is None:
            below = set()
            for u in self._members.values():
                below.update(u.mlb_ids)
            self._max = frozenset(self._members.keys() - below)
        return self._max

    def max(self) -> list:
        """``max(U)`` sorted by id."""
        return [self._members[k] for k in sorted(self.max_ids())]


def initial_state(genesis_payload: bytes, is_valid: Optional[PayloadPredicate] = None) -> EdpState:
    is_valid = is_valid or accept_all
    if not isinstance(genesis_payload, (bytes, bytearray)) or not is_valid(bytes(genesis_payload)):
        raise InvalidPayload("genesis payload rejected by the validity predicate")
    return EdpState(UpwardExtension(genesis_payload), (), is_valid)


def validate_extension(u: UpwardExtension, state: EdpState) -> bool:
    """Whether ``u`` is a valid single-element upward extension on top of ``state``.

    Total over arbitrary input: anything malformed is simply not valid.
    """
    try:
        return _valid(u, state)
    except Exception:  # untrusted input must never crash a replica
        log.debug("extension validation raised", exc_info=True)
        return False


def _valid(u: UpwardExtension, state: EdpState) -> bool:
    if not isinstance(u, UpwardExtension) or not u.is_intact():
        return False
    if u.id == state.genesis.id:
        return True
    if not u.parents or not state.is_valid(u.payload):
        return False
    if any(p.id not in state for p in u.parents):
        return False
    if len(u.parents) > 1:
        # parents must be exactly mlb(u), i.e. pairwise incomparable
        for p in u.parents:
            canonical = state[p.id]
            for q in u.parents:
                if q.id != p.id and q.id in canonical.closure:
                    return False
    # |X(u)| = |X(U mlb(u))| + 1 holds for intact u: its id hashes its own
    # parents, so it cannot already occur below them without a collision.
    return True


def is_valid_state(state: EdpState) -> bool:
    return all(validate_extension(u, state) for u in state)


def join(a: EdpState, b: EdpState) -> EdpState:
    """Least upper bound: the union, minus members invalid against the union."""
    if a.genesis.id != b.genesis.id:
        raise GenesisMismatch(f"{a.genesis.id.short()} != {b.genesis.id.short()}")
    out = EdpState(a.genesis, (), a.is_valid)
    candidates = [u for s in (a, b) for u in s.members.values() if u.id != a.genesis.id]
    waiting: dict = defaultdict(list)
    unmet: dict = {}
    ready: deque = deque()
    for i, u in enumerate(candidates):
        need = {p.id for p in getattr(u, "parents", ()) if isinstance(p, UpwardExtension)}
        need.discard(a.genesis.id)
        unmet[i] = len(need)
        for pid in need:
            waiting[pid].append(i)
        if not need:
            ready.append(i)
    while ready:
        u = candidates[ready.popleft()]
        if u.id in out or not validate_extension(u, out):
            continue
        out._members[u.id] = u
        for j in waiting.pop(u.id, ()):
            unmet[j] -= 1
            if unmet[j] == 0:
                ready.append(j)
    return out


def extend(state: EdpState, u: UpwardExtension) -> EdpState:
    if u in state:
        raise AlreadyPresent(f"{u.id.short()} already in state")
    if not u.parents:
        raise EmptyMlb("an extension other than genesis needs maximal lower bounds")
    if not validate_extension(u, state):
        raise InvalidExtension(f"{u!r} is not a valid extension of this state")
    out = state.copy()
    out._insert(u)
    return out


def to_bdp(state: EdpState) -> RelationalStructure:
    """``S(U)``: the union of all member relations over their elements."""
    members = state.members
    relation = frozenset((a, b) for a, u in members.items() for b in u.closure)
    return RelationalStructure(frozenset(members), relation)
