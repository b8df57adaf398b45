"""Access-controlled EDP with membership and level maps.

Events are signed ``(act, sbj, obj -> cnt)`` tuples stored in one causal
EDP.  Two key namespaces on top of it form the maps used for authorization:
``m/<obj>`` (membership) and ``l/<obj>`` (levels; objects are subjects or
action names).  The genesis payload fixes the creator and the initial levels.

Two checks gate events:

* ``effect`` only admits an event authorized by its own maximal lower bounds.
  That check depends on the event's history alone, so all correct replicas
  admit the same events.
* reading the maps linearizes the history with revocations first, then by
  subject level, then by id, and skips every event that is not authorized by
  the events accepted before it.  Skipped events stay in the poset.

Signatures are Ed25519 over the event encoding followed by the sorted ids of
the maximal lower bounds, so a signed event cannot be replayed elsewhere in
the history.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (Ed25519PrivateKey,
                                                               Ed25519PublicKey)
from cryptography.hazmat.primitives.serialization import (Encoding, NoEncryption,
                                                          PrivateFormat, PublicFormat)

from .codec import Reader, i64, lp, u64
from .errors import AssertionFailed, DecodeError
from .hashing import TAG_EVENT_SIGNATURE, sorted_digests
from .op import DEFAULT_PENDING_CAPACITY, Operation, Replica
from .state import UpwardExtension, _postorder
from . import epm

log = logging.getLogger(__name__)

TAG_AC_EVENT = 0xAC
TAG_AC_GENESIS = 0xA0
SIGNATURE_SIZE = 64
SUBJECT_SIZE = 32

CHAT = "chat"
MEMBERSHIP = "membership"
LEVEL = "level"

DEFAULT_CREATOR_LEVEL = 100
DEFAULT_ACTION_LEVELS = {CHAT: 0, MEMBERSHIP: 50, LEVEL: 50}

LEVEL_ORDERS = ("high-first", "low-first")


class Membership(enum.Enum):
    OUT = "OUT"
    IN = "IN"
    INVITE = "INVITE"
    BAN = "BAN"


class ReplicaIdentity:
    """An Ed25519 keypair; the raw public key is the subject id."""

    def __init__(self, private_key: Ed25519PrivateKey, name: str = "") -> None:
        self._key = private_key
        self.name = name
        self.subject = private_key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)

    @classmethod
    def from_seed(cls, seed: bytes, name: str = "") -> "ReplicaIdentity":
        return cls(Ed25519PrivateKey.from_private_bytes(seed), name)

    @classmethod
    def generate(cls, name: str = "") -> "ReplicaIdentity":
        return cls(Ed25519PrivateKey.generate(), name)

    @property
    def seed(self) -> bytes:
        return self._key.private_bytes(Encoding.Raw, PrivateFormat.Raw, NoEncryption())

    def sign(self, message: bytes) -> bytes:
        return self._key.sign(message)

    def __repr__(self) -> str:
        return f"<ReplicaIdentity {self.name or self.subject.hex()[:10]}>"


def verify_signature(subject: bytes, signature: bytes, message: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(subject).verify(signature, message)
    except (InvalidSignature, ValueError):
        return False
    return True


@dataclass(frozen=True)
class GenesisConfig:
    """The rules fixed at creation: creator, creator level and action levels."""

    creator: bytes
    creator_level: int = DEFAULT_CREATOR_LEVEL
    action_levels: dict = field(default_factory=lambda: dict(DEFAULT_ACTION_LEVELS))
    nonce: bytes = b""

    def encode(self) -> bytes:
        levels = sorted(self.action_levels.items())
        return (bytes([TAG_AC_GENESIS]) + lp(self.creator) + i64(self.creator_level)
                + u64(len(levels)) + b"".join(lp(k.encode()) + i64(v) for k, v in levels)
                + lp(self.nonce))

    @classmethod
    def decode(cls, payload: bytes) -> "GenesisConfig":
        r = Reader(payload)
        if r.byte() != TAG_AC_GENESIS:
            raise DecodeError("not an access-control genesis payload")
        creator = r.lp()
        creator_level = r.i64()
        levels = {}
        for _ in range(r.count(16)):
            name = r.lp().decode("utf-8", errors="strict")
            levels[name] = r.i64()
        nonce = r.lp()
        r.end()
        return cls(creator, creator_level, levels, nonce)

    def initial_maps(self) -> tuple:
        members = {self.creator: Membership.IN}
        levels = {k.encode(): v for k, v in self.action_levels.items()}
        levels[self.creator] = self.creator_level
        return members, levels


@dataclass(frozen=True)
class AcEvent:
    act: str
    sbj: bytes
    obj: Optional[bytes] = None
    cnt: bytes = b""
    signature: bytes = b""

    def unsigned(self) -> bytes:
        obj = b"\x00" if self.obj is None else b"\x01" + lp(self.obj)
        return bytes([TAG_AC_EVENT]) + lp(self.act.encode()) + lp(self.sbj) + obj + lp(self.cnt)

    def encode(self) -> bytes:
        return self.unsigned() + self.signature

    def signing_input(self, mlb_ids: Iterable[bytes]) -> bytes:
        digests = sorted_digests(mlb_ids)
        return bytes([TAG_EVENT_SIGNATURE]) + self.unsigned() + u64(len(digests)) + b"".join(digests)

    def verify(self, mlb_ids: Iterable[bytes]) -> bool:
        return verify_signature(self.sbj, self.signature, self.signing_input(mlb_ids))

    @classmethod
    def create(cls, identity: ReplicaIdentity, act: str, obj: Optional[bytes], cnt: bytes,
               mlb_ids: Iterable[bytes]) -> "AcEvent":
        ev = cls(act, identity.subject, obj, bytes(cnt))
        return cls(act, identity.subject, obj, bytes(cnt),
                   identity.sign(ev.signing_input(mlb_ids)))

    @classmethod
    def decode(cls, payload: bytes) -> "AcEvent":
        r = Reader(payload)
        if r.byte() != TAG_AC_EVENT:
            raise DecodeError("not an access-control event")
        try:
            act = r.lp().decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError("action name is not utf-8") from exc
        sbj = r.lp()
        if len(sbj) != SUBJECT_SIZE:
            raise DecodeError("subject id must be a 32-byte public key")
        flag = r.byte()
        if flag not in (0, 1):
            raise DecodeError("bad object flag")
        obj = r.lp() if flag else None
        cnt = r.lp()
        signature = r.take(SIGNATURE_SIZE)
        r.end()
        ev = cls(act, sbj, obj, cnt, signature)
        if act in (MEMBERSHIP, LEVEL):
            if obj is None:
                raise DecodeError(f"{act} events need an object")
            ev.value  # content must parse
        return ev

    @property
    def value(self):
        """Parsed content of a membership or level event."""
        if self.act == MEMBERSHIP:
            try:
                return Membership(self.cnt.decode("ascii"))
            except (UnicodeDecodeError, ValueError) as exc:
                raise DecodeError("bad membership value") from exc
        if self.act == LEVEL:
            if len(self.cnt) != 8:
                raise DecodeError("level content must be an 8-byte integer")
            return int.from_bytes(self.cnt, "big", signed=True)
        return None


def membership_content(value: Membership) -> bytes:
    return value.value.encode("ascii")


def level_content(level: int) -> bytes:
    return i64(level)


def apply_event(M: dict, L: dict, ev: AcEvent) -> tuple:
    """Ungated ``(M, L) (+) ev`` returning new maps."""
    if ev.act == MEMBERSHIP:
        M = dict(M)
        M[ev.obj] = ev.value
    elif ev.act == LEVEL:
        L = dict(L)
        L[ev.obj] = ev.value
    return M, L


def decode_ac_kv(payload: bytes) -> Optional[tuple]:
    """Namespaced key/value view of an event: ``m/<obj>`` or ``l/<obj>``."""
    try:
        ev = AcEvent.decode(payload)
    except DecodeError:
        return None
    if ev.act == MEMBERSHIP:
        return b"m/" + ev.obj, ev.value
    if ev.act == LEVEL:
        return b"l/" + ev.obj, ev.value
    return None


class AccessControl:
    """Authorization, revocation detection and priority order for one object.

    All results are pure functions of an extension's history and are memoized
    by element id.
    """

    def __init__(self, genesis: GenesisConfig, *, level_order: str = "high-first") -> None:
        if level_order not in LEVEL_ORDERS:
            raise ValueError(f"level_order must be one of {LEVEL_ORDERS}")
        self.config = genesis
        self.level_order = level_order
        self._events: dict = {}
        self._before: dict = {}
        self._through: dict = {}
        self._keys: dict = {}
        self._rvc: dict = {}

    # -- events ----------------------------------------------------------
    def event(self, u: UpwardExtension) -> Optional[AcEvent]:
        """The signed event carried by ``u``, or None if malformed or badly signed."""
        if u.id not in self._events:
            ev = None
            if u.parents:
                try:
                    ev = AcEvent.decode(u.payload)
                except DecodeError:
                    ev = None
                if ev is not None and not ev.verify(u.mlb_ids):
                    ev = None
            self._events[u.id] = ev
        return self._events[u.id]

    # -- maps at points in logical time -------------------------------------
    def _prepare(self, u: UpwardExtension) -> None:
        """Fill the memo tables for every element below and including ``u``, bottom-up."""
        if u.id in self._through:
            return
        for node in _postorder(u, lambda n: n.id not in self._through):
            if node.id in self._through:
                continue
            if not node.parents:
                before = self.config.initial_maps()
                self._before[node.id] = before
                self._through[node.id] = before
                self._rvc[node.id] = False
                self._keys[node.id] = (1, 0, node.id)
                continue
            if len(node.parents) == 1:
                before = self._through[node.parents[0].id]
            else:
                below: dict = {}
                for p in node.parents:
                    below.update(p.ancestors())
                before = self._fold(below.values())[0]
            self._before[node.id] = before
            self._rvc[node.id] = self._compute_rvc(node, before)
            self._keys[node.id] = self._compute_key(node, before)
            M, L = before
            ev = self.event(node)
            if ev is not None and self._allowed(ev, M, L):
                M, L = apply_event(M, L, ev)
            self._through[node.id] = (M, L)

    def priority_key(self, u: UpwardExtension):
        self._prepare(u)
        return self._keys[u.id]

    def linearize(self, t: Iterable[UpwardExtension]) -> list:
        t = list(t)
        for u in t:
            self._prepare(u)
        return epm.linearize(t, tie_order=lambda u: self._keys[u.id])

    def _fold(self, closure: Iterable[UpwardExtension]) -> tuple:
        """Gated fold over a downward-closed set: ((M, L), accepted sequence)."""
        M, L = self.config.initial_maps()
        accepted = []
        for u in self.linearize(closure):
            if not u.parents:
                accepted.append(u)
                continue
            ev = self.event(u)
            if ev is not None and self._allowed(ev, M, L):
                M, L = apply_event(M, L, ev)
                accepted.append(u)
        return (M, L), accepted

    def maps_before(self, u: UpwardExtension) -> tuple:
        """``(getM(mlb(u)), getL(mlb(u)))``."""
        self._prepare(u)
        return self._before[u.id]

    def maps_at(self, t: Iterable[UpwardExtension]) -> tuple:
        """``(getM(T), getL(T))`` for a point in logical time ``T``."""
        t = list(t)
        if len(t) == 1:
            self._prepare(t[0])
            return self._through[t[0].id]
        closure: dict = {}
        for u in t:
            closure.update(u.ancestors())
        return self._fold(closure.values())[0]

    def accepted(self, t: Iterable[UpwardExtension]) -> list:
        """The linearized history of ``T`` with unauthorized events skipped."""
        closure: dict = {}
        for u in t:
            closure.update(u.ancestors())
        return self._fold(closure.values())[1]

    # -- authorization ----------------------------------------------------
    def _allowed(self, ev: AcEvent, M: dict, L: dict) -> bool:
        level = L.get(ev.sbj, 0)
        group = M.get(ev.sbj, Membership.OUT) is Membership.IN
        action = L.get(ev.act.encode(), 0) <= level
        obj = ev.obj is None or ev.obj == ev.sbj or L.get(ev.obj, 0) < level
        # a subject cannot grant a level above its own
        cap = ev.act != LEVEL or ev.value <= level
        return group and action and obj and cap

    def authorized(self, u: UpwardExtension, t: Iterable[UpwardExtension]) -> bool:
        ev = self.event(u)
        if ev is None:
            return False
        M, L = self.maps_at(t)
        return self._allowed(ev, M, L)

    def authorized_by_mlb(self, u: UpwardExtension) -> bool:
        ev = self.event(u)
        if ev is None:
            return False
        return self._allowed(ev, *self.maps_before(u))

    # -- revocations and priority -------------------------------------------
    def _compute_rvc(self, u: UpwardExtension, before: tuple) -> bool:
        ev = self.event(u)
        if ev is None or ev.obj is None:
            return False
        M_pre, L_pre = before
        M_post, L_post = apply_event(M_pre, L_pre, ev)
        out = Membership.OUT
        left_group = (M_pre.get(ev.obj, out) is Membership.IN
                      and M_post.get(ev.obj, out) is not Membership.IN)
        return left_group or L_pre.get(ev.obj, 0) > L_post.get(ev.obj, 0)

    def rvc(self, u: UpwardExtension) -> bool:
        self._prepare(u)
        return self._rvc[u.id]

    def _compute_key(self, u: UpwardExtension, before: tuple) -> tuple:
        ev = self.event(u)
        level = before[1].get(ev.sbj, 0) if ev is not None else 0
        ranked = -level if self.level_order == "high-first" else level
        return (0 if self._rvc[u.id] else 1, ranked, u.id)

    def prior(self, u1: UpwardExtension, u2: UpwardExtension) -> bool:
        """Whether ``u1`` goes before ``u2``: revocations, then level, then id."""
        return self.priority_key(u1) < self.priority_key(u2)


class AcReplica(Replica):
    """An op-based replica that admits only events authorized by their history."""

    def __init__(self, identity: ReplicaIdentity, genesis: GenesisConfig, *,
                 level_order: str = "high-first", capacity: int = DEFAULT_PENDING_CAPACITY,
                 name: str = "") -> None:
        self.identity = identity
        genesis_payload = genesis.encode()

        def is_valid(payload: bytes) -> bool:
            if payload == genesis_payload:
                return True
            try:
                AcEvent.decode(payload)
            except DecodeError:
                return False
            return True

        super().__init__(genesis_payload, is_valid=is_valid, capacity=capacity,
                         name=name or identity.name)
        self.ac = AccessControl(genesis, level_order=level_order)

    def admissible(self, u: UpwardExtension) -> bool:
        return self.ac.authorized_by_mlb(u)

    def act(self, act: str, obj: Optional[bytes] = None, cnt: bytes = b"") -> Operation:
        """Sign, check locally and apply an event above the current frontier."""
        frontier = self.frontier()
        ev = AcEvent.create(self.identity, act, obj, cnt, [u.id for u in frontier])
        u = UpwardExtension(ev.encode(), frontier)
        if not self.ac.authorized_by_mlb(u):
            raise AssertionFailed("authorized", f"{act} by {self.name} is not authorized")
        op = self.generate(u)
        self.effect(op)
        return op

    def chat(self, text: str | bytes) -> Operation:
        return self.act(CHAT, None, text.encode() if isinstance(text, str) else text)

    def set_membership(self, subject: bytes, value: Membership) -> Operation:
        return self.act(MEMBERSHIP, subject, membership_content(value))

    def set_level(self, obj: bytes, level: int) -> Operation:
        return self.act(LEVEL, obj, level_content(level))

    def _point(self, t) -> list:
        if t is None:
            return self.frontier()
        return [u if isinstance(u, UpwardExtension) else self.extension(u) for u in t]

    def ac_get(self, t=None) -> tuple:
        return self.ac.maps_at(self._point(t))

    def getM(self, t=None) -> dict:
        return self.ac_get(t)[0]

    def getL(self, t=None) -> dict:
        return self.ac_get(t)[1]

    def linearization(self, t=None) -> list:
        """Ids of the accepted events in linearization order."""
        return [u.id for u in self.ac.accepted(self._point(t))]
