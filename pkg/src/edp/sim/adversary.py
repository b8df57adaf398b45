"""Byzantine attacker scripts.

Attackers speak the wire format but run none of the replica logic: they keep
a raw table of operations they have seen and craft whatever bytes their
behaviors call for.  Nothing here can touch a correct replica other than by
sending it messages.
"""

from __future__ import annotations

import random
from typing import Callable, Optional

from ..acedpm import (CHAT, LEVEL, MEMBERSHIP, AcEvent, Membership, ReplicaIdentity,
                      level_content, membership_content)
from ..broadcast import (FetchRequest, FetchResponse, Frontier, decode_message,
                         encode_message)
from ..epm import encode_kv
from ..errors import DecodeError
from ..hashing import ElementId
from ..op import Operation

PayloadFactory = Callable[[random.Random, list], bytes]


def payload_factory(mode: str, identity: Optional[ReplicaIdentity]) -> PayloadFactory:
    """Valid-looking payloads for ``mode``, built on top of ``mlb`` ids."""
    if mode == "acedpm":
        def make(rng: random.Random, mlb: list) -> bytes:
            text = b"byz-chat-%d" % rng.getrandbits(32)
            return AcEvent.create(identity, CHAT, None, text, mlb).encode()
    elif mode == "epm":
        def make(rng: random.Random, mlb: list) -> bytes:
            return encode_kv(b"k%d" % rng.randrange(3), b"byz-%d" % rng.getrandbits(32))
    else:
        def make(rng: random.Random, mlb: list) -> bytes:
            return b"byz-%d" % rng.getrandbits(48)
    return make


class Attacker:
    def __init__(self, index: int, spec, *, mode: str, genesis_id: ElementId,
                 rng: random.Random, identity: Optional[ReplicaIdentity] = None,
                 victim_subjects: tuple = (), max_payload: int = 4096) -> None:
        self.index = index
        self.spec = spec
        self.behaviors = set(spec.behaviors)
        self.mode = mode
        self.rng = rng
        self.identity = identity
        self.victim_subjects = victim_subjects
        self.max_payload = max_payload
        self.make_payload = payload_factory(mode, identity)
        self.genesis_id = genesis_id
        self.known: dict = {}
        self._below: set = set()
        self._forged: set = set()
        self.sent = 0

    # -- knowledge ----------------------------------------------------------
    def _learn(self, op: Operation) -> None:
        if op.id not in self.known:
            self.known[op.id] = op
            self._below.update(op.mlb_hashes)

    def tips(self) -> list:
        tips = sorted(k for k in self.known if k not in self._below)
        return tips or [self.genesis_id]

    def _op(self, payload: bytes, mlb) -> Operation:
        op = Operation(payload, frozenset(mlb))
        self._learn(op)
        return op

    def _valid_op(self) -> Operation:
        tips = self.tips()
        return self._op(self.make_payload(self.rng, tips), tips)

    # -- network ------------------------------------------------------------
    def receive(self, sender: int, data: bytes) -> list:
        try:
            msg = decode_message(data)
        except DecodeError:
            return []
        if isinstance(msg, (Frontier, FetchResponse)):
            for op in msg.ops:
                self._learn(op)
            return []
        if "selective_send" in self.behaviors:
            return []
        honest = [self.known[i] for i in sorted(msg.ids) if i in self.known]
        junk = [Operation(b"junk-%d" % self.rng.getrandbits(32), frozenset([self.genesis_id]))
                for i in sorted(msg.ids) if i in self._forged]
        ops = honest + junk
        return [(sender, encode_message(FetchResponse(frozenset(ops))))] if ops else []

    def active(self, tick: int) -> bool:
        return self.spec.start <= tick < self.spec.stop

    def tick(self, tick: int, peers: list) -> list:
        if not peers or not self.active(tick):
            return []
        out: list = []
        for behavior in sorted(self.behaviors):
            out.extend(getattr(self, f"_{behavior}")(peers))
        self.sent += len(out)
        return out

    @staticmethod
    def _frontier(ops) -> bytes:
        return encode_message(Frontier(frozenset(ops)))

    def _broadcast(self, peers: list, ops) -> list:
        data = self._frontier(ops)
        return [(p, data) for p in peers]

    # -- behaviors ----------------------------------------------------------
    def _equivocate(self, peers: list) -> list:
        tips = self.tips()
        a = self._op(self.make_payload(self.rng, tips), tips)
        b = self._op(self.make_payload(self.rng, tips), tips)
        out = [(p, self._frontier([a if i % 2 == 0 else b])) for i, p in enumerate(peers)]
        if len(tips) > 1 and self.mode != "acedpm":
            # same payload, different ancestry
            payload = self.make_payload(self.rng, tips)
            c, d = self._op(payload, tips), self._op(payload, tips[:1])
            out += [(p, self._frontier([c if i % 2 else d])) for i, p in enumerate(peers)]
        return out

    def _forge_ancestry(self, peers: list) -> list:
        fake = ElementId(self.rng.randbytes(32))
        self._forged.add(fake)
        ops = [Operation(self.make_payload(self.rng, [fake]), frozenset([fake])),
               Operation(self.make_payload(self.rng, self.tips()),
                         frozenset(self.tips()) | {fake})]
        return self._broadcast(peers, ops)

    def _invalid_extension(self, peers: list) -> list:
        tips = self.tips()
        ops = [Operation(b"no-ancestry-%d" % self.rng.getrandbits(16), frozenset())]
        if tips != [self.genesis_id]:
            # a tip together with something below it is not an antichain
            ops.append(Operation(self.make_payload(self.rng, tips + [self.genesis_id]),
                                 frozenset(tips) | {self.genesis_id}))
        if self.mode == "acedpm":
            ops.append(Operation(b"\xacnot-an-event", frozenset(tips)))
        else:
            ops.append(Operation(b"x" * (self.max_payload + 1), frozenset(tips)))
        return self._broadcast(peers, ops)

    def _spam(self, peers: list) -> list:
        ops = [self._valid_op() for _ in range(self.spec.rate)]
        return self._broadcast(peers, ops)

    def _selective_send(self, peers: list) -> list:
        victims = [p for p in peers if p in self.spec.victims] or peers[:1]
        op = self._valid_op()
        return [(p, self._frontier([op])) for p in victims]

    def _event_ops(self, events) -> list:
        # not learned: correct replicas are expected to drop these
        tips = self.tips()
        return [Operation(ev(tips).encode(), frozenset(tips)) for ev in events]

    def _bad_signature(self, peers: list) -> list:
        if self.identity is None:
            return self._spam(peers)
        victim = self.victim_subjects[0] if self.victim_subjects else self.identity.subject

        def forged(tips):
            return AcEvent(CHAT, victim, None, b"not me", self.rng.randbytes(64))

        def replayed(tips):
            # validly signed, but for a different position in the history
            ev = AcEvent.create(self.identity, CHAT, None, b"replayed", [self.genesis_id])
            return ev if tips != [self.genesis_id] else forged(tips)

        return self._broadcast(peers, self._event_ops([forged, replayed]))

    def _unauthorized_event(self, peers: list) -> list:
        if self.identity is None:
            return self._spam(peers)
        ident = self.identity
        target = self.victim_subjects[0] if self.victim_subjects else ident.subject

        def ban(tips):
            return AcEvent.create(ident, MEMBERSHIP, target, membership_content(Membership.BAN), tips)

        def promote(tips):
            return AcEvent.create(ident, LEVEL, ident.subject, level_content(10 ** 6), tips)

        def chat(tips):
            return AcEvent.create(ident, CHAT, None, b"uninvited", tips)

        return self._broadcast(peers, self._event_ops([ban, promote, chat]))
