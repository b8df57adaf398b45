"""Pinned byte-level test vectors for element ids, operations and signatures.

Everything here is derived from fixed inputs, so :func:`generate` returns the
same document on every platform.  ``vectors.json`` next to this module is the
pinned copy that :func:`verify` compares against.
"""

from __future__ import annotations

import json
from importlib import resources

from .acedpm import (CHAT, LEVEL, MEMBERSHIP, AcEvent, GenesisConfig, Membership,
                     ReplicaIdentity, level_content, membership_content)
from .hashing import element_preimage, hash_element
from .op import Operation

PINNED = "vectors.json"

_ELEMENTS = [
    ("genesis", b"genesis", []),
    ("empty-payload", b"", ["genesis"]),
    ("x1", b"x1", ["genesis"]),
    ("x2", b"x2", ["genesis"]),
    ("x3", b"x3", ["x1"]),
    ("x4", b"x4", ["x1", "x2"]),
    ("binary", bytes(range(256)), ["x3", "x4"]),
]


def _seed(label: str) -> bytes:
    return (label.encode() * 32)[:32]


def generate() -> dict:
    ids: dict = {}
    elements = []
    for name, payload, parents in _ELEMENTS:
        mlb = [ids[p] for p in parents]
        h = hash_element(payload, mlb)
        ids[name] = h
        elements.append({"name": name, "payload": payload.hex(), "mlb": [m.hex() for m in mlb],
                         "preimage": element_preimage(payload, mlb).hex(), "id": h.hex(),
                         "operation": Operation(payload, frozenset(mlb)).encode().hex()})

    alice = ReplicaIdentity.from_seed(_seed("alice"), "alice")
    bob = ReplicaIdentity.from_seed(_seed("bob"), "bob")
    config = GenesisConfig(alice.subject, nonce=b"vectors")
    root = hash_element(config.encode(), [])
    events = [
        ("alice-invites-bob", alice, MEMBERSHIP, bob.subject, membership_content(Membership.IN), [root]),
        ("alice-sets-chat-level", alice, LEVEL, CHAT.encode(), level_content(10), [root]),
        ("bob-chats", bob, CHAT, None, b"hello", [root, ids["x1"]]),
    ]
    signatures = []
    for name, who, act, obj, cnt, mlb in events:
        ev = AcEvent.create(who, act, obj, cnt, mlb)
        signatures.append({"name": name, "seed": who.seed.hex(), "subject": who.subject.hex(),
                           "mlb": sorted(m.hex() for m in mlb),
                           "signing_input": ev.signing_input(mlb).hex(),
                           "signature": ev.signature.hex(), "event": ev.encode().hex(),
                           "id": hash_element(ev.encode(), mlb).hex()})
    return {"version": 1, "elements": elements,
            "genesis_config": {"encoding": config.encode().hex(), "id": root.hex()},
            "signatures": signatures}


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def pinned_text() -> str:
    return resources.files(__package__).joinpath(PINNED).read_text()


def diff(expected: dict, actual: dict, path: str = "") -> list:
    """Paths at which two vector documents differ."""
    if isinstance(expected, dict) and isinstance(actual, dict):
        out = []
        for k in sorted(expected.keys() | actual.keys()):
            out += diff(expected.get(k), actual.get(k), f"{path}/{k}")
        return out
    if isinstance(expected, list) and isinstance(actual, list) and len(expected) == len(actual):
        out = []
        for i, (a, b) in enumerate(zip(expected, actual)):
            out += diff(a, b, f"{path}[{i}]")
        return out
    return [] if expected == actual else [path or "/"]


def verify(pinned: str | None = None) -> list:
    """Regenerate and compare; an empty list means bit-identical."""
    text = pinned if pinned is not None else pinned_text()
    regenerated = dumps(generate())
    if regenerated == text:
        return []
    return diff(json.loads(text), json.loads(regenerated)) or ["/ (formatting)"]
