"""Element identities: SHA-256 over a canonical, hash-chained encoding.

An element is identified by ``h(payload, H_mlb)``, the hash of its payload
chained with the (sorted) identities of its maximal lower bounds.  The byte
layout hashed here is also the body of the operation wire format::

    tag(1) | u64 len(payload) | payload | u64 count | digest_1 ... digest_n

with the digests sorted ascending.  Changing this layout breaks every pinned
test vector.
"""

from __future__ import annotations

import hashlib
from typing import Iterable

from .codec import lp, u64

DIGEST_SIZE = 32

# one domain-separation tag per kind of hashed/signed object
TAG_ELEMENT = 0x01
TAG_EVENT_SIGNATURE = 0x02


class ElementId(bytes):
    """A 32-byte digest.  Ordering is plain lexicographic byte order."""

    __slots__ = ()

    def __new__(cls, digest: bytes) -> "ElementId":
        if len(digest) != DIGEST_SIZE:
            raise ValueError(f"element id must be {DIGEST_SIZE} bytes, got {len(digest)}")
        return super().__new__(cls, digest)

    @classmethod
    def fromhex(cls, text: str) -> "ElementId":
        return cls(bytes.fromhex(text))

    def short(self) -> str:
        return self.hex()[:10]

    def __repr__(self) -> str:
        return f"ElementId({self.short()}…)"


def sorted_digests(hashes: Iterable[bytes]) -> list[bytes]:
    return sorted(bytes(h) for h in hashes)


def element_preimage(payload: bytes, mlb_hashes: Iterable[bytes]) -> bytes:
    digests = sorted_digests(set(mlb_hashes))
    return b"".join([bytes([TAG_ELEMENT]), lp(payload), u64(len(digests)), *digests])


def hash_element(payload: bytes, mlb_hashes: Iterable[bytes] = ()) -> ElementId:
    return ElementId(hashlib.sha256(element_preimage(payload, mlb_hashes)).digest())
