"""Byte-level helpers for the canonical encodings.

All integers are unsigned 64-bit big-endian unless stated otherwise.
"""

from __future__ import annotations

from .errors import DecodeError

VERSION = 0x01


def u64(n: int) -> bytes:
    return n.to_bytes(8, "big")


def i64(n: int) -> bytes:
    return n.to_bytes(8, "big", signed=True)


def lp(data: bytes) -> bytes:
    """Length-prefix ``data``."""
    return u64(len(data)) + data


class Reader:
    """Cursor over a byte string that raises :class:`DecodeError` on any overrun."""

    __slots__ = ("data", "pos")

    def __init__(self, data: bytes) -> None:
        if not isinstance(data, (bytes, bytearray, memoryview)):
            raise DecodeError(f"expected bytes, got {type(data).__name__}")
        self.data = bytes(data)
        self.pos = 0

    @property
    def remaining(self) -> int:
        return len(self.data) - self.pos

    def take(self, n: int) -> bytes:
        if n < 0 or n > self.remaining:
            raise DecodeError(f"need {n} bytes at offset {self.pos}, have {self.remaining}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def byte(self) -> int:
        return self.take(1)[0]

    def u64(self) -> int:
        return int.from_bytes(self.take(8), "big")

    def i64(self) -> int:
        return int.from_bytes(self.take(8), "big", signed=True)

    def lp(self) -> bytes:
        return self.take(self.u64())

    def count(self, item_size: int) -> int:
        """Read an item count and check it can possibly fit in what is left."""
        n = self.u64()
        if item_size and n > self.remaining // item_size:
            raise DecodeError(f"count {n} exceeds remaining input")
        return n

    def end(self) -> None:
        if self.remaining:
            raise DecodeError(f"{self.remaining} trailing bytes")
