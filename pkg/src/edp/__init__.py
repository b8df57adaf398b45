"""Extend-only directed posets: a Byzantine-tolerant replicated event poset,
a map derived from it, and an access-controlled composition."""

from .errors import EdpError
from .hashing import ElementId, hash_element
from .op import Operation, Replica
from .state import EdpState, UpwardExtension, extend, initial_state, join, to_bdp

__all__ = ["EdpError", "EdpState", "ElementId", "Operation", "Replica", "UpwardExtension",
           "extend", "hash_element", "initial_state", "join", "to_bdp"]
__version__ = "0.1.0"
