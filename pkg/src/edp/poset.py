"""Finite relational structures and the poset operations built on them.

Relations use the ">=-like" convention: a pair ``(a, b)`` reads "a is above
or equal to b" (for causal histories: a happened after or equals b).  Every
dual notion (minimal elements, upward closure) is obtained by flipping the
pairs with :func:`converse` rather than being written twice.

Relations are plain ``frozenset`` objects of pairs.  Nothing here is tuned
for speed; transitivity is checked with a triple loop.  These functions are
the semantic reference the faster representations are tested against.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import AbstractSet, Hashable, Iterable, Optional, TypeVar

from .errors import NotAPoset, UnknownElement

T = TypeVar("T", bound=Hashable)
Relation = AbstractSet[tuple]


@dataclass(frozen=True)
class RelationalStructure:
    elements: frozenset = field(default_factory=frozenset)
    relation: frozenset = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        object.__setattr__(self, "elements", frozenset(self.elements))
        object.__setattr__(self, "relation", frozenset(self.relation))
        for a, b in self.relation:
            if a not in self.elements or b not in self.elements:
                raise ValueError(f"pair {(a, b)!r} is not over the ground set")

    @classmethod
    def from_relation(cls, relation: Iterable[tuple]) -> "RelationalStructure":
        """Build a structure whose ground set is the reflexive pairs of ``relation``."""
        relation = frozenset(relation)
        return cls(reflexive_elements(relation), restrict(relation, reflexive_elements(relation)))

    def __len__(self) -> int:
        return len(self.elements)


@dataclass(frozen=True)
class PosetCheckReport:
    reflexive: bool
    transitive: bool
    antisymmetric: bool
    downward_directed: bool
    bottom: Optional[Hashable] = None

    @property
    def is_poset(self) -> bool:
        return self.reflexive and self.transitive and self.antisymmetric


def reflexive_elements(relation: Iterable[tuple]) -> frozenset:
    return frozenset(a for a, b in relation if a == b)


def converse(relation: Iterable[tuple]) -> frozenset:
    return frozenset((b, a) for a, b in relation)


def restrict(relation: Iterable[tuple], subset: AbstractSet) -> frozenset:
    """``R|_A``: the pairs of ``relation`` with both components in ``subset``."""
    subset = frozenset(subset)
    return frozenset((a, b) for a, b in relation if a in subset and b in subset)


def _dual(s: RelationalStructure) -> RelationalStructure:
    return RelationalStructure(s.elements, converse(s.relation))


def check_poset(s: RelationalStructure) -> PosetCheckReport:
    X, R = s.elements, s.relation
    reflexive = all((a, a) in R for a in X)
    # (c, b) in R and (b, a) in R  =>  (c, a) in R
    transitive = all((c, a) in R
                     for c in X for b in X if (c, b) in R
                     for a in X if (b, a) in R)
    antisymmetric = all(a == b for a, b in R if (b, a) in R)
    # lower bounds only make sense in a preorder; directed sets are non-empty
    downward_directed = (reflexive and transitive and bool(X) and all(
        any((a, lb) in R and (b, lb) in R for lb in X) for a in X for b in X))
    bottom = None
    if downward_directed and antisymmetric:
        least = [x for x in X if all((y, x) in R for y in X)]
        if len(least) == 1:
            bottom = least[0]
    return PosetCheckReport(reflexive, transitive, antisymmetric, downward_directed, bottom)


def _require_poset(s: RelationalStructure) -> None:
    report = check_poset(s)
    if not report.is_poset:
        raise NotAPoset(f"not a poset: {report}")


def max_elements(s: RelationalStructure) -> frozenset:
    _require_poset(s)
    R = s.relation
    return frozenset(m for m in s.elements
                     if all((m, x) in R for x in s.elements if (x, m) in R))


def min_elements(s: RelationalStructure) -> frozenset:
    return max_elements(_dual(s))


def _as_set(y, s: RelationalStructure) -> frozenset:
    if isinstance(y, (set, frozenset)):
        ys = frozenset(y)
    else:
        ys = frozenset([y])
    unknown = ys - s.elements
    if unknown:
        raise UnknownElement(f"not in structure: {sorted(map(repr, unknown))}")
    return ys


def downward_closure(y, s: RelationalStructure) -> frozenset:
    """``y`` may be a single element or a set of elements."""
    ys = _as_set(y, s)
    return frozenset(c for a, c in s.relation if a in ys)


def upward_closure(y, s: RelationalStructure) -> frozenset:
    return downward_closure(y, _dual(s))


def mlb(y, s: RelationalStructure) -> frozenset:
    """Maximal lower bounds: the maximal elements strictly below ``y``."""
    _as_set(y, s)
    below = downward_closure(y, s) - {y}
    return max_elements(RelationalStructure(below, restrict(s.relation, below)))


def is_extension(s_new: RelationalStructure, s_old: RelationalStructure) -> bool:
    return (s_old.elements <= s_new.elements
            and restrict(s_new.relation, s_old.elements) == s_old.relation)


def is_upward_extension(s_new: RelationalStructure, s_old: RelationalStructure) -> bool:
    new, old = check_poset(s_new), check_poset(s_old)
    if new.bottom is None or old.bottom is None:
        raise NotAPoset("both structures must be posets with a bottom element")
    return is_extension(s_new, s_old) and new.bottom == old.bottom
