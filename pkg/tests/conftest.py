import random

import pytest

from edp.poset import RelationalStructure
from edp.state import EdpState, UpwardExtension

EXAMPLE_PAIRS = {
    ("xb", "xb"), ("x1", "x1"), ("x2", "x2"), ("x3", "x3"), ("x4", "x4"),
    ("x1", "xb"), ("x2", "xb"), ("x3", "xb"), ("x4", "xb"),
    ("x3", "x1"), ("x4", "x1"), ("x4", "x2"),
}


@pytest.fixture
def example_poset():
    return RelationalStructure.from_relation(EXAMPLE_PAIRS)


class History:
    """Linked extensions for the two-replica example history (plus a later x5)."""

    def __init__(self) -> None:
        self.ub = UpwardExtension(b"x_bottom")
        self.u1 = UpwardExtension(b"x1", [self.ub])
        self.u2 = UpwardExtension(b"x2", [self.ub])
        self.u3 = UpwardExtension(b"x3", [self.u1])
        self.u4 = UpwardExtension(b"x4", [self.u1, self.u2])
        self.u5 = UpwardExtension(b"x5", [self.u3, self.u4])

    def state(self, *names: str) -> EdpState:
        return EdpState(self.ub, [getattr(self, n) for n in names])


@pytest.fixture
def hist():
    return History()


def random_history(rng: random.Random, size: int, genesis: bytes = b"g",
                   width: int = 3) -> list:
    """A valid history in creation order; parents are a random antichain."""
    out = [UpwardExtension(genesis)]
    for i in range(size):
        picks = rng.sample(out, min(len(out), rng.randint(1, width)))
        parents = [p for p in picks if not any(p is not q and p.id in q.closure for q in picks)]
        out.append(UpwardExtension(b"e%d-%d" % (i, rng.getrandbits(16)), parents))
    return out


def random_state(rng: random.Random, history: list, keep: float = 0.6) -> EdpState:
    """A downward-closed random subset of ``history``."""
    chosen: dict = {}
    for u in history[1:]:
        if rng.random() < keep:
            chosen.update(u.ancestors())
    return EdpState(history[0], chosen.values())


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
