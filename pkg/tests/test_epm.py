import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edp import epm
from edp.errors import NotDownwardClosed, UnknownExtension
from edp.op import Replica
from edp.state import EdpState, UpwardExtension

from conftest import random_history
from oracles import epm_brute_force


def kv(k: bytes, v: bytes, parents) -> UpwardExtension:
    return UpwardExtension(epm.encode_kv(k, v), parents)


def test_kv_codec():
    assert epm.decode_kv(epm.encode_kv(b"k", b"v")) == (b"k", b"v")
    assert epm.decode_kv(b"Hi!") is None
    assert epm.decode_kv(epm.encode_kv(b"k", b"v") + b"x") is None


def test_map_apply():
    g = UpwardExtension(b"g")
    assert epm.map_apply({}, kv(b"k", b"1", [g])) == {b"k": b"1"}
    assert epm.map_apply({b"k": b"1"}, kv(b"k", b"2", [g])) == {b"k": b"2"}
    m = {b"k": b"1"}
    assert epm.map_apply(m, UpwardExtension(b"chat message", [g])) == m


def test_put():
    r = Replica(b"g")
    op = epm.put(r, b"k", b"v")
    assert op.mlb_hashes == {r.genesis.id}
    assert epm.get(r) == {b"k": b"v"}
    assert epm.get(r, [r.genesis]) == {}


def test_concurrent_puts_agree():
    a, b = Replica(b"g"), Replica(b"g")
    oa, ob = epm.put(a, b"k", b"a"), epm.put(b, b"k", b"b")
    a.effect(ob)
    b.effect(oa)
    assert epm.get(a) == epm.get(b)
    # the digest-larger of the two concurrent writes is applied last
    assert epm.get(a)[b"k"] == (b"a" if oa.id > ob.id else b"b")


def test_later_put_wins():
    a, b = Replica(b"g"), Replica(b"g")
    first = epm.put(a, b"k", b"old")
    b.effect(first)
    second = epm.put(b, b"k", b"new")
    a.effect(second)
    assert a.extension(first.id) < a.extension(second.id)
    assert epm.get(a) == epm.get(b) == {b"k": b"new"}


def test_linearize_examples(hist):
    assert epm.linearize([hist.u3, hist.u1, hist.ub]) == [hist.ub, hist.u1, hist.u3]
    order = epm.linearize([hist.ub, hist.u1, hist.u2, hist.u3, hist.u4])
    assert order[0] == hist.ub and order.index(hist.u1) < order.index(hist.u3)
    assert max(order.index(hist.u1), order.index(hist.u2)) < order.index(hist.u4)
    # the concurrent tips are placed by digest, the same way for any input order
    for perm in itertools.permutations(order):
        assert epm.linearize(perm) == order
    if hist.u3.id < hist.u4.id:
        assert order.index(hist.u3) < order.index(hist.u4)
    with pytest.raises(NotDownwardClosed):
        epm.linearize([hist.u3])


def test_linearize_cmp(hist):
    before = lambda a, b: a.payload > b.payload  # noqa: E731
    order = epm.linearize_cmp([hist.ub, hist.u1, hist.u2], before)
    assert order == [hist.ub, hist.u2, hist.u1]


def test_downward_closure_of(hist):
    state = hist.state("u1", "u2", "u3")
    assert set(epm.downward_closure_of([hist.u3.id], state)) == {hist.ub, hist.u1, hist.u3}
    with pytest.raises(UnknownExtension):
        epm.downward_closure_of([hist.u4], state)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32))
def test_linearize_respects_subset_order(seed):
    rng = random.Random(seed)
    history = random_history(rng, rng.randint(1, 15))
    order = epm.linearize(rng.sample(history, len(history)))
    pos = {u.id: i for i, u in enumerate(order)}
    assert all(pos[p.id] < pos[u.id] for u in history for p in u.parents)


def random_puts(rng: random.Random, n: int) -> list:
    g = UpwardExtension(b"genesis")
    out = [g]
    for i in range(n):
        picks = rng.sample(out, rng.randint(1, min(2, len(out))))
        parents = [p for p in picks if not any(p is not q and p <= q for q in picks)]
        payload = epm.encode_kv(b"k%d" % rng.randrange(2), b"v%d" % i) if rng.random() < 0.85 else b"chat"
        out.append(UpwardExtension(payload, parents))
    return out


@pytest.mark.parametrize("seed", range(40))
def test_get_matches_brute_force(seed):
    rng = random.Random(seed)
    history = random_puts(rng, rng.randint(1, 5))
    state = EdpState(history[0], history)
    assert epm.get(state) == epm_brute_force(history)
