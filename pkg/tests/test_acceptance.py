"""Acceptance gate: one test, and one PASS/FAIL line, per criterion.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as they
happen; they are also repeated in the terminal summary.
"""

import hashlib
import io
import itertools
import json
import random
import subprocess
import sys
import time
from pathlib import Path

from edp import epm
from edp.acedpm import AcReplica, GenesisConfig, Membership, ReplicaIdentity
from edp.broadcast import FetchRequest, FetchResponse, Frontier, GossipNode, encode_message
from edp.cli import main as cli_main
from edp.op import Operation, Replica, compress
from edp.sim import BEHAVIORS, load_scenario, measure, parse_scenario, run
from edp.sim.harness import World
from edp.state import EdpState, UpwardExtension, is_valid_state, join

from conftest import random_history, random_state
from oracles import epm_brute_force, exhaustive_two_replicas, op_vs_state

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"
RESULTS: list = []


def report(criterion: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_semilattice():
    start = time.perf_counter()
    rng = random.Random(20240601)
    pairs = failures = 0
    while pairs < 1000:
        history = random_history(rng, rng.randint(1, 16))
        a, b, c = (random_state(rng, history) for _ in range(3))
        ab = join(a, b)
        ok = (ab == join(b, a) and join(ab, c) == join(a, join(b, c)) and join(a, a) == a
              and is_valid_state(ab))
        failures += not ok
        pairs += 1
    elapsed = time.perf_counter() - start
    report("semilattice", failures == 0 and elapsed < 60,
           f"{pairs} state pairs, {failures} failures, {elapsed:.1f}s (limit 60s)")


def test_convergence_exhaustive():
    runs = failures = 0
    for total in range(1, 5):
        for a in range(total + 1):
            r, f = exhaustive_two_replicas(a, total - a)
            runs += r
            failures += f
    report("convergence exhaustive", failures == 0,
           f"{runs} interleavings of <=4 ops on 2 replicas, {failures} diverged")


def test_state_op_oracle():
    failures = [s for s in range(500) if not op_vs_state(s)[0]]
    report("state/op oracle", not failures, f"500 histories, {len(failures)} mismatches {failures[:5]}")


def test_two_replica_replay():
    result = run(load_scenario(SCENARIOS / "fig1.json"))
    r0, r1 = result.replicas[0], result.replicas[1]
    tips = {u.payload: u for u in r0.frontier()}
    ok = (result.verdict.ok and r0.state == r1.state and len(r0) == 5
          and set(tips) == {b"x3", b"x4"}
          and len(tips[b"x4"].closure) == 4 and len(tips[b"x3"].closure) == 3)
    report("two-replica replay", ok,
           f"size={len(r0)} max={sorted(p.decode() for p in tips)} "
           f"|down(x4)|={len(tips.get(b'x4').closure) if b'x4' in tips else None} "
           f"|down(x3)|={len(tips.get(b'x3').closure) if b'x3' in tips else None}")


def _byzantine_scenario(seed: int, behaviors: list, mode: str) -> dict:
    rng = random.Random(f"byz:{seed}")
    n_correct = rng.randint(2, 4)
    n_byz = rng.randint(1, 2)
    n = n_correct + n_byz
    byz = [{"replica": n_correct + k, "behaviors": behaviors, "start": rng.randint(0, 4),
            "stop": rng.randint(6, 14), "rate": rng.randint(1, 4),
            "victims": [rng.randrange(n_correct)]} for k in range(n_byz)]
    edges = [{"from": a, "to": b, "delay": rng.randint(1, 3)}
             for a in range(n) for b in range(n) if a != b and rng.random() < 0.3]
    doc = {"name": f"byz-{mode}-{seed}", "mode": mode, "seed": seed, "replicas": n,
           "byzantine": byz, "delays": {"default": 1, "edges": edges},
           "pending_capacity": rng.choice([32, 256, 10_000]),
           "workload": {"start": 0, "stop": rng.randint(8, 16), "rate": 0.5}}
    if rng.random() < 0.5:
        cut = rng.randint(1, n_correct - 1)
        doc["partitions"] = [{"start": 2, "end": rng.randint(6, 15),
                              "groups": [list(range(cut)), list(range(cut, n))]}]
    if mode == "acedpm":
        doc["genesis"] = {"creator": 0}
        doc["script"] = [{"tick": 0, "replica": 0, "action": "membership", "subject": i, "value": "IN"}
                         for i in range(1, n)]
    return doc


def _fuzz_inputs(rng: random.Random, count: int, seeds: list):
    for i in range(count):
        kind = i % 4
        if kind == 0:
            yield rng.randbytes(rng.randint(0, 120))
        elif kind == 1:
            base = bytearray(rng.choice(seeds))
            for _ in range(rng.randint(1, 4)):
                base[rng.randrange(len(base))] = rng.randrange(256)
            yield bytes(base)
        elif kind == 2:
            base = rng.choice(seeds)
            yield base[: rng.randrange(len(base) + 1)]
        else:
            yield bytes([1, rng.choice([0x10, 0x11, 0x12])]) + rng.randbytes(rng.randint(0, 80))


def test_byzantine_suite():
    combos = [[b] for b in BEHAVIORS] + [list(BEHAVIORS)]
    failed, total = [], 0
    for seed in range(5):
        for mode in ("edp", "epm", "acedpm"):
            for behaviors in combos:
                result = run(parse_scenario(_byzantine_scenario(seed, behaviors, mode)))
                total += 1
                if not result.verdict.ok:
                    failed.append((result.scenario.name, behaviors, result.verdict.evidence))

    # fuzz: arbitrary bytes at correct nodes must never raise
    rng = random.Random(7)
    plain = Replica(b"genesis")
    for i in range(5):
        plain.append(b"%d" % i)
    alice = ReplicaIdentity.from_seed(bytes(32))
    ac = AcReplica(alice, GenesisConfig(alice.subject))
    ac.chat("hi")
    seeds = [encode_message(Frontier(frozenset(plain.frontier_ops()))),
             encode_message(FetchRequest(frozenset(plain.index))),
             encode_message(FetchResponse(frozenset(compress(u) for u in plain.index.values()))),
             encode_message(Frontier(frozenset(ac.frontier_ops())))]
    crashes, fuzzed = 0, 0
    nodes = [GossipNode(Replica(b"genesis"), 0), GossipNode(AcReplica(alice, GenesisConfig(alice.subject)), 0)]
    for data in _fuzz_inputs(rng, 100_000, seeds):
        fuzzed += 1
        for node in nodes:
            try:
                node.receive(1, data)
            except Exception:  # noqa: BLE001 - any exception is a failure here
                crashes += 1
    for node in nodes:
        node.tick(1, [1])
    ok = not failed and total >= 100 and crashes == 0 and fuzzed >= 100_000
    report("byzantine suite", ok,
           f"{total} seeded scenarios, {len(failed)} failing verdicts {failed[:2]}; "
           f"{fuzzed} fuzz inputs, {crashes} crashes")


def test_equivocation_semantics():
    result = run(load_scenario(SCENARIOS / "equivocation.json"))
    pairs = 0
    missing = 0
    for attacker in result.attackers.values():
        by_mlb: dict = {}
        for op in attacker.known.values():
            if op.payload.startswith(b"byz-"):
                by_mlb.setdefault(op.mlb_hashes, []).append(op)
        for ops in by_mlb.values():
            for a, b in itertools.combinations(ops, 2):
                if a.payload == b.payload:
                    continue
                pairs += 1
                for r in result.replicas.values():
                    missing += not (a.id in r and b.id in r and a.id != b.id)
    # the same pair delivered directly to fresh replicas in both orders
    g = Replica(b"genesis")
    h = frozenset([g.genesis.id])
    ya, yb = Operation(b"y_a", h), Operation(b"y_b", h)
    direct = []
    for order in ((ya, yb), (yb, ya)):
        r = Replica(b"genesis")
        for op in order:
            r.effect(op)
        direct.append(ya.id in r and yb.id in r and len(r) == 3)
    ok = result.verdict.ok and pairs > 0 and missing == 0 and all(direct)
    report("equivocation semantics", ok,
           f"{pairs} equivocated pairs, {missing} missing on correct replicas, direct={direct}")


def test_frontier_size():
    details, ok = [], True
    for n in (2, 5, 10):
        m = measure(run(load_scenario(SCENARIOS / f"steady_chat_n{n}.json")).transcript)
        good = m["quiescent_ticks"] > 0 and m["quiescent_frontier_max"] <= n
        ok &= good
        details.append(f"n={n}: max={m['quiescent_frontier_max']} over {m['quiescent_ticks']} quiescent ticks")
    report("frontier size", ok, "; ".join(details))


def _op_after_chain(depth: int, width: int) -> Operation:
    r = Replica(b"genesis")
    for i in range(depth):
        r.append(b"c%06d" % i)
    top = r.frontier()
    for i in range(width):
        r.effect(compress(UpwardExtension(b"branch%d" % i, top)))
    return r.generate(UpwardExtension(b"update", r.frontier()))


def test_update_size():
    rows, ok = [], True
    sizes = {}
    for width in (1, 2, 3, 5):
        deep = len(_op_after_chain(1000, width).encode())
        shallow = len(_op_after_chain(10, width).encode())
        sizes[width] = deep
        ok &= deep == shallow
        rows.append(f"w={width}: {deep}B vs {shallow}B")
    # affine in the number of maximal lower bounds
    slope = sizes[2] - sizes[1]
    ok &= all(sizes[w] == sizes[1] + slope * (w - 1) for w in sizes) and slope == 32
    report("update size", ok, "; ".join(rows) + f"; +{slope}B per lower bound")


def test_epm_oracle():
    rng = random.Random(99)
    failures = 0
    cases = 400
    for _ in range(cases):
        g = UpwardExtension(b"genesis")
        out = [g]
        for i in range(rng.randint(1, 5)):
            picks = rng.sample(out, rng.randint(1, min(3, len(out))))
            parents = [p for p in picks if not any(p is not q and p <= q for q in picks)]
            out.append(UpwardExtension(epm.encode_kv(b"k%d" % rng.randrange(2), b"v%d" % i), parents))
        if epm.get(EdpState(g, out)) != epm_brute_force(out):
            failures += 1
    report("epm oracle", failures == 0, f"{cases} histories of <=5 puts, {failures} mismatches")


def _identity(name: str) -> ReplicaIdentity:
    return ReplicaIdentity.from_seed(hashlib.sha256(name.encode()).digest(), name)


def _ban_vs_chat_schedules() -> tuple:
    alice, bob, carol = _identity("alice"), _identity("bob"), _identity("carol")
    config = GenesisConfig(alice.subject, nonce=b"ban-vs-chat")
    schedules = bad = 0
    deliveries = [("ban", "bob"), ("ban", "carol"), ("chat", "alice"), ("chat", "carol")]
    for order in itertools.permutations(deliveries):
        reps = {"alice": AcReplica(alice, config), "bob": AcReplica(bob, config),
                "carol": AcReplica(carol, config)}
        invite = reps["alice"].set_membership(bob.subject, Membership.IN)
        reps["bob"].effect(invite)
        reps["carol"].effect(invite)
        ops = {"ban": reps["alice"].set_membership(bob.subject, Membership.BAN),
               "chat": reps["bob"].chat("hello")}
        for what, to in order:
            reps[to].effect(ops[what])
        schedules += 1
        lins = {tuple(r.linearization()) for r in reps.values()}
        maps = [r.ac_get() for r in reps.values()]
        chat = ops["chat"].id
        ok = (len(lins) == 1 and all(m == maps[0] for m in maps)
              and chat not in next(iter(lins))
              and all(chat in r for r in reps.values())
              and maps[0][0][bob.subject] is Membership.BAN)
        bad += not ok
    return schedules, bad


def test_acedpm_revocation():
    schedules, bad = _ban_vs_chat_schedules()
    sim_runs = sim_bad = 0
    base = json.loads((SCENARIOS / "acedpm_ban_vs_chat.json").read_text())
    doc_delays = [(a, b) for a in (1, 2, 4) for b in (1, 2, 4)]
    for d01, d10 in doc_delays:
        s = parse_scenario({**base, "delays": {"default": 1, "edges": [
            {"from": 0, "to": 1, "delay": d01}, {"from": 1, "to": 0, "delay": d10}]}})
        result = run(s)
        w = World(s)
        r = result.replicas[0]
        chats = [k for k, u in r.index.items() if b"hello from bob" in u.payload]
        sim_runs += 1
        sim_bad += not (result.verdict.ok and len(chats) == 1
                        and chats[0] not in r.linearization()
                        and r.getM()[w.subject(1)] is Membership.BAN)

    winners = set()
    mutual_bad = 0
    for seed in range(4):
        s = load_scenario(SCENARIOS / "acedpm_mutual_revocation.json").with_seed(seed)
        result = run(s)
        w = World(s)
        a, b = w.subject(2), w.subject(3)
        ms = [rep.getM() for rep in result.replicas.values()]
        banned = [x for x in (a, b) if ms[0].get(x) is Membership.BAN]
        # predicted winner: both are revocations at level 60, so the smaller id goes first
        r0 = result.replicas[0]
        bans = sorted((k for k, u in r0.index.items() if r0.ac.event(u) is not None
                       and r0.ac.event(u).obj in (a, b)
                       and r0.ac.event(u).value is Membership.BAN))
        predicted_loser = r0.ac.event(r0.extension(bans[0])).obj if len(bans) == 2 else None
        ok = (result.verdict.ok and len(banned) == 1 and all(m == ms[0] for m in ms)
              and banned[0] == predicted_loser)
        mutual_bad += not ok
        winners.add(banned[0] if banned else None)
    ok = bad == 0 and sim_bad == 0 and mutual_bad == 0 and len(winners) == 1
    report("acedpm revocation", ok,
           f"ban-vs-chat: {schedules} delivery schedules + {sim_runs} simulated, {bad + sim_bad} bad; "
           f"mutual revocation: {mutual_bad} bad runs, single winner={len(winners) == 1}")


def test_pinned_vectors():
    out = io.StringIO()
    code = cli_main(["vectors"], out=out)
    proc = subprocess.run([sys.executable, "-m", "edp", "vectors"], capture_output=True, text=True)
    ok = code == 0 and proc.returncode == 0
    report("pinned vectors", ok, out.getvalue().strip() + f" (subprocess exit {proc.returncode})")
