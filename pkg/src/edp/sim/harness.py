"""Deterministic tick-based simulation of replicas gossiping over a lossy network.

One tick runs, in order: message delivery, scripted and workload actions,
then each node's periodic gossip.  Messages sent at tick ``t`` over edge
``a -> b`` arrive at ``t + delay(a, b)``; a partition active at send time
drops them.  After the last scheduled event the run continues until the
correct replicas make no progress for a settle window, which stands in for
"no message in flight can change anything".

Everything is derived from the scenario and its seed, so two runs of the same
scenario produce byte-identical transcripts.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from .. import epm
from ..acedpm import (AcReplica, GenesisConfig, Membership, ReplicaIdentity,
                      DEFAULT_ACTION_LEVELS, DEFAULT_CREATOR_LEVEL)
from ..broadcast import GossipNode
from ..errors import AssertionFailed
from ..op import Replica
from .adversary import Attacker
from .scenario import Scenario

log = logging.getLogger(__name__)

ReplicaFactory = Callable[[int, "World"], Replica]


@dataclass
class SecVerdict:
    self_update: bool = True
    eventual_update: bool = True
    strong_convergence: bool = True
    evidence: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.self_update and self.eventual_update and self.strong_convergence

    def to_dict(self) -> dict:
        return {"self_update": self.self_update, "eventual_update": self.eventual_update,
                "strong_convergence": self.strong_convergence, "ok": self.ok,
                "evidence": self.evidence}


@dataclass
class RunResult:
    scenario: Scenario
    transcript: list
    verdict: SecVerdict
    replicas: dict
    attackers: dict
    ticks: int
    quiescent: bool

    def transcript_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n"
                       for r in self.transcript)


def identity_for(scenario: Scenario, index: int) -> ReplicaIdentity:
    seed = hashlib.sha256(f"identity:{scenario.name}:{index}".encode()).digest()
    return ReplicaIdentity.from_seed(seed, name=f"r{index}")


class World:
    """Static per-run context shared by factories: identities and genesis."""

    def __init__(self, scenario: Scenario) -> None:
        self.scenario = scenario
        self.identities = {i: identity_for(scenario, i) for i in range(scenario.replicas)}
        if scenario.mode == "acedpm":
            g = scenario.genesis
            self.config = GenesisConfig(
                self.identities[g.get("creator", 0)].subject,
                g.get("creator_level", DEFAULT_CREATOR_LEVEL),
                dict(g.get("action_levels", DEFAULT_ACTION_LEVELS)),
                str(g.get("nonce", scenario.name)).encode())
            self.genesis_payload = self.config.encode()
        else:
            self.config = None
            self.genesis_payload = str(scenario.genesis).encode()

    def subject(self, index: int) -> bytes:
        return self.identities[index].subject

    def make_replica(self, index: int) -> Replica:
        s = self.scenario
        if s.mode == "acedpm":
            return AcReplica(self.identities[index], self.config, level_order=s.level_order,
                             capacity=s.pending_capacity, name=f"r{index}")
        limit = s.max_payload
        return Replica(self.genesis_payload, is_valid=lambda p: len(p) <= limit,
                       capacity=s.pending_capacity, name=f"r{index}")


def default_factory(index: int, world: World) -> Replica:
    return world.make_replica(index)


def _hex(b: bytes) -> str:
    return bytes(b).hex()


def frontier_digest(replica: Replica) -> str:
    """Digest of the frontier ids; the frontier determines the whole state."""
    h = hashlib.sha256()
    for u in replica.frontier():
        h.update(u.id)
    return h.hexdigest()[:16]


def run(scenario: Scenario, *, replica_factory: Optional[ReplicaFactory] = None) -> RunResult:
    s = scenario
    world = World(s)
    factory = replica_factory or default_factory
    correct = s.correct
    replicas = {i: factory(i, world) for i in correct}
    nodes = {i: GossipNode(replicas[i], i, retry_after=2 * max(s.default_delay, 1)) for i in correct}
    genesis_id = replicas[correct[0]].genesis.id
    attackers = {}
    for b in s.byzantine:
        victims = [world.subject(v) for v in (b.victims or correct) if v in correct]
        attackers[b.replica] = Attacker(
            b.replica, b, mode=s.mode, genesis_id=genesis_id,
            rng=random.Random(f"{s.seed}:{b.replica}"),
            identity=world.identities[b.replica] if s.mode == "acedpm" else None,
            victim_subjects=tuple(victims), max_payload=s.max_payload)
    workload_rng = random.Random(f"{s.seed}:workload")

    transcript: list = [{"kind": "start", "scenario": s.name, "mode": s.mode, "seed": s.seed,
                         "replicas": s.replicas, "correct": correct,
                         "genesis": _hex(genesis_id)}]
    verdict = SecVerdict()
    inflight: dict = {}  # arrival tick -> [(seq, src, dst, data)]
    seq = 0
    stats = {"sent": 0, "dropped": 0, "delivered": 0}

    def send(now: int, src: int, out: list) -> None:
        nonlocal seq
        for dst, data in out:
            if dst == src or not 0 <= dst < s.replicas:
                continue
            stats["sent"] += 1
            if not s.edge_up(now, src, dst):
                stats["dropped"] += 1
                continue
            inflight.setdefault(now + s.delay(src, dst), []).append((seq, src, dst, data))
            seq += 1

    def local(now: int, i: int, action: str, do: Callable[[], object]) -> None:
        try:
            op = do()
        except AssertionFailed as exc:
            transcript.append({"kind": "refused", "tick": now, "replica": i, "action": action,
                               "reason": exc.which})
            return
        applied = op.id in replicas[i]
        transcript.append({"kind": "local", "tick": now, "replica": i, "action": action,
                           "op": _hex(op.id), "size": len(op.encode()),
                           "mlb": len(op.mlb_hashes), "applied": applied})
        if not applied and verdict.self_update:
            verdict.self_update = False
            verdict.evidence["self_update"] = {"replica": i, "element": _hex(op.id), "tick": now}

    def perform(now: int, i: int, step: dict) -> None:
        r = replicas[i]
        action = step["action"]
        if action == "append":
            payload = str(step.get("payload", f"r{i}-t{now}")).encode()
            local(now, i, action, lambda: r.append(payload))
        elif action == "put":
            key = str(step.get("key", "k")).encode()
            value = str(step.get("value", f"r{i}-t{now}")).encode()
            local(now, i, action, lambda: epm.put(r, key, value))
        elif action == "chat":
            text = str(step.get("text", f"r{i}-t{now}"))
            local(now, i, action, lambda: r.chat(text))
        elif action == "membership":
            subject = world.subject(step["subject"])
            value = Membership(step.get("value", "IN"))
            local(now, i, action, lambda: r.set_membership(subject, value))
        elif action == "level":
            obj = step["object"]
            target = world.subject(obj) if isinstance(obj, int) else str(obj).encode()
            level = int(step["level"])
            local(now, i, action, lambda: r.set_level(target, level))

    script = list(s.script)
    last_event = s.last_event_tick()
    max_delay = max([s.default_delay] + list(s.edge_delays.values()))
    settle = 2 * max_delay * s.replicas + 4
    quiet = 0
    progress = None
    quiescent = False
    tick = 0
    for tick in range(s.max_ticks):
        for _, src, dst, data in sorted(inflight.pop(tick, []), key=lambda m: m[0]):
            stats["delivered"] += 1
            if dst in nodes:
                send(tick, dst, nodes[dst].receive(src, data))
            elif dst in attackers:
                send(tick, dst, attackers[dst].receive(src, data))

        while script and script[0]["tick"] == tick:
            step = script.pop(0)
            perform(tick, step["replica"], step)
        if s.workload and s.workload.start <= tick < s.workload.stop:
            for i in correct:
                if workload_rng.random() < s.workload.rate:
                    step = {"action": s.workload.kind}
                    if s.workload.kind == "put":
                        step["key"] = f"k{workload_rng.randrange(s.workload.keys)}"
                    perform(tick, i, step)

        everyone = range(s.replicas)
        for i in correct:
            peers = [p for p in everyone if p != i and s.edge_up(tick, i, p)]
            send(tick, i, nodes[i].tick(tick, peers))
        for i in sorted(attackers):
            peers = [p for p in everyone if p != i and s.edge_up(tick, i, p)]
            send(tick, i, attackers[i].tick(tick, peers))

        summary = {str(i): {"frontier": len(replicas[i].frontier()),
                            "pending": len(replicas[i].pending), "size": len(replicas[i]),
                            "digest": frontier_digest(replicas[i])} for i in correct}
        transcript.append({"kind": "tick", "tick": tick, "replicas": summary, **stats})
        for k in stats:
            stats[k] = 0

        now_progress = tuple((len(replicas[i]), len(replicas[i].pending),
                              replicas[i].pending.arrivals) for i in correct)
        quiet = quiet + 1 if now_progress == progress else 0
        progress = now_progress
        if tick >= last_event and quiet >= settle:
            quiescent = True
            break

    if not quiescent:
        verdict.eventual_update = False
        verdict.evidence["eventual_update"] = {"reason": "no quiescence within max_ticks",
                                               "max_ticks": s.max_ticks}
    else:
        _check_eventual_update(replicas, verdict)
    converged, evidence = check_strong_convergence(replicas, s.mode)
    if not converged:
        verdict.strong_convergence = False
        verdict.evidence["strong_convergence"] = evidence

    transcript.append({"kind": "final", "tick": tick, "quiescent": quiescent,
                       "replicas": {str(i): {"size": len(r), "digest": frontier_digest(r),
                                             "rejected": r.rejected,
                                             "malformed": nodes[i].malformed}
                                    for i, r in replicas.items()},
                       "verdict": verdict.to_dict()})
    return RunResult(s, transcript, verdict, replicas, attackers, tick, quiescent)


def _check_eventual_update(replicas: dict, verdict: SecVerdict) -> None:
    union: set = set()
    for r in replicas.values():
        union |= r.index.keys()
    for i in sorted(replicas):
        missing = union - replicas[i].index.keys()
        if missing:
            verdict.eventual_update = False
            verdict.evidence["eventual_update"] = {"replica": i, "element": _hex(min(missing)),
                                                   "missing": len(missing)}
            return


def _views(replica: Replica, mode: str) -> list:
    """``(aspect, value)`` pairs compared across replicas, most basic first."""
    hasse = {k: (u.payload, u.mlb_ids) for k, u in replica.index.items()}
    views = [("poset", hasse)]
    if mode == "epm":
        views.append(("map", epm.get(replica)))
    if mode == "acedpm":
        views.append(("linearization", replica.linearization()))
        views.append(("ac_maps", replica.ac_get()))
    return views


def check_strong_convergence(replicas: dict, mode: str = "edp") -> tuple:
    """Pairwise compare correct replicas; returns ``(ok, evidence)``.

    The poset is compared through its covering relation (each element's
    payload and maximal lower bounds), which determines the order exactly.
    """
    order = sorted(replicas)
    if len(order) < 2:
        return True, {}
    base = order[0]
    base_views = _views(replicas[base], mode)
    for other in order[1:]:
        for (aspect, a), (_, b) in zip(base_views, _views(replicas[other], mode)):
            if a == b:
                continue
            evidence = {"pair": [base, other], "aspect": aspect}
            if aspect == "poset":
                diff = sorted((a.keys() ^ b.keys()) or
                              {k for k in a if a[k] != b.get(k)})
                evidence["element"] = _hex(diff[0])
            return False, evidence
    return True, {}


# -- metrics -------------------------------------------------------------------

def measure(transcript: list) -> dict:
    start = transcript[0]
    correct = [str(i) for i in start["correct"]]
    ticks = [r for r in transcript if r["kind"] == "tick"]
    frontier = {i: [t["replicas"][i]["frontier"] for t in ticks] for i in correct}
    pending = {i: [t["replicas"][i]["pending"] for t in ticks] for i in correct}
    sizes = [r["size"] for r in transcript if r["kind"] == "local"]

    quiescent_ticks = []
    for t in ticks:
        reps = [t["replicas"][i] for i in correct]
        if len({r["digest"] for r in reps}) == 1 and all(r["pending"] == 0 for r in reps):
            quiescent_ticks.append(t)

    final_digest = {t["replicas"][i]["digest"] for t in ticks[-1:] for i in correct}
    convergence_tick = None
    if len(final_digest) == 1:
        digest = final_digest.pop()
        for t in reversed(ticks):
            if any(t["replicas"][i]["digest"] != digest for i in correct):
                break
            convergence_tick = t["tick"]

    return {
        "ticks": len(ticks),
        "frontier": frontier,
        "pending": pending,
        "update_sizes": sizes,
        "max_update_size": max(sizes, default=0),
        "max_pending": max((max(v, default=0) for v in pending.values()), default=0),
        "max_frontier": max((max(v, default=0) for v in frontier.values()), default=0),
        "quiescent_ticks": len(quiescent_ticks),
        "quiescent_frontier_max": max((t["replicas"][i]["frontier"] for t in quiescent_ticks
                                       for i in correct), default=0),
        "convergence_tick": convergence_tick,
        "messages": sum(t["sent"] for t in ticks),
        "dropped": sum(t["dropped"] for t in ticks),
    }


def metrics_csv(transcript: list) -> str:
    """One row per (tick, correct replica)."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["tick", "replica", "frontier", "pending", "size", "digest"])
    for t in transcript:
        if t["kind"] != "tick":
            continue
        for i in sorted(t["replicas"], key=int):
            r = t["replicas"][i]
            w.writerow([t["tick"], i, r["frontier"], r["pending"], r["size"], r["digest"]])
    return out.getvalue()
