"""Scenario documents: what to simulate.

Scenarios are JSON objects (``"schema": 1``); see the README for the full
field list.  :func:`load_scenario` validates structure and the standing
assumption of every convergence claim: once all partitions that end have
ended, the correct replicas are connected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

from ..errors import ScenarioInvalid

SCHEMA_VERSION = 1
MODES = ("edp", "epm", "acedpm")
BEHAVIORS = ("equivocate", "forge_ancestry", "invalid_extension", "spam",
             "selective_send", "bad_signature", "unauthorized_event")
ACTIONS = {
    "edp": {"append"},
    "epm": {"put", "append"},
    "acedpm": {"chat", "membership", "level"},
}


@dataclass(frozen=True)
class Partition:
    start: int
    end: Optional[int]
    groups: tuple

    def active(self, tick: int) -> bool:
        return self.start <= tick and (self.end is None or tick < self.end)

    def allows(self, a: int, b: int) -> bool:
        return any(a in g and b in g for g in self.groups)


@dataclass(frozen=True)
class ByzantineSpec:
    replica: int
    behaviors: tuple
    start: int = 0
    stop: int = 10
    rate: int = 1
    victims: tuple = ()


@dataclass(frozen=True)
class Workload:
    kind: str
    start: int = 0
    stop: int = 0
    rate: float = 1.0
    keys: int = 3


@dataclass(frozen=True)
class Scenario:
    name: str
    mode: str = "edp"
    seed: int = 0
    replicas: int = 2
    genesis: Any = "genesis"
    byzantine: tuple = ()
    default_delay: int = 1
    edge_delays: dict = field(default_factory=dict)
    partitions: tuple = ()
    script: tuple = ()
    workload: Optional[Workload] = None
    pending_capacity: int = 10_000
    max_payload: int = 4096
    max_ticks: int = 5000
    level_order: str = "high-first"

    @property
    def byzantine_indices(self) -> frozenset:
        return frozenset(b.replica for b in self.byzantine)

    @property
    def correct(self) -> list:
        return [i for i in range(self.replicas) if i not in self.byzantine_indices]

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=seed)

    def delay(self, src: int, dst: int) -> int:
        return self.edge_delays.get((src, dst), self.default_delay)

    def edge_up(self, tick: int, a: int, b: int) -> bool:
        return all(p.allows(a, b) for p in self.partitions if p.active(tick))

    def last_event_tick(self) -> int:
        ticks = [0]
        ticks += [s["tick"] for s in self.script]
        ticks += [p.end for p in self.partitions if p.end is not None]
        ticks += [b.stop for b in self.byzantine]
        if self.workload:
            ticks.append(self.workload.stop)
        return max(ticks)


def _int(doc: dict, key: str, default: Optional[int] = None, minimum: int = 0) -> int:
    value = doc.get(key, default)
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ScenarioInvalid(f"{key!r} must be an integer >= {minimum}, got {value!r}")
    return value


def parse_scenario(doc: dict, name: str = "scenario") -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioInvalid("scenario must be a JSON object")
    if doc.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ScenarioInvalid(f"unsupported schema version {doc.get('schema')!r}")
    mode = doc.get("mode", "edp")
    if mode not in MODES:
        raise ScenarioInvalid(f"unknown mode {mode!r}")
    n = _int(doc, "replicas", 2, minimum=1)

    byz = []
    for entry in doc.get("byzantine", []):
        idx = _int(entry, "replica")
        behaviors = tuple(entry.get("behaviors", []))
        unknown = set(behaviors) - set(BEHAVIORS)
        if idx >= n or unknown or not behaviors:
            raise ScenarioInvalid(f"bad byzantine entry {entry!r}")
        byz.append(ByzantineSpec(idx, behaviors, _int(entry, "start", 0), _int(entry, "stop", 10),
                                 _int(entry, "rate", 1, minimum=1),
                                 tuple(entry.get("victims", []))))
    if len({b.replica for b in byz}) != len(byz):
        raise ScenarioInvalid("a replica is listed as byzantine twice")
    byz_idx = {b.replica for b in byz}
    if len(byz_idx) == n:
        raise ScenarioInvalid("at least one replica must be correct")

    delays = doc.get("delays", {})
    default_delay = _int(delays, "default", 1, minimum=1)
    edge_delays = {}
    for e in delays.get("edges", []):
        a, b = _int(e, "from"), _int(e, "to")
        if a >= n or b >= n:
            raise ScenarioInvalid(f"delay edge out of range: {e!r}")
        edge_delays[(a, b)] = _int(e, "delay", minimum=1)

    partitions = []
    for p in doc.get("partitions", []):
        end = p.get("end")
        if end is not None:
            end = _int(p, "end")
        groups = tuple(frozenset(g) for g in p.get("groups", []))
        listed = [i for g in groups for i in g]
        if any(not isinstance(i, int) or i < 0 or i >= n for i in listed):
            raise ScenarioInvalid(f"partition group out of range: {p!r}")
        partitions.append(Partition(_int(p, "start", 0), end, groups))

    script = []
    for step in doc.get("script", []):
        _int(step, "tick")
        r = _int(step, "replica")
        if r >= n or r in byz_idx:
            raise ScenarioInvalid(f"script step for a missing or byzantine replica: {step!r}")
        if step.get("action") not in ACTIONS[mode]:
            raise ScenarioInvalid(f"action {step.get('action')!r} not available in mode {mode}")
        script.append(dict(step))
    script.sort(key=lambda s: s["tick"])

    workload = None
    if "workload" in doc:
        w = doc["workload"]
        kind = w.get("kind", {"edp": "append", "epm": "put", "acedpm": "chat"}[mode])
        if kind not in ACTIONS[mode]:
            raise ScenarioInvalid(f"workload kind {kind!r} not available in mode {mode}")
        rate = w.get("rate", 1.0)
        if not isinstance(rate, (int, float)) or not 0 <= rate <= 1:
            raise ScenarioInvalid("workload rate must be within [0, 1]")
        workload = Workload(kind, _int(w, "start", 0), _int(w, "stop", 0), float(rate),
                            _int(w, "keys", 3, minimum=1))

    genesis = doc.get("genesis", "genesis")
    if mode == "acedpm":
        if not isinstance(genesis, dict):
            genesis = {}
        creator = genesis.get("creator", 0)
        if not isinstance(creator, int) or creator >= n or creator in byz_idx:
            raise ScenarioInvalid("acedpm genesis creator must be a correct replica index")
    elif not isinstance(genesis, str):
        raise ScenarioInvalid("genesis must be a string in edp/epm mode")

    level_order = doc.get("level_order", "high-first")
    if level_order not in ("high-first", "low-first"):
        raise ScenarioInvalid(f"unknown level_order {level_order!r}")

    scenario = Scenario(
        name=str(doc.get("name", name)), mode=mode, seed=_int(doc, "seed", 0), replicas=n,
        genesis=genesis, byzantine=tuple(byz), default_delay=default_delay,
        edge_delays=edge_delays, partitions=tuple(partitions), script=tuple(script),
        workload=workload, pending_capacity=_int(doc, "pending_capacity", 10_000, minimum=1),
        max_payload=_int(doc, "max_payload", 4096, minimum=1),
        max_ticks=_int(doc, "max_ticks", 5000, minimum=1), level_order=level_order)
    check_connectivity(scenario)
    return scenario


def check_connectivity(s: Scenario) -> None:
    """Raise unless the correct replicas end up in one connected component."""
    correct = s.correct
    final = max([0] + [p.end for p in s.partitions if p.end is not None] + [p.start for p in s.partitions])
    seen = {correct[0]}
    frontier = [correct[0]]
    while frontier:
        a = frontier.pop()
        for b in correct:
            if b not in seen and s.edge_up(final, a, b) and s.edge_up(final, b, a):
                seen.add(b)
                frontier.append(b)
    if len(seen) != len(correct):
        raise ScenarioInvalid("correct replicas never form a connected component "
                              f"(reachable from {correct[0]}: {sorted(seen)})")


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioInvalid(f"{path}: not valid JSON: {exc}") from exc
    return parse_scenario(doc, name=path.stem)
