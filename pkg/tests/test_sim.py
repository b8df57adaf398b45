from pathlib import Path

import pytest

from edp.errors import ScenarioInvalid
from edp.op import Replica
from edp.sim import (check_strong_convergence, load_scenario, measure, metrics_csv,
                     parse_scenario, run)
from edp.sim.harness import World

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def example_run(seed: int = 0):
    return run(load_scenario(SCENARIOS / "fig1.json").with_seed(seed))


def test_two_replica_replay():
    result = example_run()
    assert result.verdict.ok and result.quiescent
    a, b = result.replicas[0], result.replicas[1]
    assert a.state == b.state and len(a) == 5
    tips = {u.payload: u for u in a.frontier()}
    assert set(tips) == {b"x3", b"x4"}
    assert len(tips[b"x4"].closure) == 4 and len(tips[b"x3"].closure) == 3


def test_runs_are_deterministic():
    s = load_scenario(SCENARIOS / "byz_all.json")
    assert run(s).transcript_jsonl() == run(s).transcript_jsonl()
    assert run(s).transcript_jsonl() != run(s.with_seed(99)).transcript_jsonl()


def test_equivocators_leave_distinct_siblings():
    result = run(load_scenario(SCENARIOS / "equivocation.json"))
    assert result.verdict.ok
    r = result.replicas[0]
    byz = [u for u in r.index.values() if u.payload.startswith(b"byz-")]
    by_parents: dict = {}
    for u in byz:
        by_parents.setdefault(u.mlb_ids, []).append(u)
    assert any(len(v) >= 2 for v in by_parents.values())
    for other in result.replicas.values():
        assert {u.id for u in byz} <= other.index.keys()


def test_permanent_partition_is_invalid():
    with pytest.raises(ScenarioInvalid):
        parse_scenario({"replicas": 3, "partitions": [{"start": 0, "end": None, "groups": [[0], [1, 2]]}]})
    # cutting off only the byzantine replica is fine
    parse_scenario({"replicas": 3, "byzantine": [{"replica": 2, "behaviors": ["spam"]}],
                    "partitions": [{"start": 0, "groups": [[0, 1], [2]]}]})


@pytest.mark.parametrize("doc", [
    {"schema": 2},
    {"mode": "graph"},
    {"replicas": 0},
    {"replicas": 2, "byzantine": [{"replica": 5, "behaviors": ["spam"]}]},
    {"replicas": 2, "byzantine": [{"replica": 1, "behaviors": ["teleport"]}]},
    {"replicas": 1, "byzantine": [{"replica": 0, "behaviors": ["spam"]}]},
    {"replicas": 2, "script": [{"tick": 0, "replica": 0, "action": "chat"}]},
    {"replicas": 2, "mode": "acedpm", "genesis": {"creator": 3}},
    {"replicas": 2, "workload": {"rate": 2}},
    {"replicas": 2, "delays": {"default": 0}},
])
def test_bad_scenarios(doc):
    with pytest.raises(ScenarioInvalid):
        parse_scenario(doc)


class SloppyReplica(Replica):
    """Mutant that skips structural validation."""

    def _apply(self, op):
        from edp.op import reconstruct
        self._state._insert(reconstruct(op, self._state))
        return True


def test_checker_catches_a_mutant():
    s = load_scenario(SCENARIOS / "byz_invalid_extension.json")

    def factory(index, world: World):
        if index == 0:
            return SloppyReplica(world.genesis_payload, is_valid=lambda p: True, name="mutant")
        return world.make_replica(index)

    result = run(s, replica_factory=factory)
    assert not result.verdict.strong_convergence
    evidence = result.verdict.evidence["strong_convergence"]
    assert evidence["pair"][0] == 0 and evidence["aspect"] == "poset"
    assert len(evidence["element"]) == 64
    assert run(s).verdict.ok


def test_single_replica_is_vacuously_convergent():
    result = run(parse_scenario({"replicas": 1, "workload": {"start": 0, "stop": 5}}))
    assert result.verdict.ok
    assert check_strong_convergence(result.replicas) == (True, {})


def test_unbounded_byzantine_never_quiesces():
    s = parse_scenario({"replicas": 2, "max_ticks": 30,
                        "byzantine": [{"replica": 1, "behaviors": ["spam"], "stop": 10 ** 6}]})
    result = run(s)
    assert not result.quiescent and not result.verdict.eventual_update


def test_measure_steady_chat():
    m = measure(run(load_scenario(SCENARIOS / "steady_chat_n5.json")).transcript)
    assert m["quiescent_ticks"] > 0 and m["quiescent_frontier_max"] <= 5
    assert m["convergence_tick"] is not None


def test_measure_spam_is_bounded():
    s = load_scenario(SCENARIOS / "spam_bounded.json")
    result = run(s)
    m = measure(result.transcript)
    assert result.verdict.ok
    assert 0 < m["max_pending"] <= s.pending_capacity


def test_single_writer_frontier_is_one():
    s = parse_scenario({"replicas": 3, "script": [
        {"tick": t, "replica": 0, "action": "append"} for t in range(0, 20, 3)]})
    m = measure(run(s).transcript)
    assert m["quiescent_ticks"] > 0 and m["quiescent_frontier_max"] == 1


def test_metrics_csv():
    text = metrics_csv(example_run().transcript)
    lines = text.splitlines()
    assert lines[0] == "tick,replica,frontier,pending,size,digest"
    assert lines[1].startswith("0,0,")


def test_refused_actions_are_recorded():
    s = parse_scenario({"mode": "acedpm", "replicas": 2, "script": [
        {"tick": 0, "replica": 1, "action": "chat", "text": "not a member"}]})
    result = run(s)
    assert result.verdict.ok
    assert any(r["kind"] == "refused" for r in result.transcript)


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.json")), ids=lambda p: p.stem)
def test_bundled_scenarios_pass(path):
    assert run(load_scenario(path)).verdict.ok
