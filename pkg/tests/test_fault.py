"""Failure injection, liveness and recovery semantics."""

import pytest

from minimapred import (
    Cluster,
    ClusterConfig,
    FailureEvent,
    FailurePlan,
    InputSplit,
    InvalidPlan,
    JobFailed,
    JobSpec,
    JobState,
    LivenessTracker,
    Phase,
    RunOptions,
    ShuffleSourceLost,
    TaskDescriptor,
    TaskState,
    recover,
    register,
    run_job,
    submit_job,
)
from minimapred.tasks import run_map_task, shuffle_fetch
from minimapred.jobs import wordcount_map

from test_engine import random_tokens, wc_spec


# ---------------------------------------------------------------------------
# plans


def test_parse_fail_specs():
    plan = FailurePlan.parse(["1:5", "3:after:map-2"])
    assert plan.events == (
        FailureEvent(node_id=1, tick=5),
        FailureEvent(node_id=3, after_task="map-2"),
    )


@pytest.mark.parametrize("spec", ["x:5", "1", "1:after", "1:later:map-2", "1:2:3:4"])
def test_parse_rejects_malformed_specs(spec):
    with pytest.raises(InvalidPlan):
        FailurePlan.parse([spec])


def test_event_needs_exactly_one_trigger():
    with pytest.raises(InvalidPlan):
        FailureEvent(node_id=1)
    with pytest.raises(InvalidPlan):
        FailureEvent(node_id=1, tick=2, after_task="map-0")


def test_rejoining_nodes_not_supported():
    with pytest.raises(InvalidPlan):
        FailureEvent(node_id=1, tick=2, permanent=False)


def test_validate_node_range_and_duplicates():
    FailurePlan.parse(["1:5"]).validate(4)
    with pytest.raises(InvalidPlan):
        FailurePlan.parse(["9:5"]).validate(4)
    with pytest.raises(InvalidPlan):
        FailurePlan.parse(["1:5", "1:after:map-0"]).validate(4)


# ---------------------------------------------------------------------------
# heartbeats


def test_heartbeat_timeout_detection():
    tracker = LivenessTracker(3, timeout_ticks=2)
    tracker.record(0, 5)
    tracker.record(1, 3)
    # node 2 never reported after tick 0: overdue once now - 0 > 2
    assert tracker.overdue(3) == [2]
    # at tick 6 node 1 (last seen 3) is overdue too, node 0 (seen 5) is not
    assert tracker.overdue(6) == [1, 2]


def test_heartbeat_disabled_by_default():
    tracker = LivenessTracker(3)
    assert tracker.overdue(10**9) == []


def test_dead_nodes_not_reported_overdue():
    tracker = LivenessTracker(2, timeout_ticks=1)
    tracker.mark_dead(0)
    assert tracker.overdue(100) == [1]
    assert tracker.live() == [1]


# ---------------------------------------------------------------------------
# recover() rules


def _state_with(phase=Phase.REDUCING):
    split = InputSplit("fid", 0, 0, 10, (0, 1))
    maps = [
        TaskDescriptor("map-0", "map", split, TaskState.COMPLETED,
                       assigned_node=2, result_locations=[(2, "r0")]),
        TaskDescriptor("map-1", "map", split, TaskState.COMPLETED,
                       assigned_node=1, result_locations=[(1, "r1")]),
    ]
    reduces = [
        TaskDescriptor("reduce-0", "reduce", 0, TaskState.COMPLETED,
                       assigned_node=1),
        TaskDescriptor("reduce-1", "reduce", 1, TaskState.RUNNING,
                       assigned_node=3),
    ]
    spec = JobSpec(job_id="j", input_path="i", output_path="o",
                   mapper_id="wordcount.map", reducer_id="wordcount.reduce")
    return JobState(spec, maps, reduces, phase)


def test_completed_map_reverts_completed_reduce_survives():
    # node 1 held both a completed map's runs and a completed reduce
    state = _state_with()
    summary = recover(state, dead_node=1, max_attempts=4)
    assert summary.reverted_completed_maps == ["map-1"]
    assert summary.reverted_completed_reduces == []
    map1 = state.task("map-1")
    assert map1.state is TaskState.PENDING
    assert map1.attempt == 1
    assert map1.result_locations is None
    assert state.task("reduce-0").state is TaskState.COMPLETED
    assert state.task("reduce-0").attempt == 0
    # lost map work while reducing: running reducers restart their shuffle
    assert state.phase is Phase.MAPPING
    assert state.task("reduce-1").state is TaskState.PENDING


def test_running_task_on_dead_node_only():
    state = _state_with(phase=Phase.MAPPING)
    state.task("map-1").state = TaskState.RUNNING
    state.task("map-1").result_locations = None
    summary = recover(state, dead_node=1, max_attempts=4)
    assert summary.reverted_running == ["map-1"]
    assert summary.reverted_completed_maps == []
    assert state.task("map-0").state is TaskState.COMPLETED
    assert state.task("map-1").attempt == 1


def test_unrelated_node_death_changes_nothing():
    state = _state_with()
    # node 3 runs reduce-1; no completed map runs live there
    summary = recover(state, dead_node=0, max_attempts=4)
    assert summary.reverted_running == []
    assert summary.reverted_completed_maps == []
    assert state.phase is Phase.REDUCING


def test_recover_attempt_cap_raises():
    state = _state_with()
    state.task("map-1").attempt = 4
    with pytest.raises(JobFailed):
        recover(state, dead_node=1, max_attempts=4)


# ---------------------------------------------------------------------------
# inject semantics at the storage/shuffle level


def test_dead_node_runs_unreadable_then_resolved():
    c = Cluster(ClusterConfig(num_nodes=3, chunk_size=1024, replication=2, seed=5))
    meta = c.put_file("in", b"alpha beta alpha\n")
    [split] = c.make_splits(meta)
    locations, _ = run_map_task(c, "j", "map-3", 0, 0, split, wordcount_map, None, 1)
    sources = [(3, "map-3", *locations[0])]
    assert [k for k, _ in shuffle_fetch(c, 0, sources)] == [
        b"alpha", b"alpha", b"beta"]

    c.mark_node_dead(0)
    with pytest.raises(ShuffleSourceLost) as exc:
        shuffle_fetch(c, 0, sources)
    assert exc.value.map_task_id == "map-3"

    # re-execution on a live node resolves the loss exactly once
    relocations, _ = run_map_task(c, "j", "map-3", 1, 1, split, wordcount_map, None, 1)
    resolved = [(3, "map-3", *relocations[0])]
    assert [k for k, _ in shuffle_fetch(c, 0, resolved)] == [
        b"alpha", b"alpha", b"beta"]


# ---------------------------------------------------------------------------
# whole-job fault tolerance


def _fresh_cluster(seed=11):
    return Cluster(ClusterConfig(num_nodes=4, chunk_size=64, replication=2,
                                 seed=seed))


def _run(plan=None, data=None, options=None):
    c = _fresh_cluster()
    c.put_file("in", data if data is not None else random_tokens(31, n=300))
    res = run_job(c, wc_spec(), options or RunOptions(executor="serial"), plan)
    return c, res


def test_empty_plan_identical_to_no_fault():
    c1, r1 = _run()
    c2, r2 = _run(plan=FailurePlan(()))
    assert [c1.get_file(p) for p in r1.report.parts] == [
        c2.get_file(p) for p in r2.report.parts]
    assert r2.report.map_attempts == r2.report.map_tasks
    assert r2.report.reduce_attempts == r2.report.reduce_tasks
    assert r2.report.re_executed_completed_maps == 0
    assert all(t["attempt"] == 0 for t in r2.report.tasks)


def test_after_task_kill_reexecutes_completed_map():
    data = random_tokens(31, n=300)
    c0, baseline = _run(data=data)
    node_of_map2 = next(
        e["node"] for e in baseline.events
        if e["event"] == "complete" and e["task"] == "map-2"
    )
    plan = FailurePlan((FailureEvent(node_id=node_of_map2, after_task="map-2"),))
    c1, res = _run(plan=plan, data=data)
    assert [c1.get_file(p) for p in res.report.parts] == [
        c0.get_file(p) for p in baseline.report.parts]
    assert res.report.re_executed_completed_maps >= 1
    assert res.report.re_executed_completed_reduces == 0
    assert any(e["event"] == "reexecute_completed_map" and e["task"] == "map-2"
               for e in res.events)
    # the re-run landed on a live node
    final_node = res.state.task("map-2").assigned_node
    assert final_node != node_of_map2


def test_tick_kill_during_reduce_phase_shuffle_lost_observed():
    data = random_tokens(31, n=300)
    c0, baseline = _run(data=data)
    # serial mode repeats the baseline timeline until the kill: reducers
    # dispatched at tick T execute during round T+1, after its injections,
    # so a kill at T+1 is observed by the already-queued reduce attempts
    reduce_tick = min(e["tick"] for e in baseline.events
                      if e["event"] == "dispatch" and e["task"].startswith("reduce-"))
    node = next(e["node"] for e in baseline.events
                if e["event"] == "complete" and e["task"].startswith("map-"))
    plan = FailurePlan((FailureEvent(node_id=node, tick=reduce_tick + 1),))
    c1, res = _run(plan=plan, data=data)
    assert [c1.get_file(p) for p in res.report.parts] == [
        c0.get_file(p) for p in baseline.report.parts]
    assert res.report.re_executed_completed_maps >= 1
    assert any(e["event"] == "shuffle_source_lost" for e in res.events)
    assert res.report.phase == "done"


@pytest.mark.parametrize("specs", [["0:1"], ["3:3"], ["1:2", "3:after:map-1"]])
def test_output_equivalence_under_fault_plans(specs):
    data = random_tokens(77, n=500)
    c0, baseline = _run(data=data)
    c1, res = _run(plan=FailurePlan.parse(specs), data=data)
    assert [c1.get_file(p) for p in res.report.parts] == [
        c0.get_file(p) for p in baseline.report.parts]
    assert res.report.phase == "done"


def test_completed_reduce_never_reverts():
    data = random_tokens(5, n=400)
    # replicas are placed on consecutive nodes, so multi-node plans kill
    # opposite nodes to keep one live replica of every chunk
    plans = [["0:1"], ["2:4"], ["1:2", "3:after:map-0"]]
    for specs in plans:
        _, res = _run(plan=FailurePlan.parse(specs), data=data)
        assert res.report.re_executed_completed_reduces == 0
        completed_at = {}
        for i, e in enumerate(res.events):
            if e["event"] == "complete" and e["task"].startswith("reduce-"):
                completed_at[e["task"]] = i
        for i, e in enumerate(res.events):
            if e["event"] == "dispatch" and e["task"] in completed_at:
                assert i < completed_at[e["task"]], (
                    f"{e['task']} dispatched after completion")


def test_losing_all_replicas_fails_job():
    c = Cluster(ClusterConfig(num_nodes=2, chunk_size=64, replication=1, seed=11))
    c.put_file("in", random_tokens(1, n=200))
    only = {node for m in [c.meta("in")] for ch in m.chunks for node in ch.replicas}
    plan = FailurePlan.parse([f"{node}:0" for node in only])
    if len(only) < 2:
        plan = FailurePlan.parse([f"{only.pop()}:0"])
    with pytest.raises(JobFailed):
        submit_job(c, wc_spec(), RunOptions(executor="serial"), plan)


def test_all_workers_dead_fails_job():
    c = _fresh_cluster()
    c.put_file("in", random_tokens(1, n=100))
    plan = FailurePlan.parse(["0:0", "1:0", "2:0", "3:0"])
    with pytest.raises(JobFailed):
        submit_job(c, wc_spec(), RunOptions(executor="serial"), plan)


def test_max_attempts_exhaustion_fails_job():
    def broken_map(offset, line):
        raise RuntimeError("boom")

    register("broken.map", broken_map)
    c = _fresh_cluster()
    c.put_file("in", b"a b c\n")
    spec = JobSpec(job_id="j", input_path="in", output_path="o",
                   mapper_id="broken.map", reducer_id="wordcount.reduce")
    with pytest.raises(JobFailed) as exc:
        submit_job(c, spec, RunOptions(executor="serial"))
    assert "attempts" in str(exc.value)
    assert exc.value.report is not None
    assert exc.value.report.phase == "failed"


def test_heartbeat_timeout_kills_stalled_worker_node():
    # force tiny timeouts; with the serial executor every node reports each
    # round, so only a node that never gets work can go overdue
    c = _fresh_cluster()
    data = random_tokens(4, n=120)
    c.put_file("in", data)
    res = run_job(
        c,
        wc_spec(),
        RunOptions(executor="serial", workers=4, heartbeat_timeout_ticks=10**6),
    )
    assert res.report.phase == "done"
