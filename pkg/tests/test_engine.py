"""Engine core: partitioning, scheduling, map/shuffle/reduce, job runs."""

import random

import pytest
from hypothesis import given, settings, strategies as st

from minimapred import (
    Cluster,
    ClusterConfig,
    InputSplit,
    InvalidConfig,
    JobSpec,
    RunOptions,
    TaskState,
    UnknownFunction,
    UnknownInput,
    register,
    run_job,
    submit_job,
)
from minimapred.hashing import fnv1a64, partition_for_key
from minimapred.schedule import plan_map_tasks, plan_reduce_tasks, schedule
from minimapred.tasks import (
    group_by_key,
    iter_run,
    run_map_task,
    run_reduce_task,
    shuffle_fetch,
    write_run,
)
from minimapred.jobs import wordcount_combine, wordcount_map, wordcount_reduce

import oracles


# ---------------------------------------------------------------------------
# partition function


def test_fnv1a64_known_vectors():
    # reference vectors from the FNV test suite
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


def test_partition_r1_always_zero():
    for key in (b"", b"a", b"some longer key"):
        assert partition_for_key(key, 1) == 0


def test_partition_is_pure():
    assert partition_for_key(b"k", 7) == partition_for_key(b"k", 7)


def test_partition_spread_on_random_keys():
    rng = random.Random(1234)
    keys = {bytes(rng.randrange(256) for _ in range(12)) for _ in range(11000)}
    keys = list(keys)[:10000]
    counts = [0, 0, 0, 0]
    for k in keys:
        counts[partition_for_key(k, 4)] += 1
    assert all(c >= 0.15 * len(keys) for c in counts)


# ---------------------------------------------------------------------------
# scheduling


def mk_map_task(index, preferred):
    split = InputSplit("fid", index, 0, 1, tuple(preferred))
    return plan_map_tasks([split])[0]


def test_locality_preferred_node_chosen():
    task = mk_map_task(0, [2])
    assert schedule([task], [1, 2]) == [(task, 2)]


def test_fallback_to_lowest_idle_when_preferred_busy():
    task = mk_map_task(0, [2])
    assert schedule([task], [3]) == [(task, 3)]


def test_two_tasks_one_node_lower_task_id_first():
    t0, t1 = mk_map_task(0, [1]), mk_map_task(1, [1])
    assert schedule([t1, t0], [1]) == [(t0, 1)]


def test_first_listed_replica_preferred():
    task = mk_map_task(0, [3, 0])
    assert schedule([task], [0, 3]) == [(task, 3)]


def test_reduce_tasks_have_no_locality():
    tasks = plan_reduce_tasks(2)
    got = schedule(tasks, [5, 2, 4])
    assert got == [(tasks[0], 2), (tasks[1], 4)]


@settings(max_examples=100, deadline=None)
@given(preferred=st.lists(st.integers(0, 9), min_size=1, max_size=4, unique=True),
       idle=st.lists(st.integers(0, 9), min_size=1, max_size=10, unique=True))
def test_locality_whenever_a_preferred_node_is_idle(preferred, idle):
    task = mk_map_task(0, preferred)
    [(got_task, node)] = schedule([task], idle)
    assert got_task is task
    if set(preferred) & set(idle):
        assert node in preferred
    else:
        assert node == min(idle)


def test_plan_map_tasks_one_per_split():
    splits = [InputSplit("fid", i, i * 10, (i + 1) * 10, (i % 3,)) for i in range(3)]
    tasks = plan_map_tasks(splits)
    assert [t.task_id for t in tasks] == ["map-0", "map-1", "map-2"]
    assert all(t.state is TaskState.PENDING and t.attempt == 0 for t in tasks)
    assert [t.payload.preferred_nodes for t in tasks] == [(0,), (1,), (2,)]
    assert plan_map_tasks([]) == []


# ---------------------------------------------------------------------------
# run files and map tasks


def test_run_file_roundtrip(small_cluster):
    pairs = [(b"k1", b"v1"), (b"", b""), (b"key", b"x" * 1000)]
    sink = small_cluster.store.open_local_write(0, "runs/t/x")
    write_run(sink, pairs)
    sink.close()
    with small_cluster.store.open_local_read(0, "runs/t/x") as f:
        assert list(iter_run(f, buffer_size=7)) == pairs


def _single_line_cluster(line: bytes):
    c = Cluster(ClusterConfig(num_nodes=2, chunk_size=8192, replication=1, seed=3))
    meta = c.put_file("in", line)
    [split] = c.make_splits(meta)
    return c, split


def read_run_pairs(cluster, node, name):
    with cluster.store.open_local_read(node, name) as f:
        return list(iter_run(f))


def test_map_task_sorts_within_partition():
    c, split = _single_line_cluster(b"Algorithm Accent Ajax Algorithm")
    locations, skipped = run_map_task(
        c, "j", "map-0", 0, 0, split, wordcount_map, None, 1)
    assert skipped == 0
    assert read_run_pairs(c, *locations[0]) == [
        (b"Accent", b"1"),
        (b"Ajax", b"1"),
        (b"Algorithm", b"1"),
        (b"Algorithm", b"1"),
    ]


def test_map_task_combiner_pre_aggregates():
    c, split = _single_line_cluster(b"Algorithm Accent Ajax Algorithm")
    locations, _ = run_map_task(
        c, "j", "map-0", 0, 0, split, wordcount_map, wordcount_combine, 1)
    assert read_run_pairs(c, *locations[0]) == [
        (b"Accent", b"1"),
        (b"Ajax", b"1"),
        (b"Algorithm", b"2"),
    ]


def test_map_task_empty_split_leaves_empty_runs():
    c = Cluster(ClusterConfig(num_nodes=2, chunk_size=8, replication=1, seed=3))
    meta = c.put_file("in", b"ignored1\nowned2\n")
    split = c.make_splits(meta)[1]  # starts exactly at "owned2"
    empty = InputSplit(meta.file_id, 5, meta.size, meta.size, (0,))
    locations, skipped = run_map_task(
        c, "j", "map-5", 0, 0, empty, wordcount_map, None, 3)
    assert skipped == 0
    assert len(locations) == 3
    for node, name in locations:
        assert read_run_pairs(c, node, name) == []


def test_map_task_spills_produce_identical_runs():
    line = " ".join(f"w{i % 17:02d}" for i in range(500)).encode()
    c1, s1 = _single_line_cluster(line)
    c2, s2 = _single_line_cluster(line)
    big, _ = run_map_task(c1, "j", "map-0", 0, 0, s1, wordcount_map, None, 2,
                          spill_pairs=10**9)
    small, _ = run_map_task(c2, "j", "map-0", 0, 0, s2, wordcount_map, None, 2,
                            spill_pairs=64)
    for (n1, r1), (n2, r2) in zip(big, small):
        assert read_run_pairs(c1, n1, r1) == read_run_pairs(c2, n2, r2)


def test_stable_sort_keeps_emission_order_for_equal_keys():
    def emitter(offset, line):
        return [(b"k", str(i).encode()) for i in range(5)]

    c, split = _single_line_cluster(b"one-line")
    locations, _ = run_map_task(c, "j", "map-0", 0, 0, split, emitter, None, 1)
    values = [v for _, v in read_run_pairs(c, *locations[0])]
    assert values == [b"0", b"1", b"2", b"3", b"4"]


# ---------------------------------------------------------------------------
# shuffle and grouping


def _put_run(cluster, node, name, pairs):
    sink = cluster.store.open_local_write(node, name)
    write_run(sink, pairs)
    sink.close()


def test_shuffle_merges_sorted_runs(small_cluster):
    c = small_cluster
    _put_run(c, 0, "runs/j/map-0.0.0", [(b"a", b"1"), (b"c", b"1")])
    _put_run(c, 1, "runs/j/map-1.0.0", [(b"b", b"1")])
    sources = [(0, "map-0", 0, "runs/j/map-0.0.0"), (1, "map-1", 1, "runs/j/map-1.0.0")]
    assert list(shuffle_fetch(c, 0, sources)) == [
        (b"a", b"1"), (b"b", b"1"), (b"c", b"1")]


def test_shuffle_ties_break_by_map_index(small_cluster):
    c = small_cluster
    _put_run(c, 0, "r0", [(b"k", b"from-map0")])
    _put_run(c, 1, "r1", [(b"k", b"from-map1")])
    # source list order must not matter, only the map index
    sources = [(1, "map-1", 1, "r1"), (0, "map-0", 0, "r0")]
    assert [v for _, v in shuffle_fetch(c, 0, sources)] == [b"from-map0", b"from-map1"]


def test_shuffle_multiset_preserved(small_cluster):
    rng = random.Random(5)
    c = small_cluster
    emitted = []
    sources = []
    for i in range(4):
        pairs = sorted(
            ((bytes([rng.randrange(97, 105)]), str(rng.randrange(10)).encode())
             for _ in range(50)),
            key=lambda kv: kv[0],
        )
        emitted.extend(pairs)
        _put_run(c, i % 4, f"r{i}", pairs)
        sources.append((i, f"map-{i}", i % 4, f"r{i}"))
    merged = list(shuffle_fetch(c, 0, sources))
    assert sorted(merged) == sorted(emitted)
    assert [k for k, _ in merged] == sorted(k for k, _ in emitted)


def test_group_by_key_examples():
    stream = [(b"a", b"1"), (b"a", b"2"), (b"b", b"3")]
    assert list(group_by_key(stream)) == [(b"a", [b"1", b"2"]), (b"b", [b"3"])]
    assert list(group_by_key([])) == []
    singles = [(bytes([k]), b"v") for k in range(97, 105)]
    assert [len(vs) for _, vs in group_by_key(singles)] == [1] * 8


def test_group_by_key_rejects_unsorted_stream():
    with pytest.raises(AssertionError):
        list(group_by_key([(b"b", b"1"), (b"a", b"2")]))


def test_reduce_task_writes_part(small_cluster):
    c = small_cluster
    _put_run(c, 0, "r", [(b"a", b"1"), (b"a", b"2")])
    part, _ = run_reduce_task(c, 0, wordcount_reduce, [(0, "map-0", 0, "r")], "out")
    assert part == "out/part-r-00000"
    assert c.get_file(part) == b"a\t3\n"


def test_reduce_task_zero_groups_empty_part(small_cluster):
    part, _ = run_reduce_task(small_cluster, 1, wordcount_reduce, [], "out")
    assert small_cluster.get_file("out/part-r-00001") == b""


# ---------------------------------------------------------------------------
# whole jobs


def wc_spec(combiner=True, reducers=2, out="out", job_id="wc"):
    return JobSpec(
        job_id=job_id,
        input_path="in",
        output_path=out,
        mapper_id="wordcount.map",
        reducer_id="wordcount.reduce",
        combiner_id="wordcount.combine" if combiner else None,
        num_reducers=reducers,
    )


def random_tokens(seed, n=400, vocab=40):
    rng = random.Random(seed)
    words = [f"word{i:03d}" for i in range(vocab)]
    lines = []
    while n > 0:
        k = rng.randrange(0, 9)
        lines.append(" ".join(rng.choice(words) for _ in range(min(k, n))))
        n -= k
    return ("\n".join(lines) + "\n").encode()


@pytest.mark.parametrize("reducers", [1, 3])
def test_wordcount_matches_oracle(small_cluster, reducers):
    data = random_tokens(21)
    small_cluster.put_file("in", data)
    res = run_job(small_cluster, wc_spec(reducers=reducers),
                  RunOptions(executor="serial"))
    got = oracles.parse_parts(small_cluster, res.report.parts)
    assert got == {k: str(v).encode() for k, v in oracles.wordcount(data).items()}


def test_empty_input_produces_empty_parts(small_cluster):
    small_cluster.put_file("in", b"")
    res = run_job(small_cluster, wc_spec(reducers=3), RunOptions(executor="serial"))
    assert res.report.phase == "done"
    assert res.report.map_tasks == 0 and res.report.map_attempts == 0
    assert len(res.report.parts) == 3
    for p in res.report.parts:
        assert small_cluster.get_file(p) == b""


def test_same_seed_same_part_bytes():
    data = random_tokens(9)

    def one_run():
        c = Cluster(ClusterConfig(num_nodes=4, chunk_size=64, replication=2, seed=11))
        c.put_file("in", data)
        report = submit_job(c, wc_spec(), RunOptions(executor="serial"))
        return [c.get_file(p) for p in report.parts]

    assert one_run() == one_run()


def test_output_identical_across_executors(tmp_path):
    data = random_tokens(13)
    outputs = {}
    for executor in ("serial", "threads", "processes"):
        c = Cluster.open_disk(
            str(tmp_path / executor),
            ClusterConfig(num_nodes=4, chunk_size=64, replication=2, seed=11),
        )
        c.put_file("in", data)
        report = submit_job(c, wc_spec(), RunOptions(executor=executor))
        outputs[executor] = [c.get_file(p) for p in report.parts]
    assert outputs["serial"] == outputs["threads"] == outputs["processes"]


def test_phase_barrier_no_reduce_before_maps_done(small_cluster):
    small_cluster.put_file("in", random_tokens(3))
    res = run_job(small_cluster, wc_spec(), RunOptions(executor="serial"))
    maps_done_at = max(
        i for i, e in enumerate(res.events)
        if e["event"] == "complete" and e["task"].startswith("map-")
    )
    first_reduce_dispatch = min(
        i for i, e in enumerate(res.events)
        if e["event"] == "dispatch" and e["task"].startswith("reduce-")
    )
    assert first_reduce_dispatch > maps_done_at


def test_exactly_once_capture_matches_mapper_emissions(small_cluster):
    data = random_tokens(17)
    small_cluster.put_file("in", data)
    res = run_job(
        small_cluster,
        wc_spec(combiner=False, reducers=3),
        RunOptions(executor="serial", capture_reduce_inputs=True),
    )
    pooled = sorted(pair for pairs in res.reduce_inputs.values() for pair in pairs)
    expected = sorted(
        pair
        for offset, line in oracles.records_with_offsets(data)
        for pair in wordcount_map(offset, line)
    )
    assert pooled == expected


def test_unknown_input_and_function(small_cluster):
    with pytest.raises(UnknownInput):
        submit_job(small_cluster, wc_spec(), RunOptions(executor="serial"))
    small_cluster.put_file("in", b"x\n")
    bad = JobSpec(job_id="j", input_path="in", output_path="o",
                  mapper_id="missing.map", reducer_id="wordcount.reduce")
    with pytest.raises(UnknownFunction):
        submit_job(small_cluster, bad, RunOptions(executor="serial"))


def test_undeclared_combiner_rejected(small_cluster):
    register("sneaky.combine", lambda k, vs: [(k, vs[0])])  # not combiner_safe
    small_cluster.put_file("in", b"x\n")
    spec = JobSpec(job_id="j", input_path="in", output_path="o",
                   mapper_id="wordcount.map", reducer_id="wordcount.reduce",
                   combiner_id="sneaky.combine")
    with pytest.raises(InvalidConfig):
        submit_job(small_cluster, spec, RunOptions(executor="serial"))


def test_workers_bounded_by_nodes(small_cluster):
    small_cluster.put_file("in", b"x\n")
    with pytest.raises(InvalidConfig):
        submit_job(small_cluster, wc_spec(), RunOptions(workers=9, executor="serial"))


def test_processes_require_disk_store(small_cluster):
    small_cluster.put_file("in", b"x\n")
    with pytest.raises(InvalidConfig):
        submit_job(small_cluster, wc_spec(), RunOptions(executor="processes"))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), reducers=st.integers(1, 4),
       chunk=st.integers(8, 200))
def test_wordcount_oracle_equivalence_property(seed, reducers, chunk):
    data = random_tokens(seed, n=120)
    c = Cluster(ClusterConfig(num_nodes=3, chunk_size=chunk, replication=2, seed=1))
    c.put_file("in", data)
    report = submit_job(c, wc_spec(reducers=reducers), RunOptions(executor="serial"))
    got = oracles.parse_parts(c, report.parts)
    expected = oracles.sequential_mapreduce(data, wordcount_map, wordcount_reduce)
    assert got == expected
