"""Worker-side task execution: map with partition/sort/combine, the
merge-sort shuffle, grouping, and reduce.

Intermediate data is stored as node-local "runs": one key-sorted,
length-prefixed binary file per (map task, partition). The shuffle is a
k-way merge of those runs; ties on equal keys break by map task index and
then emission order, which makes reducer input fully deterministic.
"""

from __future__ import annotations

import heapq
import itertools
import struct
from operator import itemgetter
from typing import Callable, Iterable, Iterator

from .dfs import Cluster, InputSplit
from .errors import NotFound, ShuffleSourceLost, SkipRecord
from .hashing import fnv1a64

Pair = tuple[bytes, bytes]

_LEN = struct.Struct("<II")


def write_run(sink, pairs: Iterable[Pair]) -> int:
    """Serialize pairs to a run file; returns the pair count."""
    pack = _LEN.pack
    buf = bytearray()
    count = 0
    for k, v in pairs:
        buf += pack(len(k), len(v))
        buf += k
        buf += v
        count += 1
        if len(buf) >= (1 << 20):
            sink.write(buf)
            del buf[:]
    if buf:
        sink.write(bytes(buf))
    return count


def iter_run(f, buffer_size: int = 1 << 20) -> Iterator[Pair]:
    """Stream (key, value) pairs back out of a run file."""
    unpack_from = _LEN.unpack_from
    buf = b""
    pos = 0
    while True:
        while len(buf) - pos < 8:
            chunk = f.read(buffer_size)
            if not chunk:
                if len(buf) - pos == 0:
                    return
                raise ValueError("truncated run file")
            buf = buf[pos:] + chunk
            pos = 0
        klen, vlen = unpack_from(buf, pos)
        need = 8 + klen + vlen
        while len(buf) - pos < need:
            chunk = f.read(buffer_size)
            if not chunk:
                raise ValueError("truncated run file")
            buf = buf[pos:] + chunk
            pos = 0
        yield buf[pos + 8 : pos + 8 + klen], buf[pos + 8 + klen : pos + need]
        pos += need


def run_name(job_id: str, task_id: str, attempt: int, partition: int) -> str:
    return f"runs/{job_id}/{task_id}.{attempt}.{partition}"


# ---------------------------------------------------------------------------
# Map side


def run_map_task(
    cluster: Cluster,
    job_id: str,
    task_id: str,
    attempt: int,
    node: int,
    split: InputSplit,
    mapper: Callable,
    combiner: Callable | None,
    num_reducers: int,
    spill_pairs: int = 512 * 1024,
) -> tuple[list[tuple[int, str]], int]:
    """Apply the mapper to every record of the split and leave one
    key-sorted run per partition on the executing node's local store.

    Records that the mapper rejects with SkipRecord are counted, not fatal.
    Returns (per-partition (node, run name) locations, skipped records).
    """
    store = cluster.store
    part_cache: dict[bytes, int] = {}
    skipped = 0

    if combiner is not None:
        # Pre-aggregation: group values per (partition, key) in emission
        # order, sort keys, apply the combiner once per group. Produces the
        # same bytes as sorting raw pairs first, since a stable sort also
        # leaves each key's values in emission order.
        groups: list[dict[bytes, list[bytes]]] = [{} for _ in range(num_reducers)]
        for offset, line in cluster.read_split(split):
            try:
                pairs = mapper(offset, line)
            except SkipRecord:
                skipped += 1
                continue
            for kv in pairs:
                k = kv[0]
                p = part_cache.get(k)
                if p is None:
                    p = part_cache[k] = fnv1a64(k) % num_reducers
                d = groups[p]
                vals = d.get(k)
                if vals is None:
                    d[k] = [kv[1]]
                else:
                    vals.append(kv[1])
        locations = []
        for p in range(num_reducers):
            name = run_name(job_id, task_id, attempt, p)
            d = groups[p]
            sink = store.open_local_write(node, name)
            try:
                write_run(
                    sink,
                    (out for k in sorted(d) for out in combiner(k, d[k])),
                )
            finally:
                sink.close()
            locations.append((node, name))
        return locations, skipped

    # No combiner: buffer raw pairs per partition, stable-sort by key, and
    # spill to bounded-size segment files so memory stays O(spill_pairs).
    buffers: list[list[Pair]] = [[] for _ in range(num_reducers)]
    spills: list[list[str]] = [[] for _ in range(num_reducers)]
    buffered = 0

    def spill_all():
        nonlocal buffered
        for p in range(num_reducers):
            if not buffers[p]:
                continue
            buffers[p].sort(key=itemgetter(0))
            name = f"{run_name(job_id, task_id, attempt, p)}.spill{len(spills[p])}"
            sink = store.open_local_write(node, name)
            try:
                write_run(sink, buffers[p])
            finally:
                sink.close()
            spills[p].append(name)
            buffers[p] = []
        buffered = 0

    for offset, line in cluster.read_split(split):
        try:
            pairs = mapper(offset, line)
        except SkipRecord:
            skipped += 1
            continue
        for kv in pairs:
            k = kv[0]
            p = part_cache.get(k)
            if p is None:
                p = part_cache[k] = fnv1a64(k) % num_reducers
            buffers[p].append(kv)
            buffered += 1
        if buffered >= spill_pairs:
            spill_all()

    locations = []
    for p in range(num_reducers):
        buffers[p].sort(key=itemgetter(0))
        name = run_name(job_id, task_id, attempt, p)
        sink = store.open_local_write(node, name)
        try:
            if spills[p]:
                files = [store.open_local_read(node, s) for s in spills[p]]
                try:
                    streams = [iter_run(f) for f in files] + [iter(buffers[p])]
                    write_run(sink, heapq.merge(*streams, key=itemgetter(0)))
                finally:
                    for f in files:
                        f.close()
            else:
                write_run(sink, buffers[p])
        finally:
            sink.close()
        buffers[p] = []
        for s in spills[p]:
            store.delete_local(node, s)
        locations.append((node, name))
    return locations, skipped


# ---------------------------------------------------------------------------
# Reduce side


def shuffle_fetch(
    cluster: Cluster,
    partition_index: int,
    sources: list[tuple[int, str, int, str]],
) -> Iterator[Pair]:
    """Merge the per-map-task sorted runs of one partition into a single
    key-sorted stream.

    ``sources`` is (map index, map task id, node, run name), ordered by map
    index; equal keys therefore come out in (map task index, emission order).
    A source on a dead node (or a missing run) raises ShuffleSourceLost so
    the master re-executes that map task.
    """
    del partition_index  # identified by the run names themselves
    files = []
    try:
        for _, map_task_id, node, name in sorted(sources):
            if cluster.is_node_dead(node):
                raise ShuffleSourceLost(map_task_id)
            try:
                files.append(cluster.store.open_local_read(node, name))
            except NotFound:
                raise ShuffleSourceLost(map_task_id) from None
    except Exception:
        for f in files:
            f.close()
        raise

    def merged():
        try:
            yield from heapq.merge(*(iter_run(f) for f in files), key=itemgetter(0))
        finally:
            for f in files:
                f.close()

    return merged()


def group_by_key(stream: Iterable[Pair]) -> Iterator[tuple[bytes, list[bytes]]]:
    """Group a key-sorted stream into (key, values) with values in stream
    order. Only one group is materialized at a time."""
    prev = None
    for key, grp in itertools.groupby(stream, key=itemgetter(0)):
        if prev is not None and key <= prev:
            raise AssertionError("group_by_key fed an unsorted stream")
        prev = key
        yield key, [v for _, v in grp]


def run_reduce_task(
    cluster: Cluster,
    partition_index: int,
    reducer: Callable,
    sources: list[tuple[int, str, int, str]],
    output_path: str,
    capture: bool = False,
) -> tuple[str, list[Pair] | None]:
    """Merge this partition's runs, reduce each key group in key order, and
    write the part file to the DFS."""
    stream = shuffle_fetch(cluster, partition_index, sources)
    captured: list[Pair] | None = None
    if capture:
        captured = []
        stream = _capturing(stream, captured)
    out: list[Pair] = []
    for key, values in group_by_key(stream):
        out.extend(reducer(key, values))
    part = cluster.write_output(output_path, partition_index, out)
    return part, captured


def _capturing(stream: Iterable[Pair], into: list[Pair]) -> Iterator[Pair]:
    for pair in stream:
        into.append(pair)
        yield pair
