"""Simulated distributed file system.

Files are split into equal-sized chunks, each replicated on a configurable
number of distinct nodes. Placement is a seeded round-robin so a given
(config, path) always produces the same layout. Reads fall back to any live
replica; a chunk whose replicas are all dead is unavailable. The same node
directories also hold worker-local intermediate data (map output runs),
which is lost when a node dies, unlike replicated chunk data.
"""

from __future__ import annotations

import bisect
import io
import json
import hashlib
import os
import threading
from dataclasses import dataclass
from typing import Iterator, NamedTuple

from .errors import AlreadyExists, ChunkUnavailable, InvalidConfig, NotFound
from .hashing import placement_hash


@dataclass(frozen=True)
class ClusterConfig:
    """Shape of the simulated cluster and its storage policy."""

    num_nodes: int = 4
    chunk_size: int = 16 * 1024 * 1024
    replication: int = 2
    seed: int = 42

    def __post_init__(self):
        if self.num_nodes < 1:
            raise InvalidConfig(f"num_nodes must be >= 1, got {self.num_nodes}")
        if self.chunk_size < 1:
            raise InvalidConfig(f"chunk_size must be >= 1, got {self.chunk_size}")
        if not 1 <= self.replication <= self.num_nodes:
            raise InvalidConfig(
                f"replication must be in [1, num_nodes={self.num_nodes}], "
                f"got {self.replication}"
            )

    def to_dict(self) -> dict:
        return {
            "num_nodes": self.num_nodes,
            "chunk_size": self.chunk_size,
            "replication": self.replication,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class Chunk:
    file_id: str
    index: int
    offset: int
    length: int
    replicas: tuple[int, ...]


@dataclass(frozen=True)
class FileMeta:
    path: str
    file_id: str
    size: int
    chunks: tuple[Chunk, ...]

    def to_json(self) -> str:
        return json.dumps(
            {
                "path": self.path,
                "file_id": self.file_id,
                "size": self.size,
                "chunks": [
                    {
                        "file_id": c.file_id,
                        "index": c.index,
                        "offset": c.offset,
                        "length": c.length,
                        "replicas": list(c.replicas),
                    }
                    for c in self.chunks
                ],
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "FileMeta":
        d = json.loads(text)
        chunks = tuple(
            Chunk(c["file_id"], c["index"], c["offset"], c["length"], tuple(c["replicas"]))
            for c in d["chunks"]
        )
        return cls(d["path"], d["file_id"], d["size"], chunks)


@dataclass(frozen=True)
class InputSplit:
    """A slice of a stored file destined for exactly one map task."""

    file_id: str
    split_index: int
    start: int
    end: int
    preferred_nodes: tuple[int, ...]


class Record(NamedTuple):
    offset: int
    line: bytes


def file_id_for(path: str) -> str:
    """Filesystem-safe identifier for a DFS path."""
    return hashlib.sha256(path.encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Backing stores


class MemoryStore:
    """In-process store; usable only with serial/thread execution."""

    kind = "memory"

    def __init__(self):
        self._chunks: dict[tuple[int, str, int], bytes] = {}
        self._local: dict[tuple[int, str], bytes] = {}
        self._metas: dict[str, FileMeta] = {}  # keyed by file_id
        self._dead: set[int] = set()
        self._lock = threading.Lock()

    def descriptor(self) -> None:
        return None  # cannot be reopened in another process

    # liveness
    def mark_dead(self, node: int) -> None:
        with self._lock:
            self._dead.add(node)

    def is_dead(self, node: int) -> bool:
        return node in self._dead

    # chunk data
    def write_chunk(self, node: int, file_id: str, index: int, data: bytes) -> None:
        with self._lock:
            self._chunks[(node, file_id, index)] = bytes(data)

    def read_chunk(self, node: int, file_id: str, index: int) -> bytes:
        return self._chunks[(node, file_id, index)]

    def delete_chunk(self, node: int, file_id: str, index: int) -> None:
        with self._lock:
            self._chunks.pop((node, file_id, index), None)

    # catalog
    def put_meta(self, meta: FileMeta) -> None:
        with self._lock:
            self._metas[meta.file_id] = meta

    def get_meta_by_id(self, file_id: str) -> FileMeta | None:
        return self._metas.get(file_id)

    def get_meta(self, path: str) -> FileMeta | None:
        return self._metas.get(file_id_for(path))

    def list_metas(self) -> list[FileMeta]:
        return sorted(self._metas.values(), key=lambda m: m.path)

    def delete_meta(self, file_id: str) -> None:
        with self._lock:
            self._metas.pop(file_id, None)

    # node-local data (map output runs); not replicated
    def open_local_write(self, node: int, name: str):
        store = self

        class _Sink(io.BytesIO):
            def close(inner):
                with store._lock:
                    store._local[(node, name)] = inner.getvalue()
                super().close()

        return _Sink()

    def open_local_read(self, node: int, name: str):
        try:
            return io.BytesIO(self._local[(node, name)])
        except KeyError:
            raise NotFound(f"node {node} has no local object {name!r}") from None

    def delete_local(self, node: int, name: str) -> None:
        with self._lock:
            self._local.pop((node, name), None)

    def delete_local_tree(self, node: int, prefix: str) -> None:
        with self._lock:
            for key in [k for k in self._local if k[0] == node and k[1].startswith(prefix)]:
                del self._local[key]


class DiskStore:
    """On-disk store; layout is ``<root>/node<N>/<file_id>.<chunk_index>``
    for chunk replicas, ``<root>/meta/<file_id>.json`` for the catalog, and
    ``<root>/node<N>/local/...`` for node-local intermediate data. A
    ``<root>/node<N>/DEAD`` marker makes every read from that node fail,
    including from concurrently running worker processes."""

    kind = "disk"

    def __init__(self, root: str):
        self.root = os.path.abspath(root)
        os.makedirs(os.path.join(self.root, "meta"), exist_ok=True)

    def descriptor(self) -> dict:
        return {"kind": "disk", "root": self.root}

    def _node_dir(self, node: int) -> str:
        return os.path.join(self.root, f"node{node}")

    def _atomic_write(self, path: str, data: bytes) -> None:
        tmp = path + f".tmp{os.getpid()}"
        with open(tmp, "wb") as f:
            f.write(data)
        os.replace(tmp, path)

    # liveness
    def mark_dead(self, node: int) -> None:
        d = self._node_dir(node)
        os.makedirs(d, exist_ok=True)
        with open(os.path.join(d, "DEAD"), "w"):
            pass

    def is_dead(self, node: int) -> bool:
        return os.path.exists(os.path.join(self._node_dir(node), "DEAD"))

    # chunk data
    def _chunk_path(self, node: int, file_id: str, index: int) -> str:
        return os.path.join(self._node_dir(node), f"{file_id}.{index}")

    def write_chunk(self, node: int, file_id: str, index: int, data: bytes) -> None:
        os.makedirs(self._node_dir(node), exist_ok=True)
        self._atomic_write(self._chunk_path(node, file_id, index), data)

    def read_chunk(self, node: int, file_id: str, index: int) -> bytes:
        with open(self._chunk_path(node, file_id, index), "rb") as f:
            return f.read()

    def delete_chunk(self, node: int, file_id: str, index: int) -> None:
        try:
            os.remove(self._chunk_path(node, file_id, index))
        except FileNotFoundError:
            pass

    # catalog
    def _meta_path(self, file_id: str) -> str:
        return os.path.join(self.root, "meta", f"{file_id}.json")

    def put_meta(self, meta: FileMeta) -> None:
        self._atomic_write(self._meta_path(meta.file_id), meta.to_json().encode())

    def get_meta_by_id(self, file_id: str) -> FileMeta | None:
        try:
            with open(self._meta_path(file_id), "r") as f:
                return FileMeta.from_json(f.read())
        except FileNotFoundError:
            return None

    def get_meta(self, path: str) -> FileMeta | None:
        return self.get_meta_by_id(file_id_for(path))

    def list_metas(self) -> list[FileMeta]:
        metas = []
        for name in os.listdir(os.path.join(self.root, "meta")):
            if name.endswith(".json"):
                with open(os.path.join(self.root, "meta", name), "r") as f:
                    metas.append(FileMeta.from_json(f.read()))
        return sorted(metas, key=lambda m: m.path)

    def delete_meta(self, file_id: str) -> None:
        try:
            os.remove(self._meta_path(file_id))
        except FileNotFoundError:
            pass

    # node-local data
    def _local_path(self, node: int, name: str) -> str:
        return os.path.join(self._node_dir(node), "local", *name.split("/"))

    def open_local_write(self, node: int, name: str):
        path = self._local_path(node, name)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        tmp = path + f".tmp{os.getpid()}"
        f = open(tmp, "wb")
        orig_close = f.close

        def close():
            orig_close()
            os.replace(tmp, path)

        f.close = close  # type: ignore[method-assign]
        return f

    def open_local_read(self, node: int, name: str):
        try:
            return open(self._local_path(node, name), "rb")
        except FileNotFoundError:
            raise NotFound(f"node {node} has no local object {name!r}") from None

    def delete_local(self, node: int, name: str) -> None:
        try:
            os.remove(self._local_path(node, name))
        except FileNotFoundError:
            pass

    def delete_local_tree(self, node: int, prefix: str) -> None:
        import shutil

        path = self._local_path(node, prefix)
        if os.path.isfile(path):
            os.remove(path)
        else:
            shutil.rmtree(path, ignore_errors=True)


def open_store(descriptor: dict | None):
    if descriptor is None or descriptor.get("kind") != "disk":
        raise InvalidConfig("only disk-backed stores can be reopened from a descriptor")
    return DiskStore(descriptor["root"])


# ---------------------------------------------------------------------------
# Cluster: config + store + liveness


_CONFIG_FILE = "cluster.json"


class Cluster:
    """A simulated cluster: storage nodes plus the file catalog."""

    def __init__(self, config: ClusterConfig, store=None):
        self.config = config
        self.store = store if store is not None else MemoryStore()

    # -- construction ------------------------------------------------------

    @classmethod
    def open_disk(cls, root: str, config: ClusterConfig | None = None) -> "Cluster":
        """Open (or create) a disk-backed cluster rooted at ``root``.

        The cluster config is persisted alongside the data; reopening with a
        conflicting explicit config is an error, since placement and chunking
        of already-stored files depend on it.
        """
        os.makedirs(root, exist_ok=True)
        cfg_path = os.path.join(root, _CONFIG_FILE)
        if os.path.exists(cfg_path):
            with open(cfg_path, "r") as f:
                stored = ClusterConfig(**json.load(f))
            if config is not None and config != stored:
                raise InvalidConfig(
                    f"store at {root!r} was created with {stored.to_dict()}, "
                    f"which conflicts with {config.to_dict()}"
                )
            config = stored
        else:
            config = config if config is not None else ClusterConfig()
            with open(cfg_path, "w") as f:
                json.dump(config.to_dict(), f)
        return cls(config, DiskStore(root))

    def descriptor(self) -> dict:
        d = self.store.descriptor()
        if d is None:
            return {"kind": "memory", "cluster": self}
        d["config"] = self.config.to_dict()
        return d

    @classmethod
    def from_descriptor(cls, desc: dict) -> "Cluster":
        if desc.get("kind") == "memory":
            return desc["cluster"]
        return cls(ClusterConfig(**desc["config"]), open_store(desc))

    # -- liveness ----------------------------------------------------------

    def mark_node_dead(self, node: int) -> None:
        if not 0 <= node < self.config.num_nodes:
            raise InvalidConfig(f"node {node} out of range")
        self.store.mark_dead(node)

    def is_node_dead(self, node: int) -> bool:
        return self.store.is_dead(node)

    def live_nodes(self) -> list[int]:
        return [n for n in range(self.config.num_nodes) if not self.store.is_dead(n)]

    # -- file operations ---------------------------------------------------

    def put_file(self, path: str, data: bytes, overwrite: bool = False) -> FileMeta:
        """Store ``data`` under ``path`` as replicated equal-sized chunks."""
        old = self.store.get_meta(path)
        if old is not None and not overwrite:
            raise AlreadyExists(f"path {path!r} is already stored")

        cs = self.config.chunk_size
        live = self.live_nodes()
        fid = file_id_for(path)
        h = placement_hash(self.config.seed, path)
        n_chunks = (len(data) + cs - 1) // cs
        chunks = []
        for i in range(n_chunks):
            if not live:
                raise ChunkUnavailable(i, path)
            replication = min(self.config.replication, len(live))
            start = (h + i) % len(live)
            replicas = tuple(live[(start + j) % len(live)] for j in range(replication))
            piece = data[i * cs : (i + 1) * cs]
            for node in replicas:
                self.store.write_chunk(node, fid, i, piece)
            chunks.append(Chunk(fid, i, i * cs, len(piece), replicas))
        meta = FileMeta(path, fid, len(data), tuple(chunks))
        self.store.put_meta(meta)
        if old is not None:
            # drop replicas the new layout no longer references
            kept = {(c.index, n) for c in chunks for n in c.replicas}
            for c in old.chunks:
                for node in c.replicas:
                    if (c.index, node) not in kept:
                        self.store.delete_chunk(node, fid, c.index)
        return meta

    def meta(self, path: str) -> FileMeta:
        m = self.store.get_meta(path)
        if m is None:
            raise NotFound(f"path {path!r} not found")
        return m

    def meta_by_id(self, file_id: str) -> FileMeta:
        m = self.store.get_meta_by_id(file_id)
        if m is None:
            raise NotFound(f"file id {file_id!r} not found")
        return m

    def exists(self, path: str) -> bool:
        return self.store.get_meta(path) is not None

    def list_files(self, prefix: str = "") -> list[FileMeta]:
        return [m for m in self.store.list_metas() if m.path.startswith(prefix)]

    def _read_chunk_live(self, chunk: Chunk, path: str) -> bytes:
        for node in chunk.replicas:
            if not self.store.is_dead(node):
                return self.store.read_chunk(node, chunk.file_id, chunk.index)
        raise ChunkUnavailable(chunk.index, path)

    def get_file(self, path: str) -> bytes:
        """Reassemble the file from any live replica of each chunk."""
        meta = self.meta(path)
        return b"".join(self._read_chunk_live(c, path) for c in meta.chunks)

    def read_range(self, meta: FileMeta, start: int, end: int) -> bytes:
        """Bytes of ``meta``'s file in [start, end), clamped to file size."""
        start = max(0, start)
        end = min(meta.size, end)
        if start >= end:
            return b""
        offsets = [c.offset for c in meta.chunks]
        ci = bisect.bisect_right(offsets, start) - 1
        parts = []
        pos = start
        while pos < end:
            c = meta.chunks[ci]
            data = self._read_chunk_live(c, meta.path)
            lo = pos - c.offset
            hi = min(end - c.offset, c.length)
            parts.append(data[lo:hi])
            pos = c.offset + hi
            ci += 1
        return b"".join(parts)

    # -- splits and records ------------------------------------------------

    def make_splits(self, meta: FileMeta) -> list[InputSplit]:
        """One split per chunk; preferred nodes are the chunk's replicas."""
        return [
            InputSplit(meta.file_id, c.index, c.offset, c.offset + c.length, c.replicas)
            for c in meta.chunks
        ]

    def read_split(self, split: InputSplit) -> Iterator[Record]:
        """Records whose first byte lies in [start, end).

        A record spanning the split's end is read to completion here and
        skipped by the next split, so every record is owned by exactly one
        split. The first byte of ``start`` belongs to a record iff the
        previous byte is a newline (or start == 0); otherwise the tail of
        the previous split's record is skipped.
        """
        meta = self.meta_by_id(split.file_id)
        if split.start >= meta.size:
            return
        if split.start == 0:
            yield from self._records(meta, 0, split.end)
        elif self.read_range(meta, split.start - 1, split.start) == b"\n":
            yield from self._records(meta, split.start, split.end)
        else:
            yield from self._records(meta, split.start, split.end, skip_first=True)

    def _records(self, meta: FileMeta, pos: int, stop: int,
                 skip_first: bool = False) -> Iterator[Record]:
        """Scan records from ``pos``, yielding those starting before ``stop``.

        With ``skip_first`` the scan discards everything up to and including
        the first newline (the tail of a record owned by an earlier split).
        """
        size = meta.size
        chunks = meta.chunks
        offsets = [c.offset for c in chunks]
        ci = bisect.bisect_right(offsets, pos) - 1

        buf = b""
        buf_off = pos  # buf covers file[buf_off : buf_off + len(buf)]
        fetched = pos  # next absolute offset to fetch into buf
        scan = pos  # absolute offset where the newline search resumes
        cur = pos  # absolute start of the record being assembled
        skipping = skip_first

        while True:
            nl = buf.find(b"\n", scan - buf_off)
            if nl == -1:
                scan = fetched
                if fetched >= size:
                    if not skipping and cur < stop and cur < size:
                        yield Record(cur, buf[cur - buf_off :])
                    return
                c = chunks[ci]
                if c.offset + c.length <= fetched:
                    ci += 1
                    c = chunks[ci]
                data = self._read_chunk_live(c, meta.path)
                buf += data[fetched - c.offset :]
                fetched = c.offset + c.length
                continue
            if skipping:
                skipping = False
            else:
                yield Record(cur, buf[cur - buf_off : nl])
            cur = buf_off + nl + 1
            scan = cur
            if cur >= stop or cur >= size:
                return
            # amortized-linear trim of the consumed prefix
            if (cur - buf_off) * 2 > len(buf):
                buf = buf[cur - buf_off :]
                buf_off = cur

    # -- reducer output ----------------------------------------------------

    def write_output(self, output_dir: str, partition_index: int,
                     pairs: list[tuple[bytes, bytes]]) -> str:
        """Write one reducer's part file; rewrites from retried attempts
        replace the previous content atomically."""
        path = part_file_path(output_dir, partition_index)
        data = b"".join(k + b"\t" + v + b"\n" for k, v in pairs)
        self.put_file(path, data, overwrite=True)
        return path


def part_file_path(output_dir: str, partition_index: int) -> str:
    return f"{output_dir.rstrip('/')}/part-r-{partition_index:05d}"
