"""The two built-in jobs: word frequency counting and per-source-IP revenue
aggregation over pipe-delimited user-visit records.

Mappers take (byte offset, line bytes) and return a list of (key, value)
byte pairs; reducers and combiners take (key, ordered value list) and return
a list of output pairs. Counts are serialized as decimal text, revenue sums
as shortest round-trip decimals, so outputs are byte-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .dfs import Cluster, FileMeta
from .errors import SkipRecord
from .registry import register

ONE = b"1"


# ---------------------------------------------------------------------------
# wordcount


def tokenize(line: bytes) -> list[bytes]:
    """Maximal runs of non-whitespace bytes; case-sensitive, punctuation
    kept."""
    return line.split()


def wordcount_map(offset: int, line: bytes) -> list[tuple[bytes, bytes]]:
    """One (token, 1) pair per token occurrence, in order of appearance."""
    del offset
    return [(token, ONE) for token in line.split()]


def wordcount_reduce(key: bytes, values: list[bytes]) -> list[tuple[bytes, bytes]]:
    try:
        total = sum(map(int, values))
    except ValueError:
        bad = next(v for v in values if not v.strip(b"-").isdigit())
        raise ValueError(
            f"count {bad!r} for token {key!r} is not an integer"
        ) from None
    return [(key, str(total).encode())]


# summing integer counts is associative and commutative, so the reducer
# doubles as the combiner
wordcount_combine = wordcount_reduce


# ---------------------------------------------------------------------------
# uservisits

_FIELD_LIMITS = (16, 100, None, 64, 32, None)  # max chars per column


@dataclass(frozen=True)
class UserVisitRecord:
    source_ip: str
    dest_ip: str
    revenue: float
    user_agent: str
    search_word: str
    duration: int

    def __post_init__(self):
        for value, limit in zip(
            (self.source_ip, self.dest_ip, None, self.user_agent, self.search_word),
            _FIELD_LIMITS,
        ):
            if limit is not None and len(value) > limit:
                raise ValueError(f"field {value!r} exceeds {limit} chars")
        if not (math.isfinite(self.revenue) and self.revenue >= 0):
            raise ValueError(f"revenue {self.revenue!r} must be finite and >= 0")

    def to_line(self) -> bytes:
        return "|".join(
            (
                self.source_ip,
                self.dest_ip,
                f"{self.revenue:.2f}",
                self.user_agent,
                self.search_word,
                str(self.duration),
            )
        ).encode()

    @classmethod
    def from_line(cls, line: bytes) -> "UserVisitRecord":
        fields = line.decode().split("|")
        if len(fields) != 6:
            raise ValueError(f"expected 6 fields, got {len(fields)}")
        return cls(
            source_ip=fields[0],
            dest_ip=fields[1],
            revenue=float(fields[2]),
            user_agent=fields[3],
            search_word=fields[4],
            duration=int(fields[5]),
        )


def uservisits_map(offset: int, line: bytes) -> list[tuple[bytes, bytes]]:
    """Emit (source IP, revenue) from a pipe-delimited visit record.

    Malformed lines (fewer than 3 fields, or a revenue column that is not a
    finite number) are skipped and counted rather than failing the job.
    """
    del offset
    fields = line.split(b"|")
    if len(fields) < 3:
        raise SkipRecord("fewer than 3 fields")
    try:
        revenue = float(fields[2])
    except ValueError:
        raise SkipRecord("revenue does not parse") from None
    if not math.isfinite(revenue):
        raise SkipRecord("revenue is not finite")
    return [(fields[0], repr(revenue).encode())]


def uservisits_reduce(key: bytes, values: list[bytes]) -> list[tuple[bytes, bytes]]:
    """Left-to-right sum over the (deterministic) shuffle order."""
    total = 0.0
    for v in values:
        total += float(v)
    return [(key, repr(total).encode())]


# Partial sums reorder float additions, so a combined run is only equal to
# the uncombined one up to rounding; this combiner is opt-in "approximate"
# mode and is not set on uservisits jobs by default.
uservisits_combine = uservisits_reduce


# ---------------------------------------------------------------------------
# synthetic uservisits data

_IP_POOL_SIZE = 211  # prime, small enough that keys repeat within a few rows
_AGENTS = tuple(f"Mozilla/5.0 (agent-{i:02d})" for i in range(20))
_WORDS = tuple(f"keyword{i:03d}" for i in range(50))


def uservisits_lines(rows: int, seed: int) -> bytes:
    """Deterministic pipe-delimited visit rows, one per line."""
    import random

    rng = random.Random(seed)
    pool = [f"10.{i // 256}.{i % 256}.{rng.randrange(256)}" for i in range(_IP_POOL_SIZE)]
    out = []
    for i in range(rows):
        ip = pool[rng.randrange(_IP_POOL_SIZE)]
        dest = f"dest-{rng.randrange(500):03d}.example.com/page-{rng.randrange(10000):04d}"
        revenue = rng.randrange(0, 50000) / 100.0
        agent = _AGENTS[rng.randrange(len(_AGENTS))]
        word = _WORDS[rng.randrange(len(_WORDS))]
        duration = rng.randrange(0, 36000)
        out.append(f"{ip}|{dest}|{revenue:.2f}|{agent}|{word}|{duration}\n")
    return "".join(out).encode()


def generate_uservisits(cluster: Cluster, path: str, rows: int, seed: int) -> FileMeta:
    """Generate and store a synthetic uservisits table in the DFS."""
    return cluster.put_file(path, uservisits_lines(rows, seed))


# ---------------------------------------------------------------------------

register("wordcount.map", wordcount_map)
register("wordcount.reduce", wordcount_reduce)
register("wordcount.combine", wordcount_combine, combiner_safe=True)
register("uservisits.map", uservisits_map)
register("uservisits.reduce", uservisits_reduce)
register("uservisits.combine", uservisits_combine, combiner_safe=True)
