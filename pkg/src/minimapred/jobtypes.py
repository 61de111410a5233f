"""Job, task and report types shared by the master, workers and CLI."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

from .dfs import InputSplit
from .errors import InvalidConfig

MAX_TASK_ATTEMPTS = 4


@dataclass(frozen=True)
class JobSpec:
    """What to run: input, output, registered function ids, reducer count."""

    job_id: str
    input_path: str
    output_path: str
    mapper_id: str
    reducer_id: str
    combiner_id: str | None = None
    num_reducers: int = 1

    def __post_init__(self):
        if self.num_reducers < 1:
            raise InvalidConfig(f"num_reducers must be >= 1, got {self.num_reducers}")


class TaskState(enum.Enum):
    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass
class TaskDescriptor:
    """Master-side bookkeeping for one map or reduce task.

    ``attempt`` counts re-assignments: 0 for a task that ran (or will run)
    once, +1 every time the task is sent back to pending after a failure or
    a lost result. For completed map tasks ``result_locations`` holds one
    (node, run name) pair per reduce partition.
    """

    task_id: str
    kind: str  # "map" | "reduce"
    payload: InputSplit | int
    state: TaskState = TaskState.PENDING
    attempt: int = 0
    assigned_node: int | None = None
    result_locations: list[tuple[int, str]] | None = None

    @property
    def index(self) -> int:
        return int(self.task_id.rsplit("-", 1)[1])


class Phase(enum.Enum):
    MAPPING = "mapping"
    REDUCING = "reducing"
    DONE = "done"
    FAILED = "failed"


@dataclass
class JobState:
    spec: JobSpec
    map_tasks: list[TaskDescriptor]
    reduce_tasks: list[TaskDescriptor]
    phase: Phase = Phase.MAPPING

    def task(self, task_id: str) -> TaskDescriptor:
        kind = task_id.split("-", 1)[0]
        tasks = self.map_tasks if kind == "map" else self.reduce_tasks
        for t in tasks:
            if t.task_id == task_id:
                return t
        raise KeyError(task_id)


@dataclass
class RunOptions:
    """Execution knobs independent of the job itself."""

    workers: int | None = None  # default: one worker per node
    executor: str = "threads"  # "serial" | "threads" | "processes"
    max_attempts: int = MAX_TASK_ATTEMPTS
    spill_pairs: int = 512 * 1024  # map-side buffered pairs before a spill
    heartbeat_timeout_ticks: int | None = None  # None: timeouts disabled
    capture_reduce_inputs: bool = False  # debug: record pairs fed to reducers
    keep_intermediate: bool = False


@dataclass
class JobReport:
    """Summary returned by submit_job; serializable to JSON."""

    job_id: str
    phase: str
    map_attempts: int
    reduce_attempts: int
    elapsed_ms: float
    parts: list[str]
    map_tasks: int = 0
    reduce_tasks: int = 0
    re_executed_completed_maps: int = 0
    re_executed_completed_reduces: int = 0
    skipped_records: int = 0
    tasks: list[dict] = field(default_factory=list)

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(
            {
                "job_id": self.job_id,
                "phase": self.phase,
                "map_attempts": self.map_attempts,
                "reduce_attempts": self.reduce_attempts,
                "elapsed_ms": self.elapsed_ms,
                "parts": self.parts,
                "map_tasks": self.map_tasks,
                "reduce_tasks": self.reduce_tasks,
                "re_executed_completed_maps": self.re_executed_completed_maps,
                "re_executed_completed_reduces": self.re_executed_completed_reduces,
                "skipped_records": self.skipped_records,
                "tasks": self.tasks,
            },
            indent=indent,
        )
