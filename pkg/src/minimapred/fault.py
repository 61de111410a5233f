"""Deterministic failure injection and recovery bookkeeping.

Node deaths are scripted, not random: each event kills one node either at a
logical tick (one tick = one master scheduling round) or right after a named
task first completes. Death is permanent for the rest of the job. Recovery
follows two rules: map results live on the node that produced them, so a
dead node invalidates even *completed* map tasks; reduce results live in the
replicated DFS, so completed reduce tasks are never re-executed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InvalidPlan, JobFailed
from .jobtypes import JobState, Phase, TaskDescriptor, TaskState


@dataclass(frozen=True)
class FailureEvent:
    node_id: int
    tick: int | None = None
    after_task: str | None = None
    permanent: bool = True

    def __post_init__(self):
        if (self.tick is None) == (self.after_task is None):
            raise InvalidPlan("event needs exactly one trigger: tick or after_task")
        if not self.permanent:
            raise InvalidPlan("nodes do not rejoin: permanent=False is not supported")


@dataclass(frozen=True)
class FailurePlan:
    events: tuple[FailureEvent, ...] = ()

    def validate(self, num_nodes: int) -> None:
        seen = set()
        for ev in self.events:
            if not 0 <= ev.node_id < num_nodes:
                raise InvalidPlan(f"node {ev.node_id} out of range [0, {num_nodes})")
            if ev.node_id in seen:
                raise InvalidPlan(f"more than one kill event for node {ev.node_id}")
            seen.add(ev.node_id)

    @classmethod
    def parse(cls, specs: list[str]) -> "FailurePlan":
        """Parse repeatable CLI flags: ``<node>:<tick>`` or
        ``<node>:after:<task-id>``."""
        events = []
        for spec in specs:
            parts = spec.split(":")
            try:
                if len(parts) == 2:
                    events.append(FailureEvent(node_id=int(parts[0]), tick=int(parts[1])))
                elif len(parts) == 3 and parts[1] == "after":
                    events.append(FailureEvent(node_id=int(parts[0]), after_task=parts[2]))
                else:
                    raise ValueError(spec)
            except ValueError:
                raise InvalidPlan(
                    f"bad failure spec {spec!r}; expected <node>:<tick> "
                    f"or <node>:after:<task-id>"
                ) from None
        return cls(tuple(events))


class PlanExecution:
    """Tracks which events of a plan have fired (each fires at most once)."""

    def __init__(self, plan: FailurePlan):
        self.plan = plan
        self._pending = list(plan.events)

    def due_at_tick(self, tick: int) -> list[int]:
        due = [ev for ev in self._pending if ev.tick is not None and ev.tick <= tick]
        self._pending = [ev for ev in self._pending if ev not in due]
        return [ev.node_id for ev in due]

    def due_after_task(self, task_id: str) -> list[int]:
        due = [ev for ev in self._pending if ev.after_task == task_id]
        self._pending = [ev for ev in self._pending if ev not in due]
        return [ev.node_id for ev in due]


@dataclass
class Heartbeat:
    node_id: int
    last_tick: int = 0
    timeout_ticks: int | None = None  # None: never times out


class LivenessTracker:
    """Master-side liveness view: plan kills plus heartbeat timeouts."""

    def __init__(self, num_nodes: int, timeout_ticks: int | None = None):
        self.beats = {n: Heartbeat(n, 0, timeout_ticks) for n in range(num_nodes)}
        self.dead: set[int] = set()

    def record(self, node: int, tick: int) -> None:
        if node in self.beats:
            self.beats[node].last_tick = tick

    def mark_dead(self, node: int) -> None:
        self.dead.add(node)

    def is_dead(self, node: int) -> bool:
        return node in self.dead

    def live(self) -> list[int]:
        return [n for n in sorted(self.beats) if n not in self.dead]

    def overdue(self, now_tick: int) -> list[int]:
        """Nodes whose last report is older than their timeout."""
        out = []
        for n, hb in sorted(self.beats.items()):
            if n in self.dead or hb.timeout_ticks is None:
                continue
            if now_tick - hb.last_tick > hb.timeout_ticks:
                out.append(n)
        return out


@dataclass
class RecoverySummary:
    reverted_running: list[str] = field(default_factory=list)
    reverted_completed_maps: list[str] = field(default_factory=list)
    reverted_completed_reduces: list[str] = field(default_factory=list)
    restarted_reduces: list[str] = field(default_factory=list)


def _revert(task: TaskDescriptor, max_attempts: int) -> None:
    task.attempt += 1
    if task.attempt > max_attempts:
        raise JobFailed(f"task {task.task_id} exceeded {max_attempts} attempts")
    task.state = TaskState.PENDING
    task.assigned_node = None
    task.result_locations = None


def recover(job: JobState, dead_node: int, max_attempts: int) -> RecoverySummary:
    """Apply the recovery rules for one confirmed-dead node.

    Running tasks on the node are lost. Completed map tasks whose runs lived
    there go back to pending (their output was node-local). Completed reduce
    tasks are untouched (their output is replicated). If map work was lost
    while reducing, every not-yet-completed reducer has to rebuild its merge
    from the re-executed runs, so running reducers are reverted too.
    """
    summary = RecoverySummary()

    for task in job.map_tasks + job.reduce_tasks:
        if task.state is TaskState.RUNNING and task.assigned_node == dead_node:
            _revert(task, max_attempts)
            summary.reverted_running.append(task.task_id)

    for task in job.map_tasks:
        if task.state is TaskState.COMPLETED and any(
            node == dead_node for node, _ in (task.result_locations or [])
        ):
            _revert(task, max_attempts)
            summary.reverted_completed_maps.append(task.task_id)

    if summary.reverted_completed_maps and job.phase is Phase.REDUCING:
        job.phase = Phase.MAPPING
        for task in job.reduce_tasks:
            if task.state is TaskState.RUNNING:
                _revert(task, max_attempts)
                summary.restarted_reduces.append(task.task_id)

    return summary
