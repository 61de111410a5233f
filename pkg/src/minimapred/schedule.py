"""Task planning and locality-aware assignment."""

from __future__ import annotations

from .dfs import InputSplit
from .jobtypes import TaskDescriptor


def plan_map_tasks(splits: list[InputSplit]) -> list[TaskDescriptor]:
    """One pending map task per input split, attempt 0."""
    return [
        TaskDescriptor(task_id=f"map-{s.split_index}", kind="map", payload=s)
        for s in splits
    ]


def plan_reduce_tasks(num_reducers: int) -> list[TaskDescriptor]:
    return [
        TaskDescriptor(task_id=f"reduce-{i}", kind="reduce", payload=i)
        for i in range(num_reducers)
    ]


def schedule(
    pending: list[TaskDescriptor], idle_nodes: list[int]
) -> list[tuple[TaskDescriptor, int]]:
    """Pair pending tasks with distinct idle nodes.

    Map tasks go to the first idle node in their split's replica list when
    one is idle (data locality), otherwise to the lowest-numbered idle node.
    Reduce tasks have no locality preference. Tasks compete in task-id
    order (map before reduce, then by index).
    """
    idle = set(idle_nodes)
    assignments = []
    for task in sorted(pending, key=lambda t: (t.kind, t.index)):
        if not idle:
            break
        node = None
        if task.kind == "map":
            for preferred in task.payload.preferred_nodes:
                if preferred in idle:
                    node = preferred
                    break
        if node is None:
            node = min(idle)
        idle.discard(node)
        assignments.append((task, node))
    return assignments
