"""Exact flowtime oracle: uniform-cost search over joint agent positions.

Each time step costs the number of agents off their goals as the step
begins (an agent stops paying once it arrives and resumes if it departs), so
the accumulated cost of a plan that travels and then parks equals the sum of
arrival times. Successors are exactly the joint actions the environment
would execute unchanged, so returned plans replay without degradations.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from heapq import heappush, heappop

from .env import ACTION_DELTAS, DEFAULT_HORIZON, NUM_ACTIONS, WAIT, Instance, resolve_moves
from .grid import Position, bfs_distance


class SearchLimitError(RuntimeError):
    """The instance exceeds the configured joint-search limits."""


@dataclass(frozen=True)
class JointSearchLimit:
    max_agents: int = 3
    max_free_cells: int = 36
    max_expanded: int = 5_000_000


@dataclass(frozen=True)
class OracleResult:
    feasible: bool
    flowtime: int | None
    plan: tuple[tuple[int, ...], ...] | None  # per-agent action sequences
    expanded: int

    @property
    def infeasible(self) -> bool:
        return not self.feasible


def flowtime_lower_bound(instance: Instance) -> int | None:
    """Sum of per-agent shortest-path lengths; None if any pair is unreachable."""
    total = 0
    for s, g in zip(instance.starts, instance.goals):
        d = bfs_distance(instance.grid, s, g)
        if d is None:
            return None
        total += d
    return total


def optimal_flowtime(
    instance: Instance,
    limits: JointSearchLimit = JointSearchLimit(),
    horizon: int = DEFAULT_HORIZON,
) -> OracleResult:
    """Minimal-flowtime joint plan by uniform-cost search.

    Ties break by insertion order, which follows lexicographic joint-action
    order within each expansion, so results are deterministic. Plans longer
    than the horizon (or joint goals unreachable) yield the infeasible marker;
    exceeding max_expanded raises SearchLimitError.
    """
    n = instance.num_agents
    grid = instance.grid
    if n > limits.max_agents:
        raise SearchLimitError(
            f"{n} agents exceed the joint-search limit of {limits.max_agents}"
        )
    if grid.num_free > limits.max_free_cells:
        raise SearchLimitError(
            f"{grid.num_free} free cells exceed the limit of {limits.max_free_cells}"
        )
    goals = instance.goals
    start = instance.starts
    if start == goals:
        return OracleResult(True, 0, tuple(() for _ in range(n)), 0)

    # Per-cell legal actions (WAIT plus moves into free cells), action-ordered.
    legal: dict[Position, list[int]] = {}
    for cell in grid.free_cells():
        acts = [WAIT]
        for a in range(1, NUM_ACTIONS):
            dx, dy = ACTION_DELTAS[a]
            if grid.is_free(cell.x + dx, cell.y + dy):
                acts.append(a)
        legal[cell] = acts

    dist: dict[tuple[Position, ...], int] = {start: 0}
    parent: dict[tuple[Position, ...], tuple[tuple[Position, ...], tuple[int, ...]]] = {}
    heap: list[tuple[int, int, tuple[Position, ...]]] = [(0, 0, start)]
    counter = itertools.count(1)
    expanded = 0

    while heap:
        cost, _, positions = heappop(heap)
        if cost > dist.get(positions, -1):
            continue
        if positions == goals:
            return _reconstruct(parent, start, goals, cost, expanded, horizon, n)
        expanded += 1
        if expanded > limits.max_expanded:
            raise SearchLimitError(
                f"expanded more than {limits.max_expanded} joint states"
            )
        # An agent pays for a step when it is off its goal as the step begins,
        # so a plan that travels and then parks costs its arrival time.
        stage = sum(1 for p, g in zip(positions, goals) if p != g)
        choices = [legal[p] for p in positions]
        for joint in itertools.product(*choices):
            proposal = tuple(
                Position(p.x + ACTION_DELTAS[a][0], p.y + ACTION_DELTAS[a][1])
                for p, a in zip(positions, joint)
            )
            if resolve_moves(grid, positions, joint) != proposal:
                continue  # the environment would degrade this joint action
            new_cost = cost + stage
            if new_cost < dist.get(proposal, new_cost + 1):
                dist[proposal] = new_cost
                parent[proposal] = (positions, joint)
                heappush(heap, (new_cost, next(counter), proposal))

    return OracleResult(False, None, None, expanded)


def _reconstruct(parent, start, goals, cost, expanded, horizon, n) -> OracleResult:
    joint_actions: list[tuple[int, ...]] = []
    node = goals
    while node != start:
        node, actions = parent[node]
        joint_actions.append(actions)
    joint_actions.reverse()
    if len(joint_actions) > horizon:
        return OracleResult(False, None, None, expanded)
    plan = tuple(tuple(step[i] for step in joint_actions) for i in range(n))
    return OracleResult(True, cost, plan, expanded)
