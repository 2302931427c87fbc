"""Multi-agent gridworld as a partially observable stochastic game.

Agents move simultaneously on a 4-connected grid. Conflicting or illegal
moves degrade to waits (transitions are deterministic and collision-free by
construction). Rewards are sparse: +1 on arriving at the goal, 0 while
staying on it, -1 otherwise. Each agent observes a 5-channel 7x7 egocentric
window plus a normalized goal-distance channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import GridMap, Position, bfs_field, manhattan

WAIT, NORTH, EAST, SOUTH, WEST = range(5)
NUM_ACTIONS = 5
ACTION_DELTAS = ((0, 0), (0, -1), (1, 0), (0, 1), (-1, 0))
ACTION_NAMES = ("WAIT", "NORTH", "EAST", "SOUTH", "WEST")

FOV = 7
FOV_RADIUS = FOV // 2
NUM_CHANNELS = 5
OBS_SIZE = NUM_CHANNELS * FOV * FOV

DEFAULT_HORIZON = 256
DEFAULT_DISCOUNT = 1.0


class InstanceError(ValueError):
    """A problem instance violates its invariants."""


@dataclass(frozen=True)
class Instance:
    """A map plus per-agent start and goal cells.

    Starts are pairwise distinct, goals are pairwise distinct, all cells are
    free, and every goal is reachable from its start. Set validate=False only
    for deliberately broken instances in tests.
    """

    grid: GridMap
    starts: tuple[Position, ...]
    goals: tuple[Position, ...]
    validate: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "starts", tuple(self.starts))
        object.__setattr__(self, "goals", tuple(self.goals))
        if not self.validate:
            return
        if len(self.starts) != len(self.goals):
            raise InstanceError(
                f"{len(self.starts)} starts but {len(self.goals)} goals"
            )
        if len(self.starts) == 0:
            raise InstanceError("instance has no agents")
        if len(set(self.starts)) != len(self.starts):
            raise InstanceError("start cells are not pairwise distinct")
        if len(set(self.goals)) != len(self.goals):
            raise InstanceError("goal cells are not pairwise distinct")
        for label, cells in (("start", self.starts), ("goal", self.goals)):
            for v in cells:
                if not self.grid.is_free(v.x, v.y):
                    raise InstanceError(f"{label} {v} is not a free cell")
        for i, (s, g) in enumerate(zip(self.starts, self.goals)):
            if int(bfs_field(self.grid, s)[g.y, g.x]) < 0:
                raise InstanceError(f"goal {g} unreachable from start {s} (agent {i})")

    @property
    def num_agents(self) -> int:
        return len(self.starts)


@dataclass(frozen=True)
class EnvState:
    positions: tuple[Position, ...]
    t: int


@dataclass(frozen=True)
class StepResult:
    state: EnvState
    rewards: np.ndarray
    observations: np.ndarray
    terminal: bool


def resolve_moves(
    grid: GridMap, positions: tuple[Position, ...], actions
) -> tuple[Position, ...]:
    """Resolve simultaneous move proposals into a collision-free outcome.

    Degradation rules, applied as set operations (agent order never matters):
    off-map/obstacle proposals become waits; swap pairs both wait; cells
    proposed by two or more movers make all its movers wait; movers targeting
    the settled cell of a waiting agent wait. The last two repeat to a fixed
    point, which takes at most N passes.
    """
    n = len(positions)
    if len(actions) != n:
        raise ValueError(f"{len(actions)} actions for {n} agents")
    targets = []
    for pos, a in zip(positions, actions):
        a = int(a)
        if not 0 <= a < NUM_ACTIONS:
            raise ValueError(f"action {a} out of range")
        dx, dy = ACTION_DELTAS[a]
        tx, ty = pos.x + dx, pos.y + dy
        if a != WAIT and grid.is_free(tx, ty):
            targets.append(Position(tx, ty))
        else:
            targets.append(pos)  # illegal proposals degrade immediately

    # Swap conflicts: both ends of the edge degrade.
    moving = [i for i in range(n) if targets[i] != positions[i]]
    for idx, i in enumerate(moving):
        for j in moving[idx + 1 :]:
            if targets[i] == positions[j] and targets[j] == positions[i]:
                targets[i] = positions[i]
                targets[j] = positions[j]

    # Vertex conflicts and moves into settled waiters, to a fixed point.
    for _ in range(n):
        changed = False
        movers = [i for i in range(n) if targets[i] != positions[i]]
        counts: dict[Position, int] = {}
        for i in movers:
            counts[targets[i]] = counts.get(targets[i], 0) + 1
        for i in movers:
            if counts[targets[i]] > 1:
                targets[i] = positions[i]
                changed = True
        settled = {positions[i] for i in range(n) if targets[i] == positions[i]}
        for i in range(n):
            if targets[i] != positions[i] and targets[i] in settled:
                targets[i] = positions[i]
                changed = True
        if not changed:
            break

    return tuple(targets)


def transition(
    grid: GridMap,
    goals: tuple[Position, ...],
    positions: tuple[Position, ...],
    actions,
) -> tuple[tuple[Position, ...], np.ndarray]:
    """One joint move: resolved positions plus per-agent rewards in {-1, 0, +1}."""
    new_positions = resolve_moves(grid, positions, actions)
    rewards = np.empty(len(positions), dtype=np.float32)
    for i, (old, new, goal) in enumerate(zip(positions, new_positions, goals)):
        if new == goal:
            rewards[i] = 0.0 if old == goal else 1.0  # +1 on every (re-)arrival
        else:
            rewards[i] = -1.0
    return new_positions, rewards


def all_at_goals(instance: Instance, state: EnvState) -> bool:
    return all(p == g for p, g in zip(state.positions, instance.goals))


def is_terminal(instance: Instance, state: EnvState, horizon: int = DEFAULT_HORIZON) -> bool:
    return state.t >= horizon or all_at_goals(instance, state)


class ObservationEncoder:
    """Encodes egocentric observations for one instance.

    Channels: 0 obstacles (out-of-map reads as obstacle), 1 other agents,
    2 other agents' goals, 3 own goal (projected to the clamped FOV border
    cell when out of view), 4 constant min(1, manhattan/(width+height)).
    """

    def __init__(self, instance: Instance):
        self.instance = instance
        grid = instance.grid
        h, w, r = grid.height, grid.width, FOV_RADIUS
        obstacles = np.ones((h + 2 * r, w + 2 * r), dtype=np.float32)
        obstacles[r : r + h, r : r + w] = grid.blocked
        self._obstacles = obstacles
        goals = np.zeros_like(obstacles)
        for g in instance.goals:
            goals[g.y + r, g.x + r] = 1.0
        self._goals = goals
        self._agents = np.zeros_like(obstacles)
        self._norm = w + h

    def encode_all(self, state: EnvState) -> np.ndarray:
        """Observations for every agent, shape (N, 5, FOV, FOV) float32."""
        inst = self.instance
        n = inst.num_agents
        r = FOV_RADIUS
        agents = self._agents
        for p in state.positions:
            agents[p.y + r, p.x + r] = 1.0
        obs = np.zeros((n, NUM_CHANNELS, FOV, FOV), dtype=np.float32)
        for i, (pos, goal) in enumerate(zip(state.positions, inst.goals)):
            x, y = pos.x, pos.y
            rows, cols = slice(y, y + FOV), slice(x, x + FOV)
            obs[i, 0] = self._obstacles[rows, cols]
            obs[i, 1] = agents[rows, cols]
            obs[i, 1, r, r] = 0.0  # self excluded
            obs[i, 2] = self._goals[rows, cols]
            dx, dy = goal.x - x, goal.y - y
            if abs(dx) <= r and abs(dy) <= r:
                obs[i, 2, r + dy, r + dx] = 0.0  # own goal is not an "other" goal
            cx = min(max(dx, -r), r)
            cy = min(max(dy, -r), r)
            obs[i, 3, r + cy, r + cx] = 1.0
            obs[i, 4] = min(1.0, (abs(dx) + abs(dy)) / self._norm)
        for p in state.positions:
            agents[p.y + r, p.x + r] = 0.0
        return obs

    def encode(self, state: EnvState, agent: int) -> np.ndarray:
        return self.encode_all(state)[agent]


def encode_observation(instance: Instance, state: EnvState, agent: int) -> np.ndarray:
    """One agent's observation, shape (5, FOV, FOV) float32."""
    if not 0 <= agent < instance.num_agents:
        raise ValueError(f"agent index {agent} out of range")
    return ObservationEncoder(instance).encode(state, agent)


def reset(instance: Instance) -> tuple[EnvState, np.ndarray]:
    """Initial state (agents at their starts, t=0) and first observations."""
    state = EnvState(instance.starts, 0)
    return state, ObservationEncoder(instance).encode_all(state)


def step(
    instance: Instance,
    state: EnvState,
    actions,
    horizon: int = DEFAULT_HORIZON,
    encoder: ObservationEncoder | None = None,
) -> StepResult:
    """Advance one joint step. Raises RuntimeError on a terminal state."""
    if is_terminal(instance, state, horizon):
        raise RuntimeError(f"step() called on a terminal state (t={state.t})")
    new_positions, rewards = transition(
        instance.grid, instance.goals, state.positions, actions
    )
    new_state = EnvState(new_positions, state.t + 1)
    if encoder is None:
        encoder = ObservationEncoder(instance)
    return StepResult(
        state=new_state,
        rewards=rewards,
        observations=encoder.encode_all(new_state),
        terminal=is_terminal(instance, new_state, horizon),
    )


@dataclass
class Trajectory:
    """A rolled-out episode: states has one more entry than the step arrays."""

    instance: Instance
    states: list[EnvState]
    actions: np.ndarray  # (L, N) int
    rewards: np.ndarray  # (L, N) float32
    degraded: np.ndarray  # (L, N) bool

    @property
    def num_steps(self) -> int:
        return len(self.states) - 1


@dataclass
class Degradation:
    t: int
    agent: int
    intended: Position
    actual: Position


def replay_plan(
    instance: Instance, plan, horizon: int = DEFAULT_HORIZON
) -> tuple[Trajectory, list[Degradation]]:
    """Replay per-agent action sequences through the dynamics.

    plan is a sequence of N equal-length action lists. Replay stops early if
    the episode terminates. Returns the trajectory and every degradation
    (a move whose outcome differs from its unresolved intent).
    """
    n = instance.num_agents
    if len(plan) != n:
        raise ValueError(f"plan has {len(plan)} agents, instance has {n}")
    lengths = {len(seq) for seq in plan}
    if len(lengths) > 1:
        raise ValueError(f"per-agent plans have unequal lengths {sorted(lengths)}")
    steps = lengths.pop() if lengths else 0
    if steps > horizon:
        raise ValueError(f"plan length {steps} exceeds horizon {horizon}")

    state = EnvState(instance.starts, 0)
    states = [state]
    actions_log, rewards_log, degraded_log = [], [], []
    report: list[Degradation] = []
    for t in range(steps):
        if is_terminal(instance, state, horizon):
            break
        actions = [int(plan[i][t]) for i in range(n)]
        new_positions, rewards = transition(
            instance.grid, instance.goals, state.positions, actions
        )
        degraded = np.zeros(n, dtype=bool)
        for i, (pos, a, new) in enumerate(zip(state.positions, actions, new_positions)):
            dx, dy = ACTION_DELTAS[a]
            intended = Position(pos.x + dx, pos.y + dy)
            if intended != new:
                degraded[i] = True
                report.append(Degradation(t + 1, i, intended, new))
        state = EnvState(new_positions, state.t + 1)
        states.append(state)
        actions_log.append(actions)
        rewards_log.append(rewards)
        degraded_log.append(degraded)

    actions_arr = np.array(actions_log, dtype=np.int64).reshape(len(actions_log), n)
    rewards_arr = (
        np.stack(rewards_log) if rewards_log else np.zeros((0, n), dtype=np.float32)
    )
    degraded_arr = (
        np.stack(degraded_log) if degraded_log else np.zeros((0, n), dtype=bool)
    )
    traj = Trajectory(instance, states, actions_arr, rewards_arr, degraded_arr)
    return traj, report


def format_trajectory(traj: Trajectory) -> str:
    """Line-per-agent-step dump: t,agent,x,y,action,reward,degraded."""
    lines = ["t,agent,x,y,action,reward,degraded"]
    for k in range(traj.num_steps):
        state = traj.states[k + 1]
        for i, pos in enumerate(state.positions):
            lines.append(
                f"{state.t},{i},{pos.x},{pos.y},{int(traj.actions[k, i])},"
                f"{int(traj.rewards[k, i])},{int(traj.degraded[k, i])}"
            )
    return "\n".join(lines) + "\n"
