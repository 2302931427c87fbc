"""On-demand verification suites.

Each check pits an implementation path against an independent route — brute
force, finite differences, exhaustive enumeration, or direct recomputation —
and returns a CheckResult. The CLI `verify` subcommand and the acceptance
tests both run these.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .curriculum import CurriculumConfig, CurriculumState, epoch_update
from .env import (
    ACTION_DELTAS,
    DEFAULT_HORIZON,
    NUM_ACTIONS,
    OBS_SIZE,
    Instance,
    replay_plan,
    transition,
)
from .grid import GridMap, MapSpec, bfs_distance, bfs_field, generate_random_map, \
    parse_movingai, serialize_movingai
from .harness import ScriptedShortestPathPolicy, SuiteSpec, generate_test_suite, \
    rollout_policy
from .learner import (
    MixerNet,
    policy_loss_and_grads,
    qmix_loss_and_grads,
    state_feature_size,
)
from .nn import HEAD_SOFTMAX, DenseNet
from .oracle import JointSearchLimit, flowtime_lower_bound, optimal_flowtime

ACTOR_SHAPE = (OBS_SIZE, 64, 64, NUM_ACTIONS)


@dataclass
class CheckResult:
    name: str
    passed: bool
    checked: int
    failures: int
    detail: str
    elapsed_s: float

    def line(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return (f"{self.name}: {status} ({self.checked} checked, "
                f"{self.failures} failures, {self.elapsed_s:.2f}s) {self.detail}")


def _result(name, started, checked, failures, detail="") -> CheckResult:
    return CheckResult(
        name=name,
        passed=failures == 0,
        checked=checked,
        failures=failures,
        detail=detail,
        elapsed_s=time.monotonic() - started,
    )


# ---------------------------------------------------------------------------
# Conflict audit


def conflict_audit(total_steps: int = 10_000, seed: int = 0) -> CheckResult:
    """Random-policy rollouts must never produce vertex or edge conflicts."""
    started = time.monotonic()
    instances = (
        generate_test_suite(SuiteSpec(10, 0.0, 8, count=50, seed=seed))
        + generate_test_suite(SuiteSpec(10, 0.3, 8, count=50, seed=seed + 1))
    )
    per_instance = -(-total_steps // len(instances))
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(10**6,)))
    steps = 0
    failures = 0
    for instance in instances:
        positions = instance.starts
        for _ in range(per_instance):
            if steps >= total_steps:
                break
            actions = rng.integers(0, NUM_ACTIONS, instance.num_agents)
            new_positions, _ = transition(
                instance.grid, instance.goals, positions, actions
            )
            if len(set(new_positions)) != len(new_positions):
                failures += 1  # vertex conflict
            for i in range(len(positions)):
                for j in range(i + 1, len(positions)):
                    if (new_positions[i] == positions[j]
                            and new_positions[j] == positions[i]
                            and positions[i] != positions[j]):
                        failures += 1  # edge swap
            for old, new, a in zip(positions, new_positions, actions):
                dx, dy = ACTION_DELTAS[int(a)]
                if new != old and (new.x - old.x, new.y - old.y) != (dx, dy):
                    failures += 1  # neither the proposal nor a stay
            positions = new_positions
            steps += 1
    return _result("conflict_audit", started, steps, failures)


# ---------------------------------------------------------------------------
# Gradient oracle


def _fd_compare(params, grads, loss_fn, rng, n_coords, step) -> float:
    """Worst relative error between analytic grads and central differences
    over a random sample of parameter coordinates."""
    sizes = [p.size for p in params]
    offsets = np.concatenate(([0], np.cumsum(sizes)))
    total = int(offsets[-1])
    picks = rng.choice(total, size=min(n_coords, total), replace=False)
    worst = 0.0
    for flat in picks:
        pi = int(np.searchsorted(offsets, flat, side="right")) - 1
        j = int(flat - offsets[pi])
        p = params[pi]
        orig = p.flat[j]
        p.flat[j] = orig + step
        up = loss_fn()
        p.flat[j] = orig - step
        down = loss_fn()
        p.flat[j] = orig
        fd = (up - down) / (2.0 * step)
        a = grads[pi].flat[j]
        err = abs(a - fd) / max(abs(a), abs(fd), 1e-3)
        worst = max(worst, err)
    return worst


def _min_abs_pre(tape) -> float:
    """Smallest |pre-activation| on a dense-net tape (ELU curvature changes
    at zero, so finite differences need clearance there)."""
    if not tape.pre:
        return math.inf
    return min(float(np.abs(p).min()) for p in tape.pre)


def gradient_check(seeds: int = 100, coords_per_loss: int = 24,
                   tolerance: float = 1e-4, seed: int = 0) -> CheckResult:
    """Analytic gradients of the policy and factorization losses versus
    central finite differences in double precision, at system shapes."""
    started = time.monotonic()
    failures = 0
    checked = 0
    worst = 0.0
    num_agents, steps_per_batch = 8, 6
    ssize = state_feature_size(num_agents)
    for k in range(seeds):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))

        # Policy loss: clipped surrogate plus entropy bonus.
        actor = DenseNet(ACTOR_SHAPE, head=HEAD_SOFTMAX, seed=(k, 7),
                         dtype=np.float64)
        batch = 12
        for _ in range(200):
            obs = rng.uniform(0.0, 1.0, (batch, OBS_SIZE))
            actions = rng.integers(0, NUM_ACTIONS, batch)
            advantages = rng.normal(0.0, 1.0, batch)
            probs, tape = actor.forward(obs)
            taken = probs[np.arange(batch), actions]
            old = taken * np.exp(rng.normal(0.0, 0.25, batch))
            ratio = taken / old
            boundary = np.minimum(np.abs(ratio - 0.8), np.abs(ratio - 1.2))
            if boundary.min() > 5e-3 and _min_abs_pre(tape) > 1e-4:
                break
        else:  # pragma: no cover - seeded draws always succeed long before
            raise RuntimeError("could not draw a kink-free policy batch")

        def actor_loss():
            return policy_loss_and_grads(
                actor, obs, actions, old, advantages, 0.2, 0.01
            )[0]

        grads = policy_loss_and_grads(
            actor, obs, actions, old, advantages, 0.2, 0.01
        )[3]
        err = _fd_compare(actor.params, grads, actor_loss, rng,
                          coords_per_loss, 1e-5)
        worst = max(worst, err)
        checked += 1
        if err > tolerance:
            failures += 1

        # Factorization loss through the monotonic mixer: utility-net and
        # mixer gradients share one loss evaluation.
        utility = DenseNet(ACTOR_SHAPE, seed=(k, 8), dtype=np.float64)
        mixer = MixerNet(num_agents, ssize, embed=32, seed=(k, 9),
                         dtype=np.float64)
        for _ in range(200):
            obs_steps = rng.uniform(0.0, 1.0, (steps_per_batch, num_agents, OBS_SIZE))
            actions_steps = rng.integers(0, NUM_ACTIONS, (steps_per_batch, num_agents))
            states = rng.uniform(0.0, 1.0, (steps_per_batch, ssize))
            targets = rng.normal(0.0, 4.0, steps_per_batch)
            q_all, utape = utility.forward(obs_steps.reshape(-1, OBS_SIZE))
            chosen = q_all[np.arange(q_all.shape[0]),
                           actions_steps.reshape(-1)].reshape(steps_per_batch, -1)
            _, mtape = mixer.forward(chosen, states)
            clear = min(
                float(mtape.w1.min()),  # |w| has a kink at zero raw weight
                float(mtape.w2.min()),
                _min_abs_pre(utape),
                float(np.abs(mtape.pre).min()),
                min(_min_abs_pre(t) for t in mtape.tapes),
            )
            if clear > 1e-4:
                break
        else:  # pragma: no cover
            raise RuntimeError("could not draw a kink-free critic batch")

        def critic_loss():
            return qmix_loss_and_grads(
                utility, mixer, obs_steps, actions_steps, states, targets
            )[0]

        _, ugrads, mgrads = qmix_loss_and_grads(
            utility, mixer, obs_steps, actions_steps, states, targets
        )
        for params, analytic in ((utility.params, ugrads), (mixer.params, mgrads)):
            err = _fd_compare(params, analytic, critic_loss, rng,
                              coords_per_loss, 1e-6)
            worst = max(worst, err)
            checked += 1
            if err > tolerance:
                failures += 1
    return _result("gradient_check", started, checked, failures,
                   f"max relative error {worst:.3e}")


# ---------------------------------------------------------------------------
# IGM: joint argmax decomposes into local argmaxes


def igm_check(trials: int = 1000, seed: int = 0) -> CheckResult:
    """Exhaustive joint argmax of the mixed value must equal the tuple of
    per-agent argmaxes, and the mixed value must be monotone in each utility."""
    started = time.monotonic()
    num_agents, actions = 2, NUM_ACTIONS
    ssize = state_feature_size(num_agents)
    joint = np.stack(
        np.meshgrid(np.arange(actions), np.arange(actions), indexing="ij"),
        axis=-1,
    ).reshape(-1, 2)
    failures = 0
    for t in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(t,)))
        mixer = MixerNet(num_agents, ssize, embed=32, seed=(seed, t),
                         dtype=np.float64)
        for p in mixer.params:
            p += rng.normal(0.0, 0.3, p.shape)
        utilities = rng.normal(0.0, 1.0, (num_agents, actions))
        state = rng.uniform(0.0, 1.0, ssize)
        locals_best = utilities.argmax(axis=1)
        u_joint = np.stack(
            [utilities[0, joint[:, 0]], utilities[1, joint[:, 1]]], axis=1
        )
        qtot = mixer.predict(u_joint, np.tile(state, (len(joint), 1)))
        if not np.array_equal(joint[int(qtot.argmax())], locals_best):
            failures += 1
        _, tape = mixer.forward(utilities[np.arange(2), locals_best], state)
        du, _ = mixer.backward(tape, 1.0)
        if (np.asarray(du) < 0.0).any():
            failures += 1
    return _result("igm_check", started, trials, failures)


# ---------------------------------------------------------------------------
# Return / flowtime identity


def _random_instance(size, density, num_agents, rng,
                     exclude_start_goals=False) -> Instance:
    """Random solvable instance; optionally forbid goal_i == start_i."""
    for _ in range(200):
        grid = generate_random_map(
            MapSpec(size, density, seed=int(rng.integers(2**31)))
        )
        free = grid.free_cells()
        if len(free) < 2 * num_agents:
            continue
        idx = rng.choice(len(free), size=num_agents, replace=False)
        starts = tuple(free[int(i)] for i in idx)
        goals = []
        ok = True
        for start in starts:
            field = bfs_field(grid, start)
            eligible = [
                c for c in free
                if field[c.y, c.x] >= 0 and c not in goals
                and not (exclude_start_goals and c == start)
            ]
            if not eligible:
                ok = False
                break
            goals.append(eligible[int(rng.integers(len(eligible)))])
        if ok:
            return Instance(grid, starts, tuple(goals))
    raise RuntimeError("could not build a random instance")


def _shortest_path_actions(instance, positions, fields) -> np.ndarray:
    actions = np.zeros(len(positions), dtype=np.int64)
    for i, (pos, goal) in enumerate(zip(positions, instance.goals)):
        if pos == goal:
            continue
        dist = fields[i]
        here = dist[pos.y, pos.x]
        for a in range(1, NUM_ACTIONS):
            dx, dy = ACTION_DELTAS[a]
            nx, ny = pos.x + dx, pos.y + dy
            if instance.grid.is_free(nx, ny) and 0 <= dist[ny, nx] < here:
                actions[i] = a
                break
    return actions


def return_identity_check(episodes: int = 1000, seed: int = 0,
                          horizon: int = DEFAULT_HORIZON) -> CheckResult:
    """Per-agent undiscounted returns must satisfy the two exact identities:
    arrive at t_a and stay => -return == t_a - 2; never arrive => -return == T."""
    started = time.monotonic()
    failures = 0
    arrived_stayed = 0
    never_arrived = 0
    for e in range(episodes):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(e,)))
        size = int(rng.choice([6, 8, 10]))
        density = float(rng.choice([0.0, 0.2, 0.3]))
        n = int(rng.integers(1, 5))
        instance = _random_instance(size, density, n, rng,
                                    exclude_start_goals=True)
        mode = e % 3  # 0 random, 1 noisy shortest-path, 2 shortest-path
        fields = [bfs_field(instance.grid, g) for g in instance.goals]
        positions = instance.starts
        totals = np.zeros(n, dtype=np.int64)
        on_hist = [[p == g for p, g in zip(positions, instance.goals)]]
        t = 0
        while t < horizon and not all(on_hist[-1]):
            if mode == 0:
                actions = rng.integers(0, NUM_ACTIONS, n)
            else:
                actions = _shortest_path_actions(instance, positions, fields)
                if mode == 1:
                    noisy = rng.random(n) < 0.3
                    actions[noisy] = rng.integers(0, NUM_ACTIONS, int(noisy.sum()))
            positions, rewards = transition(
                instance.grid, instance.goals, positions, actions
            )
            totals += rewards.astype(np.int64)
            on_hist.append([p == g for p, g in zip(positions, instance.goals)])
            t += 1
        for i in range(n):
            on = [row[i] for row in on_hist]
            arrivals = [s for s in range(1, len(on)) if on[s] and not on[s - 1]]
            if arrivals and all(on[arrivals[0]:]):
                arrived_stayed += 1
                if -totals[i] != arrivals[0] - 2:
                    failures += 1
            elif not arrivals:
                never_arrived += 1
                if -totals[i] != horizon:
                    failures += 1
    detail = f"{arrived_stayed} arrived-and-stayed, {never_arrived} never-arrived"
    if arrived_stayed < 50 or never_arrived < 50:
        failures += 1
        detail += " (insufficient coverage)"
    return _result("return_identity_check", started, episodes, failures, detail)


# ---------------------------------------------------------------------------
# Curriculum decision arithmetic


def curriculum_decision_check(vectors: int = 10_000, seed: int = 0) -> CheckResult:
    """epoch_update decisions versus a from-scratch recomputation of
    mean - deviation * sample_std >= threshold (including sigma = 0 vectors)."""
    started = time.monotonic()
    config = CurriculumConfig()
    failures = 0
    if (config.threshold, config.deviation, config.episodes_per_epoch) != (0.75, 2.0, 32):
        failures += 1
    e = config.episodes_per_epoch
    for v in range(vectors):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(v,)))
        kind = v % 4
        if kind == 0:  # all-equal vector: sample std exactly zero
            rates = [float(rng.integers(0, 9)) / 8.0] * e
        elif kind == 1:  # near the decision boundary
            rates = np.clip(rng.normal(0.77, 0.02, e), 0.0, 1.0).tolist()
        elif kind == 2:  # completion rates are multiples of 1/N
            rates = (rng.integers(0, 9, e) / 8.0).tolist()
        else:
            rates = rng.uniform(0.0, 1.0, e).tolist()
        state = CurriculumState(radius=int(rng.integers(1, 10)))
        for r in rates:
            state.record(r)
        radius, stats, incremented = epoch_update(state, config)
        mu = math.fsum(rates) / e
        sigma = math.sqrt(math.fsum((x - mu) ** 2 for x in rates) / (e - 1))
        expected = mu - config.deviation * sigma >= config.threshold
        if incremented != expected:
            failures += 1
        if abs(stats.mean - mu) > 1e-12 or abs(stats.std - sigma) > 1e-12:
            failures += 1
        if radius != state.radius or state.epoch_rates:
            failures += 1
    return _result("curriculum_decision_check", started, vectors, failures)


# ---------------------------------------------------------------------------
# Oracle equivalence


def _interaction_free(instance, trajectory, fields) -> bool:
    """True when every agent marches straight down its own shortest-path
    gradient and never waits off-goal or leaves a reached goal."""
    for t in range(1, len(trajectory.states)):
        prev = trajectory.states[t - 1].positions
        cur = trajectory.states[t].positions
        for i, goal in enumerate(instance.goals):
            if prev[i] == goal:
                if cur[i] != goal:
                    return False
            elif cur[i] == prev[i]:
                return False
            elif fields[i][cur[i].y, cur[i].x] != fields[i][prev[i].y, prev[i].x] - 1:
                return False
    return True


def oracle_equivalence_check(single: int = 100, paired: int = 50,
                             seed: int = 0) -> CheckResult:
    """Single-agent scripted rollouts must cost exactly bfs_distance; the
    joint-search optimum must dominate the bfs lower bound and agree with an
    environment replay of its own plan."""
    started = time.monotonic()
    failures = 0
    checked = 0
    for j in range(single):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(j,)))
        density = float(rng.choice([0.0, 0.1, 0.2, 0.3]))
        instance = _random_instance(10, density, 1, rng)
        outcome = rollout_policy(ScriptedShortestPathPolicy(), instance)
        expected = bfs_distance(instance.grid, instance.starts[0],
                                instance.goals[0])
        checked += 1
        if outcome.flowtime != expected or outcome.completion != 1.0:
            failures += 1
    limits = JointSearchLimit(max_agents=2, max_free_cells=25)
    for j in range(paired):
        rng = np.random.default_rng(
            np.random.SeedSequence(seed, spawn_key=(10**6 + j,))
        )
        instance = _random_instance(5, 0.0, 2, rng)
        result = optimal_flowtime(instance, limits)
        bound = flowtime_lower_bound(instance)
        checked += 1
        if not result.feasible or bound is None:
            failures += 1
            continue
        if result.flowtime < bound:
            failures += 1
        trajectory, degradations = replay_plan(instance, result.plan)
        if degradations:
            failures += 1
        # Independent cost recomputation: agents pay one unit per step they
        # begin away from their goal.
        replay_cost = sum(
            sum(1 for p, g in zip(state.positions, instance.goals) if p != g)
            for state in trajectory.states[:-1]
        )
        if replay_cost != result.flowtime:
            failures += 1
        fields = [bfs_field(instance.grid, g) for g in instance.goals]
        if _interaction_free(instance, trajectory, fields) \
                and result.flowtime != bound:
            failures += 1
    return _result("oracle_equivalence_check", started, checked, failures)


# ---------------------------------------------------------------------------
# Map generation and MovingAI round-trip


def make_maze_map(width: int = 21, height: int = 15, seed: int = 0) -> GridMap:
    """Depth-first-search maze carved on the odd lattice (benchmark style)."""
    rng = np.random.default_rng(seed)
    blocked = np.ones((height, width), dtype=bool)
    start = (1, 1)
    blocked[start[1], start[0]] = False
    stack = [start]
    visited = {start}
    while stack:
        x, y = stack[-1]
        options = []
        for dx, dy in ((2, 0), (-2, 0), (0, 2), (0, -2)):
            nx, ny = x + dx, y + dy
            if 1 <= nx <= width - 2 and 1 <= ny <= height - 2 \
                    and (nx, ny) not in visited:
                options.append((nx, ny))
        if not options:
            stack.pop()
            continue
        nx, ny = options[int(rng.integers(len(options)))]
        blocked[(y + ny) // 2, (x + nx) // 2] = False
        blocked[ny, nx] = False
        visited.add((nx, ny))
        stack.append((nx, ny))
    return GridMap(width, height, blocked)


def make_room_map(width: int = 26, height: int = 26, room: int = 8,
                  seed: int = 0) -> GridMap:
    """Rooms separated by walls with one random door per shared wall segment."""
    rng = np.random.default_rng(seed)
    blocked = np.zeros((height, width), dtype=bool)
    pitch = room + 1
    blocked[:, room::pitch] = True
    blocked[room::pitch, :] = True
    for xw in range(room, width, pitch):  # doors through vertical walls
        for y0 in range(0, height, pitch):
            band = list(range(y0, min(y0 + room, height)))
            if band:
                blocked[band[int(rng.integers(len(band)))], xw] = False
    for yw in range(room, height, pitch):  # doors through horizontal walls
        for x0 in range(0, width, pitch):
            band = list(range(x0, min(x0 + room, width)))
            if band:
                blocked[yw, band[int(rng.integers(len(band)))]] = False
    return GridMap(width, height, blocked)


def map_generation_check(maps: int = 1000, files: int = 20, seed: int = 0,
                         work_dir=None) -> CheckResult:
    """Exact obstacle counts for generated maps, and parse/serialize
    idempotence on benchmark-format files including a maze and a room map."""
    started = time.monotonic()
    failures = 0
    checked = 0
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    for m in range(maps):
        size = int(rng.integers(4, 33))
        density = float(rng.uniform(0.0, 0.5))
        grid = generate_random_map(
            MapSpec(size, density, seed=int(rng.integers(2**31)))
        )
        expected = int(round(density * size * size))
        checked += 1
        if grid.num_obstacles != expected:
            failures += 1
        if m % 25 == 0 and serialize_movingai(grid).count("@") != expected:
            failures += 1
    if work_dir is None:
        work_dir = tempfile.mkdtemp(prefix="mapcheck_")
    work_dir = Path(work_dir)
    work_dir.mkdir(parents=True, exist_ok=True)
    grids = [make_maze_map(21, 15, seed=seed), make_maze_map(13, 13, seed=seed + 1),
             make_room_map(26, 26, 8, seed=seed), make_room_map(17, 23, 5, seed=seed + 1)]
    while len(grids) < files:
        size = int(rng.integers(4, 25))
        density = float(rng.uniform(0.0, 0.4))
        grids.append(generate_random_map(
            MapSpec(size, density, seed=int(rng.integers(2**31)))
        ))
    for i, grid in enumerate(grids[:files]):
        path = work_dir / f"case_{i:02d}.map"
        path.write_text(serialize_movingai(grid))
        text0 = path.read_text()
        first = parse_movingai(text0)
        text1 = serialize_movingai(first)
        second = parse_movingai(text1)
        checked += 1
        if first != grid or second != first or text1 != text0:
            failures += 1
    return _result("map_generation_check", started, checked, failures)


CHECKS = {
    "conflicts": conflict_audit,
    "gradients": gradient_check,
    "igm": igm_check,
    "returns": return_identity_check,
    "curriculum": curriculum_decision_check,
    "oracle": oracle_equivalence_check,
    "maps": map_generation_check,
}
