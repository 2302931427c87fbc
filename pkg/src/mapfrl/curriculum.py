"""Reverse goal curriculum gated on a completion-rate confidence bound.

Goals are sampled inside a Chebyshev ball around each agent's start. The
ball radius starts at 1 and grows by one whenever an epoch's completion
rates satisfy mean - deviation * std >= threshold, so the allocation radius
only widens once the current band is solved with high confidence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import GridMap, Position, bfs_field, chebyshev

RESAMPLE_BUDGET = 100


class AllocationError(RuntimeError):
    """No eligible goal cell exists for some agent."""


@dataclass(frozen=True)
class CurriculumConfig:
    threshold: float = 0.75  # required lower confidence bound on completion
    deviation: float = 2.0  # number of standard deviations subtracted
    episodes_per_epoch: int = 32
    max_radius: int | None = None  # None disables the cap

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {self.threshold}")
        if self.deviation < 0:
            raise ValueError(f"deviation must be >= 0, got {self.deviation}")
        if self.episodes_per_epoch < 2:
            raise ValueError("need at least 2 episodes per epoch for a sample std")
        if self.max_radius is not None and self.max_radius < 1:
            raise ValueError(f"max_radius must be >= 1, got {self.max_radius}")


@dataclass(frozen=True)
class EpochStats:
    mean: float
    std: float
    count: int


@dataclass
class CurriculumState:
    radius: int = 1
    epoch_rates: list[float] = field(default_factory=list)

    def record(self, rate: float) -> None:
        if not 0.0 <= rate <= 1.0:
            raise ValueError(f"completion rate must be in [0, 1], got {rate}")
        self.epoch_rates.append(float(rate))


def completion_rate(goals: tuple[Position, ...], positions: tuple[Position, ...]) -> float:
    """Fraction of agents sitting on their goals."""
    if len(goals) != len(positions):
        raise ValueError(f"{len(goals)} goals vs {len(positions)} positions")
    done = sum(1 for g, p in zip(goals, positions) if g == p)
    return done / len(goals)


def epoch_stats(rates) -> EpochStats:
    """Mean and sample standard deviation (n-1 divisor) of completion rates."""
    arr = np.asarray(rates, dtype=np.float64)
    return EpochStats(
        mean=float(arr.mean()), std=float(arr.std(ddof=1)), count=int(arr.size)
    )


def epoch_update(
    state: CurriculumState, config: CurriculumConfig
) -> tuple[int, EpochStats, bool]:
    """Consume the epoch's recorded rates and maybe widen the radius.

    Returns (new radius, epoch statistics, whether an increment happened).
    Raises ValueError unless exactly episodes_per_epoch rates were recorded.
    """
    if len(state.epoch_rates) != config.episodes_per_epoch:
        raise ValueError(
            f"epoch recorded {len(state.epoch_rates)} rates, "
            f"expected {config.episodes_per_epoch}"
        )
    stats = epoch_stats(state.epoch_rates)
    state.epoch_rates.clear()
    incremented = stats.mean - config.deviation * stats.std >= config.threshold
    if incremented:
        new_radius = state.radius + 1
        if config.max_radius is not None and new_radius > config.max_radius:
            new_radius = config.max_radius
        incremented = new_radius > state.radius
        if incremented:  # the radius never decreases, whatever the cap
            state.radius = new_radius
    return state.radius, stats, incremented


def _box_cells(grid: GridMap, center: Position, radius: int) -> list[Position]:
    """Free cells within the Chebyshev ball, start cell included."""
    xs = range(max(0, center.x - radius), min(grid.width, center.x + radius + 1))
    ys = range(max(0, center.y - radius), min(grid.height, center.y + radius + 1))
    return [Position(x, y) for y in ys for x in xs if not grid.blocked[y, x]]


def sample_goals(
    grid: GridMap,
    starts,
    radius: int | None,
    rng: np.random.Generator,
) -> list[Position]:
    """Sample one goal per start, uniform over the eligible cells.

    A cell is eligible for agent i when it is free, within Chebyshev distance
    `radius` of start i (any distance if radius is None), reachable from
    start i, and not already assigned to an earlier agent. Sampling rejects up
    to 100 draws per radius, then escalates the radius by one up to the map
    diameter; an exhaustive pass at the diameter raises AllocationError when
    nothing is eligible.
    """
    starts = list(starts)
    if len(set(starts)) != len(starts):
        raise ValueError("start cells are not pairwise distinct")
    if radius is not None and radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    diameter = max(grid.width, grid.height) - 1
    goals: list[Position] = []
    used: set[Position] = set()
    for start in starts:
        if not grid.is_free(start.x, start.y):
            raise ValueError(f"start {start} is not a free cell")
        reach = bfs_field(grid, start)
        goal = None
        r = diameter if radius is None else min(radius, diameter)
        while goal is None:
            candidates = _box_cells(grid, start, r)
            for _ in range(RESAMPLE_BUDGET):
                v = candidates[int(rng.integers(len(candidates)))]
                if reach[v.y, v.x] >= 0 and v not in used:
                    goal = v
                    break
            if goal is None:
                if r >= diameter:
                    eligible = [
                        v for v in candidates if reach[v.y, v.x] >= 0 and v not in used
                    ]
                    if not eligible:
                        raise AllocationError(
                            f"no eligible goal cell for start {start} "
                            f"(radius {radius}, {len(used)} goals already placed)"
                        )
                    goal = eligible[int(rng.integers(len(eligible)))]
                else:
                    r += 1
        goals.append(goal)
        used.add(goal)
    return goals


def radius_marker(radius: int | None) -> str:
    """CSV marker for the allocation radius; unbounded prints as inf."""
    return "inf" if radius is None else str(int(radius))


def confidence_bound(stats: EpochStats, deviation: float) -> float:
    return stats.mean - deviation * stats.std


INFINITE_RADIUS = math.inf
