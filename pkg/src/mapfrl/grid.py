"""Grid maps for multi-agent path finding.

Maps are rectangular 4-connected grids with static obstacles. x indexes
columns, y indexes rows, origin at the top-left corner, so NORTH is y-1.
Includes seeded random map generation, BFS distances, and MovingAI-format
text I/O.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

FREE_GLYPHS = frozenset(".G")
OBSTACLE_GLYPHS = frozenset("@OTW")

# Fixed neighbor expansion order: N, E, S, W.
NEIGHBOR_OFFSETS = ((0, -1), (1, 0), (0, 1), (-1, 0))


class MapFormatError(ValueError):
    """Malformed MovingAI map text. The message names the offending line."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True, order=True)
class Position:
    """A cell coordinate; x is the column, y is the row."""

    x: int
    y: int


def chebyshev(a: Position, b: Position) -> int:
    return max(abs(a.x - b.x), abs(a.y - b.y))


def manhattan(a: Position, b: Position) -> int:
    return abs(a.x - b.x) + abs(a.y - b.y)


class GridMap:
    """Immutable occupancy grid.

    Args:
        width: number of columns (>= 1).
        height: number of rows (>= 1).
        obstacles: anything np.asarray accepts as a (height, width) boolean
            array; True marks an obstacle.
    """

    def __init__(self, width: int, height: int, obstacles=None):
        if width < 1 or height < 1:
            raise ValueError(f"map dimensions must be positive, got {width}x{height}")
        self.width = int(width)
        self.height = int(height)
        if obstacles is None:
            blocked = np.zeros((self.height, self.width), dtype=bool)
        else:
            blocked = np.array(obstacles, dtype=bool)
            if blocked.shape != (self.height, self.width):
                raise ValueError(
                    f"obstacle array shape {blocked.shape} does not match "
                    f"height x width ({self.height}, {self.width})"
                )
        blocked.setflags(write=False)
        self.blocked = blocked

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def is_free(self, x: int, y: int) -> bool:
        """True iff (x, y) is inside the map and not an obstacle."""
        return self.in_bounds(x, y) and not self.blocked[y, x]

    @property
    def num_cells(self) -> int:
        return self.width * self.height

    @property
    def num_obstacles(self) -> int:
        return int(self.blocked.sum())

    @property
    def num_free(self) -> int:
        return self.num_cells - self.num_obstacles

    def free_cells(self) -> list[Position]:
        """All free cells in row-major order."""
        ys, xs = np.nonzero(~self.blocked)
        return [Position(int(x), int(y)) for y, x in zip(ys, xs)]

    def neighbors(self, v: Position) -> list[Position]:
        """Free 4-neighbors of a free cell, in N, E, S, W order."""
        if not self.is_free(v.x, v.y):
            raise ValueError(f"{v} is not a free in-bounds cell")
        out = []
        for dx, dy in NEIGHBOR_OFFSETS:
            if self.is_free(v.x + dx, v.y + dy):
                out.append(Position(v.x + dx, v.y + dy))
        return out

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, GridMap)
            and self.width == other.width
            and self.height == other.height
            and bool(np.array_equal(self.blocked, other.blocked))
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"GridMap({self.width}x{self.height}, {self.num_obstacles} obstacles)"


@dataclass(frozen=True)
class MapSpec:
    """Recipe for a seeded random square map."""

    size: int
    density: float
    seed: int = 0


def generate_random_map(spec: MapSpec) -> GridMap:
    """Generate a size x size map with exactly round(density * size^2) obstacles.

    Obstacle cells are drawn uniformly without replacement from the seeded
    generator, so equal specs yield equal maps.
    """
    if spec.size < 2:
        raise ValueError(f"map size must be >= 2, got {spec.size}")
    if not 0.0 <= spec.density < 1.0:
        raise ValueError(f"density must be in [0, 1), got {spec.density}")
    n_cells = spec.size * spec.size
    n_obstacles = int(round(spec.density * n_cells))
    if n_cells - n_obstacles < 2:
        raise ValueError(
            f"density {spec.density} leaves fewer than 2 free cells on a "
            f"{spec.size}x{spec.size} map"
        )
    rng = np.random.default_rng(spec.seed)
    flat = rng.choice(n_cells, size=n_obstacles, replace=False)
    blocked = np.zeros(n_cells, dtype=bool)
    blocked[flat] = True
    return GridMap(spec.size, spec.size, blocked.reshape(spec.size, spec.size))


def bfs_field(grid: GridMap, source: Position) -> np.ndarray:
    """BFS distances from source to every cell; -1 marks unreachable/obstacle."""
    if not grid.is_free(source.x, source.y):
        raise ValueError(f"source {source} is not a free cell")
    dist = np.full((grid.height, grid.width), -1, dtype=np.int32)
    dist[source.y, source.x] = 0
    queue = deque([(source.x, source.y)])
    blocked = grid.blocked
    w, h = grid.width, grid.height
    while queue:
        x, y = queue.popleft()
        d = dist[y, x] + 1
        for dx, dy in NEIGHBOR_OFFSETS:
            nx, ny = x + dx, y + dy
            if 0 <= nx < w and 0 <= ny < h and not blocked[ny, nx] and dist[ny, nx] < 0:
                dist[ny, nx] = d
                queue.append((nx, ny))
    return dist


def bfs_distance(grid: GridMap, source: Position, target: Position) -> int | None:
    """Shortest-path length between two free cells, or None if unreachable."""
    if not grid.is_free(target.x, target.y):
        raise ValueError(f"target {target} is not a free cell")
    d = int(bfs_field(grid, source)[target.y, target.x])
    return None if d < 0 else d


def component_count(grid: GridMap) -> int:
    """Number of connected components among the free cells."""
    seen = np.zeros((grid.height, grid.width), dtype=bool)
    count = 0
    for start in grid.free_cells():
        if seen[start.y, start.x]:
            continue
        count += 1
        seen[start.y, start.x] = True
        queue = deque([start])
        while queue:
            v = queue.popleft()
            for n in grid.neighbors(v):
                if not seen[n.y, n.x]:
                    seen[n.y, n.x] = True
                    queue.append(n)
    return count


def parse_movingai(text: str) -> GridMap:
    """Parse MovingAI map text.

    Expected layout: `type <token>`, `height H`, `width W`, `map`, then H rows
    of exactly W glyphs. Glyphs `.` and `G` are free; `@`, `O`, `T`, `W` are
    obstacles. Any deviation raises MapFormatError naming the 1-based line.
    """
    lines = text.splitlines()

    def line(i: int) -> str:
        if i >= len(lines):
            raise MapFormatError(i + 1, "unexpected end of file")
        return lines[i]

    header = line(0).split()
    if len(header) != 2 or header[0] != "type":
        raise MapFormatError(1, f"expected 'type <token>', got {line(0)!r}")

    def int_field(i: int, key: str) -> int:
        parts = line(i).split()
        if len(parts) != 2 or parts[0] != key:
            raise MapFormatError(i + 1, f"expected '{key} <int>', got {line(i)!r}")
        try:
            value = int(parts[1])
        except ValueError:
            raise MapFormatError(i + 1, f"{key} is not an integer: {parts[1]!r}") from None
        if value < 1:
            raise MapFormatError(i + 1, f"{key} must be positive, got {value}")
        return value

    height = int_field(1, "height")
    width = int_field(2, "width")
    if line(3).strip() != "map":
        raise MapFormatError(4, f"expected 'map', got {line(3)!r}")

    rows = []
    for r in range(height):
        row = line(4 + r)
        if len(row) != width:
            raise MapFormatError(
                5 + r, f"row has {len(row)} glyphs, expected width {width}"
            )
        parsed = []
        for c, glyph in enumerate(row):
            if glyph in FREE_GLYPHS:
                parsed.append(False)
            elif glyph in OBSTACLE_GLYPHS:
                parsed.append(True)
            else:
                raise MapFormatError(5 + r, f"unknown glyph {glyph!r} at column {c}")
        rows.append(parsed)

    for extra in range(4 + height, len(lines)):
        if lines[extra].strip():
            raise MapFormatError(extra + 1, "trailing content after map body")

    return GridMap(width, height, rows)


def serialize_movingai(grid: GridMap) -> str:
    """Canonical MovingAI text for a grid: free cells as '.', obstacles as '@'."""
    body = "\n".join(
        "".join("@" if grid.blocked[y, x] else "." for x in range(grid.width))
        for y in range(grid.height)
    )
    return f"type octile\nheight {grid.height}\nwidth {grid.width}\nmap\n{body}\n"
