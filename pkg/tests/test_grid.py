import numpy as np
import pytest

from mapfrl.grid import (
    GridMap,
    MapFormatError,
    MapSpec,
    Position,
    bfs_distance,
    bfs_field,
    chebyshev,
    component_count,
    generate_random_map,
    manhattan,
    parse_movingai,
    serialize_movingai,
)


def grid_from_rows(rows):
    """Build a GridMap from glyph rows ('.' free, '@' obstacle)."""
    blocked = [[c == "@" for c in row] for row in rows]
    return GridMap(len(rows[0]), len(rows), blocked)


# ---------------------------------------------------------------------------
# Distances


def test_chebyshev_values():
    assert chebyshev(Position(0, 0), Position(0, 0)) == 0
    assert chebyshev(Position(0, 0), Position(3, 2)) == 3
    assert chebyshev(Position(5, 1), Position(1, 5)) == 4


def test_manhattan_values():
    assert manhattan(Position(0, 0), Position(0, 0)) == 0
    assert manhattan(Position(0, 0), Position(3, 2)) == 5
    assert manhattan(Position(2, 2), Position(2, 7)) == 5


def test_chebyshev_manhattan_sandwich():
    rng = np.random.default_rng(0)
    for _ in range(500):
        a = Position(int(rng.integers(-20, 20)), int(rng.integers(-20, 20)))
        b = Position(int(rng.integers(-20, 20)), int(rng.integers(-20, 20)))
        c, m = chebyshev(a, b), manhattan(a, b)
        assert c <= m <= 2 * c


# ---------------------------------------------------------------------------
# Neighbors


def test_neighbors_center_and_corner():
    g = GridMap(3, 3)
    assert len(g.neighbors(Position(1, 1))) == 4
    assert len(g.neighbors(Position(0, 0))) == 2


def test_neighbors_order_is_nesw():
    g = GridMap(3, 3)
    assert g.neighbors(Position(1, 1)) == [
        Position(1, 0),
        Position(2, 1),
        Position(1, 2),
        Position(0, 1),
    ]


def test_neighbors_walled_cell_is_empty():
    g = grid_from_rows([
        ".@.",
        "@.@",
        ".@.",
    ])
    assert g.neighbors(Position(1, 1)) == []


def test_neighbors_rejects_obstacle_and_out_of_bounds():
    g = grid_from_rows([
        ".@",
        "..",
    ])
    with pytest.raises(ValueError):
        g.neighbors(Position(1, 0))
    with pytest.raises(ValueError):
        g.neighbors(Position(5, 5))


# ---------------------------------------------------------------------------
# BFS


def test_bfs_distance_identity():
    g = GridMap(4, 4)
    assert bfs_distance(g, Position(2, 2), Position(2, 2)) == 0


def test_bfs_distance_empty_grid_is_manhattan():
    g = GridMap(10, 10)
    assert bfs_distance(g, Position(0, 0), Position(9, 9)) == 18


def test_bfs_distance_wall_blocks():
    g = grid_from_rows([
        ".@.",
        ".@.",
        ".@.",
    ])
    assert bfs_distance(g, Position(0, 1), Position(2, 1)) is None


def test_bfs_distance_symmetric():
    rng = np.random.default_rng(1)
    g = generate_random_map(MapSpec(8, 0.25, seed=4))
    free = g.free_cells()
    for _ in range(50):
        s = free[int(rng.integers(len(free)))]
        t = free[int(rng.integers(len(free)))]
        assert bfs_distance(g, s, t) == bfs_distance(g, t, s)


def test_bfs_field_unreachable_marker_negative():
    g = grid_from_rows([
        ".@.",
        ".@.",
    ])
    field = bfs_field(g, Position(0, 0))
    assert field[0, 2] < 0
    assert field[0, 0] == 0
    assert field[1, 0] == 1


# ---------------------------------------------------------------------------
# Random map generation


def test_generate_zero_density():
    g = generate_random_map(MapSpec(10, 0.0, seed=0))
    assert g.num_obstacles == 0
    assert g.num_free == 100


def test_generate_exact_obstacle_count():
    g = generate_random_map(MapSpec(10, 0.3, seed=0))
    assert g.num_obstacles == 30


def test_generate_obstacle_count_matches_rounding():
    rng = np.random.default_rng(2)
    for _ in range(200):
        size = int(rng.integers(3, 30))
        density = float(rng.uniform(0.0, 0.5))
        g = generate_random_map(MapSpec(size, density, seed=int(rng.integers(2**31))))
        assert g.num_obstacles == int(round(density * size * size))


def test_generate_deterministic():
    a = generate_random_map(MapSpec(12, 0.2, seed=99))
    b = generate_random_map(MapSpec(12, 0.2, seed=99))
    assert a == b
    c = generate_random_map(MapSpec(12, 0.2, seed=100))
    assert a != c


# ---------------------------------------------------------------------------
# MovingAI format


def make_text(body_rows, height=None, width=None):
    height = len(body_rows) if height is None else height
    width = len(body_rows[0]) if width is None else width
    lines = ["type octile", f"height {height}", f"width {width}", "map"]
    lines.extend(body_rows)
    return "\n".join(lines) + "\n"


def test_parse_basic_glyphs():
    g = parse_movingai(make_text([".@", ".."]))
    assert g.width == 2 and g.height == 2
    assert not g.is_free(1, 0)
    assert g.is_free(0, 0) and g.is_free(0, 1) and g.is_free(1, 1)


def test_parse_all_obstacle_glyphs():
    g = parse_movingai(make_text([".G", "OT", "W@"]))
    assert g.is_free(0, 0) and g.is_free(1, 0)
    for x, y in ((0, 1), (1, 1), (0, 2), (1, 2)):
        assert not g.is_free(x, y)


def test_parse_serialize_roundtrip():
    rng = np.random.default_rng(3)
    for _ in range(20):
        size = int(rng.integers(2, 16))
        g = generate_random_map(MapSpec(size, 0.3, seed=int(rng.integers(2**31))))
        text = serialize_movingai(g)
        again = parse_movingai(text)
        assert again == g
        assert serialize_movingai(again) == text


def test_parse_errors_name_line_numbers():
    with pytest.raises(MapFormatError, match="line 2"):
        parse_movingai("type octile\nheight x\nwidth 2\nmap\n..\n..\n")
    with pytest.raises(MapFormatError, match="line"):
        parse_movingai(make_text(["..", ".."], height=3))
    with pytest.raises(MapFormatError, match="line 5"):
        parse_movingai(make_text(["...", ".."], width=2))
    with pytest.raises(MapFormatError, match="line 5"):
        parse_movingai(make_text(["?.", ".."]))


def test_component_count():
    assert component_count(GridMap(5, 5)) == 1
    split = grid_from_rows([
        ".@.",
        ".@.",
        ".@.",
    ])
    assert component_count(split) == 2


# ---------------------------------------------------------------------------
# GridMap basics


def test_gridmap_rejects_bad_dimensions():
    with pytest.raises(ValueError):
        GridMap(0, 3)
    with pytest.raises(ValueError):
        GridMap(3, 3, np.zeros((2, 3), dtype=bool))


def test_gridmap_obstacles_immutable():
    g = GridMap(3, 3)
    with pytest.raises(ValueError):
        g.blocked[0, 0] = True
