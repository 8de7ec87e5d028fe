"""
Tests for the zigzag, chessboard and greedy ATG reference patterns
"""

import numpy as np
import pytest

from .baselines import BaselineSpec, atg_greedy, chessboard, generate, serpentine_order, zigzag
from .env import detect_sensitive_regions
from .geometry import PolygonDomain, SampleGrid, island_partition, rectangle, regular_polygon, sample_uniform
from .geometry import segments_intersect


def _laser_crossings(path):
    segs = path.laser_on_segments()
    return sum(segments_intersect(segs[a], segs[b]) for a in range(len(segs)) for b in range(a + 1, len(segs)))


def test_zigzag_three_by_three():
    """Boustrophedon order on a 3x3 grid with no void moves"""
    grid = SampleGrid([(i, j) for j in range(3) for i in range(3)], 0.05, (0.0, 0.0))
    path = zigzag(grid)
    assert path.indices == [0, 1, 2, 5, 4, 3, 6, 7, 8]
    assert path.void_count() == 0
    assert detect_sensitive_regions(path).count == 0


def test_zigzag_y_direction():
    """Sweeping along Y starts up the first column"""
    grid = SampleGrid([(i, j) for j in range(3) for i in range(3)], 0.05, (0.0, 0.0))
    assert serpentine_order(grid, "y") == [0, 3, 6, 7, 4, 1, 2, 5, 8]


def test_zigzag_rectangle():
    """A rectangle is covered in one laser-on run without sensitive regions"""
    grid = sample_uniform(rectangle(1.0, 0.6), 0.05)
    path = zigzag(grid)
    assert np.all(path.visit_counts(grid.n_points) == 1)
    assert path.void_count() == 0
    assert detect_sensitive_regions(path).count == 0
    assert path.metadata["generator"] == "zigzag"


def test_zigzag_pentagon_jumps_between_rows():
    """On a convex pentagon, void moves only bridge row ends that are not neighbors"""
    grid = sample_uniform(regular_polygon(5, 1.1, center=(1.0, 1.0)), 0.05)
    path = zigzag(grid)
    assert np.all(path.visit_counts(grid.n_points) == 1)
    assert _laser_crossings(path) == 0

    cells = grid.lattice[path.indices]
    jumps = [k for k, m in enumerate(path.moves) if k > 0 and not m.laser]
    assert jumps
    for k in jumps:
        di, dj = np.abs(cells[k] - cells[k - 1])
        assert dj == 1 and di >= 2, f"void move {k} inside a row"


def test_zigzag_nonconvex():
    """An L-shape splits scan lines and needs void moves but still covers everything once"""
    l_shape = PolygonDomain([(0, 0), (1, 0), (1, 0.4), (0.4, 0.4), (0.4, 1), (0, 1)])
    grid = sample_uniform(l_shape, 0.05)
    path = zigzag(grid, "y")
    assert np.all(path.visit_counts(grid.n_points) == 1)
    assert _laser_crossings(path) == 0


def test_chessboard_parity_and_coverage():
    """Four islands, two filled along X and two along Y"""
    domain = rectangle(1.0, 1.0)
    grid = sample_uniform(domain, 0.05)
    path = chessboard(grid, island_size=0.5, domain=domain)

    islands = path.metadata["islands"]
    assert len(islands) == 4
    for island in islands:
        r, c = island["cell"]
        assert island["direction"] == ("x" if (r + c) % 2 == 0 else "y")
    assert sorted(i["direction"] for i in islands) == ["x", "x", "y", "y"]
    assert sum(i["points"] for i in islands) == grid.n_points
    assert np.all(path.visit_counts(grid.n_points) == 1)
    assert _laser_crossings(path) == 0


def test_chessboard_laser_stays_in_island():
    """Laser-on moves never join two islands"""
    domain = regular_polygon(6, 0.6)
    grid = sample_uniform(domain, 0.05)
    path = chessboard(grid, island_size=0.3, domain=domain)
    layout = island_partition(domain, 0.3)
    owners = layout.assign(path.points)
    for k, move in enumerate(path.moves[1:], start=1):
        if move.laser:
            assert owners[k] == owners[k - 1]
    assert np.all(path.visit_counts(grid.n_points) == 1)


def test_chessboard_island_count():
    """30mm square at 5mm islands gives 36 islands"""
    domain = rectangle(30.0, 30.0)
    grid = sample_uniform(domain, 0.5)
    path = chessboard(grid, island_size=5.0, domain=domain)
    assert len(path.metadata["islands"]) == 36
    assert np.all(path.visit_counts(grid.n_points) == 1)


def test_chessboard_rejects_small_islands():
    """Islands must span at least two hatch spacings"""
    grid = sample_uniform(rectangle(1.0, 1.0), 0.1)
    with pytest.raises(ValueError):
        chessboard(grid, island_size=0.15)


def test_atg_single_row_matches_zigzag():
    """On a single row every pattern is the same straight line"""
    grid = SampleGrid([(i, 0) for i in range(10)], 0.05, (0.0, 0.0))
    assert atg_greedy(grid).indices == zigzag(grid).indices
    assert atg_greedy(grid).void_count() == 0


def test_atg_invariants():
    """Coverage and no crossing laser segments on a few polygons"""
    for sides in (4, 5, 7):
        grid = sample_uniform(regular_polygon(sides, 0.4), 0.05)
        path = atg_greedy(grid)
        assert np.all(path.visit_counts(grid.n_points) == 1), f"{sides}-gon"
        assert _laser_crossings(path) == 0, f"{sides}-gon"
        assert path.metadata["generator"] == "atg"


def test_generate_dispatch():
    """BaselineSpec selects the pattern; unknown kinds are rejected"""
    domain = rectangle(0.5, 0.5)
    grid = sample_uniform(domain, 0.05)
    assert generate(BaselineSpec("zigzag"), grid).metadata["generator"] == "zigzag"
    assert generate(BaselineSpec("chessboard", island_size=0.25), grid, domain).metadata["generator"] == "chessboard"
    assert generate(BaselineSpec("atg"), grid).metadata["generator"] == "atg"
    with pytest.raises(ValueError):
        BaselineSpec("spiral")
    with pytest.raises(ValueError):
        BaselineSpec("zigzag", direction="z")
