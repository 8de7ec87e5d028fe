"""
Tests for Voronoi cell filling, island sequencing, void-move insertion and
G-code fine-tuning/export
"""

import math

import numpy as np
import pytest

from .env import OBSERVATION_DIM
from .geometry import rectangle, sample_uniform, segments_intersect
from .learner import QNetwork, greedy_rollout
from .pathplan import (GCodeProgram, GMove, export_gcode, finetune_gcode, generate_voronoi_patterns,
                       insert_void_moves, parse_gcode, plan_island_sequence, plan_islands, read_gcode)
from .toolpath import Move, Toolpath

H = 0.05


def _model(seed=0):
    return QNetwork((OBSERVATION_DIM, 16, 16, 3), np.random.default_rng(seed))


def _path(points, laser=None, hatch=H):
    laser = laser or [k > 0 for k in range(len(points))]
    return Toolpath([Move(k, float(x), float(y), bool(on)) for k, ((x, y), on) in enumerate(zip(points, laser))],
                    hatch)


def test_island_sequence_examples():
    """One, two and four islands"""
    assert plan_island_sequence([(2.5, 2.5)]) == [0]
    assert plan_island_sequence([(7.5, 2.5), (2.5, 2.5)], origin=(0, 0)) == [1, 0]

    square = [(0.5, 0.5), (1.5, 0.5), (0.5, 1.5), (1.5, 1.5)]
    order = plan_island_sequence(square, origin=(0, 0))
    assert order[:2] == [0, 3], f"Expected the diagonal island second, got {order}"
    assert sorted(order) == [0, 1, 2, 3]


def test_island_sequence_is_permutation():
    """Any layout yields a deterministic permutation"""
    rng = np.random.default_rng(1)
    centroids = rng.uniform(0, 30, size=(36, 2))
    order = plan_island_sequence(centroids)
    assert sorted(order) == list(range(36))
    assert plan_island_sequence(centroids) == order
    with pytest.raises(ValueError):
        plan_island_sequence([])


def test_insert_void_moves():
    """Long jumps and flagged moves lose the laser; contiguous moves keep it"""
    contiguous = _path([(0, 0), (H, 0), (2 * H, 0), (2 * H, H)])
    assert insert_void_moves(contiguous, math.sqrt(2) * H).moves == contiguous.moves

    jump = _path([(0, 0), (H, 0), (1.0, 0), (1.0 + H, 0)])
    out = insert_void_moves(jump, math.sqrt(2) * H)
    assert [m.laser for m in out.moves] == [False, True, False, True]

    flagged = insert_void_moves(contiguous, math.sqrt(2) * H, flagged=[2])
    assert [m.laser for m in flagged.moves] == [False, True, False, True]


def test_finetune_examples():
    """Collinear feed, removed isolated point and a rapid after a wide gap"""
    t = math.sqrt(2) * H
    program = finetune_gcode(_path([(0, 0), (H, 0), (2 * H, 0)]), t)
    assert [m.rapid for m in program.motions] == [True, False, False]
    assert program.removed == []

    program = finetune_gcode(_path([(0, 0), (3 * H, 0), (6 * H, 0)]), t)
    assert program.removed == [0, 1, 2]

    program = finetune_gcode(_path([(0, 0), (H, 0), (4 * H, 0), (5 * H, 0)]), t)
    assert program.removed == []
    assert [m.rapid for m in program.motions] == [True, False, True, False]

    program = finetune_gcode(_path([(0, 0), (H, 0), (2 * H, 0), (5 * H, 0), (8 * H, 0), (9 * H, 0)]), t)
    assert program.removed == [3]

    with pytest.raises(ValueError):
        finetune_gcode(_path([(0, 0), (H, 0)]), 0.0)


def test_finetune_matches_brute_force():
    """Removed points are exactly those with both gaps above the threshold"""
    rng = np.random.default_rng(2)
    t = math.sqrt(2) * H
    steps = np.array([(1, 0), (0, 1), (1, 1), (-1, 1), (2, 0), (0, 3), (3, 2), (-2, 0)])
    for _ in range(1000):
        n = int(rng.integers(1, 12))
        lattice = np.cumsum(steps[rng.integers(len(steps), size=n)], axis=0)
        points = lattice * H
        laser = [False] + list(rng.random(n - 1) < 0.8)
        path = _path(points, laser)

        gaps = [math.hypot(*(points[k + 1] - points[k])) for k in range(n - 1)]
        expected = [k for k in range(n)
                    if (k == 0 or gaps[k - 1] > t + 1e-12) and (k == n - 1 or gaps[k] > t + 1e-12)]
        program = finetune_gcode(path, t)
        assert program.removed == expected

        prev = None
        for motion in program.motions:
            if prev is not None and not motion.rapid:
                length = math.hypot(motion.x - prev.x, motion.y - prev.y)
                assert 0 < length <= t + 1e-4
            prev = motion


def test_export_empty_and_single(tmp_path):
    """Header-only file, and one feed line"""
    path = tmp_path / "empty.gcode"
    export_gcode(GCodeProgram(), path)
    assert path.read_text() == "G21\nG90\n"

    program = GCodeProgram(motions=[GMove(False, 1.25, -0.5)])
    export_gcode(program, path)
    assert path.read_text() == "G21\nG90\nG1 X1.2500 Y-0.5000\n"


def test_export_negative_zero():
    """-0.0 prints as 0.0000"""
    assert GCodeProgram(motions=[GMove(True, -0.0, -0.00001)]).lines()[-1] == "G0 X0.0000 Y0.0000"


def test_export_roundtrip(tmp_path):
    """Parsing an exported file gives back the motions"""
    grid = sample_uniform(rectangle(0.3, 0.2), H)
    path = greedy_rollout(_model(), grid)
    program = finetune_gcode(path, math.sqrt(2) * H)
    out = tmp_path / "toolpath.gcode"
    export_gcode(program, out)

    parsed = read_gcode(out)
    assert parsed.header == program.header
    assert parsed.motions == program.motions
    assert parse_gcode(out.read_text()).lines() == program.lines()


def test_voronoi_single_cell_is_direct_rollout():
    """One seed: the island pattern equals a rollout on the island grid"""
    island = rectangle(0.4, 0.4)
    grid = sample_uniform(island, H)
    model = _model(3)
    path = generate_voronoi_patterns(island.polygon, [(0.2, 0.2)], model, H, grid=grid)
    direct = greedy_rollout(model, grid)
    assert path.indices == direct.indices
    assert [m.laser for m in path.moves] == [m.laser for m in direct.moves]


def test_voronoi_fourteen_cells():
    """Fourteen seeds give fourteen labelled sub-paths covering the island"""
    island = rectangle(2.0, 2.0)
    h = 0.1
    grid = sample_uniform(island, h)
    seeds = [(0, 0), (2, 0), (2, 2), (0, 2),
             (0.5, 0.5), (1.0, 0.5), (1.5, 0.5), (0.5, 1.0), (1.0, 1.0),
             (1.5, 1.0), (0.5, 1.5), (1.0, 1.5), (1.5, 1.5), (1.0, 1.8)]
    path = generate_voronoi_patterns(island.polygon, seeds, _model(4), h, grid=grid)

    cells = path.metadata["cells"]
    assert [c["label"] for c in cells] == [f"B{k}" for k in range(1, 15)]
    assert sum(c["points"] for c in cells) == grid.n_points
    assert np.all(path.visit_counts(grid.n_points) == 1)

    keys = []
    for c in cells:
        seed = np.array(c["seed"])
        assert any(np.allclose(seed, s) for s in seeds)
        keys.append(c["points"])
    assert len(keys) == 14


def test_plan_islands_pipeline():
    """Two islands: full coverage, short laser moves, no crossings"""
    domain = rectangle(1.0, 0.5)
    grid = sample_uniform(domain, H)
    plan = plan_islands(domain, grid, _model(5), island_size=0.5, n_random=3, rng=np.random.default_rng(6))

    assert len(plan.islands) == 2
    assert sorted(plan.order) == [0, 1]
    path = plan.toolpath
    assert np.all(path.visit_counts(grid.n_points) == 1)
    for seg in path.laser_on_segments():
        assert seg.length <= math.sqrt(2) * H + 1e-9
    segs = path.laser_on_segments()
    assert not any(segments_intersect(segs[a], segs[b]) for a in range(len(segs)) for b in range(a + 1, len(segs)))

    data = plan.to_dict()
    assert data["order"] == plan.order
    assert sum(i["points"] for i in data["islands"]) == grid.n_points
