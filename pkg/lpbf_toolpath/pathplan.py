"""
Island and Voronoi assembly of trained-model patterns, and G-code output

Large domains are cut into square islands, every island into Voronoi
cells. Each cell is filled by a greedy rollout of the trained policy, cells
are joined in order of their average coordinates, islands are sequenced to
keep consecutive islands apart, and the merged path is fine-tuned into
G0/G1 motions.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import shapely

from .geometry import default_voronoi_seeds, island_partition, sample_uniform, voronoi_partition
from .learner import greedy_rollout
from .toolpath import Toolpath

logger = logging.getLogger(__name__)

GCODE_HEADER = ("G21", "G90")


def _to_parent(parent, sub):
    return [parent.lattice_index(i, j) for i, j in sub.lattice]


def _single_point_path(grid):
    return Toolpath.from_grid(grid, [0], [False])


def generate_voronoi_patterns(island, seeds, model, h, grid=None, env_config=None, velocity=1000.0):
    """
    Fill an island cell by cell with greedy rollouts of the model

    Args:
        island: Island polygon (shapely or PolygonDomain)
        seeds: Voronoi seeds
        model: Trained QNetwork
        h: Hatch spacing in mm
        grid: Sample points of the island; sampled from the island when None

    Returns:
        Toolpath over `grid` indices; cells are visited by ascending
        (mean x + mean y, mean x) and relabelled B1..Bk in that order
    """
    partition = voronoi_partition(island, seeds)
    if grid is None:
        grid = sample_uniform(island, h)
    owner = partition.assign(grid.points)

    cells = []
    for k in range(len(partition.seeds)):
        members = np.flatnonzero(owner == k)
        if members.size == 0:
            logger.warning("Voronoi cell %s holds no sample point; skipped", partition.labels[k])
            continue
        mean = grid.points[members].mean(axis=0)
        cells.append((float(mean[0] + mean[1]), float(mean[0]), k, members))
    cells.sort(key=lambda c: (c[0], c[1], c[2]))

    paths, layout = [], []
    for n, (_, _, k, members) in enumerate(cells):
        sub = grid.subset(members)
        local = _single_point_path(sub) if sub.n_points == 1 else greedy_rollout(model, sub, env_config, velocity)
        paths.append(local.remap(_to_parent(grid, sub)))
        layout.append({"label": f"B{n + 1}", "seed": [float(v) for v in partition.seeds[k]],
                       "points": int(members.size)})
    if not paths:
        raise ValueError("no Voronoi cell contains a sample point")
    return Toolpath.concatenate(paths, {"generator": "voronoi", "cells": layout})


def plan_island_sequence(centroids, origin=None, decay=0.5):
    """
    Greedy heat-spreading visit order of islands

    The first island is the one nearest `origin` (the lower-left corner of
    the centroids by default). Each next island minimizes
    sum_j decay**age_j / dist(i, j) over the islands already visited, where
    age_j is 0 for the latest one. Ties go to the lowest index.
    """
    centroids = np.asarray(centroids, dtype=np.float64).reshape(-1, 2)
    n = len(centroids)
    if n == 0:
        raise ValueError("no islands to sequence")
    origin = centroids.min(axis=0) if origin is None else np.asarray(origin, dtype=np.float64)

    d0 = np.hypot(*(centroids - origin).T)
    order = [_argmin_low(d0)]
    remaining = set(range(n)) - set(order)
    while remaining:
        candidates = sorted(remaining)
        scores = np.zeros(len(candidates))
        for age, j in enumerate(reversed(order)):
            dist = np.hypot(*(centroids[candidates] - centroids[j]).T)
            scores += decay ** age / np.maximum(dist, 1e-12)
        nxt = candidates[_argmin_low(scores)]
        order.append(nxt)
        remaining.remove(nxt)
    return order


def _argmin_low(values):
    values = np.asarray(values)
    best = values.min()
    return int(np.flatnonzero(values <= best + 1e-12 * max(abs(best), 1.0))[0])


def insert_void_moves(toolpath, threshold, flagged=()):
    """
    Turn every flagged move and every jump longer than threshold into a
    laser-off move; other moves keep their laser state

    Args:
        flagged: Positions (move numbers) to force laser-off
    """
    flagged = set(flagged)
    moves = [toolpath.moves[0]] if toolpath.moves else []
    for k in range(1, len(toolpath.moves)):
        a, b = toolpath.moves[k - 1], toolpath.moves[k]
        jump = math.hypot(b.x - a.x, b.y - a.y)
        on = b.laser and k not in flagged and jump <= threshold * (1 + 1e-9)
        moves.append(b if on == b.laser else replace(b, laser=on))
    return Toolpath(moves, toolpath.hatch, dict(toolpath.metadata))


@dataclass
class IslandPlan:
    islands: object
    order: list
    paths: dict
    toolpath: Toolpath
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "island_size_mm": self.islands.size,
            "order": [int(k) for k in self.order],
            "islands": [
                {"index": k, "cell": list(self.islands.cells[k]),
                 "centroid": [float(v) for v in self.islands.centroids[k]],
                 "points": len(self.paths[k]) if k in self.paths else 0}
                for k in range(len(self.islands))
            ],
            "metadata": self.metadata,
        }


def _seeds_for(island, seeds, n_random, rng, tol):
    if seeds is not None and len(seeds):
        inside = shapely.dwithin(island, shapely.points(seeds), tol)
        if np.any(inside):
            return np.asarray(seeds)[inside]
    return default_voronoi_seeds(island, n_random, rng)


def plan_islands(domain, grid, model, island_size=5.0, seeds=None, n_random=10, rng=None,
                 decay=0.5, threshold=None, env_config=None, velocity=1000.0):
    """
    Full island pipeline over a sampled domain

    Args:
        domain: PolygonDomain
        grid: SampleGrid of the domain
        model: Trained QNetwork
        seeds: Optional Voronoi seeds; an island with supplied seeds inside it uses
               those, the others get default seeds
        rng: numpy Generator for default seeds
        threshold: Longest laser-on jump in the merged path (sqrt(2)*h by default)

    Returns:
        IslandPlan whose toolpath indices refer to `grid`
    """
    rng = np.random.default_rng(0) if rng is None else rng
    islands = island_partition(domain, island_size)
    owner = islands.assign(grid.points)
    tol = grid.hatch * 1e-6

    paths = {}
    for k, polygon in enumerate(islands.islands):
        members = np.flatnonzero(owner == k)
        if members.size == 0:
            continue
        sub = grid.subset(members)
        local = generate_voronoi_patterns(polygon, _seeds_for(polygon, seeds, n_random, rng, tol), model,
                                          grid.hatch, grid=sub, env_config=env_config, velocity=velocity)
        paths[k] = local.remap(_to_parent(grid, sub))
        logger.debug("Island %d %s: %d points in %d cells", k, islands.cells[k], members.size,
                     len(local.metadata["cells"]))

    filled = sorted(paths)
    xmin, ymin, _, _ = domain.bounds
    local_order = plan_island_sequence(islands.centroids[filled], origin=(xmin, ymin), decay=decay)
    order = [filled[n] for n in local_order]

    threshold = math.sqrt(2.0) * grid.hatch if threshold is None else threshold
    merged = insert_void_moves(Toolpath.concatenate([paths[k] for k in order]), threshold)
    merged.metadata = {"generator": "voronoi-island", "island_size_mm": island_size,
                       "island_order": [int(k) for k in order]}
    logger.info("Island plan: %d islands, %d moves, %d void", len(order), len(merged), merged.void_count())
    return IslandPlan(islands, order, paths, merged, {"decay": decay, "threshold_mm": threshold})


@dataclass(frozen=True)
class GMove:
    rapid: bool
    x: float
    y: float

    @property
    def word(self):
        return "G0" if self.rapid else "G1"


@dataclass
class GCodeProgram:
    header: tuple = GCODE_HEADER
    motions: list = field(default_factory=list)
    removed: list = field(default_factory=list)

    @property
    def body(self):
        return self.motions[1:]

    def lines(self):
        return list(self.header) + [f"{m.word} X{_fmt(m.x)} Y{_fmt(m.y)}" for m in self.motions]


def _fmt(value):
    text = f"{value:.4f}"
    return "0.0000" if text == "-0.0000" else text


def _quantize(value):
    return float(_fmt(value))


def finetune_gcode(toolpath, t):
    """
    G-code motions of a toolpath with long gaps broken and isolated points dropped

    A point whose gaps to both neighbors exceed t (a missing neighbor counts
    as an infinite gap) is removed. A motion is a feed (G1) when the move
    into the point was laser-on and spans at most t; otherwise it is a rapid.

    Returns:
        GCodeProgram; `removed` lists the dropped point indices
    """
    if t <= 0:
        raise ValueError("gap threshold must be positive")
    moves = toolpath.moves
    n = len(moves)
    gaps = [math.hypot(b.x - a.x, b.y - a.y) for a, b in zip(moves, moves[1:])]
    limit = t * (1 + 1e-9)

    program = GCodeProgram()
    last = None
    for k, m in enumerate(moves):
        gap_prev = gaps[k - 1] if k > 0 else math.inf
        gap_next = gaps[k] if k < n - 1 else math.inf
        if gap_prev > limit and gap_next > limit:
            program.removed.append(m.index)
            continue
        motion = GMove(not (m.laser and gap_prev <= limit), _quantize(m.x), _quantize(m.y))
        if last is not None and not motion.rapid and (motion.x, motion.y) == (last.x, last.y):
            continue
        program.motions.append(motion)
        last = motion
    return program


def export_gcode(program, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in program.lines():
            fh.write(line + "\n")


def parse_gcode(text):
    """Inverse of export_gcode; accepts file content"""
    header, motions = [], []
    for raw in text.splitlines():
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        words = line.split()
        if words[0] in ("G0", "G1") and len(words) > 1:
            coords = {w[0]: float(w[1:]) for w in words[1:]}
            if "X" not in coords or "Y" not in coords:
                raise ValueError(f"motion without X/Y: {raw!r}")
            motions.append(GMove(words[0] == "G0", coords["X"], coords["Y"]))
        else:
            header.append(line)
    return GCodeProgram(tuple(header), motions)


def read_gcode(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_gcode(fh.read())
