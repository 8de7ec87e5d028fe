"""
Reference scan patterns: zigzag, chessboard and a greedy ATG-style pattern
"""

import logging
from dataclasses import dataclass

import numpy as np
from shapely.geometry import box

from .env import SENSITIVE_ANGLE, ToolpathEnv, legal_moves, proxy_F
from .geometry import SegmentIndex, island_partition, turning_angle
from .toolpath import Toolpath

logger = logging.getLogger(__name__)

BASELINE_KINDS = ("zigzag", "chessboard", "atg")


@dataclass(frozen=True)
class BaselineSpec:
    kind: str = "zigzag"
    direction: str = "x"
    island_size: float = 5.0
    threshold: float = SENSITIVE_ANGLE

    def __post_init__(self):
        if self.kind not in BASELINE_KINDS:
            raise ValueError(f"unknown baseline {self.kind!r}; expected one of {', '.join(BASELINE_KINDS)}")
        if self.direction not in ("x", "y"):
            raise ValueError("zigzag direction must be 'x' or 'y'")


def _runs(grid, direction):
    """Maximal runs of consecutive lattice points along each scan line, line by line"""
    line_axis, along_axis = (1, 0) if direction == "x" else (0, 1)
    lines = {}
    for k, coord in enumerate(grid.lattice):
        lines.setdefault(int(coord[line_axis]), []).append((int(coord[along_axis]), k))
    for line in sorted(lines):
        cells = sorted(lines[line])
        runs, current = [], [cells[0][1]]
        for (prev, _), (pos, k) in zip(cells, cells[1:]):
            if pos == prev + 1:
                current.append(k)
            else:
                runs.append(current)
                current = [k]
        runs.append(current)
        yield runs


def serpentine_order(grid, direction="x"):
    """Point order of a boustrophedon sweep starting at the lower-left point"""
    order = []
    for n, runs in enumerate(_runs(grid, direction)):
        if n % 2:
            runs = [run[::-1] for run in reversed(runs)]
        for run in runs:
            order.extend(run)
    return order


def assemble(grid, order, metadata=None):
    """
    Toolpath through grid points in the given order

    A move is laser-on iff it joins lattice neighbors without crossing an
    earlier laser-on move.
    """
    segments = SegmentIndex(grid)
    laser = [False]
    for a, b in zip(order, order[1:]):
        di, dj = np.abs(grid.lattice[b] - grid.lattice[a])
        on = max(di, dj) == 1 and not segments.crosses(a, b)
        if on:
            segments.add(a, b)
        laser.append(on)
    return Toolpath.from_grid(grid, order, laser, metadata)


def zigzag(grid, direction="x"):
    """
    Boustrophedon pattern along X or Y

    Rows of a rectangle join end to end. On other shapes a row change whose
    ends are not lattice neighbors, or a row split by a concavity, is a
    void move.
    """
    if grid.n_points == 0:
        raise ValueError("zigzag of an empty grid")
    path = assemble(grid, serpentine_order(grid, direction), {"generator": "zigzag", "direction": direction})
    logger.debug("Zigzag along %s: %d points, %d void moves", direction, grid.n_points, path.void_count())
    return path


def chessboard(grid, island_size=5.0, domain=None):
    """
    Island pattern with alternating fill directions

    Islands with even row+column parity are filled along X, odd ones along
    Y. Islands are visited row by row in serpentine order and joined by
    void moves.
    """
    if island_size < 2 * grid.hatch:
        raise ValueError(f"island size {island_size}mm is below twice the hatch ({2 * grid.hatch}mm)")
    if domain is not None:
        outline = domain.polygon
    else:
        xmin, ymin, xmax, ymax = grid.bounds
        outline = box(xmin, ymin, max(xmax, xmin + grid.hatch), max(ymax, ymin + grid.hatch))
    islands = island_partition(outline, island_size)
    owner = islands.assign(grid.points)

    rows = sorted({r for r, _ in islands.cells})
    sequence = []
    for n, r in enumerate(rows):
        in_row = sorted((c, k) for k, (rr, c) in enumerate(islands.cells) if rr == r)
        sequence.extend(k for _, k in (reversed(in_row) if n % 2 else in_row))

    fills, layout = [], []
    for k in sequence:
        members = np.flatnonzero(owner == k)
        if members.size == 0:
            continue
        r, c = islands.cells[k]
        direction = "x" if (r + c) % 2 == 0 else "y"
        sub = grid.subset(members)
        local = zigzag(sub, direction)
        fills.append(local.remap(_to_parent(grid, sub)))
        layout.append({"cell": [r, c], "direction": direction, "points": int(members.size)})

    logger.debug("Chessboard: %d islands of %.3gmm", len(fills), island_size)
    return Toolpath.concatenate(fills, {"generator": "chessboard", "island_size_mm": island_size,
                                        "islands": layout})


def _to_parent(grid, sub):
    """Map sub-grid indices to indices of `grid` through shared lattice coordinates"""
    return [grid.lattice_index(i, j) for i, j in sub.lattice]


def atg_greedy(grid, env_config=None, velocity=1000.0, threshold=SENSITIVE_ANGLE):
    """
    Greedy coolest-neighbor pattern with a smoothness constraint

    Among the legal moves, pick the lowest proxy temperature whose turning
    angle is at least `threshold`; when none is smooth enough every legal
    move qualifies. With no legal move the nearest unvisited point is
    reached by a void move.
    """
    if grid.n_points == 0:
        raise ValueError("ATG pattern of an empty grid")
    env = ToolpathEnv(grid, env_config, velocity)
    while not env.done:
        state = env.state
        moves = legal_moves(state, env.grid)
        if not moves:
            env.step(0)
            continue
        scored = []
        for k in moves:
            disp = tuple(env.grid.lattice[k] - env.grid.lattice[state.current])
            alpha = 180.0 if state.prev_dir is None else turning_angle(state.prev_dir, disp)
            scored.append((proxy_F(env.grid.points[k], env.proxy, state.time), k, alpha))
        smooth = [s for s in scored if s[2] >= threshold - 1e-9]
        _, target, _ = min(smooth or scored)
        env.move_to(target)
    return env.toolpath({"generator": "atg", "threshold_deg": threshold})


def generate(spec, grid, domain=None, env_config=None, velocity=1000.0):
    """Build the baseline described by a BaselineSpec"""
    if spec.kind == "zigzag":
        return zigzag(grid, spec.direction)
    if spec.kind == "chessboard":
        return chessboard(grid, spec.island_size, domain)
    return atg_greedy(grid, env_config, velocity, spec.threshold)
