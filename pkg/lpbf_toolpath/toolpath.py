"""
Toolpath container and its JSON file format
"""

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Segment

TOOLPATH_FORMAT = "lpbf-toolpath"


@dataclass(frozen=True)
class Move:
    """
    Arrival at a sample point

    `laser` describes the segment from the previous move to this one; it is
    always False for the first move of a path.
    """

    index: int
    x: float
    y: float
    laser: bool

    def to_dict(self):
        return {"i": int(self.index), "x_mm": float(self.x), "y_mm": float(self.y), "laser": int(self.laser)}


@dataclass
class Toolpath:
    moves: list
    hatch: float
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.moves)

    def __iter__(self):
        return iter(self.moves)

    @property
    def indices(self):
        return [m.index for m in self.moves]

    @property
    def points(self):
        return np.array([(m.x, m.y) for m in self.moves], dtype=np.float64).reshape(-1, 2)

    @property
    def hatch_um(self):
        return self.hatch * 1000.0

    def segments(self):
        return [Segment((a.x, a.y), (b.x, b.y), laser=b.laser)
                for a, b in zip(self.moves, self.moves[1:])]

    def laser_on_segments(self):
        return [s for s in self.segments() if s.laser]

    def void_count(self):
        return sum(1 for m in self.moves[1:] if not m.laser)

    def length(self):
        return sum(s.length for s in self.segments())

    def laser_on_length(self):
        return sum(s.length for s in self.laser_on_segments())

    def visit_counts(self, n_points):
        return np.bincount(np.asarray(self.indices, dtype=np.int64), minlength=n_points)

    def remap(self, index_map):
        """Copy with every point index replaced by index_map[index]"""
        moves = [replace(m, index=int(index_map[m.index])) for m in self.moves]
        return Toolpath(moves, self.hatch, dict(self.metadata))

    @classmethod
    def from_grid(cls, grid, order, laser, metadata=None):
        """
        Build a path over grid points

        Args:
            grid: SampleGrid the indices refer to
            order: Visited point indices
            laser: Laser flag per move (first entry is ignored and stored as False)
        """
        moves = []
        for k, (idx, on) in enumerate(zip(order, laser)):
            x, y = grid.points[idx]
            moves.append(Move(int(idx), float(x), float(y), bool(on) and k > 0))
        return cls(moves, grid.hatch, dict(metadata or {}))

    @classmethod
    def concatenate(cls, paths, metadata=None):
        """Join paths end to start; each join is a void move"""
        paths = [p for p in paths if len(p)]
        if not paths:
            raise ValueError("nothing to concatenate")
        hatch = paths[0].hatch
        if any(not math.isclose(p.hatch, hatch, rel_tol=1e-12) for p in paths):
            raise ValueError("cannot concatenate paths with different hatch spacing")
        moves = list(paths[0].moves)
        for p in paths[1:]:
            moves.append(replace(p.moves[0], laser=False))
            moves.extend(p.moves[1:])
        return cls(moves, hatch, dict(metadata or {}))

    def to_dict(self):
        return {
            "format": TOOLPATH_FORMAT,
            "hatch_um": self.hatch_um,
            "metadata": self.metadata,
            "moves": [m.to_dict() for m in self.moves],
        }

    @classmethod
    def from_dict(cls, data):
        try:
            moves = [Move(int(m["i"]), float(m["x_mm"]), float(m["y_mm"]), bool(m["laser"]))
                     for m in data["moves"]]
            hatch = float(data["hatch_um"]) / 1000.0
        except (KeyError, TypeError, ValueError) as e:
            raise ValueError(f"malformed toolpath: {e}")
        if moves:
            moves[0] = replace(moves[0], laser=False)
        return cls(moves, hatch, dict(data.get("metadata", {})))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as e:
                raise ValueError(f"toolpath file {path} is not valid JSON: {e}")
        return cls.from_dict(data)

    def __repr__(self):
        return f"Toolpath(moves={len(self.moves)}, void={self.void_count()}, length={self.length():.3f}mm)"
