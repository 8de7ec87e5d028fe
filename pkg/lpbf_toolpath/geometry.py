"""
Printing-domain geometry

Polygonal domains, uniform lattice sampling at hatch spacing, Moore-neighbor
queries, turning angles, segment crossing tests, island grids and Voronoi
partitions of islands.
"""

import json
import logging
import math
from dataclasses import dataclass

import numpy as np
import shapely
from scipy.spatial import cKDTree
from shapely.geometry import MultiPoint, Point, Polygon, box
from shapely.ops import voronoi_diagram

from .errors import DegenerateDomainError

logger = logging.getLogger(__name__)

# Lattice coordinates are computed as origin + k * h; this slack absorbs the
# rounding of (x - origin) / h near integer values.
_LATTICE_SLACK = 1e-6


class PolygonDomain:
    """Simple polygon in millimetres"""

    def __init__(self, vertices):
        """
        Args:
            vertices: Ordered (x, y) vertices in mm, at least three, forming
                      a simple polygon of positive area
        """
        verts = np.asarray(vertices, dtype=np.float64)
        if verts.ndim != 2 or verts.shape[1] != 2 or len(verts) < 3:
            raise DegenerateDomainError("a domain needs at least 3 (x, y) vertices")
        polygon = Polygon(verts)
        if not polygon.is_valid:
            raise DegenerateDomainError("domain polygon is self-intersecting")
        if polygon.area <= 0:
            raise DegenerateDomainError("domain polygon has zero area")

        self.vertices = verts
        self.polygon = polygon

    @property
    def bounds(self):
        return self.polygon.bounds

    @property
    def max_length(self):
        """Largest extent of the domain (bounding-box diagonal), L"""
        xmin, ymin, xmax, ymax = self.bounds
        return math.hypot(xmax - xmin, ymax - ymin)

    def to_dict(self, seeds=None):
        data = {"units": "mm", "vertices": self.vertices.tolist()}
        if seeds is not None:
            data["seeds"] = np.asarray(seeds, dtype=np.float64).tolist()
        return data

    @classmethod
    def from_dict(cls, data):
        if data.get("units", "mm") != "mm":
            raise DegenerateDomainError(f"unsupported domain units {data.get('units')!r}")
        if "vertices" not in data:
            raise DegenerateDomainError("domain file has no 'vertices'")
        return cls(data["vertices"])

    def __repr__(self):
        return f"PolygonDomain(vertices={len(self.vertices)}, area={self.polygon.area:.4f}mm^2)"


def load_domain(path):
    """
    Read a domain JSON file

    Returns:
        (PolygonDomain, seeds) where seeds is an (k, 2) array or None
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as e:
            raise DegenerateDomainError(f"domain file {path} is not valid JSON: {e}")
    seeds = data.get("seeds")
    if seeds is not None:
        seeds = np.asarray(seeds, dtype=np.float64)
    return PolygonDomain.from_dict(data), seeds


def rectangle(width, height, origin=(0.0, 0.0)):
    x0, y0 = origin
    return PolygonDomain([(x0, y0), (x0 + width, y0), (x0 + width, y0 + height), (x0, y0 + height)])


def regular_polygon(n_sides, radius, center=(0.0, 0.0), flat_bottom=True):
    """
    Regular polygon inscribed in a circle of the given radius

    With flat_bottom the lowest edge is horizontal.
    """
    if n_sides < 3:
        raise DegenerateDomainError("a regular polygon needs at least 3 sides")
    cx, cy = center
    start = -math.pi / 2 - math.pi / n_sides if flat_bottom else 0.0
    angles = start + 2 * math.pi * np.arange(n_sides) / n_sides
    return PolygonDomain(np.column_stack([cx + radius * np.cos(angles), cy + radius * np.sin(angles)]))


class SampleGrid:
    """
    Uniform lattice of sample points with per-point visit flags and
    collision counters

    Points are kept in row-major order (ascending lattice row j, then
    column i), so index 0 is the lower-left-most point.
    """

    def __init__(self, lattice, hatch, origin, parent_index=None):
        """
        Args:
            lattice: (N, 2) integer lattice coordinates (i, j)
            hatch: Lattice pitch h in mm
            origin: (x, y) of lattice coordinate (0, 0) in mm
            parent_index: Optional index of each point in the grid this one
                          was cut from
        """
        lattice = np.asarray(lattice, dtype=np.int64).reshape(-1, 2)
        if hatch <= 0:
            raise ValueError("hatch spacing must be positive")
        order = np.lexsort((lattice[:, 0], lattice[:, 1]))
        self.lattice = lattice[order]
        self.hatch = float(hatch)
        self.origin = (float(origin[0]), float(origin[1]))
        self.points = np.column_stack([
            self.origin[0] + self.lattice[:, 0] * self.hatch,
            self.origin[1] + self.lattice[:, 1] * self.hatch,
        ])
        if parent_index is None:
            self.parent_index = np.arange(len(self.lattice))
        else:
            self.parent_index = np.asarray(parent_index, dtype=np.int64)[order]

        self._lookup = {(int(i), int(j)): k for k, (i, j) in enumerate(self.lattice)}
        if len(self._lookup) != len(self.lattice):
            raise ValueError("duplicate lattice points")
        self._tree = cKDTree(self.points) if len(self.points) else None

        self.visited = np.zeros(len(self.points), dtype=bool)
        self.collisions = np.zeros(len(self.points), dtype=np.int64)

    @property
    def n_points(self):
        return len(self.points)

    @property
    def hatch_um(self):
        return self.hatch * 1000.0

    @property
    def bounds(self):
        mins = self.points.min(axis=0)
        maxs = self.points.max(axis=0)
        return float(mins[0]), float(mins[1]), float(maxs[0]), float(maxs[1])

    @property
    def max_length(self):
        xmin, ymin, xmax, ymax = self.bounds
        return max(math.hypot(xmax - xmin, ymax - ymin), self.hatch)

    def lattice_index(self, i, j):
        """Point index at lattice coordinate (i, j), or None outside the grid"""
        return self._lookup.get((int(i), int(j)))

    def within(self, center, radius):
        """Sorted indices of points within radius of point `center` (inclusive)"""
        found = self._tree.query_ball_point(self.points[center], radius * (1 + 1e-9))
        return sorted(found)

    def neighbor_lists(self, radius=None):
        """Sorted neighbor indices of every point within radius (Moore neighborhood by default)"""
        if radius is None:
            radius = math.sqrt(2.0) * self.hatch
        if self._tree is None:
            return []
        found = self._tree.query_ball_point(self.points, radius * (1 + 1e-9))
        return [sorted(k for k in ks if k != c) for c, ks in enumerate(found)]

    def reset(self):
        self.visited[:] = False
        self.collisions[:] = 0

    def copy(self):
        clone = SampleGrid.__new__(SampleGrid)
        clone.__dict__.update(self.__dict__)
        clone.visited = self.visited.copy()
        clone.collisions = self.collisions.copy()
        return clone

    def subset(self, indices):
        """
        Grid made of the given points, on the same lattice

        parent_index of the result refers to the root grid this one descends from.
        """
        indices = np.asarray(indices, dtype=np.int64)
        return SampleGrid(self.lattice[indices], self.hatch, self.origin,
                          parent_index=self.parent_index[indices])

    def __repr__(self):
        return f"SampleGrid(points={self.n_points}, h={self.hatch_um:.1f}um)"


def sample_uniform(domain, h, anchor=None, tol=1e-9):
    """
    Sample the domain on an axis-aligned lattice of pitch h

    Args:
        domain: PolygonDomain (or shapely polygon)
        h: Hatch spacing in mm
        anchor: Lattice anchor (x, y); defaults to the bounding-box minimum corner
        tol: Boundary tolerance in mm; points on or within tol of the boundary are kept

    Returns:
        SampleGrid in row-major order
    """
    if h <= 0:
        raise ValueError("hatch spacing must be positive")
    polygon = domain.polygon if isinstance(domain, PolygonDomain) else domain
    xmin, ymin, xmax, ymax = polygon.bounds
    if xmax - xmin < h or ymax - ymin < h:
        raise DegenerateDomainError(
            f"domain {xmax - xmin:.4g}x{ymax - ymin:.4g}mm is smaller than the hatch {h}mm"
        )
    ax, ay = (xmin, ymin) if anchor is None else anchor

    i = np.arange(math.ceil((xmin - ax) / h - _LATTICE_SLACK), math.floor((xmax - ax) / h + _LATTICE_SLACK) + 1)
    j = np.arange(math.ceil((ymin - ay) / h - _LATTICE_SLACK), math.floor((ymax - ay) / h + _LATTICE_SLACK) + 1)
    jj, ii = np.meshgrid(j, i, indexing="ij")
    ii = ii.ravel()
    jj = jj.ravel()
    inside = shapely.dwithin(polygon, shapely.points(ax + ii * h, ay + jj * h), tol)
    if not np.any(inside):
        raise DegenerateDomainError("no lattice point falls inside the domain")

    grid = SampleGrid(np.column_stack([ii[inside], jj[inside]]), h, (ax, ay))
    logger.debug("Sampled %d points at h=%.4gmm", grid.n_points, h)
    return grid


def knn_candidates(grid, center, radius=None, unvisited_only=False):
    """
    Grid points within radius of `center`, excluding it

    The default radius sqrt(2)*h returns the Moore neighborhood: 8 for an
    interior point, 5 on a straight edge, 3 in a rectangle corner.
    """
    if radius is None:
        radius = math.sqrt(2.0) * grid.hatch
    found = [k for k in grid.within(center, radius) if k != center]
    if unvisited_only:
        found = [k for k in found if not grid.visited[k]]
    return found


def turning_angle(incoming_dir, outgoing_dir):
    """
    Angle (degrees, [0, 180]) between the reversed incoming direction and the
    outgoing direction: 180 is a straight continuation, 0 a full reversal.
    """
    ux, uy = -float(incoming_dir[0]), -float(incoming_dir[1])
    vx, vy = float(outgoing_dir[0]), float(outgoing_dir[1])
    if (ux == 0 and uy == 0) or (vx == 0 and vy == 0):
        raise ValueError("turning angle needs two nonzero direction vectors")
    return math.degrees(math.atan2(abs(ux * vy - uy * vx), ux * vx + uy * vy))


@dataclass(frozen=True)
class Segment:
    a: tuple
    b: tuple
    laser: bool = True

    def __post_init__(self):
        if self.a[0] == self.b[0] and self.a[1] == self.b[1]:
            raise ValueError("segment endpoints must differ")

    @property
    def length(self):
        return math.hypot(self.b[0] - self.a[0], self.b[1] - self.a[1])


def _orient(a, b, c):
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _sign(value, eps):
    if value > eps:
        return 1
    if value < -eps:
        return -1
    return 0


def _same_point(p, q, eps):
    return abs(p[0] - q[0]) <= eps and abs(p[1] - q[1]) <= eps


def _on_segment(p, a, b, eps):
    return (min(a[0], b[0]) - eps <= p[0] <= max(a[0], b[0]) + eps
            and min(a[1], b[1]) - eps <= p[1] <= max(a[1], b[1]) + eps)


def segments_intersect(s1, s2):
    """
    True iff the segments meet at a point interior to at least one of them

    Segments sharing only an endpoint do not intersect; a T-junction or a
    collinear overlap of positive length does.

    Args:
        s1, s2: Segment objects or ((x, y), (x, y)) pairs
    """
    p1, p2 = (s1.a, s1.b) if isinstance(s1, Segment) else s1
    q1, q2 = (s2.a, s2.b) if isinstance(s2, Segment) else s2

    scale = max(abs(c) for pt in (p1, p2, q1, q2) for c in pt) or 1.0
    eps_len = 1e-12 * scale
    eps_area = 1e-12 * scale * scale

    d1 = _sign(_orient(p1, p2, q1), eps_area)
    d2 = _sign(_orient(p1, p2, q2), eps_area)
    d3 = _sign(_orient(q1, q2, p1), eps_area)
    d4 = _sign(_orient(q1, q2, p2), eps_area)

    if d1 == d2 == d3 == d4 == 0:
        # collinear: intersect iff the overlap has positive length
        dx, dy = p2[0] - p1[0], p2[1] - p1[1]
        norm = math.hypot(dx, dy)
        ts = sorted(((q[0] - p1[0]) * dx + (q[1] - p1[1]) * dy) / norm for q in (q1, q2))
        return min(norm, ts[1]) - max(0.0, ts[0]) > eps_len

    if d1 * d2 < 0 and d3 * d4 < 0:
        return True

    # one endpoint touching the other segment: counts only away from its endpoints
    if d1 == 0 and _on_segment(q1, p1, p2, eps_len):
        return not (_same_point(q1, p1, eps_len) or _same_point(q1, p2, eps_len))
    if d2 == 0 and _on_segment(q2, p1, p2, eps_len):
        return not (_same_point(q2, p1, eps_len) or _same_point(q2, p2, eps_len))
    if d3 == 0 and _on_segment(p1, q1, q2, eps_len):
        return not (_same_point(p1, q1, eps_len) or _same_point(p1, q2, eps_len))
    if d4 == 0 and _on_segment(p2, q1, q2, eps_len):
        return not (_same_point(p2, q1, eps_len) or _same_point(p2, q2, eps_len))
    return False


class SegmentIndex:
    """
    Laser-on segments between grid points, indexed by endpoint

    Segments are assumed no longer than sqrt(2)*h (lattice neighbor moves),
    so a candidate move can only cross segments with an endpoint within
    2*sqrt(2)*h of its start.
    """

    def __init__(self, grid):
        self.grid = grid
        self._by_point = {}
        self._reach = 2.0 * math.sqrt(2.0) * grid.hatch

    def add(self, a, b):
        seg = (a, b)
        self._by_point.setdefault(a, []).append(seg)
        self._by_point.setdefault(b, []).append(seg)

    def clear(self):
        self._by_point.clear()

    def crosses(self, a, b):
        """True iff the move a->b properly intersects any indexed segment"""
        pts = self.grid.points
        move = (tuple(pts[a]), tuple(pts[b]))
        seen = set()
        for k in self.grid.within(a, self._reach):
            for seg in self._by_point.get(k, ()):
                if seg in seen:
                    continue
                seen.add(seg)
                if segments_intersect(move, (tuple(pts[seg[0]]), tuple(pts[seg[1]]))):
                    return True
        return False


@dataclass
class IslandGrid:
    """Square islands of a domain, clipped at its boundary"""

    size: float
    origin: tuple
    shape: tuple
    cells: list
    islands: list
    centroids: np.ndarray

    def __len__(self):
        return len(self.islands)

    def assign(self, points):
        """
        Island index for each point

        Points on a shared island edge go to the island above/right of it;
        points on the outer max edge go to the last row/column.
        """
        points = np.asarray(points, dtype=np.float64)
        rows, cols = self.shape
        c = np.floor((points[:, 0] - self.origin[0]) / self.size + _LATTICE_SLACK).astype(np.int64)
        r = np.floor((points[:, 1] - self.origin[1]) / self.size + _LATTICE_SLACK).astype(np.int64)
        c = np.clip(c, 0, cols - 1)
        r = np.clip(r, 0, rows - 1)
        lookup = {cell: k for k, cell in enumerate(self.cells)}
        out = np.empty(len(points), dtype=np.int64)
        for n, key in enumerate(zip(r.tolist(), c.tolist())):
            k = lookup.get(key)
            if k is None:
                # cell clipped away entirely; fall back to the closest island
                k = int(np.argmin(np.hypot(*(self.centroids - points[n]).T)))
            out[n] = k
        return out


def island_partition(domain, size):
    """
    Axis-aligned square islands of the given size covering the domain

    Cells are anchored at the bounding-box minimum corner, clipped to the
    domain and listed in row-major order; empty clips are dropped.
    """
    if size <= 0:
        raise ValueError("island size must be positive")
    polygon = domain.polygon if isinstance(domain, PolygonDomain) else domain
    xmin, ymin, xmax, ymax = polygon.bounds
    cols = max(1, math.ceil((xmax - xmin) / size - _LATTICE_SLACK))
    rows = max(1, math.ceil((ymax - ymin) / size - _LATTICE_SLACK))

    cells, islands, centroids = [], [], []
    for r in range(rows):
        for c in range(cols):
            square = box(xmin + c * size, ymin + r * size, xmin + (c + 1) * size, ymin + (r + 1) * size)
            clipped = square.intersection(polygon)
            if clipped.is_empty or clipped.area <= 0:
                continue
            cells.append((r, c))
            islands.append(clipped)
            centroids.append((clipped.centroid.x, clipped.centroid.y))

    return IslandGrid(size=float(size), origin=(xmin, ymin), shape=(rows, cols), cells=cells,
                      islands=islands, centroids=np.asarray(centroids, dtype=np.float64).reshape(-1, 2))


@dataclass
class VoronoiPartition:
    seeds: np.ndarray
    cells: list
    labels: list

    def assign(self, points):
        """Nearest-seed (cell) index for each point, ties to the lowest seed index"""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        d2 = ((points[:, None, :] - self.seeds[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(d2, axis=1)


def default_voronoi_seeds(island, n_random=10, rng=None):
    """
    The 4 bounding-rectangle vertices of the island plus n_random uniform
    points drawn inside it
    """
    polygon = island.polygon if isinstance(island, PolygonDomain) else island
    rng = np.random.default_rng() if rng is None else rng
    xmin, ymin, xmax, ymax = polygon.bounds
    seeds = [(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)]
    attempts = 0
    while len(seeds) < 4 + n_random:
        attempts += 1
        if attempts > 10000 * (n_random + 1):
            raise DegenerateDomainError("could not draw Voronoi seeds inside the island")
        x, y = rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)
        if polygon.contains(Point(x, y)) and (x, y) not in seeds:
            seeds.append((float(x), float(y)))
    return np.asarray(seeds, dtype=np.float64)


def voronoi_partition(island, seeds):
    """
    Voronoi cells of the seeds clipped to the island

    Returns:
        VoronoiPartition with one cell per seed (in seed order), labelled B1..Bk
    """
    polygon = island.polygon if isinstance(island, PolygonDomain) else island
    seeds = np.asarray(seeds, dtype=np.float64).reshape(-1, 2)
    if len(seeds) == 0:
        raise ValueError("at least one seed is required")
    if len(np.unique(seeds, axis=0)) != len(seeds):
        raise ValueError("duplicate Voronoi seeds")

    labels = [f"B{k + 1}" for k in range(len(seeds))]
    if len(seeds) == 1:
        return VoronoiPartition(seeds=seeds, cells=[polygon], labels=labels)

    xmin, ymin, xmax, ymax = polygon.bounds
    pad = 2.0 * max(xmax - xmin, ymax - ymin, 1e-9)
    envelope = box(min(xmin, seeds[:, 0].min()) - pad, min(ymin, seeds[:, 1].min()) - pad,
                   max(xmax, seeds[:, 0].max()) + pad, max(ymax, seeds[:, 1].max()) + pad)
    regions = list(voronoi_diagram(MultiPoint([tuple(s) for s in seeds]), envelope=envelope).geoms)

    cells = []
    for seed in seeds:
        point = Point(seed)
        region = min(regions, key=lambda g: g.distance(point))
        cells.append(region.intersection(polygon))
    return VoronoiPartition(seeds=seeds, cells=cells, labels=labels)
