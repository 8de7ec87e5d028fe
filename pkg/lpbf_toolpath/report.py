"""
CSV tables, SVG plots and the run manifest
"""

import csv
import datetime
import hashlib
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field

logger = logging.getLogger(__name__)

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2")


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _cell(value):
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else str(value)
    return value


def write_depth_trace(path, trace):
    write_csv(path, ("step", "time_s", "x_mm", "y_mm", "depth_um"), trace.rows())


def write_episode_log(path, log):
    write_csv(path, ("episode", "total_reward", "sensitive_count", "collisions", "isolated", "steps"),
              ((r.episode, r.total_reward, r.sensitive_count, r.collisions, r.isolated, r.steps)
               for r in log.records))


SUMMARY_COLUMNS = ("strategy", "avg_depth_um", "peak_depth_um", "sensitive_count", "void_moves", "path_length_mm")


def write_summary(path, rows):
    write_csv(path, SUMMARY_COLUMNS, ([row[c] for c in SUMMARY_COLUMNS] for row in rows))


def write_angle_study(path, results):
    write_csv(path, ("angle_deg", "max_depth_um"), results)


def write_field_snapshot(path, xs, ys, field_values):
    write_csv(path, ("x_mm", "y_mm", "temperature_k"),
              ((float(x), float(y), float(field_values[r, c]))
               for r, y in enumerate(ys) for c, x in enumerate(xs)))


def write_grid(path, grid):
    write_csv(path, ("index", "i", "j", "x_mm", "y_mm"),
              ((k, int(i), int(j), float(x), float(y))
               for k, ((i, j), (x, y)) in enumerate(zip(grid.lattice, grid.points))))


class SvgCanvas:
    """Fixed-size SVG page with a linear data-to-pixel mapping"""

    def __init__(self, extent, width=640, height=480, margin=50, equal_aspect=False):
        xmin, ymin, xmax, ymax = extent
        if xmax <= xmin:
            xmax = xmin + 1.0
        if ymax <= ymin:
            ymax = ymin + 1.0
        self.width, self.height, self.margin = width, height, margin
        sx = (width - 2 * margin) / (xmax - xmin)
        sy = (height - 2 * margin) / (ymax - ymin)
        if equal_aspect:
            sx = sy = min(sx, sy)
        self._x0, self._y0, self._sx, self._sy = xmin, ymin, sx, sy
        self.elements = []

    def px(self, x, y):
        return (self.margin + (x - self._x0) * self._sx,
                self.height - self.margin - (y - self._y0) * self._sy)

    def line(self, a, b, color="#000000", width=1.0, dashed=False):
        (x1, y1), (x2, y2) = self.px(*a), self.px(*b)
        dash = ";stroke-dasharray:4, 3" if dashed else ""
        self.elements.append(f'<path d="M{x1:.2f} {y1:.2f}L{x2:.2f} {y2:.2f}" '
                             f'style="fill:none;stroke:{color};stroke-width:{width}{dash}"/>')

    def polyline(self, points, color="#000000", width=1.0, dashed=False, closed=False):
        if len(points) < 2:
            return
        coords = " ".join("{:.2f},{:.2f}".format(*self.px(x, y)) for x, y in points)
        tag = "polygon" if closed else "polyline"
        dash = ";stroke-dasharray:4, 3" if dashed else ""
        self.elements.append(f'<{tag} points="{coords}" style="fill:none;stroke:{color};stroke-width:{width}{dash}"/>')

    def circle(self, center, r=1.5, color="#000000"):
        cx, cy = self.px(*center)
        self.elements.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{r}" style="fill:{color}"/>')

    def triangle_down(self, center, size=5.0, color="#000000"):
        cx, cy = self.px(*center)
        pts = f"{cx - size:.2f},{cy - size:.2f} {cx + size:.2f},{cy - size:.2f} {cx:.2f},{cy + size:.2f}"
        self.elements.append(f'<polygon points="{pts}" style="fill:{color}"/>')

    def text(self, x, y, label, size=12, anchor="start", color="#000000"):
        label = str(label).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
        self.elements.append(f'<text x="{x:.2f}" y="{y:.2f}" text-anchor="{anchor}" '
                             f'style="font-size:{size}px;font-family:arial;fill:{color}">{label}</text>')

    def axes(self, xlabel="", ylabel="", title=""):
        m, w, h = self.margin, self.width, self.height
        self.elements.append(f'<path d="M{m} {h - m}H{w - m}M{m} {h - m}V{m}" '
                             'style="fill:none;stroke:#000000;stroke-width:1"/>')
        if xlabel:
            self.text(w / 2, h - m / 4, xlabel, anchor="middle")
        if ylabel:
            self.text(m / 4, m - 10, ylabel)
        if title:
            self.text(w / 2, m / 2, title, size=14, anchor="middle")

    def render(self):
        return ("<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n"
                f'<svg version="1.1" viewBox="0 0 {self.width} {self.height}" width="{self.width}" '
                f'height="{self.height}" xmlns="http://www.w3.org/2000/svg">\n'
                f'<rect style="fill:rgb(255, 255, 255)" width="{self.width}" height="{self.height}"/>\n'
                + "\n".join(self.elements) + "\n</svg>\n")

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.render())


def _extent(points, pad=0.0):
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    return min(xs) - pad, min(ys) - pad, max(xs) + pad, max(ys) + pad


def svg_toolpath(path, toolpath, outline=None, title=""):
    """Laser-on moves as solid strokes, void moves dashed"""
    pts = [(m.x, m.y) for m in toolpath.moves]
    if outline is not None:
        pts = pts + [tuple(v) for v in outline]
    canvas = SvgCanvas(_extent(pts, toolpath.hatch), width=600, height=600, margin=30, equal_aspect=True)
    if outline is not None:
        canvas.polyline([tuple(v) for v in outline], color="#999999", closed=True)
    run = []
    for a, b in zip(toolpath.moves, toolpath.moves[1:]):
        if b.laser:
            if not run:
                run = [(a.x, a.y)]
            run.append((b.x, b.y))
        else:
            canvas.polyline(run, color=PALETTE[0], width=1.5)
            run = []
            canvas.line((a.x, a.y), (b.x, b.y), color=PALETTE[1], width=0.8, dashed=True)
    canvas.polyline(run, color=PALETTE[0], width=1.5)
    if toolpath.moves:
        canvas.circle((toolpath.moves[0].x, toolpath.moves[0].y), r=3, color=PALETTE[2])
    if title:
        canvas.text(canvas.width / 2, 20, title, size=14, anchor="middle")
    canvas.save(path)


def svg_points(path, grid, outline=None, title="sample points"):
    pts = [tuple(p) for p in grid.points]
    if outline is not None:
        pts = pts + [tuple(v) for v in outline]
    canvas = SvgCanvas(_extent(pts, grid.hatch), width=600, height=600, margin=30, equal_aspect=True)
    if outline is not None:
        canvas.polyline([tuple(v) for v in outline], color="#999999", closed=True)
    for p in grid.points:
        canvas.circle(tuple(p), r=1.2)
    canvas.text(canvas.width / 2, 20, title, size=14, anchor="middle")
    canvas.save(path)


def _series_extent(series):
    xs = [x for s in series for x, _ in s]
    ys = [y for s in series for _, y in s if math.isfinite(y)]
    if not xs or not ys:
        return 0.0, 0.0, 1.0, 1.0
    return min(xs), min(ys), max(xs), max(ys)


def svg_training_curves(path, log):
    """Episode reward (left) and sensitive-region count (right) side by side"""
    episodes = [r.episode for r in log.records]
    reward = list(zip(episodes, (r.total_reward for r in log.records)))
    sensitive = list(zip(episodes, (float(r.sensitive_count) for r in log.records)))
    parts = []
    for series, label, color in ((reward, "total reward", PALETTE[0]), (sensitive, "sensitive regions", PALETTE[1])):
        canvas = SvgCanvas(_series_extent([series]), width=480, height=360)
        canvas.axes("episode", label)
        canvas.polyline(series, color=color)
        parts.append(canvas)
    body = "\n".join(
        f'<g transform="translate({480 * n} 0)">\n' + "\n".join(c.elements) + "\n</g>" for n, c in enumerate(parts))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n"
                 '<svg version="1.1" viewBox="0 0 960 360" width="960" height="360" '
                 'xmlns="http://www.w3.org/2000/svg">\n'
                 '<rect style="fill:rgb(255, 255, 255)" width="960" height="360"/>\n'
                 f"{body}\n</svg>\n")


def svg_depth_overlay(path, traces):
    """
    Depth against step for several strategies, with dashed average lines and
    a downward triangle on each peak

    Args:
        traces: Mapping name -> MeltPoolTrace
    """
    series = {name: list(enumerate(float(d) for d in t.depths)) for name, t in traces.items()}
    xmin, ymin, xmax, ymax = _series_extent(list(series.values()))
    canvas = SvgCanvas((xmin, 0.0, xmax, ymax * 1.1 if ymax > 0 else 1.0), width=800, height=450)
    canvas.axes("emission step", "melt depth (um)", "melt pool depth")
    for n, (name, pts) in enumerate(series.items()):
        color = PALETTE[n % len(PALETTE)]
        canvas.polyline(pts, color=color, width=0.8)
        if pts:
            avg = sum(d for _, d in pts) / len(pts)
            peak_step, peak = max(pts, key=lambda p: (p[1], -p[0]))
            canvas.line((xmin, avg), (xmax, avg), color=color, width=1.5, dashed=True)
            canvas.triangle_down((peak_step, peak), color=color)
        canvas.text(canvas.width - canvas.margin - 150, canvas.margin + 16 * (n + 1), name, color=color)
    canvas.save(path)


def svg_angle_study(path, results):
    pts = sorted((float(a), float(d)) for a, d in results)
    xmin, ymin, xmax, ymax = _series_extent([pts])
    canvas = SvgCanvas((0.0, 0.0, 180.0, ymax * 1.1 if ymax > 0 else 1.0))
    canvas.axes("turning angle (deg)", "max melt depth (um)", "melt depth vs turning angle")
    canvas.polyline(pts, color=PALETTE[0])
    for p in pts:
        canvas.circle(p, r=3, color=PALETTE[0])
    canvas.save(path)


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    """Record of one command run: settings, seeds, calibration and every output file"""

    command: str
    version: str
    config: dict
    seeds: dict = field(default_factory=dict)
    calibration: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    started: str = field(default_factory=_now)
    finished: str = ""
    outputs: list = field(default_factory=list)

    def write(self, out_dir, name="manifest.json"):
        """Inventory every file under out_dir, then write the manifest there"""
        self.finished = _now()
        self.outputs = []
        for root, _, files in os.walk(out_dir):
            for fname in sorted(files):
                full = os.path.join(root, fname)
                rel = os.path.relpath(full, out_dir).replace(os.sep, "/")
                if rel == name:
                    continue
                self.outputs.append({"path": rel, "bytes": os.path.getsize(full), "sha256": sha256_file(full)})
        self.outputs.sort(key=lambda o: o["path"])
        target = os.path.join(out_dir, name)
        with open(target, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2)
            fh.write("\n")
        logger.debug("Manifest lists %d outputs", len(self.outputs))
        return target
