"""
Transient heat conduction for scan paths

Each laser-on stretch of a toolpath is split into short emission events.
Every event is an instantaneous Gaussian surface source on an insulated
half-space, and the temperature anywhere is the ambient temperature plus
the superposition of the event kernels. Melt-pool depth is read off the
vertical line under the beam.

Units: positions in mm, depths in um, time in s; the kernel itself is
evaluated in SI.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .toolpath import Move, Toolpath

logger = logging.getLogger(__name__)

# Turning angles of the template study, 180 deg down to arctan(1/5)
TEMPLATE_ANGLES = (180.0, 150.0, 120.0, 90.0, 60.0, 45.0, 30.0, math.degrees(math.atan(1.0 / 5.0)))


@dataclass(frozen=True)
class MaterialParams:
    conductivity: float = 20.0       # W/(m K)
    density: float = 7950.0          # kg/m^3
    heat_capacity: float = 500.0     # J/(kg K)
    melt_temperature: float = 1700.0
    ambient_temperature: float = 300.0

    def __post_init__(self):
        for name in ("conductivity", "density", "heat_capacity", "melt_temperature", "ambient_temperature"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.melt_temperature <= self.ambient_temperature:
            raise ValueError("melt temperature must exceed ambient temperature")

    @property
    def diffusivity(self):
        """a = k / (rho cp), m^2/s"""
        return self.conductivity / (self.density * self.heat_capacity)

    @property
    def volumetric_heat(self):
        return self.density * self.heat_capacity


@dataclass(frozen=True)
class LaserParams:
    power: float = 50.0           # W
    absorptivity: float = 0.5
    beam_sigma_um: float = 6.25   # D4sigma of a 25 um spot
    velocity: float = 1000.0      # mm/s

    def __post_init__(self):
        if self.power <= 0:
            raise ValueError("laser power must be positive")
        if not 0 < self.absorptivity <= 1:
            raise ValueError("absorptivity must be in (0, 1]")
        if self.beam_sigma_um <= 0:
            raise ValueError("beam sigma must be positive")
        if self.velocity <= 0:
            raise ValueError("scan velocity must be positive")

    @property
    def absorbed_power(self):
        return self.absorptivity * self.power


@dataclass(frozen=True)
class EmissionEvent:
    x: float
    y: float
    time: float
    energy: float

    def __post_init__(self):
        if self.energy <= 0:
            raise ValueError("event energy must be positive")


class EventList:
    """Time-ordered emission events stored as parallel arrays"""

    def __init__(self, xs, ys, times, energies, end_time=None):
        self.xs = np.asarray(xs, dtype=np.float64)
        self.ys = np.asarray(ys, dtype=np.float64)
        self.times = np.asarray(times, dtype=np.float64)
        self.energies = np.asarray(energies, dtype=np.float64)
        if not (len(self.xs) == len(self.ys) == len(self.times) == len(self.energies)):
            raise ValueError("event arrays differ in length")
        if len(self.times) > 1 and np.any(np.diff(self.times) < 0):
            raise ValueError("event times must be non-decreasing")
        last = float(self.times[-1]) if len(self.times) else 0.0
        self.end_time = last if end_time is None else max(float(end_time), last)
        self.peak_energy = float(self.energies.max()) if len(self.energies) else 0.0
        self._tree = None

    @classmethod
    def from_events(cls, events, end_time=None):
        events = sorted(events, key=lambda e: e.time)
        return cls([e.x for e in events], [e.y for e in events],
                   [e.time for e in events], [e.energy for e in events], end_time)

    def __len__(self):
        return len(self.times)

    def __getitem__(self, k):
        return EmissionEvent(float(self.xs[k]), float(self.ys[k]), float(self.times[k]), float(self.energies[k]))

    def __iter__(self):
        return (self[k] for k in range(len(self)))

    def near(self, x, y, radius):
        """Ascending indices of the events within radius mm of (x, y)"""
        if not math.isfinite(radius):
            return np.arange(len(self))
        if len(self) == 0:
            return np.zeros(0, dtype=np.int64)
        if self._tree is None:
            self._tree = cKDTree(np.column_stack([self.xs, self.ys]))
        return np.sort(np.asarray(self._tree.query_ball_point((x, y), radius), dtype=np.int64))

    @property
    def total_energy(self):
        return float(self.energies.sum())

    def merge(self, other):
        """Union of two event lists, re-sorted by time"""
        times = np.concatenate([self.times, other.times])
        order = np.argsort(times, kind="stable")
        return EventList(np.concatenate([self.xs, other.xs])[order], np.concatenate([self.ys, other.ys])[order],
                         times[order], np.concatenate([self.energies, other.energies])[order],
                         max(self.end_time, other.end_time))

    def translated(self, dx, dy, dt=0.0):
        return EventList(self.xs + dx, self.ys + dy, self.times + dt, self.energies, self.end_time + dt)


def kernel_temp(event, query, t, material, laser, tau_min=0.0):
    """
    Temperature rise at `query` caused by one emission event

    Args:
        event: EmissionEvent
        query: (x, y, z) in mm, z >= 0 measured downward from the surface
        t: Evaluation time (s), t >= event.time
        material: MaterialParams
        laser: LaserParams (beam width)
        tau_min: Floor on the elapsed time t - event.time

    Returns:
        Temperature rise in K
    """
    x, y, z = query
    if z < 0:
        raise ValueError("query depth must be >= 0")
    tau = t - event.time
    if tau < 0:
        raise ValueError(f"query time {t} precedes event time {event.time}")
    tau = max(tau, tau_min)
    if tau <= 0:
        raise ValueError("kernel is singular at tau = 0; pass a positive tau_min")
    return float(_rise(material, laser.beam_sigma_um * 1e-6, event.energy, event.x - x, event.y - y, z, tau))


def _rise(material, sigma_m, energy, dx_mm, dy_mm, z_mm, tau):
    a = material.diffusivity
    lateral = sigma_m * sigma_m + 2.0 * a * tau
    r2 = (np.square(dx_mm) + np.square(dy_mm)) * 1e-6
    depth = 4.0 * a * tau
    z2 = np.square(z_mm) * 1e-6
    return (2.0 * energy / material.volumetric_heat
            / (2.0 * math.pi * lateral) * np.exp(-r2 / (2.0 * lateral))
            / np.sqrt(math.pi * depth) * np.exp(-z2 / depth))


def _segment_event_count(length_mm, velocity, dt):
    return max(1, int(round(length_mm / (velocity * dt))))


def discretize_toolpath(path, laser, dt):
    """
    Emission events of a toolpath traversed at the laser velocity

    Each laser-on segment of duration D is split into n = round(D / dt)
    equal sub-intervals (at least one); an event sits at the midpoint of each
    with energy A*P*D/n. Laser-off segments only advance the clock.

    Returns:
        EventList whose end_time is the path length divided by the velocity
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if len(path) == 0:
        raise ValueError("cannot discretize an empty toolpath")

    xs, ys, times, energies = [], [], [], []
    clock = 0.0
    for a, b in zip(path.moves, path.moves[1:]):
        length = math.hypot(b.x - a.x, b.y - a.y)
        duration = length / laser.velocity
        if b.laser and length > 0:
            n = _segment_event_count(length, laser.velocity, dt)
            frac = (np.arange(n) + 0.5) / n
            xs.append(a.x + frac * (b.x - a.x))
            ys.append(a.y + frac * (b.y - a.y))
            times.append(clock + frac * duration)
            energies.append(np.full(n, laser.absorbed_power * duration / n))
        clock += duration

    if not xs:
        return EventList([], [], [], [], end_time=clock)
    return EventList(np.concatenate(xs), np.concatenate(ys), np.concatenate(times),
                     np.concatenate(energies), end_time=clock)


@dataclass
class MeltPoolTrace:
    """Melt depth under the beam at every laser-on emission step"""

    times: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    depths: np.ndarray
    metadata: dict = None

    def __len__(self):
        return len(self.depths)

    def rows(self):
        for k in range(len(self)):
            yield k, float(self.times[k]), float(self.xs[k]), float(self.ys[k]), float(self.depths[k])


def depth_stats(trace):
    """
    Average and peak melt depth

    Args:
        trace: MeltPoolTrace or a sequence of depths in um

    Returns:
        {"avg": mean depth, "peak": max depth}
    """
    depths = np.asarray(trace.depths if isinstance(trace, MeltPoolTrace) else trace, dtype=np.float64)
    if depths.size == 0:
        raise ValueError("depth statistics of an empty trace")
    return {"avg": float(depths.mean()), "peak": float(depths.max())}


class ThermalSimulator:
    """
    Superposition solver bound to a material, a laser and solver settings
    """

    def __init__(self, material=None, laser=None, dt=2.5e-5, cutoff=0.1,
                 probe_max_um=200.0, probe_step_um=2.0, probe_tol_um=0.1, probe_lag_steps=10):
        """
        Args:
            material: MaterialParams (SS316L defaults)
            laser: LaserParams
            dt: Emission time step (s)
            cutoff: Per-event contributions below this rise (K) are dropped; 0 disables
            probe_max_um: Deepest probed point
            probe_step_um: Coarse probe pitch
            probe_tol_um: Bisection tolerance of the melt boundary
            probe_lag_steps: Trace depth is the max over this many dt after each step
        """
        if dt <= 0:
            raise ValueError("dt must be positive")
        if cutoff < 0:
            raise ValueError("cutoff must be >= 0")
        if probe_step_um <= 0 or probe_max_um < probe_step_um or probe_tol_um <= 0:
            raise ValueError("invalid depth probe settings")
        if probe_lag_steps < 0:
            raise ValueError("probe_lag_steps must be >= 0")

        self.material = material or MaterialParams()
        self.laser = laser or LaserParams()
        self.dt = float(dt)
        self.cutoff = float(cutoff)
        self.tau_min = self.dt / 2.0
        self.probe_max_um = float(probe_max_um)
        self.probe_step_um = float(probe_step_um)
        self.probe_tol_um = float(probe_tol_um)
        self.probe_lag_steps = int(probe_lag_steps)
        self._radii = {}

        logger.debug(
            "Thermal model: a=%.3em^2/s Tm=%.0fK P=%.1fW A=%.4f sigma=%.2fum v=%.0fmm/s dt=%.2es cutoff=%.3gK",
            self.material.diffusivity, self.material.melt_temperature, self.laser.power,
            self.laser.absorptivity, self.laser.beam_sigma_um, self.laser.velocity, self.dt, self.cutoff,
        )

    @classmethod
    def from_config(cls, cfg, absorptivity=None):
        """Build from a ThermalConfig; beam sigma is a quarter of the beam diameter"""
        material = MaterialParams(cfg.conductivity, cfg.density, cfg.heat_capacity,
                                  cfg.melt_temperature, cfg.ambient_temperature)
        laser = LaserParams(cfg.power_w, cfg.absorptivity if absorptivity is None else absorptivity,
                            cfg.beam_diameter_um / 4.0, cfg.velocity_mm_s)
        logger.info("Material k=%.1f rho=%.0f cp=%.0f Tm=%.0fK; laser P=%.1fW A=%.4f d=%.1fum v=%.0fmm/s",
                    material.conductivity, material.density, material.heat_capacity, material.melt_temperature,
                    laser.power, laser.absorptivity, cfg.beam_diameter_um, laser.velocity)
        return cls(material, laser, dt=cfg.dt_s, cutoff=cfg.cutoff_k, probe_max_um=cfg.probe_max_um,
                   probe_step_um=cfg.probe_step_um, probe_tol_um=cfg.probe_tol_um,
                   probe_lag_steps=cfg.probe_lag_steps)

    def with_laser(self, **changes):
        laser = dataclasses.replace(self.laser, **changes)
        return ThermalSimulator(self.material, laser, self.dt, self.cutoff, self.probe_max_um,
                                self.probe_step_um, self.probe_tol_um, self.probe_lag_steps)

    def discretize(self, path):
        return discretize_toolpath(path, self.laser, self.dt)

    def influence_radius(self, energy, cutoff=None):
        """
        Distance (mm) beyond which an event of the given energy stays below
        the cutoff at the surface for every elapsed time >= tau_min

        The peak over time is taken on a geometric time grid, past which the
        rise only decays; the bisected distance is padded by 25%.
        """
        cutoff = self.cutoff if cutoff is None else cutoff
        if cutoff <= 0:
            return math.inf
        if energy <= 0:
            return 0.0
        key = (float(energy), float(cutoff))
        if key not in self._radii:
            sigma_m = self.laser.beam_sigma_um * 1e-6
            a = self.material.diffusivity

            def peak(r_mm):
                span = 10.0 * ((r_mm * 1e-3) ** 2 + sigma_m ** 2) / a
                taus = np.geomspace(self.tau_min, max(span, 2.0 * self.tau_min), 512)
                return float(_rise(self.material, sigma_m, energy, r_mm, 0.0, 0.0, taus).max())

            lo, hi = 0.0, 1.0
            while peak(hi) >= cutoff:
                lo, hi = hi, 2.0 * hi
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                if peak(mid) >= cutoff:
                    lo = mid
                else:
                    hi = mid
            self._radii[key] = 1.25 * hi
            logger.debug("Influence radius %.4fmm for %.3eJ events at a %.3gK cutoff", 1.25 * hi, energy, cutoff)
        return self._radii[key]

    def _surface_terms(self, events, x, y, t, cutoff=None):
        # surface rise of the events emitted up to t near (x, y), and their depth decay rates
        m = int(np.searchsorted(events.times, t, side="right"))
        idx = events.near(x, y, self.influence_radius(events.peak_energy, cutoff))
        idx = idx[idx < m]
        tau = np.maximum(t - events.times[idx], self.tau_min)
        c = _rise(self.material, self.laser.beam_sigma_um * 1e-6, events.energies[idx],
                  events.xs[idx] - x, events.ys[idx] - y, 0.0, tau)
        decay = 1.0 / (4.0 * self.material.diffusivity * tau)
        return c, decay

    def temperature_at(self, events, query, t, cutoff=None):
        """
        Temperature (K) at query = (x, y, z) mm and time t

        Events emitted after t do not contribute; those contributing less than
        the cutoff are skipped.
        """
        x, y, z = query
        if z < 0:
            raise ValueError("query depth must be >= 0")
        cutoff = self.cutoff if cutoff is None else cutoff
        c, decay = self._surface_terms(events, x, y, t, cutoff)
        rise = c * np.exp(-(z * 1e-3) ** 2 * decay)
        if cutoff > 0:
            rise = rise[rise >= cutoff]
        return self.material.ambient_temperature + float(rise.sum())

    def melt_depth(self, events, beam_pos, t):
        """
        Deepest point (um) at or above melting on the vertical line under beam_pos

        Temperature decreases monotonically with depth, so the coarse probe
        lattice is searched by bisection and the boundary then refined to
        probe_tol_um. Returns 0 when the surface is below melting.
        """
        c, decay = self._surface_terms(events, beam_pos[0], beam_pos[1], t)
        if self.cutoff > 0:
            keep = c >= self.cutoff
            c, decay = c[keep], decay[keep]
        if c.size == 0:
            return 0.0
        excess = self.material.melt_temperature - self.material.ambient_temperature

        def melted(z_um):
            return float(np.dot(c, np.exp(-(z_um * 1e-6) ** 2 * decay))) >= excess

        if not melted(0.0):
            return 0.0
        steps = int(math.floor(self.probe_max_um / self.probe_step_um + 1e-9))
        if melted(steps * self.probe_step_um):
            return steps * self.probe_step_um

        lo, hi = 0, steps
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if melted(mid * self.probe_step_um):
                lo = mid
            else:
                hi = mid
        z_lo, z_hi = lo * self.probe_step_um, hi * self.probe_step_um
        while z_hi - z_lo > self.probe_tol_um:
            mid = 0.5 * (z_lo + z_hi)
            if melted(mid):
                z_lo = mid
            else:
                z_hi = mid
        return z_lo

    def trace(self, path_or_events):
        """
        Melt-pool depth trace of a toolpath

        Step k probes under emission event k; its depth is the largest melt
        depth there over times t_k, t_k + dt, ..., t_k + probe_lag_steps*dt,
        since the pool bottom trails the beam.
        """
        events = path_or_events if isinstance(path_or_events, EventList) else self.discretize(path_or_events)
        depths = np.zeros(len(events))
        for k in range(len(events)):
            x, y, t = events.xs[k], events.ys[k], events.times[k]
            depths[k] = max(self.melt_depth(events, (x, y), t + m * self.dt)
                            for m in range(self.probe_lag_steps + 1))
        return MeltPoolTrace(events.times.copy(), events.xs.copy(), events.ys.copy(), depths,
                             metadata={"absorptivity": self.laser.absorptivity})

    def field_snapshot(self, events, t, extent, n=(40, 40), z=0.0):
        """
        Temperature on a regular (x, y) grid at depth z

        Args:
            extent: (xmin, ymin, xmax, ymax) in mm
            n: (nx, ny) grid resolution

        Returns:
            (xs, ys, T) with T of shape (ny, nx)
        """
        xmin, ymin, xmax, ymax = extent
        xs = np.linspace(xmin, xmax, n[0])
        ys = np.linspace(ymin, ymax, n[1])
        field = np.empty((len(ys), len(xs)))
        for r, y in enumerate(ys):
            for c, x in enumerate(xs):
                field[r, c] = self.temperature_at(events, (x, y, z), t)
        return xs, ys, field

    def straight_scan_depth(self, length_mm=2.0):
        """Steady melt depth: mean trace depth over the second half of a straight scan"""
        path = Toolpath([Move(0, 0.0, 0.0, False), Move(1, length_mm, 0.0, True)], hatch=length_mm)
        trace = self.trace(path)
        return float(trace.depths[len(trace) // 2:].mean())

    def template_path(self, angle, leg_mm=1.0):
        """Two laser-on legs meeting at the origin with the given turning angle"""
        rad = math.radians(angle)
        return Toolpath([
            Move(0, -leg_mm, 0.0, False),
            Move(1, 0.0, 0.0, True),
            Move(2, -leg_mm * math.cos(rad), leg_mm * math.sin(rad), True),
        ], hatch=leg_mm)

    def angle_template_study(self, angles=TEMPLATE_ANGLES, leg_mm=1.0, near_vertex_mm=0.25):
        """
        Maximum melt depth near the vertex of each two-leg template

        Returns:
            List of (angle, depth_um) in the order given
        """
        results = []
        for angle in angles:
            if not 0 < angle <= 180:
                raise ValueError(f"template angle {angle} outside (0, 180]")
            trace = self.trace(self.template_path(angle, leg_mm))
            near = np.hypot(trace.xs, trace.ys) <= near_vertex_mm
            depth = float(trace.depths[near].max()) if np.any(near) else 0.0
            logger.debug("Template %.2fdeg: max depth %.2fum", angle, depth)
            results.append((float(angle), depth))
        return results


def angle_template_study(angles, laser, material, **solver):
    """Module-level form of ThermalSimulator.angle_template_study"""
    study = {k: solver.pop(k) for k in ("leg_mm", "near_vertex_mm") if k in solver}
    return ThermalSimulator(material, laser, **solver).angle_template_study(angles, **study)


@dataclass(frozen=True)
class CalibrationResult:
    absorptivity: float
    steady_depth_um: float
    target_depth_um: float
    clamped: bool


def calibrate_absorptivity(simulator, target_um=45.0, low=0.2, high=1.0, length_mm=2.0, tol=1e-4):
    """
    Bisect the absorptivity so a straight scan reaches the target steady depth

    Depth is monotone in absorptivity. When the bracket cannot reach the
    target the nearer end is returned and flagged as clamped.

    Returns:
        CalibrationResult
    """
    if not 0 < low < high <= 1:
        raise ValueError("calibration bracket must satisfy 0 < low < high <= 1")

    def depth_at(a):
        return simulator.with_laser(absorptivity=a).straight_scan_depth(length_mm)

    d_low, d_high = depth_at(low), depth_at(high)
    if d_high < target_um:
        logger.warning("Calibration: depth %.2fum at A=%.3f is below the %.1fum target; using A=%.3f",
                       d_high, high, target_um, high)
        return CalibrationResult(high, d_high, target_um, True)
    if d_low > target_um:
        logger.warning("Calibration: depth %.2fum at A=%.3f exceeds the %.1fum target; using A=%.3f",
                       d_low, low, target_um, low)
        return CalibrationResult(low, d_low, target_um, True)

    lo, hi = low, high
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if depth_at(mid) < target_um:
            lo = mid
        else:
            hi = mid
    a = 0.5 * (lo + hi)
    depth = depth_at(a)
    logger.info("Calibrated absorptivity A=%.5f (steady depth %.2fum, target %.1fum)", a, depth, target_um)
    return CalibrationResult(a, depth, target_um, False)
