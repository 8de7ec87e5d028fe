"""
Tests for the emission-event heat model and melt-depth probing
"""

import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from .baselines import chessboard, zigzag
from .geometry import rectangle, sample_uniform
from .thermal import (EmissionEvent, EventList, LaserParams, MaterialParams, ThermalSimulator, angle_template_study,
                      calibrate_absorptivity, depth_stats, discretize_toolpath, kernel_temp)
from .toolpath import Move, Toolpath


def _line(length, laser=True):
    return Toolpath([Move(0, 0.0, 0.0, False), Move(1, length, 0.0, laser)], hatch=0.05)


def test_kernel_conserves_energy():
    """The rise integrated over the half-space times rho*cp gives back the event energy"""
    material, laser = MaterialParams(), LaserParams()
    event = EmissionEvent(0.0, 0.0, 0.0, 1e-3)
    tau = 1e-4

    xs = np.linspace(-0.3, 0.3, 121)
    surface = np.array([[kernel_temp(event, (x, y, 0.0), tau, material, laser) for x in xs] for y in xs])
    lateral = trapezoid(trapezoid(surface, xs, axis=1), xs) * 1e-6

    zs = np.linspace(0.0, 0.3, 151)
    column = np.array([kernel_temp(event, (0.0, 0.0, z), tau, material, laser) for z in zs])
    depth = trapezoid(column, zs) * 1e-3 / column[0]

    energy = material.volumetric_heat * lateral * depth
    assert energy == pytest.approx(event.energy, rel=0.01), f"Recovered {energy}J of {event.energy}J"


def test_kernel_argument_checks():
    """Queries before the event, above the surface, or at tau = 0 are rejected"""
    material, laser = MaterialParams(), LaserParams()
    event = EmissionEvent(0.0, 0.0, 1e-3, 1e-5)
    with pytest.raises(ValueError):
        kernel_temp(event, (0, 0, 0), 0.0, material, laser)
    with pytest.raises(ValueError):
        kernel_temp(event, (0, 0, -0.01), 2e-3, material, laser)
    with pytest.raises(ValueError):
        kernel_temp(event, (0, 0, 0), 1e-3, material, laser)
    assert kernel_temp(event, (0, 0, 0), 1e-3, material, laser, tau_min=1e-6) > 0


def test_kernel_decays():
    """A single event has cooled off after a long time"""
    material, laser = MaterialParams(), LaserParams()
    event = EmissionEvent(0.0, 0.0, 0.0, 1e-3)
    assert kernel_temp(event, (0, 0, 0), 1e3, material, laser) < 1e-3


def test_superposition_is_linear():
    """Without a cutoff, rises of disjoint event lists add up"""
    sim = ThermalSimulator(cutoff=0.0)
    a = EventList([0.0, 0.02], [0.0, 0.0], [0.0, 1e-5], [1e-5, 1e-5])
    b = EventList([0.05], [0.01], [2e-5], [2e-5])
    query, t = (0.03, 0.0, 0.01), 1e-4
    ambient = sim.material.ambient_temperature

    rise_a = sim.temperature_at(a, query, t) - ambient
    rise_b = sim.temperature_at(b, query, t) - ambient
    rise_ab = sim.temperature_at(a.merge(b), query, t) - ambient
    assert rise_ab == pytest.approx(rise_a + rise_b, rel=1e-12)


def test_cutoff_error_bound():
    """Dropping weak contributions changes T by at most cutoff per event"""
    sim = ThermalSimulator(cutoff=0.1)
    events = sim.discretize(_line(1.0))
    for x in (0.2, 0.5, 0.9):
        full = sim.temperature_at(events, (x, 0.05, 0.0), events.end_time, cutoff=0.0)
        cut = sim.temperature_at(events, (x, 0.05, 0.0), events.end_time)
        assert 0.0 <= full - cut <= 0.1 * len(events)


def test_translation_invariance():
    """Shifting events and query together leaves T unchanged"""
    sim = ThermalSimulator()
    events = sim.discretize(_line(0.5))
    t = events.end_time
    here = sim.temperature_at(events, (0.45, 0.01, 0.005), t)
    there = sim.temperature_at(events.translated(1.5, -2.0), (1.95, -1.99, 0.005), t)
    assert there == pytest.approx(here, rel=1e-9)


def test_no_events_is_ambient():
    """An empty event list leaves the part at ambient temperature"""
    sim = ThermalSimulator()
    empty = EventList([], [], [], [])
    assert sim.temperature_at(empty, (0, 0, 0), 1.0) == sim.material.ambient_temperature
    assert sim.melt_depth(empty, (0, 0), 1.0) == 0.0


def test_temperature_falls_with_depth():
    """Below a point, temperature never increases with depth"""
    sim = ThermalSimulator()
    events = sim.discretize(_line(0.5))
    temps = [sim.temperature_at(events, (0.49, 0.0, z), events.end_time) for z in np.linspace(0, 0.2, 41)]
    assert all(b <= a + 1e-9 for a, b in zip(temps, temps[1:]))


def test_discretize_event_count():
    """1mm at 1000mm/s with dt=1e-5 gives 100 events carrying A*P*D"""
    laser = LaserParams(power=50.0, absorptivity=0.5, velocity=1000.0)
    events = discretize_toolpath(_line(1.0), laser, 1e-5)
    assert len(events) == 100, f"Expected 100 events, got {len(events)}"
    assert events.total_energy == pytest.approx(0.5 * 50.0 * 1e-3)
    assert events.end_time == pytest.approx(1e-3)
    assert np.all(np.diff(events.times) > 0)


def test_discretize_void_path():
    """Laser-off moves only advance the clock"""
    laser = LaserParams(velocity=1000.0)
    events = discretize_toolpath(_line(2.0, laser=False), laser, 1e-5)
    assert len(events) == 0
    assert events.end_time == pytest.approx(2e-3)


def test_energy_matches_laser_on_length():
    """Deposited energy depends only on the laser-on length"""
    grid = sample_uniform(rectangle(1.0, 1.0), 0.1)
    laser = LaserParams()
    for path in (zigzag(grid), chessboard(grid, island_size=0.5)):
        events = discretize_toolpath(path, laser, 2.5e-5)
        expected = laser.absorbed_power * path.laser_on_length() / laser.velocity
        assert events.total_energy == pytest.approx(expected, rel=1e-9)


def test_depth_stats():
    """Average and peak of a trace"""
    assert depth_stats([40.0, 50.0, 60.0]) == {"avg": 50.0, "peak": 60.0}
    assert depth_stats([45.0]) == {"avg": 45.0, "peak": 45.0}
    with pytest.raises(ValueError):
        depth_stats([])


def test_depth_grows_with_power():
    """More laser power never gives a shallower pool"""
    sim = ThermalSimulator(laser=LaserParams(absorptivity=0.8))
    path = _line(0.5)
    traces = [sim.with_laser(power=p).trace(path) for p in (25.0, 50.0, 75.0)]
    for shallow, deep in zip(traces, traces[1:]):
        assert np.all(deep.depths >= shallow.depths - sim.probe_tol_um)
    assert traces[-1].depths.max() > traces[0].depths.max()


def test_melt_depth_limits():
    """Melt depth is within [0, probe_max] and on the probe tolerance"""
    sim = ThermalSimulator(laser=LaserParams(absorptivity=1.0), cutoff=0.0)
    trace = sim.trace(_line(0.5))
    assert len(trace) == 20
    assert np.all(trace.depths >= 0) and np.all(trace.depths <= sim.probe_max_um)

    events = sim.discretize(_line(0.5))
    k = len(events) - 1
    depth = sim.melt_depth(events, (events.xs[k], events.ys[k]), events.times[k] + 2 * sim.dt)
    if depth > 0:
        at = sim.temperature_at(events, (events.xs[k], events.ys[k], depth * 1e-3), events.times[k] + 2 * sim.dt)
        below = sim.temperature_at(events, (events.xs[k], events.ys[k], (depth + 2 * sim.probe_tol_um) * 1e-3),
                                   events.times[k] + 2 * sim.dt)
        assert at >= sim.material.melt_temperature - 1e-6
        assert below < sim.material.melt_temperature


def test_template_path_angles():
    """Template legs meet at the origin with the requested turning angle"""
    sim = ThermalSimulator()
    for angle in (180.0, 90.0, 30.0):
        path = sim.template_path(angle, leg_mm=1.0)
        (p0, p1, p2) = path.points
        inc, out = p1 - p0, p2 - p1
        cos = -np.dot(inc, out) / (np.linalg.norm(inc) * np.linalg.norm(out))
        assert math.degrees(math.acos(np.clip(cos, -1, 1))) == pytest.approx(angle)


def test_calibration_recovers_absorptivity():
    """Calibrating to the depth produced at A=0.6 lands on that depth"""
    sim = ThermalSimulator()
    target = sim.with_laser(absorptivity=0.6).straight_scan_depth(1.0)
    result = calibrate_absorptivity(sim, target_um=target, length_mm=1.0, tol=1e-3)
    assert not result.clamped
    assert result.steady_depth_um == pytest.approx(target, abs=0.5)
    assert 0.2 < result.absorptivity < 1.0


def test_calibration_clamps():
    """An unreachable target returns the bracket end, flagged"""
    sim = ThermalSimulator()
    result = calibrate_absorptivity(sim, target_um=1000.0, length_mm=0.5)
    assert result.clamped
    assert result.absorptivity == 1.0
    with pytest.raises(ValueError):
        calibrate_absorptivity(sim, low=0.5, high=0.4)


def test_cooling_after_last_event():
    """Once the laser stops, the end of the track only cools"""
    sim = ThermalSimulator(cutoff=0.0)
    events = sim.discretize(_line(0.5))
    end = (events.xs[-1], events.ys[-1], 0.0)
    times = [events.end_time + k * sim.dt for k in range(41)] + [1e-3, 1e-2, 1.0]
    temps = [sim.temperature_at(events, end, t) for t in times]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(temps, temps[1:]))
    assert temps[0] > sim.material.ambient_temperature
    assert temps[-1] - sim.material.ambient_temperature < 0.1


def test_influence_radius_bounds_one_event():
    """An event never reaches the cutoff at its influence radius, and does well inside it"""
    sim = ThermalSimulator(laser=LaserParams(absorptivity=1.0))
    energy = sim.laser.absorbed_power * sim.dt
    radius = sim.influence_radius(energy)
    event = EmissionEvent(0.0, 0.0, 0.0, energy)
    taus = np.geomspace(sim.tau_min, 1.0, 200)

    outside = [kernel_temp(event, (radius, 0.0, 0.0), tau, sim.material, sim.laser) for tau in taus]
    inside = [kernel_temp(event, (radius / 2, 0.0, 0.0), tau, sim.material, sim.laser) for tau in taus]
    assert max(outside) < sim.cutoff
    assert max(inside) >= sim.cutoff
    assert sim.influence_radius(energy) == radius
    assert ThermalSimulator(cutoff=0.0).influence_radius(energy) == math.inf


def test_pruned_evaluation_matches_full_sum():
    """Only nearby events are evaluated, with the same result as summing them all"""
    sim = ThermalSimulator(laser=LaserParams(absorptivity=1.0))
    events = sim.discretize(_line(4.0))
    radius = sim.influence_radius(events.peak_energy)
    assert 0 < radius < 4.0

    for query, t in (((4.0, 0.0, 0.0), events.end_time), ((2.0, 0.1, 0.02), 0.6 * events.end_time)):
        near = events.near(query[0], query[1], radius)
        assert 0 < len(near) < len(events)
        rises = [kernel_temp(e, query, t, sim.material, sim.laser, sim.tau_min) for e in events if e.time <= t]
        expected = sim.material.ambient_temperature + sum(r for r in rises if r >= sim.cutoff)
        assert sim.temperature_at(events, query, t) == pytest.approx(expected, rel=1e-9)


def test_module_angle_template_study():
    """The module-level study matches the simulator method"""
    material, laser = MaterialParams(), LaserParams(absorptivity=1.0)
    angles = [180.0, 45.0]
    results = angle_template_study(angles, laser, material, leg_mm=0.25, near_vertex_mm=0.1)
    assert [a for a, _ in results] == angles
    assert all(depth >= 0 for _, depth in results)
    expected = ThermalSimulator(material, laser).angle_template_study(angles, 0.25, 0.1)
    assert results == expected
    with pytest.raises(ValueError):
        angle_template_study([0.0], laser, material)
