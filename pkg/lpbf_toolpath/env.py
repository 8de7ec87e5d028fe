"""
Reinforcement-learning environment for toolpath generation

The agent is the laser spot. At every step it picks one of three
strategies (coolest neighbor, smoothest turn, second smoothest turn); the
environment turns the choice into a laser-on move, or a void move when the
move would cross an already melted segment or no neighbor is left, and
scores it with the sensitive-turn, collision and isolated-point terms.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .config import EnvConfig
from .errors import EpisodeDoneError
from .geometry import SegmentIndex, knn_candidates, turning_angle
from .toolpath import Move, Toolpath

logger = logging.getLogger(__name__)

OBSERVATION_DIM = 38
N_ACTIONS = 3
SENSITIVE_ANGLE = 90.0

_ANGLE_EPS = 1e-9
_WINDOW = [(di, dj) for dj in range(-2, 3) for di in range(-2, 3) if (di, dj) != (0, 0)]


class Strategy(IntEnum):
    MIN_TEMP = 0
    SMOOTHEST = 1
    SECOND_SMOOTHEST = 2


@dataclass
class AgentState:
    """
    Episode bookkeeping of the agent

    arc is the path length travelled since the current laser-on run
    started; last_sensitive is the arc position of the run's latest turn
    sharper than 90 degrees.
    """

    current: int
    prev_dir: tuple = None
    steps: int = 0
    time: float = 0.0
    arc: float = 0.0
    last_sensitive: float = None
    entered_by_void: bool = True


@dataclass(frozen=True)
class CandidateAction:
    strategy: Strategy
    target: int
    alpha: float
    F: float
    collision: bool


@dataclass(frozen=True)
class RewardBreakdown:
    r_t: float = 0.0
    n_c: int = 0
    n_i: int = 0

    @property
    def total(self):
        return self.r_t - self.n_c - self.n_i


@dataclass
class StepOutcome:
    observation: np.ndarray
    reward: RewardBreakdown
    done: bool
    move: Move
    info: dict = field(default_factory=dict)


@dataclass
class EpisodeStats:
    total_reward: float = 0.0
    sensitive_count: int = 0
    collisions: int = 0
    fallbacks: int = 0
    isolated: int = 0
    void_moves: int = 0
    steps: int = 0


class TemperatureProxy:
    """
    Recent laser-on arrivals with their melt times

    value(p, t) = sum_i w_i exp(-|p - p_i|^2 / (2 sigma^2)), with
    w_i proportional to exp(-(t - t_i) / tau) and normalized over the buffer.
    """

    def __init__(self, size=64, sigma=0.1, tau=3.2e-3):
        if size < 1:
            raise ValueError("proxy buffer size must be >= 1")
        if sigma <= 0 or tau <= 0:
            raise ValueError("proxy sigma and tau must be positive")
        self.size = int(size)
        self.sigma = float(sigma)
        self.tau = float(tau)
        self._buffer = deque(maxlen=self.size)

    @classmethod
    def from_config(cls, cfg, hatch, velocity):
        return cls(cfg.proxy_size, cfg.proxy_sigma_h * hatch, cfg.proxy_tau_steps * hatch / velocity)

    def __len__(self):
        return len(self._buffer)

    def clear(self):
        self._buffer.clear()

    def push(self, x, y, t):
        if self._buffer and t < self._buffer[-1][2]:
            raise ValueError("proxy timestamps must be non-decreasing")
        self._buffer.append((float(x), float(y), float(t)))

    def value(self, point, t):
        if not self._buffer:
            return 0.0
        buf = np.asarray(self._buffer)
        age = t - buf[:, 2]
        w = np.exp(-(age - age.min()) / self.tau)
        w /= w.sum()
        d2 = (buf[:, 0] - point[0]) ** 2 + (buf[:, 1] - point[1]) ** 2
        return float(np.dot(w, np.exp(-d2 / (2.0 * self.sigma ** 2))))


def proxy_F(point, proxy, t):
    return proxy.value(point, t)


def _disp(grid, a, b):
    la, lb = grid.lattice[a], grid.lattice[b]
    return int(lb[0] - la[0]), int(lb[1] - la[1])


def legal_moves(state, grid):
    """
    Unvisited Moore neighbors of the agent, minus the point straight
    behind it along the previous move
    """
    moves = [k for k in knn_candidates(grid, state.current) if not grid.visited[k]]
    if state.prev_dir is not None:
        i, j = grid.lattice[state.current]
        back = grid.lattice_index(i - state.prev_dir[0], j - state.prev_dir[1])
        moves = [k for k in moves if k != back]
    return moves


def reward_main(alpha, d, h, coeff=3.0):
    """-h/d for a turn sharper than 90 degrees within coeff*h of the previous one, else 0"""
    if alpha < SENSITIVE_ANGLE - _ANGLE_EPS and d <= coeff * h * (1 + 1e-9):
        return -h / d
    return 0.0


def collision_penalty(n, threshold=3):
    if n < 0:
        raise ValueError("collision count must be >= 0")
    return 1 if n > threshold else 0


def isolated_penalty(flag):
    return 1 if flag else 0


def detect_collision(state, target, grid, segments, count=True):
    """
    True when moving to target would remelt: the target is visited or the
    move crosses a laser-on segment. Increments the active point's counter.
    """
    hit = bool(grid.visited[target]) or segments.crosses(state.current, target)
    if hit and count:
        grid.collisions[state.current] += 1
    return hit


def nearest_fallback(state, grid):
    """
    Closest unvisited point (lowest index on ties), or None when every
    point has been visited
    """
    unvisited = np.flatnonzero(~grid.visited)
    if unvisited.size == 0:
        return None
    delta = grid.lattice[unvisited] - grid.lattice[state.current]
    d2 = (delta ** 2).sum(axis=1)
    target = int(unvisited[np.argmin(d2)])
    dist = math.sqrt(int(d2.min())) * grid.hatch
    if dist > grid.max_length * (1 + 1e-9):
        logger.warning("Fallback jump of %.4fmm exceeds the domain extent %.4fmm", dist, grid.max_length)
    return target


def is_isolated(point, path):
    """
    True when no laser-on segment of the path touches the point
    (both neighboring moves void, or a void arrival at the end)
    """
    moves = path.moves
    for k, m in enumerate(moves):
        if m.index == point:
            incoming = m.laser
            outgoing = moves[k + 1].laser if k + 1 < len(moves) else False
            return not (incoming or outgoing)
    raise ValueError(f"point {point} is not on the path")


def _turn_distance(state, alpha):
    if alpha >= SENSITIVE_ANGLE - _ANGLE_EPS or state.last_sensitive is None:
        return math.inf
    return state.arc - state.last_sensitive


def _alpha(state, disp):
    return 180.0 if state.prev_dir is None else turning_angle(state.prev_dir, disp)


def build_actions(state, grid, proxy, segments):
    """
    The three strategy actions at the agent's position

    Returns an empty list when no legal move exists. Every crossing
    candidate is counted against the active point.
    """
    moves = legal_moves(state, grid)
    if not moves:
        return []
    scored = []
    for k in moves:
        disp = _disp(grid, state.current, k)
        scored.append((k, _alpha(state, disp), proxy_F(grid.points[k], proxy, state.time),
                       detect_collision(state, k, grid, segments)))

    coolest = min(scored, key=lambda s: (s[2], s[0]))
    by_angle = sorted(scored, key=lambda s: (-s[1], s[0]))
    second = by_angle[1] if len(by_angle) > 1 else by_angle[0]
    return [CandidateAction(strategy, *choice)
            for strategy, choice in zip(Strategy, (coolest, by_angle[0], second))]


def _turns(path):
    """Yield (run, alpha, arc position, (x, y)) for every vertex inside a laser-on run"""
    moves = path.moves
    arc = 0.0
    run = 0
    for k in range(1, len(moves)):
        a, b = moves[k - 1], moves[k]
        if not b.laser:
            arc = 0.0
            run += 1
            continue
        if k >= 2 and a.laser:
            p = moves[k - 2]
            alpha = turning_angle((a.x - p.x, a.y - p.y), (b.x - a.x, b.y - a.y))
            yield run, alpha, arc, (a.x, a.y)
        arc += math.hypot(b.x - a.x, b.y - a.y)


@dataclass
class SensitiveReport:
    count: int
    locations: list


def detect_sensitive_regions(path, coeff=3.0, h=None):
    """
    Pairs of consecutive sharp (< 90 degree) laser-on turns no more than
    coeff*h apart along the path

    Returns:
        SensitiveReport with the position of the second turn of each pair
    """
    if coeff <= 0:
        raise ValueError("sensitive-region coefficient must be positive")
    h = path.hatch if h is None else h
    locations = []
    last = None
    current_run = None
    for run, alpha, arc, where in _turns(path):
        if run != current_run:
            last = None
            current_run = run
        if alpha >= SENSITIVE_ANGLE - _ANGLE_EPS:
            continue
        if last is not None and arc - last <= coeff * h * (1 + 1e-9):
            locations.append(where)
        last = arc
    return SensitiveReport(len(locations), locations)


class ToolpathEnv:
    """
    One episode over a sample grid

    The env works on its own copy of the grid; the agent starts at point
    `start` (the lower-left point by default) and the episode ends once
    every point is visited.
    """

    def __init__(self, grid, config=None, velocity=1000.0, start=0):
        self.config = config or EnvConfig()
        self.grid = grid.copy()
        self.velocity = float(velocity)
        self.start = int(start)
        if not 0 <= self.start < self.grid.n_points:
            raise ValueError(f"start index {start} outside the grid")
        self.proxy = TemperatureProxy.from_config(self.config, self.grid.hatch, self.velocity)
        self.segments = SegmentIndex(self.grid)
        self._neighbors = self.grid.neighbor_lists()
        xmin, ymin, xmax, ymax = self.grid.bounds
        self._origin = np.array([xmin, ymin])
        self._extent = np.array([max(xmax - xmin, self.grid.hatch), max(ymax - ymin, self.grid.hatch)])
        self.reset()

    @property
    def n_points(self):
        return self.grid.n_points

    def reset(self):
        self.grid.reset()
        self.proxy.clear()
        self.segments.clear()
        self.state = AgentState(current=self.start)
        self._free = np.array([len(nb) for nb in self._neighbors], dtype=np.int64)
        self._remaining = self.grid.n_points
        self._doomed = set()
        self._visit(self.start)
        self.moves = [Move(self.start, *map(float, self.grid.points[self.start]), False)]
        self.stats = EpisodeStats()
        self.done = self.grid.n_points == 1
        self._refresh_actions()
        return self.observe()

    def _visit(self, point):
        self.grid.visited[point] = True
        self._remaining -= 1
        for k in self._neighbors[point]:
            self._free[k] -= 1

    def _refresh_actions(self):
        self.actions = [] if self.done else build_actions(self.state, self.grid, self.proxy, self.segments)

    def stranded(self, target, laser=True):
        """
        Points a move from the agent to target would leave certainly isolated

        A neighbor of the agent or of the target is stranded once it has no
        unvisited neighbor left and the agent, standing on target, can only
        reach it across a melted segment (or not at all). A void arrival at
        a dead end strands the target itself unless it ends the episode.
        Points already charged are skipped.
        """
        grid = self.grid
        near = set(self._neighbors[target])
        out = []
        seen = set()
        for u in self._neighbors[self.state.current] + self._neighbors[target]:
            if u == target or u in seen or grid.visited[u] or u in self._doomed:
                continue
            seen.add(u)
            if self._free[u] - (u in near) > 0:
                continue
            if u in near and not self.segments.crosses(target, u):
                continue
            out.append(u)
        if (not laser and target not in self._doomed and self._remaining > 1
                and self._free[target] == 0):
            out.append(target)
        return sorted(out)

    def _trigger(self, action):
        """1 when the candidate would draw a penalty on the step it is taken"""
        if action.collision:
            return 1.0
        d = _turn_distance(self.state, action.alpha)
        if reward_main(action.alpha, d, self.grid.hatch, self.config.sensitive_coeff) < 0:
            return 1.0
        return 1.0 if self.stranded(action.target) else 0.0

    def observe(self):
        """Fixed-length feature vector of the current state"""
        grid, state = self.grid, self.state
        obs = np.zeros(OBSERVATION_DIM)
        obs[0:2] = np.clip((grid.points[state.current] - self._origin) / self._extent, 0.0, 1.0)
        if state.prev_dir is not None:
            obs[2:4] = np.asarray(state.prev_dir, dtype=np.float64) / math.hypot(*state.prev_dir)
        obs[4] = (~grid.visited).sum() / grid.n_points
        i, j = grid.lattice[state.current]
        for n, (di, dj) in enumerate(_WINDOW):
            k = grid.lattice_index(i + di, j + dj)
            obs[5 + n] = 1.0 if k is None else float(grid.visited[k])
        for a in range(N_ACTIONS):
            if a < len(self.actions):
                act = self.actions[a]
                obs[29 + a] = act.alpha / 180.0
                obs[32 + a] = self._trigger(act)
                obs[35 + a] = min(act.F, 1.0)
            else:
                obs[29 + a], obs[32 + a], obs[35 + a] = 0.0, 1.0, 1.0
        return obs

    def step(self, action):
        """
        Take strategy `action` (0, 1 or 2)

        A crossing candidate is reached by a void move; with no legal move
        the agent jumps to the nearest unvisited point with the laser off.
        """
        if self.done:
            raise EpisodeDoneError("episode is over; call reset()")
        action = int(action)
        if not 0 <= action < N_ACTIONS:
            raise ValueError(f"action must be in [0, {N_ACTIONS}), got {action}")

        if not self.actions:
            target = nearest_fallback(self.state, self.grid)
            return self._transition(target, laser=False, info={"fallback": True, "strategy": None})
        chosen = self.actions[action]
        return self._transition(chosen.target, laser=not chosen.collision,
                                info={"fallback": False, "collision": chosen.collision,
                                      "strategy": chosen.strategy, "alpha": chosen.alpha, "F": chosen.F})

    def move_to(self, target):
        """
        Move to an arbitrary unvisited point; laser-on only for a legal
        move that crosses nothing
        """
        if self.done:
            raise EpisodeDoneError("episode is over; call reset()")
        if self.grid.visited[target]:
            raise ValueError(f"point {target} is already visited")
        legal = target in legal_moves(self.state, self.grid)
        crossing = legal and self.segments.crosses(self.state.current, target)
        return self._transition(int(target), laser=legal and not crossing,
                                info={"fallback": not legal, "collision": crossing})

    def _transition(self, target, laser, info):
        grid, state, cfg = self.grid, self.state, self.config
        h = grid.hatch
        src = state.current
        length = math.dist(grid.points[src], grid.points[target])
        r_t = 0.0
        stranded = self.stranded(target, laser)
        self._doomed.update(stranded)
        isolated = len(stranded)

        if laser:
            disp = _disp(grid, src, target)
            alpha = _alpha(state, disp)
            if alpha < SENSITIVE_ANGLE - _ANGLE_EPS:
                d = _turn_distance(state, alpha)
                r_t = reward_main(alpha, d, h, cfg.sensitive_coeff)
                if r_t < 0:
                    self.stats.sensitive_count += 1
                state.last_sensitive = state.arc
            state.arc += length
            state.prev_dir = disp
            self.segments.add(src, target)
        else:
            if state.entered_by_void and src not in self._doomed:
                isolated += 1
            state.prev_dir = None
            state.arc = 0.0
            state.last_sensitive = None
            self.stats.void_moves += 1
            if info.get("collision"):
                self.stats.collisions += 1
            if info.get("fallback"):
                self.stats.fallbacks += 1

        state.time += length / self.velocity
        if laser:
            self.proxy.push(*grid.points[target], state.time)
        state.entered_by_void = not laser
        state.current = target
        state.steps += 1
        self._visit(target)
        move = Move(int(target), *map(float, grid.points[target]), bool(laser))
        self.moves.append(move)

        self.done = self._remaining == 0
        if self.done and not laser and target not in self._doomed:
            isolated += 1
        self.stats.isolated += isolated

        # crossings are counted when the actions at the new point are built
        self._refresh_actions()
        n_c = collision_penalty(int(grid.collisions[target]), cfg.collision_threshold)
        reward = RewardBreakdown(r_t=r_t, n_c=n_c, n_i=isolated_penalty(isolated))
        self.stats.total_reward += reward.total
        self.stats.steps = state.steps
        info.update(isolated=isolated, stranded=stranded, laser=laser)
        return StepOutcome(self.observe(), reward, self.done, move, info)

    def toolpath(self, metadata=None):
        meta = {"generator": "drl", "steps": self.state.steps}
        meta.update(metadata or {})
        return Toolpath(list(self.moves), self.grid.hatch, meta)
