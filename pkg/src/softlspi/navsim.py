"""Deterministic continuous navigation worlds (U- and S-shaped corridors).

The agent is a point in the unit square with a heading. It can move forward
by a fixed step or rotate by 45 degrees. A forward move whose segment touches
a wall (or leaves the square) is cancelled and punished; entering the goal
circle is rewarded and ends the episode.

States are handled in two forms: :class:`Pose` for single-step code and
``(N, 3)`` float arrays of ``(x, y, theta)`` rows for batched code.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ConfigError, DataError, GeometryError

TWO_PI = 2.0 * math.pi

FORWARD, LEFT, RIGHT = 0, 1, 2
N_ACTIONS = 3
ACTION_NAMES = ("forward", "left", "right")

MAX_START_ATTEMPTS = 10_000


def wrap_angle(theta: float) -> float:
    """Reduce an angle into ``[0, 2*pi)``."""
    t = theta % TWO_PI
    # float modulo can round up to exactly 2*pi for tiny negative inputs
    return 0.0 if t >= TWO_PI else t


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])


Rect = tuple[float, float, float, float]  # xmin, xmax, ymin, ymax
Segment = tuple[float, float, float, float]  # x1, y1, x2, y2


def _rect_walls(r: Rect) -> list[Segment]:
    x0, x1, y0, y1 = r
    return [(x0, y0, x1, y0), (x1, y0, x1, y1), (x1, y1, x0, y1), (x0, y1, x0, y0)]


@dataclass(frozen=True)
class WorldSpec:
    """Immutable world geometry and reward constants."""

    name: str
    obstacles: tuple[Rect, ...]
    goal_center: tuple[float, float]
    goal_radius: float
    crash_penalty: float
    goal_reward: float = 1.0
    step_length: float = 0.045
    rotation: float = math.pi / 4
    bounds: Rect = (0.0, 1.0, 0.0, 1.0)
    walls: tuple[Segment, ...] = field(init=False)

    def __post_init__(self):
        walls = _rect_walls(self.bounds)
        for r in self.obstacles:
            walls.extend(_rect_walls(r))
        object.__setattr__(self, "walls", tuple(walls))
        object.__setattr__(self, "_wall_array", np.array(walls, dtype=float))

    def in_bounds(self, x: float, y: float) -> bool:
        x0, x1, y0, y1 = self.bounds
        return x0 <= x <= x1 and y0 <= y <= y1

    def is_free(self, x: float, y: float) -> bool:
        """True when ``(x, y)`` is inside the bounds and outside every obstacle."""
        if not self.in_bounds(x, y):
            return False
        for x0, x1, y0, y1 in self.obstacles:
            if x0 <= x <= x1 and y0 <= y <= y1:
                return False
        return True

    def in_goal(self, x: float, y: float) -> bool:
        gx, gy = self.goal_center
        return math.hypot(x - gx, y - gy) <= self.goal_radius


_WORLDS = {
    "U": dict(
        obstacles=((0.3, 0.7, 0.0, 0.6),),
        goal_center=(0.85, 0.15),
        goal_radius=0.1,
        crash_penalty=-1.0,
    ),
    "S": dict(
        obstacles=((0.3, 0.45, 0.0, 0.65), (0.6, 0.75, 0.35, 1.0)),
        goal_center=(0.9, 0.1),
        goal_radius=0.1,
        crash_penalty=-10.0,
    ),
}


def make_world(name: str) -> WorldSpec:
    """Return the fixed geometry of world ``"U"`` or ``"S"`` (case-insensitive)."""
    key = str(name).upper()
    if key not in _WORLDS:
        raise ConfigError(f"unknown world {name!r}; expected one of {sorted(_WORLDS)}")
    return WorldSpec(name=key, **_WORLDS[key])


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def segments_intersect(p: Segment, q: Segment) -> bool:
    """Closed segment intersection test (touching counts)."""
    px1, py1, px2, py2 = p
    qx1, qy1, qx2, qy2 = q
    o1 = _orient(qx1, qy1, qx2, qy2, px1, py1)
    o2 = _orient(qx1, qy1, qx2, qy2, px2, py2)
    o3 = _orient(px1, py1, px2, py2, qx1, qy1)
    o4 = _orient(px1, py1, px2, py2, qx2, qy2)
    if o1 * o2 > 0 or o3 * o4 > 0:
        return False
    if o1 == 0 and o2 == 0:
        # collinear: intervals must overlap on both axes
        return (min(px1, px2) <= max(qx1, qx2) and min(qx1, qx2) <= max(px1, px2)
                and min(py1, py2) <= max(qy1, qy2) and min(qy1, qy2) <= max(py1, py2))
    return True


def _move_blocked(world: WorldSpec, x, y, nx, ny) -> bool:
    if not world.in_bounds(nx, ny):
        return True
    seg = (x, y, nx, ny)
    return any(segments_intersect(seg, w) for w in world.walls)


def step(world: WorldSpec, pose: Pose, action: int) -> tuple[Pose, float, bool]:
    """Advance one action. Returns ``(next_pose, reward, terminal)``."""
    if action == LEFT:
        return Pose(pose.x, pose.y, pose.theta + world.rotation), 0.0, False
    if action == RIGHT:
        return Pose(pose.x, pose.y, pose.theta - world.rotation), 0.0, False
    if action != FORWARD:
        raise ConfigError(f"invalid action {action!r}")
    nx = pose.x + world.step_length * math.cos(pose.theta)
    ny = pose.y + world.step_length * math.sin(pose.theta)
    if _move_blocked(world, pose.x, pose.y, nx, ny):
        return pose, world.crash_penalty, False
    nxt = Pose(nx, ny, pose.theta)
    if world.in_goal(nx, ny):
        return nxt, world.goal_reward, True
    return nxt, 0.0, False


def step_many(world: WorldSpec, states: np.ndarray, actions: np.ndarray):
    """Vectorized :func:`step` over ``(N, 3)`` states.

    Returns ``(next_states, rewards, terminals, crashed)``.
    """
    states = np.asarray(states, dtype=float)
    actions = np.asarray(actions)
    x, y, th = states[:, 0], states[:, 1], states[:, 2]
    fwd = actions == FORWARD
    new_th = th.copy()
    new_th[actions == LEFT] += world.rotation
    new_th[actions == RIGHT] -= world.rotation
    new_th = np.mod(new_th, TWO_PI)
    new_th[new_th >= TWO_PI] = 0.0

    nx = x + world.step_length * np.cos(th)
    ny = y + world.step_length * np.sin(th)
    x0, x1, y0, y1 = world.bounds
    out = (nx < x0) | (nx > x1) | (ny < y0) | (ny > y1)

    W = world._wall_array
    ax, ay, bx, by = (W[:, i][None, :] for i in range(4))
    px, py, qx, qy = x[:, None], y[:, None], nx[:, None], ny[:, None]
    o1 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    o2 = (bx - ax) * (qy - ay) - (by - ay) * (qx - ax)
    o3 = (qx - px) * (ay - py) - (qy - py) * (ax - px)
    o4 = (qx - px) * (by - py) - (qy - py) * (bx - px)
    hit = (o1 * o2 <= 0) & (o3 * o4 <= 0)
    colinear = (o1 == 0) & (o2 == 0)
    overlap = ((np.minimum(px, qx) <= np.maximum(ax, bx)) & (np.minimum(ax, bx) <= np.maximum(px, qx))
               & (np.minimum(py, qy) <= np.maximum(ay, by)) & (np.minimum(ay, by) <= np.maximum(py, qy)))
    hit &= ~colinear | overlap
    crashed = fwd & (out | hit.any(axis=1))
    moved = fwd & ~crashed

    nxt = np.column_stack([x, y, new_th])
    nxt[moved, 0] = nx[moved]
    nxt[moved, 1] = ny[moved]
    gx, gy = world.goal_center
    goal = moved & (np.hypot(nx - gx, ny - gy) <= world.goal_radius)
    rewards = np.zeros(len(states))
    rewards[crashed] = world.crash_penalty
    rewards[goal] = world.goal_reward
    return nxt, rewards, goal, crashed


def sample_start(world: WorldSpec, rng: np.random.Generator) -> Pose:
    """Uniform position over free space outside the goal, uniform heading."""
    x0, x1, y0, y1 = world.bounds
    for _ in range(MAX_START_ATTEMPTS):
        x = rng.uniform(x0, x1)
        y = rng.uniform(y0, y1)
        if world.is_free(x, y) and not world.in_goal(x, y):
            return Pose(x, y, rng.uniform(0.0, TWO_PI))
    raise GeometryError(
        f"world {world.name!r}: no free start found in {MAX_START_ATTEMPTS} attempts")


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


@dataclass
class Batch:
    """An ordered batch of transitions stored column-wise.

    ``states`` and ``next_states`` are ``(n, k)`` arrays; for the navigation
    worlds ``k = 3`` (x, y, theta). ``episode_boundaries`` lists indices ``t``
    after which the walk was reset, i.e. where ``next_states[t]`` is not
    ``states[t + 1]``.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray
    episode_boundaries: np.ndarray = None
    seed: int | None = None
    world: str | None = None
    step_length: float | None = None

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim == 1:
            self.states = self.states[:, None]
        self.next_states = np.asarray(self.next_states, dtype=float).reshape(self.states.shape)
        self.actions = np.asarray(self.actions, dtype=np.int64)
        self.rewards = np.asarray(self.rewards, dtype=float)
        self.terminals = np.asarray(self.terminals, dtype=bool)
        n = len(self.states)
        if not (len(self.actions) == len(self.rewards) == len(self.terminals) == n):
            raise DataError("batch columns have mismatched lengths")
        if self.episode_boundaries is None:
            idx = np.flatnonzero(self.terminals)
            self.episode_boundaries = idx[idx < n - 1]
        self.episode_boundaries = np.asarray(self.episode_boundaries, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.states)

    def __getitem__(self, t: int) -> Transition:
        return Transition(self.states[t], int(self.actions[t]), float(self.rewards[t]),
                          self.next_states[t], bool(self.terminals[t]))

    def __iter__(self) -> Iterator[Transition]:
        return (self[t] for t in range(len(self)))

    def equals(self, other: "Batch") -> bool:
        """Bitwise equality of all columns."""
        return (self.states.tobytes() == other.states.tobytes()
                and self.actions.tobytes() == other.actions.tobytes()
                and self.rewards.tobytes() == other.rewards.tobytes()
                and self.next_states.tobytes() == other.next_states.tobytes()
                and self.terminals.tobytes() == other.terminals.tobytes()
                and np.array_equal(self.episode_boundaries, other.episode_boundaries))


def collect_random_walk(world: WorldSpec, n: int, rng: np.random.Generator | int) -> Batch:
    """Collect ``n`` transitions of a uniformly random walk.

    The walk restarts from :func:`sample_start` after every goal hit. Crashes
    do not end the episode. ``rng`` may be a Generator or an integer seed.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    seed = None
    if not isinstance(rng, np.random.Generator):
        seed = int(rng)
        rng = np.random.default_rng(seed)
    states = np.empty((n, 3))
    nexts = np.empty((n, 3))
    actions = np.empty(n, dtype=np.int64)
    rewards = np.empty(n)
    terms = np.zeros(n, dtype=bool)
    bounds = []
    pose = sample_start(world, rng)
    for t in range(n):
        a = int(rng.integers(N_ACTIONS))
        nxt, r, done = step(world, pose, a)
        states[t] = (pose.x, pose.y, pose.theta)
        nexts[t] = (nxt.x, nxt.y, nxt.theta)
        actions[t] = a
        rewards[t] = r
        terms[t] = done
        if done:
            if t < n - 1:
                bounds.append(t)
            pose = sample_start(world, rng)
        else:
            pose = nxt
    return Batch(states, actions, rewards, nexts, terms, np.array(bounds, dtype=np.int64),
                 seed=seed, world=world.name, step_length=world.step_length)


_CSV_COLUMNS = "x,y,theta,action,reward,x_next,y_next,theta_next,terminal"


def save_batch(batch: Batch, path: str | Path) -> None:
    """Write a batch as CSV (default) or ``.npz``.

    The CSV starts with a ``#`` metadata line (world, seed, step_length)
    followed by the column header; floats are written with 17 significant
    digits so the file round-trips exactly.
    """
    path = Path(path)
    if batch.states.shape[1] != 3:
        raise DataError("only navigation batches (3-D states) can be serialized")
    if path.suffix == ".npz":
        np.savez(path, states=batch.states, actions=batch.actions, rewards=batch.rewards,
                 next_states=batch.next_states, terminals=batch.terminals,
                 episode_boundaries=batch.episode_boundaries,
                 meta=np.array([str(batch.world), str(batch.seed), str(batch.step_length)]))
        return
    data = np.column_stack([batch.states, batch.actions, batch.rewards, batch.next_states,
                            batch.terminals.astype(int)])
    header = (f"# world={batch.world} seed={batch.seed} step_length={batch.step_length}\n"
              + _CSV_COLUMNS)
    fmt = ["%.17g"] * 3 + ["%d", "%.17g"] + ["%.17g"] * 3 + ["%d"]
    np.savetxt(path, data, fmt=fmt, delimiter=",", header=header, comments="")


def _parse_meta(value: str, cast):
    return None if value in ("None", "") else cast(value)


def load_batch(path: str | Path) -> Batch:
    path = Path(path)
    try:
        if path.suffix == ".npz":
            with np.load(path) as z:
                world, seed, step_length = (str(v) for v in z["meta"])
                return Batch(z["states"], z["actions"], z["rewards"], z["next_states"],
                             z["terminals"], z["episode_boundaries"],
                             seed=_parse_meta(seed, int), world=_parse_meta(world, str),
                             step_length=_parse_meta(step_length, float))
        with open(path) as fh:
            meta_line = fh.readline().strip()
            header = fh.readline().strip()
            if not meta_line.startswith("#") or header != _CSV_COLUMNS:
                raise DataError(f"{path}: not a batch file")
            meta = dict(kv.split("=", 1) for kv in meta_line[1:].split())
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"{path}: {exc}") from exc
    if data.size == 0:
        raise DataError(f"{path}: empty batch")
    return Batch(data[:, 0:3], data[:, 3].astype(np.int64), data[:, 4], data[:, 5:8],
                 data[:, 8] != 0, seed=_parse_meta(meta.get("seed", ""), int),
                 world=_parse_meta(meta.get("world", ""), str),
                 step_length=_parse_meta(meta.get("step_length", ""), float))
