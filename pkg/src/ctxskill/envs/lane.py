"""Kinematic lane-following car with five rangefinders.

``alpha`` scales the steering gain and ``beta`` the throttle gain.  Tracks
are centerline polylines with a constant lane half-width; the episode ends
after 600 ticks (20 s at 30 Hz) or once the car is inside the target zone.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from numba import njit

DT = 1.0 / 30.0
MAX_TICKS = 600
ACCEL_GAIN = 2.0
STEER_GAIN = 0.8
SPEED_DRAG = 0.1
SENSOR_CAP = 30.0
RAY_ANGLES = np.deg2rad(np.array([-90.0, -45.0, 0.0, 45.0, 90.0]))
LAMBDA = 5.5

PARAM_NAMES = ("alpha", "beta")
BASE_PARAMS = (1.0, 1.0)

S_X, S_Y, S_HEAD, S_SPEED, S_STEER, S_TICK, S_DONE, S_SAFETY, S_D = range(9)
STATE_SIZE = 9

TRAJ_COLUMNS = ("tick", "x", "y", "heading", "speed", "steer", "throttle", "d")


@dataclass(frozen=True)
class LaneParams:
    alpha: float = 1.0
    beta: float = 1.0

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta], dtype=np.float64)


@dataclass
class LaneObjectives:
    f0_safety: float
    f1_dist: float


@dataclass(frozen=True)
class Track:
    name: str
    centerline: np.ndarray
    lane_half_width: float
    target: tuple[float, float, float]

    def __post_init__(self):
        pts = np.ascontiguousarray(self.centerline, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError("track centerline must be an (N, 2) polyline")
        if np.any(np.linalg.norm(np.diff(pts, axis=0), axis=1) <= 0):
            raise ValueError("track centerline has repeated points")
        object.__setattr__(self, "centerline", pts)
        left, right = _offset_polyline(pts, self.lane_half_width)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    @property
    def start_heading(self) -> float:
        d = self.centerline[1] - self.centerline[0]
        return math.atan2(d[1], d[0])

    def arc_length(self) -> np.ndarray:
        seg = np.linalg.norm(np.diff(self.centerline, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(seg)])

    def curvature(self) -> np.ndarray:
        """Discrete curvature at interior vertices (turn angle over mean segment length)."""
        d = np.diff(self.centerline, axis=0)
        ang = np.arctan2(d[:, 1], d[:, 0])
        turn = np.angle(np.exp(1j * np.diff(ang)))
        seg = np.linalg.norm(d, axis=1)
        return turn / (0.5 * (seg[1:] + seg[:-1]))

    def to_dict(self) -> dict:
        tx, ty, tr = self.target
        return {
            "name": self.name,
            "points": self.centerline.tolist(),
            "half_width": self.lane_half_width,
            "target": {"x": tx, "y": ty, "r": tr},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Track":
        t = d["target"]
        return cls(d["name"], np.asarray(d["points"], dtype=np.float64), float(d["half_width"]),
                   (float(t["x"]), float(t["y"]), float(t["r"])))


def _offset_polyline(pts, offset):
    d = np.diff(pts, axis=0)
    d /= np.linalg.norm(d, axis=1)[:, None]
    tang = np.vstack([d[:1], d[:-1] + d[1:], d[-1:]])
    tang /= np.linalg.norm(tang, axis=1)[:, None]
    normal = np.column_stack([-tang[:, 1], tang[:, 0]])
    return pts + offset * normal, pts - offset * normal


def track_from_curvature(name, segments, spacing=1.0, half_width=3.0, target_radius=4.0) -> Track:
    """Integrate a piecewise-constant curvature profile ``[(length_m, kappa), ...]`` from the origin."""
    pts = [(0.0, 0.0)]
    heading = 0.0
    x = y = 0.0
    for length, kappa in segments:
        n = max(1, int(round(length / spacing)))
        ds = length / n
        for _ in range(n):
            # midpoint heading keeps the arc's curvature exact at constant kappa
            mid = heading + 0.5 * kappa * ds
            x += ds * math.cos(mid)
            y += ds * math.sin(mid)
            heading += kappa * ds
            pts.append((x, y))
    pts = np.array(pts)
    return Track(name, pts, half_width, (float(pts[-1, 0]), float(pts[-1, 1]), target_radius))


def load_track(name_or_path) -> Track:
    """Load a bundled track (``"train"``, ``"eval"``) or a track JSON file."""
    p = Path(str(name_or_path))
    if p.suffix == ".json" and p.exists():
        data = json.loads(p.read_text())
    else:
        data = json.loads(resources.files("ctxskill.envs.tracks").joinpath(f"{name_or_path}.json").read_text())
    return Track.from_dict(data)


@njit(cache=True)
def _point_polyline_distance(px, py, pts):
    best = 1e300
    for i in range(pts.shape[0] - 1):
        ax = pts[i, 0]
        ay = pts[i, 1]
        bx = pts[i + 1, 0] - ax
        by = pts[i + 1, 1] - ay
        L2 = bx * bx + by * by
        t = ((px - ax) * bx + (py - ay) * by) / L2
        t = min(max(t, 0.0), 1.0)
        dx = px - ax - t * bx
        dy = py - ay - t * by
        d2 = dx * dx + dy * dy
        if d2 < best:
            best = d2
    return math.sqrt(best)


@njit(cache=True)
def _ray_polyline(px, py, ux, uy, pts, cap):
    best = cap
    for i in range(pts.shape[0] - 1):
        ax = pts[i, 0]
        ay = pts[i, 1]
        ex = pts[i + 1, 0] - ax
        ey = pts[i + 1, 1] - ay
        den = ux * ey - uy * ex
        if den == 0.0:
            continue
        wx = ax - px
        wy = ay - py
        t = (wx * ey - wy * ex) / den
        s = (wx * uy - wy * ux) / den
        if t >= 0.0 and 0.0 <= s <= 1.0 and t < best:
            best = t
    return best


@njit(cache=True)
def rangefinder_kernel(state, left, right, angles, cap, out):
    px = state[S_X]
    py = state[S_Y]
    h = state[S_HEAD]
    for k in range(angles.shape[0]):
        a = h + angles[k]
        ux = math.cos(a)
        uy = math.sin(a)
        d = _ray_polyline(px, py, ux, uy, left, cap)
        d = min(d, _ray_polyline(px, py, ux, uy, right, cap))
        out[k] = d / cap


@njit(cache=True)
def step_kernel(state, steer, throttle, params, center, target):
    """Advance one tick in place; accumulates the safety sum and returns d(t)."""
    alpha = params[0]
    beta = params[1]
    s = min(max(steer, -1.0), 1.0)
    u = min(max(throttle, -1.0), 1.0)
    speed = state[S_SPEED]
    heading = state[S_HEAD] + DT * alpha * STEER_GAIN * s * speed
    speed_new = max(0.0, speed + DT * (beta * ACCEL_GAIN * u - SPEED_DRAG * speed))
    x = state[S_X] + DT * speed_new * math.cos(heading)
    y = state[S_Y] + DT * speed_new * math.sin(heading)
    d = _point_polyline_distance(x, y, center)
    state[S_SAFETY] += d + LAMBDA * abs(s - state[S_STEER])
    state[S_X] = x
    state[S_Y] = y
    state[S_HEAD] = heading
    state[S_SPEED] = speed_new
    state[S_STEER] = s
    state[S_D] = d
    state[S_TICK] += 1.0
    dx = x - target[0]
    dy = y - target[1]
    if state[S_TICK] >= MAX_TICKS or dx * dx + dy * dy <= target[2] * target[2]:
        state[S_DONE] = 1.0
    return d


def initial_state(track: Track) -> np.ndarray:
    state = np.zeros(STATE_SIZE)
    state[S_X], state[S_Y] = track.centerline[0]
    state[S_HEAD] = track.start_heading
    return state


def target_distance(state, track: Track) -> float:
    tx, ty, _ = track.target
    return float(math.hypot(state[S_X] - tx, state[S_Y] - ty))


def rangefinders(state, track: Track) -> np.ndarray:
    out = np.zeros(5)
    rangefinder_kernel(state, track.left, track.right, RAY_ANGLES, SENSOR_CAP, out)
    return out


def safety_objective(d, steer, lam: float = LAMBDA) -> float:
    """Sum over ticks of ``d(t) + lam * |s(t) - s(t-1)|`` with ``s(0) = 0``.

    ``d`` and ``steer`` hold the values for t = 1..T.
    """
    d = np.asarray(d, dtype=np.float64)
    s = np.concatenate([[0.0], np.asarray(steer, dtype=np.float64)])
    if d.shape[0] != s.shape[0] - 1:
        raise ValueError("d and steer must have the same length")
    return float(np.sum(d + lam * np.abs(np.diff(s))))


def decode_action(raw) -> tuple[float, float]:
    return float(raw[0]), float(raw[1])


class LaneEnv:
    sensory_dim = 5
    action_dim = 2

    def __init__(self, params: LaneParams | None = None, track: Track | str = "train"):
        self.params = params or LaneParams()
        self._p = self.params.as_array()
        self.track = track if isinstance(track, Track) else load_track(track)
        self._target = np.array(self.track.target)
        self.state = initial_state(self.track)

    def reset(self, seed=None) -> np.ndarray:
        self.state = initial_state(self.track)
        return self.observe()

    def observe(self) -> np.ndarray:
        return rangefinders(self.state, self.track)

    def step(self, steer: float, throttle: float):
        if self.done:
            raise RuntimeError("episode already finished")
        step_kernel(self.state, float(steer), float(throttle), self._p, self.track.centerline, self._target)
        return self.observe(), self.done

    @property
    def done(self) -> bool:
        return bool(self.state[S_DONE])

    @property
    def tick(self) -> int:
        return int(self.state[S_TICK])

    def objectives(self) -> LaneObjectives:
        return LaneObjectives(float(self.state[S_SAFETY]), target_distance(self.state, self.track))
