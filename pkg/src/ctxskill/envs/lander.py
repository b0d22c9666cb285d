"""Simplified 2D lunar lander with parameterized main/side thrust and mass.

The lander's reference point is the midpoint between its two leg tips, so
``y`` is the height of the feet above the flat ground (``y = 0``).  The pad
is centered at ``x = 0`` with half-width 0.2.  Units are arbitrary per tick.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

GRAVITY = 0.006
MAIN_SCALE = 0.004
SIDE_SCALE = 0.004
SIDE_TORQUE = 0.003
LEG_HALF_SPAN = 0.1
BODY_HEIGHT = 0.1  # body center above the feet midpoint
BODY_RADIUS = 0.06
PAD_HALF_WIDTH = 0.2
TOUCHDOWN_VY = 0.02
TOUCHDOWN_THETA = 0.35
REST_SPEED = 0.005
REST_TICKS = 10
CONTACT_TOL = 5e-3
X_LIMIT = 1.5
MAX_TICKS = 1000
MAIN_FUEL = 0.3
SIDE_FUEL = 0.03
TERMINAL_BONUS = 100.0
VEL_OBS_SCALE = 10.0

PARAM_NAMES = ("main", "side", "mass")
BASE_PARAMS = (20.0, 1.0, 8.0)

NOOP, LEFT, MAIN, RIGHT = range(4)
ACTIONS = ("noop", "left_engine", "main_engine", "right_engine")

(S_X, S_Y, S_VX, S_VY, S_TH, S_OM, S_LEGL, S_LEGR, S_FUEL, S_TICK, S_REST, S_OUTCOME, S_DONE,
 S_SHAPING, S_REWARD) = range(15)
STATE_SIZE = 15

OUTCOME_NONE, OUTCOME_REST, OUTCOME_CRASH = 0, 1, 2

TRAJ_COLUMNS = ("tick", "x", "y", "vx", "vy", "theta", "omega", "action", "reward_delta")


class EpisodeDone(RuntimeError):
    pass


@dataclass(frozen=True)
class LanderParams:
    main: float = 20.0
    side: float = 1.0
    mass: float = 8.0

    def __post_init__(self):
        if not (self.main > 0 and self.side > 0 and self.mass > 0):
            raise ValueError("lander parameters must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.main, self.side, self.mass], dtype=np.float64)


@dataclass
class LanderObjectives:
    f0_reward: float
    f1_time: float


@njit(cache=True)
def shaping(x, y, vx, vy, theta, leg_l, leg_r):
    dist = math.sqrt(x * x + y * y)
    speed = math.sqrt(vx * vx + vy * vy)
    return -100.0 * dist - 100.0 * speed - 100.0 * abs(theta) + 10.0 * leg_l + 10.0 * leg_r


def initial_state(seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    state = np.zeros(STATE_SIZE)
    state[S_X] = rng.uniform(-0.3, 0.3)
    state[S_Y] = 1.0
    state[S_VX] = rng.uniform(-0.005, 0.005)
    state[S_VY] = rng.uniform(-0.005, 0.005)
    state[S_OM] = rng.uniform(-0.002, 0.002)
    state[S_SHAPING] = shaping(state[S_X], state[S_Y], state[S_VX], state[S_VY], 0.0, 0.0, 0.0)
    return state


@njit(cache=True)
def _wrap(theta):
    while theta > math.pi:
        theta -= 2 * math.pi
    while theta <= -math.pi:
        theta += 2 * math.pi
    return theta


@njit(cache=True)
def _contacts(x, y, theta):
    c = math.cos(theta)
    s = math.sin(theta)
    yl = y - LEG_HALF_SPAN * s
    yr = y + LEG_HALF_SPAN * s
    yb = y + BODY_HEIGHT * c - BODY_RADIUS
    return yl, yr, yb


@njit(cache=True)
def step_kernel(state, action, params):
    """Advance one tick in place; returns the tick's reward delta."""
    main = params[0]
    side = params[1]
    mass = params[2]
    th = state[S_TH]
    c = math.cos(th)
    s = math.sin(th)
    ax = 0.0
    ay = -GRAVITY
    alpha = 0.0
    fuel = 0.0
    if action == MAIN:
        a = main / mass * MAIN_SCALE
        ax += -s * a
        ay += c * a
        fuel = MAIN_FUEL
    elif action == LEFT or action == RIGHT:
        direction = -1.0 if action == LEFT else 1.0
        a = side / mass * SIDE_SCALE
        ax += direction * c * a
        ay += direction * s * a
        alpha = -direction * side / mass * SIDE_TORQUE
        fuel = SIDE_FUEL
    vx = state[S_VX] + ax
    vy = state[S_VY] + ay
    x = state[S_X] + vx
    y = state[S_Y] + vy
    om = state[S_OM] + alpha
    th = _wrap(th + om)

    was_down = state[S_LEGL] > 0.0 or state[S_LEGR] > 0.0
    yl, yr, yb = _contacts(x, y, th)
    touching = yl <= 0.0 or yr <= 0.0
    crash = yb <= 0.0 or abs(x) > X_LIMIT
    if touching and not was_down and (abs(vy) > TOUCHDOWN_VY or abs(th) > TOUCHDOWN_THETA):
        crash = True
    leg_l = 0.0
    leg_r = 0.0
    if touching and not crash:
        # ground reaction: lift out of the surface, kill downward motion, level out
        y -= min(yl, yr)
        if vy < 0.0:
            vy = 0.0
        vx *= 0.8
        om = 0.0
        th *= 0.5
        yl, yr, yb = _contacts(x, y, th)
        leg_l = 1.0 if yl <= CONTACT_TOL else 0.0
        leg_r = 1.0 if yr <= CONTACT_TOL else 0.0
    elif touching:
        leg_l = 1.0 if yl <= 0.0 else 0.0
        leg_r = 1.0 if yr <= 0.0 else 0.0

    state[S_X] = x
    state[S_Y] = y
    state[S_VX] = vx
    state[S_VY] = vy
    state[S_TH] = th
    state[S_OM] = om
    state[S_LEGL] = leg_l
    state[S_LEGR] = leg_r
    state[S_FUEL] += fuel
    state[S_TICK] += 1.0

    if leg_l > 0.0 and leg_r > 0.0 and math.sqrt(vx * vx + vy * vy) < REST_SPEED and not crash:
        state[S_REST] += 1.0
    else:
        state[S_REST] = 0.0

    new_shaping = shaping(x, y, vx, vy, th, leg_l, leg_r)
    reward = new_shaping - state[S_SHAPING] - fuel
    state[S_SHAPING] = new_shaping
    if crash:
        reward -= TERMINAL_BONUS
        state[S_OUTCOME] = OUTCOME_CRASH
        state[S_DONE] = 1.0
    elif state[S_REST] >= REST_TICKS:
        reward += TERMINAL_BONUS
        state[S_OUTCOME] = OUTCOME_REST
        state[S_DONE] = 1.0
    elif state[S_TICK] >= MAX_TICKS:
        state[S_DONE] = 1.0
    state[S_REWARD] += reward
    return reward


@njit(cache=True)
def observe_kernel(state, out):
    out[0] = state[S_X]
    out[1] = state[S_Y]
    out[2] = state[S_VX] * VEL_OBS_SCALE
    out[3] = state[S_VY] * VEL_OBS_SCALE
    out[4] = state[S_TH]
    out[5] = state[S_OM] * VEL_OBS_SCALE
    out[6] = state[S_LEGL]
    out[7] = state[S_LEGR]


def decode_action(raw) -> int:
    """Index of the largest output; ties go to the lower index (noop first)."""
    return int(np.argmax(raw))


def reward_and_score(reward_deltas, terminal_tick: int) -> LanderObjectives:
    """Objectives from a trace of per-tick reward deltas (shaping, fuel and terminal bonus included)."""
    return LanderObjectives(f0_reward=float(np.sum(reward_deltas)), f1_time=float(terminal_tick))


def objectives(state: np.ndarray) -> LanderObjectives:
    return LanderObjectives(f0_reward=float(state[S_REWARD]), f1_time=float(state[S_TICK]))


class LanderEnv:
    sensory_dim = 8
    action_dim = 4

    def __init__(self, params: LanderParams | None = None):
        self.params = params or LanderParams()
        self._p = self.params.as_array()
        self.state = initial_state(0)
        self.rewards: list[float] = []

    def reset(self, seed=0) -> np.ndarray:
        self.state = initial_state(seed)
        self.rewards = []
        return self.observe()

    def observe(self) -> np.ndarray:
        out = np.zeros(8)
        observe_kernel(self.state, out)
        return out

    def step(self, action: int):
        if self.done:
            raise EpisodeDone("episode already finished")
        if action not in (NOOP, LEFT, MAIN, RIGHT):
            raise ValueError(f"unknown lander action {action!r}")
        r = step_kernel(self.state, int(action), self._p)
        self.rewards.append(float(r))
        return self.observe(), self.done

    @property
    def done(self) -> bool:
        return bool(self.state[S_DONE])

    @property
    def outcome(self) -> str:
        return ("none", "rest", "crash")[int(self.state[S_OUTCOME])]

    @property
    def tick(self) -> int:
        return int(self.state[S_TICK])

    def objectives(self) -> LanderObjectives:
        return objectives(self.state)
