"""Headless Flappy Ball: flap upward, flap forward, gravity and drag.

Screen coordinates: y grows downward, 0 is the ceiling and 512 the ground.
The agent is a disc fixed at screen x = 80; pipes scroll left by ``vx``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

HEIGHT = 512.0
AGENT_X = 80.0
RADIUS = 12.0
PIPE_COUNT = 25
PIPE_START = 300.0
PIPE_SPACING = 180.0
PIPE_WIDTH = 26.0
GAP_HEIGHT = 140.0
GAP_CENTER_LO = 120.0
GAP_CENTER_HI = 392.0
MAX_TICKS = 2400
VY_MAX = 16.0
VX_MAX = 12.0
BOUNDARY_PENALTY = 5.0

PARAM_NAMES = ("flap", "fwd", "gravity", "drag")
BASE_PARAMS = (-12.0, 5.0, 1.0, 1.0)

# state vector slots
S_Y, S_VX, S_VY, S_PASSED, S_HITS, S_BOUNDARY, S_TICK, S_COLLIDED, S_DONE = range(9)
STATE_SIZE = 9
# pipe table columns
P_XL, P_TOP, P_BOTTOM, P_HIT, P_CONSUMED = range(5)

TRAJ_COLUMNS = ("tick", "y", "vx", "vy", "action_up", "action_fwd", "pipes_passed", "hit_ticks", "boundary_ticks")


class EpisodeDone(RuntimeError):
    """Raised when stepping an episode that has already finished."""


@dataclass(frozen=True)
class FlappyParams:
    flap: float = -12.0
    fwd: float = 5.0
    gravity: float = 1.0
    drag: float = 1.0

    def as_array(self) -> np.ndarray:
        return np.array([self.flap, self.fwd, self.gravity, self.drag], dtype=np.float64)


@dataclass
class FlappyObjectives:
    f0_hits: float
    f1_pipes: float


def make_pipes(seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    centers = rng.uniform(GAP_CENTER_LO, GAP_CENTER_HI, PIPE_COUNT)
    pipes = np.zeros((PIPE_COUNT, 5))
    pipes[:, P_XL] = PIPE_START + PIPE_SPACING * np.arange(PIPE_COUNT)
    pipes[:, P_TOP] = centers - GAP_HEIGHT / 2
    pipes[:, P_BOTTOM] = centers + GAP_HEIGHT / 2
    return pipes


def initial_state() -> np.ndarray:
    state = np.zeros(STATE_SIZE)
    state[S_Y] = HEIGHT / 2
    state[S_VX] = 2.0
    return state


@njit(cache=True)
def _disc_hits_rect(cx, cy, r, x0, x1, y0, y1):
    px = min(max(cx, x0), x1)
    py = min(max(cy, y0), y1)
    dx = cx - px
    dy = cy - py
    return dx * dx + dy * dy < r * r


@njit(cache=True)
def step_kernel(state, pipes, up, fwd, params):
    """Advance one tick in place. Returns True when the episode is over."""
    flap = params[0]
    fwd_imp = params[1]
    gravity = params[2]
    drag = params[3]
    vy = state[S_VY]
    if up:
        vy += flap
    vy += gravity
    vy = min(max(vy, -VY_MAX), VY_MAX)
    vx = state[S_VX]
    if fwd:
        vx += fwd_imp
    vx = vx * (1.0 - 0.1 * drag)
    vx = min(max(vx, 0.0), VX_MAX)
    y = state[S_Y] + vy
    if y < 0.0:
        y = 0.0
        vy = 0.0
        state[S_BOUNDARY] += 1.0
    elif y > HEIGHT:
        y = HEIGHT
        vy = 0.0
        state[S_BOUNDARY] += 1.0
    state[S_Y] = y
    state[S_VX] = vx
    state[S_VY] = vy

    hit = False
    n = pipes.shape[0]
    remaining = 0
    for i in range(n):
        pipes[i, P_XL] -= vx
        xl = pipes[i, P_XL]
        xr = xl + PIPE_WIDTH
        if xr < AGENT_X - RADIUS or xl > AGENT_X + RADIUS:
            touching = False
        else:
            touching = _disc_hits_rect(AGENT_X, y, RADIUS, xl, xr, 0.0, pipes[i, P_TOP]) or _disc_hits_rect(
                AGENT_X, y, RADIUS, xl, xr, pipes[i, P_BOTTOM], HEIGHT
            )
        if touching:
            hit = True
            pipes[i, P_HIT] = 1.0
        if pipes[i, P_CONSUMED] == 0.0 and xr < AGENT_X:
            pipes[i, P_CONSUMED] = 1.0
            if pipes[i, P_HIT] == 0.0:
                state[S_PASSED] += 1.0
            else:
                state[S_COLLIDED] += 1.0
        if pipes[i, P_CONSUMED] == 0.0:
            remaining += 1
    if hit:
        state[S_HITS] += 1.0
    state[S_TICK] += 1.0
    done = state[S_TICK] >= MAX_TICKS or remaining == 0
    if done:
        state[S_DONE] = 1.0
    return done


@njit(cache=True)
def observe_kernel(state, pipes, out):
    out[0] = state[S_Y] / HEIGHT
    out[1] = (state[S_VX] + VY_MAX) / (2 * VY_MAX)
    out[2] = (state[S_VY] + VY_MAX) / (2 * VY_MAX)
    # closest pipe the disc has not fully cleared yet
    nxt = -1
    for i in range(pipes.shape[0]):
        if pipes[i, P_XL] + PIPE_WIDTH >= AGENT_X - RADIUS:
            nxt = i
            break
    if nxt < 0:
        out[3] = 1.0
        out[4] = 0.0
        out[5] = 0.0
    else:
        dx = (pipes[nxt, P_XL] + PIPE_WIDTH - AGENT_X) / HEIGHT
        out[3] = min(max(dx, 0.0), 1.0)
        out[4] = pipes[nxt, P_TOP] / HEIGHT
        out[5] = (HEIGHT - pipes[nxt, P_BOTTOM]) / HEIGHT


def decode_action(raw) -> tuple[bool, bool]:
    """``(up, fwd)``: each output fires its flap when strictly positive."""
    return bool(raw[0] > 0.0), bool(raw[1] > 0.0)


def objectives(state: np.ndarray) -> FlappyObjectives:
    return FlappyObjectives(
        f0_hits=float(state[S_HITS] + BOUNDARY_PENALTY * state[S_BOUNDARY]),
        f1_pipes=float(state[S_PASSED]),
    )


class FlappyEnv:
    """Step-by-step interface over the kernels (the rollout loop uses them directly)."""

    sensory_dim = 6
    action_dim = 2

    def __init__(self, params: FlappyParams | None = None):
        self.params = params or FlappyParams()
        self._p = self.params.as_array()
        self.state = initial_state()
        self.pipes = make_pipes(0)

    def reset(self, seed=0) -> np.ndarray:
        self.state = initial_state()
        self.pipes = make_pipes(seed)
        return self.observe()

    def observe(self) -> np.ndarray:
        out = np.zeros(6)
        observe_kernel(self.state, self.pipes, out)
        return out

    def step(self, up: bool, fwd: bool):
        if self.done:
            raise EpisodeDone("episode already finished")
        done = step_kernel(self.state, self.pipes, bool(up), bool(fwd), self._p)
        return self.observe(), bool(done)

    @property
    def done(self) -> bool:
        return bool(self.state[S_DONE])

    @property
    def y(self):
        return float(self.state[S_Y])

    @property
    def vx(self):
        return float(self.state[S_VX])

    @property
    def vy(self):
        return float(self.state[S_VY])

    @property
    def tick(self):
        return int(self.state[S_TICK])

    @property
    def pipes_passed(self):
        return int(self.state[S_PASSED])

    @property
    def pipes_collided(self):
        return int(self.state[S_COLLIDED])

    @property
    def pipes_remaining(self):
        return int(np.sum(self.pipes[:, P_CONSUMED] == 0.0))

    @property
    def hit_ticks(self):
        return int(self.state[S_HITS])

    @property
    def boundary_ticks(self):
        return int(self.state[S_BOUNDARY])

    def objectives(self) -> FlappyObjectives:
        return objectives(self.state)
