"""Compiled episode loops: network forward pass + environment step per tick.

Each ``*_episode`` kernel mutates ``h`` and ``c`` in place so the caller can
carry context memory from one episode to the next within a task.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .domains import Domain, get_domain
from .envs import flappy, lander, lane
from .net import (
    L_ACT, L_AUX, L_CTH, L_CTIN, L_LSTM, L_SENS, L_SKH, L_SKO, Genome, StructuralError, forward, layout_vector, param_count,
)

_EMPTY2 = np.zeros((0, 0))


@njit(cache=True)
def _buffers(lay):
    nsens = lay[L_SENS]
    L = lay[L_LSTM]
    raw = np.zeros(lay[L_ACT])
    skill = np.zeros(max(lay[L_SKH], lay[L_SKO]))
    xin = np.zeros(nsens + lay[L_AUX] + L)
    gates = np.zeros(4 * L)
    hid = np.zeros(max(lay[L_CTH], lay[L_SKH]))
    ctrl_x = np.zeros(lay[L_CTIN])
    return raw, skill, xin, gates, hid, ctrl_x


@njit(cache=True)
def _record_modules(tick, lay, skill, h, skill_tr, ctx_tr):
    if skill_tr.shape[0] > tick:
        for k in range(skill_tr.shape[1]):
            skill_tr[tick, k] = skill[k]
    if ctx_tr.shape[0] > tick:
        for k in range(ctx_tr.shape[1]):
            ctx_tr[tick, k] = h[k]


@njit(cache=True)
def flappy_episode(p, lay, params, pipes, h, c, traj, skill_tr, ctx_tr):
    raw, skill, xin, gates, hid, ctrl_x = _buffers(lay)
    state = np.zeros(flappy.STATE_SIZE)
    state[flappy.S_Y] = flappy.HEIGHT / 2
    state[flappy.S_VX] = 2.0
    obs = np.zeros(6)
    while True:
        tick = int(state[flappy.S_TICK])
        flappy.observe_kernel(state, pipes, obs)
        forward(p, lay, obs, tick / flappy.MAX_TICKS, h, c, raw, skill, xin, gates, hid, ctrl_x)
        _record_modules(tick, lay, skill, h, skill_tr, ctx_tr)
        up = raw[0] > 0.0
        fwd = raw[1] > 0.0
        done = flappy.step_kernel(state, pipes, up, fwd, params)
        if traj.shape[0] > tick:
            traj[tick, 0] = state[flappy.S_TICK]
            traj[tick, 1] = state[flappy.S_Y]
            traj[tick, 2] = state[flappy.S_VX]
            traj[tick, 3] = state[flappy.S_VY]
            traj[tick, 4] = 1.0 if up else 0.0
            traj[tick, 5] = 1.0 if fwd else 0.0
            traj[tick, 6] = state[flappy.S_PASSED]
            traj[tick, 7] = state[flappy.S_HITS]
            traj[tick, 8] = state[flappy.S_BOUNDARY]
        if done:
            break
    f0 = state[flappy.S_HITS] + flappy.BOUNDARY_PENALTY * state[flappy.S_BOUNDARY]
    return f0, state[flappy.S_PASSED], int(state[flappy.S_TICK])


@njit(cache=True)
def lander_episode(p, lay, params, state, h, c, traj, skill_tr, ctx_tr):
    raw, skill, xin, gates, hid, ctrl_x = _buffers(lay)
    obs = np.zeros(8)
    while True:
        tick = int(state[lander.S_TICK])
        lander.observe_kernel(state, obs)
        forward(p, lay, obs, tick / lander.MAX_TICKS, h, c, raw, skill, xin, gates, hid, ctrl_x)
        _record_modules(tick, lay, skill, h, skill_tr, ctx_tr)
        action = 0
        for k in range(1, 4):
            if raw[k] > raw[action]:
                action = k
        r = lander.step_kernel(state, action, params)
        if traj.shape[0] > tick:
            traj[tick, 0] = state[lander.S_TICK]
            traj[tick, 1] = state[lander.S_X]
            traj[tick, 2] = state[lander.S_Y]
            traj[tick, 3] = state[lander.S_VX]
            traj[tick, 4] = state[lander.S_VY]
            traj[tick, 5] = state[lander.S_TH]
            traj[tick, 6] = state[lander.S_OM]
            traj[tick, 7] = action
            traj[tick, 8] = r
        if state[lander.S_DONE] > 0.0:
            break
    return state[lander.S_REWARD], state[lander.S_TICK], int(state[lander.S_TICK])


@njit(cache=True)
def lane_episode(p, lay, params, state, center, left, right, target, h, c, traj, skill_tr, ctx_tr):
    raw, skill, xin, gates, hid, ctrl_x = _buffers(lay)
    obs = np.zeros(5)
    angles = np.array([-0.5 * np.pi, -0.25 * np.pi, 0.0, 0.25 * np.pi, 0.5 * np.pi])
    while True:
        tick = int(state[lane.S_TICK])
        lane.rangefinder_kernel(state, left, right, angles, lane.SENSOR_CAP, obs)
        forward(p, lay, obs, tick / lane.MAX_TICKS, h, c, raw, skill, xin, gates, hid, ctrl_x)
        _record_modules(tick, lay, skill, h, skill_tr, ctx_tr)
        d = lane.step_kernel(state, raw[0], raw[1], params, center, target)
        if traj.shape[0] > tick:
            traj[tick, 0] = state[lane.S_TICK]
            traj[tick, 1] = state[lane.S_X]
            traj[tick, 2] = state[lane.S_Y]
            traj[tick, 3] = state[lane.S_HEAD]
            traj[tick, 4] = state[lane.S_SPEED]
            traj[tick, 5] = state[lane.S_STEER]
            traj[tick, 6] = min(max(raw[1], -1.0), 1.0)
            traj[tick, 7] = d
        if state[lane.S_DONE] > 0.0:
            break
    dx = state[lane.S_X] - target[0]
    dy = state[lane.S_Y] - target[1]
    return state[lane.S_SAFETY], np.sqrt(dx * dx + dy * dy), int(state[lane.S_TICK])


@dataclass
class EpisodeRecord:
    f0: float
    f1: float
    ticks: int
    trajectory: np.ndarray | None = None
    skill: np.ndarray | None = None
    context: np.ndarray | None = None


class Runner:
    """Runs episodes of one genome in one domain. Cheap to build; holds no episode state."""

    def __init__(self, domain: Domain | str, kind: str, genome: Genome | np.ndarray, track="train"):
        self.domain = get_domain(domain) if isinstance(domain, str) else domain
        self.arch = self.domain.arch(kind)
        w = genome.weights if isinstance(genome, Genome) else np.asarray(genome, dtype=np.float64)
        if w.shape != (param_count(self.arch),):
            raise StructuralError(
                f"genome has {w.shape[0]} genes, {kind} {self.domain.name} network needs {param_count(self.arch)}"
            )
        self.weights = np.ascontiguousarray(w, dtype=np.float64)
        self.layout = layout_vector(self.arch)
        self.track = None
        if self.domain.name == "lane":
            self.track = track if isinstance(track, lane.Track) else lane.load_track(track)
            self._target = np.array(self.track.target)

    def new_memory(self):
        L = self.arch.lstm_size
        return np.zeros(L), np.zeros(L)

    def episode(self, params, seed, h, c, record=False) -> EpisodeRecord:
        params = np.asarray(params, dtype=np.float64)
        T = self.domain.max_ticks
        name = self.domain.name
        if record:
            ncols = {"flappy": 9, "lander": 9, "lane": 8}[name]
            traj = np.zeros((T, ncols))
            skill_tr = np.zeros((T, self.arch.skill_out)) if self.arch.has_skill else _EMPTY2
            ctx_tr = np.zeros((T, self.arch.lstm_size)) if self.arch.has_context else _EMPTY2
        else:
            traj = skill_tr = ctx_tr = _EMPTY2
        if name == "flappy":
            f0, f1, n = flappy_episode(self.weights, self.layout, params, flappy.make_pipes(seed), h, c,
                                       traj, skill_tr, ctx_tr)
        elif name == "lander":
            f0, f1, n = lander_episode(self.weights, self.layout, params, lander.initial_state(seed), h, c,
                                       traj, skill_tr, ctx_tr)
        else:
            f0, f1, n = lane_episode(self.weights, self.layout, params, lane.initial_state(self.track),
                                     self.track.centerline, self.track.left, self.track.right, self._target,
                                     h, c, traj, skill_tr, ctx_tr)
        rec = EpisodeRecord(float(f0), float(f1), int(n))
        if record:
            rec.trajectory = traj[:n].copy()
            rec.skill = skill_tr[:n].copy() if self.arch.has_skill else None
            rec.context = ctx_tr[:n].copy() if self.arch.has_context else None
        return rec

    def task(self, params_list, seeds) -> list[EpisodeRecord]:
        """Episodes of one task: memory reset once, then carried across episodes."""
        h, c = self.new_memory()
        return [self.episode(p, s, h, c) for p, s in zip(params_list, seeds)]
