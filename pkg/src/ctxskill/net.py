"""Genome layout, decoding and forward passes for the S, C and CS networks.

Flat genome layout (row-major matrices, each bias vector directly after its
matrix):

1. skill module (kinds S, CS): ``W1 (10 x sensory)``, ``b1``, ``W2 (5 x 10)``, ``b2``
2. context LSTM (kinds C, CS): for each gate in order input, forget, cell,
   output: ``W (lstm x (sensory + aux + lstm))`` then ``b (lstm)``.  The
   gate input is ``[obs; t_norm; h_prev]`` in that column order.
3. controller: ``W1 (20 x ctrl_in)``, ``b1``, ``W2 (action x 20)``, ``b2``.
   For kind CS the controller input is ``[skill_out; h]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

KINDS = ("S", "C", "CS")
_KIND_CODE = {"S": 0, "C": 1, "CS": 2}

DEFAULT_BOUNDS = (-5.0, 5.0)

# indices into the int64 layout vector consumed by the kernels
L_KIND, L_SENS, L_AUX, L_SKH, L_SKO, L_LSTM, L_CTH, L_ACT, L_CTIN = range(9)
L_SW1, L_SB1, L_SW2, L_SB2, L_GATES, L_CW1, L_CB1, L_CW2, L_CB2, L_TOTAL = range(9, 19)


class StructuralError(ValueError):
    """Genome and architecture do not fit together."""


@dataclass(frozen=True)
class ArchSpec:
    kind: str
    sensory_dim: int
    action_dim: int
    skill_hidden: int = 10
    skill_out: int = 5
    lstm_size: int = 10
    ctrl_hidden: int = 20
    context_aux_dim: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise StructuralError(f"unknown architecture kind {self.kind!r}")
        if self.sensory_dim < 1 or self.action_dim < 1:
            raise StructuralError("sensory_dim and action_dim must be positive")
        if self.context_aux_dim != 1:
            raise StructuralError("the context module takes exactly one auxiliary input (t/T)")

    @property
    def has_skill(self) -> bool:
        return self.kind in ("S", "CS")

    @property
    def has_context(self) -> bool:
        return self.kind in ("C", "CS")

    @property
    def ctrl_in(self) -> int:
        return {"S": self.skill_out, "C": self.lstm_size, "CS": self.skill_out + self.lstm_size}[self.kind]

    @property
    def context_in(self) -> int:
        return self.sensory_dim + self.context_aux_dim

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "sensory_dim": self.sensory_dim,
            "action_dim": self.action_dim,
            "skill_hidden": self.skill_hidden,
            "skill_out": self.skill_out,
            "lstm_size": self.lstm_size,
            "ctrl_hidden": self.ctrl_hidden,
            "context_aux_dim": self.context_aux_dim,
        }


def layout_table(arch: ArchSpec) -> list[tuple[str, int, tuple[int, ...]]]:
    """Ordered ``(slot name, offset, shape)`` entries covering the whole genome."""
    slots: list[tuple[str, tuple[int, ...]]] = []
    if arch.has_skill:
        slots += [
            ("skill.W1", (arch.skill_hidden, arch.sensory_dim)),
            ("skill.b1", (arch.skill_hidden,)),
            ("skill.W2", (arch.skill_out, arch.skill_hidden)),
            ("skill.b2", (arch.skill_out,)),
        ]
    if arch.has_context:
        width = arch.context_in + arch.lstm_size
        for gate in ("input", "forget", "cell", "output"):
            slots += [
                (f"lstm.{gate}.W", (arch.lstm_size, width)),
                (f"lstm.{gate}.b", (arch.lstm_size,)),
            ]
    slots += [
        ("ctrl.W1", (arch.ctrl_hidden, arch.ctrl_in)),
        ("ctrl.b1", (arch.ctrl_hidden,)),
        ("ctrl.W2", (arch.action_dim, arch.ctrl_hidden)),
        ("ctrl.b2", (arch.action_dim,)),
    ]
    table = []
    offset = 0
    for name, shape in slots:
        table.append((name, offset, shape))
        offset += int(np.prod(shape))
    return table


def param_count(arch: ArchSpec) -> int:
    name, offset, shape = layout_table(arch)[-1]
    return offset + int(np.prod(shape))


def layout_vector(arch: ArchSpec) -> np.ndarray:
    """Pack dimensions and slot offsets into the int64 vector the kernels read."""
    offs = {name: off for name, off, _ in layout_table(arch)}
    lay = np.zeros(19, dtype=np.int64)
    lay[L_KIND] = _KIND_CODE[arch.kind]
    lay[L_SENS] = arch.sensory_dim
    lay[L_AUX] = arch.context_aux_dim
    lay[L_SKH] = arch.skill_hidden
    lay[L_SKO] = arch.skill_out
    lay[L_LSTM] = arch.lstm_size
    lay[L_CTH] = arch.ctrl_hidden
    lay[L_ACT] = arch.action_dim
    lay[L_CTIN] = arch.ctrl_in
    lay[L_SW1] = offs.get("skill.W1", -1)
    lay[L_SB1] = offs.get("skill.b1", -1)
    lay[L_SW2] = offs.get("skill.W2", -1)
    lay[L_SB2] = offs.get("skill.b2", -1)
    lay[L_GATES] = offs.get("lstm.input.W", -1)
    lay[L_CW1] = offs["ctrl.W1"]
    lay[L_CB1] = offs["ctrl.b1"]
    lay[L_CW2] = offs["ctrl.W2"]
    lay[L_CB2] = offs["ctrl.b2"]
    lay[L_TOTAL] = param_count(arch)
    return lay


@dataclass(frozen=True)
class Genome:
    weights: np.ndarray
    bounds: tuple[float, float] = DEFAULT_BOUNDS

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        lo, hi = self.bounds
        if not lo < hi:
            raise StructuralError(f"invalid bounds {self.bounds}")
        if w.ndim != 1:
            raise StructuralError("genome weights must be a flat vector")

    def __len__(self):
        return self.weights.shape[0]

    def in_bounds(self) -> bool:
        lo, hi = self.bounds
        return bool(np.all((self.weights >= lo) & (self.weights <= hi)))

    @classmethod
    def random(cls, arch: ArchSpec, rng: np.random.Generator, bounds=DEFAULT_BOUNDS) -> "Genome":
        return cls(rng.uniform(bounds[0], bounds[1], param_count(arch)), tuple(bounds))

    @classmethod
    def zeros(cls, arch: ArchSpec, bounds=DEFAULT_BOUNDS) -> "Genome":
        return cls(np.zeros(param_count(arch)), tuple(bounds))


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, size: int = 10) -> "LstmState":
        return cls(np.zeros(size), np.zeros(size))

    def reset(self) -> "LstmState":
        return LstmState.zeros(self.h.shape[0])

    def copy(self) -> "LstmState":
        return LstmState(self.h.copy(), self.c.copy())


@dataclass
class ActionOutput:
    raw: np.ndarray
    discrete: object = None


@dataclass(frozen=True)
class Network:
    """Decoded network. Matrices are read-only views into the genome."""

    arch: ArchSpec
    genome: Genome
    layers: dict = field(repr=False)
    layout: np.ndarray = field(repr=False)

    def act(self, obs, state: LstmState | None, t_norm: float):
        """One control step. Returns ``(ActionOutput, next LstmState)``."""
        obs = np.ascontiguousarray(obs, dtype=np.float64)
        if obs.shape != (self.arch.sensory_dim,):
            raise StructuralError(f"observation must have length {self.arch.sensory_dim}")
        if state is None:
            state = LstmState.zeros(self.arch.lstm_size)
        ws = Workspace(self.arch)
        h = state.h.copy()
        c = state.c.copy()
        forward(self.genome.weights, self.layout, obs, float(t_norm), h, c, *ws.buffers())
        nxt = state if not self.arch.has_context else LstmState(h, c)
        return ActionOutput(ws.raw.copy()), nxt

    def module_outputs(self, obs, state: LstmState | None, t_norm: float):
        """Like :meth:`act` but also returns the skill output and LSTM ``h``."""
        obs = np.ascontiguousarray(obs, dtype=np.float64)
        if state is None:
            state = LstmState.zeros(self.arch.lstm_size)
        ws = Workspace(self.arch)
        h = state.h.copy()
        c = state.c.copy()
        forward(self.genome.weights, self.layout, obs, float(t_norm), h, c, *ws.buffers())
        skill = ws.skill[: self.arch.skill_out].copy() if self.arch.has_skill else None
        ctx = h.copy() if self.arch.has_context else None
        return ws.raw.copy(), skill, ctx, LstmState(h, c)


class Workspace:
    """Scratch buffers for :func:`forward`, allocated once per episode."""

    def __init__(self, arch: ArchSpec):
        self.raw = np.zeros(arch.action_dim)
        self.skill = np.zeros(max(arch.skill_hidden, arch.skill_out))
        self.xin = np.zeros(arch.context_in + arch.lstm_size)
        self.gates = np.zeros(4 * arch.lstm_size)
        self.hid = np.zeros(max(arch.ctrl_hidden, arch.skill_hidden))
        self.ctrl_x = np.zeros(arch.ctrl_in)

    def buffers(self):
        return self.raw, self.skill, self.xin, self.gates, self.hid, self.ctrl_x


def decode(genome: Genome, arch: ArchSpec) -> Network:
    n = param_count(arch)
    if len(genome) != n:
        raise StructuralError(f"genome has {len(genome)} genes, {arch.kind} architecture needs {n}")
    w = genome.weights
    layers = {name: w[off : off + int(np.prod(shape))].reshape(shape) for name, off, shape in layout_table(arch)}
    return Network(arch, genome, layers, layout_vector(arch))


def encode(net: Network) -> Genome:
    parts = [np.asarray(net.layers[name]).ravel() for name, _, _ in layout_table(net.arch)]
    return Genome(np.concatenate(parts), net.genome.bounds)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


@njit(cache=True)
def lstm_kernel(p, off, nx, L, xin, h, c, gates):
    """Vanilla LSTM step on flat parameters starting at ``p[off]``.

    ``xin[:nx]`` must hold the cell input; h and c are updated in place.
    """
    width = nx + L
    for k in range(L):
        xin[nx + k] = h[k]
    block = L * width + L
    for gate in range(4):
        base = off + gate * block
        boff = base + L * width
        for j in range(L):
            s = p[boff + j]
            row = base + j * width
            for k in range(width):
                s += p[row + k] * xin[k]
            if gate == 2:
                gates[gate * L + j] = np.tanh(s)
            else:
                gates[gate * L + j] = _sigmoid(s)
    for j in range(L):
        cj = gates[L + j] * c[j] + gates[j] * gates[2 * L + j]
        c[j] = cj
        h[j] = gates[3 * L + j] * np.tanh(cj)


@njit(cache=True)
def _dense_tanh(p, woff, boff, n_out, n_in, x, out):
    for j in range(n_out):
        s = p[boff + j]
        row = woff + j * n_in
        for k in range(n_in):
            s += p[row + k] * x[k]
        out[j] = np.tanh(s)


@njit(cache=True)
def forward(p, lay, obs, t_norm, h, c, raw, skill, xin, gates, hid, ctrl_x):
    """Full network step. ``skill[:skill_out]`` holds the skill output afterwards."""
    kind = lay[L_KIND]
    nsens = lay[L_SENS]
    skh = lay[L_SKH]
    sko = lay[L_SKO]
    L = lay[L_LSTM]
    cth = lay[L_CTH]
    nact = lay[L_ACT]
    ctin = lay[L_CTIN]
    if kind != 1:
        _dense_tanh(p, lay[L_SW1], lay[L_SB1], skh, nsens, obs, hid)
        _dense_tanh(p, lay[L_SW2], lay[L_SB2], sko, skh, hid, skill)
    if kind != 0:
        nx = nsens + lay[L_AUX]
        for k in range(nsens):
            xin[k] = obs[k]
        xin[nsens] = t_norm
        lstm_kernel(p, lay[L_GATES], nx, L, xin, h, c, gates)
    pos = 0
    if kind != 1:
        for k in range(sko):
            ctrl_x[pos] = skill[k]
            pos += 1
    if kind != 0:
        for k in range(L):
            ctrl_x[pos] = h[k]
            pos += 1
    _dense_tanh(p, lay[L_CW1], lay[L_CB1], cth, ctin, ctrl_x, hid)
    _dense_tanh(p, lay[L_CW2], lay[L_CB2], nact, cth, hid, raw)


def lstm_step(x, state: LstmState, W, b):
    """One vanilla LSTM step.

    ``W`` has shape ``(4, L, nx + L)`` and ``b`` shape ``(4, L)``, gates
    ordered input, forget, cell, output. Returns ``(h, new_state)``.
    """
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    L = W.shape[1]
    nx = W.shape[2] - L
    if x.shape != (nx,) or b.shape != (4, L) or state.h.shape != (L,):
        raise StructuralError("lstm_step: inconsistent shapes")
    flat = np.concatenate([np.concatenate([W[g].ravel(), b[g]]) for g in range(4)])
    h = state.h.astype(np.float64).copy()
    c = state.c.astype(np.float64).copy()
    xin = np.zeros(nx + L)
    xin[:nx] = x
    lstm_kernel(flat, 0, nx, L, xin, h, c, np.zeros(4 * L))
    return h.copy(), LstmState(h, c)
