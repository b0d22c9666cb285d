"""Module-output recording, two-component PCA and nominal-vs-shifted difference statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domains import get_domain
from .rollout import Runner

# exaggerated Flappy Ball task used for behavior inspection
FLAPPY_SCENARIO = {"flap": -7.0, "gravity": 0.58, "fwd": 8.75, "drag": 0.58}

POWER_TOL = 1e-13
POWER_MAX_ITER = 10_000


class DegenerateInputError(ValueError):
    """Too few samples, or no variance to decompose."""


@dataclass
class ModuleTrace:
    module: str  # "skill" or "context"
    label: str  # "nominal" or "generalization"
    outputs: np.ndarray  # (ticks, dim)

    def __post_init__(self):
        self.outputs = np.atleast_2d(np.asarray(self.outputs, dtype=np.float64))

    def __len__(self):
        return self.outputs.shape[0]

    @property
    def dim(self) -> int:
        return self.outputs.shape[1]


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (2, dim), rows orthonormal
    explained_variance: np.ndarray  # (2,)
    pc2_zero_variance: bool = False

    def transform(self, x) -> np.ndarray:
        return (np.atleast_2d(x) - self.mean) @ self.components.T

    def inverse_transform(self, z) -> np.ndarray:
        return np.atleast_2d(z) @ self.components + self.mean


def scenario_params(domain: str, scenario: dict | None) -> tuple[float, ...]:
    """Full parameter tuple from a partial ``{name: value}`` override of the base values."""
    dom = get_domain(domain)
    scenario = scenario or {}
    unknown = set(scenario) - set(dom.param_names)
    if unknown:
        raise ValueError(f"unknown {domain} parameters: {sorted(unknown)}")
    return tuple(float(scenario.get(n, b)) for n, b in zip(dom.param_names, dom.base_params))


def record_module_outputs(genome, kind: str, domain: str, params, seed: int, label: str = "nominal", track="eval"):
    """Run one episode from fresh memory and return ``(traces, EpisodeRecord)``.

    ``traces`` maps module name to a ModuleTrace for each module the
    architecture has; rows are tick-aligned with the trajectory.
    """
    runner = Runner(domain, kind, genome, track)
    h, c = runner.new_memory()
    rec = runner.episode(params, seed, h, c, record=True)
    traces = {}
    if rec.skill is not None:
        traces["skill"] = ModuleTrace("skill", label, rec.skill)
    if rec.context is not None:
        traces["context"] = ModuleTrace("context", label, rec.context)
    return traces, rec


def _top_eigvec(cov, rng_vec):
    v = rng_vec / np.linalg.norm(rng_vec)
    lam = 0.0
    for _ in range(POWER_MAX_ITER):
        w = cov @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return v, 0.0
        w /= nw
        if np.linalg.norm(w - v) < POWER_TOL or np.linalg.norm(w + v) < POWER_TOL:
            v = w
            break
        v = w
    lam = float(v @ cov @ v)
    return v, lam


def _sign_fix(v):
    i = int(np.argmax(np.abs(v)))
    return -v if v[i] < 0 else v


def pca2(samples) -> PcaModel:
    """Top two principal axes by power iteration with deflation.

    The sign of each axis is chosen so that its largest-magnitude entry is
    positive.  Raises DegenerateInputError for fewer than 3 samples or zero
    total variance; a vanishing second axis is flagged, not raised.
    """
    x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if x.shape[0] < 3:
        raise DegenerateInputError("need at least 3 samples")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / x.shape[0]
    if not np.any(np.abs(cov) > 0):
        raise DegenerateInputError("samples have zero variance")
    dim = cov.shape[0]
    # the start vector is fixed so results do not depend on any RNG state
    start = 1.0 + 0.1 * np.arange(dim)
    v1, l1 = _top_eigvec(cov, start)
    v1 = _sign_fix(v1)
    if dim == 1:
        return PcaModel(mean, np.vstack([v1, np.zeros(1)]), np.array([l1, 0.0]), True)
    cov2 = cov - l1 * np.outer(v1, v1)
    start2 = start - (start @ v1) * v1
    if np.linalg.norm(start2) < 1e-12:
        start2 = np.roll(start, 1) - (np.roll(start, 1) @ v1) * v1
    v2, l2 = _top_eigvec(cov2, start2)
    # re-orthogonalize against round-off in the deflated matrix
    v2 = v2 - (v2 @ v1) * v1
    scale = np.abs(cov).max()
    flag = l2 <= 1e-12 * scale
    if flag:
        l2 = 0.0
    v2 = _sign_fix(v2 / np.linalg.norm(v2))
    return PcaModel(mean, np.vstack([v1, v2]), np.array([l1, max(l2, 0.0)]), bool(flag))


def diff_stats(diffs) -> tuple[float, float]:
    """``(MSD, population STD)`` of signed differences."""
    d = np.asarray(diffs, dtype=np.float64)
    return float(np.mean(d * d)), float(np.std(d))


def trace_diff_stats(nominal: ModuleTrace, general: ModuleTrace, pca: PcaModel | None = None):
    """Per principal axis ``(MSD, STD)`` of projected output differences.

    With no model given, the PCA is fitted on the union of both traces.
    Traces are aligned by tick index and cut to the shorter one.  Returns a
    list of two ``(msd, std)`` pairs.
    """
    if nominal.dim != general.dim:
        raise ValueError("traces have different output dimensions")
    if pca is None:
        union = np.vstack([nominal.outputs, general.outputs])
        if not np.any(union.std(axis=0) > 0):
            # nothing moves in either trace: differences are exactly zero
            return [(0.0, 0.0), (0.0, 0.0)]
        pca = pca2(union)
    n = min(len(nominal), len(general))
    za = pca.transform(nominal.outputs[:n])
    zb = pca.transform(general.outputs[:n])
    d = zb - za
    return [diff_stats(d[:, k]) for k in range(2)]


def projected_diff_stats(za, zb):
    """The statistics step alone, on already projected ``(ticks, pcs)`` arrays."""
    za = np.atleast_2d(np.asarray(za, dtype=np.float64))
    zb = np.atleast_2d(np.asarray(zb, dtype=np.float64))
    n = min(za.shape[0], zb.shape[0])
    d = zb[:n] - za[:n]
    return [diff_stats(d[:, k]) for k in range(d.shape[1])]


def analyze_network(genome, kind: str, domain: str, scenario: dict | None, seed: int, track="eval"):
    """Rows ``(module, pc, msd, std)`` comparing base-parameter and scenario episodes."""
    dom = get_domain(domain)
    nominal, _ = record_module_outputs(genome, kind, domain, dom.base_params, seed, "nominal", track)
    shifted, _ = record_module_outputs(genome, kind, domain, scenario_params(domain, scenario), seed,
                                       "generalization", track)
    rows = []
    for module in ("context", "skill"):
        if module not in nominal:
            continue
        stats = trace_diff_stats(nominal[module], shifted[module])
        for k, (msd, std) in enumerate(stats):
            rows.append((module, k + 1, msd, std))
    return rows

