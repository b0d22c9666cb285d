"""Generalization sweeps over extended parameter grids and paired difference histograms."""

from __future__ import annotations

import hashlib
import itertools
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .domains import get_domain
from .net import Genome
from .rollout import Runner

DEFAULT_BINS = 41


@dataclass
class SweepConfig:
    domain: str = "flappy"
    ranges: list[tuple[float, float]] | None = None
    steps: int | None = None
    samples: int | None = None
    seed: int = 0
    workers: int = 1
    track: str = "eval"
    n_bins: int = DEFAULT_BINS

    def __post_init__(self):
        dom = get_domain(self.domain)
        if self.ranges is None:
            self.ranges = dom.sweep_ranges()
        self.ranges = [(float(a), float(b)) for a, b in self.ranges]
        if self.steps is None:
            self.steps = dom.sweep_steps
        if self.samples is None:
            self.samples = dom.sweep_samples
        if len(self.ranges) != dom.n_params:
            raise ValueError(f"{self.domain} sweep needs {dom.n_params} ranges")
        if self.steps < 1 or self.samples < 1:
            raise ValueError("steps and samples must be positive")
        if self.n_bins < 1:
            raise ValueError("n_bins must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown sweep config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "domain": self.domain,
            "ranges": [list(r) for r in self.ranges],
            "steps": self.steps,
            "samples": self.samples,
            "seed": self.seed,
            "workers": self.workers,
            "track": self.track,
            "n_bins": self.n_bins,
        }


@dataclass
class SweepRecord:
    coords: tuple[int, ...]
    params: tuple[float, ...]
    metrics: dict[str, tuple[float, float]] = field(default_factory=dict)


def axes(config: SweepConfig) -> list[np.ndarray]:
    return [np.linspace(lo, hi, config.steps) for lo, hi in config.ranges]


def build_grid(config: SweepConfig) -> list[tuple[tuple[int, ...], tuple[float, ...]]]:
    """Cartesian product of per-axis linspaces (endpoints included), first axis slowest."""
    ax = axes(config)
    idx = itertools.product(*[range(len(a)) for a in ax])
    return [(c, tuple(float(ax[k][i]) for k, i in enumerate(c))) for c in idx]


def episode_count(config: SweepConfig) -> int:
    return config.steps ** len(config.ranges) * config.samples


def point_seeds(config: SweepConfig, n_points: int) -> np.ndarray:
    rng = np.random.default_rng(config.seed)
    return rng.integers(0, 2**31 - 1, size=(n_points, config.samples))


def _genome_key(kind: str, genome: Genome) -> str:
    return kind + ":" + hashlib.sha256(genome.weights.tobytes()).hexdigest()


def _sweep_job(args):
    domain, nets, points, seeds, samples, track = args
    runners = {key: Runner(domain, kind, w, track) for key, (kind, w) in nets.items()}
    out = []
    for params, s in zip(points, seeds):
        res = {}
        for key, r in runners.items():
            recs = r.task([params] * samples, [int(x) for x in s])
            res[key] = (float(np.mean([x.f0 for x in recs])), float(np.mean([x.f1 for x in recs])))
        out.append(res)
    return out


def sweep(genome_by_kind: dict, grid, config: SweepConfig) -> list[SweepRecord]:
    """Evaluate every network at every grid point on shared (paired) episode seeds.

    ``genome_by_kind`` maps a slot label (``"CS"``, ``"S"``, ...) to
    ``(kind, Genome)`` or to a bare Genome whose kind equals the label.
    Context memory is reset per grid point and carried over its samples.
    """
    slots = {}
    for label, v in genome_by_kind.items():
        kind, g = v if isinstance(v, tuple) else (label, v)
        slots[label] = (kind, g if isinstance(g, Genome) else Genome(np.asarray(g)))
    # identical networks are run once and shared between slots
    nets = {}
    slot_key = {}
    for label, (kind, g) in slots.items():
        key = _genome_key(kind, g)
        nets[key] = (kind, g.weights)
        slot_key[label] = key

    points = [p for _, p in grid]
    seeds = point_seeds(config, len(points))
    n_jobs = max(1, min(len(points), 8 * config.workers))
    bounds = np.linspace(0, len(points), n_jobs + 1).astype(int)
    jobs = [(config.domain, nets, points[a:b], seeds[a:b], config.samples, config.track)
            for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers, mp_context=mp.get_context("fork")) as ex:
            chunks = list(ex.map(_sweep_job, jobs))
    else:
        chunks = [_sweep_job(j) for j in jobs]
    flat = [r for chunk in chunks for r in chunk]
    return [
        SweepRecord(coords, params, {label: flat[i][slot_key[label]] for label in slots})
        for i, (coords, params) in enumerate(grid)
    ]


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    summary: dict

    def rows(self):
        for lo, hi, n in zip(self.edges[:-1], self.edges[1:], self.counts):
            yield float(lo), float(hi), int(n)


def diff_histogram(records, metric: str, pair: tuple[str, str], n_bins: int = DEFAULT_BINS, sense: str = "min") -> Histogram:
    """Histogram of ``metric[A] - metric[B]`` over grid points.

    Bins are equal-width over ``[-m, m]`` with ``m`` the largest absolute
    difference (1 when all differences are 0) and left-closed, the last bin
    closed on both sides.  With an odd bin count 0 sits inside the central bin.
    """
    k = {"f0": 0, "f1": 1}[metric]
    a, b = pair
    d = np.array([r.metrics[a][k] - r.metrics[b][k] for r in records], dtype=np.float64)
    m = float(np.max(np.abs(d))) if d.size else 0.0
    if m == 0.0:
        m = 1.0
    edges = np.linspace(-m, m, n_bins + 1)
    counts, _ = np.histogram(d, edges)
    better = d < 0 if sense == "min" else d > 0
    worse = d > 0 if sense == "min" else d < 0
    n = int(d.size)
    summary = {
        "pair": f"{a}-{b}",
        "metric": metric,
        "sense": sense,
        "n": n,
        "mean_diff": float(d.mean()) if n else 0.0,
        "median_diff": float(np.median(d)) if n else 0.0,
        "fraction_a_better": float(better.mean()) if n else 0.0,
        "wins": int(better.sum()),
        "ties": int((d == 0).sum()),
        "losses": int(worse.sum()),
    }
    return Histogram(edges, counts.astype(np.int64), summary)


def metric_means(records, label: str) -> tuple[float, float]:
    f = np.array([r.metrics[label] for r in records])
    return float(f[:, 0].mean()), float(f[:, 1].mean())
