"""Evolutionary training loop: task sampling, evaluation, stopping, final selection."""

from __future__ import annotations

import logging
import multiprocessing as mp
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import moea
from .domains import Domain, get_domain
from .net import DEFAULT_BOUNDS, KINDS, Genome, StructuralError, param_count
from .rollout import Runner

log = logging.getLogger(__name__)

DEFAULT_STOP = {
    "flappy": {"max_hits": 0.01, "min_pipes": 22.0},
    "lander": {"min_reward": 200.0},
    "lane": {"max_safety": 400.0, "max_dist": 5.0},
}


class ConfigError(ValueError):
    pass


class NoSafeIndividual(RuntimeError):
    pass


@dataclass
class TrainConfig:
    domain: str = "flappy"
    kind: str = "CS"
    mu: int | None = None
    p_crossover: float = moea.P_CROSSOVER
    n_gen: int = 2500
    n_episodes: int | None = None
    perturb: float | None = None
    base_params: list[float] | None = None
    stop: dict = field(default_factory=dict)
    seed: int = 0
    workers: int = 1
    bounds: tuple[float, float] = DEFAULT_BOUNDS
    eta_c: float = moea.ETA_C
    eta_m: float = moea.ETA_M
    track: str = "train"

    def __post_init__(self):
        try:
            dom = get_domain(self.domain)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.mu is None:
            self.mu = dom.mu
        if self.n_episodes is None:
            self.n_episodes = dom.n_episodes
        if self.perturb is None:
            self.perturb = dom.train_perturb
        if self.base_params is None:
            self.base_params = list(dom.base_params)
        self.base_params = [float(v) for v in self.base_params]
        self.stop = {**DEFAULT_STOP[self.domain], **(self.stop or {})}
        self.bounds = (float(self.bounds[0]), float(self.bounds[1]))
        if not isinstance(self.mu, int) or self.mu < 4 or self.mu % 2:
            raise ConfigError(f"mu must be an even integer >= 4, got {self.mu!r}")
        if not 0.0 < self.perturb < 1.0:
            raise ConfigError(f"perturb must lie in (0, 1), got {self.perturb}")
        if not 0.0 <= self.p_crossover <= 1.0:
            raise ConfigError("p_crossover must lie in [0, 1]")
        if int(self.n_gen) != self.n_gen or self.n_gen < 0:
            raise ConfigError("n_gen must be a non-negative integer")
        if self.n_episodes < 1:
            raise ConfigError("n_episodes must be positive")
        if len(self.base_params) != dom.n_params:
            raise ConfigError(f"{self.domain} needs {dom.n_params} base parameters")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not self.bounds[0] < self.bounds[1]:
            raise ConfigError("bounds must satisfy lo < hi")

    @property
    def dom(self) -> Domain:
        return get_domain(self.domain)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bounds"] = list(self.bounds)
        return d


@dataclass(frozen=True)
class TaskList:
    """Ordered ``(task_index, params)`` entries; one varied parameter per task group."""

    entries: tuple[tuple[int, tuple[float, ...]], ...]

    def __len__(self):
        return len(self.entries)

    def groups(self):
        out: dict[int, list[int]] = {}
        for pos, (task, _) in enumerate(self.entries):
            out.setdefault(task, []).append(pos)
        return list(out.items())


def prepare_task_params(config: TrainConfig, rng: np.random.Generator) -> TaskList:
    base = np.asarray(config.base_params, dtype=np.float64)
    entries = []
    for t in range(base.shape[0]):
        a, b = sorted((base[t] * (1 - config.perturb), base[t] * (1 + config.perturb)))
        for v in rng.uniform(a, b, config.n_episodes):
            p = base.copy()
            p[t] = v
            entries.append((t, tuple(float(x) for x in p)))
    return TaskList(tuple(entries))


def draw_seeds(rng: np.random.Generator, n: int) -> list[int]:
    return [int(s) for s in rng.integers(0, 2**31 - 1, size=n)]


def episode_results(genome, kind, task_list: TaskList, domain, episode_seeds, track="train"):
    """Per-episode natural ``(f0, f1)`` in task-list order."""
    runner = Runner(domain, kind, genome, track)
    out = [None] * len(task_list)
    for _, positions in task_list.groups():
        recs = runner.task([task_list.entries[i][1] for i in positions], [episode_seeds[i] for i in positions])
        for i, r in zip(positions, recs):
            out[i] = (r.f0, r.f1)
    return out


def evaluate_individual(genome, kind, task_list: TaskList, domain, episode_seeds, track="train") -> moea.ObjectiveVector:
    """Mean objectives over all episodes; context memory reset per task, carried within it."""
    dom = get_domain(domain) if isinstance(domain, str) else domain
    if len(episode_seeds) != len(task_list):
        raise StructuralError("need one seed per task-list entry")
    res = np.asarray(episode_results(genome, kind, task_list, dom, episode_seeds, track))
    f0, f1 = res.mean(axis=0)
    return moea.ObjectiveVector((float(f0), float(f1)), dom.senses)


def _eval_job(args):
    genome, kind, task_list, domain, seeds, track = args
    return evaluate_individual(genome, kind, task_list, domain, seeds, track).values


class Evaluator:
    """Positional parallel map of :func:`evaluate_individual` over a genome matrix."""

    def __init__(self, workers: int = 1):
        self.workers = workers
        self._pool = None

    def __enter__(self):
        if self.workers > 1:
            self._pool = ProcessPoolExecutor(self.workers, mp_context=mp.get_context("fork"))
        return self

    def __exit__(self, *exc):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __call__(self, genomes, kind, task_list, domain, seeds, track="train") -> np.ndarray:
        jobs = [(g, kind, task_list, domain, seeds, track) for g in genomes]
        if self._pool is None:
            vals = [_eval_job(j) for j in jobs]
        else:
            chunk = max(1, len(jobs) // (4 * self.workers))
            vals = list(self._pool.map(_eval_job, jobs, chunksize=chunk))
        return np.asarray(vals, dtype=np.float64)


def meets_stop(domain: str, f0: float, f1: float, stop: dict) -> bool:
    if domain == "flappy":
        return f0 <= stop["max_hits"] and f1 >= stop["min_pipes"]
    if domain == "lander":
        return f0 >= stop["min_reward"]
    return f0 <= stop["max_safety"] and f1 <= stop["max_dist"]


@dataclass
class GenerationEntry:
    gen: int
    objectives: np.ndarray  # natural sense, (mu, 2)
    rank: np.ndarray
    crowding: np.ndarray
    front0_size: int
    best: tuple[float, float]
    evaluations: int
    wall_time: float


@dataclass
class GenerationLog:
    domain: str
    init_evaluations: int = 0
    entries: list[GenerationEntry] = field(default_factory=list)
    stopped_early: bool = False

    def append(self, entry: GenerationEntry):
        self.entries.append(entry)

    @property
    def total_evaluations(self) -> int:
        return self.init_evaluations + sum(e.evaluations for e in self.entries)

    def rows(self):
        for e in self.entries:
            for i in range(e.objectives.shape[0]):
                yield (e.gen, i, float(e.objectives[i, 0]), float(e.objectives[i, 1]), int(e.rank[i]), float(e.crowding[i]))


@dataclass
class ParetoArchive:
    domain: str
    kind: str
    genomes: np.ndarray
    objectives: np.ndarray  # natural sense
    bounds: tuple[float, float] = DEFAULT_BOUNDS

    def __len__(self):
        return self.genomes.shape[0]


def _best(nat, signs):
    canon = nat * signs
    return tuple(float(nat[np.argmin(canon[:, k]), k]) for k in range(nat.shape[1]))


def run_evolution(config: TrainConfig, callback: Callable[[GenerationEntry], None] | None = None,
                  evaluator: Evaluator | None = None):
    """NSGA-II with per-generation task resampling. Returns ``(ParetoArchive, GenerationLog)``."""
    dom = config.dom
    arch = dom.arch(config.kind)
    n_genes = param_count(arch)
    signs = dom.signs
    lo, hi = config.bounds
    rng = np.random.default_rng(config.seed)
    glog = GenerationLog(config.domain)

    own = evaluator is None
    ev = Evaluator(config.workers) if own else evaluator
    if own:
        ev.__enter__()
    try:
        parents = rng.uniform(lo, hi, size=(config.mu, n_genes))
        tasks = prepare_task_params(config, rng)
        seeds = draw_seeds(rng, len(tasks))
        nat = ev(parents, config.kind, tasks, dom, seeds, config.track)
        glog.init_evaluations = config.mu * len(tasks)
        _, rank, crowd = moea.assign_rank_and_crowding(nat * signs)

        for gen in range(1, config.n_gen + 1):
            t0 = time.perf_counter()
            sel = moea.tournament_dcd(rank, crowd, config.mu, rng)
            kids = moea.variation(parents[sel], config.bounds, rng, config.p_crossover, config.eta_c, config.eta_m)
            tasks = prepare_task_params(config, rng)
            seeds = draw_seeds(rng, len(tasks))
            kid_nat = ev(kids, config.kind, tasks, dom, seeds, config.track)
            stop = any(meets_stop(config.domain, f0, f1, config.stop) for f0, f1 in kid_nat)

            pool_g = np.vstack([parents, kids])
            pool_nat = np.vstack([nat, kid_nat])
            keep, pool_rank, pool_crowd = moea.survive_mu_plus_lambda(pool_nat * signs, config.mu)
            parents, nat = pool_g[keep], pool_nat[keep]
            rank, crowd = pool_rank[keep], pool_crowd[keep]

            entry = GenerationEntry(
                gen=gen,
                objectives=nat.copy(),
                rank=rank.copy(),
                crowding=crowd.copy(),
                front0_size=int(np.sum(rank == 0)),
                best=_best(nat, signs),
                evaluations=len(kids) * len(tasks),
                wall_time=time.perf_counter() - t0,
            )
            glog.append(entry)
            if callback is not None:
                callback(entry)
            log.debug("gen %d best %s front0 %d", gen, entry.best, entry.front0_size)
            if stop:
                glog.stopped_early = True
                break
    finally:
        if own:
            ev.__exit__(None, None, None)

    front = rank == 0
    archive = ParetoArchive(config.domain, config.kind, parents[front].copy(), nat[front].copy(), config.bounds)
    return archive, glog


def select_final(archive: ParetoArchive, stop: dict | None = None, safety_threshold: float | None = None) -> int:
    """Index of the final network within the archive.

    flappy / lander: the best performer among members meeting the safety
    threshold (lowest index on ties).  lane: the member closest to the
    origin after scaling each objective by its range over the front.
    """
    stop = {**DEFAULT_STOP[archive.domain], **(stop or {})}
    F = np.asarray(archive.objectives, dtype=np.float64)
    if F.shape[0] == 0:
        raise NoSafeIndividual("empty archive")
    if archive.domain == "lane":
        span = F.max(axis=0) - F.min(axis=0)
        span[span == 0] = 1.0
        norm = np.linalg.norm((F - F.min(axis=0)) / span, axis=1)
        return int(np.argmin(norm))
    if archive.domain == "flappy":
        thr = stop["max_hits"] if safety_threshold is None else safety_threshold
        safe = F[:, 0] <= thr
        perf = F[:, 1]
    else:
        thr = stop["min_reward"] if safety_threshold is None else safety_threshold
        safe = F[:, 0] >= thr
        perf = -F[:, 1]
    if not safe.any():
        raise NoSafeIndividual(f"no archive member meets the safety threshold {thr}")
    idx = np.flatnonzero(safe)
    return int(idx[np.argmax(perf[idx])])


def final_genome(archive: ParetoArchive, stop=None, safety_threshold=None) -> Genome:
    i = select_final(archive, stop, safety_threshold)
    return Genome(archive.genomes[i], archive.bounds)


def select_relaxed(archive: ParetoArchive, stop: dict | None = None) -> tuple[int, float | None]:
    """:func:`select_final`, falling back to the safest member's f0 as the threshold.

    Returns ``(index, threshold_used)``; the threshold is None when the
    configured one was met (and always for lane, which has no threshold rule).
    """
    try:
        return select_final(archive, stop), None
    except NoSafeIndividual:
        F = np.asarray(archive.objectives, dtype=np.float64)
        if F.shape[0] == 0:
            raise
        thr = float(F[:, 0].min() if archive.domain == "flappy" else F[:, 0].max())
        return select_final(archive, stop, thr), thr
