"""NSGA-II machinery on canonical (all-minimize) objective arrays."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ETA_C = 20.0
ETA_M = 20.0
SBX_GENE_RATE = 0.5
P_CROSSOVER = 0.9


@dataclass(frozen=True)
class ObjectiveVector:
    values: tuple[float, ...]
    senses: tuple[str, ...]

    def __post_init__(self):
        if len(self.values) != len(self.senses):
            raise ValueError("values and senses must have the same length")
        if any(s not in ("min", "max") for s in self.senses):
            raise ValueError(f"senses must be 'min' or 'max', got {self.senses}")
        if any(np.isnan(v) for v in self.values):
            raise ValueError("objective values must not be NaN")

    def canonical(self) -> np.ndarray:
        return np.array([v if s == "min" else -v for v, s in zip(self.values, self.senses)], dtype=np.float64)


@dataclass
class Population:
    """Genomes with canonical objectives and their NSGA-II rank/crowding."""

    genomes: np.ndarray
    objectives: np.ndarray
    rank: np.ndarray | None = None
    crowding: np.ndarray | None = None

    def __len__(self):
        return self.genomes.shape[0]

    def take(self, idx) -> "Population":
        idx = np.asarray(idx, dtype=np.int64)
        return Population(
            self.genomes[idx].copy(),
            self.objectives[idx].copy(),
            None if self.rank is None else self.rank[idx].copy(),
            None if self.crowding is None else self.crowding[idx].copy(),
        )

    @staticmethod
    def concat(a: "Population", b: "Population") -> "Population":
        return Population(np.vstack([a.genomes, b.genomes]), np.vstack([a.objectives, b.objectives]))


def dominates(a, b) -> bool:
    a = np.asarray(a)
    b = np.asarray(b)
    return bool(np.all(a <= b) and np.any(a < b))


def fast_non_dominated_sort(objs) -> list[list[int]]:
    """Deb's fast non-dominated sort; fronts are lists of indices in ascending order."""
    F = np.asarray(objs, dtype=np.float64)
    n = F.shape[0]
    if n == 0:
        return []
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    counts = dom.sum(axis=0)
    fronts = []
    current = [i for i in range(n) if counts[i] == 0]
    while current:
        fronts.append(current)
        nxt = []
        for i in current:
            for j in np.flatnonzero(dom[i]):
                counts[j] -= 1
                if counts[j] == 0:
                    nxt.append(int(j))
        current = sorted(nxt)
    return fronts


def crowding_distance(objs) -> np.ndarray:
    F = np.asarray(objs, dtype=np.float64)
    n, m = F.shape
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = np.inf
        return dist
    for k in range(m):
        order = np.argsort(F[:, k], kind="stable")
        vals = F[order, k]
        span = vals[-1] - vals[0]
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        if span == 0:
            continue
        dist[order[1:-1]] += (vals[2:] - vals[:-2]) / span
    return dist


def assign_rank_and_crowding(objs):
    """Rank and crowding for every member of a pool, computed front by front."""
    fronts = fast_non_dominated_sort(objs)
    n = len(objs)
    rank = np.zeros(n, dtype=np.int64)
    crowd = np.zeros(n)
    for r, front in enumerate(fronts):
        rank[front] = r
        crowd[front] = crowding_distance(np.asarray(objs)[front])
    return fronts, rank, crowd


def tournament_dcd(rank, crowding, n, rng: np.random.Generator) -> np.ndarray:
    """``n`` binary tournaments: lower rank, then larger crowding, then a fair coin."""
    rank = np.asarray(rank)
    crowding = np.asarray(crowding)
    size = rank.shape[0]
    picks = rng.integers(0, size, size=(n, 2))
    coins = rng.random(n)
    out = np.empty(n, dtype=np.int64)
    for t in range(n):
        a, b = picks[t]
        if rank[a] != rank[b]:
            out[t] = a if rank[a] < rank[b] else b
        elif crowding[a] != crowding[b]:
            out[t] = a if crowding[a] > crowding[b] else b
        else:
            out[t] = a if coins[t] < 0.5 else b
    return out


def sbx_beta(u, eta=ETA_C):
    u = np.asarray(u, dtype=np.float64)
    return np.where(u <= 0.5, (2.0 * u) ** (1.0 / (eta + 1.0)), (1.0 / (2.0 * (1.0 - u))) ** (1.0 / (eta + 1.0)))


def sbx_apply(p1, p2, u, mask, bounds, eta=ETA_C):
    """SBX with explicit uniform draws ``u`` and per-gene ``mask``; children clamped to bounds."""
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    beta = sbx_beta(u, eta)
    # algebraically 0.5*((1+b)p1 + (1-b)p2); this form keeps p1 exactly when b == 1 or p1 == p2
    half = 0.5 * (1.0 - beta) * (p2 - p1)
    c1 = p1 + half
    c2 = p2 - half
    c1 = np.where(mask, c1, p1)
    c2 = np.where(mask, c2, p2)
    lo, hi = bounds
    return np.clip(c1, lo, hi), np.clip(c2, lo, hi)


def sbx(p1, p2, bounds, rng: np.random.Generator, eta_c=ETA_C, p_var=SBX_GENE_RATE):
    n = np.shape(p1)[0]
    mask = rng.random(n) < p_var
    u = rng.random(n)
    return sbx_apply(p1, p2, u, mask, bounds, eta_c)


def polynomial_delta(x, u, bounds, eta=ETA_M):
    """Bounded polynomial perturbation of genes ``x`` for uniform draws ``u``."""
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    lo, hi = bounds
    span = hi - lo
    d1 = (x - lo) / span
    d2 = (hi - x) / span
    p = 1.0 / (eta + 1.0)
    with np.errstate(invalid="ignore"):
        low = (2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1) ** (eta + 1.0)) ** p - 1.0
        high = 1.0 - (2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2) ** (eta + 1.0)) ** p
    return np.where(u < 0.5, low, high) * span


def polynomial_apply(x, u, mask, bounds, eta=ETA_M):
    x = np.asarray(x, dtype=np.float64)
    y = x + polynomial_delta(x, u, bounds, eta)
    return np.clip(np.where(mask, y, x), bounds[0], bounds[1])


def polynomial_mutation(x, bounds, rng: np.random.Generator, eta_m=ETA_M, p_m=None):
    n = np.shape(x)[0]
    if p_m is None:
        p_m = 1.0 / n
    mask = rng.random(n) < p_m
    u = rng.random(n)
    return polynomial_apply(x, u, mask, bounds, eta_m)


def survive_mu_plus_lambda(objs, mu):
    """Indices of the ``mu`` survivors plus rank/crowding of the whole pool.

    Fronts are taken whole while they fit; the overflowing front is cut by
    descending crowding, ties resolved by lower pool index.
    """
    objs = np.asarray(objs, dtype=np.float64)
    fronts, rank, crowd = assign_rank_and_crowding(objs)
    chosen: list[int] = []
    for front in fronts:
        if len(chosen) + len(front) <= mu:
            chosen.extend(front)
        else:
            need = mu - len(chosen)
            # np.lexsort sorts by the last key first
            order = np.lexsort((np.asarray(front), -crowd[front]))
            chosen.extend(int(front[i]) for i in order[:need])
        if len(chosen) == mu:
            break
    return np.asarray(chosen, dtype=np.int64), rank, crowd


def variation(parents: np.ndarray, bounds, rng: np.random.Generator, p_crossover=P_CROSSOVER,
              eta_c=ETA_C, eta_m=ETA_M, p_var=SBX_GENE_RATE) -> np.ndarray:
    """Pairwise SBX (with probability ``p_crossover``) then mutation of both children."""
    kids = parents.copy()
    n = kids.shape[0]
    for i in range(0, n - 1, 2):
        if rng.random() <= p_crossover:
            kids[i], kids[i + 1] = sbx(kids[i], kids[i + 1], bounds, rng, eta_c, p_var)
        kids[i] = polynomial_mutation(kids[i], bounds, rng, eta_m)
        kids[i + 1] = polynomial_mutation(kids[i + 1], bounds, rng, eta_m)
    if n % 2:
        kids[-1] = polynomial_mutation(kids[-1], bounds, rng, eta_m)
    return kids
