"""Elitist bi-objective genetic algorithm on a unit box.

Fast non-dominated sorting plus crowding distance, binary tournament parent
selection, simulated binary crossover and polynomial mutation. One call to
`nsga2_evolve` runs one (mu + lambda) generation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Nsga2Config",
    "fast_nondominated_sort",
    "crowding_distance",
    "nsga2_evolve",
    "hypervolume_2d",
]


@dataclass(frozen=True)
class Nsga2Config:
    eta_crossover: float = 15.0
    eta_mutation: float = 20.0
    p_crossover: float = 0.9
    p_mutation: float | None = None  # default 1/dim


def _dominates(a: np.ndarray, b: np.ndarray) -> bool:
    return bool(np.all(a <= b) and np.any(a < b))


def fast_nondominated_sort(objs: np.ndarray) -> np.ndarray:
    """Rank of each individual; rank 0 is the non-dominated front."""
    n = len(objs)
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    n_dominating = np.zeros(n, dtype=int)
    for p in range(n):
        for q in range(p + 1, n):
            if _dominates(objs[p], objs[q]):
                dominated_by[p].append(q)
                n_dominating[q] += 1
            elif _dominates(objs[q], objs[p]):
                dominated_by[q].append(p)
                n_dominating[p] += 1
    ranks = np.full(n, -1, dtype=int)
    front = [i for i in range(n) if n_dominating[i] == 0]
    r = 0
    while front:
        nxt = []
        for p in front:
            ranks[p] = r
            for q in dominated_by[p]:
                n_dominating[q] -= 1
                if n_dominating[q] == 0:
                    nxt.append(q)
        front = nxt
        r += 1
    return ranks


def crowding_distance(objs: np.ndarray) -> np.ndarray:
    """Crowding distance within one front; boundary points get infinity."""
    n, m = objs.shape
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for k in range(m):
        order = np.argsort(objs[:, k], kind="stable")
        fmin, fmax = objs[order[0], k], objs[order[-1], k]
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        if fmax - fmin <= 0.0:
            continue
        for i in range(1, n - 1):
            dist[order[i]] += (objs[order[i + 1], k] - objs[order[i - 1], k]) / (fmax - fmin)
    return dist


def _rank_and_crowd(objs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ranks = fast_nondominated_sort(objs)
    crowd = np.zeros(len(objs))
    for r in np.unique(ranks):
        idx = np.where(ranks == r)[0]
        crowd[idx] = crowding_distance(objs[idx])
    return ranks, crowd


def _tournament(ranks, crowd, rng) -> int:
    a, b = rng.integers(0, len(ranks), 2)
    if ranks[a] < ranks[b]:
        return int(a)
    if ranks[b] < ranks[a]:
        return int(b)
    return int(a) if crowd[a] >= crowd[b] else int(b)


def _sbx_pair(p1, p2, eta, rng):
    # each variable crosses with probability 0.5, else the parents' values pass
    u = rng.uniform(size=p1.shape)
    beta = np.where(
        u <= 0.5,
        (2.0 * u) ** (1.0 / (eta + 1.0)),
        (1.0 / (2.0 * (1.0 - u))) ** (1.0 / (eta + 1.0)),
    )
    cross = rng.uniform(size=p1.shape) < 0.5
    beta = np.where(cross, beta, 1.0)
    c1 = 0.5 * ((1.0 + beta) * p1 + (1.0 - beta) * p2)
    c2 = 0.5 * ((1.0 - beta) * p1 + (1.0 + beta) * p2)
    return np.clip(c1, 0.0, 1.0), np.clip(c2, 0.0, 1.0)


def _poly_mutate(x, eta, p_mut, rng):
    # boundary-aware polynomial mutation on the unit box
    y = x.copy()
    for d in range(len(y)):
        if rng.uniform() >= p_mut:
            continue
        u = rng.uniform()
        if u < 0.5:
            delta = (2.0 * u + (1.0 - 2.0 * u) * (1.0 - y[d]) ** (eta + 1.0)) ** (
                1.0 / (eta + 1.0)
            ) - 1.0
        else:
            delta = 1.0 - (
                2.0 * (1.0 - u) + 2.0 * (u - 0.5) * y[d] ** (eta + 1.0)
            ) ** (1.0 / (eta + 1.0))
        y[d] = min(max(y[d] + delta, 0.0), 1.0)
    return y


def nsga2_evolve(
    population: np.ndarray,
    objectives: np.ndarray,
    evaluate,
    rng: np.random.Generator,
    cfg: Nsga2Config = Nsga2Config(),
) -> tuple[np.ndarray, np.ndarray]:
    """One elitist generation; returns the next population and its objectives.

    `evaluate` maps an (n, dim) array of candidates to an (n, m) objective
    array (lower is better everywhere).
    """
    pop = np.asarray(population, float)
    objs = np.asarray(objectives, float)
    n, dim = pop.shape
    if n < 4 or n % 2 != 0:
        raise ValueError(f"population size must be even and >= 4, got {n}")
    p_mut = cfg.p_mutation if cfg.p_mutation is not None else 1.0 / dim

    ranks, crowd = _rank_and_crowd(objs)
    children = np.empty_like(pop)
    i = 0
    while i < n:
        pa = pop[_tournament(ranks, crowd, rng)]
        pb = pop[_tournament(ranks, crowd, rng)]
        if rng.uniform() < cfg.p_crossover:
            c1, c2 = _sbx_pair(pa, pb, cfg.eta_crossover, rng)
        else:
            c1, c2 = pa.copy(), pb.copy()
        children[i] = _poly_mutate(c1, cfg.eta_mutation, p_mut, rng)
        children[i + 1] = _poly_mutate(c2, cfg.eta_mutation, p_mut, rng)
        i += 2

    child_objs = np.asarray(evaluate(children), float)
    all_pop = np.vstack([pop, children])
    all_objs = np.vstack([objs, child_objs])
    ranks, crowd = _rank_and_crowd(all_objs)
    order = np.lexsort((-crowd, ranks))
    keep = order[:n]
    return all_pop[keep].copy(), all_objs[keep].copy()


def hypervolume_2d(objs: np.ndarray, ref: tuple[float, float]) -> float:
    """Dominated-area hypervolume for a bi-objective minimization front."""
    pts = np.asarray(objs, float)
    pts = pts[(pts[:, 0] < ref[0]) & (pts[:, 1] < ref[1])]
    if len(pts) == 0:
        return 0.0
    ranks = fast_nondominated_sort(pts)
    front = pts[ranks == 0]
    front = front[np.argsort(front[:, 0])]
    hv = 0.0
    prev_f2 = ref[1]
    for f1, f2 in front:
        if f2 < prev_f2:
            hv += (ref[0] - f1) * (prev_f2 - f2)
            prev_f2 = f2
    return float(hv)
