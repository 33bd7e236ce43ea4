"""NSGA-II: non-dominated sorting, crowding, SBX, polynomial mutation.

Everything here minimizes every objective; callers negate any objective
that should be maximized.  The generational loop is the classic elitist
(mu + lambda) scheme: binary tournament on (rank, crowding), simulated
binary crossover, polynomial mutation, clip to bounds, then environmental
selection by rank and crowding over parents plus children.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import DesignSpace, EvolutionError, rng_from_seed

_SORT_BLOCK = 256


def dominates(a, b) -> bool:
    """Pareto dominance, all-minimize: a <= b everywhere and < somewhere."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"objective vectors differ in length: {a.shape} vs {b.shape}")
    return bool(np.all(a <= b) and np.any(a < b))


def _domination_matrix(F: np.ndarray) -> np.ndarray:
    """dom[i, j] = True iff row i dominates row j, built in row blocks."""
    n = len(F)
    dom = np.empty((n, n), dtype=bool)
    for start in range(0, n, _SORT_BLOCK):
        block = F[start : start + _SORT_BLOCK]
        le = np.all(block[:, None, :] <= F[None, :, :], axis=2)
        lt = np.any(block[:, None, :] < F[None, :, :], axis=2)
        dom[start : start + _SORT_BLOCK] = le & lt
    return dom


def fast_nondominated_sort(F: np.ndarray) -> list[np.ndarray]:
    """Partition rows of an (N, D) objective batch into Pareto fronts.

    Returns index arrays: front 0 is the non-dominated set, front i+1 the
    non-dominated set once fronts <= i are removed.  Indices within a
    front are ascending; every index appears exactly once.
    """
    F = np.asarray(F, dtype=float)
    if F.ndim != 2 or len(F) == 0:
        raise ValueError("population must be a non-empty (N, D) array")
    dom = _domination_matrix(F)
    counts = dom.sum(axis=0).astype(np.int64)
    fronts: list[np.ndarray] = []
    assigned = np.zeros(len(F), dtype=bool)
    current = np.flatnonzero(counts == 0)
    while current.size:
        fronts.append(current)
        assigned[current] = True
        counts = counts - dom[current].sum(axis=0)
        counts[assigned] = -1
        current = np.flatnonzero(counts == 0)
    return fronts


def crowding_distance(F: np.ndarray) -> np.ndarray:
    """Crowding distances for one front, shape (k,).

    Fronts of size <= 2 are all +inf.  Otherwise each objective adds the
    normalized gap between a point's neighbors in that objective's
    ordering, with +inf at the two extremes.  An objective with zero
    range across the front is skipped entirely, so constant objectives
    never influence the distances.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    k = len(F)
    if k <= 2:
        return np.full(k, np.inf)
    dist = np.zeros(k)
    for m in range(F.shape[1]):
        vals = F[:, m]
        order = np.argsort(vals, kind="stable")
        span = vals[order[-1]] - vals[order[0]]
        if span == 0.0:
            continue
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        dist[order[1:-1]] += (vals[order[2:]] - vals[order[:-2]]) / span
    return dist


@dataclass(frozen=True)
class Population:
    """A ranked NSGA-II working set (struct-of-arrays layout)."""

    x: np.ndarray  # (P, n) designs
    objectives: np.ndarray  # (P, D), all-minimize
    rank: np.ndarray  # (P,) front index per individual
    crowding: np.ndarray  # (P,) crowding distance, +inf at front extremes

    def front(self, r: int = 0) -> np.ndarray:
        return np.flatnonzero(self.rank == r)


@dataclass(frozen=True)
class NsgaConfig:
    """Hyperparameters for one NSGA-II run.

    ``mut_prob=None`` resolves to 1/n at run time.  Defaults are the
    standard real-coded settings: SBX eta 15 at probability 0.9 and
    polynomial mutation eta 20 at probability 1/n.
    """

    population: int
    generations: int
    sbx_eta: float = 15.0
    sbx_prob: float = 0.9
    mut_eta: float = 20.0
    mut_prob: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.population < 4 or self.population % 2 != 0:
            raise ValueError("population must be even and >= 4")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        for name in ("sbx_prob", "mut_prob"):
            p = getattr(self, name)
            if p is not None and not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


def tournament_select(
    rank: np.ndarray, crowding: np.ndarray, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Binary tournaments by (rank asc, crowding desc); full ties keep the first."""
    pairs = rng.integers(0, len(rank), size=(count, 2))
    a, b = pairs[:, 0], pairs[:, 1]
    b_wins = (rank[b] < rank[a]) | ((rank[b] == rank[a]) & (crowding[b] > crowding[a]))
    return np.where(b_wins, b, a)


def sbx_crossover(
    pa: np.ndarray,
    pb: np.ndarray,
    space: DesignSpace,
    eta: float,
    prob: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Simulated binary crossover on parent pairs, children clipped to bounds."""
    u = rng.random(pa.shape)
    do = rng.random(len(pa)) <= prob
    exponent = 1.0 / (eta + 1.0)
    beta = np.where(
        u <= 0.5, (2.0 * u) ** exponent, (0.5 / (1.0 - u)) ** exponent
    )
    c1 = 0.5 * ((1.0 + beta) * pa + (1.0 - beta) * pb)
    c2 = 0.5 * ((1.0 - beta) * pa + (1.0 + beta) * pb)
    c1[~do] = pa[~do]
    c2[~do] = pb[~do]
    return space.clip(c1), space.clip(c2)


def polynomial_mutation(
    x: np.ndarray,
    space: DesignSpace,
    eta: float,
    prob: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Polynomial mutation, per-variable probability, clipped to bounds."""
    do = rng.random(x.shape) < prob
    u = rng.random(x.shape)
    exponent = 1.0 / (eta + 1.0)
    delta = np.where(
        u < 0.5, (2.0 * u) ** exponent - 1.0, 1.0 - (2.0 * (1.0 - u)) ** exponent
    )
    step = delta * (space.upper - space.lower)
    return space.clip(np.where(do, x + step, x))


def annotate(F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rank and crowding for every row of an objective batch."""
    rank = np.empty(len(F), dtype=np.int64)
    crowding = np.empty(len(F))
    for r, front in enumerate(fast_nondominated_sort(F)):
        rank[front] = r
        crowding[front] = crowding_distance(F[front])
    return rank, crowding


def environmental_selection(
    F: np.ndarray, target: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pick ``target`` survivors from a combined pool by rank then crowding.

    Returns (selected indices in selection order, pool ranks, pool
    crowding).  Within the front that overflows the budget, survivors are
    the most-crowded-distance-first, ties broken by ascending pool index.
    """
    rank, crowding = annotate(F)
    selected: list[np.ndarray] = []
    taken = 0
    for r in range(rank.max() + 1):
        front = np.flatnonzero(rank == r)
        ordered = front[np.lexsort((front, -crowding[front]))]
        room = target - taken
        if room <= 0:
            break
        chunk = ordered[:room]
        selected.append(chunk)
        taken += len(chunk)
    return np.concatenate(selected), rank, crowding


def _evaluate(
    objective_fn: Callable[[np.ndarray], np.ndarray],
    X: np.ndarray,
    generation: int,
    dim_out: int | None,
) -> np.ndarray:
    F = np.atleast_2d(np.asarray(objective_fn(X), dtype=float))
    if F.shape[0] != len(X) or (dim_out is not None and F.shape[1] != dim_out):
        raise EvolutionError(
            f"objective function returned shape {F.shape} at generation {generation}"
        )
    if not np.all(np.isfinite(F)):
        raise EvolutionError(
            f"objective function returned non-finite values at generation {generation}"
        )
    return F


def nsga2_run(
    objective_fn: Callable[[np.ndarray], np.ndarray],
    space: DesignSpace,
    cfg: NsgaConfig,
    trace_path=None,
    trace_ref=None,
    callback: Callable[[int, Population], None] | None = None,
    init: np.ndarray | None = None,
) -> Population:
    """Run the elitist NSGA-II generational loop.

    Args:
        objective_fn: pure batch map from (N, n) designs to (N, D)
            finite all-minimize objectives.
        space: box bounds for initialization, mutation, and clipping.
        cfg: run hyperparameters, including the RNG seed.
        trace_path: optional CSV path; one row per generation with the
            front-0 size and, if ``trace_ref`` is given, the exact 2-D
            hypervolume of front 0 against that reference point.
        callback: optional hook called with (generation, population)
            after every environmental selection.
        init: optional (K, n) designs seeding the initial population.
            The first ``min(K, population)`` rows are used verbatim
            (clipped to the box); any remaining slots are filled
            uniformly at random.  Uniform random draws happen either
            way so the stream consumed by the generational loop does
            not depend on K.

    Returns:
        The final population with rank and crowding recomputed on it.
    """
    rng = rng_from_seed(cfg.seed)
    mut_prob = cfg.mut_prob if cfg.mut_prob is not None else 1.0 / space.dim
    pop = cfg.population

    X = space.unscale01(rng.random((pop, space.dim)))
    if init is not None and len(init) > 0:
        seeded = np.atleast_2d(np.asarray(init, dtype=float))[:pop]
        if seeded.shape[1] != space.dim:
            raise EvolutionError(
                f"init designs have dimension {seeded.shape[1]}, space has {space.dim}"
            )
        X[: len(seeded)] = np.clip(seeded, space.lower, space.upper)
    F = _evaluate(objective_fn, X, 0, None)
    rank, crowding = annotate(F)

    trace_fh = open(trace_path, "w", encoding="utf-8") if trace_path else None
    try:
        if trace_fh:
            trace_fh.write("generation,front0_size,hypervolume\n")
            _trace_row(trace_fh, 0, F, rank, trace_ref)
        for gen in range(1, cfg.generations + 1):
            parents = tournament_select(rank, crowding, pop, rng)
            pa, pb = X[parents[0::2]], X[parents[1::2]]
            c1, c2 = sbx_crossover(pa, pb, space, cfg.sbx_eta, cfg.sbx_prob, rng)
            children = np.empty_like(X)
            children[0::2] = c1
            children[1::2] = c2
            children = polynomial_mutation(children, space, cfg.mut_eta, mut_prob, rng)
            Fc = _evaluate(objective_fn, children, gen, F.shape[1])

            pool_X = np.vstack([X, children])
            pool_F = np.vstack([F, Fc])
            sel, pool_rank, pool_crowd = environmental_selection(pool_F, pop)
            X, F = pool_X[sel], pool_F[sel]
            rank, crowding = pool_rank[sel], pool_crowd[sel]

            if trace_fh:
                _trace_row(trace_fh, gen, F, rank, trace_ref)
            if callback is not None:
                callback(gen, Population(X.copy(), F.copy(), rank.copy(), crowding.copy()))
    finally:
        if trace_fh:
            trace_fh.close()

    final_rank, final_crowding = annotate(F)
    return Population(X, F, final_rank, final_crowding)


def _trace_row(fh, gen: int, F: np.ndarray, rank: np.ndarray, ref) -> None:
    front0 = np.flatnonzero(rank == 0)
    if ref is not None and F.shape[1] == 2:
        from .metrics import hypervolume_2d_exact

        hv = repr(hypervolume_2d_exact(F[front0], ref))
    else:
        hv = ""
    fh.write(f"{gen},{len(front0)},{hv}\n")
