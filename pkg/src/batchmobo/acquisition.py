"""Uncertainty-aware batch acquisition over the surrogate.

Candidate selection runs NSGA-II on a doubled objective space: for M
performance objectives the search minimizes 2M columns — the (sign
adjusted) ensemble means plus the *negated* epistemic standard
deviations.  Dominance in this space simultaneously pushes candidates
toward predicted-good and uncertain regions, which is what makes the
batch explore instead of piling onto the incumbent front.

Large batches are assembled from several independent, differently
seeded NSGA-II runs with a modest population each.  The final
populations are concatenated, deduplicated exactly (bytewise) against
the evaluated data set and against each other, non-dominated sorted in
the doubled space, and truncated front-by-front with crowding-distance
ties.  If deduplication leaves fewer than the requested batch, the
remainder is filled with fresh uniform samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DesignSpace, SeedTree, _row_key, direction_signs
from .moea import NsgaConfig, environmental_selection, nsga2_run
from .surrogate import EnsembleSurrogate


@dataclass(frozen=True)
class AcquisitionConfig:
    """Settings for one batch-selection round.

    ``num_seeds=None`` resolves to ceil(batch_size / per_seed_population)
    so the combined final populations can cover the batch on their own.
    ``use_uncertainty=False`` drops the M uncertainty columns and
    searches the plain predicted-objective space (the ablated mode).
    ``warm_start=False`` ignores any warm pool handed to ``acquire`` and
    cold-starts every inner run from uniform random designs.
    """

    batch_size: int
    per_seed_population: int = 100
    num_seeds: int | None = None
    generations: int = 300
    sbx_eta: float = 15.0
    sbx_prob: float = 0.9
    mut_eta: float = 20.0
    mut_prob: float | None = None
    use_uncertainty: bool = True
    warm_start: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.num_seeds is not None and self.num_seeds < 1:
            raise ValueError("num_seeds must be >= 1")

    def resolved_num_seeds(self) -> int:
        if self.num_seeds is not None:
            return self.num_seeds
        return max(1, math.ceil(self.batch_size / self.per_seed_population))


def acquisition_objectives(
    surrogate: EnsembleSurrogate,
    directions,
    X: np.ndarray,
    use_uncertainty: bool = True,
) -> np.ndarray:
    """All-minimize objective columns for the candidate search.

    Columns 0..M-1 are the ensemble means with maximized objectives
    negated; columns M..2M-1 (when ``use_uncertainty``) are the negated
    epistemic standard deviations, so lower means more uncertain.
    """
    signs = direction_signs(directions)
    mean, sigma = surrogate.predict(X)
    cols = mean * signs
    if use_uncertainty:
        cols = np.hstack([cols, -sigma])
    return cols


def acquire(
    surrogate: EnsembleSurrogate,
    space: DesignSpace,
    directions,
    known_keys: set,
    cfg: AcquisitionConfig,
    seed: int,
    warm_pool: np.ndarray | None = None,
) -> tuple[np.ndarray, dict]:
    """Select the next batch of designs to evaluate.

    Args:
        surrogate: trained ensemble queried for means and uncertainty.
        space: design bounds; NSGA-II and the top-up sampler stay inside.
        directions: per-objective "min"/"max" of the underlying problem.
        known_keys: bytewise keys of already-evaluated designs (see
            ``Dataset.design_keys``); candidates matching one are dropped.
        cfg: batch size and search settings.
        seed: master seed; per-run and top-up streams derive from it.
        warm_pool: optional (K, n) designs — typically the best already
            evaluated rows — seeding the inner populations.  Each run
            takes a fresh random permutation of the pool, so distinct
            runs start from distinct subsets when K exceeds the
            per-seed population.  Ignored when ``cfg.warm_start`` is
            off.

    Returns:
        (batch, info): ``batch`` is exactly ``cfg.batch_size`` designs,
        selection order; ``info`` is a JSON-ready diagnostics dict.
    """
    tree = SeedTree(seed)
    num_seeds = cfg.resolved_num_seeds()
    if not cfg.warm_start:
        warm_pool = None

    def acq_fn(X: np.ndarray) -> np.ndarray:
        return acquisition_objectives(surrogate, directions, X, cfg.use_uncertainty)

    runs = []
    front0_sizes = []
    warm_rows = 0
    for j in range(num_seeds):
        nsga_cfg = NsgaConfig(
            population=cfg.per_seed_population,
            generations=cfg.generations,
            sbx_eta=cfg.sbx_eta,
            sbx_prob=cfg.sbx_prob,
            mut_eta=cfg.mut_eta,
            mut_prob=cfg.mut_prob,
            seed=tree.child_seed("nsga", j),
        )
        init = None
        if warm_pool is not None and len(warm_pool) > 0:
            perm = tree.generator("warm", index=j).permutation(len(warm_pool))
            init = warm_pool[perm[: cfg.per_seed_population]]
            warm_rows = int(len(init))
        pop = nsga2_run(acq_fn, space, nsga_cfg, init=init)
        runs.append(pop)
        front0_sizes.append(int(len(pop.front(0))))

    union_X = np.vstack([pop.x for pop in runs])
    union_F = np.vstack([pop.objectives for pop in runs])

    seen = set(known_keys)
    keep = []
    removed_known = 0
    removed_internal = 0
    for i, row in enumerate(union_X):
        key = _row_key(row)
        if key in known_keys:
            removed_known += 1
        elif key in seen:
            removed_internal += 1
        else:
            seen.add(key)
            keep.append(i)
    union_X = union_X[keep]
    union_F = union_F[keep]

    S = cfg.batch_size
    if len(union_X) > 0:
        take = min(S, len(union_X))
        sel, _, _ = environmental_selection(union_F, take)
        batch = union_X[sel]
    else:
        batch = np.empty((0, space.dim))

    topup = 0
    if len(batch) < S:
        rng = tree.generator("topup")
        rows = [batch]
        have = len(batch)
        attempts = 0
        while have < S:
            x = space.unscale01(rng.random(space.dim))
            key = _row_key(x)
            attempts += 1
            if attempts > 1000 * S:
                raise RuntimeError("could not draw enough unique top-up designs")
            if key in seen:
                continue
            seen.add(key)
            rows.append(x[None, :])
            have += 1
            topup += 1
        batch = np.vstack(rows)

    info = {
        "batch_size": S,
        "num_seeds": num_seeds,
        "per_seed_population": cfg.per_seed_population,
        "generations": cfg.generations,
        "use_uncertainty": cfg.use_uncertainty,
        "warm_start": cfg.warm_start,
        "warm_rows": warm_rows,
        "front0_sizes": front0_sizes,
        "union_size": int(len(keep)),
        "removed_known": removed_known,
        "removed_internal": removed_internal,
        "topup": topup,
    }
    return batch, info
