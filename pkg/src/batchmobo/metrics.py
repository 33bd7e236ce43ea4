"""Pareto-front quality metrics.

Exact hypervolume for two objectives via a sorted sweep, a Monte-Carlo
estimator for three or more, and analytic reference fronts for the ZDT
benchmarks.  All functions use the all-minimize convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import SeedTree

_MC_CHUNK = 1 << 16


def non_dominated_mask(F: np.ndarray) -> np.ndarray:
    """Boolean mask of the non-dominated rows of an all-minimize (N, M) batch.

    A row survives unless some other row is <= in every coordinate and <
    in at least one.  Duplicate rows all survive (equal points do not
    dominate each other).
    """
    F = np.asarray(F, dtype=float)
    n = len(F)
    mask = np.ones(n, dtype=bool)
    for i in range(n):
        if not mask[i]:
            continue
        alive = np.flatnonzero(mask)
        fi = F[i]
        dominated_by_i = np.all(F[alive] >= fi, axis=1) & np.any(F[alive] > fi, axis=1)
        mask[alive[dominated_by_i]] = False
    return mask


@dataclass(frozen=True)
class HypervolumeSpec:
    """Reference box for hypervolume scoring (all-minimize convention).

    Points with any coordinate above ``reference_point`` are clipped out
    before scoring.  For the Monte-Carlo estimator, samples are drawn
    uniformly from the box [ideal_point, reference_point]; when
    ``ideal_point`` is omitted it defaults to the component-wise minimum
    of the scored front minus a 5% margin of each box edge.
    """

    reference_point: np.ndarray
    mc_samples: int = 1_000_000
    ideal_point: np.ndarray | None = None

    def __post_init__(self):
        ref = np.asarray(self.reference_point, dtype=float)
        object.__setattr__(self, "reference_point", ref)
        if self.ideal_point is not None:
            ideal = np.asarray(self.ideal_point, dtype=float)
            object.__setattr__(self, "ideal_point", ideal)
            if ideal.shape != ref.shape or not np.all(ideal < ref):
                raise ValueError("ideal_point must lie strictly below reference_point")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")


def _clip_to_reference(front: np.ndarray, ref: np.ndarray) -> np.ndarray:
    front = np.atleast_2d(np.asarray(front, dtype=float))
    if front.size == 0:
        return front.reshape(0, len(ref))
    keep = np.all(front <= ref, axis=1)
    return front[keep]


def hypervolume_2d_exact(front: np.ndarray, ref) -> float:
    """Exact dominated area for a two-objective front, all-minimize.

    Sweeps the non-dominated subset in increasing f1 order and sums the
    rectangles closed off against the reference point.  Points beyond the
    reference contribute nothing; an empty effective front scores 0.
    """
    ref = np.asarray(ref, dtype=float)
    if ref.shape != (2,):
        raise ValueError("hypervolume_2d_exact needs a 2-D reference point")
    pts = _clip_to_reference(front, ref)
    if len(pts) == 0:
        return 0.0
    pts = pts[non_dominated_mask(pts)]
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]
    area = 0.0
    prev_f2 = ref[1]
    for f1, f2 in pts:
        if f2 < prev_f2:  # skip duplicates in f1 that cannot add area
            area += (ref[0] - f1) * (prev_f2 - f2)
            prev_f2 = f2
    return float(area)


def hypervolume_mc(front: np.ndarray, spec: HypervolumeSpec, seed: int) -> tuple[float, float]:
    """Monte-Carlo hypervolume estimate for M >= 2 objectives.

    Samples uniformly inside the [ideal, reference] box in fixed-size
    chunks, each chunk drawn from its own child seed so the estimate does
    not depend on how chunks are scheduled.

    Returns:
        (estimate, std_error): the box volume times the dominated
        fraction, and the binomial standard error of that estimate.
    """
    ref = spec.reference_point
    m = len(ref)
    pts = _clip_to_reference(front, ref)
    if len(pts) == 0:
        return 0.0, 0.0
    pts = pts[non_dominated_mask(pts)]
    if spec.ideal_point is not None:
        ideal = spec.ideal_point
    else:
        lo = pts.min(axis=0)
        span = np.where(ref - lo > 0, ref - lo, 1.0)
        ideal = lo - 0.05 * span
    box_volume = float(np.prod(ref - ideal))
    tree = SeedTree(seed)
    total = int(spec.mc_samples)
    dominated = 0
    chunk_index = 0
    remaining = total
    while remaining > 0:
        count = min(_MC_CHUNK, remaining)
        rng = tree.generator("mc-chunk", chunk_index)
        samples = ideal + rng.random((count, m)) * (ref - ideal)
        alive = np.ones(count, dtype=bool)
        for start in range(0, len(pts), 256):
            block = pts[start : start + 256]
            idx = np.flatnonzero(alive)
            if idx.size == 0:
                break
            hits = np.any(
                np.all(samples[idx, None, :] >= block[None, :, :], axis=2), axis=1
            )
            alive[idx[hits]] = False
        dominated += int(count - alive.sum())
        chunk_index += 1
        remaining -= count
    frac = dominated / total
    estimate = box_volume * frac
    std_error = box_volume * float(np.sqrt(frac * (1.0 - frac) / total))
    return estimate, std_error


def reference_front(problem, resolution: int = 10_000) -> np.ndarray:
    """Analytic ZDT reference front sampled on a uniform f1 grid.

    Evaluates the problem on x1 in [0, 1] with x_2..x_n = 0 (where the
    trade-off term g equals 1) and keeps the non-dominated subset, which
    automatically carves out ZDT3's disjoint segments.

    Args:
        problem: a ZDT :class:`ProblemDefinition` or its name ("zdt1"...).
        resolution: number of grid points, >= 100.
    """
    from .problems import make_problem

    if isinstance(problem, str):
        problem = make_problem(problem)
    if not problem.name.startswith("zdt"):
        raise ValueError(f"no analytic reference front for {problem.name!r}")
    if resolution < 100:
        raise ValueError("resolution must be >= 100")
    xs = np.zeros((resolution, problem.space.dim))
    xs[:, 0] = np.linspace(0.0, 1.0, resolution)
    front = problem.evaluate(xs)
    return front[non_dominated_mask(front)]


DEFAULT_REFERENCE_POINTS = {
    "zdt1": (11.0, 11.0),
    "zdt2": (11.0, 11.0),
    "zdt3": (11.0, 11.0),
    "dtlz1": (1.1, 1.1, 1.1),
    "dtlz4": (1.1, 1.1, 1.1),
}


def default_reference_point(problem) -> np.ndarray:
    """Reference point comfortably dominating all reachable values."""
    if isinstance(problem, str):
        if problem in DEFAULT_REFERENCE_POINTS:
            return np.asarray(DEFAULT_REFERENCE_POINTS[problem], dtype=float)
        raise ValueError(f"no default reference point for {problem!r}")
    if problem.name.startswith("zdt"):
        return np.full(problem.num_objectives, 11.0)
    return np.full(problem.num_objectives, 1.1)
