"""Shared domain types: design spaces, datasets, and deterministic seeding.

Conventions used throughout the package:

- A batch of design points is a float64 array of shape (N, dim); a single
  point is a 1-D array of length dim.
- A batch of performance vectors is a float64 array of shape (N, M).
- Objective directions are given per objective as the strings "min"/"max".
  Internally, search and dominance always operate in all-minimize form;
  :func:`direction_signs` supplies the +1/-1 factors for the conversion.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

MIN = "min"
MAX = "max"

CSV_FLOAT_FMT = "%.17g"  # exact float64 round-trip


class ConfigError(ValueError):
    """Invalid configuration (bad value combinations, degenerate data)."""


class EvaluationError(RuntimeError):
    """A forward-process evaluation failed (subprocess or protocol error)."""


class TrainingError(RuntimeError):
    """Surrogate training diverged or produced non-finite values."""


class EvolutionError(RuntimeError):
    """The evolutionary loop encountered non-finite objective values."""


class SnapshotError(RuntimeError):
    """A run snapshot is missing, corrupt, or inconsistent."""


def direction_signs(directions) -> np.ndarray:
    """Map "min"/"max" direction labels to +1/-1 minimization factors."""
    signs = []
    for d in directions:
        if d == MIN:
            signs.append(1.0)
        elif d == MAX:
            signs.append(-1.0)
        else:
            raise ValueError(f"unknown objective direction {d!r}")
    return np.asarray(signs)


class SeedTree:
    """Deterministic hierarchy of 64-bit child seeds.

    A child seed is derived as the first 8 bytes (little-endian) of
    SHA-256 over ``master || label || index``, with the two integers
    encoded as unsigned little-endian 8-byte values.  Identical
    ``(master, label, index)`` triples always produce identical child
    seeds, so adding new labelled streams (extra workers, extra
    iterations) never perturbs existing ones.
    """

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed) % (1 << 64)

    def child_seed(self, label: str, index: int = 0) -> int:
        payload = (
            self.master_seed.to_bytes(8, "little")
            + label.encode("utf-8")
            + (int(index) % (1 << 64)).to_bytes(8, "little")
        )
        return int.from_bytes(hashlib.sha256(payload).digest()[:8], "little")

    def child(self, label: str, index: int = 0) -> "SeedTree":
        return SeedTree(self.child_seed(label, index))

    def generator(self, label: str, index: int = 0) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.child_seed(label, index)))


def rng_from_seed(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) % (1 << 64)))


@dataclass(frozen=True)
class DesignSpace:
    """Box-bounded design space in R^dim.

    Attributes:
        dim: number of design variables, >= 1.
        lower: per-dimension lower bounds, shape (dim,).
        upper: per-dimension upper bounds, strictly above ``lower``.
    """

    dim: int
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if self.dim < 1:
            raise ValueError("design space dimension must be >= 1")
        if lower.shape != (self.dim,) or upper.shape != (self.dim,):
            raise ValueError("bounds must have shape (dim,)")
        if not np.all(np.isfinite(lower)) or not np.all(np.isfinite(upper)):
            raise ValueError("bounds must be finite")
        if not np.all(lower < upper):
            raise ValueError("lower[i] < upper[i] must hold for all i")

    @classmethod
    def unit(cls, dim: int) -> "DesignSpace":
        return cls(dim, np.zeros(dim), np.ones(dim))

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Per-row box membership for a (N, dim) batch (inclusive bounds)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.all((x >= self.lower) & (x <= self.upper), axis=1)

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def scale01(self, x: np.ndarray) -> np.ndarray:
        """Affine map of points into the unit box."""
        return (x - self.lower) / (self.upper - self.lower)

    def unscale01(self, u: np.ndarray) -> np.ndarray:
        return self.lower + u * (self.upper - self.lower)


def uniform_sample(space: DesignSpace, count: int, seed: int) -> np.ndarray:
    """Draw ``count`` i.i.d. uniform points from the box, shape (count, dim).

    Deterministic for a fixed seed: the same (space, count, seed) triple
    yields a bitwise-identical batch.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = rng_from_seed(seed)
    u = rng.random((count, space.dim))
    return space.unscale01(u)


def _row_key(x: np.ndarray) -> bytes:
    return np.ascontiguousarray(x, dtype=np.float64).tobytes()


@dataclass
class Dataset:
    """Accumulated archive of evaluated designs.

    Rows are append-only; a row whose design exactly equals an existing
    design (component-wise float64 equality) is rejected, as is any row
    with a non-finite performance entry.

    Attributes:
        dim: design dimensionality.
        num_objectives: performance dimensionality M.
        X: designs, shape (N, dim).
        Y: performances, shape (N, M).
        iteration: which outer-loop iteration produced each row, shape (N,).
    """

    dim: int
    num_objectives: int
    X: np.ndarray = field(default=None)  # type: ignore[assignment]
    Y: np.ndarray = field(default=None)  # type: ignore[assignment]
    iteration: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.num_objectives < 2:
            raise ValueError("datasets require M >= 2 objectives")
        if self.X is None:
            self.X = np.empty((0, self.dim))
        if self.Y is None:
            self.Y = np.empty((0, self.num_objectives))
        if self.iteration is None:
            self.iteration = np.empty((0,), dtype=int)
        self.X = np.asarray(self.X, dtype=float).reshape(-1, self.dim)
        self.Y = np.asarray(self.Y, dtype=float).reshape(-1, self.num_objectives)
        self.iteration = np.asarray(self.iteration, dtype=int).reshape(-1)
        if not (len(self.X) == len(self.Y) == len(self.iteration)):
            raise ValueError("designs, performances, and tags must have equal length")
        self._keys = {_row_key(row) for row in self.X}

    def __len__(self) -> int:
        return len(self.X)

    def design_keys(self) -> set:
        """Byte keys of all stored designs, for exact-duplicate checks."""
        return set(self._keys)

    def append(self, xs: np.ndarray, ys: np.ndarray, iteration: int) -> int:
        """Append rows, skipping exact-duplicate designs and non-finite rows.

        Args:
            xs: candidate designs, shape (K, dim).
            ys: their performances, shape (K, M).
            iteration: tag recorded for every accepted row.

        Returns:
            Number of rejected rows (duplicates plus non-finite).
        """
        xs = np.asarray(xs, dtype=float).reshape(-1, self.dim)
        ys = np.asarray(ys, dtype=float).reshape(-1, self.num_objectives)
        if len(xs) != len(ys):
            raise ValueError(f"got {len(xs)} designs but {len(ys)} performances")
        keep = []
        rejected = 0
        for i in range(len(xs)):
            key = _row_key(xs[i])
            if key in self._keys or not np.all(np.isfinite(ys[i])):
                rejected += 1
                continue
            self._keys.add(key)
            keep.append(i)
        if keep:
            self.X = np.vstack([self.X, xs[keep]])
            self.Y = np.vstack([self.Y, ys[keep]])
            self.iteration = np.concatenate(
                [self.iteration, np.full(len(keep), int(iteration))]
            )
        return rejected

    def save_csv(self, path) -> None:
        """Write the archive as CSV: x_0..x_{n-1}, y_0..y_{M-1}, iteration."""
        header = (
            [f"x_{i}" for i in range(self.dim)]
            + [f"y_{m}" for m in range(self.num_objectives)]
            + ["iteration"]
        )
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(header) + "\n")
            for i in range(len(self)):
                cells = [CSV_FLOAT_FMT % v for v in self.X[i]]
                cells += [CSV_FLOAT_FMT % v for v in self.Y[i]]
                cells.append(str(int(self.iteration[i])))
                fh.write(",".join(cells) + "\n")

    @classmethod
    def load_csv(cls, path) -> "Dataset":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            dim = sum(1 for h in header if h.startswith("x_"))
            m = sum(1 for h in header if h.startswith("y_"))
            if dim == 0 or m == 0 or header != (
                [f"x_{i}" for i in range(dim)]
                + [f"y_{j}" for j in range(m)]
                + ["iteration"]
            ):
                raise SnapshotError(f"malformed dataset header in {path}")
            xs, ys, tags = [], [], []
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                cells = line.split(",")
                xs.append([float(c) for c in cells[:dim]])
                ys.append([float(c) for c in cells[dim : dim + m]])
                tags.append(int(cells[-1]))
        n = len(xs)
        return cls(
            dim,
            m,
            np.asarray(xs).reshape(n, dim),
            np.asarray(ys).reshape(n, m),
            np.asarray(tags, dtype=int),
        )
