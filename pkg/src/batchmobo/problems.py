"""Native forward processes: analytic ZDT/DTLZ benchmarks and external simulators.

The analytic problems use the canonical literature definitions.  All of
them minimize every objective over the unit box.  Real simulators attach
through :func:`external_nfp`, a file-based CSV subprocess protocol.
"""

from __future__ import annotations

import shlex
import subprocess
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .core import MIN, CSV_FLOAT_FMT, DesignSpace, EvaluationError


@dataclass(frozen=True)
class ProblemDefinition:
    """A batch evaluator together with its design and performance spaces.

    The evaluator maps a (N, dim) design batch to a (N, M) performance
    batch, is pure (same batch in, same batch out), and preserves row
    order.
    """

    name: str
    space: DesignSpace
    num_objectives: int
    directions: tuple
    evaluator: Callable[[np.ndarray], np.ndarray]
    chunk_size: int = 1024

    def evaluate(self, xs: np.ndarray) -> np.ndarray:
        """Evaluate a batch, validating bounds on input and shape on output."""
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if xs.shape[1] != self.space.dim:
            raise ValueError(
                f"{self.name}: expected {self.space.dim}-dimensional designs, "
                f"got {xs.shape[1]}"
            )
        inside = self.space.contains(xs)
        if not np.all(inside):
            bad = int(np.flatnonzero(~inside)[0])
            raise ValueError(f"{self.name}: design row {bad} is out of bounds")
        out = np.empty((len(xs), self.num_objectives))
        for start in range(0, len(xs), self.chunk_size):
            stop = min(start + self.chunk_size, len(xs))
            ys = np.atleast_2d(np.asarray(self.evaluator(xs[start:stop]), dtype=float))
            if ys.shape != (stop - start, self.num_objectives):
                raise EvaluationError(
                    f"{self.name}: evaluator returned shape {ys.shape}, "
                    f"expected {(stop - start, self.num_objectives)}"
                )
            out[start:stop] = ys
        return out


def _zdt_g(x: np.ndarray) -> np.ndarray:
    n = x.shape[1]
    return 1.0 + 9.0 * np.sum(x[:, 1:], axis=1) / (n - 1)


def _zdt1(x: np.ndarray) -> np.ndarray:
    f1 = x[:, 0]
    g = _zdt_g(x)
    f2 = g * (1.0 - np.sqrt(f1 / g))
    return np.column_stack([f1, f2])


def _zdt2(x: np.ndarray) -> np.ndarray:
    f1 = x[:, 0]
    g = _zdt_g(x)
    f2 = g * (1.0 - (f1 / g) ** 2)
    return np.column_stack([f1, f2])


def _zdt3(x: np.ndarray) -> np.ndarray:
    f1 = x[:, 0]
    g = _zdt_g(x)
    f2 = g * (1.0 - np.sqrt(f1 / g) - (f1 / g) * np.sin(10.0 * np.pi * f1))
    return np.column_stack([f1, f2])


_ZDT = {1: _zdt1, 2: _zdt2, 3: _zdt3}


def zdt_suite(variant: int, n: int) -> ProblemDefinition:
    """Build a ZDT1/ZDT2/ZDT3 problem over [0, 1]^n, both objectives minimized.

    f1 = x1 and g = 1 + 9/(n-1) * sum(x_2..x_n); the variants differ in
    the trade-off term: ZDT1 f2 = g(1 - sqrt(f1/g)) (convex front),
    ZDT2 f2 = g(1 - (f1/g)^2) (concave front), ZDT3 adds
    -(f1/g) sin(10 pi f1), which splits the front into five disjoint
    segments.
    """
    if variant not in _ZDT:
        raise ValueError(f"unknown ZDT variant {variant}")
    if n < 2:
        raise ValueError("ZDT problems require n >= 2")
    return ProblemDefinition(
        name=f"zdt{variant}",
        space=DesignSpace.unit(n),
        num_objectives=2,
        directions=(MIN, MIN),
        evaluator=_ZDT[variant],
    )


def _dtlz1(x: np.ndarray, m: int) -> np.ndarray:
    xm = x[:, m - 1 :] - 0.5
    g = 100.0 * (xm.shape[1] + np.sum(xm**2 - np.cos(20.0 * np.pi * xm), axis=1))
    out = np.empty((len(x), m))
    half = 0.5 * (1.0 + g)
    for i in range(m):
        f = half.copy()
        f *= np.prod(x[:, : m - 1 - i], axis=1)
        if i > 0:
            f *= 1.0 - x[:, m - 1 - i]
        out[:, i] = f
    return out


def _dtlz4(x: np.ndarray, m: int, alpha: float = 100.0) -> np.ndarray:
    xm = x[:, m - 1 :] - 0.5
    g = np.sum(xm**2, axis=1)
    theta = 0.5 * np.pi * x[:, : m - 1] ** alpha
    out = np.empty((len(x), m))
    scale = 1.0 + g
    for i in range(m):
        f = scale.copy()
        f *= np.prod(np.cos(theta[:, : m - 1 - i]), axis=1)
        if i > 0:
            f *= np.sin(theta[:, m - 1 - i])
        out[:, i] = f
    return out


def dtlz_suite(variant: int, n: int, m: int) -> ProblemDefinition:
    """Build DTLZ1 or DTLZ4 over [0, 1]^n with M objectives (all minimized).

    DTLZ1's optimal front is the simplex sum(f) = 0.5; DTLZ4 (here with
    the canonical exponent alpha = 100) lies on the unit sphere
    sum(f^2) = 1 with a strongly biased point density.
    """
    if variant not in (1, 4):
        raise ValueError(f"unknown DTLZ variant {variant}")
    if m < 2:
        raise ValueError("DTLZ problems require M >= 2")
    if n < m:
        raise ValueError("DTLZ problems require n >= M")
    fn = _dtlz1 if variant == 1 else _dtlz4
    return ProblemDefinition(
        name=f"dtlz{variant}",
        space=DesignSpace.unit(n),
        num_objectives=m,
        directions=tuple([MIN] * m),
        evaluator=lambda x, _fn=fn, _m=m: _fn(x, _m),
    )


class _SubprocessEvaluator:
    """File-based CSV handoff to an external command.

    One subprocess at a time per evaluator instance; each call leaves its
    input/output CSV pair on disk for debugging.
    """

    def __init__(self, command: str, workdir: Path, dim: int, m: int):
        self.argv = shlex.split(command)
        self.workdir = Path(workdir)
        self.dim = dim
        self.m = m
        self._lock = threading.Lock()
        self._calls = 0

    def __call__(self, xs: np.ndarray) -> np.ndarray:
        with self._lock:
            tag = f"call_{self._calls:06d}"
            self._calls += 1
            in_path = self.workdir / f"{tag}.in.csv"
            out_path = self.workdir / f"{tag}.out.csv"
            self._write_batch(in_path, xs)
            proc = subprocess.run(
                self.argv + ["--in", str(in_path), "--out", str(out_path)],
                cwd=self.workdir,
                capture_output=True,
                text=True,
            )
            if proc.returncode != 0:
                raise EvaluationError(
                    f"external NFP exited with code {proc.returncode}; "
                    f"stderr: {proc.stderr.strip()}"
                )
            return self._read_batch(out_path, len(xs))

    def _write_batch(self, path: Path, xs: np.ndarray) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(f"x_{i}" for i in range(self.dim)) + "\n")
            for row in xs:
                fh.write(",".join(CSV_FLOAT_FMT % v for v in row) + "\n")

    def _read_batch(self, path: Path, expected_rows: int) -> np.ndarray:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                header = fh.readline().strip().split(",")
                rows = [line.strip().split(",") for line in fh if line.strip()]
        except OSError as exc:
            raise EvaluationError(f"external NFP produced no output CSV: {exc}")
        if header != [f"y_{j}" for j in range(self.m)]:
            raise EvaluationError(f"external NFP wrote malformed header {header}")
        if len(rows) != expected_rows:
            raise EvaluationError(
                f"external NFP returned {len(rows)} rows, expected {expected_rows}"
            )
        try:
            ys = np.asarray([[float(c) for c in row] for row in rows])
        except ValueError as exc:
            raise EvaluationError(f"external NFP wrote a non-numeric cell: {exc}")
        if ys.shape != (expected_rows, self.m):
            raise EvaluationError(
                f"external NFP wrote shape {ys.shape}, "
                f"expected {(expected_rows, self.m)}"
            )
        bad = ~np.all(np.isfinite(ys), axis=1)
        if np.any(bad):
            raise EvaluationError(
                f"external NFP returned a non-finite value in row "
                f"{int(np.flatnonzero(bad)[0])}"
            )
        return ys


def external_nfp(
    command: str,
    workdir,
    space: DesignSpace,
    m: int,
    directions=None,
    name: str = "external",
) -> ProblemDefinition:
    """Wrap an external command as a problem definition.

    The command is invoked as ``<command> --in <csv> --out <csv>`` inside
    ``workdir``.  The input CSV has header ``x_0..x_{n-1}`` with one row
    per candidate; the command must write an output CSV with header
    ``y_0..y_{M-1}`` in the same row order and exit 0.  Any protocol
    violation (nonzero exit, malformed or misaligned CSV, non-finite
    values) raises :class:`EvaluationError` with the captured diagnostics.
    """
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    if directions is None:
        directions = tuple([MIN] * m)
    evaluator = _SubprocessEvaluator(command, workdir, space.dim, m)
    return ProblemDefinition(
        name=name,
        space=space,
        num_objectives=m,
        directions=tuple(directions),
        evaluator=evaluator,
        chunk_size=1 << 30,  # hand the external command whole batches
    )


_ANALYTIC_BUILDERS = {
    "zdt1": lambda n, m: zdt_suite(1, n),
    "zdt2": lambda n, m: zdt_suite(2, n),
    "zdt3": lambda n, m: zdt_suite(3, n),
    "dtlz1": lambda n, m: dtlz_suite(1, n, m),
    "dtlz4": lambda n, m: dtlz_suite(4, n, m),
}

PROBLEM_DEFAULTS = {
    "zdt1": {"dim": 30, "objectives": 2},
    "zdt2": {"dim": 30, "objectives": 2},
    "zdt3": {"dim": 6, "objectives": 2},
    "dtlz1": {"dim": 6, "objectives": 3},
    "dtlz4": {"dim": 6, "objectives": 3},
}


def make_problem(name: str, dim: int | None = None, objectives: int | None = None) -> ProblemDefinition:
    """Instantiate a named analytic benchmark with optional dimension overrides."""
    key = name.lower()
    if key not in _ANALYTIC_BUILDERS:
        known = ", ".join(sorted(_ANALYTIC_BUILDERS))
        raise ValueError(f"unknown problem {name!r}; known problems: {known}")
    defaults = PROBLEM_DEFAULTS[key]
    n = defaults["dim"] if dim is None else int(dim)
    m = defaults["objectives"] if objectives is None else int(objectives)
    return _ANALYTIC_BUILDERS[key](n, m)
