"""The outer optimization loop: initialize, acquire, evaluate, retrain.

One run executes

    draw the initial uniform batch -> evaluate -> train the ensemble
    repeat Q times:
        acquire a batch on the surrogate -> evaluate -> append -> retrain

and after every iteration (including the initial one, iteration 0)
writes a snapshot directory ``iter_<k>/`` containing the full data set,
the surrogate checkpoint, the submitted candidate batch, acquisition
diagnostics, wall-clock timings, and finally ``metrics.json``.  Because
``metrics.json`` is written last, its presence marks the snapshot as
complete; ``resume`` restarts after the newest complete snapshot.

All randomness is derived statelessly from the master seed by purpose
and iteration index (init, acquire@i, train@i, hv@i), so a resumed run
reproduces an uninterrupted one bit for bit and no RNG state is ever
serialized.

Besides the full method, the same loop drives three reference modes:
``random-baseline`` replaces acquisition with uniform sampling,
``nsga2-baseline`` runs one true NSGA-II generation per iteration
directly on the evaluator, and ``ablate-uncertainty`` drops the
uncertainty columns from the acquisition (surrogate mean search only).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .acquisition import AcquisitionConfig, acquire
from .core import (
    CSV_FLOAT_FMT,
    ConfigError,
    Dataset,
    DesignSpace,
    SeedTree,
    SnapshotError,
    _row_key,
    direction_signs,
    uniform_sample,
)
from .metrics import (
    HypervolumeSpec,
    default_reference_point,
    hypervolume_2d_exact,
    hypervolume_mc,
    non_dominated_mask,
)
from .moea import annotate, environmental_selection, polynomial_mutation, sbx_crossover, tournament_select
from .problems import ProblemDefinition
from .surrogate import (
    DEFAULT_HIDDEN,
    EnsembleSurrogate,
    TrainConfig,
    default_roster,
    train_ensemble,
)
from .core import rng_from_seed

MODES = ("lbn-mobo", "nsga2-baseline", "random-baseline", "ablate-uncertainty")

_SURROGATE_MODES = ("lbn-mobo", "ablate-uncertainty")


@dataclass(frozen=True)
class RunConfig:
    """Everything one optimization run needs, resolved and validated."""

    problem: ProblemDefinition
    batch_size: int
    iterations: int
    output_dir: Path
    init_size: int | None = None
    mode: str = "lbn-mobo"
    master_seed: int = 0
    members: int = 10
    hidden_widths: tuple[int, ...] = DEFAULT_HIDDEN
    train: TrainConfig = field(default_factory=TrainConfig)
    per_seed_population: int = 100
    num_seeds: int | None = None
    acq_generations: int = 300
    warm_start: bool = True
    reference_point: tuple | None = None
    mc_samples: int = 1_000_000
    workers: int = 1
    #: problem mapping from the config file, kept verbatim so runs on
    #: external evaluators can be re-opened; analytic problems rebuild
    #: from name/dim/objectives alone.
    problem_config: dict | None = None

    def __post_init__(self):
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        object.__setattr__(self, "hidden_widths", tuple(self.hidden_widths))
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.resolved_init_size() < self.train.minibatch:
            raise ConfigError("init_size must be >= the training minibatch")
        if self.mode == "nsga2-baseline":
            if self.batch_size % 2 or self.batch_size < 4:
                raise ConfigError("nsga2-baseline needs an even batch_size >= 4")
            if self.resolved_init_size() < self.batch_size:
                raise ConfigError("nsga2-baseline needs init_size >= batch_size")

    def resolved_init_size(self) -> int:
        return self.batch_size if self.init_size is None else self.init_size

    def resolved_reference_point(self) -> np.ndarray:
        if self.reference_point is not None:
            return np.asarray(self.reference_point, dtype=float)
        return default_reference_point(self.problem)

    def acquisition_config(self) -> AcquisitionConfig:
        return AcquisitionConfig(
            batch_size=self.batch_size,
            per_seed_population=self.per_seed_population,
            num_seeds=self.num_seeds,
            generations=self.acq_generations,
            use_uncertainty=(self.mode != "ablate-uncertainty"),
            warm_start=self.warm_start,
        )


@dataclass
class RunState:
    """Where a run currently stands; returned by ``run`` and ``resume``."""

    iteration: int
    dataset: Dataset
    pareto_set: np.ndarray
    pareto_front: np.ndarray
    history: list  # one metrics dict per completed iteration

    @property
    def hypervolume(self) -> float:
        return self.history[-1]["hv_estimate"] if self.history else 0.0


def extract_pareto(ds: Dataset, directions) -> tuple[np.ndarray, np.ndarray]:
    """Non-dominated subset of the archive, stable by dataset row index.

    Front values are the stored evaluator outputs, never model
    predictions; dominance honors the per-objective directions.
    """
    if len(ds) == 0:
        raise ValueError("cannot extract a Pareto front from an empty dataset")
    signs = direction_signs(directions)
    mask = non_dominated_mask(ds.Y * signs)
    return ds.X[mask], ds.Y[mask]


def _hypervolume(cfg: RunConfig, Y_front: np.ndarray, seed: int) -> tuple[float, float]:
    """Exact sweep for two objectives, Monte Carlo above that."""
    signs = direction_signs(cfg.problem.directions)
    signed = Y_front * signs
    ref = cfg.resolved_reference_point()
    if signed.shape[1] == 2:
        return hypervolume_2d_exact(signed, ref), 0.0
    spec = HypervolumeSpec(reference_point=tuple(ref), mc_samples=cfg.mc_samples)
    return hypervolume_mc(signed, spec, seed)


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _write_design_csv(path: Path, X: np.ndarray) -> None:
    dim = X.shape[1]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(f"x_{i}" for i in range(dim)) + "\n")
        for row in X:
            fh.write(",".join(CSV_FLOAT_FMT % v for v in row) + "\n")


def _read_design_csv(path: Path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [[float(c) for c in line.strip().split(",")] for line in fh if line.strip()]
    return np.asarray(rows, dtype=float).reshape(-1, len(header))


class _NsgaBaselineState:
    """Evaluator-facing NSGA-II population carried across iterations."""

    def __init__(self, X: np.ndarray, Y: np.ndarray):
        self.X = X
        self.Y = Y

    def save(self, path: Path) -> None:
        dim, m = self.X.shape[1], self.Y.shape[1]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(
                ",".join([f"x_{i}" for i in range(dim)] + [f"y_{j}" for j in range(m)])
                + "\n"
            )
            for x, y in zip(self.X, self.Y):
                cells = [CSV_FLOAT_FMT % v for v in x] + [CSV_FLOAT_FMT % v for v in y]
                fh.write(",".join(cells) + "\n")

    @classmethod
    def load(cls, path: Path, dim: int, m: int) -> "_NsgaBaselineState":
        raw = _read_design_csv(path)
        if raw.shape[1] != dim + m:
            raise SnapshotError(f"population file {path} has {raw.shape[1]} columns")
        return cls(raw[:, :dim], raw[:, dim:])


class _Runner:
    """Internal driver shared by ``run`` and ``resume``."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.problem = cfg.problem
        self.signs = direction_signs(self.problem.directions)
        self.tree = SeedTree(cfg.master_seed)
        self.dataset = Dataset(self.problem.space.dim, self.problem.num_objectives)
        self.surrogate: EnsembleSurrogate | None = None
        self.nsga_state: _NsgaBaselineState | None = None
        self.history: list[dict] = []
        self.cfg.output_dir.mkdir(parents=True, exist_ok=True)

    # ----- per-iteration pieces -------------------------------------

    def _train(self, iteration: int) -> float:
        if self.cfg.mode not in _SURROGATE_MODES:
            return 0.0
        t0 = time.perf_counter()
        specs = default_roster(
            self.problem.space.dim,
            self.problem.num_objectives,
            self.cfg.members,
            self.cfg.hidden_widths,
        )
        self.surrogate = train_ensemble(
            self.dataset.X,
            self.dataset.Y,
            self.problem.space,
            specs,
            self.cfg.train,
            seed=self.tree.child_seed("train", iteration),
            workers=self.cfg.workers,
        )
        return time.perf_counter() - t0

    def _acquire(self, iteration: int) -> tuple[np.ndarray, dict, float]:
        t0 = time.perf_counter()
        seed = self.tree.child_seed("acquire", iteration)
        mode = self.cfg.mode
        if mode in _SURROGATE_MODES:
            batch, info = acquire(
                self.surrogate,
                self.problem.space,
                self.problem.directions,
                self.dataset.design_keys(),
                self.cfg.acquisition_config(),
                seed,
                warm_pool=self._warm_pool(),
            )
        elif mode == "random-baseline":
            batch = self._random_batch(seed)
            info = {"mode": mode, "batch_size": len(batch)}
        else:  # nsga2-baseline
            batch = self._nsga_children(seed)
            info = {"mode": mode, "batch_size": len(batch)}
        return batch, info, time.perf_counter() - t0

    def _warm_pool(self) -> np.ndarray | None:
        """Best archive designs (rank, then crowding, on true values).

        The pool is as wide as the inner runs can jointly consume — one
        per-seed population per run — so with independent per-run
        permutations, different runs anchor on different regions of the
        evaluated front instead of all re-polishing the same crowded
        subset.  A pool truncated harder than this measurably re-herds
        the runs and delays coverage of disconnected front segments.
        """
        if not self.cfg.warm_start or len(self.dataset.X) == 0:
            return None
        acq = self.cfg.acquisition_config()
        width = acq.resolved_num_seeds() * acq.per_seed_population
        take = min(width, len(self.dataset.X))
        sel, _, _ = environmental_selection(self.dataset.Y * self.signs, take)
        return self.dataset.X[sel]

    def _random_batch(self, seed: int) -> np.ndarray:
        rng = rng_from_seed(seed)
        space = self.problem.space
        seen = self.dataset.design_keys()
        rows, attempts = [], 0
        while len(rows) < self.cfg.batch_size:
            x = space.unscale01(rng.random(space.dim))
            attempts += 1
            if attempts > 1000 * self.cfg.batch_size:
                raise RuntimeError("could not draw enough unique random designs")
            key = _row_key(x)
            if key in seen:
                continue
            seen.add(key)
            rows.append(x)
        return np.asarray(rows)

    def _nsga_children(self, seed: int) -> np.ndarray:
        state = self.nsga_state
        assert state is not None
        rng = rng_from_seed(seed)
        space = self.problem.space
        rank, crowding = annotate(state.Y * self.signs)
        parents = tournament_select(rank, crowding, self.cfg.batch_size, rng)
        pa, pb = state.X[parents[0::2]], state.X[parents[1::2]]
        c1, c2 = sbx_crossover(pa, pb, space, 15.0, 0.9, rng)
        children = np.empty((self.cfg.batch_size, space.dim))
        children[0::2] = c1
        children[1::2] = c2
        return polynomial_mutation(children, space, 20.0, 1.0 / space.dim, rng)

    def _nsga_select(self, child_X: np.ndarray, child_Y: np.ndarray) -> None:
        state = self.nsga_state
        assert state is not None
        pool_X = np.vstack([state.X, child_X])
        pool_Y = np.vstack([state.Y, child_Y])
        sel, _, _ = environmental_selection(pool_Y * self.signs, self.cfg.batch_size)
        self.nsga_state = _NsgaBaselineState(pool_X[sel], pool_Y[sel])

    def _snapshot(self, iteration: int, candidates: np.ndarray, info: dict, timings: dict) -> dict:
        out = self.cfg.output_dir / f"iter_{iteration}"
        out.mkdir(parents=True, exist_ok=True)
        self.dataset.save_csv(out / "dataset.csv")
        _write_design_csv(out / "candidates.csv", candidates)
        if self.surrogate is not None:
            self.surrogate.save(out / "surrogate.ckpt")
        if self.nsga_state is not None:
            self.nsga_state.save(out / "population.csv")
        _write_json(out / "acquisition.json", info)
        _write_json(out / "timings.json", timings)

        _, P_F = extract_pareto(self.dataset, self.problem.directions)
        hv, hv_err = _hypervolume(self.cfg, P_F, self.tree.child_seed("hv", iteration))
        metrics = {
            "iteration": iteration,
            "hv_estimate": hv,
            "hv_std_error": hv_err,
            "front_size": int(len(P_F)),
        }
        _write_json(out / "metrics.json", metrics)  # written last: completeness marker
        self.history.append(metrics)
        return metrics

    # ----- whole-run drivers ----------------------------------------

    def initialize(self) -> None:
        write_run_file(self.cfg)
        t0 = time.perf_counter()
        X0 = uniform_sample(
            self.problem.space, self.cfg.resolved_init_size(), self.tree.child_seed("init")
        )
        Y0 = self.problem.evaluate(X0)
        t_eval = time.perf_counter() - t0
        self.dataset.append(X0, Y0, 0)
        if self.cfg.mode == "nsga2-baseline":
            sel, _, _ = environmental_selection(Y0 * self.signs, self.cfg.batch_size)
            self.nsga_state = _NsgaBaselineState(X0[sel], Y0[sel])
        t_train = self._train(0)
        self._snapshot(
            0,
            X0,
            {"mode": self.cfg.mode, "init_size": len(X0)},
            {"train": t_train, "acquire": 0.0, "evaluate": t_eval},
        )

    def step(self, iteration: int) -> None:
        batch, info, t_acq = self._acquire(iteration)
        t0 = time.perf_counter()
        Y = self.problem.evaluate(batch)
        t_eval = time.perf_counter() - t0
        rejected = self.dataset.append(batch, Y, iteration)
        info["rejected_rows"] = int(rejected)
        if self.cfg.mode == "nsga2-baseline":
            self._nsga_select(batch, Y)
        t_train = self._train(iteration)
        self._snapshot(
            iteration, batch, info, {"train": t_train, "acquire": t_acq, "evaluate": t_eval}
        )

    def state(self, iteration: int) -> RunState:
        P_S, P_F = extract_pareto(self.dataset, self.problem.directions)
        return RunState(iteration, self.dataset, P_S, P_F, self.history)


def run(cfg: RunConfig) -> RunState:
    """Execute a full run from scratch; see the module docstring."""
    runner = _Runner(cfg)
    runner.initialize()
    for i in range(1, cfg.iterations + 1):
        runner.step(i)
    return runner.state(cfg.iterations)


def _last_complete_iteration(run_dir: Path) -> int:
    last = -1
    for entry in run_dir.glob("iter_*"):
        try:
            k = int(entry.name.split("_", 1)[1])
        except ValueError:
            continue
        if (entry / "metrics.json").is_file():
            last = max(last, k)
    return last


def resume(run_dir, expect_problem: str | None = None) -> RunState:
    """Continue a run after the newest complete snapshot.

    Stateless per-iteration seeding makes the continuation identical to
    an uninterrupted run.  Resuming a finished run is a no-op that
    returns its final state.

    Raises:
        SnapshotError: missing/corrupt run file or snapshots, or a
            recorded problem that contradicts ``expect_problem``.
    """
    run_dir = Path(run_dir)
    cfg = read_run_file(run_dir)
    if expect_problem is not None and cfg.problem.name != expect_problem:
        raise SnapshotError(
            f"run directory records problem {cfg.problem.name!r}, expected {expect_problem!r}"
        )
    last = _last_complete_iteration(run_dir)
    if last < 0:
        raise SnapshotError(f"no complete snapshot under {run_dir}")

    runner = _Runner(cfg)
    runner.dataset = Dataset.load_csv(run_dir / f"iter_{last}" / "dataset.csv")
    if runner.dataset.dim != cfg.problem.space.dim:
        raise SnapshotError("snapshot dataset does not match the recorded problem")
    for k in range(last + 1):
        metrics_path = run_dir / f"iter_{k}" / "metrics.json"
        if metrics_path.is_file():
            runner.history.append(json.loads(metrics_path.read_text()))
    if cfg.mode in _SURROGATE_MODES and last < cfg.iterations:
        ckpt = run_dir / f"iter_{last}" / "surrogate.ckpt"
        if not ckpt.is_file():
            raise SnapshotError(f"snapshot iter_{last} lacks a surrogate checkpoint")
        runner.surrogate = EnsembleSurrogate.load(ckpt)
    if cfg.mode == "nsga2-baseline":
        pop = run_dir / f"iter_{last}" / "population.csv"
        if not pop.is_file():
            raise SnapshotError(f"snapshot iter_{last} lacks a population file")
        runner.nsga_state = _NsgaBaselineState.load(
            pop, cfg.problem.space.dim, cfg.problem.num_objectives
        )

    for i in range(last + 1, cfg.iterations + 1):
        runner.step(i)
    return runner.state(max(last, cfg.iterations))


# ----- run-file (resolved config) serialization ---------------------


def config_to_dict(cfg: RunConfig) -> dict:
    """JSON-ready mapping that ``config_from_dict`` restores exactly."""
    if cfg.problem_config is not None:
        problem = cfg.problem_config
    else:
        problem = {
            "name": cfg.problem.name,
            "dim": cfg.problem.space.dim,
            "objectives": cfg.problem.num_objectives,
        }
    return {
        "problem": problem,
        "mode": cfg.mode,
        "batch_size": cfg.batch_size,
        "iterations": cfg.iterations,
        "init_size": cfg.init_size,
        "master_seed": cfg.master_seed,
        "workers": cfg.workers,
        "output_dir": str(cfg.output_dir),
        "surrogate": {
            "members": cfg.members,
            "hidden_widths": list(cfg.hidden_widths),
            "epochs": cfg.train.epochs,
            "minibatch": cfg.train.minibatch,
            "learning_rate": cfg.train.learning_rate,
        },
        "acquisition": {
            "per_seed_population": cfg.per_seed_population,
            "num_seeds": cfg.num_seeds,
            "generations": cfg.acq_generations,
            "warm_start": cfg.warm_start,
        },
        "metrics": {
            "reference_point": None
            if cfg.reference_point is None
            else list(cfg.reference_point),
            "mc_samples": cfg.mc_samples,
        },
    }


def write_run_file(cfg: RunConfig) -> None:
    _write_json(cfg.output_dir / "run.json", config_to_dict(cfg))


def read_run_file(run_dir: Path) -> RunConfig:
    from .cli import config_from_dict  # single parsing/validation path

    path = Path(run_dir) / "run.json"
    if not path.is_file():
        raise SnapshotError(f"{path} not found; not a run directory?")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"corrupt run file {path}: {exc}") from exc
    cfg = config_from_dict(raw)
    return replace(cfg, output_dir=Path(run_dir))
