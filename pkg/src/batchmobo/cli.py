"""Command-line harness: run, resume, report, problems, validate-config.

Configuration is a single JSON file; any flag given on the command line
overrides the corresponding file value, and the fully resolved config
is recorded as ``run.json`` inside the output directory so every run is
reproducible from one artifact.  Unknown config keys are rejected.

Exit codes: 0 success, 1 runtime failure (a resumable snapshot remains
on disk), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import ConfigError, CSV_FLOAT_FMT, SnapshotError, direction_signs
from .metrics import reference_front
from .optimizer import (
    MODES,
    RunConfig,
    config_to_dict,
    extract_pareto,
    read_run_file,
    resume,
    run,
)
from .core import Dataset
from .problems import PROBLEM_DEFAULTS, external_nfp, make_problem
from .surrogate import DEFAULT_HIDDEN, TrainConfig
from .core import DesignSpace

OUTPUT_ROOT_ENV = "BATCHMOBO_OUTPUT_ROOT"

_TOP_KEYS = {
    "problem",
    "mode",
    "batch_size",
    "iterations",
    "init_size",
    "master_seed",
    "workers",
    "output_dir",
    "surrogate",
    "acquisition",
    "metrics",
}
_PROBLEM_KEYS = {"name", "dim", "objectives", "external"}
_EXTERNAL_KEYS = {"command", "workdir", "dim", "objectives", "lower", "upper", "directions", "name"}
_SURROGATE_KEYS = {"members", "hidden_widths", "epochs", "minibatch", "learning_rate"}
_ACQ_KEYS = {"per_seed_population", "num_seeds", "generations", "warm_start"}
_METRIC_KEYS = {"reference_point", "mc_samples"}


def _reject_unknown(section: str, mapping: dict, allowed: set) -> None:
    if not isinstance(mapping, dict):
        raise ConfigError(f"config section {section!r} must be a mapping")
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(
            f"unknown key(s) in {section}: {', '.join(sorted(unknown))}; "
            f"allowed: {', '.join(sorted(allowed))}"
        )


def _build_problem(raw: dict):
    _reject_unknown("problem", raw, _PROBLEM_KEYS)
    if "external" in raw:
        ext = raw["external"]
        _reject_unknown("problem.external", ext, _EXTERNAL_KEYS)
        for required in ("command", "workdir", "dim", "objectives", "lower", "upper"):
            if required not in ext:
                raise ConfigError(f"problem.external requires {required!r}")
        dim = int(ext["dim"])
        lower, upper = ext["lower"], ext["upper"]
        if np.isscalar(lower):
            lower = [lower] * dim
        if np.isscalar(upper):
            upper = [upper] * dim
        space = DesignSpace(dim, np.asarray(lower, float), np.asarray(upper, float))
        directions = tuple(ext.get("directions", ["min"] * int(ext["objectives"])))
        return external_nfp(
            ext["command"],
            ext["workdir"],
            space,
            int(ext["objectives"]),
            directions=directions,
            name=ext.get("name", "external"),
        )
    if "name" not in raw:
        raise ConfigError("problem requires a 'name' (or an 'external' block)")
    return make_problem(raw["name"], raw.get("dim"), raw.get("objectives"))


def config_from_dict(raw: dict, output_dir=None) -> RunConfig:
    """Build a validated RunConfig from a parsed config mapping.

    Strict: unknown keys anywhere raise ConfigError.  ``output_dir``
    (when given) overrides the file value — used by ``resume`` to pin
    the config to the directory it actually lives in.
    """
    _reject_unknown("config", raw, _TOP_KEYS)
    if "problem" not in raw:
        raise ConfigError("config requires a 'problem' section")
    problem = _build_problem(raw["problem"])

    sur = raw.get("surrogate", {})
    _reject_unknown("surrogate", sur, _SURROGATE_KEYS)
    acq = raw.get("acquisition", {})
    _reject_unknown("acquisition", acq, _ACQ_KEYS)
    met = raw.get("metrics", {})
    _reject_unknown("metrics", met, _METRIC_KEYS)

    out = output_dir or raw.get("output_dir")
    if out is None:
        raise ConfigError("config requires 'output_dir' (or pass --output)")

    try:
        train = TrainConfig(
            epochs=int(sur.get("epochs", 60)),
            minibatch=int(sur.get("minibatch", 10)),
            learning_rate=float(sur.get("learning_rate", 1e-2)),
        )
        ref = met.get("reference_point")
        cfg = RunConfig(
            problem=problem,
            batch_size=int(raw.get("batch_size", 100)),
            iterations=int(raw.get("iterations", 10)),
            output_dir=Path(out),
            init_size=None if raw.get("init_size") is None else int(raw["init_size"]),
            mode=raw.get("mode", "lbn-mobo"),
            master_seed=int(raw.get("master_seed", 0)),
            members=int(sur.get("members", 10)),
            hidden_widths=tuple(sur.get("hidden_widths", DEFAULT_HIDDEN)),
            train=train,
            per_seed_population=int(acq.get("per_seed_population", 100)),
            num_seeds=None if acq.get("num_seeds") is None else int(acq["num_seeds"]),
            acq_generations=int(acq.get("generations", 300)),
            warm_start=bool(acq.get("warm_start", True)),
            reference_point=None if ref is None else tuple(float(v) for v in ref),
            mc_samples=int(met.get("mc_samples", 1_000_000)),
            workers=int(raw.get("workers", 1)),
            problem_config=dict(raw["problem"]),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return cfg


def _load_config_file(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return raw


def _default_output_dir(raw: dict) -> str:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    problem = raw.get("problem", {})
    name = problem.get("name", "external") if isinstance(problem, dict) else "run"
    mode = raw.get("mode", "lbn-mobo")
    seed = raw.get("master_seed", 0)
    return str(root / f"{name}_{mode}_s{seed}")


def _apply_overrides(raw: dict, args) -> dict:
    if args.mode:
        raw["mode"] = args.mode
    if args.problem:
        raw.setdefault("problem", {})
        if "external" not in raw["problem"]:
            raw["problem"]["name"] = args.problem
    if args.dim is not None:
        raw.setdefault("problem", {})["dim"] = args.dim
    if args.objectives is not None:
        raw.setdefault("problem", {})["objectives"] = args.objectives
    if args.batch is not None:
        raw["batch_size"] = args.batch
    if args.iters is not None:
        raw["iterations"] = args.iters
    if args.init is not None:
        raw["init_size"] = args.init
    if args.seed is not None:
        raw["master_seed"] = args.seed
    if args.threads is not None:
        raw["workers"] = args.threads
    if args.output:
        raw["output_dir"] = args.output
    elif "output_dir" not in raw:
        raw["output_dir"] = _default_output_dir(raw)
    return raw


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--problem", help="benchmark name, e.g. zdt3")
    p.add_argument("--dim", type=int, help="design dimensionality")
    p.add_argument("--objectives", type=int, help="number of objectives (DTLZ)")
    p.add_argument("--batch", type=int, help="batch size S per iteration")
    p.add_argument("--iters", type=int, help="number of outer iterations Q")
    p.add_argument("--init", type=int, help="initial sample size (default: S)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--threads", type=int, help="worker cap for parallel phases")
    p.add_argument("--output", help=f"output directory (default under ${OUTPUT_ROOT_ENV} or ./runs)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="batchmobo",
        description="Batch multi-objective Bayesian optimization with a deep-ensemble surrogate.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a new optimization run")
    _add_run_flags(p_run)

    p_resume = sub.add_parser("resume", help="continue after the newest complete snapshot")
    p_resume.add_argument("run_dir")
    p_resume.add_argument("--problem", help="guard: expected problem name")

    p_report = sub.add_parser("report", help="export plot-ready CSVs and an SVG of the front")
    p_report.add_argument("run_dir", nargs="?", help="run directory to summarize")
    p_report.add_argument("--compare", nargs="+", metavar="DIR", help="merge hv histories of several runs")
    p_report.add_argument("--out", help="output path for the comparison CSV (default hv_compare.csv)")

    p_problems = sub.add_parser("problems", help="inspect built-in benchmarks")
    problems_sub = p_problems.add_subparsers(dest="problems_command", required=True)
    problems_sub.add_parser("list", help="list built-in problems and their defaults")

    p_validate = sub.add_parser("validate-config", help="parse and validate a config file")
    p_validate.add_argument("config_path")

    return parser


def cmd_run(args) -> int:
    raw = _load_config_file(args.config) if args.config else {}
    raw = _apply_overrides(raw, args)
    cfg = config_from_dict(raw)
    state = run(cfg)
    _print_summary(cfg, state)
    return 0


def cmd_resume(args) -> int:
    state = resume(args.run_dir, expect_problem=args.problem)
    cfg = read_run_file(Path(args.run_dir))
    _print_summary(cfg, state)
    return 0


def _print_summary(cfg: RunConfig, state) -> None:
    print(f"run complete: {cfg.output_dir}")
    print(f"  problem     : {cfg.problem.name} (n={cfg.problem.space.dim}, M={cfg.problem.num_objectives})")
    print(f"  mode        : {cfg.mode}")
    print(f"  dataset     : {len(state.dataset)} rows")
    print(f"  front size  : {len(state.pareto_front)}")
    print("  iteration  hypervolume  front")
    for row in state.history:
        print(f"  {row['iteration']:9d}  {row['hv_estimate']:11.6f}  {row['front_size']:5d}")


def _iter_dirs(run_dir: Path) -> list[tuple[int, Path]]:
    out = []
    for entry in run_dir.glob("iter_*"):
        try:
            k = int(entry.name.split("_", 1)[1])
        except ValueError:
            continue
        if (entry / "metrics.json").is_file():
            out.append((k, entry))
    return sorted(out)


def _write_hv_evolution(run_dir: Path, rows: list[tuple[int, Path]]) -> Path:
    path = run_dir / "hv_evolution.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iteration,hv_estimate,hv_std_error,front_size,wall_train,wall_acquire,wall_evaluate\n")
        for k, d in rows:
            metrics = json.loads((d / "metrics.json").read_text())
            timings_path = d / "timings.json"
            timings = json.loads(timings_path.read_text()) if timings_path.is_file() else {}
            fh.write(
                f"{metrics['iteration']},{metrics['hv_estimate']!r},{metrics['hv_std_error']!r},"
                f"{metrics['front_size']},{timings.get('train', 0.0)!r},"
                f"{timings.get('acquire', 0.0)!r},{timings.get('evaluate', 0.0)!r}\n"
            )
    return path


def _svg_scatter(points: np.ndarray, overlay: np.ndarray | None, title: str) -> str:
    """Dependency-free SVG scatter: axes, tick labels, points, overlay line."""
    width, height, margin = 640, 480, 60
    both = points if overlay is None else np.vstack([points, overlay])
    lo = both.min(axis=0)
    hi = both.max(axis=0)
    span = np.where(hi - lo == 0.0, 1.0, hi - lo)
    lo = lo - 0.05 * span
    hi = hi + 0.05 * span
    span = hi - lo

    def px(p):
        x = margin + (p[0] - lo[0]) / span[0] * (width - 2 * margin)
        y = height - margin - (p[1] - lo[1]) / span[1] * (height - 2 * margin)
        return x, y

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="24" text-anchor="middle" font-size="16">{title}</text>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{margin}" y="{height - margin + 20}" font-size="11">{lo[0]:.3g}</text>',
        f'<text x="{width - margin}" y="{height - margin + 20}" text-anchor="end" font-size="11">{hi[0]:.3g}</text>',
        f'<text x="{margin - 6}" y="{height - margin}" text-anchor="end" font-size="11">{lo[1]:.3g}</text>',
        f'<text x="{margin - 6}" y="{margin + 4}" text-anchor="end" font-size="11">{hi[1]:.3g}</text>',
        f'<text x="{width / 2:.0f}" y="{height - 16}" text-anchor="middle" font-size="12">objective 1</text>',
        f'<text x="18" y="{height / 2:.0f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 18 {height / 2:.0f})">objective 2</text>',
    ]
    if overlay is not None and len(overlay):
        ordered = overlay[np.argsort(overlay[:, 0], kind="stable")]
        coords = " ".join(f"{px(p)[0]:.2f},{px(p)[1]:.2f}" for p in ordered)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="#999" stroke-width="1"/>')
    for p in points:
        x, y = px(p)
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="2.5" fill="#1f6fb2"/>')
    parts.append("</svg>")
    return "\n".join(parts)


def cmd_report(args) -> int:
    if args.compare:
        return _cmd_report_compare(args)
    if not args.run_dir:
        print("report: provide a run directory or --compare", file=sys.stderr)
        return 2
    run_dir = Path(args.run_dir)
    rows = _iter_dirs(run_dir)
    if not rows:
        print(f"report: no complete snapshots under {run_dir}", file=sys.stderr)
        return 2
    _write_hv_evolution(run_dir, rows)

    cfg = read_run_file(run_dir)
    ds = Dataset.load_csv(rows[-1][1] / "dataset.csv")
    P_S, P_F = extract_pareto(ds, cfg.problem.directions)
    with open(run_dir / "pareto_front.csv", "w", encoding="utf-8") as fh:
        header = [f"x_{i}" for i in range(ds.dim)] + [f"y_{j}" for j in range(ds.num_objectives)]
        fh.write(",".join(header) + "\n")
        for x, y in zip(P_S, P_F):
            fh.write(",".join(CSV_FLOAT_FMT % v for v in (*x, *y)) + "\n")

    if ds.num_objectives == 2:
        overlay = None
        if cfg.problem.name.startswith("zdt"):
            signs = direction_signs(cfg.problem.directions)
            overlay = reference_front(cfg.problem) * signs
        svg = _svg_scatter(P_F[:, :2], overlay, f"{cfg.problem.name}: final front")
        (run_dir / "front.svg").write_text(svg, encoding="utf-8")
    print(f"report written to {run_dir}")
    return 0


def _cmd_report_compare(args) -> int:
    histories = {}
    for d in args.compare:
        rows = _iter_dirs(Path(d))
        if not rows:
            print(f"report: no complete snapshots under {d}", file=sys.stderr)
            return 2
        histories[Path(d).name or str(d)] = {
            json.loads((p / "metrics.json").read_text())["iteration"]: json.loads(
                (p / "metrics.json").read_text()
            )["hv_estimate"]
            for _, p in rows
        }
    out = Path(args.out or "hv_compare.csv")
    iterations = sorted(set().union(*[set(h) for h in histories.values()]))
    names = list(histories)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("iteration," + ",".join(f"hv_{n}" for n in names) + "\n")
        for k in iterations:
            cells = [str(k)]
            for n in names:
                hv = histories[n].get(k)
                cells.append("" if hv is None else repr(hv))
            fh.write(",".join(cells) + "\n")
    print(f"comparison written to {out}")
    return 0


def cmd_problems_list() -> int:
    for name in sorted(PROBLEM_DEFAULTS):
        d = PROBLEM_DEFAULTS[name]
        prob = make_problem(name)
        dirs = "/".join(prob.directions)
        print(f"{name:8s} dim={d['dim']:<3d} objectives={d['objectives']} directions={dirs}")
    return 0


def cmd_validate_config(args) -> int:
    raw = _load_config_file(args.config_path)
    out = raw.get("output_dir", "unset")
    raw.setdefault("output_dir", ".")  # validation does not need a real directory
    cfg = config_from_dict(raw)
    print(f"config OK: problem={cfg.problem.name} mode={cfg.mode} "
          f"S={cfg.batch_size} Q={cfg.iterations} output_dir={out}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "resume":
            return cmd_resume(args)
        if args.command == "report":
            return cmd_report(args)
        if args.command == "problems":
            return cmd_problems_list()
        if args.command == "validate-config":
            return cmd_validate_config(args)
        raise AssertionError(f"unhandled command {args.command}")
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SnapshotError as exc:
        print(f"snapshot error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        if args.command in ("run", "resume"):
            out = getattr(args, "output", None) or getattr(args, "run_dir", None)
            hint = f" {out}" if out else ""
            print(f"partial results are resumable: batchmobo resume{hint}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
