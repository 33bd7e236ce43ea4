"""Large-batch multi-objective Bayesian optimization.

A deep-ensemble neural surrogate with epistemic uncertainty, an
uncertainty-aware NSGA-II acquisition that searches the joint space of
predicted objectives and their uncertainties, and the outer
sample/evaluate/retrain loop, plus benchmark problems, hypervolume
metrics, and a CLI harness.
"""

from .core import (
    ConfigError,
    Dataset,
    DesignSpace,
    EvaluationError,
    EvolutionError,
    SeedTree,
    SnapshotError,
    TrainingError,
    uniform_sample,
)
from .problems import ProblemDefinition, dtlz_suite, external_nfp, make_problem, zdt_suite
from .surrogate import EnsembleSurrogate, MlpSpec, TrainConfig, default_roster, train_ensemble
from .moea import NsgaConfig, Population, nsga2_run
from .acquisition import AcquisitionConfig, acquire, acquisition_objectives
from .metrics import (
    HypervolumeSpec,
    hypervolume_2d_exact,
    hypervolume_mc,
    reference_front,
)
from .optimizer import RunConfig, RunState, extract_pareto, resume, run

__version__ = "0.1.0"

__all__ = [
    "AcquisitionConfig",
    "ConfigError",
    "Dataset",
    "DesignSpace",
    "EnsembleSurrogate",
    "EvaluationError",
    "EvolutionError",
    "HypervolumeSpec",
    "MlpSpec",
    "NsgaConfig",
    "Population",
    "ProblemDefinition",
    "RunConfig",
    "RunState",
    "SeedTree",
    "SnapshotError",
    "TrainConfig",
    "TrainingError",
    "acquire",
    "acquisition_objectives",
    "default_roster",
    "dtlz_suite",
    "external_nfp",
    "extract_pareto",
    "make_problem",
    "hypervolume_2d_exact",
    "hypervolume_mc",
    "nsga2_run",
    "reference_front",
    "resume",
    "run",
    "train_ensemble",
    "uniform_sample",
    "zdt_suite",
]
