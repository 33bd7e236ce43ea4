"""Deep-ensemble MLP surrogate with epistemic uncertainty.

The ensemble is K independently initialized and independently shuffled
MLP regressors, each trained on the *full* data set (no bagging) with
plain MSE loss.  Diversity comes from the initialization and from a
mixed activation roster.  Inputs are affinely mapped to the unit box
using the design-space bounds; targets are standardized per objective.
The ensemble mean is reported in original target units, while the
epistemic variance — the population variance of the member means,
``E[mu_k^2] - (E[mu_k])^2`` — stays in standardized target space, which
keeps objectives comparable when the acquisition trades mean against
uncertainty.

Parameters of each member live in one flat float64 vector; per-layer
weight matrices and bias vectors are reshaped views into it, so the
whole Adam update runs on contiguous arrays.
"""

from __future__ import annotations

import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ConfigError, DesignSpace, SeedTree, TrainingError, rng_from_seed

ACTIVATIONS = ("tanh", "relu", "celu", "leaky_relu", "elu", "hardswish")

#: Activation line-up of the default 10-member ensemble.
DEFAULT_ROSTER = (
    "tanh",
    "tanh",
    "relu",
    "relu",
    "celu",
    "celu",
    "leaky_relu",
    "leaky_relu",
    "elu",
    "hardswish",
)

#: Hidden-layer widths of the default regressor.
DEFAULT_HIDDEN = (100, 50, 100)

#: Wider preset for expensive, higher-dimensional design problems.
WIDE_HIDDEN = (150, 200, 200, 150)

_LEAKY_SLOPE = 0.01


def _act_forward(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name in ("celu", "elu"):  # identical at alpha = 1
        return np.where(z > 0.0, z, np.expm1(np.minimum(z, 0.0)))
    if name == "leaky_relu":
        return np.where(z > 0.0, z, _LEAKY_SLOPE * z)
    if name == "hardswish":
        return z * np.clip(z + 3.0, 0.0, 6.0) / 6.0
    raise ValueError(f"unknown activation {name!r}")


def _act_derivative(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    """d(activation)/dz, given pre-activation z and activation value a."""
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0.0).astype(z.dtype)
    if name in ("celu", "elu"):
        return np.where(z > 0.0, 1.0, np.exp(np.minimum(z, 0.0)))
    if name == "leaky_relu":
        return np.where(z > 0.0, 1.0, _LEAKY_SLOPE)
    if name == "hardswish":
        return np.where(z >= 3.0, 1.0, np.where(z <= -3.0, 0.0, (2.0 * z + 3.0) / 6.0))
    raise ValueError(f"unknown activation {name!r}")


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of one ensemble member."""

    input_dim: int
    output_dim: int
    hidden_widths: tuple[int, ...] = DEFAULT_HIDDEN
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ConfigError("input_dim and output_dim must be >= 1")
        if not self.hidden_widths or any(w < 1 for w in self.hidden_widths):
            raise ConfigError("hidden_widths must be a non-empty tuple of positive ints")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(
                f"unknown activation {self.activation!r}; choose from {ACTIVATIONS}"
            )

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_widths, self.output_dim)


def default_roster(
    input_dim: int,
    output_dim: int,
    members: int = 10,
    hidden_widths: tuple[int, ...] = DEFAULT_HIDDEN,
) -> tuple[MlpSpec, ...]:
    """Specs for a K-member ensemble cycling through the activation roster."""
    if members < 2:
        raise ConfigError("an ensemble needs at least 2 members")
    return tuple(
        MlpSpec(input_dim, output_dim, hidden_widths, DEFAULT_ROSTER[k % len(DEFAULT_ROSTER)])
        for k in range(members)
    )


class Mlp:
    """Fully connected regressor with a linear head and flat parameters.

    ``theta`` is one contiguous float64 vector; ``weights[l]`` and
    ``biases[l]`` are reshaped views into it.  ``loss_and_grads`` reuses
    an internal gradient buffer across calls — copy the returned array
    if you need to keep it.
    """

    def __init__(self, spec: MlpSpec, theta: np.ndarray | None = None):
        self.spec = spec
        sizes = spec.layer_sizes
        self._shapes = [(sizes[i], sizes[i + 1]) for i in range(len(sizes) - 1)]
        total = sum(fi * fo + fo for fi, fo in self._shapes)
        if theta is None:
            theta = np.zeros(total)
        else:
            theta = np.ascontiguousarray(theta, dtype=float)
            if theta.shape != (total,):
                raise ConfigError(f"theta must have shape ({total},), got {theta.shape}")
        self.theta = theta
        self._grad = np.zeros(total)
        self.weights, self.biases = self._views(self.theta)
        self._gw, self._gb = self._views(self._grad)

    def _views(self, flat: np.ndarray):
        ws, bs, pos = [], [], 0
        for fi, fo in self._shapes:
            ws.append(flat[pos : pos + fi * fo].reshape(fi, fo))
            pos += fi * fo
            bs.append(flat[pos : pos + fo])
            pos += fo
        return ws, bs

    @property
    def num_params(self) -> int:
        return self.theta.size

    def init_params(self, rng: np.random.Generator) -> None:
        """Glorot-uniform weights, zero biases; one draw per weight matrix."""
        for W, b in zip(self.weights, self.biases):
            limit = np.sqrt(6.0 / (W.shape[0] + W.shape[1]))
            W[...] = rng.uniform(-limit, limit, size=W.shape)
            b[...] = 0.0

    def forward(self, X: np.ndarray) -> np.ndarray:
        a = np.asarray(X, dtype=float)
        last = len(self._shapes) - 1
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ W + b
            a = z if l == last else _act_forward(self.spec.activation, z)
        return a

    def loss_and_grads(self, X: np.ndarray, Y: np.ndarray) -> tuple[float, np.ndarray]:
        """MSE over all entries and its gradient in flat-parameter layout."""
        act = self.spec.activation
        last = len(self._shapes) - 1
        a_list = [np.asarray(X, dtype=float)]
        z_list = []
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a_list[-1] @ W + b
            z_list.append(z)
            a_list.append(z if l == last else _act_forward(act, z))

        resid = a_list[-1] - Y
        loss = float(np.mean(resid * resid))
        delta = resid * (2.0 / resid.size)
        for l in range(last, -1, -1):
            np.matmul(a_list[l].T, delta, out=self._gw[l])
            np.sum(delta, axis=0, out=self._gb[l])
            if l > 0:
                delta = (delta @ self.weights[l].T) * _act_derivative(
                    act, z_list[l - 1], a_list[l]
                )
        return loss, self._grad


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings shared by all ensemble members.

    The default step size is deliberately aggressive for nets this
    small: members fit the observed data tightly and extrapolate their
    local trends steeply, which is what drives the batch search toward
    unexplored descent directions between evaluation rounds.
    """

    epochs: int = 60
    minibatch: int = 10
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1 or self.minibatch < 1:
            raise ConfigError("epochs and minibatch must be >= 1")
        if self.learning_rate <= 0.0:
            raise ConfigError("learning_rate must be positive")


def _fit_member(
    spec: MlpSpec,
    Xs: np.ndarray,
    Ys: np.ndarray,
    cfg: TrainConfig,
    member: int,
    init_seed: int,
    shuffle_seed: int,
) -> np.ndarray:
    """Train one member on the full (standardized) data set; returns theta."""
    model = Mlp(spec)
    model.init_params(rng_from_seed(init_seed))
    shuffle_rng = rng_from_seed(shuffle_seed)

    theta = model.theta
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    b1, b2, eps = cfg.beta1, cfg.beta2, cfg.eps
    n = len(Xs)
    t = 0
    for epoch in range(cfg.epochs):
        perm = shuffle_rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = perm[start : start + cfg.minibatch]
            loss, grad = model.loss_and_grads(Xs[idx], Ys[idx])
            if not np.isfinite(loss):
                raise TrainingError(
                    f"member {member} ({spec.activation}): non-finite loss "
                    f"at epoch {epoch}, step {t}"
                )
            t += 1
            m *= b1
            m += (1.0 - b1) * grad
            v *= b2
            v += (1.0 - b2) * np.square(grad)
            alpha = cfg.learning_rate * np.sqrt(1.0 - b2**t) / (1.0 - b1**t)
            theta -= alpha * m / (np.sqrt(v) + eps)
    return theta


def _fit_member_args(args) -> np.ndarray:
    return _fit_member(*args)


class EnsembleSurrogate:
    """K trained MLPs plus the input/output scalers they were fit under."""

    def __init__(
        self,
        members: list[Mlp],
        x_lower: np.ndarray,
        x_span: np.ndarray,
        y_mean: np.ndarray,
        y_std: np.ndarray,
    ):
        if len(members) < 2:
            raise ConfigError("an ensemble needs at least 2 members")
        self.members = list(members)
        self.x_lower = np.asarray(x_lower, dtype=float)
        self.x_span = np.asarray(x_span, dtype=float)
        self.y_mean = np.asarray(y_mean, dtype=float)
        self.y_std = np.asarray(y_std, dtype=float)

    @property
    def num_members(self) -> int:
        return len(self.members)

    @property
    def num_objectives(self) -> int:
        return self.members[0].spec.output_dim

    def member_predictions(self, X: np.ndarray) -> np.ndarray:
        """Per-member predictions in standardized target space, (K, N, M)."""
        Xs = (np.atleast_2d(np.asarray(X, dtype=float)) - self.x_lower) / self.x_span
        return np.stack([m.forward(Xs) for m in self.members])

    def predict_mean(self, X: np.ndarray) -> np.ndarray:
        """Ensemble mean in original target units, (N, M)."""
        mu = self.member_predictions(X).mean(axis=0)
        return mu * self.y_std + self.y_mean

    def predict_epistemic_variance(self, X: np.ndarray) -> np.ndarray:
        """Across-member population variance in standardized space, (N, M)."""
        preds = self.member_predictions(X)
        mu = preds.mean(axis=0)
        return np.maximum(np.mean(preds * preds, axis=0) - mu * mu, 0.0)

    def predict(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(mean in target units, epistemic std in standardized space)."""
        preds = self.member_predictions(X)
        mu = preds.mean(axis=0)
        var = np.maximum(np.mean(preds * preds, axis=0) - mu * mu, 0.0)
        return mu * self.y_std + self.y_mean, np.sqrt(var)

    def save(self, path) -> None:
        """Write a self-describing checkpoint (exact float round-trip)."""
        meta = {
            "format": 1,
            "specs": [
                {
                    "input_dim": m.spec.input_dim,
                    "output_dim": m.spec.output_dim,
                    "hidden_widths": list(m.spec.hidden_widths),
                    "activation": m.spec.activation,
                }
                for m in self.members
            ],
        }
        arrays = {f"theta_{k}": m.theta for k, m in enumerate(self.members)}
        buf = io.BytesIO()
        np.savez(
            buf,
            meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
            x_lower=self.x_lower,
            x_span=self.x_span,
            y_mean=self.y_mean,
            y_std=self.y_std,
            **arrays,
        )
        Path(path).write_bytes(buf.getvalue())

    @classmethod
    def load(cls, path) -> "EnsembleSurrogate":
        with np.load(Path(path)) as data:
            meta = json.loads(bytes(data["meta"]).decode())
            members = []
            for k, spec_dict in enumerate(meta["specs"]):
                spec = MlpSpec(
                    spec_dict["input_dim"],
                    spec_dict["output_dim"],
                    tuple(spec_dict["hidden_widths"]),
                    spec_dict["activation"],
                )
                members.append(Mlp(spec, data[f"theta_{k}"]))
            return cls(
                members, data["x_lower"], data["x_span"], data["y_mean"], data["y_std"]
            )


def train_ensemble(
    X: np.ndarray,
    Y: np.ndarray,
    space: DesignSpace,
    specs: tuple[MlpSpec, ...],
    cfg: TrainConfig,
    seed: int,
    workers: int = 1,
) -> EnsembleSurrogate:
    """Fit every member from scratch on the full data set.

    Each member gets its own initialization and minibatch-shuffle RNG
    streams, derived from ``seed`` by member index, so results do not
    depend on ``workers``: with ``workers > 1`` members train in a
    process pool under a fixed member-to-task assignment and come back
    bit-identical to the serial path.

    Raises:
        ConfigError: empty data, shape mismatch, or a constant target
            column (standardization would divide by zero).
        TrainingError: a member's loss went non-finite.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if len(X) == 0:
        raise ConfigError("cannot train on an empty data set")
    if len(X) != len(Y):
        raise ConfigError(f"X has {len(X)} rows but Y has {len(Y)}")
    for spec in specs:
        if spec.input_dim != X.shape[1] or spec.output_dim != Y.shape[1]:
            raise ConfigError(
                f"spec ({spec.input_dim}->{spec.output_dim}) does not match "
                f"data ({X.shape[1]}->{Y.shape[1]})"
            )

    x_lower = space.lower.copy()
    x_span = space.upper - space.lower
    y_mean = Y.mean(axis=0)
    y_std = Y.std(axis=0)
    dead = np.flatnonzero(y_std == 0.0)
    if dead.size:
        raise ConfigError(
            f"target column(s) {dead.tolist()} are constant; cannot standardize"
        )

    Xs = (X - x_lower) / x_span
    Ys = (Y - y_mean) / y_std

    tree = SeedTree(seed)
    jobs = [
        (spec, Xs, Ys, cfg, k, tree.child_seed("member-init", k), tree.child_seed("member-shuffle", k))
        for k, spec in enumerate(specs)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            thetas = list(pool.map(_fit_member_args, jobs))
    else:
        thetas = [_fit_member_args(job) for job in jobs]

    members = [Mlp(spec, theta) for spec, theta in zip(specs, thetas)]
    return EnsembleSurrogate(members, x_lower, x_span, y_mean, y_std)
