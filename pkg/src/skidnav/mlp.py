"""Scalar-in/scalar-out MLP used as the per-side actuation surrogate.

Hidden layers use tanh, the output layer is linear. The parameter
Jacobian is exact reverse-mode, with parameters packed layer by layer as
[W row-major, b]. A trained model pairs the network with the affine
[-1, 1] normalization maps fitted on its training split.
"""

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MODEL_FILE_VERSION = 1


def param_count(layer_sizes: list[int]) -> int:
    """Total number of weights and biases for the given layer sizes."""
    return sum(
        n * m + n for n, m in zip(layer_sizes[1:], layer_sizes[:-1])
    )


@dataclass
class MlpParams:
    """Per-layer weight matrices (n_l x n_{l-1}) and bias vectors (n_l,)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_params(self) -> int:
        return param_count(self.layer_sizes)

    def copy(self) -> "MlpParams":
        return MlpParams(
            [w.copy() for w in self.weights], [b.copy() for b in self.biases]
        )


def init_params(layer_sizes: list[int], rng: np.random.Generator) -> MlpParams:
    """Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
    if layer_sizes[0] != 1 or layer_sizes[-1] != 1:
        raise ValueError("surrogate networks are scalar-in, scalar-out")
    weights = []
    biases = []
    for n, m in zip(layer_sizes[1:], layer_sizes[:-1]):
        bound = 1.0 / np.sqrt(m)
        weights.append(rng.uniform(-bound, bound, size=(n, m)))
        biases.append(rng.uniform(-bound, bound, size=n))
    return MlpParams(weights, biases)


def pack_params(params: MlpParams) -> np.ndarray:
    parts = []
    for w, b in zip(params.weights, params.biases):
        parts.append(w.ravel())
        parts.append(b)
    return np.concatenate(parts)


def unpack_params(w: np.ndarray, layer_sizes: list[int]) -> MlpParams:
    if w.size != param_count(layer_sizes):
        raise ValueError("parameter vector length does not match layer sizes")
    weights = []
    biases = []
    off = 0
    for n, m in zip(layer_sizes[1:], layer_sizes[:-1]):
        weights.append(w[off : off + n * m].reshape(n, m).copy())
        off += n * m
        biases.append(w[off : off + n].copy())
        off += n
    return MlpParams(weights, biases)


def _as_row(x) -> tuple[np.ndarray, bool]:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim == 2 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 1:
        raise ValueError("input must be a scalar or a 1-D batch")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite network input")
    return arr, np.isscalar(x) or np.ndim(x) == 0


def forward_pass(params: MlpParams, x) -> list[np.ndarray]:
    """All layer activations for a batch; activations have shape (n_l, P)."""
    row, _ = _as_row(x)
    acts = [row[None, :]]
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = w @ acts[-1] + b[:, None]
        acts.append(z if i == last else np.tanh(z))
    return acts


def forward(params: MlpParams, x):
    """Network output for a scalar or for a batch (shape preserved)."""
    _, scalar = _as_row(x)
    out = forward_pass(params, x)[-1][0]
    return float(out[0]) if scalar else out


def output_jacobian(params: MlpParams, x) -> np.ndarray:
    """Exact Jacobian of the outputs w.r.t. the packed parameters, (P, N_w).

    Rows also equal the residual Jacobian d(pred - target)/dw used by the
    least-squares trainer, since targets do not depend on the parameters.
    """
    acts = forward_pass(params, x)
    p = acts[0].shape[1]
    n_layers = len(params.weights)
    delta = np.ones((1, p))
    blocks: list[np.ndarray | None] = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        grad_w = np.einsum("ip,jp->pij", delta, acts[i]).reshape(p, -1)
        blocks[i] = np.hstack([grad_w, delta.T])
        if i > 0:
            delta = (params.weights[i].T @ delta) * (1.0 - acts[i] ** 2)
    return np.hstack(blocks)


@dataclass(frozen=True)
class AffineNorm:
    """Affine map between a physical range [lo, hi] and [-1, 1]."""

    lo: float
    hi: float

    def __post_init__(self):
        if not np.isfinite([self.lo, self.hi]).all() or self.hi <= self.lo:
            raise ValueError("normalization range must be finite with hi > lo")

    @staticmethod
    def from_data(values: np.ndarray) -> "AffineNorm":
        return AffineNorm(float(np.min(values)), float(np.max(values)))

    def encode(self, x):
        return 2.0 * (np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo) - 1.0

    def decode(self, y):
        return (np.asarray(y, dtype=float) + 1.0) * 0.5 * (self.hi - self.lo) + self.lo


@dataclass
class SideModel:
    """Trained surrogate for one drive side, with its normalization maps."""

    params: MlpParams
    input_norm: AffineNorm
    output_norm: AffineNorm

    def command(self, velocity: float) -> float:
        """Predicted actuator signal for a per-side velocity command.

        Scalar fast path used by the 1 kHz control loop.
        """
        if not math.isfinite(velocity):
            raise ValueError("non-finite velocity command")
        inorm = self.input_norm
        x = 2.0 * (velocity - inorm.lo) / (inorm.hi - inorm.lo) - 1.0
        weights = self.params.weights
        biases = self.params.biases
        act = weights[0][:, 0] * x + biases[0]
        last = len(weights) - 1
        if last == 0:
            y = float(act[0])
        else:
            np.tanh(act, out=act)
            for i in range(1, last):
                act = np.tanh(weights[i] @ act + biases[i])
            y = float((weights[last] @ act + biases[last])[0])
        onorm = self.output_norm
        return (y + 1.0) * 0.5 * (onorm.hi - onorm.lo) + onorm.lo


@dataclass
class SurrogateModel:
    """Both drive sides of the learned actuation surrogate."""

    sides: dict[str, SideModel]

    def __post_init__(self):
        if set(self.sides) != {"L", "R"}:
            raise ValueError("model must provide sides 'L' and 'R'")


def _side_to_json(side: SideModel) -> dict:
    return {
        "layers": [
            {
                "rows": w.shape[0],
                "cols": w.shape[1],
                "weights": w.ravel().tolist(),
                "bias": b.tolist(),
            }
            for w, b in zip(side.params.weights, side.params.biases)
        ],
        "input_norm": {"min": side.input_norm.lo, "max": side.input_norm.hi},
        "output_norm": {"min": side.output_norm.lo, "max": side.output_norm.hi},
    }


def _side_from_json(obj: dict) -> SideModel:
    weights = []
    biases = []
    for layer in obj["layers"]:
        w = np.array(layer["weights"], dtype=float).reshape(
            layer["rows"], layer["cols"]
        )
        weights.append(w)
        biases.append(np.array(layer["bias"], dtype=float))
    return SideModel(
        MlpParams(weights, biases),
        AffineNorm(obj["input_norm"]["min"], obj["input_norm"]["max"]),
        AffineNorm(obj["output_norm"]["min"], obj["output_norm"]["max"]),
    )


def save_model(model: SurrogateModel, path) -> None:
    doc = {
        "version": MODEL_FILE_VERSION,
        "sides": {name: _side_to_json(side) for name, side in model.sides.items()},
    }
    Path(path).write_text(json.dumps(doc))


def load_model(path) -> SurrogateModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("version") != MODEL_FILE_VERSION:
        raise ValueError(f"unsupported model file version: {doc.get('version')!r}")
    return SurrogateModel(
        {name: _side_from_json(obj) for name, obj in doc["sides"].items()}
    )
