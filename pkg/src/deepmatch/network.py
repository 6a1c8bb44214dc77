"""Dense feedforward networks with hand-derived backpropagation.

Everything is plain numpy: Glorot-uniform initialization, forward pass with
inverted dropout, exact layer-by-layer gradients for mean squared error and
categorical cross-entropy, SGD and adadelta update rules, and a mini-batch
training loop. No autodiff framework is involved; the finite-difference
harness in `gradcheck` exists precisely to keep these gradients honest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .persist import read_model, write_model

ACTIVATIONS = ("identity", "relu", "sigmoid", "tanh", "softmax")
LOSSES = ("mse", "categorical_cross_entropy")

CCE_CLAMP = 1e-12  # lower clamp inside the log, avoids ln(0)


class TrainingDiverged(RuntimeError):
    """Raised when training produces a non-finite loss or parameter."""


@dataclass(frozen=True)
class LayerSpec:
    fan_in: int
    fan_out: int
    activation: str = "identity"
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.fan_in < 1 or self.fan_out < 1:
            raise ValueError(f"layer dims must be >= 1, got {self.fan_in}->{self.fan_out}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[LayerSpec, ...]
    loss: str = "mse"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("network needs at least one layer")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.fan_out != nxt.fan_in:
                raise ValueError(
                    f"layer chain broken: fan_out {prev.fan_out} feeds fan_in {nxt.fan_in}"
                )
        for layer in self.layers[:-1]:
            if layer.activation == "softmax":
                raise ValueError("softmax is only allowed on the final layer")
        final = self.layers[-1].activation
        if self.loss == "categorical_cross_entropy" and final != "softmax":
            raise ValueError("categorical_cross_entropy requires a softmax final layer")
        if self.loss == "mse" and final == "softmax":
            raise ValueError("mse requires a non-softmax final layer")

    @property
    def param_count(self) -> int:
        return sum(l.fan_in * l.fan_out + l.fan_out for l in self.layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].fan_out


@dataclass(frozen=True)
class Sgd:
    lr: float = 0.01


@dataclass(frozen=True)
class Adadelta:
    rho: float = 0.95
    eps: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must be in (0, 1), got {self.rho}")
        if self.eps <= 0.0:
            raise ValueError(f"eps must be > 0, got {self.eps}")


Optimizer = Union[Sgd, Adadelta]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 32
    optimizer: Optimizer = Adadelta()
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "identity":
        return z
    if name == "relu":
        return np.maximum(0.0, z)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if name == "tanh":
        return np.tanh(z)
    if name == "softmax":
        e = np.exp(z - z.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)
    raise ValueError(f"unknown activation {name!r}")


def _activation_deriv(name: str, out: np.ndarray) -> np.ndarray:
    # Derivative w.r.t. the pre-activation, expressed through the output.
    if name == "identity":
        return np.ones_like(out)
    if name == "relu":
        return (out > 0.0).astype(float)
    if name == "sigmoid":
        return out * (1.0 - out)
    if name == "tanh":
        return 1.0 - out**2
    raise ValueError(f"no elementwise derivative for {name!r}")


def apply_dropout(h: np.ndarray, rate: float, rng: np.random.Generator):
    """Inverted dropout: zero with probability `rate`, scale survivors by 1/(1-rate).

    Returns (dropped activations, mask); the mask already carries the 1/(1-rate)
    scaling so that applying it is a single multiply in both passes.
    """
    keep = 1.0 - rate
    mask = (rng.random(h.shape) < keep).astype(float) / keep
    return h * mask, mask


@dataclass
class ForwardPass:
    """Cached intermediate state of one forward pass, consumed by backward."""

    inputs: list   # layer inputs: inputs[l] feeds layer l; inputs[-1] is the output
    hidden: list   # pre-dropout layer outputs
    masks: list    # dropout mask per layer (None where inactive)

    @property
    def output(self) -> np.ndarray:
        return self.inputs[-1]


class Network:
    """A dense feedforward net: per-layer weight matrices (fan_out x fan_in) and biases."""

    def __init__(self, spec: NetworkSpec, weights: list, biases: list):
        if len(weights) != len(spec.layers) or len(biases) != len(spec.layers):
            raise ValueError("weights/biases must have one entry per layer")
        for layer, w, b in zip(spec.layers, weights, biases):
            if w.shape != (layer.fan_out, layer.fan_in) or b.shape != (layer.fan_out,):
                raise ValueError(f"parameter shape mismatch for layer {layer}")
        self.spec = spec
        self.weights = weights
        self.biases = biases

    @property
    def param_count(self) -> int:
        return self.spec.param_count

    def parameters(self) -> list:
        """All parameter arrays in a fixed order (weights and biases interleaved)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def forward(self, x: np.ndarray, train_mode: bool = False,
                rng: np.random.Generator | None = None) -> ForwardPass:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.spec.input_dim:
            raise ValueError(
                f"input must be 2-D with {self.spec.input_dim} columns, got shape {x.shape}"
            )
        if train_mode and rng is None:
            rng = np.random.default_rng(0)
        last = len(self.spec.layers) - 1
        inputs, hidden, masks = [x], [], []
        a = x
        for l, layer in enumerate(self.spec.layers):
            z = a @ self.weights[l].T + self.biases[l]
            h = _activate(layer.activation, z)
            hidden.append(h)
            if train_mode and layer.dropout_rate > 0.0 and l < last:
                a, mask = apply_dropout(h, layer.dropout_rate, rng)
            else:
                a, mask = h, None
            masks.append(mask)
            inputs.append(a)
        return ForwardPass(inputs, hidden, masks)

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Deterministic eval-mode output (dropout off)."""
        return self.forward(x).output

    def loss(self, output: np.ndarray, target: np.ndarray) -> float:
        output = np.asarray(output, dtype=float)
        target = np.asarray(target, dtype=float)
        if output.shape != target.shape:
            raise ValueError(f"output {output.shape} vs target {target.shape}")
        if self.spec.loss == "mse":
            return float(np.mean(np.sum((output - target) ** 2, axis=1)))
        p = np.clip(output, CCE_CLAMP, 1.0)
        return float(np.mean(-np.sum(target * np.log(p), axis=1)))

    def backward(self, cache: ForwardPass, target: np.ndarray) -> list:
        """Exact gradients of the loss w.r.t. every weight and bias.

        Returns [(dW, db), ...] aligned with the layers; `cache` must come from
        a forward pass over the same batch and dropout masks.
        """
        target = np.asarray(target, dtype=float)
        out = cache.output
        if out.shape != target.shape:
            raise ValueError(f"output {out.shape} vs target {target.shape}")
        n_batch = out.shape[0]
        layers = self.spec.layers

        if self.spec.loss == "categorical_cross_entropy":
            # Softmax + CCE collapse to (p - t) / B at the logits.
            delta = (out - target) / n_batch
        else:
            d_out = 2.0 * (out - target) / n_batch
            delta = d_out * _activation_deriv(layers[-1].activation, out)

        grads: list = [None] * len(layers)
        for l in range(len(layers) - 1, -1, -1):
            a_prev = cache.inputs[l]
            grads[l] = (delta.T @ a_prev, delta.sum(axis=0))
            if l > 0:
                da = delta @ self.weights[l]
                if cache.masks[l - 1] is not None:
                    da = da * cache.masks[l - 1]
                delta = da * _activation_deriv(layers[l - 1].activation, cache.hidden[l - 1])
        return grads


def init_network(spec: NetworkSpec, seed: int) -> Network:
    """Glorot-uniform weights, zero biases, drawn from one seeded stream."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for layer in spec.layers:
        limit = np.sqrt(6.0 / (layer.fan_in + layer.fan_out))
        weights.append(rng.uniform(-limit, limit, size=(layer.fan_out, layer.fan_in)))
        biases.append(np.zeros(layer.fan_out))
    return Network(spec, weights, biases)


@dataclass
class AdadeltaState:
    """Running averages of squared gradients (eg2) and squared updates (ed2)."""

    rho: float
    eps: float
    eg2: list = field(default_factory=list)
    ed2: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list, rho: float = 0.95, eps: float = 1e-6) -> "AdadeltaState":
        return cls(
            rho=rho,
            eps=eps,
            eg2=[np.zeros_like(p) for p in params],
            ed2=[np.zeros_like(p) for p in params],
        )


def adadelta_update(eg2: np.ndarray, ed2: np.ndarray, grad: np.ndarray,
                    rho: float, eps: float):
    """One adadelta step on a single tensor; returns (delta, eg2', ed2')."""
    eg2 = rho * eg2 + (1.0 - rho) * grad**2
    delta = -np.sqrt(ed2 + eps) / np.sqrt(eg2 + eps) * grad
    ed2 = rho * ed2 + (1.0 - rho) * delta**2
    return delta, eg2, ed2


def adadelta_step(state: AdadeltaState, params: list, grads: list) -> None:
    """Apply one adadelta step in place across a parameter list."""
    for i, (p, g) in enumerate(zip(params, grads)):
        delta, state.eg2[i], state.ed2[i] = adadelta_update(
            state.eg2[i], state.ed2[i], g, state.rho, state.eps
        )
        p += delta


def sgd_step(params: list, grads: list, lr: float) -> None:
    for p, g in zip(params, grads):
        p -= lr * g


def _flatten_grads(grads: list) -> list:
    out = []
    for dw, db in grads:
        out.append(dw)
        out.append(db)
    return out


def train(net: Network, inputs: np.ndarray, targets: np.ndarray,
          cfg: TrainConfig) -> list[float]:
    """Mini-batch training; mutates `net` in place and returns the loss history.

    The history holds the mean batch loss of each epoch (length = cfg.epochs).
    Raises TrainingDiverged as soon as a loss or parameter goes non-finite.
    """
    x = np.asarray(inputs, dtype=float)
    y = np.asarray(targets, dtype=float)
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"inputs ({x.shape[0]} rows) vs targets ({y.shape[0]} rows)")
    n = x.shape[0]
    rng = np.random.default_rng(cfg.seed)
    params = net.parameters()
    state = None
    if isinstance(cfg.optimizer, Adadelta):
        state = AdadeltaState.for_params(params, cfg.optimizer.rho, cfg.optimizer.eps)

    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        batch_losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            cache = net.forward(x[idx], train_mode=True, rng=rng)
            batch_losses.append(net.loss(cache.output, y[idx]))
            grads = _flatten_grads(net.backward(cache, y[idx]))
            if state is not None:
                adadelta_step(state, params, grads)
            else:
                sgd_step(params, grads, cfg.optimizer.lr)
        epoch_loss = float(np.mean(batch_losses))
        if not np.isfinite(epoch_loss):
            raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
        if not all(np.all(np.isfinite(p)) for p in params):
            raise TrainingDiverged(f"non-finite parameter at epoch {epoch}")
        history.append(epoch_loss)
    return history


def network_to_payload(net: Network) -> dict:
    return {
        "spec": {
            "loss": net.spec.loss,
            "layers": [
                {
                    "fan_in": l.fan_in,
                    "fan_out": l.fan_out,
                    "activation": l.activation,
                    "dropout_rate": l.dropout_rate,
                }
                for l in net.spec.layers
            ],
        },
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def network_from_payload(payload: dict) -> Network:
    try:
        spec = NetworkSpec(
            layers=tuple(LayerSpec(**l) for l in payload["spec"]["layers"]),
            loss=payload["spec"]["loss"],
        )
        weights = [np.asarray(w, dtype=float) for w in payload["weights"]]
        biases = [np.asarray(b, dtype=float) for b in payload["biases"]]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed network payload: {exc}") from None
    return Network(spec, weights, biases)


def save_model(net: Network, path) -> None:
    """Write spec, weights and biases as versioned JSON (no optimizer state)."""
    write_model(path, "network", network_to_payload(net))


def load_model(path) -> Network:
    _, doc = read_model(path, expected_kind="network")
    return network_from_payload(doc)
