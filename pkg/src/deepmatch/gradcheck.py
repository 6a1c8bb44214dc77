"""Finite-difference verification of the hand-derived gradients.

The oracle only ever calls the forward pass and the loss; it never touches
`Network.backward`, so the two gradient routes stay independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import LayerSpec, Network, NetworkSpec, init_network


def finite_difference_gradients(net: Network, x: np.ndarray, y: np.ndarray,
                                step: float = 1e-5) -> list:
    """Central-difference loss gradients for every weight and bias (dropout off)."""

    def loss_now() -> float:
        return net.loss(net.predict(x), y)

    grads = []
    for w, b in zip(net.weights, net.biases):
        dw = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            orig = w[idx]
            w[idx] = orig + step
            up = loss_now()
            w[idx] = orig - step
            down = loss_now()
            w[idx] = orig
            dw[idx] = (up - down) / (2.0 * step)
        db = np.zeros_like(b)
        for idx in np.ndindex(b.shape):
            orig = b[idx]
            b[idx] = orig + step
            up = loss_now()
            b[idx] = orig - step
            down = loss_now()
            b[idx] = orig
            db[idx] = (up - down) / (2.0 * step)
        grads.append((dw, db))
    return grads


def max_relative_gradient_error(net: Network, x: np.ndarray, y: np.ndarray,
                                step: float = 1e-5) -> float:
    """Worst per-tensor relative disagreement between backward and the oracle."""
    cache = net.forward(x, train_mode=False)
    analytic = net.backward(cache, y)
    numeric = finite_difference_gradients(net, x, y, step=step)
    worst = 0.0
    for (aw, ab), (nw, nb) in zip(analytic, numeric):
        for a, nmr in ((aw, nw), (ab, nb)):
            denom = max(float(np.abs(a).max()), float(np.abs(nmr).max()), 1e-8)
            worst = max(worst, float(np.abs(a - nmr).max()) / denom)
    return worst


@dataclass(frozen=True)
class GradCheckCase:
    """One randomized spec in the verification grid."""

    name: str
    spec: NetworkSpec
    batch_size: int
    seed: int


def default_grid(count: int = 24, seed: int = 0) -> list[GradCheckCase]:
    """Randomized small specs covering every activation and both losses."""
    if count < 1:
        raise ValueError("grid must contain at least one case")
    rng = np.random.default_rng(seed)
    hidden_acts = ("identity", "relu", "sigmoid", "tanh")
    cases = []
    for i in range(count):
        use_cce = i % 2 == 1
        depth = int(rng.integers(1, 4))
        dims = [int(rng.integers(1, 5)) for _ in range(depth + 1)]
        layers = []
        for l in range(depth):
            act = hidden_acts[int(rng.integers(len(hidden_acts)))]
            layers.append(LayerSpec(dims[l], dims[l + 1], activation=act))
        if use_cce:
            out_dim = int(rng.integers(2, 5))
            layers.append(LayerSpec(dims[-1], out_dim, activation="softmax"))
            loss = "categorical_cross_entropy"
        else:
            loss = "mse"
        spec = NetworkSpec(tuple(layers), loss=loss)
        cases.append(
            GradCheckCase(
                name=f"case{i:02d}_{loss}_{'x'.join(str(l.fan_out) for l in spec.layers)}",
                spec=spec,
                batch_size=int(rng.integers(1, 9)),
                seed=int(rng.integers(2**31)),
            )
        )
    return cases


def run_case(case: GradCheckCase, step: float = 1e-5, corrupt: bool = False) -> float:
    """Max relative gradient error for one case; `corrupt` perturbs one analytic
    gradient entry and exists as a negative control for the harness itself."""
    rng = np.random.default_rng(case.seed)
    net = init_network(case.spec, seed=case.seed)
    x = rng.standard_normal((case.batch_size, case.spec.input_dim))
    if case.spec.loss == "categorical_cross_entropy":
        hot = rng.integers(case.spec.output_dim, size=case.batch_size)
        y = np.zeros((case.batch_size, case.spec.output_dim))
        y[np.arange(case.batch_size), hot] = 1.0
    else:
        y = rng.standard_normal((case.batch_size, case.spec.output_dim))
    if not corrupt:
        return max_relative_gradient_error(net, x, y, step=step)

    cache = net.forward(x)
    analytic = net.backward(cache, y)
    analytic[0][0].flat[0] += 1.0  # deliberate fault
    numeric = finite_difference_gradients(net, x, y, step=step)
    worst = 0.0
    for (aw, ab), (nw, nb) in zip(analytic, numeric):
        for a, nmr in ((aw, nw), (ab, nb)):
            denom = max(float(np.abs(a).max()), float(np.abs(nmr).max()), 1e-8)
            worst = max(worst, float(np.abs(a - nmr).max()) / denom)
    return worst
