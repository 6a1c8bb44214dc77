"""Propensity-score models and covariate-balance diagnostics.

Two interchangeable scorers for P(w=1 | features): a logistic regression fit
by full-batch gradient descent with backtracking line search, and a
five-layer dense softmax classifier trained with adadelta. Both expose
predict() returning probabilities in [0,1] and persist through the shared
model format. balance_report() computes standardized mean differences
overall and within score strata, the usual check that matching on the score
actually balances the covariates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import train_test_split
from .network import (
    LayerSpec,
    Network,
    NetworkSpec,
    TrainConfig,
    init_network,
    network_from_payload,
    network_to_payload,
    train,
)
from .persist import read_model, write_model

PROPENSITY_WIDTHS = (10, 10, 10, 10, 2)
PROPENSITY_DROPOUT = 0.3
SCORE_CLAMP = 1e-12


def log_odds(scores: np.ndarray) -> np.ndarray:
    """ln(p / (1-p)) with p clamped away from 0 and 1, so always finite."""
    p = np.clip(np.asarray(scores, dtype=float), SCORE_CLAMP, 1.0 - SCORE_CLAMP)
    return np.log(p / (1.0 - p))


def kfold_indices(n: int, n_folds: int, seed: int) -> list:
    """Seeded K-fold partition; returns (train, test) sorted index pairs.

    The documented pipelines use a single 80/20 split; this is the K-fold
    alternative for callers who want cross-validated evaluation.
    """
    if n_folds < 2 or n_folds > n:
        raise ValueError(f"n_folds must be in [2, {n}], got {n_folds}")
    order = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(order, n_folds)
    out = []
    for held in range(n_folds):
        test = np.sort(folds[held])
        train = np.sort(np.concatenate([f for i, f in enumerate(folds) if i != held]))
        out.append((train, test))
    return out


class LogisticDidNotConverge(RuntimeError):
    """Gradient descent hit the iteration cap before the gradient tolerance."""


def build_propensity_net(input_dim: int) -> NetworkSpec:
    """Five dense layers (10,10,10,10,2): relu + 30% dropout, softmax head.

    input_dim=2 gives 382 trainable parameters (30+110+110+110+22).
    """
    if input_dim < 1:
        raise ValueError(f"input_dim must be >= 1, got {input_dim}")
    layers = []
    fan_in = input_dim
    for width in PROPENSITY_WIDTHS[:-1]:
        layers.append(
            LayerSpec(fan_in, width, activation="relu", dropout_rate=PROPENSITY_DROPOUT)
        )
        fan_in = width
    layers.append(LayerSpec(fan_in, PROPENSITY_WIDTHS[-1], activation="softmax"))
    return NetworkSpec(tuple(layers), loss="categorical_cross_entropy")


@dataclass(frozen=True)
class LogisticModel:
    """p = sigmoid(intercept + x @ coef)."""

    intercept: float
    coef: np.ndarray

    kind = "logistic"

    @property
    def input_dim(self) -> int:
        return self.coef.shape[0]

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = _check_features(x, self.input_dim)
        eta = self.intercept + x @ self.coef
        return 1.0 / (1.0 + np.exp(-eta))


@dataclass(frozen=True)
class PropensityNetModel:
    """Softmax classifier; the score is the class-1 (treated) probability."""

    network: Network

    kind = "propensity_net"

    @property
    def input_dim(self) -> int:
        return self.network.spec.input_dim

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = _check_features(x, self.input_dim)
        return self.network.predict(x)[:, 1]


PropensityModel = LogisticModel | PropensityNetModel


@dataclass(frozen=True)
class PropensityFitConfig:
    """Knobs for both model kinds; irrelevant fields are ignored per kind."""

    test_fraction: float = 0.2
    seed: int = 0
    epochs: int = 100
    batch_size: int = 32
    l2: float = 0.0
    max_iter: int = 10_000
    grad_tol: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError(f"test_fraction must be in (0,1), got {self.test_fraction}")
        if self.l2 < 0:
            raise ValueError(f"l2 must be >= 0, got {self.l2}")


@dataclass(frozen=True)
class PropensityFit:
    """A fitted model plus the seeded holdout split used to evaluate it."""

    model: PropensityModel
    train_indices: np.ndarray
    test_indices: np.ndarray


def _check_features(x, input_dim=None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"expected an n x d feature matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    if input_dim is not None and x.shape[1] != input_dim:
        raise ValueError(f"model expects {input_dim} features, got {x.shape[1]}")
    return x


def _mean_nll_and_grad(design, labels, beta, l2):
    """Mean negative log-likelihood and its gradient; l2 skips the intercept."""
    eta = design @ beta
    n = design.shape[0]
    nll = float(np.mean(np.logaddexp(0.0, eta) - labels * eta))
    p = 1.0 / (1.0 + np.exp(-eta))
    grad = design.T @ (p - labels) / n
    if l2 > 0:
        penalty = np.concatenate([[0.0], beta[1:]])
        nll += 0.5 * l2 * float(penalty @ penalty)
        grad = grad + l2 * penalty
    return nll, grad


def fit_logistic(
    x: np.ndarray, w: np.ndarray, cfg: PropensityFitConfig = PropensityFitConfig()
) -> LogisticModel:
    """Maximum likelihood by full-batch gradient descent with backtracking.

    Converged when the gradient infinity-norm of the mean log-likelihood
    drops below cfg.grad_tol; raises LogisticDidNotConverge (naming the
    final gradient norm) if cfg.max_iter steps do not get there.
    """
    x = _check_features(x)
    labels = _check_labels(w, x.shape[0])
    design = np.column_stack([np.ones(x.shape[0]), x])
    beta = np.zeros(design.shape[1])
    nll, grad = _mean_nll_and_grad(design, labels, beta, cfg.l2)
    step = 1.0
    for _ in range(cfg.max_iter):
        if np.abs(grad).max() < cfg.grad_tol:
            break
        step = min(step * 2.0, 1e6)
        g2 = float(grad @ grad)
        # Armijo backtracking on the mean NLL
        while True:
            trial = beta - step * grad
            trial_nll, trial_grad = _mean_nll_and_grad(design, labels, trial, cfg.l2)
            if trial_nll <= nll - 1e-4 * step * g2:
                break
            step *= 0.5
            if step < 1e-18:
                raise LogisticDidNotConverge(
                    f"line search stalled at gradient norm {np.abs(grad).max():.3e}"
                )
        beta, nll, grad = trial, trial_nll, trial_grad
    else:
        raise LogisticDidNotConverge(
            f"gradient norm {np.abs(grad).max():.3e} after {cfg.max_iter} iterations "
            f"(tolerance {cfg.grad_tol:g})"
        )
    return LogisticModel(intercept=float(beta[0]), coef=beta[1:])


def _check_labels(w, n) -> np.ndarray:
    w = np.asarray(w)
    if w.shape != (n,):
        raise ValueError(f"labels must have length {n}, got shape {w.shape}")
    if not np.isin(w, (0, 1)).all():
        raise ValueError("treatment labels must be 0 or 1")
    if len(np.unique(w)) < 2:
        raise ValueError("both treatment classes must be present to fit")
    return w.astype(float)


def fit_propensity_net(
    x: np.ndarray, w: np.ndarray, cfg: PropensityFitConfig = PropensityFitConfig()
) -> PropensityNetModel:
    """Train the dense softmax classifier on one-hot treatment labels."""
    x = _check_features(x)
    labels = _check_labels(w, x.shape[0])
    targets = np.column_stack([1.0 - labels, labels])
    net = init_network(build_propensity_net(x.shape[1]), seed=cfg.seed)
    train_cfg = TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size, seed=cfg.seed)
    train(net, x, targets, train_cfg)
    return PropensityNetModel(network=net)


def fit(
    model_kind: str,
    x: np.ndarray,
    w: np.ndarray,
    cfg: PropensityFitConfig = PropensityFitConfig(),
) -> PropensityFit:
    """Fit on the training fold of a seeded holdout split.

    The returned PropensityFit keeps both index sets so accuracy can be
    reported on data the model never saw.
    """
    x = _check_features(x)
    _check_labels(w, x.shape[0])
    train_idx, test_idx = train_test_split(x.shape[0], cfg.test_fraction, cfg.seed)
    w = np.asarray(w).astype(int)
    if len(np.unique(w[train_idx])) < 2:
        raise ValueError("training fold lost one treatment class; reseed the split")
    if model_kind == "logistic":
        model = fit_logistic(x[train_idx], w[train_idx], cfg)
    elif model_kind == "propensity_net":
        model = fit_propensity_net(x[train_idx], w[train_idx], cfg)
    else:
        raise ValueError(f"unknown model kind {model_kind!r}")
    return PropensityFit(model=model, train_indices=train_idx, test_indices=test_idx)


def holdout_accuracy(fit_result: PropensityFit, x, w, threshold: float = 0.5) -> float:
    """Fraction of held-out units whose thresholded score matches w."""
    x = _check_features(x)
    w = np.asarray(w)
    idx = fit_result.test_indices
    pred = (fit_result.model.predict(x[idx]) >= threshold).astype(int)
    return float(np.mean(pred == w[idx]))


@dataclass(frozen=True)
class StratumBalance:
    """Per-covariate SMD inside one score quantile bin.

    smd is None when a treatment arm is missing in the bin; individual
    entries are None when a covariate has zero pooled variance there.
    """

    score_lo: float
    score_hi: float
    n_control: int
    n_treated: int
    smd: tuple | None


@dataclass(frozen=True)
class BalanceReport:
    covariate_smd: tuple
    score_smd: float | None
    strata: tuple


def _smd_one(values: np.ndarray, w: np.ndarray):
    v1 = values[w == 1]
    v0 = values[w == 0]
    pooled = np.sqrt((v1.var() + v0.var()) / 2.0)
    if pooled == 0.0:
        return None
    return float((v1.mean() - v0.mean()) / pooled)


def balance_report(x, w, scores, n_strata: int = 5) -> BalanceReport:
    """Standardized mean differences overall and within score quantile bins."""
    x = _check_features(x)
    w = np.asarray(w)
    scores = np.asarray(scores, dtype=float)
    if n_strata < 1:
        raise ValueError(f"n_strata must be >= 1, got {n_strata}")
    if scores.shape != w.shape or scores.shape[0] != x.shape[0]:
        raise ValueError("x, w and scores must be row-aligned")
    overall = tuple(_smd_one(x[:, j], w) for j in range(x.shape[1]))
    score_smd = _smd_one(scores, w)

    edges = np.quantile(scores, np.linspace(0.0, 1.0, n_strata + 1))
    strata = []
    for s in range(n_strata):
        lo, hi = float(edges[s]), float(edges[s + 1])
        if s + 1 < n_strata:
            members = (scores >= lo) & (scores < hi)
        else:
            members = (scores >= lo) & (scores <= hi)
        wm = w[members]
        n1 = int((wm == 1).sum())
        n0 = int((wm == 0).sum())
        if n0 == 0 or n1 == 0:
            smd = None
        else:
            xm = x[members]
            smd = tuple(_smd_one(xm[:, j], wm) for j in range(x.shape[1]))
        strata.append(
            StratumBalance(score_lo=lo, score_hi=hi, n_control=n0, n_treated=n1, smd=smd)
        )
    return BalanceReport(covariate_smd=overall, score_smd=score_smd, strata=tuple(strata))


def save_propensity_model(model: PropensityModel, path) -> None:
    if model.kind == "logistic":
        write_model(
            path,
            "propensity/logistic",
            {"intercept": model.intercept, "coef": model.coef.tolist()},
        )
    else:
        write_model(path, "propensity/net", {"network": network_to_payload(model.network)})


def load_propensity_model(path) -> PropensityModel:
    kind, doc = read_model(path)
    try:
        if kind == "propensity/logistic":
            return LogisticModel(
                intercept=float(doc["intercept"]),
                coef=np.asarray(doc["coef"], dtype=float),
            )
        if kind == "propensity/net":
            return PropensityNetModel(network=network_from_payload(doc["network"]))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: malformed propensity payload ({exc})") from None
    raise ValueError(f"{path}: not a propensity model (kind {kind!r})")
