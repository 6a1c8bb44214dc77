"""Low-dimensional embeddings behind one fit/transform contract.

Four ways to map covariates into an m-dimensional space for matching:

* identity - raw covariates, the no-reduction baseline
* pca - principal components of the standardized data (Jacobi eigensolver)
* autoencoder - bottleneck activations of a reconstruction network
* lle - locally linear embedding, preserving neighbor reconstruction weights

plus a small k-means implementation used to contrast cluster structure in
the original space against the learned embeddings.

All fitted embedders are immutable, transform deterministically, and persist
through the shared versioned JSON model format.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import jacobi_eigh, symmetric_eigh
from .network import (
    LayerSpec,
    Network,
    NetworkSpec,
    TrainConfig,
    _activate,
    init_network,
    network_from_payload,
    network_to_payload,
    train,
)
from .persist import read_model, write_model

# standardization floor: columns with no variance pass through unscaled
_STD_FLOOR = 1e-12


def _column_stats(x: np.ndarray):
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std < _STD_FLOOR, 1.0, std)
    return mean, std


def _check_fit_input(x: np.ndarray, m: int, require_reduction: bool = True) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"expected an n x d matrix, got shape {x.shape}")
    if x.shape[0] < 2:
        raise ValueError("need at least 2 rows to fit")
    if not np.all(np.isfinite(x)):
        raise ValueError("fit data must be finite")
    if m < 1:
        raise ValueError(f"target dimension must be >= 1, got {m}")
    if require_reduction and m >= x.shape[1]:
        raise ValueError(
            f"target dimension {m} must be smaller than input dimension {x.shape[1]}"
        )
    return x


class Embedder:
    """Shared transform-side checks; concrete classes fill in `_map`."""

    kind: str = ""
    m: int = 0
    input_dim: int = 0

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(
                f"{self.kind} embedder expects {self.input_dim} columns, got shape {x.shape}"
            )
        z = self._map(x)
        assert z.shape == (x.shape[0], self.m)
        return z

    def _map(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _payload(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class IdentityEmbedder(Embedder):
    """Raw covariates unchanged; the matching-in-original-space baseline."""

    input_dim: int

    kind = "identity"

    def __post_init__(self):
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        object.__setattr__(self, "m", self.input_dim)

    def _map(self, x: np.ndarray) -> np.ndarray:
        return x.copy()

    def _payload(self) -> dict:
        return {"input_dim": self.input_dim}


def fit_identity(x: np.ndarray) -> IdentityEmbedder:
    x = _check_fit_input(x, 1, require_reduction=False)
    return IdentityEmbedder(input_dim=x.shape[1])


@dataclass(frozen=True)
class PcaEmbedder(Embedder):
    """Top principal components of the z-scored fit data.

    `components` is d x m with orthonormal columns, ordered by decreasing
    eigenvalue; each column's largest-magnitude entry is positive, making
    the decomposition deterministic.
    """

    mean: np.ndarray
    scale: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray

    kind = "pca"

    def __post_init__(self):
        object.__setattr__(self, "input_dim", self.mean.shape[0])
        object.__setattr__(self, "m", self.components.shape[1])

    def _map(self, x: np.ndarray) -> np.ndarray:
        return ((x - self.mean) / self.scale) @ self.components

    def inverse_transform(self, z: np.ndarray) -> np.ndarray:
        """Map scores back to the original coordinate space."""
        z = np.asarray(z, dtype=float)
        if z.ndim != 2 or z.shape[1] != self.m:
            raise ValueError(f"expected n x {self.m} scores, got shape {z.shape}")
        return (z @ self.components.T) * self.scale + self.mean

    def _payload(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "components": self.components.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
        }


def _orient_columns(vecs: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    out = vecs.copy()
    for j in range(out.shape[1]):
        lead = int(np.argmax(np.abs(out[:, j])))
        if out[lead, j] < 0:
            out[:, j] = -out[:, j]
    return out


def fit_pca(x: np.ndarray, m: int) -> PcaEmbedder:
    """PCA on standardized columns via the cyclic Jacobi eigensolver."""
    x = _check_fit_input(x, m, require_reduction=False)
    if m > x.shape[1]:
        raise ValueError(f"target dimension {m} exceeds input dimension {x.shape[1]}")
    mean, scale = _column_stats(x)
    z = (x - mean) / scale
    cov = (z.T @ z) / (z.shape[0] - 1)
    eigvals, eigvecs = jacobi_eigh(cov)
    top = np.arange(eigvals.shape[0] - 1, eigvals.shape[0] - 1 - m, -1)
    components = _orient_columns(eigvecs[:, top])
    return PcaEmbedder(
        mean=mean, scale=scale, components=components, eigenvalues=eigvals[top]
    )


@dataclass(frozen=True)
class AutoencoderEmbedder(Embedder):
    """Bottleneck activations of a trained reconstruction network.

    The network maps standardized inputs through tanh hidden layers to an
    identity output; `n_encoder_layers` marks where the bottleneck sits, and
    transform runs only that prefix of the forward pass.
    """

    mean: np.ndarray
    scale: np.ndarray
    network: Network
    n_encoder_layers: int
    loss_history: tuple = ()

    kind = "autoencoder"

    def __post_init__(self):
        object.__setattr__(self, "input_dim", self.mean.shape[0])
        bottleneck = self.network.spec.layers[self.n_encoder_layers - 1]
        object.__setattr__(self, "m", bottleneck.fan_out)

    def _encode(self, z: np.ndarray) -> np.ndarray:
        # the forward pass truncated at the bottleneck layer
        a = z
        for l in range(self.n_encoder_layers):
            layer = self.network.spec.layers[l]
            a = _activate(layer.activation, a @ self.network.weights[l].T + self.network.biases[l])
        return a

    def _map(self, x: np.ndarray) -> np.ndarray:
        return self._encode((x - self.mean) / self.scale)

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        """Full round trip through the network, back in original coordinates."""
        x = np.asarray(x, dtype=float)
        z = (x - self.mean) / self.scale
        out = self.network.predict(z)
        return out * self.scale + self.mean

    def _payload(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "n_encoder_layers": self.n_encoder_layers,
            "network": network_to_payload(self.network),
        }


def autoencoder_spec(d: int, m: int, hidden: tuple[int, ...] = ()) -> NetworkSpec:
    """Symmetric reconstruction network d -> hidden -> m -> hidden -> d.

    All hidden layers (including the bottleneck) are tanh; the output layer
    is identity so reconstructions are unbounded.
    """
    dims = [d, *hidden, m]
    layers = []
    for a, b in zip(dims, dims[1:]):
        layers.append(LayerSpec(a, b, activation="tanh"))
    decoder_dims = [m, *reversed(hidden), d]
    for i, (a, b) in enumerate(zip(decoder_dims, decoder_dims[1:])):
        last = i == len(decoder_dims) - 2
        layers.append(LayerSpec(a, b, activation="identity" if last else "tanh"))
    return NetworkSpec(tuple(layers), loss="mse")


DEFAULT_AUTOENCODER_EPOCHS = 400


def fit_autoencoder(
    x: np.ndarray,
    m: int,
    train_cfg: TrainConfig | None = None,
    hidden: tuple[int, ...] = (),
    seed: int = 0,
) -> AutoencoderEmbedder:
    """Train a reconstruction network on standardized x; embed at the bottleneck.

    `hidden` inserts extra symmetric tanh layers around the bottleneck
    (empty tuple = plain d -> m -> d). `train_cfg` defaults to adadelta for
    DEFAULT_AUTOENCODER_EPOCHS epochs with the given seed.
    """
    x = _check_fit_input(x, m)
    if train_cfg is None:
        train_cfg = TrainConfig(epochs=DEFAULT_AUTOENCODER_EPOCHS, seed=seed)
    mean, scale = _column_stats(x)
    z = (x - mean) / scale
    spec = autoencoder_spec(x.shape[1], m, hidden)
    net = init_network(spec, seed=train_cfg.seed)
    history = train(net, z, z, train_cfg)
    return AutoencoderEmbedder(
        mean=mean,
        scale=scale,
        network=net,
        n_encoder_layers=1 + len(hidden),
        loss_history=tuple(history),
    )


@dataclass(frozen=True)
class LleEmbedder(Embedder):
    """Locally linear embedding with weight-based out-of-sample mapping.

    Keeps the training points and their embedding; a new point is embedded
    by finding its k nearest training points, solving the same constrained
    least-squares weights used during fitting, and averaging the neighbors'
    embedding coordinates with those weights. A point coinciding with a
    training point inherits that point's embedding directly.
    """

    train_x: np.ndarray
    embedding: np.ndarray
    k_neighbors: int
    reg: float

    kind = "lle"

    def __post_init__(self):
        object.__setattr__(self, "input_dim", self.train_x.shape[1])
        object.__setattr__(self, "m", self.embedding.shape[1])

    def _map(self, x: np.ndarray) -> np.ndarray:
        out = np.empty((x.shape[0], self.m))
        for i in range(x.shape[0]):
            diff = self.train_x - x[i]
            d2 = (diff * diff).sum(axis=1)
            order = np.argsort(d2, kind="stable")
            if d2[order[0]] == 0.0:
                out[i] = self.embedding[order[0]]
                continue
            nbrs = order[: self.k_neighbors]
            w = _barycentric_weights(x[i], self.train_x[nbrs], self.reg)
            out[i] = w @ self.embedding[nbrs]
        return out

    def _payload(self) -> dict:
        return {
            "train_x": self.train_x.tolist(),
            "embedding": self.embedding.tolist(),
            "k_neighbors": self.k_neighbors,
            "reg": self.reg,
        }


def _barycentric_weights(point: np.ndarray, neighbors: np.ndarray, reg: float) -> np.ndarray:
    """Weights reconstructing `point` from `neighbors`, summing to 1.

    Solves the local Gram system (G + reg*trace(G)*I) w = 1 and normalizes;
    the Tikhonov term keeps the solve well-posed when neighbors are affinely
    dependent (including exact duplicates).
    """
    shifted = neighbors - point
    gram = shifted @ shifted.T
    trace = np.trace(gram)
    bump = reg * trace if trace > 0 else reg
    gram = gram + bump * np.eye(gram.shape[0])
    w = np.linalg.solve(gram, np.ones(gram.shape[0]))
    return w / w.sum()


def lle_weight_matrix(x: np.ndarray, k_neighbors: int, reg: float) -> np.ndarray:
    """Row-stochastic n x n matrix of neighbor reconstruction weights."""
    n = x.shape[0]
    w = np.zeros((n, n))
    for i in range(n):
        diff = x - x[i]
        d2 = (diff * diff).sum(axis=1)
        d2[i] = np.inf
        nbrs = np.argsort(d2, kind="stable")[:k_neighbors]
        w[i, nbrs] = _barycentric_weights(x[i], x[nbrs], reg)
    return w


def fit_lle(x: np.ndarray, m: int, k_neighbors: int = 10, reg: float = 1e-3) -> LleEmbedder:
    """Standard LLE: neighbor weights, then the small eigenvectors of (I-W)'(I-W).

    The embedding is eigenvectors 2..m+1 (ascending eigenvalues); the first,
    constant eigenvector for eigenvalue 0 is discarded.
    """
    x = _check_fit_input(x, m)
    if reg <= 0:
        raise ValueError(f"reg must be > 0, got {reg}")
    if k_neighbors < m + 1:
        raise ValueError(f"k_neighbors must be >= m+1 = {m + 1}, got {k_neighbors}")
    if k_neighbors >= x.shape[0]:
        raise ValueError(f"k_neighbors must be < n = {x.shape[0]}, got {k_neighbors}")
    w = lle_weight_matrix(x, k_neighbors, reg)
    iw = np.eye(x.shape[0]) - w
    cost = iw.T @ iw
    _, vecs = symmetric_eigh(cost)
    embedding = vecs[:, 1 : m + 1]
    return LleEmbedder(train_x=x, embedding=embedding, k_neighbors=k_neighbors, reg=reg)


@dataclass(frozen=True)
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    inertia_history: tuple = ()

    def __post_init__(self):
        if self.labels.min(initial=0) < 0 or self.labels.max(initial=0) >= len(self.centroids):
            raise ValueError("labels must index centroids")


def _sq_dists_to(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """n x k squared Euclidean distances."""
    out = np.empty((points.shape[0], centers.shape[0]))
    for j in range(centers.shape[0]):
        diff = points - centers[j]
        out[:, j] = (diff * diff).sum(axis=1)
    return out


def kmeans(x: np.ndarray, k: int, seed: int = 0, max_iter: int = 300) -> KMeansResult:
    """Lloyd iterations from k-means++ seeding.

    Runs until the label assignment stops changing or max_iter; an empty
    cluster is re-seeded at the point farthest from its nearest centroid.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"expected an n x d matrix, got shape {x.shape}")
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)

    # k-means++ seeding
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    closest = _sq_dists_to(x, centroids[:1]).min(axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total == 0.0:
            centroids[j] = x[rng.integers(n)]
        else:
            centroids[j] = x[rng.choice(n, p=closest / total)]
        closest = np.minimum(closest, _sq_dists_to(x, centroids[j : j + 1]).min(axis=1))

    labels = np.full(n, -1)
    history = []
    for _ in range(max_iter):
        d2 = _sq_dists_to(x, centroids)
        new_labels = d2.argmin(axis=1)
        history.append(float(d2.min(axis=1).sum()))
        for j in range(k):
            members = x[new_labels == j]
            if members.shape[0] == 0:
                far = int(d2.min(axis=1).argmax())
                centroids[j] = x[far]
                new_labels[far] = j
                d2[far] = 0.0  # keep a second empty cluster from reusing this point
            else:
                centroids[j] = members.mean(axis=0)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels

    d2 = _sq_dists_to(x, centroids)
    labels = d2.argmin(axis=1)
    inertia = float(d2.min(axis=1).sum())
    history.append(inertia)
    return KMeansResult(
        centroids=centroids, labels=labels, inertia=inertia,
        inertia_history=tuple(history),
    )


_EMBEDDER_KINDS = ("identity", "pca", "autoencoder", "lle")


def save_embedder(e: Embedder, path) -> None:
    if e.kind not in _EMBEDDER_KINDS:
        raise ValueError(f"unknown embedder kind {e.kind!r}")
    write_model(path, f"embedder/{e.kind}", e._payload())


def load_embedder(path) -> Embedder:
    kind, doc = read_model(path)
    if not (isinstance(kind, str) and kind.startswith("embedder/")):
        raise ValueError(f"{path}: not an embedder model (kind {kind!r})")
    name = kind.split("/", 1)[1]
    try:
        if name == "identity":
            return IdentityEmbedder(input_dim=int(doc["input_dim"]))
        if name == "pca":
            return PcaEmbedder(
                mean=np.asarray(doc["mean"], dtype=float),
                scale=np.asarray(doc["scale"], dtype=float),
                components=np.asarray(doc["components"], dtype=float),
                eigenvalues=np.asarray(doc["eigenvalues"], dtype=float),
            )
        if name == "autoencoder":
            return AutoencoderEmbedder(
                mean=np.asarray(doc["mean"], dtype=float),
                scale=np.asarray(doc["scale"], dtype=float),
                network=network_from_payload(doc["network"]),
                n_encoder_layers=int(doc["n_encoder_layers"]),
            )
        if name == "lle":
            return LleEmbedder(
                train_x=np.asarray(doc["train_x"], dtype=float),
                embedding=np.asarray(doc["embedding"], dtype=float),
                k_neighbors=int(doc["k_neighbors"]),
                reg=float(doc["reg"]),
            )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: malformed embedder payload ({exc})") from None
    raise ValueError(f"{path}: unknown embedder kind {name!r}")
