"""Simulated observational datasets and their CSV interchange format.

Two generators: a noisy swiss-roll manifold with linear potential outcomes
(covariates live on a 2-D sheet rolled through 3-D space, split into six
bands along the roll), and jittered treated/control pairs on the unit square
where each control is a perturbed copy of a known treated twin.

A dataset is the usual observational triple (covariates, binary treatment,
observed outcome); simulated runs also carry the ground truth needed to
score estimators: both potential outcomes, the exact unit-level effect,
band labels, and for the paired design the twin indices.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

THREE_HALVES_PI = 3.0 * math.pi / 2.0
N_GROUPS = 6


@dataclass(frozen=True)
class GroundTruth:
    """Simulation ground truth: potential outcomes, exact unit effects, band
    labels, and (for the paired design) each unit's opposite-arm twin."""

    y0: np.ndarray
    y1: np.ndarray
    ite_true: np.ndarray
    group: np.ndarray
    pair_index: np.ndarray | None = None


@dataclass(frozen=True)
class ObservationalDataset:
    """Covariates (n x d), binary treatment, observed outcome, optional truth."""

    x: np.ndarray
    w: np.ndarray
    y_obs: np.ndarray
    truth: GroundTruth | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        w = np.asarray(self.w)
        y = np.asarray(self.y_obs, dtype=float)
        if x.ndim != 2:
            raise ValueError(f"x must be 2-D, got shape {x.shape}")
        n = x.shape[0]
        if w.shape != (n,) or y.shape != (n,):
            raise ValueError(
                f"length mismatch: x has {n} rows, w {w.shape}, y_obs {y.shape}"
            )
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
            raise ValueError("covariates and outcomes must be finite")
        if not np.isin(w, (0, 1)).all():
            raise ValueError("treatment indicator must be 0 or 1")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "w", w.astype(int))
        object.__setattr__(self, "y_obs", y)
        if self.truth is not None:
            self._check_truth(n)

    def _check_truth(self, n: int) -> None:
        t = self.truth
        for name in ("y0", "y1", "ite_true"):
            arr = getattr(t, name)
            if np.asarray(arr).shape != (n,):
                raise ValueError(f"truth.{name} must have length {n}")
        if not np.array_equal(t.ite_true, t.y1 - t.y0):
            raise ValueError("truth.ite_true must equal y1 - y0 exactly")
        expected = np.where(self.w == 1, t.y1, t.y0)
        if not np.array_equal(self.y_obs, expected):
            raise ValueError("y_obs must equal the potential outcome selected by w")
        g = np.asarray(t.group)
        if g.shape != (n,) or not np.issubdtype(g.dtype, np.integer):
            raise ValueError("truth.group must be an integer vector of length n")
        if g.size and (g.min() < 0 or g.max() >= N_GROUPS):
            raise ValueError(f"truth.group values must lie in [0, {N_GROUPS})")
        if t.pair_index is not None:
            p = np.asarray(t.pair_index)
            if p.shape != (n,):
                raise ValueError("truth.pair_index must have length n")
            if not np.array_equal(p[p], np.arange(n)):
                raise ValueError("truth.pair_index must be an involution")
            if not np.array_equal(self.w[p], 1 - self.w):
                raise ValueError("truth.pair_index must pair opposite arms")

    @property
    def n_units(self) -> int:
        return self.x.shape[0]

    @property
    def n_covariates(self) -> int:
        return self.x.shape[1]

    def arm_sizes(self) -> tuple[int, int]:
        n1 = int(self.w.sum())
        return self.n_units - n1, n1


@dataclass(frozen=True)
class SwissRollConfig:
    """Parameters of the swiss-roll simulation.

    `coeff_control` / `coeff_treated` are the linear outcome coefficients
    applied to the noiseless coordinates; `noise_sigma` perturbs positions,
    `outcome_noise_sigma` perturbs each potential outcome.
    """

    n: int = 1500
    noise_sigma: float = 0.05
    coeff_control: tuple[float, float, float] = (1.0, 1.0, 1.0)
    coeff_treated: tuple[float, float, float] = (2.0, 1.0, 1.0)
    outcome_noise_sigma: float = 0.0
    p_treat: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        scalars = (self.noise_sigma, self.outcome_noise_sigma, self.p_treat)
        if not all(math.isfinite(v) for v in scalars):
            raise ValueError("config scalars must be finite")
        if not all(math.isfinite(c) for c in self.coeff_control + self.coeff_treated):
            raise ValueError("outcome coefficients must be finite")
        if self.noise_sigma < 0 or self.outcome_noise_sigma < 0:
            raise ValueError("noise sigmas must be >= 0")
        if not 0.0 <= self.p_treat <= 1.0:
            raise ValueError(f"p_treat must be in [0, 1], got {self.p_treat}")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")


def roll_surface(u, v):
    """Map uniforms (u, v) in [0,1) to the swiss-roll sheet.

    Returns (t, h, points) with t = (3*pi/2)*(1 + 2u), h = 11v and each point
    (t*cos t, h, t*sin t); `points` are the noiseless coordinates.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    t = THREE_HALVES_PI * (1.0 + 2.0 * u)
    h = 11.0 * v
    points = np.column_stack((t * np.cos(t), h, t * np.sin(t)))
    return t, h, points


def _band_labels(t: np.ndarray) -> np.ndarray:
    """Equal-count bands along the roll parameter: rank r gets floor(6r/n)."""
    n = t.shape[0]
    order = np.argsort(t, kind="stable")
    group = np.empty(n, dtype=int)
    group[order] = np.arange(n) * N_GROUPS // n
    return group


def gen_swiss_roll(cfg: SwissRollConfig) -> ObservationalDataset:
    """Draw a swiss-roll dataset with linear potential outcomes.

    Draw order (fixed for reproducibility): u, v, positional noise, treatment,
    control outcome noise, treated outcome noise. Outcomes are linear in the
    noiseless coordinates; each potential outcome carries its own noise draw,
    so the unit effect is exactly y1 - y0 (noiseless at the default
    outcome_noise_sigma = 0).
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n
    u = rng.random(n)
    v = rng.random(n)
    t, _, clean = roll_surface(u, v)
    x = clean + cfg.noise_sigma * rng.standard_normal((n, 3))
    w = (rng.random(n) < cfg.p_treat).astype(int)
    a = np.asarray(cfg.coeff_control, dtype=float)
    b = np.asarray(cfg.coeff_treated, dtype=float)
    y0 = clean @ a + cfg.outcome_noise_sigma * rng.standard_normal(n)
    y1 = clean @ b + cfg.outcome_noise_sigma * rng.standard_normal(n)
    truth = GroundTruth(y0=y0, y1=y1, ite_true=y1 - y0, group=_band_labels(t))
    return ObservationalDataset(
        x=x, w=w, y_obs=np.where(w == 1, y1, y0), truth=truth
    )


def gen_propensity_pairs(n: int, jitter_sigma: float, seed: int) -> ObservationalDataset:
    """Treated units uniform on the unit square, controls as jittered copies.

    Rows 0..n-1 are the treated units (2 covariates and an outcome, all
    U[0,1)); rows n..2n-1 are their controls, formed by adding
    Gaussian(0, jitter_sigma^2) to the source unit's covariates and outcome.
    `truth.pair_index` records the twin bijection. There is no treatment
    effect in this design: both potential outcomes equal the observed one.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not (jitter_sigma > 0 and math.isfinite(jitter_sigma)):
        raise ValueError(
            "jitter_sigma must be > 0: coincident twins make neighbor order vacuous"
        )
    rng = np.random.default_rng(seed)
    x_treated = rng.random((n, 2))
    y_treated = rng.random(n)
    jitter = jitter_sigma * rng.standard_normal((n, 3))
    x = np.vstack((x_treated, x_treated + jitter[:, :2]))
    y = np.concatenate((y_treated, y_treated + jitter[:, 2]))
    w = np.concatenate((np.ones(n, dtype=int), np.zeros(n, dtype=int)))
    pair = np.concatenate((np.arange(n) + n, np.arange(n)))
    truth = GroundTruth(
        y0=y.copy(),
        y1=y.copy(),
        ite_true=np.zeros(2 * n),
        group=np.zeros(2 * n, dtype=int),
        pair_index=pair,
    )
    return ObservationalDataset(x=x, w=w, y_obs=y, truth=truth)


def duplicate_twins(ds: ObservationalDataset) -> ObservationalDataset:
    """Clone every unit into the opposite arm with its counterfactual outcome.

    The clone shares the original's covariates exactly, so distance-zero
    matches exist for every unit and a correct matcher recovers the true
    effects with no error. Requires ground truth. Rows 0..n-1 are the
    originals, n..2n-1 the clones; pair_index links them.
    """
    if ds.truth is None:
        raise ValueError("duplicate_twins requires ground truth")
    n = ds.n_units
    t = ds.truth
    w_clone = 1 - ds.w
    y_clone = np.where(w_clone == 1, t.y1, t.y0)
    truth = GroundTruth(
        y0=np.concatenate((t.y0, t.y0)),
        y1=np.concatenate((t.y1, t.y1)),
        ite_true=np.concatenate((t.ite_true, t.ite_true)),
        group=np.concatenate((t.group, t.group)),
        pair_index=np.concatenate((np.arange(n) + n, np.arange(n))),
    )
    return ObservationalDataset(
        x=np.vstack((ds.x, ds.x)),
        w=np.concatenate((ds.w, w_clone)),
        y_obs=np.concatenate((ds.y_obs, y_clone)),
        truth=truth,
    )


_TRUTH_COLUMNS = ("y0", "y1", "ite_true", "group")


def save_csv(ds: ObservationalDataset, path) -> None:
    """Write the dataset as UTF-8 CSV with header x1..xd, w, y_obs[, truth cols].

    Floats are written with repr precision, so a save/load round trip
    reproduces every field bit for bit.
    """
    d = ds.n_covariates
    header = [f"x{j + 1}" for j in range(d)] + ["w", "y_obs"]
    truth = ds.truth
    if truth is not None:
        header += list(_TRUTH_COLUMNS)
        if truth.pair_index is not None:
            header.append("pair_index")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(ds.n_units):
            row = [repr(float(val)) for val in ds.x[i]]
            row += [str(int(ds.w[i])), repr(float(ds.y_obs[i]))]
            if truth is not None:
                row += [
                    repr(float(truth.y0[i])),
                    repr(float(truth.y1[i])),
                    repr(float(truth.ite_true[i])),
                    str(int(truth.group[i])),
                ]
                if truth.pair_index is not None:
                    row.append(str(int(truth.pair_index[i])))
            writer.writerow(row)


def _parse_float(token: str, line_no: int, column: str) -> float:
    try:
        val = float(token)
    except ValueError:
        raise ValueError(
            f"line {line_no}: column {column!r} is not a number: {token!r}"
        ) from None
    if not math.isfinite(val):
        raise ValueError(f"line {line_no}: column {column!r} is not finite: {token!r}")
    return val


def _parse_int(token: str, line_no: int, column: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise ValueError(
            f"line {line_no}: column {column!r} is not an integer: {token!r}"
        ) from None


def load_csv(path) -> ObservationalDataset:
    """Read a dataset written by save_csv; parse errors name the file line."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not any(row for row in rows):
        raise ValueError(f"{path}: no rows")
    header = rows[0]
    x_cols = [c for c in header if c.startswith("x") and c[1:].isdigit()]
    d = len(x_cols)
    if d < 1 or x_cols != [f"x{j + 1}" for j in range(d)]:
        raise ValueError(f"{path}: header must start with columns x1..xd, got {header}")
    required = x_cols + ["w", "y_obs"]
    if header[: len(required)] != required:
        raise ValueError(f"{path}: header must continue with 'w', 'y_obs', got {header}")
    extras = header[len(required):]
    if extras == []:
        has_truth, has_pair = False, False
    elif extras == list(_TRUTH_COLUMNS):
        has_truth, has_pair = True, False
    elif extras == list(_TRUTH_COLUMNS) + ["pair_index"]:
        has_truth, has_pair = True, True
    else:
        raise ValueError(f"{path}: unrecognized trailing columns {extras}")

    data_rows = [(i + 2, row) for i, row in enumerate(rows[1:]) if row]
    if not data_rows:
        raise ValueError(f"{path}: no rows")

    n = len(data_rows)
    x = np.empty((n, d))
    w = np.empty(n, dtype=int)
    y_obs = np.empty(n)
    y0 = np.empty(n)
    y1 = np.empty(n)
    ite = np.empty(n)
    group = np.empty(n, dtype=int)
    pair = np.empty(n, dtype=int)
    for k, (line_no, row) in enumerate(data_rows):
        if len(row) != len(header):
            raise ValueError(
                f"line {line_no}: expected {len(header)} fields, found {len(row)}"
            )
        for j in range(d):
            x[k, j] = _parse_float(row[j], line_no, f"x{j + 1}")
        w_val = _parse_int(row[d], line_no, "w")
        if w_val not in (0, 1):
            raise ValueError(f"line {line_no}: column 'w' must be 0 or 1, got {w_val}")
        w[k] = w_val
        y_obs[k] = _parse_float(row[d + 1], line_no, "y_obs")
        if has_truth:
            y0[k] = _parse_float(row[d + 2], line_no, "y0")
            y1[k] = _parse_float(row[d + 3], line_no, "y1")
            ite[k] = _parse_float(row[d + 4], line_no, "ite_true")
            group[k] = _parse_int(row[d + 5], line_no, "group")
            if has_pair:
                pair[k] = _parse_int(row[d + 6], line_no, "pair_index")

    truth = None
    if has_truth:
        truth = GroundTruth(
            y0=y0, y1=y1, ite_true=ite, group=group,
            pair_index=pair if has_pair else None,
        )
    try:
        return ObservationalDataset(x=x, w=w, y_obs=y_obs, truth=truth)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def train_test_split(n: int, test_fraction: float, seed: int):
    """Seeded index split; returns (train_idx, test_idx), both sorted."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_test = max(1, int(round(n * test_fraction)))
    if n_test >= n:
        raise ValueError(f"test_fraction {test_fraction} leaves no training rows")
    return np.sort(order[n_test:]), np.sort(order[:n_test])


def subset(ds: ObservationalDataset, idx: np.ndarray) -> ObservationalDataset:
    """Row-subset of a dataset (pair_index is dropped: it indexes the full set)."""
    truth = None
    if ds.truth is not None:
        t = ds.truth
        truth = GroundTruth(
            y0=t.y0[idx], y1=t.y1[idx], ite_true=t.ite_true[idx], group=t.group[idx]
        )
    return ObservationalDataset(x=ds.x[idx], w=ds.w[idx], y_obs=ds.y_obs[idx], truth=truth)
