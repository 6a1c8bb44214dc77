"""Nearest-neighbor matching across treatment arms and effect estimation.

Matching is exact brute-force Euclidean search (no trees, no approximation)
so results are deterministic and easy to verify against a plain scan. The
unit-level effect estimate differences each unit's observed outcome against
the mean outcome of its k nearest opposite-arm neighbors:

    ite[i] = y_obs[i] - mean(matched control outcomes)   if w[i] = 1
    ite[i] = mean(matched treated outcomes) - y_obs[i]   if w[i] = 0

Distance ties are always broken by the lower candidate index, and matching
is with replacement, so outcomes never depend on query order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MatchResult:
    """Neighbors of one query unit, nearest first (opposite arm only)."""

    query_index: int
    neighbor_indices: np.ndarray
    distances: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.neighbor_indices, dtype=int)
        d = np.asarray(self.distances, dtype=float)
        if idx.shape != d.shape or idx.ndim != 1:
            raise ValueError("neighbor_indices and distances must be equal-length vectors")
        if d.size and (np.any(d < 0) or np.any(np.diff(d) < 0)):
            raise ValueError("distances must be non-negative and non-decreasing")
        object.__setattr__(self, "neighbor_indices", idx)
        object.__setattr__(self, "distances", d)

    @property
    def k(self) -> int:
        return self.neighbor_indices.shape[0]


@dataclass(frozen=True)
class EffectEstimate:
    """Per-unit effect estimates and their mean.

    Units excluded by a caliper carry NaN in `ite` and are counted in
    `n_unmatched`; `ate` averages the matched units only.
    """

    ite: np.ndarray
    ate: float
    k: int
    n_unmatched: int = 0

    def __post_init__(self):
        ite = np.asarray(self.ite, dtype=float)
        object.__setattr__(self, "ite", ite)
        matched = ite[np.isfinite(ite)]
        if matched.size == 0:
            raise ValueError("no matched units: every unit exceeded the caliper")
        if ite.size - matched.size != self.n_unmatched:
            raise ValueError("n_unmatched disagrees with NaN count in ite")
        if self.ate != float(np.mean(matched)):
            raise ValueError("ate must equal the mean of matched ite entries")


def _check_arms(w: np.ndarray) -> None:
    if not np.isin(w, (0, 1)).all():
        raise ValueError("treatment indicator must be 0 or 1")
    n1 = int(np.sum(w == 1))
    if n1 == 0:
        raise ValueError("treated arm is empty: nothing to match against")
    if n1 == w.shape[0]:
        raise ValueError("control arm is empty: nothing to match against")


def _knn(query: np.ndarray, candidates: np.ndarray, cand_indices: np.ndarray, k: int):
    """Exact k smallest Euclidean distances; ties go to the lower index.

    Distances use the direct difference form sqrt(sum((a-b)^2)), never the
    expanded inner-product identity, and accumulate coordinate by coordinate
    in a fixed left-to-right order, so they agree digit-for-digit with a
    plain scalar scan (numpy's vectorized sum reassociates terms and would
    not).
    """
    total = np.zeros(candidates.shape[0])
    for c in range(candidates.shape[1]):
        delta = candidates[:, c] - query[c]
        total += delta * delta
    dists = np.sqrt(total)
    order = np.argsort(dists, kind="stable")[:k]
    return cand_indices[order], dists[order]


def nearest_opposite(z: np.ndarray, w: np.ndarray, i: int, k: int = 1) -> MatchResult:
    """k nearest opposite-arm neighbors of unit i in representation z."""
    z = np.asarray(z, dtype=float)
    w = np.asarray(w)
    _check_arms(w)
    opp = np.flatnonzero(w != w[i])
    if k < 1 or k > opp.shape[0]:
        raise ValueError(f"k must be in [1, {opp.shape[0]}] (opposite arm size), got {k}")
    idx, d = _knn(z[i], z[opp], opp, k)
    return MatchResult(query_index=int(i), neighbor_indices=idx, distances=d)


def _effects_against_pool(
    z_query, w_query, y_query, z_pool, w_pool, y_pool, k, caliper
) -> EffectEstimate:
    n = z_query.shape[0]
    ite = np.full(n, np.nan)
    treated_pool = np.flatnonzero(w_pool == 1)
    control_pool = np.flatnonzero(w_pool == 0)
    for arm, pool in ((1, control_pool), (0, treated_pool)):
        if not np.any(w_query == arm):
            continue
        side = "control" if arm == 1 else "treated"
        if pool.shape[0] == 0:
            raise ValueError(f"{side} arm of the matching pool is empty")
        if pool.shape[0] < k:
            raise ValueError(
                f"k={k} exceeds the {side} matching pool of size {pool.shape[0]}"
            )
    for i in range(n):
        pool = control_pool if w_query[i] == 1 else treated_pool
        idx, d = _knn(z_query[i], z_pool[pool], pool, k)
        if caliper is not None:
            keep = d <= caliper
            if not np.any(keep):
                continue
            idx = idx[keep]
        total = 0.0
        for j in idx:
            total += float(y_pool[j])
        matched_mean = total / idx.shape[0]
        ite[i] = y_query[i] - matched_mean if w_query[i] == 1 else matched_mean - y_query[i]
    matched = ite[np.isfinite(ite)]
    if matched.size == 0:
        raise ValueError("no matched units: every unit exceeded the caliper")
    return EffectEstimate(
        ite=ite, ate=float(np.mean(matched)), k=k, n_unmatched=int(n - matched.size)
    )


def estimate_effects(
    z: np.ndarray, w: np.ndarray, y_obs: np.ndarray, k: int = 1,
    caliper: float | None = None,
) -> EffectEstimate:
    """Effect estimates matching every unit within one dataset."""
    z = np.asarray(z, dtype=float)
    w = np.asarray(w)
    y_obs = np.asarray(y_obs, dtype=float)
    if z.ndim != 2 or w.shape != (z.shape[0],) or y_obs.shape != (z.shape[0],):
        raise ValueError("z must be n x m with w and y_obs of length n")
    _check_arms(w)
    return _effects_against_pool(z, w, y_obs, z, w, y_obs, k, caliper)


def estimate_effects_pooled(
    z_query, w_query, y_query, z_pool, w_pool, y_pool, k: int = 1,
    caliper: float | None = None,
) -> EffectEstimate:
    """Effect estimates for query units matched against a separate pool.

    Used for held-out evaluation: queries are test units, the pool is the
    training set, and each test unit matches into the pool's opposite arm.
    """
    z_query = np.asarray(z_query, dtype=float)
    z_pool = np.asarray(z_pool, dtype=float)
    w_query = np.asarray(w_query)
    w_pool = np.asarray(w_pool)
    y_query = np.asarray(y_query, dtype=float)
    y_pool = np.asarray(y_pool, dtype=float)
    if z_query.ndim != 2 or z_pool.ndim != 2 or z_query.shape[1] != z_pool.shape[1]:
        raise ValueError("query and pool representations must share a column count")
    if not (np.isin(w_query, (0, 1)).all() and np.isin(w_pool, (0, 1)).all()):
        raise ValueError("treatment indicator must be 0 or 1")
    return _effects_against_pool(z_query, w_query, y_query, z_pool, w_pool, y_pool, k, caliper)


def propensity_match(scores, w, query_arm: int = 1) -> list[MatchResult]:
    """Match every unit of `query_arm` to its nearest opposite-arm score.

    Nearness is |score difference|; matching is with replacement and ties
    take the lower index. The default matches treated units to controls;
    query_arm=0 runs the symmetric direction.
    """
    scores = np.asarray(scores, dtype=float)
    w = np.asarray(w)
    if scores.ndim != 1 or scores.shape != w.shape:
        raise ValueError("scores and w must be equal-length vectors")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    if query_arm not in (0, 1):
        raise ValueError(f"query_arm must be 0 or 1, got {query_arm}")
    _check_arms(w)
    queries = np.flatnonzero(w == query_arm)
    cand = np.flatnonzero(w != query_arm)
    results = []
    for i in queries:
        d = np.abs(scores[cand] - scores[i])
        j = int(np.argsort(d, kind="stable")[0])
        results.append(
            MatchResult(
                query_index=int(i),
                neighbor_indices=cand[j : j + 1],
                distances=d[j : j + 1],
            )
        )
    return results
