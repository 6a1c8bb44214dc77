"""Reproducible experiment pipelines: config parsing, runs, and report files.

Each run_* function takes a parsed config and an output directory, executes
the pipeline stage by stage, and writes reports.json, comparison.csv, the
plot-data CSVs, and a fully resolved copy of its config. Configs are strict
JSON: unknown keys are rejected so a typo cannot silently fall back to a
default, and the resolved file parses back to the identical config.
"""

from __future__ import annotations

import json
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import (
    SwissRollConfig,
    duplicate_twins,
    gen_propensity_pairs,
    gen_swiss_roll,
    train_test_split,
)
from .embedding import fit_autoencoder, fit_identity, fit_lle, fit_pca
from .gradcheck import default_grid, run_case
from .matching import estimate_effects, estimate_effects_pooled, propensity_match
from .metrics import (
    REFERENCE_MISASSIGNMENT,
    ite_error,
    misassignment_report,
    report_to_dict,
    threshold_labels,
)
from .network import TrainConfig
from .propensity import PropensityFitConfig
from .propensity import fit as fit_propensity

CONFIG_VERSION = 1

# Derived seed substreams: the dataset draw, the train/test split and the
# network training must not share a generator, or changing one would
# silently reshuffle the others.
SPLIT_SEED_OFFSET = 1000
TRAIN_SEED_OFFSET = 2000

SWISSROLL_METHODS = ("raw_knn", "pca", "lle", "autoencoder")
PROPENSITY_METHODS = ("logistic", "propensity_net")

# Column labels of the misassignment comparison table, kept verbatim.
PROPENSITY_TABLE_COLUMNS = (
    "Mean absolute misclassification error(%)",
    "Number of mis-assignments (%)",
    "Accuracy(%)",
)


class ConfigError(ValueError):
    """Invalid or unparseable experiment configuration."""


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name for diagnostics."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}': {cause}")
        self.stage = stage
        self.cause = cause


@contextmanager
def _stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def _require_mapping(doc, where: str) -> dict:
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be a JSON object, got {type(doc).__name__}")
    return doc


def _reject_unknown(doc: dict, allowed, where: str) -> None:
    extra = sorted(set(doc) - set(allowed))
    if extra:
        raise ConfigError(f"{where}: unknown keys {extra}")


def _get_int(doc, key, default, where, minimum=None):
    v = doc.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}.{key} must be an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{where}.{key} must be >= {minimum}, got {v}")
    return v


def _get_float(doc, key, default, where):
    v = doc.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {v!r}")
    return float(v)


def _get_bool(doc, key, default, where):
    v = doc.get(key, default)
    if not isinstance(v, bool):
        raise ConfigError(f"{where}.{key} must be true or false, got {v!r}")
    return v


def _get_methods(doc, key, default, where, allowed):
    v = doc.get(key, list(default))
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{where}.{key} must be a non-empty list")
    for name in v:
        if name not in allowed:
            raise ConfigError(f"{where}.{key}: unknown method {name!r} (choose from {list(allowed)})")
    if len(set(v)) != len(v):
        raise ConfigError(f"{where}.{key}: duplicate methods")
    return tuple(v)


def _get_number_list(doc, key, default, where, length):
    v = doc.get(key, list(default))
    if (
        not isinstance(v, list)
        or len(v) != length
        or any(isinstance(e, bool) or not isinstance(e, (int, float)) for e in v)
    ):
        raise ConfigError(f"{where}.{key} must be a list of {length} numbers")
    return tuple(float(e) for e in v)


def _check_header(doc: dict, experiment: str) -> None:
    version = doc.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version!r} (expected {CONFIG_VERSION})")
    declared = doc.get("experiment", experiment)
    if declared != experiment:
        raise ConfigError(
            f"config declares experiment {declared!r} but was given to the {experiment!r} runner"
        )


@dataclass(frozen=True)
class SwissRollRun:
    seed: int = 0
    dataset: SwissRollConfig = SwissRollConfig()
    methods: tuple = SWISSROLL_METHODS
    test_fraction: float = 0.2
    k_matches: int = 1
    embed_dim: int = 2
    twin_mode: bool = False
    ae_epochs: int = 400
    ae_batch_size: int = 32
    ae_hidden: tuple = ()
    lle_neighbors: int = 10
    lle_reg: float = 1e-3


def parse_swissroll(doc, seed_override: int | None = None) -> SwissRollRun:
    doc = _require_mapping(doc, "config")
    _check_header(doc, "swissroll")
    _reject_unknown(
        doc,
        (
            "version",
            "experiment",
            "seed",
            "dataset",
            "methods",
            "test_fraction",
            "k_matches",
            "embed_dim",
            "twin_mode",
            "autoencoder",
            "lle",
        ),
        "config",
    )
    seed = _get_int(doc, "seed", 0, "config")
    if seed_override is not None:
        seed = seed_override

    dataset = _require_mapping(doc.get("dataset"), "config.dataset")
    _reject_unknown(
        dataset,
        ("n", "noise_sigma", "coeff_control", "coeff_treated", "outcome_noise_sigma", "p_treat"),
        "config.dataset",
    )
    ds_cfg = SwissRollConfig(
        n=_get_int(dataset, "n", 1500, "config.dataset", minimum=1),
        noise_sigma=_get_float(dataset, "noise_sigma", 0.05, "config.dataset"),
        coeff_control=_get_number_list(dataset, "coeff_control", (1.0, 1.0, 1.0), "config.dataset", 3),
        coeff_treated=_get_number_list(dataset, "coeff_treated", (2.0, 1.0, 1.0), "config.dataset", 3),
        outcome_noise_sigma=_get_float(dataset, "outcome_noise_sigma", 0.0, "config.dataset"),
        p_treat=_get_float(dataset, "p_treat", 0.5, "config.dataset"),
        seed=seed,
    )

    ae = _require_mapping(doc.get("autoencoder"), "config.autoencoder")
    _reject_unknown(ae, ("epochs", "batch_size", "hidden"), "config.autoencoder")
    hidden = ae.get("hidden", [])
    if not isinstance(hidden, list) or any(
        isinstance(h, bool) or not isinstance(h, int) or h < 1 for h in hidden
    ):
        raise ConfigError("config.autoencoder.hidden must be a list of positive integers")

    lle = _require_mapping(doc.get("lle"), "config.lle")
    _reject_unknown(lle, ("k_neighbors", "reg"), "config.lle")

    test_fraction = _get_float(doc, "test_fraction", 0.2, "config")
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"config.test_fraction must be in (0,1), got {test_fraction}")

    return SwissRollRun(
        seed=seed,
        dataset=ds_cfg,
        methods=_get_methods(doc, "methods", SWISSROLL_METHODS, "config", SWISSROLL_METHODS),
        test_fraction=test_fraction,
        k_matches=_get_int(doc, "k_matches", 1, "config", minimum=1),
        embed_dim=_get_int(doc, "embed_dim", 2, "config", minimum=1),
        twin_mode=_get_bool(doc, "twin_mode", False, "config"),
        ae_epochs=_get_int(ae, "epochs", 400, "config.autoencoder", minimum=1),
        ae_batch_size=_get_int(ae, "batch_size", 32, "config.autoencoder", minimum=1),
        ae_hidden=tuple(hidden),
        lle_neighbors=_get_int(lle, "k_neighbors", 10, "config.lle", minimum=1),
        lle_reg=_get_float(lle, "reg", 1e-3, "config.lle"),
    )


def resolved_swissroll(cfg: SwissRollRun) -> dict:
    return {
        "version": CONFIG_VERSION,
        "experiment": "swissroll",
        "seed": cfg.seed,
        "dataset": {
            "n": cfg.dataset.n,
            "noise_sigma": cfg.dataset.noise_sigma,
            "coeff_control": list(cfg.dataset.coeff_control),
            "coeff_treated": list(cfg.dataset.coeff_treated),
            "outcome_noise_sigma": cfg.dataset.outcome_noise_sigma,
            "p_treat": cfg.dataset.p_treat,
        },
        "methods": list(cfg.methods),
        "test_fraction": cfg.test_fraction,
        "k_matches": cfg.k_matches,
        "embed_dim": cfg.embed_dim,
        "twin_mode": cfg.twin_mode,
        "autoencoder": {
            "epochs": cfg.ae_epochs,
            "batch_size": cfg.ae_batch_size,
            "hidden": list(cfg.ae_hidden),
        },
        "lle": {"k_neighbors": cfg.lle_neighbors, "reg": cfg.lle_reg},
    }


@dataclass(frozen=True)
class PropensityRun:
    seed: int = 0
    n_pairs: int = 1000
    jitter_sigma: float = 0.02
    methods: tuple = PROPENSITY_METHODS
    test_fraction: float = 0.2
    include_outcome: bool = False
    query_arm: int = 1
    threshold: float = 0.5
    net_epochs: int = 2
    net_batch_size: int = 128
    logistic_l2: float = 0.0
    logistic_max_iter: int = 10_000
    logistic_grad_tol: float = 1e-8


def parse_propensity(doc, seed_override: int | None = None) -> PropensityRun:
    doc = _require_mapping(doc, "config")
    _check_header(doc, "propensity")
    _reject_unknown(
        doc,
        (
            "version",
            "experiment",
            "seed",
            "dataset",
            "methods",
            "test_fraction",
            "include_outcome",
            "query_arm",
            "threshold",
            "net",
            "logistic",
        ),
        "config",
    )
    seed = _get_int(doc, "seed", 0, "config")
    if seed_override is not None:
        seed = seed_override

    dataset = _require_mapping(doc.get("dataset"), "config.dataset")
    _reject_unknown(dataset, ("n_pairs", "jitter_sigma"), "config.dataset")

    net = _require_mapping(doc.get("net"), "config.net")
    _reject_unknown(net, ("epochs", "batch_size"), "config.net")

    logistic = _require_mapping(doc.get("logistic"), "config.logistic")
    _reject_unknown(logistic, ("l2", "max_iter", "grad_tol"), "config.logistic")

    test_fraction = _get_float(doc, "test_fraction", 0.2, "config")
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"config.test_fraction must be in (0,1), got {test_fraction}")
    query_arm = _get_int(doc, "query_arm", 1, "config")
    if query_arm not in (0, 1):
        raise ConfigError(f"config.query_arm must be 0 or 1, got {query_arm}")
    threshold = _get_float(doc, "threshold", 0.5, "config")
    if not 0.0 < threshold < 1.0:
        raise ConfigError(f"config.threshold must be in (0,1), got {threshold}")

    return PropensityRun(
        seed=seed,
        n_pairs=_get_int(dataset, "n_pairs", 1000, "config.dataset", minimum=2),
        jitter_sigma=_get_float(dataset, "jitter_sigma", 0.02, "config.dataset"),
        methods=_get_methods(doc, "methods", PROPENSITY_METHODS, "config", PROPENSITY_METHODS),
        test_fraction=test_fraction,
        include_outcome=_get_bool(doc, "include_outcome", False, "config"),
        query_arm=query_arm,
        threshold=threshold,
        net_epochs=_get_int(net, "epochs", 2, "config.net", minimum=1),
        net_batch_size=_get_int(net, "batch_size", 128, "config.net", minimum=1),
        logistic_l2=_get_float(logistic, "l2", 0.0, "config.logistic"),
        logistic_max_iter=_get_int(logistic, "max_iter", 10_000, "config.logistic", minimum=1),
        logistic_grad_tol=_get_float(logistic, "grad_tol", 1e-8, "config.logistic"),
    )


def resolved_propensity(cfg: PropensityRun) -> dict:
    return {
        "version": CONFIG_VERSION,
        "experiment": "propensity",
        "seed": cfg.seed,
        "dataset": {"n_pairs": cfg.n_pairs, "jitter_sigma": cfg.jitter_sigma},
        "methods": list(cfg.methods),
        "test_fraction": cfg.test_fraction,
        "include_outcome": cfg.include_outcome,
        "query_arm": cfg.query_arm,
        "threshold": cfg.threshold,
        "net": {"epochs": cfg.net_epochs, "batch_size": cfg.net_batch_size},
        "logistic": {
            "l2": cfg.logistic_l2,
            "max_iter": cfg.logistic_max_iter,
            "grad_tol": cfg.logistic_grad_tol,
        },
    }


@dataclass(frozen=True)
class GradcheckRun:
    seed: int = 0
    count: int = 24
    step: float = 1e-5
    tolerance: float = 1e-4
    corrupt: bool = False


def parse_gradcheck(doc, seed_override: int | None = None) -> GradcheckRun:
    doc = _require_mapping(doc, "config")
    _check_header(doc, "gradcheck")
    _reject_unknown(
        doc, ("version", "experiment", "seed", "count", "step", "tolerance", "corrupt"), "config"
    )
    seed = _get_int(doc, "seed", 0, "config")
    if seed_override is not None:
        seed = seed_override
    step = _get_float(doc, "step", 1e-5, "config")
    if step <= 0:
        raise ConfigError(f"config.step must be > 0, got {step}")
    tolerance = _get_float(doc, "tolerance", 1e-4, "config")
    if tolerance <= 0:
        raise ConfigError(f"config.tolerance must be > 0, got {tolerance}")
    return GradcheckRun(
        seed=seed,
        count=_get_int(doc, "count", 24, "config", minimum=1),
        step=step,
        tolerance=tolerance,
        corrupt=_get_bool(doc, "corrupt", False, "config"),
    )


def resolved_gradcheck(cfg: GradcheckRun) -> dict:
    return {
        "version": CONFIG_VERSION,
        "experiment": "gradcheck",
        "seed": cfg.seed,
        "count": cfg.count,
        "step": cfg.step,
        "tolerance": cfg.tolerance,
        "corrupt": cfg.corrupt,
    }


def prepare_out_dir(out_dir, force: bool = False) -> Path:
    """Create the output directory; refuse to reuse a non-empty one without force."""
    path = Path(out_dir)
    if path.exists():
        if not path.is_dir():
            raise ConfigError(f"output path {path} exists and is not a directory")
        if any(path.iterdir()) and not force:
            raise ConfigError(f"output directory {path} is not empty (pass force to overwrite)")
    else:
        path.mkdir(parents=True)
    return path


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_csv_cell(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _csv_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _fit_embedder(method: str, x_train: np.ndarray, cfg: SwissRollRun):
    if method == "raw_knn":
        return fit_identity(x_train)
    if method == "pca":
        return fit_pca(x_train, cfg.embed_dim)
    if method == "lle":
        return fit_lle(x_train, cfg.embed_dim, k_neighbors=cfg.lle_neighbors, reg=cfg.lle_reg)
    if method == "autoencoder":
        train_cfg = TrainConfig(
            epochs=cfg.ae_epochs,
            batch_size=cfg.ae_batch_size,
            seed=cfg.seed + TRAIN_SEED_OFFSET,
        )
        return fit_autoencoder(x_train, cfg.embed_dim, train_cfg=train_cfg, hidden=cfg.ae_hidden)
    raise ValueError(f"unknown method {method!r}")


def run_swissroll(cfg: SwissRollRun, out_dir, force: bool = False) -> list:
    """Embed, match and score each method; write reports and plot data.

    In twin mode the fit and the matching pool are the whole dataset (a
    split could strand a unit's clone outside the pool, and the mode
    exists to verify exact recovery).
    """
    out = prepare_out_dir(out_dir, force)
    with _stage("dataset"):
        ds = gen_swiss_roll(cfg.dataset)
        if cfg.twin_mode:
            ds = duplicate_twins(ds)
    if cfg.twin_mode:
        train_idx = np.arange(ds.n_units)
        test_mask = np.ones(ds.n_units, dtype=bool)
        split_label = np.full(ds.n_units, "all", dtype=object)
    else:
        with _stage("split"):
            train_idx, test_idx = train_test_split(
                ds.n_units, cfg.test_fraction, cfg.seed + SPLIT_SEED_OFFSET
            )
            test_mask = np.zeros(ds.n_units, dtype=bool)
            test_mask[test_idx] = True
            split_label = np.where(test_mask, "test", "train")

    reports = []
    for method in cfg.methods:
        with _stage(f"fit:{method}"):
            embedder = _fit_embedder(method, ds.x[train_idx], cfg)
        with _stage(f"embed:{method}"):
            z = embedder.transform(ds.x)
        with _stage(f"match:{method}"):
            if cfg.twin_mode:
                est = estimate_effects(z, ds.w, ds.y_obs, k=cfg.k_matches)
            else:
                est = estimate_effects_pooled(
                    z[test_idx],
                    ds.w[test_idx],
                    ds.y_obs[test_idx],
                    z[train_idx],
                    ds.w[train_idx],
                    ds.y_obs[train_idx],
                    k=cfg.k_matches,
                )
        with _stage(f"report:{method}"):
            reports.append(ite_error(est, ds.truth, test_mask, method=method, seed=cfg.seed))
        with _stage(f"write:{method}"):
            header = ["index", "split", "group", "w"] + [f"z{j+1}" for j in range(z.shape[1])]
            rows = [
                [i, split_label[i], int(ds.truth.group[i]), int(ds.w[i])] + [float(v) for v in z[i]]
                for i in range(ds.n_units)
            ]
            _write_csv(out / f"embedding_{method}.csv", header, rows)

    with _stage("write"):
        _write_json(
            out / "reports.json",
            {
                "experiment": "swissroll",
                "seed": cfg.seed,
                "reports": [report_to_dict(r) for r in reports],
            },
        )
        _write_csv(
            out / "comparison.csv",
            ["method", "mean_abs_ite_error", "ate_error", "n_test", "seed"],
            [
                [r.method, r.mean_abs_ite_error, r.ate_error, r.n_test, r.seed]
                for r in reports
            ],
        )
        _write_json(out / "resolved_config.json", resolved_swissroll(cfg))
    return reports


def run_propensity(cfg: PropensityRun, out_dir, force: bool = False) -> list:
    """Score with each model, match on scores, compare against pair truth."""
    out = prepare_out_dir(out_dir, force)
    with _stage("dataset"):
        ds = gen_propensity_pairs(cfg.n_pairs, cfg.jitter_sigma, seed=cfg.seed)
    with _stage("features"):
        if cfg.include_outcome:
            features = np.column_stack([ds.x, ds.y_obs])
        else:
            features = ds.x

    fit_cfg = PropensityFitConfig(
        test_fraction=cfg.test_fraction,
        seed=cfg.seed,
        epochs=cfg.net_epochs,
        batch_size=cfg.net_batch_size,
        l2=cfg.logistic_l2,
        max_iter=cfg.logistic_max_iter,
        grad_tol=cfg.logistic_grad_tol,
    )

    reports = []
    for method in cfg.methods:
        with _stage(f"fit:{method}"):
            fit_result = fit_propensity(method, features, ds.w, fit_cfg)
        with _stage(f"score:{method}"):
            scores = fit_result.model.predict(features)
        with _stage(f"match:{method}"):
            matches = propensity_match(scores, ds.w, query_arm=cfg.query_arm)
        with _stage(f"report:{method}"):
            idx = fit_result.test_indices
            reports.append(
                misassignment_report(
                    matches,
                    ds.truth.pair_index,
                    threshold_labels(scores[idx], cfg.threshold),
                    ds.w[idx],
                    method=method,
                    seed=cfg.seed,
                )
            )
        with _stage(f"write:{method}"):
            pair_index = ds.truth.pair_index
            rows = []
            for m in matches:
                qi = m.query_index
                mi = int(m.neighbor_indices[0])
                rows.append(
                    [
                        qi,
                        float(scores[qi]),
                        float(ds.x[qi, 0]),
                        float(ds.x[qi, 1]),
                        float(ds.y_obs[qi]),
                        mi,
                        float(scores[mi]),
                        int(pair_index[qi]),
                    ]
                )
            _write_csv(
                out / f"matched_pairs_{method}.csv",
                ["query_index", "score", "x1", "x2", "y_obs", "matched_index", "matched_score", "pair_index"],
                rows,
            )

    with _stage("write"):
        _write_json(
            out / "reports.json",
            {
                "experiment": "propensity",
                "seed": cfg.seed,
                "reports": [report_to_dict(r) for r in reports],
                "reference": {
                    name: dict(zip(PROPENSITY_TABLE_COLUMNS, values))
                    for name, values in REFERENCE_MISASSIGNMENT.items()
                },
            },
        )
        _write_csv(
            out / "comparison.csv",
            ["method", *PROPENSITY_TABLE_COLUMNS],
            [
                [
                    r.method,
                    r.mean_abs_misassignment_error_pct,
                    r.misassignment_rate_pct,
                    r.accuracy_pct,
                ]
                for r in reports
            ],
        )
        _write_json(out / "resolved_config.json", resolved_propensity(cfg))
    return reports


def run_gradcheck(cfg: GradcheckRun, out_dir, force: bool = False):
    """Finite-difference gradient audit over the documented layer-spec grid.

    Returns (case results, all_pass). The corrupt flag is the negative
    control: it perturbs one analytic gradient entry so the audit must fail.
    """
    out = prepare_out_dir(out_dir, force)
    with _stage("grid"):
        cases = default_grid(count=cfg.count, seed=cfg.seed)
    results = []
    with _stage("gradcheck"):
        for case in cases:
            err = run_case(case, step=cfg.step, corrupt=cfg.corrupt)
            results.append(
                {
                    "name": case.name,
                    "max_relative_error": float(err),
                    "pass": bool(err < cfg.tolerance),
                }
            )
    all_pass = all(r["pass"] for r in results)
    with _stage("write"):
        _write_json(
            out / "reports.json",
            {
                "experiment": "gradcheck",
                "seed": cfg.seed,
                "tolerance": cfg.tolerance,
                "all_pass": all_pass,
                "cases": results,
            },
        )
        _write_csv(
            out / "comparison.csv",
            ["name", "max_relative_error", "pass"],
            [[r["name"], r["max_relative_error"], r["pass"]] for r in results],
        )
        _write_json(out / "resolved_config.json", resolved_gradcheck(cfg))
    return results, all_pass
