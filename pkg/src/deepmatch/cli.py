"""Command line runner for the three experiment pipelines.

    deepmatch swissroll  --out runs/sr  [--config cfg.json] [--seed 3] [--force]
    deepmatch propensity --out runs/ps  [--config cfg.json] [--seed 3] [--force]
    deepmatch gradcheck  --out runs/gc  [--config cfg.json] [--seed 3] [--force]

Configs are strict JSON; omitting --config runs the documented defaults.
Exit codes: 0 success, 1 invalid config or arguments, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiments import (
    ConfigError,
    StageError,
    parse_gradcheck,
    parse_propensity,
    parse_swissroll,
    run_gradcheck,
    run_propensity,
    run_swissroll,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2


def _load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {p}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: not valid JSON ({exc})") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deepmatch",
        description="Treatment-effect estimation experiments: embedding-based "
        "matching on the swiss roll and propensity-score matching on jittered pairs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    descriptions = {
        "swissroll": "embed, match and score ITE recovery per method",
        "propensity": "score, match and compare logistic vs the dense classifier",
        "gradcheck": "finite-difference audit of the network gradients",
    }
    for name, desc in descriptions.items():
        s = sub.add_parser(name, help=desc, description=desc)
        s.add_argument("--config", metavar="FILE", default=None,
                       help="JSON config; omit to run the documented defaults")
        s.add_argument("--out", metavar="DIR", required=True, help="output directory")
        s.add_argument("--seed", type=int, default=None, help="override the config seed")
        s.add_argument("--force", action="store_true",
                       help="write into a non-empty output directory")
    return parser


def main(argv=None) -> int:
    # argparse exits 2 on bad arguments; the documented contract reserves
    # 2 for numerical failure, so remap argument errors to the config code.
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        doc = _load_config(args.config)
        if args.command == "swissroll":
            cfg = parse_swissroll(doc, seed_override=args.seed)
            reports = run_swissroll(cfg, args.out, force=args.force)
            for r in reports:
                print(
                    f"swissroll seed={r.seed} {r.method}: "
                    f"mean_abs_ite_error={r.mean_abs_ite_error:.6g} "
                    f"ate_error={r.ate_error:.6g} n_test={r.n_test}"
                )
        elif args.command == "propensity":
            cfg = parse_propensity(doc, seed_override=args.seed)
            reports = run_propensity(cfg, args.out, force=args.force)
            for r in reports:
                print(
                    f"propensity seed={r.seed} {r.method}: "
                    f"error={r.mean_abs_misassignment_error_pct:.2f}% "
                    f"rate={r.misassignment_rate_pct:.2f}% "
                    f"accuracy={r.accuracy_pct:.2f}%"
                )
        else:
            cfg = parse_gradcheck(doc, seed_override=args.seed)
            results, all_pass = run_gradcheck(cfg, args.out, force=args.force)
            worst = max(r["max_relative_error"] for r in results)
            n_ok = sum(1 for r in results if r["pass"])
            print(
                f"gradcheck seed={cfg.seed}: {n_ok}/{len(results)} cases passed "
                f"(worst {worst:.3g}, tolerance {cfg.tolerance:g})"
            )
            if not all_pass:
                print("gradcheck failed", file=sys.stderr)
                return EXIT_NUMERIC
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"wrote {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
