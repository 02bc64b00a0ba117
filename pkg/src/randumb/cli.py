"""Command-line interface: run / sweep / ablate / verify.

Settings resolve in three layers: built-in defaults, then a JSON config
file (keys mirror the flag names), then explicit flags.  The data
directory falls back to the RANDUMB_DATA_DIR environment variable.

Exit codes: 0 success, 2 configuration error, 3 data or file-format
error, 4 numerical error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .classifier import VARIANTS
from .data_io import DESCRIPTORS, load_dataset
from .errors import ConfigurationError, RanDumbError
from .harness import (
    ABLATION_ORDER,
    DEFAULT_MEMORY_CAP_BYTES,
    append_jsonl,
    run_ablation,
    run_on_dataset,
    sweep_embedding,
    sweep_table,
)
from .reference import run_verify
from .streaming import MODE_POOLED, MODES

ENV_DATA_DIR = "RANDUMB_DATA_DIR"

_DEFAULTS = {
    "dataset": None,
    "data_dir": None,
    "variant": "randumb",
    "embed_dim": 25000,
    "gamma": 1.0,
    "ridge": None,
    "seed": 0,
    "augment": None,
    "classes_per_task": 1,
    "estimator_mode": MODE_POOLED,
    "pooled_unbiased": False,
    "eval_every": 0,
    "memory_cap_bytes": DEFAULT_MEMORY_CAP_BYTES,
    "out": None,
    "csv": None,
    "dims": None,
    "variants": None,
}

_KEY_ALIASES = {"lambda": "ridge", "eval_every_k": "eval_every"}


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of settings; explicit flags override")
    p.add_argument("--dataset", choices=sorted(DESCRIPTORS) + ["features"])
    p.add_argument("--data-dir", dest="data_dir")
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--embed-dim", dest="embed_dim", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--lambda", dest="ridge", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--augment", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--classes-per-task", dest="classes_per_task", type=int)
    p.add_argument("--estimator-mode", dest="estimator_mode", choices=MODES)
    p.add_argument(
        "--pooled-unbiased",
        dest="pooled_unbiased",
        action="store_true",
        default=None,
        help="divide the pooled scatter by (n - C) instead of (n - 1)",
    )
    p.add_argument("--eval-every-k", dest="eval_every", type=int)
    p.add_argument("--memory-cap-bytes", dest="memory_cap_bytes", type=int)
    p.add_argument("--out", help="append one JSON line per run to this file")


def _load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config file {path} must hold a JSON object")
    out = {}
    for key, value in raw.items():
        key = key.replace("-", "_")
        key = _KEY_ALIASES.get(key, key)
        if key not in _DEFAULTS:
            raise ConfigurationError(f"config file {path}: unknown setting {key!r}")
        out[key] = value
    return out


def _resolve(args: argparse.Namespace) -> dict:
    """defaults <- config file <- explicit flags, then env fallbacks."""
    settings = dict(_DEFAULTS)
    if getattr(args, "config", None):
        settings.update(_load_config_file(args.config))
    for key in _DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    if settings["data_dir"] is None:
        settings["data_dir"] = os.environ.get(ENV_DATA_DIR, "data")
    return settings


def _parse_int_list(text) -> list[int]:
    if isinstance(text, list):
        return [int(v) for v in text]
    try:
        return [int(part) for part in str(text).split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"expected comma-separated integers, got {text!r}") from exc


def _load_data(settings: dict):
    if not settings["dataset"]:
        raise ConfigurationError("--dataset is required (flag or config file)")
    return load_dataset(settings["dataset"], settings["data_dir"])


def _run_settings(settings: dict) -> dict:
    return dict(
        variant=settings["variant"],
        embed_dim=settings["embed_dim"],
        gamma=settings["gamma"],
        ridge=settings["ridge"],
        seed=settings["seed"],
        augment=settings["augment"],
        classes_per_task=settings["classes_per_task"],
        estimator_mode=settings["estimator_mode"],
        pooled_unbiased=settings["pooled_unbiased"],
        eval_every=settings["eval_every"],
        memory_cap_bytes=settings["memory_cap_bytes"],
    )


def _emit(results, settings: dict) -> None:
    for result in results:
        line = json.dumps(result.to_json())
        if settings["out"]:
            append_jsonl(result, settings["out"])
        else:
            print(line)
    if settings["out"]:
        for result in results:
            print(
                f"{result.config['variant']} E={result.config['state_dim']} "
                f"average_accuracy={result.average_accuracy:.4f} "
                f"-> {settings['out']}"
            )


def _cmd_run(args) -> int:
    settings = _resolve(args)
    data = _load_data(settings)
    result = run_on_dataset(data, **_run_settings(settings))
    _emit([result], settings)
    return 0


def _cmd_sweep(args) -> int:
    settings = _resolve(args)
    if args.dims is not None:
        settings["dims"] = args.dims
    if not settings["dims"]:
        raise ConfigurationError("--dims is required for sweep")
    dims = _parse_int_list(settings["dims"])
    data = _load_data(settings)
    run_kwargs = _run_settings(settings)
    run_kwargs.pop("embed_dim")
    results = sweep_embedding(dims, data, **run_kwargs)
    _emit(results, settings)
    _write_csv(results, settings)
    return 0


def _cmd_ablate(args) -> int:
    settings = _resolve(args)
    if args.variants is not None:
        settings["variants"] = args.variants
    variants = (
        tuple(str(settings["variants"]).split(","))
        if settings["variants"]
        else ABLATION_ORDER
    )
    for v in variants:
        if v not in VARIANTS:
            raise ConfigurationError(f"unknown variant {v!r} in --variants")
    data = _load_data(settings)
    run_kwargs = _run_settings(settings)
    run_kwargs.pop("variant")
    results = run_ablation(data, variants=variants, **run_kwargs)
    _emit(results, settings)
    _write_csv(results, settings)
    return 0


def _write_csv(results, settings: dict) -> None:
    if settings["csv"]:
        with open(settings["csv"], "w", encoding="utf-8") as fh:
            fh.write(sweep_table(results))


def _cmd_verify(args) -> int:
    seed = args.seed if args.seed is not None else 0
    reports = run_verify(seed=seed)
    lines = [json.dumps(r.to_json()) for r in reports]
    if args.out:
        with open(args.out, "a", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return 0 if all(r.passed for r in reports) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="randumb",
        description=(
            "Single-pass streaming classifier benchmark: random feature "
            "embedding, online class statistics, shrunk-covariance "
            "Mahalanobis scoring."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="one benchmark run")
    _add_common_flags(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="one run per embedding size")
    _add_common_flags(p_sweep)
    p_sweep.add_argument("--dims", help="comma-separated embedding sizes, ascending")
    p_sweep.add_argument("--csv", help="also write a CSV table here")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_ablate = sub.add_parser("ablate", help="run several variants on one stream")
    _add_common_flags(p_ablate)
    p_ablate.add_argument(
        "--variants", help=f"comma-separated subset of {','.join(VARIANTS)}"
    )
    p_ablate.add_argument("--csv", help="also write a CSV table here")
    p_ablate.set_defaults(func=_cmd_ablate)

    p_verify = sub.add_parser("verify", help="run the oracle self-checks")
    p_verify.add_argument("--seed", type=int)
    p_verify.add_argument("--out", help="append one JSON line per check to this file")
    p_verify.set_defaults(func=_cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RanDumbError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
