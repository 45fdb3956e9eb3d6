"""Command-line interface: ``vsbt generate | fit | report | experiment1 | experiment2``."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .estimator import VSBTSegmenter, state_from_results
from .experiments import SINE_DEFAULTS, run_experiment1, run_experiment2
from .inference import DivergenceError
from .model import (
    Hyperparameters,
    experiment1_spec,
    generate_piecewise_ar,
    generate_sine_plus_noise,
)
from .report import SchemaError, build_report, emit_report, read_results, write_json

logger = logging.getLogger("vsbt")

EXIT_OK = 0
EXIT_MAX_SWEEPS = 2
EXIT_INPUT = 3
EXIT_NUMERICAL = 4

OUTPUT_ENV = "VSBT_OUTPUT_DIR"

# scalar settings a JSON config or flags may set, with their defaults
DEFAULTS = {
    "ar_order": 1,
    "d_max": 5,
    "n_models": None,
    "split_prob": 0.5,
    "alpha": 0.5,
    "gate_precision": 1.0,
    "a": 1.0,
    "b": 1.0,
    "lam": 1.0,
    "fixed_splitting": False,
    "max_sweeps": 500,
    "tol": 1e-6,
    "gate_iterations": 1,
    "seed": 0,
}
STRUCTURAL = ("ar_order", "d_max", "n_models")
HYPER_FIELDS = ("gate_mean", "gate_precision", "split_prob", "alpha", "ar_prior")


class InputError(ValueError):
    pass


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "."))


# ---------------------------------------------------------------------------
# series I/O
# ---------------------------------------------------------------------------


def read_series(path) -> np.ndarray:
    """One real value per line; a non-numeric first line is taken as a header."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: no such file")
    values = []
    lines = [ln.strip() for ln in path.read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    for i, line in enumerate(lines):
        try:
            value = float(line)
        except ValueError:
            if i == 0:
                continue
            raise InputError(f"{path}: line {i + 1} is not a single real value: {line!r}") from None
        if not np.isfinite(value):
            raise InputError(f"{path}: line {i + 1} is not finite")
        values.append(value)
    if not values:
        raise InputError(f"{path}: no data")
    return np.array(values)


def write_series(path, x) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("x\n" + "".join(f"{float(v)!r}\n" for v in x))


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError(f"config {path}: expected a JSON object")
    return data


def resolve_settings(config: dict, flags: dict) -> dict:
    """Flags override the JSON config, which overrides the defaults."""
    settings = dict(DEFAULTS)
    for key in DEFAULTS:
        value = config.get(key)
        if value is not None and not isinstance(value, (list, dict)):
            settings[key] = value
    for key, value in flags.items():
        if key in DEFAULTS and value is not None:
            settings[key] = value
    return settings


def resolve_hyper(n: int, config: dict, flags: dict, settings: dict) -> Hyperparameters:
    """Hyperparameters for a series of length ``n``.

    A config holding every per-node array is used as is, with scalar flags
    overwriting the matching arrays.  A flag that changes the tree shape
    or model count discards those arrays in favour of the defaults.
    """
    full = all(k in config for k in HYPER_FIELDS)
    scalar = {k: settings[k] for k in ("split_prob", "alpha", "gate_precision", "a", "b", "lam")}
    if full:
        merged = {k: config[k] for k in HYPER_FIELDS}
        for k in STRUCTURAL:
            merged[k] = config.get(k, settings[k])
        if merged["n_models"] is None:
            merged["n_models"] = 2 ** int(merged["d_max"])
        clash = any(flags.get(k) is not None and flags[k] != merged[k] for k in STRUCTURAL)
        if not clash:
            hyper = Hyperparameters.from_dict(merged)
            return _apply_scalar_flags(hyper, flags)
        logger.warning("structural flags override the config; per-node arrays reset to defaults")
    return Hyperparameters.default(
        n,
        ar_order=int(settings["ar_order"]),
        d_max=int(settings["d_max"]),
        n_models=None if settings["n_models"] is None else int(settings["n_models"]),
        **scalar,
    )


def _apply_scalar_flags(hyper: Hyperparameters, flags: dict) -> Hyperparameters:
    data = hyper.to_dict()
    index = hyper.tree
    if flags.get("split_prob") is not None:
        data["split_prob"] = [flags["split_prob"]] * index.n_inner + [0.0] * index.n_leaves
    if flags.get("alpha") is not None:
        data["alpha"] = [flags["alpha"]] * hyper.n_models
    if flags.get("gate_precision") is not None:
        data["gate_precision"] = np.tile(flags["gate_precision"] * np.eye(2), (index.n_inner, 1, 1)).tolist()
    for key, field in (("a", "a"), ("b", "b")):
        if flags.get(key) is not None:
            data["ar_prior"][field] = flags[key]
    if flags.get("lam") is not None:
        data["ar_prior"]["lambda"] = (flags["lam"] * np.eye(hyper.ar_order + 1)).tolist()
    return Hyperparameters.from_dict(data)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    if args.experiment1:
        x = generate_piecewise_ar(experiment1_spec(args.seed))
        name = f"experiment1_seed{args.seed}.csv"
    else:
        sine = {
            "n": args.n if args.n is not None else SINE_DEFAULTS["n"],
            "amplitude": args.amplitude,
            "period": args.period,
            "noise_std": args.noise_std,
        }
        if sine["n"] < 1 or sine["period"] <= 0 or sine["noise_std"] < 0:
            raise InputError("sine needs n >= 1, period > 0 and noise_std >= 0")
        x = generate_sine_plus_noise(seed=args.seed, **sine)
        name = f"sine_seed{args.seed}.csv"
    out = Path(args.output) if args.output else default_output_dir() / name
    write_series(out, x)
    print(f"wrote {len(x)} values to {out} (seed {args.seed})")
    return EXIT_OK


_FIT_FLAGS = tuple(DEFAULTS)


def cmd_fit(args) -> int:
    x = read_series(args.input)
    config = load_config(args.config)
    flags = {k: getattr(args, k) for k in _FIT_FLAGS}
    settings = resolve_settings(config, flags)
    d_max = int(settings["d_max"])
    if not settings["fixed_splitting"] and x.size < 2**d_max:
        raise InputError(f"series has {x.size} points; d_max={d_max} needs at least {2**d_max}")
    try:
        hyper = resolve_hyper(x.size, config, flags, settings)
    except (KeyError, TypeError, np.linalg.LinAlgError) as exc:
        raise InputError(f"config {args.config}: malformed hyperparameters ({exc})") from exc
    est = VSBTSegmenter(
        ar_order=hyper.ar_order,
        d_max=hyper.d_max,
        n_models=hyper.n_models,
        fixed_splitting=bool(settings["fixed_splitting"]),
        max_sweeps=int(settings["max_sweeps"]),
        tol=float(settings["tol"]),
        gate_iterations=int(settings["gate_iterations"]),
    )
    est.fit(x, hyper=hyper)
    manifest = {
        "command": "fit",
        "input": Path(args.input).name,
        "input_sha256": _sha256(args.input),
        "config": None if args.config is None else Path(args.config).name,
        "settings": settings,
        "seed": settings["seed"],
        "version": __version__,
    }
    out = Path(args.output) if args.output else default_output_dir() / "results.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_json(out, est.results(manifest))
    if args.report_dir:
        emit_report(est.report_, x, args.report_dir)
    status = "converged" if est.converged_ else "stopped at max_sweeps"
    print(
        f"{status} after {len(est.trace_)} sweeps; elbo {est.trace_[-1].elbo:.6f}; "
        f"{est.report_.map_tree.n_internal} internal nodes; wrote {out}"
    )
    return EXIT_OK if est.converged_ else EXIT_MAX_SWEEPS


def cmd_report(args) -> int:
    try:
        data = read_results(args.results)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"{args.results}: {exc}") from exc
    try:
        state = state_from_results(data)
        x = np.array(data["data"]["x"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{args.results}: malformed results ({exc})") from exc
    report = build_report(state)
    out_dir = Path(args.out_dir) if args.out_dir else default_output_dir()
    paths = emit_report(report, x, out_dir, args.stem, args.title or "")
    print(f"wrote {paths['csv']} and {paths['svg']}")
    return EXIT_OK


def _experiment_dir(args, name) -> Path:
    return Path(args.out) if args.out else default_output_dir() / name


def cmd_experiment1(args) -> int:
    summary = run_experiment1(range(args.seeds), _experiment_dir(args, "experiment1"), args.max_sweeps)
    print(
        f"VSBT split recovery in {summary['vsbt_pass_fraction']:.0%} of runs; "
        f"fixed-split tree deeper in {summary['fsbt_deeper_fraction']:.0%}"
    )
    return EXIT_OK


def cmd_experiment2(args) -> int:
    sine = {"amplitude": args.amplitude, "period": args.period, "noise_std": args.noise_std}
    if args.n is not None:
        sine["n"] = args.n
    summary = run_experiment2(
        range(args.seeds), _experiment_dir(args, "experiment2"), args.max_sweeps, sine
    )
    print(f"change-probability checks pass in {summary['pass_fraction']:.0%} of runs")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_sine_flags(p):
    p.add_argument("--n", type=int, default=None, help="series length (default 100)")
    p.add_argument("--amplitude", type=float, default=SINE_DEFAULTS["amplitude"])
    p.add_argument("--period", type=float, default=SINE_DEFAULTS["period"])
    p.add_argument("--noise-std", type=float, default=SINE_DEFAULTS["noise_std"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vsbt", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic series as CSV")
    kind = gen.add_mutually_exclusive_group(required=True)
    kind.add_argument("--experiment1", action="store_true", help="three-regime AR(1), n=75")
    kind.add_argument("--sine", action="store_true", help="sine plus Gaussian noise")
    _add_sine_flags(gen)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("-o", "--output", help="CSV path")
    gen.set_defaults(func=cmd_generate)

    fit = sub.add_parser("fit", help="fit a series and write results JSON")
    fit.add_argument("input", help="CSV series")
    fit.add_argument("--config", help="JSON hyperparameters/settings")
    fit.add_argument("-o", "--output", help="results JSON path")
    fit.add_argument("--report-dir", help="also write CSV and SVG reports here")
    fit.add_argument("--ar-order", type=int)
    fit.add_argument("--d-max", type=int)
    fit.add_argument("--n-models", type=int)
    fit.add_argument("--split-prob", type=float)
    fit.add_argument("--alpha", type=float)
    fit.add_argument("--gate-precision", type=float)
    fit.add_argument("--a", type=float)
    fit.add_argument("--b", type=float)
    fit.add_argument("--lam", type=float)
    fit.add_argument("--fixed-splitting", action="store_true", default=None)
    fit.add_argument("--max-sweeps", type=int)
    fit.add_argument("--tol", type=float)
    fit.add_argument("--gate-iterations", type=int)
    fit.add_argument("--seed", type=int)
    fit.set_defaults(func=cmd_fit)

    rep = sub.add_parser("report", help="CSV and SVG from a results JSON")
    rep.add_argument("results")
    rep.add_argument("--out-dir")
    rep.add_argument("--stem", default="segmentation")
    rep.add_argument("--title")
    rep.set_defaults(func=cmd_report)

    for name, func in (("experiment1", cmd_experiment1), ("experiment2", cmd_experiment2)):
        exp = sub.add_parser(name, help=f"run synthetic {name}")
        exp.add_argument("--seeds", type=int, default=10)
        exp.add_argument("--out")
        exp.add_argument("--max-sweeps", type=int, default=500)
        if name == "experiment2":
            _add_sine_flags(exp)
        exp.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (DivergenceError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InputError, SchemaError, ValueError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
