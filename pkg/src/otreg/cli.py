"""Command-line runner: ``otreg <experiment> [options]``.

Config files are flat ``key = value`` text. Values may be numbers,
``true``/``false``, quoted strings or comma-separated lists of numbers;
``#`` starts a comment. Keys are the experiment parameters listed by
``otreg <experiment> --show-defaults``, plus the optional ``seed``.

Exit status is 0 when every check passes, 1 on any violation and 2 on a
configuration or solver error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .experiments import DEFAULTS, ExperimentConfig, run_experiment
from .lab import CSV_HEADER

EXIT_OK, EXIT_VIOLATION, EXIT_ERROR = 0, 1, 2


class ConfigError(ValueError):
    pass


def _parse_scalar(text: str):
    t = text.strip()
    if len(t) >= 2 and t[0] == t[-1] and t[0] in "\"'":
        return t[1:-1]
    low = t.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        raise ConfigError(f"cannot parse value {text!r}") from None


def parse_value(text: str):
    t = text.strip()
    if not t:
        raise ConfigError("empty value")
    if t[0] not in "\"'" and "," in t:
        return tuple(_parse_scalar(p) for p in t.split(",") if p.strip())
    return _parse_scalar(t)


def parse_config(text: str) -> dict:
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key.replace("_", "").isalnum():
            raise ConfigError(f"line {n}: bad key {key!r}")
        if key in out:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        out[key] = parse_value(val)
    return out


def build_config(experiment: str, file_params: dict, *, seed=None, eps_ladder=None, tol=None, out_dir="out") -> ExperimentConfig:
    params = dict(file_params)
    file_seed = params.pop("seed", 0)
    if eps_ladder is not None:
        if "eps_ladder" not in DEFAULTS[experiment]:
            raise ConfigError(f"{experiment} has no epsilon ladder")
        params["eps_ladder"] = eps_ladder
    if tol is not None:
        params["tol"] = tol
    s = file_seed if seed is None else seed
    if not isinstance(s, int):
        raise ConfigError("seed must be an integer")
    return ExperimentConfig(experiment, params, seed=s, out_dir=str(out_dir))


def write_reports(cfg: ExperimentConfig, reports, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "experiment": cfg.experiment,
        "config_hash": cfg.digest(),
        "config": cfg.canonical(),
        "passed": all(r.passed for r in reports),
        "checks": [r.to_dict() for r in reports],
    }
    with open(out / "report.json", "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in reports:
            w.writerow(r.csv_row())


def _ladder(text: str):
    try:
        vals = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad epsilon ladder {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty epsilon ladder")
    return vals


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="otreg", description="Run a named regularity experiment.")
    p.add_argument("experiment", help="one of: " + ", ".join(sorted(DEFAULTS)))
    p.add_argument("--config", type=Path, help="flat key = value parameter file")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    p.add_argument("--seed", type=int)
    p.add_argument("--eps-ladder", type=_ladder, help="comma-separated epsilons, e.g. 0.5,0.1,0.05")
    p.add_argument("--tol", type=float, help="override the base tolerance")
    p.add_argument("--show-defaults", action="store_true", help="print default parameters and exit")
    return p


def run(experiment: str, config: ExperimentConfig | None = None, out_dir=None) -> int:
    """Run one experiment, write its report files and return the exit status."""
    if experiment not in DEFAULTS:
        return EXIT_ERROR
    cfg = config or ExperimentConfig(experiment)
    out = Path(cfg.out_dir if out_dir is None else out_dir)
    reports = run_experiment(cfg, out)
    write_reports(cfg, reports, out)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VIOLATION


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    if args.experiment not in DEFAULTS:
        parser.print_usage(sys.stderr)
        print(f"otreg: unknown experiment {args.experiment!r}", file=sys.stderr)
        return EXIT_ERROR
    if args.show_defaults:
        for k, v in DEFAULTS[args.experiment].items():
            val = ",".join(str(x) for x in v) if isinstance(v, tuple) else v
            print(f"{k} = {val}")
        return EXIT_OK
    try:
        file_params = parse_config(args.config.read_text()) if args.config else {}
        cfg = build_config(
            args.experiment, file_params, seed=args.seed, eps_ladder=args.eps_ladder, tol=args.tol, out_dir=args.out
        )
    except (OSError, ValueError) as exc:
        print(f"otreg: configuration error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    try:
        status = run(args.experiment, cfg)
    except (ArithmeticError, ValueError, RuntimeError, MemoryError) as exc:
        print(f"otreg: {args.experiment} failed: {exc}", file=sys.stderr)
        return EXIT_ERROR
    for line in Path(cfg.out_dir, "summary.csv").read_text().splitlines()[1:]:
        print(line)
    return status


if __name__ == "__main__":
    sys.exit(main())
