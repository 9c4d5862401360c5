"""Run every named experiment at its defaults and print one line per check.

    python scripts/run_all.py [--out DIR] [--seed N] [experiment ...]

Each experiment writes report.json, summary.csv and raw dumps under
DIR/<experiment>. The exit status is the worst experiment status.
"""

import argparse
import sys
import time
from pathlib import Path

from otreg.cli import run
from otreg.experiments import DEFAULTS, ExperimentConfig, run_experiment


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("names", nargs="*", default=sorted(DEFAULTS))
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    worst = 0
    for name in args.names:
        cfg = ExperimentConfig(name, seed=args.seed, out_dir=str(args.out / name))
        t0 = time.perf_counter()
        status = run(name, cfg)
        dt = time.perf_counter() - t0
        print(f"== {name}: exit {status} in {dt:.1f}s")
        for r in run_experiment(cfg) if status else ():
            if not r.passed:
                print(f"   FAIL {r.check}: slack {r.slack:.3g}, tolerance {r.tolerance:.1g}")
        worst = max(worst, status)
    return worst


if __name__ == "__main__":
    sys.exit(main())
