"""Run every bundled preset (or a chosen subset) into runs/<preset>/.

    python scripts/run_presets.py                 # all presets
    python scripts/run_presets.py fig5_markovian  # one preset
"""
import argparse
import sys
import time
from pathlib import Path

from sigman.cli import run_scenario
from sigman.config import PRESETS, preset_config


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("presets", nargs="*", default=sorted(PRESETS))
    ap.add_argument("--out", default="runs")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args(argv)

    worst = 0
    for name in args.presets:
        t0 = time.perf_counter()
        print(f"== {name}", flush=True)
        code = run_scenario(preset_config(name, workers=args.workers, master_seed=args.seed), Path(args.out) / name)
        print(f"   exit {code}, {time.perf_counter() - t0:.1f}s", flush=True)
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
