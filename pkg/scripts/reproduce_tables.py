#!/usr/bin/env python3
"""Run the preset sweeps and write one CSV per family into a results directory.

    python scripts/reproduce_tables.py --out results --workers 4 table3_4 table5
"""

import argparse
import sys
import time

from dualchain.campaign import METRIC_COLUMNS, PRESETS, run_campaign


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("sweeps", nargs="*", default=["table3_4", "table5", "table6"], help=f"any of {', '.join(PRESETS)}")
    ap.add_argument("--out", default="results")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args(argv)

    shown = ("throughputPerMcRound", "mcLatency", "scLatency", "finalityMcRounds")
    for name in args.sweeps:
        sweep = PRESETS[name]
        t0 = time.perf_counter()
        rows = run_campaign(sweep, args.out, args.workers)
        print(f"== {name} ({len(rows)} cells, {time.perf_counter() - t0:.0f}s) -> {args.out}/{name}.csv")
        for row in rows:
            keys = [k for k in row if k not in METRIC_COLUMNS and k not in ("mainBytes", "sideBytes", "prunedBytes")]
            label = " ".join(f"{k}={row[k]}" for k in keys)
            print(f"  {label:60s} " + "  ".join(f"{k}={row[k]:.2f}" for k in shown))
    return 0


if __name__ == "__main__":
    sys.exit(main())
