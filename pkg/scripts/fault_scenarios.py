#!/usr/bin/env python3
"""Run each scripted fault scenario on a small network and compare the final
mainchain summary variables to a fault-free run with the same seed."""

import argparse
import json
import sys

from dualchain.committees import FaultScript
from dualchain.config import RunConfig
from dualchain.simulation import run_simulation

LAZY = {i: "lazy" for i in range(5)}

SCENARIOS = {
    "unresponsive-leader": [dict(trigger="unresponsive_leader", epoch=1, slot=3)],
    "invalid-meta": [dict(trigger="invalid_meta", epoch=1, slot=2, assignments={0: "malicious"})],
    "colluding-meta": [dict(trigger="invalid_meta", epoch=1, slot=2, assignments={i: "malicious" for i in range(4)})],
    "invalid-summary": [dict(trigger="invalid_summary", epoch=1, assignments={0: "malicious"})],
    "colluding-summary": [dict(trigger="invalid_summary", epoch=1, assignments={i: "malicious" for i in range(4)})],
    "invalid-sync": [dict(trigger="invalid_sync", epoch=1, assignments={0: "malicious"})],
    "missed-sync": [dict(trigger="missed_sync", epoch=1)],
    "unresponsive-primary": [dict(trigger="behavior", epoch=1, assignments=LAZY)],
    "two-failing": [dict(trigger="behavior", epoch=1, rank=r, assignments=LAZY) for r in (0, 1)],
    "all-failing": [dict(trigger="behavior", epoch=1, rank=r, assignments=LAZY) for r in (0, 1, 2)],
    "rollback": [dict(trigger="rollback", round=22, depth=6)],
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--script", help="extra fault script (JSON list) to run as 'custom'")
    args = ap.parse_args(argv)

    base = RunConfig(contracts=300, run_len_mc_rounds=31, cs=5, kappa=2, nodes=60, seed=args.seed)
    reference = run_simulation(base).metrics.summary_variables_digest
    scenarios = dict(SCENARIOS)
    if args.script:
        with open(args.script) as fh:
            scenarios["custom"] = json.load(fh)
    for name, script in scenarios.items():
        r = run_simulation(base.replace(fault_script=FaultScript.from_list(script)))
        m = r.metrics
        same = m.summary_variables_digest == reference
        syncs = [e["syncKind"] for e in r.epochs]
        print(
            f"{name:22s} converged={same!s:5s} takeovers={m.takeovers} leaderChanges={m.leader_changes} "
            f"failures={m.autorecovery_failures} rejectedSyncs={m.rejected_syncs} syncs={syncs}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
