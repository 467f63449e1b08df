"""Command line entry point: run, campaign, analyze, por."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import random
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from dualchain import analysis, por
from dualchain.campaign import PRESETS, Sweep, run_campaign, write_csv
from dualchain.committees import ConfigError
from dualchain.config import load_config

log = logging.getLogger("dualchain")

EXIT_INVARIANT = 3


def _overrides(pairs: Sequence[str]) -> dict[str, str]:
    out = {}
    for p in pairs:
        if "=" not in p:
            raise SystemExit(f"--set expects key=value, got {p!r}")
        k, v = p.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def cmd_run(args: argparse.Namespace) -> int:
    from dualchain.simulation import InvariantViolation, run_simulation

    cfg = load_config(args.config, _overrides(args.set))
    t0 = time.perf_counter()
    try:
        result = run_simulation(cfg)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    log.info("run finished in %.1fs", time.perf_counter() - t0)
    text = result.metrics.to_json()
    print(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(text + "\n")
        (out / "config.json").write_text(json.dumps(cfg.to_dict(), sort_keys=True, indent=2) + "\n")
        (out / "epochs.json").write_text(json.dumps(result.epochs, sort_keys=True, indent=2) + "\n")
        s = result.series
        with (out / "series.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(s))
            w.writerows(zip(*s.values()))
    return 0


def cmd_campaign(args: argparse.Namespace) -> int:
    from dualchain.simulation import InvariantViolation

    sweep = PRESETS.get(args.sweep)
    if sweep is None:
        sweep = Sweep.load(args.sweep)
    base = load_config(args.config, _overrides(args.set))
    try:
        rows = run_campaign(sweep, args.out, args.workers, base)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]))
    w.writeheader()
    w.writerows(rows)
    return 0


def _frac(text: str) -> float:
    return float(Fraction(text))


def cmd_analyze(args: argparse.Namespace) -> int:
    rows = []
    if args.what == "af":
        for n in args.population:
            for m in args.misbehaving:
                for cs in args.cs:
                    for kappa in args.kappa:
                        for th in args.theta_l:
                            model = analysis.FailureModel(n, m, cs, kappa, th)
                            try:
                                exact = analysis.pr_af_generating_function(model)
                            except ValueError as exc:
                                log.warning("skipping %s: %s", model, exc)
                                continue
                            row = {"N": n, "M": m, "cs": cs, "kappa": kappa, "theta_l": th, "prAF": float(exact)}
                            if args.trials:
                                est, se = analysis.monte_carlo_af(model, args.trials, args.seed)
                                row.update(monteCarlo=est, stderr=se)
                            rows.append(row)
    else:
        for p in args.p:
            for g in args.gamma:
                for f in args.failure:
                    try:
                        cs_min: object = analysis.committee_size_bound(_frac(p), _frac(g), float(f))
                    except analysis.UnboundedCommittee:
                        cs_min = "unbounded"
                    rows.append({"p": p, "gamma": g, "F": f, "cs_min": cs_min})
    if args.out:
        write_csv(Path(args.out), rows)
    if rows:
        w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    return 0


def cmd_por(args: argparse.Namespace) -> int:
    rng = random.Random(args.seed)
    keys = por.PorKeys.generate(rng)
    data = rng.randbytes(args.bytes)
    t0 = time.perf_counter()
    pf = por.preprocess(data, args.s, keys, rng)
    t1 = time.perf_counter()
    challenge = por.derive_challenge(rng.randbytes(32), pf.n, args.query)
    proof = por.prove(pf, challenge)
    t2 = time.perf_counter()
    ok = por.verify(keys.v, keys.public_key, pf.tag, challenge, proof)
    t3 = time.perf_counter()
    bad = por.PorProof(proof.sigma, (proof.mus[0] + 1,) + proof.mus[1:], proof.round)
    rejected = not por.verify(keys.v, keys.public_key, pf.tag, challenge, bad)
    report = {
        "blocks": pf.n,
        "sectorsPerBlock": args.s,
        "proofBytes": proof.size_bytes(),
        "preprocessSeconds": round(t1 - t0, 4),
        "proveSeconds": round(t2 - t1, 4),
        "verifySeconds": round(t3 - t2, 4),
        "accepted": ok,
        "tamperRejected": rejected,
    }
    print(json.dumps(report, indent=2))
    return 0 if ok and rejected else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dualchain", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one simulation")
    r.add_argument("--config", help="TOML or JSON config file")
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config field")
    r.add_argument("--out", help="results directory")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("campaign", help="run a sweep")
    c.add_argument("sweep", help=f"preset ({', '.join(PRESETS)}) or sweep file")
    c.add_argument("--config", help="base config file")
    c.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    c.add_argument("--out", default="results")
    c.add_argument("--workers", type=int, default=1)
    c.set_defaults(func=cmd_campaign)

    a = sub.add_parser("analyze", help="failure probability and committee sizing")
    a.add_argument("what", choices=("af", "cs-min"))
    a.add_argument("--population", "-N", type=int, nargs="+", default=[60])
    a.add_argument("--misbehaving", "-M", type=int, nargs="+", default=[20])
    a.add_argument("--cs", type=int, nargs="+", default=[6])
    a.add_argument("--kappa", type=int, nargs="+", default=[1])
    a.add_argument("--theta-l", type=int, nargs="+", default=[2])
    a.add_argument("--trials", type=int, default=0, help="also run Monte Carlo with this many trials")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--p", nargs="+", default=["0.25", "0.30"])
    a.add_argument("--gamma", nargs="+", default=["1/3"])
    a.add_argument("--failure", nargs="+", default=["1e-10", "1e-5", "1e-3"])
    a.add_argument("--out", help="CSV output path")
    a.set_defaults(func=cmd_analyze)

    p = sub.add_parser("por", help="proof-of-retrievability self-test")
    p.add_argument("--bytes", type=int, default=1024)
    p.add_argument("--s", type=int, default=2)
    p.add_argument("--query", type=int, default=por.DEFAULT_QUERY_SIZE)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_por)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
