"""Command line entry point: ``condensity run|ingest|compare|selftest``."""

from __future__ import annotations

import argparse
import json
import sys
import warnings

from .config import load_config
from .errors import ConfigError, IngestionError

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_INGEST, EXIT_INVARIANT = 0, 1, 2, 3, 4


def _cmd_run(args) -> int:
    from .runner import run_scenario

    cfg = load_config(args.config, args.set or ())
    manifest = run_scenario(cfg, args.out)
    out = cfg.output_dir(args.out)
    print(f"{manifest.status}: {len(manifest.artifacts)} artifacts in {out}")
    for name, r in manifest.invariants.items():
        mark = "skip" if r.get("skipped") else ("pass" if r["passed"] else "FAIL")
        print(f"  {mark:4s} {name:20s} value={r['value']} tol={r['tolerance']}")
    if manifest.status == "error":
        print(manifest.error, file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK if manifest.passed else EXIT_INVARIANT


def _cmd_ingest(args) -> int:
    from .runner import ingest_market

    snap = ingest_market(args.csv, args.maturity)
    print(json.dumps({"strikes": int(snap.strikes.size), **snap.report}, indent=2))
    return EXIT_OK


def _cmd_compare(args) -> int:
    from .runner import compare_runs

    tol = {}
    for item in args.tol or ():
        key, val = item.split("=", 1)
        tol[key] = float(val)
    rep = compare_runs(args.a, args.b, rtol=args.rtol, tolerances=tol)
    print(json.dumps(rep.to_dict(), indent=2, default=str))
    return EXIT_OK if rep.empty else EXIT_INVARIANT


def _cmd_selftest(args) -> int:
    from .selftest import run_selftest

    results = run_selftest(quick=not args.full)
    for name, ok, detail in results:
        print(f"{'pass' if ok else 'FAIL'}  {name:28s} {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_INVARIANT


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="condensity", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run a scenario config")
    r.add_argument("config")
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field (dotted path)")
    r.add_argument("--out", help="output directory (beats CONDENSITY_OUT and the config)")
    r.set_defaults(func=_cmd_run)

    i = sub.add_parser("ingest", help="validate a strike,price CSV")
    i.add_argument("csv")
    i.add_argument("--maturity", type=float, default=1.0)
    i.set_defaults(func=_cmd_ingest)

    c = sub.add_parser("compare", help="diff two run manifests")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--rtol", type=float, default=1e-9)
    c.add_argument("--tol", action="append", metavar="FIELD=ABS", help="absolute tolerance for one field")
    c.set_defaults(func=_cmd_compare)

    s = sub.add_parser("selftest", help="run the invariant suite")
    s.add_argument("--full", action="store_true", help="use the full acceptance sizes")
    s.set_defaults(func=_cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IngestionError as exc:
        print(f"ingestion error: {exc}", file=sys.stderr)
        if exc.rows:
            print(f"offending rows: {exc.rows}", file=sys.stderr)
        return EXIT_INGEST


if __name__ == "__main__":
    sys.exit(main())
