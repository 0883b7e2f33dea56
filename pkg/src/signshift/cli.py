"""Command-line interface: ``signshift classify|sweep|oracle-solve|check-complementing``."""

from __future__ import annotations

import argparse
import json
import sys

from .complementing import check_interface
from .errors import SignShiftError
from .lab import detect_resonance, emit_report, load_scenario, run_sweep, verdict_dict
from .modal import modal_solution
from .reflectmap import classify


def _dump(obj) -> None:
    json.dump(obj, sys.stdout, sort_keys=True, indent=2)
    sys.stdout.write("\n")


def _classify(args) -> int:
    scn = load_scenario(args.config)
    _dump({"scenario": scn.name, "classification": classify(scn).to_dict()})
    return 0


def _sweep(args) -> int:
    scn = load_scenario(args.config)
    rep = run_sweep(scn, keep_fields=args.fields)
    if args.out:
        emit_report(rep, args.out, fields=args.fields)
    _dump(verdict_dict(rep))
    return 0


def _oracle(args) -> int:
    scn = load_scenario(args.config)
    lay = scn.layered_medium()
    mf = modal_solution(lay, scn.source, args.delta, scn.n_modes_modal, args.cells)
    if args.out:
        mf.write_polar_csv(args.out, args.n_r, args.n_theta)
    _dump({
        "scenario": scn.name,
        "delta": args.delta,
        "pivot_indicator": mf.pivot_indicator,
        "mode_tail": mf.tail,
        "region_l2": {r.name: mf.l2_annulus(r.r_min, r.r_max) for r in scn.regions},
    })
    return 0


def _check(args) -> int:
    scn = load_scenario(args.config)
    m = scn.medium
    rep = check_interface(scn.geometry, lambda x: m.A_plus(x)[0], lambda x: m.A_minus(x)[0], args.samples)
    out = rep.to_dict()
    if not args.verbose:
        out.pop("samples", None)
    _dump(out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="signshift", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("classify", help="classify a scenario")
    p.add_argument("config", help="scenario JSON path or bundled fixture name")
    p.set_defaults(func=_classify)
    p = sub.add_parser("sweep", help="run the absorption sweep")
    p.add_argument("config")
    p.add_argument("--out", help="directory for sweep.csv and verdict.json")
    p.add_argument("--fields", action="store_true", help="also write one field CSV per absorption value")
    p.set_defaults(func=_sweep)
    p = sub.add_parser("oracle-solve", help="solve a radially layered scenario with the modal solver")
    p.add_argument("config")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--cells", type=int, default=4096, help="radial cells per layer")
    p.add_argument("--out", help="CSV path for the field on a polar grid (r, theta, re, im)")
    p.add_argument("--n-r", type=int, default=200, help="radii in the CSV grid")
    p.add_argument("--n-theta", type=int, default=64, help="angles in the CSV grid")
    p.set_defaults(func=_oracle)
    p = sub.add_parser("check-complementing", help="check the complementing condition along the interface")
    p.add_argument("config")
    p.add_argument("--samples", type=int, default=32)
    p.add_argument("--verbose", action="store_true", help="include per-point reports")
    p.set_defaults(func=_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SignShiftError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
