"""Command line: ``rp {sew,lift,dev,perturb,verify,gen}``.

Exit codes: 0 success, 1 a check failed, 2 bad input.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import io
from .perturb import HElement, boxplus, dev, lift
from .scenario import Scenario, generate
from .sewing import sew
from .tensor import DomainError
from .verify import CHECK_NAMES, verify_all, verify_sweep

EXIT_OK, EXIT_CHECK, EXIT_INPUT = 0, 1, 2

log = logging.getLogger("roughpert")


def _h_json(H: HElement) -> dict:
    return HElement(H.functional.as_increments(), H.witness).to_json()


def cmd_sew(a: argparse.Namespace) -> int:
    X = io.load_functional(a.input)
    w = io.load_control(a.control)
    res = sew(X, w, a.theta, a.p, check=not a.no_check)
    io.save_json(res.to_json(), a.out)
    return EXIT_OK


def cmd_lift(a: argparse.Namespace) -> int:
    I = io.load_increment_path(a.input)
    io.save_json(_h_json(lift(I)), a.out)
    return EXIT_OK


def cmd_dev(a: argparse.Namespace) -> int:
    H = io.load_h_element(a.input)
    io.save_json(dev(H).to_json(), a.out)
    return EXIT_OK


def cmd_perturb(a: argparse.Namespace) -> int:
    X = io.load_functional(a.x)
    H = io.load_h_element(a.h)
    control = io.load_control(a.control) if a.control else None
    Y = boxplus(X, H, control, check=a.check)
    io.save_json(Y.to_json(), a.out)
    return EXIT_OK


def _grids(text: str) -> list[int]:
    try:
        grids = [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from exc
    if not grids:
        raise argparse.ArgumentTypeError("empty grid list")
    return grids


def _scenario(path: Optional[str]) -> Scenario:
    if path is None:
        return Scenario()
    obj = io.load_json(path)
    if not isinstance(obj, dict):
        raise io.InputError(f"{path}: a scenario must be a JSON object")
    try:
        return Scenario.from_json(obj)
    except TypeError as exc:
        raise io.InputError(f"{path}: {exc}") from exc


def cmd_verify(a: argparse.Namespace) -> int:
    s = _scenario(a.scenario)
    only = a.checks.split(",") if a.checks else None
    if only and set(only) - set(CHECK_NAMES):
        raise io.InputError(f"unknown checks {sorted(set(only) - set(CHECK_NAMES))}")
    if a.sweep_grids:
        report = verify_sweep(s, a.sweep_grids, only, a.threads)
    else:
        report = verify_all(s, only, a.threads)
    if a.report:
        io.save_json(report.to_json(), a.report)
    if a.markdown or not a.report:
        sys.stdout.write(report.to_markdown())
    if not report.ok:
        log.error("failed checks: %s", ", ".join(report.failures()))
        return EXIT_CHECK
    return EXIT_OK


def cmd_gen(a: argparse.Namespace) -> int:
    s = _scenario(a.scenario)
    g = generate(s)
    out = Path(a.out)
    io.save_json(s.to_json(), out / "scenario.json")
    io.save_json(g.X.to_json(), out / "X.json")
    io.save_json(g.control.to_json(), out / "control.json")
    for k, (I, H) in enumerate(zip(g.increments, g.Hs)):
        io.save_json(I.to_json(), out / f"I{k}.json")
        io.save_json(_h_json(H), out / f"H{k}.json")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rp", description="Perturbations of rough paths on time grids.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sew", help="sew an almost multiplicative functional")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--control", required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-check", action="store_true", help="skip the O(N^3) precondition scan")
    p.set_defaults(fn=cmd_sew)

    p = sub.add_parser("lift", help="lift an increment path to an H-space element")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_lift)

    p = sub.add_parser("dev", help="development of an H-space element")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_dev)

    p = sub.add_parser("perturb", help="X [+] H")
    p.add_argument("--x", required=True)
    p.add_argument("--h", required=True)
    p.add_argument("--control", help="control of X (defaults to the control of H alone)")
    p.add_argument("--check", action="store_true", help="verify the sewing preconditions")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_perturb)

    p = sub.add_parser("verify", help="run the verification suite")
    p.add_argument("--scenario", help="scenario JSON (default scenario if omitted)")
    p.add_argument("--sweep-grids", type=_grids, help="e.g. 32,64,128,256")
    p.add_argument("--report", help="write the JSON report here")
    p.add_argument("--markdown", action="store_true", help="print the markdown report")
    p.add_argument("--checks", help="comma separated subset of checks")
    p.add_argument("--threads", type=int, help="worker count (default RP_THREADS or CPU count)")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("gen", help="write the scenario's X, control, I and H files")
    p.add_argument("--scenario")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return a.fn(a)
    except (io.InputError, DomainError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except RuntimeError as exc:
        log.error("%s", exc)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
