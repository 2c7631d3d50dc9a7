"""
Command-line interface: ``incoherence-lab {check, region, verify, sample}``.

Exit codes: 0 when the condition or suite holds, 1 when it is falsified, 2 on
usage or input errors.  Every run writes a JSON manifest, also on failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from datetime import datetime, timezone

from . import __version__
from .covariance import CovarianceError, ParamClassError, SupportError, parse_support, read_matrix_csv
from .fileio import atomic_write_text, rows_to_csv
from .incoherence import (IncoherenceReport, PreconditionError, ScanBudgetError, SingularBlockError, _jsonable,
                          lasso_incoherence, mri_check, pairwise_incoherence, pwi_mri_threshold, rip_constant)

EXIT_OK, EXIT_FALSIFIED, EXIT_INPUT = 0, 1, 2
INPUT_ERRORS = (CovarianceError, SupportError, ParamClassError, PreconditionError, SingularBlockError,
                ScanBudgetError, ValueError, OSError)


class RunManifest:
    def __init__(self, command: str, parameters: dict, seed=None):
        self.data = {
            "command": command,
            "parameters": parameters,
            "seed": seed,
            "tool_version": __version__,
            "start": datetime.now(timezone.utc).isoformat(),
            "end": None,
            "outputs": [],
            "exit_code": None,
            "error": None,
        }

    def add(self, *paths):
        self.data["outputs"].extend(str(p) for p in paths)

    def finish(self, path, code: int, error: str | None = None):
        self.data["end"] = datetime.now(timezone.utc).isoformat()
        self.data["exit_code"] = code
        self.data["error"] = error
        atomic_write_text(path, json.dumps(_jsonable(self.data), indent=2) + "\n")


def _spread(text: str) -> float:
    t = text.strip().lower()
    if t in ("inf", "infinity"):
        return math.inf
    v = float(t)
    if not v >= 1:
        raise argparse.ArgumentTypeError(f"R must be >= 1 or 'inf', got {text!r}")
    return v


def _int_list(text: str) -> list:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _grid(text: str) -> int:
    t = text.lower().split("x")
    try:
        vals = [int(v) for v in t]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    if len(set(vals)) != 1 or vals[0] < 2:
        raise argparse.ArgumentTypeError("grid must be N or NxN with N >= 2")
    return vals[0]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="incoherence-lab", description=__doc__.split("\n\n")[0].strip())
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def manifest_opt(p):
        p.add_argument("--manifest", help="where to write the run manifest (JSON)")

    c = sub.add_parser("check", help="evaluate one incoherence condition on a covariance CSV")
    c.add_argument("matrix_csv")
    c.add_argument("--support", required=True, help='zero-based, e.g. "0,2,5" or "0..3"')
    c.add_argument("--condition", default="mri", help="mri, lai, pwi or rip:k")
    c.add_argument("--rho", type=float, default=1.0)
    c.add_argument("--R", dest="spread", type=_spread, default=1.0)
    c.add_argument("--delta", type=float, default=0.0)
    c.add_argument("--rip-threshold", type=float, default=1.0 / 3.0)
    manifest_opt(c)

    r = sub.add_parser("region", help="(mu, eta) region table for the block example")
    r.add_argument("--r", type=int, default=2)
    r.add_argument("--R", dest="spread", type=_spread, default=1.0)
    r.add_argument("--grid", type=_grid, default=50)
    r.add_argument("--out", required=True)
    manifest_opt(r)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite", choices=("theorem1", "lemmas", "props", "conjecture1"))
    v.add_argument("--instances", type=int)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", help="also write the JSON summary here")
    manifest_opt(v)

    s = sub.add_parser("sample", help="finite-sample phase-transition sweep")
    s.add_argument("--p", type=int, required=True)
    s.add_argument("--s", type=_int_list, required=True, help="support sizes, comma separated")
    s.add_argument("--n-grid", type=_int_list, help="sample sizes, comma separated (default: C s log p multiples)")
    s.add_argument("--sigma", type=float, default=1.0, help="noise standard deviation")
    s.add_argument("--rho", type=float, default=1.0)
    s.add_argument("--R", dest="spread", type=_spread, default=1.0)
    s.add_argument("--delta", type=float, default=0.0)
    s.add_argument("--replicates", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--family", default="identity", help='"identity" or "block:mu,eta,r"')
    s.add_argument("--out", required=True)
    manifest_opt(s)
    return ap


# --------------------------------------------------------------------------
# commands; each returns an exit code and records outputs on the manifest
# --------------------------------------------------------------------------

def cmd_check(args, manifest: RunManifest) -> int:
    sigma = read_matrix_csv(args.matrix_csv)
    supp = parse_support(args.support, sigma.p)
    if not args.rho > 0:
        raise ValueError("rho must be positive")
    if args.delta < 0:
        raise ValueError("delta must be non-negative")
    cond = args.condition.strip().lower()
    d = args.delta / args.rho
    if cond == "mri":
        report = mri_check(sigma, supp, args.spread, d)
    elif cond == "lai":
        value = lasso_incoherence(sigma, supp)
        report = IncoherenceReport("lai", value <= 1 - args.delta, (), None, args.delta, None, value)
    elif cond == "pwi":
        value = pairwise_incoherence(sigma)
        thr = 0.0 if math.isinf(args.spread) else pwi_mri_threshold(supp.s, args.spread, d)
        report = IncoherenceReport("pwi", value < thr, (), None, d, args.spread, value)
    elif cond.startswith("rip:"):
        order = int(cond.split(":", 1)[1])
        value = rip_constant(sigma, order)
        report = IncoherenceReport(f"rip:{order}", value < args.rip_threshold, (), None, 0.0, None, value)
    else:
        raise ValueError(f"unknown condition {args.condition!r}")
    print(report.to_json(sort_keys=True))
    return EXIT_OK if report.holds else EXIT_FALSIFIED


def cmd_region(args, manifest: RunManifest) -> int:
    from .region import REGION_COLUMNS, default_axes, region_table

    if args.r < 2:
        raise ValueError("r must be >= 2")
    mu, eta = default_axes(args.r, args.grid)
    rows = region_table(args.r, args.spread, mu, eta)
    manifest.add(atomic_write_text(args.out, rows_to_csv(rows, REGION_COLUMNS)))
    mismatched = sum(1 for row in rows if not row["boundary"] and row["mri_closed"] != row["mri_direct"])
    summary = {"cells": len(rows), "mri_closed_vs_direct_mismatches": mismatched,
               "boundary_cells": sum(row["boundary"] for row in rows),
               "psd_failures": sum(not row["psd_ok"] for row in rows), "out": args.out}
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK if mismatched == 0 else EXIT_FALSIFIED


def cmd_verify(args, manifest: RunManifest) -> int:
    from .suites import holds, run_suite

    summary = run_suite(args.suite, args.instances, args.seed)
    text = json.dumps(summary, sort_keys=True)
    if args.out:
        manifest.add(atomic_write_text(args.out, text + "\n"))
    print(text)
    if not holds(summary):
        print(f"{args.suite}: {summary['counts']['violated']} violation(s); offending instances in the summary",
              file=sys.stderr)
        return EXIT_FALSIFIED
    return EXIT_OK


def cmd_sample(args, manifest: RunManifest) -> int:
    from .sampling import CALIBRATED_C, SampleConfig, calibrated_n, parse_family, phase_transition_sweep, write_table

    if args.p < 2 or any(s < 1 or s >= args.p for s in args.s):
        raise ValueError("need p >= 2 and 1 <= s < p")
    family = parse_family(args.family, args.p)
    config = SampleConfig(1, args.sigma, args.seed, args.replicates)
    n_grid = args.n_grid
    if not n_grid:
        factors = (0.25, 0.5, 0.75, 1.0, 1.5, 2.0)
        n_grid = sorted({calibrated_n(max(args.s), args.p, f * CALIBRATED_C) for f in factors})
    if any(n < 1 for n in n_grid):
        raise ValueError("sample sizes must be positive")
    rows = phase_transition_sweep(family, args.s, n_grid, config, args.rho, args.spread, args.delta)
    meta = {"family": args.family, "p": args.p, "s_values": args.s, "n_grid": n_grid, "sigma_noise": args.sigma,
            "rho": args.rho, "spread": "inf" if math.isinf(args.spread) else args.spread, "delta": args.delta,
            "replicates": args.replicates, "seed": args.seed, "calibrated_C": CALIBRATED_C,
            "replicate_seeding": "numpy default_rng([seed, 0, s, n, replicate])"}
    manifest.add(*write_table(rows, args.out, meta))
    print(json.dumps({"rows": len(rows), "out": args.out}, sort_keys=True))
    return EXIT_OK


COMMANDS = {"check": cmd_check, "region": cmd_region, "verify": cmd_verify, "sample": cmd_sample}


def _manifest_path(args) -> str:
    if args.manifest:
        return args.manifest
    out = getattr(args, "out", None)
    return f"{out}.manifest.json" if out else f"incoherence-lab-{args.command}.manifest.json"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    params = {k: v for k, v in vars(args).items() if k not in ("manifest",)}
    manifest = RunManifest(args.command, params, getattr(args, "seed", None))
    path = _manifest_path(args)
    started = time.perf_counter()
    try:
        code = COMMANDS[args.command](args, manifest)
    except INPUT_ERRORS as exc:
        print(f"incoherence-lab {args.command}: {exc}", file=sys.stderr)
        manifest.data["seconds"] = time.perf_counter() - started
        manifest.finish(path, EXIT_INPUT, f"{type(exc).__name__}: {exc}")
        return EXIT_INPUT
    except Exception as exc:
        manifest.finish(path, EXIT_INPUT, f"{type(exc).__name__}: {exc}")
        raise
    manifest.data["seconds"] = time.perf_counter() - started
    manifest.finish(path, code)
    return code


if __name__ == "__main__":
    sys.exit(main())
