"""Command-line entry point: ``vqt {sweep,wigner,match-gkp,validate,baselines}``.

Exit codes: 0 ok, 1 configuration error, 2 infeasible points, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from vqt import experiments as ex
from vqt.baselines import tms_ea_baseline
from vqt.capacity import pure_loss_capacity, pure_loss_capacity_constrained
from vqt.fock import NumericError, wigner
from vqt.gkp import InfeasibleError, ScanConfig, gkp_fidelity_match

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 1, 2, 3


def resolve_workers(flag: int | None, config_value: int | None = None) -> int:
    """Flag beats ``VQT_WORKERS`` beats the config file; default is the number of usable cores."""
    if flag is not None:
        return max(1, flag)
    env = os.environ.get("VQT_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ex.ConfigError(f"VQT_WORKERS: not an integer: {env!r}") from None
    if config_value is not None:
        return config_value
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)


def _parse_etas(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ex.ConfigError(f"--eta: cannot parse {text!r} as a comma-separated list") from None


def cmd_sweep(args) -> int:
    cfg = ex.load_config(args.config)
    over = {}
    if args.eta:
        over["etas"] = list(_parse_etas(args.eta))
    if args.seed is not None:
        over["seed"] = args.seed
    if args.cutoff is not None:
        over["vqt"] = {**cfg.to_dict()["vqt"], "cutoff": args.cutoff}
    if over:
        cfg = cfg.replace(**over)
    out = args.out or cfg.out
    if not out:
        raise ex.ConfigError("out: no output directory (use --out or the config's 'out')")
    workers = resolve_workers(args.workers, cfg.workers)
    docs = ex.run_sweep(cfg, out, workers=workers, resume=not args.fresh,
                        log=lambda s: print(s, flush=True))
    bad = [k for k, d in docs.items() if not d["feasible"]]
    for p, e in bad:
        print(f"infeasible: {p} eta={e}", file=sys.stderr)
    return EXIT_INFEASIBLE if bad else EXIT_OK


def cmd_wigner(args) -> int:
    doc = ex.load_point(args.result)
    rho_s, rho_p = ex.input_states(doc)
    rho = rho_s if args.mode == "S" else rho_p
    q, p, w = wigner(rho, (-args.extent, args.extent), (-args.extent, args.extent), args.points)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        wr = csv.writer(out, lineterminator="\n")
        wr.writerow(("q", "p", "W"))
        for j, pj in enumerate(p):
            for i, qi in enumerate(q):
                wr.writerow((repr(float(qi)), repr(float(pj)), repr(float(w[j, i]))))
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def scan_from_args(args) -> ScanConfig:
    dims = tuple(range(1, args.d_max + 1))
    if args.coarse:
        return ScanConfig(dims=dims, phis=tuple(np.arange(4) * np.pi / 6), rs=(0.0, 0.2, 0.4, 0.6))
    return ScanConfig(dims=dims)


def cmd_match_gkp(args) -> int:
    doc = ex.load_point(args.result)
    rho_s, rho_p = ex.input_states(doc)
    scan = scan_from_args(args)
    report = {"protocol": doc.get("protocol"), "eta": doc.get("eta")}
    for name, rho in (("S", rho_s), ("P", rho_p)):
        try:
            report[name] = gkp_fidelity_match(rho, scan).to_record()
        except InfeasibleError as exc:
            report[name] = {"error": str(exc)}
    text = json.dumps(report, indent=1, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_validate(args) -> int:
    from vqt.validate import run_all
    checks = run_all()
    for c in checks:
        print(c.line())
    return EXIT_OK if all(c.passed for c in checks) else EXIT_NUMERIC


def cmd_baselines(args) -> int:
    etas = _parse_etas(args.eta) if args.eta else tuple(np.round(np.arange(0.1, 1.0, 0.1), 10))
    n = args.n
    print(f"{'eta':>6} {'Q(L_eta)':>10} {'Q(L_eta,n)':>11} {'TMS-EA':>8} {'gain':>5}")
    for e in etas:
        q = pure_loss_capacity(e)
        rate, gain = tms_ea_baseline(e, n, n)
        print(f"{e:6.3f} {q:10.4f} {pure_loss_capacity_constrained(e, n):11.4f} {rate:8.4f} {gain:5.1f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vqt", description="Variational transduction simulator and benchmarks.")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("sweep", help="optimize every (protocol, eta) point of a config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--eta", help="comma-separated override of the config's eta list")
    sp.add_argument("--cutoff", type=int, help="override the variational S/P cutoff")
    sp.add_argument("--fresh", action="store_true", help="ignore existing point files")
    sp.set_defaults(func=cmd_sweep)

    wp = sub.add_parser("wigner", help="Wigner grid of an optimized input mode")
    wp.add_argument("result")
    wp.add_argument("--mode", choices=("S", "P"), default="S")
    wp.add_argument("--extent", type=float, default=6.0)
    wp.add_argument("--points", type=int, default=101)
    wp.add_argument("--out")
    wp.set_defaults(func=cmd_wigner)

    mp = sub.add_parser("match-gkp", help="fidelity with the closest GKP-diagonal mixture")
    mp.add_argument("result")
    mp.add_argument("--d-max", type=int, default=10)
    mp.add_argument("--coarse", action="store_true", help="smaller lattice grid")
    mp.add_argument("--out")
    mp.set_defaults(func=cmd_match_gkp)

    vp = sub.add_parser("validate", help="fast numerical self-checks")
    vp.set_defaults(func=cmd_validate)

    bp = sub.add_parser("baselines", help="closed-form capacity table")
    bp.add_argument("--eta")
    bp.add_argument("--n", type=float, default=2.0)
    bp.set_defaults(func=cmd_baselines)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ex.ConfigError, ex.MissingParamsError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, FloatingPointError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
