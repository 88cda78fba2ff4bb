"""Command-line entry point.

Exit codes: 0 completed, 2 blowup detected, 3 resolution lost, 1 for
configuration and input errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import config as cfgmod
from . import experiments as ex
from .errors import KsmixError
from .grid import _HEADER, read_snapshot
from .operators import maxprinciple_probe


def _floats(s: str) -> list[float]:
    try:
        return [float(x) for x in s.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _out(args, cfg) -> Path:
    return Path(args.out or cfg["output.dir"])


def cmd_run(args, linear: bool = False) -> int:
    cfg = cfgmod.load(args.config).validate()
    outcome, summary = ex.run_to_dir(cfg, _out(args, cfg), linear=linear,
                                     resume=getattr(args, "resume", None))
    print(json.dumps({k: summary[k] for k in ("status", "blowup_time_estimate", "t_final")}))
    return ex.EXIT_CODES[outcome.status]


def cmd_sweep(args) -> int:
    cfg = cfgmod.load(args.config).validate()
    result = ex.sweep_A(cfg, args.A, linear=args.linear, workers=args.workers)
    ex.write_sweep(_out(args, cfg), result)
    for s in result.summaries:
        print(f"A={s['A']:g} status={s['status']} phi={s.get('phi_estimate')} rate={s.get('decay_rate')}")
    return 0


def cmd_bisect(args) -> int:
    cfg = cfgmod.load(args.config).validate()
    res = ex.bisect_A0(args.lo, args.hi, args.iterations, ex.run_blows_up(cfg),
                       check_points=args.check_points)
    out = _out(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"bracket": [res.lo, res.hi], "evaluations": res.evaluations,
               "monotone": res.monotone, "violations": res.violations,
               "config_digest": cfg.digest()}
    (out / "bisect.json").write_text(json.dumps(payload, indent=2) + "\n")
    print(json.dumps(payload))
    if not res.monotone:
        logging.warning("outcome is not monotone in A: %s", res.violations)
    return 0


def cmd_psi(args) -> int:
    cfg = cfgmod.load(args.config).validate()
    A_values = args.A if args.A else [cfg["amplitude_A"]]
    rows = ex.psi_sweep(cfg, A_values, args.trunc_N, steps=args.steps)
    path = ex.write_psi(_out(args, cfg), rows)
    for r in rows:
        print(f"A={r['A']:g} psi={r['psi']:.10g} lambda*={r['argmin_lambda']:.4g}")
    print(f"wrote {path}")
    return 0


def cmd_probe(args) -> int:
    if args.snapshot:
        f, _ = read_snapshot(args.snapshot)
    elif args.config:
        f = cfgmod.load(args.config).validate().initial_field()
    else:
        raise KsmixError("give --snapshot or --config")
    report = maxprinciple_probe(f, args.alpha, args.p)
    print(json.dumps(asdict(report), indent=2))
    return 0


def cmd_snapshot_info(args) -> int:
    f, t = read_snapshot(args.file)
    v = f.values
    print(json.dumps({
        "d": f.grid.d, "n": f.grid.n, "time": t, "header_bytes": _HEADER.size,
        "mean": float(v.mean()), "min": float(v.min()), "max": float(v.max()),
    }, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ksmix", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        return sp

    sp = with_config("run", "integrate the full model")
    sp.add_argument("--resume", help="checkpoint snapshot to continue from")
    sp.set_defaults(func=cmd_run)
    sp = with_config("linear-run", "integrate the linear advection-dissipation problem")
    sp.set_defaults(func=lambda a: cmd_run(a, linear=True))
    sp = with_config("sweep", "independent runs over a list of amplitudes")
    sp.add_argument("--A", type=_floats, required=True, help="comma-separated amplitudes")
    sp.add_argument("--linear", action="store_true")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_sweep)
    sp = with_config("bisect-a0", "bracket the smallest suppressing amplitude")
    sp.add_argument("--lo", type=float, required=True)
    sp.add_argument("--hi", type=float, required=True)
    sp.add_argument("--iterations", type=int, default=6)
    sp.add_argument("--check-points", dest="check_points", type=int, default=0,
                    help="log-spaced amplitudes sampled first to test monotonicity")
    sp.set_defaults(func=cmd_bisect)
    sp = with_config("psi", "resolvent quantity of the truncated operator")
    sp.add_argument("--A", type=_floats, default=None)
    sp.add_argument("--trunc-N", dest="trunc_N", type=int, default=8)
    sp.add_argument("--steps", type=int, default=257)
    sp.set_defaults(func=cmd_psi)
    sp = sub.add_parser("probe-maxprinciple", help="max-point dichotomy ratios of a field")
    sp.add_argument("--snapshot")
    sp.add_argument("--config")
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--p", type=float, default=2.0)
    sp.set_defaults(func=cmd_probe)
    sp = sub.add_parser("snapshot-info", help="print the header and range of a snapshot")
    sp.add_argument("file")
    sp.set_defaults(func=cmd_snapshot_info)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except KsmixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ex.EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
