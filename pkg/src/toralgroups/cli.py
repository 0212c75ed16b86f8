"""Command line: one subcommand per experiment kind.

    toralgroups enumerate --group preset:sanov --radius 8 --out runs/enum
    toralgroups shrink --manifest shrink.json --threads 1

Exit codes: 0 success, 2 manifest/validation error, 3 budget exhausted.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

EXIT_OK, EXIT_INVALID, EXIT_BUDGET = 0, 2, 3
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _json_or_str(s):
    try:
        return json.loads(s)
    except json.JSONDecodeError:
        return s


def _csv_nums(s):
    return [_json_or_str(v) for v in s.split(",")]


def _coords(s):
    return "random" if s == "random" else [v.strip() for v in s.split(",")]


# flag -> (param name, parser)
FLAGS = {
    "enumerate": {"radius": int, "budget": int},
    "exponent": {"radius": int, "alphas": _csv_nums, "x": _coords, "y": _coords, "budget": int},
    "shrink": {"radius": int, "alpha": float, "psi": json.loads, "x": _coords, "y": _coords,
               "target": json.loads, "witness_limit": int, "shell_width": int, "budget": int},
    "spectral": {"windows": lambda s: [int(v) for v in s.split(",")], "K": int, "tol": float,
                 "method": str, "reduce": str, "max_iter": int},
    "boundary": {"m": int, "pairs": json.loads, "shells": lambda s: [int(v) for v in s.split(",")],
                 "K": int, "dense_limit": int},
    "discrepancy": {"x": _coords, "kmax": int, "B": int, "etk_B": int, "Q": int, "budget": int},
    "ergodic": {"nmax": int, "b": json.loads, "samples": int, "shell_width": int},
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="toralgroups", description="Thin-group orbit experiments on the torus.")
    sub = ap.add_subparsers(dest="kind", required=True)
    for kind, flags in FLAGS.items():
        sp = sub.add_parser(kind)
        sp.add_argument("--manifest", help="JSON manifest (flags below override its params)")
        sp.add_argument("--group", help="presentation file or preset:sanov / preset:f2")
        sp.add_argument("--seeds", type=lambda s: [int(v) for v in s.split(",")])
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--plot", action="store_true", help="print plot data to stdout")
        for name, typ in flags.items():
            sp.add_argument(f"--{name.replace('_', '-')}", dest=f"p_{name}", type=typ)
    return ap


def _raw_manifest(args):
    raw, base = {}, None
    if args.manifest:
        with open(args.manifest) as fh:
            raw = json.load(fh)
        base = os.path.dirname(os.path.abspath(args.manifest))
        if raw.get("kind", args.kind) != args.kind:
            from .errors import ManifestError
            raise ManifestError("kind", f"manifest kind {raw.get('kind')!r} does not match subcommand {args.kind!r}")
    raw["kind"] = args.kind
    raw.setdefault("group", "preset:sanov")
    if args.group:
        raw["group"] = args.group
    if args.seeds is not None:
        raw["seeds"] = args.seeds
    if args.out:
        raw["output"] = args.out
    elif base and raw.get("output") and not os.path.isabs(raw["output"]):
        raw["output"] = os.path.join(base, raw["output"])
    params = dict(raw.get("params", {}))
    for k, v in vars(args).items():
        if k.startswith("p_") and v is not None:
            params[k[2:]] = v
    raw["params"] = params
    return raw, base


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for var in _THREAD_VARS:
        os.environ[var] = str(args.threads)
    # heavy imports only after the thread configuration is fixed
    from .errors import BudgetExceeded, ManifestError
    from .harness import PLOT_KIND, emit_plot_data, run_experiment, validate_manifest
    try:
        raw, base = _raw_manifest(args)
        m = validate_manifest(raw, base=base)
    except (ManifestError, OSError, json.JSONDecodeError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        res = run_experiment(m, threads=args.threads)
    except BudgetExceeded as exc:
        print(f"budget exhausted: {exc} (completed radius {exc.completed_radius})", file=sys.stderr)
        return EXIT_BUDGET
    except ValueError as exc:
        print(f"{m.kind} failed: {exc}", file=sys.stderr)
        return 1
    if args.plot and m.kind in PLOT_KIND:
        sys.stdout.write(emit_plot_data(res, PLOT_KIND[m.kind]))
    else:
        print(json.dumps(res.summary(args.threads), indent=1, sort_keys=True, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
