"""Command-line driver: encode, decode, compare, probe, gen."""
from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

import numpy as np

from .datasets import GENERATORS, Field, write_raw_grid
from .decomposition import LayoutError
from .lsq import FitError
from .pipeline import RunSpec, encode
from .runtime import ExchangeFault
from .solver import EnforcementError, continuity_probe
from .storage import FormatError, read_mfa, write_error_profile, write_mfa

EXIT_OK, EXIT_USAGE, EXIT_NOT_CONVERGED = 0, 1, 2

_MODULES = [
    (LayoutError, "decomposition"),
    (FitError, "lsq-fit"),
    (ExchangeFault, "exchange-runtime"),
    (EnforcementError, "ras-solver"),
    (FormatError, "datasets-io"),
    (OSError, "datasets-io"),
]


class UsageError(Exception):
    pass


def _ints(text: str) -> tuple[int, ...]:
    try:
        out = tuple(int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers like 4 or 5x5, got {text!r}")
    if any(v < 1 for v in out):
        raise argparse.ArgumentTypeError(f"values must be positive, got {text!r}")
    return out


def _source_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gen", choices=sorted(GENERATORS), help="synthetic field")
    p.add_argument("--npts", type=int, help="grid points per dimension for --gen")
    p.add_argument("--raw", help="raw binary grid, row-major, last dimension fastest")
    p.add_argument("--dims", type=_ints, help="grid extents, e.g. 704x540x550")
    p.add_argument("--dtype", default="float32", help="value type of --raw")
    p.add_argument("--byteorder", default="little", choices=["little", "big", "native"])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ddmfa", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", help="fit a domain-decomposed model")
    _source_args(enc)
    enc.add_argument("--degree", type=int, default=3)
    enc.add_argument("--blocks", type=_ints, default=(1,), help="blocks per dimension, e.g. 5x5")
    grp = enc.add_mutually_exclusive_group(required=True)
    grp.add_argument("--nctrl", type=_ints, help="controls per block per dimension")
    grp.add_argument("--nctrl-global", type=_ints, help="total controls per dimension")
    enc.add_argument("--overlap", type=int, default=0, help="extra shared spans per face")
    enc.add_argument("--clamp-interfaces", action="store_true")
    enc.add_argument("--tol", type=float, default=1e-10)
    enc.add_argument("--max-iter", type=int, default=10)
    enc.add_argument("--workers", type=int, default=None,
                     help="worker threads (default: $DDMFA_WORKERS or 1)")
    enc.add_argument("--routing", choices=["direct", "face"], default="direct")
    enc.add_argument("--model", help="output MFDD model path")
    enc.add_argument("--error-csv", help="pointwise error CSV (or .json summary)")
    enc.add_argument("--log", help="JSON-lines log path")
    enc.add_argument("--probe-order", type=int, default=None)
    enc.add_argument("--dry-run", action="store_true",
                     help="layout and compression ratio only; no data is read")

    dec = sub.add_parser("decode", help="evaluate a model on a regular grid")
    dec.add_argument("--model", required=True)
    dec.add_argument("--npts", type=_ints, required=True, help="points per dimension")
    dec.add_argument("--out", required=True, help="raw float64 output")
    dec.add_argument("--byteorder", default="little", choices=["little", "big", "native"])

    cmp_ = sub.add_parser("compare", help="difference of two models on a probe grid")
    cmp_.add_argument("model_a")
    cmp_.add_argument("model_b")
    cmp_.add_argument("--npts", type=_ints, default=(1000,), help="probe points per dimension")
    cmp_.add_argument("--gen", choices=sorted(GENERATORS), help="reference field")
    cmp_.add_argument("--json", action="store_true", help="print the report as JSON")

    prb = sub.add_parser("probe", help="derivative jumps across block interfaces")
    prb.add_argument("--model", required=True)
    prb.add_argument("--order", type=int, default=None, help="max derivative order (default p-1)")

    gen = sub.add_parser("gen", help="write a synthetic field as a raw grid")
    gen.add_argument("--gen", required=True, choices=sorted(GENERATORS))
    gen.add_argument("--npts", type=int, required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--dtype", default="float64")
    gen.add_argument("--byteorder", default="little", choices=["little", "big", "native"])
    return ap


def _check_paths(paths: Sequence[Optional[str]]) -> None:
    given = [p for p in paths if p]
    if len(set(given)) != len(given):
        raise UsageError("output paths must be distinct")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def cmd_encode(args) -> int:
    _check_paths([args.model, args.error_csv, args.log])
    spec = RunSpec(gen=args.gen, npts=args.npts, raw=args.raw, dims=args.dims,
                   dtype=args.dtype, byteorder=args.byteorder, degree=args.degree,
                   blocks=args.blocks, nctrl=args.nctrl, nctrl_global=args.nctrl_global,
                   overlap=args.overlap, clamp_interfaces=args.clamp_interfaces, tol=args.tol,
                   max_iter=args.max_iter, workers=args.workers, routing=args.routing,
                   probe_order=args.probe_order)
    records = []
    report = encode(spec, log=records.append, dry_run=args.dry_run)
    summary = report.summary()
    records.append({"summary": summary})
    if args.log:
        with open(args.log, "w") as fh:
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    print(f"{'eta':<24}{_fmt(summary['eta'])}")
    print(f"{'controls':<24}{'x'.join(map(str, summary['controls']))}")
    print(f"{'exchange volume':<24}{summary['exchange_volume']}")
    if args.dry_run:
        return EXIT_OK
    print(f"{'iterations':<24}{summary['iterations']}")
    print(f"{'converged':<24}{summary['converged']}")
    print(f"{'global L2 error':<24}{_fmt(summary['l2'])}")
    print(f"{'global Linf error':<24}{_fmt(summary['linf'])}")
    print(f"{'max jump (order ' + str(summary['probe_order']) + ')':<24}{_fmt(summary['max_jump'])}")
    print(f"{'dPMax per epoch':<24}{' '.join(_fmt(v) for v in summary['dPMax']) or '-'}")
    print("timings [s]             " + " ".join(f"{k}={_fmt(v)}" for k, v in summary["timings"].items()))

    if args.model:
        write_mfa(report.model, args.model)
    if args.error_csv:
        if args.error_csv.endswith(".json"):
            write_error_profile(None, args.error_csv, summary=summary)
        else:
            field_coords = [np.linspace(a, b, n) for (a, b), n in
                            zip(report.model.bounds, report.error.shape)]
            write_error_profile(report.error, args.error_csv, coords=field_coords)
    if not report.converged:
        print(f"ras-solver: {report.result.message}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_decode(args) -> int:
    model = read_mfa(args.model)
    npts = args.npts * model.dim if len(args.npts) == 1 else args.npts
    if len(npts) != model.dim:
        raise UsageError(f"--npts has {len(npts)} entries for a {model.dim}-dimensional model")
    vals = model.decode_grid(npts)
    write_raw_grid(Field(npts, model.bounds, vals), args.out, "float64", args.byteorder)
    print(f"wrote {vals.size} values ({'x'.join(map(str, npts))}) to {args.out}")
    return EXIT_OK


def compare_models(a, b, npts, reference: Optional[str] = None) -> dict:
    if a.bounds != b.bounds:
        raise UsageError(f"incompatible bounds {a.bounds} vs {b.bounds}")
    if a.dim != b.dim:
        raise UsageError("models have different dimensions")
    npts = tuple(npts) * a.dim if len(npts) == 1 else tuple(npts)
    va, vb = a.decode_grid(npts), b.decode_grid(npts)
    diff = va - vb
    out = {"npts": list(npts), "diff_linf": float(np.max(np.abs(diff))),
           "diff_l2": float(np.sqrt(np.sum(diff * diff)))}
    if reference:
        field_ = GENERATORS[reference](npts[0])
        if tuple(field_.dims) != npts or field_.bounds != list(a.bounds):
            raise UsageError("reference field does not match the probe grid or bounds")
        for name, v in (("a", va), ("b", vb)):
            e = field_.values - v
            out[f"{name}_linf"] = float(np.max(np.abs(e)))
            out[f"{name}_l2"] = float(np.sqrt(np.sum(e * e)))
        out["linf_ratio"] = out["a_linf"] / out["b_linf"] if out["b_linf"] > 0 else float("inf")
    return out


def cmd_compare(args) -> int:
    rep = compare_models(read_mfa(args.model_a), read_mfa(args.model_b), args.npts, args.gen)
    if args.json:
        print(json.dumps(rep, sort_keys=True))
    else:
        for k, v in rep.items():
            print(f"{k:<24}{_fmt(v)}")
    return EXIT_OK


def cmd_probe(args) -> int:
    model = read_mfa(args.model)
    faces = model.provenance.get("interfaces", [[] for _ in range(model.dim)])
    worst = 0.0
    for k, us in enumerate(faces):
        order = model.degrees[k] - 1 if args.order is None else args.order
        for u in us:
            pr = continuity_probe(model.control, model.knot_vectors, k, u, order)
            worst = max(worst, pr.max_jump)
            jumps = " ".join(f"{j:.3e}" for j in pr.jumps)
            print(f"axis {k} u={u:.6f} jumps(order 0..{order}) {jumps}")
    print(f"max jump {worst:.3e}")
    return EXIT_OK


def cmd_gen(args) -> int:
    f = GENERATORS[args.gen](args.npts)
    write_raw_grid(f, args.out, args.dtype, args.byteorder)
    print(f"wrote {args.gen} {'x'.join(map(str, f.dims))} to {args.out}")
    return EXIT_OK


COMMANDS = {"encode": cmd_encode, "decode": cmd_decode, "compare": cmd_compare,
            "probe": cmd_probe, "gen": cmd_gen}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"cli: {exc}", file=sys.stderr)
    except tuple(cls for cls, _ in _MODULES) as exc:
        name = next(m for cls, m in _MODULES if isinstance(exc, cls))
        print(f"{name}: {exc}", file=sys.stderr)
    except ValueError as exc:
        print(f"cli: invalid parameter: {exc}", file=sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
