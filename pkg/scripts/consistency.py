"""Converged error versus block count at a fixed global control count.

Fits the symmetric 1D sinc field with 1..N blocks and several overlap widths,
reporting the Linf error ratio against the single-block fit. Example:

    python scripts/consistency.py --nctrl-global 60 100 200 --overlaps 0 3 6
"""
import argparse
import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ddmfa.bspline import collocation_matrix
from ddmfa.datasets import gen_sinc_1d_sym
from ddmfa.decomposition import LayoutError, partition
from ddmfa.solver import solve
from ddmfa.storage import write_error_profile


@dataclass
class Config:
    npts: int = 10000
    degree: int = 3
    blocks: list = field(default_factory=lambda: [2, 3, 5])
    nctrl_global: list = field(default_factory=lambda: [100])
    overlaps: list = field(default_factory=lambda: [0, 3])


def converged_error(fld, blocks, degree, n_global, overlap):
    dec = partition(fld.dims, fld.bounds, [blocks], degree, n_global=[n_global],
                    overlap=overlap if blocks > 1 else 0)
    r = solve(fld.values, dec)
    R = collocation_matrix(r.knot_vectors[0], dec.layout.axes[0].params)
    return fld.values - R.toarray() @ r.control, r


def run(cfg: Config, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    fld = gen_sinc_1d_sym(cfg.npts)
    x = fld.axes()[0]
    rows = []
    for n in cfg.nctrl_global:
        ref, _ = converged_error(fld, 1, cfg.degree, n, 0)
        ref_linf = float(np.max(np.abs(ref)))
        write_error_profile(ref, out / f"n{n}_N1.csv", coords=[x])
        for nb, ov in itertools.product(cfg.blocks, cfg.overlaps):
            try:
                err, r = converged_error(fld, nb, cfg.degree, n, ov)
            except LayoutError as exc:
                print(f"skip n={n} N={nb} overlap={ov}: {exc}")
                continue
            linf = float(np.max(np.abs(err)))
            write_error_profile(err, out / f"n{n}_N{nb}_d{ov}.csv", coords=[x])
            rows.append({"nctrl_global": n, "blocks": nb, "overlap": ov,
                         "iterations": r.iterations, "linf": linf, "linf_N1": ref_linf,
                         "ratio": linf / ref_linf})
    with open(out / "ratios.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/consistency"))
    ap.add_argument("--npts", type=int, default=Config.npts)
    ap.add_argument("--blocks", type=int, nargs="+", default=[2, 3, 5])
    ap.add_argument("--nctrl-global", type=int, nargs="+", default=[100])
    ap.add_argument("--overlaps", type=int, nargs="+", default=[0, 3])
    args = ap.parse_args()
    rows = run(Config(args.npts, 3, args.blocks, args.nctrl_global, args.overlaps), args.out)
    print(f"{'n':>5} {'N':>3} {'overlap':>7} {'Linf':>11} {'ratio':>7}")
    for r in rows:
        print(f"{r['nctrl_global']:>5} {r['blocks']:>3} {r['overlap']:>7} "
              f"{r['linf']:>11.3e} {r['ratio']:>7.3f}")


if __name__ == "__main__":
    main()
