"""Desk-scale strong scaling: phase timings versus worker count.

Runs the same 2D encode with several worker counts, checks that the model
bytes never change, and writes a timing table. Example:

    python scripts/scaling.py --npts 1024 --blocks 4 --workers 1 2 4 8
"""
import argparse
import csv
import os
from dataclasses import dataclass
from pathlib import Path

from ddmfa.pipeline import RunSpec, encode
from ddmfa.storage import dumps_mfa

PHASES = ("setup", "local_solve", "exchange", "constraint", "decode")


@dataclass
class Config:
    npts: int = 1024
    blocks: int = 4
    nctrl: int = 64
    overlap: int = 3
    repeats: int = 3


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/scaling"))
    ap.add_argument("--npts", type=int, default=Config.npts)
    ap.add_argument("--blocks", type=int, default=Config.blocks)
    ap.add_argument("--nctrl", type=int, default=Config.nctrl)
    ap.add_argument("--repeats", type=int, default=Config.repeats)
    ap.add_argument("--workers", type=int, nargs="+", default=[1, 2, 4, 8])
    args = ap.parse_args()
    cfg = Config(args.npts, args.blocks, args.nctrl, Config.overlap, args.repeats)
    args.out.mkdir(parents=True, exist_ok=True)

    rows, blobs = [], set()
    for w in args.workers:
        best = None
        for _ in range(cfg.repeats):
            spec = RunSpec(gen="sinc2d", npts=cfg.npts, blocks=(cfg.blocks,) * 2,
                           nctrl=(cfg.nctrl,), overlap=cfg.overlap, workers=w)
            rep = encode(spec)
            blobs.add(dumps_mfa(rep.model))
            t = rep.timings
            # keep the fastest repeat per worker count
            if best is None or sum(t.values()) < sum(best.values()):
                best = dict(t)
        rows.append({"workers": w, **{k: best[k] for k in PHASES},
                     "solve_decode": best["local_solve"] + best["decode"]})

    base = rows[0]["solve_decode"]
    print(f"host cores: {os.cpu_count()}; distinct model outputs: {len(blobs)}")
    print(f"{'workers':>7} " + " ".join(f"{k:>11}" for k in PHASES) + f" {'speedup':>8}")
    for r in rows:
        print(f"{r['workers']:>7} " + " ".join(f"{r[k]:>11.4f}" for k in PHASES)
              + f" {base / r['solve_decode']:>8.2f}")
    with open(args.out / "scaling.csv", "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=list(rows[0]))
        wr.writeheader()
        wr.writerows(rows)


if __name__ == "__main__":
    main()
