"""Desk-scale comparison of NOMA-XL (at its swept delta*) and SUCRe-XL.

For each (K, B) the NOMA-XL delta grid and the SUCRe-XL baseline run in one
batched campaign, so every variant sees the same channels and access draws.
Writes ``desk_trends.csv`` with one row per (K, B) and gnuplot-style series in
``plot/``.

    python scripts/desk_trends.py --trials 500 --out results/desk
"""
import argparse
import logging
import time
from pathlib import Path

from xlra.config import ensure_outdir, write_csv, write_series
from xlra.engine import Scenario, with_overrides
from xlra.optimizer import DeltaGrid, study_point

FIELDS = ("avg_attempts", "failure_prob", "normalized_accepted", "mean_sum_rate")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=500)
    ap.add_argument("--k", type=int, nargs="+", default=[1000, 5000, 10000, 15000])
    ap.add_argument("--b", type=int, nargs="+", default=[1, 5, 10])
    ap.add_argument("--lo", type=float, default=-2.0)
    ap.add_argument("--hi", type=float, default=2.0)
    ap.add_argument("--step", type=float, default=0.2)
    ap.add_argument("--seed", type=int, default=20240101)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("results/desk"))
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    out = ensure_outdir(args.out)
    grid = DeltaGrid(args.lo, args.hi, args.step)
    header = ["K", "B", "delta_star"]
    for scheme in ("noma", "sucre"):
        header += [f"{scheme}_{f}{s}" for f in FIELDS for s in ("", "_ci")]
    rows = []
    for b in args.b:
        for k in args.k:
            t0 = time.perf_counter()
            sc = with_overrides(Scenario(), k_inactive=k, subarrays=b, trials=args.trials,
                                master_seed=args.seed)
            pt = study_point(sc, grid, workers=args.workers)
            row = [k, b, pt.sweep.delta_star]
            for get in (pt.noma, pt.sucre):
                for f in FIELDS:
                    row += list(get(f))
            rows.append(row)
            logging.info("K=%d B=%d delta*=%g (%.0f s)", k, b, pt.sweep.delta_star,
                         time.perf_counter() - t0)
    write_csv(out / "desk_trends.csv", header, rows)
    for i, name in enumerate(header[2:], start=2):
        if name.endswith("_ci"):
            continue
        for b in args.b:
            series = [r for r in rows if r[1] == b]
            write_series(out / "plot" / f"{name}__B{b}.dat", [r[0] for r in series],
                         [r[i] for r in series])


if __name__ == "__main__":
    main()
