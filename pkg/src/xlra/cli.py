"""``xlra`` command line: ``run`` and ``sweep-delta``.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import (Config, ensure_outdir, load_config, write_config, write_csv,
                     write_series)
from .engine import run_campaign
from .errors import ConfigurationError
from .metrics import RUN_FIELDS
from .optimizer import DeltaGrid, fixed_delta_baseline, sweep_delta

log = logging.getLogger("xlra")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

METRIC_FILES = {
    "avg_attempts": "attempts",
    "failure_prob": "failure",
    "normalized_accepted": "accepted",
    "mean_sum_rate": "sum_rate",
}
RUN_HEADER = ["protocol", "K", "B", "delta", "trials", "far_field_ok"] + [
    c for f in RUN_FIELDS for c in (f, f + "_ci")]
SWEEP_HEADER = ["K", "B", "delta", "mean_sum_rate", "ci_half_width", "is_argmax"]
STAR_HEADER = ["K", "B", "delta_star", "mean_sum_rate", "ci_half_width"]


def _apply_seed(cfg: Config, seed) -> Config:
    if seed is None:
        return cfg
    return replace(cfg, scenario=replace(cfg.scenario, master_seed=seed))


def cmd_run(cfg: Config, protocol: str, workers: int, out: Path) -> Path:
    out = ensure_outdir(out)
    write_config(cfg, out / "config.toml")
    schemes = ["sucre-xl", "noma-xl"] if protocol == "both" else [protocol]
    rows = []
    for k, b, sc in cfg.scenarios():
        runs = []
        for scheme in schemes:
            delta = (fixed_delta_baseline(cfg.sucre_delta) if scheme == "sucre-xl"
                     else sc.protocol.delta)
            runs.append(replace(sc.protocol, scheme=scheme, delta=delta))
        log.info("run K=%d B=%d (%d trials)", k, b, sc.trials)
        res = run_campaign(sc, workers=workers, runs=runs)
        for i, params in enumerate(runs):
            m, ci = res.metrics(i), res.ci(i)
            row = [params.scheme, k, b, params.delta, res.trials, res.far_field_ok]
            for f in RUN_FIELDS:
                row += [getattr(m, f), ci[f]]
            rows.append(row)
    write_csv(out / "metrics.csv", RUN_HEADER, rows)

    idx = {name: RUN_HEADER.index(name) for name in RUN_HEADER}
    for metric, stem in METRIC_FILES.items():
        write_csv(out / f"{stem}.csv", ["protocol", "K", "B", "mean", "ci_half_width"],
                  [[r[0], r[1], r[2], r[idx[metric]], r[idx[metric + "_ci"]]] for r in rows])
        for scheme in schemes:
            for b in cfg.b_values:
                series = [r for r in rows if r[0] == scheme and r[2] == b]
                write_series(out / "plot" / f"{stem}__{scheme}__B{b}.dat",
                             [r[1] for r in series], [r[idx[metric]] for r in series])
    return out


def cmd_sweep_delta(cfg: Config, grid: DeltaGrid, workers: int, out: Path) -> Path:
    if cfg.scenario.protocol.scheme != "noma-xl":
        raise ConfigurationError(
            f"SUCRe-XL uses the fixed scale factor {fixed_delta_baseline(cfg.sucre_delta)}; "
            "refusing to sweep")
    out = ensure_outdir(out)
    write_config(replace(cfg, grid=grid), out / "config.toml")
    sweep_rows, star_rows = [], []
    for k, b, sc in cfg.scenarios():
        log.info("sweep K=%d B=%d over %d points", k, b, len(grid.points()))
        res = sweep_delta(sc, grid, workers=workers)
        sweep_rows.extend(res.rows())
        i = res.best_index
        star_rows.append([k, b, res.delta_star, float(res.means[i]), float(res.ci_half_widths[i])])
    write_csv(out / "delta_sweep.csv", SWEEP_HEADER, sweep_rows)
    write_csv(out / "delta_star.csv", STAR_HEADER, star_rows)
    for b in cfg.b_values:
        series = [r for r in star_rows if r[1] == b]
        write_series(out / "plot" / f"delta_star__B{b}.dat", [r[0] for r in series],
                     [r[2] for r in series])
        write_series(out / "plot" / f"max_sum_rate__B{b}.dat", [r[0] for r in series],
                     [r[3] for r in series])
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xlra", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", type=Path, default=Path("results"))

    run = sub.add_parser("run", help="simulate the K x B grid for one or both protocols")
    common(run)
    run.add_argument("--protocol", choices=["sucre-xl", "noma-xl", "both"], default="both")

    sw = sub.add_parser("sweep-delta", help="exhaustive search of the NOMA-XL scale factor")
    common(sw)
    sw.add_argument("--protocol", choices=["sucre-xl", "noma-xl"], default="noma-xl")
    sw.add_argument("--lo", type=float, default=None)
    sw.add_argument("--hi", type=float, default=None)
    sw.add_argument("--step", type=float, default=None)
    sw.add_argument("--trials-per-point", type=int, default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        cfg = _apply_seed(load_config(args.config), args.seed)
        if args.workers < 1:
            raise ConfigurationError("--workers must be >= 1")
        if args.command == "run":
            cmd_run(cfg, args.protocol, args.workers, args.out)
        else:
            cfg = replace(cfg, scenario=replace(
                cfg.scenario, protocol=replace(cfg.scenario.protocol, scheme=args.protocol)))
            g = cfg.grid
            grid = DeltaGrid(
                lo=g.lo if args.lo is None else args.lo,
                hi=g.hi if args.hi is None else args.hi,
                step=g.step if args.step is None else args.step,
                trials_per_point=(g.trials_per_point if args.trials_per_point is None
                                  else args.trials_per_point))
            cmd_sweep_delta(cfg, grid, args.workers, args.out)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - surfaced as exit code 3
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
