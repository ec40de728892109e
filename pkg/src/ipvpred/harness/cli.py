"""Command line entry point: ``ipvpred <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .. import density
from ..predictors import KINDS, DensityModel, PredictorSpec, build_predictor
from ..simulator import (ConfigError, SeriesFormatError, export_series_csv, load_series,
                         save_series, split_series)
from . import figures
from .config import ExperimentConfig, load_config
from .experiment import cached_series, code_version, load_reports, run_experiment
from .metrics import aggregate, evaluate

log = logging.getLogger("ipvpred")


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = ExperimentConfig(cfg.sim.replace(seed=args.seed), cfg.sweep, cfg.cache_dir)
    return cfg


def _cache_dir(cfg: ExperimentConfig, out: Path):
    return Path(cfg.cache_dir) if cfg.cache_dir else out / "cache"


def cmd_simulate(args) -> int:
    cfg = _load(args)
    sim = cfg.sim.replace(scheduler=args.scheduler or cfg.sim.scheduler, drop=args.drop)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    series = cached_series(sim, _cache_dir(cfg, out))
    for s in series:
        save_series(s, out / f"series_ue{s.ue_idx:04d}.ipvs")
        if args.csv:
            export_series_csv(s, out / f"series_ue{s.ue_idx:04d}.csv")
    (out / "manifest.json").write_text(json.dumps(
        {"config": sim.to_dict(), "config_hash": sim.config_hash(), "seed": sim.seed,
         "code_version": code_version(), "ues": [s.ue_idx for s in series]}, indent=2))
    print(f"wrote {len(series)} series to {out}")
    return 0


def cmd_estimate(args) -> int:
    series = load_series(args.series)
    train, _ = split_series(series, args.L) if args.L < len(series) else (series, None)
    model = DensityModel.fit(train.ipv, start=train.start)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    density.export_density_csv(model.marginal, out / "marginal.csv")
    j = model.joint
    np.savez(out / "joint.npz", grid_x=j.grid_x, grid_y=j.grid_y, pdf=j.pdf,
             bandwidths=np.array(j.bandwidths))
    x = density.to_db(train.ipv)
    for p in (0.1, 0.5, 0.9):
        c = float(np.quantile(x, p))
        density.export_density_csv(density.conditional_slice(j, model.marginal, c),
                                   out / f"conditional_p{int(p * 100):02d}.csv")
    print(f"marginal bandwidth {model.marginal.bandwidth:.4g} dB^2, joint bandwidths "
          f"({j.bandwidths[0]:.4g}, {j.bandwidths[1]:.4g}) dB^2 -> {out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load(args)
    sim = cfg.sim.replace(scheduler=args.scheduler or cfg.sim.scheduler, drop=args.drop)
    out = Path(args.out)
    spec = PredictorSpec(args.predictor, gamma0=args.gamma0, alpha=args.alpha)
    series = cached_series(sim, _cache_dir(cfg, out))
    rows = []
    for s in series:
        train, ev = split_series(s, args.L)
        model = None if spec.kind == "LPP" else DensityModel.fit(train.ipv, start=train.start)
        rep = evaluate(build_predictor(spec, model), ev, sim.noise_power, float(train.ipv[-1]),
                       sim.scheduler, args.L)
        rows.append(rep.per_ue[0])
    theta, se, n = aggregate(rows)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "evaluate.csv").open("w") as fh:
        fh.write("predictor,scheduler,L,gamma0,drop,ue,theta,mean_se,n_eval\n")
        g = "" if spec.gamma0 is None else repr(spec.gamma0)
        for u in rows:
            fh.write(f"{spec.kind},{sim.scheduler},{args.L},{g},{u.drop},{u.ue},"
                     f"{u.theta!r},{u.mean_se!r},{u.n_eval}\n")
    print(f"{spec.label} {sim.scheduler} L={args.L}: theta={theta:.3e} mean_se={se:.4f} "
          f"over {n} transitions")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    reports = run_experiment(cfg.sweep, cfg.sim, out, _cache_dir(cfg, out), args.threads, cfg)
    print(f"{len(reports)} report rows written to {out}")
    return 0


def cmd_export_fig(args) -> int:
    reports = load_reports(args.in_dir)
    out = Path(args.out or args.in_dir)
    figs = figures.FIGURES if args.fig == "all" else (int(args.fig),)
    for f in figs:
        path = figures.export_figure(f, reports, out, L=args.L, gamma0=args.gamma0,
                                     plot=not args.no_plot)
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config")
    common.add_argument("--seed", type=int, help="override simulation seed")
    common.add_argument("--out", default="results", help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="ipvpred", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate and persist IPV series")
    s.add_argument("--scheduler", choices=["RR", "PFS"])
    s.add_argument("--drop", type=int, default=0)
    s.add_argument("--csv", action="store_true", help="also export CSV per series")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("estimate", parents=[common], help="build and export density grids")
    s.add_argument("--series", required=True, help="series file from 'simulate'")
    s.add_argument("--L", type=int, default=5000, help="training length")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("evaluate", parents=[common], help="evaluate one predictor")
    s.add_argument("--predictor", choices=KINDS, required=True)
    s.add_argument("--gamma0", type=float)
    s.add_argument("--alpha", type=float)
    s.add_argument("--L", type=int, default=5000)
    s.add_argument("--scheduler", choices=["RR", "PFS"])
    s.add_argument("--drop", type=int, default=0)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", parents=[common], help="run a full experiment sweep")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("export-fig", parents=[common], help="figure-shaped CSV + PNG from a sweep")
    s.add_argument("--fig", required=True, choices=["2", "3", "4", "5", "all"])
    s.add_argument("--in", dest="in_dir", required=True, help="sweep output directory")
    s.add_argument("--L", type=int)
    s.add_argument("--gamma0", type=float)
    s.add_argument("--no-plot", action="store_true")
    s.set_defaults(func=cmd_export_fig, out=None)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"ipvpred: config error: {exc}", file=sys.stderr)
    except (OSError, SeriesFormatError, ValueError) as exc:
        print(f"ipvpred: error: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
