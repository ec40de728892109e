"""Sweep orchestration: simulate, split, train, evaluate, aggregate, write.

Work is organized in units of (drop, scheduler, UE, L). A unit trains one
density model on the first L IPVs of a UE and evaluates every requested
predictor on the rest of its series. Units are independent, so they may run
in a process pool; results are gathered in submission order, which keeps
the output identical to a sequential run.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import ipvpred

from ..predictors import (CONDITIONAL_KINDS, DENSITY_KINDS, LPP, QUANTILE_KINDS, DensityModel,
                          PredictorSpec, build_predictor)
from ..simulator import (IpvSeries, SeriesFormatError, SimConfig, load_series, run_simulation,
                         save_series, split_series)
from .config import ExperimentConfig, SweepSpec
from .metrics import EvalReport, UeResult, aggregate, evaluate

log = logging.getLogger(__name__)

REPORT_COLUMNS = ["predictor", "scheduler", "L", "gamma0", "drop", "ue", "theta", "mean_se", "n_eval"]
SUMMARY_COLUMNS = ["predictor", "scheduler", "L", "gamma0", "alpha", "theta", "mean_se", "n_eval",
                   "n_series"]
LPP_COLUMNS = ["scheduler", "L", "alpha", "theta", "mean_se", "n_eval", "selected"]
REFERENCE_TOTAL_TTIS = 3_000_000
# expected failures per UE below which a gamma0 point is flagged
MIN_EXPECTED_FAILURES = 50


def code_version() -> str:
    root = Path(ipvpred.__file__).parent
    h = hashlib.sha256()
    for p in sorted(root.rglob("*.py")):
        h.update(p.relative_to(root).as_posix().encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


# -- series cache --------------------------------------------------------------

def cached_series(sim: SimConfig, cache_dir=None) -> list[IpvSeries]:
    """Series of one (drop, scheduler), reusing ``cache_dir/<config hash>`` when valid."""
    if cache_dir is None:
        return run_simulation(sim)
    key = sim.config_hash()
    d = Path(cache_dir) / key
    index = d / "index.json"
    if index.is_file():
        try:
            meta = json.loads(index.read_text())
            if meta.get("config") != sim.to_dict():
                raise SeriesFormatError("cached config differs")
            series = [load_series(d / name) for name in meta["files"]]
            if any(s.metadata.get("config_hash") != key for s in series):
                raise SeriesFormatError("cached series hash mismatch")
            return series
        except (SeriesFormatError, OSError, KeyError, ValueError) as exc:
            log.warning("cache %s unusable (%s); re-simulating", d, exc)
    series = run_simulation(sim)
    d.mkdir(parents=True, exist_ok=True)
    files = []
    for s in series:
        name = f"ue{s.ue_idx:04d}.ipvs"
        save_series(s, d / name)
        files.append(name)
    index.write_text(json.dumps({"config": sim.to_dict(), "files": files}, sort_keys=True, indent=1))
    return series


# -- units -----------------------------------------------------------------------

def _specs(kind: str, sweep: SweepSpec) -> list[PredictorSpec]:
    if kind in QUANTILE_KINDS:
        return [PredictorSpec(kind, gamma0=g) for g in sweep.gamma0_values]
    if kind == LPP:
        return [PredictorSpec(LPP, alpha=a) for a in sweep.lpp_alphas]
    return [PredictorSpec(kind)]


def evaluate_unit(series: IpvSeries, L: int, sweep: SweepSpec, noise_power: float,
                  scheduler: str) -> list[tuple[PredictorSpec, UeResult]]:
    train, evaluation = split_series(series, L)
    model = None
    if any(k in DENSITY_KINDS for k in sweep.predictors):
        joint = any(k in CONDITIONAL_KINDS for k in sweep.predictors)
        model = DensityModel.fit(train.ipv, start=train.start, joint=joint)
        lo, hi = model.trained_on
        assert hi <= evaluation.start, "training window overlaps evaluation segment"
    context = float(train.ipv[-1])
    out = []
    for kind in sweep.predictors:
        for spec in _specs(kind, sweep):
            predictor = build_predictor(spec, model)
            report = evaluate(predictor, evaluation, noise_power, context, scheduler, L)
            out.append((spec, report.per_ue[0]))
    return out


def _run_unit(args):
    return evaluate_unit(*args)


# -- experiment --------------------------------------------------------------

def run_experiment(sweep: SweepSpec, sim: SimConfig, out_dir=None, cache_dir=None,
                   threads: int = 1, config: ExperimentConfig | None = None) -> list[EvalReport]:
    """Run every (drop, scheduler, L, gamma0, predictor) cell of a sweep.

    Returns one aggregated report per (scheduler, L, predictor, gamma0); LPP is
    reported at the alpha with the lowest aggregated theta. Results are written
    to ``out_dir`` when given.
    """
    sweep.check_against(sim)
    cells: dict[tuple, list[UeResult]] = {}
    pool = ProcessPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for drop in range(sweep.drops):
            for scheduler in sweep.schedulers:
                cfg = sim.replace(scheduler=scheduler, drop=drop)
                log.info("drop %d, %s: simulating %d TTIs", drop, scheduler, cfg.total_ttis)
                series = cached_series(cfg, cache_dir)
                jobs = [(s, L, sweep, cfg.noise_power, scheduler)
                        for s in series for L in sweep.L_values]
                results = pool.map(_run_unit, jobs) if pool else map(_run_unit, jobs)
                for (s, L, *_), unit in zip(jobs, results):
                    for spec, ue in unit:
                        cells.setdefault((scheduler, L, spec.kind, spec.gamma0, spec.alpha), []).append(ue)
    finally:
        if pool:
            pool.shutdown()

    reports, lpp_rows = _assemble(cells, sweep, sim)
    if out_dir is not None:
        write_results(reports, lpp_rows, out_dir, _manifest(sweep, sim, config))
    return reports


def _assemble(cells, sweep: SweepSpec, sim: SimConfig):
    reports, lpp_rows = [], []
    common = dict(config_hash=sim.replace(drop=0).config_hash(), seed=sim.seed)
    for scheduler in sweep.schedulers:
        for L in sweep.L_values:
            for kind in sweep.predictors:
                if kind == LPP:
                    options = []
                    for a in sweep.lpp_alphas:
                        per_ue = cells[(scheduler, L, LPP, None, a)]
                        options.append((aggregate(per_ue), a, per_ue))
                    # lowest theta, ties to the higher spectral efficiency
                    best = min(options, key=lambda o: (o[0][0], -o[0][1]))
                    for (theta, se, n), a, _ in options:
                        lpp_rows.append([scheduler, L, a, theta, se, n, int(a == best[1])])
                    (theta, se, n), a, per_ue = best
                    reports.append(EvalReport(LPP, scheduler, L, None, theta, se, n, per_ue,
                                              alpha=a, **common))
                    continue
                gammas = sweep.gamma0_values if kind in QUANTILE_KINDS else (None,)
                for g in gammas:
                    per_ue = cells[(scheduler, L, kind, g, None)]
                    theta, se, n = aggregate(per_ue)
                    reports.append(EvalReport(kind, scheduler, L, g, theta, se, n, per_ue, **common))
    return reports, lpp_rows


def _manifest(sweep: SweepSpec, sim: SimConfig, config: ExperimentConfig | None) -> dict:
    config = config or ExperimentConfig(sim, sweep)
    n_eval = sim.total_ttis - max(sweep.L_values)
    flagged = [g for g in sweep.gamma0_values if g * n_eval < MIN_EXPECTED_FAILURES]
    return {
        "config": config.to_dict(),
        "seed": sim.seed,
        "code_version": code_version(),
        "package_version": ipvpred.__version__,
        "total_ttis": sim.total_ttis,
        "reference_total_ttis": REFERENCE_TOTAL_TTIS,
        "low_confidence_gamma0": flagged,
        "lpp_selection": "alpha with the lowest aggregated theta",
    }


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_results(reports: list[EvalReport], lpp_rows, out_dir, manifest: dict) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "reports.csv", REPORT_COLUMNS,
               ([r.predictor, r.scheduler, r.L, r.gamma0, u.drop, u.ue, u.theta, u.mean_se, u.n_eval]
                for r in reports for u in r.per_ue))
    _write_csv(out / "summary.csv", SUMMARY_COLUMNS,
               ([r.predictor, r.scheduler, r.L, r.gamma0, r.alpha, r.theta, r.mean_se, r.n_eval,
                 len(r.per_ue)] for r in reports))
    if lpp_rows:
        _write_csv(out / "lpp_alpha.csv", LPP_COLUMNS, lpp_rows)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    (out / "reports.json").write_text(json.dumps(
        {"manifest": manifest, "reports": [r.to_dict() for r in reports]}, indent=1, sort_keys=True))
    return out


def load_reports(path) -> list[EvalReport]:
    path = Path(path)
    if path.is_dir():
        path = path / "reports.json"
    data = json.loads(path.read_text())
    return [EvalReport.from_dict(d) for d in data["reports"]]
