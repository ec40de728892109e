"""Figure-shaped CSV tables and their matplotlib renderings.

=====  =========================================================
fig 2  RR, one gamma0, all L: average SE vs average theta
fig 3  RR, one L and gamma0: CDF of per-UE theta
fig 4  RR, one L, all gamma0: average SE vs average theta
fig 5  as fig 4 for PFS
=====  =========================================================
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from ..predictors import KINDS, QUANTILE_KINDS  # noqa: E402
from .metrics import EvalReport, cdf_of_theta  # noqa: E402

FIGURES = (2, 3, 4, 5)
MARKERS = dict(zip(KINDS, "osD^v"))


def _pick(values, preferred):
    values = sorted(set(values))
    if preferred in values:
        return preferred
    return min(values, key=lambda v: abs(v - preferred))


def _gamma_match(r: EvalReport, gamma0) -> bool:
    return r.predictor not in QUANTILE_KINDS or r.gamma0 == gamma0


def figure_table(fig: int, reports: list[EvalReport], L=None, gamma0=None):
    """Header and rows of one figure table."""
    if fig not in FIGURES:
        raise ValueError(f"unknown figure {fig}; expected one of {FIGURES}")
    scheduler = "PFS" if fig == 5 else "RR"
    rs = [r for r in reports if r.scheduler == scheduler]
    if not rs:
        raise ValueError(f"no {scheduler} reports for figure {fig}")
    gammas = [r.gamma0 for r in rs if r.gamma0 is not None]
    if fig in (2, 3) and gammas:
        gamma0 = _pick(gammas, 1e-3 if gamma0 is None else gamma0)
    if fig in (3, 4, 5):
        L = _pick([r.L for r in rs], 5000 if L is None else L)
    if fig == 2:
        rows = [[r.predictor, r.L, r.theta, r.mean_se] for r in rs if _gamma_match(r, gamma0)]
        return ["predictor", "L", "mean_theta", "mean_se"], rows
    if fig == 3:
        rows = []
        for r in rs:
            if r.L == L and _gamma_match(r, gamma0) and len(r.per_ue) >= 2:
                rows += [[r.predictor, t, f] for t, f in cdf_of_theta([u.theta for u in r.per_ue])]
        return ["predictor", "theta", "cdf"], rows
    rows = [[r.predictor, r.gamma0, r.theta, r.mean_se] for r in rs if r.L == L]
    return ["predictor", "gamma0", "mean_theta", "mean_se"], rows


def _plot(fig: int, header, rows, path: Path):
    f, ax = plt.subplots(figsize=(5.0, 3.6))
    by_pred = {}
    for row in rows:
        by_pred.setdefault(row[0], []).append(row)
    for pred, group in by_pred.items():
        if fig == 3:
            ax.step([g[1] for g in group], [g[2] for g in group], where="post", label=pred)
        else:
            ax.plot([g[2] for g in group], [g[3] for g in group], marker=MARKERS.get(pred, "o"),
                    linestyle="-" if pred in QUANTILE_KINDS else "none", label=pred)
    ax.set_xscale("log")
    if fig == 3:
        ax.set_xlabel(r"$\theta$")
        ax.set_ylabel(r"$F(\theta)$")
    else:
        ax.set_xlabel(r"average $\theta$")
        ax.set_ylabel("average SE [bit/s/Hz]")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    f.tight_layout()
    f.savefig(path, dpi=150)
    plt.close(f)


def export_figure(fig: int, reports: list[EvalReport], out_dir, L=None, gamma0=None,
                  plot: bool = True) -> Path:
    """Write ``fig<N>.csv`` (and ``fig<N>.png``) into ``out_dir``."""
    header, rows = figure_table(fig, reports, L, gamma0)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"fig{fig}.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in row])
    if plot and rows:
        _plot(fig, header, rows, out / f"fig{fig}.png")
    return path
