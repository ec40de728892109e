"""Reliability and spectral-efficiency metrics of a predictor."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..predictors import Predictor
from ..simulator import IpvSeries


@dataclass
class UeResult:
    drop: int
    ue: int
    theta: float
    mean_se: float
    n_eval: int


@dataclass
class EvalReport:
    predictor: str
    scheduler: str
    L: int
    gamma0: float | None
    theta: float
    mean_se: float
    n_eval: int
    per_ue: list[UeResult] = field(default_factory=list)
    alpha: float | None = None
    config_hash: str = ""
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        d = dict(d)
        d["per_ue"] = [UeResult(**u) for u in d.get("per_ue", [])]
        return cls(**d)


def transitions(predictor: Predictor, evaluation: IpvSeries, noise_power: float,
                context: float | None = None):
    """Per-transition failure flags and spectral efficiency.

    With ``context`` (the IPV observed just before the evaluation segment) every
    entry of the segment is a prediction target; otherwise the first entry only
    serves as the first observation.
    """
    ipv = evaluation.ipv
    if context is None:
        observed, target, signal = ipv[:-1], ipv[1:], evaluation.signal_power[1:]
    else:
        observed = np.concatenate([[context], ipv[:-1]])
        target, signal = ipv, evaluation.signal_power
    if len(target) == 0:
        raise ValueError("evaluation segment has no transitions")
    predictor.reset()
    pred = np.asarray(predictor.predict_series(observed), dtype=float)
    fail = pred < target
    se = np.where(fail, 0.0, np.log2(1.0 + signal / (pred + noise_power)))
    return fail, se


def evaluate(predictor: Predictor, evaluation: IpvSeries, noise_power: float,
             context: float | None = None, scheduler: str = "", L: int = 0) -> EvalReport:
    fail, se = transitions(predictor, evaluation, noise_power, context)
    meta = evaluation.metadata
    ue = UeResult(int(meta.get("drop", 0)), int(evaluation.ue_idx), float(fail.mean()),
                  float(se.mean()), int(fail.size))
    spec = predictor.spec
    return EvalReport(spec.kind, scheduler or meta.get("scheduler", ""), L, spec.gamma0,
                      ue.theta, ue.mean_se, ue.n_eval, [ue], alpha=spec.alpha,
                      config_hash=meta.get("config_hash", ""), seed=int(meta.get("seed", 0)))


def aggregate(per_ue: list[UeResult]) -> tuple[float, float, int]:
    """Transition-weighted mean ``(theta, mean_se, n_eval)`` over UEs."""
    if not per_ue:
        raise ValueError("nothing to aggregate")
    n = np.array([u.n_eval for u in per_ue], dtype=float)
    theta = float(np.dot(n, [u.theta for u in per_ue]) / n.sum())
    se = float(np.dot(n, [u.mean_se for u in per_ue]) / n.sum())
    return theta, se, int(n.sum())


def cdf_of_theta(thetas) -> list[tuple[float, float]]:
    """Empirical CDF points ``(theta_(i), i/n)`` of per-UE reliabilities."""
    x = np.sort(np.asarray(thetas, dtype=float))
    if x.size < 2:
        raise ValueError("CDF of theta needs at least two UEs")
    return [(float(v), (i + 1) / x.size) for i, v in enumerate(x)]
