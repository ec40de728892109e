"""Next-IPV prediction policies.

All predictors map the observed IPV ``I(t)`` (watts) to a prediction of
``I(t+1)`` (watts):

========  ==========================================================
MQ_COND   (1 - gamma0)-quantile of the conditional density of I(t+1)
MP_COND   conditional mean of I(t+1)
MQ_MARG   (1 - gamma0)-quantile of the marginal density (constant)
MP_MARG   marginal mean (constant)
LPP       exponential smoothing of the observed IPVs
========  ==========================================================
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from . import density
from .density import ConditionalTable, DensityGrid1D, DensityGrid2D

MQ_COND = "MQ_COND"
MP_COND = "MP_COND"
MQ_MARG = "MQ_MARG"
MP_MARG = "MP_MARG"
LPP = "LPP"
KINDS = (MQ_COND, MP_COND, MQ_MARG, MP_MARG, LPP)
QUANTILE_KINDS = (MQ_COND, MQ_MARG)
DENSITY_KINDS = (MQ_COND, MP_COND, MQ_MARG, MP_MARG)
CONDITIONAL_KINDS = (MQ_COND, MP_COND)

DEFAULT_ALPHA = 0.05


class UntrainedModelError(RuntimeError):
    pass


class DensityModel:
    """Marginal and one-step joint densities of a training window, in dB.

    ``trained_on`` holds the half-open TTI range the model was fit on.
    """

    def __init__(self):
        self.marginal: DensityGrid1D | None = None
        self.joint: DensityGrid2D | None = None
        self.trained_on: tuple[int, int] | None = None
        self._table = None

    @classmethod
    def fit(cls, training_watts, start: int = 0, joint: bool = True) -> "DensityModel":
        x = density.to_db(training_watts)
        model = cls()
        model.marginal = density.kde_1d(x)
        if joint:
            model.joint = density.kde_joint_2d(density.consecutive_pairs(x))
        model.trained_on = (start, start + len(x))
        return model

    def require_marginal(self) -> DensityGrid1D:
        if self.marginal is None:
            raise UntrainedModelError("density model has not been trained")
        return self.marginal

    def require_joint(self) -> DensityGrid2D:
        self.require_marginal()
        if self.joint is None:
            raise UntrainedModelError("density model was trained without the joint density")
        return self.joint

    @property
    def table(self) -> ConditionalTable:
        if self._table is None:
            self._table = ConditionalTable(self.require_joint(), self.marginal)
        return self._table

    def slice_at(self, observed_watts: float) -> density.ConditionalSlice:
        if not observed_watts > 0:
            raise ValueError("observed IPV must be positive")
        return density.conditional_slice(self.require_joint(), self.marginal,
                                         float(density.to_db(observed_watts)))


def _check_gamma0(gamma0):
    if not 0 < gamma0 < 1:
        raise ValueError(f"target BLER gamma0={gamma0} outside (0, 1)")


def predict_mq_conditional(model: DensityModel, observed: float, gamma0: float) -> float:
    _check_gamma0(gamma0)
    q = density.quantile(model.slice_at(observed), 1 - gamma0)
    return float(density.from_db(q))


def predict_mp_conditional(model: DensityModel, observed: float) -> float:
    return density.conditional_mean_linear(model.slice_at(observed))


def predict_mq_marginal(model: DensityModel, gamma0: float) -> float:
    _check_gamma0(gamma0)
    return float(density.from_db(density.quantile(model.require_marginal(), 1 - gamma0)))


def predict_mp_marginal(model: DensityModel) -> float:
    return model.require_marginal().mean_linear()


@dataclass
class LppState:
    prediction: float = 0.0
    initialized: bool = False


def predict_lpp(state: LppState, observed: float, alpha: float) -> tuple[float, LppState]:
    """One step of ``I_hat(t+1) = alpha*I(t) + (1-alpha)*I_hat(t)``."""
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha={alpha} outside (0, 1]")
    prev = state.prediction if state.initialized else observed
    pred = alpha * observed + (1 - alpha) * prev
    return pred, LppState(pred, True)


# -- uniform predictor objects -------------------------------------------------------

@dataclass(frozen=True)
class PredictorSpec:
    kind: str
    gamma0: float | None = None
    alpha: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown predictor kind {self.kind!r}; expected one of {KINDS}")
        if self.kind in QUANTILE_KINDS:
            if self.gamma0 is None:
                raise ValueError(f"{self.kind} needs gamma0")
            _check_gamma0(self.gamma0)
        if self.kind == LPP:
            a = DEFAULT_ALPHA if self.alpha is None else self.alpha
            if not 0 < a <= 1:
                raise ValueError(f"alpha={a} outside (0, 1]")
            object.__setattr__(self, "alpha", a)

    @property
    def label(self) -> str:
        if self.kind in QUANTILE_KINDS:
            return f"{self.kind}(gamma0={self.gamma0:g})"
        if self.kind == LPP:
            return f"LPP(alpha={self.alpha:g})"
        return self.kind


class Predictor:
    """Predict the next IPV from the current one.

    ``predict`` is the step-by-step form; ``predict_series`` returns the
    prediction made after each observation of an array, in order.
    """

    spec: PredictorSpec

    def reset(self):
        pass

    def predict(self, observed: float) -> float:
        raise NotImplementedError

    def predict_series(self, observed) -> np.ndarray:
        self.reset()
        return np.array([self.predict(float(v)) for v in observed])


class ConditionalQuantilePredictor(Predictor):
    def __init__(self, model: DensityModel, gamma0: float):
        self.spec = PredictorSpec(MQ_COND, gamma0=gamma0)
        self.model = model
        model.require_joint()
        self._row = None

    def predict(self, observed):
        return predict_mq_conditional(self.model, observed, self.spec.gamma0)

    def predict_series(self, observed):
        table = self.model.table
        if self._row is None:
            self._row = table.row_quantiles(1 - self.spec.gamma0)
        return density.from_db(table.lookup(density.to_db(observed), self._row))


class ConditionalMeanPredictor(Predictor):
    def __init__(self, model: DensityModel):
        self.spec = PredictorSpec(MP_COND)
        self.model = model
        model.require_joint()

    def predict(self, observed):
        return predict_mp_conditional(self.model, observed)

    def predict_series(self, observed):
        table = self.model.table
        return table.lookup(density.to_db(observed), table.row_means)


class _ConstantPredictor(Predictor):
    value: float

    def predict(self, observed):
        return self.value

    def predict_series(self, observed):
        return np.full(len(observed), self.value)


class MarginalQuantilePredictor(_ConstantPredictor):
    def __init__(self, model: DensityModel, gamma0: float):
        self.spec = PredictorSpec(MQ_MARG, gamma0=gamma0)
        self.value = predict_mq_marginal(model, gamma0)


class MarginalMeanPredictor(_ConstantPredictor):
    def __init__(self, model: DensityModel):
        self.spec = PredictorSpec(MP_MARG)
        self.value = predict_mp_marginal(model)


class LowPassPredictor(Predictor):
    def __init__(self, alpha: float = DEFAULT_ALPHA):
        self.spec = PredictorSpec(LPP, alpha=alpha)
        self.state = LppState()

    def reset(self):
        self.state = LppState()

    def predict(self, observed):
        pred, self.state = predict_lpp(self.state, observed, self.spec.alpha)
        return pred

    def predict_series(self, observed):
        x = np.asarray(observed, dtype=float)
        if x.size == 0:
            return x.copy()
        a = self.spec.alpha
        prev = self.state.prediction if self.state.initialized else x[0]
        y, _ = lfilter([a], [1.0, a - 1.0], x, zi=[(1 - a) * prev])
        self.state = LppState(float(y[-1]), True)
        return y


def build_predictor(spec: PredictorSpec, model: DensityModel | None = None) -> Predictor:
    if spec.kind == LPP:
        return LowPassPredictor(spec.alpha)
    if model is None:
        raise UntrainedModelError(f"{spec.kind} needs a trained density model")
    if spec.kind == MQ_COND:
        return ConditionalQuantilePredictor(model, spec.gamma0)
    if spec.kind == MP_COND:
        return ConditionalMeanPredictor(model)
    if spec.kind == MQ_MARG:
        return MarginalQuantilePredictor(model, spec.gamma0)
    return MarginalMeanPredictor(model)
