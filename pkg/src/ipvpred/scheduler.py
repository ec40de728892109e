"""Per-cell UE selection: round-robin and proportional-fair.

The single-step functions (:func:`rr_next`, :func:`pfs_next`,
:func:`pfs_update`) operate on one :class:`CellSchedulerState`. The
simulator drives all cells at once through :func:`schedule_rr` and
:func:`schedule_pfs`, which reproduce the single-step sequences exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_EMA_HORIZON = 100.0
DEFAULT_RATE_FLOOR = 1e-6


class EmptyCellError(ValueError):
    pass


@dataclass
class CellSchedulerState:
    cell_idx: int
    ue_list: list[int]
    rr_cursor: int = 0
    avg_throughput: np.ndarray = field(default=None)
    ema_horizon: float = DEFAULT_EMA_HORIZON
    rate_floor: float = DEFAULT_RATE_FLOOR

    def __post_init__(self):
        self.ue_list = [int(k) for k in self.ue_list]
        if self.avg_throughput is None:
            self.avg_throughput = np.full(len(self.ue_list), self.rate_floor)
        else:
            self.avg_throughput = np.maximum(np.asarray(self.avg_throughput, dtype=float),
                                             self.rate_floor)
        if self.ue_list and not 0 <= self.rr_cursor < len(self.ue_list):
            raise ValueError("rr_cursor out of range")
        if self.ema_horizon < 1:
            raise ValueError("ema_horizon must be >= 1 TTI")

    def position(self, ue: int) -> int:
        try:
            return self.ue_list.index(int(ue))
        except ValueError:
            raise KeyError(f"UE {ue} is not in cell {self.cell_idx}") from None


def _require_users(state: CellSchedulerState):
    if not state.ue_list:
        raise EmptyCellError(f"cell {state.cell_idx} has no UEs")


def rr_next(state: CellSchedulerState) -> int:
    """Serve the UE under the cursor and advance it cyclically."""
    _require_users(state)
    ue = state.ue_list[state.rr_cursor]
    state.rr_cursor = (state.rr_cursor + 1) % len(state.ue_list)
    return ue


def pfs_next(state: CellSchedulerState, inst_rate) -> int:
    """UE maximizing ``inst_rate[k] / avg_throughput[k]``; ties go to the first listed UE.

    ``inst_rate`` is indexed by global UE index (array or mapping).
    """
    _require_users(state)
    rates = np.array([inst_rate[k] for k in state.ue_list], dtype=float)
    if np.any(rates < 0):
        raise ValueError("instantaneous rates must be non-negative")
    return state.ue_list[int(np.argmax(rates / state.avg_throughput))]


def pfs_update(state: CellSchedulerState, served: int, achieved_rate: float) -> CellSchedulerState:
    """Exponential moving average update of the per-UE throughput, in place."""
    pos = state.position(served)
    beta = 1.0 / state.ema_horizon
    inc = np.zeros(len(state.ue_list))
    inc[pos] = achieved_rate
    state.avg_throughput = np.maximum((1 - beta) * state.avg_throughput + beta * inc,
                                      state.rate_floor)
    return state


def schedule_rr(cells: list[list[int]], n_ttis: int, start: int = 0) -> np.ndarray:
    """Served UE per (TTI, cell) for round-robin, TTIs ``start .. start+n_ttis-1``."""
    t = np.arange(start, start + n_ttis)
    out = np.empty((n_ttis, len(cells)), dtype=np.int64)
    for n, ues in enumerate(cells):
        if not ues:
            raise EmptyCellError(f"cell {n} has no UEs")
        out[:, n] = np.asarray(ues)[t % len(ues)]
    return out


class PfsBank:
    """Proportional-fair state of every cell, advanced one TTI at a time.

    UE lists are padded to a common width so each TTI is a handful of
    vectorized operations over all cells.
    """

    def __init__(self, cells: list[list[int]], ema_horizon=DEFAULT_EMA_HORIZON,
                 rate_floor=DEFAULT_RATE_FLOOR):
        if any(not ues for ues in cells):
            raise EmptyCellError("every cell needs at least one UE")
        width = max(len(ues) for ues in cells)
        self.index = np.zeros((len(cells), width), dtype=np.int64)
        self.valid = np.zeros((len(cells), width), dtype=bool)
        for n, ues in enumerate(cells):
            self.index[n, :len(ues)] = ues
            self.valid[n, :len(ues)] = True
        self.avg = np.full(self.index.shape, rate_floor)
        self.beta = 1.0 / ema_horizon
        self.floor = rate_floor

    def run(self, rates: np.ndarray) -> np.ndarray:
        """Schedule consecutive TTIs given per-UE rates of shape ``(n_ttis, n_ues)``.

        The achieved rate of the served UE is its scheduling rate.
        """
        n_ttis = rates.shape[0]
        rows = np.arange(self.index.shape[0])
        out = np.empty((n_ttis, len(rows)), dtype=np.int64)
        r_all = rates[:, self.index]
        r_all[:, ~self.valid] = -np.inf
        keep = 1 - self.beta
        avg = self.avg
        for t in range(n_ttis):
            r = r_all[t]
            pos = np.argmax(r / avg, axis=1)
            out[t] = self.index[rows, pos]
            served_rate = r[rows, pos]
            avg *= keep
            avg[rows, pos] += self.beta * served_rate
            np.maximum(avg, self.floor, out=avg)
        return out


def schedule_pfs(cells: list[list[int]], rates: np.ndarray, ema_horizon=DEFAULT_EMA_HORIZON,
                 rate_floor=DEFAULT_RATE_FLOOR) -> np.ndarray:
    return PfsBank(cells, ema_horizon, rate_floor).run(rates)
