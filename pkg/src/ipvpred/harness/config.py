"""Experiment configuration files (YAML).

Schema (every key optional; defaults are the desk-scale reference scenario)::

    simulation:
      n_cells: 9                 # square number; the middle cell is monitored
      inter_site_distance: 200.0 # m
      k_min: 2
      k_max: 8
      total_ttis: 300000
      fading: iid                # iid | frozen
      monitored_ues: null        # positions within the center cell, null = all
      seed: 0
    radio:
      n_antennas: 16
      spacing_ratio: 0.5         # antenna spacing / wavelength
      rice_factor_db: 10.0       # .inf gives a pure LOS channel
      pathloss_exponent: 3.5
      tx_power_dbm: 46.0
      noise_power_dbm: -101.0
      edge_snr_db: 20.0
    scheduler:
      kinds: [RR, PFS]
      pfs_horizon: 100.0         # EMA horizon in TTIs
      pfs_floor: 1.0e-6
    sweep:
      L: [50, 100, 500, 5000, 10000]
      gamma0: [1.0e-1, 5.0e-2, 1.0e-2, 5.0e-3, 1.0e-3, 5.0e-4, 1.0e-4, 1.0e-5]
      predictors: [MQ_COND, MP_COND, MQ_MARG, MP_MARG, LPP]
      lpp_alpha: [0.01, 0.05, 0.1, 0.5, 1.0]
      drops: 4
    output:
      cache_dir: null            # default: <out>/cache
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..predictors import KINDS
from ..simulator import SCHEDULERS, ConfigError, SimConfig

DEFAULT_L = (50, 100, 500, 5000, 10000)
DEFAULT_GAMMA0 = (1e-1, 5e-2, 1e-2, 5e-3, 1e-3, 5e-4, 1e-4, 1e-5)
DEFAULT_ALPHAS = (0.01, 0.05, 0.1, 0.5, 1.0)


@dataclass(frozen=True)
class SweepSpec:
    L_values: tuple[int, ...] = DEFAULT_L
    gamma0_values: tuple[float, ...] = DEFAULT_GAMMA0
    predictors: tuple[str, ...] = KINDS
    schedulers: tuple[str, ...] = SCHEDULERS
    drops: int = 4
    lpp_alphas: tuple[float, ...] = DEFAULT_ALPHAS

    def __post_init__(self):
        for name in ("L_values", "gamma0_values", "predictors", "schedulers", "lpp_alphas"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.L_values or any(int(L) != L or L < 2 for L in self.L_values):
            raise ConfigError("sweep.L: need integer training lengths >= 2")
        if any(not 0 < g < 1 for g in self.gamma0_values):
            raise ConfigError("sweep.gamma0: values must lie in (0, 1)")
        bad = [p for p in self.predictors if p not in KINDS]
        if bad or not self.predictors:
            raise ConfigError(f"sweep.predictors: unknown {bad}; expected a subset of {list(KINDS)}")
        bad = [s for s in self.schedulers if s not in SCHEDULERS]
        if bad or not self.schedulers:
            raise ConfigError(f"scheduler.kinds: unknown {bad}; expected a subset of {list(SCHEDULERS)}")
        if self.drops < 1:
            raise ConfigError("sweep.drops must be >= 1")
        if any(not 0 < a <= 1 for a in self.lpp_alphas) or not self.lpp_alphas:
            raise ConfigError("sweep.lpp_alpha: values must lie in (0, 1]")
        if any(p in ("MQ_COND", "MQ_MARG") for p in self.predictors) and not self.gamma0_values:
            raise ConfigError("sweep.gamma0: quantile predictors need at least one value")

    def check_against(self, sim: SimConfig):
        too_long = [L for L in self.L_values if L >= sim.total_ttis]
        if too_long:
            raise ConfigError(f"sweep.L: {too_long} not below simulation.total_ttis={sim.total_ttis}")


@dataclass(frozen=True)
class ExperimentConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    cache_dir: str | None = None

    def to_dict(self) -> dict:
        return {"simulation": self.sim.to_dict(),
                "sweep": {k: list(v) if isinstance(v, tuple) else v
                          for k, v in dataclasses.asdict(self.sweep).items()},
                "cache_dir": self.cache_dir}


_SECTIONS = {
    "simulation": {"n_cells", "inter_site_distance", "k_min", "k_max", "total_ttis", "fading",
                   "monitored_ues", "seed"},
    "radio": {"n_antennas", "spacing_ratio", "rice_factor_db", "pathloss_exponent",
              "tx_power_dbm", "noise_power_dbm", "edge_snr_db"},
    "scheduler": {"kinds", "pfs_horizon", "pfs_floor"},
    "sweep": {"L", "gamma0", "predictors", "lpp_alpha", "drops"},
    "output": {"cache_dir"},
}
_SWEEP_KEYS = {"L": "L_values", "gamma0": "gamma0_values", "predictors": "predictors",
               "lpp_alpha": "lpp_alphas", "drops": "drops"}
_INT_FIELDS = {"n_cells", "k_min", "k_max", "total_ttis", "seed", "n_antennas", "drops"}


def parse_config(data, source: str = "<config>") -> ExperimentConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    sim_kw, sweep_kw, cache_dir = {}, {}, None
    for section, body in data.items():
        if section not in _SECTIONS:
            raise ConfigError(f"{source}: unknown section '{section}'")
        if body is None:
            continue
        if not isinstance(body, dict):
            raise ConfigError(f"{source}: section '{section}' must be a mapping")
        for key, value in body.items():
            where = f"{source}: field '{section}.{key}'"
            if key not in _SECTIONS[section]:
                raise ConfigError(f"{where} is not recognized")
            if key in _INT_FIELDS and (isinstance(value, bool) or not isinstance(value, int)):
                raise ConfigError(f"{where} must be an integer, got {value!r}")
            if section in ("simulation", "radio"):
                if key not in _INT_FIELDS and key not in ("fading", "monitored_ues"):
                    value = _as_float(value, where)
                sim_kw[key] = value
            elif section == "scheduler":
                if key == "kinds":
                    sweep_kw["schedulers"] = _as_list(value, where)
                else:
                    sim_kw[key] = _as_float(value, where)
            elif section == "sweep":
                sweep_kw[_SWEEP_KEYS[key]] = value if key == "drops" else _as_list(value, where)
            else:
                cache_dir = value
    try:
        sim = SimConfig(**sim_kw)
        if "L_values" in sweep_kw:
            sweep_kw["L_values"] = [int(L) if float(L).is_integer() else L
                                    for L in sweep_kw["L_values"]]
        if "gamma0_values" in sweep_kw:
            sweep_kw["gamma0_values"] = [_as_float(g, f"{source}: field 'sweep.gamma0'")
                                         for g in sweep_kw["gamma0_values"]]
        sweep = SweepSpec(**sweep_kw)
        sweep.check_against(sim)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return ExperimentConfig(sim, sweep, cache_dir)


def _as_list(value, where):
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"{where} must be a list")
    return list(value)


def _as_float(value, where):
    # YAML 1.1 reads "1e-3" as a string; accept it
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where} must be a number, got {value!r}") from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f" line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"{path}:{loc} YAML parse error: {getattr(exc, 'problem', exc)}") from None
    return parse_config(data, str(path))
