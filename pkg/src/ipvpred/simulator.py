"""Per-TTI network loop producing interference power series of monitored UEs.

Random streams are PCG64 generators derived from a ``numpy.random.SeedSequence``
with entropy ``seed`` and spawn key ``(drop, purpose, ...)``:

* ``(drop, 0)``: drop geometry (UE counts, positions, phase shifts);
* ``(drop, 1, bs, ue)``: small-scale fading of the link ``bs -> ue``.

Every link owns its own stream and draws one channel per TTI whether or not the
channel is used, so changing the monitored set or the scheduler never shifts
another link's realizations.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import netmodel
from .netmodel import NetworkScenario, RadioParams
from .scheduler import PfsBank, schedule_rr

log = logging.getLogger(__name__)

SCHEDULERS = ("RR", "PFS")
FADING_MODES = ("iid", "frozen")
CHUNK_TTIS = 2048


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    n_cells: int = 9
    inter_site_distance: float = 200.0
    k_min: int = 2
    k_max: int = 8
    n_antennas: int = 16
    spacing_ratio: float = 0.5
    rice_factor_db: float = 10.0
    pathloss_exponent: float = 3.5
    tx_power_dbm: float = 46.0
    noise_power_dbm: float = -101.0
    edge_snr_db: float = 20.0
    scheduler: str = "RR"
    pfs_horizon: float = 100.0
    pfs_floor: float = 1e-6
    total_ttis: int = 300_000
    seed: int = 0
    drop: int = 0
    fading: str = "iid"
    # local positions within the center cell; None monitors every center-cell UE
    monitored_ues: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.total_ttis < 2:
            raise ConfigError("total_ttis must be >= 2")
        if not 1 <= self.k_min <= self.k_max:
            raise ConfigError("need 1 <= k_min <= k_max")
        if math.isqrt(self.n_cells) ** 2 != self.n_cells or self.n_cells < 1:
            raise ConfigError(f"n_cells={self.n_cells} is not a square grid")
        if self.scheduler not in SCHEDULERS:
            raise ConfigError(f"scheduler must be one of {SCHEDULERS}, got {self.scheduler!r}")
        if self.fading not in FADING_MODES:
            raise ConfigError(f"fading must be one of {FADING_MODES}, got {self.fading!r}")
        if self.seed < 0 or self.drop < 0:
            raise ConfigError("seed and drop must be non-negative")
        if self.monitored_ues is not None:
            object.__setattr__(self, "monitored_ues", tuple(int(i) for i in self.monitored_ues))

    @property
    def noise_power(self) -> float:
        return float(netmodel.dbm_to_watts(self.noise_power_dbm))

    @property
    def tx_power(self) -> float:
        return float(netmodel.dbm_to_watts(self.tx_power_dbm))

    @property
    def rice_factor(self) -> float:
        if math.isinf(self.rice_factor_db):
            return math.inf if self.rice_factor_db > 0 else 0.0
        return float(netmodel.db_to_linear(self.rice_factor_db))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if d["monitored_ues"] is not None:
            d["monitored_ues"] = list(d["monitored_ues"])
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, allow_nan=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)


@dataclass(eq=False)
class IpvSeries:
    """IPV and serving-signal power of one UE over consecutive TTIs.

    ``start`` is the TTI index of the first entry, so a split keeps its
    position in the original series.
    """

    ue_idx: int
    ipv: np.ndarray
    signal_power: np.ndarray
    served: np.ndarray
    metadata: dict = field(default_factory=dict)
    start: int = 0

    def __post_init__(self):
        self.ipv = np.asarray(self.ipv, dtype=np.float64)
        self.signal_power = np.asarray(self.signal_power, dtype=np.float64)
        self.served = np.asarray(self.served, dtype=bool)
        if not (len(self.ipv) == len(self.signal_power) == len(self.served)):
            raise ValueError("ipv, signal_power and served must have equal length")

    def __len__(self):
        return len(self.ipv)

    def __eq__(self, other):
        if not isinstance(other, IpvSeries):
            return NotImplemented
        return (self.ue_idx == other.ue_idx and self.start == other.start
                and self.metadata == other.metadata
                and np.array_equal(self.ipv, other.ipv)
                and np.array_equal(self.signal_power, other.signal_power)
                and np.array_equal(self.served, other.served))

    @property
    def ttis(self) -> np.ndarray:
        return np.arange(self.start, self.start + len(self))

    def slice(self, lo, hi) -> "IpvSeries":
        return IpvSeries(self.ue_idx, self.ipv[lo:hi], self.signal_power[lo:hi],
                         self.served[lo:hi], dict(self.metadata), self.start + lo)


@dataclass(eq=False)
class DropResult:
    scenario: NetworkScenario
    params: RadioParams
    series: list[IpvSeries]
    served: np.ndarray  # (T, n_cells) served UE per TTI


def _stream(config: SimConfig, *key) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=config.seed, spawn_key=(config.drop, *key))
    return np.random.Generator(np.random.PCG64(ss))


def build_drop(config: SimConfig) -> tuple[NetworkScenario, RadioParams]:
    """Geometry and radio parameters of ``config.drop``; independent of the scheduler."""
    rng = _stream(config, 0)
    scenario = netmodel.square_grid_scenario(config.n_cells, config.inter_site_distance,
                                             config.k_min, config.k_max, rng)
    deltas = rng.uniform(0.0, 2 * np.pi, size=scenario.n_ues)
    k0 = netmodel.calibrate_k0(config.edge_snr_db, config.noise_power, config.tx_power,
                               config.inter_site_distance / 2, config.pathloss_exponent)
    params = RadioParams(config.n_antennas, config.spacing_ratio, config.rice_factor,
                         config.pathloss_exponent, k0, config.tx_power, config.noise_power,
                         deltas)
    return scenario, params


class _Link:
    """LOS component and fading stream of one BS -> UE link."""

    def __init__(self, bs, ue, scenario, params, rng, frozen):
        self.los = netmodel.los_channel(bs, ue, scenario, params)
        self.gain = float(netmodel.path_gain(
            netmodel.distance(scenario.bs_positions[bs], scenario.ue_positions[ue]), params))
        self.w_los, self.w_nlos = netmodel.rice_weights(params.rice_factor)
        self.rng = rng
        self.na = params.n_antennas
        self.static = None
        if frozen:
            self.static = self._mix(self._nlos(1))[0]

    def _nlos(self, n):
        return netmodel.complex_gaussian(self.rng, (n, self.na), self.gain)

    def _mix(self, nlos):
        if self.w_nlos == 0.0:
            return np.broadcast_to(self.los, nlos.shape).copy()
        return self.w_los * self.los + self.w_nlos * nlos

    def draw(self, n) -> np.ndarray:
        if self.static is not None:
            return np.broadcast_to(self.static, (n, self.na))
        if self.w_nlos == 0.0:
            return np.broadcast_to(self.los, (n, self.na))
        return self._mix(self._nlos(n))


def simulate_drop(config: SimConfig, chunk_ttis: int = CHUNK_TTIS) -> DropResult:
    scenario, params = build_drop(config)
    center = scenario.center_cell
    cells = [scenario.cell_members(n).tolist() for n in range(scenario.n_cells)]
    members = cells[center]
    local = range(len(members)) if config.monitored_ues is None else config.monitored_ues
    for i in local:
        if not 0 <= i < len(members):
            raise ConfigError(f"monitored UE position {i} outside center cell of size {len(members)}")
    monitored = [members[i] for i in local]
    interferers = [n for n in range(scenario.n_cells) if n != center]

    frozen = config.fading == "frozen"
    own = [_Link(scenario.cell_assignment[k], k, scenario, params, _stream(config, 1, int(scenario.cell_assignment[k]), k), frozen)
           for k in range(scenario.n_ues)]
    cross = {(n, k): _Link(n, k, scenario, params, _stream(config, 1, n, k), frozen)
             for k in monitored for n in interferers}

    T = config.total_ttis
    P, sigma2 = params.tx_power, params.noise_power
    ipv = np.zeros((len(monitored), T))
    sig = np.zeros((len(monitored), T))
    served = np.empty((T, scenario.n_cells), dtype=np.int64)
    bank = None
    if config.scheduler == "PFS":
        bank = PfsBank(cells, config.pfs_horizon, config.pfs_floor)
    rows = np.arange(scenario.n_cells)

    for lo in range(0, T, chunk_ttis):
        n = min(chunk_ttis, T - lo)
        h_own = np.stack([link.draw(n) for link in own], axis=1)  # (n, K, Na)
        gain2 = np.einsum("tkm,tkm->tk", h_own, h_own.conj()).real
        signal = gain2 * P
        if bank is None:
            x = schedule_rr(cells, n, start=lo)
        else:
            x = bank.run(np.log2(1.0 + signal / sigma2))
        served[lo:lo + n] = x
        # beamformer of every BS toward its scheduled UE
        g = h_own[np.arange(n)[:, None], x].conj() / np.sqrt(gain2[np.arange(n)[:, None], x])[..., None]
        for i, k in enumerate(monitored):
            sig[i, lo:lo + n] = signal[:, k]
            acc = np.zeros(n)
            for l in interferers:
                u = np.einsum("tm,tm->t", cross[(l, k)].draw(n), g[:, rows[l]])
                acc += u.real ** 2 + u.imag ** 2
            ipv[i, lo:lo + n] = acc * P

    meta = {"config_hash": config.config_hash(), "seed": config.seed, "drop": config.drop,
            "scheduler": config.scheduler}
    series = []
    for i, k in enumerate(monitored):
        flags = served[:, center] == k
        series.append(IpvSeries(k, ipv[i], sig[i], flags, dict(meta, local_index=int(local[i]))))
    return DropResult(scenario, params, series, served)


def run_simulation(config: SimConfig) -> list[IpvSeries]:
    """Simulate one drop and return the series of every monitored UE."""
    return simulate_drop(config).series


def split_series(series: IpvSeries, L: int) -> tuple[IpvSeries, IpvSeries]:
    """First ``L`` TTIs for training, the remainder for evaluation."""
    T = len(series)
    if not 2 <= L < T:
        raise ValueError(f"training length L={L} must satisfy 2 <= L < {T}")
    return series.slice(0, L), series.slice(L, T)


# -- persistence -------------------------------------------------------------

MAGIC = b"IPVSERIE"
SCHEMA_VERSION = 1
_HEAD = struct.Struct("<8sII")


class SeriesFormatError(ValueError):
    pass


class SchemaVersionError(SeriesFormatError):
    pass


class ChecksumError(SeriesFormatError):
    pass


def save_series(series: IpvSeries, path) -> Path:
    """Write ``series`` as a checksummed little-endian binary container."""
    header = json.dumps({"ue_idx": int(series.ue_idx), "start": int(series.start),
                         "length": len(series), "metadata": series.metadata},
                        sort_keys=True).encode()
    body = b"".join([
        _HEAD.pack(MAGIC, SCHEMA_VERSION, len(header)), header,
        series.ipv.astype("<f8").tobytes(),
        series.signal_power.astype("<f8").tobytes(),
        series.served.astype("u1").tobytes(),
    ])
    path = Path(path)
    path.write_bytes(body + hashlib.sha256(body).digest())
    return path


def load_series(path) -> IpvSeries:
    raw = Path(path).read_bytes()
    if len(raw) < _HEAD.size + 32:
        raise SeriesFormatError(f"{path}: truncated file")
    body, digest = raw[:-32], raw[-32:]
    magic, version, hlen = _HEAD.unpack_from(body)
    if magic != MAGIC:
        raise SeriesFormatError(f"{path}: not an IPV series file")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"{path}: schema version {version}, expected {SCHEMA_VERSION}")
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError(f"{path}: checksum mismatch")
    off = _HEAD.size
    header = json.loads(body[off:off + hlen])
    off += hlen
    n = header["length"]
    ipv = np.frombuffer(body, "<f8", n, off).astype(np.float64)
    sig = np.frombuffer(body, "<f8", n, off + 8 * n).astype(np.float64)
    served = np.frombuffer(body, "u1", n, off + 16 * n).astype(bool)
    return IpvSeries(header["ue_idx"], ipv, sig, served, header["metadata"], header["start"])


def export_series_csv(series: IpvSeries, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tti", "ipv_watts", "signal_watts", "served"])
        for t, i, s, f in zip(series.ttis, series.ipv, series.signal_power, series.served):
            w.writerow([int(t), repr(float(i)), repr(float(s)), int(f)])
    return path
