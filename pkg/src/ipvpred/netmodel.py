"""Radio model of the multi-cell downlink.

Geometry on a planar grid of base stations, ULA steering vectors, Rician
channels, MRT beamforming and the per-TTI SINR / interference power value
(IPV) of a user.

Channels are row vectors of length ``n_antennas``; a beamformer is a column
vector of the same length, so the effective scalar gain is ``h @ g``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

#: Rice factors at or above this value are treated as a pure LOS channel.
RICE_LOS_LIMIT = 1e12


class DegenerateGeometryError(ValueError):
    """A UE coincides with a base station."""


class ZeroNormError(ValueError):
    """MRT requested for an all-zero channel."""


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def dbm_to_watts(x_dbm):
    return 10.0 ** ((np.asarray(x_dbm, dtype=float) - 30.0) / 10.0)


@dataclass(eq=False)
class NetworkScenario:
    """Static geometry of one drop.

    ``cell_assignment[k]`` is the serving cell of UE ``k``; UEs of a cell are
    listed in ascending index order by :meth:`cell_members`.
    """

    bs_positions: np.ndarray
    ue_positions: np.ndarray
    cell_assignment: np.ndarray
    inter_site_distance: float

    def __post_init__(self):
        self.bs_positions = np.asarray(self.bs_positions, dtype=float).reshape(-1, 2)
        self.ue_positions = np.asarray(self.ue_positions, dtype=float).reshape(-1, 2)
        self.cell_assignment = np.asarray(self.cell_assignment, dtype=np.int64)
        if self.cell_assignment.shape != (len(self.ue_positions),):
            raise ValueError("cell_assignment must hold one cell index per UE")
        if not (np.all(np.isfinite(self.bs_positions)) and np.all(np.isfinite(self.ue_positions))):
            raise ValueError("positions must be finite")
        if len(self.cell_assignment) and (
            self.cell_assignment.min() < 0 or self.cell_assignment.max() >= self.n_cells
        ):
            raise ValueError("cell index out of range")
        d = np.hypot(*(self.bs_positions[self.cell_assignment] - self.ue_positions).T)
        if np.any(d <= 0):
            raise DegenerateGeometryError("a UE coincides with its serving BS")

    @property
    def n_cells(self) -> int:
        return len(self.bs_positions)

    @property
    def n_ues(self) -> int:
        return len(self.ue_positions)

    def cell_members(self, n: int) -> np.ndarray:
        return np.flatnonzero(self.cell_assignment == n)

    @property
    def center_cell(self) -> int:
        """Index of the cell nearest to the centroid of the BS layout."""
        c = self.bs_positions.mean(axis=0)
        return int(np.argmin(np.hypot(*(self.bs_positions - c).T)))


@dataclass(eq=False)
class RadioParams:
    n_antennas: int
    spacing_ratio: float
    rice_factor: float
    pathloss_exponent: float
    k0: float
    tx_power: float
    noise_power: float
    ue_phase_shifts: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.ue_phase_shifts = np.asarray(self.ue_phase_shifts, dtype=float)
        if self.n_antennas < 1:
            raise ValueError("n_antennas must be >= 1")
        if self.rice_factor < 0:
            raise ValueError("rice_factor must be >= 0")
        if self.pathloss_exponent <= 0:
            raise ValueError("pathloss_exponent must be > 0")
        # tx_power = 0 is allowed for the silent-network limit
        if self.tx_power < 0 or self.noise_power <= 0 or self.k0 <= 0:
            raise ValueError("powers and k0 must be positive")
        s = self.ue_phase_shifts
        if np.any((s < 0) | (s >= 2 * np.pi)):
            raise ValueError("UE phase shifts must lie in [0, 2*pi)")


def calibrate_k0(edge_snr_db, noise_power, tx_power, edge_distance, pathloss_exponent):
    """Pathloss constant giving ``edge_snr_db`` at ``edge_distance`` (single antenna)."""
    return float(db_to_linear(edge_snr_db) * noise_power * edge_distance**pathloss_exponent / tx_power)


def distance(bs, ue) -> float:
    return math.hypot(bs[0] - ue[0], bs[1] - ue[1])


def angle_of_departure(bs, ue) -> float:
    """AoD from ``bs`` toward ``ue``: arcsin of the normalized vertical offset."""
    d = distance(bs, ue)
    if d == 0:
        raise DegenerateGeometryError(f"UE at {tuple(ue)} coincides with BS")
    # clip guards |ratio| > 1 from rounding
    return math.asin(max(-1.0, min(1.0, (ue[1] - bs[1]) / d)))


def steering_vector(theta, params: RadioParams, delta=0.0) -> np.ndarray:
    """ULA response ``exp(j*delta) * exp(j*2*pi*(d/lambda)*(m-1)*cos(theta))``."""
    return steering_matrix(np.atleast_1d(theta), params.n_antennas, params.spacing_ratio,
                           np.atleast_1d(delta))[0]


def steering_matrix(thetas, n_antennas, spacing_ratio, deltas) -> np.ndarray:
    """Row-stacked steering vectors, shape ``(len(thetas), n_antennas)``."""
    thetas = np.asarray(thetas, dtype=float)
    deltas = np.broadcast_to(np.asarray(deltas, dtype=float), thetas.shape)
    m = np.arange(n_antennas)
    phase = 2 * np.pi * spacing_ratio * np.outer(np.cos(thetas), m) + deltas[:, None]
    return np.exp(1j * phase)


def path_gain(d, params: RadioParams):
    """Large-scale power gain ``K0 / d**nu``."""
    return params.k0 / np.asarray(d, dtype=float) ** params.pathloss_exponent


def rice_weights(rice_factor):
    """Amplitude weights ``(los, nlos)`` of the Rician mixture."""
    if rice_factor >= RICE_LOS_LIMIT:
        return 1.0, 0.0
    return math.sqrt(rice_factor / (rice_factor + 1)), math.sqrt(1 / (rice_factor + 1))


def los_channel(bs_idx, ue_idx, scenario: NetworkScenario, params: RadioParams) -> np.ndarray:
    bs = scenario.bs_positions[bs_idx]
    ue = scenario.ue_positions[ue_idx]
    theta = angle_of_departure(bs, ue)
    delta = params.ue_phase_shifts[ue_idx] if len(params.ue_phase_shifts) else 0.0
    return math.sqrt(path_gain(distance(bs, ue), params)) * steering_vector(theta, params, delta)


def draw_channel(bs_idx, ue_idx, scenario: NetworkScenario, params: RadioParams,
                 rng: np.random.Generator) -> np.ndarray:
    """One Rician draw of the channel between BS ``bs_idx`` and UE ``ue_idx``."""
    h_los = los_channel(bs_idx, ue_idx, scenario, params)
    w_los, w_nlos = rice_weights(params.rice_factor)
    if w_nlos == 0.0:
        return h_los
    var = path_gain(distance(scenario.bs_positions[bs_idx], scenario.ue_positions[ue_idx]), params)
    return w_los * h_los + w_nlos * complex_gaussian(rng, params.n_antennas, var)


def complex_gaussian(rng: np.random.Generator, shape, variance=1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with the given per-entry variance."""
    z = rng.standard_normal(np.append(shape, 2))
    return np.sqrt(variance / 2) * (z[..., 0] + 1j * z[..., 1])


def mrt_beamformer(h) -> np.ndarray:
    """Matched-filter beamformer ``h^H / ||h||``."""
    h = np.asarray(h, dtype=complex)
    norm = np.linalg.norm(h)
    if norm == 0:
        raise ZeroNormError("MRT beamformer undefined for a zero channel")
    return h.conj() / norm


def sinr_and_ipv(serving, interferers, params: RadioParams):
    """SINR and interference power of one UE in one TTI.

    Parameters
    ----------
    serving : (h, g)
        Channel from the serving BS and the beamformer it uses.
    interferers : list of (h_cross, g_other)
        Channel from each interfering BS to this UE, paired with the
        beamformer that BS applies toward its own scheduled UE.
    params : RadioParams

    Returns
    -------
    (sinr, ipv) : linear SINR and interference power in watts.
    """
    h, g = (np.asarray(v, dtype=complex) for v in serving)
    na = params.n_antennas
    if h.shape != (na,) or g.shape != (na,):
        raise ValueError(f"serving vectors must have length {na}")
    ipv = 0.0
    for hc, gc in interferers:
        hc = np.asarray(hc, dtype=complex)
        gc = np.asarray(gc, dtype=complex)
        if hc.shape != (na,) or gc.shape != (na,):
            raise ValueError(f"interferer vectors must have length {na}")
        ipv += abs(hc @ gc) ** 2 * params.tx_power
    signal = abs(h @ g) ** 2 * params.tx_power
    return signal / (ipv + params.noise_power), ipv


def square_grid_scenario(n_cells, inter_site_distance, k_min, k_max,
                         rng: np.random.Generator, exclusion_radius=1.0) -> NetworkScenario:
    """Square grid of BSs with a uniform number of UEs in each square cell.

    UE counts are uniform integers in ``[k_min, k_max]``; positions are uniform
    over the cell square minus a disc of ``exclusion_radius`` around the BS.
    """
    side = math.isqrt(n_cells)
    if side * side != n_cells or n_cells < 1:
        raise ValueError(f"n_cells={n_cells} is not a square number")
    if not 1 <= k_min <= k_max:
        raise ValueError("need 1 <= k_min <= k_max")
    offs = (np.arange(side) - (side - 1) / 2) * inter_site_distance
    # row-major: cell index = row * side + col, row along y
    bs = np.array([(x, y) for y in offs for x in offs])
    counts = rng.integers(k_min, k_max + 1, size=n_cells)
    half = inter_site_distance / 2
    ues, cells = [], []
    for n, (bx, by) in enumerate(bs):
        for _ in range(counts[n]):
            while True:
                u = rng.uniform(-half, half, size=2)
                if math.hypot(*u) > exclusion_radius:
                    break
            ues.append((bx + u[0], by + u[1]))
            cells.append(n)
    return NetworkScenario(bs, np.array(ues), np.array(cells), inter_site_distance)
