"""Distribution estimation over IPV series.

Everything here works on dB-scale values. Densities are Gaussian-kernel
estimates evaluated on uniform grids; the bandwidth comes from the diffusion
(improved Sheather-Jones) plug-in of Botev, Grotowski and Kroese (2010).
The joint density of consecutive values uses a product kernel with per-axis
diffusion bandwidths.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import optimize
from scipy.fft import dct

log = logging.getLogger(__name__)

GRID_SIZE = 1024
BANDWIDTH_BINS = 2**14
PAD_FRACTION = 0.1
#: conditioning values where the marginal falls below this fraction of its
#: peak use the marginal itself as the conditional
LOW_DENSITY_FRACTION = 1e-6
DB_FLOOR = -250.0


class DegenerateVarianceError(ValueError):
    """Bandwidth requested for constant data."""


def to_db(watts) -> np.ndarray:
    w = np.asarray(watts, dtype=float)
    with np.errstate(divide="ignore"):
        return np.maximum(10.0 * np.log10(w), DB_FLOOR)


def from_db(db) -> np.ndarray:
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


# -- empirical CDF -------------------------------------------------------------

def windows(series, D: int = 1) -> np.ndarray:
    """Length-``D`` history vectors ``[I(t), I(t-1), ..., I(t-D+1)]`` for t = D..L."""
    x = np.asarray(series, dtype=float)
    if not 1 <= D <= len(x):
        raise ValueError(f"window length D={D} invalid for {len(x)} samples")
    return np.lib.stride_tricks.sliding_window_view(x, D)[:, ::-1]


def empirical_cdf(samples, query, D: int = 1):
    """Fraction of length-``D`` windows strictly below ``query`` component-wise."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("empirical CDF of an empty sample")
    if D == 1:
        xs = np.sort(x.ravel())
        return np.searchsorted(xs, query, side="left") / xs.size
    w = windows(x, D)
    q = np.asarray(query, dtype=float)
    if q.shape != (D,):
        raise ValueError(f"query must have length {D}")
    return np.count_nonzero(np.all(w < q, axis=1)) / len(w)


@dataclass(frozen=True, eq=False)
class EmpiricalCdf:
    """Step CDF of a sample; kept as a histogram-style baseline.

    Values never seen in the sample get zero probability, which makes deep
    tail quantiles unreliable for short training windows.
    """

    samples: np.ndarray

    @classmethod
    def fit(cls, samples):
        x = np.sort(np.asarray(samples, dtype=float).ravel())
        if x.size == 0:
            raise ValueError("empirical CDF of an empty sample")
        return cls(x)

    @property
    def n(self) -> int:
        return self.samples.size

    def __call__(self, q):
        return np.searchsorted(self.samples, q, side="left") / self.n

    def quantile(self, p):
        _check_prob(p)
        return float(self.samples[max(math.ceil(p * self.n) - 1, 0)])


# -- bandwidth -----------------------------------------------------------------

def silverman_bandwidth(samples) -> float:
    """Rule-of-thumb variance ``(1.06 * sigma * n**-0.2)**2``."""
    x = np.asarray(samples, dtype=float)
    return float((1.06 * x.std() * x.size ** -0.2) ** 2)


def _fixed_point(t, n, k2, a2, order=7):
    # t - xi * gamma^[order](t), iterated down from the order-th functional
    f = 2 * np.pi ** (2 * order) * np.sum(k2**order * a2 * np.exp(-k2 * np.pi**2 * t))
    for s in range(order - 1, 1, -1):
        k0 = np.prod(np.arange(1, 2 * s, 2)) / np.sqrt(2 * np.pi)
        const = (1 + 0.5 ** (s + 0.5)) / 3
        time = (2 * const * k0 / n / f) ** (2 / (3 + 2 * s))
        f = 2 * np.pi ** (2 * s) * np.sum(k2**s * a2 * np.exp(-k2 * np.pi**2 * time))
    return t - (2 * n * np.sqrt(np.pi) * f) ** (-0.4)


def select_bandwidth(samples, n_bins: int = BANDWIDTH_BINS, max_iter: int = 50) -> float:
    """Diffusion plug-in bandwidth, returned as a kernel variance (squared units).

    Data are binned over the sample range padded by 10% on each side; the
    fixed point is bracketed on the unit-scaled axis and refined by Brent's
    method. Without a bracket or convergence the Silverman rule is used.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2 or not np.all(np.isfinite(x)):
        raise ValueError("bandwidth needs at least two finite samples")
    lo, hi = x.min(), x.max()
    if hi == lo:
        raise DegenerateVarianceError("bandwidth undefined for constant samples")
    pad = PAD_FRACTION * (hi - lo)
    lo, hi = lo - pad, hi + pad
    span = hi - lo
    counts, _ = np.histogram(x, bins=n_bins, range=(lo, hi))
    a = dct(counts / x.size, type=2)
    k2 = np.arange(1, n_bins, dtype=float) ** 2
    a2 = (a[1:] / 2) ** 2
    n = x.size

    def f(t):
        return _fixed_point(t, n, k2, a2)

    n_eff = min(max(n, 50), 1050)
    upper = 1e-12 + 0.01 * (n_eff - 50) / 1000
    t_star = None
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        while upper <= 0.1:
            fu = f(upper)
            if np.isfinite(fu) and fu > 0:
                try:
                    t_star = optimize.brentq(f, 0.0, upper, maxiter=max_iter)
                except (RuntimeError, ValueError):
                    t_star = None
                break
            upper *= 2
    if t_star is None or not t_star > 0:
        log.warning("diffusion bandwidth did not converge; using Silverman's rule")
        return silverman_bandwidth(x)
    return float(t_star * span**2)


# -- grids -----------------------------------------------------------------------

def _check_prob(p):
    if not 0 < p < 1:
        raise ValueError(f"probability {p} outside (0, 1)")


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


def _running_integral(pdf, step):
    c = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) * step / 2)])
    return c


def _grid_for(x, gamma, size):
    lo, hi = x.min(), x.max()
    pad = max(PAD_FRACTION * (hi - lo), 4 * math.sqrt(gamma))
    return np.linspace(lo - pad, hi + pad, size)


def _resolvable(gamma, grid):
    """Floor the kernel variance so its sd spans at least one grid step."""
    return max(gamma, float(grid[1] - grid[0]) ** 2)


def _kernel_matrix(grid, x, gamma):
    """Gaussian kernel values, shape ``(len(x), len(grid))``."""
    return np.exp(-((grid[None, :] - x[:, None]) ** 2) / (2 * gamma)) / math.sqrt(2 * math.pi * gamma)


@dataclass(frozen=True, eq=False)
class DensityGrid1D:
    grid: np.ndarray
    pdf: np.ndarray
    cdf: np.ndarray
    bandwidth: float

    @property
    def step(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def pdf_at(self, x):
        return np.interp(x, self.grid, self.pdf, left=0.0, right=0.0)

    def cdf_at(self, x):
        return np.interp(x, self.grid, self.cdf, left=0.0, right=1.0)

    def mean_linear(self) -> float:
        return _linear_mean(self.grid, self.pdf)


def kde_1d(samples, bandwidth: float | None = None, grid_size: int = GRID_SIZE) -> DensityGrid1D:
    """Gaussian KDE on a uniform grid spanning the padded sample range.

    The estimate is renormalized over the grid so its CDF ends at exactly 1.
    Kernels narrower than one grid step are widened to one step.
    """
    x = np.asarray(samples, dtype=float).ravel()
    gamma = select_bandwidth(x) if bandwidth is None else float(bandwidth)
    if not gamma > 0:
        raise ValueError("bandwidth must be positive")
    grid = _grid_for(x, gamma, grid_size)
    gamma = _resolvable(gamma, grid)
    pdf = np.zeros(grid_size)
    for lo in range(0, x.size, 4096):
        pdf += _kernel_matrix(grid, x[lo:lo + 4096], gamma).sum(axis=0)
    pdf /= x.size
    step = grid[1] - grid[0]
    cdf = _running_integral(pdf, step)
    total = cdf[-1]
    return DensityGrid1D(_frozen(grid), _frozen(pdf / total), _frozen(cdf / total), gamma)


@dataclass(frozen=True, eq=False)
class DensityGrid2D:
    """Joint density; rows index the conditioning value, columns the target."""

    grid_x: np.ndarray
    grid_y: np.ndarray
    pdf: np.ndarray
    bandwidths: tuple[float, float]

    @property
    def steps(self) -> tuple[float, float]:
        return float(self.grid_x[1] - self.grid_x[0]), float(self.grid_y[1] - self.grid_y[0])

    def marginal_x(self) -> np.ndarray:
        return np.trapezoid(self.pdf, dx=self.steps[1], axis=1)

    def marginal_y(self) -> np.ndarray:
        return np.trapezoid(self.pdf, dx=self.steps[0], axis=0)

    def total(self) -> float:
        return float(np.trapezoid(self.marginal_x(), dx=self.steps[0]))


def consecutive_pairs(series) -> np.ndarray:
    """``(I(t), I(t+1))`` pairs of a series, shape ``(L-1, 2)``."""
    x = np.asarray(series, dtype=float)
    return np.column_stack([x[:-1], x[1:]])


def kde_joint_2d(pairs, bandwidths=None, grid_size: int = GRID_SIZE) -> DensityGrid2D:
    """Product-Gaussian KDE of ``(conditioning, target)`` pairs on a square grid."""
    p = np.asarray(pairs, dtype=float)
    if p.ndim != 2 or p.shape[1] != 2:
        raise ValueError("pairs must have shape (n, 2)")
    x, y = p[:, 0], p[:, 1]
    if bandwidths is None:
        gx, gy = select_bandwidth(x), select_bandwidth(y)
    else:
        gx, gy = (float(b) for b in bandwidths)
    grid_x = _grid_for(x, gx, grid_size)
    grid_y = _grid_for(y, gy, grid_size)
    gx, gy = _resolvable(gx, grid_x), _resolvable(gy, grid_y)
    pdf = np.zeros((grid_size, grid_size))
    for lo in range(0, len(p), 4096):
        kx = _kernel_matrix(grid_x, x[lo:lo + 4096], gx)
        ky = _kernel_matrix(grid_y, y[lo:lo + 4096], gy)
        pdf += kx.T @ ky
    pdf /= len(p)
    return DensityGrid2D(_frozen(grid_x), _frozen(grid_y), _frozen(pdf), (gx, gy))


# -- conditionals ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConditionalSlice:
    cond_value: float
    grid: np.ndarray
    pdf: np.ndarray
    cdf: np.ndarray
    fallback: bool = False

    @property
    def step(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @classmethod
    def from_pdf(cls, grid, pdf, cond_value=math.nan, fallback=False):
        grid = np.asarray(grid, dtype=float)
        pdf = np.asarray(pdf, dtype=float)
        cdf = _running_integral(pdf, grid[1] - grid[0])
        total = cdf[-1]
        if not total > 0:
            raise ValueError("slice has no probability mass")
        return cls(float(cond_value), _frozen(grid), _frozen(pdf / total), _frozen(cdf / total),
                   fallback)

    def cdf_at(self, x):
        return np.interp(x, self.grid, self.cdf, left=0.0, right=1.0)


def _row_at(grid, values, c):
    """Linear interpolation of the rows of ``values`` at ``c`` along ``grid``."""
    pos = (c - grid[0]) / (grid[1] - grid[0])
    i = int(min(max(math.floor(pos), 0), len(grid) - 2))
    w = min(max(pos - i, 0.0), 1.0)
    return (1 - w) * values[i] + w * values[i + 1]


def conditional_slice(joint: DensityGrid2D, marginal: DensityGrid1D, cond_value: float,
                      low_density: float = LOW_DENSITY_FRACTION) -> ConditionalSlice:
    """Density of the next value given the current one, as a renormalized joint row."""
    if not math.isfinite(cond_value):
        raise ValueError("conditioning value must be finite")
    if joint.grid_x.size < 2 or joint.grid_y.size < 2:
        raise ValueError("joint grid too small")
    c = float(np.clip(cond_value, joint.grid_x[0], joint.grid_x[-1]))
    fm = float(marginal.pdf_at(c))
    if fm >= low_density * marginal.pdf.max():
        row = _row_at(joint.grid_x, joint.pdf, c) / fm
        if np.trapezoid(row, dx=joint.steps[1]) > 0:
            return ConditionalSlice.from_pdf(joint.grid_y, row, c)
    log.debug("conditioning value %.2f dB in a low-density region; using the marginal", c)
    return ConditionalSlice.from_pdf(joint.grid_y, marginal.pdf_at(joint.grid_y), c, fallback=True)


def quantile(dist, p: float) -> float:
    """Value where the grid CDF of ``dist`` reaches ``p`` (linear interpolation)."""
    _check_prob(p)
    return float(_quantile_rows(dist.grid, np.asarray(dist.cdf)[None, :], p)[0])


def _quantile_rows(grid, cdf_rows, p):
    G = len(grid)
    j = np.count_nonzero(cdf_rows < p, axis=1)
    j1 = np.clip(j, 1, G - 1)
    c0 = cdf_rows[np.arange(len(j)), j1 - 1]
    c1 = cdf_rows[np.arange(len(j)), j1]
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(c1 > c0, (p - c0) / (c1 - c0), 0.0)
    q = grid[j1 - 1] + np.clip(frac, 0.0, 1.0) * (grid[1] - grid[0])
    q = np.where(j == 0, grid[0], q)
    return np.where(j >= G, grid[-1], q)


def _linear_mean(grid, pdf):
    w = np.asarray(pdf, dtype=float)
    return float(np.sum(from_db(grid) * w) / np.sum(w))


def conditional_mean_linear(dist) -> float:
    """Mean of the linear-domain value (watts) under a dB-domain grid density."""
    return _linear_mean(dist.grid, dist.pdf)


class ConditionalTable:
    """Conditional CDFs for every conditioning grid row, for batch queries.

    Queries between rows interpolate the per-row statistic linearly; values
    outside the grid are clamped to its edges.
    """

    def __init__(self, joint: DensityGrid2D, marginal: DensityGrid1D,
                 low_density: float = LOW_DENSITY_FRACTION):
        self.joint = joint
        self.marginal = marginal
        dy = joint.steps[1]
        fm = marginal.pdf_at(joint.grid_x)
        rows = joint.pdf / np.where(fm > 0, fm, 1.0)[:, None]
        mass = np.trapezoid(rows, dx=dy, axis=1)
        self.fallback = (fm < low_density * marginal.pdf.max()) | ~(mass > 0)
        fb = marginal.pdf_at(joint.grid_y)
        rows[self.fallback] = fb
        cdf = np.concatenate([np.zeros((len(rows), 1)),
                              np.cumsum((rows[:, 1:] + rows[:, :-1]) * dy / 2, axis=1)], axis=1)
        total = cdf[:, -1:]
        self.pdf = rows / total
        self.cdf = cdf / total

    @cached_property
    def row_means(self) -> np.ndarray:
        w = self.pdf
        return (w @ from_db(self.joint.grid_y)) / w.sum(axis=1)

    def row_quantiles(self, p: float) -> np.ndarray:
        _check_prob(p)
        return _quantile_rows(self.joint.grid_y, self.cdf, p)

    def lookup(self, cond_values, per_row) -> np.ndarray:
        c = np.clip(np.asarray(cond_values, dtype=float), self.joint.grid_x[0], self.joint.grid_x[-1])
        return np.interp(c, self.joint.grid_x, per_row)


def export_density_csv(dist, path) -> Path:
    """Write a grid density as ``grid_db,pdf,cdf`` rows."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["grid_db", "pdf", "cdf"])
        for row in zip(dist.grid, dist.pdf, dist.cdf):
            w.writerow([repr(float(v)) for v in row])
    return path
