import logging
import math

import numpy as np
import pytest
from conftest import markov_next_cdf, markov_next_mean, markov_next_quantile
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ipvpred import density
from ipvpred.density import (ConditionalSlice, ConditionalTable, DegenerateVarianceError,
                             DensityGrid2D, EmpiricalCdf, conditional_mean_linear,
                             conditional_slice, empirical_cdf, kde_1d, kde_joint_2d, quantile,
                             select_bandwidth)

G = density.GRID_SIZE


@pytest.fixture(scope="module")
def normal_1e4():
    return np.random.default_rng(0).standard_normal(10_000)


@pytest.fixture(scope="module")
def markov_model(markov_data):
    x, _ = markov_data
    return kde_joint_2d(density.consecutive_pairs(x)), kde_1d(x)


# -- empirical CDF -------------------------------------------------------------

def test_empirical_cdf_examples(normal_1e4):
    assert empirical_cdf([1, 2, 3], 2.5) == pytest.approx(2 / 3)
    assert empirical_cdf([1, 2, 3], 0.0) == 0 and empirical_cdf([1, 2, 3], 9.0) == 1
    assert empirical_cdf([1, 2, 3], 2.0) == pytest.approx(1 / 3)  # strictly below
    assert empirical_cdf(normal_1e4, 0.0) == pytest.approx(0.5, abs=0.02)
    with pytest.raises(ValueError):
        empirical_cdf([], 0.0)


def test_windowed_empirical_cdf_brute_force():
    x = np.random.default_rng(3).random(40)
    q = np.array([0.6, 0.4])
    hits = sum(1 for t in range(1, 40) if x[t] < q[0] and x[t - 1] < q[1])
    assert empirical_cdf(x, q, D=2) == pytest.approx(hits / 39)
    w = density.windows(x, 3)
    assert w.shape == (38, 3) and list(w[0]) == [x[2], x[1], x[0]]


def test_empirical_cdf_object():
    e = EmpiricalCdf.fit([3.0, 1.0, 2.0, 4.0])
    assert e(2.5) == 0.5 and e(-1) == 0 and e(10) == 1
    assert e.quantile(0.5) == 2.0 and e.quantile(0.99) == 4.0


# -- bandwidth -----------------------------------------------------------------

def test_bandwidth_close_to_silverman_on_gaussian(normal_1e4):
    h = math.sqrt(select_bandwidth(normal_1e4))
    ref = 1.06 * normal_1e4.std() * len(normal_1e4) ** -0.2
    assert 0.8 * ref <= h <= 1.25 * ref
    assert ref == pytest.approx(0.168, abs=0.005)


def test_bandwidth_scale_equivariance(normal_1e4):
    g = select_bandwidth(normal_1e4)
    assert select_bandwidth(4.0 * normal_1e4) == pytest.approx(16.0 * g, rel=1e-12)
    assert select_bandwidth(3.0 * normal_1e4) == pytest.approx(9.0 * g, rel=1e-9)


def test_bandwidth_smaller_than_silverman_on_bimodal():
    rng = np.random.default_rng(1)
    x = np.concatenate([rng.normal(-5, 1, 5000), rng.normal(5, 1, 5000)])
    assert math.sqrt(select_bandwidth(x)) < 1.06 * x.std() * x.size ** -0.2


def test_bandwidth_errors_and_fallback(monkeypatch, caplog):
    with pytest.raises(DegenerateVarianceError):
        select_bandwidth(np.ones(100))

    def fail(*a, **k):
        raise RuntimeError("no convergence")

    monkeypatch.setattr(density.optimize, "brentq", fail)
    x = np.random.default_rng(2).standard_normal(500)
    with caplog.at_level(logging.WARNING):
        g = select_bandwidth(x)
    assert g == pytest.approx(density.silverman_bandwidth(x))
    assert "Silverman" in caplog.text


# -- 1D KDE --------------------------------------------------------------------

def test_kde_ise_against_true_density(normal_1e4):
    d = kde_1d(normal_1e4)
    ise = np.trapezoid((d.pdf - stats.norm.pdf(d.grid)) ** 2, d.grid)
    assert ise < 1e-3


def test_kde_grid_covers_padded_range(normal_1e4):
    d = kde_1d(normal_1e4)
    r = np.ptp(normal_1e4)
    assert d.grid[0] <= normal_1e4.min() - 0.1 * r + 1e-12
    assert d.grid[-1] >= normal_1e4.max() + 0.1 * r - 1e-12
    assert len(d.grid) == G


def test_kde_cluster_peak():
    d = kde_1d(np.full(200, 7.5), bandwidth=1e-4)
    assert abs(d.grid[np.argmax(d.pdf)] - 7.5) <= d.step


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["normal", "lognormal", "bimodal", "uniform"]),
       st.integers(50, 800))
def test_kde_normalized_monotone(seed, kind, n):
    rng = np.random.default_rng(seed)
    x = {"normal": lambda: rng.normal(size=n),
         "lognormal": lambda: rng.lognormal(size=n),
         "bimodal": lambda: np.r_[rng.normal(-4, 1, n // 2), rng.normal(4, 0.5, n - n // 2)],
         "uniform": lambda: rng.uniform(-110, -90, n)}[kind]()
    d = kde_1d(x)
    assert np.all(d.pdf >= 0)
    assert 0.99 <= np.trapezoid(d.pdf, d.grid) <= 1.01
    assert np.all(np.diff(d.cdf) >= 0) and d.cdf[0] <= 0.01 and d.cdf[-1] >= 0.99


# -- joint KDE ----------------------------------------------------------------

def _mutual_information(j: DensityGrid2D):
    dx, dy = j.steps
    p = j.pdf / j.total()
    px = np.trapezoid(p, dx=dy, axis=1)
    py = np.trapezoid(p, dx=dx, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(p > 0, p * np.log(p / np.outer(px, py)), 0.0)
    return float(np.sum(term) * dx * dy)


def test_joint_independent_has_low_mutual_information():
    rng = np.random.default_rng(4)
    j = kde_joint_2d(np.column_stack([rng.standard_normal(5000), rng.standard_normal(5000)]))
    assert 0.98 <= j.total() <= 1.02
    assert _mutual_information(j) < 0.05
    dx, dy = j.steps
    assert np.trapezoid(j.marginal_x(), dx=dx) == pytest.approx(1.0, abs=0.02)
    assert np.trapezoid(j.marginal_y(), dx=dy) == pytest.approx(1.0, abs=0.02)


def test_joint_degenerate_diagonal():
    x = np.random.default_rng(5).standard_normal(2000)
    j = kde_joint_2d(np.column_stack([x, x]))
    gx, gy = j.bandwidths
    band = 3 * math.sqrt(gx + gy)  # sd of the kernel difference
    off = np.abs(j.grid_x[:, None] - j.grid_y[None, :]) > band
    dx, dy = j.steps
    assert np.sum(j.pdf[off]) * dx * dy < 0.01 * j.total()


def test_joint_markov_conditional_means(markov_model):
    joint, marg = markov_model
    for state, level in enumerate([10.0, 20.0]):
        sl = conditional_slice(joint, marg, level)
        mean_db = float(np.sum(sl.grid * sl.pdf) * sl.step)
        assert mean_db == pytest.approx(markov_next_mean(state), rel=0.05)


def test_joint_rejects_bad_shape():
    with pytest.raises(ValueError):
        kde_joint_2d(np.zeros((10, 3)))


# -- conditional slices ------------------------------------------------------------

def test_slice_of_independent_joint_is_marginal():
    rng = np.random.default_rng(6)
    marg = kde_1d(rng.standard_normal(3000))
    # exact product joint on the marginal grid
    joint = DensityGrid2D(marg.grid, marg.grid, np.outer(marg.pdf, marg.pdf), (1.0, 1.0))
    for c in (-1.5, 0.0, 0.7, 2.0):
        sl = conditional_slice(joint, marg, c)
        assert np.sum(np.abs(sl.pdf - marg.pdf)) * sl.step < 0.02


def test_slice_from_independent_samples_close_to_marginal():
    rng = np.random.default_rng(7)
    x = rng.standard_normal(20_000)
    joint, marg = kde_joint_2d(density.consecutive_pairs(x)), kde_1d(x)
    for c in (-1.0, 0.0, 1.0):
        sl = conditional_slice(joint, marg, c)
        target = np.interp(sl.grid, marg.grid, marg.pdf)
        # sampling noise of the local row dominates: few hundred effective samples
        assert np.sum(np.abs(sl.pdf - target)) * sl.step < 0.15


def test_slice_markov_cdf_matches_transition_rows(markov_model):
    joint, marg = markov_model
    for state, level in enumerate([10.0, 20.0]):
        sl = conditional_slice(joint, marg, level)
        assert not sl.fallback
        # CDF values are probabilities: compare on an absolute 5% scale
        ref = np.array([markov_next_cdf(state, v) for v in sl.grid])
        assert np.max(np.abs(sl.cdf - ref)) <= 0.05
        assert np.trapezoid(sl.pdf, dx=sl.step) == pytest.approx(1.0, abs=0.01)
        for p in (0.5, 0.9):
            assert quantile(sl, p) == pytest.approx(markov_next_quantile(state, p), rel=0.05)


def test_slice_clamps_outside_grid(markov_model):
    joint, marg = markov_model
    lo = conditional_slice(joint, marg, joint.grid_x[0] - 100.0)
    at = conditional_slice(joint, marg, joint.grid_x[0])
    assert np.array_equal(lo.pdf, at.pdf) and lo.cond_value == at.cond_value


def test_slice_low_density_falls_back_to_marginal(markov_model):
    joint, marg = markov_model
    sl = conditional_slice(joint, marg, 15.0, low_density=0.9)
    assert sl.fallback
    assert np.allclose(sl.pdf, marg.pdf_at(joint.grid_y) / np.trapezoid(marg.pdf_at(joint.grid_y), joint.grid_y))
    with pytest.raises(ValueError):
        conditional_slice(joint, marg, math.nan)


def test_table_matches_slices(markov_model):
    joint, marg = markov_model
    table = ConditionalTable(joint, marg)
    q = table.row_quantiles(0.9)
    for i in (100, 400, 700):
        sl = conditional_slice(joint, marg, joint.grid_x[i])
        assert q[i] == pytest.approx(quantile(sl, 0.9), abs=1e-9)
        assert table.row_means[i] == pytest.approx(conditional_mean_linear(sl), rel=1e-9)
    # between rows: interpolated statistic vs statistic of the interpolated row
    dx = joint.steps[0]
    for c in (10.3, 19.7):
        sl = conditional_slice(joint, marg, c)
        assert table.lookup([c], q)[0] == pytest.approx(quantile(sl, 0.9), abs=2 * dx)


# -- quantiles and means --------------------------------------------------------

def test_quantile_examples(normal_1e4):
    grid = np.linspace(-5, 5, G)
    sym = ConditionalSlice.from_pdf(grid, stats.norm.pdf(grid, 0.3, 1.0))
    assert quantile(sym, 0.5) == pytest.approx(0.3, abs=grid[1] - grid[0])
    a, b = 2.0, 6.0
    ugrid = np.linspace(a, b, G)
    uni = ConditionalSlice.from_pdf(ugrid, np.ones(G))
    assert quantile(uni, 0.25) == pytest.approx(a + 0.25 * (b - a), abs=ugrid[1] - ugrid[0])
    assert quantile(kde_1d(normal_1e4), 0.99) == pytest.approx(2.326, abs=0.1)
    for p in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            quantile(uni, p)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-4, 1 - 1e-4), st.floats(1e-4, 1 - 1e-4))
def test_quantile_cdf_round_trip_and_monotone(normal_1e4_p, p2):
    d = _ROUND_TRIP_DENSITY
    q = quantile(d, normal_1e4_p)
    assert d.cdf_at(q) == pytest.approx(normal_1e4_p, abs=1 / G + 1e-6)
    lo, hi = sorted([normal_1e4_p, p2])
    assert quantile(d, lo) <= quantile(d, hi)


_ROUND_TRIP_DENSITY = kde_1d(np.random.default_rng(10).lognormal(size=2000))


def test_quantile_equivariant_under_db_transform():
    w = np.random.default_rng(11).lognormal(-20, 1.0, size=999)
    for p in (0.1, 0.5, 0.9, 0.999):
        q_db = EmpiricalCdf.fit(density.to_db(w)).quantile(p)
        assert density.from_db(q_db) == pytest.approx(EmpiricalCdf.fit(w).quantile(p), rel=1e-12)
    # grid density: dB quantile mapped to watts sits at the same rank in watts
    d = kde_1d(density.to_db(w))
    for p in (0.1, 0.5, 0.9):
        q_w = density.from_db(quantile(d, p))
        rank = d.cdf_at(density.to_db(q_w))
        assert rank == pytest.approx(p, abs=1 / G + 1e-6)


def test_conditional_mean_point_masses():
    grid = np.linspace(-10, 20, 301)
    step = grid[1] - grid[0]
    pm = np.zeros_like(grid)
    pm[np.argmin(np.abs(grid - 10))] = 1 / step
    sl = ConditionalSlice.from_pdf(grid, pm)
    assert conditional_mean_linear(sl) == pytest.approx(10.0)
    two = np.zeros_like(grid)
    two[np.argmin(np.abs(grid - 0))] = two[np.argmin(np.abs(grid - 10))] = 0.5 / step
    assert conditional_mean_linear(ConditionalSlice.from_pdf(grid, two)) == pytest.approx(5.5)


def test_conditional_mean_lognormal_factor():
    mu, s = -100.0, 4.0
    grid = np.linspace(mu - 40, mu + 40, 4096)
    sl = ConditionalSlice.from_pdf(grid, stats.norm.pdf(grid, mu, s))
    expected = 10 ** (mu / 10) * math.exp((s * math.log(10) / 10) ** 2 / 2)
    assert conditional_mean_linear(sl) == pytest.approx(expected, rel=0.02)


def test_db_floor():
    assert density.to_db([0.0])[0] == density.DB_FLOOR
    assert density.to_db([1.0])[0] == 0.0


def test_csv_export(tmp_path, normal_1e4):
    p = density.export_density_csv(kde_1d(normal_1e4[:500]), tmp_path / "d.csv")
    lines = p.read_text().splitlines()
    assert lines[0] == "grid_db,pdf,cdf" and len(lines) == G + 1
