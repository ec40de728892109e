import math
import time
from functools import reduce

import numpy as np
import pytest

from ipvpred.simulator import (ChecksumError, ConfigError, IpvSeries, SchemaVersionError,
                               SeriesFormatError, SimConfig, export_series_csv, load_series,
                               run_simulation, save_series, simulate_drop, split_series)


@pytest.fixture(scope="module")
def default_drop():
    return simulate_drop(SimConfig(total_ttis=3000, seed=21))


def test_single_cell_has_no_interference():
    for s in run_simulation(SimConfig(n_cells=1, total_ttis=200, seed=1)):
        assert np.all(s.ipv == 0)
        assert np.all(s.signal_power > 0)


@pytest.mark.parametrize("rice_db", [math.inf, 10.0])
def test_frozen_fading_rr_is_periodic(rice_db):
    cfg = SimConfig(total_ttis=4000, seed=4, fading="frozen", rice_factor_db=rice_db, k_max=4)
    res = simulate_drop(cfg)
    sizes = [len(res.scenario.cell_members(n)) for n in range(9)]
    period = reduce(math.lcm, sizes)
    assert 2 * period < cfg.total_ttis
    for s in res.series:
        assert np.allclose(s.ipv[period:], s.ipv[:-period], rtol=1e-12, atol=0)


def test_default_scenario_positive_ipv(default_drop):
    assert default_drop.params.n_antennas == 16
    assert 10 * math.log10(default_drop.params.noise_power * 1e3) == pytest.approx(-101.0)
    assert len(default_drop.series) == len(default_drop.scenario.cell_members(4))
    for s in default_drop.series:
        assert len(s) == 3000
        assert np.all(s.ipv > 0) and np.all(np.isfinite(s.ipv))
        assert np.all(s.signal_power > 0)


def test_rr_served_flags(default_drop):
    k = len(default_drop.scenario.cell_members(4))
    for s in default_drop.series:
        flags = s.served.reshape(-1, k) if len(s) % k == 0 else s.served[: len(s) // k * k].reshape(-1, k)
        assert np.all(flags.sum(axis=1) == 1)
        assert np.all(flags == flags[0])


def test_reproducible_and_seed_sensitive():
    cfg = SimConfig(total_ttis=500, seed=8, scheduler="PFS")
    a, b = run_simulation(cfg), run_simulation(cfg)
    assert all(x == y for x, y in zip(a, b))
    c = run_simulation(cfg.replace(seed=9))
    assert not np.array_equal(a[0].ipv, c[0].ipv)


def test_chunking_does_not_change_results():
    cfg = SimConfig(total_ttis=1500, seed=3, scheduler="PFS")
    a = simulate_drop(cfg)
    b = simulate_drop(cfg, chunk_ttis=317)
    assert np.array_equal(a.served, b.served)
    assert all(x == y for x, y in zip(a.series, b.series))


@pytest.mark.parametrize("scheduler", ["RR", "PFS"])
def test_observer_does_not_perturb(scheduler):
    cfg = SimConfig(total_ttis=800, seed=12, k_min=3, scheduler=scheduler)
    full = simulate_drop(cfg)
    part = simulate_drop(cfg.replace(monitored_ues=(2, 0)))
    assert np.array_equal(full.served, part.served)
    by_ue = {s.ue_idx: s for s in full.series}
    for s in part.series:
        ref = by_ue[s.ue_idx]
        assert np.array_equal(s.ipv, ref.ipv) and np.array_equal(s.signal_power, ref.signal_power)


def test_config_validation():
    with pytest.raises(ConfigError):
        SimConfig(n_cells=8)
    with pytest.raises(ConfigError):
        SimConfig(total_ttis=1)
    with pytest.raises(ConfigError):
        SimConfig(k_min=5, k_max=3)
    with pytest.raises(ConfigError):
        SimConfig(scheduler="EDF")
    with pytest.raises(ConfigError):
        simulate_drop(SimConfig(total_ttis=10, monitored_ues=(99,)))


def test_config_hash_covers_fields():
    a = SimConfig()
    assert a.config_hash() == SimConfig().config_hash()
    assert a.config_hash() != a.replace(drop=1).config_hash()
    assert a.config_hash() != a.replace(scheduler="PFS").config_hash()


def make_series(T=10, seed=0):
    rng = np.random.default_rng(seed)
    return IpvSeries(3, rng.exponential(size=T), rng.exponential(size=T) + 1, rng.random(T) < 0.3,
                     {"config_hash": "abc", "seed": seed})


def test_split_series():
    s = make_series(10)
    tr, ev = split_series(s, 5)
    assert list(tr.ttis) == [0, 1, 2, 3, 4] and list(ev.ttis) == [5, 6, 7, 8, 9]
    assert np.array_equal(ev.signal_power, s.signal_power[5:])
    tr, ev = split_series(s, 9)
    assert len(ev) == 1
    for L in (1, 10, 11):
        with pytest.raises(ValueError):
            split_series(s, L)


def test_split_long_training_window():
    s = make_series(300_000)
    tr, ev = split_series(s, 5000)
    assert len(tr) == 5000 and ev.start == 5000 and len(ev) == 295_000


def test_save_load_round_trip(tmp_path):
    s = make_series(1000)
    s.start = 17
    path = save_series(s, tmp_path / "s.ipvs")
    assert load_series(path) == s


def test_load_rejects_corruption(tmp_path):
    path = save_series(make_series(50), tmp_path / "s.ipvs")
    raw = bytearray(path.read_bytes())
    raw[200] ^= 0xFF
    bad = tmp_path / "bad.ipvs"
    bad.write_bytes(bytes(raw))
    with pytest.raises(ChecksumError):
        load_series(bad)
    raw = bytearray(path.read_bytes())
    raw[8] = 99
    bad.write_bytes(bytes(raw))
    with pytest.raises(SchemaVersionError):
        load_series(bad)
    bad.write_bytes(b"not a series file at all, definitely not" * 2)
    with pytest.raises(SeriesFormatError):
        load_series(bad)


def test_large_series_round_trip_fast(tmp_path):
    s = make_series(300_000)
    t0 = time.perf_counter()
    out = load_series(save_series(s, tmp_path / "big.ipvs"))
    assert time.perf_counter() - t0 < 1.0
    assert out == s


def test_csv_export(tmp_path):
    s = make_series(4)
    text = export_series_csv(s, tmp_path / "s.csv").read_text().splitlines()
    assert text[0] == "tti,ipv_watts,signal_watts,served"
    assert len(text) == 5
    tti, ipv, sig, served = text[1].split(",")
    assert float(ipv) == s.ipv[0] and int(served) == int(s.served[0])
