import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aisac.scenario import (ConfigError, ScenarioConfig, build_grid, channel_set, comm_channel,
                            config_from_json, config_to_json, sensing_channel, steering_vector)


def cfg1(**kw):
    base = dict(grid_cols=20, grid_rows=20, ue_positions=((500.0, 500.0),),
                sensing_positions=((500.0, 500.0),), antenna_count=1)
    base.update(kw)
    return ScenarioConfig(**base)


def test_steering_vector_examples():
    np.testing.assert_allclose(steering_vector(math.pi / 2, 4), np.ones(4), atol=1e-15)
    np.testing.assert_allclose(steering_vector(0.0, 2), [1, -1], atol=1e-15)
    np.testing.assert_allclose(steering_vector(math.pi / 3, 3), [1, -1j, -1], atol=1e-15)
    assert steering_vector(0.7, 5)[0] == 1 + 0j


@given(st.floats(0, math.pi / 2), st.integers(1, 16))
def test_steering_vector_constant_modulus(theta, Q):
    a = steering_vector(theta, Q)
    assert a[0] == 1 + 0j
    np.testing.assert_allclose(np.abs(a), 1.0, rtol=1e-12)


def test_comm_channel_overhead():
    cfg = cfg1()
    h = comm_channel((500.0, 500.0), (500.0, 500.0), cfg)
    assert h.shape == (1,)
    assert abs(abs(h[0]) - 1e-4) < 1e-18
    ch = channel_set((500.0, 500.0), cfg)
    assert ch.theta_ue[0] == 0.0


def test_comm_channel_offset():
    cfg = cfg1(antenna_count=3)
    h = comm_channel((600.0, 500.0), (500.0, 500.0), cfg)
    np.testing.assert_allclose(np.abs(h), math.sqrt(1e-4) / (100 * math.sqrt(2)), rtol=1e-12)
    ch = channel_set((600.0, 500.0), cfg)
    assert ch.theta_ue[0] == pytest.approx(math.pi / 4)
    assert ch.d_ue[0] == pytest.approx(100 * math.sqrt(2))


def test_comm_channel_alternates_when_overhead():
    cfg = cfg1(antenna_count=4)
    h = comm_channel((500.0, 500.0), (500.0, 500.0), cfg)
    np.testing.assert_allclose(h, 1e-4 * np.array([1, -1, 1, -1]), atol=1e-18)


def test_sensing_channel_examples():
    cfg = cfg1()
    G = sensing_channel((500.0, 500.0), (500.0, 500.0), cfg)
    assert abs(abs(G[0, 0]) - 1 / 200) < 1e-15
    # independent evaluation for a 2-element array 300 m off-nadir
    cfg2 = cfg1(antenna_count=2, sensing_positions=((800.0, 500.0),))
    G2 = sensing_channel((500.0, 500.0), (800.0, 500.0), cfg2)
    d = math.hypot(100.0, 300.0)
    c = 100.0 / d
    b = np.array([1.0, complex(math.cos(math.pi * c), -math.sin(math.pi * c))])
    phase = complex(math.cos(2 * math.pi * 3e9 * 2 * d / 2.998e8),
                    -math.sin(2 * math.pi * 3e9 * 2 * d / 2.998e8))
    np.testing.assert_allclose(G2, phase / (2 * d) * np.outer(b, b.conj()), atol=1e-12)


@settings(max_examples=100)
@given(st.floats(0, 1000), st.floats(0, 1000), st.floats(0, 1000), st.floats(0, 1000),
       st.integers(1, 8))
def test_sensing_channel_rank_one(x, y, sx, sy, Q):
    cfg = cfg1(antenna_count=Q, sensing_positions=((sx, sy),))
    G = sensing_channel((x, y), (sx, sy), cfg)
    sv = np.linalg.svd(G, compute_uv=False)
    d = math.sqrt(100.0 ** 2 + (x - sx) ** 2 + (y - sy) ** 2)
    assert sv[0] == pytest.approx(Q / (2 * d), rel=1e-10)
    if Q > 1:
        assert sv[1] <= 1e-10 * sv[0]
    P = G @ G.conj().T / np.linalg.norm(G) ** 2
    w, v = np.linalg.eigh(P)
    b = v[:, -1]
    np.testing.assert_allclose(P, np.outer(b, b.conj()), atol=1e-10)


def test_grid_reference_size():
    cfg = ScenarioConfig()
    g = build_grid(cfg)
    assert g.cell_pitch_x == 50.0 and g.cell_pitch_y == 50.0
    np.testing.assert_allclose(g.center(0), (25.0, 25.0))
    assert g.index_of((25.0, 525.0)) == 10 * 20


def test_grid_single_cell():
    cfg = ScenarioConfig(grid_cols=1, grid_rows=1, area_width=100, area_height=100,
                         ue_positions=((10.0, 10.0),), sensing_positions=(),
                         start=(50.0, 50.0), finish=(50.0, 50.0))
    g = build_grid(cfg)
    assert g.adjacency == ((0,),)


def test_grid_three_by_three():
    cfg = ScenarioConfig(grid_cols=3, grid_rows=3, area_width=300, area_height=300,
                         ue_positions=((10.0, 10.0),), sensing_positions=(),
                         start=(50.0, 150.0), finish=(250.0, 150.0),
                         max_speed=100 * math.sqrt(2))
    g = build_grid(cfg)
    assert len(g.adjacency[4]) == 9
    for i, nbs in enumerate(g.adjacency):
        assert i in nbs
        for j in nbs:
            assert i in g.adjacency[j]
            assert np.linalg.norm(g.center(i) - g.center(j)) <= cfg.max_speed * cfg.slot_len + 1e-9


def test_grid_diagonal_pruned_when_slow():
    cfg = ScenarioConfig(grid_cols=3, grid_rows=3, area_width=300, area_height=300,
                         ue_positions=((10.0, 10.0),), sensing_positions=(),
                         start=(50.0, 150.0), finish=(250.0, 150.0), max_speed=100.0)
    assert len(build_grid(cfg).adjacency[4]) == 5


def test_grid_rejects_immobile_uav():
    cfg = ScenarioConfig(grid_cols=2, grid_rows=2, area_width=1000, area_height=1000,
                         ue_positions=((10.0, 10.0),), sensing_positions=(),
                         start=(250.0, 250.0), finish=(750.0, 250.0), max_speed=10.0)
    with pytest.raises(ConfigError, match="flight distance"):
        build_grid(cfg)


def test_config_validation():
    with pytest.raises(ConfigError):
        ScenarioConfig(period=10.0)
    with pytest.raises(ConfigError):
        ScenarioConfig(start=(30.0, 525.0))
    with pytest.raises(ConfigError):
        ScenarioConfig(ue_positions=((2000.0, 0.0),))
    with pytest.raises(ConfigError):
        ScenarioConfig(noise_dl=0.0)


def test_random_ue_placement_is_seeded():
    a, b, c = ScenarioConfig(rng_seed=3), ScenarioConfig(rng_seed=3), ScenarioConfig(rng_seed=4)
    assert a.ue_positions == b.ue_positions != c.ue_positions
    assert len(a.ue_positions) == 6


def test_json_round_trip():
    cfg = ScenarioConfig(rng_seed=5, rcs=(1 + 0.5j, 2.0, 0.3j))
    doc = config_to_json(cfg)
    back = config_from_json(json.dumps(doc))
    for name in ("uav_max_power", "noise_dl", "sinr_th_sens", "ref_channel_gain",
                 "processing_gain"):
        assert getattr(back, name) == pytest.approx(getattr(cfg, name), rel=1e-12)
    np.testing.assert_allclose(back.ue_tx_power, cfg.ue_tx_power, rtol=1e-12)
    np.testing.assert_allclose(back.rcs, cfg.rcs, rtol=1e-12)
    assert back.ue_positions == cfg.ue_positions


def test_json_units():
    cfg = config_from_json({"ref_channel_gain": -40, "noise_dl": -110, "ue_tx_power": 25})
    assert cfg.ref_channel_gain == pytest.approx(1e-4)
    assert cfg.noise_dl == pytest.approx(1e-14)
    assert cfg.ue_tx_power[0] == pytest.approx(0.316227766, rel=1e-8)
    with pytest.raises(ConfigError, match="unknown"):
        config_from_json({"bogus": 1})
