import numpy as np
import pytest

from oracles import dda_channel_scalar
from leo_gfra.channel import (PathParams, build_dda_channel, load_scenario, mask_activity,
                              sample_activity, sample_paths, scenario_record, true_support)
from leo_gfra.config import SystemConfig


def test_activity_degenerate():
    assert sample_activity(SystemConfig(p_lambda=0.0), 1).sum() == 0
    assert sample_activity(SystemConfig(p_lambda=1.0), 1).sum() == 40


def test_activity_mean_count():
    cfg = SystemConfig(U=40, p_lambda=0.1)
    counts = [sample_activity(cfg, s).sum() for s in range(10_000)]
    # std of the mean is sqrt(40*0.09/1e4) = 0.019
    assert abs(np.mean(counts) - 4.0) < 0.2


def test_activity_reproducible():
    cfg = SystemConfig()
    np.testing.assert_array_equal(sample_activity(cfg, 7), sample_activity(cfg, 7))


def test_paths_degenerate_delay_and_single_path():
    cfg = SystemConfig(delay_range=(0.0, 0.0), P=1)
    p = sample_paths(cfg, 3)
    assert np.all(p.tau == 0)
    big = SystemConfig(U=20_000, P=1)
    g = sample_paths(big, 4).gain
    assert np.mean(np.abs(g) ** 2) == pytest.approx(1.0, abs=0.03)


def test_paths_ranges_default_config():
    cfg = SystemConfig(U=100_000 // 3 + 1, P=3)
    p = sample_paths(cfg, 11)
    assert p.nu.size >= 100_000
    assert p.nu.min() >= -41e3 and p.nu.max() <= 41e3
    assert p.tau.min() >= 0 and p.tau.max() <= 4.44e-3
    assert np.abs(p.theta_y).max() <= 1 and np.abs(p.theta_z).max() <= 1
    assert np.mean(np.sum(np.abs(p.gain) ** 2, axis=1)) == pytest.approx(1.0, abs=0.02)


def test_empty_range_rejected():
    with pytest.raises(ValueError):
        SystemConfig(doppler_range=(1.0, -1.0))


def _single_path(cfg, k0, l0, ty=0.3, tz=-0.6, gain=0.8 - 0.5j):
    nu = k0 / (cfg.N * cfg.T_sym)
    one = lambda v: np.full((1, 1), v)
    return PathParams(one(gain), one(l0 * cfg.T_s), one(nu), one(ty), one(tz))


def test_on_grid_single_path_support():
    cfg = SystemConfig(U=1, M=8, N=5, N_y=2, N_z=2, P=1, M_cp=12)
    k0, l0 = 7, 3
    H = build_dda_channel(_single_path(cfg, k0, l0), [1], cfg)
    nz = np.argwhere(np.abs(H).sum(axis=-1) > 1e-9)
    row = (k0 + cfg.N // 2) % cfg.N  # storage row of the centered index <k0>_N
    assert {tuple(x[2:]) for x in nz} == {(l0, row)}
    assert len({x[0] for x in nz}) == cfg.M


def test_delay_phase_ratio():
    cfg = SystemConfig(U=1, M=8, N=5, N_y=2, N_z=2, P=1, M_cp=12)
    p = _single_path(cfg, 1.37, 2)
    H = build_dda_channel(p, [1], cfg)
    mask = np.abs(H[0]) > 1e-9
    ratio = H[1:][:, mask] / H[:-1][:, mask]
    np.testing.assert_allclose(ratio, np.exp(2j * np.pi * cfg.T_s * p.nu[0, 0]), rtol=1e-12)


def test_against_scalar_evaluation(small_cfg):
    rng = np.random.default_rng(5)
    for _ in range(5):
        act = [1, 1]
        paths = sample_paths(small_cfg.replace(shared_delay=False), rng)
        np.testing.assert_allclose(build_dda_channel(paths, act, small_cfg),
                                   dda_channel_scalar(paths, act, small_cfg), atol=1e-12)


def test_inactive_device_zero_and_masking_idempotent(small_cfg):
    paths = sample_paths(small_cfg, 2)
    H = build_dda_channel(paths, [0, 1], small_cfg)
    assert np.all(H[:, 0] == 0) and np.any(H[:, 1] != 0)
    np.testing.assert_array_equal(mask_activity(H, [0, 1]), mask_activity(mask_activity(H, [0, 1]), [0, 1]))


def test_energy_independent_of_parameters_on_grid():
    cfg = SystemConfig(U=1, M=8, N=5, N_y=2, N_z=2, P=1, M_cp=12)
    energies = []
    for k0, l0, ty, tz in [(0, 0, 0.0, 0.0), (3, 5, 1.0, -1.0), (-2, 7, 0.5, -0.5)]:
        H = build_dda_channel(_single_path(cfg, k0, l0, ty, tz, gain=1.0), [1], cfg)
        energies.append(np.sum(np.abs(H[0]) ** 2))
    np.testing.assert_allclose(energies, cfg.N_a, rtol=1e-6)


def test_true_support_examples():
    cfg = SystemConfig(U=1, M=8, N=5, N_y=2, N_z=2, P=1, M_cp=12)
    assert np.all(true_support(np.zeros((8, 1, 8, 5, 4))) == -1)
    H = build_dda_channel(_single_path(cfg, 2, 4, ty=0.0, tz=1.0), [1], cfg)
    S = true_support(H, 0.99)
    assert (S == 1).sum() == 1 and np.all(S[0, 4].max() == 1)
    assert np.all(np.delete(S[0], 4, axis=0) == -1)
    # off-grid Doppler leaks into neighbouring rows around the peak
    H = build_dda_channel(_single_path(cfg, 2.4, 4, ty=0.0, tz=1.0), [1], cfg)
    S = true_support(H, 0.999)
    rows = np.flatnonzero((S[0, 4] == 1).any(axis=1))
    assert rows.size > 1 and np.all(np.diff(rows) == 1)


def test_scenario_roundtrip_bit_exact(small_cfg):
    paths = sample_paths(small_cfg, 9)
    act = sample_activity(small_cfg.replace(p_lambda=0.5), 9)
    text = scenario_record(small_cfg, act, paths, 9)
    cfg2, act2, paths2, seed = load_scenario(text)
    assert cfg2 == small_cfg and seed == 9
    np.testing.assert_array_equal(build_dda_channel(paths2, act2, cfg2),
                                  build_dda_channel(paths, act, small_cfg))
