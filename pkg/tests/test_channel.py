import numpy as np
import pytest

from preeq_access.channel import (ChannelRealization, PathSet, draw_paths, generate_channel, large_scale_gain,
                                  small_scale_channel, steering_vector)
from preeq_access.errors import NonPositiveDistance
from preeq_access.sysmodel import SystemConfig


def test_steering_examples():
    assert np.allclose(steering_vector(0.0, 4), np.ones(4))
    assert np.allclose(steering_vector(np.pi / 2, 2), [1, -1])
    assert np.allclose(steering_vector(np.pi / 6, 3), np.exp(-1j * np.pi * np.arange(3) / 2))


def test_steering_array_shape():
    assert steering_vector(np.array([0.1, 0.2, 0.3]), 5).shape == (5, 3)


def test_draw_paths_degenerate(rng):
    c = SystemConfig.desk(paths_min=1, paths_max=1, angle_spread_deg=0.0)
    p = draw_paths(rng, c, 0.3)
    assert p.P == 1 and np.all(p.phi == 0.3)


def test_draw_paths_ranges(rng):
    c = SystemConfig()
    for _ in range(200):
        p = draw_paths(rng, c, 0.1)
        assert 8 <= p.P <= 12
        assert np.all(np.abs(p.phi - 0.1) <= np.deg2rad(7.5) + 1e-12)
        assert np.all((p.tau >= 0) & (p.tau <= 1e-6))


def test_mean_path_count():
    rng = np.random.default_rng(0)
    c = SystemConfig()
    counts = [draw_paths(rng, c, 0.0).P for _ in range(10000)]
    assert abs(np.mean(counts) - 10) < 0.1


def test_path_gain_normalization():
    rng = np.random.default_rng(1)
    c = SystemConfig()
    power = [np.sum(np.abs(draw_paths(rng, c, 0.0).beta) ** 2) for _ in range(5000)]
    assert abs(np.mean(power) - 1) < 0.05


def test_small_scale_examples():
    one = PathSet(np.array([0.0]), np.array([0.0]), np.array([1.0 + 0j]))
    assert np.allclose(small_scale_channel(one, 4, 6, 10e6), 1)
    flat = PathSet(np.array([0.4]), np.array([0.0]), np.array([0.3 - 0.2j]))
    H = small_scale_channel(flat, 4, 6, 10e6)
    assert np.allclose(H, H[:, :1])
    cancel = PathSet(np.array([0.2, 0.2]), np.array([3e-7, 3e-7]), np.array([1.0, -1.0]))
    assert np.allclose(small_scale_channel(cancel, 4, 6, 10e6), 0)


def test_zero_spread_is_rank_one(rng):
    c = SystemConfig.desk(angle_spread_deg=0.0)
    ch = generate_channel(rng, c.replace(K=3, Ka=1))
    for m in range(c.M):
        s = np.linalg.svd(ch.H[:, m, :1].reshape(c.N, 1), compute_uv=False)
        assert s.size == 1
    # all paths share the centre angle, so every subcarrier column is collinear with one steering vector
    a = steering_vector(ch.phi_center[0], c.N)
    Hk = ch.H[:, :, 0]
    resid = Hk - np.outer(a, a.conj() @ Hk) / c.N
    assert np.linalg.norm(resid) < 1e-9 * np.linalg.norm(Hk)


def test_path_loss_examples():
    assert np.isclose(large_scale_gain(1.0), 10 ** -12.81)
    assert np.isclose(large_scale_gain(0.1), 10 ** -9.05)
    assert large_scale_gain(0.3) > large_scale_gain(0.6)
    with pytest.raises(NonPositiveDistance):
        large_scale_gain(0.0)


def test_generate_channel_deterministic_and_finite():
    c = SystemConfig.desk()
    a = generate_channel(np.random.default_rng(3), c)
    b = generate_channel(np.random.default_rng(3), c)
    assert np.array_equal(a.H, b.H) and np.array_equal(a.g, b.g)
    assert np.all(np.isfinite(a.H))
    assert np.allclose(a.g, 10 ** (-(128.1 + 37.6 * np.log10(a.d)) / 10))
    assert np.all(np.abs(a.phi_center) <= np.pi / 2)


def test_channel_power_500_ues():
    H = generate_channel(np.random.default_rng(11), SystemConfig()).H
    assert abs(np.mean(np.abs(H) ** 2) - 1) < 0.1


def test_save_load_round_trip(tmp_path):
    ch = generate_channel(np.random.default_rng(2), SystemConfig.desk(K=5, Ka=2))
    path = tmp_path / "ch.npz"
    ch.save(path)
    back = ChannelRealization.load(path)
    assert np.array_equal(back.H, ch.H) and np.array_equal(back.d, ch.d)
    for p, q in zip(back.paths, ch.paths):
        assert np.array_equal(p.beta, q.beta) and np.array_equal(p.tau, q.tau)
