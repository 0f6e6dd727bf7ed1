import numpy as np
import pytest

from crgame import channel as ch
from crgame.units import PathLossParams, default_scenario, free_space_gain, load_scenario


def test_placement_is_deterministic():
    a = ch.place_users(np.random.default_rng(7), 10, 200.0)
    b = ch.place_users(np.random.default_rng(7), 10, 200.0)
    np.testing.assert_array_equal(a, b)
    assert np.all((a >= 0) & (a <= 200.0))


def test_placement_rejects_empty_area():
    with pytest.raises(ValueError):
        ch.place_users(np.random.default_rng(0), 1, 0.0)


def test_placement_mean_coordinate():
    pts = ch.place_users(np.random.default_rng(3), 10_000, 200.0)
    assert np.all(np.abs(pts.mean(axis=0) - 100.0) < 2.0)


def test_reference_distance_gives_reference_gain():
    params = PathLossParams(exponent=2.0, reference_gain=1.0)
    real = ch.static_gains([[1.0, 0.0]], params, num_subcarriers=3)
    np.testing.assert_allclose(real.gains, np.ones((1, 3)))


def test_doubling_distance_quarters_gain():
    params = PathLossParams(exponent=2.0, reference_gain=1.0)
    real = ch.static_gains([[3.0, 0.0], [6.0, 0.0]], params)
    assert real.gains[1, 0] / real.gains[0, 0] == pytest.approx(0.25)


def test_zero_distance_rejected():
    with pytest.raises(ValueError):
        ch.static_gains([[0.0, 0.0]], PathLossParams())


def test_static_fading_has_unit_mean():
    params = PathLossParams(exponent=2.0, reference_gain=1.0, fading=True)
    real = ch.static_gains(np.ones((1, 2)) * [1.0, 0.0], params, np.random.default_rng(1),
                           num_subcarriers=100_000)
    assert abs(real.gains.mean() - 1.0) < 0.02


def test_pu_link_gain():
    p = PathLossParams(exponent=2.0, reference_gain=1.0)
    assert ch.pu_link_gain(1.0, p) == 1.0
    assert ch.pu_link_gain(10.0, p) == pytest.approx(0.01)
    with pytest.raises(ValueError):
        ch.pu_link_gain(0.0, p)


def test_default_pu_gain_from_free_space_calibration():
    cfg = load_scenario(default_scenario())
    c0 = free_space_gain(2.4e9)
    assert c0 == pytest.approx((299_792_458.0 / 2.4e9 / (4 * np.pi)) ** 2)
    assert cfg.pu_gain == pytest.approx(c0 * 50.0 ** -3.0, rel=1e-12)


def test_zero_mean_gives_zero_samples():
    proc = ch.FadingProcess(np.zeros((2, 2)), rng=0)
    assert np.all(proc.draw(5) == 0.0)


def test_same_rng_state_same_draws():
    a = ch.FadingProcess(np.ones((2, 3)), rng=np.random.default_rng(5))
    b = ch.FadingProcess(np.ones((2, 3)), rng=np.random.default_rng(5))
    np.testing.assert_array_equal(ch.sample_fading(a).gains, ch.sample_fading(b).gains)


def test_fading_samples_are_unit_exponential():
    draws = np.sort(ch.FadingProcess(np.ones((1, 1)), rng=11).draw(100_000).ravel())
    ecdf = np.arange(1, draws.size + 1) / draws.size
    ks = np.max(np.abs(ecdf - (1.0 - np.exp(-draws))))
    assert ks < 0.01


def test_fading_draws_are_uncorrelated_across_calls():
    proc = ch.FadingProcess(np.ones((1, 1)), rng=4)
    x = np.array([proc.draw()[0, 0] for _ in range(100_000)])
    x = x - x.mean()
    lag1 = np.dot(x[1:], x[:-1]) / np.dot(x, x)
    assert abs(lag1) < 0.02


def test_gains_nonnegative_and_seeded():
    cfg = load_scenario(default_scenario())
    a = ch.generate_channel(cfg, 3)
    b = ch.generate_channel(cfg, 3)
    np.testing.assert_array_equal(a.gains, b.gains)
    assert np.all(a.gains >= 0) and a.pu_gain >= 0
    assert not np.array_equal(a.gains, ch.generate_channel(cfg, 4).gains)


def test_fading_process_from_config_is_seeded():
    cfg = load_scenario(default_scenario(network={"users": 3, "subcarriers": 3}))
    a, b = ch.fading_process(cfg, 9), ch.fading_process(cfg, 9)
    np.testing.assert_array_equal(a.mean_gains, b.mean_gains)
    np.testing.assert_array_equal(a.draw(3), b.draw(3))


def test_invalid_mean_gains_rejected():
    with pytest.raises(ValueError):
        ch.FadingProcess(-np.ones((2, 2)))


def test_csv_round_trip(tmp_path):
    real = ch.ChannelRealization(np.array([[1e-9, 2.5e-10], [3.0, 4.0]]), 1.25e-7)
    path = tmp_path / "g.csv"
    ch.save_gains_csv(real, path)
    back = ch.load_gains_csv(path)
    np.testing.assert_array_equal(back.gains, real.gains)
    assert back.pu_gain == real.pu_gain
