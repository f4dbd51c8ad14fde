"""Segmentation sampler: variance conditional, pixel sweep, latent state."""

import itertools

import numpy as np
import pytest
from scipy import stats as sps

from wlposterior.models.imageseg import (
    ImageSegSampler,
    pixel_sweep,
    sigma2_draw,
    simulate_noisy_image,
)
from wlposterior.models.ising import bond_sum, random_lattice


def rng(seed):
    return np.random.default_rng(seed)


# ---------------------------------------------------------------- data


def test_simulate_rejects_negative_sigma():
    with pytest.raises(ValueError):
        simulate_noisy_image(np.ones((2, 2), dtype=np.int8), -1.0, rng(0))


def test_simulate_zero_noise_copies_lattice():
    x = random_lattice(3, 3, rng(1))
    y = simulate_noisy_image(x, 0.0, rng(2))
    assert y.dtype == np.float64
    assert np.array_equal(y, x.astype(np.float64))


def test_simulate_noise_moments():
    x = np.ones((200, 200), dtype=np.int8)
    y = simulate_noisy_image(x, 0.7, rng(3))
    noise = y - 1.0
    assert abs(noise.mean()) < 0.02
    assert abs(noise.std() - 0.7) < 0.02


# ---------------------------------------------------------------- sigma^2


def test_sigma2_draw_rejects_zero_residual():
    x = np.ones((2, 2), dtype=np.int8)
    with pytest.raises(ValueError, match="zero residual"):
        sigma2_draw(x, x.astype(np.float64), rng(0))


def test_sigma2_draw_mean_matches_inverse_gamma():
    x = np.ones((10, 10), dtype=np.int8)
    y = simulate_noisy_image(x, 0.5, rng(4))
    ssr = float(((y - x) ** 2).sum())
    a = x.size / 2.0
    b = ssr / 2.0
    g = rng(5)
    draws = np.array([sigma2_draw(x, y, g) for _ in range(100_000)])
    assert abs(draws.mean() - b / (a - 1.0)) < 0.02 * b / (a - 1.0)


def test_sigma2_draw_distribution_ks():
    x = np.ones((8, 8), dtype=np.int8)
    y = simulate_noisy_image(x, 0.4, rng(6))
    ssr = float(((y - x) ** 2).sum())
    a = x.size / 2.0
    b = ssr / 2.0
    g = rng(7)
    draws = np.array([sigma2_draw(x, y, g) for _ in range(20_000)])
    res = sps.kstest(draws, "invgamma", args=(a, 0.0, b))
    assert res.pvalue > 0.001


# ---------------------------------------------------------------- sweep


def test_pixel_sweep_rejects_nonpositive_variance():
    x = np.ones((2, 2), dtype=np.int8)
    with pytest.raises(ValueError):
        pixel_sweep(x, x.astype(float), 0.3, 0.0, rng(0))


def test_single_pixel_conditional_frequency():
    y = np.array([[0.3]])
    p_up = 1.0 / (1.0 + np.exp(-2.0 * 0.3 / 0.8))
    g = rng(8)
    n = 20_000
    ups = 0
    x = np.ones((1, 1), dtype=np.int8)
    for _ in range(n):
        pixel_sweep(x, y, 0.5, 0.8, g)
        ups += int(x[0, 0] == 1)
    band = 4.0 * np.sqrt(p_up * (1 - p_up) / n)
    assert abs(ups / n - p_up) < band


def test_strong_data_pins_the_lattice():
    y = np.full((3, 3), 50.0)
    x = -np.ones((3, 3), dtype=np.int8)
    pixel_sweep(x, y, 0.2, 1.0, rng(9))
    assert np.all(x == 1)


def test_pixel_sweep_preserves_conditional_law_1x2():
    theta, sigma2 = 0.4, 0.6
    y = np.array([[0.2, -0.5]])
    states = [np.array([[a, b]], dtype=np.int8) for a, b in itertools.product((-1, 1), repeat=2)]
    logw = np.array(
        [theta * s[0, 0] * s[0, 1] - ((y - s) ** 2).sum() / (2 * sigma2) for s in states]
    )
    p = np.exp(logw - logw.max())
    p /= p.sum()
    g = rng(10)
    x = states[0].copy()
    for _ in range(200):
        pixel_sweep(x, y, theta, sigma2, g)
    counts = np.zeros(4)
    keep = 20_000
    for k in range(keep * 5):
        pixel_sweep(x, y, theta, sigma2, g)
        if k % 5 == 0:
            idx = int((x[0, 0] > 0) * 2 + (x[0, 1] > 0))
            counts[idx] += 1
    order = [int((s[0, 0] > 0) * 2 + (s[0, 1] > 0)) for s in states]
    f_exp = np.zeros(4)
    for pi, oi in zip(p, order):
        f_exp[oi] = pi * keep
    res = sps.chisquare(counts, f_exp=f_exp)
    assert res.pvalue > 0.001


# ---------------------------------------------------------------- sampler


def test_sampler_initializes_by_thresholding():
    y = np.array([[0.4, -0.2], [1.5, -0.001]])
    s = ImageSegSampler(y)
    assert np.array_equal(s.x, np.array([[1, -1], [1, -1]], dtype=np.int8))
    assert s.sigma2 == pytest.approx(float(y.var()))
    assert s.current_stats[0] == float(bond_sum(s.x))


def test_gibbs_pass_updates_state_and_stats():
    truth = random_lattice(6, 6, rng(11))
    y = simulate_noisy_image(truth, 0.5, rng(12))
    s = ImageSegSampler(y)
    s.gibbs_pass(0.4, rng(13))
    assert s.sigma2 > 0.0
    assert s.current_stats[0] == float(bond_sum(s.x))


def test_state_dict_round_trip_resumes_identically():
    truth = random_lattice(5, 5, rng(14))
    y = simulate_noisy_image(truth, 0.6, rng(15))
    a = ImageSegSampler(y)
    for _ in range(3):
        a.gibbs_pass(0.3, rng(16))
    saved = a.state_dict()
    g1 = rng(17)
    for _ in range(2):
        a.gibbs_pass(0.3, g1)
    b = ImageSegSampler(y)
    b.load_state_dict(saved)
    g2 = rng(17)
    for _ in range(2):
        b.gibbs_pass(0.3, g2)
    assert np.array_equal(a.x, b.x)
    assert a.sigma2 == b.sigma2
    assert np.array_equal(a.current_stats, b.current_stats)


def test_state_dict_is_a_copy():
    y = simulate_noisy_image(random_lattice(3, 3, rng(18)), 0.5, rng(19))
    s = ImageSegSampler(y)
    saved = s.state_dict()
    s.x[0, 0] = -s.x[0, 0]
    assert saved["x"][0, 0] == -s.x[0, 0]
