import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chirpswipt.channel import (SystemConfig, estimate_channels, estimate_variance, inner_product,
                                mmse_gain, path_loss, pilot_book, pilot_statistic,
                                pilot_statistic_time_domain, pilot_waveform, sample_channels)


@pytest.mark.parametrize("D,beta", [(10.0, 1e-6), (1.0, 1e-3), (8.2, 1.8137e-6)])
def test_path_loss(D, beta):
    assert path_loss(D) == pytest.approx(beta, rel=1e-4)


def test_path_loss_domain():
    with pytest.raises(ValueError):
        path_loss(0.0)


def test_config_defaults_and_timing():
    cfg = SystemConfig()
    assert cfg.Ntil == 8 and cfg.eps_pilot == 1
    assert cfg.tau_p + cfg.tau_dl == pytest.approx(cfg.tau_ch)
    assert cfg.T == pytest.approx(2 * cfg.To)
    f = cfg.fixed()
    assert (f.xi, f.Ntil) == (1, 16)


@pytest.mark.parametrize("kw", [dict(N=15), dict(Ntil=4), dict(eps_pilot=1, K=2), dict(K=2, distances=(1, 2, 3)),
                                dict(M=0), dict(tau_ch=1e-7)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SystemConfig(**kw)


def test_perfect_and_absent_csi(rng):
    ch = sample_channels(SystemConfig(Pp=math.inf), rng)
    est = estimate_channels(SystemConfig(Pp=math.inf), ch, rng)
    assert np.array_equal(est.ghat, ch.g)
    none = estimate_channels(SystemConfig(Pp=0.0), ch, rng)
    assert np.all(none.ghat == 0)
    assert SystemConfig(Pp=math.inf).gamma[0] == pytest.approx(SystemConfig().beta[0])


@given(st.floats(-9, -1), st.floats(5, 15))
def test_estimate_variance_bounded(logPp, D):
    cfg = SystemConfig(Pp=10 ** logPp, distances=(D,))
    g, b = cfg.gamma[0], cfg.beta[0]
    assert 0 < g <= b


def test_estimate_variance_monotone_in_pilot_power():
    vals = [estimate_variance(1e-6, Ep, 16, 1e-20) for Ep in (1e-16, 1e-14, 1e-12, math.inf)]
    assert np.all(np.diff(np.array(vals, dtype=float)) > 0)


def test_channel_statistics(rng):
    cfg = SystemConfig(M=4, K=2, distances=(8.0, 10.0), Pp=1e-7)
    ch = estimate_channels(cfg, sample_channels(cfg, rng, size=25_000), rng)
    for k in range(2):
        g, gh = ch.g[..., k, :], ch.ghat[..., k, :]
        assert np.mean(np.abs(g) ** 2) == pytest.approx(cfg.beta[k], rel=0.02)
        assert np.var(gh) / np.var(g) == pytest.approx(cfg.gamma[k] / cfg.beta[k], rel=0.02)
        err = (g - gh).ravel()
        c = abs(np.vdot(gh.ravel(), err)) / (np.linalg.norm(gh) * np.linalg.norm(err))
        assert c < 1e-2
    # independence across subbands
    a, b = ch.g[:, 0, 0, 0], ch.g[:, 1, 0, 0]
    assert abs(np.vdot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b)) < 0.03


def test_pilot_book_orthonormal():
    P = pilot_book(4, 3)
    assert np.allclose(P @ P.conj().T / 4, np.eye(3))
    with pytest.raises(ValueError):
        pilot_book(2, 3)


def test_pilot_waveform_inner_products():
    cfg = SystemConfig(K=2, N=4, xi=2, M=2)
    fs = 16 * cfg.waveform().max_frequency
    p0, p1 = pilot_waveform(cfg, 0, 2), pilot_waveform(cfg, 1, 2)
    assert inner_product(p0, p0, fs, segments=2).real == pytest.approx(cfg.eps_pilot * cfg.To, rel=1e-3)
    assert abs(inner_product(p0, p1, fs, segments=2)) < 1e-3 * cfg.To


def test_time_domain_pilot_matches_statistic(rng):
    # noiseless comparison of the slow synthesis against the despread statistic
    cfg = SystemConfig(K=2, N=4, xi=2, M=2, sigma2=1e-40, Pp=1e-2)
    g = sample_channels(cfg, rng).g
    fast = math.sqrt(cfg.Ep / cfg.N) * g
    slow = pilot_statistic_time_domain(cfg, g, rng)
    assert np.max(np.abs(slow - fast)) / np.max(np.abs(fast)) < 1e-3


def test_mmse_gain_consistent_with_variance(rng):
    cfg = SystemConfig(Pp=1e-7)
    a = math.sqrt(cfg.Ep / cfg.N)
    c = mmse_gain(cfg)[0]
    # var(c y) = c^2 (a^2 beta + sigma2) = gamma
    assert c * c * (a * a * cfg.beta[0] + cfg.sigma2) == pytest.approx(cfg.gamma[0], rel=1e-12)
    y = pilot_statistic(cfg, np.zeros((4, 1, 2), complex), rng)
    assert y.shape == (4, 1, 2)


def test_with_resets_dependents():
    cfg = SystemConfig(K=3, distances=(8.0, 9.0, 10.0))
    assert cfg.with_(K=1).distances == (8.0,)
    assert cfg.with_(xi=4).Ntil == 4


def test_time_domain_pilot_noise_variance(rng):
    cfg = SystemConfig(K=1, N=2, xi=2, M=200, sigma2=1e-20)
    stat = pilot_statistic_time_domain(cfg, np.zeros((2, 1, 200), complex), rng)
    assert np.mean(np.abs(stat) ** 2) == pytest.approx(cfg.sigma2, rel=0.15)
