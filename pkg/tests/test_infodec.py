import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chirpswipt.channel import SystemConfig
from chirpswipt.harvester import DiodeModel, analytic_eta, harvested_energy_chirp, harvested_energy_fixed, user_stats
from chirpswipt.infodec import (LN2, SeriesError, UnsupportedAnalysis, _alternating_sum, bpsk_info_term,
                                bpsk_info_term_digamma, bpsk_mutual_information, rate_chirp, rate_fixed,
                                rate_mc_oracle, sinr_chirp, sinr_fixed)

DIODE = DiodeModel()
# BPSK mutual information (nats) by 30-digit mpmath quadrature
FROZEN_MI = {0.5: 0.20134547158480514, 1.0: 0.33683082034683161, 10.0: 0.69089883845157316}


def setup(cfg, policy="proportional"):
    st_ = user_stats(cfg)
    eta, _ = analytic_eta(cfg, st_, policy)
    return eta, st_


@pytest.mark.parametrize("rho,val", FROZEN_MI.items())
def test_mutual_information_oracle(rho, val):
    assert bpsk_mutual_information(rho) == pytest.approx(val, rel=1e-9)


def test_alternating_sum_known_series():
    # sum (-1)^u / (2u + 1) = pi / 4
    assert _alternating_sum(lambda u: 1.0 / (2 * u + 1), 1e-14) == pytest.approx(math.pi / 4, rel=1e-13)
    with pytest.raises(SeriesError):
        _alternating_sum(lambda u: 1.0, 1e-300, max_terms=10)


@given(st.floats(1e-6, 1e9))
def test_info_term_matches_digamma_form(rho):
    assert bpsk_info_term(rho) == pytest.approx(bpsk_info_term_digamma(rho), rel=1e-10, abs=1e-14)


@given(st.floats(0.0, 1e12))
def test_info_term_range(rho):
    v = bpsk_info_term(rho)
    assert 0.0 <= v <= LN2 + 1e-12


def test_info_term_limits_and_monotone():
    grid = np.logspace(-5, 9, 300)
    vals = [bpsk_info_term(r) for r in grid]
    assert np.all(np.diff(vals) >= 0)
    assert bpsk_info_term(0.0) == 0.0
    assert bpsk_info_term(math.inf) == pytest.approx(LN2, abs=1e-12)
    assert abs(bpsk_info_term(1e6) - bpsk_mutual_information(1e6)) < 1e-3
    with pytest.raises(ValueError):
        bpsk_info_term(-1.0)


def test_series_started_at_one_goes_negative():
    assert bpsk_info_term(1e8, origin=1) == pytest.approx(LN2 - 1.0, abs=1e-3)
    assert bpsk_info_term(1e8, origin=1) < 0


def test_sinr_bounds_order():
    cfg = SystemConfig(M=6, K=3, distances=(8.2, 9.1, 10.0))
    eta, st_ = setup(cfg, "equal")
    for k in range(3):
        lo = sinr_chirp(cfg, eta, st_, k, DIODE, "lower")
        av = sinr_chirp(cfg, eta, st_, k, DIODE, "average")
        up = sinr_chirp(cfg, eta, st_, k, DIODE, "upper")
        assert np.all(lo <= av) and np.all(av <= up)


def test_sinr_vanishes_with_noise():
    cfg = SystemConfig(M=6, sigma2=1e10)
    eta, st_ = setup(cfg)
    assert np.all(sinr_chirp(cfg, eta, st_, 0, DIODE) < 1e-20)


def test_sinr_scale_consistency():
    # scaling eps1 by c acts only on the noise term: same as dividing sigma2 by c^2
    cfg = SystemConfig(M=6, K=2, distances=(8.0, 10.0))
    eta, st_ = setup(cfg, "equal")
    c = 5.0
    a = sinr_chirp(cfg, eta, st_, 1, DiodeModel(Is=c * 0.6e-3, Vt=0.025))
    b = sinr_chirp(cfg.with_(sigma2=cfg.sigma2 / c ** 2), eta, st_, 1, DIODE)
    assert np.allclose(a, b, rtol=1e-12)


def test_rate_restricted_to_two_chirps():
    cfg = SystemConfig(M=4, xi=4)
    eta, st_ = setup(cfg)
    with pytest.raises(UnsupportedAnalysis):
        rate_chirp(cfg, eta, st_, 0, DIODE)


@pytest.mark.parametrize("M", [4, 8, 12])
def test_rate_energy_trade(M):
    cfg = SystemConfig(M=M, distances=(9.1,))
    eta, st_ = setup(cfg)
    fc = cfg.fixed()
    etaf, stf = setup(fc)
    rc, rf = rate_chirp(cfg, eta, st_, 0, DIODE), rate_fixed(fc, etaf, stf, 0, DIODE)
    qc = harvested_energy_chirp(cfg, eta, st_, DIODE)[0].Q_overall
    qf = harvested_energy_fixed(fc, etaf, stf, DIODE)[0].Q_overall
    assert rc.R <= rf.R and qc >= qf
    assert rc.R_upper >= rc.R >= rc.R_lower


def test_branch_scales_rate_down():
    cfg = SystemConfig(M=6)
    eta, st_ = setup(cfg)
    full = rate_chirp(cfg, eta, st_, 0, DIODE).R
    assert rate_chirp(cfg, eta, st_, 0, DIODE, 0.0).R == 0.0
    assert rate_chirp(cfg, eta, st_, 0, DIODE, 0.3).R < full
    fc = cfg.fixed()
    etaf, stf = setup(fc)
    assert np.all(sinr_fixed(fc, etaf, stf, 0, DIODE, 0.5) < sinr_fixed(fc, etaf, stf, 0, DIODE))


def test_demodulation_noiseless_single_user(rng):
    cfg = SystemConfig(M=4, Pp=math.inf)
    eta, _ = setup(cfg)
    res = rate_mc_oracle(cfg, eta, 2000, rng, DIODE, noise=False)
    assert np.all(res.ber == 0.0)


def test_demodulated_sinr_perfect_csi(rng):
    cfg = SystemConfig(M=8, Pp=math.inf)
    eta, st_ = setup(cfg)
    res = rate_mc_oracle(cfg, eta, 10_000, rng, DIODE)
    ref = sinr_chirp(cfg, eta, st_, 0, DIODE, "upper")
    assert np.allclose(res.sinr, ref, rtol=0.05)


def test_bit_errors_fall_with_noise(rng):
    eta, _ = setup(SystemConfig(M=4, Pp=math.inf))
    bers = [rate_mc_oracle(SystemConfig(M=4, Pp=math.inf, sigma2=s), eta, 4000, rng, DIODE).ber.mean()
            for s in (1e-11, 1e-12, 1e-13)]
    assert bers[0] > bers[1] > bers[2]
