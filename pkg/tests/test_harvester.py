import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chirpswipt.channel import SystemConfig, estimate_channels, sample_channels
from chirpswipt.harvester import (DiodeModel, HarvestReport, analytic_eta, closed_form_terms, diode_coefficients,
                                  energy_from_powers, fourth_moment_factor, harvest_semi_analytic,
                                  harvest_time_domain, harvested_energy_chirp, harvested_energy_fixed,
                                  psr_harvest_and_split, received_powers, user_stats,
                                  waveform_moment_identities)
from chirpswipt.waveform import WaveformSpec

DIODE = DiodeModel()


def closed(cfg, policy="proportional", weights=None):
    st_ = user_stats(cfg)
    eta, _ = analytic_eta(cfg, st_, policy, weights)
    fn = harvested_energy_fixed if cfg.xi == 1 else harvested_energy_chirp
    return fn(cfg, eta, st_, DIODE)


def test_diode_coefficients():
    assert DIODE.eps == pytest.approx((0.024, 0.48, 6.4, 64.0))
    assert max(diode_coefficients(0.6e-3, 0.025, 1e12)) < 1e-12
    with pytest.raises(ValueError):
        DiodeModel(Is=-1.0)
    with pytest.raises(ValueError):
        DiodeModel(psi=0.0)


@pytest.mark.parametrize("xi,val", [(1, 4.5), (2, 15.0), (3, 31.5)])
def test_fourth_moment_factor(xi, val):
    assert fourth_moment_factor(xi) == val


@pytest.mark.parametrize("xi", [1, 2, 3])
def test_waveform_identities_sampled(xi):
    res = waveform_moment_identities(WaveformSpec(200e3, 6, xi), 4096, seed=xi)
    for name, (est, target, ci) in res.items():
        assert est == pytest.approx(target, rel=0.02), name


def test_report_composition():
    rep = closed(SystemConfig(M=8))[0]
    assert rep.Q == rep.linear + rep.nonlinear
    assert rep.Q_overall == pytest.approx(rep.tau_dl / rep.T * rep.Q)
    assert rep.q == 0.0 and rep.r == 0.0


def test_fixed_mode_has_no_pairing_term():
    cfg = SystemConfig(M=8).fixed()
    st_ = user_stats(cfg)
    eta, _ = analytic_eta(cfg, st_, "proportional")
    lin, nl, p, q, r = closed_form_terms(cfg, eta, st_, DIODE, 0)
    assert fourth_moment_factor(1) / 3 == 1.5
    assert lin > 0 and nl > 0


def test_eta_shape_checked():
    cfg = SystemConfig(M=4)
    st_ = user_stats(cfg)
    with pytest.raises(ValueError):
        closed_form_terms(cfg, np.ones((1, 3)), st_, DIODE, 0)


def test_energy_monotone_in_antennas():
    q = [closed(SystemConfig(M=M))[0].Q for M in range(2, 13, 2)]
    assert all(b >= a for a, b in zip(q, q[1:]))


@pytest.mark.parametrize("Pp", [1e-7, 1e-5, 1e-3])
def test_perfect_csi_upper_bounds_energy(Pp):
    assert closed(SystemConfig(M=8, Pp=math.inf))[0].Q >= closed(SystemConfig(M=8, Pp=Pp))[0].Q


@given(st.integers(2, 12), st.floats(6.0, 14.0), st.sampled_from([1e-7, 1e-4, math.inf]))
def test_chirp_beats_fixed(M, D, Pp):
    cfg = SystemConfig(M=M, distances=(D,), Pp=Pp)
    assert closed(cfg)[0].Q_overall >= closed(cfg.fixed())[0].Q_overall


def test_energy_falls_with_distance():
    q = [closed(SystemConfig(M=6, distances=(D,)))[0].Q for D in (6, 8, 10, 12)]
    assert all(b < a for a, b in zip(q, q[1:]))


def test_multi_user_terms_present():
    cfg = SystemConfig(M=6, K=3, distances=(8.2, 9.1, 10.0))
    reps = closed(cfg, "equal")
    assert all(r.q > 0 and r.r > 0 for r in reps)
    # nearer users harvest more
    assert reps[0].Q > reps[1].Q > reps[2].Q


@pytest.mark.parametrize("M", [4, 12])
def test_closed_form_linear_term_vs_semi_analytic(rng, M):
    cfg = SystemConfig(M=M, Pp=1e-4)
    rep = closed(cfg)[0]
    lin, nl = harvest_semi_analytic(cfg, rng, 40_000, DIODE)
    assert rep.linear == pytest.approx(lin.mean(), rel=0.02)
    assert rep.Q == pytest.approx((lin + nl).mean(), rel=0.10)


def test_semi_analytic_matches_time_domain_oracle(rng):
    # same channel, data averaged: exact moment formula against sampled waveform + LPF
    cfg = SystemConfig(M=4, N=4, K=2, distances=(8.0, 9.0), Pp=math.inf)
    ch = estimate_channels(cfg, sample_channels(cfg, rng), rng)
    v, _ = received_powers(cfg, ch.g, ch.ghat, "proportional")
    lin, nl = energy_from_powers(cfg, v, DIODE)
    mean, vals = harvest_time_domain(cfg, ch.g, ch.ghat, DIODE, rng, data_draws=3000)
    ci = 1.96 * vals.std(axis=0, ddof=1) / math.sqrt(vals.shape[0])
    assert np.all(np.abs(mean - (lin + nl)) < 2 * ci + 1e-3 * (lin + nl))


def test_odd_orders_vanish_after_lowpass(rng):
    cfg = SystemConfig(M=2, N=4, Pp=math.inf)
    ch = estimate_channels(cfg, sample_channels(cfg, rng), rng)
    seed = 99
    a, _ = harvest_time_domain(cfg, ch.g, ch.ghat, DIODE, np.random.default_rng(seed), data_draws=8)
    b, _ = harvest_time_domain(cfg, ch.g, ch.ghat, DIODE, np.random.default_rng(seed), data_draws=8, keep_odd=False)
    assert a == pytest.approx(b, rel=1e-6)


def test_psr_split():
    rep = HarvestReport(linear=2.0, nonlinear=1.0, p=0, q=0, r=0, T=1.0, tau_dl=1.0)
    assert psr_harvest_and_split(rep, 1.0) == (3.0, 0.0)
    assert psr_harvest_and_split(rep, 0.0) == (0.0, 1.0)
    assert psr_harvest_and_split(rep, 0.5)[0] == pytest.approx(0.5 * 2 + 0.25 * 1)
    with pytest.raises(ValueError):
        psr_harvest_and_split(rep, 1.5)
