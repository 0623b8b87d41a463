"""Nonlinear rectifier model and average harvested energy.

Three routes to the same quantity:

* ``harvested_energy_chirp`` / ``harvested_energy_fixed``: closed form in
  terms of the ordered-gain moments, with the per-term breakdown.
* ``harvest_semi_analytic``: expectation over channels by sampling, with the
  data/time average done exactly through the waveform moment identities.
* ``harvest_time_domain``: samples the received waveform, applies the diode
  polynomial and a brick-wall low-pass, and integrates.

Received amplitudes use the real model ``|g^T phi*|`` per (subband, stream);
carrier phases of the complex gains are not tracked.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import SystemConfig, estimate_channels, sample_channels
from .orderstat import OrderStats, order_stat_table
from .txscheme import allocate_power, order_and_select, precoder, subband_gains
from .waveform import WaveformSpec, chirp_bank, lowpass, multisine_bank, time_grid
from scipy.integrate import trapezoid


@dataclass(frozen=True)
class DiodeModel:
    Is: float = 0.6e-3
    Vt: float = 0.025
    theta: float = 1.0
    psi: float = 1.0

    def __post_init__(self):
        if not (self.Is > 0 and self.Vt > 0 and self.theta > 0):
            raise ValueError("diode parameters must be positive")
        if not 0 < self.psi <= 1:
            raise ValueError("conversion efficiency must be in (0, 1]")

    @property
    def eps(self) -> tuple:
        return diode_coefficients(self.Is, self.Vt, self.theta)


def diode_coefficients(Is, Vt, theta):
    """Taylor coefficients ``eps_m = Is/m! * (1/(theta Vt))**m`` for m = 1..4."""
    if not (Is > 0 and Vt > 0 and theta > 0):
        raise ValueError("diode parameters must be positive")
    a = 1.0 / (theta * Vt)
    return tuple(Is / math.factorial(m) * a ** m for m in range(1, 5))


def fourth_moment_factor(xi: int) -> float:
    """``E int [S^4]_LPF dt / T`` for Gaussian unit-variance symbols."""
    return 4.5 * xi + 6.0 * math.comb(xi, 2)


@dataclass
class HarvestReport:
    """Closed-form energy for one user, J per symbol, with term breakdown."""

    linear: float
    nonlinear: float
    p: float
    q: float
    r: float
    T: float
    tau_dl: float
    Q_mc: float | None = None
    ci_mc: float | None = None

    @property
    def Q(self) -> float:
        return self.linear + self.nonlinear

    @property
    def Q_overall(self) -> float:
        return self.tau_dl / self.T * self.Q


def closed_form_terms(cfg: SystemConfig, eta: np.ndarray, stats: list, diode: DiodeModel, k: int):
    """Linear and fourth-order energy terms for user ``k``.

    ``eta`` is ``[K, Ntil]`` in rank order; ``stats[k]`` holds the per-rank
    ordered moments of user ``k``. The squared coefficient of the desired
    signal is kept inside the rank sum.
    """
    eps1, eps2, eps3, eps4 = diode.eps
    xi, T, P = cfg.xi, cfg.T, cfg.Ptx
    Ntil = cfg.Ntil
    K = eta.shape[0]
    if eta.shape[1] != Ntil:
        raise ValueError(f"eta has {eta.shape[1]} ranks, expected {Ntil}")
    s = stats[k]
    if len(s.omega1) < Ntil:
        raise ValueError("order statistics shorter than the selection")
    beta = cfg.beta[k]
    gam = cfg.gamma[k]
    Om1, Om2, Ups = s.omega1[:Ntil], s.omega2[:Ntil], s.upsilon[:Ntil]
    ek = eta[k]
    others = np.delete(eta, k, axis=0)  # K-1, Ntil
    sum_others = others.sum(axis=0)

    linear = eps2 * P * xi * T * float(np.sum(ek * (Om1 + Ups) + beta * sum_others))

    c4 = fourth_moment_factor(xi) / 3.0
    own = ek * (Om1 + Ups)
    p = (c4 * float(np.sum(ek ** 2 * (gam * Om2 + (6 * Om1 + Ups) * Ups)))
         + xi ** 2 * (own.sum() ** 2 - float(np.sum(own ** 2))))

    if K > 1:
        sq = float(np.sum(others ** 2))
        pair = float(np.sum(sum_others ** 2) - np.sum(others ** 2))  # j != p, both != k
        cross = float(sum_others.sum() ** 2 - np.sum(sum_others ** 2))  # n != u
        q = beta ** 2 * (c4 * sq + xi ** 2 * pair + xi ** 2 * cross)
        r = xi ** 2 * beta * float(own.sum()) * float(sum_others.sum())
    else:
        q = r = 0.0
    nonlinear = 3.0 * eps4 * P ** 2 * T * (p + q + 2.0 * r)
    psi = diode.psi
    return psi * linear, psi * nonlinear, p, q, r


def user_stats(cfg: SystemConfig) -> list:
    beta, gamma = cfg.beta, cfg.gamma
    return [order_stat_table(cfg.N, cfg.M, beta[k], gamma[k]) for k in range(cfg.K)]


def analytic_eta(cfg: SystemConfig, stats: list, policy: str, weights=None):
    """Deterministic coefficients from applying the policy to the mean ordered gains."""
    gains = np.array([s.omega1[:cfg.Ntil] for s in stats])
    return allocate_power(policy, gains, cfg.xi, cfg.beta, weights)


def harvested_energy_chirp(cfg: SystemConfig, eta: np.ndarray, stats: list, diode: DiodeModel) -> list:
    """Closed-form energy per user for superimposed chirps over the selected subbands."""
    out = []
    for k in range(cfg.K):
        lin, nl, p, q, r = closed_form_terms(cfg, eta, stats, diode, k)
        out.append(HarvestReport(lin, nl, p, q, r, cfg.T, cfg.tau_dl))
    return out


def harvested_energy_fixed(cfg: SystemConfig, eta: np.ndarray, stats: list, diode: DiodeModel) -> list:
    """Closed-form energy for fixed-frequency tones on all N subbands (``xi = 1``)."""
    fcfg = cfg if (cfg.xi == 1 and cfg.Ntil == cfg.N) else cfg.fixed()
    return harvested_energy_chirp(fcfg, eta, stats, diode)


# ---------------------------------------------------------------- Monte Carlo

def received_powers(cfg: SystemConfig, g: np.ndarray, ghat: np.ndarray, policy: str, weights=None):
    """Per-subband received power ``v[..., k, m]`` at each user.

    ``v = sum_j Ptx eta_{m,j} |g_{m,k}^T phi*_{m,j}|^2`` with ``eta`` zero on
    subbands outside user ``j``'s selection. Batched over leading axes.
    """
    gains = subband_gains(ghat)  # ..., K, N
    Xi = order_and_select(gains, cfg.Ntil)
    sel = np.take_along_axis(gains, Xi, axis=-1)
    eta, _ = allocate_power(policy, sel, cfg.xi, cfg.beta, weights)
    lead = gains.shape[:-2]
    eta_full = np.zeros(lead + (cfg.K, cfg.N))
    np.put_along_axis(eta_full, Xi, eta, axis=-1)
    norm = np.linalg.norm(ghat, axis=-1, keepdims=True)
    phi = ghat / np.where(norm > 0, norm, 1.0)  # ..., N, K(j), M
    # c[..., m, k, j] = g_{m,k}^T phi*_{m,j}
    c = np.einsum("...mkq,...mjq->...mkj", g, np.conj(phi))
    amp2 = np.abs(c) ** 2
    v = cfg.Ptx * np.einsum("...mkj,...jm->...km", amp2, eta_full)
    return v, eta_full


def energy_from_powers(cfg: SystemConfig, v: np.ndarray, diode: DiodeModel):
    """Exact data/time average of the diode output for per-subband powers ``v[..., m]``."""
    eps = diode.eps
    xi, T = cfg.xi, cfg.T
    s1 = v.sum(axis=-1)
    s2 = (v * v).sum(axis=-1)
    lin = eps[1] * xi * T * s1
    nl = eps[3] * (fourth_moment_factor(xi) * T * s2 + 3.0 * xi ** 2 * T * (s1 * s1 - s2))
    return diode.psi * lin, diode.psi * nl


def harvest_semi_analytic(cfg: SystemConfig, rng: np.random.Generator, count: int, diode: DiodeModel,
                          policy: str = "proportional", weights=None):
    """``count`` channel realizations; returns per-realization ``(linear, nonlinear)`` arrays ``[count, K]``."""
    ch = sample_channels(cfg, rng, size=count)
    ch = estimate_channels(cfg, ch, rng)
    v, _ = received_powers(cfg, ch.g, ch.ghat, policy, weights)
    return energy_from_powers(cfg, v, diode)


def harvest_time_domain(cfg: SystemConfig, g: np.ndarray, ghat: np.ndarray, diode: DiodeModel,
                        rng: np.random.Generator, data_draws: int = 64, policy: str = "proportional",
                        weights=None, fs: float | None = None, f0=None, keep_odd: bool = True):
    """Sampled-waveform oracle for one channel realization (``g``: ``[N, K, M]``).

    Builds ``y_k(t)`` from the per-stream amplitudes, evaluates
    ``sum_m eps_m [y^m]_LPF`` with a brick-wall filter at ``f0/2`` and
    integrates over the symbol. Returns ``(mean, per-draw values)`` with
    shape ``[K]`` and ``[data_draws, K]``; odd orders are included so their
    vanishing is checked rather than assumed.
    """
    spec = WaveformSpec(cfg.B, cfg.N, cfg.xi, f0)
    fixed = cfg.xi == 1 and cfg.Ntil == cfg.N
    fs = fs or spec.default_fs()
    gains = subband_gains(ghat)
    Xi = order_and_select(gains, cfg.Ntil)
    sel = np.take_along_axis(gains, Xi, axis=-1)
    eta, _ = allocate_power(policy, sel, cfg.xi, cfg.beta, weights)
    phi = precoder(ghat[Xi, np.arange(cfg.K)[:, None]])  # K(j), Ntil, M
    dur = spec.To if fixed else spec.T
    t = time_grid(dur, fs)
    bank = multisine_bank(spec, t)[:, None, :] if fixed else math.sqrt(2.0) * chirp_bank(spec, t)
    eps = diode.eps
    vals = np.zeros((data_draws, cfg.K))
    for d in range(data_draws):
        data = rng.standard_normal((cfg.K, cfg.Ntil, cfg.xi))
        for k in range(cfg.K):
            y = np.zeros(t.size)
            for j in range(cfg.K):
                for r in range(cfg.Ntil):
                    m = Xi[j, r]
                    a = abs(g[m, k] @ np.conj(phi[j, r]))
                    y += math.sqrt(cfg.Ptx * eta[j, r]) * a * (data[j, r] @ bank[m])
            orders = range(1, 5) if keep_odd else (2, 4)
            acc = sum(eps[m - 1] * y ** m for m in orders)
            vals[d, k] = diode.psi * trapezoid(lowpass(acc, fs, spec.f0 / 2), t)
    return vals.mean(axis=0), vals


def waveform_moment_identities(spec: WaveformSpec, draws: int, rng=None, fs: float | None = None,
                               pair=(1, 2), seed: int | None = None):
    """Sampled checks of ``E int S^2``, ``E int [S^4]_LPF`` and ``E int [S_n^2 S_u^2]_LPF``.

    Data are unit Gaussians from a scrambled Sobol sequence mapped through the
    normal quantile, which cuts the sampling error of the fourth moments.
    Returns ``{name: (estimate/T, target/T, ci/T)}``.
    """
    from scipy.stats import norm, qmc

    fs = fs or spec.default_fs()
    t = time_grid(spec.T, fs)
    bank = chirp_bank(spec, t)
    n, u = pair
    xi = spec.xi
    sob = qmc.Sobol(2 * xi, scramble=True, seed=seed if rng is None else rng)
    m = int(math.ceil(math.log2(max(draws, 2))))
    z = norm.ppf(np.clip(sob.random_base2(m), 1e-16, 1 - 1e-16))
    dn, du = z[:, :xi], z[:, xi:]
    Sn = math.sqrt(2.0) * dn @ bank[n - 1]
    Su = math.sqrt(2.0) * du @ bank[u - 1]
    cut = spec.f0 / 2
    out = {}
    targets = {"S2": xi, "S4": fourth_moment_factor(xi), "cross": xi ** 2}
    for name, x in (("S2", Sn ** 2), ("S4", Sn ** 4), ("cross", Sn ** 2 * Su ** 2)):
        vals = trapezoid(lowpass(x, fs, cut), t, axis=-1) / spec.T
        ci = 1.96 * vals.std(ddof=1) / math.sqrt(vals.size)
        out[name] = (float(vals.mean()), float(targets[name]), float(ci))
    return out


def psr_harvest_and_split(report: HarvestReport, rho: float):
    """Power-splitting receiver: energy with a ``rho`` share and the information-branch power scale.

    The amplitude ``sqrt(rho)`` enters even diode orders, so the linear term
    scales by ``rho`` and the fourth-order term by ``rho**2``.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"split ratio must lie in [0, 1], got {rho}")
    return rho * report.linear + rho ** 2 * report.nonlinear, 1.0 - rho
