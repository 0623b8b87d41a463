"""Per-subband SINR, BPSK information series and a demodulation oracle.

Information is computed in nats and reported in bits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .channel import SystemConfig, estimate_channels, sample_channels
from .harvester import DiodeModel
from .txscheme import order_and_select, subband_gains

LN2 = math.log(2.0)


class SeriesError(ArithmeticError):
    pass


class UnsupportedAnalysis(ValueError):
    pass


def _alternating_sum(term, tol, max_terms=200):
    """``sum_{u>=0} (-1)^u term(u)`` for a completely monotone ``term``.

    Cohen-Rodriguez Villegas-Zagier acceleration; the error is bounded by
    ``2 term(0) / (3 + sqrt 8)^n`` for ``n`` terms.
    """
    a0 = abs(term(0))
    if a0 == 0:
        return 0.0
    n = max(1, math.ceil(math.log(2 * a0 / tol) / math.log(3 + math.sqrt(8))))
    if n > max_terms:
        raise SeriesError(f"tolerance {tol} needs {n} terms (cap {max_terms})")
    d = (3 + math.sqrt(8)) ** n
    d = (d + 1 / d) / 2
    b, c, s = -1.0, -d, 0.0
    for k in range(n):
        c = b - c
        s += c * term(k)
        b = (k + n) * (k - n) * b / ((k + 0.5) * (k + 1))
    return s / d


def bpsk_info_term(rho: float, tol: float = 1e-12, origin: int = 0) -> float:
    """``sqrt(rho/(rho+2)) * sum_u 2(-1)^u / (sqrt(1+2/rho) + 2u + 1)`` in nats.

    With ``origin=0`` the sum starts at ``u = 0`` and tends to ``ln 2`` at high
    SINR. ``origin=1`` evaluates the same series started at ``u = 1``, which
    tends to ``ln 2 - 1``; it is exposed for comparison only.
    """
    if rho < 0 or math.isnan(rho):
        raise ValueError(f"SINR must be nonnegative, got {rho}")
    if rho == 0:
        return 0.0
    a = 1.0 if math.isinf(rho) else math.sqrt(1.0 + 2.0 / rho)
    pre = 1.0 if math.isinf(rho) else math.sqrt(rho / (rho + 2.0))
    if origin not in (0, 1):
        raise ValueError("origin must be 0 or 1")
    s = _alternating_sum(lambda u: 2.0 / (a + 2 * (u + origin) + 1), tol)
    return pre * (s if origin == 0 else -s)


def bpsk_info_term_digamma(rho: float) -> float:
    """Closed form of the ``u = 0`` series through the digamma function."""
    if rho == 0:
        return 0.0
    a = 1.0 if math.isinf(rho) else math.sqrt(1.0 + 2.0 / rho)
    pre = 1.0 if math.isinf(rho) else math.sqrt(rho / (rho + 2.0))
    x = (a + 1) / 2
    return pre * 0.5 * (special.digamma((x + 1) / 2) - special.digamma(x / 2))


def bpsk_mutual_information(rho: float) -> float:
    """Mutual information (nats) of equiprobable BPSK on a real Gaussian channel with SNR ``rho``."""
    if rho <= 0:
        return 0.0
    if math.isinf(rho):
        return LN2
    sr = math.sqrt(rho)

    def f(z):
        return math.exp(-z * z / 2) / math.sqrt(2 * math.pi) * np.logaddexp(0.0, -2 * rho - 2 * sr * z)

    val, _ = integrate.quad(f, -40, 40, limit=400, epsabs=1e-14)
    return LN2 - val


def overlap_probability(cfg: SystemConfig) -> float:
    """Chance that a given subband of one user is among another user's selected ones."""
    return cfg.Ntil / cfg.N


def sinr_chirp(cfg: SystemConfig, eta: np.ndarray, stats: list, k: int, diode: DiodeModel,
               variant: str = "average", branch: float = 1.0) -> np.ndarray:
    """Average SINR per rank for user ``k`` (array over the ``Ntil`` ranks).

    ``variant`` picks the overlap weight of the interference term: the
    average ``Ntil/N``, ``upper`` (no overlap) or ``lower`` (full overlap).
    ``branch`` is the power share reaching the decoder; it scales signal and
    interference but not the noise added after the split.
    """
    w = {"average": overlap_probability(cfg), "upper": 0.0, "lower": 1.0}[variant]
    eps1 = diode.eps[0]
    s = stats[k]
    Nt = cfg.Ntil
    g = branch * eps1 ** 2 * cfg.Ptx * cfg.T
    others = np.delete(eta, k, axis=0).sum(axis=0)
    num = g * eta[k] * s.omega1[:Nt]
    den = g * (w * others * cfg.beta[k] * s.upsilon_tilde[:Nt] + eta[k] * s.upsilon[:Nt]) + cfg.sigma2
    return num / den


def sinr_fixed(cfg: SystemConfig, eta: np.ndarray, stats: list, k: int, diode: DiodeModel,
               branch: float = 1.0) -> np.ndarray:
    """Average SINR per rank for fixed-frequency tones over all ``N`` subbands."""
    eps1 = diode.eps[0]
    s = stats[k]
    g = branch * eps1 ** 2 * cfg.Ptx * cfg.To
    N = cfg.N
    ut = s.upsilon_tilde[:N]
    num = g * eta[k] * s.omega1[:N]
    den = g * (eta.sum(axis=0) * cfg.beta[k] * ut - eta[k] * cfg.gamma[k] * ut) + cfg.sigma2
    return num / den


@dataclass
class RateReport:
    rho: np.ndarray
    rho_upper: np.ndarray
    rho_lower: np.ndarray
    R: float
    R_upper: float
    R_lower: float
    units: str = "bits"


def _info_sum(rhos, tol=1e-12):
    return math.fsum(bpsk_info_term(float(r), tol) for r in np.atleast_1d(rhos))


def rate_chirp(cfg: SystemConfig, eta, stats, k: int, diode: DiodeModel, branch: float = 1.0) -> RateReport:
    """Information per downlink phase (bits) with two chirps per selected subband."""
    if cfg.xi != 2:
        raise UnsupportedAnalysis("closed-form rate is derived for xi = 2 only")
    pre = cfg.tau_dl / cfg.T / LN2
    rhos = {v: sinr_chirp(cfg, eta, stats, k, diode, v, branch) for v in ("average", "upper", "lower")}
    R = {v: pre * 2.0 * _info_sum(r) for v, r in rhos.items()}
    return RateReport(rhos["average"], rhos["upper"], rhos["lower"], R["average"], R["upper"], R["lower"])


def rate_fixed(cfg: SystemConfig, eta, stats, k: int, diode: DiodeModel, branch: float = 1.0) -> RateReport:
    fcfg = cfg if (cfg.xi == 1 and cfg.Ntil == cfg.N) else cfg.fixed()
    rho = sinr_fixed(fcfg, eta, stats, k, diode, branch)
    R = fcfg.tau_dl / fcfg.To / LN2 * _info_sum(rho)
    return RateReport(rho, rho, rho, R, R, R)


@dataclass
class DemodResult:
    sinr: np.ndarray
    ber: np.ndarray
    signal: np.ndarray
    distortion: np.ndarray


def rate_mc_oracle(cfg: SystemConfig, eta: np.ndarray, realizations: int, rng: np.random.Generator,
                   diode: DiodeModel, k: int = 0, noise: bool = True,
                   batch: int = 5000) -> DemodResult:
    """Statistic-domain correlator demodulation for user ``k``.

    For each realization the subbands are ordered from fresh estimates and
    the coefficients ``eta`` (``[K, Ntil]``, fixed per rank) are applied. The
    correlator output for chirp ``l`` on rank ``n`` is
    ``eps1 sqrt(T/2) sum_j sqrt(Ptx eta_j) (g^T phi_j*) d_j + w`` with ``w``
    of variance ``sigma2 / 2``; orthogonal chirps contribute nothing.
    Returns per-rank empirical SINR (ratio of mean powers) and BPSK BER.
    """
    eps1 = diode.eps[0]
    Nt = cfg.Ntil
    T = cfg.T if not (cfg.xi == 1 and cfg.Ntil == cfg.N) else cfg.To
    scale = eps1 * math.sqrt(T / 2.0)
    sig = np.zeros(Nt)
    dist = np.zeros(Nt)
    errors = np.zeros(Nt)
    done = 0
    while done < realizations:
        b = min(batch, realizations - done)
        ch = estimate_channels(cfg, sample_channels(cfg, rng, size=b), rng)
        gains = subband_gains(ch.ghat)
        Xi = order_and_select(gains, Nt)  # b, K, Nt
        norm = np.linalg.norm(ch.ghat, axis=-1, keepdims=True)
        phi = ch.ghat / np.where(norm > 0, norm, 1.0)  # b, N, K, M
        m = Xi[:, k, :]  # b, Nt subband of each rank
        bi = np.arange(b)[:, None]
        gk = ch.g[bi, m, k]  # b, Nt, M
        ghk = ch.ghat[bi, m, k]
        ek = gk - ghk  # true minus estimate
        phis = phi[bi, m]  # b, Nt, K, M
        # desired: estimate part; every stream also sees the estimation error
        a_sig = scale * math.sqrt(cfg.Ptx) * np.sqrt(eta[k])[None, :] * np.linalg.norm(ghk, axis=-1)
        d = rng.choice([-1.0, 1.0], size=(b, Nt, cfg.K))
        out = a_sig * d[..., k]
        dist_c = np.zeros((b, Nt), dtype=complex)
        for j in range(cfg.K):
            # rank of subband m in user j's selection, if any
            match = Xi[:, j, None, :] == m[:, :, None]  # b, Nt, Nt_j
            present = match.any(axis=-1)
            rj = match.argmax(axis=-1)
            amp = scale * np.sqrt(cfg.Ptx * eta[j][rj]) * present
            coef_err = np.einsum("bnq,bnq->bn", ek, np.conj(phis[:, :, j]))
            if j == k:
                c = coef_err
            else:
                c = np.einsum("bnq,bnq->bn", ghk, np.conj(phis[:, :, j])) + coef_err
            dist_c += amp * c * d[..., j]
        # only the in-phase part survives a real correlator
        distortion_pow = np.abs(dist_c) ** 2
        if noise:
            w = rng.standard_normal((b, Nt)) * math.sqrt(cfg.sigma2 / 2.0)
        else:
            w = np.zeros((b, Nt))
        r = out + dist_c.real + w
        errors += (np.sign(r) != d[..., k]).sum(axis=0)
        sig += (a_sig ** 2).sum(axis=0)
        dist += distortion_pow.sum(axis=0) + (cfg.sigma2 / 2.0 if noise else 0.0) * b
        done += b
    with np.errstate(divide="ignore"):
        sinr = sig / dist
    return DemodResult(sinr, errors / realizations, sig / realizations, dist / realizations)
