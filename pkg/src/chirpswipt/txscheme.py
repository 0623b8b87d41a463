"""Subband ordering and selection, MRT precoding and power allocation.

Subband indices are 0-based throughout this module; ``Xi[k, r]`` is the
subband holding user ``k``'s ``(r+1)``-th largest estimated gain.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .channel import SystemConfig
from .waveform import TimeFunction, WaveformSpec, chirp_bank, multisine_bank, time_grid

POLICIES = ("proportional", "equal", "channel_inversion", "weights")


class DegenerateChannelError(ValueError):
    pass


class PowerConstraintError(AssertionError):
    pass


def subband_gains(ghat: np.ndarray) -> np.ndarray:
    """``||ghat||^2`` per (subband, user), moved to user-major ``[..., K, N]``."""
    return np.swapaxes(np.sum(np.abs(ghat) ** 2, axis=-1), -1, -2)


def order_and_select(gains: np.ndarray, Ntil: int) -> np.ndarray:
    """Indices of the ``Ntil`` largest gains per user, descending.

    ``gains`` is ``[..., K, N]``; ties resolve to the lower subband index.
    """
    N = gains.shape[-1]
    if not 1 <= Ntil <= N:
        raise ValueError(f"Ntil={Ntil} outside 1..{N}")
    order = np.argsort(-gains, axis=-1, kind="stable")
    return order[..., :Ntil]


def rank_lookup(Xi: np.ndarray, N: int) -> np.ndarray:
    """Inverse map ``[K, N]``: rank of each subband for its user, -1 if unselected."""
    K, Ntil = Xi.shape
    lut = np.full((K, N), -1, dtype=int)
    lut[np.arange(K)[:, None], Xi] = np.arange(Ntil)
    return lut


def precoder(ghat_vec: np.ndarray) -> np.ndarray:
    """Unit-norm MRT direction ``ghat / ||ghat||`` (last axis)."""
    norm = np.linalg.norm(ghat_vec, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise DegenerateChannelError("zero channel estimate has no beam direction")
    return ghat_vec / norm


def user_weights(policy: str, beta, weights=None) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    K = beta.size
    if policy == "equal":
        return np.full(K, 1.0 / K)
    if policy == "channel_inversion":
        w = 1.0 / beta ** 2
        return w / w.sum()
    if policy == "weights":
        if weights is None:
            raise ValueError("policy 'weights' needs explicit user weights")
        w = np.asarray(weights, dtype=float)
        if w.shape != (K,) or np.any(w < 0) or w.sum() > 1 + 1e-12:
            raise ValueError(f"user weights must be {K} nonnegative values summing to <= 1")
        return w
    raise ValueError(f"unknown policy {policy!r}; choose from {POLICIES}")


def allocate_power(policy: str, sel_gains: np.ndarray, xi: int, beta, weights=None):
    """Power-control coefficients for the selected subbands.

    ``sel_gains`` is ``[..., K, Ntil]`` in rank order. Returns ``(eta, zeta)``
    with ``zeta_k = xi * sum_n eta[k, n]`` the fraction of ``Ptx`` radiated
    for user ``k``. ``proportional`` splits the whole budget in proportion
    to every selected gain; the other policies fix ``zeta`` first and split
    it within each user in proportion to the gains.
    """
    g = np.asarray(sel_gains, dtype=float)
    Ntil = g.shape[-1]
    if policy == "proportional":
        tot = g.sum(axis=(-1, -2), keepdims=True)
        bad = tot[..., 0, 0] <= 0
        if np.any(bad):
            warnings.warn("all selected gains are zero; using an equal split", RuntimeWarning)
        share = np.where(tot > 0, g / np.where(tot > 0, tot, 1.0), 1.0 / (g.shape[-2] * Ntil))
        eta = share / xi
        return eta, xi * eta.sum(axis=-1)
    zeta = user_weights(policy, beta, weights)
    row = g.sum(axis=-1, keepdims=True)
    if np.any(row <= 0):
        warnings.warn("user with zero selected gain; using an equal split", RuntimeWarning)
    share = np.where(row > 0, g / np.where(row > 0, row, 1.0), 1.0 / Ntil)
    eta = zeta[:, None] / xi * share
    return eta, np.broadcast_to(zeta, eta.shape[:-1]).copy()


@dataclass(frozen=True)
class TransmissionPlan:
    """One realization's selection, coefficients and precoders.

    ``Xi``, ``eta``: ``[K, Ntil]`` in rank order; ``precoders``: ``[K, Ntil, M]``.
    """

    Xi: np.ndarray
    eta: np.ndarray
    zeta: np.ndarray
    precoders: np.ndarray
    xi: int
    N: int
    seed: int | None = None

    @property
    def mode(self) -> str:
        return "fixed" if self.xi == 1 and self.Xi.shape[1] == self.N else "chirp"

    @property
    def eta_full(self) -> np.ndarray:
        """``[N, K]`` coefficients with zeros on unselected subbands."""
        K = self.Xi.shape[0]
        out = np.zeros((self.N, K))
        out[self.Xi.T, np.arange(K)] = self.eta.T
        return out

    def budget(self) -> float:
        return self.xi * float(self.eta.sum())

    def to_text(self) -> str:
        return json.dumps({
            "Xi": (self.Xi + 1).tolist(),
            "eta": self.eta.tolist(),
            "zeta": self.zeta.tolist(),
            "xi": self.xi,
            "N": self.N,
            "seed": self.seed,
        })

    @classmethod
    def from_text(cls, text: str, precoders=None) -> "TransmissionPlan":
        d = json.loads(text)
        Xi = np.array(d["Xi"], dtype=int) - 1
        if precoders is None:
            precoders = np.zeros(Xi.shape + (0,), dtype=complex)
        return cls(Xi, np.array(d["eta"]), np.array(d["zeta"]), precoders, d["xi"], d["N"], d["seed"])


def build_plan(cfg: SystemConfig, ghat: np.ndarray, policy: str, weights=None, seed=None) -> TransmissionPlan:
    """Select, allocate and precode for one realization (``ghat``: ``[N, K, M]``)."""
    gains = subband_gains(ghat)
    Xi = order_and_select(gains, cfg.Ntil)
    K = cfg.K
    sel = np.take_along_axis(gains, Xi, axis=-1)
    eta, zeta = allocate_power(policy, sel, cfg.xi, cfg.beta, weights)
    gh = ghat[Xi, np.arange(K)[:, None]]  # K, Ntil, M
    return TransmissionPlan(Xi, eta, zeta, precoder(gh), cfg.xi, cfg.N, seed)


def assemble_downlink(plan: TransmissionPlan, cfg: SystemConfig, data: np.ndarray, f0=None) -> TimeFunction:
    """Per-subband transmit signal; calling it on ``t`` gives ``[N, M, len(t)]``.

    ``data`` is ``[K, Ntil, xi]`` indexed by rank.
    """
    K, Ntil = plan.Xi.shape
    data = np.asarray(data, dtype=float)
    if data.shape != (K, Ntil, plan.xi):
        raise ValueError(f"data must have shape {(K, Ntil, plan.xi)}, got {data.shape}")
    spec = WaveformSpec(cfg.B, cfg.N, plan.xi, f0)
    M = plan.precoders.shape[-1]
    # coefficient of chirp l on subband n for antenna m
    coef = np.zeros((cfg.N, M, plan.xi), dtype=complex)
    for k in range(K):
        for r in range(Ntil):
            n = plan.Xi[k, r]
            coef[n] += (math.sqrt(cfg.Ptx * plan.eta[k, r]) * np.conj(plan.precoders[k, r])[:, None]
                        * math.sqrt(2.0) * data[k, r][None, :])
    fixed = plan.xi == 1 and Ntil == cfg.N

    def fn(t):
        t = np.asarray(t, dtype=float)
        if fixed:
            bank = multisine_bank(spec, t)[:, None, :] / math.sqrt(2.0)  # N,1,L
        else:
            bank = chirp_bank(spec, t)  # N, xi, L
        return np.einsum("nml,nlt->nmt", coef, bank)

    dur = spec.To if fixed else spec.T
    return TimeFunction(fn, dur, spec.max_frequency, "x")


def chirp_gram(spec: WaveformSpec, fs: float | None = None, fixed: bool = False) -> np.ndarray:
    """``(2/T) int s_{n,l} s_{n,l'} dt`` per subband: ``[N, xi, xi]`` by quadrature."""
    fs = fs or spec.default_fs()
    if fixed:
        t = time_grid(spec.To, fs)
        bank = multisine_bank(spec, t)[:, None, :] / math.sqrt(2.0)
        dur = spec.To
    else:
        t = time_grid(spec.T, fs)
        bank = chirp_bank(spec, t)
        dur = spec.T
    prod = bank[:, :, None, :] * bank[:, None, :, :]
    return 2.0 / dur * trapezoid(prod, t, axis=-1)


def verify_power_constraint(plan: TransmissionPlan, cfg: SystemConfig, rng: np.random.Generator,
                            draws: int = 10000, gram: np.ndarray | None = None,
                            fs: float | None = None, tol: float = 0.01):
    """Average radiated power of the assembled signal over data and time.

    Uses the quadrature Gram matrix of the sampled waveforms so every data
    draw costs only small matrix products. Returns ``(mean, ci_halfwidth)``
    and raises if the mean exceeds ``Ptx`` beyond ``tol`` and the CI.
    """
    K, Ntil = plan.Xi.shape
    fixed = plan.xi == 1 and Ntil == cfg.N
    if gram is None:
        gram = chirp_gram(WaveformSpec(cfg.B, cfg.N, plan.xi), fs, fixed)
    # x_n = sum over (k, r) with Xi[k,r] = n of sqrt(P eta) phi* sqrt(2) sum_l d s_l
    d = rng.standard_normal((draws, K, Ntil, plan.xi))
    total = np.zeros(draws)
    for n in range(cfg.N):
        ks, rs = np.nonzero(plan.Xi == n)
        if ks.size == 0:
            continue
        amp = np.sqrt(cfg.Ptx * plan.eta[ks, rs])
        phi = np.conj(plan.precoders[ks, rs])  # J, M
        inner = (phi.conj() @ phi.T).real  # J, J antenna overlap (real part survives)
        dd = d[:, ks, rs, :]  # draws, J, xi
        w = np.einsum("dil,lm,djm->dij", dd, gram[n], dd)
        total += np.einsum("i,j,ij,dij->d", amp, amp, inner, w)
    mean = float(total.mean())
    ci = 1.96 * float(total.std(ddof=1)) / math.sqrt(draws)
    if mean > cfg.Ptx * (1 + tol) + ci:
        raise PowerConstraintError(f"average power {mean:g} exceeds Ptx={cfg.Ptx:g}")
    return mean, ci


def overlap_frequency(cfg: SystemConfig, rng: np.random.Generator, draws: int = 10000, rank: int = 0) -> float:
    """Empirical probability that user 0's rank-``rank`` subband lies in user 1's selection."""
    from .channel import sample_channels  # local to keep module deps one-way at import time

    ch = sample_channels(cfg.with_(K=2, distances=(cfg.distances[0],) * 2), rng, size=draws)
    Xi = order_and_select(subband_gains(ch.g), cfg.Ntil)
    target = Xi[:, 0, rank]
    hit = (Xi[:, 1, :] == target[:, None]).any(axis=1)
    return float(hit.mean())
