"""System parameters, block-fading channels, uplink pilots and MMSE estimates.

Channel arrays use the layout ``[..., N, K, M]`` (subband, user, antenna);
leading axes, when present, index independent realizations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid

from .waveform import TimeFunction, WaveformSpec, time_grid


@dataclass(frozen=True)
class SystemConfig:
    """Scalar parameters of the network, waveform plan and timing.

    ``Ntil`` defaults to ``N // xi`` and ``eps_pilot`` to ``K``. ``Pp`` may be
    ``math.inf`` for perfect CSI.
    """

    M: int = 12
    N: int = 16
    xi: int = 2
    K: int = 1
    B: float = 200e3
    Ptx: float = 1.0
    Pp: float = 1e-4
    sigma2: float = 1e-20
    tau_ch: float = 0.1905
    distances: tuple = (10.0,)
    Ntil: int | None = None
    eps_pilot: int | None = None

    def __post_init__(self):
        for name in ("M", "N", "xi", "K"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v}")
            object.__setattr__(self, name, int(v))
        d = tuple(float(x) for x in np.atleast_1d(self.distances))
        if len(d) == 1 and self.K > 1:
            d = d * self.K
        if len(d) != self.K:
            raise ValueError(f"need {self.K} distances, got {len(d)}")
        object.__setattr__(self, "distances", d)
        if self.N % self.xi:
            raise ValueError(f"N={self.N} is not a multiple of xi={self.xi}")
        Ntil = self.N // self.xi if self.Ntil is None else int(self.Ntil)
        if Ntil * self.xi != self.N:
            raise ValueError(f"need Ntil * xi == N, got Ntil={Ntil}, xi={self.xi}, N={self.N}")
        object.__setattr__(self, "Ntil", Ntil)
        eps = self.K if self.eps_pilot is None else int(self.eps_pilot)
        if eps < self.K:
            raise ValueError(f"pilot length {eps} shorter than K={self.K}")
        object.__setattr__(self, "eps_pilot", eps)
        if not self.B > 0 or not self.Ptx > 0 or not self.sigma2 > 0:
            raise ValueError("B, Ptx and sigma2 must be positive")
        if self.Pp < 0:
            raise ValueError("pilot power must be nonnegative")
        if self.tau_dl <= 0:
            raise ValueError("coherence block shorter than the pilot phase")

    @property
    def To(self) -> float:
        return 1.0 / self.B

    @property
    def T(self) -> float:
        return self.xi / self.B

    @property
    def tau_p(self) -> float:
        return self.eps_pilot * self.To

    @property
    def tau_dl(self) -> float:
        return self.tau_ch - self.tau_p

    @property
    def Ep(self) -> float:
        return self.Pp * self.eps_pilot * self.To

    @property
    def beta(self) -> np.ndarray:
        return np.array([path_loss(d) for d in self.distances])

    @property
    def gamma(self) -> np.ndarray:
        return estimate_variance(self.beta, self.Ep, self.N, self.sigma2)

    def waveform(self, f0=None) -> WaveformSpec:
        return WaveformSpec(self.B, self.N, self.xi, f0)

    def fixed(self) -> "SystemConfig":
        """Fixed-frequency counterpart: one waveform per subband, no selection."""
        return replace(self, xi=1, Ntil=self.N)

    def with_(self, **changes) -> "SystemConfig":
        if "xi" in changes and "Ntil" not in changes:
            changes["Ntil"] = None
        if "K" in changes and "distances" not in changes and len(self.distances) != changes["K"]:
            changes["distances"] = self.distances[:1]
        if "K" in changes and "eps_pilot" not in changes:
            changes["eps_pilot"] = None
        return replace(self, **changes)


def path_loss(D: float) -> float:
    """Large-scale coefficient ``1e-3 * D**-3``."""
    if not D > 0:
        raise ValueError(f"distance must be positive, got {D}")
    return 1e-3 * D ** -3


def estimate_variance(beta, Ep, N, sigma2):
    """Variance ``gamma`` of each MMSE estimate entry."""
    beta = np.asarray(beta, dtype=float)
    if math.isinf(Ep):
        return beta.copy()
    snr = Ep / N * beta
    return snr * beta / (sigma2 + snr)


@dataclass
class ChannelSet:
    g: np.ndarray
    beta: np.ndarray
    ghat: np.ndarray | None = None
    gamma: np.ndarray | None = None

    @property
    def error(self) -> np.ndarray:
        return self.g - self.ghat


def _cn(rng, shape, var):
    s = np.sqrt(np.asarray(var) / 2.0)
    return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sample_channels(cfg: SystemConfig, rng: np.random.Generator, size: int | None = None) -> ChannelSet:
    """I.i.d. CN(0, beta_k) entries; shape ``[size,] N, K, M``."""
    lead = () if size is None else (size,)
    beta = cfg.beta
    g = _cn(rng, lead + (cfg.N, cfg.K, cfg.M), beta[:, None])
    return ChannelSet(g=g, beta=beta)


def pilot_statistic(cfg: SystemConfig, g: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Despread pilot observation ``sqrt(Ep/N) g + w`` with ``w ~ CN(0, sigma2)``."""
    return math.sqrt(cfg.Ep / cfg.N) * g + _cn(rng, g.shape, cfg.sigma2)


def mmse_gain(cfg: SystemConfig) -> np.ndarray:
    """Per-user scaling from the pilot statistic to the MMSE estimate."""
    a = math.sqrt(cfg.Ep / cfg.N)
    return a * cfg.beta / (cfg.sigma2 + a * a * cfg.beta)


def estimate_channels(cfg: SystemConfig, ch: ChannelSet, rng: np.random.Generator) -> ChannelSet:
    """Attach MMSE estimates; consumes noise draws from ``rng`` unless CSI is perfect."""
    if math.isinf(cfg.Pp):
        ghat = ch.g.copy()
    elif cfg.Pp == 0:
        ghat = np.zeros_like(ch.g)
    else:
        y = pilot_statistic(cfg, ch.g, rng)
        ghat = mmse_gain(cfg)[:, None] * y
    return ChannelSet(g=ch.g, beta=ch.beta, ghat=ghat, gamma=cfg.gamma)


def pilot_book(eps: int, K: int) -> np.ndarray:
    """Rows are length-``eps`` DFT pilots with ``phi_k phi_k'^H / eps = delta``."""
    if eps < K:
        raise ValueError(f"cannot build {K} orthogonal pilots of length {eps}")
    p = np.arange(eps)
    k = np.arange(K)[:, None]
    return np.exp(-2j * np.pi * k * p / eps)


def complex_chirp(spec: WaveformSpec, n: int, t):
    """Unit-power complex up-chirp of one subband on ``[0, T_o]``."""
    fn = spec.subband_start(n)
    mu = spec.B / spec.To
    t = np.asarray(t, dtype=float)
    return np.exp(2j * np.pi * t * (fn + 0.5 * mu * t))


def pilot_waveform(cfg: SystemConfig, k: int, n: int, f0=None) -> TimeFunction:
    """Chirp-modulated pilot of user ``k`` (0-based) on subband ``n`` (1-based)."""
    spec = cfg.waveform(f0)
    book = pilot_book(cfg.eps_pilot, cfg.K)
    phi = book[k]
    To = cfg.To

    def fn(t):
        t = np.asarray(t, dtype=float)
        slot = np.minimum((t // To).astype(int), cfg.eps_pilot - 1)
        local = t - slot * To
        return phi[slot] * complex_chirp(spec, n, local)

    return TimeFunction(fn, cfg.eps_pilot * To, spec.max_frequency, f"pilot[{k},{n}]")


def pilot_statistic_time_domain(cfg: SystemConfig, g: np.ndarray, rng: np.random.Generator,
                                fs: float | None = None, f0=None) -> np.ndarray:
    """Slow path: synthesize the received pilots per subband and correlate.

    ``g`` has shape ``N, K, M``. White noise with PSD ``sigma2`` is sampled at
    ``fs``. Each pilot slot is integrated on its own grid so the jump between
    slots is never straddled. Returns the despread statistic shaped like ``g``.
    """
    spec = cfg.waveform(f0)
    fs = fs or spec.default_fs()
    To = cfg.To
    t = time_grid(To, fs)
    dt = t[1] - t[0]
    w = np.full(t.size, dt)
    w[0] = w[-1] = dt / 2  # trapezoid weights
    book = pilot_book(cfg.eps_pilot, cfg.K)  # K, eps
    out = np.zeros_like(g, dtype=complex)
    amp = math.sqrt(cfg.Pp / cfg.N)
    dur = cfg.eps_pilot * To
    for n in range(cfg.N):
        base = complex_chirp(spec, n + 1, t)
        for p in range(cfg.eps_pilot):
            pil = book[:, p, None] * base[None, :]  # K x L
            rx = amp * g[n].T @ pil  # M x L
            rx = rx + _cn(rng, rx.shape, cfg.sigma2 * fs)
            out[n] += ((rx[None] * np.conj(pil)[:, None, :]) * w).sum(axis=-1)
    return out / math.sqrt(dur)


def inner_product(a: TimeFunction, b: TimeFunction, fs: float, segments: int = 1) -> complex:
    """``int a(t) b(t)^* dt`` by the midpoint rule over equal ``segments``.

    Midpoints never land on segment edges, so jumps placed there (such as
    pilot slot boundaries) are not straddled.
    """
    span = a.duration / segments
    L = max(1, int(round(span * fs)))
    h = span / L
    local = (np.arange(L) + 0.5) * h
    total = 0j
    for s in range(segments):
        t = s * span + local
        total += complex(np.sum(a(t) * np.conj(b(t))) * h)
    return total
