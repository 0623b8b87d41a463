"""Superimposed chirp and fixed-frequency (multisine) waveform synthesis.

Subbands are indexed ``n = 1..N`` and chirps within a subband ``l = 1..xi``,
matching the usual notation; everything else in the package is 0-based.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import trapezoid


class WaveformError(ValueError):
    """Raised for out-of-range subband, chirp or time arguments."""


class AliasingError(WaveformError):
    """Raised when a sample rate cannot resolve the waveform content."""


@dataclass(frozen=True)
class WaveformSpec:
    """Timing and frequency plan of a multiband chirp system.

    ``f0`` defaults to ``2*N*B`` so that second- and fourth-order mixing
    products of the time-domain oracles separate cleanly from baseband.
    """

    B: float
    N: int
    xi: int = 1
    f0: float | None = None

    def __post_init__(self):
        if not (self.B > 0 and math.isfinite(self.B)):
            raise WaveformError(f"bandwidth must be positive, got {self.B}")
        if int(self.N) != self.N or self.N < 1:
            raise WaveformError(f"N must be a positive integer, got {self.N}")
        if int(self.xi) != self.xi or self.xi < 1:
            raise WaveformError(f"xi must be a positive integer, got {self.xi}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "xi", int(self.xi))
        if self.f0 is None:
            object.__setattr__(self, "f0", 2.0 * self.N * self.B)
        elif self.f0 < 0:
            raise WaveformError(f"f0 must be nonnegative, got {self.f0}")

    @property
    def To(self) -> float:
        return 1.0 / self.B

    @property
    def T(self) -> float:
        return self.xi / self.B

    @property
    def mu(self) -> float:
        """Chirp rate B/T in Hz/s."""
        return self.B / self.T

    @property
    def max_frequency(self) -> float:
        return self.f0 + self.N * self.B

    def subband_start(self, n: int) -> float:
        self._check_n(n)
        return self.f0 + (n - 1) * self.B

    def breakpoint(self, l: int) -> float:
        self._check_l(l)
        return self.T * (1.0 - (l - 1) / self.xi)

    def default_fs(self) -> float:
        return 16.0 * self.max_frequency

    def _check_n(self, n):
        if int(n) != n or not 1 <= n <= self.N:
            raise WaveformError(f"subband index {n} outside 1..{self.N}")

    def _check_l(self, l):
        if int(l) != l or not 1 <= l <= self.xi:
            raise WaveformError(f"chirp index {l} outside 1..{self.xi}")


def _check_time(t, duration):
    t = np.asarray(t, dtype=float)
    # tolerate one ulp-scale overshoot from linspace endpoints
    slack = 1e-12 * duration
    if np.any(t < -slack) or np.any(t > duration + slack):
        raise WaveformError(f"time outside [0, {duration}]")
    return t


def chirp_value(spec: WaveformSpec, n: int, l: int, t):
    """Unscaled chirp ``s_{n,l}(t)`` of the superimposed set.

    The phase offset switches from ``(l-1)/xi * B`` to ``(l-1-xi)/xi * B`` at
    ``T_l = T (1 - (l-1)/xi)``. Each piece is evaluated as written, without
    phase stitching at the breakpoint. Accepts scalar or array ``t``.
    """
    fn = spec.subband_start(n)
    Tl = spec.breakpoint(l)
    t = _check_time(t, spec.T)
    off_lo = (l - 1) / spec.xi * spec.B
    off_hi = (l - 1 - spec.xi) / spec.xi * spec.B
    offset = np.where(t <= Tl, off_lo, off_hi)
    out = np.cos(2 * np.pi * t * (fn + offset + 0.5 * spec.mu * t))
    return float(out) if out.ndim == 0 else out


def instantaneous_frequency(spec: WaveformSpec, n: int, l: int, t):
    fn = spec.subband_start(n)
    Tl = spec.breakpoint(l)
    t = _check_time(t, spec.T)
    offset = np.where(t <= Tl, (l - 1) / spec.xi, (l - 1 - spec.xi) / spec.xi) * spec.B
    return fn + offset + spec.mu * t


def time_grid(duration: float, fs: float) -> np.ndarray:
    """Uniform grid covering ``[0, duration]`` inclusive at rate ``fs``."""
    count = int(round(duration * fs))
    return np.linspace(0.0, duration, count + 1)


def chirp_bank(spec: WaveformSpec, t: np.ndarray) -> np.ndarray:
    """All unscaled chirps sampled on ``t``; shape ``(N, xi, len(t))``."""
    t = _check_time(t, spec.T)
    n = np.arange(spec.N)[:, None, None]
    l = np.arange(spec.xi)[None, :, None]
    Tl = spec.T * (1.0 - l / spec.xi)
    frac = np.where(t[None, None, :] <= Tl, l / spec.xi, l / spec.xi - 1.0)
    f = spec.f0 + n * spec.B + frac * spec.B
    return np.cos(2 * np.pi * t * (f + 0.5 * spec.mu * t))


def multisine_bank(spec: WaveformSpec, t: np.ndarray) -> np.ndarray:
    """Unit-power fixed-frequency tones ``sqrt(2) cos(2 pi f_n t)``; shape ``(N, len(t))``."""
    t = _check_time(t, spec.To)
    f = spec.f0 + np.arange(spec.N)[:, None] * spec.B
    return math.sqrt(2.0) * np.cos(2 * np.pi * f * t)


@dataclass(frozen=True)
class TimeFunction:
    """A real waveform on ``[0, duration]`` with a known frequency ceiling."""

    fn: Callable[[np.ndarray], np.ndarray]
    duration: float
    max_frequency: float
    label: str = field(default="", compare=False)

    def __call__(self, t):
        t = _check_time(t, self.duration)
        return self.fn(t)

    def sample(self, fs: float) -> tuple[np.ndarray, np.ndarray]:
        t = time_grid(self.duration, fs)
        return t, self.fn(t)

    def __add__(self, other: "TimeFunction") -> "TimeFunction":
        if not isinstance(other, TimeFunction):
            return NotImplemented
        if not math.isclose(self.duration, other.duration, rel_tol=1e-12):
            raise WaveformError("cannot add waveforms of different duration")
        a, b = self.fn, other.fn
        return TimeFunction(lambda t: a(t) + b(t), self.duration,
                            max(self.max_frequency, other.max_frequency))

    def scaled(self, c: float) -> "TimeFunction":
        f = self.fn
        return TimeFunction(lambda t: c * f(t), self.duration, self.max_frequency)


def chirp_function(spec: WaveformSpec, n: int, l: int) -> TimeFunction:
    spec._check_n(n)
    spec._check_l(l)
    return TimeFunction(lambda t: chirp_value(spec, n, l, t), spec.T,
                        spec.max_frequency, f"s[{n},{l}]")


def superimposed_symbol(spec: WaveformSpec, n: int, data: Sequence[float]) -> TimeFunction:
    """``S(t) = sqrt(2) * sum_l d_l s_{n,l}(t)`` over one symbol of length T."""
    spec._check_n(n)
    d = np.asarray(data, dtype=float).ravel()
    if d.size != spec.xi:
        raise WaveformError(f"expected {spec.xi} data symbols, got {d.size}")

    def fn(t):
        t = np.asarray(t, dtype=float)
        acc = np.zeros_like(t)
        for l, dl in enumerate(d, start=1):
            if dl != 0.0:
                acc = acc + dl * chirp_value(spec, n, l, t)
        return math.sqrt(2.0) * acc

    return TimeFunction(fn, spec.T, spec.max_frequency, f"S[{n}]")


def multisine_symbol(spec: WaveformSpec, n: int, d: float) -> TimeFunction:
    """``S'(t) = d sqrt(2) cos(2 pi f_n t)`` on ``[0, T_o]``."""
    fn_hz = spec.subband_start(n)
    d = float(d)
    return TimeFunction(lambda t: d * math.sqrt(2.0) * np.cos(2 * np.pi * fn_hz * np.asarray(t, float)),
                        spec.To, spec.max_frequency, f"S'[{n}]")


def cross_correlation(Sa: TimeFunction, Sb: TimeFunction, T: float, fs: float) -> float:
    """Trapezoidal estimate of ``int_0^T Sa(t) Sb(t) dt``."""
    fmax = max(Sa.max_frequency, Sb.max_frequency)
    if fs < 8.0 * fmax:
        raise AliasingError(f"fs={fs:g} below 8x highest frequency {fmax:g}")
    t = time_grid(T, fs)
    return float(trapezoid(Sa(t) * Sb(t), t))


def lowpass(x: np.ndarray, fs: float, cutoff: float) -> np.ndarray:
    """Ideal brick-wall low-pass along the last axis (FFT over the window)."""
    X = np.fft.rfft(x, axis=-1)
    freqs = np.fft.rfftfreq(x.shape[-1], d=1.0 / fs)
    X[..., freqs > cutoff] = 0.0
    return np.fft.irfft(X, n=x.shape[-1], axis=-1)


def lpf_integral(x: np.ndarray, t: np.ndarray, fs: float, cutoff: float) -> np.ndarray:
    """``int [x]_LPF dt`` over the sampled window ``t``."""
    return trapezoid(lowpass(x, fs, cutoff), t, axis=-1)
