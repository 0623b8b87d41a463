"""Order statistics of gamma and exponential subband gains.

Ranks are 1-based with ``n = 1`` the largest of ``N`` draws, matching how
ordered gains are usually written. Ordered-gamma moments are evaluated by
adaptive quadrature of the defining integral; the finite alternating sums
for exponential order statistics fall back to exact rational arithmetic
when cancellation is detected.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import integrate, special, stats


class OrderStatError(ArithmeticError):
    """Quadrature or summation failed to reach the requested accuracy."""


QUAD_RTOL = 1e-10
# relative error above which a float alternating sum is redone exactly
CANCELLATION_RTOL = 1e-6


@dataclass(frozen=True)
class OrderedMomentQuery:
    N: int
    n: int
    M: int
    nu: int = 1

    def __post_init__(self):
        for name in ("N", "n", "M", "nu"):
            v = getattr(self, name)
            if int(v) != v:
                raise ValueError(f"{name} must be an integer, got {v}")
            object.__setattr__(self, name, int(v))
        if self.N < 1 or not 1 <= self.n <= self.N:
            raise ValueError(f"rank {self.n} outside 1..{self.N}")
        if self.M < 1:
            raise ValueError(f"gamma shape must be >= 1, got {self.M}")
        if self.nu not in (1, 2):
            raise ValueError(f"nu must be 1 or 2, got {self.nu}")

    @property
    def x_max(self) -> float:
        return self.M + 40.0 * math.sqrt(self.M) + 40.0


def _log_rank_coeff(N, n):
    return math.lgamma(N + 1) - math.lgamma(n) - math.lgamma(N - n + 1)


def ordered_gamma_pdf(q: OrderedMomentQuery, x):
    """Density of the ``n``-th largest of ``N`` i.i.d. Gamma(M, 1) variates."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("ordered gamma density needs x >= 0")
    with np.errstate(divide="ignore"):
        logF = np.log(special.gammainc(q.M, x))
        logS = np.log(special.gammaincc(q.M, x))
    logf = stats.gamma.logpdf(x, q.M)
    out = _log_rank_coeff(q.N, q.n) + logf
    # 0 * log(0) must count as zero for the boundary ranks
    if q.N - q.n:
        out = out + (q.N - q.n) * logF
    if q.n - 1:
        out = out + (q.n - 1) * logS
    res = np.exp(out)
    return float(res) if res.ndim == 0 else res


@lru_cache(maxsize=4096)
def _ordered_moment(N, n, M, nu):
    q = OrderedMomentQuery(N, n, M, nu)
    f = lambda x: x ** nu * ordered_gamma_pdf(q, x)
    # split near the bulk so the adaptive rule sees the peak
    mid = M + 4.0 * math.sqrt(M)
    parts = []
    for a, b in ((0.0, mid), (mid, q.x_max)):
        val, err = integrate.quad(f, a, b, epsabs=0.0, epsrel=QUAD_RTOL, limit=400)
        parts.append((val, err))
    val = sum(p[0] for p in parts)
    err = sum(p[1] for p in parts)
    if not math.isfinite(val) or err > 100 * QUAD_RTOL * abs(val):
        raise OrderStatError(
            f"quadrature for E[X_[{n}]^{nu}] (N={N}, M={M}) gave {val} with error {err}")
    return val


def ordered_gamma_moment(q: OrderedMomentQuery) -> float:
    """``E{X_[n]^nu}`` for the ``n``-th largest of ``N`` Gamma(M, 1) draws."""
    return _ordered_moment(q.N, q.n, q.M, q.nu)


def omega(q: OrderedMomentQuery, gamma_k: float) -> float:
    """Ordered-gain moment scaled by the estimate variance, ``gamma_k * E{X_[n]^nu}``."""
    if gamma_k < 0:
        raise ValueError("gamma_k must be nonnegative")
    return gamma_k * ordered_gamma_moment(q)


def _upsilon_terms(N, n):
    m = N - n
    return [(math.comb(m, l), (-1) ** (m + l), N - l) for l in range(m + 1)]


@lru_cache(maxsize=4096)
def _upsilon_tilde(N, n):
    coeff = math.comb(N, n - 1) * (N - n + 1)  # N!/((n-1)!(N-n)!)
    terms = _upsilon_terms(N, n)
    if N <= 12:
        s = math.fsum(c * sgn / d ** 2 for c, sgn, d in terms)
        mag = math.fsum(c / d ** 2 for c, _, d in terms)
        result = coeff * s
        # error estimate: rounding on the magnitude sum relative to the result
        if result > 0 and coeff * mag * 4 * np.finfo(float).eps / result < CANCELLATION_RTOL:
            return result
    exact = sum(Fraction(c * sgn, d * d) for c, sgn, d in terms)
    return float(coeff * exact)


def upsilon_tilde(N: int, n: int) -> float:
    """Mean of the ``n``-th largest of ``N`` unit exponentials (alternating-sum form)."""
    q = OrderedMomentQuery(N, n, 1)
    return _upsilon_tilde(q.N, q.n)


def upsilon_tilde_harmonic(N: int, n: int) -> float:
    """Same quantity via the spacing representation ``H_N - H_{n-1}``."""
    return math.fsum(1.0 / i for i in range(n, N + 1))


def upsilon(q: OrderedMomentQuery, beta_k: float, gamma_k: float) -> float:
    if beta_k < gamma_k * (1 - 1e-12):
        raise ValueError("need beta_k >= gamma_k")
    return max(beta_k - gamma_k, 0.0) * upsilon_tilde(q.N, q.n)


def lambda_nu(N: int, n: int, M: int, nu: int, l: int) -> float:
    """``int x^{M+nu-1} e^{-x} gamma(M,x)^{l+N-n} dx`` (lower incomplete gamma, unregularized)."""
    q = OrderedMomentQuery(N, n, M, nu)
    p = l + N - n
    lgM = math.lgamma(M)

    def f(x):
        if x <= 0:
            return 0.0
        lg = math.log(special.gammainc(M, x)) + lgM if p else 0.0
        return math.exp((M + nu - 1) * math.log(x) - x + p * lg)

    val, _ = integrate.quad(f, 0, q.x_max, epsabs=0.0, epsrel=QUAD_RTOL, limit=400)
    return val


def omega_alternating(N: int, n: int, M: int, nu: int, gamma_k: float = 1.0) -> float:
    """Binomial expansion of the ordered-moment integral in terms of ``lambda_nu``.

    Only numerically sensible for small ``N``; kept as a cross-check of the
    direct quadrature.
    """
    coeff = math.comb(N, n - 1) * (N - n + 1)
    lgM = math.lgamma(M)
    s = 0.0
    for l in range(n):
        s += ((-1) ** l * math.comb(n - 1, l)
              * math.exp((n - N - l - 1) * lgM) * lambda_nu(N, n, M, nu, l))
    return gamma_k * coeff * s


def sample_ordered_moments(q: OrderedMomentQuery, draws: int, rng: np.random.Generator,
                           batch: int = 20000):
    """Sampling estimate of ``E{X_[n]^nu}``; returns ``(mean, ci_halfwidth)``."""
    if draws < 1000:
        raise ValueError("use at least 1000 draws")
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < draws:
        b = min(batch, draws - done)
        x = rng.gamma(q.M, size=(b, q.N))
        x.sort(axis=1)
        v = x[:, q.N - q.n] ** q.nu
        total += v.sum()
        total_sq += (v * v).sum()
        done += b
    mean = total / draws
    var = max(total_sq / draws - mean * mean, 0.0) * draws / (draws - 1)
    return mean, 1.96 * math.sqrt(var / draws)


@dataclass(frozen=True)
class OrderStats:
    """Per-rank quantities for one user: arrays of length N indexed by rank - 1."""

    omega1: np.ndarray
    omega2: np.ndarray
    upsilon: np.ndarray
    upsilon_tilde: np.ndarray


def order_stat_table(N: int, M: int, beta_k: float, gamma_k: float) -> OrderStats:
    ranks = range(1, N + 1)
    m1 = np.array([ordered_gamma_moment(OrderedMomentQuery(N, n, M, 1)) for n in ranks])
    m2 = np.array([ordered_gamma_moment(OrderedMomentQuery(N, n, M, 2)) for n in ranks])
    ut = np.array([upsilon_tilde(N, n) for n in ranks])
    err = max(beta_k - gamma_k, 0.0)
    return OrderStats(gamma_k * m1, gamma_k * m2, err * ut, ut)


def tabulate(Ns, Ms, nus=(1, 2)):
    """Rows ``(N, n, M, nu, value)`` of ordered-gamma moments."""
    rows = []
    for N in Ns:
        for M in Ms:
            for nu in nus:
                for n in range(1, N + 1):
                    rows.append((N, n, M, nu, ordered_gamma_moment(OrderedMomentQuery(N, n, M, nu))))
    return rows
