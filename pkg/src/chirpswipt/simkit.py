"""Monte Carlo engine: reproducible streams, streaming estimators, sweeps.

Realizations are cut into fixed-size blocks. Block ``b`` of a run seeded
with ``seed`` draws from a Philox generator keyed by ``(seed, b)``, so a
block produces the same numbers regardless of which worker runs it, and
block results are merged in block order. Output is therefore identical for
any thread count.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np

from .channel import SystemConfig
from .harvester import (DiodeModel, analytic_eta, harvest_semi_analytic, harvested_energy_chirp,
                        psr_harvest_and_split, user_stats)
from .infodec import UnsupportedAnalysis, rate_chirp, rate_fixed

BLOCK_SIZE = 1000
log = logging.getLogger(__name__)
MASK64 = (1 << 64) - 1


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Independent stream for one block: Philox keyed by the pair ``(seed, block)``."""
    key = ((int(seed) & MASK64) << 64) | (int(block) & MASK64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class Estimator:
    """Running count, mean and sum of squared deviations (vectorized over a shape)."""

    count: int = 0
    mean: np.ndarray | float = 0.0
    m2: np.ndarray | float = 0.0

    @classmethod
    def from_samples(cls, x) -> "Estimator":
        x = np.asarray(x, dtype=float)
        n = x.shape[0]
        mean = x.mean(axis=0)
        return cls(n, mean, ((x - mean) ** 2).sum(axis=0))

    def update(self, x) -> "Estimator":
        return self.merge(Estimator.from_samples(x))

    def merge(self, other: "Estimator") -> "Estimator":
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        n = self.count + other.count
        delta = np.asarray(other.mean) - np.asarray(self.mean)
        mean = self.mean + delta * (other.count / n)
        m2 = self.m2 + other.m2 + delta * delta * (self.count * other.count / n)
        return Estimator(n, mean, m2)

    @property
    def var(self):
        if self.count < 2:
            return np.full_like(np.asarray(self.mean, dtype=float), np.nan)
        return np.asarray(self.m2) / (self.count - 1)

    @property
    def ci(self):
        """Half-width of the 95% normal interval."""
        return 1.96 * np.sqrt(self.var / self.count)


def run_blocks(fn: Callable[[np.random.Generator, int], dict], realizations: int, seed: int,
               threads: int = 1, block_size: int = BLOCK_SIZE) -> dict:
    """Run ``fn(rng, count) -> {name: samples[count, ...]}`` over blocks and merge."""
    if realizations < 1:
        raise ValueError("need at least one realization")
    sizes = [block_size] * (realizations // block_size)
    if realizations % block_size:
        sizes.append(realizations % block_size)

    def one(b):
        out = fn(block_rng(seed, b), sizes[b])
        return {k: Estimator.from_samples(v) for k, v in out.items()}

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(one, range(len(sizes))))
    else:
        parts = [one(b) for b in range(len(sizes))]
    merged = {}
    for part in parts:  # block order, independent of scheduling
        for k, est in part.items():
            merged[k] = merged[k].merge(est) if k in merged else est
    return merged


@dataclass
class PointResult:
    """Rows ``(user, metric, source, value, ci_lo, ci_hi)`` for one sweep point."""

    rows: list = field(default_factory=list)

    def add(self, user, metric, source, value, ci=None):
        value = float(value)
        if ci is None:
            self.rows.append((user, metric, source, value, None, None))
        else:
            ci = float(ci)
            self.rows.append((user, metric, source, value, value - ci, value + ci))

    def get(self, user, metric, source="analytic"):
        for u, m, s, v, *_ in self.rows:
            if u == user and m == metric and s == source:
                return v
        raise KeyError((user, metric, source))


def mode_config(cfg: SystemConfig, mode: str) -> SystemConfig:
    if mode == "chirp":
        return cfg
    if mode == "fixed":
        return cfg.fixed()
    raise ValueError(f"unknown waveform mode {mode!r}")


def run_point(cfg: SystemConfig, diode: DiodeModel, policy: str, mode: str, realizations: int,
              seed: int, threads: int = 1, weights=None, metrics=("harvest",),
              rho_split: float | None = None) -> PointResult:
    """Closed-form and Monte Carlo metrics for one configuration.

    Energies are emitted per symbol (``Q_symbol``) and per downlink phase
    (``Q_overall``). With ``rho_split`` set, power-splitting energy and rate
    are added alongside the integrated-receiver values.
    """
    mcfg = mode_config(cfg, mode)
    res = PointResult()
    stats = user_stats(mcfg)
    eta, zeta = analytic_eta(mcfg, stats, policy, weights)
    reports = harvested_energy_chirp(mcfg, eta, stats, diode)
    blocks = mcfg.tau_dl / mcfg.T
    if "harvest" in metrics:
        for k, rep in enumerate(reports):
            res.add(k, "Q_symbol", "analytic", rep.Q)
            res.add(k, "Q_overall", "analytic", rep.Q_overall)
            res.add(k, "Q_linear", "analytic", rep.linear)
            res.add(k, "Q_nonlinear", "analytic", rep.nonlinear)
        if realizations > 0:
            def fn(rng, count):
                lin, nl = harvest_semi_analytic(mcfg, rng, count, diode, policy, weights)
                return {"Q": lin + nl, "lin": lin}
            est = run_blocks(fn, realizations, seed, threads)
            for k in range(mcfg.K):
                q, ci = est["Q"].mean[k], est["Q"].ci[k]
                res.add(k, "Q_symbol", "mc", q, ci)
                res.add(k, "Q_overall", "mc", blocks * q, blocks * ci)
                res.add(k, "Q_linear", "mc", est["lin"].mean[k], est["lin"].ci[k])
    rate_reports = None
    if "rate" in metrics or rho_split is not None:
        try:
            if mode == "chirp":
                rate_reports = [rate_chirp(mcfg, eta, stats, k, diode) for k in range(mcfg.K)]
            else:
                rate_reports = [rate_fixed(mcfg, eta, stats, k, diode) for k in range(mcfg.K)]
        except UnsupportedAnalysis:
            rate_reports = None
        if rate_reports is not None and "rate" in metrics:
            for k, rr in enumerate(rate_reports):
                res.add(k, "R", "analytic", rr.R)
                res.add(k, "R_upper", "analytic", rr.R_upper)
                res.add(k, "R_lower", "analytic", rr.R_lower)
    if rho_split is not None and rate_reports is not None:
        rate_fn = rate_chirp if mode == "chirp" else rate_fixed
        for k, (rep, rr) in enumerate(zip(reports, rate_reports)):
            q, branch = psr_harvest_and_split(rep, rho_split)
            psr = rate_fn(mcfg, eta, stats, k, diode, branch)
            res.add(k, "psr_Q_overall", "analytic", blocks * q)
            res.add(k, "psr_R", "analytic", psr.R)
            res.add(k, "dir_Q_overall", "analytic", rep.Q_overall)
            res.add(k, "dir_R", "analytic", rr.R)
    return res


AXES = ("M", "K", "distance", "Pp", "zeta1", "rho", "sigma2", "Ptx")


@dataclass
class SweepSpec:
    base: SystemConfig
    diode: DiodeModel
    axis: str
    values: list
    modes: tuple = ("chirp", "fixed")
    policy: str = "proportional"
    weights: tuple | None = None
    series_param: str | None = None
    series_values: list = field(default_factory=lambda: [None])
    realizations: int = 10000
    seed: int = 1
    metrics: tuple = ("harvest",)
    distance_range: tuple | None = None

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"unknown sweep axis {self.axis!r}; choose from {AXES}")
        if self.series_param is not None and self.series_param not in AXES:
            raise ValueError(f"unknown series parameter {self.series_param!r}")
        if 0 < self.realizations < 100:
            raise ValueError("use at least 100 realizations (or 0 for closed form only)")


def _fmt(v):
    return repr(float(v)) if isinstance(v, (int, float, np.floating, np.integer)) else str(v)


def apply_param(spec: SweepSpec, cfg: SystemConfig, weights, name, value):
    """Return ``(cfg, weights, rho)`` with one parameter set."""
    rho = None
    if name is None:
        pass
    elif name in ("M", "K"):
        v = int(value)
        if v != value:
            raise ValueError(f"{name} must be an integer")
        if name == "K":
            cfg = cfg.with_(K=v, distances=evenly_spaced(spec.distance_range, v) if spec.distance_range
                            else cfg.distances[:1] * v)
        else:
            cfg = cfg.with_(M=v)
    elif name == "distance":
        cfg = cfg.with_(distances=(float(value),) * cfg.K)
    elif name == "Pp":
        cfg = cfg.with_(Pp=float(value))
    elif name == "sigma2":
        cfg = cfg.with_(sigma2=float(value))
    elif name == "Ptx":
        cfg = cfg.with_(Ptx=float(value))
    elif name == "zeta1":
        z = float(value)
        if cfg.K != 2 or not 0 <= z <= 1:
            raise ValueError("zeta1 sweeps need K = 2 and a value in [0, 1]")
        weights = (z, 1.0 - z)
    elif name == "rho":
        rho = float(value)
        if not 0 <= rho <= 1:
            raise ValueError(f"split ratio {rho} outside [0, 1]")
    return cfg, weights, rho


def evenly_spaced(rng_pair, K):
    lo, hi = rng_pair
    return tuple(np.linspace(lo, hi, K)) if K > 1 else (float(lo),)


def run_sweep(spec: SweepSpec, threads: int = 1):
    """Long-format rows ``(axis, axis_value, user, metric, source, value, ci_lo, ci_hi)``.

    The seed of each point is derived from the sweep seed and the point's
    position so points are independent yet reproducible.
    """
    rows = []
    base = spec.base
    if spec.distance_range and base.K > 1:
        base = base.with_(distances=evenly_spaced(spec.distance_range, base.K))
    point = 0
    for sv in spec.series_values:
        for av in spec.values:
            for mode in spec.modes:
                point += 1
                tag = mode if spec.series_param is None else f"{mode}[{spec.series_param}={_fmt(sv)}]"
                try:
                    cfg, w, _ = apply_param(spec, base, spec.weights, spec.series_param, sv)
                    cfg, w, rho = apply_param(spec, cfg, w, spec.axis, av)
                    policy = "weights" if w is not None else spec.policy
                    seed = (int(spec.seed) * 1_000_003 + point) & MASK64
                    res = run_point(cfg, spec.diode, policy, mode, spec.realizations if rho is None else 0,
                                    seed, threads, w, spec.metrics, rho)
                except (ValueError, ArithmeticError) as exc:
                    log.warning("point %s=%s (%s) skipped: %s", spec.axis, av, tag, exc)
                    rows.append((spec.axis, av, -1, f"{tag}:error", "error", float("nan"), None, None))
                    continue
                for user, metric, source, value, lo, hi in res.rows:
                    rows.append((spec.axis, av, user, f"{tag}:{metric}", source, value, lo, hi))
    return rows


def psr_rate(cfg: SystemConfig, diode: DiodeModel, policy: str, mode: str, split: float, weights=None, k: int = 0):
    """Closed-form information (bits) of user ``k`` with a power-splitting receiver."""
    mcfg = mode_config(cfg, mode)
    stats = user_stats(mcfg)
    eta, _ = analytic_eta(mcfg, stats, policy, weights)
    fn = rate_chirp if mode == "chirp" else rate_fixed
    return fn(mcfg, eta, stats, k, diode, 1.0 - split).R


def split_meeting_rate(spec: SweepSpec, series_value, fraction: float) -> dict:
    """Largest harvesting share that still delivers ``fraction`` of the chirp DIR rate.

    Returns ``{mode: (target_bits, split)}``; the split is ``nan`` when the
    target is out of reach even with the whole signal decoded.
    """
    from scipy.optimize import brentq

    cfg, w, _ = apply_param(spec, spec.base, spec.weights, spec.series_param, series_value)
    policy = "weights" if w is not None else spec.policy
    target = fraction * psr_rate(cfg, spec.diode, policy, "chirp", 0.0, w)
    out = {}
    for mode in spec.modes:
        f = lambda r: psr_rate(cfg, spec.diode, policy, mode, r, w) - target
        if f(0.0) < 0:
            out[mode] = (target, float("nan"))
            continue
        # the rate stays near its ceiling until the decoder share is tiny
        out[mode] = (target, brentq(f, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps))
    return out
