"""Acceptance gates shared by ``chirpswipt validate`` and the test suite.

Each gate returns a :class:`GateResult`. ``level="full"`` uses the stated
sample sizes; ``level="fast"`` shrinks Monte Carlo work for a quick check
(its tolerances are unchanged, so a fast failure can be sampling noise).
"""
from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats as sstats
from scipy.integrate import trapezoid
from scipy.optimize import brentq

from .channel import SystemConfig, estimate_channels, sample_channels
from .harvester import (DiodeModel, analytic_eta, harvest_semi_analytic, harvested_energy_chirp,
                        harvested_energy_fixed, psr_harvest_and_split, user_stats,
                        waveform_moment_identities)
from .infodec import LN2, bpsk_info_term, rate_chirp, rate_mc_oracle, sinr_chirp
from .orderstat import OrderedMomentQuery, ordered_gamma_moment
from .simkit import evenly_spaced, psr_rate
from .txscheme import build_plan, verify_power_constraint
from .waveform import WaveformSpec, chirp_bank, time_grid


@dataclass
class GateResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _size(level, full, fast):
    return full if level == "full" else fast


def _fig4(M=12, Pp=1e-4, **kw):
    return SystemConfig(M=M, N=16, xi=2, K=1, Pp=Pp, distances=(10.0,), **kw)


def _q_overall(cfg, diode, policy="proportional", weights=None):
    """Closed-form per-phase energy for each user of ``cfg`` (chirp or fixed by ``cfg.xi``)."""
    st = user_stats(cfg)
    eta, _ = analytic_eta(cfg, st, policy, weights)
    fn = harvested_energy_fixed if cfg.xi == 1 else harvested_energy_chirp
    return np.array([r.Q_overall for r in fn(cfg, eta, st, diode)])


def gate_waveform_identities(level="full", seed=11) -> GateResult:
    draws = _size(level, 10_000, 2_000)
    t0 = time.perf_counter()
    res = waveform_moment_identities(WaveformSpec(200e3, 16, 2), draws, seed=seed)
    dt = time.perf_counter() - t0
    errs = {k: est / tgt - 1 for k, (est, tgt, _) in res.items()}
    ok = all(abs(e) < 0.02 for e in errs.values()) and dt < 300
    txt = ", ".join(f"{k} {e:+.3%}" for k, e in errs.items())
    return GateResult("1 waveform identities", ok, f"{txt}; {dt:.1f}s")


def gate_orthogonality(level="full") -> GateResult:
    spec = WaveformSpec(200e3, 16, 2)
    fs = spec.default_fs()
    t = time_grid(spec.T, fs)
    bank = chirp_bank(spec, t)  # N, xi, L
    sym = bank.sum(axis=1)  # unit data on every chirp of a subband
    G = trapezoid(sym[:, None, :] * sym[None, :, :], t, axis=-1)
    energy = np.diag(G).copy()
    off = np.abs(G) / energy[:, None]
    np.fill_diagonal(off, 0.0)
    across = off.max()
    pair = trapezoid(bank[:, 0] * bank[:, 1], t, axis=-1)
    within = np.max(np.abs(pair) / trapezoid(bank[:, 0] ** 2, t, axis=-1))
    ok = across < 1e-3 and within < 1e-3
    return GateResult("2 orthogonality", ok, f"max cross-subband {across:.2e}, max same-subband pair {within:.2e}")


def gate_power_constraint(level="full", seed=12) -> GateResult:
    draws = _size(level, 100_000, 20_000)
    rng = np.random.default_rng(seed)
    worst, parts = 0.0, []
    for mode in ("chirp", "fixed"):
        for K, policy in ((1, "proportional"), (3, "equal")):
            cfg = SystemConfig(M=8, K=K, distances=evenly_spaced((8.0, 10.0), K))
            cfg = cfg if mode == "chirp" else cfg.fixed()
            ch = estimate_channels(cfg, sample_channels(cfg, rng), rng)
            plan = build_plan(cfg, ch.ghat, policy)
            mean, ci = verify_power_constraint(plan, cfg, rng, draws=draws)
            err = mean / cfg.Ptx - 1
            worst = max(worst, abs(err))
            parts.append(f"{mode}/K={K} {err:+.3%}")
    return GateResult("3 power constraint", worst < 0.01, ", ".join(parts))


def gate_order_statistics(level="full", seed=13) -> GateResult:
    draws = _size(level, 400_000, 50_000)
    rng = np.random.default_rng(seed)
    N, Ms, nus = 16, (2, 4, 8, 12), (1, 2)
    # Bonferroni: every comparison holds jointly at 95%
    z = sstats.norm.ppf(1 - 0.025 / (N * len(Ms) * len(nus)))
    worst_z, worst_sum = 0.0, 0.0
    for M in Ms:
        x = np.sort(rng.gamma(M, size=(draws, N)), axis=1)[:, ::-1]
        for nu in nus:
            xs = x ** nu
            mean = xs.mean(axis=0)
            se = xs.std(axis=0, ddof=1) / math.sqrt(draws)
            quad = np.array([ordered_gamma_moment(OrderedMomentQuery(N, n, M, nu)) for n in range(1, N + 1)])
            worst_z = max(worst_z, float(np.max(np.abs(quad - mean) / se)))
        q1 = [ordered_gamma_moment(OrderedMomentQuery(N, n, M, 1)) for n in range(1, N + 1)]
        worst_sum = max(worst_sum, abs(math.fsum(q1) / (N * M) - 1))
    ok = worst_z < z and worst_sum < 1e-8
    return GateResult("4 order statistics", ok,
                      f"max |z| {worst_z:.2f} (limit {z:.2f}), rank-sum rel. error {worst_sum:.1e}")


def gate_energy_vs_mc(level="full", seed=14, pilots=(1e-4, 1e-7, math.inf)) -> GateResult:
    draws = _size(level, 100_000, 20_000)
    diode = DiodeModel()
    t0 = time.perf_counter()
    ok, parts = True, []
    for Pp in pilots:
        for M in (4, 8, 12):
            cfg = _fig4(M, Pp)
            st = user_stats(cfg)
            eta, _ = analytic_eta(cfg, st, "proportional")
            rep = harvested_energy_chirp(cfg, eta, st, diode)[0]
            rng = np.random.default_rng([seed, M])
            lin = tot = 0.0
            for done in range(0, draws, 10_000):
                L, NL = harvest_semi_analytic(cfg, rng, min(10_000, draws - done), diode)
                lin += L.sum()
                tot += (L + NL).sum()
            el = rep.linear / (lin / draws) - 1
            et = rep.Q / (tot / draws) - 1
            ok &= abs(el) < 0.02 and abs(et) < 0.10
            parts.append(f"Pp={Pp:g} M={M}: lin {el:+.2%} tot {et:+.2%}")
    dt = time.perf_counter() - t0
    ok &= dt < 1800
    return GateResult("5 closed form vs MC", ok, "; ".join(parts) + f"; {dt:.0f}s")


def gate_gain_30(level="full") -> GateResult:
    diode = DiodeModel()
    cfg = _fig4(12)
    ratio = _q_overall(cfg, diode)[0] / _q_overall(cfg.fixed(), diode)[0]
    return GateResult("6 chirp/fixed gain at M=12", abs(ratio - 1.30) <= 0.05, f"ratio {ratio:.4f} (target 1.30 +/- 0.05)")


def gate_sum_energy(level="full") -> GateResult:
    diode = DiodeModel()

    def total(K, fixed):
        cfg = SystemConfig(M=12, N=16, xi=2, K=K, distances=evenly_spaced((7.6, 10.0), K))
        return _q_overall(cfg.fixed() if fixed else cfg, diode, "equal").sum()

    r1 = total(7, False) / total(7, True)
    r2 = total(10, False) / total(7, False)
    r3 = total(10, True) / total(7, True)
    ok = abs(r1 - 1.54) <= 0.08 and abs(r2 - 1.21) <= 0.05 and abs(r3 - 1.16) <= 0.05
    return GateResult("7 multi-user sum energy", ok,
                      f"chirp/fixed K=7 {r1:.3f} (1.54), chirp K10/K7 {r2:.3f} (1.21), fixed K10/K7 {r3:.3f} (1.16)")


def crossing_distance(M, fixed, level=1e-6, diode=None, lo=1.0, hi=40.0):
    """Distance (m) where the closed-form per-phase energy of one user falls to ``level``."""
    diode = diode or DiodeModel()

    def f(D):
        cfg = SystemConfig(M=M, N=16, xi=2, K=1, distances=(D,))
        return math.log(_q_overall(cfg.fixed() if fixed else cfg, diode)[0] / level)

    return brentq(f, lo, hi, xtol=1e-9)


def gate_range(level="full") -> GateResult:
    dc, df = crossing_distance(6, False), crossing_distance(6, True)
    delta = dc - df
    return GateResult("8 range extension at M=6", abs(delta - 1.0) <= 0.3,
                      f"chirp {dc:.3f} m, fixed {df:.3f} m, difference {delta:.3f} m (target 1.0 +/- 0.3)")


def random_config(rng) -> tuple:
    K = int(rng.integers(1, 5))
    cfg = SystemConfig(M=int(rng.integers(2, 13)), N=16, xi=2, K=K,
                       Pp=float(10 ** rng.uniform(-8, -2)),
                       distances=tuple(float(d) for d in rng.uniform(5.0, 12.0, K)))
    policy = ["proportional", "equal", "channel_inversion"][int(rng.integers(3))]
    return cfg, policy


def gate_rate_properties(level="full", seed=19) -> GateResult:
    grid = np.logspace(-4, 8, 400)
    vals = np.array([bpsk_info_term(r) for r in grid])
    in_range = bool(np.all(vals >= 0) and np.all(vals <= LN2 + 1e-12))
    monotone = bool(np.all(np.diff(vals) >= -1e-12))
    limit = abs(bpsk_info_term(1e9) - LN2)
    rng = np.random.default_rng(seed)
    diode = DiodeModel()
    bad = 0
    for _ in range(100):
        cfg, policy = random_config(rng)
        st = user_stats(cfg)
        eta, _ = analytic_eta(cfg, st, policy)
        for k in range(cfg.K):
            rr = rate_chirp(cfg, eta, st, k, diode)
            rel = 1e-12 * rr.R_upper
            bad += not (rr.R_upper + rel >= rr.R >= rr.R_lower - rel)
    ok = in_range and monotone and limit < 1e-3 and bad == 0
    return GateResult("9 rate properties", ok,
                      f"range ok {in_range}, monotone {monotone}, |I(1e9)-ln2| {limit:.1e}, "
                      f"bound violations {bad}/100 configs")


def gate_sinr_oracle(level="full", seed=20, pilots=(1e-4, math.inf)) -> GateResult:
    draws = _size(level, 10_000, 4_000)
    diode = DiodeModel()
    ok, parts = True, []
    for Pp in pilots:
        cfg = SystemConfig(M=8, N=16, xi=2, K=1, Pp=Pp, distances=(10.0,))
        st = user_stats(cfg)
        eta, _ = analytic_eta(cfg, st, "proportional")
        ref = sinr_chirp(cfg, eta, st, 0, diode)
        emp = rate_mc_oracle(cfg, eta, draws, np.random.default_rng([seed, int(Pp > 1)]), diode).sinr
        err = float(np.max(np.abs(emp / ref - 1)))
        ok &= err < 0.05
        parts.append(f"Pp={Pp:g}: max rel. error {err:.2%}")
    return GateResult("10 SINR oracle", ok, "; ".join(parts))


def gate_rate_energy_region(level="full", fraction=0.5, anchors=(("fixed", 0.985), ("chirp", 0.91))) -> GateResult:
    diode = DiodeModel()
    grid = np.linspace(0.0, 1.0, 21)
    contained, psr_order, anchor_ok = True, True, True
    parts = []
    for M in (6, 10):
        cfg = SystemConfig(M=M, N=16, xi=2, K=1, distances=(9.1,))
        st = user_stats(cfg)
        eta, _ = analytic_eta(cfg, st, "proportional")
        rep = harvested_energy_chirp(cfg, eta, st, diode)[0]
        blocks = cfg.tau_dl / cfg.T
        r_dir = rate_chirp(cfg, eta, st, 0, diode).R
        for rho in grid:
            q, branch = psr_harvest_and_split(rep, rho)
            r = rate_chirp(cfg, eta, st, 0, diode, branch).R
            dq, dr = rep.Q_overall - blocks * q, r_dir - r
            contained &= dq >= 0 and dr >= 0 and (dq > 0 or dr > 0)
        target = fraction * r_dir
        splits, energy = {}, {}
        for mode in ("chirp", "fixed"):
            f = lambda s: psr_rate(cfg, diode, "proportional", mode, s) - target
            splits[mode] = brentq(f, 0.0, 1.0, xtol=1e-15) if f(0.0) >= 0 else float("nan")
            mcfg = cfg if mode == "chirp" else cfg.fixed()
            mst = user_stats(mcfg)
            meta, _ = analytic_eta(mcfg, mst, "proportional")
            mrep = (harvested_energy_chirp if mode == "chirp" else harvested_energy_fixed)(mcfg, meta, mst, diode)[0]
            energy[mode] = mcfg.tau_dl / mcfg.T * psr_harvest_and_split(mrep, splits[mode])[0]
        psr_order &= energy["chirp"] >= energy["fixed"]
        for mode, want in anchors:
            anchor_ok &= abs(splits[mode] - want) <= 0.02
        parts.append(f"M={M}: split chirp {splits['chirp']:.6f} fixed {splits['fixed']:.6f}, "
                     f"energy at target chirp {energy['chirp']:.3e} fixed {energy['fixed']:.3e}")
    ok = contained and psr_order and anchor_ok
    head = f"DIR contains PSR {contained}, PSR chirp over fixed {psr_order}, anchors {anchor_ok}"
    return GateResult("11 rate-energy region", ok, head + "; " + "; ".join(parts))


def gate_determinism(level="full", preset="fig9", realizations=None) -> GateResult:
    from .cli import main

    realizations = realizations or _size(level, 2_000, 300)
    outs = []
    with tempfile.TemporaryDirectory() as tmp:
        for threads in (1, 8):
            out = Path(tmp) / f"t{threads}"
            code = main(["preset", preset, "--seed", "7", "--realizations", str(realizations),
                         "--threads", str(threads), "--out", str(out)])
            outs.append((code, (out / "points.csv").read_bytes() if code == 0 else b""))
    ok = outs[0][0] == 0 and outs[0] == outs[1]
    return GateResult("12 determinism", ok, f"preset {preset}, {realizations} realizations, "
                      f"{len(outs[0][1])} bytes, identical {outs[0][1] == outs[1][1]}")


GATES = (gate_waveform_identities, gate_orthogonality, gate_power_constraint, gate_order_statistics,
         gate_energy_vs_mc, gate_gain_30, gate_sum_energy, gate_range, gate_rate_properties,
         gate_sinr_oracle, gate_rate_energy_region, gate_determinism)


def run_gates(level: str = "fast") -> list:
    return [g(level) for g in GATES]
