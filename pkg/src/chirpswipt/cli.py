"""Command-line entry point: ``chirpswipt run|preset|validate``."""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from importlib import resources
from pathlib import Path

from .config import ConfigError, ExperimentConfig
from .orderstat import OrderStatError
from .simkit import run_sweep, split_meeting_rate

HEADER = ["axis", "axis_value", "user", "metric", "source", "value", "ci_lo", "ci_hi"]
PRESETS = ("fig4", "fig5", "fig6a", "fig6b", "fig7", "fig8", "fig9", "fig10")
ENV_OUT = "CHIRPSWIPT_OUT"

log = logging.getLogger("chirpswipt")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: Path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def summarize(exp: ExperimentConfig, spec, rows, threads) -> str:
    lines = [
        f"axis: {spec.axis}  values: {len(spec.values)}  series: {spec.series_param or '-'}",
        f"modes: {', '.join(spec.modes)}  policy: {spec.policy}  users: {spec.base.K}",
        f"realizations: {spec.realizations}  seed: {spec.seed}  threads: {threads}",
        f"rows: {len(rows)}  skipped points: {sum(1 for r in rows if r[4] == 'error')}",
        "",
    ]
    # compact listing of the closed-form energy per point
    for axis, av, user, metric, source, value, lo, hi in rows:
        if source == "analytic" and metric.endswith((":Q_overall", ":psr_Q_overall", ":R")):
            lines.append(f"{axis}={_cell(av):>10} user={user} {metric:<40} {value:.6e}")
    frac = exp.get("output", "rate_threshold")
    if frac is not None and "psr" in spec.metrics:
        lines.append("")
        for sv in spec.series_values:
            anchors = split_meeting_rate(spec, sv, frac)
            for mode, (target, rho) in anchors.items():
                lines.append(f"series={sv} mode={mode} rate target={target:.6e} bits -> split {rho:.6f}")
    return "\n".join(lines) + "\n"


def execute(exp: ExperimentConfig, out: Path, seed=None, realizations=None, threads=1) -> int:
    try:
        spec = exp.sweep()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if seed is not None:
        spec.seed = seed
    if realizations is not None:
        spec.realizations = realizations
    rows = run_sweep(spec, threads=threads)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "points.csv", rows)
    (out / "summary.txt").write_text(summarize(exp, spec, rows, threads), encoding="utf-8")
    print(f"wrote {out / 'points.csv'} ({len(rows)} rows)")
    return 0


def preset_text(name: str) -> str:
    return resources.files("chirpswipt").joinpath("presets", f"{name}.cfg").read_text(encoding="utf-8")


def _out_dir(args, exp):
    if args.out:
        return Path(args.out)
    d = exp.get("output", "dir")
    if d:
        return Path(d)
    return Path(os.environ.get(ENV_OUT, "out"))


def cmd_run(args) -> int:
    try:
        exp = ExperimentConfig.load(args.config)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return execute(exp, _out_dir(args, exp), args.seed, args.realizations, args.threads)


def cmd_preset(args) -> int:
    exp = ExperimentConfig.parse(preset_text(args.name))
    out = _out_dir(args, exp) if (args.out or exp.get("output", "dir")) else \
        Path(os.environ.get(ENV_OUT, "out")) / args.name
    return execute(exp, out, args.seed, args.realizations, args.threads)


def cmd_validate(args) -> int:
    from .validation import run_gates

    results = run_gates(args.level)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.detail}")
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} gates passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chirpswipt", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, help="override the sweep seed")
        sp.add_argument("--realizations", type=int, help="Monte Carlo realizations per point")
        sp.add_argument("--out", help=f"output directory (default: ${ENV_OUT} or ./out)")
        sp.add_argument("--threads", type=int, default=1, help="worker threads")

    r = sub.add_parser("run", help="run an experiment file")
    r.add_argument("config")
    common(r)
    r.set_defaults(func=cmd_run)

    pr = sub.add_parser("preset", help="run a bundled figure configuration")
    pr.add_argument("name", choices=PRESETS)
    common(pr)
    pr.set_defaults(func=cmd_preset)

    v = sub.add_parser("validate", help="run the oracle and invariant gates")
    v.add_argument("--level", choices=("fast", "full"), default="fast")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, OrderStatError, FloatingPointError) as exc:
        print(f"numeric failure in {type(exc).__module__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
