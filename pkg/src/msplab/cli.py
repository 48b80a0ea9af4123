"""Command-line experiment runner.

Every command writes its outputs plus a ``manifest.ini`` under ``--out``; the
manifest can be passed back with ``--config`` to repeat the run. Exit codes:
0 success, 2 invalid config, 3 divergence, 4 verification failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__
from .bounds import polyk_bound, staircase_bound
from .config import ConfigError, ExperimentConfig, load_config, manifest_text, parse_target
from .dynamics import (
    DivergenceError, HyperParams, TrainingTrace, bsgd_train, coefficient_gap, crossing_times, dfpde_integrate,
)
from .fourier import detect_symmetries, indices_from_mask, is_msp, popcount, set_label
from .numerics import RngSpec
from .presets import PRESETS, get_preset
from .recurrence import continuous_coeff_table, continuous_oracle_check
from .twophase import T1_LADDER, certify, matrix_csv, phase2, subset_labels

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_VERIFY = 0, 2, 3, 4

DEFAULTS = {
    "msp-check": "msp-check",
    "train-sgd": "sgd",
    "train-dfpde": "dfpde",
    "two-phase": "two-phase-certify",
    "recurrence-verify": "recurrence-verify",
    "lower-bound": "lower-bound-sweep",
    "compare": "fig1-compare",
}


class Run:
    """Output directory bookkeeping for one command."""

    def __init__(self, cfg: ExperimentConfig, command: str, args):
        self.cfg = cfg
        self.command = command
        self.out = args.out or os.path.join(cfg.out, command)
        self.csv = args.csv
        self.outputs: list[str] = []
        self.start = time.perf_counter()
        os.makedirs(self.out, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.out, name)

    def text(self, name: str, body: str) -> str:
        p = self.path(name)
        with open(p, "w", newline="") as fh:
            fh.write(body)
        self.outputs.append(name)
        return p

    def trace(self, stem: str, trace: TrainingTrace) -> None:
        trace.write(self.path(stem))
        self.outputs += [stem + ".csv", stem + ".meta.json"]
        if self.csv:
            sys.stdout.write(trace.csv_text())

    def finish(self) -> None:
        wall = time.perf_counter() - self.start
        with open(self.path("manifest.ini"), "w") as fh:
            fh.write(manifest_text(self.cfg, self.command, wall, self.outputs))


# commands


def cmd_msp_check(cfg: ExperimentConfig, args, run: Run) -> int:
    h = cfg.function()
    res = is_msp(h.structure(), h)
    lines = [res.describe()]
    if not res.is_msp:
        lines.append(f"stuck risk lower bound: {res.stuck_risk_lower_bound!r}")
    syms = detect_symmetries(h) if h.P <= 8 else []
    if syms:
        lines.append("symmetries: " + " ".join("(" + ",".join(str(i + 1) for i in p) + ")" for p in syms))
    body = "\n".join(lines) + "\n"
    print(body, end="")
    run.text("msp.txt", body)
    return EXIT_OK


def _dfpde(cfg: ExperimentConfig, h, act) -> tuple[TrainingTrace, object]:
    syms = detect_symmetries(h) if cfg.options.get("symmetry") == "project" else ()
    return dfpde_integrate(h, cfg.hp, act, delta=cfg.delta, method=cfg.method, symmetries=syms)


def cmd_train_dfpde(cfg: ExperimentConfig, args, run: Run) -> int:
    h, act = cfg.function(), cfg.act()
    trace, ens = _dfpde(cfg, h, act)
    run.trace("dfpde", trace)
    res = is_msp(h.structure(), h)
    lines = [f"final risk = {trace.risk[-1]:.6e}", res.describe()]
    if not res.is_msp:
        omega = [i - 1 for i in indices_from_mask(res.blocked_coords)]
        lines.append(f"max |u| on blocked coordinates = {float(np.max(np.abs(ens.U[:, omega]))):.3e}")
        lines.append(f"stuck risk lower bound = {res.stuck_risk_lower_bound!r}")
    if "symmetry_defect" in trace.metadata:
        lines.append(f"symmetry defect before projection = {trace.metadata['symmetry_defect']:.3e}")
    run.text("summary.txt", "\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


def _sgd(cfg: ExperimentConfig, h, act, seed: int) -> TrainingTrace:
    trace, _ = bsgd_train(h, cfg.hp, act, cfg.width, RngSpec(seed), cfg.d)
    return trace


def cmd_train_sgd(cfg: ExperimentConfig, args, run: Run) -> int:
    h, act = cfg.function(), cfg.act()
    for seed in cfg.seeds:
        trace = _sgd(cfg, h, act, seed)
        run.trace(f"sgd_seed{seed}", trace)
        print(f"seed {seed}: final risk = {trace.risk[-1]:.6e} (stderr {trace.stderr[-1]:.2e})")
    return EXIT_OK


def _crossing_report(trace: TrainingTrace, level: float = 0.5) -> tuple[str, bool]:
    cross = crossing_times(trace, level)
    order = sorted((t, popcount(m), m) for m, t in cross.items() if t is not None)
    degs = [d for _, d, _ in order]
    ok = len(order) == len(cross) and all(x < y for x, y in zip(degs, degs[1:])) \
        and all(a[0] < b[0] for a, b in zip(order, order[1:]))
    text = ", ".join(f"{set_label(m)}@{t:g}" for t, _, m in order) or "none"
    missing = [set_label(m) for m, t in cross.items() if t is None]
    if missing:
        text += " (never: " + ", ".join(missing) + ")"
    return text, ok


def cmd_compare(cfg: ExperimentConfig, args, run: Run) -> int:
    h, act = cfg.function(), cfg.act()
    ref, _ = _dfpde(cfg, h, act)
    run.trace("dfpde", ref)
    lines = [f"dfpde final risk = {ref.risk[-1]:.6e}"]
    text, ok = _crossing_report(ref)
    lines.append(f"dfpde crossings of 0.5: {text} (increasing degree: {'yes' if ok else 'no'})")
    gaps = []
    res = is_msp(h.structure(), h)
    for seed in cfg.seeds:
        tr = _sgd(cfg, h, act, seed)
        run.trace(f"sgd_seed{seed}", tr)
        gaps.append(coefficient_gap(ref, tr))
        lines.append(f"seed {seed}: sgd final risk = {tr.risk[-1]:.6e}, sup-time linf gap = {gaps[-1]:.4f}")
        if cfg.kind == "symmetry-escape" and not res.is_msp:
            lines.append("  " + _escape_line(tr, h, res, cfg.hp, cfg.d))
    lines.append(f"mean gap over {len(gaps)} seeds = {float(np.mean(gaps)):.4f}")
    body = "\n".join(lines) + "\n"
    run.text("summary.txt", body)
    print(body, end="")
    return EXIT_OK


def _escape_line(tr: TrainingTrace, h, res, hp: HyperParams, d: int) -> str:
    """First time a blocked coefficient reaches half its target value, as a sample count."""
    blocked = [m for m in tr.sets if m not in res.reachable]
    hits = []
    for m in blocked:
        col = tr.column(m) * np.sign(h.coefficient(m))
        idx = np.nonzero(col >= 0.5 * abs(h.coefficient(m)))[0]
        if idx.size:
            hits.append(tr.t[idx[0]])
    if not hits:
        n = tr.t[-1] * hp.batch / hp.eta
        return f"no escape within n = {n:.3g} samples (log_d n = {np.log(n) / np.log(d):.2f})"
    n = min(hits) * hp.batch / hp.eta
    return f"escape at t = {min(hits):g}, n = {n:.3g} samples (log_d n = {np.log(n) / np.log(d):.2f}, d^2 = {d * d})"


def cmd_two_phase(cfg: ExperimentConfig, args, run: Run) -> int:
    h, act = cfg.function(), cfg.act()
    ladder = (args.T1,) if args.T1 is not None else T1_LADDER
    lines = []
    for T1 in ladder:
        cert, fmap, K = certify(h, act, T1, delta=min(cfg.delta, T1 / 10), method=cfg.method)
        lines.append(f"[T1={T1!r}]")
        lines.append(cert.report().rstrip())
        res = phase2(K, h, fmap, act, target=args.eps)
        lines.append(res.report().rstrip())
        run.text(f"kernel_T1_{T1!r}.csv", matrix_csv(K.fourier(), subset_labels(h.P)))
        run.trace(f"phase2_T1_{T1!r}", res.trace)
    body = "\n".join(lines) + "\n"
    run.text("certificate.txt", body)
    print(body, end="")
    return EXIT_OK


def cmd_recurrence_verify(cfg: ExperimentConfig, args, run: Run) -> int:
    h, act = cfg.function(), cfg.act()
    table = continuous_coeff_table(h, act.taylor(args.L), args.L)
    run.text("coeff_table.csv", table.csv_text())
    chk = continuous_oracle_check(h, act, args.L)
    line = f"continuous oracle L={args.L}: {chk.line()} -> {'pass' if chk.passed else 'fail'}"
    run.text("recurrence.txt", line + "\n")
    print(line)
    return EXIT_OK if chk.passed else EXIT_VERIFY


def cmd_lower_bound(cfg: ExperimentConfig, args, run: Run) -> int:
    reports = [polyk_bound(args.d, args.k, args.m, args.slack)]
    if args.P is not None:
        reports.append(staircase_bound(args.d, args.P, args.slack))
    for r in reports:
        print(r.line())
    rows = [reports[0].csv_header()] + [r.csv_row() for r in reports]
    run.text("bounds.csv", "\n".join(rows) + "\n")
    if args.csv:
        sys.stdout.write("\n".join(rows) + "\n")
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, args, run: Run) -> int:
    from .verify import run_suite

    report = run_suite(args.level)
    body = report.text()
    print(body, end="")
    run.text("verify.txt", body)
    return EXIT_OK if report.passed else EXIT_VERIFY


COMMANDS = {
    "msp-check": cmd_msp_check,
    "train-sgd": cmd_train_sgd,
    "train-dfpde": cmd_train_dfpde,
    "two-phase": cmd_two_phase,
    "recurrence-verify": cmd_recurrence_verify,
    "lower-bound": cmd_lower_bound,
    "compare": cmd_compare,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config or a previous manifest.ini")
    common.add_argument("--preset", help="one of: " + ", ".join(PRESETS))
    common.add_argument("--seed", type=int, help="single root seed (overrides the config seeds)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--csv", action="store_true", help="also print CSV traces to stdout")
    common.add_argument("--target", help="inline target such as 'z1 + z1z2'")
    common.add_argument("--horizon", type=float, help="override the training horizon")

    p = argparse.ArgumentParser(prog="msplab", description="Staircase learning experiments on the hypercube.")
    p.add_argument("--version", action="version", version=f"msplab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    m = sub.add_parser("msp-check", parents=[common], help="classify a target")
    m.add_argument("function", nargs="?", help="inline target")
    sub.add_parser("train-sgd", parents=[common], help="one-pass batch SGD in ambient dimension d")
    sub.add_parser("train-dfpde", parents=[common], help="dimension-free particle dynamics")
    tp = sub.add_parser("two-phase", parents=[common], help="layer-wise certificate and second phase")
    tp.add_argument("--T1", type=float, help="first-phase time (default: the ladder 0.02, 0.05, 0.1)")
    tp.add_argument("--eps", type=float, default=1e-3, help="second-phase risk target")
    rv = sub.add_parser("recurrence-verify", parents=[common], help="series coefficients against integration")
    rv.add_argument("--L", type=int, default=4)
    lb = sub.add_parser("lower-bound", parents=[common], help="linear-method sample-size bounds")
    lb.add_argument("--d", type=int, default=10)
    lb.add_argument("--k", type=int, default=2)
    lb.add_argument("--m", type=int, default=1)
    lb.add_argument("--P", type=int)
    lb.add_argument("--slack", type=float, default=1.0)
    sub.add_parser("compare", parents=[common], help="batch SGD against the dimension-free dynamics")
    v = sub.add_parser("verify", parents=[common], help="run the invariant suites")
    v.add_argument("level", nargs="?", choices=("quick", "full"), default="quick")
    return p


def resolve_config(args) -> ExperimentConfig:
    kind = DEFAULTS.get(args.command, "dfpde")
    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        try:
            cfg = ExperimentConfig.from_preset(get_preset(args.preset))
        except KeyError as exc:
            raise ConfigError("--preset", exc.args[0]) from None
    else:
        target = args.target or getattr(args, "function", None) or PRESETS["fig1"].target
        cfg = ExperimentConfig.from_preset(PRESETS["fig1"])
        cfg = replace(cfg, kind=kind, target=target, preset=None, seeds=(0,))
    if args.target:
        cfg = replace(cfg, target=args.target, preset=None)
    if getattr(args, "function", None):
        cfg = replace(cfg, target=args.function, preset=None)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed", "must be nonnegative")
        cfg = cfg.with_seed(args.seed)
    if args.horizon is not None:
        try:
            cfg = replace(cfg, hp=replace(cfg.hp, horizon=args.horizon,
                                          record_interval=min(cfg.hp.record_interval, args.horizon or 1.0)))
        except ValueError as exc:
            raise ConfigError("--horizon", str(exc)) from None
    try:
        parse_target(cfg.target)
    except ValueError as exc:
        raise ConfigError("experiment.target", str(exc)) from None
    cfg.act()
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        run = Run(cfg, args.command, args)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code = COMMANDS[args.command](cfg, args, run)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        run.trace("partial", exc.trace)
        run.finish()
        print(f"diverged: {exc}; partial trace saved under {run.out}", file=sys.stderr)
        return EXIT_DIVERGED
    run.finish()
    return code


if __name__ == "__main__":
    sys.exit(main())
