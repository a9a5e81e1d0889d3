"""Command-line interface: ``cgmpc simulate | verify | estimate``.

Set ``CGMPC_LOG=info`` for per-step progress or ``CGMPC_LOG=trace`` for
per-iteration solver traces.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .admm import TRACE, SolverError
from .constants import (
    ConfigurationError,
    EstimationError,
    derived_constants,
    epsilon_lower,
    estimate_lipschitz,
    verify_assumptions,
)
from .config import RunConfig, default_config_path
from .plant import RiccatiError
from .simulation import CASES, Scenario, ScenarioError, compare_cases, emit_csv, run_closed_loop, summary_text

EXIT_OK = 0
EXIT_ASSUMPTION = 1
EXIT_VALIDATION = 2
EXIT_SOLVER = 3


def _setup_logging() -> None:
    level = {"trace": TRACE, "info": logging.INFO}.get(os.environ.get("CGMPC_LOG", "").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _reference_samples(cfg: RunConfig, n: int = 21) -> list:
    vals = np.concatenate(cfg.reference_values())
    return [np.array([v]) for v in np.linspace(vals.min(), vals.max(), n)] if vals.size else []


def _load(path) -> RunConfig:
    return RunConfig.load(path) if path else RunConfig.default()


def cmd_simulate(args) -> int:
    try:
        cfg = _load(args.config)
        steps = cfg.steps if args.steps is None else args.steps
        if steps < 1:
            raise ConfigurationError(f"--steps must be at least 1, got {steps}")
        prob = cfg.build()
        report = verify_assumptions(prob.spec, prob.lqr, prob.qp, prob.bundle, _reference_samples(cfg))
        if not report.passed:
            names = ", ".join(c.name for c in report.failures() if c.hard)
            raise ConfigurationError(f"assumption check failed: {names}\n{report.to_text()}")
    except (ConfigurationError, RiccatiError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    out = Path(args.output if args.output else cfg.get("output.dir"))
    out.mkdir(parents=True, exist_ok=True)
    cases = CASES if args.case == "all" else (args.case,)
    logs = {}
    try:
        trace = None
        for case in cases:
            if case == "exact-governed" and trace is None:
                a1 = logs.get("a1") or run_closed_loop(
                    Scenario(prob.spec, prob.lqr, prob.bundle, cfg.x0, cfg.segments, steps, "a1"))
                trace = [r.v_hat for r in a1]
            scn = Scenario(prob.spec, prob.lqr, prob.bundle, cfg.x0, cfg.segments, steps, case, v_hat_trace=trace)
            logs[case] = run_closed_loop(scn)
            if case == "a1":
                trace = [r.v_hat for r in logs[case]]
            path = out / f"{case}.csv"
            emit_csv(logs[case], path, deterministic=args.deterministic)
            print(f"wrote {path}")
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    summary = compare_cases(logs)
    if args.deterministic:
        for stats in summary.values():
            stats["walltime_s"] = 0.0
    text = summary_text(summary)
    if len(cases) > 1:
        (out / "summary.txt").write_text(text, encoding="utf-8")
        print(f"wrote {out / 'summary.txt'}")
    print(text, end="")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        cfg = _load(args.config)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        prob = cfg.build()
    except (ConfigurationError, RiccatiError) as exc:
        print(f"[FAIL] precondition (A3 weights / Riccati): {exc}")
        return EXIT_ASSUMPTION
    b = prob.bundle
    report = verify_assumptions(prob.spec, prob.lqr, prob.qp, b, _reference_samples(cfg))
    print(report.to_text())
    try:
        dc = derived_constants(prob.spec, prob.lqr, b.beta_chi, b.phi, b.pi1, b.pi2, strict=False)
        eps = epsilon_lower(dc, b, strict=False)
        print("derived constants:")
        for k, v in dc.as_dict().items():
            if k != "eps_lower":
                print(f"  {k} = {v!r}")
        print(f"  eps_lower = {eps!r}")
    except ConfigurationError as exc:
        print(f"derived constants unavailable: {exc}")
    return EXIT_OK if report.passed else EXIT_ASSUMPTION


def cmd_estimate(args) -> int:
    try:
        cfg = _load(args.config)
        if args.samples is not None and args.samples < 1:
            raise ConfigurationError(f"--samples must be at least 1, got {args.samples}")
        prob = cfg.build()
        sampler = cfg.sampler(samples=args.samples, seed=args.seed)
    except (ConfigurationError, RiccatiError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        est = estimate_lipschitz(prob.spec, prob.qp, prob.bundle, sampler)
    except EstimationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"samples = {sampler.samples}, seed = {sampler.seed}, safety = {sampler.safety}")
    print(est.to_text())
    b = prob.bundle
    print("configured vs estimated:")
    for name, est_v in (("beta_chi", est.beta_chi), ("phi", est.phi), ("beta_w", est.beta_w), ("gamma", est.gamma)):
        conf = getattr(b, name)
        note = "ok" if est_v <= conf else "estimate exceeds configured value"
        print(f"  {name}: configured {conf:.6g}, estimated {est_v:.6g} ({note})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cgmpc", description="Suboptimal MPC with a computation governor.")
    sub = p.add_subparsers(dest="command", required=True)
    cfg_help = f"config file (default: shipped example, {default_config_path().name})"

    s = sub.add_parser("simulate", help="run closed-loop cases and write CSV logs")
    s.add_argument("--config", help=cfg_help)
    s.add_argument("--case", choices=(*CASES, "all"), default="all")
    s.add_argument("--steps", type=int, help="number of time steps (overrides the config)")
    s.add_argument("--output", help="output directory (overrides output.dir)")
    s.add_argument("--deterministic", action="store_true", help="write wall times as 0 for byte-identical output")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="check standing assumptions and print derived constants")
    v.add_argument("--config", help=cfg_help)
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("estimate", help="sample Lipschitz and rate constants")
    e.add_argument("--config", help=cfg_help)
    e.add_argument("--samples", type=int)
    e.add_argument("--seed", type=int)
    e.set_defaults(func=cmd_estimate)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
