"""Command line entry point: ``varbingham --config run.cfg``.

Exit codes: 0 clean run, 2 configuration or validation error, 3 numerical
failure (including a run that finished with a violated invariant flag).
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import SCENARIOS, RunConfig, defaults_for, from_flat, load_config, print_defaults
from .diagnostics import eps_trend_table
from .errors import ConfigError, ContractError, NumericalError, ParameterError, VarBinghamError
from .momentum import Regularized
from .runner import run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="varbingham", description="Variable-yield Bingham flow with pore pressure transport.")
    ap.add_argument("--config", metavar="PATH", help="flat key = value configuration file")
    ap.add_argument("--output-dir", metavar="PATH", help="override output_dir")
    ap.add_argument("--print-defaults", action="store_true", help="print the documented defaults and exit")
    ap.add_argument("--scenario", metavar="NAME", help="scenario (overrides the file); one of " + ", ".join(SCENARIOS))
    ap.add_argument("--until", metavar="T", type=float, help="stop at time T instead of time.t_end")
    ap.add_argument("--sweep", metavar="eps=A,B,...", help="run one regularized job per eps in parallel")
    ap.add_argument("--jobs", type=int, default=None, help="worker processes for --sweep")
    return ap


def parse_sweep(text: str) -> list[float]:
    key, _, values = text.partition("=")
    if key.strip() != "eps" or not values:
        raise ConfigError("expected eps=a,b,...", field="--sweep")
    try:
        eps = [float(v) for v in values.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"bad eps list: {e}", field="--sweep") from None
    if not eps or min(eps) <= 0:
        raise ConfigError("eps values must be > 0", field="--sweep")
    return eps


def resolve_config(args) -> RunConfig:
    if args.config is not None:
        cfg = load_config(args.config, args.scenario)
    else:
        if args.scenario is None:
            raise ConfigError("scenario missing", field="scenario")
        if args.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {args.scenario!r}", field="scenario")
        cfg = from_flat(defaults_for(args.scenario))
    if args.output_dir is not None:
        cfg = cfg.with_updates({"output_dir": args.output_dir})
    if args.until is not None and not args.until > 0:
        raise ConfigError("must be > 0", field="--until")
    return cfg


def _report_line(report) -> str:
    last = report.samples[-1]
    bad = [k for k, ok in report.flags.items() if not ok]
    return (f"{report.config.scenario}: t={last.t:.6g} steps={report.steps} kinetic={last.kinetic:.6g} "
            f"div_max={report.div_max:.3g} rigid_fraction={report.rigid.area_fraction:.4f} "
            f"wall={report.wall_time:.1f}s" + (f" VIOLATIONS: {', '.join(bad)}" if bad else ""))


def _sweep_job(cfg: RunConfig, until, out_dir: str):
    """Worker body; returns ``(eps, audit or None, summary line, ok, error)``."""
    eps = cfg.mode.eps
    try:
        r = run_scenario(cfg, until=until, output_dir=out_dir)
    except NumericalError as e:
        return eps, None, None, False, str(e)
    return eps, r.audit, _report_line(r), all(r.flags.values()), None


def run_sweep(cfg: RunConfig, eps_list, until=None, jobs=None, out=None) -> int:
    out = sys.stdout if out is None else out
    base = Path(cfg.output_dir)
    jobs_cfg = []
    for eps in eps_list:
        stab = cfg.mode.stab if isinstance(cfg.mode, Regularized) else None
        c = cfg.with_updates({"mode.kind": "regularized", "mode.eps": eps, "mode.stab": stab,
                              "output_dir": str(base / f"eps_{eps!r}")})
        jobs_cfg.append(c)
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        results = list(ex.map(_sweep_job, jobs_cfg, [until] * len(jobs_cfg), [c.output_dir for c in jobs_cfg]))
    code = EXIT_OK
    audits = {}
    for eps, audit, line, ok, err in results:
        if err is not None:
            print(f"eps={eps!r}: numerical failure: {err}", file=sys.stderr)
            code = EXIT_NUMERIC
            continue
        print(f"eps={eps!r}: {line}", file=out)
        code = code if ok else EXIT_NUMERIC
        if audit is not None:
            audits[eps] = audit
    if audits:
        print("eps,sup_v_sq,grad_sq,plastic_l1", file=out)
        for row in eps_trend_table(audits):
            print(",".join(repr(float(x)) for x in row), file=out)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.print_defaults:
            if args.scenario is not None and args.scenario not in SCENARIOS:
                raise ConfigError(f"unknown scenario {args.scenario!r}", field="scenario")
            sys.stdout.write(print_defaults(args.scenario))
            return EXIT_OK
        cfg = resolve_config(args)
        if args.sweep is not None:
            return run_sweep(cfg, parse_sweep(args.sweep), args.until, args.jobs)
        report = run_scenario(cfg, until=args.until)
    except (ConfigError, ContractError, ParameterError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except VarBinghamError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    print(_report_line(report))
    return EXIT_OK if all(report.flags.values()) else EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
