"""Batch command-line entry point.

Subcommands:
  run          solve the configured problem; write time-series CSV and a
               VTK snapshot of the final field under --out
  validate     check the configuration and model assumptions
  constants    print the certified material and coercivity constants
  experiment   run the diagnostic experiment battery and write a summary
  convergence  run the manufactured-solution convergence study

Exit codes: 0 success / all checks pass, 1 validation or experiment
failure, 2 usage error.  The only environment variable honored is
MQS_LOG (error|info|debug); everything else comes from the config file
and the repeatable `--set section.key=value` overrides.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import config as config_mod
from . import diagnostics, system
from .errors import MqsflowError

log = logging.getLogger("mqsflow")

_LEVELS = {"error": logging.ERROR, "info": logging.INFO,
           "debug": logging.DEBUG}


def _setup_logging():
    level = os.environ.get("MQS_LOG", "error").lower()
    logging.basicConfig(level=_LEVELS.get(level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s")


def _parser():
    p = argparse.ArgumentParser(
        prog="mqsflow",
        description="Coupled magnetic-field / circuit simulator.",
    )
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "validate", "constants", "experiment", "convergence"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", metavar="PATH", default=None)
        sp.add_argument("--out", metavar="DIR", default="out")
        sp.add_argument("--set", metavar="K=V", action="append", default=[],
                        dest="overrides")
        sp.add_argument("--seed", metavar="N", type=int, default=None)
    return p


def _load(args):
    entries = {}
    if args.config is not None:
        entries = config_mod.load_config_file(args.config)
    entries = config_mod.apply_overrides(entries, args.overrides)
    cfg = config_mod.build_config(entries, seed=args.seed)
    return cfg, entries


def _cmd_run(args):
    cfg, entries = _load(args)
    os.makedirs(args.out, exist_ok=True)
    base = config_mod.output_basename(entries)
    traj = system.solve(cfg)
    ops, _, _ = system.build_system(cfg)
    csv_path = os.path.join(args.out, f"{base}.csv")
    vtk_path = os.path.join(args.out, f"{base}.vtk")
    diagnostics.write_timeseries_csv(traj, csv_path)
    diagnostics.write_field_vtk(ops.mesh, ops.dofs, traj.fields[-1], vtk_path)
    log.info("wrote %s and %s", csv_path, vtk_path)
    print(f"run complete: {traj.n_steps} steps, outputs in {args.out}")
    return 0


def _cmd_validate(args):
    from .material import validate_assumptions

    cfg, _ = _load(args)
    report = validate_assumptions(cfg.model, cfg.sigma_C, cfg.R)
    if report.passed:
        print(
            "validation PASS: "
            f"m_hat={report.material.m_hat:.6g}, "
            f"L_hat={report.material.L_hat:.6g}"
        )
        return 0
    for reason in report.reasons:
        print(f"validation FAIL: {reason}")
    return 1


def _cmd_constants(args):
    cfg, _ = _load(args)
    ops, _, _ = system.build_system(cfg)
    items = {
        "m_hat": ops.m_hat,
        "L_hat": ops.L_hat,
        "L_C": ops.L_C,
        "coercivity_c": ops.coercivity_constant,
        "n_dofs": ops.n_dofs,
    }
    for k, v in items.items():
        print(f"{k}={v!r}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "constants.kv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.writelines(f"{k}={v!r}\n" for k, v in items.items())
    return 0


def _experiment_battery(cfg, out_dir):
    ops, phi, E = system.build_system(cfg)
    traj = system.solve(cfg, ops, phi, E)
    scale = diagnostics.trajectory_scale(ops, traj)
    results = []

    weak = system.check_weak_solution(ops, traj)
    bound = 10.0 * cfg.newton_tol * scale
    results.append(diagnostics.ExperimentResult(
        name="weak_solution_residuals",
        passed=bool(max(weak.max_field_residual, weak.max_circuit_residual)
                    <= bound),
        measured={"max_field_residual": weak.max_field_residual,
                  "max_circuit_residual": weak.max_circuit_residual,
                  "bound": bound},
    ))

    mono = system.monotonicity_probe(ops, n_pairs=200, seed=cfg.seed)
    results.append(diagnostics.ExperimentResult(
        name="monotonicity",
        passed=bool(mono.min_ratio >= 1.0 - 1e-10),
        measured={"min_ratio": mono.min_ratio, "n_checked": mono.n_checked},
    ))

    coer = system.coercivity_bound_check(ops, phi, E, seed=cfg.seed)
    results.append(diagnostics.ExperimentResult(
        name="coercivity_bound",
        passed=bool(coer["passed"]),
        measured={"c": coer["c"], "min_slack": coer["min_slack"]},
    ))

    results.append(diagnostics.balance_order_study(cfg))
    results.append(diagnostics.perturbation_experiments(cfg, "uniqueness"))
    results.append(
        diagnostics.perturbation_experiments(cfg, "initializability")
    )
    adv = diagnostics.perturbation_experiments(
        cfg, "initializability", adversarial=True
    )
    results.append(diagnostics.ExperimentResult(
        name="initializability_adversarial_detects_change",
        passed=not adv.passed,
        measured=adv.measured,
    ))

    diagnostics.write_timeseries_csv(traj, os.path.join(out_dir, "run.csv"))
    return results


def _cmd_experiment(args):
    cfg, _ = _load(args)
    os.makedirs(args.out, exist_ok=True)
    results = _experiment_battery(cfg, args.out)
    table_path, _ = diagnostics.write_summary(results, args.out)
    with open(table_path, encoding="utf-8") as fh:
        print(fh.read(), end="")
    return 0 if all(r.passed for r in results) else 1


def _cmd_convergence(args):
    cfg, _ = _load(args)
    os.makedirs(args.out, exist_ok=True)
    result = diagnostics.convergence_study(cfg, levels=3, refine="both")
    diagnostics.write_summary([result], args.out)
    for k, v in result.measured.items():
        print(f"{k}={v:.6g}")
    print(f"convergence {'PASS' if result.passed else 'FAIL'}")
    return 0 if result.passed else 1


_COMMANDS = {
    "run": _cmd_run,
    "validate": _cmd_validate,
    "constants": _cmd_constants,
    "experiment": _cmd_experiment,
    "convergence": _cmd_convergence,
}


def dispatch(argv):
    _setup_logging()
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return _COMMANDS[args.command](args)
    except MqsflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
