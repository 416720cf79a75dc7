"""Command-line entry point: ``kerrmech <subcommand> --config run.ini``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

from . import fock, harness, observables
from .harness import ConfigError

log = logging.getLogger("kerrmech")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="INI run configuration")
    common.add_argument("--out", default=".", help="output directory (default: current)")
    common.add_argument("--format", choices=("csv", "json"), help="override [output] format")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweep points")
    common.add_argument("--quantum", choices=("on", "off"), help="override [quantum] enabled")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="kerrmech", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("branches", parents=[common], help="mean-field branches along a power or detuning sweep")
    sub.add_parser("regions", parents=[common], help="stability-region map over (y, z)")
    sub.add_parser("ncmap", parents=[common], help="critical occupation n_c / n_Delta over (sideband, Q_m)")
    sub.add_parser("steady", parents=[common], help="quantum steady state (optomechanical and Kerr) at one point")
    sub.add_parser("wigner", parents=[common], help="Wigner functions of the optical steady state")
    return parser


def _plan(args) -> harness.RunPlan:
    plan = harness.parse_config(args.config)
    if args.format:
        plan = replace(plan, output=replace(plan.output, format=args.format))
    if args.quantum:
        plan = replace(plan, quantum=replace(plan.quantum, enabled=args.quantum == "on"))
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    return plan


def _path(args, plan, stem: str) -> str:
    return os.path.join(args.out, f"{plan.output.name}{stem}.{plan.output.format}")


def _finish(records) -> int:
    quantum = [r for r in records if r.quantum is not None or r.error is not None]
    if quantum and all(r.quantum is None for r in quantum):
        log.error("quantum solve failed at every point")
        return EXIT_SOLVER
    return EXIT_OK


def cmd_branches(args, plan) -> int:
    kind = plan.sweep.kind
    if kind == "detuning":
        records = harness.sweep_detuning(plan, jobs=args.jobs)
    elif kind in ("power", "point"):
        records = harness.sweep_power(plan, jobs=args.jobs)
        zs = plan.sweep.z_values
        if len(zs) > 1:
            for z in harness.detect_folds(plan.physical.y, list(zs)):
                log.info("fold at z = %.12g", z)
    else:
        raise ConfigError(f"'branches' needs [sweep] kind = power or detuning, not {kind}")
    harness.emit(records, plan.output.format, _path(args, plan, "branches"))
    return _finish(records)


def cmd_regions(args, plan) -> int:
    if not plan.sweep.y_values or not plan.sweep.z_values:
        raise ConfigError("'regions' needs y and z grids in [sweep]")
    rmap = harness.region_map(plan)
    harness.emit_region_map(rmap, plan.output.format, args.out, plan.output.name)
    return EXIT_OK


def cmd_ncmap(args, plan) -> int:
    if not plan.sweep.sideband_values or not plan.sweep.q_m_values:
        raise ConfigError("'ncmap' needs sideband and q_m grids in [sweep]")
    surf = harness.nc_surface(plan)
    harness.emit_nc_surface(surf, plan.output.format, args.out, plan.output.name)
    return EXIT_OK


def cmd_steady(args, plan) -> int:
    if plan.physical.z is None:
        raise ConfigError("'steady' needs [physical] z")
    plan = replace(plan, quantum=replace(plan.quantum, enabled=True), sweep=harness.SweepSpec())
    records = harness.sweep_power(plan, jobs=args.jobs)
    harness.emit(records, plan.output.format, _path(args, plan, "steady"))
    return _finish(records)


def _wigner_task(task):
    spec, z, n_th, quantum = task
    try:
        p = spec.params(z=z, n_th=n_th)
        dims = quantum.dims
        axis = observables.default_axis(dims.n_a, quantum.wigner_points)
        rho = fock.steady_state(fock.liouvillian_om(p, dims), backend=quantum.backend)
        rho_k = fock.steady_state(fock.liouvillian_kerr(p, dims.optical), backend=quantum.backend)
        return (
            observables.wigner(observables.partial_trace_optical(rho), axis),
            observables.wigner(rho_k, axis),
        )
    except Exception as exc:  # reported per point by the caller
        return exc


def cmd_wigner(args, plan) -> int:
    zs = plan.sweep.z_values or ((plan.physical.z,) if plan.physical.z is not None else ())
    if not zs:
        raise ConfigError("'wigner' needs [physical] z or a z grid in [sweep]")
    tasks = [(plan.physical, z, n_th, plan.quantum) for n_th in plan.physical.n_th_values for z in zs]
    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_wigner_task, tasks))
    else:
        results = [_wigner_task(t) for t in tasks]
    failures = 0
    for (_, z, n_th, _), result in zip(tasks, results):
        if isinstance(result, Exception):
            log.warning("Wigner solve failed at z=%g n_th=%g: %s", z, n_th, result)
            failures += 1
            continue
        w_om, w_k = result
        tag = f"z{harness.format_float(z)}_nth{harness.format_float(n_th)}"
        harness.emit_wigner(w_om, os.path.join(args.out, f"{plan.output.name}wigner_om_{tag}.csv"))
        harness.emit_wigner(w_k, os.path.join(args.out, f"{plan.output.name}wigner_kerr_{tag}.csv"))
    return EXIT_SOLVER if failures == len(tasks) else EXIT_OK


COMMANDS = {
    "branches": cmd_branches,
    "regions": cmd_regions,
    "ncmap": cmd_ncmap,
    "steady": cmd_steady,
    "wigner": cmd_wigner,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        plan = _plan(args)
        os.makedirs(args.out, exist_ok=True)
        return COMMANDS[args.command](args, plan)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except fock.SteadyStateError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
