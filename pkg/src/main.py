"""
Chemoreact command line

Subcommands for simulation, the verification checks and parameter sweeps.
Run with: python -m src.main <command> --help
"""
import argparse
import logging
import math
import os
import sys
import time
from typing import List, Optional

import numpy as np
import pandas as pd

from .config import parse_list, settings
from .errors import ChemoreactError, ConfigurationError

logger = logging.getLogger(__name__)


def configure_logging(level: Optional[str] = None):
    logging.basicConfig(
        level=getattr(logging, (level or settings.log_level).upper()),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )


def _load(path: str):
    from .model import load_config
    return load_config(path)


def _out_dir(args) -> str:
    out = args.out or settings.output_dir
    os.makedirs(out, exist_ok=True)
    return out


# ============ Commands ============

def cmd_simulate(args) -> int:
    from . import harness, model, pde2d, radialfp
    from .grids import Grid2D

    params, options = _load(args.params)
    out = _out_dir(args)
    kind = model.InitialKind(args.kind or options.get("kind", model.InitialKind.RADIAL_RING.value))
    seed = args.seed if args.seed is not None else (int(options["seed"]) if "seed" in options else None)
    t_max = args.tmax if args.tmax is not None else float(options.get("t_max", 0) or 0)
    if t_max <= 0:
        raise ConfigurationError("simulate needs --tmax or t_max in the parameter file")

    if args.grid:
        grid = Grid2D(n=args.grid, half_width=model.domain_half_width(params))
    else:
        cells = int(options["cells_per_unit"]) if "cells_per_unit" in options else None
        grid = model.default_grid(params, cells)
    initial = model.make_initial(params, kind, grid, seed)

    config = pde2d.SimConfig(
        chemotaxis=not args.baseline,
        exact_drift=args.exact_drift or settings.exact_drift,
        snapshot_dir=os.path.join(out, "snapshots") if args.snapshots else None,
        snapshot_count=args.snapshots or 0,
    )
    state, diag = pde2d.run(initial, params, t_max, config=config)

    harness.write_csv(diag.to_frame(), os.path.join(out, "diagnostics.csv"))
    with open(os.path.join(out, "params.env"), "w") as f:
        f.write(params.to_config())

    tau = pde2d.half_time(diag, params.theta) if len(diag) else math.inf
    censored = diag.censored(params.theta)
    logger.info(f"Half-time: {'>= ' + format(t_max, '.5g') if censored else format(tau, '.5g')} (regime {params.regime().value})")

    if args.compare and not args.baseline and len(diag):
        report = radialfp.compare_with_run(pde2d.initial_state(initial, params), diag, params)
        harness.write_csv(report.to_frame(), os.path.join(out, "comparison.csv"))
        logger.info(f"Comparison with M_u: passed={report.passed}, worst margin {report.worst_margin:.4g}")
        return 0 if report.passed else 1
    return 0


def cmd_verify_potential(args) -> int:
    from . import potential

    params, _ = _load(args.params)
    out = _out_dir(args)
    pot = potential.build_potential(params)
    samples = potential.standard_samples(params, seed=args.seed or 0)
    report = potential.verify_domination(pot, params, samples, potential.default_r_grid(params))
    path = os.path.join(out, "domination.csv")
    report.to_frame().to_csv(path, index=False, float_format="%.10g")
    logger.info(
        f"Domination: passed={report.passed}, worst margin {report.worst_margin():.4g}, "
        f"{len(report.literal_violations)} literal-form violations -> {path}"
    )
    return 0 if report.passed else 1


def cmd_verify_duality(args) -> int:
    from . import radialfp

    params, _ = _load(args.params)
    out = _out_dir(args)
    levels = [int(v) for v in parse_list(args.levels)]
    table = radialfp.duality_refinement(params, levels)
    path = os.path.join(out, "duality.csv")
    table.to_csv(path, index=False, float_format="%.10g")
    worst = float(table["discrepancy"].iloc[0])
    logger.info(f"Duality discrepancy at level {levels[0]}: {worst:.3e} -> {path}")
    if len(table) > 1:
        ratios = table["discrepancy"].iloc[1:].to_numpy() / table["discrepancy"].iloc[:-1].to_numpy()
        logger.info(f"Refinement ratios: {', '.join(f'{r:.3g}' for r in ratios)}")
    return 0 if worst <= 1e-2 else 1


def cmd_verify_barrier(args) -> int:
    from . import radialfp
    from .potential import build_potential

    params, _ = _load(args.params)
    out = _out_dir(args)
    f_traj, report = radialfp.run_barrier(params, args.stage, refine=args.refine)
    path = os.path.join(out, f"barrier_stage{args.stage}.csv")
    report.to_frame().to_csv(path, index=False, float_format="%.10g")
    extras = ", ".join(f"{k}={v:.4g}" for k, v in report.extras.items())
    logger.info(f"Barrier stage {args.stage}: passed={report.passed}, worst margin {report.worst_margin:.4g} ({extras})")

    inv = radialfp.dual_invariant(f_traj, build_potential(params))
    logger.info(f"Invariant drift: {abs(inv[-1] - inv[0]) / inv[0]:.3e}")
    return 0 if report.passed else 1


def cmd_kernel_bound(args) -> int:
    from . import kernel, model

    out = _out_dir(args)
    table = pd.DataFrame(kernel.kernel_table())
    table.to_csv(os.path.join(out, "kernel.csv"), index=False, float_format="%.10g")
    for _, row in table.iterrows():
        logger.info(f"  a({row['C3']:g}) = {row['a']:.6e} (scale spread {row['scale_deviation']:.2e})")
    logger.info(f"C2 series = {kernel.c2_series():.12f}")

    rng = np.random.default_rng(args.seed or 0)
    B = args.bound
    # name -> (drift, bound, horizon)
    drifts = {"zero": ((0.0, 0.0), 0.0, B ** -2), "constant": ((B, 0.0), B, B ** -2)}
    if args.params:
        params, _ = _load(args.params)
        initial = model.make_initial(params)
        drifts["chemotactic"] = (kernel.snapshot_drift(initial.rho2, params), params.v0, params.v0 ** -2)
    rows = []
    for name, (drift, bound, horizon) in drifts.items():
        for _ in range(args.queries):
            y = tuple(rng.uniform(-1.0, 1.0, 2))
            angle = rng.uniform(0.0, 2.0 * math.pi)
            dist = rng.uniform(0.0, 2.0) * math.sqrt(horizon)
            x = (y[0] + dist * math.cos(angle), y[1] + dist * math.sin(angle))
            check = kernel.kernel_bound_vs_pde(drift, bound, x, y, horizon)
            rows.append({"drift": name, "x0": x[0], "x1": x[1], "y0": y[0], "y1": y[1], "t": horizon,
                         "pde": check.pde_value, "bound": check.bound, "heat": check.heat, "passed": check.passed})
    checks = pd.DataFrame(rows)
    checks.to_csv(os.path.join(out, "kernel_checks.csv"), index=False, float_format="%.10g")
    failed = int((~checks["passed"]).sum()) if len(checks) else 0
    logger.info(f"Kernel validation: {len(checks)} queries, {failed} below the bound")
    return 0 if failed == 0 else 1


def cmd_sweep(args) -> int:
    from . import harness

    spec = harness.load_sweep(args.spec)
    out = _out_dir(args)
    result = harness.run_sweep(spec, out, workers=args.workers)
    logger.info(f"Sweep finished: {len(result.frame)} points, {result.failed} failed -> {result.csv_path}")
    return 0


def cmd_fit_scaling(args) -> int:
    from . import harness

    fits, risky = harness.fit_directory(args.input, min_points=args.min_points)
    for fit in fits:
        logger.info(f"  {fit.regime.value}/{fit.variant}: C={fit.C:.4g}, slope={fit.slope:.3g}, corrected={fit.slope_corrected:.3g}")
    if len(risky):
        logger.info(f"  risky points: {int(risky['risky'].sum())}")
    return 0


# ============ Parser ============

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chemoreact", description="Flux-limited chemotaxis-reaction simulator and checks")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, params_required=True):
        p.add_argument("--params", required=params_required, help="flat key = value parameter file")
        p.add_argument("--out", help=f"output directory (default {settings.output_dir})")
        p.add_argument("--log-level", help="debug, info, warning")
        return p

    p = common(sub.add_parser("simulate", help="run the 2D solver"))
    p.add_argument("--grid", type=int, help="cells per side (default from cells_per_unit)")
    p.add_argument("--tmax", type=float)
    p.add_argument("--kind", choices=["radial-ring", "offset-bump"])
    p.add_argument("--seed", type=int)
    p.add_argument("--snapshots", type=int, default=0, help="number of field snapshots to write")
    p.add_argument("--baseline", action="store_true", help="switch chemotaxis off")
    p.add_argument("--exact-drift", action="store_true", help="recompute grad c every step")
    p.add_argument("--compare", action="store_true", help="check M >= M_u - pi theta along the run")
    p.set_defaults(func=cmd_simulate)

    p = common(sub.add_parser("verify-potential", help="check dH against the boundary drift of test densities"))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify_potential)

    p = common(sub.add_parser("verify-duality", help="duality discrepancy under refinement"))
    p.add_argument("--levels", default="1,2", help="comma separated refinement factors")
    p.set_defaults(func=cmd_verify_duality)

    p = common(sub.add_parser("verify-barrier", help="barrier lower bounds for the dual solution"))
    p.add_argument("--stage", type=int, choices=[1, 2], default=1)
    p.add_argument("--refine", type=int, default=1)
    p.set_defaults(func=cmd_verify_barrier)

    p = common(sub.add_parser("kernel-bound", help="a(C3) table, C2 and the PDE validation battery"), params_required=False)
    p.add_argument("--bound", type=float, default=1.0, help="drift bound B for the constant drift")
    p.add_argument("--queries", type=int, default=3, help="random queries per drift")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_kernel_bound)

    p = sub.add_parser("sweep", help="run a parameter sweep")
    p.add_argument("--spec", required=True)
    p.add_argument("--out")
    p.add_argument("--workers", type=int)
    p.add_argument("--log-level")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit-scaling", help="fit bound constants from a sweep directory")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--min-points", type=int, default=4)
    p.add_argument("--log-level")
    p.set_defaults(func=cmd_fit_scaling)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)

    start = time.perf_counter()
    try:
        code = args.func(args)
    except ChemoreactError as e:
        logger.error(f"{args.command} failed: {e}")
        return 2
    logger.info(f"{args.command} finished in {time.perf_counter() - start:.1f}s")
    return code


if __name__ == "__main__":
    sys.exit(main())
