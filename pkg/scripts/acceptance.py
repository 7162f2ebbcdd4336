#!/usr/bin/env python3
"""
Acceptance Battery

Runs the verification commands against the reference point, in order of cost.
The sweeps take hours; they only run with --sweeps.

Usage: python scripts/acceptance.py [--out runs/acceptance] [--sweeps]
"""
import sys
import os

# Add src to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import argparse
import logging
import math
import time

import numpy as np

from src.main import configure_logging, main as cli

logger = logging.getLogger("acceptance")

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
REFERENCE = os.path.join(ROOT, "configs", "reference.env")
SWEEPS = ("sweep_far", "sweep_gamma", "sweep_eps", "sweep_risky")


def check_constants() -> bool:
    from src.kernel import c2_series
    from src.model import load_config
    from src.radialfp import boundary_lower_bound

    params, _ = load_config(REFERENCE)
    ok = params.R0 == params.gamma / (2.0 * params.v0) - 1.0
    ok &= params.r0 == params.v0 / params.gamma + math.sqrt(0.5)
    ok &= abs(boundary_lower_bound(16.0) - 5.0 / 9.0) < 1e-15
    c2 = c2_series()
    ok &= 1.5 < c2 <= 1.75
    logger.info(f"R0={params.R0:g}, r0={params.r0:.6f}, boundary bound(16)={boundary_lower_bound(16.0):.6f}, C2={c2:.6f}")
    return bool(ok)


def check_heat_limit(queries: int = 100) -> bool:
    from src.kernel import KernelBoundQuery, gamma_lower_bound, heat_kernel

    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(queries):
        x = tuple(rng.uniform(-2.0, 2.0, 2))
        y = tuple(rng.uniform(-2.0, 2.0, 2))
        t = float(rng.uniform(0.1, 4.0))
        exact = heat_kernel(x, y, t)
        worst = max(worst, abs(gamma_lower_bound(KernelBoundQuery(x=x, y=y, t=t)) - exact) / exact)
    logger.info(f"B = 0 bound vs heat kernel: worst relative gap {worst:.2e} over {queries} queries")
    return worst <= 1e-12


def main():
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument("--out", default=os.path.join("runs", "acceptance"))
    parser.add_argument("--sweeps", action="store_true", help="also run the scaling sweeps and fits")
    args = parser.parse_args()
    configure_logging()

    def out(name):
        return os.path.join(args.out, name)

    steps = [
        ("Closed-form constants and C2", check_constants),
        ("Kernel bound, zero drift", check_heat_limit),
        ("Kernel bound against PDE kernels",
         lambda: cli(["kernel-bound", "--params", REFERENCE, "--queries", "20", "--out", out("kernel")]) == 0),
        ("Potential domination",
         lambda: cli(["verify-potential", "--params", REFERENCE, "--out", out("potential")]) == 0),
        ("Duality under refinement",
         lambda: cli(["verify-duality", "--params", REFERENCE, "--out", out("duality")]) == 0),
        ("Barrier stage 1",
         lambda: cli(["verify-barrier", "--params", REFERENCE, "--stage", "1", "--out", out("barrier")]) == 0),
        ("Barrier stage 2",
         lambda: cli(["verify-barrier", "--params", REFERENCE, "--stage", "2", "--out", out("barrier")]) == 0),
        ("Simulation and comparison inequality",
         lambda: cli(["simulate", "--params", REFERENCE, "--compare", "--out", out("simulate")]) == 0),
    ]
    if args.sweeps:
        for name in SWEEPS:
            spec = os.path.join(ROOT, "configs", f"{name}.env")
            steps.append((
                f"Sweep {name}",
                lambda spec=spec, name=name: (
                    cli(["sweep", "--spec", spec, "--out", out(name)]) == 0
                    and cli(["fit-scaling", "--in", out(name), "--min-points", "2"]) == 0
                ),
            ))

    logger.info("=" * 60)
    logger.info("Chemoreact Acceptance Battery")
    logger.info("=" * 60)

    total_start = time.perf_counter()
    results = []
    for i, (title, step) in enumerate(steps, 1):
        logger.info(f"\n[{i}/{len(steps)}] {title}...")
        start = time.perf_counter()
        try:
            ok = step()
        except Exception as e:
            logger.error(f"{title} raised {type(e).__name__}: {e}")
            ok = False
        elapsed = time.perf_counter() - start
        results.append((title, ok, elapsed))
        logger.info(f"{'PASS' if ok else 'FAIL'} in {elapsed:.1f}s")

    total_elapsed = time.perf_counter() - total_start

    logger.info("\n" + "=" * 60)
    for title, ok, elapsed in results:
        logger.info(f"  {'PASS' if ok else 'FAIL'}  {elapsed:8.1f}s  {title}")
    failed = sum(not ok for _, ok, _ in results)
    logger.info(f"{len(results) - failed}/{len(results)} passed in {total_elapsed:.1f}s")
    logger.info("=" * 60)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
