"""Command-line front end: run, compare, and validate subcommands.

Exit codes: 0 success, 1 runtime failure (solver or self-check), 2 bad
configuration.  The output directory comes from the config file, overridden
by KRYRANK_OUT and then by --out; no other environment variable is read.
"""

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .config import load_config
from .errors import ConfigError, KryrankError
from .experiments import (
    run_compare,
    run_complexity,
    run_heat_convergence,
    run_lbfp_relax,
)
from .heat import build_heat_operator
from .krylov import solve_adaptive
from .lbfp import chang_cooper_delta
from .linalg import TridiagonalOperator
from .lowrank import LowRankFactors, lr_frobenius

_RUNNERS = {
    "heat-convergence": run_heat_convergence,
    "lbfp-relax": run_lbfp_relax,
    "complexity-sweep": run_complexity,
}


def _add_common(sub):
    sub.add_argument("config", help="YAML experiment file")
    sub.add_argument("--out", default=None, help="output directory override")
    sub.add_argument("--seed", type=int, default=None, help="seed override")
    sub.add_argument(
        "--threads",
        type=int,
        default=1,
        help="worker threads for independent sweep points",
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="kryrank",
        description="Adaptive-rank implicit integrator benchmarks",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    _add_common(
        commands.add_parser("run", help="run the experiment and write its CSVs")
    )
    _add_common(
        commands.add_parser(
            "compare", help="run adaptive and full-rank pipelines side by side"
        )
    )
    _add_common(
        commands.add_parser(
            "validate", help="check the config and run quick numerical self-tests"
        )
    )
    return parser


def _random_tridiag(rng, n):
    return TridiagonalOperator(
        -rng.uniform(2.0, 3.0, n),
        rng.uniform(-0.5, 0.5, n - 1),
        rng.uniform(-0.5, 0.5, n - 1),
    )


def _self_check(seed):
    """Cheap seeded end-to-end checks; returns (name, passed, detail) triples."""
    rng = np.random.default_rng(seed)
    results = []

    worst = 0.0
    for _ in range(3):
        n = 24
        a1 = _random_tridiag(rng, n)
        a2 = _random_tridiag(rng, n)
        b = LowRankFactors(
            rng.standard_normal((n, 2)), np.eye(2), rng.standard_normal((n, 2))
        )
        eps = 1e-8 * lr_frobenius(b)
        f, _diag = solve_adaptive(a1, a2, b, eps)
        dense = f.materialize()
        resid = a1.dense() @ dense + dense @ a2.dense().T - b.materialize()
        worst = max(worst, float(np.linalg.norm(resid)) / lr_frobenius(b))
    results.append(("sylvester-residual", worst <= 1e-8, "max rel %.2e" % worst))

    w = rng.uniform(-30.0, 30.0, 64)
    gap = float(np.max(np.abs(chang_cooper_delta(w) + chang_cooper_delta(-w) - 1.0)))
    results.append(("flux-weight-identity", gap <= 1e-13, "max gap %.2e" % gap))

    d = build_heat_operator(64, 0.5, 1.0 / 64)
    drift = float(np.max(np.abs(d.apply(np.ones(64)))))
    scale = float(np.max(np.abs(d.dense())))
    results.append(
        ("constant-null-mode", drift <= 1e-12 * scale, "max drift %.2e" % drift)
    )
    return results


def _canonical_lines(cfg):
    lines = [
        "kind = %s" % cfg.kind,
        "integrator = %s" % cfg.integrator,
        "grid.n = %s" % ", ".join(str(n) for n in cfg.n),
        "time.t_final = %g" % cfg.t_final,
    ]
    if cfg.lambdas:
        lines.append("time.lambda = %s" % ", ".join("%g" % v for v in cfg.lambdas))
    else:
        lines.append("time.dt = %g" % cfg.dt)
    lines += [
        "truncation.eps_rel = %g" % cfg.eps_rel,
        "tolerances = %s" % ", ".join("%g" % v for v in cfg.tolerance_constants),
        "lomac = %s" % ("true" if cfg.lomac else "false"),
        "pipeline = %s" % cfg.pipeline,
        "diffusion = %g, %g" % cfg.diffusion,
        "species = %s"
        % "; ".join(
            "%s(m=%g, q=%g, n=%g, T=%g, u=(%g, %g))"
            % (sp.name, sp.mass, sp.charge, sp.density, sp.temperature, *sp.drift)
            for sp in cfg.species
        ),
        "grid_halfwidth = %g" % cfg.halfwidth,
        "timing_reps = %d" % cfg.timing_reps,
        "seed = %d" % cfg.seed,
        "output = %s" % cfg.output,
    ]
    return lines


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out_override = args.out
        if out_override is None:
            out_override = os.environ.get("KRYRANK_OUT")
        cfg = cfg.with_overrides(output=out_override, seed=args.seed)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2

    if args.command == "validate":
        for line in _canonical_lines(cfg):
            print(line)
        failed = 0
        for name, ok, detail in _self_check(cfg.seed):
            print("self-check %s: %s (%s)" % (name, "ok" if ok else "FAIL", detail))
            failed += 0 if ok else 1
        return 1 if failed else 0

    out_dir = Path(cfg.output)
    try:
        if args.command == "compare":
            run_compare(cfg, out_dir, threads=args.threads)
        else:
            _RUNNERS[cfg.kind](cfg, out_dir, threads=args.threads)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except KryrankError as exc:
        print(
            "%s: %s [kind=%s integrator=%s]"
            % (type(exc).__name__, exc, cfg.kind, cfg.integrator),
            file=sys.stderr,
        )
        return 1
    print("wrote %s outputs to %s" % (cfg.kind, out_dir))
    return 0


if __name__ == "__main__":
    sys.exit(main())
