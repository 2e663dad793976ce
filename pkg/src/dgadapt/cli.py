"""Command-line entry point.

Subcommands:

* ``run`` — uniform-in-space fixed-step run, prints estimator totals.
* ``convergence`` — uniform refinement ladder, writes convergence.csv.
* ``adapt`` — full space-time adaptive run, writes step/summary CSVs
  and an optional VTK snapshot of the final mesh.
* ``stationary`` — stationary solve + estimator at a fixed time.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

from .config import ConfigError, load_config


def _add_common(sp):
    sp.add_argument("--config", help="key = value configuration file")
    sp.add_argument("--problem", help="example1|example2|example3|example4")
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--p", type=int)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--mesh0", type=int, help="initial mesh is mesh0 x mesh0")
    sp.add_argument("--n-steps", dest="n_steps", type=int)
    sp.add_argument("--T", type=float, help="override final time")
    sp.add_argument("--outdir")
    sp.add_argument("--track-error", dest="track_error", action="store_true",
                    default=None)


def _overrides(args, keys):
    return {k: getattr(args, k, None) for k in keys}


_COMMON_KEYS = ("problem", "epsilon", "p", "gamma", "mesh0", "n_steps", "T",
                "outdir", "track_error")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="dgadapt",
        description="Adaptive interior-penalty dG solver for "
                    "convection-diffusion problems",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    sp = sub.add_parser("run", help="uniform run")
    _add_common(sp)

    sp = sub.add_parser("convergence", help="uniform refinement ladder")
    _add_common(sp)
    sp.add_argument("--levels", type=int)

    sp = sub.add_parser("adapt", help="space-time adaptive run")
    _add_common(sp)
    for key in ("initol", "ttol", "stola", "stolb", "ref-pct", "coar-pct",
                "m"):
        sp.add_argument("--" + key, dest=key.replace("-", "_"), type=float)
    sp.add_argument("--vtk", action="store_true",
                    help="write a VTK snapshot of the final mesh")

    sp = sub.add_parser("stationary", help="stationary solve and estimator")
    _add_common(sp)
    sp.add_argument("--time", type=float, default=0.0)

    args = parser.parse_args(argv)
    keys = _COMMON_KEYS + tuple(
        k for k in ("levels", "initol", "ttol", "stola", "stolb", "ref_pct",
                    "coar_pct", "m") if hasattr(args, k)
    )
    try:
        rc = load_config(args.config, _overrides(args, keys))
    except (ConfigError, FileNotFoundError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    problem = rc.problem()
    outdir = rc["outdir"]
    os.makedirs(outdir, exist_ok=True)

    if args.cmd == "run":
        from .harness import uniform_run

        r = uniform_run(problem, rc["p"], rc["mesh0"], rc["n_steps"],
                        rc["gamma"], track_error=rc["track_error"],
                        solver=rc.solver_config())
        print("timesteps=%d total_dofs=%.9g estimator=%.9g"
              % (r.timesteps, r.total_dofs, r.estimator))
        if r.error is not None:
            print("error=%.9g effectivity=%.9g"
                  % (r.error, r.estimator / r.error))
        return 0

    if args.cmd == "convergence":
        from .harness import convergence_study, write_convergence_csv

        rows = convergence_study(problem, rc["p"], rc["mesh0"], rc["n_steps"],
                                 rc["levels"], rc["gamma"],
                                 track_error=rc["track_error"],
                                 solver=rc.solver_config())
        path = os.path.join(outdir, "convergence.csv")
        write_convergence_csv(rows, path)
        for row in rows:
            print("steps=%-6d dofs=%-12.6g est=%-12.6g ratio=%s"
                  % (row["timesteps"], row["total_dofs"], row["estimator"],
                     "" if row["est_ratio"] is None
                     else "%.3f" % row["est_ratio"]))
        print("wrote %s" % path)
        return 0

    if args.cmd == "adapt":
        from .adaptivity import run_algorithm1
        from .harness import adaptive_report

        res = run_algorithm1(problem, rc.adapt_config())
        steps_path, summary_path = adaptive_report(res, outdir)
        totals = res.ledger.finalize()
        print("steps=%d total_dofs=%.9g eta=%.9g mesh_changes=%d"
              % (len(res.state.records), res.state.total_dofs, totals.eta,
                 res.state.mesh_changes))
        print("wrote %s and %s" % (steps_path, summary_path))
        if args.vtk:
            from .estimators import compute_step_terms
            from .vtk import write_vtk

            path = os.path.join(outdir, "final_mesh.vtk")
            write_vtk(res.mesh_final, res.u_final, None, path)
            print("wrote %s" % path)
        return 0

    if args.cmd == "stationary":
        from .basis import get_basis
        from .adaptivity import make_initial_mesh
        from .estimators import stationary_estimator
        from .fields import DofLayout
        from .stepping import solve_stationary

        mesh = make_initial_mesh(problem.domain, rc["mesh0"])
        layout = DofLayout(mesh, rc["p"])
        u = solve_stationary(layout, get_basis(rc["p"]), problem, args.time,
                             rc["gamma"], rc.solver_config())
        est_sq, _ = stationary_estimator(u, problem, args.time, rc["gamma"])
        print("cells=%d dofs=%d estimator=%.9g"
              % (len(mesh.cells), layout.n_dofs, math.sqrt(est_sq)))
        return 0

    parser.error("unknown command")


if __name__ == "__main__":
    sys.exit(main())
