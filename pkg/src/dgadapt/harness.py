"""Experiment harnesses: uniform convergence ladders, adaptive runs and
their CSV reports.

Cost is measured by the time-weighted DoF count ``sum tau_{j+1} * lam_j``
where ``lam_j`` counts the DoFs of the union of the two meshes of step j.
Effectivity is estimator divided by the space-time energy error.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

from .adaptivity import AdaptConfig, AdaptResult, run_algorithm1
from .error_norms import effectivity
from .solver import SolverConfig


def _g(x) -> str:
    return "%.9g" % x


@dataclass
class UniformRunResult:
    timesteps: int
    total_dofs: float
    estimator: float
    eta_S_sq: float
    eta_T_sq: float
    error: float | None
    result: AdaptResult


def uniform_run(problem, p, n0, n_steps, gamma=10.0, track_error=False,
                solver: SolverConfig = SolverConfig(),
                time_rule=3) -> UniformRunResult:
    """Fixed mesh, fixed time step; estimators and (optionally) the error."""
    cfg = AdaptConfig(p=p, gamma=gamma, n0=n0, n_steps=n_steps,
                      solver=solver, time_rule=time_rule,
                      track_error=track_error)
    res = run_algorithm1(problem, cfg)
    totals = res.ledger.finalize()
    err = res.error.error if res.error is not None else None
    return UniformRunResult(
        timesteps=len(res.state.records),
        total_dofs=res.state.total_dofs,
        estimator=totals.eta,
        eta_S_sq=totals.eta_S_sq,
        eta_T_sq=totals.eta_T_sq,
        error=err,
        result=res,
    )


def convergence_study(problem, p, n0, n_steps, levels, gamma=10.0,
                      track_error=True,
                      solver: SolverConfig = SolverConfig()) -> list[dict]:
    """Uniform ladder: each level doubles the steps and refines once."""
    rows = []
    prev_est = None
    prev_err = None
    for lvl in range(levels):
        r = uniform_run(problem, p, n0 * 2**lvl, n_steps * 2**lvl, gamma,
                        track_error=track_error, solver=solver)
        row = {
            "timesteps": r.timesteps,
            "total_dofs": r.total_dofs,
            "estimator": r.estimator,
            "est_ratio": (r.estimator / prev_est) if prev_est else None,
            "error": r.error,
            "err_ratio": (r.error / prev_err)
            if (prev_err and r.error is not None) else None,
        }
        rows.append(row)
        prev_est = r.estimator
        prev_err = r.error
    return rows


def write_convergence_csv(rows: list[dict], path: str):
    cols = ["timesteps", "total_dofs", "estimator", "est_ratio", "error",
            "err_ratio"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in rows:
            w.writerow(["" if row[c] is None
                        else (_g(row[c]) if isinstance(row[c], float)
                              else row[c]) for c in cols])


def adaptive_report(result: AdaptResult, outdir: str, prefix: str = "adapt"):
    """Per-step and summary CSVs for a completed adaptive run."""
    os.makedirs(outdir, exist_ok=True)
    steps_path = os.path.join(outdir, prefix + "_steps.csv")
    with open(steps_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j", "t", "tau", "lam", "eta_S1", "eta_hat_T",
                    "mesh_changed"])
        for r in result.state.records:
            w.writerow([r.j, _g(r.t1), _g(r.tau), r.lam, _g(r.s1),
                        _g(r.that), int(r.mesh_changed)])

    totals = result.ledger.finalize()
    err = result.error.error if result.error is not None else None
    summary_path = os.path.join(outdir, prefix + "_summary.csv")
    with open(summary_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["total_dofs", "eta_I", "eta_S", "eta_T", "eta", "error",
                    "effectivity"])
        w.writerow([
            _g(result.state.total_dofs),
            _g(math.sqrt(totals.eta_I_sq)),
            _g(math.sqrt(totals.eta_S_sq)),
            _g(math.sqrt(totals.eta_T_sq)),
            _g(totals.eta),
            "" if err is None else _g(err),
            "" if err is None else _g(effectivity(totals.eta, err)),
        ])
    return steps_path, summary_path


def adaptive_run(problem, config: AdaptConfig) -> AdaptResult:
    return run_algorithm1(problem, config)


def temporal_tolerance_ladder(problem, p, n0, ttols, gamma=10.0,
                              n_steps=1, track_error=True,
                              solver: SolverConfig = SolverConfig()) -> list[dict]:
    """Reduce ttol on a fixed spatial mesh; report eta_T, error, effectivity.

    Used for the temporal-rate/robustness studies where the spatial error
    is resolved away by a fine mesh and high degree.
    """
    rows = []
    for ttol in ttols:
        cfg = AdaptConfig(p=p, gamma=gamma, n0=n0, n_steps=n_steps,
                          ttol=ttol, solver=solver,
                          track_error=track_error)
        res = run_algorithm1(problem, cfg)
        totals = res.ledger.finalize()
        eta_T = math.sqrt(totals.eta_T_sq)
        err = res.error.error if res.error is not None else None
        rows.append({
            "ttol": ttol,
            "timesteps": len(res.state.records),
            "total_dofs": res.state.total_dofs,
            "eta_T": eta_T,
            "eta": totals.eta,
            "error": err,
            "effectivity": None if err is None else effectivity(eta_T, err),
        })
    return rows


def uniform_steps_to_reach(problem, p, n0, target_eta_T, gamma=10.0,
                           n_start=2, n_max=4096,
                           solver: SolverConfig = SolverConfig()) -> int | None:
    """Smallest uniform step count whose time estimator drops below target.

    Doubles from ``n_start`` to bracket the target, then bisects (the time
    estimator decreases monotonically with the step count on these smooth
    problems).  Returns ``None`` when ``n_max`` steps are not enough.
    """

    def eta_T(n):
        r = uniform_run(problem, p, n0, n, gamma, solver=solver)
        return math.sqrt(r.eta_T_sq)

    n = n_start
    while n <= n_max:
        if eta_T(n) <= target_eta_T:
            break
        n *= 2
    else:
        return None
    lo = n // 2  # eta_T(lo) > target (or lo < n_start)
    hi = n
    while hi - lo > 1 and lo >= n_start:
        mid = (lo + hi) // 2
        if eta_T(mid) <= target_eta_T:
            hi = mid
        else:
            lo = mid
    return hi
