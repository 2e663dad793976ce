"""Space-time adaptive driver.

The loop couples three mechanisms:

* an initial-mesh loop that refines/coarsens until the initial-condition
  estimator drops below ``initol``,
* per-step temporal halving while the temporal indicator exceeds
  ``ttol`` (halved steps are pushed back onto the schedule),
* a fixed-fraction spatial refine/coarsen gate on the residual indicator,
  rate-limited so the mesh changes at most ``m`` times per unit time.

The rate limiter accumulates elapsed time in ``counter`` and resets it to
zero when the mesh actually changes; the gate only fires once
``counter > T/m``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import l2_project
from .basis import TensorBasis, get_basis
from .error_norms import ErrorReport, slab_energy_error_sq
from .estimators import (
    EstimatorLedger,
    StepTerms,
    compute_step_terms,
    eta_initial,
    weights_for,
)
from .fields import DGField, DofLayout
from .mesh import MeshView, QuadForest, coarsen_cells, refine_cells, uniform_refine
from .solver import SolverConfig, clear_preconditioner_cache
from .stepping import TimeSlab, assemble_system, backward_euler_step, make_slab

TAU_FLOOR_FACTOR = 1e-8
MAX_STEPS = 500_000


class AdaptivityError(RuntimeError):
    pass


@dataclass(frozen=True)
class AdaptConfig:
    p: int = 1
    gamma: float = 10.0
    n0: int = 8  # initial mesh is n0 x n0
    n_steps: int = 10  # initial uniform step count
    initol: float = math.inf
    ttol: float = math.inf
    stola: float = math.inf
    stolb: float | None = None  # defaults to stola / 5
    ref_pct: float = 6.25
    coar_pct: float = 10.0
    m: float = 1.0  # max mesh changes per unit time
    init_ref_pct: float = 10.0
    init_coar_pct: float = 5.0
    time_rule: int = 3
    solver: SolverConfig = SolverConfig()
    track_error: bool = False

    def __post_init__(self):
        if self.n0 < 1 or self.n0 & (self.n0 - 1):
            raise ValueError("initial mesh division must be a power of two")
        if self.n_steps < 1:
            raise ValueError("need at least one time step")
        if not (0.0 < self.ref_pct < 100.0 and 0.0 < self.coar_pct < 100.0):
            raise ValueError("marking percentages must lie in (0, 100)")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.stolb is not None and not self.stolb < self.stola:
            raise ValueError("stolb must be less than stola")

    @property
    def stolb_eff(self) -> float:
        if self.stolb is not None:
            return self.stolb
        return self.stola / 5.0 if math.isfinite(self.stola) else math.inf


@dataclass
class StepRecord:
    j: int
    t0: float
    t1: float
    tau: float
    lam: int  # DoFs of the union mesh of the accepted slab
    n_cells: int
    s1: float  # sqrt of the residual spatial term
    that: float  # sqrt of the temporal indicator
    halvings: int
    mesh_changed: bool


@dataclass
class AdaptState:
    time: float = 0.0
    j: int = 0
    counter: float = 0.0
    threshold: float = math.inf
    mesh_changes: int = 0
    records: list[StepRecord] = field(default_factory=list)

    @property
    def total_dofs(self) -> float:
        return sum(r.tau * r.lam for r in self.records)


@dataclass
class AdaptResult:
    state: AdaptState
    ledger: EstimatorLedger
    u_final: DGField
    mesh_final: MeshView
    error: ErrorReport | None = None


def mark_cells(indicators: dict, pct: float, largest: bool) -> list:
    """Fixed-fraction marking by count; ties broken by ascending cell id."""
    n = len(indicators)
    k = min(n, math.ceil(pct / 100.0 * n))
    if largest:
        order = sorted(indicators, key=lambda c: (-indicators[c], c))
    else:
        order = sorted(indicators, key=lambda c: (indicators[c], c))
    return order[:k]


def make_initial_mesh(domain, n0: int) -> MeshView:
    forest = QuadForest(domain)
    return uniform_refine(forest.root_view(), int(round(math.log2(n0))))


def initial_mesh_loop(problem, config: AdaptConfig,
                      mesh: MeshView | None = None, max_iters: int = 30):
    """Adapt the initial mesh until ``eta_I <= initol``.

    Returns ``(mesh, u_h0, eta_I_sq)``.
    """
    basis = get_basis(config.p)
    if mesh is None:
        mesh = make_initial_mesh(problem.domain, config.n0)
    for _ in range(max_iters + 1):
        layout = DofLayout(mesh, config.p)
        u0 = l2_project(layout, basis, lambda x, y: problem.u0(x, y))
        eta_sq, indicators = eta_initial(u0, problem.u0)
        if math.sqrt(eta_sq) <= config.initol:
            return mesh, u0, eta_sq
        refine = mark_cells(indicators, config.init_ref_pct, largest=True)
        coarsen = [c for c in mark_cells(indicators, config.init_coar_pct,
                                         largest=False) if c not in refine]
        new = refine_cells(coarsen_cells(mesh, coarsen), refine)
        if new.leaf_ids == mesh.leaf_ids:
            raise AdaptivityError("initial mesh loop stalled below initol")
        mesh = new
    raise AdaptivityError("initial-condition tolerance not reached in %d iterations"
                          % max_iters)


class _SystemCache:
    """Reassemble (mass, spatial) only when the mesh or time requires it."""

    def __init__(self, problem, p, gamma):
        self.problem = problem
        self.p = p
        self.gamma = gamma
        self._store: dict = {}

    def get(self, layout: DofLayout, basis: TensorBasis, t: float):
        key = layout.mesh.mesh_id
        if not self.problem.autonomous_operator:
            key = (key, t)
        if key not in self._store:
            if not self.problem.autonomous_operator or len(self._store) > 4:
                self._store.clear()
            self._store[key] = assemble_system(layout, basis, self.problem,
                                               t, self.gamma)
        return self._store[key]


def _solve_step(j, t0, tau, u0, mesh1, problem, config, cache) -> TimeSlab:
    slab = make_slab(j, t0, t0 + tau, u0, mesh1)
    layout = DofLayout(slab.mesh1, config.p)
    basis = get_basis(config.p)
    system = cache.get(layout, basis, t0 + tau)
    backward_euler_step(slab, problem, config.gamma, config.solver, system=system)
    return slab


def run_algorithm1(problem, config: AdaptConfig,
                   step_hook=None) -> AdaptResult:
    """Full space-time adaptive loop over ``[0, T]``."""
    T = problem.T
    mesh, u, eta_I_sq = initial_mesh_loop(problem, config)
    weights = weights_for(problem)
    ledger = EstimatorLedger(weights.alpha_T, eta_I_sq)
    state = AdaptState(threshold=T / config.m)
    cache = _SystemCache(problem, config.p, config.gamma)
    report = ErrorReport() if (config.track_error and problem.exact) else None

    pending = [T / config.n_steps] * config.n_steps
    tau_floor = TAU_FLOOR_FACTOR * T
    t = 0.0
    j = 0
    while T - t > 1e-12 * T:
        if j >= MAX_STEPS:
            raise AdaptivityError("step limit exceeded")
        tau = pending.pop(0) if pending else T - t
        tau = min(tau, T - t)

        slab = _solve_step(j, t, tau, u, mesh, problem, config, cache)
        halvings = 0
        if math.isfinite(config.ttol):
            while True:
                terms = compute_step_terms(slab, problem, config.gamma,
                                           time_rule=config.time_rule)
                if math.sqrt(terms.that_sq) <= config.ttol:
                    break
                if tau / 2.0 < tau_floor:
                    raise AdaptivityError("time step floor reached at t=%g" % t)
                pending.insert(0, tau / 2.0)
                tau /= 2.0
                halvings += 1
                slab = _solve_step(j, t, tau, u, mesh, problem, config, cache)
        else:
            terms = compute_step_terms(slab, problem, config.gamma,
                                       time_rule=config.time_rule)

        state.counter += tau
        mesh_changed = False
        if math.isfinite(config.stola) and state.counter > state.threshold:
            s1 = math.sqrt(terms.s1_sq)
            stolb = config.stolb_eff
            if s1 > config.stola:
                refine = mark_cells(terms.s1_cells, config.ref_pct, largest=True)
                new_mesh = refine_cells(mesh, refine)
            elif s1 > stolb:
                refine = mark_cells(terms.s1_cells, config.ref_pct, largest=True)
                coarsen = [c for c in mark_cells(terms.s1_cells, config.coar_pct,
                                                 largest=False) if c not in refine]
                new_mesh = refine_cells(coarsen_cells(mesh, coarsen), refine)
            else:
                coarsen = mark_cells(terms.s1_cells, config.coar_pct, largest=False)
                new_mesh = coarsen_cells(mesh, coarsen)
            if new_mesh.leaf_ids != mesh.leaf_ids:
                mesh = new_mesh
                slab = _solve_step(j, t, tau, u, mesh, problem, config, cache)
                terms = compute_step_terms(slab, problem, config.gamma,
                                           time_rule=config.time_rule)
                state.counter = 0.0
                state.mesh_changes += 1
                mesh_changed = True

        ledger.add_step(terms)
        if report is not None:
            report.add(slab_energy_error_sq(slab, problem, config.gamma,
                                            time_rule=config.time_rule))
        lam = len(slab.ov.mesh.cells) * (config.p + 1) ** 2
        rec = StepRecord(j, t, slab.t1, tau, lam, len(mesh.cells),
                         math.sqrt(terms.s1_sq), math.sqrt(max(terms.that_sq, 0.0)),
                         halvings, mesh_changed)
        state.records.append(rec)
        if step_hook is not None:
            step_hook(rec, slab)
        u = slab.u1
        t = slab.t1
        j += 1
        state.j = j
        state.time = t

    clear_preconditioner_cache()
    return AdaptResult(state, ledger, u, mesh, report)
