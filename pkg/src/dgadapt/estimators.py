"""Peclet-robust a posteriori estimators for the fully-discrete scheme.

Per time slab the following computable quantities are produced on the
union (overlay) mesh of the two slab meshes:

* the residual-type spatial term ``eta_S1`` with per-cell indicators,
* the non-conformity rate term ``eta_S2`` (time-integrated),
* the temporal terms ``eta_T1`` / ``eta_T2`` and the per-step temporal
  indicator ``eta_hat_T``,

together with the initial-condition estimator, the stationary estimator,
and a ledger that accumulates the per-step terms into the global bounds
with their ``min{...}`` closures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .basis import QuadratureRule, gauss_rule
from .fields import (
    DGField,
    cell_quad_geometry,
    edge_quad_geometry,
    edge_traces,
    eval_field,
)
from .mesh import cell_diameters
from .stepping import TimeSlab


def default_estimator_quad(p):
    return gauss_rule(p + 3)


@dataclass(frozen=True)
class AlphaWeights:
    """Convection-diffusion weights; beta = 0 selects the eps branch."""

    eps: float
    beta: float

    def _beta_branch(self):
        return math.inf if self.beta == 0.0 else self.beta ** -0.5

    def alpha_K(self, h):
        return np.minimum(np.asarray(h) * self.eps ** -0.5, self._beta_branch())

    def alpha_E(self, h):
        return np.minimum(np.asarray(h) * self.eps ** -0.5, self._beta_branch())

    @property
    def alpha_T(self):
        return min(self.eps ** -0.5, self._beta_branch())

    def jump_weight(self, h, gamma):
        """Coefficient of ``||[u]||^2``: gamma*eps/h + beta*h + h/eps."""
        h = np.asarray(h)
        return gamma * self.eps / h + self.beta * h + h / self.eps


def weights_for(problem) -> AlphaWeights:
    return AlphaWeights(problem.eps, problem.beta)


def time_gauss(t0, t1, npts=3):
    """Gauss nodes/weights on (t0, t1)."""
    x, w = np.polynomial.legendre.leggauss(npts)
    mid, half = 0.5 * (t0 + t1), 0.5 * (t1 - t0)
    return mid + half * x, half * w


@dataclass
class StepTerms:
    """All per-step estimator contributions of one accepted time slab."""

    j: int
    tau: float
    s1_sq: float
    s1_cells: dict  # cell of the slab's *old* mesh -> squared indicator
    s2_int: float  # int eta_S2 dt
    s2_sq_int: float  # int eta_S2^2 dt
    t1_sq: float  # eta_T1^2 (without the tau weight)
    t2_int: float
    t2_sq_int: float
    that_sq: float

    def __post_init__(self):
        for name in ("s1_sq", "s2_int", "s2_sq_int", "t1_sq", "t2_int",
                     "t2_sq_int", "that_sq"):
            if getattr(self, name) < -1e-14:
                raise ValueError("negative estimator term %s" % name)


@dataclass
class EstimatorTotals:
    eta_I_sq: float
    eta_S_sq: float
    eta_T_sq: float

    @property
    def eta_sq(self):
        return self.eta_I_sq + self.eta_S_sq + self.eta_T_sq

    @property
    def eta(self):
        return math.sqrt(self.eta_sq)


class EstimatorLedger:
    """Running accumulators realising the global estimator closures.

    ``eta_S^2 = sum tau*eta_S1^2 + min((sum int eta_S2)^2,
    alpha_T^2 * sum int eta_S2^2)`` and analogously for ``eta_T`` with the
    1/4 weight on the ``eta_T1`` part.
    """

    def __init__(self, alpha_T: float, eta_I_sq: float = 0.0):
        self.alpha_T = alpha_T
        self.eta_I_sq = eta_I_sq
        self.s1 = 0.0  # sum tau * eta_S1^2
        self.s2a = 0.0  # sum int eta_S2 dt
        self.s2b = 0.0  # sum int eta_S2^2 dt
        self.t1 = 0.0  # sum tau * eta_T1^2
        self.t2a = 0.0
        self.t2b = 0.0
        self.steps: list[StepTerms] = []

    def add_step(self, terms: StepTerms):
        self.s1 += terms.tau * terms.s1_sq
        self.s2a += terms.s2_int
        self.s2b += terms.s2_sq_int
        self.t1 += terms.tau * terms.t1_sq
        self.t2a += terms.t2_int
        self.t2b += terms.t2_sq_int
        self.steps.append(terms)

    @property
    def eta_S_sq(self):
        return self.s1 + min(self.s2a**2, self.alpha_T**2 * self.s2b)

    @property
    def eta_T_sq(self):
        return 0.25 * self.t1 + min(self.t2a**2, self.alpha_T**2 * self.t2b)

    def finalize(self) -> EstimatorTotals:
        return EstimatorTotals(self.eta_I_sq, self.eta_S_sq, self.eta_T_sq)


# -- initial condition estimator --------------------------------------------


def eta_initial(u0_field: DGField, u0_func, quad: QuadratureRule | None = None):
    """``eta_I^2 = ||u0 - u_h^0||^2 + sum_E h_E ||[u_h^0]||^2``.

    Returns the total and per-cell indicators (edge terms split half/half
    between the incident cells, fully to the cell on boundary edges).
    """
    mesh = u0_field.mesh
    basis = u0_field.basis
    quad = quad or default_estimator_quad(basis.p)
    x, y, w = cell_quad_geometry(mesh, quad)
    cells = np.broadcast_to(np.array(mesh.cells)[:, None], x.shape)
    vals = eval_field(u0_field, x, y, cells)
    diff_sq = np.sum(w * (np.asarray(u0_func(x, y)) - vals) ** 2, axis=1)

    geo = edge_quad_geometry(mesh, quad)
    vl, vr = edge_traces(u0_field, geo, nderiv=0)
    jump = vl - vr
    jump[geo.bdy_idx] = vl[geo.bdy_idx]
    per_seg = geo.length * np.sum(geo.w * jump**2, axis=1)

    idx = mesh.cell_index()
    indicators = diff_sq.copy()
    for k, seg in enumerate(geo.segments):
        if seg.right >= 0:
            indicators[idx[seg.left]] += 0.5 * per_seg[k]
            indicators[idx[seg.right]] += 0.5 * per_seg[k]
        else:
            indicators[idx[seg.left]] += per_seg[k]
    total = float(diff_sq.sum() + per_seg.sum())
    return total, {c: float(indicators[idx[c]]) for c in mesh.cells}


# -- per-slab machinery ------------------------------------------------------


class _SlabData:
    """Cached evaluations of both slab fields on the overlay mesh."""

    def __init__(self, slab: TimeSlab, quad: QuadratureRule):
        if slab.u1 is None:
            raise ValueError("slab is incomplete: u1 has not been computed")
        self.slab = slab
        self.quad = quad
        ov = slab.ov
        self.mesh = ov.mesh
        self.cells = np.array(self.mesh.cells)
        self.cells0 = np.array([ov.to_a[c] for c in self.mesh.cells])
        self.cells1 = np.array([ov.to_b[c] for c in self.mesh.cells])
        self.x, self.y, self.w = cell_quad_geometry(self.mesh, quad)
        shape = self.x.shape
        c0 = np.broadcast_to(self.cells0[:, None], shape)
        c1 = np.broadcast_to(self.cells1[:, None], shape)
        self.v0, self.g0 = eval_field(slab.u0, self.x, self.y, c0, nderiv=1)
        self.v1, self.g1, self.lap1 = eval_field(
            slab.u1, self.x, self.y, c1, nderiv=2
        )
        self.geo = edge_quad_geometry(self.mesh, quad)
        self.ev0_l, self.ev0_r = edge_traces(slab.u0, self.geo, ov.to_a, nderiv=0)
        self.ev1_l, self.ev1_r, self.eg1_l, self.eg1_r = edge_traces(
            slab.u1, self.geo, ov.to_b, nderiv=1
        )
        self.h_K = cell_diameters(self.mesh)


def _slab_data(slab: TimeSlab, quad: QuadratureRule) -> _SlabData:
    key = ("slabdata", quad.q)
    cache = getattr(slab, "_est_cache", None)
    if cache is None:
        cache = {}
        slab._est_cache = cache
    if key not in cache:
        cache[key] = _SlabData(slab, quad)
    return cache[key]


def eta_S1_step(slab: TimeSlab, problem, gamma, weights: AlphaWeights | None = None,
                quad: QuadratureRule | None = None):
    """Residual spatial term of one slab with per-cell indicators.

    Indicators are attributed to the cells of the slab's old mesh (the
    mesh the adaptive loop refines); edge contributions are split half and
    half between the incident overlay cells.
    """
    weights = weights or weights_for(problem)
    quad = quad or default_estimator_quad(slab.u0.basis.p)
    d = _slab_data(slab, quad)
    t1 = slab.t1
    tau = slab.tau

    ax, ay = problem.a(d.x, d.y, t1)
    resid = (
        np.asarray(problem.f(d.x, d.y, t1))
        - (d.v1 - d.v0) / tau
        + problem.eps * d.lap1
        - np.asarray(ax) * d.g1[..., 0]
        - np.asarray(ay) * d.g1[..., 1]
        - np.asarray(problem.b(d.x, d.y, t1)) * d.v1
    )
    cell_sq = weights.alpha_K(d.h_K) ** 2 * np.sum(d.w * resid**2, axis=1)

    geo = d.geo
    n0 = geo.normal[:, 0:1]
    n1 = geo.normal[:, 1:2]
    ju1 = d.ev1_l - d.ev1_r
    ju1[geo.bdy_idx] = d.ev1_l[geo.bdy_idx]
    jdelta = (d.ev1_l - d.ev0_l) - (d.ev1_r - d.ev0_r)
    jdelta[geo.bdy_idx] = (d.ev1_l - d.ev0_l)[geo.bdy_idx]
    jump_sq = weights.jump_weight(geo.length, gamma) * np.sum(
        geo.w * (ju1**2 + jdelta**2), axis=1
    )
    jgrad = (d.eg1_l[..., 0] - d.eg1_r[..., 0]) * n0 + (
        d.eg1_l[..., 1] - d.eg1_r[..., 1]
    ) * n1
    grad_sq = np.zeros(len(geo.segments))
    ii = geo.int_idx
    grad_sq[ii] = (
        problem.eps ** 1.5
        * weights.alpha_E(geo.length[ii])
        * np.sum(geo.w[ii] * jgrad[ii] ** 2, axis=1)
    )

    idx = d.mesh.cell_index()
    indicators = cell_sq.copy()
    per_seg = jump_sq + grad_sq
    for k, seg in enumerate(geo.segments):
        if seg.right >= 0:
            indicators[idx[seg.left]] += 0.5 * per_seg[k]
            indicators[idx[seg.right]] += 0.5 * per_seg[k]
        else:
            indicators[idx[seg.left]] += per_seg[k]
    total = float(cell_sq.sum() + per_seg.sum())

    # aggregate onto the old mesh for the refinement gate
    ov = slab.ov
    old_ind: dict[int, float] = {c: 0.0 for c in slab.mesh0.cells}
    for c, val in zip(d.mesh.cells, indicators):
        old_ind[ov.to_a[c]] += float(val)
    return total, old_ind


def eta_S2_step(slab: TimeSlab, problem, quad: QuadratureRule | None = None,
                time_rule: int = 3):
    """Non-conformity rate term: ``(int eta_S2 dt, int eta_S2^2 dt)``."""
    quad = quad or default_estimator_quad(slab.u0.basis.p)
    d = _slab_data(slab, quad)
    geo = d.geo
    tau = slab.tau
    t1 = slab.t1

    delta_l = d.ev1_l - d.ev0_l
    delta_r = d.ev1_r - d.ev0_r
    jdelta = delta_l - delta_r
    jdelta[geo.bdy_idx] = delta_l[geo.bdy_idx]
    term1 = float(
        np.sum(geo.length * np.sum(geo.w * (jdelta / tau) ** 2, axis=1))
    )

    ii = geo.int_idx
    nx = geo.normal[ii, 0:1]
    ny = geo.normal[ii, 1:2]
    ju1 = (d.ev1_l - d.ev1_r)[ii]
    jd = jdelta[ii]
    tg, wg = time_gauss(slab.t0, slab.t1, time_rule)
    s2_int = 0.0
    s2_sq_int = 0.0
    a1x, a1y = problem.a(geo.x[ii], geo.y[ii], t1)
    for t, wt in zip(tg, wg):
        l0 = (t1 - t) / tau
        atx, aty = problem.a(geo.x[ii], geo.y[ii], t)
        an = np.asarray(atx) * nx + np.asarray(aty) * ny
        dan = (np.asarray(a1x) - np.asarray(atx)) * nx + (
            np.asarray(a1y) - np.asarray(aty)
        ) * ny
        jump = l0 * an * jd + dan * ju1
        term2 = float(np.sum(np.sum(geo.w[ii] * jump**2, axis=1) / geo.length[ii]))
        s2_sq = term1 + term2
        s2_int += wt * math.sqrt(max(s2_sq, 0.0))
        s2_sq_int += wt * s2_sq
    return s2_int, s2_sq_int


def eta_T_step(slab: TimeSlab, problem, quad: QuadratureRule | None = None,
               time_rule: int = 3):
    """Temporal terms: ``(eta_T1^2, int eta_T2 dt, int eta_T2^2 dt,
    eta_hat_T^2)``.

    The indicator closes with ``min(alpha_T, T)`` exactly as the adaptive
    algorithm defines it.
    """
    quad = quad or default_estimator_quad(slab.u0.basis.p)
    weights = weights_for(problem)
    d = _slab_data(slab, quad)
    tau = slab.tau
    t1_time = slab.t1

    ddx = d.g1[..., 0] - d.g0[..., 0]
    ddy = d.g1[..., 1] - d.g0[..., 1]
    delta = d.v1 - d.v0
    t1_sq = float(problem.eps * np.sum(d.w * (ddx**2 + ddy**2)))

    tg, wg = time_gauss(slab.t0, slab.t1, time_rule)
    f1 = np.asarray(problem.f(d.x, d.y, t1_time))
    a1x, a1y = problem.a(d.x, d.y, t1_time)
    b1 = np.asarray(problem.b(d.x, d.y, t1_time))
    t2_int = 0.0
    t2_sq_int = 0.0
    for t, wt in zip(tg, wg):
        l0 = (t1_time - t) / tau
        atx, aty = problem.a(d.x, d.y, t)
        bt = np.asarray(problem.b(d.x, d.y, t))
        ft = np.asarray(problem.f(d.x, d.y, t))
        integrand = (
            l0 * (np.asarray(atx) * ddx + np.asarray(aty) * ddy + bt * delta)
            + ft
            - f1
            + (np.asarray(a1x) - np.asarray(atx)) * d.g1[..., 0]
            + (np.asarray(a1y) - np.asarray(aty)) * d.g1[..., 1]
            + (b1 - bt) * d.v1
        )
        t2_sq = float(np.sum(d.w * integrand**2))
        t2_int += wt * math.sqrt(max(t2_sq, 0.0))
        t2_sq_int += wt * t2_sq
    that_sq = 0.25 * tau * t1_sq + min(weights.alpha_T, problem.T) * t2_sq_int
    return t1_sq, t2_int, t2_sq_int, that_sq


def compute_step_terms(slab: TimeSlab, problem, gamma,
                       quad: QuadratureRule | None = None,
                       time_rule: int = 3) -> StepTerms:
    """All estimator contributions of one accepted slab."""
    weights = weights_for(problem)
    s1_sq, s1_cells = eta_S1_step(slab, problem, gamma, weights, quad)
    s2_int, s2_sq_int = eta_S2_step(slab, problem, quad, time_rule)
    t1_sq, t2_int, t2_sq_int, that_sq = eta_T_step(slab, problem, quad, time_rule)
    return StepTerms(
        slab.j, slab.tau, s1_sq, s1_cells, s2_int, s2_sq_int,
        t1_sq, t2_int, t2_sq_int, that_sq,
    )


# -- stationary estimator ----------------------------------------------------


def stationary_estimator(field: DGField, problem, t, gamma,
                         weights: AlphaWeights | None = None,
                         quad: QuadratureRule | None = None):
    """Residual estimator for the stationary dG solution at time ``t``."""
    weights = weights or weights_for(problem)
    quad = quad or default_estimator_quad(field.basis.p)
    mesh = field.mesh
    x, y, w = cell_quad_geometry(mesh, quad)
    cells = np.broadcast_to(np.array(mesh.cells)[:, None], x.shape)
    v, g, lap = eval_field(field, x, y, cells, nderiv=2)
    ax, ay = problem.a(x, y, t)
    resid = (
        np.asarray(problem.f(x, y, t))
        + problem.eps * lap
        - np.asarray(ax) * g[..., 0]
        - np.asarray(ay) * g[..., 1]
        - np.asarray(problem.b(x, y, t)) * v
    )
    h_K = cell_diameters(mesh)
    cell_sq = weights.alpha_K(h_K) ** 2 * np.sum(w * resid**2, axis=1)

    geo = edge_quad_geometry(mesh, quad)
    vl, vr, gl, gr = edge_traces(field, geo, nderiv=1)
    ju = vl - vr
    ju[geo.bdy_idx] = vl[geo.bdy_idx]
    jump_sq = weights.jump_weight(geo.length, gamma) * np.sum(geo.w * ju**2, axis=1)
    jgrad = (gl[..., 0] - gr[..., 0]) * geo.normal[:, 0:1] + (
        gl[..., 1] - gr[..., 1]
    ) * geo.normal[:, 1:2]
    grad_sq = np.zeros(len(geo.segments))
    ii = geo.int_idx
    grad_sq[ii] = (
        problem.eps ** 1.5
        * weights.alpha_E(geo.length[ii])
        * np.sum(geo.w[ii] * jgrad[ii] ** 2, axis=1)
    )

    idx = mesh.cell_index()
    indicators = cell_sq.copy()
    per_seg = jump_sq + grad_sq
    for k, seg in enumerate(geo.segments):
        if seg.right >= 0:
            indicators[idx[seg.left]] += 0.5 * per_seg[k]
            indicators[idx[seg.right]] += 0.5 * per_seg[k]
        else:
            indicators[idx[seg.left]] += per_seg[k]
    total = float(cell_sq.sum() + per_seg.sum())
    return total, {c: float(indicators[idx[c]]) for c in mesh.cells}
