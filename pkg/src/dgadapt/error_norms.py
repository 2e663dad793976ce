"""Energy-norm error evaluation against known exact solutions.

The dG energy norm is

    |||v|||^2 = sum_K (eps ||grad v||^2 + beta ||v||^2)
              + sum_E (eps*gamma/h_E) ||[v]||^2 .

For the time-dependent error the piecewise-linear-in-time reconstruction
of the discrete solution is compared against the exact solution, with the
squared norm integrated in time by Gauss quadrature on each slab.  Since
the exact solution is continuous and vanishes on the boundary, the jump
of the error equals minus the jump of the discrete solution.
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
from .stepping import TimeSlab


def default_error_quad(p):
    return gauss_rule(p + 4)


def l2_error(field: DGField, exact, t, quad: QuadratureRule | None = None) -> float:
    """Spatial L^2 error ``||u(.,t) - u_h||`` of a single field."""
    quad = quad or default_error_quad(field.basis.p)
    mesh = field.mesh
    x, y, w = cell_quad_geometry(mesh, quad)
    cells = np.broadcast_to(np.array(mesh.cells)[:, None], x.shape)
    vals = eval_field(field, x, y, cells)
    diff = np.asarray(exact(x, y, t)) - vals
    return math.sqrt(float(np.sum(w * diff**2)))


def energy_error_sq(field: DGField, problem, t, gamma,
                    quad: QuadratureRule | None = None) -> float:
    """``|||u(.,t) - u_h|||^2`` for a single field (stationary studies)."""
    quad = quad or default_error_quad(field.basis.p)
    mesh = field.mesh
    x, y, w = cell_quad_geometry(mesh, quad)
    cells = np.broadcast_to(np.array(mesh.cells)[:, None], x.shape)
    vals, grads = eval_field(field, x, y, cells, nderiv=1)
    ev = np.asarray(problem.exact(x, y, t)) - vals
    gx, gy = problem.exact_grad(x, y, t)
    egx = np.asarray(gx) - grads[..., 0]
    egy = np.asarray(gy) - grads[..., 1]
    out = float(
        np.sum(w * (problem.eps * (egx**2 + egy**2) + problem.beta * ev**2))
    )

    geo = edge_quad_geometry(mesh, quad)
    vl, vr = edge_traces(field, geo, nderiv=0)
    jump = vl - vr
    jump[geo.bdy_idx] = vl[geo.bdy_idx]
    out += float(
        np.sum(
            (problem.eps * gamma / geo.length)
            * np.sum(geo.w * jump**2, axis=1)
        )
    )
    return out


def slab_energy_error_sq(slab: TimeSlab, problem, gamma,
                         quad: QuadratureRule | None = None,
                         time_rule: int = 3) -> float:
    """``int_slab |||u - u_h(t)|||^2 dt`` with linear-in-time u_h."""
    if problem.exact is None or problem.exact_grad is None:
        raise ValueError("problem has no exact solution")
    if slab.u1 is None:
        raise ValueError("slab is incomplete: u1 has not been computed")
    quad = quad or default_error_quad(slab.u0.basis.p)
    ov = slab.ov
    mesh = ov.mesh
    x, y, w = cell_quad_geometry(mesh, quad)
    shape = x.shape
    c0 = np.broadcast_to(np.array([ov.to_a[c] for c in mesh.cells])[:, None], shape)
    c1 = np.broadcast_to(np.array([ov.to_b[c] for c in mesh.cells])[:, None], shape)
    v0, g0 = eval_field(slab.u0, x, y, c0, nderiv=1)
    v1, g1 = eval_field(slab.u1, x, y, c1, nderiv=1)

    geo = edge_quad_geometry(mesh, quad)
    e0l, e0r = edge_traces(slab.u0, geo, ov.to_a, nderiv=0)
    e1l, e1r = edge_traces(slab.u1, geo, ov.to_b, nderiv=0)
    j0 = e0l - e0r
    j1 = e1l - e1r
    j0[geo.bdy_idx] = e0l[geo.bdy_idx]
    j1[geo.bdy_idx] = e1l[geo.bdy_idx]
    edge_w = problem.eps * gamma / geo.length

    tau = slab.tau
    tg, wg = np.polynomial.legendre.leggauss(time_rule)
    ts = 0.5 * (slab.t0 + slab.t1) + 0.5 * tau * tg
    wt = 0.5 * tau * wg
    total = 0.0
    for t, wq in zip(ts, wt):
        l1 = (t - slab.t0) / tau
        l0 = 1.0 - l1
        ev = np.asarray(problem.exact(x, y, t)) - (l0 * v0 + l1 * v1)
        gx, gy = problem.exact_grad(x, y, t)
        egx = np.asarray(gx) - (l0 * g0[..., 0] + l1 * g1[..., 0])
        egy = np.asarray(gy) - (l0 * g0[..., 1] + l1 * g1[..., 1])
        val = float(
            np.sum(w * (problem.eps * (egx**2 + egy**2) + problem.beta * ev**2))
        )
        jh = l0 * j0 + l1 * j1
        val += float(np.sum(edge_w * np.sum(geo.w * jh**2, axis=1)))
        total += wq * val
    return total


@dataclass
class ErrorReport:
    """Accumulated space-time error alongside the estimator total."""

    error_sq: float = 0.0
    slabs: int = 0

    def add(self, value: float):
        self.error_sq += value
        self.slabs += 1

    @property
    def error(self):
        return math.sqrt(max(self.error_sq, 0.0))


def effectivity(eta: float, error: float) -> float:
    if error == 0.0:
        return math.inf
    return eta / error
