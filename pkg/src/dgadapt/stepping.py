"""Backward Euler stepping across possibly different consecutive meshes.

The cross-mesh mass coupling is integrated exactly on the overlay (union)
mesh, where both the old solution and the new test functions are plain
polynomials on every cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .assembly import (
    assemble_load,
    assemble_mass,
    assemble_spatial_operator,
    default_assembly_quad,
    reference_mass,
)
from .basis import TensorBasis, gauss_rule
from .fields import DGField, DofLayout, cell_quad_geometry, eval_field, to_reference
from .mesh import MeshOverlay, MeshView, identity_overlay, overlay
from .solver import SolverConfig, solve_nonsymmetric


@dataclass
class TimeSlab:
    """One time interval with its two meshes, fields and overlay."""

    j: int
    t0: float
    t1: float
    mesh0: MeshView
    mesh1: MeshView
    u0: DGField
    u1: DGField | None
    ov: MeshOverlay

    @property
    def tau(self):
        return self.t1 - self.t0

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ValueError("time slab must have positive length")


def make_slab(j, t0, t1, u0: DGField, mesh1: MeshView, layout1: DofLayout | None = None):
    """Build a slab from the old field and the new mesh (u1 left unset)."""
    mesh0 = u0.mesh
    if mesh1 is mesh0 or mesh1.leaf_ids == mesh0.leaf_ids:
        ov = identity_overlay(mesh0)
        mesh1 = mesh0
    else:
        ov = overlay(mesh0, mesh1)
    return TimeSlab(j, t0, t1, mesh0, mesh1, u0, None, ov)


def cross_mesh_mass_rhs(slab: TimeSlab, layout1: DofLayout, quad=None) -> np.ndarray:
    """Vector with entries ``(u_h^j, phi_i^{j+1})`` on the new mesh.

    Both factors are polynomials on every overlay cell, so a rule with
    q >= p+1 integrates the product exactly.
    """
    basis = slab.u0.basis
    p = basis.p
    if slab.mesh1 is slab.mesh0:
        # same-space fast path: block mass product
        r = slab.mesh0.cell_rects()
        jac = 0.25 * (r[:, 1] - r[:, 0]) * (r[:, 3] - r[:, 2])
        mref = reference_mass(basis)
        blocks = slab.u0.cell_coeffs() @ mref.T * jac[:, None]
        return blocks.reshape(-1)
    quad = quad or gauss_rule(p + 1)
    ov = slab.ov
    x, y, w = cell_quad_geometry(ov.mesh, quad)
    cells0 = np.array([ov.to_a[c] for c in ov.mesh.cells])
    cells1 = np.array([ov.to_b[c] for c in ov.mesh.cells])
    vals0 = eval_field(slab.u0, x, y, np.broadcast_to(cells0[:, None], x.shape))
    refx, refy, pos1, _, _ = to_reference(
        slab.mesh1, x, y, np.broadcast_to(cells1[:, None], x.shape)
    )
    (phi,) = basis.tabulate(np.stack([refx, refy], axis=-1))
    contrib = np.einsum("oq,oqi->oi", w * vals0, phi)
    rhs = np.zeros(layout1.n_dofs)
    blocks = rhs.reshape(len(slab.mesh1.cells), layout1.n_loc)
    np.add.at(blocks, pos1[:, 0], contrib)
    return rhs


def backward_euler_step(
    slab: TimeSlab,
    problem,
    gamma: float,
    solver_config: SolverConfig = SolverConfig(),
    quad=None,
    system=None,
) -> DGField:
    """Advance one backward Euler step; stores and returns ``u_h^{j+1}``.

    ``system`` may carry preassembled ``(mass, spatial)`` CSR matrices for
    the new mesh (exactly what :func:`assemble_system` returns) to avoid
    reassembly when neither the mesh nor the operator changed.
    """
    basis = slab.u0.basis
    layout1 = DofLayout(slab.mesh1, basis.p)
    quad = quad or default_assembly_quad(basis.p)
    if system is None:
        system = assemble_system(layout1, basis, problem, slab.t1, gamma, quad)
    mass, spatial = system
    load = assemble_load(layout1, basis, problem, slab.t1, quad)
    tau = slab.tau
    rhs = load + cross_mesh_mass_rhs(slab, layout1) / tau
    mat = mass / tau + spatial
    key = (slab.mesh1.mesh_id, tau)
    if not problem.autonomous_operator:
        key = key + (slab.t1,)
    x, _stats = solve_nonsymmetric(mat, rhs, solver_config,
                                   block_size=layout1.n_loc, precond_key=key)
    slab.u1 = DGField(layout1, basis, x)
    return slab.u1


def assemble_system(layout, basis, problem, t, gamma, quad=None):
    """Mass and spatial matrices for one mesh at one time."""
    quad = quad or default_assembly_quad(basis.p)
    mass = assemble_mass(layout, basis)
    spatial = assemble_spatial_operator(layout, basis, problem, t, gamma, quad)
    return mass, spatial


def interpolant_weights(slab: TimeSlab, t: float):
    """Linear-in-time interpolation weights ``(l_j(t), l_{j+1}(t))``."""
    if not slab.t0 <= t <= slab.t1:
        raise ValueError("t=%g outside slab [%g, %g]" % (t, slab.t0, slab.t1))
    l1 = (t - slab.t0) / slab.tau
    return 1.0 - l1, l1


def interpolant_in_time(slab: TimeSlab, t: float):
    """Pointwise evaluator of the in-time linear interpolant of u_h.

    Returns ``eval(x, y, overlay_cells) -> values`` where ``overlay_cells``
    are leaves of ``slab.ov.mesh``.
    """
    if slab.u1 is None:
        raise ValueError("slab is incomplete: u1 has not been computed")
    l0, l1 = interpolant_weights(slab, t)
    ov = slab.ov

    def evaluate(x, y, overlay_cells):
        c0 = np.vectorize(ov.to_a.__getitem__, otypes=[np.int64])(overlay_cells)
        c1 = np.vectorize(ov.to_b.__getitem__, otypes=[np.int64])(overlay_cells)
        return l0 * eval_field(slab.u0, x, y, c0) + l1 * eval_field(
            slab.u1, x, y, c1
        )

    return evaluate


def solve_stationary(
    layout: DofLayout,
    basis: TensorBasis,
    problem,
    t: float,
    gamma: float,
    solver_config: SolverConfig = SolverConfig(),
    quad=None,
) -> DGField:
    """Discrete stationary solution of ``(B + K_h)(u, v) = (f(., t), v)``."""
    quad = quad or default_assembly_quad(basis.p)
    spatial = assemble_spatial_operator(layout, basis, problem, t, gamma, quad)
    load = assemble_load(layout, basis, problem, t, quad)
    x, _stats = solve_nonsymmetric(spatial, load, solver_config, block_size=layout.n_loc)
    return DGField(layout, basis, x)
