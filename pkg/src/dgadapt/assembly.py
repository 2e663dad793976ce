"""Assembly of the interior-penalty dG operator, mass matrix and loads.

The spatial bilinear form combines the volume terms
``(eps*grad(w) - a*w) . grad(v) + (b - div a) w v``, the jump penalty
``eps*gamma/h_E [w].[v]`` on every face, pointwise upwinded convection
faces, and the symmetric consistency terms ``-{eps grad w}.[v] -
{eps grad v}.[w]``.  Inflow/outflow status is decided pointwise at each
face quadrature point from the sign of ``a . n``.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve

from . import kernels
from .basis import TensorBasis, QuadratureRule, gauss_rule
from .fields import (
    DGField,
    DofLayout,
    cell_quad_geometry,
    edge_quad_geometry,
    to_reference,
)


def default_assembly_quad(p):
    return gauss_rule(p + 2)


def reference_mass(basis: TensorBasis) -> np.ndarray:
    """Mass matrix on the reference square (exact Gauss quadrature)."""
    quad = gauss_rule(basis.p + 1)
    (vals,) = basis.tabulate(quad.points)
    return np.einsum("q,qi,qj->ij", quad.weights, vals, vals)


def assemble_mass(layout: DofLayout, basis: TensorBasis) -> sp.csr_matrix:
    """Block-diagonal mass matrix; each block = Jacobian x reference mass."""
    mesh = layout.mesh
    r = mesh.cell_rects()
    jac = 0.25 * (r[:, 1] - r[:, 0]) * (r[:, 3] - r[:, 2])
    mref = reference_mass(basis)
    data = jac[:, None, None] * mref[None, :, :]
    n = len(mesh.cells)
    return sp.bsr_matrix(
        (data, np.arange(n), np.arange(n + 1)),
        shape=(layout.n_dofs, layout.n_dofs),
    )


def _edge_trace_tables(layout, basis, quad, nderiv=1):
    """Reference trace tables of the basis on both sides of every segment.

    Returns value tables ``(vl, vr)`` of shape (nseg, q, n_loc) and, when
    ``nderiv >= 1``, physical-gradient tables ``(gl, gr)`` of shape
    (nseg, q, n_loc, 2).  Boundary right-side tables duplicate the left.
    Cached on the mesh view.
    """
    mesh = layout.mesh
    key = ("edgetab", basis.p, quad.q, nderiv)
    if key in mesh._cache:
        return mesh._cache[key]
    geo = edge_quad_geometry(mesh, quad)
    cl = np.broadcast_to(geo.left[:, None], geo.x.shape)
    cr = np.where(geo.right >= 0, geo.right, geo.left)
    cr = np.broadcast_to(cr[:, None], geo.x.shape)
    out = []
    for cells in (cl, cr):
        refx, refy, pos, hx, hy = to_reference(mesh, geo.x, geo.y, cells)
        pts = np.stack([refx, refy], axis=-1)
        tabs = basis.tabulate(pts, nderiv=nderiv)
        v = tabs[0]
        if nderiv == 0:
            out.append((v, None))
            continue
        g = np.empty(v.shape + (2,))
        g[..., 0] = tabs[1][..., 0] * (2.0 / hx)[..., None]
        g[..., 1] = tabs[1][..., 1] * (2.0 / hy)[..., None]
        out.append((v, g))
    (vl, gl), (vr, gr) = out
    result = (vl, vr, gl, gr) if nderiv else (vl, vr)
    mesh._cache[key] = result
    return result


def _scatter_edge_blocks(layout, geo, idx, blocks_list, pairs, rows, cols, data):
    """Append COO entries for edge coupling blocks.

    ``pairs`` lists (test_side, trial_side) with side 0 = left, 1 = right;
    ``blocks_list`` the matching (nseg_sel, n_loc, n_loc) arrays.
    """
    n_loc = layout.n_loc
    pos_l = layout.cell_positions(geo.left[idx])
    pos_r_cells = np.where(geo.right[idx] >= 0, geo.right[idx], geo.left[idx])
    pos_r = layout.cell_positions(pos_r_cells)
    loc = np.arange(n_loc)
    for blocks, (ts, js) in zip(blocks_list, pairs):
        rpos = (pos_l, pos_r)[ts]
        cpos = (pos_l, pos_r)[js]
        r = (rpos[:, None, None] * n_loc + loc[None, :, None]).astype(np.int64)
        c = (cpos[:, None, None] * n_loc + loc[None, None, :]).astype(np.int64)
        rows.append(np.broadcast_to(r, blocks.shape).ravel())
        cols.append(np.broadcast_to(c, blocks.shape).ravel())
        data.append(blocks.ravel())


def assemble_spatial_operator(
    layout: DofLayout,
    basis: TensorBasis,
    problem,
    t: float,
    gamma: float,
    quad: QuadratureRule | None = None,
    parts: bool = False,
):
    """Assemble the spatial dG operator ``B(t; ., .) + K_h(., .)``.

    With ``parts=True`` returns a dict with the separately assembled
    ``volume``, ``penalty``, ``upwind`` and ``consistency`` matrices
    (their sum is the operator); otherwise returns the summed CSR matrix.
    Matrix convention: ``A[i, j] = form(phi_j, phi_i)``.
    """
    if gamma <= 1.0:
        raise ValueError("penalty parameter gamma must exceed 1")
    mesh = layout.mesh
    quad = quad or default_assembly_quad(basis.p)
    eps = problem.eps
    n_loc = layout.n_loc
    n = layout.n_dofs

    # -- volume terms -----------------------------------------------------
    x, y, w = cell_quad_geometry(mesh, quad)
    r = mesh.cell_rects()
    sx = 2.0 / (r[:, 1] - r[:, 0])
    sy = 2.0 / (r[:, 3] - r[:, 2])
    vals, grads = basis.tabulate(quad.points, nderiv=1)
    gx = grads[..., 0]
    gy = grads[..., 1]
    ax, ay = problem.a(x, y, t)
    ax = np.broadcast_to(ax, x.shape)
    ay = np.broadcast_to(ay, x.shape)
    bv = np.broadcast_to(problem.b(x, y, t), x.shape)
    dva = np.broadcast_to(problem.div_a(x, y, t), x.shape)

    vol = kernels.cell_blocks(w * eps * sx[:, None] ** 2, gx, gx)
    vol += kernels.cell_blocks(w * eps * sy[:, None] ** 2, gy, gy)
    # -(a w) . grad v: test gradient, trial value
    vol += kernels.cell_blocks(-w * ax * sx[:, None], gx, vals)
    vol += kernels.cell_blocks(-w * ay * sy[:, None], gy, vals)
    vol += kernels.cell_blocks(w * (bv - dva), vals, vals)
    ncells = len(mesh.cells)
    volume = sp.bsr_matrix(
        (vol, np.arange(ncells), np.arange(ncells + 1)), shape=(n, n)
    ).tocsr()

    # -- face terms -------------------------------------------------------
    geo = edge_quad_geometry(mesh, quad)
    vl, vr, gl, gr = _edge_trace_tables(layout, basis, quad, nderiv=1)
    if not parts:
        return _assemble_fused(layout, basis, problem, t, gamma, quad, geo,
                               vol, vl, vr, gl, gr)
    axs, ays = problem.a(geo.x, geo.y, t)
    s = (
        np.broadcast_to(axs, geo.x.shape) * geo.normal[:, 0:1]
        + np.broadcast_to(ays, geo.x.shape) * geo.normal[:, 1:2]
    )
    gnl = gl[..., 0] * geo.normal[:, 0:1, None] + gl[..., 1] * geo.normal[:, 1:2, None]
    gnr = gr[..., 0] * geo.normal[:, 0:1, None] + gr[..., 1] * geo.normal[:, 1:2, None]

    pen_rows, pen_cols, pen_data = [], [], []
    up_rows, up_cols, up_data = [], [], []
    kh_rows, kh_cols, kh_data = [], [], []

    ii = geo.int_idx
    if len(ii):
        wpen = geo.w[ii] * (eps * gamma / geo.length[ii])[:, None]
        bl = kernels.edge_blocks(wpen, vl[ii], vl[ii])
        br = kernels.edge_blocks(wpen, vr[ii], vr[ii])
        blr = kernels.edge_blocks(wpen, vl[ii], vr[ii])
        brl = kernels.edge_blocks(wpen, vr[ii], vl[ii])
        _scatter_edge_blocks(
            layout, geo, ii,
            [bl, br, -blr, -brl],
            [(0, 0), (1, 1), (0, 1), (1, 0)],
            pen_rows, pen_cols, pen_data,
        )

        # upwind: s+ w_l (v_l - v_r) + s- w_r (v_l - v_r)
        wp = geo.w[ii] * np.maximum(s[ii], 0.0)
        wm = geo.w[ii] * np.minimum(s[ii], 0.0)
        b1 = kernels.edge_blocks(wp, vl[ii], vl[ii])
        b2 = kernels.edge_blocks(wp, vr[ii], vl[ii])
        b3 = kernels.edge_blocks(wm, vl[ii], vr[ii])
        b4 = kernels.edge_blocks(wm, vr[ii], vr[ii])
        _scatter_edge_blocks(
            layout, geo, ii,
            [b1, -b2, b3, -b4],
            [(0, 0), (1, 0), (0, 1), (1, 1)],
            up_rows, up_cols, up_data,
        )

        # consistency: -int {eps grad w}.n (v_l - v_r) + (w <-> v)
        wk = -0.5 * eps * geo.w[ii]
        t1 = kernels.edge_blocks(wk, vl[ii], gnl[ii])
        t2 = kernels.edge_blocks(wk, vl[ii], gnr[ii])
        t3 = kernels.edge_blocks(wk, vr[ii], gnl[ii])
        t4 = kernels.edge_blocks(wk, vr[ii], gnr[ii])
        u1 = kernels.edge_blocks(wk, gnl[ii], vl[ii])
        u2 = kernels.edge_blocks(wk, gnr[ii], vl[ii])
        u3 = kernels.edge_blocks(wk, gnl[ii], vr[ii])
        u4 = kernels.edge_blocks(wk, gnr[ii], vr[ii])
        _scatter_edge_blocks(
            layout, geo, ii,
            [t1, t2, -t3, -t4, u1, u2, -u3, -u4],
            [(0, 0), (0, 1), (1, 0), (1, 1),
             (0, 0), (1, 0), (0, 1), (1, 1)],
            kh_rows, kh_cols, kh_data,
        )

    bi = geo.bdy_idx
    if len(bi):
        wpen = geo.w[bi] * (eps * gamma / geo.length[bi])[:, None]
        bb = kernels.edge_blocks(wpen, vl[bi], vl[bi])
        _scatter_edge_blocks(layout, geo, bi, [bb], [(0, 0)],
                             pen_rows, pen_cols, pen_data)

        wp = geo.w[bi] * np.maximum(s[bi], 0.0)
        bu = kernels.edge_blocks(wp, vl[bi], vl[bi])
        _scatter_edge_blocks(layout, geo, bi, [bu], [(0, 0)],
                             up_rows, up_cols, up_data)

        wk = -eps * geo.w[bi]
        k1 = kernels.edge_blocks(wk, vl[bi], gnl[bi])
        k2 = kernels.edge_blocks(wk, gnl[bi], vl[bi])
        _scatter_edge_blocks(layout, geo, bi, [k1, k2], [(0, 0), (0, 0)],
                             kh_rows, kh_cols, kh_data)

    def build(rows, cols, data):
        if not rows:
            return sp.csr_matrix((n, n))
        return sp.coo_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n),
        ).tocsr()

    penalty = build(pen_rows, pen_cols, pen_data)
    upwind = build(up_rows, up_cols, up_data)
    consistency = build(kh_rows, kh_cols, kh_data)
    if parts:
        return {
            "volume": volume,
            "penalty": penalty,
            "upwind": upwind,
            "consistency": consistency,
        }
    out = volume + penalty + upwind + consistency
    out.sum_duplicates()
    return out


def _bsr_from_block_triplets(brows, bcols, blocks, n_blocks, n_loc):
    """Build a BSR matrix from block triplets, summing duplicate blocks."""
    brows = np.concatenate(brows)
    bcols = np.concatenate(bcols)
    data = np.concatenate(blocks)
    order = np.lexsort((bcols, brows))
    brows = brows[order]
    bcols = bcols[order]
    data = data[order]
    keys = brows * np.int64(n_blocks) + bcols
    uniq, start = np.unique(keys, return_index=True)
    data = np.add.reduceat(data, start, axis=0)
    brows = brows[start]
    bcols = bcols[start]
    indptr = np.zeros(n_blocks + 1, dtype=np.int64)
    np.cumsum(np.bincount(brows, minlength=n_blocks), out=indptr[1:])
    n = n_blocks * n_loc
    return sp.bsr_matrix((data, bcols.astype(np.int32), indptr), shape=(n, n))


def _assemble_fused(layout, basis, problem, t, gamma, quad, geo, vol,
                    vl, vr, gl, gr):
    """Memory-lean assembly: one coupling block per face and side pair.

    Penalty, upwind and consistency contributions are accumulated into the
    four (test side, trial side) blocks of each face before any global
    scatter, so index arrays are per block instead of per matrix entry.
    """
    eps = problem.eps
    n_loc = layout.n_loc
    mesh = layout.mesh
    ncells = len(mesh.cells)

    axs, ays = problem.a(geo.x, geo.y, t)
    s = (
        np.broadcast_to(axs, geo.x.shape) * geo.normal[:, 0:1]
        + np.broadcast_to(ays, geo.x.shape) * geo.normal[:, 1:2]
    )
    gnl = gl[..., 0] * geo.normal[:, 0:1, None] + gl[..., 1] * geo.normal[:, 1:2, None]
    gnr = gr[..., 0] * geo.normal[:, 0:1, None] + gr[..., 1] * geo.normal[:, 1:2, None]

    brows = [layout.cell_positions(np.array(mesh.cells))]
    bcols = [brows[0]]
    blocks = [vol]

    ii = geo.int_idx
    if len(ii):
        wpen = geo.w[ii] * (eps * gamma / geo.length[ii])[:, None]
        wp = geo.w[ii] * np.maximum(s[ii], 0.0)
        wm = geo.w[ii] * np.minimum(s[ii], 0.0)
        wk = -0.5 * eps * geo.w[ii]
        pos_l = layout.cell_positions(geo.left[ii])
        pos_r = layout.cell_positions(geo.right[ii])

        blk = kernels.edge_blocks(wpen + wp, vl[ii], vl[ii])
        blk += kernels.edge_blocks(wk, vl[ii], gnl[ii])
        blk += kernels.edge_blocks(wk, gnl[ii], vl[ii])
        brows.append(pos_l)
        bcols.append(pos_l)
        blocks.append(blk)

        blk = kernels.edge_blocks(wm - wpen, vl[ii], vr[ii])
        blk += kernels.edge_blocks(wk, vl[ii], gnr[ii])
        blk -= kernels.edge_blocks(wk, gnl[ii], vr[ii])
        brows.append(pos_l)
        bcols.append(pos_r)
        blocks.append(blk)

        blk = kernels.edge_blocks(-wpen - wp, vr[ii], vl[ii])
        blk -= kernels.edge_blocks(wk, vr[ii], gnl[ii])
        blk += kernels.edge_blocks(wk, gnr[ii], vl[ii])
        brows.append(pos_r)
        bcols.append(pos_l)
        blocks.append(blk)

        blk = kernels.edge_blocks(wpen - wm, vr[ii], vr[ii])
        blk -= kernels.edge_blocks(wk, vr[ii], gnr[ii])
        blk -= kernels.edge_blocks(wk, gnr[ii], vr[ii])
        brows.append(pos_r)
        bcols.append(pos_r)
        blocks.append(blk)

    bi = geo.bdy_idx
    if len(bi):
        wpen = geo.w[bi] * (eps * gamma / geo.length[bi])[:, None]
        wp = geo.w[bi] * np.maximum(s[bi], 0.0)
        wk = -eps * geo.w[bi]
        pos_b = layout.cell_positions(geo.left[bi])
        blk = kernels.edge_blocks(wpen + wp, vl[bi], vl[bi])
        blk += kernels.edge_blocks(wk, vl[bi], gnl[bi])
        blk += kernels.edge_blocks(wk, gnl[bi], vl[bi])
        brows.append(pos_b)
        bcols.append(pos_b)
        blocks.append(blk)

    return _bsr_from_block_triplets(brows, bcols, blocks, ncells, n_loc)


def assemble_load(
    layout: DofLayout,
    basis: TensorBasis,
    problem,
    t: float,
    quad: QuadratureRule | None = None,
) -> np.ndarray:
    """Load vector ``F_i = int f(., t) phi_i dx``."""
    mesh = layout.mesh
    quad = quad or default_assembly_quad(basis.p)
    x, y, w = cell_quad_geometry(mesh, quad)
    (vals,) = basis.tabulate(quad.points)
    fv = np.broadcast_to(problem.f(x, y, t), x.shape)
    return np.einsum("cq,qi->ci", w * fv, vals).reshape(-1)


def l2_project(
    layout: DofLayout,
    basis: TensorBasis,
    g,
    quad: QuadratureRule | None = None,
) -> DGField:
    """Orthogonal L^2 projection of ``g(x, y)`` onto the dG space."""
    mesh = layout.mesh
    quad = quad or gauss_rule(basis.p + 3)
    x, y, w = cell_quad_geometry(mesh, quad)
    (vals,) = basis.tabulate(quad.points)
    gv = np.broadcast_to(np.asarray(g(x, y), dtype=float), x.shape)
    rhs = np.einsum("cq,qi->ci", w * gv, vals)
    r = mesh.cell_rects()
    jac = 0.25 * (r[:, 1] - r[:, 0]) * (r[:, 3] - r[:, 2])
    mref = cho_factor(reference_mass(basis))
    coeffs = cho_solve(mref, (rhs / jac[:, None]).T).T
    return DGField(layout, basis, coeffs.reshape(-1).copy())


def block_jacobi_inverse(mat: sp.spmatrix, block_size: int) -> np.ndarray:
    """Inverses of the (block_size x block_size) diagonal blocks."""
    bsr = mat.tobsr(blocksize=(block_size, block_size))
    nblocks = mat.shape[0] // block_size
    diag = np.zeros((nblocks, block_size, block_size))
    indptr, indices, data = bsr.indptr, bsr.indices, bsr.data
    for row in range(nblocks):
        for k in range(indptr[row], indptr[row + 1]):
            if indices[k] == row:
                diag[row] = data[k]
                break
    return np.linalg.inv(diag)
