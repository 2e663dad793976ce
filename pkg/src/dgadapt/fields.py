"""Degree-of-freedom layout and evaluation of piecewise-polynomial fields.

A :class:`DGField` is a coefficient vector over a :class:`~dgadapt.mesh.MeshView`
with one contiguous block of ``(p+1)**2`` coefficients per cell.  Evaluation
is fully vectorised: points may live in arbitrary cells, including cells of
a *different* (finer) mesh, as long as the containing leaf of the field's
own mesh is supplied for every point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import TensorBasis, QuadratureRule, gauss_rule
from .mesh import MeshView


class DofError(Exception):
    pass


@dataclass(frozen=True)
class DofLayout:
    """Cell -> contiguous DoF block map for a mesh and degree."""

    mesh: MeshView
    p: int
    n_loc: int = field(init=False)
    n_dofs: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "n_loc", (self.p + 1) ** 2)
        object.__setattr__(self, "n_dofs", len(self.mesh.cells) * self.n_loc)

    def block_start(self, cell):
        return self.mesh.cell_index()[cell] * self.n_loc

    def block_slice(self, cell):
        s = self.block_start(cell)
        return slice(s, s + self.n_loc)

    def cell_positions(self, cells):
        """Array of block positions (cell indices) for an array of cell ids."""
        idx = self.mesh.cell_index()
        return np.fromiter((idx[c] for c in cells), dtype=np.int64, count=len(cells))


@dataclass
class DGField:
    """Coefficient vector over a mesh with a tensor-product basis."""

    layout: DofLayout
    basis: TensorBasis
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.layout.n_dofs,):
            raise DofError("coefficient vector has wrong length")
        if self.basis.p != self.layout.p:
            raise DofError("basis degree does not match layout")

    @property
    def mesh(self):
        return self.layout.mesh

    def cell_coeffs(self):
        """Coefficients reshaped to (ncells, n_loc)."""
        return self.coeffs.reshape(len(self.mesh.cells), self.layout.n_loc)

    def copy(self):
        return DGField(self.layout, self.basis, self.coeffs.copy())


def zero_field(layout: DofLayout, basis: TensorBasis) -> DGField:
    return DGField(layout, basis, np.zeros(layout.n_dofs))


# -- geometry helpers --------------------------------------------------------


def _rect_arrays(mesh: MeshView):
    r = mesh.cell_rects()
    hx = r[:, 1] - r[:, 0]
    hy = r[:, 3] - r[:, 2]
    return r, hx, hy


def cell_quad_geometry(mesh: MeshView, quad: QuadratureRule):
    """Physical quadrature points and weights for every cell.

    Returns ``(x, y, w)`` each of shape ``(ncells, nq)`` where ``w``
    includes the cell Jacobian.  Cached on the mesh view.
    """
    key = ("cellquad", quad.q)
    if key in mesh._cache:
        return mesh._cache[key]
    r, hx, hy = _rect_arrays(mesh)
    rx = quad.points[:, 0]
    ry = quad.points[:, 1]
    x = 0.5 * (r[:, 0] + r[:, 1])[:, None] + 0.5 * hx[:, None] * rx[None, :]
    y = 0.5 * (r[:, 2] + r[:, 3])[:, None] + 0.5 * hy[:, None] * ry[None, :]
    w = 0.25 * (hx * hy)[:, None] * quad.weights[None, :]
    mesh._cache[key] = (x, y, w)
    return x, y, w


def to_reference(mesh: MeshView, x, y, cells):
    """Reference coordinates of physical points in the given leaf cells.

    ``cells`` holds one cell id per point (arbitrary shape, broadcast
    against ``x``/``y``).
    """
    rects = mesh.cell_rects()
    idx = mesh.cell_index()
    cells = np.asarray(cells)
    uniq, inv = np.unique(cells, return_inverse=True)
    uniq_pos = np.fromiter((idx[c] for c in uniq), dtype=np.int64, count=len(uniq))
    pos = uniq_pos[inv].reshape(cells.shape)
    r = rects[pos]
    hx = r[..., 1] - r[..., 0]
    hy = r[..., 3] - r[..., 2]
    refx = (2.0 * x - (r[..., 0] + r[..., 1])) / hx
    refy = (2.0 * y - (r[..., 2] + r[..., 3])) / hy
    return refx, refy, pos, hx, hy


def eval_field(field: DGField, x, y, cells, nderiv=0):
    """Evaluate a field (and derivatives) at arbitrary physical points.

    Parameters
    ----------
    x, y : arrays of identical shape S
    cells : array of shape S with the containing leaf id of ``field.mesh``
        for every point.
    nderiv : 0 -> values; 1 -> also physical gradients; 2 -> also the
        Laplacian.

    Returns
    -------
    ``values`` (shape S), optionally ``grads`` (S + (2,)) and ``lap`` (S).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    cells = np.asarray(cells)
    refx, refy, pos, hx, hy = to_reference(field.mesh, x, y, cells)
    pts = np.stack([refx, refy], axis=-1)
    tabs = field.basis.tabulate(pts, nderiv=min(nderiv, 2))
    coeff = field.cell_coeffs()[pos]  # S + (n_loc,)
    values = np.einsum("...i,...i->...", tabs[0], coeff)
    if nderiv == 0:
        return values
    sx = 2.0 / hx
    sy = 2.0 / hy
    grads = np.empty(x.shape + (2,))
    grads[..., 0] = np.einsum("...i,...i->...", tabs[1][..., 0], coeff) * sx
    grads[..., 1] = np.einsum("...i,...i->...", tabs[1][..., 1], coeff) * sy
    if nderiv == 1:
        return values, grads
    lap = (
        np.einsum("...i,...i->...", tabs[2][..., 0], coeff) * sx**2
        + np.einsum("...i,...i->...", tabs[2][..., 2], coeff) * sy**2
    )
    return values, grads, lap


def interpolate_nodal(layout: DofLayout, basis: TensorBasis, func) -> DGField:
    """Nodal interpolant of ``func(x, y)`` (exact for functions in V_h)."""
    r, hx, hy = _rect_arrays(layout.mesh)
    nod = basis.nodes_1d
    p1 = basis.p + 1
    nx, ny = np.meshgrid(nod, nod, indexing="xy")  # [jy, jx]
    refx = nx.ravel()
    refy = ny.ravel()
    x = 0.5 * (r[:, 0] + r[:, 1])[:, None] + 0.5 * hx[:, None] * refx[None, :]
    y = 0.5 * (r[:, 2] + r[:, 3])[:, None] + 0.5 * hy[:, None] * refy[None, :]
    vals = np.asarray(func(x, y), dtype=float)
    return DGField(layout, basis, vals.reshape(-1).copy())


# -- edge trace machinery ----------------------------------------------------


@dataclass(frozen=True)
class EdgeGeometry:
    """Quadrature geometry of a mesh skeleton, interior/boundary separated.

    Interior arrays have leading dimension ``n_int``, boundary arrays
    ``n_bdy``; ``q`` quadrature points per segment.  ``w`` carries the 1D
    quadrature weight times ``length/2``.
    """

    segments: tuple
    int_idx: np.ndarray
    bdy_idx: np.ndarray
    x: np.ndarray  # (nseg, q) physical quadrature points
    y: np.ndarray
    w: np.ndarray  # (nseg, q)
    normal: np.ndarray  # (nseg, 2)
    length: np.ndarray  # (nseg,)
    left: np.ndarray  # (nseg,) cell ids
    right: np.ndarray  # (nseg,) cell ids, -1 on boundary


def edge_quad_geometry(mesh: MeshView, quad: QuadratureRule) -> EdgeGeometry:
    from .mesh import edge_segments

    key = ("edgequad", quad.q)
    if key in mesh._cache:
        return mesh._cache[key]
    segs = tuple(edge_segments(mesh))
    n = len(segs)
    t = quad.edge_points  # (q,)
    p0 = np.array([s.p0 for s in segs])
    p1 = np.array([s.p1 for s in segs])
    x = 0.5 * (p0[:, 0] + p1[:, 0])[:, None] + 0.5 * (p1[:, 0] - p0[:, 0])[:, None] * t
    y = 0.5 * (p0[:, 1] + p1[:, 1])[:, None] + 0.5 * (p1[:, 1] - p0[:, 1])[:, None] * t
    length = np.array([s.length for s in segs])
    w = 0.5 * length[:, None] * quad.edge_weights[None, :]
    normal = np.array([s.normal for s in segs])
    left = np.array([s.left for s in segs], dtype=np.int64)
    right = np.array([s.right for s in segs], dtype=np.int64)
    geo = EdgeGeometry(
        segs,
        np.nonzero(right >= 0)[0],
        np.nonzero(right < 0)[0],
        x,
        y,
        w,
        normal,
        length,
        left,
        right,
    )
    mesh._cache[key] = geo
    return geo


def edge_traces(field: DGField, geo: EdgeGeometry, cell_map=None, nderiv=1):
    """Left/right traces of a field on a skeleton's quadrature points.

    ``cell_map`` maps skeleton cell ids to leaves of ``field.mesh`` (used
    when the skeleton belongs to an overlay mesh); identity when None.
    Right traces on boundary segments are filled with the left ones so the
    arrays are rectangular; mask with ``geo.int_idx`` / ``geo.bdy_idx``.

    Returns ``(val_l, val_r)`` or ``(val_l, val_r, grad_l, grad_r)`` with
    shapes ``(nseg, q)`` and ``(nseg, q, 2)``.
    """
    if cell_map is None:
        cl = geo.left
        cr = np.where(geo.right >= 0, geo.right, geo.left)
    else:
        cl = np.fromiter((cell_map[c] for c in geo.left), dtype=np.int64,
                         count=len(geo.left))
        cr = np.fromiter(
            (cell_map[c if c >= 0 else l] for c, l in zip(geo.right, geo.left)),
            dtype=np.int64,
            count=len(geo.right),
        )
    cl2 = np.broadcast_to(cl[:, None], geo.x.shape)
    cr2 = np.broadcast_to(cr[:, None], geo.x.shape)
    out_l = eval_field(field, geo.x, geo.y, cl2, nderiv=nderiv)
    out_r = eval_field(field, geo.x, geo.y, cr2, nderiv=nderiv)
    if nderiv == 0:
        return out_l, out_r
    return out_l[0], out_r[0], out_l[1], out_r[1]
