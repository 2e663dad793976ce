"""Quadtree forest meshes over axis-aligned rectangular domains.

A :class:`QuadForest` holds a persistent, append-only tree of rectangular
cells over a grid of root cells tiling the domain.  A mesh is an immutable
:class:`MeshView` (a set of leaf nodes tiling the domain); refining or
coarsening produces a new view on the same forest, so two views can be
compared cell-by-cell without any geometric intersection.  Meshes are kept
1-irregular: any cell edge touches at most two finer cells across it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class MeshError(Exception):
    pass


# Child ordering: index c -> offset (c & 1, c >> 1), i.e. SW, SE, NW, NE.
_CHILD_OFFSETS = ((0, 0), (1, 0), (0, 1), (1, 1))


class QuadForest:
    """Append-only quadtree forest over a rectangular domain.

    The domain is tiled by an ``nx`` x ``ny`` grid of root cells.  Each node
    carries integer coordinates ``(level, ix, iy)`` with
    ``0 <= ix < nx * 2**level``; children quadrisect their parent exactly.
    """

    def __init__(self, domain=(0.0, 1.0, 0.0, 1.0), nx=1, ny=1):
        x0, x1, y0, y1 = map(float, domain)
        if not (x1 > x0 and y1 > y0):
            raise MeshError("degenerate domain %r" % (domain,))
        if nx < 1 or ny < 1:
            raise MeshError("root grid must be at least 1x1")
        self.domain = (x0, x1, y0, y1)
        self.nx = int(nx)
        self.ny = int(ny)
        self._parent: list[int] = []
        self._children: list[tuple[int, int, int, int] | None] = []
        self._level: list[int] = []
        self._ix: list[int] = []
        self._iy: list[int] = []
        self._lookup: dict[tuple[int, int, int], int] = {}
        self._mesh_counter = 0
        for iy in range(self.ny):
            for ix in range(self.nx):
                self._add_node(-1, 0, ix, iy)

    # -- node bookkeeping -------------------------------------------------

    def _add_node(self, parent, level, ix, iy):
        nid = len(self._parent)
        self._parent.append(parent)
        self._children.append(None)
        self._level.append(level)
        self._ix.append(ix)
        self._iy.append(iy)
        self._lookup[(level, ix, iy)] = nid
        return nid

    def ensure_children(self, nid):
        """Create (or fetch) the four children of node ``nid``."""
        kids = self._children[nid]
        if kids is None:
            lvl = self._level[nid] + 1
            bx, by = 2 * self._ix[nid], 2 * self._iy[nid]
            kids = tuple(
                self._add_node(nid, lvl, bx + dx, by + dy)
                for dx, dy in _CHILD_OFFSETS
            )
            self._children[nid] = kids
        return kids

    def num_nodes(self):
        return len(self._parent)

    def level(self, nid):
        return self._level[nid]

    def parent(self, nid):
        return self._parent[nid]

    def children(self, nid):
        return self._children[nid]

    def coords(self, nid):
        return self._level[nid], self._ix[nid], self._iy[nid]

    def node_rect(self, nid):
        """Physical rectangle ``(x0, x1, y0, y1)`` of a node."""
        x0, x1, y0, y1 = self.domain
        lvl = self._level[nid]
        wx = (x1 - x0) / (self.nx << lvl)
        wy = (y1 - y0) / (self.ny << lvl)
        ix, iy = self._ix[nid], self._iy[nid]
        return (x0 + ix * wx, x0 + (ix + 1) * wx, y0 + iy * wy, y0 + (iy + 1) * wy)

    def root_view(self):
        """Mesh consisting of all root cells."""
        return MeshView(self, range(self.nx * self.ny))

    def new_mesh_id(self):
        self._mesh_counter += 1
        return self._mesh_counter


class MeshView:
    """Immutable set of forest leaves tiling the domain."""

    __slots__ = ("forest", "leaf_ids", "cells", "mesh_id", "_cache")

    def __init__(self, forest, leaf_ids):
        self.forest = forest
        self.leaf_ids = frozenset(leaf_ids)
        self.cells = tuple(sorted(self.leaf_ids))
        self.mesh_id = forest.new_mesh_id()
        self._cache = {}

    def __len__(self):
        return len(self.cells)

    def __eq__(self, other):
        return (
            isinstance(other, MeshView)
            and self.forest is other.forest
            and self.leaf_ids == other.leaf_ids
        )

    def __hash__(self):
        return hash((id(self.forest), self.leaf_ids))

    def cell_rects(self):
        """Array of shape ``(ncells, 4)`` with rows ``(x0, x1, y0, y1)``."""
        key = "rects"
        if key not in self._cache:
            f = self.forest
            self._cache[key] = np.array([f.node_rect(c) for c in self.cells])
        return self._cache[key]

    def cell_levels(self):
        f = self.forest
        return np.array([f._level[c] for c in self.cells])

    def cell_index(self):
        """Map cell id -> position in the sorted ``cells`` tuple."""
        key = "index"
        if key not in self._cache:
            self._cache[key] = {c: k for k, c in enumerate(self.cells)}
        return self._cache[key]

    def area(self):
        r = self.cell_rects()
        return float(np.sum((r[:, 1] - r[:, 0]) * (r[:, 3] - r[:, 2])))


@dataclass(frozen=True)
class EdgeSegment:
    """One face of the mesh skeleton, split to match the finer side.

    ``normal`` points from ``left`` towards ``right``; on the boundary
    (``right < 0``) it points out of the domain and ``left`` is the interior
    cell.
    """

    p0: tuple[float, float]
    p1: tuple[float, float]
    axis: str  # direction the segment runs: "x" or "y"
    normal: tuple[float, float]
    left: int
    right: int  # cell id, or -1 on the boundary
    length: float

    @property
    def is_boundary(self):
        return self.right < 0

    @property
    def midpoint(self):
        return (
            0.5 * (self.p0[0] + self.p1[0]),
            0.5 * (self.p0[1] + self.p1[1]),
        )


@dataclass(frozen=True)
class MeshOverlay:
    """Pointwise-finer union of two meshes with containment maps.

    ``to_a[c]`` / ``to_b[c]`` give the unique leaf of A / B containing the
    overlay leaf ``c``.
    """

    mesh: MeshView
    to_a: dict[int, int]
    to_b: dict[int, int]


def _covering_leaf(forest, leaves, level, ix, iy):
    """Deepest leaf at level <= ``level`` covering integer coords, else None."""
    if ix < 0 or iy < 0 or ix >= (forest.nx << level) or iy >= (forest.ny << level):
        return None
    lvl, jx, jy = level, ix, iy
    while lvl >= 0:
        nid = forest._lookup.get((lvl, jx, jy))
        if nid is not None and nid in leaves:
            return nid
        lvl -= 1
        jx >>= 1
        jy >>= 1
    return None


_SIDE_STEPS = {"L": (-1, 0), "R": (1, 0), "B": (0, -1), "T": (0, 1)}
# Children of the neighbor that touch the shared edge, per side of *this* cell.
_NEAR_CHILDREN = {"R": (0, 2), "L": (1, 3), "T": (0, 1), "B": (2, 3)}


def _side_leaves(forest, leaves, level, ix, iy, side):
    """All leaves adjacent to one side of the cell at (level, ix, iy)."""
    dx, dy = _SIDE_STEPS[side]
    nix, niy = ix + dx, iy + dy
    if nix < 0 or niy < 0 or nix >= (forest.nx << level) or niy >= (forest.ny << level):
        return []
    cov = _covering_leaf(forest, leaves, level, nix, niy)
    if cov is not None:
        return [cov]
    nid = forest._lookup.get((level, nix, niy))
    if nid is None:
        raise MeshError("mesh does not cover the domain near %r" % ((level, nix, niy),))
    out = []
    stack = [nid]
    near = _NEAR_CHILDREN[side]
    while stack:
        n = stack.pop()
        if n in leaves:
            out.append(n)
            continue
        kids = forest._children[n]
        if kids is None:
            raise MeshError("leaf set does not tile the domain")
        stack.extend(kids[c] for c in near)
    return out


def refine_cells(mesh: MeshView, marked) -> MeshView:
    """Quadrisect the marked leaves, with closure restoring 1-irregularity."""
    forest = mesh.forest
    marked = set(marked)
    if not marked <= mesh.leaf_ids:
        raise MeshError("marked cells are not leaves of the mesh")
    leaves = set(mesh.leaf_ids)
    stack = sorted(marked, reverse=True)
    while stack:
        c = stack[-1]
        if c not in leaves:
            stack.pop()
            continue
        lvl, ix, iy = forest.coords(c)
        pending = []
        for dx, dy in _SIDE_STEPS.values():
            nb = _covering_leaf(forest, leaves, lvl, ix + dx, iy + dy)
            if nb is not None and forest._level[nb] < lvl:
                pending.append(nb)
        if pending:
            stack.extend(pending)
            continue
        kids = forest.ensure_children(c)
        leaves.discard(c)
        leaves.update(kids)
        stack.pop()
    return MeshView(forest, leaves)


def coarsen_cells(mesh: MeshView, marked) -> MeshView:
    """Replace fully-marked sibling groups by their parent where legal.

    A group of four sibling leaves is merged only if all four are marked and
    the merge keeps the mesh 1-irregular; otherwise it is left untouched.
    Groups are processed in ascending parent-id order.
    """
    forest = mesh.forest
    marked = set(marked)
    if not marked <= mesh.leaf_ids:
        raise MeshError("marked cells are not leaves of the mesh")
    leaves = set(mesh.leaf_ids)
    parents = sorted(
        {forest._parent[c] for c in marked if forest._parent[c] >= 0}
    )
    for par in parents:
        kids = forest._children[par]
        if not all(k in leaves and k in marked for k in kids):
            continue
        lvl, ix, iy = forest.coords(par)
        ok = True
        for side in _SIDE_STEPS:
            for nb in _side_leaves(forest, leaves, lvl, ix, iy, side):
                if forest._level[nb] > lvl + 1:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            leaves.difference_update(kids)
            leaves.add(par)
    return MeshView(forest, leaves)


def overlay(mesh_a: MeshView, mesh_b: MeshView) -> MeshOverlay:
    """Finest common refinement of two views on the same forest."""
    forest = mesh_a.forest
    if forest is not mesh_b.forest:
        raise MeshError("overlay requires views on the same forest")
    a_set, b_set = mesh_a.leaf_ids, mesh_b.leaf_ids
    leaves = []
    to_a: dict[int, int] = {}
    to_b: dict[int, int] = {}
    stack = [(r, -1, -1) for r in range(forest.nx * forest.ny)]
    while stack:
        n, acov, bcov = stack.pop()
        if n in a_set:
            acov = n
        if n in b_set:
            bcov = n
        if acov >= 0 and bcov >= 0:
            leaves.append(n)
            to_a[n] = acov
            to_b[n] = bcov
            continue
        kids = forest._children[n]
        if kids is None:
            raise MeshError("meshes do not tile the domain consistently")
        stack.extend((k, acov, bcov) for k in kids)
    return MeshOverlay(MeshView(forest, leaves), to_a, to_b)


def edge_segments(mesh: MeshView) -> list[EdgeSegment]:
    """Complete, duplicate-free skeleton of the mesh.

    Faces with a hanging node are split so that each segment matches the
    finer side exactly; boundary segments carry outward normals.
    """
    key = "edges"
    if key in mesh._cache:
        return mesh._cache[key]
    forest = mesh.forest
    x0d, x1d, y0d, y1d = forest.domain
    lmax = max(forest._level[c] for c in mesh.cells) if mesh.cells else 0
    gx_max = forest.nx << lmax
    gy_max = forest.ny << lmax
    sx = (x1d - x0d) / gx_max
    sy = (y1d - y0d) / gy_max

    vert: dict[int, list] = {}
    horz: dict[int, list] = {}
    for c in mesh.cells:
        lvl, ix, iy = forest.coords(c)
        sh = lmax - lvl
        gx0, gx1 = ix << sh, (ix + 1) << sh
        gy0, gy1 = iy << sh, (iy + 1) << sh
        vert.setdefault(gx1, []).append((gy0, gy1, c, 1))
        vert.setdefault(gx0, []).append((gy0, gy1, c, -1))
        horz.setdefault(gy1, []).append((gx0, gx1, c, 1))
        horz.setdefault(gy0, []).append((gx0, gx1, c, -1))

    segments: list[EdgeSegment] = []

    def emit_line(items, is_vertical, gline, gmax_line):
        lo_side = sorted(t[:3] for t in items if t[3] > 0)  # cells before the line
        hi_side = sorted(t[:3] for t in items if t[3] < 0)  # cells after the line
        breaks = sorted({g for a, b, _ in lo_side for g in (a, b)}
                        | {g for a, b, _ in hi_side for g in (a, b)})
        il = ih = 0
        for a, b in zip(breaks[:-1], breaks[1:]):
            while il < len(lo_side) and lo_side[il][1] <= a:
                il += 1
            while ih < len(hi_side) and hi_side[ih][1] <= a:
                ih += 1
            lo = lo_side[il][2] if il < len(lo_side) and lo_side[il][0] <= a else None
            hi = hi_side[ih][2] if ih < len(hi_side) and hi_side[ih][0] <= a else None
            if lo is None and hi is None:
                continue
            if is_vertical:
                px = x0d + gline * sx
                p0, p1 = (px, y0d + a * sy), (px, y0d + b * sy)
                axis = "y"
                length = (b - a) * sy
                n_fwd = (1.0, 0.0)
                n_bwd = (-1.0, 0.0)
            else:
                py = y0d + gline * sy
                p0, p1 = (x0d + a * sx, py), (x0d + b * sx, py)
                axis = "x"
                length = (b - a) * sx
                n_fwd = (0.0, 1.0)
                n_bwd = (0.0, -1.0)
            if lo is not None and hi is not None:
                segments.append(
                    EdgeSegment(p0, p1, axis, n_fwd, lo, hi, length)
                )
            elif hi is None:
                if gline != gmax_line:
                    raise MeshError("one-sided interior face: mesh is invalid")
                segments.append(EdgeSegment(p0, p1, axis, n_fwd, lo, -1, length))
            else:
                if gline != 0:
                    raise MeshError("one-sided interior face: mesh is invalid")
                segments.append(EdgeSegment(p0, p1, axis, n_bwd, hi, -1, length))

    for gx in sorted(vert):
        emit_line(vert[gx], True, gx, gx_max)
    for gy in sorted(horz):
        emit_line(horz[gy], False, gy, gy_max)

    mesh._cache[key] = segments
    return segments


def uniform_refine(mesh: MeshView, times=1) -> MeshView:
    for _ in range(times):
        mesh = refine_cells(mesh, mesh.cells)
    return mesh


def is_one_irregular(mesh: MeshView) -> bool:
    """Check that adjacent cells differ by at most one level everywhere."""
    forest = mesh.forest
    for seg in edge_segments(mesh):
        if seg.is_boundary:
            continue
        if abs(forest._level[seg.left] - forest._level[seg.right]) > 1:
            return False
    return True


def cell_diameters(mesh: MeshView) -> np.ndarray:
    r = mesh.cell_rects()
    return np.hypot(r[:, 1] - r[:, 0], r[:, 3] - r[:, 2])


def identity_overlay(mesh: MeshView) -> MeshOverlay:
    ident = {c: c for c in mesh.cells}
    return MeshOverlay(mesh, ident, dict(ident))
