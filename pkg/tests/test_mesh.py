import numpy as np
import pytest

from dgadapt.mesh import (
    QuadForest,
    cell_diameters,
    coarsen_cells,
    edge_segments,
    is_one_irregular,
    overlay,
    refine_cells,
    uniform_refine,
)

DOMAIN = (0.0, 1.0, 0.0, 1.0)


def new_mesh(levels=0):
    forest = QuadForest(DOMAIN)
    return uniform_refine(forest.root_view(), levels)


def total_area(mesh):
    r = mesh.cell_rects()
    return float(np.sum((r[:, 1] - r[:, 0]) * (r[:, 3] - r[:, 2])))


def test_root_view():
    mesh = new_mesh()
    assert len(mesh.cells) == 1
    assert total_area(mesh) == pytest.approx(1.0)


def test_refine_all_quadruples():
    mesh = new_mesh()
    fine = refine_cells(mesh, mesh.cells)
    assert len(fine.cells) == 4
    assert total_area(fine) == pytest.approx(1.0, rel=1e-12)


def test_area_preserved_under_local_refinement():
    mesh = new_mesh(2)
    mesh = refine_cells(mesh, [mesh.cells[0], mesh.cells[5]])
    assert total_area(mesh) == pytest.approx(1.0, rel=1e-12)
    assert is_one_irregular(mesh)


def test_one_irregular_closure():
    # refining a cell twice next to an untouched neighbour must drag the
    # neighbour along to avoid a doubly-hanging edge
    mesh = new_mesh(1)
    c = mesh.cells[0]
    mesh = refine_cells(mesh, [c])
    # refine the small corner cell again
    small = min(mesh.cells, key=lambda cid: -mesh.forest.level(cid))
    mesh2 = refine_cells(mesh, [small])
    assert is_one_irregular(mesh2)
    assert total_area(mesh2) == pytest.approx(1.0, rel=1e-12)


def test_refine_coarsen_roundtrip():
    mesh = new_mesh(1)
    c = mesh.cells[0]
    fine = refine_cells(mesh, [c])
    children = sorted(set(fine.cells) - set(mesh.cells))
    back = coarsen_cells(fine, children)
    assert back.leaf_ids == mesh.leaf_ids


def test_coarsen_requires_all_four_siblings():
    mesh = new_mesh(1)
    fine = refine_cells(mesh, [mesh.cells[0]])
    children = sorted(set(fine.cells) - set(mesh.cells))
    part = coarsen_cells(fine, children[:3])
    assert part.leaf_ids == fine.leaf_ids


def test_coarsen_refuses_doubly_hanging():
    # 3-level configuration: coarsening the mid-level group would leave a
    # level-2 cell adjacent to a level-0 cell
    mesh = new_mesh(1)
    mesh = refine_cells(mesh, [mesh.cells[0]])
    small = [c for c in mesh.cells if mesh.forest.level(c) == 2]
    mesh = refine_cells(mesh, [small[0]])
    assert is_one_irregular(mesh)
    mid = [c for c in mesh.cells if mesh.forest.level(c) == 2]
    groups_before = set(mesh.cells)
    coarse = coarsen_cells(mesh, mid)
    assert is_one_irregular(coarse)
    assert total_area(coarse) == pytest.approx(1.0, rel=1e-12)


def test_overlay_commutes_and_covers():
    a = new_mesh(1)
    a = refine_cells(a, [a.cells[0]])
    b = new_mesh(1)
    b = refine_cells(b, [b.cells[3]])
    # rebuild on one forest so ids are shared
    forest = QuadForest(DOMAIN)
    base = uniform_refine(forest.root_view(), 1)
    a = refine_cells(base, [base.cells[0]])
    b = refine_cells(base, [base.cells[3]])
    ov_ab = overlay(a, b)
    ov_ba = overlay(b, a)
    assert ov_ab.mesh.leaf_ids == ov_ba.mesh.leaf_ids
    assert total_area(ov_ab.mesh) == pytest.approx(1.0, rel=1e-12)
    assert is_one_irregular(ov_ab.mesh)
    # every overlay cell maps into both parents
    for c in ov_ab.mesh.cells:
        assert ov_ab.to_a[c] in a.leaf_ids
        assert ov_ab.to_b[c] in b.leaf_ids


def test_edge_segments_two_sided_and_conforming():
    mesh = new_mesh(1)
    segs = edge_segments(mesh)
    interior = [s for s in segs if not s.is_boundary]
    boundary = [s for s in segs if s.is_boundary]
    assert len(interior) == 4
    assert len(boundary) == 8
    for s in boundary:
        # outward normal
        mx, my = s.midpoint
        nx, ny = s.normal
        assert nx * (mx - 0.5) + ny * (my - 0.5) > 0


def test_edge_segments_hanging_node_split():
    mesh = new_mesh(1)
    mesh = refine_cells(mesh, [mesh.cells[0]])
    segs = edge_segments(mesh)
    lengths = sorted(s.length for s in segs if not s.is_boundary)
    # the two edges of the refined cell facing coarse neighbours are split
    assert min(lengths) == pytest.approx(0.25)
    total_len = sum(s.length for s in segs)
    # interior skeleton + boundary of the L-shaped refinement
    assert total_len == pytest.approx(4.0 + 2.0 + 1.0)


def test_cell_diameters():
    mesh = new_mesh(1)
    d = cell_diameters(mesh)
    assert np.allclose(d, 0.5 * np.sqrt(2.0))


def test_append_only_ids_are_stable():
    mesh = new_mesh(1)
    ids_before = list(mesh.cells)
    fine = refine_cells(mesh, [mesh.cells[0]])
    # untouched leaves keep their ids
    assert set(ids_before[1:]) <= set(fine.cells)
