"""Mesh topology: split-node faulting, structured builders, text format."""

import numpy as np
import pytest

from almcontact import mesh as msh
from almcontact.fem import HEX8, QUAD, TET4, TRI, WEDGE6


def test_face_frame_axis_normals():
    # least-aligned global axis, ties break x before y before z
    f = msh.compute_face_frame([1.0, 0.0, 0.0])
    assert np.allclose(f.m1, [0.0, 1.0, 0.0])
    assert np.allclose(f.m2, [0.0, 0.0, 1.0])
    f = msh.compute_face_frame([0.0, 0.0, 1.0])
    assert np.allclose(f.m1, [1.0, 0.0, 0.0])
    assert np.allclose(f.m2, [0.0, 1.0, 0.0])


def test_face_frame_random_normals_orthonormal():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n = rng.normal(size=3)
        f = msh.compute_face_frame(n)
        r = f.as_matrix()
        assert np.allclose(r @ r.T, np.eye(3), atol=1e-14)
        assert np.allclose(np.cross(f.m1, f.m2), f.normal, atol=1e-14)
        assert np.allclose(f.normal, n / np.linalg.norm(n), atol=1e-14)


def test_two_hex_split():
    m = msh.build_structured_hex_grid(
        extents=(1.0, 1.0, 1.0),
        divisions=(2, 1, 1),
        faults=[msh.FaultPlaneSpec(axis=0, value=0.5)],
    )
    assert m.n_cells == 2
    assert m.n_nodes == 16  # 12 grid nodes + 4 copies on the cut
    assert len(m.fault_faces) == 1
    face = m.fault_faces[0]
    assert face.kind == QUAD
    assert face.minus_cell == 0 and face.plus_cell == 1
    assert np.isclose(face.area, 1.0)
    assert np.allclose(face.frame.normal, [1.0, 0.0, 0.0])
    assert m.fault_groups["fault"] == [0]
    # sides are coincident copies with disjoint ids
    dm = m.nodes[list(face.minus_node_ids)]
    dp = m.nodes[list(face.plus_node_ids)]
    assert np.array_equal(dm, dp)
    assert not set(face.minus_node_ids) & set(face.plus_node_ids)
    msh.validate_mesh(m)


def test_through_going_plane_counts_and_set_inheritance():
    m = msh.build_structured_hex_grid(
        extents=(8.0, 20.0, 20.0),
        divisions=(4, 10, 10),
        faults=[msh.FaultPlaneSpec(axis=0, value=4.0)],
    )
    assert m.n_cells == 400
    assert len(m.fault_faces) == 100
    # 5*11*11 grid nodes, all 121 on the plane split once
    assert m.n_nodes == 605 + 121
    assert len(m.fault_groups["fault"]) == 100
    areas = [f.area for f in m.fault_faces]
    assert np.allclose(areas, 4.0)
    assert np.isclose(sum(areas), 400.0)
    # boundary sets pick up the copies that lie on them
    assert len(m.node_sets["xmin"]) == 121
    assert len(m.node_sets["ymin"]) == 55 + 11
    assert len(m.face_sets["xmax"]) == 100
    for face in m.fault_faces:
        cm = m.nodes[[i for i in m.cells[face.minus_cell].node_ids]].mean(axis=0)
        cp = m.nodes[[i for i in m.cells[face.plus_cell].node_ids]].mean(axis=0)
        assert np.dot(cp - cm, face.frame.normal) > 0.0
    msh.validate_mesh(m)


def test_build_is_deterministic():
    kwargs = dict(
        extents=(8.0, 20.0, 20.0),
        divisions=(4, 10, 10),
        faults=[msh.FaultPlaneSpec(axis=0, value=4.0)],
    )
    a = msh.build_structured_hex_grid(**kwargs)
    b = msh.build_structured_hex_grid(**kwargs)
    assert np.array_equal(a.nodes, b.nodes)
    assert all(
        ca.node_ids == cb.node_ids and ca.kind == cb.kind
        for ca, cb in zip(a.cells, b.cells)
    )
    assert all(
        fa.minus_node_ids == fb.minus_node_ids
        and fa.plus_node_ids == fb.plus_node_ids
        for fa, fb in zip(a.fault_faces, b.fault_faces)
    )


def test_embedded_fault_rim_stays_shared():
    # crack over y in [1, 3] inside a 4x4x1 slab: front nodes are not split
    m = msh.build_structured_hex_grid(
        extents=(4.0, 4.0, 1.0),
        divisions=(4, 4, 1),
        faults=[msh.FaultPlaneSpec(axis=0, value=2.0, bounds=((1.0, 3.0), (0.0, 1.0)))],
    )
    assert len(m.fault_faces) == 2
    assert m.n_nodes == 50 + 2  # only the interior line (2, 2, z) splits
    for face in m.fault_faces:
        shared = [
            i
            for i, (a, b) in enumerate(zip(face.minus_node_ids, face.plus_node_ids))
            if a == b
        ]
        assert len(shared) == 2
        ys = m.nodes[[face.minus_node_ids[i] for i in shared], 1]
        assert set(np.round(ys).astype(int)) <= {1, 3}
    msh.validate_mesh(m)


def _t_junction_mesh():
    # through-going crack at y=2 split first, then a branch at x=2 abutting it
    return msh.build_structured_hex_grid(
        extents=(4.0, 4.0, 1.0),
        divisions=(4, 4, 1),
        faults=[
            msh.FaultPlaneSpec(axis=1, value=2.0, group="main"),
            msh.FaultPlaneSpec(
                axis=0, value=2.0, bounds=((0.0, 2.0), (0.0, 1.0)), group="branch"
            ),
        ],
    )


def test_t_junction_topology():
    m = _t_junction_mesh()
    assert len(m.fault_groups["main"]) == 4
    assert len(m.fault_groups["branch"]) == 2
    # 50 grid nodes + 10 from the main crack + 6 from the branch
    assert m.n_nodes == 66
    for z in (0.0, 1.0):
        ids = np.flatnonzero(
            np.all(np.isclose(m.nodes, [2.0, 2.0, z]), axis=1)
        )
        assert len(ids) == 3  # top, bottom-left, bottom-right copies
    # the main crack's upper side stays continuous across the junction while
    # the lower side is torn by the branch
    minus_at, plus_at = [], []
    for fid in m.fault_groups["main"]:
        face = m.fault_faces[fid]
        for mn, pn in zip(face.minus_node_ids, face.plus_node_ids):
            if np.allclose(m.nodes[mn], [2.0, 2.0, 0.0]):
                minus_at.append(mn)
                plus_at.append(pn)
    assert len(minus_at) == 2
    assert plus_at[0] == plus_at[1]
    assert minus_at[0] != minus_at[1]
    # the branch is free to slip at the junction: its y=2 corners differ
    for fid in m.fault_groups["branch"]:
        face = m.fault_faces[fid]
        for mn, pn in zip(face.minus_node_ids, face.plus_node_ids):
            if np.isclose(m.nodes[mn][1], 2.0):
                assert mn != pn
    msh.validate_mesh(m)


def test_intersecting_selection_rejected():
    m = msh.build_structured_hex_grid(extents=(4.0, 4.0, 1.0), divisions=(4, 4, 1))
    ky = msh._select_plane_faces(m, msh.FaultPlaneSpec(axis=1, value=2.0), scale=4.0)
    kx = msh._select_plane_faces(
        m,
        msh.FaultPlaneSpec(axis=0, value=2.0, bounds=((0.0, 2.0), (0.0, 1.0))),
        scale=4.0,
    )
    with pytest.raises(ValueError, match="one at a time"):
        msh.split_fault_nodes(m, ky + kx)


def test_off_grid_plane_rejected():
    m = msh.build_structured_hex_grid(extents=(1.0, 1.0, 1.0), divisions=(2, 1, 1))
    with pytest.raises(ValueError, match="no interior faces"):
        msh._select_plane_faces(m, msh.FaultPlaneSpec(axis=0, value=0.3), scale=1.0)


def test_single_cell_boundary_sets():
    m = msh.build_structured_hex_grid(extents=(1.0, 1.0, 1.0), divisions=(1, 1, 1))
    for name in ("xmin", "xmax", "ymin", "ymax", "zmin", "zmax"):
        assert len(m.node_sets[name]) == 4
        assert len(m.face_sets[name]) == 1


def test_region_boxes_tag_cells():
    m = msh.build_structured_hex_grid(
        extents=(2.0, 1.0, 1.0),
        divisions=(2, 1, 1),
        region_boxes=[(5, (1.0, 0.0, 0.0), (2.0, 1.0, 1.0))],
    )
    assert [c.region for c in m.cells] == [0, 5]


def test_tet_grid_conforming_and_volumes():
    m = msh.build_structured_tet_grid(extents=(2.0, 2.0, 1.0), divisions=(2, 2, 1))
    assert m.n_cells == 24
    assert all(c.kind == TET4 for c in m.cells)
    msh.validate_mesh(m)  # positive volumes
    # mismatched face diagonals would surface as spurious boundary faces
    area = sum(
        msh._face_area(m, m.cells[cid], lf) for cid, lf in msh.boundary_faces(m)
    )
    assert np.isclose(area, 2 * (2.0 * 2.0) + 4 * (2.0 * 1.0))
    vol = 0.0
    for c in m.cells:
        p = m.cell_coords(c)
        vol += np.linalg.det(np.stack([p[1] - p[0], p[2] - p[0], p[3] - p[0]])) / 6.0
    assert np.isclose(vol, 4.0)


def test_tet_grid_fault_plane():
    m = msh.build_structured_tet_grid(
        extents=(2.0, 2.0, 1.0),
        divisions=(2, 2, 1),
        faults=[msh.FaultPlaneSpec(axis=0, value=1.0)],
    )
    assert len(m.fault_faces) == 4
    assert all(f.kind == TRI for f in m.fault_faces)
    assert np.isclose(sum(f.area for f in m.fault_faces), 2.0)
    msh.validate_mesh(m)


def test_wedge_grid_fault_plane():
    m = msh.build_structured_wedge_grid(
        extents=(2.0, 1.0, 1.0),
        divisions=(2, 1, 1),
        faults=[msh.FaultPlaneSpec(axis=0, value=1.0)],
    )
    assert m.n_cells == 4
    assert all(c.kind == WEDGE6 for c in m.cells)
    assert len(m.fault_faces) == 1
    face = m.fault_faces[0]
    assert face.kind == QUAD
    assert np.isclose(face.area, 1.0)
    msh.validate_mesh(m)


def test_extrude_triangulation():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    tris = np.array([[0, 1, 2], [0, 2, 3]])
    m = msh.extrude_triangulation(pts, tris, thickness=0.5, layers=1)
    assert m.n_nodes == 8
    assert m.n_cells == 2
    assert all(c.kind == WEDGE6 for c in m.cells)
    assert len(msh.boundary_faces(m)) == 8  # 2 bottom + 2 top + 4 lateral


def test_validate_rejects_inverted_cell():
    m = msh.build_structured_tet_grid(extents=(1.0, 1.0, 1.0), divisions=(1, 1, 1))
    c = m.cells[0]
    c.node_ids = (c.node_ids[1], c.node_ids[0]) + c.node_ids[2:]
    with pytest.raises(ValueError, match="Jacobian"):
        msh.validate_mesh(m)


def test_save_load_round_trip(tmp_path):
    m = _t_junction_mesh()
    p1 = tmp_path / "mesh.txt"
    msh.save_mesh(m, p1)
    m2 = msh.load_mesh(p1)
    assert np.array_equal(m.nodes, m2.nodes)
    assert all(
        ca.node_ids == cb.node_ids and ca.kind == cb.kind and ca.region == cb.region
        for ca, cb in zip(m.cells, m2.cells)
    )
    assert len(m2.fault_faces) == len(m.fault_faces)
    for fa, fb in zip(m.fault_faces, m2.fault_faces):
        assert fa.minus_node_ids == fb.minus_node_ids
        assert fa.plus_node_ids == fb.plus_node_ids
        assert fa.minus_cell == fb.minus_cell and fa.plus_cell == fb.plus_cell
        assert fa.minus_local_face == fb.minus_local_face
        assert np.allclose(fa.frame.as_matrix(), fb.frame.as_matrix())
        assert np.isclose(fa.area, fb.area)
    assert set(m2.node_sets) == set(m.node_sets)
    for k in m.node_sets:
        assert np.array_equal(np.sort(m.node_sets[k]), m2.node_sets[k])
    assert m2.face_sets == {k: sorted(v) for k, v in m.face_sets.items()}
    assert m2.fault_groups == m.fault_groups
    # a second save of the loaded mesh reproduces the file byte for byte
    p2 = tmp_path / "again.txt"
    msh.save_mesh(m2, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_load_errors_carry_line_numbers(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("NODES\n0 0 0 0\n1 1 0 0\nCELLS\n0 hex8 0 1 0\n")
    with pytest.raises(msh.MeshFormatError, match=r"bad\.txt:5"):
        msh.load_mesh(p)
    p.write_text("0 0 0 0\n")
    with pytest.raises(msh.MeshFormatError, match="before any section"):
        msh.load_mesh(p)
    p.write_text("NODES\n0 0 0 0\nCELLS\n0 pent5 0 0 0 0 0 0\n")
    with pytest.raises(msh.MeshFormatError, match="unknown cell kind"):
        msh.load_mesh(p)
    p.write_text("NODES\n0 0 0 0\n2 1 0 0\n")
    with pytest.raises(msh.MeshFormatError, match="dense"):
        msh.load_mesh(p)
