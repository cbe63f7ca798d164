"""Meshes with explicitly split fault surfaces.

Nodes are rows of a dense coordinate array (the node id is the row index).
A fault is a set of interior faces whose nodes have been duplicated so the
two sides deform independently; each fault face keeps aligned minus/plus
node lists (coincident coordinates, matching order) and an orthonormal frame
whose normal points from the minus cell to the plus cell.  Nodes on the rim
of a fault surface (the fracture front) stay shared, which pins the
displacement jump to zero there.

Text format (ASCII, '#' comments, sections in any order):

    NODES
    <id> <x> <y> <z>
    CELLS
    <id> <kind> <node ids...> <region>
    FAULT_FACES
    <id> <face kind> <minus nodes...> <plus nodes...> <minus cell> <plus cell>
    NODESET <name>
    <node ids...>
    FACESET <name>
    <cell id> <local face>
    FAULTSET <name>
    <fault face ids...>

Node and cell ids must be dense 0..n-1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fem
from .fem import CELL_FACES, HEX8, NODES_PER_CELL, QUAD, TET4, TRI, WEDGE6

GEOM_TOL = 1e-9


@dataclass
class Cell:
    id: int
    kind: str
    node_ids: tuple[int, ...]
    region: int = 0


@dataclass(frozen=True)
class FaceFrame:
    """Right-handed orthonormal triad (normal, m1, m2) with m1 x m2 = normal."""

    normal: np.ndarray
    m1: np.ndarray
    m2: np.ndarray

    def as_matrix(self) -> np.ndarray:
        """Rows (normal, m1, m2): maps global vectors to frame components."""
        return np.stack([self.normal, self.m1, self.m2])


@dataclass
class FaultFace:
    """One interior face of a fault surface.

    minus_node_ids and plus_node_ids are aligned: entry i on both sides is
    the same geometric corner (equal coordinates).  Rim nodes may be shared
    between the two lists.
    """

    id: int
    kind: str
    minus_node_ids: tuple[int, ...]
    plus_node_ids: tuple[int, ...]
    minus_cell: int
    plus_cell: int
    minus_local_face: int
    plus_local_face: int
    frame: FaceFrame | None = None
    area: float = 0.0


@dataclass
class Mesh:
    nodes: np.ndarray
    cells: list[Cell]
    fault_faces: list[FaultFace] = field(default_factory=list)
    node_sets: dict[str, np.ndarray] = field(default_factory=dict)
    face_sets: dict[str, list[tuple[int, int]]] = field(default_factory=dict)
    fault_groups: dict[str, list[int]] = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def cell_coords(self, cell: Cell) -> np.ndarray:
        return self.nodes[list(cell.node_ids)]


def compute_face_frame(normal: np.ndarray) -> FaceFrame:
    """Frame for a unit normal.  m1 is the normalized projection of the
    global axis least aligned with the normal (ties break in x, y, z order),
    m2 closes the right-handed triad."""
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    axis = int(np.argmin(np.abs(n)))
    e = np.zeros(3)
    e[axis] = 1.0
    m1 = e - np.dot(e, n) * n
    m1 /= np.linalg.norm(m1)
    m2 = np.cross(n, m1)
    return FaceFrame(n, m1, m2)


# ---------------------------------------------------------------------------
# Face topology


def _cell_faces(cell: Cell):
    """Yield (sorted node key, local face index, node tuple) per face."""
    for lf, (lnodes, _) in enumerate(CELL_FACES[cell.kind]):
        nodes = tuple(cell.node_ids[i] for i in lnodes)
        yield tuple(sorted(nodes)), lf, nodes


def collect_faces(mesh: Mesh) -> dict[tuple[int, ...], list[tuple[int, int]]]:
    """Map sorted-node face key -> [(cell id, local face), ...]."""
    faces: dict[tuple[int, ...], list[tuple[int, int]]] = {}
    for cell in mesh.cells:
        for key, lf, _ in _cell_faces(cell):
            faces.setdefault(key, []).append((cell.id, lf))
    for key, owners in faces.items():
        if len(owners) > 2:
            raise ValueError(f"face {key} shared by more than two cells")
    return faces


def boundary_faces(mesh: Mesh) -> list[tuple[int, int]]:
    return [
        owners[0]
        for owners in collect_faces(mesh).values()
        if len(owners) == 1
    ]


def _face_centroid(mesh: Mesh, key: tuple[int, ...]) -> np.ndarray:
    return mesh.nodes[list(key)].mean(axis=0)


def _cell_centroid(mesh: Mesh, cell: Cell) -> np.ndarray:
    return mesh.nodes[list(cell.node_ids)].mean(axis=0)


def _face_normal_from(mesh: Mesh, cell: Cell, lf: int) -> np.ndarray:
    """Outward unit normal of a cell's local face (Newell average)."""
    lnodes, _ = CELL_FACES[cell.kind][lf]
    pts = mesh.nodes[[cell.node_ids[i] for i in lnodes]]
    n = np.zeros(3)
    for i in range(len(pts)):
        a = pts[i]
        b = pts[(i + 1) % len(pts)]
        n += np.cross(a, b)
    return n / np.linalg.norm(n)


# ---------------------------------------------------------------------------
# Node splitting


def split_fault_nodes(
    mesh: Mesh,
    face_keys: list[tuple[int, ...]],
    group: str = "fault",
    minus_side=None,
) -> list[int]:
    """Split the mesh along the selected interior faces.

    face_keys are sorted node tuples of interior faces (see collect_faces).
    The selection must form a manifold surface: every edge interior to the
    selection is shared by at most two selected faces.  Intersecting surfaces
    are handled by calling this once per surface (through-going surface
    first).

    Around every node of the selection, cells are grouped into fans connected
    through non-selected faces; each fan beyond the first receives a fresh
    copy of the node.  Rim nodes keep a single connected fan and stay shared.
    Node sets are extended with the new copies.  Appends FaultFace records
    (and a fault group entry) and returns their ids.

    minus_side optionally maps (cell_a, cell_b) for a face to the id of the
    cell to use as the minus side; by default the lower cell id wins.
    """
    faces = collect_faces(mesh)
    selected: list[tuple[tuple[int, ...], int, int]] = []
    for key in face_keys:
        owners = faces.get(tuple(key))
        if owners is None or len(owners) != 2:
            raise ValueError(f"selected face {tuple(key)} is not interior")
        (ca, _), (cb, _) = owners
        selected.append((tuple(key), ca, cb))
    sel_keys = {s[0] for s in selected}

    # manifold check on selection edges
    edge_count: dict[tuple[int, int], int] = {}
    for key, ca, _ in selected:
        cell = mesh.cells[ca]
        for k, lf, nodes in _cell_faces(cell):
            if k != key:
                continue
            for i in range(len(nodes)):
                e = tuple(sorted((nodes[i], nodes[(i + 1) % len(nodes)])))
                edge_count[e] = edge_count.get(e, 0) + 1
    for e, cnt in edge_count.items():
        if cnt > 2:
            raise ValueError(
                f"selected faces are not a manifold surface at edge {e}; "
                "split intersecting surfaces one at a time"
            )

    # adjacency: for each node on the selection, cells touching it and the
    # non-selected faces connecting them
    sel_nodes = sorted({n for key in sel_keys for n in key})
    node_cells: dict[int, list[int]] = {n: [] for n in sel_nodes}
    for cell in mesh.cells:
        for n in cell.node_ids:
            if n in node_cells:
                node_cells[n].append(cell.id)

    # face connectivity restricted to faces containing a given node
    links: dict[int, list[tuple[int, int]]] = {n: [] for n in sel_nodes}
    for key, owners in faces.items():
        if len(owners) != 2 or key in sel_keys:
            continue
        (ca, _), (cb, _) = owners
        for n in key:
            if n in links:
                links[n].append((ca, cb))

    new_coords: list[np.ndarray] = []
    next_id = mesh.n_nodes
    # (node, cell) -> replacement node id for rewiring
    rewire: dict[tuple[int, int], int] = {}
    copies: dict[int, list[int]] = {}

    for n in sel_nodes:
        cells_here = sorted(set(node_cells[n]))
        parent = {c: c for c in cells_here}

        def find(c):
            while parent[c] != c:
                parent[c] = parent[parent[c]]
                c = parent[c]
            return c

        for ca, cb in links[n]:
            ra, rb = find(ca), find(cb)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        comps: dict[int, list[int]] = {}
        for c in cells_here:
            comps.setdefault(find(c), []).append(c)
        ordered = [comps[r] for r in sorted(comps)]
        if len(ordered) <= 1:
            continue
        copies[n] = [n]
        for comp in ordered[1:]:
            nid = next_id
            next_id += 1
            new_coords.append(mesh.nodes[n].copy())
            copies[n].append(nid)
            for c in comp:
                rewire[(n, c)] = nid

    if new_coords:
        mesh.nodes = np.vstack([mesh.nodes, np.array(new_coords)])
    for (n, c), nid in rewire.items():
        cell = mesh.cells[c]
        cell.node_ids = tuple(nid if m == n else m for m in cell.node_ids)
    for name, ids in mesh.node_sets.items():
        extra = [c for n in ids for c in copies.get(int(n), [])[1:]]
        if extra:
            mesh.node_sets[name] = np.sort(
                np.concatenate([ids, np.array(extra, dtype=int)])
            )

    def side_node(n: int, c: int) -> int:
        return rewire.get((n, c), n)

    # keep earlier fault faces aligned with their (rewired) cells
    for face in mesh.fault_faces:
        face.minus_node_ids = tuple(
            side_node(n, face.minus_cell) for n in face.minus_node_ids
        )
        face.plus_node_ids = tuple(
            side_node(n, face.plus_cell) for n in face.plus_node_ids
        )

    face_ids: list[int] = []
    for key, ca, cb in selected:
        if minus_side is not None:
            cm = minus_side(ca, cb)
            cp = cb if cm == ca else ca
        else:
            cm, cp = min(ca, cb), max(ca, cb)
        mcell, pcell = mesh.cells[cm], mesh.cells[cp]
        # recover the local faces by mapping the original selected key
        # through each side's rewiring
        m_lf = p_lf = None
        m_nodes = None
        want_m = tuple(sorted(side_node(n, cm) for n in key))
        want_p = tuple(sorted(side_node(n, cp) for n in key))
        for k, lf, nodes in _cell_faces(mcell):
            if k == want_m:
                m_lf, m_nodes = lf, nodes
        for k, lf, nodes in _cell_faces(pcell):
            if k == want_p:
                p_lf, p_nodes = lf, nodes
        assert m_lf is not None and p_lf is not None
        # plus nodes aligned with the minus ordering via the original ids
        back_m = {side_node(n, cm): n for n in key}
        plus_aligned = tuple(side_node(back_m[nid], cp) for nid in m_nodes)
        fkind = TRI if len(key) == 3 else QUAD
        fid = len(mesh.fault_faces)
        normal = _face_normal_from(mesh, mcell, m_lf)
        frame = compute_face_frame(normal)
        face = FaultFace(
            id=fid,
            kind=fkind,
            minus_node_ids=m_nodes,
            plus_node_ids=plus_aligned,
            minus_cell=cm,
            plus_cell=cp,
            minus_local_face=m_lf,
            plus_local_face=p_lf,
            frame=frame,
            area=_face_area(mesh, mcell, m_lf),
        )
        mesh.fault_faces.append(face)
        face_ids.append(fid)
    mesh.fault_groups.setdefault(group, []).extend(face_ids)
    return face_ids


def _face_area(mesh: Mesh, cell: Cell, lf: int) -> float:
    _, fkind = CELL_FACES[cell.kind][lf]
    rule = fem.face_quadrature(fkind)
    xi, dxi = fem.face_parametrization(cell.kind, lf, rule.points)
    dn = fem.shape_gradients(cell.kind, xi)  # (q, n, 3)
    coords = mesh.cell_coords(cell)
    jac = np.einsum("na,qnb->qab", coords, dn)  # dx/dxi
    tang = np.einsum("qab,qbs->qas", jac, dxi)
    cross = np.cross(tang[:, :, 0], tang[:, :, 1])
    return float(np.linalg.norm(cross, axis=1) @ rule.weights)


def validate_mesh(mesh: Mesh) -> None:
    """Check Jacobian positivity, frame orthonormality, and side alignment.

    Raises ValueError naming the first offending cell or face.
    """
    by_kind: dict[str, list[Cell]] = {}
    for cell in mesh.cells:
        if cell.kind not in NODES_PER_CELL:
            raise ValueError(f"cell {cell.id}: unknown kind {cell.kind!r}")
        if len(cell.node_ids) != NODES_PER_CELL[cell.kind]:
            raise ValueError(f"cell {cell.id}: wrong node count")
        by_kind.setdefault(cell.kind, []).append(cell)
    for kind, cells in by_kind.items():
        coords = np.stack([mesh.cell_coords(c) for c in cells])
        rule = fem.standard_quadrature(kind)
        _, detj, _ = fem.jacobians(kind, coords, rule)
        bad = np.argwhere(detj <= 0.0)
        if bad.size:
            raise ValueError(
                f"cell {cells[int(bad[0, 0])].id}: non-positive Jacobian"
            )
    for face in mesh.fault_faces:
        fm = face.frame
        r = fm.as_matrix()
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-12):
            raise ValueError(f"fault face {face.id}: frame not orthonormal")
        if np.linalg.norm(np.cross(fm.m1, fm.m2) - fm.normal) > 1e-12:
            raise ValueError(f"fault face {face.id}: frame not right-handed")
        dm = mesh.nodes[list(face.minus_node_ids)]
        dp = mesh.nodes[list(face.plus_node_ids)]
        if not np.allclose(dm, dp, atol=1e-12 * (1 + np.abs(dm).max())):
            raise ValueError(f"fault face {face.id}: sides not coincident")
        area_p = _face_area(mesh, mesh.cells[face.plus_cell], face.plus_local_face)
        if abs(area_p - face.area) > 1e-12 * (1.0 + face.area):
            raise ValueError(f"fault face {face.id}: side areas disagree")
        cm = _cell_centroid(mesh, mesh.cells[face.minus_cell])
        cp = _cell_centroid(mesh, mesh.cells[face.plus_cell])
        if np.dot(cp - cm, face.frame.normal) <= 0.0:
            raise ValueError(f"fault face {face.id}: normal not minus->plus")


# ---------------------------------------------------------------------------
# Structured builders


@dataclass(frozen=True)
class FaultPlaneSpec:
    """Axis-aligned fault plane for the structured builders.

    axis is 0, 1 or 2; value must coincide with a grid line.  bounds
    optionally restricts the selection to a rectangle in the remaining two
    axes (sorted order), tested against face centroids.
    """

    axis: int
    value: float
    bounds: tuple[tuple[float, float], tuple[float, float]] | None = None
    group: str = "fault"


def _axis_ticks(extent: tuple[float, float], n: int) -> np.ndarray:
    return np.linspace(extent[0], extent[1], n + 1)


def _resolve_ticks(extents, divisions, ticks):
    if ticks is not None:
        return [np.asarray(t, dtype=float) for t in ticks]
    return [
        _axis_ticks((0.0, extents[a]) if np.isscalar(extents[a]) else extents[a],
                    divisions[a])
        for a in range(3)
    ]


def _select_plane_faces(mesh: Mesh, spec: FaultPlaneSpec, scale: float):
    tol = GEOM_TOL * scale
    keys = []
    for key, owners in collect_faces(mesh).items():
        if len(owners) != 2:
            continue
        pts = mesh.nodes[list(key)]
        if np.max(np.abs(pts[:, spec.axis] - spec.value)) > tol:
            continue
        if spec.bounds is not None:
            c = pts.mean(axis=0)
            others = [a for a in range(3) if a != spec.axis]
            ok = all(
                spec.bounds[i][0] - tol <= c[others[i]] <= spec.bounds[i][1] + tol
                for i in range(2)
            )
            if not ok:
                continue
        keys.append(key)
    if not keys:
        raise ValueError(
            f"fault plane axis={spec.axis} value={spec.value} matches no "
            "interior faces; the value must lie on a grid line"
        )
    return keys


def _apply_faults(mesh: Mesh, faults, scale: float) -> None:
    for spec in faults or ():
        keys = _select_plane_faces(mesh, spec, scale)

        def minus_rule(ca, cb, _axis=spec.axis):
            a = _cell_centroid(mesh, mesh.cells[ca])[_axis]
            b = _cell_centroid(mesh, mesh.cells[cb])[_axis]
            return ca if a < b else cb

        split_fault_nodes(mesh, keys, group=spec.group, minus_side=minus_rule)


def _tag_regions(mesh: Mesh, region_boxes) -> None:
    if not region_boxes:
        return
    for cell in mesh.cells:
        c = _cell_centroid(mesh, cell)
        for label, lo, hi in region_boxes:
            lo = np.asarray(lo, dtype=float)
            hi = np.asarray(hi, dtype=float)
            if np.all(c >= lo) and np.all(c <= hi):
                cell.region = label
                break


def _boundary_sets(mesh: Mesh, ticks) -> None:
    names = ("xmin", "xmax", "ymin", "ymax", "zmin", "zmax")
    lows = [t[0] for t in ticks]
    highs = [t[-1] for t in ticks]
    scale = max(hi - lo for lo, hi in zip(lows, highs))
    tol = GEOM_TOL * scale
    # node sets
    for i, (a, v, _) in enumerate(
        [(0, lows[0], -1), (0, highs[0], 1), (1, lows[1], -1),
         (1, highs[1], 1), (2, lows[2], -1), (2, highs[2], 1)]
    ):
        ids = np.flatnonzero(np.abs(mesh.nodes[:, a] - v) <= tol)
        mesh.node_sets[names[i]] = ids
    # face sets from boundary faces
    fsets: dict[str, list[tuple[int, int]]] = {n: [] for n in names}
    for cid, lf in boundary_faces(mesh):
        cell = mesh.cells[cid]
        lnodes, _ = CELL_FACES[cell.kind][lf]
        pts = mesh.nodes[[cell.node_ids[i] for i in lnodes]]
        for i, (a, v, _) in enumerate(
            [(0, lows[0], -1), (0, highs[0], 1), (1, lows[1], -1),
             (1, highs[1], 1), (2, lows[2], -1), (2, highs[2], 1)]
        ):
            if np.max(np.abs(pts[:, a] - v)) <= tol:
                fsets[names[i]].append((cid, lf))
                break
    for n in names:
        mesh.face_sets[n] = sorted(fsets[n])


def build_structured_hex_grid(
    extents=None,
    divisions=None,
    faults=None,
    region_boxes=None,
    ticks=None,
) -> Mesh:
    """Structured hexahedral grid with optional axis-aligned fault planes.

    Either extents (three lengths or (lo, hi) pairs) and divisions, or
    explicit per-axis tick arrays.  region_boxes is a list of
    (label, lo_corner, hi_corner) tested against cell centroids.  Fault
    planes are split in order (through-going planes first for
    intersections).  Boundary node and face sets xmin..zmax are attached.
    """
    tk = _resolve_ticks(extents, divisions, ticks)
    nx, ny, nz = (len(t) - 1 for t in tk)
    X, Y, Z = np.meshgrid(tk[0], tk[1], tk[2], indexing="ij")
    nodes = np.stack([X.ravel(order="F"), Y.ravel(order="F"), Z.ravel(order="F")],
                     axis=1)

    def nid(i, j, k):
        return i + (nx + 1) * (j + (ny + 1) * k)

    cells = []
    cid = 0
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                n0 = nid(i, j, k)
                n1 = nid(i + 1, j, k)
                n2 = nid(i + 1, j + 1, k)
                n3 = nid(i, j + 1, k)
                n4 = nid(i, j, k + 1)
                n5 = nid(i + 1, j, k + 1)
                n6 = nid(i + 1, j + 1, k + 1)
                n7 = nid(i, j + 1, k + 1)
                cells.append(Cell(cid, HEX8, (n0, n1, n2, n3, n4, n5, n6, n7)))
                cid += 1
    mesh = Mesh(nodes=nodes, cells=cells)
    _tag_regions(mesh, region_boxes)
    _boundary_sets(mesh, tk)
    scale = max(t[-1] - t[0] for t in tk)
    _apply_faults(mesh, faults, scale)
    return mesh


_KUHN_PERMS = (
    (0, 1, 2),
    (0, 2, 1),
    (1, 0, 2),
    (1, 2, 0),
    (2, 0, 1),
    (2, 1, 0),
)


def build_structured_tet_grid(
    extents=None,
    divisions=None,
    faults=None,
    region_boxes=None,
    ticks=None,
) -> Mesh:
    """Structured grid of tetrahedra (six per hex cell, Kuhn subdivision
    reflected by per-axis cell parity).  Same options as the hex builder;
    fault planes select the triangle pairs lying on the plane.

    The parity reflection alternates the diagonal direction of every grid
    face while staying conforming: the diagonal of a shared face depends
    only on the parities of the two in-face axes, which neighbouring cells
    agree on.  A single fixed subdivision would align all fault-face
    diagonals and let near-tip traction oscillations reinforce from face
    pair to face pair instead of cancelling.
    """
    tk = _resolve_ticks(extents, divisions, ticks)
    nx, ny, nz = (len(t) - 1 for t in tk)
    X, Y, Z = np.meshgrid(tk[0], tk[1], tk[2], indexing="ij")
    nodes = np.stack([X.ravel(order="F"), Y.ravel(order="F"), Z.ravel(order="F")],
                     axis=1)

    def nid(i, j, k):
        return i + (nx + 1) * (j + (ny + 1) * k)

    cells = []
    cid = 0
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                par = np.array([i & 1, j & 1, k & 1])
                corner = np.array([i, j, k])

                def vert(offset):
                    return nid(*(corner + (offset ^ par)))

                v0 = vert(np.array([0, 0, 0]))
                v7 = vert(np.array([1, 1, 1]))
                for perm in _KUHN_PERMS:
                    o1 = np.zeros(3, dtype=int)
                    o1[perm[0]] = 1
                    o2 = o1.copy()
                    o2[perm[1]] = 1
                    a, b = vert(o1), vert(o2)
                    quad = [v0, a, b, v7]
                    p = nodes[quad]
                    vol = np.linalg.det(
                        np.stack([p[1] - p[0], p[2] - p[0], p[3] - p[0]])
                    )
                    if vol < 0:
                        quad = [v0, b, a, v7]
                    cells.append(Cell(cid, TET4, tuple(quad)))
                    cid += 1
    mesh = Mesh(nodes=nodes, cells=cells)
    _tag_regions(mesh, region_boxes)
    _boundary_sets(mesh, tk)
    scale = max(t[-1] - t[0] for t in tk)
    _apply_faults(mesh, faults, scale)
    return mesh


def build_structured_wedge_grid(
    extents=None,
    divisions=None,
    faults=None,
    region_boxes=None,
    ticks=None,
) -> Mesh:
    """Structured wedge grid: each (x, y) grid quad is cut into two
    triangles and extruded along z, with the diagonal direction alternating
    by quad parity so triangle orientations cancel rather than reinforce
    across a fault.  Fault planes on x- or y-lines select lateral quad
    faces; z-planes select triangles."""
    tk = _resolve_ticks(extents, divisions, ticks)
    nx, ny, nz = (len(t) - 1 for t in tk)
    X, Y, Z = np.meshgrid(tk[0], tk[1], tk[2], indexing="ij")
    nodes = np.stack([X.ravel(order="F"), Y.ravel(order="F"), Z.ravel(order="F")],
                     axis=1)

    def nid(i, j, k):
        return i + (nx + 1) * (j + (ny + 1) * k)

    cells = []
    cid = 0
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                n00, n10 = nid(i, j, k), nid(i + 1, j, k)
                n11, n01 = nid(i + 1, j + 1, k), nid(i, j + 1, k)
                m00, m10 = nid(i, j, k + 1), nid(i + 1, j, k + 1)
                m11, m01 = nid(i + 1, j + 1, k + 1), nid(i, j + 1, k + 1)
                if (i + j) & 1:
                    tris = ((n00, n10, n01, m00, m10, m01),
                            (n10, n11, n01, m10, m11, m01))
                else:
                    tris = ((n00, n10, n11, m00, m10, m11),
                            (n00, n11, n01, m00, m11, m01))
                for tri in tris:
                    cells.append(Cell(cid, WEDGE6, tri))
                    cid += 1
    mesh = Mesh(nodes=nodes, cells=cells)
    _tag_regions(mesh, region_boxes)
    _boundary_sets(mesh, tk)
    scale = max(t[-1] - t[0] for t in tk)
    _apply_faults(mesh, faults, scale)
    return mesh


def extrude_triangulation(
    points2d: np.ndarray,
    triangles: np.ndarray,
    thickness: float,
    layers: int = 1,
) -> Mesh:
    """Extrude a 2D triangulation along z into wedges.

    points2d is (n, 2) interpreted as (x, y); layers planes are stacked at
    spacing thickness / layers.  Triangles must be counterclockwise.
    """
    points2d = np.asarray(points2d, dtype=float)
    triangles = np.asarray(triangles, dtype=int)
    npt = points2d.shape[0]
    zs = np.linspace(0.0, thickness, layers + 1)
    nodes = np.concatenate(
        [
            np.column_stack([points2d, np.full(npt, z)])
            for z in zs
        ]
    )
    cells = []
    cid = 0
    for layer in range(layers):
        lo = layer * npt
        hi = (layer + 1) * npt
        for tri in triangles:
            a, b, c = (int(t) for t in tri)
            cells.append(
                Cell(cid, WEDGE6, (lo + a, lo + b, lo + c, hi + a, hi + b, hi + c))
            )
            cid += 1
    mesh = Mesh(nodes=nodes, cells=cells)
    validate_mesh(mesh)
    return mesh


# ---------------------------------------------------------------------------
# Text format


def save_mesh(mesh: Mesh, path) -> None:
    lines = ["# almcontact mesh", "NODES"]
    for i, p in enumerate(mesh.nodes):
        lines.append(f"{i} {p[0]:.17e} {p[1]:.17e} {p[2]:.17e}")
    lines.append("CELLS")
    for c in mesh.cells:
        ids = " ".join(str(n) for n in c.node_ids)
        lines.append(f"{c.id} {c.kind} {ids} {c.region}")
    lines.append("FAULT_FACES")
    for f in mesh.fault_faces:
        mn = " ".join(str(n) for n in f.minus_node_ids)
        pn = " ".join(str(n) for n in f.plus_node_ids)
        lines.append(f"{f.id} {f.kind} {mn} {pn} {f.minus_cell} {f.plus_cell}")
    for name in sorted(mesh.node_sets):
        lines.append(f"NODESET {name}")
        lines.append(" ".join(str(int(i)) for i in mesh.node_sets[name]))
    for name in sorted(mesh.face_sets):
        lines.append(f"FACESET {name}")
        for cid, lf in mesh.face_sets[name]:
            lines.append(f"{cid} {lf}")
    for name in sorted(mesh.fault_groups):
        lines.append(f"FAULTSET {name}")
        lines.append(" ".join(str(i) for i in mesh.fault_groups[name]))
    text = "\n".join(lines) + "\n"
    with open(path, "w") as fh:
        fh.write(text)


class MeshFormatError(ValueError):
    pass


def load_mesh(path) -> Mesh:
    """Parse the text format; errors carry the file line number."""
    with open(path) as fh:
        raw = fh.readlines()

    section = None
    section_arg = None
    nodes: list[tuple[int, np.ndarray]] = []
    cells: list[Cell] = []
    fault_rows: list[tuple] = []
    node_sets: dict[str, list[int]] = {}
    face_sets: dict[str, list[tuple[int, int]]] = {}
    fault_groups: dict[str, list[int]] = {}

    def err(lineno, msg):
        raise MeshFormatError(f"{path}:{lineno}: {msg}")

    for lineno, line in enumerate(raw, start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        toks = body.split()
        head = toks[0].upper()
        if head in ("NODES", "CELLS", "FAULT_FACES"):
            section, section_arg = head, None
            continue
        if head in ("NODESET", "FACESET", "FAULTSET"):
            if len(toks) != 2:
                err(lineno, f"{head} needs a name")
            section, section_arg = head, toks[1]
            if head == "NODESET":
                node_sets.setdefault(section_arg, [])
            elif head == "FACESET":
                face_sets.setdefault(section_arg, [])
            else:
                fault_groups.setdefault(section_arg, [])
            continue
        if section is None:
            err(lineno, "data before any section header")
        try:
            if section == "NODES":
                if len(toks) != 4:
                    err(lineno, "node rows need: id x y z")
                nodes.append((int(toks[0]), np.array([float(t) for t in toks[1:]])))
            elif section == "CELLS":
                kind = toks[1]
                if kind not in NODES_PER_CELL:
                    err(lineno, f"unknown cell kind {kind!r}")
                nn = NODES_PER_CELL[kind]
                if len(toks) != 2 + nn + 1:
                    err(lineno, f"cell rows for {kind} need {nn} nodes + region")
                cells.append(
                    Cell(
                        int(toks[0]),
                        kind,
                        tuple(int(t) for t in toks[2 : 2 + nn]),
                        int(toks[2 + nn]),
                    )
                )
            elif section == "FAULT_FACES":
                fkind = toks[1]
                nn = 3 if fkind == TRI else 4 if fkind == QUAD else None
                if nn is None:
                    err(lineno, f"unknown face kind {fkind!r}")
                if len(toks) != 2 + 2 * nn + 2:
                    err(lineno, "bad fault face row")
                mn = tuple(int(t) for t in toks[2 : 2 + nn])
                pn = tuple(int(t) for t in toks[2 + nn : 2 + 2 * nn])
                fault_rows.append(
                    (int(toks[0]), fkind, mn, pn, int(toks[-2]), int(toks[-1]),
                     lineno)
                )
            elif section == "NODESET":
                node_sets[section_arg].extend(int(t) for t in toks)
            elif section == "FACESET":
                if len(toks) != 2:
                    err(lineno, "face set rows need: cell_id local_face")
                face_sets[section_arg].append((int(toks[0]), int(toks[1])))
            elif section == "FAULTSET":
                fault_groups[section_arg].extend(int(t) for t in toks)
        except MeshFormatError:
            raise
        except ValueError:
            err(lineno, f"cannot parse {body!r}")

    if not nodes:
        raise MeshFormatError(f"{path}: no NODES section")
    ids = [i for i, _ in nodes]
    if sorted(ids) != list(range(len(ids))):
        raise MeshFormatError(f"{path}: node ids are not dense 0..n-1")
    coords = np.zeros((len(ids), 3))
    for i, p in nodes:
        coords[i] = p
    cells.sort(key=lambda c: c.id)
    if [c.id for c in cells] != list(range(len(cells))):
        raise MeshFormatError(f"{path}: cell ids are not dense 0..n-1")
    mesh = Mesh(
        nodes=coords,
        cells=cells,
        node_sets={k: np.array(sorted(v), dtype=int) for k, v in node_sets.items()},
        face_sets={k: sorted(v) for k, v in face_sets.items()},
        fault_groups=fault_groups,
    )

    for fid, fkind, mn, pn, cm, cp, lineno in sorted(fault_rows):
        mcell = mesh.cells[cm]
        pcell = mesh.cells[cp]
        m_lf = p_lf = None
        for k, lf, nds in _cell_faces(mcell):
            if k == tuple(sorted(mn)):
                m_lf = lf
        for k, lf, nds in _cell_faces(pcell):
            if k == tuple(sorted(pn)):
                p_lf = lf
        if m_lf is None or p_lf is None:
            raise MeshFormatError(
                f"{path}:{lineno}: fault face {fid} does not match its cells"
            )
        normal = _face_normal_from(mesh, mcell, m_lf)
        mesh.fault_faces.append(
            FaultFace(
                id=fid,
                kind=fkind,
                minus_node_ids=tuple(mn),
                plus_node_ids=tuple(pn),
                minus_cell=cm,
                plus_cell=cp,
                minus_local_face=m_lf,
                plus_local_face=p_lf,
                frame=compute_face_frame(normal),
                area=_face_area(mesh, mcell, m_lf),
            )
        )
    if mesh.fault_faces and [f.id for f in mesh.fault_faces] != list(
        range(len(mesh.fault_faces))
    ):
        raise MeshFormatError(f"{path}: fault face ids are not dense")
    validate_mesh(mesh)
    return mesh
