"""Face-bubble enrichment of the displacement space.

Each side of each fault face carries one extra vector dof: a scalar bubble
supported on the parent cell, vanishing on every cell face except the fault
face, times a free 3-vector.  The bubbles enlarge the space the jump is
measured against, which keeps the discrete contact problem uniformly stable
as the mesh is refined; they are eliminated per face by static condensation
before the global solve, so the outer system keeps the nodal sparsity.

Reference bubbles:

    hex, face on axis j at sign s     (1 + s x_j)/2 * prod_{i!=j} (1 - x_i^2)
    tet, face opposite vertex v       prod_{w != v} lambda_w
    wedge, triangle face at sign s    (1 + s x_3)/2 * lambda_0 lambda_1 lambda_2
    wedge, quad face on vertices a,b  (1 - x_3^2) * lambda_a lambda_b
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import contact, fem
from .fem import CELL_FACES, HEX8, REF_NODES, TET4, WEDGE6

# local face index -> (axis, sign) for the hex reference cell
_HEX_FACE_AXES = ((0, -1.0), (0, 1.0), (1, -1.0), (1, 1.0), (2, -1.0), (2, 1.0))
# wedge quad faces keep these two triangle vertices
_WEDGE_QUAD_PAIRS = {2: (0, 1), 3: (1, 2), 4: (2, 0)}

_TET_DLAM = np.array(
    [[-1.0, -1.0, -1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
)
_TRI_DLAM = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def bubble_values(kind: str, local_face: int, points: np.ndarray) -> np.ndarray:
    """Bubble values at reference points, shape points.shape[:-1]."""
    p = np.asarray(points, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    if kind == HEX8:
        axis, sign = _HEX_FACE_AXES[local_face]
        val = 0.5 * (1.0 + sign * p[..., axis])
        for i in range(3):
            if i != axis:
                val = val * (1.0 - p[..., i] ** 2)
        return val
    if kind == TET4:
        lam = np.stack([1.0 - x - y - z, x, y, z], axis=-1)
        fnodes, _ = CELL_FACES[TET4][local_face]
        return np.prod(lam[..., list(fnodes)], axis=-1)
    lam = np.stack([1.0 - x - y, x, y], axis=-1)
    if local_face in (0, 1):
        sign = -1.0 if local_face == 0 else 1.0
        return 0.5 * (1.0 + sign * z) * np.prod(lam, axis=-1)
    a, b = _WEDGE_QUAD_PAIRS[local_face]
    return (1.0 - z**2) * lam[..., a] * lam[..., b]


def bubble_gradients(kind: str, local_face: int, points: np.ndarray) -> np.ndarray:
    """Bubble gradients wrt reference coordinates, shape (..., 3)."""
    p = np.asarray(points, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    g = np.zeros(p.shape)
    if kind == HEX8:
        axis, sign = _HEX_FACE_AXES[local_face]
        others = [i for i in range(3) if i != axis]
        f = {i: 1.0 - p[..., i] ** 2 for i in others}
        ridge = 0.5 * (1.0 + sign * p[..., axis])
        g[..., axis] = 0.5 * sign * f[others[0]] * f[others[1]]
        g[..., others[0]] = ridge * (-2.0 * p[..., others[0]]) * f[others[1]]
        g[..., others[1]] = ridge * f[others[0]] * (-2.0 * p[..., others[1]])
        return g
    if kind == TET4:
        lam = np.stack([1.0 - x - y - z, x, y, z], axis=-1)
        fnodes, _ = CELL_FACES[TET4][local_face]
        for v in fnodes:
            rest = np.prod(
                lam[..., [w for w in fnodes if w != v]], axis=-1
            )
            g += rest[..., None] * _TET_DLAM[v]
        return g
    lam = np.stack([1.0 - x - y, x, y], axis=-1)
    if local_face in (0, 1):
        sign = -1.0 if local_face == 0 else 1.0
        ridge = 0.5 * (1.0 + sign * z)
        prod = lam[..., 0] * lam[..., 1] * lam[..., 2]
        for v in range(3):
            rest = np.prod(lam[..., [w for w in range(3) if w != v]], axis=-1)
            g[..., 0] += ridge * rest * _TRI_DLAM[v, 0]
            g[..., 1] += ridge * rest * _TRI_DLAM[v, 1]
        g[..., 2] = 0.5 * sign * prod
        return g
    a, b = _WEDGE_QUAD_PAIRS[local_face]
    zf = 1.0 - z**2
    g[..., 0] = zf * (_TRI_DLAM[a, 0] * lam[..., b] + lam[..., a] * _TRI_DLAM[b, 0])
    g[..., 1] = zf * (_TRI_DLAM[a, 1] * lam[..., b] + lam[..., a] * _TRI_DLAM[b, 1])
    g[..., 2] = -2.0 * z * lam[..., a] * lam[..., b]
    return g


# ---------------------------------------------------------------------------
# Enrichment data


@dataclass
class SideEnrichment:
    """One bubble: its parent cell, dof id, and precomputed cell integrals."""

    cell: int
    local_face: int
    dof: int
    trace_weight: float
    stiffness: np.ndarray
    coupling: np.ndarray
    load: np.ndarray


@dataclass
class EnrichedFace:
    face_id: int
    minus: SideEnrichment
    plus: SideEnrichment


@dataclass
class Enrichment:
    faces: list[EnrichedFace]
    n_dofs: int
    # bulk coupling between two bubbles sharing a parent cell (faults meeting
    # at a junction).  These terms enter residuals but stay out of the
    # face-block Jacobian so it remains invertible face by face.
    cross: list[tuple[int, int, np.ndarray]] = field(default_factory=list)


def _physical_bubble_gradients(mesh, cell, local_face, rule):
    """Physical bubble gradient and measures at the rule's points."""
    coords = mesh.cell_coords(cell)
    dn = fem.shape_gradients(cell.kind, rule.points)
    jac = np.einsum("na,qnb->qab", coords, dn)
    inv = np.linalg.inv(jac)
    dvol = np.linalg.det(jac) * rule.weights
    db = bubble_gradients(cell.kind, local_face, rule.points)
    grad = np.einsum("qb,qba->qa", db, inv)
    nodal = np.einsum("qnb,qba->qna", dn, inv)
    return grad, nodal, dvol


def bubble_trace_weight(mesh, cell, local_face: int) -> float:
    """Integral of the bubble over its own face."""
    _, fkind = CELL_FACES[cell.kind][local_face]
    rule = fem.face_quadrature(fkind)
    xi, dxi = fem.face_parametrization(cell.kind, local_face, rule.points)
    dn = fem.shape_gradients(cell.kind, xi)
    coords = mesh.cell_coords(cell)
    jac = np.einsum("na,qnb->qab", coords, dn)
    tang = np.einsum("qab,qbs->qas", jac, dxi)
    ds = np.linalg.norm(np.cross(tang[:, :, 0], tang[:, :, 1]), axis=1)
    vals = bubble_values(cell.kind, local_face, xi)
    return float((ds * rule.weights) @ vals)


def _side_enrichment(mesh, cell, local_face, dof, material, sigma_voigt):
    rule = fem.bubble_quadrature(cell.kind)
    grad_b, grad_n, dvol = _physical_bubble_gradients(mesh, cell, local_face, rule)
    bb = fem.strain_displacement(grad_b[:, None, :])  # (q, 6, 3)
    bn = fem.strain_displacement(grad_n)  # (q, 6, 3n)
    c = fem.elasticity_tensor(material)
    cb = np.einsum("ij,qjk->qik", c, bb)
    stiffness = np.einsum("qji,qjk,q->ik", bb, cb, dvol)
    coupling = np.einsum("qji,jk,qkl,q->il", bb, c, bn, dvol)
    if sigma_voigt is None:
        load = np.zeros(3)
    else:
        load = np.einsum("qji,j,q->i", bb, sigma_voigt, dvol)
    return SideEnrichment(
        cell=cell.id,
        local_face=local_face,
        dof=dof,
        trace_weight=bubble_trace_weight(mesh, cell, local_face),
        stiffness=stiffness,
        coupling=coupling,
        load=load,
    )


def build_enrichment(mesh, cell_materials, cell_eigenstress=None) -> Enrichment:
    """One bubble per side of every fault face.

    cell_materials maps cell id to ElasticMaterial; cell_eigenstress is an
    optional (n_cells, 6) Voigt array of initial stresses, which the bubbles
    feel exactly like the nodal dofs do.
    """
    faces = []
    for face in mesh.fault_faces:
        sides = []
        for cid, lf, dof in (
            (face.minus_cell, face.minus_local_face, 2 * face.id),
            (face.plus_cell, face.plus_local_face, 2 * face.id + 1),
        ):
            cell = mesh.cells[cid]
            sig = None if cell_eigenstress is None else cell_eigenstress[cid]
            sides.append(
                _side_enrichment(mesh, cell, lf, dof, cell_materials[cid], sig)
            )
        faces.append(EnrichedFace(face.id, sides[0], sides[1]))

    by_cell: dict[int, list[SideEnrichment]] = {}
    for ef in faces:
        for side in (ef.minus, ef.plus):
            by_cell.setdefault(side.cell, []).append(side)
    cross = []
    for cid, sides in by_cell.items():
        if len(sides) < 2:
            continue
        cell = mesh.cells[cid]
        rule = fem.bubble_quadrature(cell.kind)
        c = fem.elasticity_tensor(cell_materials[cid])
        mats = {}
        for side in sides:
            grad_b, _, dvol = _physical_bubble_gradients(
                mesh, cell, side.local_face, rule
            )
            mats[side.dof] = (fem.strain_displacement(grad_b[:, None, :]), dvol)
        for i, si in enumerate(sides):
            for sj in sides[i + 1 :]:
                bi, dvol = mats[si.dof]
                bj, _ = mats[sj.dof]
                k = np.einsum("qji,jk,qkl,q->il", bi, c, bj, dvol)
                cross.append((si.dof, sj.dof, k))
    return Enrichment(faces=faces, n_dofs=2 * len(mesh.fault_faces), cross=cross)


def attach_to_jump_operators(
    ops: list[contact.JumpOperator], enrichment: Enrichment
) -> None:
    by_face = {ef.face_id: ef for ef in enrichment.faces}
    for op in ops:
        ef = by_face[op.face_id]
        op.minus_bubble = ef.minus.dof
        op.plus_bubble = ef.plus.dof
        op.minus_bubble_weight = ef.minus.trace_weight
        op.plus_bubble_weight = ef.plus.trace_weight


# ---------------------------------------------------------------------------
# Per-face elimination


@dataclass
class FaceBlock:
    """The rows and columns a face's two bubbles couple to.

    dofs are global displacement dof indices (the union of both parent
    cells' nodal dofs); a_ub is (len(dofs), 6), a_bu (6, len(dofs)),
    a_bb (6, 6) and r_b (6,) in the face's bubble order (minus xyz,
    plus xyz).
    """

    face_id: int
    dofs: np.ndarray
    a_ub: np.ndarray
    a_bu: np.ndarray
    a_bb: np.ndarray
    r_b: np.ndarray


def eliminate_face(block: FaceBlock) -> tuple[np.ndarray, np.ndarray]:
    """Schur complement updates (to subtract) for one face block.

    Returns (k_update, r_update): dense (n, n) and (n,) arrays over
    block.dofs such that the condensed system is A - k_update and
    r - r_update scattered over those dofs.
    """
    s = np.linalg.solve(block.a_bb.T, block.a_ub.T).T  # a_ub @ inv(a_bb)
    return s @ block.a_bu, s @ block.r_b


def recover_bubbles(block: FaceBlock, du_face: np.ndarray) -> np.ndarray:
    """Bubble increment (6,) given the displacement increment on block.dofs."""
    return -np.linalg.solve(block.a_bb, block.r_b + block.a_bu @ du_face)


# ---------------------------------------------------------------------------
# Stability estimate


def estimate_infsup(mesh, enriched: bool) -> float:
    """Discrete inf-sup constant of the face-averaged jump coupling.

    The displacement space is measured in the scaled broken H1 norm
    (mass / diam^2 + semi-norm, no boundary conditions); face tractions in
    an area- and size-weighted L2 norm standing in for H^{-1/2}.  Returns
    the square root of the smallest eigenvalue of the Schur pencil.
    """
    import scipy.linalg
    import scipy.sparse
    import scipy.sparse.linalg

    ops = contact.build_jump_operators(mesh)
    n_nodes = mesh.n_nodes
    n_bub = 2 * len(mesh.fault_faces) if enriched else 0
    n_scalar = n_nodes + n_bub

    rows, cols, m_vals, l_vals = [], [], [], []
    by_kind: dict[str, list] = {}
    for cell in mesh.cells:
        by_kind.setdefault(cell.kind, []).append(cell)
    for kind, cells in by_kind.items():
        coords = np.stack([mesh.cell_coords(c) for c in cells])
        mass = fem.element_mass_batch(kind, coords)
        lap = fem.element_laplacian_batch(kind, coords)
        for c, cell in enumerate(cells):
            ids = np.array(cell.node_ids)
            rr, cc = np.meshgrid(ids, ids, indexing="ij")
            rows.append(rr.ravel())
            cols.append(cc.ravel())
            m_vals.append(mass[c].ravel())
            l_vals.append(lap[c].ravel())

    sides = []
    if enriched:
        for face in mesh.fault_faces:
            sides.append((face.minus_cell, face.minus_local_face, 2 * face.id))
            sides.append((face.plus_cell, face.plus_local_face, 2 * face.id + 1))
        for cid, lf, dof in sides:
            cell = mesh.cells[cid]
            rule = fem.bubble_quadrature(cell.kind)
            grad_b, grad_n, dvol = _physical_bubble_gradients(mesh, cell, lf, rule)
            vals_b = bubble_values(cell.kind, lf, rule.points)
            vals_n = fem.shape_values(cell.kind, rule.points)
            gdof = n_nodes + dof
            ids = np.array(cell.node_ids)
            # bubble-bubble and bubble-node blocks of mass and semi-norm
            rows.append([gdof])
            cols.append([gdof])
            m_vals.append([np.dot(vals_b**2, dvol)])
            l_vals.append([np.einsum("qa,qa,q->", grad_b, grad_b, dvol)])
            mb = np.einsum("q,qn,q->n", vals_b, vals_n, dvol)
            lb = np.einsum("qa,qna,q->n", grad_b, grad_n, dvol)
            rows.extend([np.full(len(ids), gdof), ids])
            cols.extend([ids, np.full(len(ids), gdof)])
            m_vals.extend([mb, mb])
            l_vals.extend([lb, lb])
        # bubbles sharing a cell overlap
        by_cell: dict[int, list] = {}
        for cid, lf, dof in sides:
            by_cell.setdefault(cid, []).append((lf, dof))
        for cid, pair in by_cell.items():
            if len(pair) < 2:
                continue
            cell = mesh.cells[cid]
            rule = fem.bubble_quadrature(cell.kind)
            for i, (lfi, di) in enumerate(pair):
                gi, _, dvol = _physical_bubble_gradients(mesh, cell, lfi, rule)
                vi = bubble_values(cell.kind, lfi, rule.points)
                for lfj, dj in pair[i + 1 :]:
                    gj, _, _ = _physical_bubble_gradients(mesh, cell, lfj, rule)
                    vj = bubble_values(cell.kind, lfj, rule.points)
                    mij = np.dot(vi * vj, dvol)
                    lij = np.einsum("qa,qa,q->", gi, gj, dvol)
                    rows.extend([[n_nodes + di], [n_nodes + dj]])
                    cols.extend([[n_nodes + dj], [n_nodes + di]])
                    m_vals.extend([[mij], [mij]])
                    l_vals.extend([[lij], [lij]])

    rows = np.concatenate([np.asarray(r, dtype=int) for r in rows])
    cols = np.concatenate([np.asarray(c, dtype=int) for c in cols])
    mass_s = scipy.sparse.coo_matrix(
        (np.concatenate(m_vals), (rows, cols)), shape=(n_scalar, n_scalar)
    ).tocsr()
    lap_s = scipy.sparse.coo_matrix(
        (np.concatenate(l_vals), (rows, cols)), shape=(n_scalar, n_scalar)
    ).tocsr()
    diam = float(np.linalg.norm(mesh.nodes.max(axis=0) - mesh.nodes.min(axis=0)))
    x_s = mass_s / diam**2 + lap_s
    x = scipy.sparse.kron(x_s, scipy.sparse.eye(3), format="csc")

    if enriched:
        enr_weights = {
            (face.id, 0): bubble_trace_weight(
                mesh, mesh.cells[face.minus_cell], face.minus_local_face
            )
            for face in mesh.fault_faces
        }
        enr_weights.update(
            {
                (face.id, 1): bubble_trace_weight(
                    mesh, mesh.cells[face.plus_cell], face.plus_local_face
                )
                for face in mesh.fault_faces
            }
        )

    nf = len(ops)
    b = np.zeros((3 * nf, 3 * n_scalar))
    for k, op in enumerate(ops):
        for sgn, nodes in ((1.0, op.plus_nodes), (-1.0, op.minus_nodes)):
            for w, nid in zip(op.weights, nodes):
                b[3 * k : 3 * k + 3, 3 * nid : 3 * nid + 3] += sgn * w * op.frame
        if enriched:
            wm = enr_weights[(op.face_id, 0)]
            wp = enr_weights[(op.face_id, 1)]
            jm = 3 * (n_nodes + 2 * op.face_id)
            jp = 3 * (n_nodes + 2 * op.face_id + 1)
            b[3 * k : 3 * k + 3, jm : jm + 3] -= wm * op.frame
            b[3 * k : 3 * k + 3, jp : jp + 3] += wp * op.frame
    lu = scipy.sparse.linalg.splu(x)
    xinv_bt = lu.solve(b.T)
    g = b @ xinv_bt
    # traction norm: h-weighted area per face
    mt = np.repeat([np.sqrt(op.area) * op.area for op in ops], 3)
    scaled = g / np.sqrt(mt)[:, None] / np.sqrt(mt)[None, :]
    eigs = scipy.linalg.eigvalsh(scaled)
    return float(np.sqrt(max(eigs[0], 0.0)))
