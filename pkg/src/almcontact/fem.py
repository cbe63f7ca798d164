"""Reference elements, quadrature rules, and small-strain elasticity kernels.

Supported cell kinds are 8-node hexahedra ("hex8"), 4-node tetrahedra
("tet4") and 6-node wedges ("wedge6").  Reference domains:

* hex8:   [-1, 1]^3, trilinear shape functions, VTK corner ordering.
* tet4:   unit simplex x, y, z >= 0, x + y + z <= 1.
* wedge6: triangle barycentric coordinates in (x1, x2) crossed with
  x3 in [-1, 1]; nodes 0-2 on the bottom triangle, 3-5 on top.

Stress and strain use Voigt order (xx, yy, zz, yz, xz, xy) with engineering
shear.  All quadrature weights carry the reference measure, so summing them
returns the reference volume (or reference face area for face rules).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HEX8 = "hex8"
TET4 = "tet4"
WEDGE6 = "wedge6"

CELL_KINDS = (HEX8, TET4, WEDGE6)

# Reference corner coordinates, one row per node.
REF_NODES = {
    HEX8: np.array(
        [
            [-1.0, -1.0, -1.0],
            [1.0, -1.0, -1.0],
            [1.0, 1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
            [1.0, -1.0, 1.0],
            [1.0, 1.0, 1.0],
            [-1.0, 1.0, 1.0],
        ]
    ),
    TET4: np.array(
        [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ]
    ),
    WEDGE6: np.array(
        [
            [0.0, 0.0, -1.0],
            [1.0, 0.0, -1.0],
            [0.0, 1.0, -1.0],
            [0.0, 0.0, 1.0],
            [1.0, 0.0, 1.0],
            [0.0, 1.0, 1.0],
        ]
    ),
}

QUAD = "quad"
TRI = "tri"

# Local faces as (node tuple, face kind).  Node order is counterclockwise
# seen from outside the cell, so face tangents t_s x t_t point outward.
CELL_FACES = {
    HEX8: (
        ((0, 4, 7, 3), QUAD),
        ((1, 2, 6, 5), QUAD),
        ((0, 1, 5, 4), QUAD),
        ((3, 7, 6, 2), QUAD),
        ((0, 3, 2, 1), QUAD),
        ((4, 5, 6, 7), QUAD),
    ),
    TET4: (
        ((1, 2, 3), TRI),
        ((0, 3, 2), TRI),
        ((0, 1, 3), TRI),
        ((0, 2, 1), TRI),
    ),
    WEDGE6: (
        ((0, 2, 1), TRI),
        ((3, 4, 5), TRI),
        ((0, 1, 4, 3), QUAD),
        ((1, 2, 5, 4), QUAD),
        ((2, 0, 3, 5), QUAD),
    ),
}

NODES_PER_CELL = {HEX8: 8, TET4: 4, WEDGE6: 6}


def _check_kind(kind: str) -> None:
    if kind not in CELL_KINDS:
        raise ValueError(f"unknown cell kind {kind!r}; expected one of {CELL_KINDS}")


def shape_values(kind: str, points: np.ndarray) -> np.ndarray:
    """Shape function values at reference points.

    points has shape (..., 3); the result has shape (..., n_nodes).
    """
    _check_kind(kind)
    p = np.asarray(points, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    if kind == HEX8:
        sx = REF_NODES[HEX8][:, 0]
        sy = REF_NODES[HEX8][:, 1]
        sz = REF_NODES[HEX8][:, 2]
        return 0.125 * (
            (1.0 + x[..., None] * sx)
            * (1.0 + y[..., None] * sy)
            * (1.0 + z[..., None] * sz)
        )
    if kind == TET4:
        return np.stack([1.0 - x - y - z, x, y, z], axis=-1)
    lam = np.stack([1.0 - x - y, x, y], axis=-1)
    lo = 0.5 * (1.0 - z)[..., None] * lam
    hi = 0.5 * (1.0 + z)[..., None] * lam
    return np.concatenate([lo, hi], axis=-1)


def shape_gradients(kind: str, points: np.ndarray) -> np.ndarray:
    """Shape function gradients wrt reference coordinates, shape (..., n, 3)."""
    _check_kind(kind)
    p = np.asarray(points, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    if kind == HEX8:
        sx = REF_NODES[HEX8][:, 0]
        sy = REF_NODES[HEX8][:, 1]
        sz = REF_NODES[HEX8][:, 2]
        fx = 1.0 + x[..., None] * sx
        fy = 1.0 + y[..., None] * sy
        fz = 1.0 + z[..., None] * sz
        g = np.empty(p.shape[:-1] + (8, 3))
        g[..., 0] = 0.125 * sx * fy * fz
        g[..., 1] = 0.125 * fx * sy * fz
        g[..., 2] = 0.125 * fx * fy * sz
        return g
    if kind == TET4:
        g = np.array(
            [
                [-1.0, -1.0, -1.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
            ]
        )
        return np.broadcast_to(g, p.shape[:-1] + (4, 3)).copy()
    lam = np.stack([1.0 - x - y, x, y], axis=-1)
    dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    g = np.empty(p.shape[:-1] + (6, 3))
    for i in range(3):
        g[..., i, 0] = 0.5 * (1.0 - z) * dlam[i, 0]
        g[..., i, 1] = 0.5 * (1.0 - z) * dlam[i, 1]
        g[..., i, 2] = -0.5 * lam[..., i]
        g[..., 3 + i, 0] = 0.5 * (1.0 + z) * dlam[i, 0]
        g[..., 3 + i, 1] = 0.5 * (1.0 + z) * dlam[i, 1]
        g[..., 3 + i, 2] = 0.5 * lam[..., i]
    return g


# ---------------------------------------------------------------------------
# Quadrature


@dataclass(frozen=True)
class QuadratureRule:
    """Points (n, dim) and weights (n,) on a reference domain."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))


def _gauss1d(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n == 2:
        a = 1.0 / np.sqrt(3.0)
        return np.array([-a, a]), np.array([1.0, 1.0])
    if n == 3:
        a = np.sqrt(3.0 / 5.0)
        return np.array([-a, 0.0, a]), np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def _tensor3(n: int) -> QuadratureRule:
    x, w = _gauss1d(n)
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    W = np.einsum("i,j,k->ijk", w, w, w)
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    return QuadratureRule(pts, W.ravel())


# Keast 14-point degree-5 tetrahedron rule; weights sum to 1 and are scaled
# by the reference volume 1/6 below.
_KEAST14 = (
    (0.0927352503108912, 0.0734930431163619),
    (0.3108859192633005, 0.1126879257180162),
)
_KEAST14_PAIR = (0.0455037041256497, 0.0425460207770812)


def _tet14() -> QuadratureRule:
    pts = []
    wts = []
    for a, w in _KEAST14:
        b = 1.0 - 3.0 * a
        # barycentric permutations of (a, a, a, b); first three are (x, y, z)
        for bary in (
            (a, a, a, b),
            (a, a, b, a),
            (a, b, a, a),
            (b, a, a, a),
        ):
            pts.append(bary[1:])
            wts.append(w)
    a, w = _KEAST14_PAIR
    b = 0.5 - a
    for bary in (
        (a, a, b, b),
        (a, b, a, b),
        (a, b, b, a),
        (b, a, a, b),
        (b, a, b, a),
        (b, b, a, a),
    ):
        pts.append(bary[1:])
        wts.append(w)
    pts = np.array(pts)
    wts = np.array(wts) / 6.0
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0]))
    return QuadratureRule(pts[order], wts[order])


def _tet4pt() -> QuadratureRule:
    a = 0.5854101966249685
    b = 0.1381966011250105
    pts = np.array(
        [
            [b, b, b],
            [a, b, b],
            [b, a, b],
            [b, b, a],
        ]
    )
    w = np.full(4, 0.25 / 6.0)
    return QuadratureRule(pts, w)


def _tri_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric triangle rules; returned weights sum to 1."""
    if degree <= 3:
        # classic 4-point degree-3 rule (one negative weight)
        pts = np.array(
            [
                [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
                [0.6, 0.2, 0.2],
                [0.2, 0.6, 0.2],
                [0.2, 0.2, 0.6],
            ]
        )
        wts = np.array([-27.0 / 48.0, 25.0 / 48.0, 25.0 / 48.0, 25.0 / 48.0])
        return pts, wts
    if degree <= 4:
        orbits = (
            (0.445948490915965, 0.223381589678011),
            (0.091576213509771, 0.109951743655322),
        )
        pts = []
        wts = []
        for a, w in orbits:
            b = 1.0 - 2.0 * a
            pts += [(a, a, b), (a, b, a), (b, a, a)]
            wts += [w, w, w]
        return np.array(pts), np.array(wts)
    # Dunavant degree-6, 12 points
    pts = []
    wts = []
    for a, w in (
        (0.063089014491502, 0.050844906370207),
        (0.249286745170910, 0.116786275726379),
    ):
        b = 1.0 - 2.0 * a
        pts += [(a, a, b), (a, b, a), (b, a, a)]
        wts += [w, w, w]
    a, b = 0.310352451033785, 0.053145049844816
    c = 1.0 - a - b
    w = 0.082851075618374
    for t in ((a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)):
        pts.append(t)
        wts.append(w)
    return np.array(pts), np.array(wts)


def _tri_to_xy(bary: np.ndarray) -> np.ndarray:
    # barycentric (l1, l2, l3) -> reference (x, y) with l1 = 1 - x - y
    return np.stack([bary[:, 1], bary[:, 2]], axis=1)


def _wedge_rule(tri_degree: int, nline: int) -> QuadratureRule:
    bpts, bwts = _tri_rule(tri_degree)
    xy = _tri_to_xy(bpts)
    zx, zw = _gauss1d(nline)
    pts = []
    wts = []
    for (px, py), wt in zip(xy, bwts):
        for z, wz in zip(zx, zw):
            pts.append((px, py, z))
            wts.append(0.5 * wt * wz)
    return QuadratureRule(np.array(pts), np.array(wts))


def standard_quadrature(kind: str) -> QuadratureRule:
    """Volume rule integrating the linear-elasticity stiffness exactly on
    affine cells: 2x2x2 Gauss (hex), 4-point degree-2 (tet), 6-point
    triangle x 2-point line (wedge)."""
    _check_kind(kind)
    if kind == HEX8:
        return _tensor3(2)
    if kind == TET4:
        return _tet4pt()
    return _wedge_rule(4, 2)


def bubble_quadrature(kind: str) -> QuadratureRule:
    """Volume rule exact for bubble-bearing integrands (through products of
    two bubble gradients): 3x3x3 Gauss (hex), 14-point degree-5 (tet),
    12-point degree-6 triangle x 3-point line (wedge)."""
    _check_kind(kind)
    if kind == HEX8:
        return _tensor3(3)
    if kind == TET4:
        return _tet14()
    return _wedge_rule(6, 3)


def face_quadrature(face_kind: str) -> QuadratureRule:
    """Rule on the reference face: 2x2 Gauss on [-1,1]^2 for quads, the
    4-point degree-3 rule for triangles.  Exact for every face-trace
    integrand used here (nodal traces and single bubble traces)."""
    if face_kind == QUAD:
        x, w = _gauss1d(2)
        X, Y = np.meshgrid(x, x, indexing="ij")
        W = np.outer(w, w)
        return QuadratureRule(
            np.stack([X.ravel(), Y.ravel()], axis=1), W.ravel()
        )
    if face_kind == TRI:
        bpts, bwts = _tri_rule(3)
        return QuadratureRule(_tri_to_xy(bpts), 0.5 * bwts)
    raise ValueError(f"unknown face kind {face_kind!r}")


def face_parametrization(
    kind: str, local_face: int, sq: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Map reference-face points into the cell's reference space.

    sq has shape (q, 2).  Returns (xi, dxi) where xi is (q, 3) and dxi is
    (q, 3, 2), the tangent map d(xi)/d(s,t).  The parametrization follows the
    face's node order, so the physical tangents t_s x t_t point outward.
    """
    _check_kind(kind)
    fnodes, fkind = CELL_FACES[kind][local_face]
    corners = REF_NODES[kind][list(fnodes)]
    s, t = sq[:, 0], sq[:, 1]
    if fkind == QUAD:
        n = 0.25 * np.stack(
            [
                (1 - s) * (1 - t),
                (1 + s) * (1 - t),
                (1 + s) * (1 + t),
                (1 - s) * (1 + t),
            ],
            axis=1,
        )
        dn_ds = 0.25 * np.stack(
            [-(1 - t), (1 - t), (1 + t), -(1 + t)], axis=1
        )
        dn_dt = 0.25 * np.stack(
            [-(1 - s), -(1 + s), (1 + s), (1 - s)], axis=1
        )
    else:
        n = np.stack([1 - s - t, s, t], axis=1)
        dn_ds = np.broadcast_to(np.array([-1.0, 1.0, 0.0]), n.shape)
        dn_dt = np.broadcast_to(np.array([-1.0, 0.0, 1.0]), n.shape)
    xi = n @ corners
    dxi = np.stack([dn_ds @ corners, dn_dt @ corners], axis=2)
    return xi, dxi


# ---------------------------------------------------------------------------
# Elasticity


@dataclass(frozen=True)
class ElasticMaterial:
    """Isotropic linear elastic material."""

    youngs_modulus: float
    poisson_ratio: float

    @property
    def lame_lambda(self) -> float:
        e, nu = self.youngs_modulus, self.poisson_ratio
        return e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))

    @property
    def shear_modulus(self) -> float:
        return self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))


def elasticity_tensor(material: ElasticMaterial) -> np.ndarray:
    """6x6 stiffness in Voigt order (xx, yy, zz, yz, xz, xy), engineering
    shear convention."""
    lam = material.lame_lambda
    mu = material.shear_modulus
    c = np.zeros((6, 6))
    c[:3, :3] = lam
    c[np.arange(3), np.arange(3)] += 2.0 * mu
    c[np.arange(3, 6), np.arange(3, 6)] = mu
    return c


def jacobians(
    kind: str, coords: np.ndarray, rule: QuadratureRule
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Geometry maps for a batch of cells at the rule's points.

    coords has shape (ncell, n_nodes, 3).  Returns (grad_x, detj, dvol):
    physical shape gradients (ncell, q, n, 3), Jacobian determinants
    (ncell, q) and quadrature measures detj * w (ncell, q).
    """
    coords = np.asarray(coords, dtype=float)
    dn = shape_gradients(kind, rule.points)  # (q, n, 3)
    # J[c, q, i, j] = d x_i / d xi_j
    jac = np.einsum("cna,qnb->cqab", coords, dn)
    detj = np.linalg.det(jac)
    inv = np.linalg.inv(jac)
    grad = np.einsum("qnb,cqba->cqna", dn, inv)
    dvol = detj * rule.weights
    return grad, detj, dvol


def strain_displacement(grad: np.ndarray) -> np.ndarray:
    """Voigt B matrices from physical shape gradients.

    grad has shape (..., n, 3); the result has shape (..., 6, 3n) with dof
    order (node0 x, node0 y, node0 z, node1 x, ...).
    """
    lead = grad.shape[:-2]
    n = grad.shape[-2]
    b = np.zeros(lead + (6, 3 * n))
    gx, gy, gz = grad[..., 0], grad[..., 1], grad[..., 2]
    idx = np.arange(n)
    b[..., 0, 3 * idx] = gx
    b[..., 1, 3 * idx + 1] = gy
    b[..., 2, 3 * idx + 2] = gz
    b[..., 3, 3 * idx + 1] = gz
    b[..., 3, 3 * idx + 2] = gy
    b[..., 4, 3 * idx] = gz
    b[..., 4, 3 * idx + 2] = gx
    b[..., 5, 3 * idx] = gy
    b[..., 5, 3 * idx + 1] = gx
    return b


def element_stiffness_batch(
    kind: str,
    coords: np.ndarray,
    cmat: np.ndarray,
    rule: QuadratureRule | None = None,
) -> np.ndarray:
    """Stiffness matrices int B^T C B dV for a batch of cells.

    cmat is either a single 6x6 or a (ncell, 6, 6) batch.  Raises on
    non-positive Jacobians, naming the first offending batch index.
    """
    if rule is None:
        rule = standard_quadrature(kind)
    grad, detj, dvol = jacobians(kind, coords, rule)
    if np.any(detj <= 0.0):
        bad = int(np.argwhere(np.any(detj <= 0.0, axis=1))[0, 0])
        raise ValueError(f"non-positive Jacobian in cell batch index {bad}")
    b = strain_displacement(grad)
    cmat = np.asarray(cmat, dtype=float)
    if cmat.ndim == 2:
        cb = np.einsum("ij,cqjk->cqik", cmat, b)
    else:
        cb = np.einsum("cij,cqjk->cqik", cmat, b)
    return np.einsum("cqji,cqjk,cq->cik", b, cb, dvol)


def element_stiffness(
    kind: str,
    coords: np.ndarray,
    material: ElasticMaterial,
    rule: QuadratureRule | None = None,
) -> np.ndarray:
    """Single-cell stiffness (3n, 3n)."""
    c = elasticity_tensor(material)
    return element_stiffness_batch(kind, coords[None], c, rule)[0]


def element_eigenstress_load_batch(
    kind: str,
    coords: np.ndarray,
    sigma_voigt: np.ndarray,
    rule: QuadratureRule | None = None,
) -> np.ndarray:
    """int B^T sigma dV for a constant cell stress (Voigt, engineering
    pairing: the shear entries of sigma appear once against engineering
    shear strains).  sigma_voigt is (6,) or (ncell, 6); result (ncell, 3n).
    """
    if rule is None:
        rule = standard_quadrature(kind)
    grad, _, dvol = jacobians(kind, coords, rule)
    b = strain_displacement(grad)
    sigma_voigt = np.asarray(sigma_voigt, dtype=float)
    if sigma_voigt.ndim == 1:
        return np.einsum("cqji,j,cq->ci", b, sigma_voigt, dvol)
    return np.einsum("cqji,cj,cq->ci", b, sigma_voigt, dvol)


def stress_to_voigt(sigma: np.ndarray) -> np.ndarray:
    """Symmetric 3x3 stress to Voigt (xx, yy, zz, yz, xz, xy)."""
    s = np.asarray(sigma, dtype=float)
    return np.array([s[0, 0], s[1, 1], s[2, 2], s[1, 2], s[0, 2], s[0, 1]])


def cell_volumes(kind: str, coords: np.ndarray) -> np.ndarray:
    """Volumes of a batch of cells."""
    rule = standard_quadrature(kind)
    _, detj, dvol = jacobians(kind, coords, rule)
    if np.any(detj <= 0.0):
        bad = int(np.argwhere(np.any(detj <= 0.0, axis=1))[0, 0])
        raise ValueError(f"non-positive Jacobian in cell batch index {bad}")
    return dvol.sum(axis=1)


def element_mass_batch(
    kind: str, coords: np.ndarray, rule: QuadratureRule | None = None
) -> np.ndarray:
    """Scalar mass matrices int N_i N_j dV, shape (ncell, n, n)."""
    if rule is None:
        rule = standard_quadrature(kind)
    n = shape_values(kind, rule.points)
    _, _, dvol = jacobians(kind, coords, rule)
    return np.einsum("qi,qj,cq->cij", n, n, dvol)


def element_laplacian_batch(
    kind: str, coords: np.ndarray, rule: QuadratureRule | None = None
) -> np.ndarray:
    """Scalar stiffness matrices int grad N_i . grad N_j dV."""
    if rule is None:
        rule = standard_quadrature(kind)
    grad, _, dvol = jacobians(kind, coords, rule)
    return np.einsum("cqia,cqja,cq->cij", grad, grad, dvol)
