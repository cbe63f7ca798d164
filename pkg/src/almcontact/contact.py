"""Augmented Lagrangian traction updates for frictional fault faces.

Tractions are stored in the face frame as (t_N, t_T1, t_T2); t_N is
negative in compression.  The displacement jump is plus minus minus, so a
positive normal jump means separation.  Each outer iteration maps a face's
previous multiplier and its current averaged jump to a new traction and a
contact state:

    open    the augmented normal traction is tensile; the face is free
    stick   the tangential trial lies inside the friction disc
    slip    the trial is radially projected onto the disc boundary

The disc radius is cohesion - tan_theta * t_N, evaluated either with the
freshly augmented normal traction (the default) or with the previous
multiplier (symmetric=True), which decouples the tangential update from the
normal jump and symmetrizes the consistent tangent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fem

OPEN = "open"
STICK = "stick"
SLIP = "slip"

# below this trial magnitude (relative to the tangential penalty) the slip
# direction is numerically undefined and the face is treated as sticking
ZERO_SLIP_REL = 1e-14


@dataclass(frozen=True)
class FrictionParams:
    cohesion: float
    tan_theta: float


@dataclass(frozen=True)
class PenaltyParams:
    normal: float
    tangential: float


@dataclass
class FaceState:
    """Multiplier and committed slip carried by one fault face."""

    traction: np.ndarray = field(default_factory=lambda: np.zeros(3))
    slip_prev: np.ndarray = field(default_factory=lambda: np.zeros(2))
    label: str = STICK


@dataclass
class FaceUpdate:
    """Result of one multiplier update on one face."""

    traction: np.ndarray
    label: str
    tau_max: float
    trial_normal: float
    trial_tangential: np.ndarray


def negative_part(x):
    return np.minimum(x, 0.0)


def ball_projection(t: np.ndarray, radius: float) -> np.ndarray:
    """Radial projection of a 2-vector onto the disc of the given radius."""
    if radius <= 0.0:
        return np.zeros_like(t)
    norm = np.linalg.norm(t)
    if norm <= radius:
        return t.copy()
    return (radius / norm) * t


def friction_bound(friction: FrictionParams, normal_traction: float) -> float:
    return friction.cohesion - friction.tan_theta * normal_traction


def update_face(
    state: FaceState,
    friction: FrictionParams,
    penalties: PenaltyParams,
    gap: np.ndarray,
    symmetric: bool = False,
) -> FaceUpdate:
    """Augment the face multiplier with the current averaged jump.

    gap holds the frame components (g_N, g_T1, g_T2) of the averaged jump.
    The tangential trial augments with the slip increment over the current
    time step, g_T - slip_prev.
    """
    gap = np.asarray(gap, dtype=float)
    trial_n = float(state.traction[0] + penalties.normal * gap[0])
    trial_t = state.traction[1:] + penalties.tangential * (gap[1:] - state.slip_prev)
    if trial_n > 0.0:
        return FaceUpdate(np.zeros(3), OPEN, 0.0, trial_n, trial_t)
    bound_n = float(state.traction[0]) if symmetric else trial_n
    tau = friction_bound(friction, bound_n)
    norm = float(np.linalg.norm(trial_t))
    if norm <= tau or norm <= ZERO_SLIP_REL * penalties.tangential:
        label = STICK
        t_t = trial_t.copy()
    else:
        label = SLIP
        t_t = (tau / norm) * trial_t
    traction = np.concatenate([[trial_n], t_t])
    return FaceUpdate(traction, label, tau, trial_n, trial_t)


def consistent_tangent(
    update: FaceUpdate,
    friction: FrictionParams,
    penalties: PenaltyParams,
    symmetric: bool = False,
) -> np.ndarray:
    """Derivative of the updated traction with respect to the averaged jump.

    Frame components, 3x3.  Open faces contribute nothing; stick faces are
    diagonal penalties; slip faces couple the tangential direction to the
    normal jump through the shrinking friction disc (dropped when
    symmetric) and lose the radial tangential stiffness.
    """
    d = np.zeros((3, 3))
    if update.label == OPEN:
        return d
    d[0, 0] = penalties.normal
    if update.label == STICK:
        d[1, 1] = d[2, 2] = penalties.tangential
        return d
    norm = float(np.linalg.norm(update.trial_tangential))
    m = update.trial_tangential / norm
    if not symmetric:
        d[1:, 0] = -penalties.normal * friction.tan_theta * m
    d[1:, 1:] = (penalties.tangential * update.tau_max / norm) * (
        np.eye(2) - np.outer(m, m)
    )
    return d


# ---------------------------------------------------------------------------
# Jump operators


@dataclass
class JumpOperator:
    """Integrates the displacement jump over one fault face.

    weights[i] is the integral of the i-th nodal trace over the face; the
    minus and plus node lists are aligned so the same weights serve both
    sides.  Bubble dofs are attached by the enrichment layer; -1 means the
    side is unenriched.
    """

    face_id: int
    area: float
    frame: np.ndarray
    minus_nodes: np.ndarray
    plus_nodes: np.ndarray
    weights: np.ndarray
    minus_bubble: int = -1
    plus_bubble: int = -1
    minus_bubble_weight: float = 0.0
    plus_bubble_weight: float = 0.0


def build_jump_operators(mesh) -> list[JumpOperator]:
    ops = []
    for face in mesh.fault_faces:
        cell = mesh.cells[face.minus_cell]
        rule = fem.face_quadrature(face.kind)
        xi, dxi = fem.face_parametrization(
            cell.kind, face.minus_local_face, rule.points
        )
        dn = fem.shape_gradients(cell.kind, xi)
        coords = mesh.cell_coords(cell)
        jac = np.einsum("na,qnb->qab", coords, dn)
        tang = np.einsum("qab,qbs->qas", jac, dxi)
        ds = np.linalg.norm(np.cross(tang[:, :, 0], tang[:, :, 1]), axis=1)
        shp = fem.shape_values(cell.kind, xi)
        lnodes, _ = fem.CELL_FACES[cell.kind][face.minus_local_face]
        w = (ds * rule.weights) @ shp[:, list(lnodes)]
        ops.append(
            JumpOperator(
                face_id=face.id,
                area=face.area,
                frame=face.frame.as_matrix(),
                minus_nodes=np.array(face.minus_node_ids, dtype=int),
                plus_nodes=np.array(face.plus_node_ids, dtype=int),
                weights=w,
            )
        )
    return ops


def face_jump_integral(
    op: JumpOperator, u: np.ndarray, ub: np.ndarray | None = None
) -> np.ndarray:
    """Integral of (u_plus - u_minus) over the face, global components."""
    jump = op.weights @ (u[op.plus_nodes] - u[op.minus_nodes])
    if ub is not None and op.minus_bubble >= 0:
        jump = jump + (
            op.plus_bubble_weight * ub[op.plus_bubble]
            - op.minus_bubble_weight * ub[op.minus_bubble]
        )
    return jump


def average_jump(
    op: JumpOperator, u: np.ndarray, ub: np.ndarray | None = None
) -> np.ndarray:
    """Face-averaged jump in frame components (g_N, g_T1, g_T2)."""
    return op.frame @ (face_jump_integral(op, u, ub) / op.area)
