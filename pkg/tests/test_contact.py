"""Multiplier updates, contact classification, consistent tangents, jumps."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from almcontact import contact as ct
from almcontact import mesh as msh

FR = ct.FrictionParams
PEN = ct.PenaltyParams


def make_state(traction, slip_prev=(0.0, 0.0)):
    return ct.FaceState(
        traction=np.asarray(traction, dtype=float),
        slip_prev=np.asarray(slip_prev, dtype=float),
    )


def test_negative_part():
    assert ct.negative_part(-3.0) == -3.0
    assert ct.negative_part(2.0) == 0.0
    assert np.array_equal(ct.negative_part(np.array([-1.0, 0.0, 5.0])),
                          [-1.0, 0.0, 0.0])


def test_ball_projection():
    t = np.array([3.0, 4.0])
    assert np.allclose(ct.ball_projection(t, 10.0), t)
    assert np.allclose(ct.ball_projection(t, 5.0), t)  # on the boundary
    assert np.allclose(ct.ball_projection(t, 1.0), [0.6, 0.8])
    assert np.array_equal(ct.ball_projection(t, 0.0), [0.0, 0.0])
    assert np.array_equal(ct.ball_projection(t, -1.0), [0.0, 0.0])
    assert np.array_equal(ct.ball_projection(np.zeros(2), 1.0), [0.0, 0.0])


def test_normal_update_values():
    pen = PEN(2.0, 2.0)
    fr = FR(0.0, 0.0)
    up = ct.update_face(make_state([-1.0, 0.0, 0.0]), fr, pen, [-0.5, 0.0, 0.0])
    assert up.traction[0] == -2.0
    assert up.label != ct.OPEN
    up = ct.update_face(make_state([-1.0, 0.0, 0.0]), fr, pen, [0.6, 0.0, 0.0])
    assert up.label == ct.OPEN
    assert np.array_equal(up.traction, np.zeros(3))


def test_open_face_carries_nothing():
    up = ct.update_face(
        make_state([-1.0, 3.0, -2.0]), FR(5.0, 0.5), PEN(4.0, 4.0),
        [0.5, 0.1, -0.2],
    )
    assert up.label == ct.OPEN
    assert np.array_equal(up.traction, np.zeros(3))


def test_stick_keeps_trial():
    fr, pen = FR(0.0, 0.5), PEN(1.0, 1.0)
    up = ct.update_face(make_state([-2.0, 0.5, 0.0]), fr, pen, np.zeros(3))
    assert up.label == ct.STICK
    assert np.allclose(up.traction, [-2.0, 0.5, 0.0])


def test_cone_boundary_sticks():
    # the bound is tau = 0.5 * 2 = 1; a trial of exactly 1 does not slip
    fr, pen = FR(0.0, 0.5), PEN(1.0, 1.0)
    up = ct.update_face(make_state([-2.0, 1.0, 0.0]), fr, pen, np.zeros(3))
    assert up.label == ct.STICK
    up = ct.update_face(make_state([-2.0, 1.0 + 1e-9, 0.0]), fr, pen, np.zeros(3))
    assert up.label == ct.SLIP


def test_slip_projects_radially():
    fr, pen = FR(0.25, 0.5), PEN(1.0, 1.0)
    up = ct.update_face(make_state([-2.0, 3.0, -4.0]), fr, pen, np.zeros(3))
    assert up.label == ct.SLIP
    tau = 0.25 + 0.5 * 2.0
    tt = up.traction[1:]
    assert np.isclose(np.linalg.norm(tt), tau)
    assert np.isclose(3.0 * tt[1] - (-4.0) * tt[0], 0.0)
    assert np.dot(tt, [3.0, -4.0]) > 0.0


def test_symmetric_bound_uses_previous_multiplier():
    fr, pen = FR(0.0, 1.0), PEN(10.0, 10.0)
    state = make_state([-1.0, 5.0, 0.0])
    gap = np.array([-0.2, 0.0, 0.0])  # augments the normal to -3
    fresh = ct.update_face(state, fr, pen, gap)
    frozen = ct.update_face(state, fr, pen, gap, symmetric=True)
    assert fresh.label == frozen.label == ct.SLIP
    assert np.isclose(np.linalg.norm(fresh.traction[1:]), 3.0)
    assert np.isclose(np.linalg.norm(frozen.traction[1:]), 1.0)


def test_slip_increment_uses_committed_slip():
    fr, pen = FR(100.0, 0.0), PEN(2.0, 2.0)
    state = make_state([-1.0, 0.5, 0.0], slip_prev=(0.3, -0.1))
    up = ct.update_face(state, fr, pen, [0.0, 0.5, 0.1])
    # trial_t = (0.5, 0) + 2 * ((0.5, 0.1) - (0.3, -0.1))
    assert np.allclose(up.traction[1:], [0.9, 0.4])


def test_frozen_slip_tangent():
    # trial (5, 0) against bound 1 with eps_t = 2: tangential block diag(0, 0.4)
    fr, pen = FR(1.0, 0.0), PEN(3.0, 2.0)
    up = ct.update_face(make_state([-1.0, 5.0, 0.0]), fr, pen, np.zeros(3))
    assert up.label == ct.SLIP
    d = ct.consistent_tangent(up, fr, pen)
    expect = np.zeros((3, 3))
    expect[0, 0] = 3.0
    expect[2, 2] = 0.4
    assert np.allclose(d, expect)
    # with friction the slip direction couples to the normal jump
    fr = FR(0.75, 0.25)
    up = ct.update_face(make_state([-1.0, 5.0, 0.0]), fr, pen, np.zeros(3))
    assert up.label == ct.SLIP and np.isclose(up.tau_max, 1.0)
    d = ct.consistent_tangent(up, fr, pen)
    assert np.allclose(d[1:, 0], [-3.0 * 0.25, 0.0])
    d_sym = ct.consistent_tangent(up, fr, pen, symmetric=True)
    assert np.allclose(d_sym[1:, 0], 0.0)
    assert np.allclose(d_sym[1:, 1:], d[1:, 1:])
    assert np.allclose(d_sym, d_sym.T)


def _fd_tangent(state, fr, pen, gap, symmetric):
    d = np.zeros((3, 3))
    for j in range(3):
        h = 1e-7 * (1.0 + abs(gap[j]))
        gp, gm = gap.copy(), gap.copy()
        gp[j] += h
        gm[j] -= h
        tp = ct.update_face(state, fr, pen, gp, symmetric).traction
        tm = ct.update_face(state, fr, pen, gm, symmetric).traction
        d[:, j] = (tp - tm) / (2.0 * h)
    return d


@pytest.mark.parametrize(
    "traction,gap,fr,symmetric,label",
    [
        ((-2.0, 0.3, -0.2), (-0.1, 0.05, 0.02), FR(0.5, 0.6), False, ct.STICK),
        ((-1.0, 2.0, -1.0), (-0.2, 0.3, 0.1), FR(0.2, 0.5), False, ct.SLIP),
        ((-1.0, 2.0, -1.0), (-0.2, 0.3, 0.1), FR(0.2, 0.5), True, ct.SLIP),
        ((-3.0, 1.0, 2.0), (0.9, 0.3, 0.1), FR(0.2, 0.5), False, ct.OPEN),
    ],
)
def test_tangent_matches_finite_difference(traction, gap, fr, symmetric, label):
    pen = PEN(4.0, 3.0)
    state = make_state(traction, slip_prev=(0.01, -0.02))
    gap = np.asarray(gap, dtype=float)
    up = ct.update_face(state, fr, pen, gap, symmetric)
    assert up.label == label
    d = ct.consistent_tangent(up, fr, pen, symmetric)
    fd = _fd_tangent(state, fr, pen, gap, symmetric)
    scale = max(np.abs(fd).max(), 1.0)
    assert np.abs(d - fd).max() < 1e-6 * scale


@given(
    tx=st.floats(-10, 10),
    ty=st.floats(-10, 10),
    radius=st.floats(-1, 10),
)
def test_projection_never_leaves_disc(tx, ty, radius):
    p = ct.ball_projection(np.array([tx, ty]), radius)
    assert np.linalg.norm(p) <= max(radius, 0.0) * (1 + 1e-12) + 1e-300


@settings(max_examples=300)
@given(
    tn=st.floats(-5, 1),
    t1=st.floats(-5, 5),
    t2=st.floats(-5, 5),
    gn=st.floats(-1, 1),
    g1=st.floats(-1, 1),
    g2=st.floats(-1, 1),
    cohesion=st.floats(0, 3),
    tan_theta=st.floats(0, 1),
    symmetric=st.booleans(),
)
def test_update_invariants(tn, t1, t2, gn, g1, g2, cohesion, tan_theta, symmetric):
    fr = FR(cohesion, tan_theta)
    pen = PEN(2.0, 1.5)
    state = make_state([min(tn, 0.0), t1, t2])
    up = ct.update_face(state, fr, pen, [gn, g1, g2], symmetric)
    t = up.traction
    assert t[0] <= 0.0
    bound = up.tau_max if up.label != ct.OPEN else 0.0
    slack = 1e-12 * (1.0 + abs(bound)) + ct.ZERO_SLIP_REL * pen.tangential
    assert np.linalg.norm(t[1:]) <= bound + slack
    if up.label == ct.SLIP:
        tt = up.trial_tangential
        assert abs(tt[0] * t[2] - tt[1] * t[1]) <= 1e-9 * (
            1.0 + np.linalg.norm(tt) ** 2
        )
    if up.label == ct.OPEN:
        assert np.array_equal(t, np.zeros(3))


# ---------------------------------------------------------------------------
# Jump operators


def two_hex_ops():
    m = msh.build_structured_hex_grid(
        extents=(1.0, 1.0, 1.0),
        divisions=(2, 1, 1),
        faults=[msh.FaultPlaneSpec(axis=0, value=0.5)],
    )
    return m, ct.build_jump_operators(m)


def test_quad_trace_weights():
    m, ops = two_hex_ops()
    assert len(ops) == 1
    op = ops[0]
    assert np.allclose(op.weights, 0.25)  # unit square, four corners
    assert np.isclose(op.weights.sum(), op.area)


def test_tri_trace_weights():
    m = msh.build_structured_tet_grid(
        extents=(2.0, 2.0, 1.0),
        divisions=(2, 2, 1),
        faults=[msh.FaultPlaneSpec(axis=0, value=1.0)],
    )
    for op in ct.build_jump_operators(m):
        assert np.allclose(op.weights, op.area / 3.0)


def test_rigid_jump_lands_in_frame():
    m, ops = two_hex_ops()
    op = ops[0]
    d = np.array([0.3, -0.2, 0.7])
    u = np.zeros((m.n_nodes, 3))
    u[op.plus_nodes] = d
    assert np.allclose(ct.face_jump_integral(op, u), d * op.area)
    # frame rows are (normal, m1, m2) = (x, y, z) here
    assert np.allclose(ct.average_jump(op, u), d)


def test_linear_jump_integrates_exactly():
    m, ops = two_hex_ops()
    op = ops[0]
    u = np.zeros((m.n_nodes, 3))
    # plus side moves by (0, 2y, 3z): face averages (0, 1, 1.5)
    u[op.plus_nodes, 1] = 2.0 * m.nodes[op.plus_nodes, 1]
    u[op.plus_nodes, 2] = 3.0 * m.nodes[op.plus_nodes, 2]
    assert np.allclose(ct.average_jump(op, u), [0.0, 1.0, 1.5])


def test_bubble_contribution():
    m, ops = two_hex_ops()
    op = ops[0]
    op.minus_bubble, op.plus_bubble = 0, 1
    op.minus_bubble_weight = op.plus_bubble_weight = 0.5
    u = np.zeros((m.n_nodes, 3))
    ub = np.array([[0.0, 0.0, 0.0], [0.2, 0.0, -0.4]])
    jump = ct.face_jump_integral(op, u, ub)
    assert np.allclose(jump, [0.1, 0.0, -0.2])
    assert np.allclose(ct.average_jump(op, u, ub), [0.1, 0.0, -0.2])
