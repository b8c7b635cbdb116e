"""Leg kinematics round trips, Jacobians, torque maps, workspace checks."""

import math

import numpy as np
import pytest

from jumpkit import leg_kinematics as lk
from jumpkit.robot_model import PlanarState


def _random_q(rng, n, params):
    knee_lo, knee_hi = params.joint_limits[2]
    return np.stack(
        [
            rng.uniform(-0.8, 0.8, n),
            rng.uniform(-1.2, 1.2, n),
            rng.uniform(knee_lo + 0.05, knee_hi - 0.05, n),
        ],
        axis=-1,
    )


def test_rotation_about_axis_properties():
    rng = np.random.default_rng(0)
    for _ in range(20):
        axis = rng.normal(size=3)
        ang = rng.uniform(-math.pi, math.pi)
        R = lk.rotation_about_axis(axis, ang)
        assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0)
        assert np.allclose(R @ axis, axis)  # axis is fixed
    Rz = lk.rotation_about_axis([0, 0, 1], math.pi / 2)
    assert np.allclose(Rz @ [1, 0, 0], [0, 1, 0], atol=1e-12)


def test_rotations_about_axis_matches_scalar():
    rng = np.random.default_rng(1)
    axis = rng.normal(size=3)
    angles = rng.uniform(-3, 3, 7)
    batch = lk.rotations_about_axis(axis, angles)
    for R, a in zip(batch, angles):
        assert np.allclose(R, lk.rotation_about_axis(axis, a), atol=1e-14)


def test_fk_zero_pose_hangs_straight_down(mc):
    for side in (1.0, -1.0):
        p = lk.fk(np.zeros(3), side, mc)
        l0, l1, l2 = mc.leg_lengths
        assert np.allclose(p, [0.0, side * l0, -(l1 + l2)])


def test_fk_ik_roundtrip(mc):
    rng = np.random.default_rng(2)
    l1, l2 = mc.leg_lengths[1], mc.leg_lengths[2]
    q = _random_q(rng, 500, mc)
    n_branch = 0
    for i in range(q.shape[0]):
        side = 1.0 if i % 2 == 0 else -1.0
        p = lk.fk(q[i], side, mc)
        q_back = lk.ik(p, side, mc)
        # position round trip holds everywhere
        assert np.allclose(lk.fk(q_back, side, mc), p, atol=1e-9)
        # joint angles match on the working branch (knee below the hip line)
        zp = -(l1 * math.cos(q[i, 1]) + l2 * math.cos(q[i, 1] + q[i, 2]))
        if zp < -0.01:
            n_branch += 1
            assert np.allclose(q_back, q[i], atol=1e-9)
    assert n_branch > 300


def test_ik_unreachable_reports_deficit(mc):
    l0, l1, l2 = mc.leg_lengths
    with pytest.raises(lk.UnreachableError) as err:
        lk.ik([0.0, l0, -(l1 + l2) - 0.05], 1.0, mc)
    assert err.value.deficit == pytest.approx(0.05, abs=1e-12)
    with pytest.raises(lk.UnreachableError):
        lk.ik([0.0, 0.0, 0.0], 1.0, mc)  # inside the abduction cylinder


def test_jacobian_matches_central_differences(mc):
    rng = np.random.default_rng(3)
    q = _random_q(rng, 50, mc)
    h = 1e-6
    for i in range(q.shape[0]):
        side = 1.0 if i % 2 == 0 else -1.0
        J = lk.jacobian(q[i], side, mc)
        J_fd = np.zeros((3, 3))
        for j in range(3):
            dq = np.zeros(3)
            dq[j] = h
            J_fd[:, j] = (lk.fk(q[i] + dq, side, mc) - lk.fk(q[i] - dq, side, mc)) / (
                2 * h
            )
        assert np.allclose(J, J_fd, atol=1e-6)


def test_joint_torque_balances_virtual_work(mc):
    rng = np.random.default_rng(4)
    for _ in range(20):
        q = _random_q(rng, 1, mc)[0]
        f = rng.normal(size=3) * 30.0
        tau = lk.joint_torque(q, 1.0, f, mc)
        # virtual work: for any joint rate, tau . qd + f . (J qd) = 0
        qd = rng.normal(size=3)
        J = lk.jacobian(q, 1.0, mc)
        assert tau @ qd + f @ (J @ qd) == pytest.approx(0.0, abs=1e-9)


def test_impedance_torque_zero_error_carries_feedforward(mc):
    q = np.array([0.0, 0.4, 1.2])
    p = lk.fk(q, 1.0, mc)
    f_ff = np.array([0.0, 0.0, 30.0])
    tau = lk.impedance_torque(q, np.zeros(3), 1.0, p, np.zeros(3), f_ff, mc)
    assert np.allclose(tau, -lk.jacobian(q, 1.0, mc).T @ f_ff)


def test_impedance_torque_restores_displaced_foot(mc):
    q = np.array([0.0, 0.4, 1.2])
    p = lk.fk(q, 1.0, mc)
    # desired foot 2 cm below current: commanded force pushes the foot down
    p_des = p + np.array([0.0, 0.0, -0.02])
    tau = lk.impedance_torque(q, np.zeros(3), 1.0, p_des, np.zeros(3), np.zeros(3), mc)
    J = lk.jacobian(q, 1.0, mc)
    f_cmd = np.linalg.solve(J.T, tau)
    assert f_cmd[2] < 0.0
    assert abs(f_cmd[2]) == pytest.approx(lk.KP_LANDING[2, 2] * 0.02, rel=1e-9)


def test_landing_feedforward_splits_weight(mc):
    f = lk.landing_feedforward(mc, 4)
    assert np.allclose(f, [0, 0, mc.mass * mc.gravity / 4])
    with pytest.raises(ValueError):
        lk.landing_feedforward(mc, 0)


def test_batched_kinematics_match_scalar(mc):
    rng = np.random.default_rng(5)
    q = _random_q(rng, 40, mc).reshape(10, 4, 3)
    sides = mc.leg_sides
    p = lk.fk_batch(q, sides, mc)
    J = lk.jacobian_batch(q, sides, mc)
    knees = lk.knee_batch(q, sides, mc)
    for i in range(10):
        for leg in range(4):
            assert np.allclose(p[i, leg], lk.fk(q[i, leg], sides[leg], mc), atol=1e-12)
            assert np.allclose(
                J[i, leg], lk.jacobian(q[i, leg], sides[leg], mc), atol=1e-12
            )
            assert np.allclose(
                knees[i, leg], lk.knee_position(q[i, leg], sides[leg], mc), atol=1e-12
            )


def test_ik_batch_roundtrip_and_deficit(mc):
    rng = np.random.default_rng(6)
    q = _random_q(rng, 40, mc).reshape(10, 4, 3)
    sides = mc.leg_sides
    p = lk.fk_batch(q, sides, mc)
    q_back, ok, deficit = lk.ik_batch(p, sides, mc)
    assert ok.all()
    assert np.allclose(deficit, 0.0)
    assert np.allclose(lk.fk_batch(q_back, sides, mc), p, atol=1e-9)
    # push one target out of reach: flagged, clamped to the boundary
    p_far = p.copy()
    p_far[0, 0] *= 10.0
    q2, ok2, d2 = lk.ik_batch(p_far, sides, mc)
    assert not ok2[0, 0] and ok2[1:].all()
    assert d2[0, 0] > 0.0
    assert np.isfinite(q2).all()


def test_c_space_contains_nominal_and_impossible(mc):
    feet = mc.default_stance_feet()
    feet[:, 2] = 0.0  # feet on the ground, CoM above them
    geom = lk.StanceGeometry(
        feet_world=feet, j_axis=np.array([1.0, 0, 0]), plane_normal=np.array([0, 1.0, 0])
    )
    ok = lk.c_space_contains(PlanarState(x=0, z=mc.stance_height, theta=0, vx=0, vz=0, omega=0), geom, mc)
    assert ok.inside
    assert all(leg.reachable and leg.knee_ok for leg in ok.legs)
    too_high = lk.c_space_contains(
        PlanarState(x=0, z=0.6, theta=0, vx=0, vz=0, omega=0), geom, mc
    )
    assert not too_high.inside
    assert any(not leg.reachable for leg in too_high.legs)


def test_humanoid_fk_ik_roundtrip(hum):
    rng = np.random.default_rng(7)
    qh = rng.uniform(-1.2, 0.4, 300)
    qk = rng.uniform(0.1, 2.4, 300)
    q = np.stack([qh, qk], axis=-1)
    p = np.stack([lk.humanoid_fk(a, b, hum) for a, b in q])
    q_back, ok, deficit = lk.humanoid_ik_batch(p, hum)
    assert ok.all()
    assert np.allclose(deficit, 0.0)
    assert np.allclose(q_back, q, atol=1e-9)


def test_humanoid_jacobian_matches_central_differences(hum):
    rng = np.random.default_rng(8)
    q = np.stack([rng.uniform(-1.0, 0.4, 30), rng.uniform(0.1, 2.2, 30)], axis=-1)
    J = lk.humanoid_jacobian_batch(q, hum)
    h = 1e-6
    for i in range(q.shape[0]):
        for j in range(2):
            dq = np.zeros(2)
            dq[j] = h
            col = (
                lk.humanoid_fk(*(q[i] + dq), hum) - lk.humanoid_fk(*(q[i] - dq), hum)
            ) / (2 * h)
            assert np.allclose(J[i, :, j], col, atol=1e-6)


def test_humanoid_joint_torque_force_spares_ankle(hum):
    q = np.array([[-0.5, 1.0]])
    f = np.array([[10.0, 200.0]])
    tau = lk.humanoid_joint_torque_batch(q, f, np.array([0.0]), hum)
    assert tau.shape == (1, 3)
    # contact force acts on the ankle axis: zero ankle torque without a moment
    assert tau[0, 2] == 0.0
    J = lk.humanoid_jacobian_batch(q, hum)[0]
    assert np.allclose(tau[0, :2], -J.T @ f[0])
    # a pure contact moment loads every pitch joint equally
    tau_m = lk.humanoid_joint_torque_batch(q, np.zeros((1, 2)), np.array([5.0]), hum)
    assert np.allclose(tau_m[0], [-5.0, -5.0, -5.0])
