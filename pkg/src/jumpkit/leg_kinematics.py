"""Leg kinematics: forward/inverse kinematics, Jacobians, torque maps.

Quadruped legs have three joints (abduction about the body x axis, hip
pitch, knee flexion).  Zero pose is the leg hanging straight down with
the foot at hip + (0, side * L0, -(L1 + L2)); knee flexion q2 is kept in
[0, pi] (single branch), so the interior knee angle is pi - q2.

The humanoid sagittal leg is a planar hip-knee chain with an ankle at
the contact; both legs are assumed symmetric and share the load.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .robot_model import PlanarState, RobotParams

KP_LANDING = np.diag([500.0, 500.0, 350.0])
KD_LANDING = np.diag([14.0, 14.0, 14.0])

Z_MIN_JOINT = 0.05


class UnreachableError(ValueError):
    """Foot target outside the leg workspace.

    Attributes:
        deficit: metric distance by which the target misses the
            reachable annulus, m.
    """

    def __init__(self, msg: str, deficit: float):
        super().__init__(msg)
        self.deficit = float(deficit)


def rotation_about_axis(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a unit axis."""
    k = np.asarray(axis, float)
    k = k / np.linalg.norm(k)
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + math.sin(angle) * K + (1.0 - math.cos(angle)) * (K @ K)


def rotations_about_axis(axis, angles: np.ndarray) -> np.ndarray:
    """Batched Rodrigues rotations, shape (n, 3, 3)."""
    k = np.asarray(axis, float)
    k = k / np.linalg.norm(k)
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    a = np.asarray(angles, float)[:, None, None]
    return np.eye(3) + np.sin(a) * K + (1.0 - np.cos(a)) * (K @ K)


def fk(q, side: float, params: RobotParams) -> np.ndarray:
    """Foot position relative to the hip mount, body frame.

    Args:
        q: (3,) joint angles (abduction, hip pitch, knee flexion).
        side: +1 for a left leg, -1 for a right leg.
        params: robot parameters (quadruped leg lengths are used).
    """
    q = np.asarray(q, float)
    l0 = side * params.leg_lengths[0]
    l1, l2 = params.leg_lengths[1], params.leg_lengths[2]
    s1, c1 = math.sin(q[1]), math.cos(q[1])
    s12, c12 = math.sin(q[1] + q[2]), math.cos(q[1] + q[2])
    xp = -(l1 * s1 + l2 * s12)
    zp = -(l1 * c1 + l2 * c12)
    s0, c0 = math.sin(q[0]), math.cos(q[0])
    return np.array([xp, l0 * c0 - zp * s0, l0 * s0 + zp * c0])


def knee_position(q, side: float, params: RobotParams) -> np.ndarray:
    """Knee joint position relative to the hip mount, body frame."""
    q = np.asarray(q, float)
    l0 = side * params.leg_lengths[0]
    l1 = params.leg_lengths[1]
    xp = -l1 * math.sin(q[1])
    zp = -l1 * math.cos(q[1])
    s0, c0 = math.sin(q[0]), math.cos(q[0])
    return np.array([xp, l0 * c0 - zp * s0, l0 * s0 + zp * c0])


def ik(p, side: float, params: RobotParams) -> np.ndarray:
    """Joint angles reaching body-frame foot position p (hip-relative).

    Raises UnreachableError (with the metric deficit) when p lies
    outside the leg workspace.  The returned knee flexion is in [0, pi].
    """
    p = np.asarray(p, float)
    l0 = side * params.leg_lengths[0]
    l1, l2 = params.leg_lengths[1], params.leg_lengths[2]
    rho_sq = p[1] ** 2 + p[2] ** 2
    if rho_sq < l0 * l0:
        raise UnreachableError(
            "target inside the abduction offset cylinder",
            deficit=abs(l0) - math.sqrt(rho_sq),
        )
    zp = -math.sqrt(rho_sq - l0 * l0)
    q0 = math.atan2(p[2], p[1]) - math.atan2(zp, l0)
    d_sq = p[0] ** 2 + zp * zp
    d = math.sqrt(d_sq)
    if d > l1 + l2:
        raise UnreachableError("target beyond leg reach", deficit=d - (l1 + l2))
    if d < abs(l1 - l2):
        raise UnreachableError("target inside minimum leg fold", deficit=abs(l1 - l2) - d)
    cos_q2 = (d_sq - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    q2 = math.acos(min(1.0, max(-1.0, cos_q2)))
    q1 = math.atan2(-p[0], -zp) - math.atan2(l2 * math.sin(q2), l1 + l2 * math.cos(q2))
    q0 = math.atan2(math.sin(q0), math.cos(q0))
    q1 = math.atan2(math.sin(q1), math.cos(q1))
    return np.array([q0, q1, q2])


def jacobian(q, side: float, params: RobotParams) -> np.ndarray:
    """3x3 Jacobian of fk with respect to the joint angles."""
    q = np.asarray(q, float)
    l0 = side * params.leg_lengths[0]
    l1, l2 = params.leg_lengths[1], params.leg_lengths[2]
    s1, c1 = math.sin(q[1]), math.cos(q[1])
    s12, c12 = math.sin(q[1] + q[2]), math.cos(q[1] + q[2])
    s0, c0 = math.sin(q[0]), math.cos(q[0])
    xp = -(l1 * s1 + l2 * s12)
    zp = -(l1 * c1 + l2 * c12)
    y = l0 * c0 - zp * s0
    z = l0 * s0 + zp * c0
    dzp_dq1 = -xp
    dxp_dq1 = zp
    dxp_dq2 = -l2 * c12
    dzp_dq2 = l2 * s12
    return np.array(
        [
            [0.0, dxp_dq1, dxp_dq2],
            [-z, -s0 * dzp_dq1, -s0 * dzp_dq2],
            [y, c0 * dzp_dq1, c0 * dzp_dq2],
        ]
    )


def joint_torque(q, side: float, foot_force, params: RobotParams) -> np.ndarray:
    """Joint torques balancing a ground reaction force at the foot.

    foot_force is the force the ground applies to the robot (body
    frame); the actuators must produce tau = J^T (-foot_force).
    """
    J = jacobian(q, side, params)
    return -J.T @ np.asarray(foot_force, float)


def impedance_torque(
    q,
    qd,
    side: float,
    p_des,
    v_des,
    f_feedforward,
    params: RobotParams,
    kp: np.ndarray | None = None,
    kd: np.ndarray | None = None,
) -> np.ndarray:
    """Cartesian impedance landing law mapped to joint torques.

    tau = J^T [Kp (p_des - p) + Kd (v_des - v)] - J^T f_feedforward,
    with p the current foot position (hip-relative body frame) and
    v = J qd the current foot velocity.
    """
    kp = KP_LANDING if kp is None else np.asarray(kp, float)
    kd = KD_LANDING if kd is None else np.asarray(kd, float)
    q = np.asarray(q, float)
    qd = np.asarray(qd, float)
    J = jacobian(q, side, params)
    p = fk(q, side, params)
    v = J @ qd
    f_cmd = kp @ (np.asarray(p_des, float) - p) + kd @ (np.asarray(v_des, float) - v)
    return J.T @ f_cmd - J.T @ np.asarray(f_feedforward, float)


def landing_feedforward(params: RobotParams, n_stance_feet: int) -> np.ndarray:
    """Default feedforward GRF per stance foot: weight split evenly."""
    if n_stance_feet <= 0:
        raise ValueError("need at least one stance foot")
    return np.array([0.0, 0.0, params.mass * params.gravity / n_stance_feet])


# ---------------------------------------------------------------------------
# Batched kinematics over (n_samples, n_legs) grids.


def ik_batch(p_rel: np.ndarray, sides: np.ndarray, params: RobotParams):
    """Vectorized IK over (..., legs, 3) hip-relative targets.

    Returns (q, ok, deficit): joint angles with out-of-range inputs
    clamped to the workspace boundary, a reachability mask, and the
    metric deficit (0 where reachable).
    """
    p = np.asarray(p_rel, float)
    l0 = sides * params.leg_lengths[0]
    l1, l2 = params.leg_lengths[1], params.leg_lengths[2]
    rho_sq = p[..., 1] ** 2 + p[..., 2] ** 2
    rho = np.sqrt(rho_sq)
    lat_deficit = np.maximum(0.0, np.abs(l0) - rho)
    zp = -np.sqrt(np.maximum(rho_sq - l0 * l0, 0.0))
    q0 = np.arctan2(p[..., 2], p[..., 1]) - np.arctan2(zp, l0)
    d = np.hypot(p[..., 0], zp)
    far = np.maximum(0.0, d - (l1 + l2))
    near = np.maximum(0.0, abs(l1 - l2) - d)
    deficit = lat_deficit + far + near
    ok = deficit == 0.0
    cos_q2 = np.clip((d * d - l1 * l1 - l2 * l2) / (2.0 * l1 * l2), -1.0, 1.0)
    q2 = np.arccos(cos_q2)
    q1 = np.arctan2(-p[..., 0], -zp) - np.arctan2(l2 * np.sin(q2), l1 + l2 * np.cos(q2))
    q0 = np.arctan2(np.sin(q0), np.cos(q0))
    q1 = np.arctan2(np.sin(q1), np.cos(q1))
    return np.stack([q0, q1, q2], axis=-1), ok, deficit


def fk_batch(q: np.ndarray, sides: np.ndarray, params: RobotParams) -> np.ndarray:
    """Vectorized fk over (..., legs, 3) joint angles."""
    q = np.asarray(q, float)
    l0 = sides * params.leg_lengths[0]
    l1, l2 = params.leg_lengths[1], params.leg_lengths[2]
    s1, c1 = np.sin(q[..., 1]), np.cos(q[..., 1])
    s12, c12 = np.sin(q[..., 1] + q[..., 2]), np.cos(q[..., 1] + q[..., 2])
    xp = -(l1 * s1 + l2 * s12)
    zp = -(l1 * c1 + l2 * c12)
    s0, c0 = np.sin(q[..., 0]), np.cos(q[..., 0])
    return np.stack([xp, l0 * c0 - zp * s0, l0 * s0 + zp * c0], axis=-1)


def knee_batch(q: np.ndarray, sides: np.ndarray, params: RobotParams) -> np.ndarray:
    """Vectorized knee positions over (..., legs, 3) joint angles."""
    q = np.asarray(q, float)
    l0 = sides * params.leg_lengths[0]
    l1 = params.leg_lengths[1]
    xp = -l1 * np.sin(q[..., 1])
    zp = -l1 * np.cos(q[..., 1])
    s0, c0 = np.sin(q[..., 0]), np.cos(q[..., 0])
    return np.stack([xp, l0 * c0 - zp * s0, l0 * s0 + zp * c0], axis=-1)


def jacobian_batch(q: np.ndarray, sides: np.ndarray, params: RobotParams) -> np.ndarray:
    """Vectorized Jacobians, shape (..., legs, 3, 3)."""
    q = np.asarray(q, float)
    l0 = sides * params.leg_lengths[0]
    l1, l2 = params.leg_lengths[1], params.leg_lengths[2]
    s1, c1 = np.sin(q[..., 1]), np.cos(q[..., 1])
    s12, c12 = np.sin(q[..., 1] + q[..., 2]), np.cos(q[..., 1] + q[..., 2])
    s0, c0 = np.sin(q[..., 0]), np.cos(q[..., 0])
    xp = -(l1 * s1 + l2 * s12)
    zp = -(l1 * c1 + l2 * c12)
    y = l0 * c0 - zp * s0
    z = l0 * s0 + zp * c0
    zero = np.zeros_like(xp)
    row_x = np.stack([zero, zp, -l2 * c12], axis=-1)
    row_y = np.stack([-z, -s0 * (-xp), -s0 * (l2 * s12)], axis=-1)
    row_z = np.stack([y, c0 * (-xp), c0 * (l2 * s12)], axis=-1)
    return np.stack([row_x, row_y, row_z], axis=-2)


# ---------------------------------------------------------------------------
# Configuration-space membership.


@dataclass(frozen=True)
class StanceGeometry:
    """World-frame stance context for mapping planar states to legs.

    feet_world: (n_legs, 3) fixed foot positions; j_axis: horizontal
    unit vector of the jump plane; plane_normal: z x j_axis.  The planar
    origin projects to the world origin.
    """

    feet_world: np.ndarray
    j_axis: np.ndarray
    plane_normal: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "feet_world", np.asarray(self.feet_world, float))
        object.__setattr__(self, "j_axis", np.asarray(self.j_axis, float))
        object.__setattr__(self, "plane_normal", np.asarray(self.plane_normal, float))

    def com_world(self, x: float, z: float) -> np.ndarray:
        return self.j_axis * x + np.array([0.0, 0.0, z])


@dataclass
class LegCheck:
    reachable: bool
    knee_ok: bool
    clearance_ok: bool
    q: np.ndarray | None
    detail: str = ""


@dataclass
class CSpaceCheck:
    inside: bool
    legs: list


def c_space_contains(
    state: PlanarState, stance: StanceGeometry, params: RobotParams
) -> CSpaceCheck:
    """Check a planar body pose against the kinematic configuration space.

    A pose is inside when every leg reaches its (world-fixed) foot, the
    interior knee angle stays within the joint limits, and the hip and
    knee joints clear the ground by Z_MIN_JOINT.
    """
    com = stance.com_world(state.x, state.z)
    R = rotation_about_axis(stance.plane_normal, state.theta)
    sides = params.leg_sides
    knee_lo, knee_hi = params.joint_limits[2]
    legs = []
    inside = True
    for i in range(stance.feet_world.shape[0]):
        hip_w = com + R @ params.hip_offsets[i]
        p_rel = R.T @ (stance.feet_world[i] - com) - params.hip_offsets[i]
        try:
            q = ik(p_rel, sides[i], params)
        except UnreachableError as err:
            legs.append(LegCheck(False, False, False, None, str(err)))
            inside = False
            continue
        knee_ok = knee_lo <= q[2] <= knee_hi
        knee_w = com + R @ (params.hip_offsets[i] + knee_position(q, sides[i], params))
        clearance_ok = hip_w[2] > Z_MIN_JOINT and knee_w[2] > Z_MIN_JOINT
        detail = ""
        if not knee_ok:
            detail = f"knee flexion {q[2]:.3f} rad outside limits"
        elif not clearance_ok:
            detail = f"joint height below {Z_MIN_JOINT} m"
        legs.append(LegCheck(True, knee_ok, clearance_ok, q, detail))
        inside = inside and knee_ok and clearance_ok
    return CSpaceCheck(inside, legs)


# ---------------------------------------------------------------------------
# Humanoid sagittal leg (planar hip-knee chain, ankle at the contact).


def humanoid_fk(q_hip: float, q_knee: float, params: RobotParams) -> np.ndarray:
    """Ankle position relative to the hip in the sagittal plane (x, z)."""
    l1, l2 = params.leg_lengths[0], params.leg_lengths[1]
    s1, c1 = math.sin(q_hip), math.cos(q_hip)
    s12, c12 = math.sin(q_hip + q_knee), math.cos(q_hip + q_knee)
    return np.array([-(l1 * s1 + l2 * s12), -(l1 * c1 + l2 * c12)])


def humanoid_ik_batch(p_rel: np.ndarray, params: RobotParams):
    """Vectorized sagittal IK: (..., 2) hip-relative ankle -> (q_hip, q_knee)."""
    p = np.asarray(p_rel, float)
    l1, l2 = params.leg_lengths[0], params.leg_lengths[1]
    d = np.hypot(p[..., 0], p[..., 1])
    far = np.maximum(0.0, d - (l1 + l2))
    near = np.maximum(0.0, abs(l1 - l2) - d)
    deficit = far + near
    ok = deficit == 0.0
    cos_qk = np.clip((d * d - l1 * l1 - l2 * l2) / (2.0 * l1 * l2), -1.0, 1.0)
    qk = np.arccos(cos_qk)
    qh = np.arctan2(-p[..., 0], -p[..., 1]) - np.arctan2(l2 * np.sin(qk), l1 + l2 * np.cos(qk))
    qh = np.arctan2(np.sin(qh), np.cos(qh))
    return np.stack([qh, qk], axis=-1), ok, deficit


def humanoid_jacobian_batch(q: np.ndarray, params: RobotParams) -> np.ndarray:
    """Vectorized 2x2 Jacobians of humanoid_fk, shape (..., 2, 2)."""
    q = np.asarray(q, float)
    l1, l2 = params.leg_lengths[0], params.leg_lengths[1]
    s1, c1 = np.sin(q[..., 0]), np.cos(q[..., 0])
    s12, c12 = np.sin(q[..., 0] + q[..., 1]), np.cos(q[..., 0] + q[..., 1])
    row_x = np.stack([-(l1 * c1 + l2 * c12), -l2 * c12], axis=-1)
    row_z = np.stack([l1 * s1 + l2 * s12, l2 * s12], axis=-1)
    return np.stack([row_x, row_z], axis=-2)


def humanoid_joint_torque_batch(q: np.ndarray, f_planar: np.ndarray, tau_moment: np.ndarray, params: RobotParams) -> np.ndarray:
    """Per-leg joint torques (hip, knee, ankle) under a contact wrench.

    f_planar (..., 2) is the share of the ground force carried by the
    leg; tau_moment (...) the share of the ankle torque channel.  The
    contact sits on the ankle axis, so the force itself loads only hip
    and knee, while the pure moment loads every pitch joint in the
    chain.
    """
    J = humanoid_jacobian_batch(q, params)
    f = np.asarray(f_planar, float)
    tau_hk = -np.einsum("...ij,...i->...j", J, f)
    tm = np.asarray(tau_moment, float)
    return np.stack([tau_hk[..., 0] - tm, tau_hk[..., 1] - tm, -tm], axis=-1)
