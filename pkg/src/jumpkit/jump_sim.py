"""Jump simulation: stance rollout through the legs, flight, scoring.

Takes a decision vector through the full pipeline: force profile,
planar stance integration, per-foot force split, leg kinematics and
joint loads, constraint evaluation, ballistic flight, and landing
error against the target.  The optimizer scores candidates with the
resulting fitness; the CLI writes the same rollout out as CSV.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .constraints import (
    F_Z_MIN,
    ConstraintReport,
    evaluate_constraints,
    evaluate_humanoid_constraints,
)
from .grf_profile import (
    GRFProfile,
    OptVector,
    ballistic_flight,
    initial_planar_state,
    landing_target,
    waypoints_to_profile,
)
from .jump_plane import JumpPlaneSpec, decompose_batch
from .leg_kinematics import (
    Z_MIN_JOINT,
    humanoid_ik_batch,
    humanoid_joint_torque_batch,
    ik_batch,
    jacobian_batch,
    knee_batch,
    rotations_about_axis,
)
from .robot_model import RobotParams, planar_rollout
from .trajectory import HumanoidStanceTrajectory, StanceTrajectory

DEFAULT_DT = 1e-3

_Z_UP = np.array([0.0, 0.0, 1.0])


def stance_rollout(
    profile: GRFProfile,
    vec: OptVector,
    spec: JumpPlaneSpec,
    params: RobotParams,
) -> StanceTrajectory:
    """Expand a quadruped force profile into body, foot, and joint motion.

    Feet hold their world positions while loaded.  Feet that unload at
    t1 freeze their joint state there: the swing controller owns them
    from that moment and they stop contributing loads or violations.
    """
    u, _ = profile.sample_grid()
    geom = spec.stance_geometry(params)
    state0 = initial_planar_state(vec, spec)
    tr = planar_rollout(u, geom, state0, params, profile.times.dt)
    n1, n2 = profile.times.n1, profile.times.n2

    forces = decompose_batch(u, spec)
    stance_mask = np.ones((n2, 4), bool)
    lifted = np.zeros(4, bool)
    if n2 > n1:
        for foot in spec.case_pairs[0]:
            lifted[foot] = True
        stance_mask[n1:, lifted] = False

    feet_world = spec.stance_feet + np.array([0.0, 0.0, state0.z])
    com = tr.x[:, None] * spec.j_axis[None, :] + tr.z[:, None] * _Z_UP[None, :]
    rot = rotations_about_axis(spec.plane_normal, tr.theta)

    rel_body = np.einsum("kji,klj->kli", rot, feet_world[None, :, :] - com[:, None, :])
    p_rel = rel_body - params.hip_offsets[None, :, :]
    q, ok, deficit = ik_batch(p_rel, params.leg_sides, params)
    if lifted.any():
        q[n1 + 1 :, lifted] = q[n1, lifted]
        ok[n1 + 1 :, lifted] = ok[n1, lifted]
        deficit[n1 + 1 :, lifted] = deficit[n1, lifted]

    hips_w = com[:, None, :] + np.einsum("kij,lj->kli", rot, params.hip_offsets)
    knee_rel = params.hip_offsets[None, :, :] + knee_batch(q, params.leg_sides, params)
    knees_w = com[:, None, :] + np.einsum("kij,klj->kli", rot, knee_rel)

    qd = (q[1:] - q[:-1]) / tr.dt
    f_body = np.einsum("kji,klj->kli", rot[:-1], forces)
    jac = jacobian_batch(q[:-1], params.leg_sides, params)
    tau = -np.einsum("klij,kli->klj", jac, f_body)

    return StanceTrajectory(
        planar=tr,
        foot_forces=forces,
        stance_mask=stance_mask,
        joint_q=q,
        joint_qd=qd,
        joint_tau=tau,
        hip_z=hips_w[..., 2],
        knee_z=knees_w[..., 2],
        ik_ok=ok,
        ik_deficit=deficit,
        feet_world=feet_world,
    )


def humanoid_stance_rollout(
    profile: GRFProfile,
    vec: OptVector,
    spec: JumpPlaneSpec,
    params: RobotParams,
) -> HumanoidStanceTrajectory:
    """Expand a humanoid sagittal profile into joint motion and loads.

    Both legs share the contact wrench evenly; arrays hold one leg's
    share.  The flat foot pins the ankle to the planar origin and the
    ankle angle closes the chain so the chain pitch angles sum to zero.
    """
    u, _ = profile.sample_grid()
    geom = spec.stance_geometry(params)
    state0 = initial_planar_state(vec, spec)
    tr = planar_rollout(u, geom, state0, params, profile.times.dt)

    hb = params.hip_offsets[0]
    c, s = np.cos(tr.theta), np.sin(tr.theta)
    hip_x = tr.x + (hb[0] * c + hb[2] * s)
    hip_z = tr.z + (-hb[0] * s + hb[2] * c)

    # Ankle sits at the planar origin; targets are hip-relative, body frame.
    px, pz = -hip_x, -hip_z
    p_rel = np.stack([c * px - s * pz, s * px + c * pz], axis=-1)
    q_hk, ok, deficit = humanoid_ik_batch(p_rel, params)
    q_ankle = -(tr.theta + q_hk[:, 0] + q_hk[:, 1])
    q = np.column_stack([q_hk, q_ankle])

    l1 = params.leg_lengths[0]
    kb_x, kb_z = -l1 * np.sin(q_hk[:, 0]), -l1 * np.cos(q_hk[:, 0])
    knee_z = hip_z + (-s * kb_x + c * kb_z)

    qd = (q[1:] - q[:-1]) / tr.dt
    f_leg = u[:, :2] / 2.0
    tm_leg = u[:, 2] / 2.0
    tau = humanoid_joint_torque_batch(q_hk[:-1], f_leg, tm_leg, params)

    fz = u[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        zmp = np.where(fz > F_Z_MIN, -u[:, 2] / np.where(fz > F_Z_MIN, fz, 1.0), np.nan)

    return HumanoidStanceTrajectory(
        planar=tr,
        force_planar=u[:, :2],
        tau_fy=u[:, 2],
        joint_q=q,
        joint_qd=qd,
        joint_tau=tau,
        knee_z=knee_z,
        hip_z=hip_z,
        ik_ok=ok,
        ik_deficit=deficit,
        zmp=zmp,
    )


@dataclass
class SimOutcome:
    """Everything one candidate produced, scored and ready to inspect."""

    mode: str
    profile: GRFProfile
    stance: object
    report: ConstraintReport
    takeoff: tuple
    landing: tuple
    target: np.ndarray
    target_error: float
    theta_error: float
    warnings: list = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.report.feasible

    @property
    def fitness(self) -> float:
        return self.report.fitness


def _flight_low_point(z0: float, vz: float, tf: float, g: float) -> float:
    """Minimum CoM height over a ballistic segment of duration tf."""
    lo = min(z0, z0 + vz * tf - 0.5 * g * tf * tf)
    t_apex = vz / g
    if 0.0 < t_apex < tf:
        lo = min(lo, z0 + vz * t_apex - 0.5 * g * t_apex * t_apex)
    return lo


def simulate_jump(
    vec: OptVector,
    spec: JumpPlaneSpec,
    params: RobotParams,
    dt: float = DEFAULT_DT,
    profile: GRFProfile | None = None,
    obstacle: tuple | None = None,
) -> SimOutcome:
    """Run one candidate end to end and score it.

    obstacle, when given, is (x_edge, height) in planar coordinates: a
    ledge whose near edge the flight path should clear.  Clipping it is
    reported as a warning, not a constraint; the landing error already
    punishes plans that cannot actually reach past it.

    Raises TransformError when the vector admits no force profile.
    """
    if profile is None:
        profile = waypoints_to_profile(vec, spec, params, dt)
    if vec.mode == "humanoid":
        stance = humanoid_stance_rollout(profile, vec, spec, params)
        report = evaluate_humanoid_constraints(stance, params)
    else:
        stance = stance_rollout(profile, vec, spec, params)
        report = evaluate_constraints(stance, params)

    tr = stance.planar
    takeoff = tuple(tr.final_state().as_array())
    tf = profile.times.flight_duration
    g = params.gravity
    landing = tuple(float(v) for v in ballistic_flight(takeoff, tf, g))
    target = landing_target(vec, spec)
    target_error = math.hypot(landing[0] - target[0], landing[1] - target[1])
    theta_error = abs(landing[2] - target[2])

    warnings = []
    low = _flight_low_point(takeoff[1], takeoff[4], tf, g)
    if low < Z_MIN_JOINT:
        warnings.append(f"flight CoM low point {low:.3f} m is under {Z_MIN_JOINT} m")
    if obstacle is not None:
        x_edge, height = obstacle
        if takeoff[3] > 1e-9 and takeoff[0] < x_edge <= landing[0]:
            t_cross = (x_edge - takeoff[0]) / takeoff[3]
            z_cross = takeoff[1] + takeoff[4] * t_cross - 0.5 * g * t_cross * t_cross
            if z_cross < height:
                warnings.append(
                    f"flight path passes {height - z_cross:.3f} m below the "
                    f"obstacle edge at x = {x_edge:.3f}"
                )

    return SimOutcome(
        mode=vec.mode,
        profile=profile,
        stance=stance,
        report=report,
        takeoff=takeoff,
        landing=landing,
        target=target,
        target_error=target_error,
        theta_error=theta_error,
        warnings=warnings,
    )


def export_trajectory_csv(path, outcome: SimOutcome, params: RobotParams) -> None:
    """Write the stance and flight of one jump as CSV.

    Stance rows carry the planar state at each step start plus channel
    forces, per-foot forces, and joint torques; flight rows carry the
    ballistic states with all force columns zero.
    """
    tr = outcome.stance.planar
    times = outcome.profile.times
    g = params.gravity
    quad = outcome.mode != "humanoid"

    header = ["t", "x", "z", "theta", "vx", "vz", "omega"]
    if quad:
        header += ["uJ1", "uJ2", "uz1", "uz2"]
        header += [f"f{leg}{ax}" for leg in range(1, 5) for ax in ("x", "y", "z")]
        header += [f"tau{leg}{joint}" for leg in range(1, 5) for joint in range(1, 4)]
    else:
        header += ["fx", "fz", "tau_y", "zmp", "tau_hip", "tau_knee", "tau_ankle"]

    def state_row(k):
        return [tr.t[k], tr.x[k], tr.z[k], tr.theta[k], tr.vx[k], tr.vz[k], tr.omega[k]]

    rows = []
    n = tr.n_steps
    for k in range(n):
        row = state_row(k)
        if quad:
            row += list(tr.u[k])
            row += list(outcome.stance.foot_forces[k].reshape(-1))
            row += list(outcome.stance.joint_tau[k].reshape(-1))
        else:
            zmp = outcome.stance.zmp[k]
            row += [tr.u[k, 0], tr.u[k, 1], tr.u[k, 2]]
            row += [zmp if math.isfinite(zmp) else ""]
            row += list(outcome.stance.joint_tau[k])
        rows.append(row)

    zero_cols = len(header) - 7
    tf = times.flight_duration
    n_fl = int(math.floor(tf / tr.dt + 1e-9))
    taus = [k * tr.dt for k in range(n_fl + 1)]
    if tf - taus[-1] > 1e-9:
        taus.append(tf)
    for tau_f in taus:
        st = ballistic_flight(outcome.takeoff, tau_f, g)
        tail = [0.0] * zero_cols
        if not quad:
            tail[3] = ""  # no contact, no pressure center
        rows.append([times.t2 + tau_f] + [float(v) for v in st] + tail)

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt_cell(v) for v in row])


def _fmt_cell(v):
    if isinstance(v, str):
        return v
    return repr(float(v))
