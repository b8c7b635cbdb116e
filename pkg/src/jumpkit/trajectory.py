"""Trajectory containers shared across the planning and simulation layers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PlanarTrajectory:
    """States on a uniform grid plus the force samples that produced them.

    Arrays t, x, z, theta, vx, vz, omega have length N+1; u has shape
    (N, n_channels) with u[k] active over [t[k], t[k+1]).
    """

    t: np.ndarray
    x: np.ndarray
    z: np.ndarray
    theta: np.ndarray
    vx: np.ndarray
    vz: np.ndarray
    omega: np.ndarray
    u: np.ndarray
    dt: float

    @property
    def n_steps(self) -> int:
        return self.u.shape[0]

    def state_at(self, k: int):
        from .robot_model import PlanarState

        return PlanarState(
            x=float(self.x[k]),
            z=float(self.z[k]),
            theta=float(self.theta[k]),
            vx=float(self.vx[k]),
            vz=float(self.vz[k]),
            omega=float(self.omega[k]),
        )

    def final_state(self):
        return self.state_at(self.n_steps)


@dataclass
class StanceTrajectory:
    """Quadruped stance rollout expanded to per-foot and joint quantities.

    Step-indexed arrays (length N = planar.n_steps): foot_forces
    (N, 4, 3) world frame, stance_mask (N, 4), joint_qd and joint_tau
    (N, 4, 3).  State-indexed arrays (length N+1): joint_q (N+1, 4, 3),
    hip_z / knee_z (N+1, 4), ik_ok (N+1, 4) with ik_deficit holding the
    metric reach shortfall where IK failed.
    """

    planar: PlanarTrajectory
    foot_forces: np.ndarray
    stance_mask: np.ndarray
    joint_q: np.ndarray
    joint_qd: np.ndarray
    joint_tau: np.ndarray
    hip_z: np.ndarray
    knee_z: np.ndarray
    ik_ok: np.ndarray
    ik_deficit: np.ndarray
    feet_world: np.ndarray


@dataclass
class HumanoidStanceTrajectory:
    """Humanoid sagittal stance rollout: one lumped contact, two legs.

    Per-leg joint arrays are ordered (hip, knee, ankle).  force_planar is
    (N, 2) = (f_x, f_z) of the total contact force; tau_fy (N,) is the
    total ankle torque channel; zmp (N,) the center of pressure along
    the jump axis, NaN where the contact force is too small to define it.
    """

    planar: PlanarTrajectory
    force_planar: np.ndarray
    tau_fy: np.ndarray
    joint_q: np.ndarray
    joint_qd: np.ndarray
    joint_tau: np.ndarray
    knee_z: np.ndarray
    hip_z: np.ndarray
    ik_ok: np.ndarray
    ik_deficit: np.ndarray
    zmp: np.ndarray
