"""Feasibility constraints and the prioritized fitness of a jump.

Every constraint reduces to a single scalar deficit sigma: the worst
violation over the stance trajectory in the constraint's native units,
zero when satisfied.  The fitness stacks the active constraints on a
decade ladder ordered by priority, so a candidate that violates a
higher-priority constraint scores worse than any candidate whose worst
violation is lower priority, and within one priority the deficit
magnitude still orders candidates.  Feasible candidates score only
their actuation effort, which is always far below the first rung of
the ladder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .leg_kinematics import Z_MIN_JOINT
from .robot_model import RobotParams
from .trajectory import HumanoidStanceTrajectory, StanceTrajectory

# Priority of each constraint class; higher decides first.
PRIORITY = {
    "contact": 15,
    "friction": 13,
    "zmp": 12,
    "joint_angle": 11,
    "joint_velocity": 9,
    "body_position": 8,
    "joint_torque": 6,
}

F_Z_MIN = 1.0
FEASIBLE_FITNESS_MAX = 1.0e4

# Fitness shaping for an unreachable foot target: a fixed offset keeps
# any unreachable pose worse than every reachable joint-limit breach,
# and the metric slope gives the search a downhill direction back.
UNREACH_BASE = 0.5
UNREACH_SLOPE = 5.0

_trapz = getattr(np, "trapezoid", None) or np.trapz


@dataclass(frozen=True)
class ConstraintTerm:
    """One constraint class evaluated over a trajectory."""

    name: str
    priority: int
    sigma: float
    worst_time: float

    @property
    def satisfied(self) -> bool:
        return self.sigma <= 0.0


@dataclass(frozen=True)
class ConstraintReport:
    """All constraint terms of one candidate plus its actuation effort."""

    terms: tuple
    energy: float

    @property
    def feasible(self) -> bool:
        return all(t.satisfied for t in self.terms)

    @property
    def fitness(self) -> float:
        return fitness_value(self.terms, self.energy)

    def sigmas(self) -> dict:
        return {t.name: t.sigma for t in self.terms}

    def term(self, name: str) -> ConstraintTerm:
        for t in self.terms:
            if t.name == name:
                return t
        raise KeyError(name)

    def to_text(self) -> str:
        lines = [f"{'constraint':<16}{'priority':>9}{'sigma':>15}{'worst_t':>10}"]
        for t in sorted(self.terms, key=lambda t: -t.priority):
            wt = f"{t.worst_time:.3f}" if math.isfinite(t.worst_time) else "-"
            lines.append(f"{t.name:<16}{t.priority:>9}{t.sigma:>15.6g}{wt:>10}")
        lines.append(f"energy {self.energy:.6g}")
        state = "feasible" if self.feasible else "infeasible"
        lines.append(f"fitness {self.fitness:.6g} ({state})")
        return "\n".join(lines)


def fitness_value(terms, energy: float) -> float:
    """Prioritized constraint fitness plus actuation effort.

    Each violated term of priority n contributes 10^(n+3) + 10^n sigma;
    satisfied terms contribute nothing.  The 10^(n+3) pedestal keeps
    priorities separated as long as deficits stay within a few decades
    of their native scale.
    """
    total = float(energy)
    for t in terms:
        if t.sigma > 0.0:
            total += 10.0 ** (t.priority + 3) + 10.0**t.priority * t.sigma
    return total


def actuation_energy(joint_tau: np.ndarray, joint_qd: np.ndarray, dt: float) -> float:
    """Trapezoidal integral of total absolute joint power."""
    power = np.abs(joint_tau * joint_qd)
    power = power.reshape(power.shape[0], -1).sum(axis=1)
    if power.shape[0] < 2:
        return 0.0
    return float(_trapz(power, dx=dt))


def _term(name: str, deficit, times) -> ConstraintTerm:
    """Reduce per-sample deficits (time axis first) to one term."""
    arr = np.asarray(deficit, float)
    if arr.size == 0:
        return ConstraintTerm(name, PRIORITY[name], 0.0, math.nan)
    per_t = arr.reshape(arr.shape[0], -1)
    per_t = np.where(np.isfinite(per_t), per_t, 0.0).max(axis=1)
    k = int(np.argmax(per_t))
    sigma = float(per_t[k])
    if sigma <= 0.0:
        return ConstraintTerm(name, PRIORITY[name], 0.0, math.nan)
    return ConstraintTerm(name, PRIORITY[name], sigma, float(times[k]))


def _angle_deficit(joint_q, ik_ok, ik_deficit, knee_limits, knee_axis: int) -> np.ndarray:
    """Per-sample joint angle deficit: knee flexion bounds or reach failure."""
    lo, hi = knee_limits
    flex = joint_q[..., knee_axis]
    flex_deficit = np.maximum(lo - flex, flex - hi)
    flex_deficit = np.maximum(flex_deficit, 0.0)
    reach = np.where(ik_ok, 0.0, UNREACH_BASE + UNREACH_SLOPE * ik_deficit)
    return np.maximum(flex_deficit, reach)


def evaluate_constraints(st: StanceTrajectory, params: RobotParams) -> ConstraintReport:
    """Constraint terms of a quadruped stance rollout."""
    tr = st.planar
    t_steps = tr.t[:-1]
    t_states = tr.t
    mu = params.friction_coeff

    fz = st.foot_forces[:, :, 2]
    in_stance = st.stance_mask.astype(bool)
    contact = np.where(in_stance, F_Z_MIN - fz, 0.0)

    f_xy = np.hypot(st.foot_forces[:, :, 0], st.foot_forces[:, :, 1])
    loaded = in_stance & (fz > F_Z_MIN)
    with np.errstate(divide="ignore", invalid="ignore"):
        cone = np.where(loaded, f_xy / np.where(loaded, fz, 1.0) - mu, 0.0)

    angle = _angle_deficit(
        st.joint_q, st.ik_ok, st.ik_deficit, params.joint_limits[-1], knee_axis=2
    )
    velocity = np.abs(st.joint_qd) - params.velocity_limits
    position = Z_MIN_JOINT - np.stack([st.hip_z, st.knee_z], axis=-1)
    torque = np.abs(st.joint_tau) - params.torque_limits

    terms = (
        _term("contact", contact, t_steps),
        _term("friction", cone, t_steps),
        _term("joint_angle", angle, t_states),
        _term("joint_velocity", velocity, t_steps),
        _term("body_position", position, t_states),
        _term("joint_torque", torque, t_steps),
    )
    energy = actuation_energy(st.joint_tau, st.joint_qd, tr.dt)
    return ConstraintReport(terms=terms, energy=energy)


def evaluate_humanoid_constraints(
    ht: HumanoidStanceTrajectory, params: RobotParams
) -> ConstraintReport:
    """Constraint terms of a humanoid sagittal stance rollout.

    Joint arrays hold one leg's share (the legs split the contact
    wrench evenly), so torque limits apply per leg and the energy sums
    both legs.  The center of pressure must stay on the foot sole,
    between the heel and toe extents.
    """
    tr = ht.planar
    t_steps = tr.t[:-1]
    t_states = tr.t
    mu = params.friction_coeff
    toe, heel = params.leg_lengths[2], params.leg_lengths[3]

    fx, fz = ht.force_planar[:, 0], ht.force_planar[:, 1]
    contact = F_Z_MIN - fz
    loaded = fz > F_Z_MIN
    with np.errstate(divide="ignore", invalid="ignore"):
        cone = np.where(loaded, np.abs(fx) / np.where(loaded, fz, 1.0) - mu, 0.0)

    zmp = np.where(np.isfinite(ht.zmp), ht.zmp, 0.0)
    zmp_deficit = np.where(loaded, np.maximum(zmp - toe, -heel - zmp), 0.0)

    angle = _angle_deficit(
        ht.joint_q, ht.ik_ok, ht.ik_deficit, params.joint_limits[1], knee_axis=1
    )
    velocity = np.abs(ht.joint_qd) - params.velocity_limits
    position = Z_MIN_JOINT - np.stack([ht.hip_z, ht.knee_z], axis=-1)
    torque = np.abs(ht.joint_tau) - params.torque_limits

    terms = (
        _term("contact", contact, t_steps),
        _term("friction", cone, t_steps),
        _term("zmp", zmp_deficit, t_steps),
        _term("joint_angle", angle, t_states),
        _term("joint_velocity", velocity, t_steps),
        _term("body_position", position, t_states),
        _term("joint_torque", torque, t_steps),
    )
    energy = 2.0 * actuation_energy(ht.joint_tau, ht.joint_qd, tr.dt)
    return ConstraintReport(terms=terms, energy=energy)
