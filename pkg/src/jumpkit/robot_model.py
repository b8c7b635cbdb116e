"""Reduced-order rigid body model and planar stance integration.

The robot is modeled as a single rigid body with constant diagonal
inertia.  Ground reaction forces act at massless feet; leg inertia is
neglected.  World frame is z-up with gravity (0, 0, -g).  The jumping
motion itself is integrated in a vertical plane (the jump plane): the
planar state is (x, z, theta, vx, vz, omega) where x runs along the
horizontal jump axis, z is height, and theta is the body rotation about
the plane normal (positive theta tips the +x body axis downward).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import config as _cfg
from .trajectory import PlanarTrajectory

GRAVITY = 9.81

_TWO_PI = 2.0 * math.pi


class ModelError(ValueError):
    """Invalid model parameters or states."""


@dataclass(frozen=True)
class RobotParams:
    """Physical parameters of a reduced-order legged robot.

    Attributes:
        mass: total mass, kg.
        inertia_diag: body-frame diagonal inertia (Ixx, Iyy, Izz), kg m^2.
        leg_lengths: (L0, L1, L2) abduction offset / thigh / shank for a
            quadruped; (L_upper, L_lower, L_toe, L_heel) for a humanoid
            sagittal leg with a flat foot.
        hip_offsets: body-frame hip mount positions, one row per leg.
            Quadruped rows are ordered front-left, front-right,
            rear-left, rear-right.
        joint_limits: per-joint (min, max) angle, rad.  The knee entry
            bounds knee flexion; the interior knee angle is pi - flexion.
        torque_limits: per-joint torque magnitude limit, N m.
        velocity_limits: per-joint speed limit, rad/s.
        friction_coeff: contact friction coefficient.
        gravity: gravitational acceleration, m/s^2.
        stance_height: nominal CoM height above ground at jump start, m.
        kind: "quadruped" or "humanoid".
    """

    mass: float
    inertia_diag: np.ndarray
    leg_lengths: np.ndarray
    hip_offsets: np.ndarray
    joint_limits: np.ndarray
    torque_limits: np.ndarray
    velocity_limits: np.ndarray
    friction_coeff: float = 0.7
    gravity: float = GRAVITY
    stance_height: float = 0.18
    kind: str = "quadruped"

    def __post_init__(self):
        object.__setattr__(self, "inertia_diag", np.asarray(self.inertia_diag, float))
        object.__setattr__(self, "leg_lengths", np.asarray(self.leg_lengths, float))
        object.__setattr__(self, "hip_offsets", np.atleast_2d(np.asarray(self.hip_offsets, float)))
        object.__setattr__(self, "joint_limits", np.asarray(self.joint_limits, float))
        object.__setattr__(self, "torque_limits", np.asarray(self.torque_limits, float))
        object.__setattr__(self, "velocity_limits", np.asarray(self.velocity_limits, float))
        if self.mass <= 0:
            raise ModelError("mass must be positive")
        if self.inertia_diag.shape != (3,) or np.any(self.inertia_diag <= 0):
            raise ModelError("inertia_diag must be 3 positive values")
        if np.any(self.leg_lengths <= 0):
            raise ModelError("leg lengths must be positive")
        if self.kind not in ("quadruped", "humanoid"):
            raise ModelError(f"unknown robot kind {self.kind!r}")
        if self.kind == "quadruped" and self.hip_offsets.shape != (4, 3):
            raise ModelError("quadruped needs 4 hip offsets")
        if self.friction_coeff <= 0:
            raise ModelError("friction_coeff must be positive")
        if self.gravity <= 0:
            raise ModelError("gravity must be positive")
        if self.stance_height <= 0:
            raise ModelError("stance_height must be positive")

    # Leg order: front-left, front-right, rear-left, rear-right.
    # side = +1 for left legs (abduction offset toward +y), -1 for right.
    @property
    def leg_sides(self) -> np.ndarray:
        return np.array([1.0, -1.0, 1.0, -1.0])

    def default_stance_feet(self, stance_height: float | None = None) -> np.ndarray:
        """Body-frame foot positions for a nominal stance (feet under hips).

        Feet sit at the hip xy position pushed out laterally by the
        abduction link, at depth -stance_height (on the ground when the
        CoM is at stance_height).
        """
        if self.kind != "quadruped":
            raise ModelError("default stance feet defined for quadrupeds only")
        z0 = self.stance_height if stance_height is None else float(stance_height)
        feet = self.hip_offsets.copy()
        feet[:, 1] += self.leg_sides * self.leg_lengths[0]
        feet[:, 2] = -z0
        return feet

    def pitch_inertia(self, theta_tg: float) -> float:
        """Inertia about the jump-plane normal axis for azimuth theta_tg."""
        s, c = math.sin(theta_tg), math.cos(theta_tg)
        return float(self.inertia_diag[0] * s * s + self.inertia_diag[1] * c * c)

    @classmethod
    def mini_cheetah(cls) -> "RobotParams":
        return cls(
            mass=11.4,
            inertia_diag=[0.07, 0.3, 0.34],
            leg_lengths=[0.072, 0.211, 0.2],
            hip_offsets=[
                [0.19, 0.049, 0.0],
                [0.19, -0.049, 0.0],
                [-0.19, 0.049, 0.0],
                [-0.19, -0.049, 0.0],
            ],
            joint_limits=[
                [-_TWO_PI, _TWO_PI],
                [-_TWO_PI, _TWO_PI],
                [math.radians(10.0), math.radians(170.0)],
            ],
            torque_limits=[24.0, 24.0, 36.0],
            velocity_limits=[10.0 * math.pi, 10.0 * math.pi, 193.0 * math.pi / 30.0],
            stance_height=0.18,
        )

    @classmethod
    def cyberdog1(cls) -> "RobotParams":
        return cls(
            mass=14.0,
            inertia_diag=[0.08, 0.4, 0.45],
            leg_lengths=[0.107, 0.2, 0.217],
            hip_offsets=[
                [0.235, 0.05, 0.0],
                [0.235, -0.05, 0.0],
                [-0.235, 0.05, 0.0],
                [-0.235, -0.05, 0.0],
            ],
            joint_limits=[
                [-_TWO_PI, _TWO_PI],
                [-_TWO_PI, _TWO_PI],
                [math.radians(10.0), math.radians(170.0)],
            ],
            torque_limits=[24.0, 24.0, 36.0],
            velocity_limits=[10.0 * math.pi, 10.0 * math.pi, 193.0 * math.pi / 30.0],
            stance_height=0.19,
        )

    @classmethod
    def humanoid(cls) -> "RobotParams":
        # Sagittal biped: two identical legs act in the x-z plane through
        # one lumped contact at the ankle.  Joints are ordered (hip,
        # knee, ankle); foot extends L_toe forward and L_heel back.
        return cls(
            mass=47.0,
            inertia_diag=[11.6, 9.9, 2.0],
            leg_lengths=[0.366, 0.340, 0.180, 0.120],
            hip_offsets=[[0.0, 0.0, -0.2]],
            joint_limits=[
                [-_TWO_PI, _TWO_PI],
                [math.radians(10.0), math.radians(170.0)],
                [-_TWO_PI, _TWO_PI],
            ],
            torque_limits=[417.0, 320.0, 216.0],
            velocity_limits=[30.0, 30.0, 30.0],
            stance_height=0.6,
            kind="humanoid",
        )

    @classmethod
    def named(cls, name: str) -> "RobotParams":
        table = {
            "mini_cheetah": cls.mini_cheetah,
            "cyberdog1": cls.cyberdog1,
            "humanoid": cls.humanoid,
        }
        if name not in table:
            raise ModelError(f"unknown robot {name!r}; options: {sorted(table)}")
        return table[name]()

    @classmethod
    def from_file(cls, path) -> "RobotParams":
        cfg = _cfg.parse_kv_file(path)
        kind = cfg.get("kind", [["quadruped"]])[0][0]
        njoint = 3
        kwargs = dict(
            mass=_cfg.scalar(cfg, "mass"),
            inertia_diag=_cfg.vector(cfg, "inertia_diag", 3),
            leg_lengths=_cfg.vector(cfg, "leg_lengths"),
            hip_offsets=_cfg.groups(cfg, "hip_offsets", 3),
            joint_limits=_cfg.groups(cfg, "joint_limits", 2),
            torque_limits=_cfg.vector(cfg, "torque_limits", njoint),
            velocity_limits=_cfg.vector(cfg, "velocity_limits", njoint),
            kind=kind,
        )
        for opt in ("friction_coeff", "gravity", "stance_height"):
            if opt in cfg:
                kwargs[opt] = _cfg.scalar(cfg, opt)
        return cls(**kwargs)

    def to_file(self, path) -> None:
        def fmt_groups(arr):
            return ", ".join(" ".join(repr(float(v)) for v in row) for row in np.atleast_2d(arr))

        lines = [
            f"kind = {self.kind}",
            f"mass = {self.mass!r}",
            f"inertia_diag = {' '.join(repr(float(v)) for v in self.inertia_diag)}",
            f"leg_lengths = {' '.join(repr(float(v)) for v in self.leg_lengths)}",
            f"hip_offsets = {fmt_groups(self.hip_offsets)}",
            f"joint_limits = {fmt_groups(self.joint_limits)}",
            f"torque_limits = {' '.join(repr(float(v)) for v in self.torque_limits)}",
            f"velocity_limits = {' '.join(repr(float(v)) for v in self.velocity_limits)}",
            f"friction_coeff = {self.friction_coeff!r}",
            f"gravity = {self.gravity!r}",
            f"stance_height = {self.stance_height!r}",
        ]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


def _wrap_angle(a):
    """Wrap to (-pi, pi]."""
    a = np.asarray(a, float)
    wrapped = -((-a + math.pi) % _TWO_PI - math.pi)
    return np.where(wrapped == -math.pi, math.pi, wrapped)


@dataclass(frozen=True)
class ReducedState:
    """Full 3D rigid-body state of the reduced model.

    theta holds (roll, pitch, yaw) Euler angles of the z-y-x convention
    (R = Rz(yaw) Ry(pitch) Rx(roll)); omega_b is the body angular rate.
    """

    p_com: np.ndarray
    theta: np.ndarray
    v_com: np.ndarray
    omega_b: np.ndarray

    def __post_init__(self):
        for name in ("p_com", "theta", "v_com", "omega_b"):
            v = np.asarray(getattr(self, name), float)
            if v.shape != (3,) or not np.isfinite(v).all():
                raise ModelError(f"{name} must be 3 finite values")
            object.__setattr__(self, name, v)
        object.__setattr__(self, "theta", np.asarray(_wrap_angle(self.theta), float))

    @classmethod
    def resting(cls, height: float) -> "ReducedState":
        z = np.zeros(3)
        return cls(np.array([0.0, 0.0, height]), z.copy(), z.copy(), z.copy())


@dataclass(frozen=True)
class PlanarState:
    """In-plane rigid body state (x, z, theta, vx, vz, omega)."""

    x: float = 0.0
    z: float = 0.0
    theta: float = 0.0
    vx: float = 0.0
    vz: float = 0.0
    omega: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.z, self.theta, self.vx, self.vz, self.omega])


def srb_acceleration(state: ReducedState, foot_forces, foot_positions, params: RobotParams):
    """Linear and angular acceleration of the single-rigid-body model.

    Args:
        state: current state (CoM position and body rates are used).
        foot_forces: (n, 3) world-frame ground reaction forces on the body.
        foot_positions: (n, 3) world-frame application points.
        params: robot parameters.

    Returns:
        (lin_acc, ang_acc): world-frame CoM acceleration and body-frame
        angular acceleration, both (3,).
    """
    f = np.asarray(foot_forces, float).reshape(-1, 3)
    p = np.asarray(foot_positions, float).reshape(-1, 3)
    if f.shape != p.shape:
        raise ModelError("foot_forces and foot_positions must match in shape")
    if not (np.isfinite(f).all() and np.isfinite(p).all()):
        raise ModelError("forces and positions must be finite")
    m = params.mass
    g = params.gravity
    lin = f.sum(axis=0) / m
    lin[2] -= g
    inertia = params.inertia_diag
    torque = np.cross(p - state.p_com, f).sum(axis=0)
    gyro = np.cross(state.omega_b, inertia * state.omega_b)
    ang = (torque - gyro) / inertia
    return lin, ang


def _euler_rate_matrix(theta: np.ndarray) -> np.ndarray:
    """Map body angular rate to (roll, pitch, yaw) rates (z-y-x Euler)."""
    roll, pitch, _ = theta
    sr, cr = math.sin(roll), math.cos(roll)
    cp = math.cos(pitch)
    if abs(cp) < 1e-9:
        raise ModelError("Euler rate map singular at |pitch| = pi/2")
    tp = math.tan(pitch)
    return np.array(
        [
            [1.0, sr * tp, cr * tp],
            [0.0, cr, -sr],
            [0.0, sr / cp, cr / cp],
        ]
    )


def integrate_step(state: ReducedState, lin_acc, ang_acc, dt: float) -> ReducedState:
    """One semi-explicit Euler step: velocities first, then positions."""
    if dt <= 0:
        raise ModelError("dt must be positive")
    v = state.v_com + np.asarray(lin_acc, float) * dt
    p = state.p_com + v * dt
    w = state.omega_b + np.asarray(ang_acc, float) * dt
    theta = state.theta + _euler_rate_matrix(state.theta) @ w * dt
    return ReducedState(p, theta, v, w)


@dataclass(frozen=True)
class PlanarStanceGeometry:
    """Where the resultant stance forces act, seen in the jump plane.

    layout "quad": channels (uJ1, uJ2, uz1, uz2); channel pair j acts at
    ground level at planar coordinate j_offsets[j].
    layout "humanoid": channels (f_x, f_z, tau_y); the force acts at the
    planar origin (the ankle) and tau_y is a pure torque channel.
    """

    layout: str
    j_offsets: np.ndarray
    inertia_plane: float

    def __post_init__(self):
        object.__setattr__(self, "j_offsets", np.asarray(self.j_offsets, float))
        if self.layout not in ("quad", "humanoid"):
            raise ModelError(f"unknown layout {self.layout!r}")
        if self.layout == "quad" and self.j_offsets.shape != (2,):
            raise ModelError("quad layout needs two force application offsets")
        if self.inertia_plane <= 0:
            raise ModelError("inertia_plane must be positive")

    @property
    def n_channels(self) -> int:
        return 4 if self.layout == "quad" else 3


def planar_torque(geom: PlanarStanceGeometry, x, z, u):
    """In-plane torque about the CoM for states (x, z) and force samples u.

    Accepts scalars or aligned arrays; u has shape (..., n_channels).
    Positive torque follows the planar theta convention (tips +x down).
    """
    u = np.asarray(u, float)
    if geom.layout == "quad":
        j1, j2 = geom.j_offsets
        return (
            -z * (u[..., 0] + u[..., 1])
            - (j1 - x) * u[..., 2]
            - (j2 - x) * u[..., 3]
        )
    return x * u[..., 1] - z * u[..., 0] + u[..., 2]


def planar_rollout(
    u_grid: np.ndarray,
    geom: PlanarStanceGeometry,
    state0: PlanarState,
    params: RobotParams,
    dt: float = 1e-3,
) -> PlanarTrajectory:
    """Integrate the planar stance dynamics under sampled resultant forces.

    Semi-explicit Euler with forces held over [t_k, t_k + dt): velocities
    are updated from the sample at t_k, then positions from the new
    velocities.  The torque at t_k uses the translational state at t_k,
    so the angular channel sees the same coupling as a sequential update.

    Args:
        u_grid: (N, n_channels) force samples at t_k = k dt.
        geom: force application geometry in the plane.
        state0: initial planar state.
        params: robot parameters (mass, gravity).
        dt: step, s; must be positive and at most 1 ms for planning use.

    Returns:
        PlanarTrajectory with N+1 states and the N force samples.
    """
    if dt <= 0:
        raise ModelError("dt must be positive")
    u = np.asarray(u_grid, float)
    if u.ndim != 2 or u.shape[1] != geom.n_channels:
        raise ModelError(f"u_grid must be (N, {geom.n_channels})")
    n = u.shape[0]
    if n == 0:
        raise ModelError("stance duration shorter than one step")
    if not np.isfinite(u).all():
        raise ModelError("force samples must be finite")
    m, g = params.mass, params.gravity

    if geom.layout == "quad":
        fx = u[:, 0] + u[:, 1]
        fz = u[:, 2] + u[:, 3]
    else:
        fx = u[:, 0]
        fz = u[:, 1]
    ax = fx / m
    az = fz / m - g

    vx = np.empty(n + 1)
    vz = np.empty(n + 1)
    x = np.empty(n + 1)
    z = np.empty(n + 1)
    vx[0], vz[0] = state0.vx, state0.vz
    x[0], z[0] = state0.x, state0.z
    vx[1:] = state0.vx + np.cumsum(ax) * dt
    vz[1:] = state0.vz + np.cumsum(az) * dt
    x[1:] = state0.x + np.cumsum(vx[1:]) * dt
    z[1:] = state0.z + np.cumsum(vz[1:]) * dt

    tau = planar_torque(geom, x[:-1], z[:-1], u)
    alpha = tau / geom.inertia_plane
    omega = np.empty(n + 1)
    theta = np.empty(n + 1)
    omega[0], theta[0] = state0.omega, state0.theta
    omega[1:] = state0.omega + np.cumsum(alpha) * dt
    theta[1:] = state0.theta + np.cumsum(omega[1:]) * dt

    t = np.arange(n + 1) * dt
    return PlanarTrajectory(t=t, x=x, z=z, theta=theta, vx=vx, vz=vz, omega=omega, u=u, dt=dt)
