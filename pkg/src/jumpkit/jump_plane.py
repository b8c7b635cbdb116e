"""Jump plane construction and resultant-force decomposition.

All commanded motion happens in a vertical plane through the CoM whose
horizontal axis J points at the target.  The plane crosses the support
polygon twice; each crossing point carries one resultant force channel,
and the channel is split between the two feet of the crossed edge by
the lever rule.  Out-of-plane force components are identically zero and
the net CoM torque stays perpendicular to the plane, which is what
makes the planar reduction exact for the rigid body model.

Feet are indexed 0..3 = front-left, front-right, rear-left, rear-right.
Walking the support polygon counterclockwise visits 0, 2, 3, 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .robot_model import PlanarStanceGeometry, RobotParams

_TWO_PI = 2.0 * math.pi


class PlaneError(ValueError):
    """Jump plane cannot be constructed for the given target/stance."""


class UnsupportedTargetError(PlaneError):
    """Target demands a capability the planner does not provide (yaw)."""


# Each case: (name, azimuth arc (start foot, end foot], edge pairs).
# The first (m, l) pair is the edge crossed by the ray toward the
# target; the second is the opposite edge, crossed by the reversed ray.
_CASES = (
    ("left", (0, 2), ((0, 2), (1, 3))),
    ("rear", (2, 3), ((2, 3), (0, 1))),
    ("right", (3, 1), ((1, 3), (0, 2))),
    ("front", (1, 0), ((0, 1), (2, 3))),
)


@dataclass(frozen=True)
class JumpPlaneSpec:
    """Geometry of one jump plane over a fixed stance.

    j_offsets holds the signed planar coordinates of the two force
    application points (positive toward the target, negative behind);
    shares[j] is the fraction of channel j carried by foot l of its
    (m, l) edge pair, equal to the barycentric coordinate of the
    crossing point along m -> l.
    """

    theta_tg: float
    case_name: str
    case_pairs: tuple
    p_j1: np.ndarray
    p_j2: np.ndarray
    j_axis: np.ndarray
    plane_normal: np.ndarray
    j_offsets: tuple
    shares: tuple
    stance_feet: np.ndarray
    target_planar: tuple
    layout: str = "quad"
    vertical: bool = False

    def stance_geometry(self, params: RobotParams) -> PlanarStanceGeometry:
        return PlanarStanceGeometry(
            layout=self.layout,
            j_offsets=np.asarray(self.j_offsets, float),
            inertia_plane=params.pitch_inertia(self.theta_tg),
        )


def _in_ccw_arc(theta: float, start: float, end: float) -> bool:
    """True when theta lies in the half-open CCW arc (start, end]."""
    span = (end - start) % _TWO_PI
    delta = (theta - start) % _TWO_PI
    return 0.0 < delta <= span


def _validate_stance(feet: np.ndarray) -> None:
    if feet.shape != (4, 3):
        raise PlaneError("stance must provide 4 body-frame feet")
    if not np.isfinite(feet).all():
        raise PlaneError("stance feet must be finite")
    ring = feet[[0, 2, 3, 1], :2]
    e1 = np.roll(ring, -1, axis=0) - ring
    e2 = np.roll(ring, -2, axis=0) - ring
    cross = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    if np.any(np.abs(cross) < 1e-9) or not (np.all(cross > 0) or np.all(cross < 0)):
        raise PlaneError("degenerate stance: support polygon is not strictly convex")
    # The decomposition places channels on rays from the CoM ground
    # projection, so that projection must be interior to the polygon.
    d = np.roll(ring, -1, axis=0) - ring
    side = d[:, 0] * (-ring[:, 1]) - d[:, 1] * (-ring[:, 0])
    if not (np.all(side > 1e-12) or np.all(side < -1e-12)):
        raise PlaneError("CoM ground projection outside the support polygon")


def _ray_edge_intersection(direction: np.ndarray, p_m: np.ndarray, p_l: np.ndarray):
    """Intersect the ray t * direction (t > 0) with segment p_m -> p_l (xy)."""
    e = p_l[:2] - p_m[:2]
    a = np.array([[direction[0], -e[0]], [direction[1], -e[1]]])
    det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    if abs(det) < 1e-14:
        raise PlaneError("jump plane parallel to a support edge")
    t = (p_m[0] * a[1, 1] - p_m[1] * a[0, 1]) / det
    s = (a[0, 0] * p_m[1] - a[1, 0] * p_m[0]) / det
    if t <= 1e-12 or s < -1e-9 or s > 1.0 + 1e-9:
        raise PlaneError("jump plane misses the support polygon edge")
    s = min(1.0, max(0.0, s))
    point = p_m + s * (p_l - p_m)
    return t, s, point


def build_plane(
    p_tg,
    stance_feet,
    yaw: float = 0.0,
    vertical: bool = False,
    theta_land: float = 0.0,
    case_override: int | None = None,
) -> JumpPlaneSpec:
    """Construct the jump plane for a body-frame landing target.

    Args:
        p_tg: (3,) landing CoM target. x/y are the horizontal displacement
            in the takeoff body frame; z is the landing CoM height above
            the stance ground plane (the crouched CoM sits at z =
            -mean(foot z), so z equal to that height is a flat jump).
        stance_feet: (4, 3) body-frame foot positions (z = -crouch height).
        yaw: commanded yaw change; nonzero values are rejected because
            the planar formulation cannot produce yaw.
        vertical: accept a target with no horizontal component and use a
            forward-facing plane for it.
        theta_land: desired landing pitch in the plane.
        case_override: force one of the four edge-pair cases (0..3);
            intended for boundary-continuity checks.

    Returns:
        JumpPlaneSpec with the edge pairs, crossing points, and shares.
    """
    p_tg = np.asarray(p_tg, float)
    feet = np.asarray(stance_feet, float)
    if p_tg.shape != (3,) or not np.isfinite(p_tg).all():
        raise PlaneError("target must be 3 finite values")
    if yaw != 0.0:
        raise UnsupportedTargetError(
            "yaw targets are not supported by the planar jump formulation"
        )
    if p_tg[2] <= 0.0:
        raise PlaneError("target z is the landing CoM height and must be positive")
    _validate_stance(feet)

    d_xy = math.hypot(p_tg[0], p_tg[1])
    if d_xy < 1e-12:
        if not vertical:
            raise PlaneError(
                "target has no horizontal component; pass vertical=True for an in-place jump"
            )
        theta_tg = 0.0
        d_xy = 0.0
    else:
        theta_tg = math.atan2(p_tg[1], p_tg[0])

    theta_feet = np.arctan2(feet[:, 1], feet[:, 0])
    if case_override is None:
        case_index = None
        for idx, (_, (a, b), _) in enumerate(_CASES):
            if _in_ccw_arc(theta_tg, theta_feet[a], theta_feet[b]):
                case_index = idx
                break
        if case_index is None:
            raise PlaneError("no force-plan case matched the target azimuth")
    else:
        case_index = int(case_override)
        if not 0 <= case_index <= 3:
            raise PlaneError("case_override must be in 0..3")
    name, _, pairs = _CASES[case_index]

    direction = np.array([math.cos(theta_tg), math.sin(theta_tg)])
    m1, l1 = pairs[0]
    m2, l2 = pairs[1]
    t1, s1, p_j1 = _ray_edge_intersection(direction, feet[m1], feet[l1])
    t2, s2, p_j2 = _ray_edge_intersection(-direction, feet[m2], feet[l2])

    j_axis = np.array([direction[0], direction[1], 0.0])
    normal = np.array([-direction[1], direction[0], 0.0])
    return JumpPlaneSpec(
        theta_tg=theta_tg,
        case_name=name,
        case_pairs=pairs,
        p_j1=p_j1,
        p_j2=p_j2,
        j_axis=j_axis,
        plane_normal=normal,
        j_offsets=(t1, -t2),
        shares=(s1, s2),
        stance_feet=feet,
        target_planar=(d_xy, float(p_tg[2]), float(theta_land)),
        vertical=bool(vertical and d_xy == 0.0),
    )


def sagittal_plane(target, theta_land: float = 0.0) -> JumpPlaneSpec:
    """Plane for the humanoid sagittal jump: x-z through the ankle.

    target is (x, z) of the landing CoM in absolute planar coordinates
    (origin at the ankle contact on the ground).
    """
    target = np.asarray(target, float)
    if target.shape != (2,) or not np.isfinite(target).all():
        raise PlaneError("sagittal target must be (x, z)")
    if target[1] <= 0:
        raise PlaneError("landing CoM height must be positive")
    origin = np.zeros(3)
    return JumpPlaneSpec(
        theta_tg=0.0,
        case_name="sagittal",
        case_pairs=(),
        p_j1=origin,
        p_j2=origin,
        j_axis=np.array([1.0, 0.0, 0.0]),
        plane_normal=np.array([0.0, 1.0, 0.0]),
        j_offsets=(0.0,),
        shares=(),
        stance_feet=np.zeros((1, 3)),
        target_planar=(float(target[0]), float(target[1]), float(theta_land)),
        layout="humanoid",
    )


def decompose(u, spec: JumpPlaneSpec) -> np.ndarray:
    """Split channel resultants (uJ1, uJ2, uz1, uz2) into per-foot forces.

    Returns (4, 3) world/body-frame forces.  Per edge the foot with the
    larger lever-rule share gets the rounded product and its partner the
    exact remainder (Sterbenz), so summing the two in-plane components
    reproduces the channel value bit for bit; only the world xy
    projection through the plane angle rounds.
    """
    u = np.asarray(u, float)
    if u.shape != (4,):
        raise PlaneError("u must be (uJ1, uJ2, uz1, uz2)")
    return decompose_batch(u[None, :], spec)[0]


def decompose_inplane(u: np.ndarray, spec: JumpPlaneSpec):
    """Per-foot in-plane components (f_J, f_z) of channel resultants.

    Accepts (4,) or (N, 4) channel samples; returns matching (…, 4)
    arrays.  For each channel the foot with the larger barycentric share
    takes the rounded product u * share and its partner the remainder
    u - that, which is exact because the product lies within a factor of
    two of u; the pair therefore sums back to u bit for bit.
    """
    if spec.layout != "quad":
        raise PlaneError("force decomposition is defined for the quadruped layout")
    u = np.asarray(u, float)
    squeeze = u.ndim == 1
    if squeeze:
        u = u[None, :]
    if u.ndim != 2 or u.shape[1] != 4:
        raise PlaneError("u must be (uJ1, uJ2, uz1, uz2) samples")
    n = u.shape[0]
    f_j = np.zeros((n, 4))
    f_z = np.zeros((n, 4))
    for j, (m, l) in enumerate(spec.case_pairs):
        share = spec.shares[j]
        big, small = (l, m) if share >= 0.5 else (m, l)
        frac = share if share >= 0.5 else 1.0 - share
        f_j[:, big] = u[:, j] * frac
        f_j[:, small] = u[:, j] - f_j[:, big]
        f_z[:, big] = u[:, 2 + j] * frac
        f_z[:, small] = u[:, 2 + j] - f_z[:, big]
    if squeeze:
        return f_j[0], f_z[0]
    return f_j, f_z


def decompose_batch(u: np.ndarray, spec: JumpPlaneSpec) -> np.ndarray:
    """Vectorized decompose for (N, 4) channel samples -> (N, 4, 3)."""
    f_j, f_z = decompose_inplane(u, spec)
    c, s = math.cos(spec.theta_tg), math.sin(spec.theta_tg)
    return np.stack([f_j * c, f_j * s, f_z], axis=-1)


def inplane_components(forces: np.ndarray, spec: JumpPlaneSpec):
    """Per-foot (f_J, f_z) planar components of (…, 4, 3) forces."""
    f = np.asarray(forces, float)
    f_j = f[..., 0] * spec.j_axis[0] + f[..., 1] * spec.j_axis[1]
    return f_j, f[..., 2]


def com_torque(forces, foot_positions, p_com) -> np.ndarray:
    """Net torque of foot forces about the CoM; (…, 3)."""
    f = np.asarray(forces, float)
    p = np.asarray(foot_positions, float)
    com = np.asarray(p_com, float)
    r = p - com[..., None, :] if com.ndim else p - com
    return np.cross(r, f).sum(axis=-2)
