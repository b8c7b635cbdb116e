"""Coarse-to-fine relocalization against a planar-patch map.

A jump ends with wheels-off-the-ground uncertainty: odometry alone
cannot say where the robot landed.  Recovery runs in two stages.  The
coarse stage poses relocalization as consensus maximization over a
3-DOF pose (yaw and planar translation at a known height) and solves it
globally with best-first branch and bound, pruning boxes whose
optimistic bound cannot beat the incumbent.  The fine stage takes the
winning pose and polishes all six degrees of freedom with a damped
least-squares fit of point-to-plane residuals under a robust kernel.

Residuals use the plane form n·p + d = 0 with unit normals, so a
point's distance to a patch is just |n·q + d| of the transformed point.
At the cloud sizes this is built for (a few thousand points, tens of
patches) the dense point-by-patch residual matrix is the acceleration
structure; nothing fancier pays for itself.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

EPS_R = 0.1

# Domain bounds: yaw is a full circle, translation covers twice the
# largest jumping region.
U_THETA = math.pi
U_XY = 2.0

MIN_THETA = math.pi / 180.0
MIN_XY = 0.02


class DegenerateGeometryError(ValueError):
    """Map geometry leaves pose directions unconstrained."""

    def __init__(self, directions):
        self.directions = tuple(directions)
        super().__init__(
            "degenerate geometry: unconstrained directions: " + ", ".join(self.directions)
        )


@dataclass(frozen=True)
class PlanarPatchMap:
    """Plane set {(n, d)} with n·p + d = 0 and unit normals."""

    normals: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.normals, float)
        d = np.asarray(self.offsets, float)
        if n.ndim != 2 or n.shape[1] != 3 or n.shape[0] == 0:
            raise ValueError("normals must be a nonempty (M, 3) array")
        if d.shape != (n.shape[0],):
            raise ValueError("offsets must match the number of normals")
        if not (np.isfinite(n).all() and np.isfinite(d).all()):
            raise ValueError("map entries must be finite")
        if np.abs(np.linalg.norm(n, axis=1) - 1.0).max() > 1e-9:
            raise ValueError("normals must be unit length")
        object.__setattr__(self, "normals", n)
        object.__setattr__(self, "offsets", d)

    def __len__(self) -> int:
        return self.normals.shape[0]

    def residuals(self, points: np.ndarray) -> np.ndarray:
        """Signed point-to-plane residuals, shape (N, M)."""
        return points @ self.normals.T + self.offsets

    def nearest(self, points: np.ndarray) -> tuple:
        """Per point: (signed residual to, index of) the closest patch."""
        res = self.residuals(points)
        idx = np.argmin(np.abs(res), axis=1)
        return res[np.arange(points.shape[0]), idx], idx


def load_patch_map(path) -> PlanarPatchMap:
    """Read 'nx ny nz d' lines; scale is canonicalized to unit normals."""
    normals, offsets = [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 'nx ny nz d', got {raw.strip()!r}")
            try:
                nx, ny, nz, d = (float(p) for p in parts)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric patch entry") from None
            norm = math.hypot(nx, math.hypot(ny, nz))
            if norm < 1e-12:
                raise ValueError(f"{path}:{lineno}: zero-length normal")
            normals.append((nx / norm, ny / norm, nz / norm))
            offsets.append(d / norm)
    if not normals:
        raise ValueError(f"{path}: empty patch map")
    return PlanarPatchMap(np.array(normals), np.array(offsets))


def load_point_cloud(path) -> np.ndarray:
    """Read 'x y z' lines into an (N, 3) array."""
    pts = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'x y z', got {raw.strip()!r}")
            try:
                pts.append([float(p) for p in parts])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric point entry") from None
    if not pts:
        raise ValueError(f"{path}: empty point cloud")
    return np.array(pts)


@dataclass(frozen=True)
class PoseHypothesis:
    """Yaw-and-translation pose at a fixed height z*."""

    theta: float
    x: float
    y: float
    z_star: float = 0.0

    def __post_init__(self):
        if abs(self.theta) > U_THETA + 1e-12:
            raise ValueError("|theta| exceeds the search domain (pi)")
        if abs(self.x) > U_XY + 1e-12 or abs(self.y) > U_XY + 1e-12:
            raise ValueError("|x| and |y| must stay within the 2 m search domain")

    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z_star])

    def apply(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation().T + self.translation()


def consensus(pose: PoseHypothesis, points, patch_map: PlanarPatchMap, eps_r: float = EPS_R) -> int:
    """Count points whose nearest patch accepts them within eps_r."""
    points = np.asarray(points, float)
    if points.ndim != 2 or points.shape[1] != 3 or points.shape[0] == 0:
        raise ValueError("points must be a nonempty (N, 3) array")
    res = patch_map.residuals(pose.apply(points))
    return int(np.count_nonzero(np.min(np.abs(res), axis=1) <= eps_r))


@dataclass(frozen=True)
class SearchBox:
    """Axis-aligned box in (theta, x, y) with half-widths."""

    center: np.ndarray
    half: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.center, float)
        h = np.asarray(self.half, float)
        if c.shape != (3,) or h.shape != (3,):
            raise ValueError("center and half must be 3-vectors")
        if not np.all(h > 0):
            raise ValueError("half-widths must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "half", h)

    def center_pose(self, z_star: float) -> PoseHypothesis:
        return PoseHypothesis(float(self.center[0]), float(self.center[1]), float(self.center[2]), z_star)


def box_bounds(
    box: SearchBox, points, patch_map: PlanarPatchMap, eps_r: float = EPS_R, z_star: float = 0.0
) -> tuple:
    """Consensus bounds over a box.

    The center hypothesis is attainable, so its count lower-bounds the
    box optimum.  Any pose in the box moves a point from its centered
    image by at most 2 sin(u_theta/2)·|p| + hypot(u_x, u_y); inflating
    the acceptance threshold by that much upper-bounds every hypothesis
    the box contains.
    """
    points = np.asarray(points, float)
    if points.ndim != 2 or points.shape[1] != 3 or points.shape[0] == 0:
        raise ValueError("points must be a nonempty (N, 3) array")
    pose = box.center_pose(z_star)
    res = np.min(np.abs(patch_map.residuals(pose.apply(points))), axis=1)
    lower = int(np.count_nonzero(res <= eps_r))
    delta = 2.0 * math.sin(min(float(box.half[0]), math.pi) / 2.0) * np.linalg.norm(points, axis=1)
    delta += math.hypot(float(box.half[1]), float(box.half[2]))
    upper = int(np.count_nonzero(res <= eps_r + delta))
    return lower, upper


@dataclass(frozen=True)
class BnbResult:
    pose: PoseHypothesis
    consensus: int
    nodes_expanded: int


def bnb_search(
    points,
    patch_map: PlanarPatchMap,
    *,
    z_star: float = 0.0,
    eps_r: float = EPS_R,
    min_theta: float = MIN_THETA,
    min_xy: float = MIN_XY,
    domain: SearchBox | None = None,
) -> BnbResult:
    """Globally search poses by best-first branch and bound.

    Boxes are expanded in decreasing upper-bound order (ties broken by
    lexicographic center so runs are reproducible), each expansion
    splitting every dimension still above its terminal resolution.
    A box dies when its upper bound cannot beat the incumbent; the
    search ends when no open box can.
    """
    points = np.asarray(points, float)
    if points.ndim != 2 or points.shape[1] != 3 or points.shape[0] == 0:
        raise ValueError("points must be a nonempty (N, 3) array")
    if len(patch_map) == 0:
        raise ValueError("patch map is empty")
    root = domain or SearchBox(np.zeros(3), np.array([U_THETA, U_XY, U_XY]))
    norms = np.linalg.norm(points, axis=1)

    best_pose = root.center_pose(z_star)
    best = 0
    best_res = math.inf
    heap: list = []
    seq = 0

    def push(box: SearchBox):
        nonlocal best, best_pose, best_res, seq
        pose = box.center_pose(z_star)
        res = np.min(np.abs(patch_map.residuals(pose.apply(points))), axis=1)
        lo = int(np.count_nonzero(res <= eps_r))
        delta = 2.0 * math.sin(min(float(box.half[0]), math.pi) / 2.0) * norms
        delta += math.hypot(float(box.half[1]), float(box.half[2]))
        up = int(np.count_nonzero(res <= eps_r + delta))
        # Equal counts prefer lower clipped residual: inside a consensus
        # plateau every center ties on count, and the residual pulls the
        # incumbent to the plateau's middle, which is what makes the
        # returned pose accurate to the terminal resolution.
        clipped = float(np.minimum(res, eps_r).sum())
        if lo > best or (lo == best and clipped < best_res):
            best = lo
            best_res = clipped
            best_pose = pose
        heapq.heappush(heap, (-up, tuple(box.center), seq, box, up))
        seq += 1

    push(root)
    expanded = 0
    while heap:
        neg_up, _, _, box, up = heapq.heappop(heap)
        if up < best:
            # Best-first order: nothing left can reach the incumbent.
            break
        splittable = [
            box.half[0] > min_theta,
            box.half[1] > min_xy,
            box.half[2] > min_xy,
        ]
        if not any(splittable):
            continue
        expanded += 1
        offsets = [(-0.5, 0.5) if s else (0.0,) for s in splittable]
        scale = np.where(splittable, 0.5, 1.0)
        for a in offsets[0]:
            for b in offsets[1]:
                for c in offsets[2]:
                    shift = np.array([a, b, c]) * box.half
                    push(SearchBox(box.center + shift, box.half * scale))
    return BnbResult(best_pose, best, expanded)


def so3_exp(w: np.ndarray) -> np.ndarray:
    """Rotation matrix of a rotation vector."""
    w = np.asarray(w, float)
    angle = np.linalg.norm(w)
    K = np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])
    if angle < 1e-12:
        return np.eye(3) + K
    return (
        np.eye(3)
        + math.sin(angle) / angle * K
        + (1.0 - math.cos(angle)) / angle**2 * (K @ K)
    )


def so3_log(R: np.ndarray) -> np.ndarray:
    """Rotation vector of a rotation matrix."""
    cos = max(-1.0, min(1.0, (np.trace(R) - 1.0) / 2.0))
    angle = math.acos(cos)
    if angle < 1e-12:
        return np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) / 2.0
    if abs(angle - math.pi) < 1e-6:
        # Near pi the axis comes from the symmetric part.
        A = (R + np.eye(3)) / 2.0
        axis = np.sqrt(np.maximum(np.diag(A), 0.0))
        k = int(np.argmax(axis))
        v = A[:, k] / max(axis[k], 1e-12)
        v = v / np.linalg.norm(v)
        return angle * v
    return (
        angle
        / (2.0 * math.sin(angle))
        * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    )


_DOF_NAMES = ("rot-x", "rot-y", "rot-z", "trans-x", "trans-y", "trans-z")


@dataclass
class RefineResult:
    rotation: np.ndarray
    translation: np.ndarray
    cost: float
    cost_history: list
    iterations: int
    converged: bool

    @property
    def pose_matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T


def _huber_weights(r: np.ndarray, scale: float) -> np.ndarray:
    a = np.abs(r)
    w = np.ones_like(r)
    mask = a > scale
    w[mask] = scale / a[mask]
    return w


def _huber_cost(r: np.ndarray, scale: float) -> float:
    a = np.abs(r)
    quad = a <= scale
    return float(np.sum(0.5 * r[quad] ** 2) + np.sum(scale * (a[~quad] - 0.5 * scale)))


def refine_pose(
    seed,
    points,
    patch_map: PlanarPatchMap,
    *,
    iterations: int = 30,
    eps_r: float = EPS_R,
    prior=None,
    degeneracy_rtol: float = 1e-6,
) -> RefineResult:
    """Polish a 6-DOF pose with damped least squares on plane residuals.

    Each iteration re-associates every point to its nearest patch,
    weighs residuals with a Huber kernel scaled to the consensus
    threshold, and takes a Levenberg-Marquardt step on (rotation,
    translation).  Steps that do not reduce the robust cost are
    rejected and the damping raised, so the accepted-cost sequence
    never increases.

    seed: PoseHypothesis or a 4x4 pose matrix.
    prior: optional (pose_matrix, covariance6) pair measured for the
        same pose; adds a whitened 6-vector residual [rot, trans].

    Raises DegenerateGeometryError when the undamped normal matrix has
    near-null directions (e.g., a single-plane map), naming them.
    """
    points = np.asarray(points, float)
    if points.ndim != 2 or points.shape[1] != 3 or points.shape[0] == 0:
        raise ValueError("points must be a nonempty (N, 3) array")
    if isinstance(seed, PoseHypothesis):
        R = seed.rotation()
        t = seed.translation()
    else:
        T = np.asarray(seed, float)
        if T.shape != (4, 4):
            raise ValueError("seed must be a PoseHypothesis or a 4x4 matrix")
        R = T[:3, :3].copy()
        t = T[:3, 3].copy()

    prior_T = prior_Winv = None
    if prior is not None:
        prior_T, prior_cov = prior
        prior_T = np.asarray(prior_T, float)
        prior_cov = np.asarray(prior_cov, float)
        if prior_T.shape != (4, 4) or prior_cov.shape != (6, 6):
            raise ValueError("prior must be (4x4 pose, 6x6 covariance)")
        # Whiten with the inverse Cholesky factor.
        prior_Winv = np.linalg.cholesky(np.linalg.inv(prior_cov))

    def residuals_and_jac(Rc, tc):
        q = points @ Rc.T + tc
        r, idx = patch_map.nearest(q)
        n = patch_map.normals[idx]
        # d r / d (w, u) for q = exp(w) R p + t + u at w=0, u=0:
        # dq/dw = -[q]x (left perturbation), dq/du = I.
        J = np.empty((points.shape[0], 6))
        J[:, 0] = n[:, 1] * q[:, 2] - n[:, 2] * q[:, 1]
        J[:, 1] = n[:, 2] * q[:, 0] - n[:, 0] * q[:, 2]
        J[:, 2] = n[:, 0] * q[:, 1] - n[:, 1] * q[:, 0]
        J[:, 0:3] *= -1.0
        J[:, 3:6] = n
        return r, J

    def prior_block(Rc, tc):
        dR = prior_T[:3, :3].T @ Rc
        rw = so3_log(dR)
        rt = tc - prior_T[:3, 3]
        r6 = prior_Winv.T @ np.concatenate([rw, rt])
        # Jacobian of [log(R_p^T exp(w) R), t + u - t_p] at zero is
        # approximately [I 0; 0 I] in the whitened frame for small w.
        J6 = prior_Winv.T @ np.eye(6)
        return r6, J6

    def total_cost(Rc, tc):
        r, _ = residuals_and_jac(Rc, tc)
        c = _huber_cost(r, eps_r)
        if prior_Winv is not None:
            r6, _ = prior_block(Rc, tc)
            c += 0.5 * float(r6 @ r6)
        return c

    lam = 1e-4
    cost = total_cost(R, t)
    history = [cost]
    converged = False
    it = 0
    for it in range(1, iterations + 1):
        r, J = residuals_and_jac(R, t)
        w = _huber_weights(r, eps_r)
        H = (J * w[:, None]).T @ J
        g = (J * w[:, None]).T @ r
        if prior_Winv is not None:
            r6, J6 = prior_block(R, t)
            H += J6.T @ J6
            g += J6.T @ r6
        eigval, eigvec = np.linalg.eigh(H)
        weak = eigval < degeneracy_rtol * max(eigval[-1], 1e-12)
        if np.any(weak):
            names = []
            for k in np.nonzero(weak)[0]:
                names.append(_DOF_NAMES[int(np.argmax(np.abs(eigvec[:, k])))])
            raise DegenerateGeometryError(sorted(set(names)))
        stepped = False
        for _ in range(12):
            try:
                dx = np.linalg.solve(H + lam * np.diag(np.diag(H)), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            dR = so3_exp(dx[:3])
            R_new = dR @ R
            t_new = dR @ t + dx[3:]
            new_cost = total_cost(R_new, t_new)
            if new_cost < cost:
                R, t, cost = R_new, t_new, new_cost
                history.append(cost)
                lam = max(lam / 3.0, 1e-10)
                stepped = True
                break
            lam *= 10.0
        if not stepped:
            converged = True
            break
        if len(history) > 1 and history[-2] - history[-1] < 1e-14 * max(1.0, history[-2]):
            converged = True
            break
    return RefineResult(R, t, cost, history, it, converged)
