"""Parametric reaction force profiles and the waypoint-to-force transform.

The optimizer never searches force trajectories directly.  A candidate
is a handful of state waypoints plus phase times; the transform turns
those into per-channel force polynomials whose discrete stance rollout
passes through the waypoints and whose ballistic flight hits the
landing target.  Searching in waypoint space keeps every candidate
dynamically consistent and shrinks the decision vector to 5 (omni),
12 (agile, with a partial-stance phase), or 8 (humanoid) numbers.

Channel force laws: linear in t on the full-stance phase [0, t1],
quadratic in t on the partial-stance phase (t1, t2] for the channels
that stay loaded, zero in flight.  Without a partial phase t2 = t1.
No continuity is imposed at t1.

The transform solves the exact discrete-time system on the integration
grid, so re-simulating a returned profile reproduces its waypoints and
landing to floating point noise, not to an integration tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .jump_plane import JumpPlaneSpec
from .robot_model import PlanarState, RobotParams, planar_rollout

MODES = ("omni", "agile", "humanoid")
OPT_DIMS = {"omni": 5, "agile": 12, "humanoid": 8}

_MIN_FLIGHT = 1e-9
_NEWTON_TOL = 1e-9
_NEWTON_MAX_ITER = 25
_VERIFY_TOL = 1e-7


class TransformError(ValueError):
    """Waypoint vector admits no consistent force profile."""


@dataclass(frozen=True)
class PhaseTimes:
    """Snapped phase boundaries: stance ends at t2, landing at t3.

    t1 and t2 sit on the integration grid (n1 and n2 steps of dt); the
    flight segment is handled in closed form and keeps t3 as given.
    """

    t1: float
    t2: float
    t3: float
    dt: float
    n1: int
    n2: int

    @property
    def flight_duration(self) -> float:
        return self.t3 - self.t2


@dataclass(frozen=True)
class OptVector:
    """Decision vector of one jump candidate.

    omni (5): waypoint (x, z, theta) at t1/2, then t1, t3.
    agile (12): waypoints at t1/2, t1, t2, then t1, t2, t3.
    humanoid (8): start pose (x, z, theta), waypoint at t1/2, t1, t3.

    Waypoints are absolute planar coordinates (x along the jump axis
    from the start projection, z height above ground).
    """

    mode: str
    values: np.ndarray

    def __post_init__(self):
        if self.mode not in OPT_DIMS:
            raise TransformError(f"unknown mode {self.mode!r}")
        v = np.asarray(self.values, float)
        if v.shape != (OPT_DIMS[self.mode],) or not np.isfinite(v).all():
            raise TransformError(
                f"{self.mode} vector needs {OPT_DIMS[self.mode]} finite values"
            )
        object.__setattr__(self, "values", v)

    @property
    def waypoints(self) -> np.ndarray:
        """Waypoint rows (x, z, theta), one per pinned stance instant."""
        if self.mode == "agile":
            return self.values[:9].reshape(3, 3)
        if self.mode == "humanoid":
            return self.values[3:6].reshape(1, 3)
        return self.values[:3].reshape(1, 3)

    @property
    def raw_times(self) -> tuple:
        """(t1, t2, t3) before grid snapping; t2 = t1 without a partial phase."""
        if self.mode == "agile":
            t1, t2, t3 = self.values[9:12]
            return (float(t1), float(t2), float(t3))
        t1, t3 = self.values[-2], self.values[-1]
        return (float(t1), float(t1), float(t3))

    def to_full12(self) -> np.ndarray:
        """Embed into the 12-entry agile layout (quadruped modes only)."""
        if self.mode == "agile":
            return self.values.copy()
        if self.mode == "omni":
            t1, _, t3 = self.raw_times
            out = np.zeros(12)
            out[:3] = self.values[:3]
            out[9:] = (t1, t1, t3)
            return out
        raise TransformError("humanoid vectors have no 12-entry embedding")


def _grid_samples(lin, quad, mask, times: PhaseTimes):
    """Left-endpoint channel samples on the stance grid -> (u, t)."""
    t = np.arange(times.n2) * times.dt
    u = np.empty((times.n2, lin.shape[0]))
    ts = t[: times.n1, None]
    u[: times.n1] = lin[:, 0] + ts * lin[:, 1]
    if times.n2 > times.n1:
        tq = t[times.n1 :, None]
        u[times.n1 :] = (quad[:, 0] + tq * quad[:, 1] + tq * tq * quad[:, 2]) * mask
    return u, t


@dataclass(frozen=True)
class GRFProfile:
    """Piecewise-polynomial resultant force plan.

    lin[c] = (c0, c1) gives channel c as c0 + c1 t on [0, t1]; quad[c]
    = (c0, c1, c2) gives c0 + c1 t + c2 t^2 on (t1, t2] where
    phase2_mask[c] is set (other channels are zero there); everything
    vanishes after t2.  Quadruped channels are (uJ1, uJ2, uz1, uz2),
    humanoid channels (f_x, f_z, tau_y).
    """

    mode: str
    times: PhaseTimes
    lin: np.ndarray
    quad: np.ndarray
    phase2_mask: np.ndarray

    def __post_init__(self):
        if self.mode not in MODES:
            raise TransformError(f"unknown mode {self.mode!r}")
        nc = 3 if self.mode == "humanoid" else 4
        lin = np.asarray(self.lin, float)
        quad = np.asarray(self.quad, float)
        mask = np.asarray(self.phase2_mask, bool)
        if lin.shape != (nc, 2) or quad.shape != (nc, 3) or mask.shape != (nc,):
            raise TransformError("profile coefficient shapes do not match the mode")
        if not (np.isfinite(lin).all() and np.isfinite(quad).all()):
            raise TransformError("profile coefficients must be finite")
        object.__setattr__(self, "lin", lin)
        object.__setattr__(self, "quad", quad)
        object.__setattr__(self, "phase2_mask", mask)

    @property
    def n_channels(self) -> int:
        return self.lin.shape[0]

    @property
    def channel_names(self) -> tuple:
        if self.mode == "humanoid":
            return ("fx", "fz", "tau_y")
        return ("uJ1", "uJ2", "uz1", "uz2")

    def eval_u(self, t, phase: int | None = None):
        """Channel forces at time(s) t -> (..., n_channels).

        phase forces one branch of the piecewise law (1 full stance,
        2 partial stance, 3 flight) regardless of t; the profile may
        step at the phase boundaries, so one-sided values need it.
        """
        t_arr = np.asarray(t, float)
        tt = t_arr[..., None]
        lin_v = self.lin[:, 0] + tt * self.lin[:, 1]
        quad_v = (
            self.quad[:, 0] + tt * self.quad[:, 1] + tt * tt * self.quad[:, 2]
        ) * self.phase2_mask
        if phase is not None:
            if phase == 1:
                out = lin_v
            elif phase == 2:
                out = quad_v
            elif phase == 3:
                out = np.zeros_like(lin_v)
            else:
                raise ValueError("phase must be 1, 2, or 3")
        else:
            t1, t2 = self.times.t1, self.times.t2
            in1 = (tt >= 0.0) & (tt <= t1)
            in2 = (tt > t1) & (tt <= t2)
            out = np.where(in1, lin_v, np.where(in2, quad_v, 0.0))
        if t_arr.ndim == 0:
            return out.reshape(self.n_channels)
        return out

    def sample_grid(self):
        """(u, t) on the stance grid; step k covers [k dt, (k+1) dt).

        Steps 0..n1-1 take the linear law, steps n1..n2-1 the gated
        quadratic law, matching how the transform discretized them.
        """
        return _grid_samples(self.lin, self.quad, self.phase2_mask, self.times)


def initial_planar_state(vec: OptVector, spec: JumpPlaneSpec) -> PlanarState:
    """Planar state at the start of the push, at rest."""
    if vec.mode == "humanoid":
        x0, z0, th0 = vec.values[:3]
        return PlanarState(x=float(x0), z=float(z0), theta=float(th0))
    z0 = -float(np.mean(spec.stance_feet[:, 2]))
    return PlanarState(z=z0)


def landing_target(vec: OptVector, spec: JumpPlaneSpec) -> np.ndarray:
    """Planar (x, z, theta) the flight must reach at t3.

    Coordinates are absolute in the jump plane frame whose origin sits on
    the stance ground below the initial CoM: a quadruped starts at x = 0,
    z = crouch height, so x is the travelled distance and z the landing
    CoM height; the humanoid's start pose is itself a design variable.
    """
    d_x, d_z, th_land = spec.target_planar
    return np.array([d_x, d_z, th_land])


def ballistic_flight(state, tau, g: float):
    """Advance a planar state tuple by free flight over tau (scalar or array).

    state is (x, z, theta, vx, vz, omega); returns the same layout with
    each entry shaped like tau.
    """
    x, z, th, vx, vz, om = state
    tau = np.asarray(tau, float)
    return (
        x + vx * tau,
        z + vz * tau - 0.5 * g * tau * tau,
        th + om * tau,
        vx + np.zeros_like(tau),
        vz - g * tau,
        om + np.zeros_like(tau),
    )


def _snap_times(mode: str, raw_times, dt: float) -> PhaseTimes:
    t1, t2, t3 = raw_times
    if dt <= 0:
        raise TransformError("dt must be positive")
    if not (math.isfinite(t1) and math.isfinite(t2) and math.isfinite(t3)):
        raise TransformError("phase times must be finite")
    if t1 <= 0 or t2 < t1 or t3 <= t2:
        raise TransformError("phase times must satisfy 0 < t1 <= t2 < t3")
    n1 = max(2, int(round(t1 / dt)))
    if mode == "agile":
        n2 = int(round(t2 / dt))
        if n2 < n1 + 1:
            raise TransformError("partial-stance phase shorter than one step")
    else:
        n2 = n1
    t2s = n2 * dt
    if t3 - t2s <= _MIN_FLIGHT:
        raise TransformError("landing time leaves no flight segment")
    return PhaseTimes(t1=n1 * dt, t2=t2s, t3=float(t3), dt=dt, n1=n1, n2=n2)


def _fit_affine(response, targets) -> np.ndarray:
    """Solve response(c) = targets for an exactly determined affine map."""
    targets = np.asarray(targets, float)
    n = targets.size
    base = response(np.zeros(n))
    cols = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        cols.append(response(e) - base)
    mat = np.column_stack(cols)
    try:
        sol = np.linalg.solve(mat, targets - base)
    except np.linalg.LinAlgError:
        raise TransformError("waypoint constraints are degenerate for this timing")
    if not np.isfinite(sol).all():
        raise TransformError("waypoint constraints are degenerate for this timing")
    return sol


def _fit_min_norm(response, targets, n_unknowns: int):
    """Minimum-norm solution and null direction of a wide affine map."""
    targets = np.asarray(targets, float)
    base = response(np.zeros(n_unknowns))
    cols = []
    for i in range(n_unknowns):
        e = np.zeros(n_unknowns)
        e[i] = 1.0
        cols.append(response(e) - base)
    mat = np.column_stack(cols)
    rhs = targets - base
    sol, *_ = np.linalg.lstsq(mat, rhs, rcond=None)
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv[-1] < 1e-9 * sv[0]:
        raise TransformError("force basis is rank-deficient for this phase timing")
    null = np.linalg.svd(mat)[2][-1]
    if np.max(np.abs(mat @ sol - rhs)) > 1e-8 * max(1.0, np.max(np.abs(rhs))):
        raise TransformError("waypoint targets unreachable in the force basis")
    return sol, null


def _solve_newton(residual, xi0: np.ndarray) -> np.ndarray:
    """Damped Newton with a finite difference Jacobian."""
    xi = np.asarray(xi0, float).copy()
    r = residual(xi)
    norm = float(np.max(np.abs(r)))
    for _ in range(_NEWTON_MAX_ITER):
        if norm < _NEWTON_TOL:
            return xi
        jac = np.empty((r.size, xi.size))
        for i in range(xi.size):
            eps = 1e-6 * max(1.0, abs(xi[i]))
            probe = xi.copy()
            probe[i] += eps
            jac[:, i] = (residual(probe) - r) / eps
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(jac, -r, rcond=None)[0]
        lam = 1.0
        accepted = False
        while lam > 1e-4:
            trial = xi + lam * step
            rt = residual(trial)
            nt = float(np.max(np.abs(rt)))
            if nt < norm or nt < _NEWTON_TOL:
                xi, r, norm = trial, rt, nt
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            raise TransformError("waypoint map stalled on the rotation targets")
    if norm < _NEWTON_TOL:
        return xi
    raise TransformError("waypoint map did not converge on the rotation targets")


def _solve_omni(vec, spec, params, times):
    geom = spec.stance_geometry(params)
    state0 = initial_planar_state(vec, spec)
    if state0.z <= 0:
        raise TransformError("stance feet must sit below the CoM")
    g = params.gravity
    dt, n1 = times.dt, times.n1
    k_half = n1 // 2
    tf = times.flight_duration
    wx, wz, wth = vec.waypoints[0]
    x_land, z_land, th_land = landing_target(vec, spec)
    mask = np.zeros(4, bool)
    quad = np.zeros((4, 3))

    def rollout(lin):
        u, _ = _grid_samples(lin, quad, mask, times)
        return planar_rollout(u, geom, state0, params, dt)

    # Both J channels share one linear law; x sees only their sum.
    def x_resp(c):
        lin = np.zeros((4, 2))
        lin[0] = c
        lin[1] = c
        tr = rollout(lin)
        return np.array([tr.x[k_half], tr.x[n1] + tr.vx[n1] * tf])

    a_j = _fit_affine(x_resp, [wx, x_land])

    # z sees only the vertical sum s = uz1 + uz2.
    def z_resp(c):
        lin = np.zeros((4, 2))
        lin[2] = c / 2.0
        lin[3] = c / 2.0
        tr = rollout(lin)
        return np.array(
            [tr.z[k_half], tr.z[n1] + tr.vz[n1] * tf - 0.5 * g * tf * tf]
        )

    s_c = _fit_affine(z_resp, [wz, z_land])

    # The vertical split d = uz1 - uz2 moves torque without moving the
    # CoM, so with a_j and s_c frozen the rotation rows are affine in d.
    def lin_for(d):
        lin = np.empty((4, 2))
        lin[0] = a_j
        lin[1] = a_j
        lin[2] = (s_c + d) / 2.0
        lin[3] = (s_c - d) / 2.0
        return lin

    def th_resp(d):
        tr = rollout(lin_for(d))
        return np.array([tr.theta[k_half], tr.theta[n1] + tr.omega[n1] * tf])

    d_c = _fit_affine(th_resp, [wth, th_land])
    return lin_for(d_c), quad, mask


def _solve_agile(vec, spec, params, times):
    geom = spec.stance_geometry(params)
    state0 = initial_planar_state(vec, spec)
    if state0.z <= 0:
        raise TransformError("stance feet must sit below the CoM")
    g = params.gravity
    dt, n1, n2 = times.dt, times.n1, times.n2
    k_half = n1 // 2
    tf = times.flight_duration
    wp = vec.waypoints
    x_land, z_land, th_land = landing_target(vec, spec)
    # Channel pair 1 unloads at t1; only pair 2 pushes through phase 2.
    mask = np.array([False, True, False, True])

    def build(cx, cz, d):
        lin = np.empty((4, 2))
        lin[0] = cx[:2]
        lin[1] = cx[:2]
        lin[2] = (cz[:2] + d) / 2.0
        lin[3] = (cz[:2] - d) / 2.0
        quad = np.zeros((4, 3))
        quad[1] = cx[2:]
        quad[3] = cz[2:]
        return lin, quad

    def rollout(cx, cz, d):
        lin, quad = build(cx, cz, d)
        u, _ = _grid_samples(lin, quad, mask, times)
        return planar_rollout(u, geom, state0, params, dt)

    # Translation blocks are wide (5 coefficients, 4 rows); keep the
    # null direction so rotation can trade force history for torque.
    def x_resp(cx):
        tr = rollout(cx, np.zeros(5), np.zeros(2))
        return np.array(
            [tr.x[k_half], tr.x[n1], tr.x[n2], tr.x[n2] + tr.vx[n2] * tf]
        )

    cx0, null_x = _fit_min_norm(
        x_resp, [wp[0, 0], wp[1, 0], wp[2, 0], x_land], 5
    )

    def z_resp(cz):
        tr = rollout(np.zeros(5), cz, np.zeros(2))
        return np.array(
            [
                tr.z[k_half],
                tr.z[n1],
                tr.z[n2],
                tr.z[n2] + tr.vz[n2] * tf - 0.5 * g * tf * tf,
            ]
        )

    cz0, null_z = _fit_min_norm(
        z_resp, [wp[0, 1], wp[1, 1], wp[2, 1], z_land], 5
    )

    th_targets = np.array([wp[0, 2], wp[1, 2], wp[2, 2], th_land])

    def residual(xi):
        cx = cx0 + xi[0] * null_x
        cz = cz0 + xi[1] * null_z
        tr = rollout(cx, cz, xi[2:])
        got = np.array(
            [
                tr.theta[k_half],
                tr.theta[n1],
                tr.theta[n2],
                tr.theta[n2] + tr.omega[n2] * tf,
            ]
        )
        return got - th_targets

    xi = _solve_newton(residual, np.zeros(4))
    cx = cx0 + xi[0] * null_x
    cz = cz0 + xi[1] * null_z
    lin, quad = build(cx, cz, xi[2:])
    return lin, quad, mask


def _solve_humanoid(vec, spec, params, times):
    geom = spec.stance_geometry(params)
    state0 = initial_planar_state(vec, spec)
    if state0.z <= 0:
        raise TransformError("start height must be positive")
    g = params.gravity
    dt, n1 = times.dt, times.n1
    k_half = n1 // 2
    tf = times.flight_duration
    wx, wz, wth = vec.waypoints[0]
    x_land, z_land, th_land = landing_target(vec, spec)
    if z_land <= 0:
        raise TransformError("landing height must be positive")
    mask = np.zeros(3, bool)
    quad = np.zeros((3, 3))

    def rollout(lin):
        u, _ = _grid_samples(lin, quad, mask, times)
        return planar_rollout(u, geom, state0, params, dt)

    def x_resp(c):
        lin = np.zeros((3, 2))
        lin[0] = c
        tr = rollout(lin)
        return np.array([tr.x[k_half], tr.x[n1] + tr.vx[n1] * tf])

    cx = _fit_affine(x_resp, [wx, x_land])

    def z_resp(c):
        lin = np.zeros((3, 2))
        lin[1] = c
        tr = rollout(lin)
        return np.array(
            [tr.z[k_half], tr.z[n1] + tr.vz[n1] * tf - 0.5 * g * tf * tf]
        )

    cz = _fit_affine(z_resp, [wz, z_land])

    # With the ankle force fixed, the free torque channel is the only
    # remaining input and the rotation rows are exactly affine in it.
    def lin_for(ct):
        lin = np.zeros((3, 2))
        lin[0] = cx
        lin[1] = cz
        lin[2] = ct
        return lin

    def th_resp(ct):
        tr = rollout(lin_for(ct))
        return np.array([tr.theta[k_half], tr.theta[n1] + tr.omega[n1] * tf])

    ct = _fit_affine(th_resp, [wth, th_land])
    return lin_for(ct), quad, mask


_SOLVERS = {"omni": _solve_omni, "agile": _solve_agile, "humanoid": _solve_humanoid}


def _verify(prof: GRFProfile, vec: OptVector, spec: JumpPlaneSpec, params: RobotParams):
    u, _ = prof.sample_grid()
    state0 = initial_planar_state(vec, spec)
    tr = planar_rollout(u, spec.stance_geometry(params), state0, params, prof.times.dt)
    tf = prof.times.flight_duration
    n1, n2 = prof.times.n1, prof.times.n2
    k_half = n1 // 2
    idx = (k_half, n1, n2) if vec.mode == "agile" else (k_half,)
    wp = vec.waypoints
    err = 0.0
    for row, k in enumerate(idx):
        err = max(err, abs(tr.x[k] - wp[row, 0]))
        err = max(err, abs(tr.z[k] - wp[row, 1]))
        err = max(err, abs(tr.theta[k] - wp[row, 2]))
    land = ballistic_flight(
        (tr.x[n2], tr.z[n2], tr.theta[n2], tr.vx[n2], tr.vz[n2], tr.omega[n2]),
        tf,
        params.gravity,
    )
    target = landing_target(vec, spec)
    err = max(err, abs(float(land[0]) - target[0]))
    err = max(err, abs(float(land[1]) - target[1]))
    err = max(err, abs(float(land[2]) - target[2]))
    if not err < _VERIFY_TOL:
        raise TransformError(f"profile verification residual {err:.3e} too large")


def waypoints_to_profile(
    vec: OptVector,
    spec: JumpPlaneSpec,
    params: RobotParams,
    dt: float = 1e-3,
) -> GRFProfile:
    """Map a decision vector to the force profile that realizes it.

    Solves the discrete stance dynamics exactly: the profile's rollout
    passes through the vector's waypoints at their grid instants and
    its ballistic flight reaches the plane's landing target at t3.
    Translation channels come from small linear solves; the rotation
    channels from an affine fit (omni, humanoid) or a short Newton
    iteration over the translation null space (agile).

    Raises TransformError when the timing leaves no valid grid, the
    constraint system is degenerate, or the iteration fails.
    """
    if not isinstance(vec, OptVector):
        raise TransformError("vec must be an OptVector")
    layout = "humanoid" if vec.mode == "humanoid" else "quad"
    if spec.layout != layout:
        raise TransformError(f"{vec.mode} vector does not fit a {spec.layout} plane")
    times = _snap_times(vec.mode, vec.raw_times, dt)
    lin, quad, mask = _SOLVERS[vec.mode](vec, spec, params, times)
    prof = GRFProfile(mode=vec.mode, times=times, lin=lin, quad=quad, phase2_mask=mask)
    _verify(prof, vec, spec, params)
    return prof
