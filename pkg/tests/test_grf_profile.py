"""Waypoint-to-force-profile transform and its round-trip identity."""

import math

import numpy as np
import pytest

from jumpkit.grf_profile import (
    OPT_DIMS,
    GRFProfile,
    OptVector,
    PhaseTimes,
    TransformError,
    _snap_times,
    ballistic_flight,
    initial_planar_state,
    landing_target,
    waypoints_to_profile,
)
from jumpkit.jump_plane import build_plane, sagittal_plane
from jumpkit.optimizer import build_search_space
from jumpkit.robot_model import planar_rollout


def _roundtrip_errors(vec, spec, params, dt=1e-3):
    """Max waypoint and landing deviation of the profile's own rollout."""
    prof = waypoints_to_profile(vec, spec, params, dt)
    u, _ = prof.sample_grid()
    tr = planar_rollout(u, spec.stance_geometry(params), initial_planar_state(vec, spec), params, dt)
    times = prof.times
    idxs = (
        [times.n1 // 2, times.n1, times.n2] if vec.mode == "agile" else [times.n1 // 2]
    )
    errs = []
    for row, k in zip(vec.waypoints, idxs):
        errs += [
            abs(tr.x[k] - row[0]),
            abs(tr.z[k] - row[1]),
            abs(tr.theta[k] - row[2]),
        ]
    takeoff = tuple(tr.final_state().as_array())
    land = ballistic_flight(takeoff, times.flight_duration, params.gravity)
    tgt = landing_target(vec, spec)
    errs += [abs(land[0] - tgt[0]), abs(land[1] - tgt[1]), abs(land[2] - tgt[2])]
    return max(float(e) for e in errs)


def _random_vectors(mode, params, n, seed):
    rng = np.random.default_rng(seed)
    space = build_search_space(mode, params)
    out = []
    while len(out) < n:
        raw = rng.uniform(space.lower, space.upper)
        out.append(space.decode(raw))
    return out


@pytest.mark.parametrize("mode", ["omni", "agile", "humanoid"])
def test_roundtrip_identity_on_random_vectors(mode, mc, hum):
    params = hum if mode == "humanoid" else mc
    if mode == "humanoid":
        spec = sagittal_plane([1.2, 0.6])
    else:
        spec = build_plane([0.8, 0.3, 0.3], params.default_stance_feet())
    n_ok = 0
    for vec in _random_vectors(mode, params, 150, seed=hash(mode) % 2**32):
        try:
            err = _roundtrip_errors(vec, spec, params)
        except TransformError:
            continue
        n_ok += 1
        assert err < 1e-6
    assert n_ok >= 15  # enough of the box transforms to exercise the identity


def test_opt_vector_layouts():
    v5 = OptVector("omni", [0.1, 0.3, 0.05, 0.25, 0.6])
    assert v5.waypoints.shape == (1, 3)
    assert v5.raw_times == (0.25, 0.25, 0.6)
    full = v5.to_full12()
    assert full.shape == (12,)
    assert tuple(full[9:]) == (0.25, 0.25, 0.6)

    v12 = OptVector("agile", [0.1, 0.3, 0.0, 0.2, 0.35, 0.1, 0.4, 0.4, 0.3, 0.2, 0.28, 0.6])
    assert v12.waypoints.shape == (3, 3)
    assert v12.raw_times == (0.2, 0.28, 0.6)
    assert np.array_equal(v12.to_full12(), v12.values)

    v8 = OptVector("humanoid", [0.0, 0.8, 0.0, 0.1, 1.0, 0.1, 0.4, 0.9])
    assert v8.waypoints.shape == (1, 3)
    assert v8.raw_times == (0.4, 0.4, 0.9)
    with pytest.raises(TransformError):
        v8.to_full12()


def test_opt_vector_validation():
    with pytest.raises(TransformError, match="unknown mode"):
        OptVector("hop", [1.0])
    with pytest.raises(TransformError):
        OptVector("omni", [1.0, 2.0])
    with pytest.raises(TransformError):
        OptVector("omni", [1.0, 2.0, 3.0, np.nan, 5.0])


def test_snap_times_grid_alignment():
    t = _snap_times("omni", (0.2501, 0.2501, 0.61), 1e-3)
    assert t.n1 == t.n2 == 250
    assert t.t1 == pytest.approx(0.25)
    assert t.t3 == 0.61
    assert t.flight_duration == pytest.approx(0.36)
    # a too-short push still gets two integration steps
    t2 = _snap_times("omni", (1e-4, 1e-4, 0.3), 1e-3)
    assert t2.n1 == 2


def test_snap_times_validation():
    with pytest.raises(TransformError):
        _snap_times("omni", (0.25, 0.25, 0.61), 0.0)
    with pytest.raises(TransformError):
        _snap_times("omni", (-0.1, -0.1, 0.3), 1e-3)
    with pytest.raises(TransformError):
        _snap_times("omni", (0.3, 0.3, 0.3), 1e-3)  # no flight left
    with pytest.raises(TransformError, match="partial-stance"):
        _snap_times("agile", (0.2, 0.2004, 0.5), 1e-3)
    with pytest.raises(TransformError):
        _snap_times("omni", (math.nan, 0.2, 0.5), 1e-3)


def test_profile_validation_and_channel_names():
    times = _snap_times("omni", (0.25, 0.25, 0.6), 1e-3)
    lin = np.zeros((4, 2))
    quad = np.zeros((4, 3))
    mask = np.zeros(4, bool)
    prof = GRFProfile("omni", times, lin, quad, mask)
    assert prof.n_channels == 4
    assert prof.channel_names == ("uJ1", "uJ2", "uz1", "uz2")
    with pytest.raises(TransformError):
        GRFProfile("omni", times, np.zeros((3, 2)), quad, mask)
    with pytest.raises(TransformError):
        GRFProfile("omni", times, lin + np.nan, quad, mask)
    hum_times = _snap_times("humanoid", (0.4, 0.4, 0.9), 1e-3)
    hprof = GRFProfile("humanoid", hum_times, np.zeros((3, 2)), np.zeros((3, 3)), np.zeros(3, bool))
    assert hprof.channel_names == ("fx", "fz", "tau_y")


def test_eval_u_piecewise_branches():
    times = _snap_times("agile", (0.2, 0.3, 0.6), 1e-3)
    lin = np.tile([10.0, 5.0], (4, 1))
    quad = np.tile([2.0, 1.0, -3.0], (4, 1))
    mask = np.array([False, True, False, True])
    prof = GRFProfile("agile", times, lin, quad, mask)
    t_mid = 0.1
    assert np.allclose(prof.eval_u(t_mid), 10.0 + 5.0 * t_mid)
    t_p2 = 0.25
    expect = (2.0 + 1.0 * t_p2 - 3.0 * t_p2**2) * mask
    assert np.allclose(prof.eval_u(t_p2), expect)
    assert np.allclose(prof.eval_u(0.5), 0.0)  # flight
    # one-sided evaluation at the t1 boundary hits both branches
    below = prof.eval_u(times.t1, phase=1)
    above = prof.eval_u(times.t1, phase=2)
    assert np.allclose(below, 10.0 + 5.0 * times.t1)
    assert np.allclose(above, (2.0 + times.t1 - 3.0 * times.t1**2) * mask)
    with pytest.raises(ValueError):
        prof.eval_u(0.1, phase=4)
    # vectorized evaluation matches scalars
    ts = np.array([t_mid, t_p2, 0.5])
    batch = prof.eval_u(ts)
    assert batch.shape == (3, 4)
    assert np.allclose(batch[0], prof.eval_u(t_mid))


def test_sample_grid_left_endpoint_convention():
    times = _snap_times("agile", (0.02, 0.03, 0.1), 1e-2)
    lin = np.tile([1.0, 100.0], (4, 1))
    quad = np.tile([7.0, 0.0, 0.0], (4, 1))
    mask = np.array([False, True, False, True])
    prof = GRFProfile("agile", times, lin, quad, mask)
    u, t = prof.sample_grid()
    assert u.shape == (times.n2, 4)
    assert np.allclose(t, [0.0, 0.01, 0.02])
    assert np.allclose(u[0], 1.0)  # linear law at t = 0
    assert np.allclose(u[1], 2.0)  # still the full-stance law below t1
    assert np.allclose(u[2], [0.0, 7.0, 0.0, 7.0])  # gated quadratic law


def test_initial_state_conventions(mc, hum):
    quad_spec = build_plane([0.8, 0.0, 0.3], mc.default_stance_feet())
    vec = OptVector("omni", [0.1, 0.3, 0.05, 0.25, 0.6])
    st = initial_planar_state(vec, quad_spec)
    assert st.x == 0.0 and st.vx == 0.0
    assert st.z == pytest.approx(mc.stance_height)

    hvec = OptVector("humanoid", [0.02, 0.55, 0.1, 0.1, 0.7, 0.1, 0.4, 0.9])
    hspec = sagittal_plane([1.2, 0.6])
    hst = initial_planar_state(hvec, hspec)
    assert (hst.x, hst.z, hst.theta) == (0.02, 0.55, 0.1)


def test_landing_target_passthrough(mc):
    spec = build_plane([0.6, 0.3, 0.25], mc.default_stance_feet(), theta_land=0.15)
    vec = OptVector("omni", [0.1, 0.3, 0.05, 0.25, 0.6])
    tgt = landing_target(vec, spec)
    assert tgt == pytest.approx([math.hypot(0.6, 0.3), 0.25, 0.15])


def test_ballistic_flight_closed_form():
    state = (0.1, 0.5, 0.02, 2.0, 3.0, 0.4)
    g = 9.81
    x, z, th, vx, vz, om = ballistic_flight(state, 0.3, g)
    assert x == pytest.approx(0.1 + 2.0 * 0.3)
    assert z == pytest.approx(0.5 + 3.0 * 0.3 - 0.5 * g * 0.09)
    assert th == pytest.approx(0.02 + 0.4 * 0.3)
    assert (vx, om) == (2.0, 0.4)
    assert vz == pytest.approx(3.0 - g * 0.3)
    # array tau broadcasts
    zs = ballistic_flight(state, np.array([0.0, 0.3]), g)[1]
    assert zs[0] == 0.5 and zs[1] == pytest.approx(z)


def test_transform_rejects_mismatched_plane(mc, hum):
    quad_spec = build_plane([0.8, 0.0, 0.3], mc.default_stance_feet())
    hvec = OptVector("humanoid", [0.0, 0.55, 0.0, 0.1, 0.7, 0.1, 0.4, 0.9])
    with pytest.raises(TransformError, match="does not fit"):
        waypoints_to_profile(hvec, quad_spec, hum)
    with pytest.raises(TransformError, match="OptVector"):
        waypoints_to_profile(np.zeros(5), quad_spec, mc)


def test_transform_verifies_its_own_solution(mc):
    # a representative omni vector transforms and the profile's stated
    # waypoints are hit to well under the verification tolerance
    spec = build_plane([1.0, 0.0, 0.25], mc.default_stance_feet())
    vec = OptVector("omni", [0.12, 0.26, -0.05, 0.24, 0.58])
    assert _roundtrip_errors(vec, spec, mc) < 1e-7
