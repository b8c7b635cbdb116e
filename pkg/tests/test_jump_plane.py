"""Jump plane construction and per-foot force decomposition."""

import math

import numpy as np
import pytest

from jumpkit.jump_plane import (
    _CASES,
    PlaneError,
    UnsupportedTargetError,
    build_plane,
    com_torque,
    decompose,
    decompose_batch,
    decompose_inplane,
    inplane_components,
    sagittal_plane,
)


@pytest.fixture
def feet(mc):
    return mc.default_stance_feet()


def test_cardinal_targets_pick_expected_cases(feet):
    cases = {
        (0.8, 0.0): ("front", ((0, 1), (2, 3))),
        (0.0, 0.8): ("left", ((0, 2), (1, 3))),
        (-0.8, 0.0): ("rear", ((2, 3), (0, 1))),
        (0.0, -0.8): ("right", ((1, 3), (0, 2))),
    }
    for (x, y), (name, pairs) in cases.items():
        spec = build_plane([x, y, 0.3], feet)
        assert spec.case_name == name
        assert spec.case_pairs == pairs


def test_forward_plane_geometry(feet):
    spec = build_plane([1.0, 0.0, 0.25], feet)
    assert spec.theta_tg == 0.0
    assert np.allclose(spec.j_axis, [1, 0, 0])
    assert np.allclose(spec.plane_normal, [0, 1, 0])
    # crossing points sit on the front/rear edges, on the target ray
    assert spec.p_j1[:2] == pytest.approx([feet[0, 0], 0.0])
    assert spec.p_j2[:2] == pytest.approx([feet[2, 0], 0.0])
    assert spec.j_offsets[0] == pytest.approx(feet[0, 0])
    assert spec.j_offsets[1] == pytest.approx(feet[2, 0])
    assert spec.j_offsets[0] > 0 > spec.j_offsets[1]
    # symmetric stance: the ray bisects both edges
    assert spec.shares == pytest.approx((0.5, 0.5))
    assert spec.target_planar == pytest.approx((1.0, 0.25, 0.0))


def test_oblique_target_angle_and_offsets(feet):
    spec = build_plane([0.5, 0.2, 0.3], feet)
    assert spec.theta_tg == pytest.approx(math.atan2(0.2, 0.5))
    assert spec.case_name == "front"
    # crossing points are collinear with the origin along the target ray
    for p, t in ((spec.p_j1, spec.j_offsets[0]), (spec.p_j2, spec.j_offsets[1])):
        assert p[:2] == pytest.approx(
            [t * math.cos(spec.theta_tg), t * math.sin(spec.theta_tg)]
        )
    assert 0.0 <= spec.shares[0] <= 1.0 and 0.0 <= spec.shares[1] <= 1.0


def test_force_conservation_is_exact_per_edge(feet):
    rng = np.random.default_rng(0)
    for target in ([0.6, 0.25, 0.3], [0.1, 0.7, 0.3], [-0.5, -0.45, 0.3]):
        spec = build_plane(target, feet + rng.uniform(-0.03, 0.03, (4, 3)))
        u = rng.normal(scale=80.0, size=(500, 4))
        f_j, f_z = decompose_inplane(u, spec)
        forces = decompose_batch(u, spec)
        for j, (m, l) in enumerate(spec.case_pairs):
            # each channel splits into a rounded product plus its exact
            # remainder: the pair sums back bit for bit
            assert np.all(f_j[:, l] + f_j[:, m] == u[:, j])
            assert np.all(f_z[:, l] + f_z[:, m] == u[:, 2 + j])
            # the z components survive the world projection unchanged
            assert np.all(forces[:, l, 2] + forces[:, m, 2] == u[:, 2 + j])
        # edge-grouped totals reproduce the summed resultants exactly
        (m1, l1), (m2, l2) = spec.case_pairs
        assert np.all(
            (f_j[:, l1] + f_j[:, m1]) + (f_j[:, l2] + f_j[:, m2]) == u[:, 0] + u[:, 1]
        )
        assert np.all(
            (f_z[:, l1] + f_z[:, m1]) + (f_z[:, l2] + f_z[:, m2]) == u[:, 2] + u[:, 3]
        )
        assert np.allclose(forces[..., 0], f_j * math.cos(spec.theta_tg))


def test_decompose_inplane_scalar_matches_batch(feet):
    spec = build_plane([0.4, 0.3, 0.3], feet)
    u = np.array([12.0, -3.0, 55.0, 40.0])
    f_j, f_z = decompose_inplane(u, spec)
    bj, bz = decompose_inplane(u[None, :], spec)
    assert np.array_equal(f_j, bj[0]) and np.array_equal(f_z, bz[0])
    assert decompose(u, spec).shape == (4, 3)


def test_decomposed_forces_lie_in_the_plane(feet):
    rng = np.random.default_rng(1)
    spec = build_plane([0.4, -0.5, 0.3], feet)
    u = rng.normal(scale=60.0, size=(100, 4))
    forces = decompose_batch(u, spec)
    assert np.allclose(forces @ spec.plane_normal, 0.0, atol=1e-12)


def test_com_torque_perpendicular_to_plane(feet):
    rng = np.random.default_rng(2)
    for _ in range(300):
        ang = rng.uniform(-math.pi, math.pi)
        target = [0.6 * math.cos(ang), 0.6 * math.sin(ang), 0.3]
        jitter = rng.uniform(-0.02, 0.02, size=(4, 3))
        try:
            spec = build_plane(target, feet + jitter)
        except PlaneError:
            continue
        u = rng.normal(scale=70.0, size=4)
        f = decompose(u, spec)
        com = spec.j_axis * rng.uniform(-0.1, 0.1) + [0, 0, rng.uniform(0.1, 0.3)]
        tau = com_torque(f, spec.stance_feet, com)
        assert abs(tau @ spec.j_axis) < 1e-9
        assert abs(tau[2]) < 1e-9


def test_case_continuity_at_foot_azimuths(feet):
    rng = np.random.default_rng(3)
    names = [c[0] for c in _CASES]
    for idx, (name, (_, b), _) in enumerate(_CASES):
        ang = math.atan2(feet[b, 1], feet[b, 0])
        target = [0.7 * math.cos(ang), 0.7 * math.sin(ang), 0.3]
        spec_a = build_plane(target, feet)
        assert spec_a.case_name == name  # boundary azimuth matches arc end
        spec_b = build_plane(target, feet, case_override=(idx + 1) % 4)
        assert spec_b.case_name == names[(idx + 1) % 4]
        u = rng.normal(scale=90.0, size=(50, 4))
        fa = decompose_batch(u, spec_a)
        fb = decompose_batch(u, spec_b)
        assert np.max(np.abs(fa - fb)) < 1e-9


def test_vertical_target_requires_flag(feet):
    with pytest.raises(PlaneError, match="vertical"):
        build_plane([0.0, 0.0, 0.5], feet)
    spec = build_plane([0.0, 0.0, 0.5], feet, vertical=True)
    assert spec.vertical
    assert spec.theta_tg == 0.0
    assert spec.target_planar[0] == 0.0
    # the flag is ignored when the target does move horizontally
    spec2 = build_plane([0.5, 0.0, 0.3], feet, vertical=True)
    assert not spec2.vertical


def test_target_validation(feet):
    with pytest.raises(UnsupportedTargetError):
        build_plane([0.5, 0.0, 0.3], feet, yaw=0.2)
    with pytest.raises(PlaneError, match="z"):
        build_plane([0.5, 0.0, -0.1], feet)
    with pytest.raises(PlaneError):
        build_plane([0.5, 0.0, np.nan], feet)
    with pytest.raises(PlaneError):
        build_plane([0.5, 0.0], feet)


def test_stance_validation(feet):
    collinear = feet.copy()
    collinear[:, 1] = 0.0
    with pytest.raises(PlaneError, match="convex"):
        build_plane([0.5, 0.0, 0.3], collinear)
    shifted = feet.copy()
    shifted[:, 0] += 0.5  # CoM projection leaves the support polygon
    with pytest.raises(PlaneError, match="support polygon"):
        build_plane([0.5, 0.0, 0.3], shifted)
    with pytest.raises(PlaneError):
        build_plane([0.5, 0.0, 0.3], feet[:3])


def test_case_override_range(feet):
    with pytest.raises(PlaneError, match="case_override"):
        build_plane([0.5, 0.0, 0.3], feet, case_override=4)


def test_decompose_input_validation(feet):
    spec = build_plane([0.5, 0.0, 0.3], feet)
    with pytest.raises(PlaneError):
        decompose([1.0, 2.0, 3.0], spec)
    sag = sagittal_plane([1.0, 0.6])
    with pytest.raises(PlaneError, match="quadruped"):
        decompose([1.0, 2.0, 3.0, 4.0], sag)


def test_sagittal_plane_layout():
    spec = sagittal_plane([1.2, 0.6], theta_land=0.1)
    assert spec.layout == "humanoid"
    assert spec.case_name == "sagittal"
    assert np.allclose(spec.j_axis, [1, 0, 0])
    assert spec.target_planar == pytest.approx((1.2, 0.6, 0.1))
    with pytest.raises(PlaneError):
        sagittal_plane([1.2, -0.1])
    with pytest.raises(PlaneError):
        sagittal_plane([1.2, 0.6, 0.0])


def test_stance_geometry_uses_pitch_inertia(mc, feet):
    spec = build_plane([0.4, 0.4, 0.3], feet)
    geom = spec.stance_geometry(mc)
    assert geom.layout == "quad"
    assert geom.inertia_plane == pytest.approx(mc.pitch_inertia(spec.theta_tg))
    assert np.allclose(geom.j_offsets, spec.j_offsets)
