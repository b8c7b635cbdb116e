"""Prioritized constraint fitness: arithmetic, ordering, and rollout terms."""

import dataclasses
import math

import numpy as np
import pytest

from jumpkit.constraints import (
    F_Z_MIN,
    FEASIBLE_FITNESS_MAX,
    PRIORITY,
    ConstraintReport,
    ConstraintTerm,
    actuation_energy,
    evaluate_constraints,
    evaluate_humanoid_constraints,
    fitness_value,
)
from jumpkit.grf_profile import TransformError, waypoints_to_profile
from jumpkit.jump_plane import sagittal_plane
from jumpkit.jump_sim import humanoid_stance_rollout, stance_rollout
from jumpkit.optimizer import build_search_space


def _mk(name, sigma):
    return ConstraintTerm(name, PRIORITY[name], sigma, 0.0)


def test_fitness_exact_arithmetic():
    assert fitness_value((), 3.5) == 3.5
    assert fitness_value((_mk("contact", 0.0),), 2.0) == 2.0
    # priority 15 with sigma 2: pedestal 1e18 plus scaled deficit 2e15
    got = fitness_value((_mk("contact", 2.0),), 7.0)
    assert got == 1.0e18 + 2.0e15 + 7.0
    # terms add independently
    pair = fitness_value((_mk("contact", 2.0), _mk("joint_torque", 1.0)), 0.0)
    assert pair == (1.0e18 + 2.0e15) + (1.0e9 + 1.0e6)


def test_fitness_monotone_in_sigma():
    lo = fitness_value((_mk("friction", 0.5),), 0.0)
    hi = fitness_value((_mk("friction", 0.7),), 0.0)
    assert hi > lo


def test_hierarchy_holds_within_native_scale():
    # any violation of priority n outranks every violation set confined
    # to priorities n-2 and below, as long as deficits stay <= 1e4
    rng = np.random.default_rng(7)
    names = list(PRIORITY)
    for _ in range(2000):
        high = names[rng.integers(len(names))]
        n = PRIORITY[high]
        lower = [m for m in names if PRIORITY[m] <= n - 2]
        subset = [m for m in lower if rng.random() < 0.7]
        low_terms = tuple(_mk(m, rng.uniform(1e-9, 1e4)) for m in subset)
        f_high = fitness_value((_mk(high, rng.uniform(1e-9, 1e4)),), 0.0)
        f_low = fitness_value(low_terms, rng.uniform(0.0, FEASIBLE_FITNESS_MAX))
        assert f_high > f_low


def test_hierarchy_ceiling_counterexample():
    # the pedestal separation is finite: a lone friction deficit of 9e5
    # outscores a barely-violated contact term two priority levels up
    f_contact = fitness_value((_mk("contact", 1e-6),), 0.0)
    f_friction = fitness_value((_mk("friction", 9e5),), 0.0)
    assert f_friction > f_contact


def test_feasibility_certificate_band():
    # feasible candidates score below FEASIBLE_FITNESS_MAX, every
    # violated candidate scores far above it
    terms = tuple(_mk(name, 0.0) for name in PRIORITY)
    report = ConstraintReport(terms=terms, energy=123.4)
    assert report.feasible
    assert report.fitness == 123.4 < FEASIBLE_FITNESS_MAX
    worst_sat = fitness_value((), FEASIBLE_FITNESS_MAX - 1.0)
    best_violated = fitness_value((_mk("joint_torque", 1e-12),), 0.0)
    assert best_violated > 1e8 > worst_sat


def test_actuation_energy_trapezoid():
    tau = np.array([[1.0, 2.0], [1.0, 2.0], [3.0, 0.0]])
    qd = np.array([[2.0, 1.0], [2.0, 1.0], [1.0, 5.0]])
    # |power| per sample: 4, 4, 3; trapezoid with dx=0.1
    assert actuation_energy(tau, qd, 0.1) == pytest.approx(0.1 * (4 / 2 + 4 + 3 / 2))
    assert actuation_energy(tau[:1], qd[:1], 0.1) == 0.0
    # sign of power does not cancel
    assert actuation_energy(-tau, qd, 0.1) == actuation_energy(tau, qd, 0.1)


def test_report_accessors():
    terms = (_mk("contact", 0.0), _mk("friction", 1.5))
    report = ConstraintReport(terms=terms, energy=10.0)
    assert not report.feasible
    assert report.term("friction").sigma == 1.5
    assert report.sigmas() == {"contact": 0.0, "friction": 1.5}
    with pytest.raises(KeyError):
        report.term("zmp")
    text = report.to_text()
    assert "friction" in text and "infeasible" in text
    assert not _mk("contact", 0.1).satisfied
    assert _mk("contact", 0.0).satisfied


def test_quadruped_rollout_terms(forward_solve, mc):
    report = forward_solve.outcome.report
    assert {t.name for t in report.terms} == {
        "contact",
        "friction",
        "joint_angle",
        "joint_velocity",
        "body_position",
        "joint_torque",
    }
    assert report.feasible
    assert all(t.sigma == 0.0 for t in report.terms)
    assert 0.0 < report.energy < FEASIBLE_FITNESS_MAX
    assert report.fitness == report.energy

    # contact forces never dip below the loaded minimum while in stance
    st = forward_solve.outcome.stance
    fz = st.foot_forces[:, :, 2]
    assert (fz[st.stance_mask] >= F_Z_MIN).all()

    # scaling torque far past the limits flips exactly the torque term
    hot = dataclasses.replace(st, joint_tau=st.joint_tau * 100.0)
    hot_report = evaluate_constraints(hot, mc)
    assert hot_report.term("joint_torque").sigma > 0.0
    assert hot_report.term("contact").sigma == 0.0
    expected = float((np.abs(hot.joint_tau) - mc.torque_limits).max())
    assert hot_report.term("joint_torque").sigma == pytest.approx(expected)
    assert math.isfinite(hot_report.term("joint_torque").worst_time)


def test_humanoid_rollout_terms(hum):
    spec = sagittal_plane([1.2, 0.6])
    space = build_search_space("humanoid", hum)
    rng = np.random.default_rng(11)
    for _ in range(200):
        vec = space.decode(rng.uniform(space.lower, space.upper))
        try:
            prof = waypoints_to_profile(vec, spec, hum)
        except TransformError:
            continue
        ht = humanoid_stance_rollout(prof, vec, spec, hum)
        report = evaluate_humanoid_constraints(ht, hum)
        names = {t.name for t in report.terms}
        assert "zmp" in names and len(names) == 7
        assert report.term("zmp").priority == 12
        # zmp deficit matches the foot sole extents where loaded
        toe, heel = hum.leg_lengths[2], hum.leg_lengths[3]
        loaded = ht.force_planar[:, 1] > F_Z_MIN
        if loaded.any():
            zmp = ht.zmp[loaded]
            worst = float(np.maximum(zmp - toe, -heel - zmp).max())
            assert report.term("zmp").sigma == pytest.approx(max(worst, 0.0))
        break
    else:
        pytest.fail("no transformable humanoid draw found")
