"""Benchmark oracles, error norms and case builders.

The frozen constants below were computed by hand from the closed forms:
inclined crack under remote compression sigma at angle alpha gives
t_N = -sigma sin^2(alpha) and an elliptical slip profile with peak
4 (1 - nu^2) / E * sigma sin(alpha) (cos(alpha) - sin(alpha) tan(theta)) * b;
the dislocated-reservoir constant is C = (1-2nu) alpha_b p / (2 pi (1-nu))
and the full-stress-drop slip plateau is |C| (b-a) 2 pi (1-nu) / G
= (1-2nu) alpha_b |p| (b-a) / G = 0.7 * 0.9 * 25e6 * 75 / 6500e6
= 0.1817 m, consistent with a piecewise-constant dislocation density
cancelling the logarithmic pre-slip shear through the plane-strain
kernel G / (2 pi (1-nu)).
"""

import math

import numpy as np
import pytest

from almcontact import bench
from almcontact.bench import (
    InclinedFaultParams,
    VerticalFaultParams,
    FaultProfile,
    constant_slip_case,
    fault_l2_error,
    fault_profile,
    graded_ticks,
    inclined_fault_analytic,
    inclined_fault_case,
    run_case,
    stick_slip_open_case,
    t_crack_case,
    vertical_fault_analytic,
    vertical_fault_case,
)
from almcontact.contact import OPEN, SLIP, STICK
from almcontact.mesh import validate_mesh


class TestInclinedAnalytic:
    def test_frozen_values(self):
        p = InclinedFaultParams()
        t_n, slip = inclined_fault_analytic(p, [0.0, 1.0, 2.0])
        assert t_n == pytest.approx([-0.116978, -0.116978, -0.116978], abs=1e-6)
        assert slip[0] == pytest.approx(0.0, abs=1e-15)
        assert slip[2] == pytest.approx(0.0, abs=1e-15)
        assert slip[1] == pytest.approx(8.5296e-6, rel=1e-4)

    def test_symmetry_about_center(self):
        p = InclinedFaultParams()
        xi = np.array([0.3, 2.0 - 0.3])
        _, slip = inclined_fault_analytic(p, xi)
        assert slip[0] == pytest.approx(slip[1], rel=1e-12)

    def test_out_of_range(self):
        p = InclinedFaultParams()
        with pytest.raises(ValueError):
            inclined_fault_analytic(p, -0.1)
        with pytest.raises(ValueError):
            inclined_fault_analytic(p, 2.3)

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            InclinedFaultParams(angle_deg=95.0)
        with pytest.raises(ValueError):
            InclinedFaultParams(half_length=-1.0)


class TestVerticalAnalytic:
    def test_frozen_constant(self):
        p = VerticalFaultParams()
        assert abs(p.dislocation_constant) == pytest.approx(2.94905e6, rel=1e-4)

    def test_peak_traction(self):
        p = VerticalFaultParams()
        t_t, _ = vertical_fault_analytic(p, 0.0)
        assert t_t == pytest.approx(4.0883e6, rel=1e-4)

    def test_slip_plateau(self):
        p = VerticalFaultParams()
        _, slip = vertical_fault_analytic(p, np.array([-50.0, 0.0, 50.0]))
        assert slip == pytest.approx([0.181731] * 3, rel=1e-4)

    def test_plateau_closed_form(self):
        # |C| (b-a) / kernel collapses to (1-2nu) alpha |p| (b-a) / G
        p = VerticalFaultParams()
        direct = (
            (1.0 - 2.0 * p.poisson_ratio) * p.biot * abs(p.pressure)
            * (p.b - p.a) / p.shear_modulus
        )
        _, slip = vertical_fault_analytic(p, 0.0)
        assert slip == pytest.approx(direct, rel=1e-12)

    def test_slip_ramp_midpoint(self):
        p = VerticalFaultParams()
        _, slip = vertical_fault_analytic(p, np.array([112.5, -112.5]))
        assert slip == pytest.approx([0.181731 / 2.0] * 2, rel=1e-4)

    def test_even_traction(self):
        p = VerticalFaultParams()
        y = np.array([33.0, 99.0, 260.0])
        tp, _ = vertical_fault_analytic(p, y)
        tm, _ = vertical_fault_analytic(p, -y)
        assert tp == pytest.approx(list(tm), rel=1e-12)

    def test_zero_outside_band(self):
        p = VerticalFaultParams()
        _, slip = vertical_fault_analytic(p, np.array([200.0, -1000.0]))
        assert np.all(slip == 0.0)

    def test_singular_points_raise(self):
        p = VerticalFaultParams()
        for y in (75.0, -75.0, 150.0, -150.0):
            with pytest.raises(ValueError):
                vertical_fault_analytic(p, y)

    def test_geometry_validation(self):
        with pytest.raises(ValueError):
            VerticalFaultParams(a=200.0, b=150.0)
        with pytest.raises(ValueError):
            VerticalFaultParams(b=3000.0)


class TestGradedTicks:
    def test_fine_window_and_endpoints(self):
        t = graded_ticks(0.0, 40.0, (18.0, 22.0, 0.25))
        assert t[0] == 0.0 and t[-1] == 40.0
        assert np.all(np.diff(t) > 0.0)
        inner = t[(t >= 18.0 - 1e-12) & (t <= 22.0 + 1e-12)]
        assert inner == pytest.approx(list(18.0 + 0.25 * np.arange(17)))

    def test_coarsening_is_monotone(self):
        t = graded_ticks(-100.0, 100.0, (-10.0, 10.0, 1.0))
        d = np.diff(t)
        left = d[: np.searchsorted(t, -10.0)]
        assert np.all(np.diff(left) < 1e-9)  # widths shrink toward the window

    def test_multi_window_spacings(self):
        t = graded_ticks(0.0, 40.0, [(18.0, 18.5, 0.125),
                                     (19.0, 21.0, 0.5),
                                     (21.5, 22.0, 0.125)])
        assert t[0] == 0.0 and t[-1] == 40.0
        assert np.all(np.diff(t) > 0.0)
        fine = t[(t >= 18.0 - 1e-12) & (t <= 18.5 + 1e-12)]
        assert fine == pytest.approx(list(18.0 + 0.125 * np.arange(5)))
        mid = t[(t >= 19.0 - 1e-12) & (t <= 21.0 + 1e-12)]
        assert mid == pytest.approx(list(19.0 + 0.5 * np.arange(5)))

    def test_adjacent_windows_share_a_tick(self):
        t = graded_ticks(0.0, 10.0, [(4.0, 5.0, 0.25), (5.0, 6.0, 0.5)])
        assert np.sum(np.abs(t - 5.0) < 1e-12) == 1
        assert np.all(np.diff(t) > 0.0)

    def test_interior_gap_grades_both_ways(self):
        t = graded_ticks(0.0, 10.0, [(2.0, 3.0, 0.1), (7.0, 8.0, 0.1)])
        gap = np.diff(t[(t >= 3.0 - 1e-12) & (t <= 7.0 + 1e-12)])
        peak = np.argmax(gap)
        assert np.all(np.diff(gap[: peak + 1]) > -1e-9)
        assert np.all(np.diff(gap[peak:]) < 1e-9)

    def test_overlapping_windows_raise(self):
        with pytest.raises(ValueError):
            graded_ticks(0.0, 10.0, [(2.0, 5.0, 0.5), (4.0, 6.0, 0.5)])

    def test_indivisible_window_raises(self):
        with pytest.raises(ValueError):
            graded_ticks(0.0, 10.0, (4.0, 6.0, 0.3))

    def test_window_outside_domain_raises(self):
        with pytest.raises(ValueError):
            graded_ticks(0.0, 10.0, (8.0, 12.0, 0.5))


def _synthetic_profile(n=20, span=(0.0, 2.0)):
    lo, hi = span
    w = (hi - lo) / n
    pos = lo + w / 2.0 + w * np.arange(n)
    return FaultProfile(
        position=pos,
        normal_traction=np.ones(n),
        shear_magnitude=np.zeros(n),
        slip_magnitude=np.zeros(n),
        area=np.full(n, w),
        width=np.full(n, w),
        span=span,
    )


class TestFaultL2Error:
    def test_exact_match_is_zero(self):
        prof = _synthetic_profile()
        err = fault_l2_error(prof, prof.normal_traction, lambda x: np.ones_like(x))
        assert err == pytest.approx(0.0, abs=1e-15)

    def test_relative_offset(self):
        prof = _synthetic_profile()
        err = fault_l2_error(
            prof, prof.normal_traction * 1.07, lambda x: np.ones_like(x)
        )
        assert err == pytest.approx(0.07, rel=1e-9)

    def test_trim_drops_tip_faces(self):
        prof = _synthetic_profile(n=20)
        bad = prof.normal_traction.copy()
        bad[0] = bad[-1] = 100.0  # tip faces lie outside the 90% window
        err = fault_l2_error(prof, bad, lambda x: np.ones_like(x), trim_fraction=0.9)
        assert err == pytest.approx(0.0, abs=1e-15)

    def test_exclusion_removes_neighbours(self):
        prof = _synthetic_profile(n=20)
        bad = prof.normal_traction.copy()
        bad[10] = 50.0
        err = fault_l2_error(
            prof, bad, lambda x: np.ones_like(x), exclude=(prof.position[10],)
        )
        assert err == pytest.approx(0.0, abs=1e-15)

    def test_zero_analytic_raises(self):
        prof = _synthetic_profile()
        with pytest.raises(ValueError):
            fault_l2_error(prof, prof.normal_traction, lambda x: np.zeros_like(x))


class TestInclinedCase:
    def test_mesh_is_valid_all_kinds(self):
        for kind in (bench.HEX, bench.TET, bench.WEDGE):
            problem = inclined_fault_case(mesh_size=0.5, element_kind=kind)
            validate_mesh(problem.mesh)
            n_fault = len(problem.mesh.fault_faces)
            assert n_fault == {bench.HEX: 4, bench.TET: 8, bench.WEDGE: 4}[kind]

    def test_coarse_solution_tracks_oracle(self):
        # four faces across the crack: the elliptical profile is resolved
        # to first order only, so the bounds at this level are loose
        err_tn, err_slip, prof, _ = bench.inclined_fault_errors(
            InclinedFaultParams(), 0.5, bench.HEX
        )
        assert err_tn < 0.30
        assert err_slip < 0.40
        assert np.all(prof.normal_traction < 0.0)

    def test_refinement_shrinks_slip_error(self):
        errs = [
            bench.inclined_fault_errors(InclinedFaultParams(), h, bench.HEX)[1]
            for h in (0.5, 0.25)
        ]
        assert errs[1] < 0.7 * errs[0]

    def test_coarse_tet_solution_tracks_oracle(self):
        err_tn, err_slip, _, _ = bench.inclined_fault_errors(
            InclinedFaultParams(), 0.5, bench.TET
        )
        assert err_tn < 0.35
        assert err_slip < 0.50


class TestVerticalCase:
    def test_mesh_and_regions(self):
        problem = vertical_fault_case(mesh_size=37.5)
        validate_mesh(problem.mesh)
        assert problem.eigenstress is not None
        touched = np.flatnonzero(np.abs(problem.eigenstress[:, 1]) > 30e6 * 0.5)
        assert touched.size > 0  # reservoir cells carry the pore term

    def test_coarse_errors(self):
        err_tt, plateau, prof, prof2 = bench.vertical_fault_errors(
            VerticalFaultParams(), 37.5, bench.HEX
        )
        assert err_tt < 0.35
        assert plateau == pytest.approx(0.181731, rel=0.1)
        assert np.all(prof2.normal_traction < 0.0)  # stays closed

    def test_unknown_scenario(self):
        with pytest.raises(ValueError):
            vertical_fault_case(scenario="bogus")


class TestConstantSlip:
    def test_uniform_slip_everywhere(self):
        problem = constant_slip_case()
        disc, result = run_case(problem)
        labels = [s.label for s in result.states]
        assert all(lbl == SLIP for lbl in labels)
        slip = np.linalg.norm(result.gaps[:, 1:], axis=1)
        target = 0.1 * math.sqrt(2.0)
        assert np.mean(slip) == pytest.approx(target, rel=5e-3)
        assert np.std(slip) / np.mean(slip) <= 5e-3


class TestStickSlipOpenCase:
    def test_schedule_and_mesh(self):
        problem = stick_slip_open_case()
        validate_mesh(problem.mesh)
        assert len(problem.steps) == 11  # preload plus ten load increments
        assert len(problem.mesh.fault_faces) == 100
        sx, sz = bench.sso_load_history(5.0)
        assert (sx, sz) == (-15e6, -5e6)
        sx, sz = bench.sso_load_history(10.0)
        assert (sx, sz) == (15e6, 5e6)


class TestTCrackCase:
    def test_default_grid(self):
        problem = t_crack_case()
        validate_mesh(problem.mesh)
        assert len(problem.mesh.cells) == 60 * 60 * 2
        groups = problem.mesh.fault_groups
        assert set(groups) == {"horizontal", "vertical"}
        # 20 fine faces along the main crack, 10 along the branch, 2 layers
        assert len(groups["horizontal"]) == 40
        assert len(groups["vertical"]) == 20
        assert len(problem.steps) == 10

    def test_junction_is_enriched(self):
        problem = t_crack_case()
        disc = problem.discretize()
        assert disc.enr.cross  # junction cells couple the two cracks

    def test_scale_factor_validation(self):
        with pytest.raises(ValueError):
            t_crack_case(scale_factor=0)


class TestConvergenceStudy:
    def test_needs_three_levels(self):
        with pytest.raises(ValueError):
            bench.convergence_study("inclined", [0.5, 0.25], [bench.HEX])

    def test_unknown_case(self):
        with pytest.raises(ValueError):
            bench.convergence_study("bogus", [1.0, 0.5, 0.25], [bench.HEX])
