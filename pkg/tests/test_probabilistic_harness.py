"""
Test the Monte Carlo estimators on cases with known answers
"""

import math

import numpy as np
import pytest

import probabilistic_harness
from exceptions import InsufficientShellsError
from integrator import StepParams
from lattice_field import NormParams, Truncation, VorticityField, complete_from_half, enstrophy, random_field
from probabilistic_harness import (
    EventSpec, LadderSpec, a_d_probability, enstrophy_corollary, exp_moment_check, field_with_enstrophy,
    lemma1_tail, mode_threshold, ou_sup_curve, proposition_escape, region_membership_curve,
    run_trajectories, spectrum_bound_report, stationary_snapshots, time_average_mode,
    transition_estimate,
)
from rng_streams import stream
from stochastic_forcing import NoiseSpec

P = NormParams(r=1.5, alpha=3.5, D=2.0)
STEP = StepParams(h=0.01)


def test_run_trajectories_keeps_order():
    serial = run_trajectories(lambda i: i * i, 20, threads=1)
    pooled = run_trajectories(lambda i: i * i, 20, threads=4)
    assert serial == pooled == [i * i for i in range(20)]
    with pytest.raises(ValueError):
        run_trajectories(lambda i: i, 0)


def test_event_spec_validation():
    with pytest.raises(ValueError):
        EventSpec("vortex_merger", {})
    with pytest.raises(ValueError):
        EventSpec("enstrophy_tail", {"Phi0": 1.0, "t": 0.5})
    r = EventSpec("A_D", {"D": 1.0, "tau": 0.01}).result([True, False], seed=3, n_substeps=100)
    assert r.event_kind == "A_D"
    assert r.parameters == {"D": 1.0, "tau": 0.01, "n_substeps": 100}


def test_ladder_geometry():
    ladder = LadderSpec(a_hat=1.0, R=2.0, levels=3)
    assert ladder.level(0) == pytest.approx(2.0)
    assert ladder.level(2) == pytest.approx(2.0 * math.e / 2.0)
    assert LadderSpec.pi(0) == pytest.approx(math.exp(-1.0))
    assert ladder.inclusion_holds(1, 2)
    assert not ladder.inclusion_holds(2, 0)
    with pytest.raises(ValueError):
        ladder.level(4)
    with pytest.raises(ValueError):
        LadderSpec(R=0.0)


def test_field_with_enstrophy():
    trunc = Truncation(5)
    assert enstrophy(field_with_enstrophy(trunc, 3.0)) == pytest.approx(3.0)
    assert field_with_enstrophy(trunc, 0.0).is_zero()
    with pytest.raises(ValueError):
        field_with_enstrophy(trunc, -1.0)


def test_lemma1_zero_noise_never_exceeds_decayed_level():
    t, Phi0 = 0.5, 4.0
    level = math.exp(-2 * t) * Phi0
    grid = [math.sqrt(1.05 * level), math.sqrt(2.0 * level), math.sqrt(Phi0)]
    curve = lemma1_tail(Phi0, t, grid, NoiseSpec.zeros(4), n_traj=2, seed=0, step=STEP)
    assert [r.p_hat for r in curve.results] == [0.0, 0.0, 0.0]
    assert curve.results[0].event_kind == "enstrophy_tail"
    assert len(curve.rows()) == 3


def test_lemma1_low_threshold_always_hit():
    spec = NoiseSpec.band(4, reynolds=10.0)
    curve = lemma1_tail(0.0, 0.5, [0.01], spec, n_traj=5, seed=1, step=STEP)
    assert curve.results[0].p_hat == 1.0


def test_lemma1_argument_checks():
    with pytest.raises(ValueError):
        lemma1_tail(1.0, 0.5, [], NoiseSpec.zeros(4), n_traj=2, seed=0)
    with pytest.raises(ValueError):
        lemma1_tail(1.0, 1.5, [1.0], NoiseSpec.zeros(4), n_traj=2, seed=0)


def test_exp_moment_zero_noise():
    check = exp_moment_check(0.0, 0.5, NoiseSpec.zeros(4), n_traj=3, seed=0, step=STEP, reynolds=10.0)
    assert check.lhs == pytest.approx(1.0)
    assert check.rhs == pytest.approx(3.0)
    assert check.passed
    assert check.to_dict()["pass"] is True
    with pytest.raises(ValueError):
        exp_moment_check(0.0, 0.5, NoiseSpec.zeros(4), n_traj=3, seed=0, step=STEP)


def test_exp_moment_forced():
    spec = NoiseSpec.band(4, reynolds=10.0)
    check = exp_moment_check(0.0, 1.0, spec, n_traj=100, seed=5, step=STEP, threads=2)
    assert check.lhs >= 1.0
    assert check.passed


def test_corollary_zero_noise():
    result = enstrophy_corollary(2.0, NoiseSpec.zeros(4), n_checks=4, n_traj=2, seed=0, step=STEP)
    assert result.joint.p_hat == 1.0
    assert all(r.p_hat == 1.0 for r in result.per_time)
    assert result.check_times == pytest.approx([0.25, 0.5, 0.75, 1.0])
    assert result.union_bound_holds


def test_lemma1_slope_scales_inversely_with_reynolds():
    slopes = []
    for R in (5.0, 10.0):
        grid = [math.sqrt(c * R) for c in (0.2, 0.35, 0.5)]
        curve = lemma1_tail(0.0, 1.0, grid, NoiseSpec.band(4, reynolds=R), n_traj=400, seed=11,
                            step=StepParams(h=0.02), threads=2)
        slopes.append(curve.slope)
    assert slopes[0] < 0 and slopes[1] < 0
    assert 0.3 <= slopes[1] / slopes[0] <= 0.8


def test_corollary_forced_union_bound():
    result = enstrophy_corollary(4.0, NoiseSpec.band(4, reynolds=5.0), n_checks=4, n_traj=40, seed=2,
                                 step=STEP, threads=2)
    per_time = [r.p_hat for r in result.per_time]
    assert any(0.0 < p < 1.0 for p in per_time)
    assert result.joint.p_hat <= min(per_time)
    assert result.union_bound_holds


def test_ou_sup_curve_slope_negative():
    spec = NoiseSpec.from_modes(4, {(1, 0): 1.0})
    curve = ou_sup_curve(spec, (1, 0), 0.01, [1.0, 1.5, 2.0], n_traj=2000, n_substeps=100, seed=3)
    p = [r.p_hat for r in curve.results]
    assert p[0] >= p[1] >= p[2]
    assert curve.slope < 0


def test_a_d_probability_monotone_in_D():
    spec = NoiseSpec.band(4, reynolds=5.0)
    p = [a_d_probability(spec, D, 0.01, n_traj=300, n_substeps=100, seed=4).p_hat for D in (0.2, 1.0, 5.0)]
    assert p[0] <= p[1] <= p[2]
    assert p[2] > p[0]
    assert a_d_probability(NoiseSpec.zeros(4), 0.1, 0.01, n_traj=10, n_substeps=100, seed=0).p_hat == 1.0


def test_proposition_zero_noise_stays_inside():
    result = proposition_escape(2.0, NoiseSpec.zeros(4), P, n_traj=2, n_checks=10, seed=0,
                                step=STEP, fill=0.25)
    assert result.p_hat == 0.0
    assert result.event_kind == "region_escape"
    with pytest.raises(ValueError):
        proposition_escape(2.0, NoiseSpec.zeros(4), P, n_traj=0, n_checks=10, seed=0)


def test_proposition_independent_of_thread_count():
    spec = NoiseSpec.band(4, reynolds=5.0)
    a = proposition_escape(2.0, spec, P, n_traj=4, n_checks=5, seed=8, step=STEP, threads=1)
    b = proposition_escape(2.0, spec, P, n_traj=4, n_checks=5, seed=8, step=STEP, threads=3)
    assert (a.n_hits, a.p_hat) == (b.n_hits, b.p_hat)


def test_proposition_escape_nonincreasing_in_D():
    spec = NoiseSpec.band(8, reynolds=10.0)
    p = [proposition_escape(D, spec, P, n_traj=60, n_checks=20, seed=6, step=STEP, threads=2).p_hat
         for D in (2.0, 3.5, 5.0)]
    assert p[0] >= p[1] >= p[2]
    assert p[0] - p[2] >= 0.4


def test_proposition_wider_watched_region_escapes_less():
    spec = NoiseSpec.band(4, reynolds=5.0)
    same = proposition_escape(2.0, spec, P, n_traj=20, n_checks=10, seed=9, step=STEP)
    wider = proposition_escape(2.0, spec, P, n_traj=20, n_checks=10, seed=9, step=STEP, D_prime=3.0)
    assert same.parameters["D_prime"] == 2.0
    assert wider.parameters["D_prime"] == 3.0
    assert wider.n_hits <= same.n_hits
    with pytest.raises(ValueError):
        proposition_escape(2.0, spec, P, n_traj=2, n_checks=10, seed=0, D_prime=1.5)


def test_transition_zero_noise():
    ladder = LadderSpec(a_hat=1.0, R=1.0, levels=3)
    result = transition_estimate(ladder, 0, 1, NoiseSpec.zeros(4), 1.5, 3.5, n_traj=2, seed=0, step=STEP)
    assert result.p_hat == 0.0
    assert set(result.parameters["family"]) == {"smooth", "ascending", "descending"}
    with pytest.raises(ValueError):
        transition_estimate(ladder, 3, 1, NoiseSpec.zeros(4), 1.5, 3.5, n_traj=2, seed=0)


def test_transition_decreases_along_ladder():
    ladder = LadderSpec(a_hat=16.0, R=1.0, levels=11)
    spec = NoiseSpec.band(4, reynolds=1.0)
    low = transition_estimate(ladder, 1, 0, spec, 1.5, 3.5, n_traj=40, seed=4, step=STEP, threads=2)
    high = transition_estimate(ladder, 11, 10, spec, 1.5, 3.5, n_traj=40, seed=4, step=STEP, threads=2)
    assert low.p_hat >= 0.8
    assert high.p_hat <= 0.2
    assert low.p_hat >= high.p_hat


def test_mode_threshold_formula():
    value = mode_threshold((3, 4), 2.0, 1.5, 3.5)
    assert value == pytest.approx(2.0 ** 7 * 5.0 ** -3 * math.exp(-2 * 2.0 ** -3.5 * 5.0))


def test_time_average_mode():
    zero = time_average_mode((1, 0), 0.1, 0.2, 2.0, P, NoiseSpec.zeros(4), n_traj=2, seed=0, step=STEP)
    assert zero.p_hat == 0.0
    spec = NoiseSpec.band(4, reynolds=10.0)
    forced = time_average_mode((1, 0), 0.1, 0.2, 0.3, P, spec, n_traj=3, seed=0, step=STEP)
    assert forced.p_hat == 1.0
    with pytest.raises(ValueError):
        time_average_mode((1, 0), 0.1, 0.0, 2.0, P, spec, n_traj=2, seed=0)


def test_time_average_nonincreasing_in_D():
    spec = NoiseSpec.band(4, reynolds=10.0)
    p = [time_average_mode((1, 0), 0.5, 0.5, D, P, spec, n_traj=60, seed=3, step=STEP, threads=2).p_hat
         for D in (1.0, 1.2, 1.5)]
    assert p[0] >= p[1] >= p[2]
    assert p[0] > p[2]


def _power_law_field(k_max, exponent):
    trunc = Truncation(k_max)
    i, j = trunc.half_indices
    half = trunc.lattice.kabs[i, j] ** (-exponent)
    return VorticityField(trunc, complete_from_half(trunc, half))


def test_spectrum_report_steep_and_shallow():
    steep = spectrum_bound_report([_power_law_field(24, 2.5)], r=1.5, alpha_tilde=1.0, R=10.0)
    assert steep.exponent == pytest.approx(-5.0, abs=0.3)
    assert steep.holds
    assert steep.c_hat > 0
    assert steep.shells_used[0] == 4.0 and steep.shells_used[-1] == 20.0
    shallow = spectrum_bound_report([_power_law_field(24, 0.5)], r=1.5, alpha_tilde=1.0, R=10.0)
    assert not shallow.holds


def test_spectrum_report_needs_shells():
    with pytest.raises(InsufficientShellsError):
        spectrum_bound_report([VorticityField.from_modes(24, {(1, 0): 1.0})], 1.5, 1.0, 10.0)


def test_region_membership_nondecreasing():
    trunc = Truncation(4)
    fields = [random_field(trunc, stream(2, i), amplitude=2.0) for i in range(10)]
    results = region_membership_curve(fields, P, [0.5, 1.0, 2.0, 4.0, 8.0])
    p = [r.p_hat for r in results]
    assert all(a <= b for a, b in zip(p, p[1:]))
    assert p[-1] == 1.0


def test_stationary_snapshots():
    spec = NoiseSpec.band(4, reynolds=5.0)
    snaps = stationary_snapshots(spec, T_burn=0.1, n_snapshots=5, n_traj=2, spacing=0.05, seed=0, step=STEP)
    assert len(snaps) == 5
    assert all(f.truncation == spec.truncation for f in snaps)
    assert not snaps[0].is_zero()


def test_stationary_snapshots_runs_only_needed_trajectories(monkeypatch):
    counts = []
    original = probabilistic_harness.run_trajectories

    def counting(task, n, threads=1):
        counts.append(n)
        return original(task, n, threads)

    monkeypatch.setattr(probabilistic_harness, "run_trajectories", counting)
    spec = NoiseSpec.band(4, reynolds=5.0)
    few = stationary_snapshots(spec, T_burn=0.1, n_snapshots=2, n_traj=5, spacing=0.05, seed=0, step=STEP)
    assert len(few) == 2
    assert counts == [2]
    single = stationary_snapshots(spec, T_burn=0.1, n_snapshots=1, n_traj=1, spacing=0.05, seed=0, step=STEP)
    assert np.array_equal(few[0].amplitudes, single[0].amplitudes)
    assert not np.array_equal(few[0].amplitudes, few[1].amplitudes)


if __name__ == "__main__":
    test_ladder_geometry()
    test_lemma1_zero_noise_never_exceeds_decayed_level()
    test_spectrum_report_steep_and_shallow()
    print("harness tests passed")
