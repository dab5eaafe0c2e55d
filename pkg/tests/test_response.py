"""Tests for transition probabilities and kernel norms."""

import math

import numpy as np
import pytest

from cavity_subfields.analysis import delta_p
from cavity_subfields.config import ScenarioConfig
from cavity_subfields.detector import (
    Switching,
    axial_overlap,
    transverse_overlap_onaxis,
)
from cavity_subfields.geometry import CrossSection, rectangle_eigenpair
from cavity_subfields.numerics import bessel_j, bessel_zero, integrate_1d, integrate_box
from cavity_subfields.response import (
    FieldState,
    ModeSumControls,
    Scenario,
    TransitionResult,
    excitation_number,
    kernel_norm,
    kernel_relative_error,
    transition_probability,
    transition_probability_cylinder,
    transition_probability_thermal_box,
)
from cavity_subfields.subfields import CavityField, TruncationSet

# Uses fixtures from conftest.py: box_scenario, offcentre_box_scenario, disk_scenario,
# box_factory, disk_factory


def _two_time_factor(switching, nu):
    """int int chi(t) chi(s) cos(nu (t - s)) dt ds by tensor quadrature."""
    half = 8 * switching.T
    return integrate_box(
        lambda t, s: switching(t) * switching(s) * np.cos(nu * (t - s)),
        [(-half, half), (-half, half)],
    )


class TestFieldState:
    def test_vacuum(self):
        state = FieldState.vacuum()
        assert state.is_vacuum
        log_stimulated, log_nbar = state.log_occupations(1.0, np.array([1.0, 2.0]))
        assert np.all(log_stimulated == 0.0)
        assert np.all(log_nbar == -np.inf)

    def test_thermal_occupation(self):
        log_stimulated, log_nbar = FieldState.thermal(0.5).log_occupations(1.0, np.array([2.0]))
        nbar = 1 / math.expm1(1.0)
        assert math.exp(log_nbar[0]) == pytest.approx(nbar)
        assert math.exp(log_stimulated[0]) == pytest.approx(nbar + 1)

    def test_invalid(self):
        with pytest.raises(ValueError):
            FieldState(kind="vacuum", beta=1.0)
        with pytest.raises(ValueError):
            FieldState.thermal(0.0)
        with pytest.raises(ValueError):
            FieldState(kind="squeezed")


class TestModeSumControls:
    def test_invalid(self):
        with pytest.raises(ValueError):
            ModeSumControls(n_max=0)
        with pytest.raises(ValueError):
            ModeSumControls(tail_tolerance=0.0)
        with pytest.raises(ValueError):
            ModeSumControls(threads=0)


class TestExcitationNumber:
    """Tests for N_ln in the cylinder."""

    def test_matches_closed_form(self, disk_scenario):
        length, sigma, gap, T = 20.0, 0.05, 3.0, 2.0
        x = bessel_zero(0, 1)
        omega = math.sqrt(x**2 + (math.pi / length) ** 2)
        prefactor = (
            1
            / (length * omega)
            * axial_overlap(length / 2, length, sigma, 1)
            * transverse_overlap_onaxis(sigma, 1.0, 1)
            / (math.pi * bessel_j(1, x) ** 2)
        )
        plus = prefactor * 2 * math.pi * T**2 * math.exp(-(T**2) * (gap + omega) ** 2)
        minus = prefactor * 2 * math.pi * T**2 * math.exp(-(T**2) * (omega - gap) ** 2)
        assert excitation_number(disk_scenario, 1, 1, 1) == pytest.approx(plus, rel=1e-10)
        assert excitation_number(disk_scenario, 1, 1, -1) == pytest.approx(minus, rel=1e-10)

    def test_axial_node(self, disk_scenario):
        """Even longitudinal modes vanish at the midpoint of the cavity."""
        assert excitation_number(disk_scenario, 1, 2, -1) == 0.0

    def test_nonzero_m_on_axis(self, disk_scenario):
        assert excitation_number(disk_scenario, 1, 1, -1, m=1) == 0.0

    def test_needs_disk(self, box_scenario):
        with pytest.raises(ValueError):
            excitation_number(box_scenario, 1, 1, 1)


class TestCylinder:
    """Tests for cylindrical mode sums."""

    def test_converges(self, disk_scenario):
        result = transition_probability_cylinder(disk_scenario)
        assert result.converged
        assert result.p_plus > 0
        assert result.p_minus > result.p_plus

    def test_on_axis_only_m0(self, disk_scenario):
        result = transition_probability_cylinder(disk_scenario)
        assert all(c.label.startswith("(0, ") for c in result.per_subfield.values())

    def test_off_axis_couples_m1(self, disk_factory):
        result = transition_probability_cylinder(disk_factory(r0=0.1))
        labels = [c.label for c in result.per_subfield.values()]
        assert "(1, 1, cos)" in labels
        assert "(1, 1, sin)" not in labels

    def test_per_subfield_sums_to_total(self, disk_scenario):
        result = transition_probability_cylinder(disk_scenario)
        total = sum(c.minus for c in result.per_subfield.values())
        assert total == pytest.approx(result.p_minus, rel=1e-12)

    def test_first_subfield_matches_excitation_numbers(self, disk_scenario):
        """The l = 1 contribution is the n-sum of N_1n."""
        result = transition_probability_cylinder(disk_scenario)
        first = result.per_subfield[1]
        total = sum(excitation_number(disk_scenario, 1, n, -1) for n in range(1, first.n_terms + 1))
        assert first.minus == pytest.approx(total, rel=1e-10)

    def test_needs_disk(self, box_scenario):
        with pytest.raises(ValueError):
            transition_probability_cylinder(box_scenario)

    def test_pointlike_limit(self):
        """sigma/R = 1e-6 agrees with a pointlike detector at the same position."""
        smeared = ScenarioConfig.preset("optical")
        pointlike = ScenarioConfig.preset("optical", {"detector": {"smearing": "pointlike"}})
        a = transition_probability(smeared.scenario, smeared.controls)
        b = transition_probability(pointlike.scenario, pointlike.controls)
        assert a.converged and b.converged
        assert a.p_minus == pytest.approx(b.p_minus, rel=1e-4)
        assert a.log_p_plus == pytest.approx(b.log_p_plus, abs=1e-4)

    def test_long_interaction_stays_in_log_space(self):
        """Superconducting parameters: P+ underflows a double but its log does not."""
        config = ScenarioConfig.preset("superconducting")
        result = transition_probability(config.scenario, config.controls)
        assert result.converged
        assert math.isfinite(result.log_p_plus)
        assert result.log_p_plus < result.log_p_minus


class TestThermalBox:
    """Tests for rectangular-cavity probabilities."""

    def test_converges(self, box_scenario):
        result = transition_probability_thermal_box(box_scenario)
        assert result.converged
        assert result.tail_estimate == 0.0

    def test_skips_uncoupled(self, box_scenario):
        """A centred detector sees only odd-odd transverse modes."""
        result = transition_probability_thermal_box(box_scenario)
        for contribution in result.per_subfield.values():
            n1, n2 = (int(v) for v in contribution.label.strip("()").split(","))
            assert n1 % 2 == 1 and n2 % 2 == 1

    def test_zero_temperature_limit(self, box_factory):
        vacuum = transition_probability_thermal_box(box_factory())
        cold = transition_probability_thermal_box(box_factory(state=FieldState.thermal(1e6)))
        assert cold.p_plus == pytest.approx(vacuum.p_plus, rel=1e-12)
        assert cold.p_minus == pytest.approx(vacuum.p_minus, rel=1e-12)

    def test_temperature_raises_both_rates(self, box_factory):
        vacuum = transition_probability_thermal_box(box_factory())
        hot = transition_probability_thermal_box(box_factory(state=FieldState.thermal(1.0)))
        assert hot.p_plus > vacuum.p_plus
        assert hot.p_minus > vacuum.p_minus

    def test_matches_two_time_quadrature(self, box_factory):
        """Three transverse modes with n = 1 against a direct double time integral."""
        beta, gap, T, sigma = 0.7, 2.0, 2.0, 0.3
        length, y0 = 20.0, (1.6, 2.3)
        scenario = box_factory(y0=y0, sigma=sigma, gap=gap, T=T, state=FieldState.thermal(beta))
        controls = ModeSumControls(n_max=1, subfield_set=TruncationSet.first(3))
        result = transition_probability_thermal_box(scenario, controls)
        assert sorted(result.per_subfield) == [1, 2, 3]

        switching = Switching("gaussian", T)
        smearing = scenario.detector.smearing
        expected = {1: 0.0, -1: 0.0}
        for indices in [(1, 1), (1, 2), (2, 1)]:
            mode = rectangle_eigenpair((4.0, 4.0), indices)
            peak = mode.cross_section.integrate(lambda y, mode=mode: smearing(y, 10.0) * mode(y))
            coefficient = integrate_1d(
                lambda z, peak=peak: peak
                * math.exp(-((z - 10.0) ** 2) / (2 * sigma**2))
                * math.sqrt(2 / length)
                * math.sin(math.pi * z / length),
                0.0,
                length,
            )
            omega = math.sqrt(mode.eigenvalue + (math.pi / length) ** 2)
            nbar = 1 / math.expm1(beta * omega)
            for sign in (1, -1):
                stimulated = _two_time_factor(switching, sign * gap + omega)
                absorbed = _two_time_factor(switching, -sign * gap + omega)
                expected[sign] += coefficient**2 / (2 * omega) * ((nbar + 1) * stimulated + nbar * absorbed)

        assert result.p_plus == pytest.approx(expected[1], rel=1e-6)
        assert result.p_minus == pytest.approx(expected[-1], rel=1e-6)

    def test_needs_dirichlet_rectangle(self, disk_scenario):
        with pytest.raises(ValueError):
            transition_probability_thermal_box(disk_scenario)

    def test_neumann_rectangle_dispatch(self, box_scenario):
        cavity = CavityField(CrossSection.rectangle(4.0, 4.0, boundary="neumann"), 20.0)
        scenario = Scenario(cavity=cavity, detector=box_scenario.detector)
        result = transition_probability(scenario)
        assert result.converged
        assert result.p_minus > 0

    def test_detector_outside_cavity(self, box_factory):
        scenario = box_factory()
        cavity = CavityField(scenario.cavity.cross_section, 5.0)
        with pytest.raises(ValueError):
            transition_probability(Scenario(cavity=cavity, detector=scenario.detector))


class TestKernelNorm:
    """Tests for ||F||_+- and its relative truncation error."""

    def test_norm_equals_probability(self, offcentre_box_scenario):
        result = transition_probability(offcentre_box_scenario)
        for sign in (1, -1):
            norm = kernel_norm(offcentre_box_scenario, sign, result=result)
            assert norm == pytest.approx(result.probability(sign), rel=1e-12)

    @pytest.mark.parametrize(
        "params",
        [
            {},
            {"y0": (1.3, 2.1)},
            {"y0": (1.7, 2.4), "state": FieldState.thermal(0.5), "T": 1.0},
        ],
    )
    def test_relative_error_equals_delta_p(self, box_factory, params):
        scenario = box_factory(**params)
        reference = transition_probability(scenario)
        keep = TruncationSet.of(list(reference.per_subfield)[:3])
        truncated = transition_probability(scenario, ModeSumControls(subfield_set=keep))
        for sign in (1, -1):
            kernel = kernel_relative_error(scenario, keep, sign, result=reference)
            assert kernel == pytest.approx(delta_p(reference, truncated, sign), rel=1e-10)

    def test_partial_sums_nondecreasing(self, offcentre_box_scenario):
        result = transition_probability(offcentre_box_scenario)
        indices = list(result.per_subfield)
        sums = [result.restricted(set(indices[:k])).p_minus for k in range(1, len(indices) + 1)]
        assert all(b >= a * (1 - 1e-14) for a, b in zip(sums, sums[1:]))
        assert sums[-1] == pytest.approx(result.p_minus, rel=1e-12)

    def test_vanishing_norm(self, box_scenario):
        empty = TransitionResult.from_contributions([], True, 0.0)
        with pytest.raises(ValueError):
            kernel_relative_error(box_scenario, TruncationSet.first(1), -1, result=empty)
