"""Tests for truncation errors, convergence curves and sweeps."""

import logging
import math
from dataclasses import replace

import pytest

from cavity_subfields.analysis import (
    ConvergenceCurve,
    SweepSpec,
    ZeroReferenceError,
    convergence_scan,
    delta_p,
    l2_convergence_curve,
    log_delta_p,
    log_truncation_delta,
    order_subfields,
    reference_probability,
    sweep,
)
from cavity_subfields.detector import Smearing
from cavity_subfields.response import (
    ConvergenceError,
    ModeSumControls,
    TransitionResult,
    transition_probability,
)
from cavity_subfields.subfields import TruncationSet, decompose

# Uses fixtures from conftest.py: box_scenario, offcentre_box_scenario, box_factory


@pytest.fixture
def reference(offcentre_box_scenario):
    return reference_probability(offcentre_box_scenario)


class TestDeltaP:
    """Tests for the relative truncation error of probabilities."""

    def test_self_difference_is_zero(self, reference):
        assert delta_p(reference, reference, -1) == 0.0
        assert delta_p(reference, reference, 1) == 0.0

    def test_zero_reference(self):
        empty = TransitionResult.from_contributions([], True, 0.0)
        with pytest.raises(ZeroReferenceError):
            delta_p(empty, empty, -1)

    def test_unconverged_reference(self, reference):
        unconverged = TransitionResult.from_contributions(list(reference.per_subfield.values()), False, 1.0)
        with pytest.raises(ConvergenceError):
            delta_p(unconverged, reference, -1)

    def test_matches_truncated_run(self, offcentre_box_scenario, reference):
        keep = TruncationSet.of(list(reference.per_subfield)[:2])
        truncated = transition_probability(offcentre_box_scenario, ModeSumControls(subfield_set=keep))
        expected = 1 - truncated.p_minus / reference.p_minus
        assert delta_p(reference, truncated, -1) == pytest.approx(expected, rel=1e-9)
        assert 0.0 < expected < 1.0

    def test_log_delta_consistent(self, offcentre_box_scenario, reference):
        keep = TruncationSet.of(list(reference.per_subfield)[:2])
        truncated = transition_probability(offcentre_box_scenario, ModeSumControls(subfield_set=keep))
        value = log_delta_p(reference, truncated, -1)
        assert value == pytest.approx(math.log(delta_p(reference, truncated, -1)), rel=1e-8)

    def test_log_truncation_delta_everything_kept(self, reference):
        everything = TruncationSet.of(list(reference.per_subfield))
        assert log_truncation_delta(reference, everything, -1) == -math.inf

    def test_log_delta_reaches_below_double_precision(self, box_scenario):
        """delta_P+ after the lowest subfield is far below 1e-16 yet still resolved."""
        reference = reference_probability(box_scenario)
        first = TruncationSet.of([next(iter(reference.per_subfield))])
        value = log_truncation_delta(reference, first, 1)
        assert math.isfinite(value)
        assert value < math.log(1e-16)


class TestReferenceProbability:
    def test_returns_converged(self, box_scenario):
        result = reference_probability(box_scenario)
        assert result.converged
        assert result.tail_estimate < 1e-4

    def test_ignores_subfield_set(self, box_scenario):
        controls = ModeSumControls(subfield_set=TruncationSet.first(1))
        full = reference_probability(box_scenario, controls)
        assert len(full.per_subfield) > 1


class TestOrdering:
    """Tests for ascending-mass and resonant-first orderings."""

    def test_ascending_mass(self, box_scenario):
        reference = reference_probability(box_scenario)
        order = order_subfields(reference, box_scenario)
        masses = [reference.per_subfield[j].mass for j in order]
        assert masses == sorted(masses)

    def test_resonant_first(self, box_scenario):
        """Omega = 2 sits closest to the degenerate (1,3)/(3,1) pair at M = pi sqrt(10) / 4."""
        reference = reference_probability(box_scenario)
        order = order_subfields(reference, box_scenario, "resonant_first")
        first, second = (reference.per_subfield[j] for j in order[:2])
        assert first.mass == pytest.approx(math.pi * math.sqrt(10) / 4)
        assert second.mass == pytest.approx(first.mass)
        assert sorted(order) == sorted(reference.per_subfield)

    def test_unknown_ordering(self, box_scenario):
        reference = reference_probability(box_scenario)
        with pytest.raises(ValueError):
            order_subfields(reference, box_scenario, "random")


class TestConvergenceScan:
    """Tests for delta_P(N_sub) curves."""

    def test_nonincreasing(self, offcentre_box_scenario):
        curve = convergence_scan(offcentre_box_scenario, 15)
        assert curve.n_sub == list(range(1, len(curve.points) + 1))
        assert all(b <= a for a, b in zip(curve.deltas, curve.deltas[1:]))
        assert all(0.0 <= d <= 1.0 for d in curve.deltas)

    def test_counts_only_coupled(self, box_scenario):
        """Even modes of the centred detector do not advance N_sub."""
        curve = convergence_scan(box_scenario, 6)
        reference = reference_probability(box_scenario)
        assert set(curve.indices) <= set(reference.per_subfield)

    def test_matches_truncated_runs(self, offcentre_box_scenario, reference):
        curve = convergence_scan(offcentre_box_scenario, 4, reference=reference)
        for n in (1, 3):
            keep = TruncationSet.of(list(curve.indices[:n]))
            truncated = transition_probability(offcentre_box_scenario, ModeSumControls(subfield_set=keep))
            assert curve.delta_at(n) == pytest.approx(delta_p(reference, truncated, -1), rel=1e-8)

    def test_needed_subfields(self, offcentre_box_scenario):
        curve = convergence_scan(offcentre_box_scenario, 200)
        needed = curve.needed_subfields()
        assert needed is not None
        assert curve.delta_at(needed) < 1e-2
        if needed > 1:
            assert curve.delta_at(needed - 1) >= 1e-2

    def test_invalid_max_subfields(self, box_scenario):
        with pytest.raises(ValueError):
            convergence_scan(box_scenario, 0)


class TestConvergenceCurve:
    def test_rejects_unsorted_points(self):
        with pytest.raises(ValueError):
            ConvergenceCurve("ascending_mass", ((2, 0.1), (1, 0.2)))

    def test_rejects_unknown_ordering(self):
        with pytest.raises(ValueError):
            ConvergenceCurve("by_norm", ((1, 0.1),))

    def test_delta_at_missing(self):
        curve = ConvergenceCurve("ascending_mass", ((1, 0.5), (2, 0.1)))
        with pytest.raises(KeyError):
            curve.delta_at(3)
        assert curve.needed_subfields() is None
        assert curve.needed_subfields(0.2) == 2


class TestL2Curve:
    def test_independent_of_switching(self, box_factory):
        """delta_L2 depends on the smearing alone."""
        a = box_factory(y0=(1.3, 2.1), T=1.0)
        b = box_factory(y0=(1.3, 2.1), T=5.0)
        curve_a = l2_convergence_curve(decompose(a.cavity, a.detector.smearing), 10)
        curve_b = l2_convergence_curve(decompose(b.cavity, b.detector.smearing), 10)
        assert curve_a.points == curve_b.points

    def test_nonincreasing(self, offcentre_box_scenario):
        smearing = offcentre_box_scenario.detector.smearing
        curve = l2_convergence_curve(decompose(offcentre_box_scenario.cavity, smearing), 30)
        assert len(curve.points) == 30
        assert all(b <= a for a, b in zip(curve.deltas, curve.deltas[1:]))


class TestSweep:
    """Tests for parameter sweeps."""

    def test_spec_validation(self, box_scenario):
        with pytest.raises(ValueError):
            SweepSpec("temperature", (1.0,), box_scenario)
        with pytest.raises(ValueError):
            SweepSpec("beta", (), box_scenario)
        with pytest.raises(ValueError):
            SweepSpec("beta", (1.0, 3.0, 2.0), box_scenario)

    def test_rows(self, offcentre_box_scenario):
        spec = SweepSpec("omega_T", (2.0, 4.0), offcentre_box_scenario)
        rows = sweep(spec, outputs=("delta_p_minus", "delta_l2"), n_subs=(1, 3))
        assert len(rows) == 2 * 2 * 2
        assert {row["output"] for row in rows} == {"delta_p_minus", "delta_l2"}
        assert [row["value"] for row in rows[:4]] == [2.0] * 4

    def test_l2_rows_do_not_depend_on_switching(self, offcentre_box_scenario):
        spec = SweepSpec("omega_T", (2.0, 6.0), offcentre_box_scenario)
        rows = sweep(spec, outputs=("delta_l2",), n_subs=(2,))
        assert rows[0]["delta"] == rows[1]["delta"]

    def test_deterministic_across_threads(self, offcentre_box_scenario):
        spec = SweepSpec("beta", (0.5, 1.0, math.inf), offcentre_box_scenario)
        serial = sweep(spec, outputs=("delta_p_plus", "delta_p_minus"), n_subs=(1, 2), threads=1)
        parallel = sweep(spec, outputs=("delta_p_plus", "delta_p_minus"), n_subs=(1, 2), threads=2)
        assert serial == parallel

    def test_n_sub_variable(self, offcentre_box_scenario):
        spec = SweepSpec("n_sub", (1.0, 2.0, 4.0), offcentre_box_scenario)
        rows = sweep(spec)
        assert [row["n_sub"] for row in rows] == [1, 2, 4]
        assert all(b["delta"] <= a["delta"] for a, b in zip(rows, rows[1:]))

    def test_n_sub_beyond_coupled_subfields(self, offcentre_box_scenario, caplog):
        """Asking for more subfields than couple keeps them all: delta is exactly 0."""
        spec = SweepSpec("omega_T", (2.0,), offcentre_box_scenario)
        with caplog.at_level(logging.DEBUG, logger="cavity-subfields"):
            rows = sweep(spec, outputs=("delta_p_minus",), n_subs=(1, 100_000))
        first, beyond = rows
        assert first["delta"] > 0.0
        assert beyond["n_sub"] == 100_000
        assert beyond["delta"] == 0.0
        assert beyond["log10_delta"] == -math.inf
        assert "exceeds the" in caplog.text

    def test_sigma_needs_gaussian(self, offcentre_box_scenario):
        detector = replace(offcentre_box_scenario.detector, smearing=Smearing.pointlike((1.3, 2.1), 10.0))
        spec = SweepSpec("sigma_over_R", (0.1,), replace(offcentre_box_scenario, detector=detector))
        with pytest.raises(ValueError):
            sweep(spec)

    def test_invalid_outputs(self, box_scenario):
        spec = SweepSpec("beta", (1.0,), box_scenario)
        with pytest.raises(ValueError):
            sweep(spec, outputs=("delta_energy",))
        with pytest.raises(ValueError):
            sweep(spec, n_subs=(0,))
