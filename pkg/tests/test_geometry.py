"""Tests for cross-sections and transverse eigenpairs."""

import math

import numpy as np
import pytest

from cavity_subfields.geometry import (
    CrossSection,
    SpectrumTooLargeError,
    disk_eigenpair,
    enumerate_modes,
    enumerate_spectrum,
    mode_overlap,
    rectangle_eigenpair,
    weyl_estimate,
)

X01 = 2.404825557695773
X11 = 3.831705970207512

# Uses fixtures from conftest.py: unit_square, unit_disk


def _brute_force(lengths, cutoff, lowest):
    """Every index tuple with eigenvalue <= cutoff, by exhaustive search."""
    tops = [int(math.sqrt(cutoff) * length / math.pi) + 2 for length in lengths]
    found = []
    for n1 in range(lowest, tops[0] + 1):
        for n2 in range(lowest, tops[1] + 1):
            value = (n1 * math.pi / lengths[0]) ** 2 + (n2 * math.pi / lengths[1]) ** 2
            if value <= cutoff:
                found.append((value, (n1, n2)))
    return sorted(found)


class TestCrossSection:
    """Tests for domain construction and validation."""

    def test_rectangle_properties(self):
        cs = CrossSection.rectangle(2.0, 3.0)
        assert cs.dimension == 2
        assert cs.volume == 6.0
        assert cs.centre == (1.0, 1.5)
        assert cs.contains((1.0, 2.9))
        assert not cs.contains((2.5, 1.0))

    def test_disk_properties(self, unit_disk):
        assert unit_disk.volume == pytest.approx(math.pi)
        assert unit_disk.contains((0.5, 0.5))
        assert not unit_disk.contains((0.8, 0.8))

    def test_invalid_shapes(self):
        with pytest.raises(ValueError):
            CrossSection.rectangle(1.0, -1.0)
        with pytest.raises(ValueError):
            CrossSection.disk(0.0)
        with pytest.raises(ValueError):
            CrossSection(shape="triangle", lengths=(1.0,))
        with pytest.raises(ValueError):
            CrossSection(shape="disk", radius=1.0, boundary="neumann")

    def test_integrate_area(self, unit_disk):
        assert unit_disk.integrate(lambda y: np.ones(y.shape[:-1])) == pytest.approx(math.pi, rel=1e-12)


class TestRectangleSpectrum:
    """Tests for rectangle enumeration against brute force."""

    def test_unit_square_three_modes(self, unit_square):
        """2 pi^2 once, 5 pi^2 twice below 5.5 pi^2."""
        spectrum = enumerate_spectrum(unit_square, 5.5 * math.pi**2)
        assert len(spectrum) == 3
        assert spectrum[1].eigenvalue == pytest.approx(2 * math.pi**2)
        assert spectrum[2].eigenvalue == spectrum[3].eigenvalue
        assert spectrum[2].multi_index == (1, 2)
        assert spectrum[3].multi_index == (2, 1)

    @pytest.mark.parametrize("boundary,lowest", [("dirichlet", 1), ("neumann", 0)])
    def test_matches_brute_force(self, boundary, lowest):
        lengths = (1.0, 1.7)
        cutoff = 400.0
        spectrum = enumerate_spectrum(CrossSection.rectangle(*lengths, boundary=boundary), cutoff)
        expected = _brute_force(lengths, cutoff, lowest)
        assert len(spectrum) == len(expected)
        for mode, (value, _) in zip(spectrum, expected, strict=True):
            assert mode.eigenvalue == pytest.approx(value, rel=1e-12)
        assert sorted(m.multi_index for m in spectrum) == sorted(idx for _, idx in expected)

    def test_sorted_indices_are_consecutive(self, unit_square):
        spectrum = enumerate_spectrum(unit_square, 300.0)
        assert [m.sorted_index for m in spectrum] == list(range(1, len(spectrum) + 1))
        assert np.all(np.diff(spectrum.eigenvalues) >= 0)

    def test_neumann_zero_mode(self):
        cs = CrossSection.rectangle(2.0, 3.0, boundary="neumann")
        first = enumerate_spectrum(cs, 1.0)[1]
        assert first.multi_index == (0, 0)
        assert first.eigenvalue == 0.0
        assert first((0.3, 0.4)) == pytest.approx(1 / math.sqrt(6.0))

    def test_weyl_ratio_at_ten_thousand(self, unit_square):
        spectrum = enumerate_modes(unit_square, 10_000)
        ratio = spectrum[10_000].eigenvalue / weyl_estimate(unit_square, 10_000)
        assert ratio == pytest.approx(1.0, abs=0.05)

    def test_too_large_raises(self, unit_square):
        with pytest.raises(SpectrumTooLargeError):
            enumerate_spectrum(unit_square, 1e5, max_modes=100)

    def test_nonpositive_cutoff(self, unit_square):
        with pytest.raises(ValueError):
            enumerate_spectrum(unit_square, 0.0)

    def test_index_out_of_range(self, unit_square):
        spectrum = enumerate_spectrum(unit_square, 5.5 * math.pi**2)
        with pytest.raises(IndexError):
            spectrum[4]


class TestEigenpairs:
    """Tests for explicit eigenpair construction and normalization."""

    def test_dirichlet_index_must_be_positive(self):
        with pytest.raises(ValueError):
            rectangle_eigenpair((1.0, 1.0), (0, 1))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            rectangle_eigenpair((1.0, 1.0), (1, 1, 1))

    def test_rectangle_normalized(self):
        mode = rectangle_eigenpair((1.0, 2.0), (2, 3))
        assert mode_overlap(mode, mode) == pytest.approx(1.0, rel=1e-10)

    def test_rectangle_orthogonal(self):
        a = rectangle_eigenpair((1.0, 2.0), (1, 1))
        b = rectangle_eigenpair((1.0, 2.0), (1, 2))
        assert abs(mode_overlap(a, b)) < 1e-12

    def test_disk_eigenvalue(self):
        assert disk_eigenpair(1.0, 0, 1).eigenvalue == pytest.approx(X01**2)
        assert disk_eigenpair(2.0, 1, 1, "sin").eigenvalue == pytest.approx((X11 / 2) ** 2)

    def test_disk_radial_normalization(self):
        """2 pi int_0^R r psi^2 dr = 1 for an m = 0 mode."""
        mode = disk_eigenpair(1.0, 0, 2)
        assert mode_overlap(mode, mode) == pytest.approx(1.0, rel=1e-9)

    def test_disk_real_modes_normalized_and_orthogonal(self):
        cos_mode = disk_eigenpair(1.0, 2, 1, "cos")
        sin_mode = disk_eigenpair(1.0, 2, 1, "sin")
        assert mode_overlap(cos_mode, cos_mode) == pytest.approx(1.0, rel=1e-9)
        assert mode_overlap(sin_mode, sin_mode) == pytest.approx(1.0, rel=1e-9)
        assert abs(mode_overlap(cos_mode, sin_mode)) < 1e-10

    def test_disk_sin_with_m_zero_rejected(self):
        with pytest.raises(ValueError):
            disk_eigenpair(1.0, 0, 1, "sin")

    def test_disk_on_axis_value(self):
        """Only m = 0 modes are nonzero on the axis."""
        assert disk_eigenpair(1.0, 1, 1)((0.0, 0.0)) == 0.0
        assert disk_eigenpair(1.0, 0, 1)((0.0, 0.0)) > 0.0

    def test_disk_vanishes_on_boundary(self):
        mode = disk_eigenpair(1.0, 1, 2)
        assert abs(mode((1.0, 0.0))) < 1e-12


class TestDiskSpectrum:
    """Tests for disk enumeration."""

    def test_first_modes(self, unit_disk):
        """x01^2 once, then x11^2 as a cos/sin pair."""
        spectrum = enumerate_spectrum(unit_disk, 20.0)
        assert len(spectrum) == 3
        assert spectrum[1].multi_index == (0, 1, "cos")
        assert spectrum[2].multi_index == (1, 1, "cos")
        assert spectrum[3].multi_index == (1, 1, "sin")

    def test_multiplicity_complete(self, unit_disk):
        spectrum = enumerate_spectrum(unit_disk, 400.0)
        labels = {m.multi_index for m in spectrum}
        for m, index, parity in labels:
            if m > 0:
                assert (m, index, "sin" if parity == "cos" else "cos") in labels
        assert np.all(np.diff(spectrum.eigenvalues) >= 0)

    def test_weyl_ratio(self, unit_disk):
        spectrum = enumerate_modes(unit_disk, 2000)
        ratio = spectrum[2000].eigenvalue / weyl_estimate(unit_disk, 2000)
        assert ratio == pytest.approx(1.0, abs=0.1)
