"""Tests for the MCP server."""

from cavity_subfields.server import (
    compute_transition_probability,
    convergence_curve,
    decompose_smearing,
    get_spectrum,
    get_status,
    list_presets,
    list_runs,
)

# Uses fixtures from conftest.py: square_config_path


def test_get_status():
    """Test that get_status returns expected fields."""
    # FastMCP wraps functions - access the underlying fn
    result = get_status.fn()
    assert result["status"] == "ok"
    assert "version" in result
    assert "fig2-yellow" in result["presets"]
    assert result["run_count"] == 0


def test_list_presets():
    result = list_presets.fn()
    assert result["status"] == "ok"
    assert result["presets"]["superconducting"]["geometry"]["shape"] == "disk"


class TestGetSpectrum:
    def test_unit_square(self):
        result = get_spectrum.fn(cutoff=54.3, lengths=[1.0, 1.0])
        assert result["status"] == "ok"
        assert result["mode_count"] == 3
        assert result["modes"][0]["multi_index"] == [1, 1]

    def test_disk(self):
        result = get_spectrum.fn(cutoff=20.0, shape="disk", radius=1.0)
        assert result["mode_count"] == 3
        assert result["modes"][1]["multi_index"] == [1, 1, "cos"]

    def test_limit(self):
        result = get_spectrum.fn(cutoff=400.0, lengths=[1.0, 1.0], limit=5)
        assert len(result["modes"]) == 5
        assert result["mode_count"] > 5

    def test_invalid_cutoff(self):
        result = get_spectrum.fn(cutoff=-1.0)
        assert result["status"] == "error"


class TestDecomposeSmearing:
    def test_square_config(self, square_config_path):
        result = decompose_smearing.fn(config_path=str(square_config_path), subfields=5)
        assert result["status"] == "ok"
        assert result["name"] == "square"
        assert len(result["subfields"]) == 5
        assert result["coupled_count"] < result["mode_count"]

    def test_config_error_names_field(self):
        result = decompose_smearing.fn(preset="fig2-yellow", overrides={"detector": {"sigma": -1.0}})
        assert result["status"] == "error"
        assert result["field"] == "detector.sigma"

    def test_needs_source(self):
        result = decompose_smearing.fn()
        assert result["status"] == "error"


class TestTransitionProbability:
    def test_square_config(self, square_config_path):
        result = compute_transition_probability.fn(config_path=str(square_config_path), top=3)
        assert result["status"] == "ok"
        assert result["converged"] is True
        assert result["p_minus"] > result["p_plus"] > 0
        assert len(result["subfields"]) == 3

    def test_overrides(self, square_config_path):
        result = compute_transition_probability.fn(
            config_path=str(square_config_path), overrides={"numerics": {"n_max": 1}}
        )
        assert result["status"] == "ok"
        assert result["converged"] is False

    def test_unknown_preset(self):
        result = compute_transition_probability.fn(preset="cryogenic")
        assert result["status"] == "error"
        assert result["field"] == "preset"


class TestConvergenceCurve:
    def test_square_config(self, square_config_path):
        result = convergence_curve.fn(config_path=str(square_config_path), max_subfields=5)
        assert result["status"] == "ok"
        assert [p["n_sub"] for p in result["points"]] == [1, 2, 3, 4, 5]
        deltas = [p["delta"] for p in result["points"]]
        assert all(b <= a for a, b in zip(deltas, deltas[1:]))

    def test_resonant_first(self, square_config_path):
        result = convergence_curve.fn(
            config_path=str(square_config_path), max_subfields=3, ordering="resonant_first"
        )
        assert result["ordering"] == "resonant_first"

    def test_bad_ordering(self, square_config_path):
        result = convergence_curve.fn(config_path=str(square_config_path), ordering="random")
        assert result["status"] == "error"


def test_list_runs_empty():
    result = list_runs.fn()
    assert result["status"] == "ok"
    assert result["runs"] == []
