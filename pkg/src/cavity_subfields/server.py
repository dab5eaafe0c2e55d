"""MCP tool server for cavity subfield computations (stdio transport)."""

import logging
import math
import os

from fastmcp import FastMCP

from cavity_subfields import __version__
from cavity_subfields.analysis import convergence_scan, reference_probability
from cavity_subfields.config import PRESETS, ConfigError, ScenarioConfig
from cavity_subfields.export import probability_rows, spectrum_rows, subfield_rows
from cavity_subfields.geometry import CrossSection, SpectrumTooLargeError, enumerate_spectrum
from cavity_subfields.response import ConvergenceError, transition_probability
from cavity_subfields.storage import RunStore
from cavity_subfields.subfields import decompose, mass_cutoff_for_count

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s [%(levelname)s] %(message)s",
    datefmt="%H:%M:%S",
)
logger = logging.getLogger("cavity-subfields")
if os.environ.get("DEV_MODE"):
    logger.setLevel(logging.DEBUG)

mcp = FastMCP("cavity-subfields")


def _scenario_config(
    preset: str | None,
    config_path: str | None,
    overrides: dict | None,
) -> ScenarioConfig:
    if config_path:
        return ScenarioConfig.load(config_path, overrides)
    if preset:
        return ScenarioConfig.preset(preset, overrides)
    raise ConfigError("give a preset or a config_path")


def _error(exc: Exception) -> dict:
    result = {"status": "error", "error": str(exc)}
    if isinstance(exc, ConfigError):
        result["field"] = exc.field
        result["line"] = exc.line
    if isinstance(exc, ConvergenceError):
        result["tail_estimate"] = exc.result.tail_estimate
    return result


def _finite(value: float) -> float | None:
    return value if math.isfinite(value) else None


@mcp.tool()
def get_status() -> dict:
    """Version, available presets and run index statistics."""
    return {
        "status": "ok",
        "version": __version__,
        "presets": sorted(PRESETS),
        **RunStore().get_db_stats(),
    }


@mcp.tool()
def list_presets() -> dict:
    """Scenario presets as the config documents they expand to."""
    return {"status": "ok", "presets": PRESETS}


@mcp.tool()
def get_spectrum(
    cutoff: float,
    shape: str = "rectangle",
    lengths: list[float] | None = None,
    radius: float | None = None,
    boundary: str = "dirichlet",
    limit: int = 50,
) -> dict:
    """Transverse Laplacian eigenvalues up to a cutoff.

    Args:
        cutoff: Largest eigenvalue lambda
        shape: 'rectangle' or 'disk'
        lengths: Rectangle side lengths
        radius: Disk radius
        boundary: 'dirichlet' or 'neumann' (rectangles only)
        limit: Max modes returned (default: 50)
    """
    try:
        if shape == "disk":
            cs = CrossSection.disk(radius if radius is not None else 1.0)
        else:
            cs = CrossSection.rectangle(*(lengths or [1.0, 1.0]), boundary=boundary)
        rows = spectrum_rows(enumerate_spectrum(cs, cutoff))
    except (ValueError, SpectrumTooLargeError) as exc:
        return _error(exc)
    for row in rows:
        row["multi_index"] = list(row["multi_index"])
    return {"status": "ok", "mode_count": len(rows), "modes": rows[:limit]}


@mcp.tool()
def decompose_smearing(
    preset: str | None = None,
    config_path: str | None = None,
    overrides: dict | None = None,
    subfields: int = 20,
) -> dict:
    """Effective masses, smearing norms and cumulative delta_L2 of the coupled subfields.

    Args:
        preset: Named preset (see list_presets)
        config_path: Scenario file, used instead of the preset
        overrides: Nested config values applied on top
        subfields: Rows returned (default: 20)
    """
    try:
        config = _scenario_config(preset, config_path, overrides)
        scenario = config.scenario
        smearing = scenario.detector.smearing
        cutoff = None if smearing.kind == "gaussian" else mass_cutoff_for_count(scenario.cavity, 4 * subfields)
        decomposition = decompose(scenario.cavity, smearing, cutoff, spec=scenario.quadrature)
        rows = subfield_rows(decomposition, subfields)
    except ValueError as exc:
        return _error(exc)
    for row in rows:
        row["multi_index"] = list(row["multi_index"])
        row["cumulative_delta_l2"] = _finite(row["cumulative_delta_l2"])
    return {
        "status": "ok",
        "name": config.name,
        "mode_count": len(decomposition),
        "coupled_count": len(decomposition.coupled()),
        "subfields": rows,
    }


@mcp.tool()
def compute_transition_probability(
    preset: str | None = None,
    config_path: str | None = None,
    overrides: dict | None = None,
    top: int = 10,
) -> dict:
    """P_+ and P_- (per g^2/hbar^2) with the leading per-subfield contributions.

    Args:
        preset: Named preset (see list_presets)
        config_path: Scenario file, used instead of the preset
        overrides: Nested config values applied on top
        top: Subfields listed in the breakdown (default: 10)
    """
    try:
        config = _scenario_config(preset, config_path, overrides)
        result = transition_probability(config.scenario, config.controls)
    except ValueError as exc:
        return _error(exc)
    return {
        "status": "ok",
        "name": config.name,
        "length_unit": config.length_unit,
        "p_plus": result.p_plus,
        "p_minus": result.p_minus,
        "log_p_plus": _finite(result.log_p_plus),
        "log_p_minus": _finite(result.log_p_minus),
        "converged": result.converged,
        "tail_estimate": result.tail_estimate,
        "subfield_count": len(result.per_subfield),
        "subfields": probability_rows(result)[:top],
    }


@mcp.tool()
def convergence_curve(
    preset: str | None = None,
    config_path: str | None = None,
    overrides: dict | None = None,
    max_subfields: int = 30,
    ordering: str | None = None,
    sign: int = -1,
) -> dict:
    """Relative error delta_P(N_sub) of truncated subfield sums against the full sum.

    Args:
        preset: Named preset (see list_presets)
        config_path: Scenario file, used instead of the preset
        overrides: Nested config values applied on top
        max_subfields: Largest N_sub (default: 30)
        ordering: 'ascending_mass' or 'resonant_first' (default: from config)
        sign: +1 for excitation, -1 for emission (default: -1)
    """
    try:
        config = _scenario_config(preset, config_path, overrides)
        reference = reference_probability(config.scenario, config.controls)
        curve = convergence_scan(
            config.scenario,
            max_subfields,
            ordering or config.ordering,
            sign,
            config.controls,
            reference,
        )
    except (ValueError, ConvergenceError) as exc:
        return _error(exc)
    return {
        "status": "ok",
        "name": config.name,
        "ordering": curve.ordering,
        "needed_subfields": curve.needed_subfields(),
        "points": [
            {"n_sub": n, "delta": delta, "log_delta": _finite(log_delta), "j": j}
            for (n, delta), log_delta, j in zip(curve.points, curve.log_deltas, curve.indices, strict=True)
        ],
    }


@mcp.tool()
def list_runs(limit: int = 20) -> dict:
    """Recent CLI runs from the run index.

    Args:
        limit: Max runs (default: 20)
    """
    store = RunStore()
    return {"status": "ok", "runs": [r.to_dict() for r in store.recent_runs(limit=limit)]}


def main():
    """Run the MCP server over stdio."""
    logger.info(f"Starting cavity-subfields MCP server {__version__}")
    mcp.run()


if __name__ == "__main__":
    main()
