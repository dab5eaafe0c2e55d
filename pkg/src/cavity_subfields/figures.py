"""Figure pipelines: convergence curves and interaction-time sweeps at desk scale."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from cavity_subfields.analysis import (
    SweepSpec,
    convergence_scan,
    l2_convergence_curve,
    reference_probability,
    sweep,
)
from cavity_subfields.config import PRESETS, ConfigError, ScenarioConfig, merge
from cavity_subfields.subfields import decompose

logger = logging.getLogger("cavity-subfields")

FIG2_CURVES = {
    "yellow": ("fig2-yellow", {}),
    "green": ("fig2-green", {}),
    "long": ("fig2-yellow", {"detector": {"T": 3.0}}),
    "detuned": ("fig2-yellow", {"detector": {"gap": 3.0}}),
}
FIG3_PRESETS = ("superconducting", "resonant-l1", "resonant-l2", "optical")
# Presets whose gap sits near a heavier subfield also get a resonant-first series
FIG3_RESONANT_FIRST = ("resonant-l2", "optical")
FIG_N_SUBS = (1, 2, 3, 5)


@dataclass(frozen=True)
class FigureData:
    """Long-format rows for one figure plus how to draw them."""

    name: str
    title: str
    columns: tuple[str, ...]
    rows: tuple[dict, ...]
    x: str
    y: str
    series: tuple[str, ...]
    log_x: bool = False
    log_y: bool = True
    x_label: str = ""
    y_label: str = "relative difference"
    parameters: dict = field(default_factory=dict)

    def curves(self) -> dict[tuple, list[tuple[float, float]]]:
        """Points grouped by the series columns, in row order."""
        grouped: dict[tuple, list[tuple[float, float]]] = {}
        for row in self.rows:
            key = tuple(row[c] for c in self.series)
            grouped.setdefault(key, []).append((row[self.x], row[self.y]))
        return grouped


def _config(preset: str, *overrides: dict) -> ScenarioConfig:
    data = PRESETS[preset]
    for extra in overrides:
        data = merge(data, extra)
    return ScenarioConfig.from_dict(data)


def _log10(value: float) -> float:
    return math.log10(value) if value > 0 else -math.inf


def figure_2(overrides: dict | None = None, threads: int = 1, max_subfields: int = 60, **_) -> FigureData:
    """delta_L2 and delta_P- against N_sub on the square cross-section.

    The L2 curve depends only on the smearing, so it is computed once.
    """
    overrides = overrides or {}
    rows: list[dict] = []
    parameters = {}
    for curve, (preset, variant) in FIG2_CURVES.items():
        config = _config(preset, variant, overrides).with_threads(threads)
        scenario = config.scenario
        reference = reference_probability(scenario, config.controls)
        scan = convergence_scan(
            scenario, max_subfields, "ascending_mass", -1, config.controls, reference
        )
        detector = scenario.detector
        parameters[curve] = {
            "gap": detector.gap,
            "T": detector.switching.T,
            "beta": scenario.state.beta,
            "needed_subfields": scan.needed_subfields(),
        }
        for (n, delta), log_delta in zip(scan.points, scan.log_deltas, strict=True):
            rows.append(
                {
                    "curve": curve,
                    "quantity": "delta_p_minus",
                    "n_sub": n,
                    "delta": delta,
                    "log10_delta": log_delta / math.log(10),
                }
            )
        logger.info(f"fig2 {curve}: delta(1) = {scan.points[0][1]:.3f}")

    base = _config("fig2-yellow", overrides)
    decomposition = decompose(
        base.scenario.cavity, base.scenario.detector.smearing, spec=base.scenario.quadrature, threads=threads
    )
    l2 = l2_convergence_curve(decomposition, max_subfields)
    parameters["L2"] = {"needed_subfields": l2.needed_subfields()}
    for n, delta in l2.points:
        rows.append(
            {"curve": "L2", "quantity": "delta_l2", "n_sub": n, "delta": delta, "log10_delta": _log10(delta)}
        )
    return FigureData(
        name="fig2",
        title="Truncation error on a square cross-section",
        columns=("curve", "quantity", "n_sub", "delta", "log10_delta"),
        rows=tuple(rows),
        x="n_sub",
        y="delta",
        series=("curve",),
        x_label="number of subfields",
        parameters=parameters,
    )


def _omega_t_grid(points: int) -> tuple[float, ...]:
    if points < 2:
        raise ConfigError(f"a sweep needs at least 2 points, got {points}", field="points")
    return tuple(float(v) for v in np.geomspace(1.0, 100.0, points))


def _time_sweep(
    label_key: str,
    label: str,
    config: ScenarioConfig,
    grid: tuple[float, ...],
    threads: int,
    ordering: str | None = None,
) -> list[dict]:
    ordering = ordering or config.ordering
    spec = SweepSpec("omega_T", grid, config.scenario)
    rows = sweep(
        spec,
        outputs=("delta_p_plus", "delta_p_minus"),
        n_subs=FIG_N_SUBS,
        ordering=ordering,
        controls=config.controls,
        threads=threads,
    )
    return [{label_key: label, "ordering": ordering, **row} for row in rows]


def figure_3(overrides: dict | None = None, threads: int = 1, points: int = 13, **_) -> FigureData:
    """delta_P+- (N_sub in 1, 2, 3, 5) against Omega T for Gaussian switching.

    Defaults are L/R = 10^3 and sigma/R = 10^-2 for the cavity presets. The
    presets in FIG3_RESONANT_FIRST are also summed with the subfield closest
    to resonance first.
    """
    grid = _omega_t_grid(points)
    rows: list[dict] = []
    for preset in FIG3_PRESETS:
        config = _config(preset, overrides or {})
        rows.extend(_time_sweep("preset", preset, config, grid, threads))
        if preset in FIG3_RESONANT_FIRST and config.ordering != "resonant_first":
            rows.extend(_time_sweep("preset", preset, config, grid, threads, "resonant_first"))
    return FigureData(
        name="fig3",
        title="Subfield truncation against interaction time (Gaussian switching)",
        columns=("preset", "ordering", "variable", "value", "n_sub", "output", "delta", "log10_delta"),
        rows=tuple(rows),
        x="value",
        y="delta",
        series=("preset", "ordering", "output", "n_sub"),
        log_x=True,
        x_label="Omega T",
        parameters={
            "grid": list(grid),
            "n_subs": list(FIG_N_SUBS),
            "resonant_first": list(FIG3_RESONANT_FIRST),
        },
    )


def figure_4(overrides: dict | None = None, threads: int = 1, points: int = 13, **_) -> FigureData:
    """Sudden switching at hbar Omega / (M_01 c^2) = 0.004, with the Gaussian case alongside."""
    grid = _omega_t_grid(points)
    rows: list[dict] = []
    for switching in ("sudden", "gaussian"):
        config = _config("sudden", {"detector": {"switching": switching}}, overrides or {})
        rows.extend(_time_sweep("switching", switching, config, grid, threads))
    return FigureData(
        name="fig4",
        title="Subfield truncation for sudden switching",
        columns=("switching", "ordering", "variable", "value", "n_sub", "output", "delta", "log10_delta"),
        rows=tuple(rows),
        x="value",
        y="delta",
        series=("switching", "output", "n_sub"),
        log_x=True,
        x_label="Omega T",
        parameters={"grid": list(grid), "n_subs": list(FIG_N_SUBS)},
    )


FIGURES: dict[str, Callable[..., FigureData]] = {
    "fig2": figure_2,
    "fig3": figure_3,
    "fig4": figure_4,
}


def build_figure(name: str, overrides: dict | None = None, threads: int = 1, **options) -> FigureData:
    """Run a named figure pipeline.

    Raises:
        ValueError: For an unknown figure name.
    """
    if name not in FIGURES:
        raise ValueError(f"unknown figure {name!r}; choose one of {sorted(FIGURES)}")
    logger.info(f"Building {name}")
    return FIGURES[name](overrides, threads, **options)
