"""Output files: CSV tables, SVG line plots and the run manifest."""

from __future__ import annotations

import csv
import json
import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from cavity_subfields.geometry import SpectrumEnumeration, weyl_estimate  # noqa: E402
from cavity_subfields.response import TransitionResult  # noqa: E402
from cavity_subfields.subfields import (  # noqa: E402
    SubfieldDecomposition,
    TruncationSet,
    l2_relative_error,
    parseval_norm_squared,
)

logger = logging.getLogger("cavity-subfields")

MANIFEST_NAME = "manifest.json"

# Fixed SVG ids so identical data gives identical bytes
matplotlib.rcParams["svg.hashsalt"] = "cavity-subfields"


def format_value(value) -> str:
    """CSV cell text: floats in 15-digit scientific notation, tuples as "(a, b)"."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".15e")
    if isinstance(value, tuple):
        return "(" + ", ".join(str(v) for v in value) + ")"
    return str(value)


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[dict]) -> Path:
    """UTF-8 CSV with a header row; every row must provide every column."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row[c]) for c in columns])
    logger.debug(f"Wrote {path}")
    return path


def spectrum_rows(spectrum: SpectrumEnumeration) -> list[dict]:
    rows = []
    for mode in spectrum:
        rows.append(
            {
                "j": mode.sorted_index,
                "multi_index": mode.multi_index,
                "lambda": float(mode.eigenvalue),
                "weyl_ratio": float(mode.eigenvalue / weyl_estimate(mode.cross_section, mode.sorted_index)),
            }
        )
    return rows


SPECTRUM_COLUMNS = ("j", "multi_index", "lambda", "weyl_ratio")


def subfield_rows(decomposition: SubfieldDecomposition, count: int | None = None) -> list[dict]:
    """Coupled subfields in ascending mass with the cumulative delta_L2.

    Pointlike smearings have no L2 norm; their delta column is nan.
    """
    coupled = sorted(decomposition.coupled(), key=lambda s: (s.effective_mass, s.index))
    if count is not None:
        coupled = coupled[:count]
    pointlike = decomposition.smearing.kind == "pointlike"
    total = None if pointlike else parseval_norm_squared(decomposition)
    rows, kept = [], []
    for subfield in coupled:
        kept.append(subfield.index)
        delta = math.nan if pointlike else l2_relative_error(decomposition, TruncationSet.of(kept), total)
        rows.append(
            {
                "j": subfield.index,
                "multi_index": subfield.mode.multi_index,
                "lambda": float(subfield.mode.eigenvalue),
                "M_j": float(subfield.effective_mass),
                "norm_squared": float(subfield.norm_squared()),
                "cumulative_delta_l2": float(delta),
            }
        )
    return rows


SUBFIELD_COLUMNS = ("j", "multi_index", "lambda", "M_j", "norm_squared", "cumulative_delta_l2")


def _tail_deltas(logs: np.ndarray, log_total: float) -> np.ndarray:
    """Share of the total carried by the terms after each position."""
    tails = np.full(len(logs), -np.inf)
    for k in range(len(logs) - 2, -1, -1):
        tails[k] = np.logaddexp(tails[k + 1], logs[k + 1])
    if log_total == -math.inf:
        return np.zeros(len(logs))
    return np.minimum(1.0, np.exp(tails - log_total))


def probability_rows(result: TransitionResult) -> list[dict]:
    """Per-subfield contributions with the running delta_P+- after each one."""
    contributions = list(result.per_subfield.values())
    plus = _tail_deltas(result.log_contributions(1), result.log_p_plus)
    minus = _tail_deltas(result.log_contributions(-1), result.log_p_minus)
    return [
        {
            "j": c.index,
            "label": c.label,
            "M_j": float(c.mass),
            "contribution_plus": float(c.plus),
            "contribution_minus": float(c.minus),
            "log_contribution_plus": float(c.log_plus),
            "log_contribution_minus": float(c.log_minus),
            "cumulative_delta_plus": float(dp),
            "cumulative_delta_minus": float(dm),
            "converged": c.converged,
        }
        for c, dp, dm in zip(contributions, plus, minus, strict=True)
    ]


PROBABILITY_COLUMNS = (
    "j",
    "label",
    "M_j",
    "contribution_plus",
    "contribution_minus",
    "log_contribution_plus",
    "log_contribution_minus",
    "cumulative_delta_plus",
    "cumulative_delta_minus",
    "converged",
)


def write_line_plot(
    path: Path,
    curves: dict[tuple, list[tuple[float, float]]],
    title: str,
    x_label: str,
    y_label: str,
    log_x: bool = False,
    log_y: bool = True,
) -> Path:
    """Static SVG with one line per curve; non-positive y values are dropped on log axes."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    for key, points in curves.items():
        xs = [x for x, y in points if not log_y or y > 0]
        ys = [y for _, y in points if not log_y or y > 0]
        if not xs:
            continue
        ax.plot(xs, ys, marker="o", markersize=3, linewidth=1.2, label=" ".join(str(k) for k in key))
    if log_x:
        ax.set_xscale("log")
    if log_y:
        ax.set_yscale("log")
    ax.set_title(title)
    ax.set_xlabel(x_label)
    ax.set_ylabel(y_label)
    if ax.get_legend_handles_labels()[0]:
        ax.legend(frameon=False, fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.debug(f"Wrote {path}")
    return path


@dataclass
class RunManifest:
    """What a run produced and from which configuration."""

    command: str
    config_hash: str
    tool_version: str
    outputs: list[str] = field(default_factory=list)
    timestamp: str = ""
    config_name: str = ""
    length_unit: str = ""
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.timestamp:
            self.timestamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")

    def add(self, path: Path) -> None:
        self.outputs.append(path.name)

    def to_dict(self) -> dict:
        return asdict(self)


def write_manifest(out_dir: Path, manifest: RunManifest) -> Path:
    """manifest.json next to the outputs; every listed output must exist."""
    missing = [name for name in manifest.outputs if not (out_dir / name).exists()]
    if missing:
        raise FileNotFoundError(f"manifest lists missing outputs: {missing}")
    path = out_dir / MANIFEST_NAME
    path.write_text(
        json.dumps(manifest.to_dict(), indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8"
    )
    logger.info(f"Wrote manifest {path}")
    return path
