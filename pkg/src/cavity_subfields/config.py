"""Scenario files: YAML or JSON with units, geometry, field, detector and numerics sections."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from cavity_subfields.detector import (
    INITIAL_STATES,
    SWITCHING_KINDS,
    DetectorModel,
    Smearing,
    Switching,
)
from cavity_subfields.geometry import BOUNDARIES, SHAPES, CrossSection
from cavity_subfields.numerics import QuadratureSpec
from cavity_subfields.response import (
    STATE_KINDS,
    FieldState,
    ModeSumControls,
    Scenario,
)
from cavity_subfields.subfields import CavityField, Units

logger = logging.getLogger("cavity-subfields")

SECTIONS = ("units", "geometry", "field", "detector", "numerics")
ORDERINGS = ("ascending_mass", "resonant_first")

# First positive zero of J_0; fixes M_01 = X01 hbar / (c R)
X01 = 2.404825557695773

OUT_ENV = "CAVITY_SUBFIELDS_OUT"
THREADS_ENV = "CAVITY_SUBFIELDS_THREADS"


class ConfigError(ValueError):
    """A scenario file that does not describe a valid scenario."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        self.message = message
        where = field or "config"
        if line is not None:
            where = f"{where} (line {line})"
        super().__init__(f"{where}: {message}")


def _superconducting() -> dict:
    return {
        "name": "superconducting",
        "units": {"length_unit": "R", "hbar": 1.0, "c": 1.0},
        "geometry": {"shape": "disk", "R": 1.0, "L": 1000.0},
        "field": {"mass": 0.0, "state": "vacuum"},
        "detector": {
            "gap": 1e-2,
            "smearing": "gaussian",
            "sigma": 1e-2,
            "position": {"r0": 0.0, "phi0": 0.0},
            "switching": "gaussian",
            "T": 1000.0,
            "initial_state": "ground",
        },
        "numerics": {"ordering": "ascending_mass"},
    }


def _with(base: dict, **sections) -> dict:
    data = copy.deepcopy(base)
    for section, values in sections.items():
        if section == "name":
            data["name"] = values
        else:
            data.setdefault(section, {}).update(values)
    return data


def _fig2(state: dict, name: str) -> dict:
    return {
        "name": name,
        "units": {"length_unit": "sigma", "hbar": 1.0, "c": 1.0},
        "geometry": {"shape": "rectangle", "lengths": [20.0, 20.0], "boundary": "dirichlet", "L": 1000.0},
        "field": {"mass": 0.0, **state},
        "detector": {
            "gap": 1.0,
            "smearing": "gaussian",
            "sigma": 1.0,
            "switching": "gaussian",
            "T": 1.0,
            "initial_state": "excited",
        },
        "numerics": {"ordering": "ascending_mass"},
    }


# Lengths in units of R (cavity presets) or sigma (fig2 presets); hbar = c = 1.
# SI anchors: superconducting R = 1 mm, sigma = 10 um, Omega = 10 GHz;
# optical R = 0.1 mm, sigma = 0.1 nm, Omega = 100 THz.
PRESETS: dict[str, dict] = {
    "superconducting": _superconducting(),
    "optical": _with(
        _superconducting(),
        name="optical",
        detector={"gap": 10.0, "sigma": 1e-6, "T": 1.0},
    ),
    "resonant-l1": _with(
        _superconducting(),
        name="resonant-l1",
        detector={"gap": 1.5 * X01, "T": 10.0 / (1.5 * X01), "initial_state": "excited"},
    ),
    "resonant-l2": _with(
        _superconducting(),
        name="resonant-l2",
        detector={"gap": 2.5 * X01, "T": 10.0 / (2.5 * X01), "initial_state": "excited"},
    ),
    "sudden": _with(
        _superconducting(),
        name="sudden",
        detector={"gap": 0.004 * X01, "switching": "sudden", "T": 10.0 / (0.004 * X01)},
    ),
    "fig2-yellow": _fig2({"state": "vacuum"}, "fig2-yellow"),
    "fig2-green": _fig2({"state": "thermal", "beta": 0.1}, "fig2-green"),
}


def merge(base: dict, overrides: dict) -> dict:
    """Recursive dict merge; override values win, nested sections merge."""
    merged = copy.deepcopy(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def parse_overrides(items: list[str] | None) -> dict:
    """Turn ``section.key=value`` strings into a nested dict; values are YAML scalars."""
    result: dict = {}
    for item in items or []:
        key, sep, raw = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override '{item}' is not of the form section.key=value")
        parts = key.strip().split(".")
        target = result
        for part in parts[:-1]:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise ConfigError(f"override '{item}' conflicts with another override", field=key)
        try:
            target[parts[-1]] = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse override value '{raw}'", field=key) from exc
    return result


def _line_map(text: str) -> dict[str, int]:
    """Dotted key path -> 1-based line of the key in a YAML (or JSON) document."""
    lines: dict[str, int] = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return lines

    def walk(node, prefix: str):
        if isinstance(node, yaml.MappingNode):
            for key_node, value_node in node.value:
                path = f"{prefix}.{key_node.value}" if prefix else str(key_node.value)
                lines[path] = key_node.start_mark.line + 1
                walk(value_node, path)

    if root is not None:
        walk(root, "")
    return lines


def _load_text(text: str, suffix: str) -> dict:
    if suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(exc.msg, line=exc.lineno) from exc
    else:
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            line = mark.line + 1 if mark is not None else None
            raise ConfigError(str(getattr(exc, "problem", None) or exc), line=line) from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping of sections")
    return data


class _Reader:
    """Typed access to the merged document with field-addressed errors."""

    def __init__(self, data: dict, lines: dict[str, int]):
        self.data = data
        self.lines = lines

    def error(self, path: str, message: str) -> ConfigError:
        line = self.lines.get(path)
        if line is None:
            line = self.lines.get(path.rsplit(".", 1)[0])
        return ConfigError(message, field=path, line=line)

    def section(self, name: str) -> dict:
        value = self.data.get(name, {})
        if value is None:
            return {}
        if not isinstance(value, dict):
            raise self.error(name, "must be a mapping")
        return value

    def get(self, path: str, default: Any = None) -> Any:
        node: Any = self.data
        for part in path.split("."):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return default if node is None else node

    def number(
        self,
        path: str,
        default: float | None = None,
        positive: bool = False,
        nonnegative: bool = False,
        allow_inf: bool = False,
    ) -> float:
        raw = self.get(path, default)
        if raw is None:
            raise self.error(path, "is required")
        if isinstance(raw, bool):
            raise self.error(path, f"must be a number, got {raw!r}")
        try:
            value = float(raw)
        except (TypeError, ValueError):
            raise self.error(path, f"must be a number, got {raw!r}") from None
        if math.isnan(value) or (math.isinf(value) and not allow_inf):
            raise self.error(path, f"must be finite, got {raw!r}")
        if positive and not value > 0:
            raise self.error(path, f"must be > 0, got {raw!r}")
        if nonnegative and not value >= 0:
            raise self.error(path, f"must be >= 0, got {raw!r}")
        return value

    def integer(self, path: str, default: int, minimum: int = 1) -> int:
        raw = self.get(path, default)
        if isinstance(raw, bool) or not isinstance(raw, (int, float)) or int(raw) != raw:
            raise self.error(path, f"must be an integer, got {raw!r}")
        if raw < minimum:
            raise self.error(path, f"must be >= {minimum}, got {raw!r}")
        return int(raw)

    def choice(self, path: str, options: tuple[str, ...], default: str | None = None) -> str:
        raw = self.get(path, default)
        if raw is None:
            raise self.error(path, f"is required; choose one of {list(options)}")
        if raw not in options:
            raise self.error(path, f"must be one of {list(options)}, got {raw!r}")
        return raw


def _cross_section(r: _Reader) -> CrossSection:
    shape = r.choice("geometry.shape", SHAPES)
    boundary = r.choice("geometry.boundary", BOUNDARIES, "dirichlet")
    if shape == "disk":
        if boundary != "dirichlet":
            raise r.error("geometry.boundary", "disks support the dirichlet boundary only")
        return CrossSection.disk(r.number("geometry.R", positive=True))
    lengths = r.get("geometry.lengths")
    if not isinstance(lengths, list) or not lengths:
        raise r.error("geometry.lengths", "must be a non-empty list of side lengths")
    values = [r.number(f"geometry.lengths.{k}", v, positive=True) for k, v in enumerate(lengths)]
    return CrossSection.rectangle(*values, boundary=boundary)


def _field_state(r: _Reader) -> FieldState:
    kind = r.choice("field.state", STATE_KINDS, "vacuum")
    if kind == "vacuum":
        if r.get("field.beta") is not None and math.isfinite(r.number("field.beta", allow_inf=True)):
            raise r.error("field.beta", "a vacuum state has no finite beta")
        return FieldState.vacuum()
    beta = r.number("field.beta", positive=True, allow_inf=True)
    return FieldState.thermal(beta)


def _smearing(r: _Reader, cs: CrossSection, length: float) -> Smearing:
    kind = r.choice("detector.smearing", ("gaussian", "pointlike"), "gaussian")
    z0 = r.number("detector.position.z0", length / 2)
    if not 0 < z0 < length:
        raise r.error("detector.position.z0", f"must lie inside (0, L={length}), got {z0}")
    if cs.shape == "disk":
        r0 = r.number("detector.position.r0", 0.0, nonnegative=True)
        phi0 = r.number("detector.position.phi0", 0.0)
        if r0 >= cs.radius:
            raise r.error("detector.position.r0", f"must be < R={cs.radius}, got {r0}")
        if kind == "pointlike":
            return Smearing.pointlike((r0 * math.cos(phi0), r0 * math.sin(phi0)), z0)
        sigma = r.number("detector.sigma", positive=True)
        if r0 + 4 * sigma >= cs.radius:
            raise r.error("detector.sigma", f"r0 + 4 sigma must stay below R={cs.radius}")
        return Smearing.gaussian_polar(sigma, r0, phi0, z0)

    raw = r.get("detector.position.y0", list(cs.centre))
    if not isinstance(raw, list) or len(raw) != cs.dimension:
        raise r.error("detector.position.y0", f"must list {cs.dimension} coordinates")
    y0 = tuple(r.number(f"detector.position.y0.{k}", v) for k, v in enumerate(raw))
    if not cs.contains(y0):
        raise r.error("detector.position.y0", f"{list(y0)} lies outside the cross-section")
    if kind == "pointlike":
        return Smearing.pointlike(y0, z0)
    return Smearing.gaussian(r.number("detector.sigma", positive=True), y0, z0)


def _detector(r: _Reader, cs: CrossSection, length: float) -> DetectorModel:
    gap = r.number("detector.gap", positive=True)
    switching = Switching(
        r.choice("detector.switching", SWITCHING_KINDS, "gaussian"),
        r.number("detector.T", positive=True),
    )
    return DetectorModel(
        gap=gap,
        smearing=_smearing(r, cs, length),
        switching=switching,
        coupling=r.number("detector.coupling", 1.0),
        initial_state=r.choice("detector.initial_state", INITIAL_STATES, "ground"),
    )


def _thread_cap() -> int | None:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return None
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


@dataclass(frozen=True)
class ScenarioConfig:
    """A parsed scenario file: the computation inputs plus the document they came from."""

    name: str
    length_unit: str
    scenario: Scenario
    controls: ModeSumControls
    ordering: str
    document: dict = field(repr=False, compare=False)
    source: str | None = None

    @property
    def threads(self) -> int:
        return self.controls.threads

    @property
    def config_hash(self) -> str:
        """sha256 of the canonical JSON of the merged document."""
        canonical = json.dumps(self.document, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(
        cls,
        data: dict,
        lines: dict[str, int] | None = None,
        source: str | None = None,
    ) -> ScenarioConfig:
        """Validate a document (after preset expansion) into a scenario.

        Raises:
            ConfigError: Naming the first offending field.
        """
        if not isinstance(data, dict):
            raise ConfigError("top level must be a mapping of sections")
        preset = data.get("preset")
        if preset is not None:
            if preset not in PRESETS:
                raise ConfigError(
                    f"unknown preset {preset!r}; choose one of {sorted(PRESETS)}",
                    field="preset",
                    line=(lines or {}).get("preset"),
                )
            data = merge(PRESETS[preset], {k: v for k, v in data.items() if k != "preset"})
        unknown = sorted(set(data) - set(SECTIONS) - {"name", "preset"})
        if unknown:
            raise ConfigError(
                f"unknown section {unknown[0]!r}", field=unknown[0], line=(lines or {}).get(unknown[0])
            )

        r = _Reader(data, lines or {})
        for name in SECTIONS:
            r.section(name)
        length_unit = r.get("units.length_unit")
        if not isinstance(length_unit, str) or not length_unit.strip():
            raise r.error("units.length_unit", "is required (e.g. 'sigma' or 'R')")
        units = Units(
            hbar=r.number("units.hbar", 1.0, positive=True),
            c=r.number("units.c", 1.0, positive=True),
        )

        cs = _cross_section(r)
        length = r.number("geometry.L", positive=True)
        cavity = CavityField(
            cross_section=cs,
            axial_length=length,
            field_mass=r.number("field.mass", 0.0, nonnegative=True),
            units=units,
        )
        quadrature = QuadratureSpec(
            relative_tolerance=r.number("numerics.relative_tolerance", 1e-10, positive=True),
            absolute_tolerance=r.number("numerics.absolute_tolerance", 1e-13, positive=True),
            max_subdivisions=r.integer("numerics.max_subdivisions", 200),
        )
        scenario = Scenario(
            cavity=cavity,
            detector=_detector(r, cs, length),
            state=_field_state(r),
            quadrature=quadrature,
        )

        threads = r.integer("numerics.threads", 1)
        cap = _thread_cap()
        if cap is not None:
            threads = min(threads, cap)
        controls = ModeSumControls(
            n_max=r.integer("numerics.n_max", 1_000_000),
            tail_tolerance=r.number("numerics.tail_tolerance", 1e-8, positive=True),
            max_subfields=r.integer("numerics.max_subfields", 5000),
            threads=threads,
        )
        return cls(
            name=str(data.get("name") or (Path(source).stem if source else "scenario")),
            length_unit=length_unit.strip(),
            scenario=scenario,
            controls=controls,
            ordering=r.choice("numerics.ordering", ORDERINGS, "ascending_mass"),
            document=data,
            source=source,
        )

    @classmethod
    def from_text(cls, text: str, suffix: str = ".yaml", source: str | None = None) -> ScenarioConfig:
        data = _load_text(text, suffix)
        return cls.from_dict(data, _line_map(text), source)

    @classmethod
    def load(cls, path: str | Path, overrides: dict | None = None) -> ScenarioConfig:
        """Read a scenario file; ``.json`` is parsed as JSON, anything else as YAML.

        Raises:
            ConfigError: If the file is missing, malformed or invalid.
        """
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
        data = _load_text(text, path.suffix.lower())
        if overrides:
            data = merge(data, overrides)
        logger.debug(f"Loaded scenario file {path}")
        return cls.from_dict(data, _line_map(text), str(path))

    @classmethod
    def preset(cls, name: str, overrides: dict | None = None) -> ScenarioConfig:
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose one of {sorted(PRESETS)}", field="preset")
        return cls.from_dict(merge(PRESETS[name], overrides or {}))

    def with_threads(self, threads: int | None) -> ScenarioConfig:
        """Cap parallelism at ``threads`` (None keeps the file's value)."""
        if threads is None:
            return self
        if threads < 1:
            raise ConfigError(f"threads must be >= 1, got {threads}", field="numerics.threads")
        cap = _thread_cap()
        if cap is not None:
            threads = min(threads, cap)
        return replace(self, controls=replace(self.controls, threads=threads))


def default_output_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, "cavity-subfields-out"))


def read_document(path: str | Path) -> dict:
    """Raw mapping from a scenario file, without validation."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    return _load_text(text, path.suffix.lower())
