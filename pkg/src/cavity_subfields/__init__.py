"""Cavity Subfields - exact subfield decomposition of cavity fields and detector truncation errors."""

from importlib.metadata import version

try:
    __version__ = version("cavity-subfields")
except Exception:
    __version__ = "0.1.0"  # Fallback for development

# Re-export public API
from cavity_subfields.analysis import (
    ConvergenceCurve,
    SweepSpec,
    ZeroReferenceError,
    convergence_scan,
    delta_p,
    l2_convergence_curve,
    log_delta_p,
    order_subfields,
    reference_probability,
    sweep,
)
from cavity_subfields.config import PRESETS, ConfigError, ScenarioConfig
from cavity_subfields.detector import (
    DetectorModel,
    Smearing,
    Switching,
    axial_overlap,
    switching_factor,
    transverse_overlap_offaxis,
    transverse_overlap_onaxis,
)
from cavity_subfields.geometry import (
    CrossSection,
    SpectrumEnumeration,
    SpectrumTooLargeError,
    TransverseMode,
    disk_eigenpair,
    enumerate_spectrum,
    rectangle_eigenpair,
    weyl_estimate,
)
from cavity_subfields.numerics import (
    BesselOverflowError,
    QuadratureError,
    QuadratureSpec,
    bessel_i,
    bessel_j,
    bessel_zero,
    integrate_1d,
)
from cavity_subfields.response import (
    ConvergenceError,
    FieldState,
    ModeSumControls,
    Scenario,
    TransitionResult,
    excitation_number,
    kernel_norm,
    transition_probability,
    transition_probability_cylinder,
    transition_probability_thermal_box,
)
from cavity_subfields.subfields import (
    CavityField,
    Subfield,
    TruncationSet,
    Units,
    decompose,
    effective_mass,
    l2_relative_error,
    project_smearing,
    truncate_smearing,
)

__all__ = [
    # Version
    "__version__",
    # Numerics
    "QuadratureSpec",
    "QuadratureError",
    "BesselOverflowError",
    "bessel_j",
    "bessel_i",
    "bessel_zero",
    "integrate_1d",
    # Geometry
    "CrossSection",
    "TransverseMode",
    "SpectrumEnumeration",
    "SpectrumTooLargeError",
    "rectangle_eigenpair",
    "disk_eigenpair",
    "enumerate_spectrum",
    "weyl_estimate",
    # Subfields
    "Units",
    "CavityField",
    "Subfield",
    "TruncationSet",
    "effective_mass",
    "project_smearing",
    "decompose",
    "truncate_smearing",
    "l2_relative_error",
    # Detector
    "Smearing",
    "Switching",
    "DetectorModel",
    "switching_factor",
    "transverse_overlap_onaxis",
    "transverse_overlap_offaxis",
    "axial_overlap",
    # Response
    "FieldState",
    "ModeSumControls",
    "Scenario",
    "TransitionResult",
    "ConvergenceError",
    "excitation_number",
    "transition_probability_cylinder",
    "transition_probability_thermal_box",
    "transition_probability",
    "kernel_norm",
    # Analysis
    "ConvergenceCurve",
    "SweepSpec",
    "ZeroReferenceError",
    "delta_p",
    "log_delta_p",
    "reference_probability",
    "order_subfields",
    "convergence_scan",
    "l2_convergence_curve",
    "sweep",
    # Configuration
    "ScenarioConfig",
    "ConfigError",
    "PRESETS",
]
