"""Transverse cross-sections and their Laplacian eigenpairs."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from cavity_subfields.numerics import (
    DEFAULT_QUADRATURE,
    QuadratureSpec,
    bessel_j,
    bessel_zero,
    cos_pi,
    integrate_box,
    sin_pi,
)

logger = logging.getLogger("cavity-subfields")

SHAPES = ("rectangle", "disk")
BOUNDARIES = ("dirichlet", "neumann")
PARITIES = ("cos", "sin")

# Upper bound on the number of modes a single enumeration may return
DEFAULT_MAX_MODES = 2_000_000


class SpectrumTooLargeError(ValueError):
    """An enumeration cutoff would produce more modes than allowed."""


@dataclass(frozen=True)
class CrossSection:
    """A bounded transverse domain Gamma with a boundary condition.

    Rectangles span [0, L_1] x ... x [0, L_d]. Disks are centred on the
    cavity axis and use Cartesian coordinates (y_1, y_2) about it.
    """

    shape: str
    lengths: tuple[float, ...] = ()
    radius: float | None = None
    boundary: str = "dirichlet"

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"shape must be one of {SHAPES}, got '{self.shape}'")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}, got '{self.boundary}'")
        if self.shape == "rectangle":
            if not self.lengths:
                raise ValueError("rectangle needs at least one side length")
            if any(not (length > 0) for length in self.lengths):
                raise ValueError(f"rectangle lengths must be > 0, got {self.lengths}")
            object.__setattr__(self, "lengths", tuple(float(x) for x in self.lengths))
        else:
            if self.radius is None or not (self.radius > 0):
                raise ValueError(f"disk radius must be > 0, got {self.radius}")
            if self.boundary != "dirichlet":
                raise ValueError("neumann boundary is only supported for rectangles")

    @classmethod
    def rectangle(cls, *lengths: float, boundary: str = "dirichlet") -> CrossSection:
        return cls(shape="rectangle", lengths=tuple(lengths), boundary=boundary)

    @classmethod
    def disk(cls, radius: float) -> CrossSection:
        return cls(shape="disk", radius=float(radius))

    @property
    def dimension(self) -> int:
        return len(self.lengths) if self.shape == "rectangle" else 2

    @property
    def volume(self) -> float:
        """d-volume |Gamma|."""
        if self.shape == "rectangle":
            return math.prod(self.lengths)
        return math.pi * self.radius**2

    @property
    def centre(self) -> tuple[float, ...]:
        if self.shape == "rectangle":
            return tuple(length / 2 for length in self.lengths)
        return (0.0, 0.0)

    def contains(self, y) -> bool:
        point = np.asarray(y, dtype=float)
        if point.shape != (self.dimension,):
            return False
        if self.shape == "rectangle":
            return bool(np.all(point >= 0) and np.all(point <= np.asarray(self.lengths)))
        return bool(np.hypot(point[0], point[1]) <= self.radius)

    def integrate(
        self,
        f: Callable[[np.ndarray], np.ndarray],
        spec: QuadratureSpec = DEFAULT_QUADRATURE,
    ) -> float:
        """Integral of a vectorized f(y) over Gamma.

        ``f`` receives an array of points with shape (..., d).
        """
        if self.shape == "rectangle":
            bounds = [(0.0, length) for length in self.lengths]
            return integrate_box(lambda *axes: f(np.stack(axes, axis=-1)), bounds, spec)

        def polar(r, phi):
            points = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)
            return f(points) * r

        return integrate_box(polar, [(0.0, self.radius), (0.0, 2 * math.pi)], spec)


@dataclass(frozen=True)
class TransverseMode:
    """One eigenpair (lambda_j, psi_j) of the transverse Laplacian."""

    sorted_index: int
    multi_index: tuple
    eigenvalue: float
    norm_constant: float
    cross_section: CrossSection = field(repr=False, compare=False)

    def __post_init__(self):
        if self.sorted_index < 1:
            raise ValueError(f"sorted_index must be >= 1, got {self.sorted_index}")
        if self.eigenvalue < 0:
            raise ValueError(f"eigenvalue must be >= 0, got {self.eigenvalue}")

    @property
    def wavenumber(self) -> float:
        return math.sqrt(self.eigenvalue)

    @property
    def label(self) -> str:
        return "(" + ", ".join(str(i) for i in self.multi_index) + ")"

    def __call__(self, y) -> np.ndarray | float:
        """Evaluate psi_j at points y with shape (..., d)."""
        points = np.asarray(y, dtype=float)
        cs = self.cross_section
        if cs.shape == "rectangle":
            trig = sin_pi if cs.boundary == "dirichlet" else cos_pi
            value = np.full(points.shape[:-1], self.norm_constant)
            for k, (n, length) in enumerate(zip(self.multi_index, cs.lengths, strict=True)):
                value = value * trig(n * points[..., k] / length)
        else:
            value = self.value_polar(np.hypot(points[..., 0], points[..., 1]),
                                     np.arctan2(points[..., 1], points[..., 0]))
        return float(value) if np.ndim(value) == 0 else value

    def value_polar(self, r, phi) -> np.ndarray | float:
        """Evaluate a disk mode at polar coordinates (r, phi)."""
        m, index, parity = self.multi_index
        x = bessel_zero(m, index)
        radial = bessel_j(m, np.asarray(r, dtype=float) * x / self.cross_section.radius)
        if m == 0:
            angular = 1.0
        elif parity == "cos":
            angular = np.cos(m * np.asarray(phi))
        else:
            angular = np.sin(m * np.asarray(phi))
        return self.norm_constant * radial * angular


@dataclass(frozen=True)
class SpectrumEnumeration:
    """All eigenpairs with eigenvalue <= cutoff, sorted and multiplicity-complete."""

    modes: tuple[TransverseMode, ...]
    cutoff_eigenvalue: float

    def __len__(self) -> int:
        return len(self.modes)

    def __iter__(self):
        return iter(self.modes)

    def __getitem__(self, j: int) -> TransverseMode:
        """Mode with sorted index j (1-based)."""
        if not 1 <= j <= len(self.modes):
            raise IndexError(f"sorted index {j} outside 1..{len(self.modes)}")
        return self.modes[j - 1]

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([mode.eigenvalue for mode in self.modes])


def rectangle_eigenpair(
    lengths: tuple[float, ...],
    indices: tuple[int, ...],
    boundary: str = "dirichlet",
    sorted_index: int = 1,
) -> TransverseMode:
    """Eigenpair of a rectangle with sine (Dirichlet) or cosine (Neumann) modes.

    Raises:
        ValueError: If an index violates the boundary condition (n >= 1 for
            Dirichlet, n >= 0 for Neumann) or the dimensions do not match.
    """
    cs = CrossSection.rectangle(*lengths, boundary=boundary)
    if len(indices) != cs.dimension:
        raise ValueError(f"expected {cs.dimension} indices, got {len(indices)}")
    lowest = 1 if boundary == "dirichlet" else 0
    if any(n < lowest for n in indices):
        raise ValueError(f"{boundary} rectangle indices must be >= {lowest}, got {indices}")

    eigenvalue = sum((n * math.pi / length) ** 2 for n, length in zip(indices, cs.lengths, strict=True))
    norm = 1.0
    for n, length in zip(indices, cs.lengths, strict=True):
        norm *= math.sqrt((1.0 if n == 0 else 2.0) / length)
    return TransverseMode(
        sorted_index=sorted_index,
        multi_index=tuple(int(n) for n in indices),
        eigenvalue=eigenvalue,
        norm_constant=norm,
        cross_section=cs,
    )


def disk_eigenpair(
    radius: float,
    m: int,
    index: int,
    parity: str = "cos",
    sorted_index: int = 1,
) -> TransverseMode:
    """Dirichlet eigenpair of a disk in real form.

    m >= 1 modes carry a sqrt(2) cos(m phi) or sqrt(2) sin(m phi) factor so that
    each real mode is L2-normalized on its own.

    Raises:
        ValueError: For index < 1, m < 0, an unknown parity, or parity 'sin'
            with m = 0.
    """
    if m < 0:
        raise ValueError(f"angular order m must be >= 0, got {m}")
    if index < 1:
        raise ValueError(f"radial index must be >= 1, got {index}")
    if parity not in PARITIES:
        raise ValueError(f"parity must be one of {PARITIES}, got '{parity}'")
    if m == 0 and parity == "sin":
        raise ValueError("m = 0 has no sin mode")

    cs = CrossSection.disk(radius)
    x = bessel_zero(m, index)
    norm = 1.0 / (math.sqrt(math.pi) * cs.radius * bessel_j(m + 1, x))
    if m > 0:
        norm *= math.sqrt(2.0)
    return TransverseMode(
        sorted_index=sorted_index,
        multi_index=(m, index, parity),
        eigenvalue=(x / cs.radius) ** 2,
        norm_constant=norm,
        cross_section=cs,
    )


def _rectangle_spectrum(cs: CrossSection, cutoff: float, max_modes: int) -> list[TransverseMode]:
    lowest = 1 if cs.boundary == "dirichlet" else 0
    highest = [math.ceil(math.sqrt(cutoff) * length / math.pi) for length in cs.lengths]
    candidates = math.prod(top - lowest + 1 for top in highest)
    if candidates > 50 * max_modes:
        raise SpectrumTooLargeError(
            f"cutoff {cutoff} scans {candidates} candidate indices (bound {max_modes} modes)"
        )

    axes = [np.arange(lowest, top + 1) for top in highest]
    grids = np.meshgrid(*axes, indexing="ij")
    indices = np.stack([g.ravel() for g in grids], axis=-1)
    eigenvalues = np.zeros(len(indices))
    for k, length in enumerate(cs.lengths):
        eigenvalues = eigenvalues + (indices[:, k] * math.pi / length) ** 2
    keep = eigenvalues <= cutoff
    indices, eigenvalues = indices[keep], eigenvalues[keep]
    if len(indices) > max_modes:
        raise SpectrumTooLargeError(f"cutoff {cutoff} yields {len(indices)} modes (bound {max_modes})")

    # np.lexsort uses the last key as primary
    order = np.lexsort(tuple(indices[:, k] for k in reversed(range(cs.dimension))) + (eigenvalues,))
    return [
        rectangle_eigenpair(cs.lengths, tuple(int(n) for n in indices[i]), cs.boundary)
        for i in order
    ]


def _disk_spectrum(cs: CrossSection, cutoff: float, max_modes: int) -> list[TransverseMode]:
    bound = math.sqrt(cutoff) * cs.radius
    modes = []
    m = 0
    # x_{m,1} > m for m >= 1, so no order beyond the bound can contribute
    while m == 0 or m < bound:
        index = 1
        while bessel_zero(m, index) <= bound:
            modes.append(disk_eigenpair(cs.radius, m, index, "cos"))
            if m > 0:
                modes.append(disk_eigenpair(cs.radius, m, index, "sin"))
            if len(modes) > max_modes:
                raise SpectrumTooLargeError(f"cutoff {cutoff} exceeds {max_modes} disk modes")
            index += 1
        m += 1
    modes.sort(key=lambda mode: (mode.eigenvalue, mode.multi_index))
    return modes


def enumerate_spectrum(
    cs: CrossSection,
    cutoff: float,
    max_modes: int = DEFAULT_MAX_MODES,
) -> SpectrumEnumeration:
    """Every eigenpair with eigenvalue <= cutoff, counted with multiplicity.

    Modes are sorted by eigenvalue; degenerate eigenvalues are ordered by
    multi-index.

    Raises:
        ValueError: If cutoff <= 0.
        SpectrumTooLargeError: If more than ``max_modes`` modes qualify.
    """
    if not cutoff > 0:
        raise ValueError(f"cutoff must be > 0, got {cutoff}")
    if cs.shape == "rectangle":
        modes = _rectangle_spectrum(cs, cutoff, max_modes)
    else:
        modes = _disk_spectrum(cs, cutoff, max_modes)
    modes = [replace(mode, sorted_index=j) for j, mode in enumerate(modes, start=1)]
    logger.debug(f"Enumerated {len(modes)} {cs.shape} modes below {cutoff:.6g}")
    return SpectrumEnumeration(modes=tuple(modes), cutoff_eigenvalue=float(cutoff))


def enumerate_modes(cs: CrossSection, count: int) -> SpectrumEnumeration:
    """At least the first ``count`` modes, growing the cutoff from Weyl's law."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    cutoff = 1.5 * weyl_estimate(cs, count) + 1.0
    while True:
        spectrum = enumerate_spectrum(cs, cutoff)
        if len(spectrum) >= count:
            return spectrum
        cutoff *= 1.5


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / special.gamma(d / 2 + 1)


def weyl_estimate(cs: CrossSection, j: int) -> float:
    """Weyl's asymptotic eigenvalue 4 pi^2 (j / (V_d |Gamma|))^(2/d)."""
    if j < 1:
        raise ValueError(f"j must be >= 1, got {j}")
    d = cs.dimension
    return 4 * math.pi**2 * (j / (unit_ball_volume(d) * cs.volume)) ** (2 / d)


def mode_overlap(
    a: TransverseMode,
    b: TransverseMode,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """Quadrature of the inner product of two modes over their cross-section."""
    return a.cross_section.integrate(lambda y: a(y) * b(y), spec)
