"""Detector models: spatial smearings, switching functions and their overlap factors."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from cavity_subfields.numerics import (
    DEFAULT_QUADRATURE,
    QuadratureSpec,
    bessel_i_scaled,
    bessel_j,
    bessel_zero,
    integrate_1d,
    sin_pi,
)

logger = logging.getLogger("cavity-subfields")

SMEARING_KINDS = ("gaussian", "pointlike", "custom")
SWITCHING_KINDS = ("gaussian", "sudden")
INITIAL_STATES = ("ground", "excited")

# Below this |T nu| the sudden factor uses its Taylor series
SUDDEN_SERIES_THRESHOLD = 1e-4


@dataclass(frozen=True)
class Smearing:
    """Spatial profile F(y, z) of the detector.

    ``transverse`` holds the transverse centre y0 in cross-section
    coordinates (disk coordinates are Cartesian about the axis). A ``custom``
    smearing wraps a vectorized callable F(y, z) sampled on ``z_grid``.
    """

    kind: str
    transverse: tuple[float, ...] = ()
    z0: float = 0.0
    sigma: float = 0.0
    function: Callable | None = field(default=None, compare=False, repr=False)
    z_grid: tuple[float, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in SMEARING_KINDS:
            raise ValueError(f"smearing kind must be one of {SMEARING_KINDS}, got '{self.kind}'")
        if self.kind == "gaussian" and not self.sigma > 0:
            raise ValueError(f"gaussian smearing needs sigma > 0, got {self.sigma}")
        if self.kind == "custom" and (self.function is None or len(self.z_grid) < 3):
            raise ValueError("custom smearing needs a function and a z_grid of >= 3 points")
        object.__setattr__(self, "transverse", tuple(float(v) for v in self.transverse))

    @classmethod
    def gaussian(cls, sigma: float, transverse: tuple[float, ...], z0: float) -> Smearing:
        return cls(kind="gaussian", sigma=float(sigma), transverse=transverse, z0=float(z0))

    @classmethod
    def gaussian_polar(cls, sigma: float, r0: float, phi0: float, z0: float) -> Smearing:
        return cls.gaussian(sigma, (r0 * math.cos(phi0), r0 * math.sin(phi0)), z0)

    @classmethod
    def pointlike(cls, transverse: tuple[float, ...], z0: float) -> Smearing:
        return cls(kind="pointlike", transverse=transverse, z0=float(z0))

    @classmethod
    def custom(cls, function: Callable, z_grid) -> Smearing:
        return cls(kind="custom", function=function, z_grid=tuple(float(z) for z in z_grid))

    @property
    def r0(self) -> float:
        return math.hypot(*self.transverse[:2]) if len(self.transverse) >= 2 else 0.0

    @property
    def phi0(self) -> float:
        return math.atan2(self.transverse[1], self.transverse[0]) if len(self.transverse) >= 2 else 0.0

    @property
    def is_localized(self) -> bool:
        return self.kind in ("gaussian", "pointlike")

    def __call__(self, y, z) -> np.ndarray:
        """F(y, z) for points y with shape (..., d) at axial positions z.

        Gaussians are L1-normalized in all D dimensions.
        """
        if self.kind == "custom":
            return np.asarray(self.function(y, z), dtype=float)
        if self.kind == "pointlike":
            raise ValueError("a pointlike smearing has no pointwise values")
        points = np.asarray(y, dtype=float)
        centre = np.asarray(self.transverse)
        d = points.shape[-1]
        r2 = np.sum((points - centre) ** 2, axis=-1) + (np.asarray(z) - self.z0) ** 2
        return np.exp(-r2 / (2 * self.sigma**2)) / (2 * math.pi * self.sigma**2) ** ((d + 1) / 2)


@dataclass(frozen=True)
class Switching:
    """Temporal profile chi(t): gaussian exp(-t^2/(2T^2)) or a sudden box on [0, T]."""

    kind: str
    T: float

    def __post_init__(self):
        if self.kind not in SWITCHING_KINDS:
            raise ValueError(f"switching kind must be one of {SWITCHING_KINDS}, got '{self.kind}'")
        if not self.T > 0:
            raise ValueError(f"switching time T must be > 0, got {self.T}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "gaussian":
            return np.exp(-(t**2) / (2 * self.T**2))
        return np.where((t >= 0) & (t <= self.T), 1.0, 0.0)


@dataclass(frozen=True)
class DetectorModel:
    """Two-level probe with gap Omega coupled through a smearing and switching."""

    gap: float
    smearing: Smearing
    switching: Switching
    coupling: float = 1.0
    initial_state: str = "ground"

    def __post_init__(self):
        if not self.gap > 0:
            raise ValueError(f"gap must be > 0, got {self.gap}")
        if not math.isfinite(self.coupling):
            raise ValueError(f"coupling must be a real number, got {self.coupling}")
        if self.initial_state not in INITIAL_STATES:
            raise ValueError(
                f"initial_state must be one of {INITIAL_STATES}, got '{self.initial_state}'"
            )

    @property
    def sign(self) -> int:
        """+1 for excitation from the ground state, -1 for emission."""
        return 1 if self.initial_state == "ground" else -1


def log_switching_factor(switching: Switching, nu) -> np.ndarray:
    """log |int chi(t) e^{i nu t} dt|^2, vectorized over nu; -inf at exact zeros."""
    nu = np.asarray(nu, dtype=float)
    T = switching.T
    if switching.kind == "gaussian":
        return np.log(2 * math.pi * T**2) - (T * nu) ** 2
    x = T * nu
    small = np.abs(x) < SUDDEN_SERIES_THRESHOLD
    safe = np.where(small, 1.0, nu)
    with np.errstate(divide="ignore"):
        result = np.log(4 * np.sin(x / 2) ** 2) - 2 * np.log(np.abs(safe))
    result = np.asarray(result, dtype=float)
    result[small] = np.log(T**2) + np.log1p(-(x[small] ** 2) / 12)
    return result


def switching_factor(switching: Switching, gap: float, omega, sign: int = 1):
    """|int chi(t) e^{i(+-Omega + omega)t} dt|^2.

    Gaussian: 2 pi T^2 exp(-T^2 (+-Omega + omega)^2).
    Sudden: 2 (1 - cos(T(Omega +- omega))) / (Omega +- omega)^2, continued to T^2
    at the singular point.
    """
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign}")
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise ValueError("mode frequency must be > 0")
    value = np.exp(log_switching_factor(switching, sign * gap + omega))
    return float(value) if np.ndim(value) == 0 else value


def transverse_overlap_onaxis(sigma: float, radius: float, index: int) -> float:
    """Squared transverse factor exp(-sigma^2 x_{0l}^2 / R^2) of an on-axis Gaussian."""
    if not 0 <= sigma < radius:
        raise ValueError(f"need 0 <= sigma < R, got sigma={sigma}, R={radius}")
    return math.exp(-((sigma * bessel_zero(0, index) / radius) ** 2))


def transverse_overlap_offaxis(
    sigma: float,
    radius: float,
    r0: float,
    m: int,
    index: int,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """Squared transverse factor of a Gaussian centred at distance r0 from the axis.

    Evaluates e^{-r0^2/sigma^2} |int_0^inf r e^{-r^2/2sigma^2} I_m(r0 r/sigma^2)
    J_m(x_{ml} r/R) dr / sigma^2|^2 with the scaled I_m, folding the prefactor
    into e^{-(r - r0)^2 / 2sigma^2} so nothing overflows.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if r0 < 0:
        raise ValueError(f"r0 must be >= 0, got {r0}")
    if r0 + 4 * sigma >= radius:
        raise ValueError(f"detector not localized inside the cavity: r0 + 4 sigma >= R={radius}")
    if r0 == 0.0:
        return transverse_overlap_onaxis(sigma, radius, index) if m == 0 else 0.0

    k = bessel_zero(m, index) / radius
    b = r0 / sigma**2

    def integrand(r: float) -> float:
        return (
            r
            * math.exp(-((r - r0) ** 2) / (2 * sigma**2))
            * bessel_i_scaled(m, b * r)
            * bessel_j(m, k * r)
            / sigma**2
        )

    lo, hi = max(0.0, r0 - 12 * sigma), r0 + 12 * sigma
    value = integrate_1d(integrand, lo, hi, spec)
    return value * value


def transverse_overlap_weber(sigma: float, radius: float, r0: float, m: int, index: int) -> float:
    """Closed form e^{-sigma^2 k^2} J_m(k r0)^2 of the off-axis overlap, k = x_{ml}/R."""
    k = bessel_zero(m, index) / radius
    return math.exp(-((sigma * k) ** 2)) * bessel_j(m, k * r0) ** 2


def angular_weight(m: int, parity: str, phi0: float) -> float:
    """Angular factor of a real disk mode at azimuth phi0.

    m = 0 has weight 1; m >= 1 splits as 2 cos^2(m phi0) and 2 sin^2(m phi0).
    """
    if m == 0:
        return 1.0
    if phi0 == 0.0:
        return 2.0 if parity == "cos" else 0.0
    trig = math.cos if parity == "cos" else math.sin
    return 2.0 * trig(m * phi0) ** 2


def axial_overlap(z0: float, length: float, sigma: float, n):
    """Axial factor exp(-(n pi sigma / L)^2) sin^2(n pi z0 / L); sigma = 0 is pointlike."""
    if not 0 < z0 < length:
        raise ValueError(f"need 0 < z0 < L, got z0={z0}, L={length}")
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    n = np.asarray(n, dtype=float)
    value = np.exp(-((n * math.pi * sigma / length) ** 2)) * sin_pi(n * z0 / length) ** 2
    return float(value) if np.ndim(value) == 0 else value


def log_axial_overlap(z0: float, length: float, sigma: float, n) -> np.ndarray:
    """Natural log of ``axial_overlap``; -inf at nodes."""
    n = np.asarray(n, dtype=float)
    with np.errstate(divide="ignore"):
        return -((n * math.pi * sigma / length) ** 2) + 2 * np.log(
            np.abs(sin_pi(n * z0 / length))
        )
