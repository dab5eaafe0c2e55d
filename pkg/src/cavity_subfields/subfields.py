"""Subfield decomposition: effective masses, effective smearings and truncation."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterable, Iterator
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy import integrate

from cavity_subfields.detector import Smearing
from cavity_subfields.geometry import (
    CrossSection,
    TransverseMode,
    enumerate_spectrum,
    weyl_estimate,
)
from cavity_subfields.numerics import (
    DEFAULT_QUADRATURE,
    QuadratureSpec,
    integrate_1d,
    sin_pi,
)

logger = logging.getLogger("cavity-subfields")

# Gaussian localisation is trusted up to this sigma / (transverse half-width)
LOCALIZATION_LIMIT = 0.2
# Transverse Gaussian factor exp(-sigma^2 lambda) below which modes are dropped
TRANSVERSE_FLOOR = 1e-12
# Relative Parseval tail accepted before falling back to direct quadrature
PARSEVAL_TAIL = 1e-8


@dataclass(frozen=True)
class Units:
    hbar: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        if not (self.hbar > 0 and self.c > 0):
            raise ValueError(f"hbar and c must be > 0, got hbar={self.hbar}, c={self.c}")


@dataclass(frozen=True)
class CavityField:
    """Scalar field of mass M in Gamma x [0, L], Dirichlet at z = 0 and z = L."""

    cross_section: CrossSection
    axial_length: float
    field_mass: float = 0.0
    axial_boundary: str = "dirichlet"
    units: Units = field(default_factory=Units)

    def __post_init__(self):
        if not self.axial_length > 0:
            raise ValueError(f"axial_length must be > 0, got {self.axial_length}")
        if not self.field_mass >= 0:
            raise ValueError(f"field_mass must be >= 0, got {self.field_mass}")
        if self.axial_boundary != "dirichlet":
            raise ValueError(f"axial_boundary must be 'dirichlet', got '{self.axial_boundary}'")

    def frequency(self, mass: float, n) -> np.ndarray:
        """Subfield mode frequency c sqrt((M_j c / hbar)^2 + (n pi / L)^2)."""
        c, hbar = self.units.c, self.units.hbar
        k = np.asarray(n, dtype=float) * math.pi / self.axial_length
        return c * np.sqrt((mass * c / hbar) ** 2 + k**2)


def effective_mass(cavity: CavityField, eigenvalue: float) -> float:
    """M_j = (hbar/c) sqrt(M^2 c^2 / hbar^2 + lambda_j)."""
    if eigenvalue < 0:
        raise ValueError(f"eigenvalue must be >= 0, got {eigenvalue}")
    hbar, c = cavity.units.hbar, cavity.units.c
    return (hbar / c) * math.sqrt((cavity.field_mass * c / hbar) ** 2 + eigenvalue)


# Axial profiles F_j(z). Each knows its L2 norm and its sine coefficients
# <F_j, sqrt(2/L) sin(n pi z / L)> on [0, L].


@dataclass(frozen=True)
class GaussianProfile:
    """amplitude * exp(-(z - z0)^2 / (2 sigma^2)), integrals extended to the real line."""

    amplitude: float
    z0: float
    sigma: float

    @property
    def is_zero(self) -> bool:
        return self.amplitude == 0.0

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return self.amplitude * np.exp(-((z - self.z0) ** 2) / (2 * self.sigma**2))

    def norm_squared(self) -> float:
        return self.amplitude**2 * math.sqrt(math.pi) * self.sigma

    def log_coefficients_squared(self, n, length: float) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        if self.is_zero:
            return np.full(n.shape, -np.inf)
        with np.errstate(divide="ignore"):
            return (
                2 * math.log(abs(self.amplitude))
                + math.log(2 * math.pi * self.sigma**2)
                + math.log(2 / length)
                - (n * math.pi * self.sigma / length) ** 2
                + 2 * np.log(np.abs(sin_pi(n * self.z0 / length)))
            )

    def axial_decay(self, length: float) -> float:
        return (math.pi * self.sigma / length) ** 2


@dataclass(frozen=True)
class PointProfile:
    """weight * delta(z - z0)."""

    weight: float
    z0: float

    @property
    def is_zero(self) -> bool:
        return self.weight == 0.0

    def __call__(self, z) -> np.ndarray:
        raise ValueError("a pointlike profile has no pointwise values")

    def norm_squared(self) -> float:
        return math.inf

    def log_coefficients_squared(self, n, length: float) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        if self.is_zero:
            return np.full(n.shape, -np.inf)
        with np.errstate(divide="ignore"):
            return (
                2 * math.log(abs(self.weight))
                + math.log(2 / length)
                + 2 * np.log(np.abs(sin_pi(n * self.z0 / length)))
            )

    def axial_decay(self, length: float) -> float:
        return 0.0


@dataclass(frozen=True)
class SampledProfile:
    """F_j sampled on a z grid; zero outside it."""

    z: tuple[float, ...]
    values: tuple[float, ...]

    @property
    def is_zero(self) -> bool:
        return not any(self.values)

    def __call__(self, z) -> np.ndarray:
        return np.interp(np.asarray(z, dtype=float), self.z, self.values, left=0.0, right=0.0)

    def norm_squared(self) -> float:
        return float(integrate.simpson(np.square(self.values), x=self.z))

    def coefficients(self, n, length: float) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        z = np.asarray(self.z)
        basis = math.sqrt(2 / length) * np.sin(np.multiply.outer(n, z) * math.pi / length)
        return integrate.simpson(basis * np.asarray(self.values), x=z, axis=-1)

    def log_coefficients_squared(self, n, length: float) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(np.square(self.coefficients(n, length)))

    def axial_decay(self, length: float) -> float:
        return 0.0


AxialProfile = GaussianProfile | PointProfile | SampledProfile


@dataclass(frozen=True)
class Subfield:
    """A 1+1 dimensional subfield: transverse mode, effective mass, effective smearing."""

    mode: TransverseMode
    effective_mass: float
    effective_smearing: AxialProfile

    @property
    def index(self) -> int:
        return self.mode.sorted_index

    @property
    def is_coupled(self) -> bool:
        return not self.effective_smearing.is_zero

    def norm_squared(self) -> float:
        return self.effective_smearing.norm_squared()


@dataclass(frozen=True)
class TruncationSet:
    """The subfield indices J kept in a truncated smearing."""

    indices: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "indices", frozenset(int(j) for j in self.indices))
        if not self.indices:
            raise ValueError("truncation set must not be empty")
        if min(self.indices) < 1:
            raise ValueError(f"truncation indices must be >= 1, got {sorted(self.indices)}")

    @classmethod
    def of(cls, indices: Iterable[int]) -> TruncationSet:
        return cls(frozenset(indices))

    @classmethod
    def first(cls, count: int) -> TruncationSet:
        return cls(frozenset(range(1, count + 1)))

    def __contains__(self, j: int) -> bool:
        return j in self.indices

    def __len__(self) -> int:
        return len(self.indices)

    def sorted(self) -> list[int]:
        return sorted(self.indices)


def default_z_grid(cavity: CavityField, smearing: Smearing) -> np.ndarray:
    """Uniform grid with spacing <= sigma/8 over z0 +- 8 sigma, clipped to [0, L]."""
    lo = max(0.0, smearing.z0 - 8 * smearing.sigma)
    hi = min(cavity.axial_length, smearing.z0 + 8 * smearing.sigma)
    count = int(math.ceil((hi - lo) / (smearing.sigma / 8))) + 1
    return np.linspace(lo, hi, max(count, 3))


def check_localization(cavity: CavityField, smearing: Smearing) -> bool:
    """Warn when a Gaussian is too wide for its whole-space closed forms."""
    if smearing.kind != "gaussian":
        return True
    cs = cavity.cross_section
    half_width = cs.radius if cs.shape == "disk" else min(cs.lengths) / 2
    ok = smearing.sigma / half_width <= LOCALIZATION_LIMIT
    if not ok:
        logger.warning(
            f"sigma/half-width = {smearing.sigma / half_width:.3g} exceeds {LOCALIZATION_LIMIT}; "
            "closed-form Gaussian overlaps lose accuracy"
        )
    if not (smearing.sigma * 8 <= min(smearing.z0, cavity.axial_length - smearing.z0)):
        logger.warning("Gaussian is not localized away from the cavity ends")
        ok = False
    return ok


def project_smearing(
    smearing: Smearing | Callable,
    mode: TransverseMode,
    z_grid=None,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> AxialProfile:
    """Effective smearing F_j(z) = int_Gamma F(y, z) psi_j(y) dy.

    Gaussian and pointlike smearings use closed forms; the Gaussian result is
    exp(-sigma^2 lambda_j / 2) psi_j(y0) e^{-(z - z0)^2 / 2 sigma^2} / (sqrt(2 pi) sigma),
    which for an on-axis disk detector is exactly zero for m != 0. Any other
    vectorized F(y, z) is projected by quadrature on ``z_grid``.

    Raises:
        QuadratureError: If a transverse integral does not converge.
    """
    if isinstance(smearing, Smearing) and smearing.kind == "gaussian":
        psi0 = mode(np.asarray(smearing.transverse))
        amplitude = (
            math.exp(-(smearing.sigma**2) * mode.eigenvalue / 2)
            * psi0
            / (math.sqrt(2 * math.pi) * smearing.sigma)
        )
        return GaussianProfile(amplitude=float(amplitude), z0=smearing.z0, sigma=smearing.sigma)
    if isinstance(smearing, Smearing) and smearing.kind == "pointlike":
        return PointProfile(weight=float(mode(np.asarray(smearing.transverse))), z0=smearing.z0)

    if isinstance(smearing, Smearing):
        function, grid = smearing.function, smearing.z_grid if z_grid is None else z_grid
    else:
        function, grid = smearing, z_grid
    if grid is None:
        raise ValueError("projecting a sampled smearing needs a z grid")
    cs = mode.cross_section
    values = [cs.integrate(lambda y, z=z: np.asarray(function(y, z)) * mode(y), spec) for z in grid]
    return SampledProfile(z=tuple(float(z) for z in grid), values=tuple(values))


@dataclass(frozen=True)
class SubfieldDecomposition:
    """A smearing expanded over every transverse mode up to a cutoff."""

    cavity: CavityField
    smearing: Smearing
    subfields: tuple[Subfield, ...]
    cutoff_eigenvalue: float

    def __len__(self) -> int:
        return len(self.subfields)

    def __iter__(self) -> Iterator[Subfield]:
        return iter(self.subfields)

    def __getitem__(self, j: int) -> Subfield:
        return self.subfields[j - 1]

    def coupled(self) -> list[Subfield]:
        """Subfields the detector couples to, in ascending effective mass."""
        return [s for s in self.subfields if s.is_coupled]

    def norms_squared(self) -> np.ndarray:
        return np.array([s.norm_squared() for s in self.subfields])


def decompose(
    cavity: CavityField,
    smearing: Smearing,
    cutoff: float | None = None,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    threads: int = 1,
) -> SubfieldDecomposition:
    """Project a smearing onto every transverse mode with eigenvalue <= cutoff.

    For Gaussians the default cutoff drops modes whose transverse factor
    exp(-sigma^2 lambda) is below 1e-12.
    """
    if cutoff is None:
        if smearing.kind != "gaussian":
            raise ValueError(f"a cutoff is required for {smearing.kind} smearings")
        cutoff = -math.log(TRANSVERSE_FLOOR) / smearing.sigma**2
    check_localization(cavity, smearing)
    spectrum = enumerate_spectrum(cavity.cross_section, cutoff)
    grid = default_z_grid(cavity, smearing) if smearing.kind == "gaussian" else None

    profiles = Parallel(n_jobs=threads, prefer="threads")(
        delayed(project_smearing)(smearing, mode, grid, spec) for mode in spectrum
    )
    subfields = tuple(
        Subfield(mode=mode, effective_mass=effective_mass(cavity, mode.eigenvalue), effective_smearing=p)
        for mode, p in zip(spectrum, profiles, strict=True)
    )
    logger.info(
        f"Decomposed {smearing.kind} smearing over {len(subfields)} modes "
        f"({sum(s.is_coupled for s in subfields)} coupled)"
    )
    return SubfieldDecomposition(
        cavity=cavity, smearing=smearing, subfields=subfields, cutoff_eigenvalue=float(cutoff)
    )


def truncate_smearing(
    decomposition: SubfieldDecomposition,
    truncation: TruncationSet,
) -> tuple[Callable, Callable]:
    """F_tr(y, z) = sum_{j in J} F_j(z) psi_j(y) and the residual Delta F = F - F_tr.

    Raises:
        ValueError: If J names indices outside the decomposition.
    """
    available = len(decomposition)
    missing = [j for j in truncation.sorted() if j > available]
    if missing:
        raise ValueError(f"truncation indices {missing} exceed the {available} computed modes")
    kept = [decomposition[j] for j in truncation.sorted()]
    full = decomposition.smearing

    def truncated(y, z):
        y = np.asarray(y, dtype=float)
        total = np.zeros(np.broadcast_shapes(y.shape[:-1], np.shape(z)))
        for s in kept:
            total = total + s.effective_smearing(z) * s.mode(y)
        return total

    def residual(y, z):
        return full(y, z) - truncated(y, z)

    return truncated, residual


def smearing_norm_squared(
    cavity: CavityField,
    smearing: Smearing,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """||F||^2 over Gamma x [0, L] by direct quadrature."""
    if smearing.kind == "pointlike":
        return math.inf
    cs = cavity.cross_section
    if smearing.kind == "gaussian":
        lo = max(0.0, smearing.z0 - 8 * smearing.sigma)
        hi = min(cavity.axial_length, smearing.z0 + 8 * smearing.sigma)
        axial = integrate_1d(
            lambda z: math.exp(-((z - smearing.z0) ** 2) / smearing.sigma**2), lo, hi, spec
        )
        transverse = cs.integrate(
            lambda y: (smearing(y, smearing.z0) * (2 * math.pi * smearing.sigma**2) ** 0.5) ** 2,
            spec,
        )
        return axial * transverse / (2 * math.pi * smearing.sigma**2)
    grid = np.asarray(smearing.z_grid)
    slices = [cs.integrate(lambda y, z=z: np.asarray(smearing(y, z)) ** 2, spec) for z in grid]
    return float(integrate.simpson(slices, x=grid))


def parseval_norm_squared(
    decomposition: SubfieldDecomposition,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """sum_j ||F_j||^2, or the direct norm when the top eigenvalue shell is not negligible."""
    norms = decomposition.norms_squared()
    total = float(np.sum(norms))
    if not math.isfinite(total):
        raise ValueError("L2 norm of a pointlike smearing is infinite")
    if total <= 0:
        raise ValueError("smearing has zero L2 norm")
    eigenvalues = np.array([s.mode.eigenvalue for s in decomposition])
    shell = eigenvalues > 0.9 * decomposition.cutoff_eigenvalue
    tail = float(np.sum(norms[shell]))
    if tail <= PARSEVAL_TAIL * total:
        return total
    logger.info(f"Parseval tail {tail / total:.2e} too large; using direct quadrature of ||F||^2")
    return smearing_norm_squared(decomposition.cavity, decomposition.smearing, spec)


def l2_relative_error(
    decomposition: SubfieldDecomposition,
    truncation: TruncationSet,
    total: float | None = None,
) -> float:
    """||F - F_tr||^2 / ||F||^2 via Parseval: sum_{j not in J} ||F_j||^2 / ||F||^2.

    Depends only on the smearing, J and the geometry.

    Raises:
        ValueError: If the smearing has zero (or infinite) norm.
    """
    if total is None:
        total = parseval_norm_squared(decomposition)
    norms = decomposition.norms_squared()
    dropped = [j not in truncation for j in range(1, len(norms) + 1)]
    # modes above the cutoff count as dropped
    beyond = max(0.0, total - float(np.sum(norms)))
    rest = float(np.sum(norms[dropped])) + beyond
    return min(1.0, rest / total)


def mass_cutoff_for_count(cavity: CavityField, count: int) -> float:
    """Eigenvalue cutoff expected to hold at least ``count`` modes."""
    return 1.5 * weyl_estimate(cavity.cross_section, count) + 1.0
