"""Leading-order transition probabilities as mode sums over subfields.

Every probability is reported divided by g^2 / hbar^2. Terms are accumulated as
natural logarithms so that long interaction times, whose contributions lie far
below the double range, still give meaningful ratios.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterator
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from joblib import Parallel, delayed
from scipy.special import logsumexp

from cavity_subfields.detector import (
    DetectorModel,
    angular_weight,
    log_axial_overlap,
    log_switching_factor,
    transverse_overlap_offaxis,
    transverse_overlap_onaxis,
)
from cavity_subfields.geometry import (
    CrossSection,
    TransverseMode,
    disk_eigenpair,
    enumerate_spectrum,
    weyl_estimate,
)
from cavity_subfields.numerics import DEFAULT_QUADRATURE, QuadratureSpec, bessel_j, bessel_zero
from cavity_subfields.subfields import CavityField, TruncationSet, effective_mass, project_smearing

logger = logging.getLogger("cavity-subfields")

STATE_KINDS = ("vacuum", "thermal")
# Terms inspected by the longitudinal tail criterion
TAIL_WINDOW = 50
# Axial Gaussian factor below which longitudinal modes are negligible
AXIAL_FLOOR_LOG = math.log(1e-12)
# Resonance margin in units of 1/T beyond 2 Omega before tails are trusted
RESONANCE_WIDTHS = 8.0


class ConvergenceError(RuntimeError):
    """A mode sum stopped at its cutoffs before reaching the tail tolerance."""

    def __init__(self, message: str, result: TransitionResult):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class FieldState:
    """Vacuum or thermal field state; beta is in units where hbar c beta is a length."""

    kind: str = "vacuum"
    beta: float = math.inf

    def __post_init__(self):
        if self.kind not in STATE_KINDS:
            raise ValueError(f"state kind must be one of {STATE_KINDS}, got '{self.kind}'")
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if self.kind == "vacuum" and math.isfinite(self.beta):
            raise ValueError("vacuum state has beta = inf")

    @classmethod
    def vacuum(cls) -> FieldState:
        return cls()

    @classmethod
    def thermal(cls, beta: float) -> FieldState:
        return cls(kind="thermal", beta=float(beta))

    @property
    def is_vacuum(self) -> bool:
        return not math.isfinite(self.beta)

    def log_occupations(self, hbar: float, omega: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(log(nbar + 1), log nbar) of the Bose-Einstein occupation."""
        if self.is_vacuum:
            return np.zeros_like(omega), np.full_like(omega, -np.inf)
        if np.any(omega <= 0):
            raise ValueError("thermal occupation needs omega > 0")
        x = self.beta * hbar * omega
        log_stimulated = -np.log1p(-np.exp(-x))
        return log_stimulated, log_stimulated - x


@dataclass(frozen=True)
class ModeSumControls:
    """Cutoffs for the double sum over subfields and longitudinal modes."""

    n_max: int = 1_000_000
    subfield_set: TruncationSet | None = None
    tail_tolerance: float = 1e-8
    max_subfields: int = 5000
    threads: int = 1
    block_size: int = 2048

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")
        if not self.tail_tolerance > 0:
            raise ValueError(f"tail_tolerance must be > 0, got {self.tail_tolerance}")
        if self.max_subfields < 1:
            raise ValueError(f"max_subfields must be >= 1, got {self.max_subfields}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")


@dataclass(frozen=True)
class Scenario:
    """Cavity field, detector and field state with the quadrature tolerances."""

    cavity: CavityField
    detector: DetectorModel
    state: FieldState = field(default_factory=FieldState)
    quadrature: QuadratureSpec = DEFAULT_QUADRATURE


@dataclass(frozen=True)
class SubfieldContribution:
    """One subfield's share of P_+ and P_-, stored as logarithms."""

    index: int
    label: str
    mass: float
    log_plus: float
    log_minus: float
    n_terms: int
    converged: bool
    tail_estimate: float

    @property
    def plus(self) -> float:
        return math.exp(self.log_plus)

    @property
    def minus(self) -> float:
        return math.exp(self.log_minus)

    def log_value(self, sign: int) -> float:
        return self.log_plus if sign > 0 else self.log_minus


@dataclass(frozen=True)
class TransitionResult:
    """P_+ and P_- (per g^2/hbar^2) with their per-subfield breakdown.

    ``per_subfield`` preserves summation order (ascending effective mass).
    ``tail_estimate`` is the largest neglected share relative to the total.
    """

    p_plus: float
    p_minus: float
    log_p_plus: float
    log_p_minus: float
    per_subfield: dict[int, SubfieldContribution]
    converged: bool
    tail_estimate: float

    @classmethod
    def from_contributions(
        cls,
        contributions: list[SubfieldContribution],
        converged: bool,
        tail_estimate: float,
    ) -> TransitionResult:
        log_plus = _ordered_logsumexp([c.log_plus for c in contributions])
        log_minus = _ordered_logsumexp([c.log_minus for c in contributions])
        return cls(
            p_plus=math.exp(log_plus),
            p_minus=math.exp(log_minus),
            log_p_plus=log_plus,
            log_p_minus=log_minus,
            per_subfield={c.index: c for c in contributions},
            converged=converged,
            tail_estimate=tail_estimate,
        )

    def probability(self, sign: int) -> float:
        return self.p_plus if sign > 0 else self.p_minus

    def log_probability(self, sign: int) -> float:
        return self.log_p_plus if sign > 0 else self.log_p_minus

    def log_contributions(self, sign: int) -> np.ndarray:
        return np.array([c.log_value(sign) for c in self.per_subfield.values()])

    def restricted(self, indices) -> TransitionResult:
        """The same sums over a subset of subfields."""
        kept = [c for j, c in self.per_subfield.items() if j in indices]
        return TransitionResult.from_contributions(kept, self.converged, self.tail_estimate)


def _ordered_logsumexp(values) -> float:
    if len(values) == 0:
        return -math.inf
    with np.errstate(divide="ignore"):
        return float(logsumexp(np.asarray(values, dtype=float)))


@dataclass(frozen=True)
class _Channel:
    """A coupled subfield: log |F_jn|^2 as a function of the longitudinal index n."""

    index: int
    label: str
    mass: float
    log_coefficients: Callable[[np.ndarray], np.ndarray]
    axial_decay: float


def _log_state_terms(scenario: Scenario, sign: int, omega: np.ndarray) -> np.ndarray:
    """log of (nbar+1) S(+-Omega + omega) + nbar S(-+Omega + omega)."""
    detector = scenario.detector
    emission = log_switching_factor(detector.switching, sign * detector.gap + omega)
    if scenario.state.is_vacuum:
        return emission
    log_stimulated, log_nbar = scenario.state.log_occupations(scenario.cavity.units.hbar, omega)
    absorption = log_switching_factor(detector.switching, -sign * detector.gap + omega)
    return np.logaddexp(log_stimulated + emission, log_nbar + absorption)


def _log_terms(scenario: Scenario, channel: _Channel, n: np.ndarray) -> tuple[np.ndarray, ...]:
    cavity = scenario.cavity
    omega = cavity.frequency(channel.mass, n)
    with np.errstate(divide="ignore"):
        base = channel.log_coefficients(n) + np.log(cavity.units.c / (2 * omega))
    return omega, base + _log_state_terms(scenario, 1, omega), base + _log_state_terms(scenario, -1, omega)


def _resonance_cleared(scenario: Scenario, omega: float) -> bool:
    detector = scenario.detector
    return omega >= 2 * detector.gap + RESONANCE_WIDTHS / detector.switching.T


def _tail_small(log_tail: float, log_total: float, tolerance: float) -> bool:
    if log_tail == -math.inf:
        return True
    return log_tail - log_total < math.log(tolerance)


def _channel_sum(scenario: Scenario, channel: _Channel, controls: ModeSumControls) -> SubfieldContribution:
    """Sum one subfield over n = 1, 2, ... in growing blocks until the tail is negligible."""
    totals = [-math.inf, -math.inf]
    recent = [np.empty(0), np.empty(0)]
    start, block = 1, controls.block_size
    converged = False
    while True:
        stop = min(start + block - 1, controls.n_max)
        n = np.arange(start, stop + 1, dtype=float)
        omega, log_plus, log_minus = _log_terms(scenario, channel, n)
        tails = []
        for k, terms in enumerate((log_plus, log_minus)):
            totals[k] = float(np.logaddexp(totals[k], _ordered_logsumexp(terms)))
            recent[k] = np.concatenate([recent[k], terms])[-TAIL_WINDOW:]
            tails.append(_ordered_logsumexp(recent[k]))

        cleared = _resonance_cleared(scenario, float(omega[-1]))
        axial_done = channel.axial_decay > 0 and -channel.axial_decay * stop**2 < AXIAL_FLOOR_LOG
        tails_done = all(
            _tail_small(t, total, controls.tail_tolerance) for t, total in zip(tails, totals, strict=True)
        )
        if cleared and (axial_done or tails_done):
            converged = True
            break
        if stop >= controls.n_max:
            break
        start, block = stop + 1, min(2 * block, 65536)

    relative_tail = max(
        (math.exp(t - total) if total > -math.inf else 0.0) for t, total in zip(tails, totals, strict=True)
    )
    if not converged:
        logger.debug(f"Subfield {channel.label} not converged at n={stop} (tail {relative_tail:.2e})")
    return SubfieldContribution(
        index=channel.index,
        label=channel.label,
        mass=channel.mass,
        log_plus=totals[0],
        log_minus=totals[1],
        n_terms=stop,
        converged=converged,
        tail_estimate=0.0 if converged else relative_tail,
    )


def _stream_modes(cs: CrossSection) -> Iterator[TransverseMode]:
    """All transverse modes in ascending order, enumerated in growing windows."""
    cutoff = weyl_estimate(cs, 64)
    previous = -math.inf
    while True:
        for mode in enumerate_spectrum(cs, cutoff):
            if mode.eigenvalue > previous:
                yield mode
        previous, cutoff = cutoff, 2 * cutoff


def _selected_modes(cs: CrossSection, truncation: TruncationSet) -> Iterator[TransverseMode]:
    wanted = set(truncation.indices)
    for mode in _stream_modes(cs):
        if mode.sorted_index in wanted:
            wanted.discard(mode.sorted_index)
            yield mode
        if not wanted:
            return


def _profile_channel(scenario: Scenario, mode: TransverseMode) -> _Channel | None:
    profile = project_smearing(scenario.detector.smearing, mode, spec=scenario.quadrature)
    if profile.is_zero:
        return None
    length = scenario.cavity.axial_length
    return _Channel(
        index=mode.sorted_index,
        label=mode.label,
        mass=effective_mass(scenario.cavity, mode.eigenvalue),
        log_coefficients=partial(profile.log_coefficients_squared, length=length),
        axial_decay=profile.axial_decay(length),
    )


def _log_cylinder_axial(z0: float, length: float, sigma: float, log_weight: float, n: np.ndarray):
    return log_weight + math.log(2 / length) + log_axial_overlap(z0, length, sigma, n)


def _cylinder_channel(scenario: Scenario, mode: TransverseMode) -> _Channel | None:
    """Coupling of a disk mode from the closed-form transverse and axial overlaps."""
    smearing = scenario.detector.smearing
    m, index, parity = mode.multi_index
    radius = mode.cross_section.radius
    r0, sigma = smearing.r0, smearing.sigma
    angular = angular_weight(m, parity, smearing.phi0)
    if angular == 0.0 or (r0 == 0.0 and m != 0):
        return None
    if smearing.kind == "pointlike":
        overlap = bessel_j(m, bessel_zero(m, index) * r0 / radius) ** 2
    elif r0 == 0.0:
        overlap = transverse_overlap_onaxis(sigma, radius, index)
    else:
        overlap = transverse_overlap_offaxis(sigma, radius, r0, m, index, scenario.quadrature)
    if overlap <= 0.0:
        return None
    normalization = math.pi * radius**2 * bessel_j(m + 1, bessel_zero(m, index)) ** 2
    log_weight = math.log(overlap) + math.log(angular) - math.log(normalization)
    length = scenario.cavity.axial_length
    return _Channel(
        index=mode.sorted_index,
        label=mode.label,
        mass=effective_mass(scenario.cavity, mode.eigenvalue),
        log_coefficients=partial(_log_cylinder_axial, smearing.z0, length, sigma, log_weight),
        axial_decay=(math.pi * sigma / length) ** 2,
    )


def _mode_sum(
    scenario: Scenario,
    controls: ModeSumControls,
    make_channel: Callable[[Scenario, TransverseMode], _Channel | None],
) -> TransitionResult:
    cs = scenario.cavity.cross_section
    parallel = Parallel(n_jobs=controls.threads, prefer="threads")
    run = partial(_channel_sum, scenario, controls=controls)

    if controls.subfield_set is not None:
        channels = [
            ch for ch in (make_channel(scenario, m) for m in _selected_modes(cs, controls.subfield_set))
            if ch is not None
        ]
        contributions = parallel(delayed(run)(ch) for ch in channels)
        converged = all(c.converged for c in contributions)
        tail = max((c.tail_estimate for c in contributions), default=0.0)
        return TransitionResult.from_contributions(contributions, converged, tail)

    contributions: list[SubfieldContribution] = []
    totals = [-math.inf, -math.inf]
    batch_size = max(8, 2 * controls.threads)
    modes = _stream_modes(cs)
    converged = False
    last_share = 1.0
    while not converged and len(contributions) < controls.max_subfields:
        batch: list[_Channel] = []
        while len(batch) < batch_size:
            ch = make_channel(scenario, next(modes))
            if ch is not None:
                batch.append(ch)
        for contribution in parallel(delayed(run)(ch) for ch in batch):
            contributions.append(contribution)
            shares = [contribution.log_plus, contribution.log_minus]
            totals = [float(np.logaddexp(t, s)) for t, s in zip(totals, shares, strict=True)]
            last_share = max(
                (math.exp(s - t) if t > -math.inf else 0.0) for s, t in zip(shares, totals, strict=True)
            )
            energy = contribution.mass * scenario.cavity.units.c**2 / scenario.cavity.units.hbar
            if _resonance_cleared(scenario, energy) and last_share < controls.tail_tolerance:
                converged = True
                break
            if len(contributions) >= controls.max_subfields:
                break

    n_tail = max((c.tail_estimate for c in contributions), default=0.0)
    converged = converged and all(c.converged for c in contributions)
    tail = max(n_tail, 0.0 if converged else last_share)
    if not converged:
        logger.warning(
            f"Mode sum not converged after {len(contributions)} subfields (tail {tail:.2e})"
        )
    else:
        logger.debug(f"Mode sum converged with {len(contributions)} subfields")
    return TransitionResult.from_contributions(contributions, converged, tail)


def _require_localized(scenario: Scenario) -> None:
    smearing = scenario.detector.smearing
    if smearing.is_localized and not 0 < smearing.z0 < scenario.cavity.axial_length:
        raise ValueError(f"detector z0={smearing.z0} lies outside (0, L)")


def excitation_number(
    scenario: Scenario,
    index: int,
    n: int,
    sign: int,
    m: int = 0,
    parity: str = "cos",
) -> float:
    """N_{ln}: excitations of longitudinal mode n of the (m, l) disk subfield.

    (g^2 c / hbar^2 L omega) * axial overlap * transverse overlap / (pi R^2 J_{m+1}^2)
    * switching factor, reported per g^2/hbar^2.
    """
    cs = scenario.cavity.cross_section
    if cs.shape != "disk":
        raise ValueError("excitation_number needs a disk cross-section")
    _require_localized(scenario)
    mode = disk_eigenpair(cs.radius, m, index, parity)
    channel = _cylinder_channel(scenario, mode)
    if channel is None:
        return 0.0
    _, log_plus, log_minus = _log_terms(scenario, channel, np.array([float(n)]))
    return float(np.exp(log_plus[0] if sign > 0 else log_minus[0]))


def transition_probability_cylinder(
    scenario: Scenario,
    controls: ModeSumControls | None = None,
) -> TransitionResult:
    """P_+ and P_- for a detector in a cylindrical cavity.

    Localized smearings use the closed-form overlaps (quadrature off-axis);
    custom smearings are projected numerically.
    """
    controls = controls or ModeSumControls()
    cs = scenario.cavity.cross_section
    if cs.shape != "disk":
        raise ValueError("transition_probability_cylinder needs a disk cross-section")
    _require_localized(scenario)
    make = _cylinder_channel if scenario.detector.smearing.is_localized else _profile_channel
    return _mode_sum(scenario, controls, make)


def transition_probability_thermal_box(
    scenario: Scenario,
    controls: ModeSumControls | None = None,
) -> TransitionResult:
    """P_+ and P_- in a rectangular Dirichlet cavity for a vacuum or thermal field.

    P_+- = sum_k (c / 2 omega_k) |F_k|^2 [(nbar_k + 1) S(+-Omega, omega_k)
    + nbar_k S(-+Omega, omega_k)] with nbar_k = 1 / (exp(beta hbar omega_k) - 1).
    """
    controls = controls or ModeSumControls()
    cs = scenario.cavity.cross_section
    if cs.shape != "rectangle" or cs.boundary != "dirichlet":
        raise ValueError("transition_probability_thermal_box needs a Dirichlet rectangle")
    _require_localized(scenario)
    return _mode_sum(scenario, controls, _profile_channel)


def transition_probability(
    scenario: Scenario,
    controls: ModeSumControls | None = None,
) -> TransitionResult:
    """Dispatch on the cross-section: disks, Dirichlet boxes, or any other rectangle."""
    cs = scenario.cavity.cross_section
    if cs.shape == "disk":
        return transition_probability_cylinder(scenario, controls)
    if cs.boundary == "dirichlet":
        return transition_probability_thermal_box(scenario, controls)
    _require_localized(scenario)
    return _mode_sum(scenario, controls or ModeSumControls(), _profile_channel)


def kernel_norm(
    scenario: Scenario,
    sign: int,
    controls: ModeSumControls | None = None,
    truncation: TruncationSet | None = None,
    complement: bool = False,
    result: TransitionResult | None = None,
) -> float:
    """||F||_+-^2 = P_+-/g^2, the diagonal form of the kernel in the mode basis.

    With ``truncation`` the norm is taken of F_tr (or of Delta F = F - F_tr
    when ``complement`` is set).
    """
    return math.exp(
        log_kernel_norm(scenario, sign, controls, truncation, complement, result)
    )


def log_kernel_norm(
    scenario: Scenario,
    sign: int,
    controls: ModeSumControls | None = None,
    truncation: TruncationSet | None = None,
    complement: bool = False,
    result: TransitionResult | None = None,
) -> float:
    """Natural log of ``kernel_norm``."""
    if result is None:
        result = transition_probability(scenario, controls)
    logs = [
        c.log_value(sign)
        for j, c in result.per_subfield.items()
        if truncation is None or ((j in truncation) != complement)
    ]
    return _ordered_logsumexp(logs) - 2 * math.log(scenario.cavity.units.hbar)


def kernel_relative_error(
    scenario: Scenario,
    truncation: TruncationSet,
    sign: int,
    controls: ModeSumControls | None = None,
    result: TransitionResult | None = None,
) -> float:
    """||F - F_tr||_+-^2 / ||F||_+-^2."""
    if result is None:
        result = transition_probability(scenario, controls)
    residual = log_kernel_norm(scenario, sign, truncation=truncation, complement=True, result=result)
    full = log_kernel_norm(scenario, sign, result=result)
    if full == -math.inf:
        raise ValueError("kernel norm of F vanishes")
    return math.exp(residual - full)
