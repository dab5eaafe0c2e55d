"""Convergence diagnostics: relative errors of truncated subfield sums and parameter sweeps."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from joblib import Parallel, delayed

from cavity_subfields.detector import Smearing, Switching
from cavity_subfields.response import (
    ConvergenceError,
    FieldState,
    ModeSumControls,
    Scenario,
    TransitionResult,
    transition_probability,
)
from cavity_subfields.subfields import (
    SubfieldDecomposition,
    TruncationSet,
    decompose,
    l2_relative_error,
    parseval_norm_squared,
)

logger = logging.getLogger("cavity-subfields")

ORDERINGS = ("ascending_mass", "resonant_first")
SWEEP_VARIABLES = ("omega_T", "n_sub", "beta", "sigma_over_R")
SWEEP_OUTPUTS = ("delta_p_plus", "delta_p_minus", "delta_l2")

# delta below which a truncation counts as converged
CONVERGENCE_THRESHOLD = 1e-2
# Relative tail the reference sum must reach before it is trusted
REFERENCE_TAIL = 1e-4
REFERENCE_RETRIES = 3


class ZeroReferenceError(ValueError):
    """The reference probability vanishes, so relative errors are undefined."""


@dataclass(frozen=True)
class ConvergenceCurve:
    """delta(N_sub) for N_sub = 1, 2, ... coupled subfields in a given order."""

    ordering: str
    points: tuple[tuple[int, float], ...]
    log_deltas: tuple[float, ...] = ()
    indices: tuple[int, ...] = ()

    def __post_init__(self):
        if self.ordering not in ORDERINGS:
            raise ValueError(f"ordering must be one of {ORDERINGS}, got '{self.ordering}'")
        counts = [n for n, _ in self.points]
        if any(b <= a for a, b in zip(counts, counts[1:])):
            raise ValueError("N_sub must be strictly increasing")

    @property
    def n_sub(self) -> list[int]:
        return [n for n, _ in self.points]

    @property
    def deltas(self) -> list[float]:
        return [d for _, d in self.points]

    def delta_at(self, n_sub: int) -> float:
        for n, delta in self.points:
            if n == n_sub:
                return delta
        raise KeyError(f"N_sub={n_sub} not on the curve")

    def needed_subfields(self, threshold: float = CONVERGENCE_THRESHOLD) -> int | None:
        """Smallest N_sub with delta below the threshold."""
        for n, delta in self.points:
            if delta < threshold:
                return n
        return None


@dataclass(frozen=True)
class SweepSpec:
    variable: str
    grid: tuple[float, ...]
    fixed: Scenario

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ValueError(f"variable must be one of {SWEEP_VARIABLES}, got '{self.variable}'")
        if not self.grid:
            raise ValueError("sweep grid must not be empty")
        steps = np.diff(np.asarray(self.grid, dtype=float))
        if len(steps) and not (np.all(steps > 0) or np.all(steps < 0)):
            raise ValueError("sweep grid must be strictly monotone")
        object.__setattr__(self, "grid", tuple(float(v) for v in self.grid))


def _check_reference(reference: TransitionResult, sign: int) -> float:
    if not reference.converged:
        raise ConvergenceError("reference probability is not converged", reference)
    log_total = reference.log_probability(sign)
    if log_total == -math.inf:
        raise ZeroReferenceError(f"reference P_{'+' if sign > 0 else '-'} is zero")
    return log_total


def delta_p(reference: TransitionResult, truncated: TransitionResult, sign: int) -> float:
    """|P - P_tr| / P for the excitation (+1) or emission (-1) probability."""
    log_total = _check_reference(reference, sign)
    return abs(math.expm1(truncated.log_probability(sign) - log_total))


def log_truncation_delta(reference: TransitionResult, truncation: TruncationSet, sign: int) -> float:
    """log of the share of P carried by subfields outside J; exact for tiny deltas."""
    log_total = _check_reference(reference, sign)
    logs = [c.log_value(sign) for j, c in reference.per_subfield.items() if j not in truncation]
    if not logs:
        return -math.inf
    with np.errstate(divide="ignore"):
        return float(np.logaddexp.reduce(np.asarray(logs))) - log_total


def log_delta_p(reference: TransitionResult, truncated: TransitionResult, sign: int) -> float:
    """log delta_P, taken from the reference breakdown when the truncation is a subset."""
    if set(truncated.per_subfield) <= set(reference.per_subfield):
        return log_truncation_delta(reference, TruncationSet.of(truncated.per_subfield), sign)
    return math.log(delta_p(reference, truncated, sign))


def reference_probability(
    scenario: Scenario,
    controls: ModeSumControls | None = None,
    tolerance: float = REFERENCE_TAIL,
) -> TransitionResult:
    """Full mode sum with cutoffs tightened until its own tail is below ``tolerance``.

    Raises:
        ConvergenceError: If the tail is still too large after the retries.
    """
    controls = controls or ModeSumControls()
    for attempt in range(REFERENCE_RETRIES + 1):
        result = transition_probability(scenario, replace(controls, subfield_set=None))
        if result.converged and result.tail_estimate < tolerance:
            return result
        logger.info(f"Reference not converged (attempt {attempt + 1}); tightening cutoffs")
        controls = replace(
            controls,
            n_max=controls.n_max * 4,
            max_subfields=controls.max_subfields * 2,
            tail_tolerance=controls.tail_tolerance / 10,
        )
    raise ConvergenceError(
        f"reference tail {result.tail_estimate:.2e} exceeds {tolerance:.0e}", result
    )


def order_subfields(
    reference: TransitionResult,
    scenario: Scenario,
    ordering: str = "ascending_mass",
    resonant_count: int = 1,
) -> list[int]:
    """Indices of the coupled subfields in the requested summation order.

    ``resonant_first`` puts the ``resonant_count`` subfields whose rest energy
    M c^2/hbar lies closest to Omega first (with any subfield degenerate with
    them), then the rest by ascending mass.
    """
    if ordering not in ORDERINGS:
        raise ValueError(f"ordering must be one of {ORDERINGS}, got '{ordering}'")
    by_mass = sorted(reference.per_subfield.values(), key=lambda c: (c.mass, c.index))
    if ordering == "ascending_mass":
        return [c.index for c in by_mass]

    units = scenario.cavity.units
    gap = scenario.detector.gap

    def detuning(c):
        return abs(gap - c.mass * units.c**2 / units.hbar)

    by_detuning = sorted(by_mass, key=lambda c: (detuning(c), c.mass, c.index))
    resonant = by_detuning[:resonant_count]
    masses = {c.mass for c in resonant}
    resonant += [c for c in by_mass if c.mass in masses and c not in resonant]
    first = [c.index for c in sorted(resonant, key=lambda c: (detuning(c), c.index))]
    return first + [c.index for c in by_mass if c.index not in first]


def _curve_from_logs(ordering: str, indices: list[int], logs: list[float], log_total: float):
    # delta(N) is the share of the terms after position N
    tails = np.full(len(logs) + 1, -np.inf)
    for k in range(len(logs) - 1, -1, -1):
        tails[k] = np.logaddexp(tails[k + 1], logs[k])
    log_deltas = [float(tails[n] - log_total) for n in range(1, len(logs) + 1)]
    points = tuple((n, min(1.0, math.exp(ld))) for n, ld in enumerate(log_deltas, start=1))
    return ConvergenceCurve(
        ordering=ordering, points=points, log_deltas=tuple(log_deltas), indices=tuple(indices)
    )


def convergence_scan(
    scenario: Scenario,
    max_subfields: int,
    ordering: str = "ascending_mass",
    sign: int = -1,
    controls: ModeSumControls | None = None,
    reference: TransitionResult | None = None,
) -> ConvergenceCurve:
    """delta_P(N_sub) for N_sub = 1..max_subfields coupled subfields.

    Uncoupled subfields (F_j = 0) are skipped when counting N_sub.

    Raises:
        ConvergenceError: If the reference sum cannot be converged.
    """
    if max_subfields < 1:
        raise ValueError(f"max_subfields must be >= 1, got {max_subfields}")
    if reference is None:
        reference = reference_probability(scenario, controls)
    log_total = _check_reference(reference, sign)
    indices = order_subfields(reference, scenario, ordering)
    logs = [reference.per_subfield[j].log_value(sign) for j in indices]
    curve = _curve_from_logs(ordering, indices, logs, log_total)
    count = min(max_subfields, len(curve.points))
    return ConvergenceCurve(
        ordering=ordering,
        points=curve.points[:count],
        log_deltas=curve.log_deltas[:count],
        indices=tuple(indices[:count]),
    )


def l2_convergence_curve(decomposition: SubfieldDecomposition, max_subfields: int) -> ConvergenceCurve:
    """delta_L2(N_sub) over the first N_sub coupled subfields in ascending mass."""
    total = parseval_norm_squared(decomposition)
    coupled = sorted(decomposition.coupled(), key=lambda s: (s.effective_mass, s.index))
    points, log_deltas, kept = [], [], []
    for n, subfield in enumerate(coupled[:max_subfields], start=1):
        kept.append(subfield.index)
        delta = l2_relative_error(decomposition, TruncationSet.of(kept), total)
        points.append((n, delta))
        log_deltas.append(math.log(delta) if delta > 0 else -math.inf)
    return ConvergenceCurve(
        ordering="ascending_mass",
        points=tuple(points),
        log_deltas=tuple(log_deltas),
        indices=tuple(kept),
    )


def _with_value(scenario: Scenario, variable: str, value: float) -> Scenario:
    detector = scenario.detector
    if variable == "omega_T":
        switching = Switching(detector.switching.kind, value / detector.gap)
        return replace(scenario, detector=replace(detector, switching=switching))
    if variable == "beta":
        state = FieldState.vacuum() if math.isinf(value) else FieldState.thermal(value)
        return replace(scenario, state=state)
    if variable == "sigma_over_R":
        cs = scenario.cavity.cross_section
        scale = cs.radius if cs.shape == "disk" else min(cs.lengths) / 2
        smearing = detector.smearing
        if smearing.kind != "gaussian":
            raise ValueError("sigma_over_R sweeps need a gaussian smearing")
        smearing = Smearing.gaussian(value * scale, smearing.transverse, smearing.z0)
        return replace(scenario, detector=replace(detector, smearing=smearing))
    return scenario


def _sweep_point(
    spec: SweepSpec,
    value: float,
    outputs: tuple[str, ...],
    n_subs: tuple[int, ...],
    ordering: str,
    controls: ModeSumControls,
) -> list[dict]:
    scenario = _with_value(spec.fixed, spec.variable, value)
    counts = (int(value),) if spec.variable == "n_sub" else n_subs
    rows = []
    reference = None
    if any(o.startswith("delta_p") for o in outputs):
        reference = reference_probability(scenario, controls)
    for output in outputs:
        if output == "delta_l2":
            curve = l2_convergence_curve(
                decompose(scenario.cavity, scenario.detector.smearing, spec=scenario.quadrature),
                max(counts),
            )
        else:
            sign = 1 if output == "delta_p_plus" else -1
            curve = convergence_scan(scenario, max(counts), ordering, sign, controls, reference)
        for n in counts:
            if n > len(curve.points):
                logger.debug(
                    f"{output} at {spec.variable}={value}: N_sub={n} exceeds the "
                    f"{len(curve.points)} coupled subfields; reporting delta = 0"
                )
                delta, log_delta = 0.0, -math.inf
            else:
                delta, log_delta = curve.points[n - 1][1], curve.log_deltas[n - 1]
            rows.append(
                {
                    "variable": spec.variable,
                    "value": value,
                    "n_sub": n,
                    "output": output,
                    "delta": delta,
                    "log10_delta": log_delta / math.log(10) if log_delta > -math.inf else -math.inf,
                }
            )
    return rows


def sweep(
    spec: SweepSpec,
    outputs=("delta_p_minus",),
    n_subs=(1,),
    ordering: str = "ascending_mass",
    controls: ModeSumControls | None = None,
    threads: int = 1,
) -> list[dict]:
    """Long-format table with one row per grid point, N_sub and output.

    An N_sub larger than the number of coupled subfields in the reference
    keeps all of them, so its row reports delta = 0 and log10_delta = -inf.

    Grid points are evaluated in parallel and merged in grid order, so the
    table does not depend on ``threads``.
    """
    outputs = tuple(outputs)
    unknown = [o for o in outputs if o not in SWEEP_OUTPUTS]
    if unknown:
        raise ValueError(f"unknown sweep outputs {unknown}; choose from {SWEEP_OUTPUTS}")
    controls = controls or ModeSumControls()
    n_subs = tuple(sorted(int(n) for n in n_subs))
    if not n_subs or n_subs[0] < 1:
        raise ValueError("n_subs must contain positive integers")
    per_point = Parallel(n_jobs=threads, prefer="threads")(
        delayed(_sweep_point)(spec, value, outputs, n_subs, ordering, controls) for value in spec.grid
    )
    rows = [row for point in per_point for row in point]
    logger.info(f"Sweep over {spec.variable}: {len(spec.grid)} points, {len(rows)} rows")
    return rows
