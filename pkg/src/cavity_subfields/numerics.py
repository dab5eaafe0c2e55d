"""Special functions and quadrature primitives shared by every other module."""

from __future__ import annotations

import logging
import math
import threading
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, special

logger = logging.getLogger("cavity-subfields")


class QuadratureError(RuntimeError):
    """An adaptive integral did not reach its tolerance.

    The best estimate and its error bound are kept so callers can decide
    whether the partial answer is still usable.
    """

    def __init__(self, message: str, estimate: float, error_bound: float):
        super().__init__(f"{message} (estimate={estimate!r}, error_bound={error_bound!r})")
        self.estimate = estimate
        self.error_bound = error_bound


class BesselOverflowError(OverflowError):
    """Unscaled modified Bessel value does not fit in a double."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances for adaptive quadrature."""

    relative_tolerance: float = 1e-10
    absolute_tolerance: float = 1e-13
    max_subdivisions: int = 200

    def __post_init__(self):
        if not self.relative_tolerance > 0:
            raise ValueError(f"relative_tolerance must be > 0, got {self.relative_tolerance}")
        if not self.absolute_tolerance > 0:
            raise ValueError(f"absolute_tolerance must be > 0, got {self.absolute_tolerance}")
        if self.max_subdivisions < 1:
            raise ValueError(f"max_subdivisions must be >= 1, got {self.max_subdivisions}")

    def accepts(self, value: float, error: float) -> bool:
        """Whether an error estimate meets this spec for the given value."""
        return abs(error) <= max(self.absolute_tolerance, self.relative_tolerance * abs(value))


DEFAULT_QUADRATURE = QuadratureSpec()

# Smallest relative tolerance brentq accepts
BRENT_RTOL = 4 * np.finfo(float).eps


def _check_nonnegative(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError(f"Bessel argument must be >= 0, got {x!r}")
    return arr


def _scalar_or_array(value: np.ndarray):
    return float(value) if np.ndim(value) == 0 else value


def bessel_j(m: int, x):
    """Bessel function of the first kind J_m(x) for x >= 0.

    Accepts scalars or numpy arrays; scalars come back as ``float``.
    """
    if m < 0:
        raise ValueError(f"order must be >= 0, got {m}")
    return _scalar_or_array(special.jv(m, _check_nonnegative(x)))


def bessel_i(m: int, x):
    """Modified Bessel function of the first kind I_m(x) for x >= 0.

    Raises:
        BesselOverflowError: If the value exceeds the double range. Use
            ``bessel_i_scaled`` for large arguments.
    """
    if m < 0:
        raise ValueError(f"order must be >= 0, got {m}")
    arr = _check_nonnegative(x)
    value = special.iv(m, arr)
    if np.any(np.isinf(value)):
        raise BesselOverflowError(f"I_{m}(x) overflows for max x={float(np.max(arr))!r}")
    return _scalar_or_array(value)


def bessel_i_scaled(m: int, x):
    """Exponentially scaled modified Bessel function e^{-x} I_m(x)."""
    if m < 0:
        raise ValueError(f"order must be >= 0, got {m}")
    return _scalar_or_array(special.ive(m, _check_nonnegative(x)))


def mcmahon_estimate(m: int, index: int) -> float:
    """Large-zero asymptotic estimate of the index-th positive zero of J_m."""
    beta = (index + m / 2 - 0.25) * math.pi
    mu = 4.0 * m * m
    return beta - (mu - 1) / (8 * beta) - 4 * (mu - 1) * (7 * mu - 31) / (3 * (8 * beta) ** 3)


class BesselZeroTable:
    """Cache of Bessel zeros x_{m,l}, keyed by (order, index).

    Reads are lock-free; insertion of a new order row is serialized.
    """

    def __init__(self):
        self.entries: dict[int, tuple[float, ...]] = {}
        self._lock = threading.Lock()

    def get(self, m: int, index: int) -> float:
        row = self.entries.get(m)
        if row is None or len(row) < index:
            row = self._extend(m, index)
        return row[index - 1]

    def _extend(self, m: int, index: int) -> tuple[float, ...]:
        with self._lock:
            row = self.entries.get(m, ())
            if len(row) >= index:
                return row
            count = max(index, 2 * len(row), 16)
            zeros = tuple(_polish_zero(m, float(x)) for x in special.jn_zeros(m, count))
            self.entries[m] = zeros
            logger.debug(f"Cached {count} zeros of J_{m}")
            return zeros

    def __len__(self) -> int:
        return sum(len(row) for row in self.entries.values())


def _polish_zero(m: int, guess: float) -> float:
    """Refine a zero of J_m with a bracketed Brent search around the guess."""
    width = 1e-6 * max(1.0, guess)
    lo, hi = guess - width, guess + width
    f_lo, f_hi = special.jv(m, lo), special.jv(m, hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0 or f_lo * f_hi > 0:
        return guess
    return optimize.brentq(lambda x: special.jv(m, x), lo, hi, xtol=1e-15, rtol=BRENT_RTOL)


_ZERO_TABLE = BesselZeroTable()


def bessel_zero(m: int, index: int) -> float:
    """The index-th positive zero x_{m,index} of J_m (index starts at 1)."""
    if m < 0:
        raise ValueError(f"order must be >= 0, got {m}")
    if index < 1:
        raise ValueError(f"zero index must be >= 1, got {index}")
    return _ZERO_TABLE.get(m, index)


def zero_table() -> BesselZeroTable:
    """The process-wide zero cache."""
    return _ZERO_TABLE


def integrate_1d(
    f: Callable[[float], float],
    a: float,
    b: float,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """Adaptive Gauss-Kronrod integral of f over [a, b].

    An infinite upper limit is mapped onto [0, 1) with x = a + t/(1 - t),
    dx = dt/(1 - t)^2, which suits the Gaussian-damped integrands used here.

    Raises:
        QuadratureError: If the tolerance is not met within
            ``spec.max_subdivisions`` intervals.
    """
    if math.isinf(a) or math.isnan(a) or math.isnan(b):
        raise ValueError(f"lower limit must be finite, got a={a!r}, b={b!r}")
    if a > b:
        raise ValueError(f"integration limits must satisfy a <= b, got a={a}, b={b}")
    if a == b:
        return 0.0

    if math.isinf(b):

        def integrand(t: float) -> float:
            if t >= 1.0:
                return 0.0
            x = a + t / (1.0 - t)
            value = f(x)
            return 0.0 if value == 0.0 else value / (1.0 - t) ** 2

        lo, hi = 0.0, 1.0
    else:
        integrand, lo, hi = f, a, b

    result = integrate.quad(
        integrand,
        lo,
        hi,
        epsabs=spec.absolute_tolerance,
        epsrel=spec.relative_tolerance,
        limit=spec.max_subdivisions,
        full_output=1,
    )
    value, error = float(result[0]), float(result[1])
    if len(result) > 3 and not spec.accepts(value, error):
        raise QuadratureError(f"quad did not converge on [{a}, {b}]: {result[3]}", value, error)
    return value


@lru_cache(maxsize=32)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1]."""
    return np.polynomial.legendre.leggauss(n)


def integrate_box(
    f: Callable[..., np.ndarray],
    bounds: Sequence[tuple[float, float]],
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    start_order: int = 32,
    max_order: int = 512,
) -> float:
    """Tensor Gauss-Legendre integral of a vectorized f over a box.

    ``f`` receives one array per axis (broadcast grids) and returns values of
    the same shape. The order doubles until two successive rules agree.

    Raises:
        QuadratureError: If successive rules still disagree at ``max_order``.
    """
    previous = None
    order = start_order
    while True:
        axes, weights = [], []
        for lo, hi in bounds:
            x, w = gauss_legendre(order)
            half = 0.5 * (hi - lo)
            axes.append(lo + half * (x + 1.0))
            weights.append(half * w)
        grids = np.meshgrid(*axes, indexing="ij")
        w_grid = weights[0]
        for w in weights[1:]:
            w_grid = np.multiply.outer(w_grid, w)
        value = float(np.sum(np.asarray(f(*grids)) * w_grid))
        if previous is not None and spec.accepts(value, value - previous):
            return value
        if order >= max_order:
            raise QuadratureError(
                f"tensor rule not converged at order {order}",
                value,
                math.inf if previous is None else abs(value - previous),
            )
        previous = value
        order *= 2


def tree_sum(values: Sequence[float]) -> float:
    """Pairwise sum whose association order depends only on len(values)."""
    items = [float(v) for v in values]
    if not items:
        return 0.0
    while len(items) > 1:
        paired = [items[i] + items[i + 1] for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            paired.append(items[-1])
        items = paired
    return items[0]


def sin_pi(x):
    """sin(pi x), exactly zero at integers and exactly +-1 at half-integers."""
    arr = np.asarray(x, dtype=float)
    r = np.mod(arr, 2.0)
    value = np.sin(np.pi * r)
    value = np.where((r == 0.0) | (r == 1.0), 0.0, value)
    value = np.where(r == 0.5, 1.0, value)
    value = np.where(r == 1.5, -1.0, value)
    return _scalar_or_array(value)


def cos_pi(x):
    """cos(pi x) with the exact zeros of ``sin_pi``."""
    return sin_pi(np.asarray(x, dtype=float) + 0.5)
