"""Kernel functions and their closed-form constants.

Three kernels ship by name:

* ``gaussian``   -- standard normal density, unbounded support.
* ``onesided``   -- exponential weighting of past observations only,
                    K(u) = e^u for u <= 0 and 0 for u > 0.
* ``beta``       -- the biweight member of the symmetric beta family,
                    K(u) = (15/16)(1 - u^2)^2 on [-1, 1].

All three integrate to one, are nonnegative and bounded, which keeps the
covariance estimators positive semidefinite.  Custom kernels can be built
by instantiating :class:`KernelSpec` directly (used e.g. for flat kernels
in tests and the daily-measure identities).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidArgument

NORMALIZATION_TOL = 1e-8
_QUAD_POINTS = 400_001


@dataclass(frozen=True)
class KernelSpec:
    """A named kernel with vectorized evaluation and closed-form L2 norm.

    Parameters
    ----------
    name : str
        Identifier used in configs and reports.
    fn : callable
        Vectorized density, must vanish outside ``support``.
    support : (float, float)
        Interval outside which the kernel is exactly zero; infinite
        endpoints allowed.
    l2norm : float
        The closed-form value of the integral of K^2.
    mass_tol : float
        Tolerance for the unit-integral check at construction.  The default
        suits smooth kernels; kernels with jump discontinuities need a looser
        bound because trapezoid quadrature is only first-order at a jump.
    """

    name: str
    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    support: tuple[float, float]
    l2norm: float
    mass_tol: float = NORMALIZATION_TOL

    def __post_init__(self):
        lo, hi = self._quad_bounds()
        z = np.linspace(lo, hi, _QUAD_POINTS)
        k = self.fn(z)
        if np.any(k < 0):
            raise InvalidArgument(f"kernel '{self.name}' takes negative values")
        if not np.all(np.isfinite(k)):
            raise InvalidArgument(f"kernel '{self.name}' is unbounded on its support")
        mass = np.trapezoid(k, z)
        if abs(mass - 1.0) > self.mass_tol:
            raise InvalidArgument(
                f"kernel '{self.name}' integrates to {mass!r}, expected 1 within {self.mass_tol:.0e}"
            )

    def _quad_bounds(self) -> tuple[float, float]:
        lo, hi = self.support
        return (max(lo, -40.0), min(hi, 40.0))


def eval_kernel(spec: KernelSpec, u) -> np.ndarray | float:
    """Evaluate K(u); zero outside the declared support."""
    arr = np.asarray(u, dtype=float)
    out = spec.fn(arr)
    return float(out) if np.isscalar(u) or arr.ndim == 0 else out


def eval_scaled(spec: KernelSpec, h: float, z) -> np.ndarray | float:
    """Evaluate the bandwidth-scaled kernel K_h(z) = K(z/h)/h."""
    if h <= 0:
        raise InvalidArgument(f"bandwidth must be positive, got {h}")
    arr = np.asarray(z, dtype=float)
    out = spec.fn(arr / h) / h
    return float(out) if np.isscalar(z) or arr.ndim == 0 else out


def kernel_l2_norm(spec: KernelSpec) -> float:
    """Closed-form integral of K^2, as used in the shrinking-bandwidth CLT."""
    return spec.l2norm


def _gaussian(u: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)


def _onesided_exp(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return np.where(u <= 0.0, np.exp(np.minimum(u, 0.0)), 0.0)


def _biweight(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) <= 1.0
    w = 1.0 - u * u
    return np.where(inside, (15.0 / 16.0) * w * w, 0.0)


GAUSSIAN = KernelSpec(
    name="gaussian",
    fn=_gaussian,
    support=(-math.inf, math.inf),
    l2norm=1.0 / (2.0 * math.sqrt(math.pi)),
)

ONESIDED = KernelSpec(
    name="onesided",
    fn=_onesided_exp,
    support=(-math.inf, 0.0),
    l2norm=0.5,
)

BETA = KernelSpec(
    name="beta",
    fn=_biweight,
    support=(-1.0, 1.0),
    l2norm=5.0 / 7.0,
)

_REGISTRY = {
    "gaussian": GAUSSIAN,
    "onesided": ONESIDED,
    "beta": BETA,
}


def kernel_by_name(name: str) -> KernelSpec:
    """Look up one of the shipped kernels: gaussian | onesided | beta."""
    try:
        return _REGISTRY[name]
    except KeyError:
        raise InvalidArgument(
            f"unknown kernel '{name}'; available: {', '.join(sorted(_REGISTRY))}"
        ) from None


def uniform_kernel(width: float = 1.0, name: str = "uniform") -> KernelSpec:
    """Flat kernel of the given total width, centred at zero.

    The support is half-open, [-width/2, width/2), so that grid-aligned
    day windows do not double count their right endpoint.
    """
    if width <= 0:
        raise InvalidArgument(f"width must be positive, got {width}")
    half = width / 2.0

    def _flat(u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return np.where((u >= -half) & (u < half), 1.0 / width, 0.0)

    return KernelSpec(
        name=name, fn=_flat, support=(-half, half), l2norm=1.0 / width, mass_tol=1e-5
    )
