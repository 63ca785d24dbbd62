"""Goodness-of-fit integral and leave-one-out bandwidth cross-validation.

The CV objective scores each candidate bandwidth by how well the
leave-one-out spot estimate at each interior increment time predicts that
increment's (noisy, rank-one) covariance proxy dX dX'/delta:

    CV(h) = sum_i || dX_i dX_i'/delta - S_{-i}(t_{i-1}) ||_F^2 * delta

summed over increments whose anchor time lies in the interior window.
Candidates are scored independently; ties break toward the smaller
bandwidth, preferring lower bias when the curve is flat.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, InvalidState
from .kernels import KernelSpec, eval_scaled
from .timeseries import CovPath, IncrementSeries

DEFAULT_WINDOW_TRIM = 0.1
_CV_BLOCK_ROWS = 256


@dataclass(frozen=True)
class BandwidthGrid:
    """Candidate bandwidths plus the interior evaluation window."""

    candidates: np.ndarray = field(repr=False)
    t_l: float = 0.0
    t_u: float = 0.0

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.candidates, dtype=float))
        if c.size == 0:
            raise InvalidArgument("bandwidth grid is empty")
        if np.any(c <= 0):
            raise InvalidArgument("bandwidth candidates must be positive")
        if c.size > 1 and not np.all(np.diff(c) > 0):
            raise InvalidArgument("bandwidth candidates must be strictly increasing")
        if not (0.0 < self.t_l < self.t_u):
            raise InvalidArgument(
                f"evaluation window [{self.t_l}, {self.t_u}] must satisfy 0 < t_l < t_u"
            )
        object.__setattr__(self, "candidates", c)


def default_window(T: float, trim: float = DEFAULT_WINDOW_TRIM) -> tuple[float, float]:
    """Interior window trimming a fraction of the horizon off each side."""
    if not (0.0 < trim < 0.5):
        raise InvalidArgument(f"trim fraction must be in (0, 0.5), got {trim}")
    return (trim * T, (1.0 - trim) * T)


def _window_slice(times: np.ndarray, t_l: float, t_u: float) -> np.ndarray:
    return np.flatnonzero((times >= t_l) & (times <= t_u))


def ise(
    est: CovPath,
    truth: CovPath,
    window: tuple[float, float],
    element: tuple[int, int] | None = None,
) -> float:
    """Trapezoid integral of the squared estimation error over the window.

    With ``element=None`` the squared errors of all unique elements
    (k <= l) are summed; otherwise only the requested element counts.
    """
    t_l, t_u = window
    if len(est) != len(truth) or not np.allclose(
        est.times, truth.times, rtol=1e-9, atol=1e-12
    ):
        raise InvalidArgument("estimate and truth must share evaluation times")
    if est.d != truth.d:
        raise InvalidArgument("estimate and truth dimensions differ")
    idx = _window_slice(est.times, t_l, t_u)
    if idx.size < 2:
        raise InvalidArgument(
            f"need at least 2 evaluation times inside [{t_l}, {t_u}], found {idx.size}"
        )
    t = est.times[idx]
    err = est.values[idx] - truth.values[idx]
    if element is not None:
        k, l = element
        return float(np.trapezoid(err[:, k, l] ** 2, t))
    rows, cols = np.tril_indices(est.d)
    sq = err[:, rows, cols] ** 2
    return float(np.trapezoid(sq.sum(axis=1), t))


@dataclass(frozen=True)
class CvResult:
    """Chosen bandwidth plus the full criterion curve."""

    h: float
    candidates: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)


def cv_bandwidth(
    increments: IncrementSeries, spec: KernelSpec, grid: BandwidthGrid
) -> CvResult:
    """Score every candidate bandwidth by leave-one-out prediction error."""
    anchors = increments.left_times
    delta = increments.grid.delta
    if grid.t_u >= increments.grid.T:
        raise InvalidArgument(
            f"window [{grid.t_l}, {grid.t_u}] must lie strictly inside [0, {increments.grid.T}]"
        )
    win = _window_slice(anchors, grid.t_l, grid.t_u)
    if win.size < 2:
        raise InvalidArgument("too few increments inside the evaluation window")

    dx = increments.values
    n, d = dx.shape
    outer = np.einsum("ik,il->ikl", dx, dx).reshape(n, d * d)
    proxy = outer[win] / delta

    values = np.empty(grid.candidates.size)
    degenerate = np.zeros(grid.candidates.size, dtype=bool)
    for j, h in enumerate(grid.candidates):
        total = 0.0
        any_weight = False
        for lo in range(0, win.size, _CV_BLOCK_ROWS):
            rows = win[lo : lo + _CV_BLOCK_ROWS]
            w = eval_scaled(spec, h, anchors[None, :] - anchors[rows, None])
            w[np.arange(rows.size), rows] = 0.0  # drop each anchor's own term
            if not any_weight and np.any(w != 0.0):
                any_weight = True
            resid = proxy[lo : lo + rows.size] - w @ outer
            total += float(np.einsum("ij,ij->", resid, resid))
        degenerate[j] = not any_weight
        values[j] = total * delta
    if degenerate.all():
        raise InvalidState(
            "every candidate bandwidth leaves all leave-one-out estimates weightless"
        )
    values = np.where(degenerate, np.inf, values)
    best = int(np.argmin(values))  # first minimum: ties break toward smaller h
    return CvResult(h=float(grid.candidates[best]), candidates=grid.candidates, values=values)
