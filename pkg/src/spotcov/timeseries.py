"""Core data types: uniform time grids, log-price paths, increments,
covariance snapshots/paths, and the half-vectorization helpers.

All containers are frozen dataclasses around read-only numpy arrays, so
instances can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument

SYMMETRY_ATOL = 1e-12
PSD_SLACK = 1e-10


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, T] into n steps of length delta = T/n."""

    T: float
    n: int
    points: np.ndarray = field(repr=False)
    delta: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "delta", self.T / self.n)
        object.__setattr__(self, "points", _readonly(self.points))


def build_uniform_grid(T: float, n: int) -> TimeGrid:
    """Build the uniform grid with points t_i = i*T/n, i = 0..n.

    Parameters
    ----------
    T : float
        Total horizon, must be positive.
    n : int
        Number of increments, at least 2.
    """
    if not np.isfinite(T) or T <= 0:
        raise InvalidArgument(f"horizon T must be positive, got {T}")
    if n < 2:
        raise InvalidArgument(f"need at least 2 increments, got n={n}")
    points = np.arange(n + 1) * (T / n)
    # force exact endpoints so t_0 = 0 and t_n = T hold bitwise
    points[-1] = T
    return TimeGrid(T=float(T), n=int(n), points=points)


@dataclass(frozen=True)
class PricePath:
    """Synchronous multivariate log-prices on a uniform grid.

    values has shape (n+1, d): one row per grid point, one column per asset.
    """

    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        if v.shape[0] != self.grid.n + 1:
            raise InvalidArgument(
                f"price path has {v.shape[0]} rows, grid has {self.grid.n + 1} points"
            )
        if not np.all(np.isfinite(v)):
            raise InvalidArgument("price path contains non-finite values")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class IncrementSeries:
    """One-step increments dX_i = X(t_i) - X(t_{i-1}), shape (n, d)."""

    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        if v.shape[0] != self.grid.n:
            raise InvalidArgument(
                f"increment series has {v.shape[0]} rows, grid has {self.grid.n} steps"
            )
        object.__setattr__(self, "values", _readonly(v))

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def left_times(self) -> np.ndarray:
        """Times t_{i-1} at which each increment starts (kernel anchors)."""
        return self.grid.points[:-1]


def log_returns(path: PricePath) -> IncrementSeries:
    """Difference the path: row i of the result is path row i+1 minus row i."""
    return IncrementSeries(grid=path.grid, values=np.diff(path.values, axis=0))


def _check_symmetric(entries: np.ndarray, atol: float = SYMMETRY_ATOL) -> np.ndarray:
    m = np.atleast_2d(np.asarray(entries, dtype=float))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidArgument(f"expected a square matrix, got shape {m.shape}")
    gap = np.max(np.abs(m - m.T)) if m.size else 0.0
    if gap > atol:
        raise InvalidArgument(f"matrix is asymmetric beyond tolerance ({gap:.3e} > {atol:.0e})")
    return m


@dataclass(frozen=True)
class CovMatrix:
    """Symmetric d x d covariance snapshot (units: returns^2)."""

    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = _check_symmetric(self.entries)
        object.__setattr__(self, "entries", _readonly(m))

    @property
    def d(self) -> int:
        return self.entries.shape[0]

    def is_psd(self, slack: float = PSD_SLACK) -> bool:
        """True if all eigenvalues are >= -slack * trace."""
        tr = float(np.trace(self.entries))
        lo = float(np.linalg.eigvalsh(self.entries)[0])
        return lo >= -slack * max(tr, 1.0e-300)


@dataclass(frozen=True)
class CovPath:
    """Covariance matrices indexed by strictly increasing times in [0, T].

    values has shape (m, d, d).
    """

    times: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.times, dtype=float))
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or v.shape[0] != t.shape[0] or v.shape[1] != v.shape[2]:
            raise InvalidArgument(
                f"covariance path shapes do not line up: times {t.shape}, values {v.shape}"
            )
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise InvalidArgument("evaluation times must be strictly increasing")
        object.__setattr__(self, "times", _readonly(t))
        object.__setattr__(self, "values", _readonly(v))

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.times.shape[0]

    def matrix(self, j: int) -> CovMatrix:
        return CovMatrix(entries=self.values[j])


def vech_indices(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Row/column indices of the lower triangle, stacked column by column."""
    cols, rows = np.triu_indices(d)  # upper triangle row-major == lower col-major
    return rows, cols


def vech(m: CovMatrix | np.ndarray) -> np.ndarray:
    """Half-vectorize a symmetric matrix: lower triangle, column-major.

    [[a, b], [b, c]] maps to (a, b, c).
    """
    entries = m.entries if isinstance(m, CovMatrix) else _check_symmetric(m)
    rows, cols = vech_indices(entries.shape[0])
    return entries[rows, cols].copy()


def unvech(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`vech`: rebuild the full symmetric matrix."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    q = v.shape[0]
    d = int(round((np.sqrt(8 * q + 1) - 1) / 2))
    if d * (d + 1) // 2 != q:
        raise InvalidArgument(f"vector of length {q} is not a vech of any square matrix")
    rows, cols = vech_indices(d)
    m = np.zeros((d, d))
    m[rows, cols] = v
    m[cols, rows] = v
    return m


def unvech_lower(v: np.ndarray) -> np.ndarray:
    """Rebuild a lower-triangular matrix from its vech (upper part zero)."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    q = v.shape[0]
    d = int(round((np.sqrt(8 * q + 1) - 1) / 2))
    if d * (d + 1) // 2 != q:
        raise InvalidArgument(f"vector of length {q} is not a vech of any square matrix")
    rows, cols = vech_indices(d)
    m = np.zeros((d, d))
    m[rows, cols] = v
    return m


def vech_labels(d: int, prefix: str = "s") -> list[str]:
    """Column labels for vech entries, 1-indexed: s_1_1, s_2_1, ..."""
    rows, cols = vech_indices(d)
    return [f"{prefix}_{r + 1}_{c + 1}" for r, c in zip(rows, cols)]
