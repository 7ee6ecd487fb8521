"""Singular and relaxed controls, fuel truncation and mollification."""

from __future__ import annotations

import json
import math
from typing import Callable, Sequence

import numpy as np

from .cadlag import CONSTANT, LINEAR, LINEAR_CADLAG, CadlagPath

__all__ = [
    "SingularControl",
    "RelaxedControlGrid",
    "validate_singular",
    "truncate_fuel",
    "mollify",
    "disintegrate",
    "singular_increments",
    "singular_integral",
    "grid_from_json",
]

MONOTONE_TOL = 1e-12
ROW_TOL = 1e-12
REFIT_TOL = 1e-9


def validate_singular(Z, m: float | None = None, tol: float = MONOTONE_TOL) -> list[str]:
    """Violations of the singular-control rules, empty when ``Z`` is admissible.

    Checks that ``Z`` is nondecreasing (jumps and slopes, including the
    initial jump from 0) and, when ``m`` is given, that ``Z_T <= m``.
    """
    if isinstance(Z, SingularControl):
        m = Z.m if m is None else m
        Z = Z.path
    out = []
    t, v, left = Z.breakpoints, Z.values, Z.left_limits
    jumps = v - left
    for i in np.flatnonzero(np.any(jumps < -tol, axis=1)):
        out.append(f"monotonicity: downward jump of {float(jumps[i].min()):.6g} at t={t[i]:.6g}")
    slopes = left[1:] - v[:-1]
    for i in np.flatnonzero(np.any(slopes < -tol, axis=1)):
        out.append(f"monotonicity: decrease of {float(slopes[i].min()):.6g} on [{t[i]:.6g}, {t[i + 1]:.6g}]")
    if m is not None:
        if not m > 0:
            out.append(f"fuel: bound m={m} must be positive")
        elif np.any(v[-1] > m + tol):
            out.append(f"fuel: Z_T={float(v[-1].max()):.6g} exceeds m={m:.6g} at t={Z.T:.6g}")
    return out


class SingularControl:
    """A nondecreasing path ``Z`` with an optional fuel bound ``m``.

    Raises
    ------
    ValueError
        If :func:`validate_singular` reports any violation.
    """

    __slots__ = ("path", "m")

    def __init__(self, path: CadlagPath, m: float | None = None):
        problems = validate_singular(path, m)
        if problems:
            raise ValueError("; ".join(problems))
        self.path = path
        self.m = None if m is None else float(m)

    @classmethod
    def zero(cls, T: float, m: float | None = None) -> "SingularControl":
        return cls(CadlagPath([], [], T), m)

    @property
    def T(self) -> float:
        return self.path.T

    @property
    def terminal(self) -> float:
        return float(self.path.values[-1, 0])

    def is_zero(self) -> bool:
        return not np.any(self.path.values) and not np.any(self.path.left_limits)

    def jump_times(self) -> np.ndarray:
        return np.array([t for t, _ in self.path.jumps()])

    def __eq__(self, other):
        if not isinstance(other, SingularControl):
            return NotImplemented
        return self.path == other.path and self.m == other.m

    __hash__ = None

    def __repr__(self):
        return f"SingularControl({self.path!r}, m={self.m})"


def truncate_fuel(Z: SingularControl | CadlagPath, m: float) -> SingularControl:
    """Stop the control once it exceeds ``m``.

    ``Z^m_t = Z_t`` for ``t < tau`` and ``m`` afterwards, with
    ``tau = inf{t : Z_t > m}``.  A control that only touches ``m`` is left
    unchanged.
    """
    if not m > 0:
        raise ValueError("fuel bound m must be positive")
    path = Z.path if isinstance(Z, SingularControl) else Z
    if path.d != 1:
        raise ValueError("fuel truncation is scalar")
    t, v, left = path.breakpoints, path.values[:, 0], path.left_limits[:, 0]
    if v[-1] <= m:
        return SingularControl(path, m)
    for i in range(t.size):
        if v[i] > m:
            bps, vals, lefts = t[: i + 1], np.append(v[:i], m), left[: i + 1]
            break
        if i + 1 < t.size and left[i + 1] > m:
            # continuous crossing inside a linear piece
            tau = t[i] + (m - v[i]) / (left[i + 1] - v[i]) * (t[i + 1] - t[i])
            tau = min(tau, np.nextafter(t[i + 1], -np.inf))
            if tau <= t[i]:
                bps, vals, lefts = t[: i + 1], v[: i + 1], left[: i + 1]
            else:
                bps = np.append(t[: i + 1], tau)
                vals = np.append(v[: i + 1], m)
                lefts = np.append(left[: i + 1], m)
            break
    if path.kind == CONSTANT:
        return SingularControl(CadlagPath(bps, vals, path.T, CONSTANT), m)
    return SingularControl(CadlagPath(bps, vals, path.T, LINEAR_CADLAG, lefts), m)


def _slope_at(path: CadlagPath, s: np.ndarray) -> np.ndarray:
    t, v, left = path.breakpoints, path.values[:, 0], path.left_limits[:, 0]
    out = np.zeros(s.size)
    idx = np.searchsorted(t, s, side="right") - 1
    ok = (s >= 0) & (idx < t.size - 1) & (idx >= 0)
    i = idx[ok]
    with np.errstate(over="ignore", divide="ignore"):
        out[ok] = (left[i + 1] - v[i]) / (t[i + 1] - t[i])
    return out


def mollify(Z: SingularControl | CadlagPath, n: int, epsilon: float) -> SingularControl:
    """Moving average ``Z^[n]_t = n * int_{t - 1/n}^t Z_s ds`` on ``[0, T + epsilon]``.

    The average is piecewise quadratic; it is evaluated exactly at every
    breakpoint (and the ``1/n`` shifts of the breakpoints) and curved pieces
    are subdivided so that the linear interpolant is within ``1e-9`` in sup
    norm.  The result is continuous, nondecreasing, starts at 0 and reaches
    ``Z_T`` at ``T + 1/n``.

    Raises
    ------
    ValueError
        If ``1/n > epsilon`` or ``n < 1``.
    """
    m = Z.m if isinstance(Z, SingularControl) else None
    path = Z.path if isinstance(Z, SingularControl) else Z
    if path.d != 1:
        raise ValueError("mollification is scalar")
    n = int(n)
    if n < 1:
        raise ValueError("n must be a positive integer")
    h = 1.0 / n
    if h > epsilon:
        raise ValueError(f"1/n = {h:.6g} exceeds epsilon = {epsilon:.6g}")
    T = path.T
    horizon = T + epsilon
    t = path.breakpoints
    knots = np.unique(np.concatenate([t, t + h, [0.0, T, T + h, horizon]]))
    knots = knots[knots <= horizon]
    pieces = [knots[:1]]
    for a, b in zip(knots[:-1], knots[1:]):
        mid = 0.5 * (a + b)
        kappa = n * abs(_slope_at(path, np.array([mid]))[0] - _slope_at(path, np.array([mid - h]))[0])
        k = 1
        # an infinite slope only arises on sub-ulp pieces, where one segment is exact enough
        if 0 < kappa < math.inf:
            k = max(1, int(math.ceil((b - a) / math.sqrt(8.0 * REFIT_TOL / kappa))))
        pieces.append(np.linspace(a, b, k + 1)[1:])
    grid = np.concatenate(pieces)
    I = path.cumulative_integral(np.concatenate([grid, grid - h]))[:, 0]
    vals = n * (I[: grid.size] - I[grid.size:])
    vals = np.maximum.accumulate(np.maximum(vals, 0.0))
    zT = float(path.values[-1, 0])
    vals[grid >= T + h] = zT
    vals = np.minimum(vals, zT) if zT >= 0 else vals
    vals[0] = 0.0
    return SingularControl(CadlagPath(grid, vals, horizon, LINEAR), m)


# -- singular integrals on a grid ----------------------------------------------


def singular_increments(Z: CadlagPath, c: Callable[[float], float] | float, grid) -> tuple[np.ndarray, np.ndarray]:
    """Increments of ``int c dZ`` on a time grid containing the jump times of ``Z``.

    Returns ``(cont, jump)``: ``cont[k] = c(t_k) (Z_{t_{k+1}-} - Z_{t_k})`` is
    the continuous increment over cell ``k`` and ``jump[k] = c(t_k) dZ_{t_k}``
    the jump at grid time ``t_k`` (``jump[0]`` is the initial jump).  The rule
    is exact for step controls with any ``c`` and for any control with
    constant ``c``.
    """
    grid = np.asarray(grid, dtype=float)
    missing = [s for s, _ in Z.jumps() if s <= grid[-1] and not np.any(grid == s)]
    if missing:
        raise ValueError(f"grid misses jump times of Z: {missing[:3]}")
    cvals = np.array([float(c(s)) for s in grid]) if callable(c) else np.full(grid.size, float(c))
    right = Z.sample(grid)[:, 0]
    left = np.array([Z.left_limit(s)[0] for s in grid])
    cont = cvals[:-1] * (left[1:] - right[:-1])
    jump = cvals * (right - left)
    return cont, jump


def singular_integral(Z: CadlagPath, c, grid) -> tuple[np.ndarray, np.ndarray]:
    """Right values and left limits of ``S_t = int_{[0, t]} c dZ`` on the grid."""
    cont, jump = singular_increments(Z, c, grid)
    right = np.empty(jump.size)
    left = np.empty(jump.size)
    left[0] = 0.0
    right[0] = jump[0]
    for k in range(1, jump.size):
        left[k] = right[k - 1] + cont[k - 1]
        right[k] = left[k] + jump[k]
    return right, left


# -- relaxed controls ------------------------------------------------------------


class RelaxedControlGrid:
    """Relaxed control ``Q_t(du) dt`` with piecewise-constant rows.

    Parameters
    ----------
    t_grid : array_like
        Cell boundaries ``t_0 < ... < t_K``.
    u_grid : array_like
        Finite control grid, strictly increasing.
    weights : array_like
        Row-stochastic matrix of shape ``(K, J)``; row ``k`` is ``Q_t`` on
        ``[t_k, t_{k+1})``.
    u_tail0, u_tailT : float
        Controls used before ``t_0`` and after ``t_K``.
    U : tuple, optional
        Control interval ``(u_min, u_max)`` that must contain every grid value.
    """

    def __init__(self, t_grid, u_grid, weights, u_tail0=None, u_tailT=None, U=None):
        t = np.asarray(t_grid, dtype=float)
        u = np.asarray(u_grid, dtype=float)
        w = np.asarray(weights, dtype=float)
        if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
            raise ValueError("time grid must have at least two increasing points")
        if u.ndim != 1 or u.size == 0 or np.any(np.diff(u) <= 0):
            raise ValueError("control grid must be nonempty and strictly increasing")
        if w.shape != (t.size - 1, u.size):
            raise ValueError(f"weights must have shape {(t.size - 1, u.size)}")
        if np.any(w < 0) or np.any(np.abs(w.sum(axis=1) - 1.0) > ROW_TOL):
            raise ValueError("weights must be row-stochastic")
        u0 = float(u[0]) if u_tail0 is None else float(u_tail0)
        uT = float(u[0]) if u_tailT is None else float(u_tailT)
        if U is not None:
            lo, hi = U
            if u[0] < lo or u[-1] > hi or not (lo <= u0 <= hi and lo <= uT <= hi):
                raise ValueError("controls must lie in U")
        self.t_grid = t
        self.u_grid = u
        self.weights = w
        self.u_tail0 = u0
        self.u_tailT = uT

    @classmethod
    def dirac(cls, t_grid, u_grid, indices, u_tail0=None, u_tailT=None, U=None) -> "RelaxedControlGrid":
        """Strict control taking ``u_grid[indices[k]]`` on cell ``k``."""
        u_grid = np.asarray(u_grid, dtype=float)
        idx = np.asarray(indices, dtype=int)
        w = np.zeros((len(t_grid) - 1, u_grid.size))
        w[np.arange(w.shape[0]), idx] = 1.0
        return cls(t_grid, u_grid, w, u_tail0, u_tailT, U)

    @classmethod
    def constant(cls, T: float, u: float) -> "RelaxedControlGrid":
        return cls([0.0, T], [u], [[1.0]], u, u)

    @property
    def T(self) -> float:
        return float(self.t_grid[-1])

    def is_strict(self) -> bool:
        return bool(np.all((self.weights == 0.0) | (self.weights == 1.0)))

    def strict_values(self) -> np.ndarray:
        """Control value per cell of a strict control."""
        if not self.is_strict():
            raise ValueError("control is not strict")
        return self.u_grid[np.argmax(self.weights, axis=1)]

    def cell_index(self, times) -> np.ndarray:
        """Cell of each time; ``-1`` before the grid and ``K`` after it."""
        ts = np.asarray(times, dtype=float)
        k = np.searchsorted(self.t_grid, ts, side="right") - 1
        return np.where(ts >= self.t_grid[-1], self.t_grid.size - 1, k)

    def rows(self, times) -> np.ndarray:
        """Weight rows in force at each time, tails included, shape ``(n, J)``."""
        k = self.cell_index(times)
        out = np.empty((k.size, self.u_grid.size))
        inside = (k >= 0) & (k < self.weights.shape[0])
        out[inside] = self.weights[k[inside]]
        for mask, ut in ((k < 0, self.u_tail0), (k >= self.weights.shape[0], self.u_tailT)):
            if np.any(mask):
                j = np.flatnonzero(self.u_grid == ut)
                if j.size:
                    row = np.zeros(self.u_grid.size)
                    row[j[0]] = 1.0
                    out[mask] = row
                else:
                    out[mask] = np.nan
        return out

    def mean(self) -> np.ndarray:
        return self.weights @ self.u_grid

    def flatten(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Atoms ``(cell midpoint, u)`` of ``q / T`` with masses ``w[k, j] dt_k / T``."""
        mid = 0.5 * (self.t_grid[:-1] + self.t_grid[1:])
        dt = np.diff(self.t_grid) / (self.t_grid[-1] - self.t_grid[0])
        J = self.u_grid.size
        return np.repeat(mid, J), np.tile(self.u_grid, mid.size), (self.weights * dt[:, None]).ravel()

    def to_json(self) -> dict:
        return {
            "t_grid": self.t_grid.tolist(),
            "u_grid": self.u_grid.tolist(),
            "weights": self.weights.tolist(),
            "u_tail0": self.u_tail0,
            "u_tailT": self.u_tailT,
        }

    def __eq__(self, other):
        if not isinstance(other, RelaxedControlGrid):
            return NotImplemented
        return (
            np.array_equal(self.t_grid, other.t_grid)
            and np.array_equal(self.u_grid, other.u_grid)
            and np.array_equal(self.weights, other.weights)
            and self.u_tail0 == other.u_tail0
            and self.u_tailT == other.u_tailT
        )

    __hash__ = None

    def __repr__(self):
        return f"RelaxedControlGrid(K={self.weights.shape[0]}, J={self.u_grid.size}, strict={self.is_strict()})"


def grid_from_json(obj: dict | str) -> RelaxedControlGrid:
    if isinstance(obj, str):
        obj = json.loads(obj)
    extra = set(obj) - {"t_grid", "u_grid", "weights", "u_tail0", "u_tailT"}
    if extra:
        raise ValueError(f"unknown relaxed-control keys {sorted(extra)}")
    return RelaxedControlGrid(obj["t_grid"], obj["u_grid"], obj["weights"], obj.get("u_tail0"), obj.get("u_tailT"))


def disintegrate(times, controls, weights, t_grid, u_grid=None, u_tail0=None, u_tailT=None, tol: float = 1e-9) -> RelaxedControlGrid:
    """Rows ``q_t(du)`` of a discrete measure on ``[0, T] x U``.

    Parameters
    ----------
    times, controls, weights : array_like
        Atoms ``(t, u)`` with masses forming a probability measure (the
        measure ``q / T``).  Each atom is assigned to the cell containing ``t``.
    t_grid : array_like
        Cell boundaries.
    u_grid : array_like, optional
        Control grid; the distinct atom controls by default.

    Raises
    ------
    ValueError
        If the time marginal differs from the normalised Lebesgue measure of
        the cells by more than ``tol``, or an atom lies off the grids.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    times = np.asarray(times, dtype=float)
    controls = np.asarray(controls, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if not (times.shape == controls.shape == weights.shape):
        raise ValueError("atoms and weights must align")
    u_grid = np.unique(controls) if u_grid is None else np.asarray(u_grid, dtype=float)
    k = np.searchsorted(t_grid, times, side="right") - 1
    if np.any(k < 0) or np.any(k >= t_grid.size - 1):
        raise ValueError("atom times must lie inside the time grid")
    j = np.searchsorted(u_grid, controls)
    if np.any(j >= u_grid.size) or np.any(u_grid[np.minimum(j, u_grid.size - 1)] != controls):
        raise ValueError("atom controls must lie on the control grid")
    mass = np.zeros((t_grid.size - 1, u_grid.size))
    np.add.at(mass, (k, j), weights)
    target = np.diff(t_grid) / (t_grid[-1] - t_grid[0])
    marginal = mass.sum(axis=1)
    bad = np.abs(marginal - target) > tol
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(
            f"time marginal is not Lebesgue: cell {i} carries {marginal[i]:.6g}, expected {target[i]:.6g}"
        )
    rows = mass / marginal[:, None]
    rows /= rows.sum(axis=1, keepdims=True)
    return RelaxedControlGrid(t_grid, u_grid, rows, u_tail0, u_tailT)
