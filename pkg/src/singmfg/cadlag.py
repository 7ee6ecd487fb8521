"""Cadlag paths on the extended line and the strong M1 geometry.

Paths are stored by finitely many breakpoints.  Every path is identified with
an element of the extended Skorokhod space: it vanishes before time 0 and is
frozen at its terminal value after the horizon ``T``.  A jump at time 0 (from
the implicit left value 0) is allowed.

Three storage kinds are supported:

``piecewise-constant-cadlag``
    right-continuous step function; the path is 0 before the first breakpoint.
``piecewise-linear-continuous``
    linear interpolation of the values; constant at ``values[0]`` before the
    first breakpoint (so only the initial jump at 0 can be discontinuous).
``piecewise-linear-cadlag``
    linear pieces with jumps; ``left_limits[i]`` is the limit from the left
    at ``breakpoints[i]``.  Simulated states and sums of paths use this kind.

On every piece ``[t_i, t_{i+1})`` a path is linear from ``x_{t_i}`` to
``x_{t_{i+1}-}`` and it is constant after the last breakpoint.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numba import njit

__all__ = [
    "KINDS",
    "CadlagPath",
    "CompletedGraph",
    "CompactnessReport",
    "step",
    "ramp",
    "staircase",
    "from_samples",
    "completed_graph",
    "segment_distance",
    "m1_distance",
    "m1_mesh",
    "m1_distance_matrix",
    "graph_samples",
    "oscillation",
    "strong_m1_oscillation",
    "modified_oscillation",
    "compactness_diagnostic",
    "uniform_distance",
    "lp_distance",
    "path_to_json",
    "path_from_json",
    "load_paths",
]

CONSTANT = "piecewise-constant-cadlag"
LINEAR = "piecewise-linear-continuous"
LINEAR_CADLAG = "piecewise-linear-cadlag"
KINDS = (CONSTANT, LINEAR, LINEAR_CADLAG)

# metric identity tolerance used in tests and reports
IDENTITY_TOL = 1e-12


class CadlagPath:
    """A cadlag path in the extended space, frozen after ``T``.

    Parameters
    ----------
    breakpoints : array_like
        Strictly increasing times in ``[0, T]``.
    values : array_like
        Right values at the breakpoints, shape ``(K,)`` or ``(K, d)``.
    T : float
        Horizon.
    kind : str
        One of :data:`KINDS`.
    left_limits : array_like, optional
        Left limits at the breakpoints; required for
        ``piecewise-linear-cadlag`` and ignored otherwise.

    Notes
    -----
    The stored breakpoints always start at 0.  A path built with an empty
    breakpoint list is the zero path.
    """

    __slots__ = ("_t", "_v", "_l", "T", "kind")

    def __init__(self, breakpoints, values, T, kind=CONSTANT, left_limits=None):
        if kind not in KINDS:
            raise ValueError(f"unknown path kind {kind!r}")
        T = float(T)
        if not T > 0 or not math.isfinite(T):
            raise ValueError("horizon T must be positive and finite")
        t = np.asarray(breakpoints, dtype=float).ravel()
        v = np.asarray(values, dtype=float)
        if t.size == 0:
            d = v.shape[-1] if v.ndim == 2 else 1
            t = np.zeros(1)
            v = np.zeros((1, d))
            left = np.zeros((1, d))
            kind = kind if kind != LINEAR_CADLAG else CONSTANT
        else:
            if v.ndim == 1:
                v = v[:, None]
            if v.ndim != 2 or v.shape[0] != t.size:
                raise ValueError("values must have one row per breakpoint")
            if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
                raise ValueError("breakpoints and values must be finite")
            if np.any(np.diff(t) <= 0):
                raise ValueError("breakpoints must be strictly increasing")
            if t[0] < 0 or t[-1] > T:
                raise ValueError("breakpoints must lie in [0, T]")
            d = v.shape[1]
            if kind == CONSTANT:
                if t[0] > 0:
                    t = np.concatenate([[0.0], t])
                    v = np.vstack([np.zeros((1, d)), v])
                left = np.vstack([np.zeros((1, d)), v[:-1]])
            elif kind == LINEAR:
                if t[0] > 0:
                    t = np.concatenate([[0.0], t])
                    v = np.vstack([v[:1], v])
                left = v.copy()
                left[0] = 0.0
            else:
                if left_limits is None:
                    raise ValueError("piecewise-linear-cadlag paths need left_limits")
                left = np.asarray(left_limits, dtype=float)
                if left.ndim == 1:
                    left = left[:, None]
                if left.shape != v.shape or not np.all(np.isfinite(left)):
                    raise ValueError("left_limits must match values in shape")
                if t[0] > 0:
                    t = np.concatenate([[0.0], t])
                    v = np.vstack([left[:1], v])
                    left = np.vstack([np.zeros((1, d)), left])
                elif np.any(left[0] != 0.0):
                    raise ValueError("the left limit at time 0 is 0 by convention")
                left = left.copy()
        self._t = t
        self._v = v
        self._l = left
        self.T = T
        self.kind = kind
        for a in (self._t, self._v, self._l):
            a.setflags(write=False)

    # -- basic accessors -------------------------------------------------

    @property
    def breakpoints(self) -> np.ndarray:
        return self._t

    @property
    def values(self) -> np.ndarray:
        return self._v

    @property
    def left_limits(self) -> np.ndarray:
        return self._l

    @property
    def d(self) -> int:
        return self._v.shape[1]

    def __repr__(self):
        return f"CadlagPath(kind={self.kind!r}, T={self.T}, d={self.d}, n_breakpoints={self._t.size})"

    def __eq__(self, other):
        if not isinstance(other, CadlagPath):
            return NotImplemented
        return (
            self.T == other.T
            and self._t.shape == other._t.shape
            and self._v.shape == other._v.shape
            and np.array_equal(self._t, other._t)
            and np.array_equal(self._v, other._v)
            and np.array_equal(self._l, other._l)
        )

    __hash__ = None

    # -- evaluation ------------------------------------------------------

    def sample(self, times) -> np.ndarray:
        """Right-continuous values at ``times``, shape ``(n, d)``."""
        ts = np.atleast_1d(np.asarray(times, dtype=float))
        out = np.zeros((ts.size, self.d))
        t, v, left = self._t, self._v, self._l
        inside = ts >= 0
        tc = np.minimum(ts[inside], self.T)
        idx = np.searchsorted(t, tc, side="right") - 1
        res = v[idx].copy()
        interior = idx < t.size - 1
        if np.any(interior):
            i = idx[interior]
            frac = (tc[interior] - t[i]) / (t[i + 1] - t[i])
            res[interior] = v[i] + (left[i + 1] - v[i]) * frac[:, None]
        out[inside] = res
        return out

    def eval(self, t: float) -> np.ndarray:
        """Value ``x_t``: 0 before time 0, ``x_T`` after ``T``."""
        return self.sample([t])[0]

    def left_limit(self, t: float) -> np.ndarray:
        """Left limit ``x_{t-}``; equals 0 at ``t = 0``."""
        t = float(t)
        if t <= 0:
            return np.zeros(self.d)
        if t > self.T:
            return self.eval(self.T)
        i = int(np.searchsorted(self._t, t, side="left")) - 1
        if i + 1 < self._t.size and self._t[i + 1] == t:
            return self._l[i + 1].copy()
        return self.sample([t])[0]

    def jumps(self) -> list[tuple[float, np.ndarray]]:
        """List of ``(time, x_t - x_{t-})`` for every nonzero jump."""
        dv = self._v - self._l
        nz = np.any(dv != 0.0, axis=1)
        return [(float(self._t[i]), dv[i].copy()) for i in np.flatnonzero(nz)]

    def sup_norm(self) -> float:
        pts = np.vstack([self._v, self._l])
        return float(np.max(np.linalg.norm(pts, axis=1)))

    def cumulative_integral(self, times) -> np.ndarray:
        """``int_0^t x_s ds`` for each ``t`` (0 for ``t <= 0``), exact, shape ``(n, d)``."""
        ts = np.atleast_1d(np.asarray(times, dtype=float))
        t, v, left = self._t, self._v, self._l
        dt = np.diff(t)
        seg = 0.5 * (v[:-1] + left[1:]) * dt[:, None]
        cum = np.vstack([np.zeros((1, self.d)), np.cumsum(seg, axis=0)])
        out = np.zeros((ts.size, self.d))
        pos = ts > 0
        tp = ts[pos]
        # beyond T the path is frozen at x_T, the last piece extends to infinity
        idx = np.searchsorted(t, tp, side="right") - 1
        s = tp - t[idx]
        res = cum[idx] + v[idx] * s[:, None]
        interior = idx < t.size - 1
        if np.any(interior):
            i = idx[interior]
            si = s[interior]
            slope = (left[i + 1] - v[i]) / dt[i][:, None]
            res[interior] += 0.5 * slope * (si**2)[:, None]
            # pieces ending before the query contribute through cum only
        out[pos] = res
        return out

    # -- transformations ---------------------------------------------------

    def with_horizon(self, T: float) -> "CadlagPath":
        """Same element of the extended space viewed on ``[0, T]``, ``T >= self.T``."""
        if T < self.T:
            raise ValueError("horizon can only be extended")
        if T == self.T:
            return self
        return _raw(self._t, self._v, self._l, T, self.kind)

    def __add__(self, other: "CadlagPath") -> "CadlagPath":
        if not isinstance(other, CadlagPath):
            return NotImplemented
        if other.d != self.d:
            raise ValueError("dimension mismatch")
        T = max(self.T, other.T)
        a, b = self.with_horizon(T), other.with_horizon(T)
        t = np.union1d(a._t, b._t)
        v = a.sample(t) + b.sample(t)
        left = np.vstack([a.left_limit(s) + b.left_limit(s) for s in t])
        kind = CONSTANT if a.kind == b.kind == CONSTANT else LINEAR_CADLAG
        if kind == CONSTANT:
            return CadlagPath(t, v, T, CONSTANT)
        return CadlagPath(t, v, T, LINEAR_CADLAG, left)

    def __neg__(self) -> "CadlagPath":
        return _raw(self._t, -self._v, -self._l, self.T, self.kind)

    def __sub__(self, other: "CadlagPath") -> "CadlagPath":
        return self + (-other)

    def scaled(self, factor: float) -> "CadlagPath":
        return _raw(self._t, factor * self._v, factor * self._l, self.T, self.kind)


def _raw(t, v, left, T, kind) -> CadlagPath:
    p = CadlagPath.__new__(CadlagPath)
    p._t = np.array(t, dtype=float)
    p._v = np.array(v, dtype=float)
    p._l = np.array(left, dtype=float)
    p.T = float(T)
    p.kind = kind
    for a in (p._t, p._v, p._l):
        a.setflags(write=False)
    return p


# -- constructors ----------------------------------------------------------


def step(t0: float, height: float = 1.0, T: float = 1.0) -> CadlagPath:
    """``height * 1_{[t0, inf)}`` on ``[0, T]``."""
    return CadlagPath([t0], [height], T, CONSTANT)


def ramp(t0: float, t1: float, height: float = 1.0, T: float = 1.0) -> CadlagPath:
    """Continuous ramp from 0 at ``t0`` to ``height`` at ``t1``."""
    if not t1 > t0:
        raise ValueError("ramp needs t1 > t0")
    return CadlagPath([t0, t1], [0.0, height], T, LINEAR)


def staircase(times: Sequence[float], increments: Sequence[float], T: float = 1.0) -> CadlagPath:
    """Step function jumping by ``increments[i]`` at ``times[i]``."""
    times = np.asarray(times, dtype=float)
    return CadlagPath(times, np.cumsum(increments), T, CONSTANT)


def from_samples(times, values, T: float | None = None) -> CadlagPath:
    """Continuous piecewise-linear interpolation of samples."""
    times = np.asarray(times, dtype=float)
    return CadlagPath(times, values, times[-1] if T is None else T, LINEAR)


# -- completed graph ---------------------------------------------------------


@dataclass(frozen=True)
class CompletedGraph:
    """Polyline through the thin graph of a path.

    ``states[k]`` and ``times[k]`` are the k-th vertex.  Consecutive vertices
    either share a time (a jump segment) or are joined by a piece of the path.
    """

    states: np.ndarray
    times: np.ndarray

    def __len__(self):
        return self.times.size

    @property
    def vertices(self) -> list[tuple[np.ndarray, float]]:
        return [(self.states[k], float(self.times[k])) for k in range(len(self))]

    def arc_positions(self) -> np.ndarray:
        """Cumulative length, measured as ``|dz|_1 + |dt|``."""
        dz = np.abs(np.diff(self.states, axis=0)).sum(axis=1)
        dt = np.diff(self.times)
        return np.concatenate([[0.0], np.cumsum(dz + dt)])


def completed_graph(x: CadlagPath) -> CompletedGraph:
    """Vertices of the thin graph of ``x``, in the graph order.

    Starts at ``(0, 0)`` so an initial jump contributes the segment
    ``[0, x_0] x {0}``.
    """
    t, v, left = x.breakpoints, x.values, x.left_limits
    K = t.size
    states = np.empty((2 * K + 1, x.d))
    times = np.empty(2 * K + 1)
    states[0:2 * K:2] = left
    states[1:2 * K:2] = v
    times[0:2 * K:2] = t
    times[1:2 * K:2] = t
    states[-1] = v[-1]
    times[-1] = x.T
    keep = np.ones(times.size, dtype=bool)
    same = (np.diff(times) == 0) & np.all(np.diff(states, axis=0) == 0, axis=1)
    keep[1:] = ~same
    return CompletedGraph(states[keep], times[keep])


def segment_distance(p, a, b) -> float:
    """Euclidean distance from ``p`` to the segment ``[a, b]``."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    lam = min(1.0, max(0.0, float((p - a) @ ab) / denom))
    return float(np.linalg.norm(p - (a + lam * ab)))


# -- M1 distance -------------------------------------------------------------


def graph_samples(x: CadlagPath, N: int) -> tuple[np.ndarray, float]:
    """Points on the completed graph of a scalar path used by the M1 solver.

    The sample set is the union of the graph vertices and ``N + 1`` points
    equally spaced in arc length.  Consecutive samples are joined by straight
    pieces of the graph, so any monotone matching of two sample sequences is
    realised by parameter representations of the two paths.

    Returns the ``(n, 2)`` array of ``(state, time)`` samples and the arc
    length spacing ``length / N``.
    """
    if x.d != 1:
        raise ValueError("the M1 solver handles scalar paths only (d = 1)")
    g = completed_graph(x)
    s = g.arc_positions()
    length = s[-1]
    grid = np.linspace(0.0, length, N + 1)
    u = np.union1d(s, grid)
    z = np.interp(u, s, g.states[:, 0])
    r = np.interp(u, s, g.times)
    # vertices are reproduced exactly, not through interpolation
    at_vertex = np.searchsorted(u, s)
    z[at_vertex] = g.states[:, 0]
    r[at_vertex] = g.times
    return np.column_stack([z, r]), length / N


@njit(cache=True)
def _frechet_linf(P, Q):
    n = P.shape[0]
    m = Q.shape[0]
    prev = np.empty(m)
    cur = np.empty(m)
    for i in range(n):
        pz = P[i, 0]
        pt = P[i, 1]
        for j in range(m):
            d = max(abs(pz - Q[j, 0]), abs(pt - Q[j, 1]))
            if i == 0:
                if j == 0:
                    best = d
                else:
                    best = max(cur[j - 1], d)
            elif j == 0:
                best = max(prev[0], d)
            else:
                best = max(min(prev[j - 1], prev[j], cur[j - 1]), d)
            cur[j] = best
        prev, cur = cur, prev
    return prev[m - 1]


def _common_horizon(x: CadlagPath, y: CadlagPath) -> tuple[CadlagPath, CadlagPath]:
    if x.d != y.d:
        raise ValueError("dimension mismatch")
    T = max(x.T, y.T)
    return x.with_horizon(T), y.with_horizon(T)


def m1_distance(x: CadlagPath, y: CadlagPath, N: int = 128) -> float:
    """Strong M1 distance between two scalar paths.

    The infimum over parameter representations of the sup-distance between
    the two completed graphs is a Frechet distance between monotone polylines
    in the ``(state, time)`` plane under the max-norm.  It is approximated by
    a discrete Frechet dynamic program on :func:`graph_samples`.

    Parameters
    ----------
    x, y : CadlagPath
        Scalar paths.  Paths with different horizons are compared on the
        larger one (both are frozen after their own horizon).
    N : int
        Number of arc-length cells per graph, at least 16.

    Returns
    -------
    float
        A value that is attained by an explicit pair of parameter
        representations, hence never below the true distance, and exceeds it
        by at most :func:`m1_mesh`.  Doubling ``N`` never increases it.
    """
    if N < 16:
        raise ValueError("grid size N must be at least 16")
    x, y = _common_horizon(x, y)
    P, _ = graph_samples(x, N)
    Q, _ = graph_samples(y, N)
    return float(_frechet_linf(P, Q))


def m1_mesh(x: CadlagPath, y: CadlagPath, N: int = 128) -> float:
    """Arc-length spacing of the M1 solver for the pair ``(x, y)``."""
    x, y = _common_horizon(x, y)
    lx = completed_graph(x).arc_positions()[-1]
    ly = completed_graph(y).arc_positions()[-1]
    return max(lx, ly) / N


def m1_distance_matrix(paths: Sequence[CadlagPath], N: int = 128, others: Sequence[CadlagPath] | None = None) -> np.ndarray:
    """Pairwise M1 distances; symmetric with zero diagonal when ``others`` is None."""
    T = max(p.T for p in list(paths) + list(others or []))
    A = [graph_samples(p.with_horizon(T), N)[0] for p in paths]
    if others is None:
        n = len(A)
        D = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                D[i, j] = D[j, i] = _frechet_linf(A[i], A[j])
        return D
    B = [graph_samples(p.with_horizon(T), N)[0] for p in others]
    D = np.empty((len(A), len(B)))
    for i, a in enumerate(A):
        for j, b in enumerate(B):
            D[i, j] = _frechet_linf(a, b)
    return D


# -- oscillation functionals ---------------------------------------------------


def _window_points(x: CadlagPath, a: float, b: float) -> np.ndarray:
    """Values whose supremum structure over ``[a, b]`` determines the oscillation."""
    t, v, left = x.breakpoints, x.values, x.left_limits
    pts = [x.sample([a, b])]
    inside = (t >= a) & (t <= b)
    pts.append(v[inside])
    inner = (t > a) & (t <= b)
    pts.append(left[inner])
    return np.vstack(pts)


def oscillation(x: CadlagPath, t: float, delta: float) -> float:
    """Oscillation of ``x`` on the window ``[0 v (t - delta), (t + delta) ^ T]``."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    a, b = max(0.0, t - delta), min(x.T, t + delta)
    pts = _window_points(x, a, b)
    if x.d == 1:
        return float(pts.max() - pts.min())
    diff = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diff**2).sum(axis=2)).max())


def _candidates(x: CadlagPath, delta: float, resolution: float | None, upto: float | None = None):
    """Time-ordered points carrying the suprema of the segment functionals.

    Each breakpoint contributes its left limit (approached from the left)
    followed by its right value.  Linear pieces are refined so that the
    suprema over interior times are resolved to ``resolution``.
    """
    t, v, left = x.breakpoints, x.values, x.left_limits
    T = x.T if upto is None else min(x.T, upto)
    h = delta / 16.0 if resolution is None else resolution
    extra = [np.array([T])]
    shifted = np.concatenate([t - 2 * delta, t + 2 * delta])
    extra.append(shifted[(shifted > 0) & (shifted < T)])
    if x.kind != CONSTANT:
        dv = np.abs(left[1:] - v[:-1]).max(axis=1)
        for i in np.flatnonzero(dv > 0):
            lo, hi = t[i], t[i + 1]
            k = int(math.ceil((hi - lo) / h))
            if k > 1:
                extra.append(np.linspace(lo, hi, k + 1)[1:-1])
    ext = np.unique(np.concatenate(extra))
    ext = ext[(ext <= T) & ~np.isin(ext, t)]
    keep_t = t <= T
    # (time, order, value): left limits sort before right values at a breakpoint
    times = np.concatenate([t[keep_t][1:], t[keep_t], ext])
    order = np.concatenate([np.zeros(keep_t.sum() - 1), np.ones(keep_t.sum()), np.ones(ext.size)])
    vals = np.vstack([left[keep_t][1:], v[keep_t], x.sample(ext)])
    idx = np.lexsort((order, times))
    return times[idx], vals[idx]


@njit(cache=True)
def _ws_scalar(times, vals, span):
    best = 0.0
    n = times.size
    for i in range(n):
        xi = vals[i]
        hi = -np.inf
        lo = np.inf
        for k in range(i + 1, n):
            if times[k] - times[i] > span:
                break
            xk = vals[k]
            if k > i + 1:
                m = max(xi, xk)
                w = min(xi, xk)
                dd = max(hi - m, w - lo)
                if dd > best:
                    best = dd
            if xk > hi:
                hi = xk
            if xk < lo:
                lo = xk
    return best


@njit(cache=True)
def _seg_dist(p, a, b):
    d = p.size
    ab2 = 0.0
    ap_ab = 0.0
    for c in range(d):
        ab = b[c] - a[c]
        ab2 += ab * ab
        ap_ab += (p[c] - a[c]) * ab
    lam = 0.0
    if ab2 > 0.0:
        lam = min(1.0, max(0.0, ap_ab / ab2))
    s = 0.0
    for c in range(d):
        r = p[c] - (a[c] + lam * (b[c] - a[c]))
        s += r * r
    return np.sqrt(s)


@njit(cache=True)
def _ws_general(times, vals, span):
    best = 0.0
    n = times.size
    for i in range(n):
        for k in range(i + 2, n):
            if times[k] - times[i] > span:
                break
            for j in range(i + 1, k):
                dd = _seg_dist(vals[j], vals[i], vals[k])
                if dd > best:
                    best = dd
    return best


def strong_m1_oscillation(x: CadlagPath, delta: float, resolution: float | None = None) -> float:
    """Strong M1 oscillation ``w_s(x, delta)``, the sup over ``t`` of the local one.

    The supremum over ``t`` of windows of half-width ``delta`` is the
    supremum over triples ``t1 < t2 < t3`` with ``t3 - t1 <= 2 delta``.
    Exact for piecewise-constant paths; linear pieces are refined to
    ``resolution`` (default ``delta / 16``).  Suprema are taken over the
    closure, so a left limit counts as an attained value.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    times, vals = _candidates(x, delta, resolution)
    if x.d == 1:
        return float(max(0.0, _ws_scalar(times, vals[:, 0].copy(), 2 * delta)))
    return float(_ws_general(times, np.ascontiguousarray(vals), 2 * delta))


def _initial_segment_term(x: CadlagPath, delta: float, resolution: float | None) -> float:
    times, vals = _candidates(x, delta, resolution, upto=delta)
    keep = times <= min(delta, x.T)
    vals = vals[keep]
    zero = np.zeros(x.d)
    best = 0.0
    if x.d == 1:
        z = vals[:, 0]
        for k in range(1, z.size):
            s = z[:k]
            hi, lo = max(0.0, z[k]), min(0.0, z[k])
            best = max(best, float(np.max(s)) - hi, lo - float(np.min(s)))
        return best
    for k in range(1, vals.shape[0]):
        for i in range(k):
            best = max(best, segment_distance(vals[i], zero, vals[k]))
    return best


def modified_oscillation(x: CadlagPath, delta: float, resolution: float | None = None) -> float:
    """``w_s(x, delta)`` plus the distance of early values to the segment ``[0, x_t]``."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return strong_m1_oscillation(x, delta, resolution) + _initial_segment_term(x, delta, resolution)


@dataclass(frozen=True)
class CompactnessReport:
    sup_norm: float
    deltas: tuple[float, ...]
    oscillations: tuple[float, ...]
    consistent: bool
    tol: float

    @property
    def verdict(self) -> str:
        return "compactness-consistent" if self.consistent else "compactness-inconsistent"


def compactness_diagnostic(
    paths: Iterable[CadlagPath],
    deltas: Sequence[float] = (0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001),
    tol: float = 0.05,
    resolution: float | None = None,
) -> CompactnessReport:
    """Uniform boundedness and modified-oscillation profile of a family.

    For each ``delta`` the family supremum of the modified oscillation is
    reported.  The family is judged compactness-consistent when the sup-norm
    is finite, the profile is nonincreasing as ``delta`` decreases (to
    ``1e-9``) and its last entry is at most ``tol``.
    """
    paths = list(paths)
    if not paths:
        raise ValueError("empty family")
    deltas = tuple(float(d) for d in deltas)
    if any(b >= a for a, b in zip(deltas, deltas[1:])) or deltas[-1] <= 0:
        raise ValueError("delta schedule must be positive and strictly decreasing")
    sup = float(max(p.sup_norm() for p in paths))
    row = tuple(float(max(modified_oscillation(p, d, resolution) for p in paths)) for d in deltas)
    monotone = all(b <= a + 1e-9 for a, b in zip(row, row[1:]))
    ok = bool(math.isfinite(sup) and monotone and row[-1] <= tol)
    return CompactnessReport(sup, deltas, row, ok, tol)


# -- uniform and L^alpha distances -----------------------------------------------


def _diff_nodes(x: CadlagPath, y: CadlagPath):
    if x.T != y.T:
        raise ValueError("paths must share the horizon")
    if x.d != y.d:
        raise ValueError("dimension mismatch")
    t = np.union1d(x.breakpoints, y.breakpoints)
    t = np.union1d(t, [x.T])
    right = x.sample(t) - y.sample(t)
    left = np.vstack([x.left_limit(s) - y.left_limit(s) for s in t])
    return t, right, left


def uniform_distance(x: CadlagPath, y: CadlagPath) -> float:
    """``sup_t |x_t - y_t|`` over ``[0, T]``, exact."""
    _, right, left = _diff_nodes(x, y)
    return float(max(np.linalg.norm(right, axis=1).max(), np.linalg.norm(left[1:], axis=1).max(initial=0.0)))


def _int_abs_linear(a: float, b: float, length: float, alpha: float) -> float:
    # integral over [0, length] of |a + (b - a) s / length|^alpha
    if a == b:
        return abs(a) ** alpha * length
    if a * b < 0:
        r = length * a / (a - b)
        return _int_abs_linear(a, 0.0, r, alpha) + _int_abs_linear(0.0, b, length - r, alpha)
    return length * (abs(b) ** (alpha + 1) - abs(a) ** (alpha + 1)) / ((alpha + 1) * (abs(b) - abs(a)))


def lp_distance(x: CadlagPath, y: CadlagPath, alpha: float = 1.0) -> float:
    """``(int_0^T |x_t - y_t|^alpha dt)^(1/alpha)``, exact for scalar paths."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    t, right, left = _diff_nodes(x, y)
    total = 0.0
    for k in range(t.size - 1):
        length = t[k + 1] - t[k]
        a, b = right[k], left[k + 1]
        if x.d == 1:
            total += _int_abs_linear(float(a[0]), float(b[0]), length, alpha)
        else:
            from scipy.integrate import quad

            total += quad(lambda s: float(np.linalg.norm(a + (b - a) * s)) ** alpha, 0.0, 1.0)[0] * length
    return total ** (1.0 / alpha)


# -- serialization -----------------------------------------------------------------


def path_to_json(x: CadlagPath) -> dict:
    out = {
        "T": x.T,
        "d": x.d,
        "kind": x.kind,
        "breakpoints": x.breakpoints.tolist(),
        "values": x.values.tolist(),
    }
    if x.kind == LINEAR_CADLAG:
        out["left_limits"] = x.left_limits.tolist()
    return out


def path_from_json(obj: dict | str) -> CadlagPath:
    if isinstance(obj, str):
        obj = json.loads(obj)
    missing = {"T", "d", "kind", "breakpoints", "values"} - set(obj)
    if missing:
        raise ValueError(f"path JSON is missing {sorted(missing)}")
    values = np.asarray(obj["values"], dtype=float)
    if values.size and values.reshape(len(obj["breakpoints"]), -1).shape[1] != int(obj["d"]):
        raise ValueError("values do not match the declared dimension")
    values = values.reshape(len(obj["breakpoints"]), int(obj["d"])) if values.size else np.zeros((0, int(obj["d"])))
    return CadlagPath(obj["breakpoints"], values, obj["T"], obj["kind"], obj.get("left_limits"))


def load_paths(path) -> dict[str, CadlagPath]:
    """Read one path object, a list of them, or an ``{id: path}`` mapping from a JSON file."""
    from pathlib import Path

    p = Path(path)
    obj = json.loads(p.read_text(encoding="utf-8"))
    if isinstance(obj, list):
        return {f"{p.stem}[{i}]": path_from_json(o) for i, o in enumerate(obj)}
    if "breakpoints" in obj:
        return {p.stem: path_from_json(obj)}
    return {str(k): path_from_json(o) for k, o in obj.items()}
