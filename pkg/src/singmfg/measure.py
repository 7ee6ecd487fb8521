"""Finite-support measures and exact optimal transport.

Transport between equal-size uniform empirical measures is an assignment
problem and is solved exactly with :func:`scipy.optimize.linear_sum_assignment`.
Rational weights are reduced to that case by replicating atoms; anything else
falls back to the transport linear program.
"""

from __future__ import annotations

import csv
import json
import itertools
import math
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog

from .cadlag import LINEAR_CADLAG, CadlagPath, m1_distance_matrix

__all__ = [
    "EmpiricalMeasure",
    "EmpiricalPathMeasure",
    "wasserstein_p",
    "wasserstein_1d",
    "transport_cost_matrix",
    "path_wasserstein",
    "relaxed_metric",
    "measure_to_json",
    "measure_from_json",
    "write_distance_rows",
]

WEIGHT_TOL = 1e-12
REPLICATION_CAP = 512
# up to this size every permutation is scored, so float ties resolve exactly
ENUMERATION_MAX = 7
N_TAIL = 50


class EmpiricalMeasure:
    """Weighted finite collection of atoms.

    Parameters
    ----------
    atoms : array_like or sequence
        Points of ``R^d`` (an ``(n,)`` or ``(n, d)`` array) or arbitrary
        objects such as paths when a ground metric is supplied to the
        transport routines.
    weights : array_like, optional
        Nonnegative weights summing to one; uniform by default.
    """

    def __init__(self, atoms, weights=None):
        first = atoms[0] if len(atoms) else 0.0
        if isinstance(atoms, np.ndarray) or np.isscalar(first) or isinstance(first, (list, tuple, np.ndarray)):
            arr = np.asarray(atoms, dtype=float)
            if arr.ndim == 1:
                arr = arr[:, None]
            self.atoms = arr
        else:
            self.atoms = list(atoms)
        n = len(self.atoms)
        if n == 0:
            raise ValueError("a measure needs at least one atom")
        w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != (n,) or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be nonnegative, finite and one per atom")
        if abs(math.fsum(w) - 1.0) > WEIGHT_TOL:
            raise ValueError("weights must sum to 1")
        self.weights = w

    def __len__(self):
        return len(self.atoms)

    @property
    def is_array(self) -> bool:
        return isinstance(self.atoms, np.ndarray)

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))

    def moment(self, p: float) -> float:
        if not self.is_array:
            raise TypeError("moments need array atoms")
        return float(self.weights @ (np.linalg.norm(self.atoms, axis=1) ** p))


def transport_cost_matrix(mu: EmpiricalMeasure, nu: EmpiricalMeasure, ground: Callable | None = None) -> np.ndarray:
    if ground is None:
        if not (mu.is_array and nu.is_array):
            raise TypeError("non-array atoms need a ground metric")
        if mu.atoms.shape[1] != nu.atoms.shape[1]:
            raise ValueError("measures live in spaces of different dimension")
        diff = mu.atoms[:, None, :] - nu.atoms[None, :, :]
        return np.sqrt((diff**2).sum(axis=2))
    return np.array([[float(ground(a, b)) for b in nu.atoms] for a in mu.atoms])


def _integer_counts(w: np.ndarray, cap: int) -> tuple[np.ndarray, int] | None:
    fr = [Fraction(float(x)).limit_denominator(cap) for x in w]
    den = math.lcm(*(f.denominator for f in fr))
    if den > cap:
        return None
    counts = np.array([int(f * den) for f in fr])
    if counts.sum() != den or np.max(np.abs(counts / den - w)) > WEIGHT_TOL:
        return None
    return counts, den


def _exact_total(Cp: np.ndarray, perm) -> float:
    return math.fsum(Cp[np.arange(len(perm)), perm].tolist())


def _assignment_value(C: np.ndarray, p: float) -> float:
    # Optimal matchings that tie in real arithmetic can differ by an ulp once
    # summed, so the reported value is the smallest exactly rounded total.
    Cp = C**p
    n = Cp.shape[0]
    if n <= ENUMERATION_MAX:
        perms = np.array(list(itertools.permutations(range(n))))
        sums = Cp[np.arange(n), perms].sum(axis=1)
        near = perms[sums <= sums.min() * (1 + 1e-12) + 1e-300]
        total = min(_exact_total(Cp, q) for q in near)
    else:
        total = _exact_total(Cp, linear_sum_assignment(Cp)[1])
    return (total / n) ** (1.0 / p)


def _lp_value(C: np.ndarray, a: np.ndarray, b: np.ndarray, p: float) -> float:
    n, m = C.shape
    A_eq = np.zeros((n + m, n * m))
    for i in range(n):
        A_eq[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        A_eq[n + j, j::m] = 1.0
    res = linprog((C**p).ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport linear program failed: {res.message}")
    return max(0.0, float(res.fun)) ** (1.0 / p)


def wasserstein_p(
    mu: EmpiricalMeasure,
    nu: EmpiricalMeasure,
    ground: Callable | None = None,
    p: float = 1.0,
    cap: int = REPLICATION_CAP,
    cost: np.ndarray | None = None,
) -> float:
    """Exact ``p``-Wasserstein distance between two finite measures.

    Parameters
    ----------
    mu, nu : EmpiricalMeasure
    ground : callable, optional
        Ground metric ``ground(a, b)``; Euclidean on array atoms by default.
    p : float
        Order, at least 1.
    cap : int
        Largest replicated ensemble size used to turn rational weights into
        an assignment problem.
    cost : ndarray, optional
        Precomputed ground-distance matrix, overrides ``ground``.

    Returns
    -------
    float
        For uniform measures of equal size this is
        ``(min_pi sum_i ground(x_i, y_pi(i))^p / n)^(1/p)``, with the optimal
        sum accumulated exactly.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    C = transport_cost_matrix(mu, nu, ground) if cost is None else np.asarray(cost, dtype=float)
    if C.shape != (len(mu), len(nu)):
        raise ValueError("cost matrix does not match the measures")
    if len(mu) == len(nu) and mu.is_uniform and nu.is_uniform:
        return _assignment_value(C, p)
    ca = _integer_counts(mu.weights, cap)
    cb = _integer_counts(nu.weights, cap)
    if ca is not None and cb is not None:
        den = math.lcm(ca[1], cb[1])
        if den <= cap:
            ra = np.repeat(np.arange(len(mu)), ca[0] * (den // ca[1]))
            rb = np.repeat(np.arange(len(nu)), cb[0] * (den // cb[1]))
            return _assignment_value(C[np.ix_(ra, rb)], p)
    return _lp_value(C, mu.weights, nu.weights, p)


def wasserstein_1d(a, b, p: float = 1.0, wa=None, wb=None) -> float:
    """Exact ``W_p`` between weighted measures on the line via quantile functions."""
    if p < 1:
        raise ValueError("p must be at least 1")
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    wa = np.full(a.size, 1.0 / a.size) if wa is None else np.asarray(wa, dtype=float)
    wb = np.full(b.size, 1.0 / b.size) if wb is None else np.asarray(wb, dtype=float)
    ia, ib = np.argsort(a, kind="stable"), np.argsort(b, kind="stable")
    a, wa, b, wb = a[ia], wa[ia], b[ib], wb[ib]
    ca = np.cumsum(wa)
    cb = np.cumsum(wb)
    ca /= ca[-1]
    cb /= cb[-1]
    levels = np.union1d(ca, cb)
    lo = np.concatenate([[0.0], levels[:-1]])
    mid = 0.5 * (lo + levels)
    qa = a[np.minimum(np.searchsorted(ca, mid), a.size - 1)]
    qb = b[np.minimum(np.searchsorted(cb, mid), b.size - 1)]
    return float(np.dot(levels - lo, np.abs(qa - qb) ** p)) ** (1.0 / p)


class EmpiricalPathMeasure:
    """Weighted ensemble of scalar paths stored on a common time grid.

    Each path is linear on every grid cell ``[t_k, t_{k+1})`` from
    ``values[:, k]`` to ``left[:, k + 1]``, vanishes before 0 and is frozen
    after the last grid time.

    Parameters
    ----------
    times : array_like
        Grid ``0 = t_0 < ... < t_K = T``.
    values : array_like
        Right values, shape ``(n, K + 1)``.
    left : array_like, optional
        Left limits, same shape; ``left[:, 0]`` is 0.  Defaults to the
        continuous interpolation of ``values`` (with an initial jump).
    weights : array_like, optional
        Uniform by default.
    """

    def __init__(self, times, values, left=None, weights=None):
        t = np.asarray(times, dtype=float)
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v[None, :]
        if t.ndim != 1 or t.size < 2 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValueError("time grid must start at 0 and increase strictly")
        if v.shape[1] != t.size or v.shape[0] == 0:
            raise ValueError("values must be (n_paths, n_times)")
        if left is None:
            left = np.empty_like(v)
            left[:, 0] = 0.0
            left[:, 1:] = v[:, 1:]
        left = np.asarray(left, dtype=float)
        if left.shape != v.shape:
            raise ValueError("left limits must match values")
        n = v.shape[0]
        w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != (n,) or np.any(w < 0) or abs(math.fsum(w) - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")
        self.times = t
        self.values = v
        self.left = left
        self.weights = w

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    def __len__(self):
        return self.n_paths

    @classmethod
    def from_paths(cls, paths: Sequence[CadlagPath], times=None, weights=None) -> "EmpiricalPathMeasure":
        """Store scalar paths on a grid containing every breakpoint."""
        paths = list(paths)
        if not paths:
            raise ValueError("empty ensemble")
        if any(x.d != 1 for x in paths):
            raise ValueError("path measures are scalar")
        T = paths[0].T
        if any(x.T != T for x in paths):
            raise ValueError("all paths must share the horizon")
        grid = np.unique(np.concatenate([x.breakpoints for x in paths] + [[0.0, T]]))
        if times is not None:
            grid = np.union1d(grid, np.asarray(times, dtype=float))
        vals = np.vstack([x.sample(grid)[:, 0] for x in paths])
        left = np.vstack([[x.left_limit(s)[0] for s in grid] for x in paths])
        return cls(grid, vals, left, weights)

    def path(self, i: int) -> CadlagPath:
        return CadlagPath(self.times, self.values[i], self.T, LINEAR_CADLAG, self.left[i])

    def paths(self) -> list[CadlagPath]:
        return [self.path(i) for i in range(self.n_paths)]

    def time_index(self, t: float) -> int | None:
        k = int(np.searchsorted(self.times, t))
        if k < self.times.size and self.times[k] == t:
            return k
        return None

    def sample(self, t: float) -> np.ndarray:
        """Values ``x_t`` of every path."""
        if t < 0:
            return np.zeros(self.n_paths)
        if t >= self.T:
            return self.values[:, -1].copy()
        k = self.time_index(t)
        if k is not None:
            return self.values[:, k].copy()
        k = int(np.searchsorted(self.times, t)) - 1
        frac = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        return self.values[:, k] + (self.left[:, k + 1] - self.values[:, k]) * frac

    def marginal(self, t: float) -> EmpiricalMeasure:
        """Law of ``x_t`` with the ensemble weights."""
        return EmpiricalMeasure(self.sample(t), self.weights)

    def moments(self, p: float) -> tuple[np.ndarray, np.ndarray]:
        """Mean and ``p``-th absolute moment of every grid marginal."""
        mean = self.weights @ self.values
        pm = self.weights @ (np.abs(self.values) ** p)
        return mean, pm

    def mix(self, other: "EmpiricalPathMeasure", lam: float) -> "EmpiricalPathMeasure":
        """Pooled ensemble standing for ``(1 - lam) self + lam other``."""
        if not 0.0 <= lam <= 1.0:
            raise ValueError("mixing weight must lie in [0, 1]")
        if not np.array_equal(self.times, other.times):
            raise ValueError("pooled ensembles must share the time grid")
        if lam == 1.0:
            return other
        if lam == 0.0:
            return self
        w = np.concatenate([(1.0 - lam) * self.weights, lam * other.weights])
        return EmpiricalPathMeasure(
            self.times,
            np.vstack([self.values, other.values]),
            np.vstack([self.left, other.left]),
            w / math.fsum(w),
        )

    def subsample(self, n: int, seed: int = 0) -> "EmpiricalPathMeasure":
        """``n`` paths drawn by systematic resampling, uniform weights."""
        if n >= self.n_paths and self.is_uniform:
            return self
        rng = np.random.Generator(np.random.Philox(key=[seed, 2**32 - 1]))
        cw = np.cumsum(self.weights)
        u = (rng.random() + np.arange(n)) / n
        idx = np.minimum(np.searchsorted(cw / cw[-1], u), self.n_paths - 1)
        return EmpiricalPathMeasure(self.times, self.values[idx], self.left[idx])

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))

    def marginal_gap(self, other: "EmpiricalPathMeasure", p: float = 1.0) -> float:
        """``max_k W_p`` between the marginals at the shared grid times."""
        if not np.array_equal(self.times, other.times):
            raise ValueError("ensembles must share the time grid")
        return max(
            wasserstein_1d(self.values[:, k], other.values[:, k], p, self.weights, other.weights)
            for k in range(self.times.size)
        )

    def to_rows(self) -> list[tuple[int, float, float]]:
        return [(i, float(t), float(x)) for i in range(self.n_paths) for t, x in zip(self.times, self.values[i])]


def path_wasserstein(mu: EmpiricalPathMeasure, nu: EmpiricalPathMeasure, p: float = 1.0, N: int = 128) -> float:
    """``W_p`` on path space with the M1 ground metric computed at grid ``N``."""
    D = m1_distance_matrix(mu.paths(), N, nu.paths())
    return wasserstein_p(EmpiricalMeasure(np.zeros(len(mu)), mu.weights), EmpiricalMeasure(np.zeros(len(nu)), nu.weights), p=p, cost=D)


def relaxed_metric(q1, q2, p: float = 1.0, n_tail: int = N_TAIL) -> float:
    """Distance between two relaxed controls on a common grid.

    The main term transports the normalised measures ``q / T`` on
    ``[0, T] x U`` discretised to atoms (cell midpoint, control) with the
    ground metric ``max(|t1 - t2| / T, |u1 - u2|)``.  Outside ``[0, T]`` a
    control is ``delta_{u_tail}(du) dt`` so each unit-interval term equals
    the gap between the tail controls; ``n_tail`` terms of the series with
    weights ``2^-(n+1)`` are kept.
    """
    if not (np.array_equal(q1.t_grid, q2.t_grid) and np.array_equal(q1.u_grid, q2.u_grid)):
        raise ValueError("relaxed controls must share the time and control grids")
    t = q1.t_grid
    T = t[-1] - t[0]
    mid = 0.5 * (t[:-1] + t[1:])
    dt = np.diff(t) / T
    J = q1.u_grid.size
    tt = np.repeat(mid, J)
    uu = np.tile(q1.u_grid, mid.size)
    w1 = (q1.weights * dt[:, None]).ravel()
    w2 = (q2.weights * dt[:, None]).ravel()
    C = np.maximum(np.abs(tt[:, None] - tt[None, :]) / T, np.abs(uu[:, None] - uu[None, :]))
    k1, k2 = w1 > 0, w2 > 0
    w1, w2 = w1[k1] / w1[k1].sum(), w2[k2] / w2[k2].sum()
    mu = EmpiricalMeasure(np.zeros(w1.size), w1)
    nu = EmpiricalMeasure(np.zeros(w2.size), w2)
    main = wasserstein_p(mu, nu, p=p, cost=C[np.ix_(k1, k2)])
    tail = math.fsum(2.0 ** -(n + 1) * (abs(q1.u_tail0 - q2.u_tail0) + abs(q1.u_tailT - q2.u_tailT)) for n in range(n_tail))
    return main + tail


# -- io ------------------------------------------------------------------------


def measure_to_json(mu: EmpiricalMeasure) -> dict:
    if not mu.is_array:
        raise TypeError("only array measures serialise")
    return {"atoms": mu.atoms.tolist(), "weights": mu.weights.tolist()}


def measure_from_json(obj: dict | str) -> EmpiricalMeasure:
    if isinstance(obj, str):
        obj = json.loads(obj)
    if set(obj) - {"atoms", "weights"} or "atoms" not in obj:
        raise ValueError("measure JSON needs 'atoms' and optional 'weights' only")
    return EmpiricalMeasure(obj["atoms"], obj.get("weights"))


def write_distance_rows(path, rows: Sequence[tuple]) -> None:
    """CSV rows ``(id1, id2, p, value, ground, grid)``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id1", "id2", "p", "value", "ground", "grid"])
        for r in rows:
            w.writerow([r[0], r[1], r[2], repr(float(r[3])), r[4], r[5]])
