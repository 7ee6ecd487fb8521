"""Controlled state dynamics, costs, decomposition and martingale diagnostics.

The state solves ``dX = b dt + sigma dW + c(t) dZ`` with ``X_{0-} = 0``.
Relaxed controls enter through the aggregated coefficients
``bbar = sum_j w_j b(., u_j)`` and ``abar = sum_j w_j sigma(., u_j)^2``, which
is all the generator of the martingale problem sees.  The measure argument
of the coefficients is reduced to a pair of moments of the marginal.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .cadlag import LINEAR, CadlagPath
from .control import RelaxedControlGrid, SingularControl, singular_increments, singular_integral
from .measure import EmpiricalPathMeasure, wasserstein_1d

__all__ = [
    "Moments",
    "MfgModel",
    "PathEnsemble",
    "TEMPLATES",
    "coefficient",
    "model_from_json",
    "brownian_normals",
    "simulate",
    "path_costs",
    "cost",
    "decompose",
    "recompose",
    "decompose_ensemble",
    "TEST_FUNCTIONS",
    "FUNCTIONALS",
    "martingale_residual",
    "AssumptionReport",
    "validate_assumptions",
]

JUMP_TOL = 1e-9


@dataclass(frozen=True)
class Moments:
    """Moment summary of a marginal: mean and ``p``-th absolute moment."""

    mean: float
    pmoment: float

    @classmethod
    def of(cls, x, p: float, weights=None) -> "Moments":
        x = np.asarray(x, dtype=float)
        w = np.full(x.size, 1.0 / x.size) if weights is None else np.asarray(weights)
        return cls(float(w @ x), float(w @ np.abs(x) ** p))


# -- coefficient catalog ---------------------------------------------------------

# (t, x, nu, u) -> array; the measure enters only through Moments
Coef = Callable[[float, np.ndarray, Moments, float], np.ndarray]

_LINEAR_KEYS = {"c0", "cx", "cu", "cm", "ct", "cp", "cap"}
TEMPLATES = {
    "constant": {"value"},
    "linear": _LINEAR_KEYS | {"clamp"},
    "quadratic-clamped": _LINEAR_KEYS | {"scale", "clamp"},
}


def _affine(params: Mapping, t, x, nu: Moments, u):
    pm = nu.pmoment if "cap" not in params else min(nu.pmoment, params["cap"])
    return (
        params.get("c0", 0.0)
        + params.get("cx", 0.0) * x
        + params.get("cu", 0.0) * u
        + params.get("cm", 0.0) * nu.mean
        + params.get("ct", 0.0) * t
        + params.get("cp", 0.0) * pm
    )


def _term(spec: Mapping) -> tuple[Coef, bool]:
    name = spec.get("template")
    if name not in TEMPLATES:
        raise ValueError(f"unknown coefficient template {name!r}")
    params = {k: v for k, v in spec.items() if k != "template"}
    extra = set(params) - TEMPLATES[name]
    if extra:
        raise ValueError(f"template {name!r} does not take {sorted(extra)}")
    uses_measure = bool(params.get("cm", 0.0) or params.get("cp", 0.0))
    clamp = params.get("clamp")
    if name == "constant":
        value = float(params.get("value", 0.0))
        return (lambda t, x, nu, u: np.full(np.shape(x), value)), False
    if name == "linear":
        def fn(t, x, nu, u):
            out = np.asarray(_affine(params, t, x, nu, u), dtype=float)
            return np.clip(out, clamp[0], clamp[1]) if clamp else out
        return fn, uses_measure
    scale = float(params.get("scale", 1.0))

    # a number caps the square from above, a pair clips it to [lo, hi]
    if clamp is not None and not isinstance(clamp, (int, float)):
        if len(clamp) != 2:
            raise ValueError("clamp must be a number or a [lo, hi] pair")
        lo, hi = float(clamp[0]), float(clamp[1])
    elif clamp is not None:
        lo, hi = -math.inf, float(clamp)

    def quad(t, x, nu, u):
        out = scale * np.asarray(_affine(params, t, x, nu, u), dtype=float) ** 2
        return np.clip(out, lo, hi) if clamp is not None else out

    return quad, uses_measure


def coefficient(spec) -> tuple[Coef, bool]:
    """Build ``(fn, uses_measure)`` from a catalog spec.

    A spec is a number, one template object such as
    ``{"template": "linear", "cu": 1.0, "clamp": [-1, 1]}``, or a list of
    them that are summed.
    """
    if isinstance(spec, (int, float)):
        value = float(spec)
        return (lambda t, x, nu, u: np.full(np.shape(x), value)), False
    if isinstance(spec, Mapping):
        return _term(spec)
    if isinstance(spec, Sequence) and not isinstance(spec, str):
        terms = [coefficient(s) for s in spec]

        def total(t, x, nu, u):
            return sum(fn(t, x, nu, u) for fn, _ in terms)

        return total, any(m for _, m in terms)
    raise ValueError(f"bad coefficient spec {spec!r}")


def _default_L(r1: float, r2: float) -> float:
    return r1 + r2


@dataclass
class MfgModel:
    """Coefficients, control set and constants of a singular-control MFG.

    ``b``, ``sigma`` and ``f`` have signature ``(t, x, nu, u)``, ``g`` is
    ``(x, nu)``, ``c`` and ``h`` are functions of time.  ``x`` is an array of
    states and ``nu`` a :class:`Moments` instance.

    ``uses_measure`` records whether any coefficient depends on ``nu``;
    ``None`` means unknown (arbitrary callables).
    """

    b: Callable = lambda t, x, nu, u: np.zeros(np.shape(x))
    sigma: Callable = lambda t, x, nu, u: np.zeros(np.shape(x))
    c: Callable[[float], float] = lambda t: 1.0
    f: Callable = lambda t, x, nu, u: np.zeros(np.shape(x))
    g: Callable = lambda x, nu: np.zeros(np.shape(x))
    h: Callable[[float], float] = lambda t: 0.0
    U: tuple[float, float] = (-1.0, 1.0)
    T: float = 1.0
    epsilon: float | None = None
    p: float = 1.0
    p_bar: float = 2.0
    C1: float = 1.0
    C2: float = 1.0
    C3: float = 1.0
    C4: float = 1.0
    C5: float = 1.0
    L: Callable[[float, float], float] = _default_L
    uses_measure: bool | None = None
    name: str = "model"
    spec: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.epsilon is None:
            self.epsilon = 0.25 * self.T
        if not self.T > 0 or not self.epsilon > 0:
            raise ValueError("T and epsilon must be positive")
        if not self.p_bar > self.p >= 1:
            raise ValueError("exponents need p_bar > p >= 1")
        lo, hi = self.U
        if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
            raise ValueError("U must be a bounded interval")

    def without_terminal_costs(self) -> "MfgModel":
        """Copy with ``g = h = 0``, the setting of the smoothed problems."""
        from dataclasses import replace

        spec = None
        if self.spec is not None:
            spec = dict(self.spec, g=0.0, h=0.0)
        return replace(self, g=lambda x, nu: np.zeros(np.shape(x)), h=lambda t: 0.0, spec=spec)


_MODEL_KEYS = {"name", "b", "sigma", "c", "f", "g", "h", "U", "T", "epsilon", "p", "p_bar", "constants"}


def model_from_json(obj: Mapping | str) -> MfgModel:
    """Model from a catalog config; no code is evaluated."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    extra = set(obj) - _MODEL_KEYS
    if extra:
        raise ValueError(f"unknown model keys {sorted(extra)}")
    kw: dict = {}
    flags = []
    for key in ("b", "sigma", "f"):
        if key in obj:
            fn, m = coefficient(obj[key])
            kw[key] = fn
            flags.append(m)
    if "g" in obj:
        fn, m = coefficient(obj["g"])
        kw["g"] = lambda x, nu, fn=fn: fn(0.0, x, nu, 0.0)
        flags.append(m)
    for key in ("c", "h"):
        if key in obj:
            fn, _ = coefficient(obj[key])
            kw[key] = lambda t, fn=fn: float(fn(t, 0.0, Moments(0.0, 0.0), 0.0))
    for key in ("T", "epsilon", "p", "p_bar"):
        if key in obj:
            kw[key] = float(obj[key])
    if "U" in obj:
        kw["U"] = (float(obj["U"][0]), float(obj["U"][1]))
    consts = obj.get("constants", {})
    bad = set(consts) - {"C1", "C2", "C3", "C4", "C5"}
    if bad:
        raise ValueError(f"unknown constants {sorted(bad)}")
    kw.update({k: float(v) for k, v in consts.items()})
    return MfgModel(**kw, uses_measure=any(flags), name=str(obj.get("name", "model")), spec=dict(obj))


# -- simulation ------------------------------------------------------------------


def brownian_normals(seed: int, n_paths: int, n_steps: int, first: int = 0) -> np.ndarray:
    """Standard normals from one Philox stream per path, keyed by ``(seed, index)``."""
    out = np.empty((n_paths, n_steps))
    for i in range(n_paths):
        key = np.array([seed, first + i], dtype=np.uint64)
        out[i] = np.random.Generator(np.random.Philox(key=key)).standard_normal(n_steps)
    return out


@dataclass
class PathEnsemble:
    """Simulated states on a common grid.

    ``X`` holds right values; left limits differ from them only at the grid
    indices ``jump_index`` where the singular control jumps, and are stored
    there in ``X_left_at_jumps``.
    """

    times: np.ndarray
    X: np.ndarray
    jump_index: np.ndarray
    X_left_at_jumps: np.ndarray
    mean: np.ndarray
    pmoment: np.ndarray
    Q: RelaxedControlGrid
    Z: SingularControl
    seed: int
    S: np.ndarray
    S_left: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.X.shape[0]

    @property
    def left(self) -> np.ndarray:
        out = self.X.copy()
        out[:, 0] = 0.0
        if self.jump_index.size:
            out[:, self.jump_index] = self.X_left_at_jumps
        return out

    def measure(self) -> EmpiricalPathMeasure:
        return EmpiricalPathMeasure(self.times, self.X, self.left)

    def path(self, i: int) -> CadlagPath:
        return self.measure().path(i)

    def moments_at(self, k: int) -> Moments:
        return Moments(float(self.mean[k]), float(self.pmoment[k]))

    def index_of(self, t: float) -> int:
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return max(0, min(k, self.times.size - 1))


def _control_mix(Q: RelaxedControlGrid, times: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    cells = Q.cell_index(times)
    K = Q.weights.shape[0]
    cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    out = []
    for k in cells:
        k = int(k)
        if k not in cache:
            if k < 0:
                cache[k] = (np.array([Q.u_tail0]), np.array([1.0]))
            elif k >= K:
                cache[k] = (np.array([Q.u_tailT]), np.array([1.0]))
            else:
                row = Q.weights[k]
                nz = np.flatnonzero(row)
                cache[k] = (Q.u_grid[nz], row[nz])
        out.append(cache[k])
    return out


def _aggregate(fn: Callable, t: float, x: np.ndarray, nu: Moments, mix, square: bool = False) -> np.ndarray:
    us, ws = mix
    acc = np.zeros(x.shape)
    for u, w in zip(us, ws):
        v = np.asarray(fn(t, x, nu, float(u)), dtype=float)
        acc = acc + w * (v * v if square else v)
    return acc


def _measure_moments(mu, times: np.ndarray, p: float) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(mu, EmpiricalPathMeasure):
        if mu.times.size == times.size and np.array_equal(mu.times, times):
            return mu.moments(p)
        vals = np.column_stack([mu.sample(t) for t in times])
        return mu.weights @ vals, mu.weights @ np.abs(vals) ** p
    if isinstance(mu, tuple) and len(mu) == 2:
        return np.asarray(mu[0], dtype=float), np.asarray(mu[1], dtype=float)
    raise TypeError("mu must be an EmpiricalPathMeasure, a (mean, pmoment) pair or None")


def simulation_grid(grid, Z: SingularControl | CadlagPath, T: float | None = None) -> np.ndarray:
    """``grid`` with the jump times of ``Z`` (and ``T`` if given) inserted."""
    grid = np.asarray(grid, dtype=float)
    path = Z.path if isinstance(Z, SingularControl) else Z
    extra = [s for s, _ in path.jumps() if s <= grid[-1]]
    if T is not None and T <= grid[-1]:
        extra.append(T)
    return np.union1d(grid, extra)


def simulate(
    model: MfgModel,
    mu,
    Q: RelaxedControlGrid,
    Z: SingularControl | CadlagPath | None,
    grid,
    n_paths: int,
    seed: int,
    normals: np.ndarray | None = None,
) -> PathEnsemble:
    """Euler-Maruyama paths of the controlled state with aggregated coefficients.

    Parameters
    ----------
    model : MfgModel
    mu : EmpiricalPathMeasure, (mean, pmoment) arrays, or None
        Frozen mean-field flow.  ``None`` runs the interacting particle
        system, taking the moments from the simulated cloud itself.
    Q : RelaxedControlGrid
        Regular control; its tail control is used after its grid ends.
    Z : SingularControl or None
        Deterministic singular control shared by all paths.
    grid : array_like
        Time grid starting at 0; its last point is the horizon.  Jump times
        of ``Z`` are inserted.
    n_paths, seed : int
        Path ``i`` draws its Brownian increments from the Philox stream keyed
        by ``(seed, i)``.
    normals : ndarray, optional
        Precomputed standard normals of shape ``(n_paths, len(grid) - 1)``
        for the final grid, shared across calls for common random numbers.

    Returns
    -------
    PathEnsemble
        States stored as ``X = Y + S`` where ``Y`` is the continuous part and
        ``S`` the singular integral on the grid.
    """
    grid = np.asarray(grid, dtype=float)
    if grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must start at 0 and increase strictly")
    H = float(grid[-1])
    if Z is None:
        Z = SingularControl.zero(H)
    zpath = Z.path if isinstance(Z, SingularControl) else Z
    if zpath.T < H:
        zpath = zpath.with_horizon(H)
    times = simulation_grid(grid, zpath)
    K = times.size - 1
    dt = np.diff(times)
    S, S_left = singular_integral(zpath, model.c, times)
    if normals is None:
        normals = brownian_normals(seed, n_paths, K)
    if normals.shape != (n_paths, K):
        raise ValueError(f"normals must have shape {(n_paths, K)}")
    mixes = _control_mix(Q, times)
    particle = mu is None
    if not particle:
        mean, pmom = _measure_moments(mu, times, model.p)
    else:
        mean, pmom = np.empty(K + 1), np.empty(K + 1)
    X = np.empty((n_paths, K + 1))
    Y = np.zeros(n_paths)
    X[:, 0] = Y + S[0]
    sq = np.sqrt(dt)
    with np.errstate(invalid="ignore", over="ignore"):
        for k in range(K):
            x = X[:, k]
            if particle:
                mean[k] = x.mean()
                pmom[k] = np.mean(np.abs(x) ** model.p)
            nu = Moments(float(mean[k]), float(pmom[k]))
            bbar = _aggregate(model.b, times[k], x, nu, mixes[k])
            abar = _aggregate(model.sigma, times[k], x, nu, mixes[k], square=True)
            Y = Y + bbar * dt[k] + np.sqrt(abar) * (sq[k] * normals[:, k])
            if not np.all(np.isfinite(Y)):
                raise FloatingPointError(f"non-finite coefficient evaluation at t={times[k]:.6g}")
            X[:, k + 1] = Y + S[k + 1]
    if particle:
        mean[K] = X[:, K].mean()
        pmom[K] = np.mean(np.abs(X[:, K]) ** model.p)
    jump_index = np.flatnonzero(S != S_left)
    jump_index = jump_index[jump_index > 0]
    # Y is continuous, so X_{t-} = Y_t + S_{t-}
    Xl = _exact_left(X[:, jump_index], S[jump_index], S_left[jump_index])
    return PathEnsemble(times, X, jump_index, Xl, mean, pmom, Q, Z if isinstance(Z, SingularControl) else SingularControl(Z), seed, S, S_left)


def _exact_left(Xr: np.ndarray, S: np.ndarray, Sl: np.ndarray) -> np.ndarray:
    # left limits Y + S_{t-} with Y recovered so that Y + S reproduces X exactly
    Y = _solve_sum(Xr, S)
    return Y + Sl


def _solve_sum(X: np.ndarray, S: np.ndarray, max_iter: int = 8) -> np.ndarray:
    """``Y`` close to ``X - S`` with ``Y + S == X`` in floating point where attainable."""
    Y = X - S
    for _ in range(max_iter):
        r = X - (Y + S)
        bad = r != 0
        if not np.any(bad):
            break
        Y = np.where(bad, Y + r, Y)
    for _ in range(max_iter):
        R = Y + S
        bad = R != X
        if not np.any(bad):
            break
        Y = np.where(bad, np.nextafter(Y, np.where(R < X, np.inf, -np.inf)), Y)
    return Y


# -- costs -------------------------------------------------------------------------


def path_costs(model: MfgModel, ens: PathEnsemble, horizon: float | None = None) -> np.ndarray:
    """Per-path cost ``int f dQ dt + g(X_T, mu_T) + int h dZ`` on ``[0, T]``.

    The running cost uses the trapezoid rule on every grid cell (with the
    control of the cell at both ends); the singular term is the exact
    Stieltjes sum for step controls.
    """
    T = model.T if horizon is None else horizon
    times = ens.times
    kT = int(np.searchsorted(times, T))
    if kT >= times.size or times[kT] != T:
        raise ValueError("the simulation grid must contain the cost horizon")
    mixes = _control_mix(ens.Q, times)
    left = ens.left
    running = np.zeros(ens.n_paths)
    for k in range(kT):
        dt = times[k + 1] - times[k]
        fa = _aggregate(model.f, times[k], ens.X[:, k], ens.moments_at(k), mixes[k])
        fb = _aggregate(model.f, times[k + 1], left[:, k + 1], ens.moments_at(k + 1), mixes[k])
        running += 0.5 * dt * (fa + fb)
    terminal = np.asarray(model.g(ens.X[:, kT], ens.moments_at(kT)), dtype=float) * np.ones(ens.n_paths)
    zpath = ens.Z.path if ens.Z.path.T >= times[-1] else ens.Z.path.with_horizon(times[-1])
    cont, jump = singular_increments(zpath, model.h, times)
    singular = math.fsum(cont[:kT].tolist()) + math.fsum(jump[: kT + 1].tolist())
    total = running + terminal + singular
    if not np.all(np.isfinite(total)):
        raise FloatingPointError("non-finite cost evaluation")
    return total


def cost(model: MfgModel, ens: PathEnsemble, horizon: float | None = None) -> tuple[float, float]:
    """Monte Carlo cost and its standard error."""
    c = path_costs(model, ens, horizon)
    se = float(c.std(ddof=1) / math.sqrt(c.size)) if c.size > 1 else 0.0
    return float(c.mean()), se


# -- decomposition -------------------------------------------------------------------


def decompose(X: CadlagPath, Z: SingularControl | CadlagPath, c, tol: float = JUMP_TOL) -> CadlagPath:
    """Continuous part ``Y = X - int c dZ`` of a state path.

    The integral is evaluated on the breakpoints of ``X`` with the rule of
    :func:`~singmfg.control.singular_increments`.  ``Y`` is returned as a
    continuous path whose right values satisfy ``Y + S == X`` exactly
    wherever floating point allows it.

    Raises
    ------
    ValueError
        If ``Y`` keeps a jump larger than ``tol``.
    """
    zpath = Z.path if isinstance(Z, SingularControl) else Z
    if zpath.T < X.T:
        zpath = zpath.with_horizon(X.T)
    t = X.breakpoints
    S, Sl = singular_integral(zpath, c, t)
    xr, xl = X.values[:, 0], X.left_limits[:, 0]
    Y = _solve_sum(xr, S)
    Yl = xl - Sl
    gap = np.abs(Y[1:] - Yl[1:])
    worst = float(gap.max()) if gap.size else 0.0
    if worst > tol:
        raise ValueError(f"residual jump {worst:.3g} in the continuous part exceeds {tol:g}")
    return CadlagPath(t, Y, X.T, LINEAR)


def recompose(Y: CadlagPath, Z: SingularControl | CadlagPath, c) -> CadlagPath:
    """``X = Y + int c dZ`` on the breakpoints of ``Y`` (and jump times of ``Z``)."""
    from .cadlag import LINEAR_CADLAG

    zpath = Z.path if isinstance(Z, SingularControl) else Z
    if zpath.T < Y.T:
        zpath = zpath.with_horizon(Y.T)
    t = np.union1d(Y.breakpoints, [s for s, _ in zpath.jumps() if s <= Y.T])
    S, Sl = singular_integral(zpath, c, t)
    y = Y.sample(t)[:, 0]
    left = y + Sl
    left[0] = 0.0
    return CadlagPath(t, y + S, Y.T, LINEAR_CADLAG, left)


def decompose_ensemble(ens: PathEnsemble) -> tuple[np.ndarray, float]:
    """Continuous parts of every simulated path and the largest jump left in them."""
    Y = _solve_sum(ens.X, ens.S[None, :])
    Yl = ens.left - ens.S_left[None, :]
    gap = np.abs(Y[:, 1:] - Yl[:, 1:])
    return Y, float(gap.max()) if gap.size else 0.0


# -- martingale problem diagnostics ---------------------------------------------------


def _tanh(a):
    def phi(x):
        return np.tanh(x / a)

    def d1(x):
        return (1.0 - np.tanh(x / a) ** 2) / a

    def d2(x):
        th = np.tanh(x / a)
        return -2.0 * th * (1.0 - th**2) / a**2

    return phi, d1, d2


def _bump(center):
    def phi(x):
        return np.exp(-0.5 * (x - center) ** 2)

    def d1(x):
        return -(x - center) * phi(x)

    def d2(x):
        return ((x - center) ** 2 - 1.0) * phi(x)

    return phi, d1, d2


TEST_FUNCTIONS = {
    "tanh-0.5": _tanh(0.5),
    "tanh-1": _tanh(1.0),
    "tanh-2": _tanh(2.0),
    "tanh-4": _tanh(4.0),
    "bump@-1": _bump(-1.0),
    "bump@0": _bump(0.0),
    "bump@1": _bump(1.0),
}


def _f_one(X, k):
    return np.ones(X.shape[0])


def _f_clip(X, k):
    return np.clip(X[:, k], -1.0, 1.0)


def _f_clip_max(X, k):
    return np.clip(X[:, : k + 1].max(axis=1), -1.0, 1.0)


FUNCTIONALS = {"one": _f_one, "clip-x": _f_clip, "clip-max": _f_clip_max}


def martingale_residual(
    ens: PathEnsemble,
    phi: str | tuple,
    model: MfgModel,
    s: float,
    t: float,
    F: str | Callable = "one",
) -> tuple[float, float]:
    """Monte Carlo estimate of ``E[(M_t - M_s) F]`` and its standard error.

    ``M`` is the martingale of the controlled martingale problem for the test
    function ``phi``, evaluated on the simulation grid with left-point
    generator integrals, the singular integral against ``X_{t-}`` and the
    jump compensation at the jump times of ``Z``.  ``F`` is evaluated on
    the path up to ``s``.
    """
    fn, d1, d2 = TEST_FUNCTIONS[phi] if isinstance(phi, str) else phi
    Ffn = FUNCTIONALS[F] if isinstance(F, str) else F
    if not s < t:
        raise ValueError("need s < t")
    times = ens.times
    ks, kt = ens.index_of(s), ens.index_of(t)
    zpath = ens.Z.path if ens.Z.path.T >= times[-1] else ens.Z.path.with_horizon(times[-1])
    cont, jump = singular_increments(zpath, model.c, times)
    mixes = _control_mix(ens.Q, times)
    left = ens.left
    X = ens.X
    dM = np.zeros(ens.n_paths)
    for k in range(ks, kt):
        x = X[:, k]
        nu = ens.moments_at(k)
        bbar = _aggregate(model.b, times[k], x, nu, mixes[k])
        abar = _aggregate(model.sigma, times[k], x, nu, mixes[k], square=True)
        gen = bbar * d1(x) + 0.5 * abar * d2(x)
        xl = left[:, k + 1]
        dX = X[:, k + 1] - xl
        dM += (
            (fn(xl) - fn(x))
            - gen * (times[k + 1] - times[k])
            - d1(x) * cont[k]
            - d1(xl) * (jump[k + 1] - dX)
        )
    vals = dM * Ffn(X, ks)
    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    return float(vals.mean()), se


# -- assumption checks ------------------------------------------------------------------


@dataclass
class AssumptionReport:
    """Worst-case margins of the sampled assumption checks.

    A negative margin is a violation; ``where`` locates the worst sample.
    """

    checks: list[dict]

    @property
    def ok(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def violations(self) -> list[dict]:
        return [c for c in self.checks if not c["passed"]]

    def get(self, name: str) -> dict:
        for c in self.checks:
            if c["name"] == name:
                return c
        raise KeyError(name)

    def to_json(self) -> dict:
        return {"ok": self.ok, "checks": self.checks}


def _check(name: str, slack: np.ndarray, where: list, note: str = "") -> dict:
    slack = np.asarray(slack, dtype=float)
    bad = ~np.isfinite(slack)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        return {"name": name, "passed": False, "margin": float("-inf"), "where": where[i], "note": "non-finite value"}
    i = int(np.argmin(slack))
    return {"name": name, "passed": bool(slack[i] >= 0), "margin": float(slack[i]), "where": where[i], "note": note}


def validate_assumptions(
    model: MfgModel,
    n_samples: int = 2000,
    x_range: float = 10.0,
    measure_scale: float = 2.0,
    atoms: int = 16,
    seed: int = 0,
) -> AssumptionReport:
    """Sample ``(t, x, nu, u)`` and check the standing assumptions on the model.

    Measures are sampled as uniform empirical measures with ``atoms``
    Gaussian atoms of random location and spread; measure distances are exact
    one-dimensional Wasserstein distances of order ``p``.
    """
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 7], dtype=np.uint64)))
    T, p, pb = model.T, model.p, model.p_bar
    lo, hi = model.U
    n = int(n_samples)
    t = rng.uniform(0.0, T, n)
    t[:2] = (0.0, T)
    x = rng.uniform(-x_range, x_range, n)
    x[2:4] = (-x_range, x_range)
    u = rng.uniform(lo, hi, n)
    u[4:6] = (lo, hi)
    h = rng.uniform(1e-3, 1.0, n)

    def sample_measure(k):
        loc = rng.uniform(-measure_scale, measure_scale, k)[:, None]
        return rng.normal(loc, rng.uniform(0.1, measure_scale, k)[:, None], (k, atoms))

    A1 = sample_measure(n)
    A2 = A1 + rng.normal(0.0, rng.uniform(0.01, 0.5, n)[:, None], (n, atoms))
    nus1 = [Moments.of(a, p) for a in A1]
    nus2 = [Moments.of(a, p) for a in A2]
    mp1 = np.array([nu.pmoment for nu in nus1])
    where = [{"t": float(t[i]), "x": float(x[i]), "u": float(u[i]), "mean": nus1[i].mean} for i in range(n)]

    def ev(fn, xs, nus, with_t=True):
        if with_t:
            return np.array([float(np.asarray(fn(t[i], xs[i], nus[i], u[i]))) for i in range(n)])
        return np.array([float(np.asarray(fn(xs[i], nus[i]))) for i in range(n)])

    with np.errstate(all="ignore"):
        b1, s1 = ev(model.b, x, nus1), ev(model.sigma, x, nus1)
        b2, s2 = ev(model.b, x + h, nus1), ev(model.sigma, x + h, nus1)
        f1, f2 = ev(model.f, x, nus1), ev(model.f, x, nus2)
        bm2, sm2 = ev(model.b, x, nus2), ev(model.sigma, x, nus2)
        g1 = ev(model.g, x, nus1, with_t=False)
        cvals = np.array([float(model.c(s)) for s in t])
        hvals = np.array([float(model.h(s)) for s in t])
        W = np.array([wasserstein_1d(A1[i], A2[i], p) for i in range(n)])
        r1 = np.array([nu.pmoment ** (1.0 / p) for nu in nus1])
        r2 = np.array([nu.pmoment ** (1.0 / p) for nu in nus2])
        Lr = np.array([float(model.L(r1[i], r2[i])) for i in range(n)])
        ax = np.abs(x)
        checks = [
            _check("A1: |b| <= C1", model.C1 - np.abs(b1), where),
            _check("A1: |sigma sigma^T| <= C1", model.C1 - s1**2, where),
            _check("A1: b Lipschitz in x", model.C1 - np.abs(b2 - b1) / h, where, "difference quotients against C1"),
            _check("A1: sigma Lipschitz in x", model.C1 - np.abs(s2 - s1) / h, where, "difference quotients against C1"),
            _check("A2: f, g finite", np.where(np.isfinite(f1) & np.isfinite(g1), 0.0, np.nan), where),
            _check("A3: g lower envelope", g1 + model.C2 * (1.0 - ax**pb + mp1), where),
            _check("A3: g upper envelope", model.C3 * (1.0 + ax**pb + mp1) - g1, where),
            _check("A3: |f| envelope", model.C4 * (1.0 + ax**p + np.abs(u) ** p + mp1) - np.abs(f1), where),
            {
                "name": "A4: c > 0",
                "passed": bool(np.all(cvals > 0)),
                "margin": float(cvals.min()),
                "where": {"t": float(t[int(np.argmin(cvals))])},
                "note": "strict positivity",
            },
            _check("A4: h finite", np.where(np.isfinite(hvals), 0.0, np.nan), where),
        ]
        for label, d in (("b", np.abs(bm2 - b1)), ("sigma", np.abs(sm2 - s1)), ("f", np.abs(f2 - f1))):
            checks.append(_check(f"A5: {label} Lipschitz in the measure", model.C5 * (1.0 + Lr) * W - d, where))
        checks.append(
            {
                "name": "A6: U compact",
                "passed": bool(math.isfinite(lo) and math.isfinite(hi) and lo <= hi),
                "margin": float(hi - lo),
                "where": {"U": [lo, hi]},
                "note": "",
            }
        )
    return AssumptionReport(checks)
