"""Best responses, the damped fixed-point iteration and its variants.

All optimisation is over a finite :class:`CandidateFamily`; every optimality
statement in the outputs is relative to that family.  Candidates are scored
with common random numbers: every candidate is simulated with the same
Brownian increments on the same grid.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .cadlag import CadlagPath, m1_distance, ramp, staircase
from .control import RelaxedControlGrid, SingularControl, mollify, truncate_fuel
from .dynamics import MfgModel, PathEnsemble, brownian_normals, path_costs, simulate
from .measure import EmpiricalPathMeasure, path_wasserstein

__all__ = [
    "Candidate",
    "CandidateFamily",
    "SolverConfig",
    "BestResponse",
    "MfgSolution",
    "best_response",
    "solve_fixed_point",
    "solve_general",
    "solve_mckean_vlasov",
    "approx_study",
]

FAMILY_NOTE = "optimality is relative to the finite candidate family"
TIE_NOTE = "ties broken by lowest candidate index (regular-major order)"


@dataclass(frozen=True)
class Candidate:
    index: int
    regular: RelaxedControlGrid
    singular: SingularControl
    regular_label: str
    singular_label: str

    @property
    def label(self) -> str:
        return f"{self.regular_label} | {self.singular_label}"


class CandidateFamily:
    """Finite search space of (regular, singular) control pairs.

    Parameters
    ----------
    regular : list of (label, RelaxedControlGrid)
    singular : list of (label, SingularControl)
        The zero control is expected first so that it wins ties.

    Candidates are enumerated regular-major: index ``r * len(singular) + s``.
    """

    def __init__(self, regular, singular):
        self.regular = list(regular)
        self.singular = list(singular)
        if not self.regular or not self.singular:
            raise ValueError("candidate family must be nonempty")

    @classmethod
    def build(
        cls,
        T: float,
        u_values: Sequence[float],
        knots: int = 1,
        mixtures: bool = False,
        jump_times: Sequence[float] = (),
        heights: Sequence[float] = (),
        ramps: Sequence[Sequence[float]] = (),
        m: float | None = None,
        U: tuple[float, float] | None = None,
    ) -> "CandidateFamily":
        """Piecewise-constant strict controls on ``knots`` equal cells, optional
        constant two-point mixtures of neighbouring values, the zero control,
        single steps ``height * 1_[t, inf)`` and ramps ``(t0, t1, height)``,
        all truncated to fuel ``m``."""
        u = np.asarray(sorted(set(float(v) for v in u_values)))
        t_grid = np.linspace(0.0, T, int(knots) + 1)
        regular = []
        for combo in itertools.product(range(u.size), repeat=int(knots)):
            Q = RelaxedControlGrid.dirac(t_grid, u, combo, u[combo[0]], u[combo[-1]], U)
            regular.append(("u=" + ",".join(f"{u[j]:g}" for j in combo), Q))
        if mixtures:
            for j in range(u.size - 1):
                w = np.zeros((1, u.size))
                w[0, j] = w[0, j + 1] = 0.5
                regular.append((f"mix({u[j]:g},{u[j + 1]:g})", RelaxedControlGrid([0.0, T], u, w, u[j], u[j], U)))
        singular = [("Z=0", SingularControl.zero(T, m))]
        for t0 in jump_times:
            for hgt in heights:
                singular.append((f"step({t0:g},{hgt:g})", SingularControl(staircase([t0], [hgt], T))))
        for t0, t1, hgt in ramps:
            singular.append((f"ramp({t0:g},{t1:g},{hgt:g})", SingularControl(ramp(t0, t1, hgt, T))))
        fam = cls(regular, singular)
        return fam.with_fuel(m) if m is not None else fam

    def with_fuel(self, m: float) -> "CandidateFamily":
        """Truncate every singular candidate to fuel ``m`` and drop duplicates."""
        out: list[tuple[str, SingularControl]] = []
        for label, Z in self.singular:
            Zm = truncate_fuel(Z, m)
            if any(Zm.path == other.path for _, other in out):
                continue
            out.append((label if Zm.path == Z.path else f"{label}^m", Zm))
        return CandidateFamily(self.regular, out)

    def mollified(self, n: int, epsilon: float) -> "CandidateFamily":
        """Singular candidates replaced by their mollifications on ``[0, T + epsilon]``."""
        return CandidateFamily(self.regular, [(f"{lab}[n={n}]", mollify(Z, n, epsilon)) for lab, Z in self.singular])

    def __len__(self):
        return len(self.regular) * len(self.singular)

    def candidate(self, index: int) -> Candidate:
        r, s = divmod(int(index), len(self.singular))
        return Candidate(index, self.regular[r][1], self.singular[s][1], self.regular[r][0], self.singular[s][0])

    def candidates(self) -> list[Candidate]:
        return [self.candidate(i) for i in range(len(self))]

    def jump_times(self) -> np.ndarray:
        ts = [t for _, Z in self.singular for t, _ in Z.path.jumps()]
        return np.unique(ts) if ts else np.zeros(0)

    def grid(self, base) -> np.ndarray:
        """Base grid with every singular jump time inserted, shared by all candidates."""
        return np.union1d(np.asarray(base, dtype=float), self.jump_times())


@dataclass
class SolverConfig:
    tol: float = 1e-3
    max_iter: int = 30
    damping: float = 0.5
    n_paths: int = 1000
    seed: int = 0
    grid_steps: int = 100
    p: float = 1.0
    n_certificate: int = 100
    certificate_N: int = 64
    threads: int = 1
    inner_tol: float = 1e-10
    inner_max_iter: int = 10

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.n_paths < 1 or self.max_iter < 1 or self.grid_steps < 1:
            raise ValueError("n_paths, max_iter and grid_steps must be positive")


@dataclass
class BestResponse:
    index: int
    candidate: Candidate
    J: float
    se: float
    table: list[dict]
    ensemble: PathEnsemble
    costs: np.ndarray = field(repr=False)


class _Workspace:
    """Grid and Brownian normals shared by every simulation of a run."""

    def __init__(self, model: MfgModel, family: CandidateFamily, cfg: SolverConfig, horizon: float, extra=()):
        base = np.linspace(0.0, horizon, cfg.grid_steps + 1)
        grid = family.grid(np.union1d(base, [t for t in (model.T, *extra) if t <= horizon]))
        self.grid = grid
        self.horizon = horizon
        self.normals = brownian_normals(cfg.seed, cfg.n_paths, grid.size - 1)
        self.cfg = cfg

    def run(self, model, mu, cand: Candidate) -> PathEnsemble:
        return simulate(model, mu, cand.regular, cand.singular, self.grid, self.cfg.n_paths, self.cfg.seed, self.normals)


def _score(model: MfgModel, ws: _Workspace, mu, cand: Candidate):
    ens = ws.run(model, mu, cand)
    c = path_costs(model, ens)
    return ens, c


def best_response(
    model: MfgModel,
    mu,
    family: CandidateFamily,
    n_paths: int | None = None,
    seed: int | None = None,
    config: SolverConfig | None = None,
    workspace: _Workspace | None = None,
) -> BestResponse:
    """Cheapest candidate against the frozen flow ``mu``.

    Every candidate is simulated with the same Brownian increments; the
    argmin keeps the lowest index among equal costs.

    Raises
    ------
    FloatingPointError
        If no candidate has a finite cost.
    """
    cfg = config or SolverConfig()
    if n_paths is not None or seed is not None:
        cfg = replace(cfg, n_paths=n_paths or cfg.n_paths, seed=cfg.seed if seed is None else seed)
    ws = workspace or _Workspace(model, family, cfg, model.T)
    cands = family.candidates()

    def evaluate(c):
        try:
            return _score(model, ws, mu, c)
        except FloatingPointError:
            return None, None

    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            results = list(pool.map(evaluate, cands))
    else:
        results = [evaluate(c) for c in cands]
    table = []
    best, best_J = -1, math.inf
    for c, (ens, costs) in zip(cands, results):
        if costs is None:
            J, se = math.inf, math.nan
        else:
            J = float(costs.mean())
            se = float(costs.std(ddof=1) / math.sqrt(costs.size)) if costs.size > 1 else 0.0
        table.append({"index": c.index, "regular": c.regular_label, "singular": c.singular_label, "J": J, "se": se})
        if J < best_J:
            best, best_J = c.index, J
    if best < 0:
        raise FloatingPointError("every candidate has a non-finite cost")
    ens, costs = results[best]
    return BestResponse(best, cands[best], best_J, table[best]["se"], table, ens, costs)


@dataclass
class MfgSolution:
    """Outcome of a fixed-point run.

    ``mu`` is the law of ``ensemble``, the state under ``candidate`` against
    the accepted flow.  ``status`` is ``"converged"`` or ``"unconverged"``.
    """

    mu: EmpiricalPathMeasure
    ensemble: PathEnsemble
    candidate: Candidate
    J: float
    J_se: float
    converged: bool
    iterations: int
    trace: list[dict]
    certificate: dict
    config: dict
    mode: str = "mfg"
    notes: list[str] = field(default_factory=lambda: [FAMILY_NOTE, TIE_NOTE])
    table: list[dict] = field(default_factory=list, repr=False)

    @property
    def status(self) -> str:
        return "converged" if self.converged else "unconverged"

    @property
    def control(self) -> tuple[RelaxedControlGrid, SingularControl]:
        return self.candidate.regular, self.candidate.singular

    def fuel_moment(self, p_bar: float) -> float:
        """``E |Z*_T|^p_bar`` (the control is deterministic)."""
        zT = float(self.candidate.singular.path.eval(self.candidate.singular.T)[0])
        return abs(zT) ** p_bar

    def summary(self) -> dict:
        from .cadlag import path_to_json

        return {
            "mode": self.mode,
            "status": self.status,
            "converged": self.converged,
            "iterations": self.iterations,
            "J": self.J,
            "J_se": self.J_se,
            "candidate": {
                "index": self.candidate.index,
                "regular": self.candidate.regular_label,
                "singular": self.candidate.singular_label,
                "regular_control": self.candidate.regular.to_json(),
                "singular_control": path_to_json(self.candidate.singular.path),
            },
            "certificate": self.certificate,
            "notes": list(self.notes),
            "config": self.config,
        }


def _initial_flow(model: MfgModel, family: CandidateFamily, ws: _Workspace) -> EmpiricalPathMeasure:
    # self-consistent law of the uncontrolled state under the first regular control
    cand = Candidate(-1, family.regular[0][1], SingularControl.zero(family.singular[0][1].T), family.regular[0][0], "Z=0")
    return ws.run(model, None, cand).measure()


def _certify(model, family, ws, cfg, mu_iter, sol_ens, index, costs) -> tuple[dict, BestResponse]:
    mu_star = sol_ens.measure()
    n = min(cfg.n_certificate, cfg.n_paths)
    w = path_wasserstein(mu_iter.subsample(n, cfg.seed), mu_star.subsample(n, cfg.seed), cfg.p, cfg.certificate_N)
    again = best_response(model, mu_star, family, config=cfg, workspace=ws)
    J_star = again.table[index]["J"]
    shift = J_star - again.J
    if again.index == index:
        noise = 0.0
    else:
        _, c_star = _score(model, ws, mu_star, family.candidate(index))
        d = c_star - again.costs
        noise = float(d.std(ddof=1) / math.sqrt(d.size)) if d.size > 1 else 0.0
    cert = {
        "path_wasserstein": w,
        "path_wasserstein_paths": n,
        "path_wasserstein_grid": cfg.certificate_N,
        "re_best_response_index": again.index,
        "re_best_response_shift": shift,
        "crn_noise": noise,
        "self_consistent": bool(shift <= 3.0 * noise),
    }
    return cert, again


def solve_fixed_point(
    model: MfgModel,
    m: float | None,
    family: CandidateFamily,
    config: SolverConfig | None = None,
    mu0: EmpiricalPathMeasure | None = None,
    horizon: float | None = None,
    extra_times=(),
) -> MfgSolution:
    """Damped best-response iteration for the mean-field equilibrium.

    ``mu_{k+1} = (1 - lam_k) mu_k + lam_k nu_k`` where ``nu_k`` is the law of
    the best response to ``mu_k``; ``lam_0 = 1`` so the starting guess is
    dropped after the first step and ``lam_k = damping`` afterwards.  The gap
    ``max_t W_p(mu_k,t, nu_k,t)`` measures how far ``mu_k`` is from being
    reproduced by its own best response; the run stops once it is at most
    ``tol``.  If that never happens the iterate with the smallest gap is
    returned flagged unconverged.
    """
    cfg = config or SolverConfig()
    if m is not None:
        if not m > 0:
            raise ValueError("fuel bound m must be positive")
        family = family.with_fuel(m)
    H = model.T if horizon is None else horizon
    ws = _Workspace(model, family, cfg, H, extra_times)
    mu = _initial_flow(model, family, ws) if mu0 is None else mu0
    trace = []
    best = None
    converged = False
    for k in range(cfg.max_iter):
        br = best_response(model, mu, family, config=cfg, workspace=ws)
        nu = br.ensemble.measure()
        gap = mu.marginal_gap(nu, cfg.p)
        trace.append({"iter": k + 1, "gap": gap, "J": br.J, "candidate": br.index})
        if best is None or gap < best[0]:
            best = (gap, k + 1, mu, br)
        if gap <= cfg.tol:
            converged = True
            break
        mu = mu.mix(nu, 1.0 if k == 0 else cfg.damping)
    gap, it, mu_acc, br = best
    cert, again = _certify(model, family, ws, cfg, mu_acc, br.ensemble, br.index, br.costs)
    J = again.table[br.index]["J"]
    return MfgSolution(
        mu=br.ensemble.measure(),
        ensemble=br.ensemble,
        candidate=br.candidate,
        J=J,
        J_se=again.table[br.index]["se"],
        converged=converged,
        iterations=len(trace),
        trace=trace,
        certificate=dict(cert, gap=gap, accepted_iteration=it, tol=cfg.tol),
        config=dict(asdict(cfg), m=m, horizon=H, model=model.name),
        table=br.table,
    )


def solve_general(
    model: MfgModel,
    schedule: Sequence[float],
    family: CandidateFamily,
    config: SolverConfig | None = None,
) -> tuple[list[MfgSolution], dict]:
    """Fixed points under increasing fuel bounds and their stability report."""
    cfg = config or SolverConfig()
    schedule = [float(m) for m in schedule]
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("fuel schedule must be increasing")
    sols = [solve_fixed_point(model, m, family, cfg) for m in schedule]
    usage = [s.fuel_moment(model.p_bar) for s in sols]
    n = min(cfg.n_certificate, cfg.n_paths)
    gaps = [
        path_wasserstein(a.mu.subsample(n, cfg.seed), b.mu.subsample(n, cfg.seed), cfg.p, cfg.certificate_N)
        for a, b in zip(sols, sols[1:])
    ]
    lo, hi = min(usage), max(usage)
    ratio = hi / lo if lo > 0 else (1.0 if hi == 0 else math.inf)
    Js = [s.J for s in sols]
    noise = [3.0 * max(a.J_se, b.J_se) for a, b in zip(sols, sols[1:])]
    saturated = bool(gaps and gaps[-1] <= cfg.tol and usage[-1] <= usage[-2] + cfg.tol)
    report = {
        "schedule": schedule,
        "fuel_moment": usage,
        "fuel_moment_ratio": ratio,
        "successive_path_wasserstein": gaps,
        "J": Js,
        "J_nonincreasing": all(b <= a + 1e-12 for a, b in zip(Js, Js[1:])),
        "J_nonincreasing_within_noise": all(b <= a + e for a, b, e in zip(Js, Js[1:], noise)),
        "status": [s.status for s in sols],
        "verdict": "fuel-saturated" if saturated else "not-saturated",
    }
    return sols, report


def _mv_consistent(model, ws: _Workspace, cand: Candidate, cfg: SolverConfig):
    # start from the interacting particle system, then re-feed the law until it reproduces itself
    ens = ws.run(model, None, cand)
    gaps = []
    for _ in range(cfg.inner_max_iter):
        mu = ens.measure()
        ens = ws.run(model, mu, cand)
        gap = mu.marginal_gap(ens.measure(), cfg.p)
        gaps.append(gap)
        if gap <= cfg.inner_tol:
            return ens, gaps, True
    return ens, gaps, False


def solve_mckean_vlasov(
    model: MfgModel,
    m: float | None,
    family: CandidateFamily,
    config: SolverConfig | None = None,
    contrast: bool = True,
) -> tuple[MfgSolution, dict]:
    """Central-planner variant: each candidate is scored under its own consistent law.

    Returns the solution and a contrast record against the mean-field
    equilibrium of the same model, whose control is re-scored under its own
    consistent law for a like-for-like comparison.
    """
    cfg = config or SolverConfig()
    if m is not None:
        family = family.with_fuel(m)
    ws = _Workspace(model, family, cfg, model.T)
    table = []
    best, best_J, best_payload = -1, math.inf, None
    for cand in family.candidates():
        ens, gaps, ok = _mv_consistent(model, ws, cand, cfg)
        c = path_costs(model, ens)
        J = float(c.mean())
        se = float(c.std(ddof=1) / math.sqrt(c.size)) if c.size > 1 else 0.0
        table.append(
            {
                "index": cand.index,
                "regular": cand.regular_label,
                "singular": cand.singular_label,
                "J": J,
                "se": se,
                "inner_iterations": len(gaps),
                "inner_gap": gaps[-1],
                "inner_converged": ok,
            }
        )
        if J < best_J:
            best, best_J, best_payload = cand.index, J, (ens, se)
    ens, se = best_payload
    all_ok = all(r["inner_converged"] for r in table)
    sol = MfgSolution(
        mu=ens.measure(),
        ensemble=ens,
        candidate=family.candidate(best),
        J=best_J,
        J_se=se,
        converged=all_ok,
        iterations=max(r["inner_iterations"] for r in table),
        trace=[{"iter": r["index"], "gap": r["inner_gap"], "J": r["J"], "candidate": r["index"]} for r in table],
        certificate={"inner_converged_all": all_ok, "inner_tol": cfg.inner_tol},
        config=dict(asdict(cfg), m=m, horizon=model.T, model=model.name),
        mode="mckean-vlasov",
        table=table,
    )
    record: dict = {}
    if contrast:
        mfg = solve_fixed_point(model, m, family, cfg)
        mv_cost_of_mfg = table[mfg.candidate.index]["J"]
        record = {
            "mfg_candidate": mfg.candidate.index,
            "mfg_J": mfg.J,
            "mfg_status": mfg.status,
            "mfg_J_under_mv_consistency": mv_cost_of_mfg,
            "mv_candidate": best,
            "mv_J": best_J,
            "planner_no_worse": bool(best_J <= mv_cost_of_mfg),
            "same_candidate": bool(best == mfg.candidate.index),
        }
    return sol, record


def approx_study(
    model: MfgModel,
    n_list: Sequence[int],
    m: float | None,
    family: CandidateFamily,
    config: SolverConfig | None = None,
    epsilon: float | None = None,
    N: int = 256,
) -> dict:
    """Smoothed-control approximation of a singular-control equilibrium.

    Works on ``[0, T + epsilon]`` with ``g = h = 0``.  Direction 1 solves the
    equilibrium with every singular candidate mollified at level ``n`` and
    compares it with the singular solution (path-space ``W_p`` and cost gap).
    Direction 2 keeps the singular solution's flow and regular control,
    drives the state with the mollified optimal singular control and reports
    the mean M1 distance to the singular state path by path (same noise).

    Raises
    ------
    ValueError
        If ``1 / min(n_list) > epsilon``.
    """
    cfg = config or SolverConfig()
    eps = model.epsilon if epsilon is None else float(epsilon)
    n_list = sorted(int(n) for n in n_list)
    if not n_list or 1.0 / n_list[0] > eps:
        raise ValueError(f"precondition violated: 1/n = {1.0 / n_list[0]:.6g} exceeds epsilon = {eps:.6g}")
    base = model.without_terminal_costs()
    base = replace(base, epsilon=eps)
    if m is not None:
        family = family.with_fuel(m)
    H = model.T + eps
    jt = family.jump_times()
    extra = sorted({float(t + 1.0 / n) for t in np.append(jt, model.T) for n in n_list if t + 1.0 / n <= H} | set(jt.tolist()))
    star = solve_fixed_point(base, None, family, cfg, horizon=H, extra_times=extra)
    ws = _Workspace(base, family, cfg, H, extra)
    n_cert = min(cfg.n_certificate, cfg.n_paths)
    rows = []
    X = star.ensemble.measure()
    for n in n_list:
        fam_n = family.mollified(n, eps)
        sol_n = solve_fixed_point(base, None, fam_n, cfg, horizon=H, extra_times=extra)
        w = path_wasserstein(sol_n.mu.subsample(n_cert, cfg.seed), star.mu.subsample(n_cert, cfg.seed), cfg.p, cfg.certificate_N)
        Zn = mollify(star.candidate.singular, n, eps)
        cand = Candidate(-1, star.candidate.regular, Zn, star.candidate.regular_label, f"{star.candidate.singular_label}[n={n}]")
        Xn = ws.run(base, star.mu, cand).measure()
        d = np.array([m1_distance(Xn.path(i), X.path(i), N) for i in range(cfg.n_paths)])
        rows.append(
            {
                "n": n,
                "wasserstein_gap": w,
                "abs_dJ": abs(sol_n.J - star.J),
                "J_n": sol_n.J,
                "status_n": sol_n.status,
                "mean_d_m1": float(d.mean()),
                "std_error": float(d.std(ddof=1) / math.sqrt(d.size)) if d.size > 1 else 0.0,
                "_d": d,
            }
        )
    paired = []
    for a, b in zip(rows, rows[1:]):
        diff = a["_d"] - b["_d"]
        se = float(diff.std(ddof=1) / math.sqrt(diff.size)) if diff.size > 1 else 0.0
        paired.append({"from": a["n"], "to": b["n"], "decrease": float(diff.mean()), "paired_se": se})
    for r in rows:
        del r["_d"]
    return {
        "J_star": star.J,
        "status_star": star.status,
        "singular_candidate": star.candidate.singular_label,
        "regular_candidate": star.candidate.regular_label,
        "epsilon": eps,
        "horizon": H,
        "m1_grid": N,
        "rows": rows,
        "paired_d_m1": paired,
        "notes": [FAMILY_NOTE, "terminal and singular costs set to zero on [0, T + epsilon]"],
    }
