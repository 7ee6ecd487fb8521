"""Mean-field equilibrium for a crowd-averse population with a fuel budget.

Each agent steers with a bounded drift, pays for being near the crowd mean,
and may spend up to one unit of singular fuel. The solver iterates best
responses over a finite candidate family until the path law stops moving.

Run with ``python demos/fixed_point.py`` (about ten seconds).
"""

from singmfg.dynamics import model_from_json
from singmfg.mfg import CandidateFamily, SolverConfig, solve_fixed_point

model = model_from_json(
    {
        "name": "crowd",
        "b": {"template": "linear", "cu": 1.0, "clamp": [-1, 1]},
        "sigma": 0.1,
        "f": [{"template": "quadratic-clamped", "cu": 1.0, "cm": -1.0}, {"template": "quadratic-clamped", "cx": 1.0, "scale": 0.5}],
        "h": 0.2,
        "c": 1.0,
    }
)
family = CandidateFamily.build(1.0, [-1, -0.5, 0, 0.5, 1], knots=2, jump_times=[0.0, 0.5], heights=[0.5, 1.0])
sol = solve_fixed_point(model, 1.0, family, SolverConfig(n_paths=1000, grid_steps=50, tol=5e-3))

for row in sol.trace:
    print(f"iter {row['iter']:2d}  gap {row['gap']:.4f}  J {row['J']:.4f}  {row['candidate']}")
print(sol.status, "after", sol.iterations, "iterations")
print({k: sol.certificate[k] for k in ("gap", "crn_noise", "self_consistent")})
