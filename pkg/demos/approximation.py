"""Mollified singular controls approximate the singular equilibrium.

A deterministic agent wants to sit at x = 1 and can only get there by a jump.
Replacing the jump by a ramp of width 1/n gives a regular problem whose state
path is within 1/(n+1) of the singular one in M1, and whose cost converges.

Run with ``python demos/approximation.py``.
"""

from singmfg.dynamics import model_from_json
from singmfg.mfg import CandidateFamily, SolverConfig, approx_study

model = model_from_json({"f": {"template": "quadratic-clamped", "cx": 1.0, "c0": -1.0}, "sigma": 0.0, "c": 1.0, "U": [0, 0]})
family = CandidateFamily.build(1.0, [0.0], jump_times=[0.0, 0.5], heights=[0.5, 1.0])
res = approx_study(model, [4, 16, 64, 256], 1.0, family, SolverConfig(n_paths=2, grid_steps=250, n_certificate=2), N=1024)

print("singular equilibrium:", res["singular_candidate"], " J* =", round(res["J_star"], 5))
print(f"{'n':>4} {'W gap':>8} {'|dJ|':>8} {'d_M1':>8} {'1/(n+1)':>8}")
for r in res["rows"]:
    print(f"{r['n']:>4} {r['wasserstein_gap']:>8.4f} {r['abs_dJ']:>8.4f} {r['mean_d_m1']:>8.4f} {1 / (r['n'] + 1):>8.4f}")
