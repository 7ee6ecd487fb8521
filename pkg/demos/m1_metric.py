"""M1 distance between a unit step and steeper and steeper ramps.

The Skorokhod M1 metric lets a continuous ramp approach a jump: the distance
from the step at 1/2 to a ramp of width 1/k is exactly 1/(k+1), so it goes to
zero even though the uniform distance does not shrink.

Run with ``python demos/m1_metric.py``.
"""

from singmfg.cadlag import m1_distance, m1_mesh, ramp, step, strong_m1_oscillation, staircase

x = step(0.5)
print(f"{'k':>5} {'d_M1':>10} {'1/(k+1)':>10} {'mid gap':>8}")
for k in (2, 4, 16, 64, 256):
    y = ramp(0.5, 0.5 + 1 / k)
    mid = float(abs(x.sample([0.5 + 0.5 / k]) - y.sample([0.5 + 0.5 / k])).max())
    print(f"{k:>5} {m1_distance(x, y, 512):>10.5f} {1 / (k + 1):>10.5f} {mid:>8.2f}")
print(f"grid mesh at N=512: {m1_mesh(x, ramp(0.5, 0.75), 512):.2e}")

# monotone paths have no M1 oscillation; an up-down spike does
up = staircase([0.2, 0.6], [1.0, 1.0])
spike = staircase([0.4, 0.45], [1.0, -1.0])
for name, p in (("monotone staircase", up), ("up-down spike", spike)):
    print(name, [round(strong_m1_oscillation(p, d), 3) for d in (0.2, 0.1, 0.01)])
