"""Integrate one path of a jump-driven equation and print its norm history.

    python demos/solver_paths.py
"""
import numpy as np

from sidelab import coefficients
from sidelab.field import Field, Grid
from sidelab.noise import TimeGrid, sample_noise
from sidelab.solver import SolverConfig, solve

grid = Grid.box([(0.0, 1.0)], 63)
tg = TimeGrid(1.0, 100)
co = coefficients.cubic_drift(modes=1, phi=0.3, s1=0.3, g1=-0.5, nu=(2.0,))
psi = Field.from_function(grid, lambda p: 0.8 * np.sin(np.pi * p[:, 0]))

noise = sample_noise(tg, co.modes, seed=1, nu=co.nu)
rec = solve(SolverConfig("eq1", tg, grid, snapshot_every=10), co, psi, noise)

print(f"jump times: {[round(t, 4) for t, _ in rec.jump_log]}")
print(f"{'time':>8} {'l2':>9} {'h1':>9} {'jump':>5}")
for (t, l2, h1, _), j in zip(rec.norm_table(), rec.is_jump):
    print(f"{t:8.4f} {l2:9.5f} {h1:9.5f} {'*' if j else '':>5}")

# same seed, same path
again = solve(SolverConfig("eq1", tg, grid, snapshot_every=10), co, psi, sample_noise(tg, 1, 1, nu=co.nu))
print("replay identical:", again == rec)
