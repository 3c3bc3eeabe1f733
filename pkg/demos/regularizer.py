"""Tabulate the smoothed positive-part functions and probe the Taylor bound.

    python demos/regularizer.py
"""
import numpy as np

from sidelab.regfun import alpha, beta, gamma

delta = 0.5
print(f"delta = {delta}")
print(f"{'r':>6} {'alpha':>8} {'beta':>8} {'gamma':>8} {'r+^2/2':>8}")
for r in np.linspace(-0.5, 1.5, 9):
    print(f"{r:6.2f} {alpha(r, delta):8.4f} {beta(r, delta):8.4f} {gamma(r, delta):8.4f} {max(r, 0) ** 2 / 2:8.4f}")

# the remainder of a first-order expansion of gamma never exceeds r2^2
rng = np.random.default_rng(1)
r1, r2 = rng.uniform(-5, 5, (2, 100_000))
rem = np.abs(gamma(r1 + r2, delta) - gamma(r1, delta) - beta(r1, delta) * r2)
print(f"\nlargest remainder / r2^2 over 1e5 samples: {np.max(rem / r2 ** 2):.4f}")

# as delta shrinks, gamma approaches (r+)^2 / 2
for d in (1.0, 0.1, 0.01):
    r = np.linspace(-2, 2, 401)
    print(f"delta={d:5.2f}  max |gamma - (r+)^2/2| = {np.max(np.abs(gamma(r, d) - np.maximum(r, 0) ** 2 / 2)):.2e}")
