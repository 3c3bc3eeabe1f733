"""Scalar sign-flip experiment: how often a positive start turns negative.

    python demos/counterexample.py
"""
import math

from sidelab.harness import run_counterexample

rep = run_counterexample(T=1.0, intensity=1.0, paths=10_000, seed=0)
s = rep.summary()
print(f"negative paths: {s['negative_fraction']:.4f}  (1 - e^-1 = {1 - math.exp(-1):.4f}, sigma {s['sigma']:.4f})")
print(f"jump flips the sign on every jumping path: {s['flip_identity_all']}")
print(f"growth rate between jumps: {s['inter_jump_growth_rate']:.4f}")

ctrl = run_counterexample(T=1.0, intensity=1.0, paths=10_000, seed=0, coef=0.0)
print(f"control with g = 0: negative fraction {ctrl.negative_fraction}")

for lam in (0.5, 2.0):
    r = run_counterexample(T=1.0, intensity=lam, paths=10_000, seed=1)
    print(f"intensity {lam}: {r.negative_fraction:.4f} vs {r.expected_fraction:.4f}")
