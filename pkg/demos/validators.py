"""Sampled coefficient checks on a few presets.

    python demos/validators.py
"""
from sidelab import coefficients
from sidelab.assumptions import validate

for name in ("phi-identity", "cubic-drift", "counterexample-g", "trigonometric"):
    rep = validate(coefficients.preset(name), [(0.0, 1.0)], budget=20_000)
    print(f"{name}: kappa={rep.kappa:.4g} failed={rep.failed() or 'none'}")
    for key, v in rep.verdicts.items():
        if not v.passed:
            print(f"    {key}: margin {v.margin:.3g} at {v.worst}")
