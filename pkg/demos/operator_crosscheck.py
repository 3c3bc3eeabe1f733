"""Weak (integrated by parts) versus strong form of the nonlocal shift operator.

    python demos/operator_crosscheck.py
"""
import numpy as np

from sidelab import ops
from sidelab.coefficients import CoefficientSet
from sidelab.field import Field, Grid, inner
from sidelab.noise import MarkSpace

co = CoefficientSet(dim=1, c=lambda t, x, z: np.full((len(x), 1), 0.05 * (1 + z)),
                    m=lambda t, x, z: 1 + 0.5 * np.cos(2 * np.pi * x[:, 0]),
                    pi1=MarkSpace.atoms([1.0, 0.5]))

prev = None
for n in (63, 127, 255, 511, 1023):
    g = Grid.box([(0.0, 1.0)], n)
    u = Field.from_function(g, lambda p: np.sin(np.pi * p[:, 0]) + 0.3 * np.sin(3 * np.pi * p[:, 0]))
    v = Field.from_function(g, lambda p: np.sin(2 * np.pi * p[:, 0]) * np.exp(p[:, 0]))
    strong = inner(ops.apply_I1(u, co, 0.0), v)
    weak = ops.weak_I1_translation(u, v, co, 0.0)
    err = abs(weak - strong)
    ratio = "" if prev is None else f"  ratio {prev / err:.2f}"
    print(f"h=1/{n + 1:<5d} strong={strong:+.6f} weak={weak:+.6f} |diff|={err:.2e}{ratio}")
    prev = err
