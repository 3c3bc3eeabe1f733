"""Coupled comparison runs: ordered data stay ordered, and what breaks when jumps overshoot.

    python demos/comparison.py            # about a minute
"""
from sidelab.harness import cubic_spec, run_comparison, run_violation_demo, violation_spec

rep = run_comparison(cubic_spec(paths=20, levels=3))
print("cubic drift, 20 paths")
for r in rep.rows:
    print(f"  level {r['refine_level']}: dt={r['dt']:.4f} h={r['h']:.4f} mean defect={r['mean_defect']:.3e}")
print(f"  level-to-level gap of u (discretization control): {rep.control.mean:.3e}")
print(f"  non-increasing: {rep.non_increasing()}  below control: {rep.below_control()}")

# g = -2r maps u- to -u-: the lower solution jumps above the upper one
bad = run_violation_demo(violation_spec(paths=20, levels=2))
print("\nsign-flip jumps (checks bypassed)")
print(f"  mean defect at finest level: {bad.rows[-1]['mean_defect']:.3f}")
for row in bad.extra["first_jump"][:5]:
    print(f"  path {row['path']}: tau={row['tau']:.3f} gap={row['gap']:.3f} closed form={row['predicted']:.3f}")
