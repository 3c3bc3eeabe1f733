import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sidelab import coefficients as C
from sidelab.coefficients import CoefficientSet
from sidelab.field import Field, Grid, inner
from sidelab.noise import JumpStream, MarkSpace, NoiseRealization, TimeGrid, sample_noise
from sidelab.solver import SolverConfig, SolverError, solve, step_eq1, step_eq2

ZERO_A = np.zeros((1, 1))


def run(co, psi, T=1.0, steps=20, seed=0, equation="eq1", theta=1.0, **kw):
    tg = TimeGrid(T, steps)
    noise = sample_noise(tg, co.modes, seed, nu=co.nu if len(co.nu) else None,
                         pi2=co.pi2 if len(co.pi2) else None)
    cfg = SolverConfig(equation, tg, psi.grid, theta=theta, **kw)
    return solve(cfg, co, psi, noise), noise


def sine(grid, k=1):
    return Field.from_function(grid, lambda p: np.sin(k * np.pi * p[:, 0]))


def test_config_validation():
    g = Grid.box([(0, 1)], 5)
    with pytest.raises(ValueError):
        SolverConfig("eq3", TimeGrid(1, 2), g)
    with pytest.raises(ValueError):
        SolverConfig("eq1", TimeGrid(1, 2), g, theta=1.5)


def test_heat_eigenmode_discrete_factor():
    g = Grid.box([(0, 1)], 63)
    h = g.h[0]
    lam = 4 / h ** 2 * math.sin(math.pi * h / 2) ** 2
    rec, _ = run(C.constant(modes=0), sine(g), T=0.1, steps=40)
    dt = 0.1 / 40
    want = (1 + dt * lam) ** -40
    np.testing.assert_allclose(rec.final.values, want * sine(g).values, atol=1e-10)


def test_heat_eigenmode_converges():
    errs = []
    for n, steps in ((15, 10), (31, 40), (63, 160)):
        g = Grid.box([(0, 1)], n)
        rec, _ = run(C.constant(modes=0), sine(g), T=0.1, steps=steps, theta=0.5)
        exact = math.exp(-math.pi ** 2 * 0.1) * sine(g).values
        errs.append(np.max(np.abs(rec.final.values - exact)))
    assert errs[0] > errs[1] > errs[2]
    # h^2 and dt^2 (Crank-Nicolson): quarter per refinement
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.2)


def test_scalar_euler_constant_data():
    g = Grid.box([(0, 1)], 9)
    co = C.affine(a=0.0, modes=0, f0=0.3, f1=-1.0)
    rec, _ = run(co, Field.constant(g, 2.0), steps=50)
    u = 2.0
    for _ in range(50):
        u = u + 0.02 * (0.3 - u)
    np.testing.assert_allclose(rec.final.values, u, rtol=0, atol=1e-12)


def test_compensator_quadrature():
    # with an empty event stream only the compensator -dt * nu(g) acts
    g = Grid.box([(0, 1)], 9)
    co = C.affine(a=0.0, modes=0, g1=-0.5, nu=(2.0,))
    tg = TimeGrid(1.0, 100)
    noise = NoiseRealization(tg, np.zeros((100, 0)), {"N": JumpStream.empty()}, {"N": co.nu})
    rec = solve(SolverConfig("eq1", tg, g), co, Field.constant(g, 1.0), noise)
    np.testing.assert_allclose(rec.final.values, (1 + 0.01 * 2.0 * 0.5) ** 100, rtol=1e-10)


def test_zero_jump_coefficient_is_ignored():
    g = Grid.box([(0, 1)], 31)
    base = C.affine(modes=1, s1=0.4)
    with_stream = base.replace(nu=MarkSpace.atoms([5.0]))
    a, _ = run(base, sine(g), seed=3)
    b, _ = run(with_stream, sine(g), seed=3)
    assert a == b


def test_eq2_reduces_to_eq1_without_shift():
    g = Grid.box([(0, 1)], 31)
    co = C.trigonometric(modes=1, phi=0.3, pi2=(1.0,))
    assert co.b is None and co.lam is None
    a, _ = run(co, sine(g), seed=4, equation="eq1")
    b, _ = run(co, sine(g), seed=4, equation="eq2")
    for x, y in zip(a.right, b.right):
        np.testing.assert_allclose(x, y, rtol=0, atol=1e-14)


def test_injected_jump_is_a_translation():
    g = Grid.box([(0, 1)], 20, periodic=True)
    h = g.h[0]
    co = CoefficientSet(dim=1, a=lambda t, x: np.zeros((len(x), 1, 1)),
                        b=lambda t, z: np.array([3 * h]), pi2=MarkSpace.atoms([1.0]))
    u = Field.from_function(g, lambda p: np.cos(2 * np.pi * p[:, 0]) + p[:, 0])
    v = step_eq2(u, 0.0, 0.0, co, events=[(0.0, 0)])
    np.testing.assert_allclose(v.values, np.roll(u.values, -3), atol=1e-14)
    # eq1 jumps add g(u-)
    co1 = C.affine(a=0.0, modes=0, g1=-0.25, nu=(1.0,))
    w = step_eq1(u, 0.0, 0.0, co1, events=[(0.0, 0), (0.0, 0)])
    np.testing.assert_allclose(w.values, 0.75 ** 2 * u.values, atol=1e-14)


def test_zero_coefficients_leave_data_fixed():
    g = Grid.box([(0, 1), (0, 1)], (7, 6))
    co = CoefficientSet(dim=2, a=lambda t, x: np.zeros((len(x), 2, 2)))
    psi = Field.from_function(g, lambda p: p[:, 0] * p[:, 1])
    rec, _ = run(co, psi)
    assert np.array_equal(rec.final.values, psi.values)


def test_jump_bookkeeping():
    g = Grid.box([(0, 1)], 9)
    co = C.affine(a=0.0, modes=0, g1=-0.5, nu=(3.0,))
    rec, noise = run(co, Field.constant(g, 1.0), steps=10, seed=2)
    s = noise.stream("N")
    assert len(s) > 0
    assert [t for t, _ in rec.jump_log] == list(s.times)
    jt = [t for t, j in zip(rec.times, rec.is_jump) if j]
    assert set(jt) == set(s.times)
    for i, j in enumerate(rec.is_jump):
        if j:
            np.testing.assert_allclose(rec.right[i], 0.5 * rec.left[i], rtol=1e-15)
        else:
            assert np.array_equal(rec.right[i], rec.left[i])
    assert rec.times == sorted(rec.times)


def test_replay_is_bit_identical():
    g = Grid.box([(0, 1)], 31)
    co = C.cubic_drift(s1=0.3, g1=-0.4, nu=(1.0, 0.5))
    a, _ = run(co, sine(g), seed=11)
    b, _ = run(co, sine(g), seed=11)
    c, _ = run(co, sine(g), seed=12)
    assert a == b and a != c


def test_time_self_convergence():
    g = Grid.box([(0, 1)], 31)
    co = C.cubic_drift(modes=0, shift=0.5)
    finals = [run(co, sine(g), T=0.5, steps=s)[0].final.values for s in (10, 20, 40, 80)]
    d = [np.max(np.abs(a - b)) for a, b in zip(finals, finals[1:])]
    # first-order scheme: successive differences halve
    assert d[1] / d[2] == pytest.approx(2, rel=0.15)


@given(st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=10, deadline=None)
def test_linear_in_initial_data(a, b):
    g = Grid.box([(0, 1)], 15)
    co = C.affine(modes=1, phi=0.5, s1=0.3, f1=-0.7, g1=-0.4, nu=(1.0,))
    p1, p2 = sine(g), Field.from_function(g, lambda p: p[:, 0] ** 2)
    u1, _ = run(co, p1, steps=10, seed=1)
    u2, _ = run(co, p2, steps=10, seed=1)
    u, _ = run(co, a * p1 + b * p2, steps=10, seed=1)
    np.testing.assert_allclose(u.final.values, a * u1.final.values + b * u2.final.values, atol=1e-9)


def test_blowup_raises_with_location():
    g = Grid.box([(0, 1)], 9)
    co = C.affine(a=0.0, modes=0, f1=100.0)
    with pytest.raises(SolverError) as err:
        run(co, Field.constant(g, 1.0), steps=10)
    assert err.value.step is not None and "blow-up" in str(err.value)


def test_noise_mismatch_rejected():
    g = Grid.box([(0, 1)], 9)
    cfg = SolverConfig("eq1", TimeGrid(1.0, 10), g)
    with pytest.raises(ValueError):
        solve(cfg, C.constant(), Field.zeros(g), sample_noise(TimeGrid(1.0, 20), 1, 0))
    with pytest.raises(ValueError):
        solve(cfg, C.constant(modes=2), Field.zeros(g), sample_noise(TimeGrid(1.0, 10), 1, 0))


def test_energy_decreases_for_heat():
    g = Grid.box([(0, 1)], 31)
    rec, _ = run(C.constant(modes=0), sine(g, 3) + sine(g))
    e = [inner(Field(g, v), Field(g, v)) for v in rec.right]
    assert all(x > y for x, y in zip(e, e[1:]))


def test_path_csv(tmp_path):
    g = Grid.box([(0, 1)], 5)
    rec, _ = run(C.affine(modes=1, s1=0.2), sine(g), steps=4, snapshot_every=2)
    rec.to_csv(tmp_path / "p.csv", snapshots=True)
    rows = list(csv.reader(open(tmp_path / "p.csv")))
    assert rows[0] == ["time", "l2", "h1", "pos_l2", "u0", "u1", "u2", "u3", "u4"]
    assert [float(r[0]) for r in rows[1:]] == [0.0, 0.5, 1.0]
    assert float(rows[-1][4 + 2]) == rec.final.values[2]
