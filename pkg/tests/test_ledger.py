import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sidelab.field import Field, Grid
from sidelab.ledger import (DRIVERS, TERMS, SemimartingaleDriver, build_path, closed_form_driver, fit_slope,
                            ito_residual, path_average, piecewise_constant_driver, pure_jump_driver,
                            refinement_sweep, smooth_driver)
from sidelab.noise import JumpStream, MarkSpace, NoiseRealization, TimeGrid, sample_noise

LINE = Grid.box([(0, 1)], 19)


def ledger(driver, seed=0, modes=0, **kw):
    noise = sample_noise(driver.time, modes, seed, nu=driver.marks if len(driver.marks) else None)
    path = build_path(driver, noise)
    return path, ito_residual(path, driver, noise, **kw), noise


def test_closed_form_path_and_energy():
    tg = TimeGrid(1.0, 100)
    path, rep, _ = ledger(closed_form_driver(LINE, tg), quadrature="exact")
    for t, v in zip(path.times, path.right):
        np.testing.assert_allclose(v, 1 - 2 * t, atol=1e-13)
    mass = LINE.cell_volume * LINE.size
    np.testing.assert_allclose(rep.lhs, mass * np.maximum(1 - 2 * np.asarray(path.times), 0) ** 2, atol=1e-13)
    assert rep.max_abs_residual < 1e-13
    assert rep.initial == pytest.approx(mass)


def test_left_quadrature_error_is_first_order():
    errs = []
    for steps in (50, 100, 200):
        _, rep, _ = ledger(closed_form_driver(LINE, TimeGrid(1.0, steps)))
        errs.append(rep.max_abs_residual)
    assert fit_slope([1 / 50, 1 / 100, 1 / 200], errs) == pytest.approx(1.0, abs=0.1)


def test_pure_jump_closed_form():
    tg = TimeGrid(2.0, 40)
    path, rep, noise = ledger(pure_jump_driver(LINE, tg), seed=5, quadrature="exact")
    jumps = noise.stream("N").times
    assert len(jumps) > 0
    for t, v in zip(path.times, path.right):
        n_t = np.sum(jumps <= t)
        np.testing.assert_allclose(v, 1 - 3 * n_t + 3 * t, atol=1e-12)
    assert rep.max_abs_residual < 1e-12


def test_jump_correction_by_hand():
    g = Grid.box([(0, 1)], 2)
    tg = TimeGrid(1.0, 2)
    # the drift cancels the compensator so u- stays at 0.4
    drv = SemimartingaleDriver(Field.constant(g, 0.4), tg, vstar=np.full((2, 2), -1.0),
                               bigK=np.full((2, 1, 2), -1.0), marks=MarkSpace.atoms([1.0]))
    noise = NoiseRealization(tg, np.zeros((2, 0)), {"N": JumpStream(np.array([0.5]), np.array([0]))},
                             {"N": drv.marks})
    path = build_path(drv, noise)
    rep = ito_residual(path, drv, noise)
    vol = g.cell_volume * g.size
    np.testing.assert_allclose(path.left[rep.at(0.5)], 0.4, atol=1e-15)
    # u- = 0.4, u = -0.6: |u+|^2 drops by 0.16; the jump pairs to 2 * (-1) * 0.4 and the
    # compensator over (0, 0.5] adds 2 * 1 * 0.4 * 0.5
    i = rep.at(0.5)
    assert rep.terms["jump_mart"][i] == pytest.approx((-0.8 + 0.4) * vol)
    assert rep.terms["drift"][i] == pytest.approx(-0.4 * vol)
    assert rep.terms["jump_corr"][i] == pytest.approx((0.0 - 0.16 + 0.8) * vol)
    assert rep.max_abs_residual < 1e-15


def test_zero_driver_has_zero_terms():
    drv = SemimartingaleDriver(Field.from_function(LINE, lambda p: p[:, 0] - 0.3), TimeGrid(1.0, 10))
    _, rep, _ = ledger(drv)
    assert rep.max_abs_residual == 0.0
    assert all(not rep.terms[k].any() for k in TERMS)


def test_negative_path_contributes_nothing():
    tg = TimeGrid(1.0, 20)
    drv = closed_form_driver(LINE, tg, level=-1.0, rate=-1.0)
    _, rep, _ = ledger(drv, quadrature="exact")
    assert not rep.lhs.any() and all(not rep.terms[k].any() for k in TERMS)


@pytest.mark.parametrize("seed", range(4))
def test_piecewise_constant_exact(seed):
    drv = piecewise_constant_driver(LINE, TimeGrid(1.0, 40), seed)
    _, rep, _ = ledger(drv, seed=seed, quadrature="exact")
    assert rep.max_abs_residual <= 1e-10 * (1 + rep.initial)


@pytest.mark.parametrize("delta", [0.05, 0.5])
def test_smoothed_identity_exact(delta):
    drv = piecewise_constant_driver(LINE, TimeGrid(1.0, 40), 3)
    _, rep, _ = ledger(drv, seed=3, quadrature="exact", delta=delta)
    assert rep.max_abs_residual <= 1e-10 * (1 + rep.initial)


def test_right_limit_control_breaks_identity():
    drv = piecewise_constant_driver(LINE, TimeGrid(1.0, 40), 1)
    noise = sample_noise(drv.time, 0, 1, nu=drv.marks)
    path = build_path(drv, noise)
    good = ito_residual(path, drv, noise, quadrature="exact")
    bad = ito_residual(path, drv, noise, quadrature="exact", limit="right")
    assert good.max_abs_residual < 1e-12 and bad.max_abs_residual > 1e-2


def test_wiener_integrand_is_accounted():
    # quadratic variation: residual shrinks with dt but the martingale term itself does not
    drv = smooth_driver(LINE, TimeGrid(1.0, 400), wiener=0.5, jumps=False)
    _, rep, _ = ledger(drv, seed=2, modes=1)
    assert abs(rep.terms["wiener"][-1]) > 10 * rep.max_abs_residual
    assert rep.terms["wiener_quad"][-1] > 0


def test_smooth_sweep_first_order():
    sweep = refinement_sweep(lambda tg, s: smooth_driver(LINE, tg), seeds=[0, 1], steps_list=[25, 50, 100, 200],
                             marks=smooth_driver(LINE, TimeGrid(1, 1)).marks)
    assert sweep.slope >= 0.9
    assert len(sweep.rows) == 8 and set(sweep.seed_slopes) == {0, 1}
    with pytest.raises(ValueError):
        refinement_sweep(lambda tg, s: smooth_driver(LINE, tg), [0], [10])


@given(st.floats(-2, 2), st.floats(-2, 2))
@settings(max_examples=200)
def test_path_average_exact_on_quadratic_pieces(a, b):
    fn = lambda u: np.maximum(u, 0.0) ** 2
    got = path_average(fn, np.array([a]), np.array([b]), (0.0,))[0]
    if a == b:
        want = fn(a)
    else:
        lo, hi = sorted((a, b))
        want = (max(hi, 0) ** 3 - max(lo, 0) ** 3) / 3 / (hi - lo)
    assert got == pytest.approx(want, abs=1e-12)


def test_driver_validation():
    tg = TimeGrid(1.0, 4)
    psi = Field.zeros(LINE)
    with pytest.raises(ValueError, match="shape"):
        SemimartingaleDriver(psi, tg, vstar=np.zeros((3, 19)))
    with pytest.raises(ValueError, match="finite"):
        SemimartingaleDriver(psi, tg, vstar=np.full((4, 19), np.nan))
    with pytest.raises(ValueError, match="mark space"):
        SemimartingaleDriver(psi, tg, bigK=np.zeros((4, 0, 19)))
    drv = closed_form_driver(LINE, tg)
    with pytest.raises(ValueError):
        ito_residual(build_path(drv, sample_noise(tg, 0, 0)), drv, sample_noise(TimeGrid(1.0, 8), 0, 0))
    with pytest.raises(ValueError):
        ito_residual(build_path(drv, sample_noise(tg, 0, 0)), drv, sample_noise(tg, 0, 0), quadrature="mid")
    assert drv.square_integral() == pytest.approx(4 * 0.95)
    assert set(DRIVERS) == {"closed-form", "pure-jump", "smooth", "piecewise-constant"}


def test_report_csv(tmp_path):
    _, rep, _ = ledger(closed_form_driver(LINE, TimeGrid(1.0, 5)))
    rep.to_csv(tmp_path / "l.csv")
    rows = list(csv.reader(open(tmp_path / "l.csv")))
    assert rows[0] == ["time", "lhs", "t_drift", "t_wiener", "t_jump_mart", "t_wiener_quad", "t_jump_corr",
                       "residual"]
    assert len(rows) == 7
    with pytest.raises(KeyError):
        rep.at(0.33)
