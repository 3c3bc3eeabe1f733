"""Term-by-term check of the Ito formula for ``|u^+|^2`` on discrete semimartingales.

A :class:`SemimartingaleDriver` tabulates ``psi``, the drift ``v*``, the
Wiener integrands ``h^k`` and the jump sizes ``K(z)`` on a time grid (value
at index ``n`` is used on ``(t_n, t_{n+1}]``).  :func:`build_path` assembles

    u_t = psi + int v* ds + int h^k dw^k + int int K(z) (N - ds nu)(ds, dz)

and :func:`ito_residual` evaluates both sides of the positive-part identity
along that path.  With ``delta`` set, the smoothed identity for
``2 int gamma_delta(u)`` is checked instead.
"""
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import regfun
from .field import Field
from .noise import AUX, MarkSpace, TimeGrid, sample_noise, substream
from .solver import PathRecord

TERMS = ("drift", "wiener", "jump_mart", "wiener_quad", "jump_corr")


@dataclass(frozen=True, eq=False)
class SemimartingaleDriver:
    psi: Field
    time: TimeGrid
    vstar: np.ndarray = None   # (steps, *shape)
    h: np.ndarray = None       # (steps, modes, *shape)
    bigK: np.ndarray = None    # (steps, marks, *shape)
    marks: MarkSpace = MarkSpace.empty()

    def __post_init__(self):
        shape = self.psi.grid.shape
        steps = self.time.steps
        for name, extra in (("vstar", ()), ("h", (None,)), ("bigK", (len(self.marks),))):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=float)
            want = (steps,) + tuple(arr.shape[1] if e is None else e for e in extra) + shape
            if arr.shape != want:
                raise ValueError(f"{name} tabulation has shape {arr.shape}, expected {want}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} tabulation is not finite")
            object.__setattr__(self, name, arr)
        if self.bigK is not None and not len(self.marks):
            raise ValueError("jump sizes given without a mark space")

    @classmethod
    def from_functions(cls, psi, time, vstar=None, h=None, bigK=None, marks=MarkSpace.empty()):
        """Tabulate ``vstar(t, x)``, ``h(t, x) -> (N, modes)`` and ``bigK(t, x, z)`` at left endpoints."""
        grid = psi.grid
        pts = grid.points()
        ts = time.times()[:-1]
        shape = grid.shape
        v = None if vstar is None else np.stack([np.asarray(vstar(t, pts), float).reshape(shape) for t in ts])
        hh = None
        if h is not None:
            hh = np.stack([np.moveaxis(np.asarray(h(t, pts), float), -1, 0).reshape((-1,) + shape) for t in ts])
        k = None
        if bigK is not None:
            k = np.stack([np.stack([np.asarray(bigK(t, pts, z), float).reshape(shape) for z in marks.labels])
                          for t in ts])
        return cls(psi, time, v, hh, k, marks)

    @property
    def modes(self):
        return 0 if self.h is None else self.h.shape[1]

    @property
    def stream(self):
        return "N" if self.bigK is not None else None

    def square_integral(self):
        """Discrete ``int (|v*|^2 + sum_k |h^k|^2 + int |K|^2 dnu) dt``; finite by construction."""
        vol, dt = self.psi.grid.cell_volume, self.time.dt
        total = 0.0
        if self.vstar is not None:
            total += np.sum(self.vstar ** 2) * vol * dt
        if self.h is not None:
            total += np.sum(self.h ** 2) * vol * dt
        if self.bigK is not None:
            w = np.asarray(self.marks.weights).reshape((1, -1) + (1,) * self.psi.grid.dim)
            total += np.sum(w * self.bigK ** 2) * vol * dt
        return float(total)

    def compensator(self, n):
        if self.bigK is None:
            return 0.0
        w = np.asarray(self.marks.weights).reshape((-1,) + (1,) * self.psi.grid.dim)
        return np.sum(w * self.bigK[n], axis=0)


def _check_noise(driver, noise):
    if noise.grid != driver.time:
        raise ValueError("driver and noise are tabulated on different time grids")
    if driver.modes > noise.modes:
        raise ValueError(f"driver uses {driver.modes} Wiener modes, noise has {noise.modes}")


def build_path(driver, noise):
    """The discrete semimartingale, recorded at every grid time and jump time."""
    _check_noise(driver, noise)
    psi = driver.psi
    u = np.array(psi.values)
    rec = PathRecord(psi.grid)
    rec.append(0.0, u, u)
    for n, t0, t1, dw, events in noise.substeps(driver.stream):
        ds = t1 - t0
        incr = np.zeros(psi.grid.shape)
        if driver.vstar is not None:
            incr = incr + driver.vstar[n] * ds
        if driver.bigK is not None:
            incr = incr - driver.compensator(n) * ds
        if driver.h is not None:
            incr = incr + np.tensordot(dw[: driver.modes], driver.h[n], axes=1)
        u = u + incr
        left = u
        for _, mark in events:
            u = u + driver.bigK[n, mark]
            rec.jump_log.append((_, mark))
        rec.append(t1, left, u, jump=bool(events))
    return rec


@dataclass
class LedgerReport:
    times: np.ndarray
    lhs: np.ndarray
    initial: float
    terms: dict
    residual: np.ndarray = field(init=False)

    def __post_init__(self):
        rhs = self.initial + sum(self.terms[k] for k in TERMS)
        self.residual = self.lhs - rhs

    @property
    def max_abs_residual(self):
        return float(np.max(np.abs(self.residual)))

    def at(self, t):
        """Index of the last record at time ``t`` (the post-jump value if ``t`` is a jump time)."""
        idx = np.nonzero(np.isclose(self.times, t, rtol=0, atol=1e-12))[0]
        if not len(idx):
            raise KeyError(f"no record at t={t}")
        return int(idx[-1])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time", "lhs"] + [f"t_{k}" for k in TERMS] + ["residual"])
            for i, t in enumerate(self.times):
                w.writerow([repr(float(t)), repr(float(self.lhs[i]))]
                           + [repr(float(self.terms[k][i])) for k in TERMS] + [repr(float(self.residual[i]))])


_G1, _G2 = 0.5 - 0.5 / math.sqrt(3), 0.5 + 0.5 / math.sqrt(3)


def path_average(fn, ua, ub, kinks):
    """``int_0^1 fn(ua + tau (ub - ua)) dtau`` per node.

    The interval is split where the linear path crosses a kink of ``fn`` and
    each piece gets two-point Gauss, so the result is exact whenever ``fn``
    is a piecewise polynomial of degree at most 3 with those kinks.
    """
    ua = np.asarray(ua, dtype=float)
    ub = np.asarray(ub, dtype=float)
    du = ub - ua
    cuts = [np.zeros_like(ua), np.ones_like(ua)]
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in kinks:
            tau = (k - ua) / du
            cuts.append(np.where((du != 0) & (tau > 0) & (tau < 1), tau, 0.0))
    cuts = np.sort(np.stack(cuts), axis=0)
    total = np.zeros_like(ua)
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        length = hi - lo
        s1 = ua + (lo + _G1 * length) * du
        s2 = ua + (lo + _G2 * length) * du
        total = total + 0.5 * length * (fn(s1) + fn(s2))
    return total


def _functions(delta):
    """(pairing P, quadratic-variation weight Q, energy density E, kinks)."""
    if delta is None:
        return (lambda u: np.maximum(u, 0.0), lambda u: (u > 0).astype(float),
                lambda u: np.maximum(u, 0.0) ** 2, (0.0,))
    p = regfun.RegParams(delta)
    return (lambda u: regfun.beta(u, p), lambda u: regfun.alpha(u, p),
            lambda u: 2.0 * regfun.gamma(u, p), (0.0, delta))


def ito_residual(path, driver, noise, quadrature="left", limit="left", delta=None):
    """Both sides of the positive-part Ito identity along ``path``.

    ``quadrature`` selects the rule for the ``ds`` integrals: "left" uses the
    left endpoint, "exact" integrates along the linear interpolant between
    records (exact when drivers are piecewise constant and ``h = 0``).
    ``limit="right"`` pairs jump sizes with the post-jump value instead of
    the left limit; it exists only as a negative control.
    """
    if quadrature not in ("left", "exact"):
        raise ValueError("quadrature must be 'left' or 'exact'")
    if limit not in ("left", "right"):
        raise ValueError("limit must be 'left' or 'right'")
    _check_noise(driver, noise)
    if path.grid != driver.psi.grid:
        raise ValueError("path and driver live on different grids")
    P, Q, E, kinks = _functions(delta)
    vol = path.grid.cell_volume

    def pair(a, b):
        return float(np.sum(a * b)) * vol

    def energy(u):
        return float(np.sum(E(u))) * vol

    acc = dict.fromkeys(TERMS, 0.0)
    series = {k: [0.0] for k in TERMS}
    lhs = [energy(path.right[0])]
    i = 0
    for n, t0, t1, dw, events in noise.substeps(driver.stream):
        i += 1
        if i >= len(path.times) or path.times[i] != t1:
            raise ValueError("path records do not match the driver/noise sub-steps")
        ua, ub = path.right[i - 1], path.left[i]
        ds = t1 - t0
        if quadrature == "left":
            p_avg, q_avg = P(ua), Q(ua)
        else:
            p_avg = path_average(P, ua, ub, kinks)
            q_avg = path_average(Q, ua, ub, kinks)
        if driver.vstar is not None:
            acc["drift"] += 2 * pair(driver.vstar[n], p_avg) * ds
        if driver.bigK is not None:
            acc["jump_mart"] -= 2 * pair(driver.compensator(n), p_avg) * ds
        if driver.h is not None:
            hn = driver.h[n]
            pa = P(ua)
            acc["wiener"] += 2 * sum(pair(hn[k], pa) * dw[k] for k in range(driver.modes))
            acc["wiener_quad"] += pair(np.sum(hn ** 2, axis=0), q_avg) * ds
        u = ub
        for _, mark in events:
            k = driver.bigK[n, mark]
            after = u + k
            acc["jump_mart"] += 2 * pair(k, P(u if limit == "left" else after))
            acc["jump_corr"] += energy(after) - energy(u) - 2 * pair(k, P(u))
            u = after
        for key in TERMS:
            series[key].append(acc[key])
        lhs.append(energy(path.right[i]))
    if i != len(path.times) - 1:
        raise ValueError("path has more records than the driver/noise sub-steps")
    return LedgerReport(np.asarray(path.times), np.asarray(lhs), lhs[0],
                        {k: np.asarray(v) for k, v in series.items()})


@dataclass
class Sweep:
    rows: list
    slope: float
    seed_slopes: dict

    def mean_by_dt(self):
        dts = sorted({r["dt"] for r in self.rows}, reverse=True)
        return [(dt, float(np.mean([r["max_residual"] for r in self.rows if r["dt"] == dt]))) for dt in dts]


def fit_slope(dts, errs):
    dts, errs = np.asarray(dts, float), np.asarray(errs, float)
    return float(np.polyfit(np.log(dts), np.log(errs), 1)[0])


def refinement_sweep(driver_factory, seeds, steps_list, T=1.0, modes=0, marks=None, quadrature="left", delta=None):
    """Max residual per (dt, seed) and the fitted log-log slope.

    ``driver_factory(time_grid, seed)`` builds the driver for one level.
    Noise is sampled on the finest grid and summed up for coarser levels, so
    all levels see the same Brownian path and the same jump times.
    """
    steps_list = sorted(int(s) for s in steps_list)
    if len(steps_list) < 2:
        raise ValueError("need at least two time steps for a sweep")
    finest = steps_list[-1]
    rows = []
    for seed in seeds:
        fine = sample_noise(TimeGrid(T, finest), modes, seed, nu=marks)
        for steps in steps_list:
            noise = fine if steps == finest else fine.coarsen(finest // steps)
            drv = driver_factory(noise.grid, seed)
            rep = ito_residual(build_path(drv, noise), drv, noise, quadrature=quadrature, delta=delta)
            rows.append({"seed": seed, "steps": steps, "dt": T / steps, "max_residual": rep.max_abs_residual})
    seed_slopes = {}
    for seed in seeds:
        sel = [r for r in rows if r["seed"] == seed]
        seed_slopes[seed] = fit_slope([r["dt"] for r in sel], [r["max_residual"] for r in sel])
    sweep = Sweep(rows, float("nan"), seed_slopes)
    dts, means = zip(*sweep.mean_by_dt())
    sweep.slope = fit_slope(dts, means)
    return sweep


# -- driver families -----------------------------------------------------------------

def closed_form_driver(grid, time, level=1.0, rate=-2.0):
    """``psi = level``, ``v* = rate`` everywhere: ``u_t = level + rate t`` exactly."""
    return SemimartingaleDriver(Field.constant(grid, level), time,
                                vstar=np.full((time.steps,) + grid.shape, float(rate)))


def pure_jump_driver(grid, time, size=-3.0, intensity=1.0, level=1.0):
    marks = MarkSpace.atoms([intensity])
    return SemimartingaleDriver(Field.constant(grid, level), time,
                                bigK=np.full((time.steps, 1) + grid.shape, float(size)), marks=marks)


SMOOTH_MARKS = MarkSpace.atoms([1.0, 0.5])


def smooth_driver(grid, time, wiener=0.0, jumps=True):
    """Smooth-in-time drivers whose positive part moves across the domain.

    ``wiener`` scales a smooth ``h``; with ``wiener = 0`` every integrand is
    deterministic.
    """
    x = lambda pts: pts[:, 0]

    def psi_fn(pts):
        return 0.8 * np.sin(2 * np.pi * x(pts)) + 0.1

    def vstar(t, pts):
        return np.exp(-2 * t) * (np.cos(3 * np.pi * x(pts)) - 0.3)

    def h(t, pts):
        return (wiener * (1 + t) * np.sin(np.pi * x(pts)))[:, None]

    def bigK(t, pts, z):
        return -0.3 * (1 + z) * np.exp(-t) * np.cos(np.pi * x(pts))

    return SemimartingaleDriver.from_functions(
        Field.from_function(grid, psi_fn), time, vstar=vstar,
        h=h if wiener else None, bigK=bigK if jumps else None,
        marks=SMOOTH_MARKS if jumps else MarkSpace.empty())


def piecewise_constant_driver(grid, time, seed, block=0.1, marks=SMOOTH_MARKS):
    """Random spatial profiles held constant on time blocks of length ``block``.

    Breakpoints fall on every time grid whose step divides ``block``.
    """
    rng = substream(seed, 0, AUX, 1)
    nblocks = int(math.ceil(time.T / block - 1e-9))
    shape = grid.shape
    v_blocks = rng.normal(0.0, 1.0, (nblocks,) + shape)
    k_blocks = rng.normal(-0.2, 0.4, (nblocks, len(marks)) + shape)
    psi = Field(grid, rng.normal(0.0, 0.5, shape))
    idx = np.minimum(np.floor(time.times()[:-1] / block + 1e-9).astype(int), nblocks - 1)
    return SemimartingaleDriver(psi, time, vstar=v_blocks[idx], bigK=k_blocks[idx], marks=marks)


DRIVERS = {
    "closed-form": closed_form_driver,
    "pure-jump": pure_jump_driver,
    "smooth": smooth_driver,
    "piecewise-constant": piecewise_constant_driver,
}
