"""Coupled comparison runs, the scalar sign-flip experiment and Monte Carlo summaries.

A comparison drives two solves with one noise realization: ``u`` with drift
``f`` and data ``psi``, ``v`` with drift ``F`` and data ``Psi``.  The defect of
a path is ``sup_t |(u_t - v_t)^+|_{L2}``.  Each refinement level halves both
``dt`` and ``h``; noise is drawn once on the finest time grid and summed up for
the coarser levels, so every level sees the same Brownian path and jump times.
"""
import csv
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.stats import norm

from . import coefficients
from .assumptions import Verdict, validate
from .coefficients import CoefficientSet
from .field import Field, Grid, restrict
from .noise import MarkSpace, TimeGrid, sample_jumps, sample_noise
from .solver import SolverConfig, solve


class AssumptionViolation(RuntimeError):
    """A comparison spec failed its sampled coefficient or ordering checks."""

    def __init__(self, failed, report):
        super().__init__("coefficient checks failed: " + ", ".join(failed)
                         + " (pass override=True to run anyway)")
        self.failed = failed
        self.report = report


# -- Monte Carlo aggregation -------------------------------------------------------

@dataclass(frozen=True)
class Aggregate:
    mean: float
    lo: float
    hi: float
    n: int
    level: float

    @property
    def half_width(self):
        return 0.5 * (self.hi - self.lo)


def mc_aggregate(values, level=0.95):
    """Sample mean with a normal-approximation confidence interval.

    Uses the population standard deviation and sums in the given order, so
    the result depends only on the inputs.
    """
    vals = np.asarray(values, dtype=float).ravel()
    n = vals.size
    if n < 2:
        raise ValueError("need at least two samples")
    if not 0 < level < 1:
        raise ValueError("confidence level must lie in (0, 1)")
    mean = math.fsum(vals) / n
    std = math.sqrt(math.fsum((vals - mean) ** 2) / n)
    half = float(norm.ppf(0.5 + level / 2)) * std / math.sqrt(n)
    return Aggregate(mean, mean - half, mean + half, n, level)


def _map_paths(fn, paths, workers):
    if workers <= 1:
        return [fn(p) for p in range(paths)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(paths)))


# -- comparison ------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ComparisonSpec:
    """Two equations sharing every coefficient except the drift and the data.

    ``coeffs.f`` is the lower drift ``f``; ``F`` the upper one (``None`` means
    ``F = f``).  ``psi`` and ``Psi`` map points ``(N, dim)`` to values.
    """
    name: str
    coeffs: CoefficientSet
    psi: Callable
    Psi: Callable
    F: Optional[Callable] = None
    equation: str = "eq1"
    extents: tuple = ((0.0, 1.0),)
    n0: int = 15
    steps0: int = 25
    levels: int = 3
    T: float = 0.5
    paths: int = 200
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.levels < 1 or self.paths < 1:
            raise ValueError("levels and paths must be positive")
        if len(self.extents) != self.coeffs.dim:
            raise ValueError("extents do not match the coefficient dimension")

    def upper(self):
        return self.coeffs.replace(f=self.F) if self.F is not None else self.coeffs

    def grid(self, level):
        g = Grid.box(self.extents, self.n0)
        for _ in range(level):
            g = g.refine()
        return g

    def time(self, level):
        return TimeGrid(self.T, self.steps0 * 2 ** level)

    def describe(self):
        return {"name": self.name, "params": self.params, "equation": self.equation,
                "extents": [list(e) for e in self.extents], "n0": self.n0, "steps0": self.steps0,
                "levels": self.levels, "T": self.T, "paths": self.paths, "seed": self.seed}

    def digest(self):
        text = json.dumps(self.describe(), sort_keys=True, default=repr)
        return hashlib.sha256(text.encode()).hexdigest()


def check_spec(spec, budget=2000):
    """Coefficient checks for the shared core plus sampled ``f <= F`` and ``psi <= Psi``."""
    rep = validate(spec.coeffs, spec.extents, budget=budget, seed=spec.seed, T=spec.T)
    up = validate(spec.upper(), spec.extents, budget=budget, seed=spec.seed, T=spec.T)
    for k, v in up.verdicts.items():
        if not v.passed and rep.verdicts[k].passed:
            rep.verdicts[k] = v
    rng = np.random.default_rng(spec.seed)
    lo = np.array([e[0] for e in spec.extents])
    hi = np.array([e[1] for e in spec.extents])
    x = lo + (hi - lo) * rng.random((budget, spec.coeffs.dim))
    r = rng.uniform(-2, 2, budget)
    p = rng.uniform(-2, 2, (budget, spec.coeffs.dim))
    t = float(rng.uniform(0, spec.T))
    gap = spec.upper().eval_f(t, x, r, p) - spec.coeffs.eval_f(t, x, r, p)
    k = int(np.argmin(gap))
    rep.verdicts["drift_order"] = Verdict("drift_order", bool(gap[k] >= -1e-12), float(gap[k]), "f <= F",
                                          {"x": x[k], "r": r[k]})
    pts = spec.grid(spec.levels - 1).points()
    gap = np.asarray(spec.Psi(pts), float) - np.asarray(spec.psi(pts), float)
    k = int(np.argmin(gap))
    rep.verdicts["initial_order"] = Verdict("initial_order", bool(gap[k] >= -1e-12), float(gap[k]),
                                            "psi <= Psi", {"x": pts[k]})
    return rep


def positive_defect(path_u, path_v):
    """``sup_t |(u - v)^+|_{L2}`` over common records, plus the worst (time, node, value)."""
    if path_u.times != path_v.times:
        raise ValueError("coupled paths were recorded at different times")
    vol = path_u.grid.cell_volume
    best, worst = 0.0, None
    for t, a, b in zip(path_u.times, path_u.right, path_v.right):
        d = np.maximum(a - b, 0.0)
        val = math.sqrt(math.fsum(d.ravel() ** 2) * vol)
        if val > best:
            k = int(np.argmax(d))
            best, worst = val, {"time": t, "node": k, "magnitude": float(d.ravel()[k])}
    return best, worst


def _lookup(path, t):
    i = int(np.searchsorted(path.times, t - 1e-12))
    j = i
    while j + 1 < len(path.times) and abs(path.times[j + 1] - t) <= 1e-12:
        j += 1
    if i >= len(path.times) or abs(path.times[j] - t) > 1e-12:
        raise KeyError(t)
    return path.right[j]


def level_gap(fine, coarse):
    """``sup_t |restrict(u_fine) - u_coarse|_{L2}`` over the coarse record times."""
    best = 0.0
    for t, v in zip(coarse.times, coarse.right):
        uf = restrict(Field(fine.grid, _lookup(fine, t)), coarse.grid)
        d = uf.values - v
        best = max(best, math.sqrt(math.fsum(d.ravel() ** 2) * coarse.grid.cell_volume))
    return best


@dataclass
class ComparisonReport:
    name: str
    spec_hash: str
    seed: int
    paths: int
    rows: list             # one dict per refinement level
    defects: np.ndarray    # (levels, paths)
    control: Aggregate     # level-to-level discretization gap of the lower solution
    violations: list       # worst point of every path with a positive defect at the finest level
    extra: dict = field(default_factory=dict)

    def non_increasing(self):
        """Each level's mean is below the previous one, up to both CI half-widths."""
        for a, b in zip(self.rows[:-1], self.rows[1:]):
            slack = (a["ci_hi"] - a["ci_lo"]) / 2 + (b["ci_hi"] - b["ci_lo"]) / 2
            if b["mean_defect"] > a["mean_defect"] + slack:
                return False
        return True

    def below_control(self):
        return self.control is not None and self.rows[-1]["mean_defect"] <= self.control.mean

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["refine_level", "dt", "h", "mean_defect", "ci_lo", "ci_hi"])
            for r in self.rows:
                cells = [repr(float(r[k])) for k in ("dt", "h", "mean_defect", "ci_lo", "ci_hi")]
                w.writerow([r["refine_level"]] + cells)

    def summary(self):
        out = {"name": self.name, "spec_hash": self.spec_hash, "seed": self.seed, "paths": self.paths,
               "rows": self.rows, "non_increasing": self.non_increasing(),
               "control_gap": None if self.control is None else
               {"mean": self.control.mean, "ci_lo": self.control.lo, "ci_hi": self.control.hi},
               "below_control": self.below_control(), "violations": self.violations[:50],
               "violating_paths": len(self.violations)}
        out.update(self.extra)
        return out

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _comparison_path(spec, p):
    nu = spec.coeffs.nu if len(spec.coeffs.nu) else None
    pi2 = spec.coeffs.pi2 if len(spec.coeffs.pi2) else None
    finest = spec.levels - 1
    fine = sample_noise(spec.time(finest), spec.coeffs.modes, spec.seed, p, nu=nu, pi2=pi2)
    lower, upper = spec.coeffs, spec.upper()
    defects, worst, lower_paths = [], None, []
    for lev in range(spec.levels):
        noise = fine.coarsen(2 ** (finest - lev))
        grid = spec.grid(lev)
        cfg = SolverConfig(spec.equation, noise.grid, grid, seed=spec.seed)
        u = solve(cfg, lower, Field.from_function(grid, spec.psi), noise)
        v = solve(cfg, upper, Field.from_function(grid, spec.Psi), noise)
        d, worst = positive_defect(u, v)
        defects.append(d)
        lower_paths.append(u)
    gap = level_gap(lower_paths[-1], lower_paths[-2]) if spec.levels > 1 else float("nan")
    return defects, worst, gap


def run_comparison(spec, workers=1, override=False, level=0.95):
    """Monte Carlo comparison study; raises :class:`AssumptionViolation` unless ``override``."""
    if not override:
        rep = check_spec(spec)
        if not rep.passed:
            raise AssumptionViolation(rep.failed(), rep)
    results = _map_paths(lambda p: _comparison_path(spec, p), spec.paths, workers)
    return _report(spec, results, level)


def _report(spec, results, level, extra=None):
    defects = np.array([r[0] for r in results]).T
    rows = []
    for lev in range(spec.levels):
        agg = mc_aggregate(defects[lev], level) if spec.paths > 1 else \
            Aggregate(float(defects[lev][0]), float(defects[lev][0]), float(defects[lev][0]), 1, level)
        rows.append({"refine_level": lev, "dt": spec.time(lev).dt, "h": spec.grid(lev).h[0],
                     "mean_defect": agg.mean, "ci_lo": agg.lo, "ci_hi": agg.hi})
    gaps = [r[2] for r in results]
    control = mc_aggregate(gaps, level) if spec.levels > 1 and spec.paths > 1 else None
    violations = [dict(path=p, level=spec.levels - 1, **r[1]) for p, r in enumerate(results)
                  if r[1] is not None and r[0][-1] > 0]
    return ComparisonReport(spec.name, spec.digest(), spec.seed, spec.paths, rows, defects, control,
                            violations, extra or {})


# -- preset comparison specs -----------------------------------------------------------

def _level(offset):
    """Growth allowance ``h`` covering a constant drift offset in ``F``."""
    return lambda t, x: np.full(len(x), math.sqrt(2) * offset)


def _sine(amp=0.5, offset=0.0):
    return lambda pts: amp * np.sin(np.pi * pts[:, 0]) + offset


def linear_spec(paths=200, seed=0, levels=3, **kw):
    """Linear drift with multiplicative and gradient noise; ``F = f + 0.5``, ``Psi = psi + 0.1 sin``."""
    core = coefficients.affine(modes=1, a=1.0, phi=0.3, f1=-1.0, s1=0.5).replace(h_growth=_level(0.5))
    return ComparisonSpec("linear", core, _sine(0.5), _sine(0.6), F=lambda t, x, r, p: 0.5 - r,
                          paths=paths, seed=seed, levels=levels, params={"preset": "linear"}, **kw)


def cubic_spec(paths=200, seed=0, levels=3, **kw):
    """``f = -r^3``, ``F = f + 0.5``, ``psi = Psi - 0.2``, jumps ``-0.5 r`` (r + g increasing)."""
    core = coefficients.cubic_drift(modes=1, s1=0.2, g1=-0.5, nu=(1.0,))
    return ComparisonSpec("cubic", core, _sine(0.8, -0.2), _sine(0.8), F=lambda t, x, r, p: 0.5 - r ** 3,
                          paths=paths, seed=seed, levels=levels, params={"preset": "cubic"}, **kw)


def jump_coupled_spec(paths=200, seed=0, levels=3, **kw):
    """Variable diffusion, nonlocal shift operator and two jump marks acting on ``u``."""
    base = coefficients.trigonometric(modes=1, a=1.0, amp=0.3, c0=0.05, pi1=(1.0,))
    core = base.replace(
        name="jump-coupled", f=lambda t, x, r, p: -r,
        sigma=lambda t, x, r: 0.2 * r[:, None],
        g=lambda t, x, z, r: -0.3 * (1 + z) * r,
        nu=MarkSpace.atoms([1.0, 0.5]), h_growth=_level(0.3),
    )
    return ComparisonSpec("jump-coupled", core, _sine(0.5, -0.1), _sine(0.5),
                          F=lambda t, x, r, p: 0.3 - r, paths=paths, seed=seed, levels=levels,
                          params={"preset": "jump-coupled"}, **kw)


def violation_spec(paths=200, seed=0, levels=3, coef=-2.0, intensity=1.0, **kw):
    """Spatially constant sign-flip setup: ``a = 0``, ``psi = -1``, ``Psi = 1``, ``g = coef r``."""
    core = coefficients.counterexample_g(intensity=intensity, coef=coef) if coef else \
        coefficients.counterexample_g(intensity=intensity).replace(g=None)
    return ComparisonSpec("violation", core, lambda pts: -np.ones(len(pts)), lambda pts: np.ones(len(pts)),
                          paths=paths, seed=seed, levels=levels,
                          params={"preset": "violation", "coef": coef, "intensity": intensity}, **kw)


COMPARISONS = {
    "linear": linear_spec,
    "cubic": cubic_spec,
    "jump-coupled": jump_coupled_spec,
    "violation": violation_spec,
}


# -- violation demo --------------------------------------------------------------------

def run_violation_demo(spec, workers=1, level=0.95):
    """Comparison run with the checks bypassed, plus the closed-form first-jump gap.

    For a spatially constant setup with ``a = 0``, ``psi = -1``, ``Psi = 1``
    and ``g = -2 r`` both solutions are scalar: ``-e^{2t}`` and ``e^{2t}``
    until the first jump, where they swap sign, so right after it
    ``u - v = 2 e^{2 tau}`` at every node (``-2`` when ``g = 0``).  ``extra["first_jump"]`` lists the
    measured gap next to that prediction for each jumping path (finest level).
    """
    results = _map_paths(lambda p: _comparison_path(spec, p), spec.paths, workers)
    rep = _report(spec, results, level)
    finest = spec.levels - 1
    grid, tg = spec.grid(finest), spec.time(finest)
    cfg = SolverConfig(spec.equation, tg, grid)
    rows = []
    for p in range(min(spec.paths, 50)):
        noise = sample_noise(tg, 0, spec.seed, p, nu=spec.coeffs.nu)
        s = noise.stream("N")
        if not len(s):
            continue
        u = solve(cfg, spec.coeffs, Field.from_function(grid, spec.psi), noise)
        v = solve(cfg, spec.upper(), Field.from_function(grid, spec.Psi), noise)
        tau = float(s.times[0])
        # without a jump coefficient nothing is recorded at tau; use the next record
        i = u.is_jump.index(True) if any(u.is_jump) else int(np.searchsorted(u.times, tau))
        d = u.right[i] - v.right[i]
        scale = math.sqrt(grid.size * grid.cell_volume)
        rows.append({"path": p, "tau": tau, "gap": float(np.max(d)),
                     "predicted": _first_jump_gap(spec, tau), "l2_scale": scale})
    rep.extra["first_jump"] = rows
    return rep


def _first_jump_gap(spec, tau):
    """``u - v`` right after the first jump: ``-2 (1 + coef) e^{-coef rate tau}``."""
    coef = spec.params.get("coef", -2.0) if spec.coeffs.g is not None else 0.0
    rate = spec.coeffs.nu.total
    return -2.0 * (1.0 + coef) * math.exp(-coef * rate * tau)


# -- scalar counterexample -------------------------------------------------------------

@dataclass
class CounterexampleReport:
    T: float
    intensity: float
    coef: float
    seed: int
    taus: np.ndarray     # first jump time, nan if none
    flip_ok: np.ndarray
    min_u: np.ndarray
    growth: np.ndarray   # measured log(u(tau-)/u(0)) / tau on the first segment

    @property
    def paths(self):
        return len(self.taus)

    @property
    def negative(self):
        return self.min_u < 0

    @property
    def negative_fraction(self):
        return float(np.mean(self.negative))

    @property
    def expected_fraction(self):
        """``P(tau <= T)``; every jump flips the sign when ``coef < -1``."""
        return 1.0 - math.exp(-self.intensity * self.T) if self.coef < -1 else 0.0

    @property
    def sigma(self):
        p = self.expected_fraction
        return math.sqrt(p * (1 - p) / self.paths)

    def within(self, k=3.0):
        return abs(self.negative_fraction - self.expected_fraction) <= k * self.sigma

    def summary(self, level=0.95):
        jumped = ~np.isnan(self.taus)
        agg = mc_aggregate(self.negative.astype(float), level)
        return {
            "T": self.T, "intensity": self.intensity, "coef": self.coef, "seed": self.seed,
            "paths": self.paths, "jumping_paths": int(jumped.sum()),
            "negative_fraction": self.negative_fraction, "ci_lo": agg.lo, "ci_hi": agg.hi,
            "expected_fraction": self.expected_fraction, "sigma": self.sigma,
            "within_3sigma": self.within(3.0), "flip_identity_all": bool(self.flip_ok[jumped].all()),
            "tau_mean": float(np.mean(self.taus[jumped])) if jumped.any() else None,
            "tau_le_T_fraction": float(jumped.mean()),
            "inter_jump_growth_rate": float(np.mean(self.growth[jumped])) if jumped.any() else None,
            "inter_jump_growth_rate_closed_form": -self.coef * self.intensity,
        }

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["path", "tau", "flip_ok", "min_u"])
            for p in range(self.paths):
                tau = "" if np.isnan(self.taus[p]) else repr(float(self.taus[p]))
                w.writerow([p, tau, int(self.flip_ok[p]), repr(float(self.min_u[p]))])

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _scalar_path(T, marks, coef, seed, p, u0):
    """Exact solution of ``du = -int coef u(s-) dN~`` with a single atom of mass ``rate``."""
    rate = marks.total
    s = sample_jumps(TimeGrid(T, 1), marks, seed, p)
    u, t, lowest = u0, 0.0, u0
    tau, flip, growth = math.nan, True, math.nan
    for k, tj in enumerate(s.times):
        # between jumps only the compensator acts: du = -coef * rate * u dt
        left = u * math.exp(-coef * rate * (tj - t))
        u = left + coef * left
        if k == 0:
            tau = float(tj)
            flip = u == (1.0 + coef) * left
            growth = math.log(left / u0) / tj
        lowest = min(lowest, left, u)
        t = tj
    lowest = min(lowest, u * math.exp(-coef * rate * (T - t)))
    return tau, flip, lowest, growth


def run_counterexample(T=1.0, intensity=1.0, paths=10_000, seed=0, coef=-2.0, u0=1.0, workers=1):
    """Exact path-by-path simulation of the scalar equation ``du = coef u(s-) (dN - intensity ds)``.

    With ``coef = -2`` every jump maps ``u(tau-)`` to ``-u(tau-)``, so a path
    turns negative exactly when it jumps before ``T``.
    """
    if not intensity > 0:
        raise ValueError("intensity must be positive")
    marks = MarkSpace.atoms([intensity])
    res = _map_paths(lambda p: _scalar_path(T, marks, coef, seed, p, u0), paths, workers)
    taus, flips, mins, growth = (np.array(c) for c in zip(*res))
    return CounterexampleReport(T, intensity, coef, seed, taus.astype(float), flips.astype(bool),
                                mins.astype(float), growth.astype(float))
