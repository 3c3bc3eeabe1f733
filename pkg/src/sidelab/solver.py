"""Path-wise semi-implicit time stepping for the two jump-driven equations.

``eq1``: drift ``L u + I1 u + f``, Wiener noise ``G^k(u)``, jumps
``g(x, z, u-)`` against the compensated measure of stream "N".

``eq2``: as ``eq1`` (without ``g``) plus ``I2 + J - K`` in the drift and
jumps ``S_zeta u-`` against the compensated measure of stream "M".

Only the divergence-form diffusion is treated implicitly (theta-scheme,
conjugate gradients); every other term is explicit.  Steps are split at
exact jump times and jumps always act on the left limit.
"""
import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import identity
from scipy.sparse.linalg import cg

from . import ops
from .field import Field, centered_gradient, norms, positive_part
from .noise import TimeGrid


class SolverError(RuntimeError):
    """Raised with the step index and time at which integration failed."""

    def __init__(self, msg, step=None, time=None):
        super().__init__(msg if step is None else f"step {step} (t={time:.6g}): {msg}")
        self.step = step
        self.time = time


@dataclass(frozen=True)
class SolverConfig:
    equation: str
    time: TimeGrid
    grid: object
    theta: float = 1.0
    tol: float = 1e-12
    blowup: float = 1e8
    snapshot_every: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.equation not in ("eq1", "eq2"):
            raise ValueError(f"equation must be 'eq1' or 'eq2', got {self.equation!r}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")

    @property
    def stream(self):
        return "N" if self.equation == "eq1" else "M"


@dataclass
class PathRecord:
    """Recorded path: at each time the left limit and the value.

    ``times`` contains the grid times plus every jump time; ``left[i]`` and
    ``right[i]`` differ only at jump times.
    """
    grid: object
    times: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    is_jump: list = field(default_factory=list)
    jump_log: list = field(default_factory=list)

    def append(self, t, u_left, u_right, jump=False):
        self.times.append(float(t))
        self.left.append(u_left)
        self.right.append(u_right)
        self.is_jump.append(bool(jump))

    def field_at(self, i, side="right"):
        return Field(self.grid, (self.right if side == "right" else self.left)[i])

    @property
    def final(self):
        return self.field_at(-1)

    def norm_table(self):
        """Columns ``time, l2, h1, pos_l2`` for every record."""
        rows = []
        for t, v in zip(self.times, self.right):
            u = Field(self.grid, v)
            n = norms(u)
            rows.append((t, n.l2, n.h1, norms(positive_part(u)).l2))
        return np.array(rows)

    def to_csv(self, path, snapshots=False):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            head = ["time", "l2", "h1", "pos_l2"]
            if snapshots:
                head += [f"u{i}" for i in range(self.grid.size)]
            w.writerow(head)
            for row, v in zip(self.norm_table(), self.right):
                cells = [repr(float(c)) for c in row]
                if snapshots:
                    cells += [repr(float(c)) for c in np.ravel(v)]
                w.writerow(cells)

    def __eq__(self, other):
        return (isinstance(other, PathRecord) and self.times == other.times
                and self.is_jump == other.is_jump and self.jump_log == other.jump_log
                and all(np.array_equal(a, b) for a, b in zip(self.left, other.left))
                and all(np.array_equal(a, b) for a, b in zip(self.right, other.right)))


class _Stepper:
    """Per-run cache of grid points and the implicit solve."""

    def __init__(self, coeffs, grid, theta, tol):
        self.coeffs = coeffs
        self.grid = grid
        self.theta = theta
        self.tol = tol
        self.pts = grid.points()

    def drift(self, values, t, equation):
        c, g, pts = self.coeffs, self.grid, self.pts
        out = ops._i1_values(values, g, c, t, pts)
        if equation == "eq2":
            out = out + ops._i2_values(values, g, c, t)
            jv, kv = ops._jk_values(values, g, c, t, pts)
            out = out + (jv - kv)
        if c.f is not None:
            grad = centered_gradient(values, g).reshape(g.dim, -1).T
            out = out + c.eval_f(t, pts, values.ravel(), grad).reshape(g.shape)
        return out

    def compensator(self, values, t, equation):
        """``sum_marks mass * (jump increment)`` evaluated at ``values``."""
        c, g, pts = self.coeffs, self.grid, self.pts
        out = np.zeros(g.shape)
        if equation == "eq1":
            if c.g is not None:
                for z, w in c.nu:
                    out = out + w * c.eval_g(t, pts, z, values.ravel()).reshape(g.shape)
        else:
            for z, w in c.pi2:
                out = out + w * ops._s_values(values, g, c, t, z, pts)
        return out

    def jump(self, values, t, mark_index, equation):
        c, g = self.coeffs, self.grid
        if equation == "eq1":
            if c.g is None:
                return values
            z = c.nu.labels[mark_index]
            return values + c.eval_g(t, self.pts, z, values.ravel()).reshape(g.shape)
        z = c.pi2.labels[mark_index]
        return values + ops._s_values(values, g, c, t, z, self.pts)

    def continuous(self, values, t, dt, dw, equation):
        c, g = self.coeffs, self.grid
        diff = ops.Diffusion(c, g, t)
        rhs = values + dt * self.drift(values, t, equation)
        if self.theta < 1.0 and not diff.is_zero:
            rhs = rhs + (1.0 - self.theta) * dt * diff(values)
        if c.modes:
            gk = ops._g_values(values, g, c, t, self.pts)
            rhs = rhs + np.tensordot(dw, gk, axes=1)
        rhs = rhs - dt * self.compensator(values, t, equation)
        if diff.is_zero or self.theta == 0.0:
            return rhs
        return self._solve(diff, rhs, values, dt)

    def _solve(self, diff, rhs, guess, dt):
        g = self.grid
        op = identity(g.size, format="csr") - (self.theta * dt) * diff.matrix()
        sol, info = cg(op, rhs.ravel(), x0=guess.ravel(), rtol=self.tol, atol=0.0, maxiter=20 * g.size)
        if info != 0:
            raise SolverError(f"conjugate gradients did not converge (info={info})")
        return sol.reshape(g.shape)


def step_eq1(u, t, dt, coeffs, dw=(), events=(), theta=1.0, tol=1e-12):
    """One step of ``eq1`` from ``t`` to ``t + dt``, then the jumps in ``events``.

    ``events`` are ``(time, mark_index)`` pairs of stream "N" in ``(t, t + dt]``,
    applied in order to the pre-jump value.
    """
    return _step(u, t, dt, coeffs, dw, events, theta, tol, "eq1")


def step_eq2(u, t, dt, coeffs, dw=(), events=(), theta=1.0, tol=1e-12):
    """One step of ``eq2``; ``events`` are jumps of stream "M"."""
    return _step(u, t, dt, coeffs, dw, events, theta, tol, "eq2")


def _step(u, t, dt, coeffs, dw, events, theta, tol, equation):
    st = _Stepper(coeffs, u.grid, theta, tol)
    dw = np.asarray(dw, dtype=float).reshape(coeffs.modes) if coeffs.modes else np.zeros(0)
    v = st.continuous(u.values, t, dt, dw, equation)
    for tau, mark in sorted(events):
        v = st.jump(v, tau, mark, equation)
    return Field(u.grid, v)


def solve(config, coeffs, psi, noise):
    """Integrate from ``psi`` over ``config.time`` driven by ``noise``."""
    if noise.grid != config.time:
        raise ValueError("noise realization and solver use different time grids")
    if coeffs.modes and noise.modes < coeffs.modes:
        raise ValueError(f"coefficients use {coeffs.modes} Wiener modes, noise has {noise.modes}")
    grid = config.grid
    if psi.grid != grid:
        raise ValueError("initial field is not on the solver grid")
    st = _Stepper(coeffs, grid, config.theta, config.tol)
    eq = config.equation
    times = config.time.times()
    last = config.time.steps
    rec = PathRecord(grid)
    u = np.array(psi.values)
    rec.append(0.0, u, u)
    stream = config.stream if jumps_active(coeffs, eq) else None
    for n, t0, t1, dw, events in noise.substeps(stream):
        try:
            u = st.continuous(u, t0, t1 - t0, dw[: coeffs.modes], eq)
        except (SolverError, FloatingPointError) as exc:
            raise SolverError(str(exc), n, t0) from exc
        _guard(u, grid, config.blowup, n, t1)
        if events:
            left = u
            for tau, mark in events:
                u = st.jump(u, tau, mark, eq)
                rec.jump_log.append((tau, mark))
            _guard(u, grid, config.blowup, n, t1)
            rec.append(t1, left, u, jump=True)
        elif t1 == times[n + 1] and ((n + 1) % config.snapshot_every == 0 or n + 1 == last):
            rec.append(t1, u, u)
    return rec


def jumps_active(coeffs, equation):
    """Whether the jump stream of ``equation`` can change the solution at all."""
    if equation == "eq1":
        return coeffs.g is not None and len(coeffs.nu) > 0
    return len(coeffs.pi2) > 0 and (coeffs.b is not None or coeffs.lam is not None)


def _guard(u, grid, cap, n, t):
    if not np.all(np.isfinite(u)):
        raise SolverError("non-finite values", n, t)
    l2 = math.sqrt(float(np.sum(u * u)) * grid.cell_volume)
    if l2 > cap:
        raise SolverError(f"|u|_L2 = {l2:.3g} exceeds blow-up cap {cap:.3g}", n, t)
