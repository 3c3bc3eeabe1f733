"""Grid functions on a box with zero extension outside the interior nodes.

A :class:`Field` is the discrete stand-in for an element of ``H^1_0(Q)``:
values live on the interior nodes of a uniform grid and are implicitly zero
on the boundary and beyond.  A periodic grid is available for operator tests
that want a translation-invariant domain instead.
"""
import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class Grid:
    """Uniform grid on a box.

    Non-periodic grids have ``n`` interior nodes per axis at
    ``lower + (i + 1) * h``; the nodes at ``lower`` and ``lower + (n + 1) * h``
    are the boundary.  Periodic grids have ``n`` nodes at ``lower + i * h``.
    Build grids with :meth:`box`.
    """
    lower: tuple
    h: tuple
    n: tuple
    periodic: bool = False

    def __post_init__(self):
        if len(self.lower) != len(self.h) or len(self.h) != len(self.n):
            raise ValueError("lower, h and n must have one entry per axis")
        if self.dim not in (1, 2):
            raise ValueError("only 1-D and 2-D grids are supported")
        if any(k < 2 for k in self.n):
            raise ValueError("need at least 2 nodes per axis")
        if any(not (s > 0 and math.isfinite(s)) for s in self.h):
            raise ValueError("grid spacing must be positive")

    @classmethod
    def box(cls, extents, n, periodic=False):
        """Grid on ``prod [a_i, b_i]`` with ``n_i`` nodes along axis ``i``."""
        extents = [tuple(map(float, e)) for e in extents]
        if np.ndim(n) == 0:
            n = [int(n)] * len(extents)
        n = tuple(int(k) for k in n)
        if len(n) != len(extents):
            raise ValueError("one node count per axis expected")
        h = []
        for (a, b), k in zip(extents, n):
            if not b > a:
                raise ValueError(f"empty interval [{a}, {b}]")
            h.append((b - a) / (k if periodic else k + 1))
        return cls(tuple(a for a, _ in extents), tuple(h), n, periodic)

    @property
    def dim(self):
        return len(self.n)

    @property
    def shape(self):
        return self.n

    @property
    def size(self):
        return int(np.prod(self.n))

    @property
    def extents(self):
        m = 0 if self.periodic else 1
        return tuple((a, a + (k + m) * s) for a, s, k in zip(self.lower, self.h, self.n))

    @property
    def cell_volume(self):
        return float(np.prod(self.h))

    def axes(self):
        off = 0 if self.periodic else 1
        return [a + (np.arange(k) + off) * s for a, s, k in zip(self.lower, self.h, self.n)]

    def points(self):
        """Node coordinates, shape ``(size, dim)``, C order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def distance_to_boundary(self):
        if self.periodic:
            raise ValueError("a periodic grid has no boundary")
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        dist = [np.minimum(m - a, b - m) for m, (a, b) in zip(mesh, self.extents)]
        return np.minimum.reduce(dist)

    def pad(self, k):
        """Same spacing, ``k`` extra nodes on every side."""
        if self.periodic:
            raise ValueError("cannot pad a periodic grid")
        return Grid(tuple(a - k * s for a, s in zip(self.lower, self.h)), self.h,
                    tuple(m + 2 * k for m in self.n))

    def refine(self):
        """Halve the spacing; the old interior nodes are the odd nodes of the new grid."""
        if self.periodic:
            return Grid(self.lower, tuple(s / 2 for s in self.h), tuple(2 * k for k in self.n), True)
        return Grid(self.lower, tuple(s / 2 for s in self.h), tuple(2 * k + 1 for k in self.n))


@dataclass(frozen=True, eq=False)
class Field:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            if v.size != self.grid.size:
                raise ValueError(f"values of shape {v.shape} do not fit grid {self.grid.shape}")
            v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid, c):
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def from_function(cls, grid, fn):
        """Tabulate ``fn(points) -> (size,)`` on the interior nodes."""
        vals = np.asarray(fn(grid.points()), dtype=float)
        return cls(grid, np.broadcast_to(vals, (grid.size,)).reshape(grid.shape))

    def _other(self, other):
        if isinstance(other, Field):
            _check_same(self, other)
            return other.values
        return other

    def __add__(self, other):
        return Field(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return Field(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return Field(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values)

    def __repr__(self):
        return f"Field(grid={self.grid!r}, values=<{self.values.shape} array>)"


class Norms(NamedTuple):
    l2: float
    h1: float


def _check_same(u, v):
    if u.grid != v.grid:
        raise ValueError("fields live on different grids")


def _fsum(a):
    # correctly rounded sums keep results independent of zero padding and summation order
    return math.fsum(np.ravel(a))


def inner(u, v):
    """Discrete L2 inner product ``h^d * sum u v``."""
    _check_same(u, v)
    return _fsum(u.values * v.values) * u.grid.cell_volume


def forward_differences(values, grid, axis):
    """Forward difference quotients along ``axis`` on every grid edge.

    With zero extension a non-periodic axis of ``n`` nodes has ``n + 1``
    edges, including the two that touch the boundary.
    """
    h = grid.h[axis]
    if grid.periodic:
        return (np.roll(values, -1, axis=axis) - values) / h
    pad = [(0, 0)] * values.ndim
    pad[axis] = (1, 1)
    return np.diff(np.pad(values, pad), axis=axis) / h


def centered_gradient(values, grid):
    """Centered differences at the nodes, shape ``(dim, *grid.shape)``."""
    out = []
    for ax, h in enumerate(grid.h):
        if grid.periodic:
            up, dn = np.roll(values, -1, axis=ax), np.roll(values, 1, axis=ax)
        else:
            pad = [(0, 0)] * values.ndim
            pad[ax] = (1, 1)
            p = np.pad(values, pad)
            up = np.take(p, np.arange(2, p.shape[ax]), axis=ax)
            dn = np.take(p, np.arange(0, p.shape[ax] - 2), axis=ax)
        out.append((up - dn) / (2 * h))
    return np.stack(out)


def gradient_l2_sq(u):
    vol = u.grid.cell_volume
    return sum(_fsum(forward_differences(u.values, u.grid, ax) ** 2) * vol
               for ax in range(u.grid.dim))


def norms(u):
    l2_sq = inner(u, u)
    return Norms(math.sqrt(l2_sq), math.sqrt(l2_sq + gradient_l2_sq(u)))


def positive_part(u):
    return Field(u.grid, np.maximum(u.values, 0.0))


def mollifier_kernel(grid, eps):
    """Discretely normalized bump ``(1 - |x/eps|^2)^2`` on ``|x| < eps``."""
    if any(eps < 2 * h for h in grid.h):
        raise ValueError(f"eps={eps} is below two grid cells {grid.h}; kernel not resolvable")
    offs = [np.arange(-int(eps // h), int(eps // h) + 1) * h for h in grid.h]
    mesh = np.meshgrid(*offs, indexing="ij")
    s = sum(m ** 2 for m in mesh) / eps ** 2
    k = np.where(s < 1, (1 - s) ** 2, 0.0)
    return k / k.sum()


def mollify(u, eps):
    k = mollifier_kernel(u.grid, eps)
    mode = "wrap" if u.grid.periodic else "constant"
    return Field(u.grid, ndimage.correlate(u.values, k, mode=mode, cval=0.0))


def cutoff(grid, n):
    """Cutoff ``phi_n``: 0 within ``1/(2n)`` of the boundary, 1 beyond ``1/n``.

    Linear ramp in the distance to the boundary, so the slope is ``2n``.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be a positive integer")
    if 1.0 / n <= max(grid.h):
        raise ValueError(f"1/n = {1 / n} does not exceed one grid cell {max(grid.h)}")
    r = grid.distance_to_boundary()
    return Field(grid, np.clip(2 * n * r - 1, 0.0, 1.0))


def restrict(u, coarse):
    """Inject a field from ``coarse.refine()`` back onto ``coarse``."""
    if u.grid != coarse.refine():
        raise ValueError("field does not live on the refinement of the target grid")
    start = 0 if coarse.periodic else 1
    sl = tuple(slice(start, None, 2) for _ in range(coarse.dim))
    return Field(coarse, u.values[sl])


def to_csv(u, path):
    names = [f"x{i}" for i in range(u.grid.dim)] + ["value"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for p, v in zip(u.grid.points(), u.values.ravel()):
            w.writerow([repr(float(c)) for c in p] + [repr(float(v))])
