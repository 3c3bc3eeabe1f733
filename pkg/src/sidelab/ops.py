"""Discrete versions of the drift, diffusion and nonlocal operators.

Shifted evaluations ``u(x + s)`` use (bi)linear interpolation in index space
with zero extension (or wrap-around on periodic grids); gradients inside the
nonlocal integrands are centered differences.  Mark integrals are exact sums
over the atoms of the mark spaces.
"""
import math

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import sparse

from .field import Field, centered_gradient, inner, positive_part, _check_same


def _gather(values, grid, idx):
    """``values`` at integer index tuples ``idx`` (arrays), zero outside the grid."""
    if grid.periodic:
        return values[tuple(i % n for i, n in zip(idx, grid.n))]
    inside = np.ones(idx[0].shape, dtype=bool)
    for i, n in zip(idx, grid.n):
        inside &= (i >= 0) & (i < n)
    clipped = tuple(np.clip(i, 0, n - 1) for i, n in zip(idx, grid.n))
    return np.where(inside, values[clipped], 0.0)


def shift_values(values, grid, shift):
    """Interpolate ``values`` at ``x + shift`` for every node ``x``.

    ``shift`` is a ``(dim,)`` vector or a ``(size, dim)`` array of per-node
    shifts.  A zero shift reproduces ``values`` bit for bit.
    """
    shift = np.broadcast_to(np.asarray(shift, dtype=float), (grid.size, grid.dim))
    base = np.indices(grid.shape).reshape(grid.dim, -1)
    lo, frac = [], []
    for ax in range(grid.dim):
        p = base[ax] + shift[:, ax] / grid.h[ax]
        i0 = np.floor(p)
        lo.append(i0.astype(np.int64))
        frac.append(p - i0)
    out = np.zeros(grid.size)
    for corner in np.ndindex(*(2,) * grid.dim):
        w = np.ones(grid.size)
        idx = []
        for ax, bit in enumerate(corner):
            w = w * (frac[ax] if bit else 1.0 - frac[ax])
            idx.append(lo[ax] + bit)
        out = out + w * _gather(values, grid, idx)
    return out.reshape(grid.shape)


# -- divergence-form diffusion ---------------------------------------------

class Diffusion:
    """Matrix-free ``sum_ij D_j^-( a^ij D_i^+ u )`` with zero exterior values.

    Diagonal coefficients are evaluated at edge midpoints and off-diagonal
    ones at cell centres, which keeps the operator symmetric.
    """

    def __init__(self, coeffs, grid, t):
        self.grid = grid
        self.parts = []
        d = grid.dim
        h = np.asarray(grid.h)
        for i in range(d):
            for j in range(d):
                shape = list(grid.n)
                if not grid.periodic:
                    shape[j] += 1  # flux needed at k_j = 0..n in padded indexing
                idx = np.indices(shape).reshape(d, -1).astype(float)
                if not grid.periodic:
                    idx[j] -= 1.0  # padded index k -> interior index k - 1
                off = 1.0 if not grid.periodic else 0.0
                pts = np.asarray(grid.lower) + (idx.T + off) * h
                pts[:, i] += h[i] / 2
                if j != i:
                    pts[:, j] += h[j] / 2
                coef = coeffs.eval_a(t, pts)[:, i, j].reshape(shape)
                if np.any(coef != 0):
                    self.parts.append((i, j, np.array(coef)))

    @property
    def is_zero(self):
        return not self.parts

    def matrix(self):
        """The operator as a CSR matrix, assembled by probing with coloured indicators.

        The stencil reaches one node in every direction, so nodes whose
        indices agree modulo 3 along each axis never share a neighbourhood.
        """
        g = self.grid
        colors = [3 if (not g.periodic or k % 3 == 0) else k for k in g.n]
        idx = np.indices(g.shape)
        rows, cols, vals = [], [], []
        for color in np.ndindex(*colors):
            probe = np.ones(g.shape, dtype=bool)
            for ax, c in enumerate(color):
                probe &= idx[ax] % colors[ax] == c
            resp = self(probe.astype(float))
            hit = np.nonzero(resp)
            if not len(hit[0]):
                continue
            # the single probed node within one step of each responding node
            src = []
            for ax, c in enumerate(color):
                k = hit[ax]
                cand = np.stack([k - 1, k, k + 1]) % g.n[ax] if g.periodic else np.stack([k - 1, k, k + 1])
                src.append(cand[np.argmax(cand % colors[ax] == c, axis=0), np.arange(len(k))])
            rows.append(np.ravel_multi_index(hit, g.shape))
            cols.append(np.ravel_multi_index(tuple(src), g.shape))
            vals.append(resp[hit])
        if not rows:
            return sparse.csr_matrix((g.size, g.size))
        return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                 shape=(g.size, g.size))

    def __call__(self, values):
        g = self.grid
        out = np.zeros(g.shape)
        for i, j, coef in self.parts:
            if g.periodic:
                w = coef * (np.roll(values, -1, axis=i) - values) / g.h[i]
                out += (w - np.roll(w, 1, axis=j)) / g.h[j]
                continue
            p = np.pad(values, 1)
            dplus = np.diff(p, axis=i) / g.h[i]  # axis i: k_i = 0..n, others padded
            sl = [slice(1, -1)] * g.dim
            sl[i] = slice(1, None) if i != j else slice(None)
            if i != j:
                sl[j] = slice(0, -1)
            w = coef * dplus[tuple(sl)]
            out += np.diff(w, axis=j) / g.h[j]
        return out


def apply_L(u, coeffs, t):
    return Field(u.grid, Diffusion(coeffs, u.grid, t)(u.values))


# -- nonlocal operators -------------------------------------------------------

def _i1_values(values, grid, coeffs, t, pts=None):
    if not len(coeffs.pi1) or coeffs.c is None:
        return np.zeros(grid.shape)
    pts = grid.points() if pts is None else pts
    grad = centered_gradient(values, grid).reshape(grid.dim, -1)
    flat = values.ravel()
    out = np.zeros(grid.size)
    for zeta, w in coeffs.pi1:
        c = coeffs.eval_c(t, pts, zeta)
        m = coeffs.eval_m(t, pts, zeta)
        shifted = shift_values(values, grid, c).ravel()
        out = out + w * (shifted - flat - np.sum(c * grad.T, axis=1)) * m
    return out.reshape(grid.shape)


def apply_I1(u, coeffs, t):
    return Field(u.grid, _i1_values(u.values, u.grid, coeffs, t))


def _i2_values(values, grid, coeffs, t):
    if not len(coeffs.pi2) or coeffs.b is None:
        return np.zeros(grid.shape)
    grad = centered_gradient(values, grid)
    out = np.zeros(grid.shape)
    for zeta, w in coeffs.pi2:
        b = coeffs.eval_b(t, zeta)
        bgrad = np.tensordot(b, grad, axes=1)
        out = out + w * (shift_values(values, grid, b) - values - bgrad)
    return out


def apply_I2(u, coeffs, t):
    return Field(u.grid, _i2_values(u.values, u.grid, coeffs, t))


def _shifted_products(values, grid, coeffs, t, zeta, pts):
    """``(lam(x+b) u(x+b), lam(x) u(x), u(x+b))`` for one mark of ``pi2``."""
    b = coeffs.eval_b(t, zeta)
    lam_b = coeffs.eval_lam(t, pts + b, zeta).reshape(grid.shape)
    lam = coeffs.eval_lam(t, pts, zeta).reshape(grid.shape)
    ub = shift_values(values, grid, b)
    return ub * lam_b, values * lam, ub, lam


def _jk_values(values, grid, coeffs, t, pts=None):
    """``(J u, K u)`` as arrays."""
    jv, kv = np.zeros(grid.shape), np.zeros(grid.shape)
    if not len(coeffs.pi2):
        return jv, kv
    pts = grid.points() if pts is None else pts
    for zeta, w in coeffs.pi2:
        lub, lu, ub, _ = _shifted_products(values, grid, coeffs, t, zeta, pts)
        jv = jv + w * (lub - lu)
        kv = kv + w * (ub - values)
    return jv, kv


def apply_J(u, coeffs, t):
    return Field(u.grid, _jk_values(u.values, u.grid, coeffs, t)[0])


def apply_K(u, coeffs, t):
    return Field(u.grid, _jk_values(u.values, u.grid, coeffs, t)[1])


def _s_values(values, grid, coeffs, t, zeta, pts=None):
    pts = grid.points() if pts is None else pts
    lub, lu, _, lam = _shifted_products(values, grid, coeffs, t, zeta, pts)
    # kept in the displayed three-term form; algebraically lam(x+b) u(x+b) - u(x)
    return lub - lu + (lam - 1.0) * values


def apply_S(u, coeffs, t, zeta):
    return Field(u.grid, _s_values(u.values, u.grid, coeffs, t, zeta))


def _g_values(values, grid, coeffs, t, pts=None):
    """Noise coefficients ``G^k(u)``, shape ``(modes, *grid.shape)``."""
    if coeffs.modes == 0:
        return np.zeros((0,) + grid.shape)
    pts = grid.points() if pts is None else pts
    out = np.zeros((coeffs.modes, grid.size))
    if coeffs.phi is not None:
        grad = centered_gradient(values, grid).reshape(grid.dim, -1)
        phi = coeffs.eval_phi(t, pts)  # (N, d, K)
        out = out + np.einsum("nik,in->kn", phi, grad)
    if coeffs.sigma is not None:
        out = out + coeffs.eval_sigma(t, pts, values.ravel()).T
    return out.reshape((coeffs.modes,) + grid.shape)


def apply_G(u, coeffs, t):
    return [Field(u.grid, v) for v in _g_values(u.values, u.grid, coeffs, t)]


# -- weak form of I1 for x-independent shifts ------------------------------------

def translation_shifts(coeffs, grid, t, atol=1e-14):
    """The constant shift of every mark of ``pi1``; raises if any depends on x."""
    pts = grid.points()
    out = []
    for zeta, _ in coeffs.pi1:
        c = coeffs.eval_c(t, pts, zeta)
        if np.max(np.ptp(c, axis=0)) > atol:
            raise ValueError(f"shift c for mark {zeta!r} depends on x; only translations are supported")
        out.append(c[0].copy())
    return out


def weak_I1_translation(u, v, coeffs, t, order=8):
    """``<I1 u, v>`` through the integrated-by-parts form with a Gauss rule in theta.

    Evaluates ``int_0^1 (theta - 1) sum_zeta w_zeta (D_i u(x + theta c), D_j(q_ij v)) dtheta``
    with ``q_ij = c_i c_j m(x, zeta)``.
    """
    _check_same(u, v)
    grid = u.grid
    if not len(coeffs.pi1) or coeffs.c is None:
        return 0.0
    shifts = translation_shifts(coeffs, grid, t)
    pts = grid.points()
    nodes, weights = leggauss(order)
    theta = (nodes + 1) / 2
    wq = weights / 2
    grad_u = centered_gradient(u.values, grid)
    terms = []
    for (zeta, w), c in zip(coeffs.pi1, shifts):
        m = coeffs.eval_m(t, pts, zeta).reshape(grid.shape)
        # D_j(q_ij v) contracted with c_i: sum_j c_j D_j (c_i m v)
        dq = centered_gradient(m * v.values, grid)
        cdq = np.tensordot(c, dq, axes=1)
        for th, wt in zip(theta, wq):
            gu = np.stack([shift_values(grad_u[i], grid, th * c) for i in range(grid.dim)])
            cgu = np.tensordot(c, gu, axes=1)
            terms.append(w * wt * (th - 1) * inner(Field(grid, cgu), Field(grid, cdq)))
    return math.fsum(terms)


# -- functionals -------------------------------------------------------------------

def mu(u, coeffs, t):
    grid = u.grid
    if not len(coeffs.pi2):
        return 0.0
    pts = grid.points()
    up = np.maximum(u.values, 0.0)
    terms = []
    for zeta, w in coeffs.pi2:
        lub, _, _, _ = _shifted_products(u.values, grid, coeffs, t, zeta, pts)
        integrand = np.maximum(lub, 0.0) ** 2 - up ** 2 - 2 * up * (lub - u.values)
        terms.append(w * math.fsum(integrand.ravel()) * grid.cell_volume)
    return math.fsum(terms)


def rho(u, coeffs, t):
    up = positive_part(u)
    jv, kv = _jk_values(u.values, u.grid, coeffs, t)
    return (2 * inner(apply_I2(u, coeffs, t), up) + 2 * inner(Field(u.grid, jv), up)
            - 2 * inner(Field(u.grid, kv), up) + mu(u, coeffs, t))
