"""Equation coefficients and the named presets used by experiments.

All coefficient callables are vectorized over points: ``x`` has shape
``(N, dim)``, ``r`` shape ``(N,)`` and ``p`` (the gradient argument of the
drift) shape ``(N, dim)``.  Expected signatures and return shapes:

========  ===========================  ==================
name      call                         returns
========  ===========================  ==================
a         ``a(t, x)``                  ``(N, dim, dim)``
phi       ``phi(t, x)``                ``(N, dim, modes)``
f         ``f(t, x, r, p)``            ``(N,)``
sigma     ``sigma(t, x, r)``           ``(N, modes)``
g         ``g(t, x, z, r)``            ``(N,)``
c         ``c(t, x, zeta)``            ``(N, dim)``
m         ``m(t, x, zeta)``            ``(N,)``
b         ``b(t, zeta)``               ``(dim,)``
lam       ``lam(t, x, zeta)``          ``(N,)``
h_growth  ``h_growth(t, x)``           ``(N,)``
========  ===========================  ==================

``None`` means the natural neutral value: identity for ``a``, one for ``m``
and ``lam``, zero for everything else.  Callables must be safe to evaluate
concurrently.
"""
import dataclasses
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .noise import MarkSpace


@dataclass(frozen=True)
class CoefficientSet:
    dim: int = 1
    modes: int = 0
    a: Optional[Callable] = None
    phi: Optional[Callable] = None
    f: Optional[Callable] = None
    sigma: Optional[Callable] = None
    g: Optional[Callable] = None
    c: Optional[Callable] = None
    m: Optional[Callable] = None
    b: Optional[Callable] = None
    lam: Optional[Callable] = None
    h_growth: Optional[Callable] = None
    nu: MarkSpace = MarkSpace.empty()
    pi1: MarkSpace = MarkSpace.empty()
    pi2: MarkSpace = MarkSpace.empty()
    bigK: float = 10.0
    name: str = "custom"

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    # evaluation helpers; each returns a float array of the documented shape

    def eval_a(self, t, x):
        n = len(x)
        if self.a is None:
            return np.broadcast_to(np.eye(self.dim), (n, self.dim, self.dim))
        return _shaped(self.a(t, x), (n, self.dim, self.dim), "a")

    def eval_phi(self, t, x):
        if self.phi is None:
            return np.zeros((len(x), self.dim, self.modes))
        return _shaped(self.phi(t, x), (len(x), self.dim, self.modes), "phi")

    def eval_f(self, t, x, r, p):
        if self.f is None:
            return np.zeros(len(x))
        return _shaped(self.f(t, x, r, p), (len(x),), "f")

    def eval_sigma(self, t, x, r):
        if self.sigma is None:
            return np.zeros((len(x), self.modes))
        return _shaped(self.sigma(t, x, r), (len(x), self.modes), "sigma")

    def eval_g(self, t, x, z, r):
        if self.g is None:
            return np.zeros(len(x))
        return _shaped(self.g(t, x, z, r), (len(x),), "g")

    def eval_c(self, t, x, zeta):
        if self.c is None:
            return np.zeros((len(x), self.dim))
        return _shaped(self.c(t, x, zeta), (len(x), self.dim), "c")

    def eval_m(self, t, x, zeta):
        if self.m is None:
            return np.ones(len(x))
        return _shaped(self.m(t, x, zeta), (len(x),), "m")

    def eval_b(self, t, zeta):
        if self.b is None:
            return np.zeros(self.dim)
        return _shaped(self.b(t, zeta), (self.dim,), "b")

    def eval_lam(self, t, x, zeta):
        if self.lam is None:
            return np.ones(len(x))
        return _shaped(self.lam(t, x, zeta), (len(x),), "lam")

    def eval_h(self, t, x):
        if self.h_growth is None:
            return np.zeros(len(x))
        return _shaped(self.h_growth(t, x), (len(x),), "h_growth")


def _shaped(val, shape, name):
    arr = np.asarray(val, dtype=float)
    try:
        arr = np.broadcast_to(arr, shape)
    except ValueError:
        raise ValueError(f"coefficient {name} returned shape {arr.shape}, expected {shape}") from None
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"coefficient {name} produced non-finite values")
    return arr


def _const_matrix(mat):
    mat = np.asarray(mat, dtype=float)
    return lambda t, x: np.broadcast_to(mat, (len(x),) + mat.shape)


def _const_field(value):
    return lambda t, x: np.full(len(x), float(value))


def _phi_diag(dim, modes, scale):
    e = np.zeros((dim, modes))
    for i in range(min(dim, modes)):
        e[i, i] = scale
    return e


def _marks(weights):
    return MarkSpace.atoms(weights) if weights else MarkSpace.empty()


# -- presets ---------------------------------------------------------------

def constant(dim=1, modes=1, a=1.0, phi=0.0, f=0.0, sigma=0.0):
    """Space- and time-independent coefficients, no jumps."""
    return CoefficientSet(
        dim=dim, modes=modes, name="constant",
        a=_const_matrix(a * np.eye(dim)),
        phi=_const_matrix(_phi_diag(dim, modes, phi)) if phi else None,
        f=(lambda t, x, r, p: np.full(len(x), float(f))) if f else None,
        sigma=(lambda t, x, r: np.full((len(x), modes), float(sigma))) if sigma else None,
    )


def affine(dim=1, modes=1, a=1.0, phi=0.0, f0=0.0, f1=0.0, s1=0.0, g1=0.0, nu=(), bigK=10.0):
    """Linear-in-``r`` drift ``f0 + f1 r``, noise ``s1 r`` on mode 0, jumps ``g1 r``."""
    def sig(t, x, r):
        out = np.zeros((len(x), modes))
        out[:, 0] = s1 * r
        return out

    return CoefficientSet(
        dim=dim, modes=modes, name="affine", bigK=bigK,
        a=_const_matrix(a * np.eye(dim)),
        phi=_const_matrix(_phi_diag(dim, modes, phi)) if phi else None,
        f=(lambda t, x, r, p: f0 + f1 * r) if (f0 or f1) else None,
        sigma=sig if (s1 and modes) else None,
        g=(lambda t, x, z, r: g1 * r) if g1 else None,
        nu=_marks(nu),
        h_growth=_const_field(np.sqrt(2) * abs(f0)) if f0 else None,
    )


def trigonometric(dim=1, modes=1, a=1.0, amp=0.5, phi=0.0, c0=0.05, m0=1.0, pi1=(1.0,),
                  b0=0.0, lam_amp=0.0, pi2=(), bigK=10.0):
    """Smoothly varying diffusion, x-dependent nonlocal shift ``c`` and intensity ``lam``."""
    def a_fn(t, x):
        s = a * (1 + amp * np.sin(2 * np.pi * x[:, 0]))
        return s[:, None, None] * np.eye(dim)

    def c_fn(t, x, zeta):
        out = np.zeros((len(x), dim))
        out[:, 0] = c0 * (1 + 0.5 * np.sin(2 * np.pi * x[:, 0])) * (1 + zeta)
        return out

    def m_fn(t, x, zeta):
        return m0 * (1 + 0.5 * np.cos(2 * np.pi * x[:, 0]))

    def b_fn(t, zeta):
        out = np.zeros(dim)
        out[0] = b0 * (1 + zeta)
        return out

    def lam_fn(t, x, zeta):
        return 1 + lam_amp * np.sin(2 * np.pi * x[:, 0])

    return CoefficientSet(
        dim=dim, modes=modes, name="trigonometric", bigK=bigK,
        a=a_fn, phi=_const_matrix(_phi_diag(dim, modes, phi)) if phi else None,
        c=c_fn if c0 else None, m=m_fn, pi1=_marks(pi1),
        b=b_fn if b0 else None, lam=lam_fn if lam_amp else None, pi2=_marks(pi2),
    )


def cubic_drift(dim=1, modes=1, a=1.0, shift=0.0, phi=0.0, s1=0.0, g1=0.0, nu=(), bigK=100.0):
    """Dissipative drift ``shift - r**3``; optional multiplicative noise and jumps.

    The cubic term only has linear growth on bounded ``r``, hence the larger
    default ``bigK``.
    """
    base = affine(dim=dim, modes=modes, a=a, phi=phi, s1=s1, g1=g1, nu=nu, bigK=bigK)
    return base.replace(name="cubic-drift", f=lambda t, x, r, p: shift - r ** 3,
                        h_growth=_const_field(np.sqrt(2) * abs(shift)) if shift else None)


def counterexample_g(dim=1, intensity=1.0, coef=-2.0, a=0.0):
    """Jump coefficient ``coef * r`` with a single atom; ``coef = -2`` breaks monotonicity of ``r + g``."""
    return CoefficientSet(
        dim=dim, modes=0, name="counterexample-g",
        a=_const_matrix(a * np.eye(dim)),
        g=lambda t, x, z, r: coef * r,
        nu=MarkSpace.atoms([intensity]),
    )


def phi_identity(dim=1):
    """``a = I`` and ``phi = I`` (one mode per axis), so ``a - phi phi^T / 2 = I / 2``."""
    return CoefficientSet(dim=dim, modes=dim, name="phi-identity",
                          a=_const_matrix(np.eye(dim)), phi=_const_matrix(np.eye(dim)))


PRESETS = {
    "constant": constant,
    "affine": affine,
    "trigonometric": trigonometric,
    "cubic-drift": cubic_drift,
    "counterexample-g": counterexample_g,
    "phi-identity": phi_identity,
}


def register_preset(name, factory):
    PRESETS[name] = factory


def preset(name, **params):
    try:
        factory = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown coefficient preset {name!r}; known: {', '.join(sorted(PRESETS))}") from None
    return factory(**params)
