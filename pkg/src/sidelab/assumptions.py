"""Sampling-based checks of the structural conditions on the coefficients.

These are falsification tools: a FAIL comes with a concrete counterexample
point, a PASS only means no violation was found among the samples.
"""
from dataclasses import dataclass, field

import numpy as np

from .noise import substream

# stream code for validator sampling (kept apart from the noise streams)
_VALIDATE = 7


@dataclass
class Verdict:
    name: str
    passed: bool
    margin: float
    detail: str = ""
    worst: dict = field(default_factory=dict)


@dataclass
class ValidationReport:
    verdicts: dict
    kappa: float
    samples: int
    seed: int
    note: str = "sampling-based: PASS means no violation found among the samples"

    @property
    def passed(self):
        return all(v.passed for v in self.verdicts.values())

    def failed(self):
        return [k for k, v in self.verdicts.items() if not v.passed]

    def to_dict(self):
        return {
            "passed": self.passed,
            "kappa": self.kappa,
            "samples": self.samples,
            "seed": self.seed,
            "note": self.note,
            "verdicts": {k: {"passed": v.passed, "margin": v.margin, "detail": v.detail,
                             "worst": {kk: _plain(vv) for kk, vv in v.worst.items()}}
                         for k, v in self.verdicts.items()},
        }


def _plain(v):
    v = np.asarray(v)
    return v.item() if v.ndim == 0 else v.tolist()


def _verdict(name, margins, points, tol, detail=""):
    margins = np.asarray(margins, dtype=float)
    if margins.size == 0:
        return Verdict(name, True, float("inf"), detail or "vacuous")
    k = int(np.argmin(margins))
    worst = {key: val[k] for key, val in points.items()}
    m = float(margins[k])
    return Verdict(name, m >= -tol, m, detail, worst)


def validate(coeffs, extents, budget=10_000, seed=0, T=1.0, r_max=2.0, tol=1e-12, fd_step=1e-5):
    """Check the coefficient conditions on ``budget`` random samples.

    ``extents`` is the box ``[(a_0, b_0), ...]`` where ``x`` is sampled;
    ``r`` and ``r'`` are uniform on ``[-r_max, r_max]``.  Returns a
    :class:`ValidationReport` keyed by condition name.
    """
    if budget < 1:
        raise ValueError("sample budget must be at least 1")
    d, K = coeffs.dim, coeffs.bigK
    rng = substream(seed, 0, _VALIDATE)
    lo = np.array([e[0] for e in extents], dtype=float)
    hi = np.array([e[1] for e in extents], dtype=float)
    n = int(budget)
    t = float(rng.uniform(0, T))
    x = lo + (hi - lo) * rng.random((n, d))
    r1 = rng.uniform(-r_max, r_max, n)
    r2 = rng.uniform(-r_max, r_max, n)
    p1 = rng.uniform(-r_max, r_max, (n, d))
    p2 = rng.uniform(-r_max, r_max, (n, d))
    xi = rng.standard_normal((n, d))
    theta = rng.random(n)
    pts = {"x": x, "r1": r1, "r2": r2}
    out = {}

    # bounds on a and phi
    a = coeffs.eval_a(t, x)
    phi = coeffs.eval_phi(t, x)
    out["coefficient_bounds"] = _verdict(
        "coefficient_bounds",
        np.minimum(K - np.abs(a).max(axis=(1, 2)), K - (phi ** 2).sum(axis=(1, 2))),
        {"x": x}, tol, "|a_ij| <= K and sum |phi|^2 <= K")

    # growth of f, sigma, g
    lhs = coeffs.eval_f(t, x, r1, p1) ** 2 + (coeffs.eval_sigma(t, x, r1) ** 2).sum(axis=1)
    for z, w in coeffs.nu:
        lhs = lhs + w * coeffs.eval_g(t, x, z, r1) ** 2
    rhs = K * r1 ** 2 + K * (p1 ** 2).sum(axis=1) + coeffs.eval_h(t, x) ** 2
    out["growth"] = _verdict("growth", rhs - lhs, {"x": x, "r": r1, "p": p1}, tol,
                                   "|f|^2 + sum|sigma|^2 + int|g|^2 <= K r^2 + K|p|^2 + h^2")

    # stochastic parabolicity
    sym = a - 0.5 * np.einsum("nik,njk->nij", phi, phi)
    sym = 0.5 * (sym + np.transpose(sym, (0, 2, 1)))
    eig = np.linalg.eigvalsh(sym)[:, 0]
    kappa = float(eig.min())
    quad = np.einsum("ni,nij,nj->n", xi, sym, xi) / (xi ** 2).sum(axis=1)
    v = _verdict("parabolicity", np.minimum(eig, quad), {"x": x}, 0.0,
                 "a - phi phi^T / 2 >= kappa I with kappa > 0")
    v.passed = kappa > 0
    v.margin = kappa
    out["parabolicity"] = v

    # Lipschitz sigma
    ds = ((coeffs.eval_sigma(t, x, r1) - coeffs.eval_sigma(t, x, r2)) ** 2).sum(axis=1)
    out["sigma_lipschitz"] = _verdict("sigma_lipschitz", K * (r1 - r2) ** 2 - ds, pts, tol,
                                           "sum |sigma(r1) - sigma(r2)|^2 <= K |r1 - r2|^2")

    # one-sided condition on f with the jump term, Lipschitz in the gradient argument
    one_sided = 2 * (r1 - r2) * (coeffs.eval_f(t, x, r1, p1) - coeffs.eval_f(t, x, r2, p1))
    for z, w in coeffs.nu:
        one_sided = one_sided + w * (coeffs.eval_g(t, x, z, r1) - coeffs.eval_g(t, x, z, r2)) ** 2
    out["one_sided"] = _verdict("one_sided", K * (r1 - r2) ** 2 - one_sided, pts, tol,
                                    "2(r1-r2)(f(r1)-f(r2)) + int|g(r1)-g(r2)|^2 <= K|r1-r2|^2")
    dp = np.sqrt(((p1 - p2) ** 2).sum(axis=1))
    df = np.abs(coeffs.eval_f(t, x, r1, p1) - coeffs.eval_f(t, x, r1, p2))
    out["gradient_lipschitz"] = _verdict("gradient_lipschitz", K * dp - df,
                                             {"x": x, "r": r1}, tol, "|f(r,p1) - f(r,p2)| <= K|p1 - p2|")

    # r + g(r) non-decreasing
    rl, rh = np.minimum(r1, r2), np.maximum(r1, r2)
    margins = []
    for z, _ in coeffs.nu:
        margins.append((rh + coeffs.eval_g(t, x, z, rh)) - (rl + coeffs.eval_g(t, x, z, rl)))
    out["jump_monotone"] = _verdict(
        "jump_monotone", np.concatenate(margins) if margins else [],
        {"x": np.tile(x, (max(len(margins), 1), 1)), "r_low": np.tile(rl, max(len(margins), 1)),
         "r_high": np.tile(rh, max(len(margins), 1))}, tol, "r + g(r) non-decreasing in r")

    # shift c, weight m, their smoothness
    out.update(_check_c_m(coeffs, t, x, theta, K, tol, fd_step))
    out.update(_check_b_lam(coeffs, t, x, K, tol, fd_step))
    return ValidationReport(out, kappa, n, seed)


def _fd_jacobian(fn, x, step):
    cols = []
    for i in range(x.shape[1]):
        e = np.zeros(x.shape[1])
        e[i] = step
        cols.append((fn(x + e) - fn(x - e)) / (2 * step))
    return np.stack(cols, axis=-1)  # (..., out, in)


def _check_c_m(coeffs, t, x, theta, K, tol, step):
    out = {}
    d = coeffs.dim
    if not len(coeffs.pi1) or coeffs.c is None:
        for name in ("shift_bounds", "weight_bounds", "shift_smoothness"):
            out[name] = Verdict(name, True, float("inf"), "vacuous: no nonlocal shift")
        return out
    c0_sq, m_marg, smooth_marg, m_lip = [], [], [], []
    for zeta, w in coeffs.pi1:
        c = coeffs.eval_c(t, x, zeta)
        jac = _fd_jacobian(lambda y: coeffs.eval_c(t, y, zeta), x, step)
        lip = np.linalg.norm(jac, ord=2, axis=(1, 2))
        c0 = max(np.sqrt((c ** 2).sum(axis=1)).max(), lip.max())
        c0_sq.append(w * c0 ** 2)
        m = coeffs.eval_m(t, x, zeta)
        gm = _fd_jacobian(lambda y: coeffs.eval_m(t, y, zeta)[:, None], x, step)[:, 0, :]
        m_marg.append(np.minimum(m, K - m))
        m_lip.append(K - np.sqrt((gm ** 2).sum(axis=1)))
        hess = _fd_jacobian(lambda y: _fd_jacobian(lambda q: coeffs.eval_c(t, q, zeta), y, step),
                            x, step)
        bound = np.minimum(K - np.abs(jac).max(axis=(1, 2)), K - np.abs(hess).reshape(len(x), -1).max(axis=1))
        det = np.abs(np.linalg.det(np.eye(d) + theta[:, None, None] * jac))
        smooth_marg.append(np.minimum(bound, np.minimum(det - 1 / K, K - det)))
    out["shift_bounds"] = _verdict("shift_bounds", [K - sum(c0_sq)], {}, tol,
                                   "int c0^2 dpi1 <= K with c0 = max(sup|c|, Lip c)")
    out["weight_bounds"] = _verdict("weight_bounds", np.minimum(np.concatenate(m_marg), np.concatenate(m_lip)),
                                   {"x": np.tile(x, (len(coeffs.pi1), 1))}, tol, "0 <= m <= K, Lip m <= K")
    out["shift_smoothness"] = _verdict("shift_smoothness", np.concatenate(smooth_marg),
                                   {"x": np.tile(x, (len(coeffs.pi1), 1))}, tol,
                                   "|Dc|, |D^2 c| <= K and 1/K <= |det(I + theta Dc)| <= K")
    return out


def _check_b_lam(coeffs, t, x, K, tol, step):
    name = "translation_intensity"
    if not len(coeffs.pi2):
        return {name: Verdict(name, True, float("inf"), "vacuous: no second jump measure")}
    total = 0.0
    margins = []
    for zeta, w in coeffs.pi2:
        b = coeffs.eval_b(t, zeta)
        lam = coeffs.eval_lam(t, x, zeta)
        glam = _fd_jacobian(lambda y: coeffs.eval_lam(t, y, zeta)[:, None], x, step)[:, 0, :]
        b0 = max(float(np.sqrt((b ** 2).sum())), float(np.abs(1 - lam).max()))
        total += w * max(b0, b0 ** 2)
        margins.append(np.minimum(lam, K - np.abs(lam) - np.sqrt((glam ** 2).sum(axis=1))))
    margins = np.concatenate(margins + [[K - total]])
    return {name: _verdict(name, margins, {}, tol,
                           "lam > 0, |lam| + |D lam| <= K, int b0 v b0^2 dpi2 <= K")}
