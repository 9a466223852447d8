"""Homogeneous symbols, duals, the canonical map and structure symbols.

The central objects are a degree-1 positively homogeneous p(xi) > 0 with
non-vanishing level-set curvature, its dual p* (support function of the
unit level set), the frequency warp psi conjugating p(D) to |D|, and the
wedge symbol Omega(x, xi) that vanishes exactly on the classical orbit
set Gamma_p = {(lambda grad p(xi), xi)}.
"""

import json
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.optimize import minimize

from .errors import (CurvatureUnchecked, DegenerateGradient, OptimizerStall,
                     ZeroFrequency, ZeroPosition)

XI_MIN = 1e-12
TOL_ORBIT = 1e-8
KAPPA_MIN = 1e-4


def wedge_pairs(n):
    """Index pairs (i, j), i < j, in lexicographic order."""
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def wedge(a, b):
    """Outer product (a_i b_j - a_j b_i)_{i<j}, last axis is the vector axis."""
    a = np.asarray(a)
    b = np.asarray(b)
    n = a.shape[-1]
    comps = [a[..., i] * b[..., j] - a[..., j] * b[..., i]
             for i, j in wedge_pairs(n)]
    return np.stack(comps, axis=-1)


@dataclass
class HomogeneousSymbol:
    """Degree-1 positively homogeneous function with derivative evaluators.

    ``value`` maps points of shape (..., n) to positive reals.  Missing
    gradient/hessian evaluators fall back to central finite differences
    with relative step ``fd_step * |xi|`` (recorded in ``metadata``).
    """

    label: str
    dim: int
    value: callable
    grad: callable = None
    hess: callable = None
    degree: float = 1.0
    fd_step: float = 1e-5
    metadata: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.metadata.setdefault(
            "gradient", "closed-form" if self.grad else "finite-difference")
        self.metadata.setdefault(
            "hessian", "closed-form" if self.hess else "finite-difference")

    def __call__(self, xi):
        return self.value(np.asarray(xi, dtype=float))

    def gradient(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.grad is not None:
            return self.grad(xi)
        r = np.linalg.norm(xi, axis=-1, keepdims=True)
        h = self.fd_step * r
        cols = []
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = 1.0
            cols.append((self.value(xi + h * e) - self.value(xi - h * e))
                        / (2.0 * h[..., 0]))
        return np.stack(cols, axis=-1)

    def hessian(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.hess is not None:
            return self.hess(xi)
        r = np.linalg.norm(xi, axis=-1, keepdims=True)
        if self.grad is not None:
            # differentiate the exact gradient
            h = self.fd_step * r
            rows = []
            for i in range(self.dim):
                e = np.zeros(self.dim)
                e[i] = 1.0
                rows.append((self.grad(xi + h * e) - self.grad(xi - h * e))
                            / (2.0 * h))
            H = np.stack(rows, axis=-2)
        else:
            # second differences of the value; larger step balances rounding
            h = 1e-4 * r[..., 0]
            n = self.dim
            H = np.empty(xi.shape[:-1] + (n, n))
            for i in range(n):
                ei = np.zeros(n)
                ei[i] = 1.0
                for j in range(i, n):
                    ej = np.zeros(n)
                    ej[j] = 1.0
                    hi = h[..., None] if xi.ndim > 1 else h
                    pp = self.value(xi + hi * ei + hi * ej)
                    pm = self.value(xi + hi * ei - hi * ej)
                    mp = self.value(xi - hi * ei + hi * ej)
                    mm = self.value(xi - hi * ei - hi * ej)
                    H[..., i, j] = (pp - pm - mp + mm) / (4.0 * h**2)
                    H[..., j, i] = H[..., i, j]
        return 0.5 * (H + np.swapaxes(H, -1, -2))


def evaluate(sym, xi, order, xi_min=XI_MIN):
    """Evaluator facade: order 0 -> value, 1 -> gradient, 2 -> hessian."""
    xi = np.asarray(xi, dtype=float)
    if np.any(np.linalg.norm(xi, axis=-1) < xi_min):
        raise ZeroFrequency(f"|xi| below the degeneracy floor {xi_min}")
    if order == 0:
        return sym(xi)
    if order == 1:
        return sym.gradient(xi)
    if order == 2:
        return sym.hessian(xi)
    raise ValueError("order must be 0, 1 or 2")


# ---------------------------------------------------------------------------
# built-in symbols


def euclidean(n=2):
    def value(xi):
        return np.linalg.norm(xi, axis=-1)

    def grad(xi):
        with np.errstate(invalid="ignore", divide="ignore"):
            return xi / np.linalg.norm(xi, axis=-1, keepdims=True)

    def hess(xi):
        r = np.linalg.norm(xi, axis=-1)
        u = xi / r[..., None]
        eye = np.eye(xi.shape[-1])
        return (eye - u[..., :, None] * u[..., None, :]) / r[..., None, None]

    return HomogeneousSymbol("euclidean", n, value, grad, hess)


def quadratic_form(A):
    """p(xi) = |xi A| for a symmetric positive definite matrix A."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    M = A @ A.T

    def value(xi):
        return np.sqrt(np.einsum("...i,ij,...j->...", xi, M, xi))

    def grad(xi):
        # xi = 0 yields nan; callers mask the origin mode
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.einsum("...i,ij->...j", xi, M) / value(xi)[..., None]

    def hess(xi):
        p = value(xi)
        g = np.einsum("...i,ij->...j", xi, M)
        return (M / p[..., None, None]
                - g[..., :, None] * g[..., None, :] / p[..., None, None] ** 3)

    label = "quadratic-form:A=" + json.dumps(A.tolist())
    return HomogeneousSymbol(label, n, value, grad, hess,
                             metadata={"matrix": A})


def perturbed(amp=0.05, n=2):
    """p(xi) = |xi| (1 + amp (xi_1/|xi|)^3), a smooth asymmetric bump.

    Stays convex with non-vanishing curvature for small amp.
    """

    def value(xi):
        r = np.linalg.norm(xi, axis=-1)
        return r + amp * xi[..., 0] ** 3 / r**2

    def grad(xi):
        r = np.linalg.norm(xi, axis=-1)
        g = xi / r[..., None]
        g = g.copy()
        corr = -2.0 * amp * (xi[..., 0] ** 3 / r**4)[..., None] * xi
        corr[..., 0] += 3.0 * amp * xi[..., 0] ** 2 / r**2
        return g + corr

    return HomogeneousSymbol(f"perturbed:amp={amp}", n, value, grad)


# ---------------------------------------------------------------------------
# sampling and the curvature audit


def sphere_points(n, count, seed=None):
    """Quasi-uniform unit directions: golden-angle (n=2), Fibonacci (n=3)."""
    golden = (1.0 + np.sqrt(5.0)) / 2.0
    if seed is not None:
        rng = np.random.default_rng(seed)
        u = rng.normal(size=(count, n))
        return u / np.linalg.norm(u, axis=-1, keepdims=True)
    if n == 2:
        theta = 2.0 * np.pi * np.arange(count) / golden
        return np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    if n == 3:
        i = np.arange(count) + 0.5
        z = 1.0 - 2.0 * i / count
        r = np.sqrt(1.0 - z**2)
        theta = 2.0 * np.pi * i / golden
        return np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=-1)
    raise NotImplementedError("sphere sampling supports n in {2, 3}")


def level_set_samples(sym, count, seed=None):
    """Points on Sigma_p by radial projection of sphere points."""
    u = sphere_points(sym.dim, count, seed=seed)
    return u / sym(u)[..., None]


def gaussian_curvature(sym, pts, grad_tol=1e-10):
    """Gaussian curvature of {p = 1} at points, via the bordered Hessian."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    n = sym.dim
    g = np.atleast_2d(sym.gradient(pts))
    H = sym.hessian(pts)
    if H.ndim == 2:
        H = H[None]
    gn = np.linalg.norm(g, axis=-1)
    if np.any(gn < grad_tol):
        raise DegenerateGradient("vanishing gradient on Sigma_p sample")
    B = np.zeros(pts.shape[:-1] + (n + 1, n + 1))
    B[..., :n, :n] = H
    B[..., :n, n] = g
    B[..., n, :n] = g
    return -np.linalg.det(B) / gn ** (n + 1)


def curvature_audit(sym, n_samples=512, kappa_min=KAPPA_MIN):
    """Minimum |Gaussian curvature| over Sigma_p; passes iff above kappa_min.

    Returns (min_abs_curvature, worst_point, passed).
    """
    pts = level_set_samples(sym, n_samples)
    K = gaussian_curvature(sym, pts)
    i = np.argmin(np.abs(K))
    kmin = np.abs(K[i])
    return float(kmin), pts[i], bool(kmin > kappa_min)


# ---------------------------------------------------------------------------
# dual construction


@dataclass(frozen=True)
class OptimizerSettings:
    starts: int = 6
    seed: int = 0
    gtol: float = 1e-12
    maxiter: int = 400


def _support_maximizer(sym, x, settings):
    """Maximize x . sigma over {p(sigma) = 1}.

    Works on the scale-invariant objective g(u) = x.u / p(u); any point
    of the maximizing ray projects to the same boundary point u / p(u).
    """
    x = np.asarray(x, dtype=float)
    n = sym.dim

    def negg(u):
        return -(x @ u) / sym(u)

    def negg_grad(u):
        p = sym(u)
        return -(x / p - (x @ u) * sym.gradient(u) / p**2)

    starts = [x / np.linalg.norm(x)]
    extra = sphere_points(n, settings.starts - 1, seed=settings.seed)
    starts.extend(list(np.atleast_2d(extra)))
    best = None
    for u0 in starts:
        res = minimize(negg, u0, jac=negg_grad, method="BFGS",
                       options={"gtol": settings.gtol,
                                "maxiter": settings.maxiter})
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not np.isfinite(best.fun):
        raise OptimizerStall("support-function ascent failed")
    # Newton polish: BFGS stops near 1e-8 stationarity, which leaks into
    # the dual gradient; a few damped Newton steps with a differenced
    # Hessian push the residual to roundoff
    u = best.x
    for _ in range(5):
        gvec = negg_grad(u)
        res = np.linalg.norm(gvec)
        if res <= 1e-13 * max(1.0, np.linalg.norm(x)):
            break
        h = 1e-6 * np.linalg.norm(u)
        H = np.empty((n, n))
        for i in range(n):
            e = np.zeros(n)
            e[i] = h
            H[:, i] = (negg_grad(u + e) - negg_grad(u - e)) / (2.0 * h)
        # the objective is scale invariant, so H is singular along the
        # ray through u; lstsq keeps the step in the tangent space
        step, *_ = np.linalg.lstsq(H, gvec, rcond=1e-8)
        if not np.all(np.isfinite(step)):
            break
        cand = u - step
        # near the optimum the objective change is below roundoff, so
        # accept on stationarity, not on the objective value
        if np.linalg.norm(negg_grad(cand)) < res:
            u = cand
        else:
            break
    best.x = u
    gnorm = np.linalg.norm(negg_grad(best.x))
    if gnorm > 1e-7 * max(1.0, np.linalg.norm(x)):
        raise OptimizerStall(
            f"stationarity residual {gnorm:.2e} after multi-start ascent")
    sigma = best.x / sym(best.x)
    return sigma, float(x @ sigma)


@dataclass
class DualPair:
    """Primal symbol p with its dual p* and a construction tag."""

    primal: HomogeneousSymbol
    dual: HomogeneousSymbol
    construction: str = "support-function"


def make_dual(sym, settings=None, skip_audit=False, audit_samples=512):
    """Build the dual symbol p*(x) = max {x.sigma : p(sigma) = 1}.

    Non-vanishing curvature of the compact level set makes it convex, so
    the maximization is well posed; the dual gradient is the maximizer
    itself (envelope rule).
    """
    if skip_audit:
        raise CurvatureUnchecked("dual construction requires the audit")
    kmin, worst, ok = curvature_audit(sym, n_samples=audit_samples)
    if not ok:
        raise CurvatureUnchecked(
            f"curvature audit failed: min |K| = {kmin:.3e} at {worst}")
    settings = settings or OptimizerSettings()

    def value(x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, sym.dim)
        out = np.array([_support_maximizer(sym, xi, settings)[1]
                        for xi in flat])
        return out.reshape(x.shape[:-1])

    def grad(x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, sym.dim)
        out = np.array([_support_maximizer(sym, xi, settings)[0]
                        for xi in flat])
        return out.reshape(x.shape)

    dual = HomogeneousSymbol(sym.label + "*", sym.dim, value, grad,
                             metadata={"construction": "support-function"})
    return DualPair(sym, dual, construction="support-function")


def closed_form_dual(sym):
    """Known duals: euclidean is self-dual, |xi A| pairs with |xi A^{-1}|."""
    if sym.label == "euclidean":
        return DualPair(sym, euclidean(sym.dim), construction="closed-form")
    if "matrix" in sym.metadata:
        Ainv = np.linalg.inv(sym.metadata["matrix"])
        return DualPair(sym, quadratic_form(Ainv), construction="closed-form")
    raise ValueError(f"no closed-form dual registered for {sym.label!r}")


# ---------------------------------------------------------------------------
# canonical map, orbits, structure symbols


def _check_freq(xi, xi_min=XI_MIN):
    xi = np.asarray(xi, dtype=float)
    if np.any(np.linalg.norm(xi, axis=-1) < xi_min):
        raise ZeroFrequency("frequency argument too close to zero")
    return xi


def psi(pair, xi):
    """Frequency warp psi(xi) = p(xi) grad p(xi) / |grad p(xi)|."""
    xi = _check_freq(xi)
    p = pair.primal(xi)
    g = pair.primal.gradient(xi)
    return p[..., None] * g / np.linalg.norm(g, axis=-1, keepdims=True)


def psi_inv(pair, xi):
    """Inverse warp psi^{-1}(xi) = |xi| grad p*(xi)."""
    xi = _check_freq(xi)
    r = np.linalg.norm(xi, axis=-1, keepdims=True)
    return r * pair.dual.gradient(xi)


def psi_jacobian(pair, xi, step=1e-6):
    """Jacobian matrix psi'(xi) by central differences."""
    xi = np.asarray(xi, dtype=float)
    n = pair.primal.dim
    r = np.linalg.norm(xi, axis=-1, keepdims=True)
    h = step * r
    cols = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        cols.append((psi(pair, xi + h * e) - psi(pair, xi - h * e))
                    / (2.0 * h))
    # rows index the output component, columns the differentiation direction
    return np.stack(cols, axis=-1)


def omega(pair, x, xi):
    """Structure symbol Omega(x, xi) = x psi'(xi)^{-1} ^ psi(xi).

    Evaluated through the dual Hessian at grad p(xi); the radial part of x
    lies in the Hessian kernel and is projected out, so on-orbit values
    vanish identically.
    """
    xi = _check_freq(xi)
    x = np.asarray(x, dtype=float)
    p = pair.primal(xi)
    g = pair.primal.gradient(xi)
    ghat = g / np.linalg.norm(g, axis=-1, keepdims=True)
    xperp = x - np.sum(x * ghat, axis=-1, keepdims=True) * ghat
    H = pair.dual.hessian(g)
    v = np.einsum("...i,...ij->...j", xperp, H)
    return wedge(v, p[..., None] * g)


def gamma_p_membership(pair, x, xi, tol_orbit=TOL_ORBIT):
    """Normalized orbit residual |Omega| / (|x| |xi|) and membership flag."""
    xi = _check_freq(xi)
    x = np.asarray(x, dtype=float)
    rx = np.linalg.norm(x, axis=-1)
    rxi = np.linalg.norm(xi, axis=-1)
    om = omega(pair, x, xi)
    denom = np.where(rx > 0, rx, 1.0) * rxi
    res = np.linalg.norm(om, axis=-1) / denom
    res = np.where(rx > 0, res, 0.0)
    return res, res <= tol_orbit


def tau_symbol(pair, x, xi):
    """Principal symbol of the squared angular part:

    tau = (p*(x)/|grad p*(x)|)^2 |grad p*(x) ^ xi|^2, non-negative,
    vanishing on the orbit set (x along grad p(xi), lambda > 0).
    """
    xi = _check_freq(xi)
    x = np.asarray(x, dtype=float)
    if np.any(np.linalg.norm(x, axis=-1) < XI_MIN):
        raise ZeroPosition("tau needs x away from 0")
    ps = pair.dual(x)
    gs = pair.dual.gradient(x)
    scale = ps / np.linalg.norm(gs, axis=-1)
    w = wedge(gs, np.broadcast_to(xi, gs.shape))
    return scale**2 * np.sum(w**2, axis=-1)


@dataclass(frozen=True)
class OrbitPoint:
    k: np.ndarray
    t: float
    x: np.ndarray
    xi: np.ndarray


def orbit(pair, k, t):
    """Classical orbit of p^2: x(t) = 2 t p(k) grad p(k), xi(t) = k."""
    k = _check_freq(k)
    x = 2.0 * t * pair.primal(k)[..., None] * pair.primal.gradient(k)
    return OrbitPoint(k=np.asarray(k, float), t=float(t), x=x,
                      xi=np.asarray(k, float))


# ---------------------------------------------------------------------------
# phase-space symbols


@dataclass
class PhaseSpaceSymbol:
    """Symbol sigma(x, xi), homogeneous of order ``orders[0]`` in x and
    ``orders[1]`` in xi, smooth away from x = 0 and xi = 0.

    ``terms`` optionally lists separable factors (f_x, f_xi) with
    sigma = sum_r f_x,r(x) f_xi,r(xi); quantization exploits them.
    """

    label: str
    orders: tuple
    value: callable
    terms: list = None

    def __call__(self, x, xi):
        return self.value(np.asarray(x, float), np.asarray(xi, float))

    @property
    def x_singular(self):
        return self.orders[0] < 0

    @property
    def xi_singular(self):
        return self.orders[1] < 0 or self.orders[1] != int(self.orders[1])


def _safe_unit(x):
    r = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / np.where(r > 0, r, 1.0), r[..., 0]


def structured_sigma(pair):
    """The structured critical symbol

        sigma(x, xi) = |x|^{-1/2} |(x/|x|) ^ grad p(xi)|^2 |xi|^{1/2},

    non-negative, orders (-1/2, +1/2), vanishing exactly on the orbit set
    away from x = 0.
    """
    n = pair.primal.dim
    grad = pair.primal.gradient

    def value(x, xi):
        xhat, rx = _safe_unit(x)
        g = grad(xi)
        w = wedge(np.broadcast_to(xhat, g.shape), g)
        rxi = np.linalg.norm(xi, axis=-1)
        with np.errstate(divide="ignore"):
            amp = np.where(rx > 0, rx, np.inf) ** -0.5
        return amp * np.sum(w**2, axis=-1) * np.sqrt(rxi)

    terms = []
    for i, j in wedge_pairs(n):
        def fx_ii(x, i=i, j=j):
            xhat, rx = _safe_unit(x)
            with np.errstate(divide="ignore"):
                amp = np.where(rx > 0, rx, np.inf) ** -0.5
            return amp * xhat[..., i] ** 2

        def fxi_jj(xi, i=i, j=j):
            g = grad(xi)
            return np.sqrt(np.linalg.norm(xi, axis=-1)) * g[..., j] ** 2

        def fx_ij(x, i=i, j=j):
            xhat, rx = _safe_unit(x)
            with np.errstate(divide="ignore"):
                amp = np.where(rx > 0, rx, np.inf) ** -0.5
            return -2.0 * amp * xhat[..., i] * xhat[..., j]

        def fxi_ij(xi, i=i, j=j):
            g = grad(xi)
            return np.sqrt(np.linalg.norm(xi, axis=-1)) * g[..., i] * g[..., j]

        def fx_jj(x, i=i, j=j):
            xhat, rx = _safe_unit(x)
            with np.errstate(divide="ignore"):
                amp = np.where(rx > 0, rx, np.inf) ** -0.5
            return amp * xhat[..., j] ** 2

        def fxi_ii(xi, i=i, j=j):
            g = grad(xi)
            return np.sqrt(np.linalg.norm(xi, axis=-1)) * g[..., i] ** 2

        terms.extend([(fx_ii, fxi_jj), (fx_ij, fxi_ij), (fx_jj, fxi_ii)])

    return PhaseSpaceSymbol(f"structured[{pair.primal.label}]",
                            (-0.5, 0.5), value, terms)


def tau_phase_symbol(pair):
    """tau as a PhaseSpaceSymbol with orders (2, 2) and separable terms."""
    n = pair.primal.dim

    def bvec(x):
        ps = pair.dual(x)
        gs = pair.dual.gradient(x)
        return (ps / np.linalg.norm(gs, axis=-1))[..., None] * gs

    def value(x, xi):
        b = bvec(x)
        w = wedge(b, np.broadcast_to(xi, b.shape))
        return np.sum(w**2, axis=-1)

    terms = []
    for i, j in wedge_pairs(n):
        terms.extend([
            (lambda x, i=i, j=j: bvec(x)[..., i] ** 2,
             lambda xi, i=i, j=j: xi[..., j] ** 2),
            (lambda x, i=i, j=j: -2.0 * bvec(x)[..., i] * bvec(x)[..., j],
             lambda xi, i=i, j=j: xi[..., i] * xi[..., j]),
            (lambda x, i=i, j=j: bvec(x)[..., j] ** 2,
             lambda xi, i=i, j=j: xi[..., i] ** 2),
        ])
    return PhaseSpaceSymbol(f"tau[{pair.primal.label}]", (2.0, 2.0),
                            value, terms)


def unstructured_critical(n=2):
    """|x|^{-1/2} |xi|^{1/2}: the critical weight with no structure."""

    def value(x, xi):
        _, rx = _safe_unit(x)
        with np.errstate(divide="ignore"):
            amp = np.where(rx > 0, rx, np.inf) ** -0.5
        return amp * np.sqrt(np.linalg.norm(xi, axis=-1))

    terms = [(
        lambda x: np.where(np.linalg.norm(x, axis=-1) > 0,
                           np.linalg.norm(x, axis=-1), np.inf) ** -0.5,
        lambda xi: np.sqrt(np.linalg.norm(xi, axis=-1)),
    )]
    return PhaseSpaceSymbol("unstructured-critical", (-0.5, 0.5),
                            value, terms)


def weighted_subcritical(s, n=2):
    """<x>^{-s} |xi|^{1/2}: bounded smoothing regime for s > 1/2."""

    def value(x, xi):
        rx2 = np.sum(np.asarray(x, float) ** 2, axis=-1)
        return (1.0 + rx2) ** (-s / 2.0) * np.sqrt(
            np.linalg.norm(xi, axis=-1))

    terms = [(
        lambda x: (1.0 + np.sum(np.asarray(x, float) ** 2, axis=-1))
        ** (-s / 2.0),
        lambda xi: np.sqrt(np.linalg.norm(xi, axis=-1)),
    )]
    return PhaseSpaceSymbol(f"weighted:s={s}", (0.0, 0.5), value, terms)


def omega_phase_symbol(pair, i, j):
    """Omega_ij as a PhaseSpaceSymbol, linear in x (separable, rank n)."""
    n = pair.primal.dim
    pairs = wedge_pairs(n)
    idx = pairs.index((i, j))

    def coeff(xi, l):
        # Omega_ij = sum_l x_l C_l(xi) with
        # C_l = H*_{li} p g_j - H*_{lj} p g_i, H* = hess p*(grad p).
        # C_l is degree-1 homogeneous, hence 0 at xi = 0 by continuity.
        xi = np.asarray(xi, dtype=float)
        r = np.linalg.norm(xi, axis=-1)
        safe = np.where((r > 0)[..., None], xi, 1.0)
        g = pair.primal.gradient(safe)
        p = pair.primal(safe)
        H = pair.dual.hessian(g)
        out = p * (H[..., l, i] * g[..., j] - H[..., l, j] * g[..., i])
        return np.where(r > 0, out, 0.0)

    def value(x, xi):
        return omega(pair, x, xi)[..., idx]

    terms = [(lambda x, l=l: np.asarray(x, float)[..., l],
              lambda xi, l=l: coeff(xi, l)) for l in range(n)]
    return PhaseSpaceSymbol(f"Omega[{i}{j};{pair.primal.label}]",
                            (1.0, 1.0), value, terms)


# ---------------------------------------------------------------------------
# registry


def parse_symbol(spec, n=2):
    """Parse a registry name into a HomogeneousSymbol.

    Formats: "euclidean", "quadratic-form:A=[[...]]", "perturbed:amp=0.05".
    """
    if spec == "euclidean":
        return euclidean(n)
    if spec.startswith("quadratic-form:A="):
        A = np.asarray(json.loads(spec.split("=", 1)[1]), dtype=float)
        return quadratic_form(A)
    if spec.startswith("perturbed:amp="):
        amp = float(spec.split("=", 1)[1])
        return perturbed(amp, n)
    raise ValueError(f"unknown symbol spec {spec!r}")


def make_pair(spec, n=2, construction="auto", settings=None):
    """Symbol plus dual, preferring closed forms when registered."""
    sym = parse_symbol(spec, n)
    if construction in ("auto", "closed-form"):
        try:
            return closed_form_dual(sym)
        except ValueError:
            if construction == "closed-form":
                raise
    return make_dual(sym, settings=settings)


def parse_sigma(spec, pair):
    """Parse a phase-space symbol name against a dual pair."""
    if spec == "structured":
        return structured_sigma(pair)
    if spec == "unstructured-critical":
        return unstructured_critical(pair.primal.dim)
    if spec.startswith("weighted:s="):
        return weighted_subcritical(float(spec.split("=", 1)[1]),
                                    pair.primal.dim)
    if spec == "tau":
        return tau_phase_symbol(pair)
    raise ValueError(f"unknown sigma spec {spec!r}")
