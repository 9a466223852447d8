"""Quantization layer: Fourier multipliers, pseudodifferential operators,
canonical transforms, sector changes of variables, amplitude-class audits
and the exact-commutation / boundedness checks built on them.

Quantization is Kohn-Nirenberg throughout:

    a(X, D) u(x) = (2 pi)^{-n} int e^{i x.xi} a(x, xi) u_hat(xi) d xi,

discretized with the grid's spectral weights.  Symbols that come with a
separable expansion a = sum_r f_r(x) m_r(xi) are applied as R multiplier
passes; anything else falls back to the direct quadrature.
"""

import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import grid as gr
from . import symbols as sy
from .errors import (CutoffLeakage, NonFiniteMultiplier, NonFiniteSymbol,
                     OutOfSector, SingularAtOrigin, StructureViolation)


def low_freq_guard(grid, xi_min=None):
    """Smooth annular mask killing |xi| < xi_min, identically 1 above
    2 xi_min.  Default xi_min is two frequency-lattice spacings.
    """
    if xi_min is None:
        xi_min = 2.0 * grid.dxi
    r = grid.freq_radius()
    return gr._smoothstep((r - xi_min) / xi_min)


def apply_multiplier(f, m):
    """m(D) u for a multiplier given as a callable on (..., n) frequency
    stacks or as a precomputed lattice array.
    """
    g = f.grid
    if callable(m):
        vals = np.asarray(m(g.freq_stack()), dtype=complex)
    else:
        vals = np.asarray(m, dtype=complex)
    if vals.shape != g.shape:
        vals = np.broadcast_to(vals, g.shape)
    if not np.all(np.isfinite(vals)):
        raise NonFiniteMultiplier("multiplier non-finite on the lattice")
    fh = gr.transform(f) if f.space == "x" else f
    return gr.inverse_transform(gr.Field(g, fh.values * vals, "xi"))


def _multiplier_values(g, m, guard=None):
    vals = np.asarray(m(g.freq_stack()), dtype=complex) if callable(m) \
        else np.asarray(m, dtype=complex) + 0j
    if vals.shape != g.shape:
        vals = np.broadcast_to(vals, g.shape).copy()
    if guard is not None:
        vals = vals * guard
        vals = np.where(np.isfinite(vals), vals, 0.0)
    if not np.all(np.isfinite(vals)):
        raise NonFiniteMultiplier("multiplier non-finite on the lattice")
    return vals


def _guard_for(sigma, g, low_freq):
    if low_freq == "auto":
        return low_freq_guard(g) if sigma.xi_singular else None
    if low_freq is True:
        return low_freq_guard(g)
    return None


def apply_pseudo(f, sigma, method="auto", low_freq="auto", batch=256):
    """sigma(X, D) u on the grid.

    method "separable" uses the symbol's term expansion (R multiplier
    passes); "direct" does the full O(N^{2n}) quadrature; "auto" prefers
    separable when terms exist.  Symbols singular at xi = 0 get the
    low-frequency annular guard unless low_freq=False.
    """
    g = f.grid
    if getattr(sigma, "x_singular", False) and not g.offset:
        raise SingularAtOrigin("x-singular symbol needs an offset grid")
    guard = _guard_for(sigma, g, low_freq)
    terms = getattr(sigma, "terms", None)
    if method == "auto":
        method = "separable" if terms else "direct"
    if method == "separable":
        if not terms:
            raise ValueError("symbol carries no separable terms")
        X = g.coord_stack()
        out = np.zeros(g.shape, dtype=complex)
        fh = gr.transform(f)
        for fx, fxi in terms:
            mvals = _multiplier_values(g, fxi, guard)
            piece = gr.inverse_transform(gr.Field(g, fh.values * mvals, "xi"))
            xvals = np.asarray(fx(X), dtype=complex)
            if not np.all(np.isfinite(xvals)):
                raise NonFiniteSymbol("x-factor non-finite on the grid")
            out += xvals * piece.values
        return gr.Field(g, out, "x")
    if method == "direct":
        return _apply_direct(f, sigma, guard, batch)
    raise ValueError(f"unknown method {method!r}")


def _apply_direct(f, sigma, guard, batch):
    """Row-batched direct quadrature of the KN oscillatory sum."""
    g = f.grid
    fh = gr.transform(f)
    w = (g.dxi / (2.0 * np.pi)) ** g.n
    xi_flat = g.freq_stack().reshape(-1, g.n)
    uh = fh.values.ravel()
    if guard is not None:
        uh = uh * guard.ravel()
    x_flat = g.coord_stack().reshape(-1, g.n)
    out = np.empty(x_flat.shape[0], dtype=complex)
    for s in range(0, x_flat.shape[0], batch):
        xb = x_flat[s:s + batch]
        svals = sigma(xb[:, None, :], xi_flat[None, :, :])
        if guard is not None:
            svals = np.where(np.isfinite(svals), svals, 0.0)
        if not np.all(np.isfinite(svals)):
            raise NonFiniteSymbol("symbol non-finite on the sampling set")
        phase = np.exp(1j * xb @ xi_flat.T)
        out[s:s + batch] = np.sum(phase * svals * uh[None, :], axis=1) * w
    return gr.Field(g, out.reshape(g.shape), "x")


def apply_pseudo_adjoint(f, sigma, low_freq="auto"):
    """sigma(X, D)^* v = conj-sigma(Y, D) v, the discrete conjugate
    transpose: multiply by conj f_r in x, then apply conj m_r (D).
    """
    g = f.grid
    if getattr(sigma, "x_singular", False) and not g.offset:
        raise SingularAtOrigin("x-singular symbol needs an offset grid")
    terms = getattr(sigma, "terms", None)
    if not terms:
        raise ValueError("adjoint application needs separable terms")
    guard = _guard_for(sigma, g, low_freq)
    X = g.coord_stack()
    out = np.zeros(g.shape, dtype=complex)
    for fx, fxi in terms:
        xvals = np.conj(np.asarray(fx(X), dtype=complex))
        mvals = np.conj(_multiplier_values(g, fxi, guard))
        piece = gr.Field(g, xvals * f.values, "x")
        out += apply_multiplier(piece, mvals).values
    return gr.Field(g, out, "x")


# ---------------------------------------------------------------------------
# canonical transform


@dataclass
class ComposedCutoff:
    """Cutoff evaluated through a frequency map: base(fn(xi)).

    ``fn`` maps (..., n) points to either scalars (for scalar-profile
    bases, e.g. fn = p) or points (for warped cutoffs, e.g. fn = psi).
    """

    fn: object
    base: gr.Cutoff

    def __call__(self, pts):
        return self.base(self.fn(np.asarray(pts, dtype=float)))

    def on_freqs(self, grid):
        return self(grid.freq_stack())

    def on_coords(self, grid):
        return self(grid.coord_stack())


@dataclass
class CanonicalTransformPlan:
    """Frequency-warp plan for I_gamma (forward) or its inverse.

    ``cutoff`` must vanish near xi = 0 by a declared margin; the warp is
    psi for the forward direction and psi^{-1} for the inverse.
    """

    pair: sy.DualPair
    cutoff: gr.Cutoff
    direction: str = "forward"
    leak_threshold: float = 0.01

    def warp(self, xi):
        if self.direction == "forward":
            return sy.psi(self.pair, xi)
        if self.direction == "inverse":
            return sy.psi_inv(self.pair, xi)
        raise ValueError(f"unknown direction {self.direction!r}")


def _leakage_check(fh, gamma_vals, threshold):
    total = np.sum(np.abs(fh.values) ** 2)
    if total == 0:
        return
    trans = (gamma_vals > 1e-3) & (gamma_vals < 1.0 - 1e-3)
    frac = np.sum(np.abs(fh.values[trans]) ** 2) / total
    if frac > threshold:
        warnings.warn(
            f"{100 * frac:.1f}% of spectral mass sits on the cutoff "
            "transition region", CutoffLeakage)


def apply_canonical(plan, f):
    """I_gamma u = F^{-1}[gamma(xi) u_hat(psi(xi))].

    The warped spectrum is evaluated by exact trigonometric interpolation
    (direct DFT sum at off-lattice frequencies), only where gamma is
    supported.
    """
    g = f.grid
    gamma_vals = plan.cutoff.on_freqs(g)
    fh = gr.transform(f) if f.space == "x" else f
    _leakage_check(fh, gamma_vals, plan.leak_threshold)
    xi_flat = g.freq_stack().reshape(-1, g.n)
    gam_flat = gamma_vals.ravel()
    # the zero mode is never warped: the map is undefined at xi = 0 and
    # every admissible cutoff is negligible there
    live = (gam_flat > 1e-14) & (np.linalg.norm(xi_flat, axis=-1) > 0)
    out = np.zeros(xi_flat.shape[0], dtype=complex)
    if np.any(live):
        warped = plan.warp(xi_flat[live])
        src = gr.Field(g, f.values, "x") if f.space == "x" \
            else gr.inverse_transform(f)
        out[live] = gam_flat[live] * gr.eval_offgrid(src, warped)
    return gr.inverse_transform(gr.Field(g, out.reshape(g.shape), "xi"))


# ---------------------------------------------------------------------------
# change of variables


def _parse_kappa(spec):
    if spec == "identity":
        return lambda x: x, False
    if spec.startswith("rotation:theta="):
        th = float(spec.split("=", 1)[1])
        R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        return lambda x: x @ R.T, False
    if spec == "sector":
        def kappa(x):
            head = x[..., :-1]
            arg = x[..., -1] ** 2 - np.sum(head**2, axis=-1)
            tail = np.sqrt(np.maximum(arg, 0.0))
            return np.concatenate([head, tail[..., None]], axis=-1), arg >= 0
        return kappa, True
    if spec == "sector-inverse":
        def kappa(x):
            head = x[..., :-1]
            tail = np.sqrt(x[..., -1] ** 2 + np.sum(head**2, axis=-1))
            return np.concatenate([head, tail[..., None]], axis=-1)
        return kappa, False
    raise ValueError(f"unknown change-of-variables spec {spec!r}")


def apply_change_of_vars(kappa_spec, gamma, f, method="spectral"):
    """J_gamma u = (gamma u) o kappa.

    kappa_spec in {"identity", "rotation:theta=..", "sector",
    "sector-inverse"}.  The sector map kappa(x) = (x', sqrt(x_n^2-|x'|^2))
    is defined on the cone |x_n| >= |x'|; outside it the output is zero,
    and OutOfSector is raised if gamma is not negligible at the folded
    boundary point there.  Interpolation is spectral by default; "cubic"
    uses a local spline (cheaper, ~1e-4 accurate).
    """
    g = f.grid
    kappa, partial = _parse_kappa(kappa_spec)
    x_flat = g.coord_stack().reshape(-1, g.n)
    if partial:
        src, valid = kappa(x_flat)
        bad = ~valid
        if np.any(bad) and gamma is not None:
            folded = src[bad]
            if np.any(np.abs(gamma(folded)) > 1e-9):
                raise OutOfSector(
                    "cutoff support reaches outside the valid cone")
    else:
        src = kappa(x_flat)
        valid = np.ones(x_flat.shape[0], dtype=bool)
    target = gr.Field(g, f.values if gamma is None
                      else gamma.on_coords(g) * f.values, "x")
    out = np.zeros(x_flat.shape[0], dtype=complex)
    if method == "spectral":
        out[valid] = gr.eval_field_offgrid(target, src[valid])
    elif method == "cubic":
        from scipy.ndimage import map_coordinates
        # fractional index coordinates on the periodic lattice
        idx = (src[valid] - g.axis_points()[0]) / g.h
        re = map_coordinates(target.values.real, idx.T, order=3, mode="grid-wrap")
        im = map_coordinates(target.values.imag, idx.T, order=3, mode="grid-wrap")
        out[valid] = re + 1j * im
    else:
        raise ValueError(f"unknown method {method!r}")
    return gr.Field(g, out.reshape(g.shape), "x")


# ---------------------------------------------------------------------------
# exact commutation


def commutator_residual(pair, i, j, h, f, multiplier=None):
    """Relative norm of [Omega_ij(X, D), m(D)] u.

    Default m = h(p(xi)), a scalar profile of the symbol; any function of
    p commutes with the quantized Omega_ij up to discretization because
    Omega_ij is linear in x and grad_x Omega_ij . grad p = 0.  Passing an
    explicit ``multiplier`` (e.g. h(xi_1)) gives the non-commuting control.
    """
    g = f.grid
    if multiplier is None:
        def multiplier(xs):
            r = np.linalg.norm(xs, axis=-1)
            vals = np.zeros_like(r)
            pos = r > 0
            vals[pos] = h(pair.primal(xs[pos]))
            return vals
    om = sy.omega_phase_symbol(pair, i, j)
    a_then_m = apply_multiplier(apply_pseudo(f, om, low_freq=False),
                                multiplier)
    m_then_a = apply_pseudo(apply_multiplier(f, multiplier), om,
                            low_freq=False)
    diff = gr.Field(g, a_then_m.values - m_then_a.values, "x")
    return diff.norm() / f.norm()


# ---------------------------------------------------------------------------
# amplitude classes


@dataclass(frozen=True)
class AmplitudeClassSpec:
    """Family A, B or R with orders m (x), m' (y) and k (xi).

    Derivative gains: family A gains decay in all three variable groups,
    B in x and y but not xi, R only in y; hence A is contained in B is
    contained in R.
    """

    family: str
    m: float = 0.0
    mp: float = 0.0
    k: float = 0.0

    def gains(self):
        if self.family == "A":
            return (1.0, 1.0, 1.0)
        if self.family == "B":
            return (1.0, 1.0, 0.0)
        if self.family == "R":
            return (0.0, 1.0, 0.0)
        raise ValueError(f"unknown family {self.family!r}")


def _directional_derivative(fn, base, group, direction, order, step):
    """Central-difference directional derivative in one variable group."""
    args = list(base)
    v = step * direction

    def at(t):
        a = list(args)
        a[group] = args[group] + t * v
        return fn(*a)

    if order == 0:
        return fn(*base)
    if order == 1:
        return (at(1.0) - at(-1.0)) / (2.0 * step)
    if order == 2:
        return (at(1.0) - 2.0 * at(0.0) + at(-1.0)) / step**2
    raise ValueError("derivative order up to 2")


def class_audit(a, spec, n=2, budget=64, seed=0, constant=50.0,
                scales=(1.0, 4.0, 16.0, 64.0, 256.0)):
    """Empirical membership test for an amplitude a(x, y, xi).

    Samples dyadic magnitudes in each variable group, estimates first and
    second directional derivatives by finite differences, and compares
    against the family weight

        <x>^{m - gx |alpha|} <y>^{m' - gy |beta|} <xi>^{k - gxi |gamma|}

    with the gain pattern of the declared family.  Returns (passed,
    worst_ratio); pass iff worst_ratio <= constant.
    """
    rng = np.random.default_rng(seed)
    gx, gy, gxi = spec.gains()
    worst = 0.0
    for _ in range(budget):
        sx, sy_, sxi = rng.choice(scales, size=3)
        x = sx * _unit(rng, n)
        y = sy_ * _unit(rng, n)
        xi = sxi * _unit(rng, n)
        base = (x, y, xi)
        mags = (np.sqrt(1 + sx**2), np.sqrt(1 + sy_**2),
                np.sqrt(1 + sxi**2))
        orders = (spec.m, spec.mp, spec.k)
        gains = (gx, gy, gxi)
        worst = max(worst, np.abs(a(*base)) / np.prod(
            [mg**o for mg, o in zip(mags, orders)]))
        for group in range(3):
            scale = (sx, sy_, sxi)[group]
            step = 1e-3 * max(scale, 1.0)
            for order in (1, 2):
                d = _directional_derivative(a, base, group, _unit(rng, n),
                                            order, step)
                wgt = np.prod([mg**o for mg, o in zip(mags, orders)])
                wgt *= mags[group] ** (-gains[group] * order)
                worst = max(worst, np.abs(d) / wgt)
    return bool(worst <= constant), float(worst)


def _unit(rng, n):
    v = rng.normal(size=n)
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------------------
# amplitude operators and boundedness ratios


@dataclass
class SeparableAmplitude:
    """a(x, y, xi) = sum_r f_r(x) g_r(y) m_r(xi), with declared x-order m.

    T_a u = (2 pi)^n sum_r f_r . m_r(D)(g_r u) under the discrete
    normalization (a == 1 gives T_a = (2 pi)^n identity).
    """

    label: str
    terms: list
    m: float = 0.0

    def __call__(self, x, y, xi):
        return sum(fx(x) * fy(y) * fxi(xi) for fx, fy, fxi in self.terms)


def apply_amplitude(f, amp):
    """T_a u for a separable amplitude."""
    g = f.grid
    X = g.coord_stack()
    out = np.zeros(g.shape, dtype=complex)
    for fx, fy, fxi in amp.terms:
        src = gr.Field(g, np.asarray(fy(X), dtype=complex) * f.values, "x")
        piece = apply_multiplier(src, lambda xs, fxi=fxi: fxi(xs))
        out += np.asarray(fx(X), dtype=complex) * piece.values
    return gr.Field(g, (2.0 * np.pi) ** g.n * out, "x")


def dilate(f, lam):
    """u_lambda(x) = u(x / lambda), by spectral interpolation."""
    g = f.grid
    pts = g.coord_stack().reshape(-1, g.n) / lam
    vals = gr.eval_field_offgrid(f, pts).reshape(g.shape)
    return gr.Field(g, vals, "x")


def _dilation_family_member(f, lam, carrier=None, center=None, spread=True):
    """Family member at parameter lam: the envelope dilated by lam (or kept
    fixed when spread=False), recentred at lam*center, and remodulated onto
    a fixed carrier.  Fixed carrier keeps the frequency content constant so
    the family probes spatial growth declarations only; the translated
    variant walks the weight region without outgrowing the box.
    """
    g = f.grid
    if spread and lam != 1.0:
        ul = dilate(f, lam)
    else:
        ul = f
    if center is not None:
        shift = lam * np.asarray(center, dtype=float)
        fh = gr.transform(ul)
        ph = np.exp(-1j * np.tensordot(g.freq_stack(), shift,
                                       axes=([-1], [0])))
        ul = gr.inverse_transform(gr.Field(g, ph * fh.values, "xi"))
    if carrier is None:
        return ul
    phase = np.exp(1j * np.tensordot(g.coord_stack(), np.asarray(carrier),
                                     axes=([-1], [0])))
    return gr.Field(g, phase * ul.values, "x")


def fio_bound_ratio(amp, f, mu=0.0, lams=(1.0, 2.0, 4.0, 8.0), carrier=None):
    """Ratios ||T_a u_lam||_{L^2_mu} / ||u_lam||_{L^2_{m+mu}} over the
    dilation family; bounded iff max/min <= slack (caller judges).
    """
    ratios = []
    for lam in lams:
        ul = _dilation_family_member(f, lam, carrier)
        tu = apply_amplitude(ul, amp)
        ratios.append(gr.weighted_norm(tu, mu)
                      / gr.weighted_norm(ul, amp.m + mu))
    return ratios


def structure_spot_check(pair, a, n_samples=64, seed=0, tol=1e-6):
    """Verify a(x, xi) vanishes on the orbit set, relative to its size at
    a rotated off-orbit companion point.  Raises StructureViolation.
    """
    rng = np.random.default_rng(seed)
    k = rng.normal(size=(n_samples, pair.primal.dim))
    lam = np.exp(rng.uniform(-1.0, 1.0, n_samples))
    gp = pair.primal.gradient(k)
    x_on = lam[:, None] * gp
    perp = np.stack([-gp[:, 1], gp[:, 0]], axis=-1)
    x_off = lam[:, None] * perp
    on = np.abs(a(x_on, k))
    off = np.abs(a(x_off, k))
    scale = np.maximum(off, 1e-300)
    if np.max(on / scale) > tol:
        raise StructureViolation(
            f"symbol does not vanish on the orbit set "
            f"(relative size {np.max(on / scale):.2e})")


def basiclem_ratio(pair, a, m, f, lams=(1.0, 2.0, 4.0, 8.0),
                   check_structure=True, carrier=None):
    """LHS/RHS of the structure inequality

        ||a(X,D)u|| <= C (sum_{i<j} ||Omega_ij(X,D)u||_{L^2_{m-1}}
                          + ||u||_{L^2_{m-1}})

    over a dilation family.  The symbol must vanish on the orbit set.
    """
    if check_structure:
        structure_spot_check(pair, a)
    n = pair.primal.dim
    omegas = [sy.omega_phase_symbol(pair, i, j)
              for i, j in sy.wedge_pairs(n)]
    ratios = []
    for lam in lams:
        ul = _dilation_family_member(f, lam, carrier)
        lhs = apply_pseudo(ul, a).norm()
        rhs = gr.weighted_norm(ul, m - 1.0)
        for om in omegas:
            rhs += gr.weighted_norm(apply_pseudo(ul, om, low_freq=False),
                                    m - 1.0)
        ratios.append(lhs / rhs)
    return ratios


def egorov_residual(a, plan, m, f, lams=(1.0, 2.0, 4.0, 8.0), batch=256,
                    carrier=None, center=None, spread=True):
    """Weighted residual ratios of the conjugation identity

        a(X,D) I_gamma = I_gamma a~(X,D) + R,
        a~(x, xi) = a0(x psi'(psi^{-1}(xi)), psi^{-1}(xi)),

    i.e. max over the family of ||(a(X,D) I_g - I_g a~(X,D)) u_lam|| /
    ||u_lam||_{L^2_{m-1}}.  Bounded ratios (not smallness) are the claim.
    """
    g = f.grid
    pair = plan.pair
    gamma_vals = plan.cutoff.on_freqs(g)
    live = gamma_vals.ravel() > 1e-14
    xi_flat = g.freq_stack().reshape(-1, g.n)
    # precompute the warp data on the live lattice
    xi_live = xi_flat[live]
    eta = sy.psi_inv(pair, xi_live)          # psi^{-1}(xi)
    J = sy.psi_jacobian(pair, eta)           # psi'(psi^{-1}(xi))

    def a_tilde_row(xb):
        # xb: (B, n); returns (B, n_live) symbol values
        xw = np.einsum("bi,kij->bkj", xb, J)
        return a(xw, np.broadcast_to(eta, xw.shape))

    ratios = []
    x_flat = g.coord_stack().reshape(-1, g.n)
    w = (g.dxi / (2.0 * np.pi)) ** g.n
    for lam in lams:
        ul = _dilation_family_member(f, lam, carrier, center, spread)
        left = apply_pseudo(apply_canonical(plan, ul), a)
        # direct application of a~(X,D) to u_lam, live modes only
        uh = gr.transform(ul).values.ravel()[live]
        vals = np.empty(x_flat.shape[0], dtype=complex)
        for s in range(0, x_flat.shape[0], batch):
            xb = x_flat[s:s + batch]
            svals = a_tilde_row(xb)
            phase = np.exp(1j * xb @ xi_live.T)
            vals[s:s + batch] = np.sum(phase * svals * uh[None, :],
                                       axis=1) * w
        right = apply_canonical(
            plan, gr.Field(g, vals.reshape(g.shape), "x"))
        diff = gr.Field(g, left.values - right.values, "x")
        ratios.append(diff.norm() / gr.weighted_norm(ul, m - 1.0))
    return ratios
