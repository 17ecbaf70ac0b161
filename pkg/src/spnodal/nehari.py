"""Projection onto the Nehari set and its sign-split (nodal) refinement.

For a sign-changing field v with parts v+ = max(v, 0), v- = min(v, 0), the
energy along the two-parameter family t v+ + s v- reduces to scalars

    A+- = ||v+-||^2            B+- = int phi_{v+-} (v+-)^2
    D   = int phi_{v-} (v+)^2  X   = <v+, v->_H1

plus the ray integrals of the reaction term.  X is the discrete interface
coupling of the sign parts: the parts have nodewise-disjoint supports, but
the stiffness stencil still couples adjacent nodes of opposite sign, so at
mesh size h the quantity X is positive of order h rather than zero.  It is
carried through every formula here; dropping it would make the reduced maps
inconsistent with the full functional at solver precision.

The reduced energy and its gradient are

    h(t, s)    = t^2 A+/2 + s^2 A-/2 + t s X + t^4 B+/4 + s^4 B-/4
                 + t^2 s^2 D / 2 - int F(t v+) - int F(s v-)
    Phi_1(t,s) = t A+ + s X + t^3 B+ + t s^2 D - int f(t v+) v+
    Phi_2(t,s) = s A- + t X + s^3 B- + s t^2 D - int f(s v-) v-

A zero of Phi with t, s > 0 places t v+ + s v- on the nodal Nehari set.  A
zero always exists: Phi_1 > 0 on the left edge and < 0 on the right edge of
a large enough square [r, R]^2 (same for Phi_2 bottom/top), which is the
multidimensional intermediate-value configuration; the solver certifies such
a square and falls back to bisection inside it when damped Newton from
(1, 1) stalls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from .grid import (
    ConvergenceError,
    Field,
    GridDomain,
    inner_h1,
    integrate,
    negative_part,
    nodal_threshold,
    positive_part,
)
from .poisson import DEFAULT_POISSON_TOL, default_cache, solve_phi

DEFAULT_PROJECTION_TOL = 1e-10
NEWTON_MAX_ITER = 200
NEWTON_MAX_HALVINGS = 30
BISECTION_MAX_ITER = 120
EDGE_SAMPLES = 33
BOX_SEARCH_CAP = 60


class OneSignedFieldError(ValueError):
    """The field has no sign change; use project_scalar instead."""


class BracketingError(RuntimeError):
    """No sign-certified square could be found for the reduced gradient."""


@dataclass
class MirandaBox:
    """Square [r, R]^2 on which the reduced gradient has the edge signs
    Phi_1 > 0 at t = r, Phi_1 < 0 at t = R, Phi_2 > 0 at s = r,
    Phi_2 < 0 at s = R (sampled certificate, not a proof)."""

    r: float
    R: float


@dataclass
class NehariCoefficients:
    """Scalar reduction of the energy along t v+ + s v-."""

    a_plus: float
    a_minus: float
    b_plus: float
    b_minus: float
    d_cross: float
    h1_cross: float
    # (coefficient, exponent) pairs with coefficient = lam_k int |v+-|^{p_k},
    # or None when the reaction term is not a power sum
    power_plus: Optional[Tuple[Tuple[float, float], ...]]
    power_minus: Optional[Tuple[Tuple[float, float], ...]]
    v_plus: Field
    v_minus: Field
    phi_plus: Field
    phi_minus: Field
    domain: GridDomain
    nl: object

    @property
    def scale(self) -> float:
        return self.a_plus + self.a_minus


@dataclass
class ProjectionResult:
    t: float
    s: float
    residual: float          # max |Phi| component at (t, s)
    iterations: int
    converged: bool
    in_unit_box: bool        # t <= 1 and s <= 1
    coefficients: NehariCoefficients

    def field(self) -> Field:
        c = self.coefficients
        return Field(self.t * c.v_plus.values + self.s * c.v_minus.values, c.domain)

    def phi(self) -> Field:
        """Potential of the projected field, by linearity of the solve."""
        c = self.coefficients
        return Field(self.t ** 2 * c.phi_plus.values + self.s ** 2 * c.phi_minus.values,
                     c.domain)


@dataclass
class ScalarProjectionResult:
    t: float
    residual: float          # |J'(t u)(t u)|
    iterations: int
    converged: bool


@dataclass
class JacobianDiagnostics:
    """Nondegeneracy data of the reduced gradient at (1, 1) for w on the set.

    g_plus/g_minus are int [f'(w+-) (w+-)^2 - f(w+-) w+-] - 2 int phi_{w+-}
    (w+-)^2; det is the determinant of the exact (t, s)-Jacobian, which
    equals (g+ + X)(g- + X) - (2 D + X)^2.
    """

    g_plus: float
    g_minus: float
    d_cross: float
    h1_cross: float
    det: float

    @property
    def gap_ok(self) -> bool:
        return self.g_plus > 2.0 * self.d_cross and self.g_minus > 2.0 * self.d_cross

    @property
    def det_positive(self) -> bool:
        return self.det > 0.0


# ---------------------------------------------------------------------------
# coefficients
# ---------------------------------------------------------------------------

def split_parts(v: Field) -> Tuple[Field, Field, float]:
    """Sign parts and the nodal threshold; raises if either part is absent."""
    thr = nodal_threshold(v)
    has_plus = bool(np.any(v.values > thr))
    has_minus = bool(np.any(v.values < -thr))
    if not (has_plus and has_minus):
        raise OneSignedFieldError(
            "field does not change sign above the nodal threshold; "
            "use project_scalar for one-signed fields")
    return positive_part(v), negative_part(v), thr


def coefficients(d: GridDomain, nl, v: Field,
                 tol: float = DEFAULT_POISSON_TOL) -> NehariCoefficients:
    """Three quadrature couplings and two potential solves for the reduction.

    The cross coupling D is computed once, from phi_{v-} against (v+)^2; by
    the self-adjointness of the potential solve it equals the swapped form
    up to solver tolerance.
    """
    v_plus, v_minus, _ = split_parts(v)
    cache = default_cache()
    phi_plus = solve_phi(d, v_plus, tol=tol, cache=cache).phi
    phi_minus = solve_phi(d, v_minus, tol=tol, cache=cache).phi
    pp = v_plus.values
    mm = v_minus.values
    terms = nl.power_terms()
    if terms is not None:
        power_plus = tuple((lam * integrate(d, np.abs(pp) ** p), p) for lam, p in terms)
        power_minus = tuple((lam * integrate(d, np.abs(mm) ** p), p) for lam, p in terms)
    else:
        power_plus = power_minus = None
    return NehariCoefficients(
        a_plus=inner_h1(d, v_plus, v_plus),
        a_minus=inner_h1(d, v_minus, v_minus),
        b_plus=integrate(d, phi_plus.values * pp * pp),
        b_minus=integrate(d, phi_minus.values * mm * mm),
        d_cross=integrate(d, phi_minus.values * pp * pp),
        h1_cross=inner_h1(d, v_plus, v_minus),
        power_plus=power_plus,
        power_minus=power_minus,
        v_plus=v_plus, v_minus=v_minus,
        phi_plus=phi_plus, phi_minus=phi_minus,
        domain=d, nl=nl,
    )


# ray integrals of the reaction term: int f(t v) v, its t-derivative, int F(t v)

def _ray_quadrature(c: NehariCoefficients, side: str, t, integrand):
    """Quadrature ray integral, broadcasting over arrays of scales."""
    v = (c.v_plus if side == "+" else c.v_minus).values
    t_arr = np.asarray(t, dtype=float)
    if t_arr.ndim == 0:
        return integrand(float(t_arr), v)
    flat = np.array([integrand(float(tk), v) for tk in t_arr.ravel()])
    return flat.reshape(t_arr.shape)


def _ray_n(c: NehariCoefficients, side: str, t):
    power = c.power_plus if side == "+" else c.power_minus
    if power is not None:
        return sum(coef * t ** (p - 1.0) for coef, p in power)
    return _ray_quadrature(c, side, t,
                           lambda tk, v: integrate(c.domain, c.nl.f(tk * v) * v))


def _ray_n_prime(c: NehariCoefficients, side: str, t):
    power = c.power_plus if side == "+" else c.power_minus
    if power is not None:
        return sum(coef * (p - 1.0) * t ** (p - 2.0) for coef, p in power)
    return _ray_quadrature(c, side, t,
                           lambda tk, v: integrate(c.domain, c.nl.fprime(tk * v) * v * v))


def _ray_big_f(c: NehariCoefficients, side: str, t):
    power = c.power_plus if side == "+" else c.power_minus
    if power is not None:
        return sum(coef / p * t ** p for coef, p in power)
    return _ray_quadrature(c, side, t,
                           lambda tk, v: integrate(c.domain, c.nl.F(tk * v)))


# ---------------------------------------------------------------------------
# the reduced maps
# ---------------------------------------------------------------------------

def phi_map(c: NehariCoefficients, t, s):
    """Reduced gradient (J'(t v+ + s v-) v+, J'(t v+ + s v-) v-)."""
    if np.any(np.asarray(t) <= 0) or np.any(np.asarray(s) <= 0):
        raise ValueError("phi_map requires t, s > 0")
    p1 = t * c.a_plus + s * c.h1_cross + t ** 3 * c.b_plus + t * s ** 2 * c.d_cross \
        - _ray_n(c, "+", t)
    p2 = s * c.a_minus + t * c.h1_cross + s ** 3 * c.b_minus + s * t ** 2 * c.d_cross \
        - _ray_n(c, "-", s)
    return p1, p2


def phi_jacobian(c: NehariCoefficients, t: float, s: float) -> np.ndarray:
    j11 = c.a_plus + 3.0 * t ** 2 * c.b_plus + s ** 2 * c.d_cross \
        - _ray_n_prime(c, "+", t)
    j22 = c.a_minus + 3.0 * s ** 2 * c.b_minus + t ** 2 * c.d_cross \
        - _ray_n_prime(c, "-", s)
    j12 = c.h1_cross + 2.0 * t * s * c.d_cross
    return np.array([[j11, j12], [j12, j22]])


def eval_h(c: NehariCoefficients, t, s):
    """Reduced energy h(t, s) = J(t v+ + s v-); broadcasts for power terms."""
    return (0.5 * t ** 2 * c.a_plus + 0.5 * s ** 2 * c.a_minus
            + t * s * c.h1_cross
            + 0.25 * t ** 4 * c.b_plus + 0.25 * s ** 4 * c.b_minus
            + 0.5 * t ** 2 * s ** 2 * c.d_cross
            - _ray_big_f(c, "+", t) - _ray_big_f(c, "-", s))


# ---------------------------------------------------------------------------
# sign-box certification and root finding
# ---------------------------------------------------------------------------

def find_miranda_box(c: NehariCoefficients, edge_samples: int = EDGE_SAMPLES,
                     max_steps: int = BOX_SEARCH_CAP) -> MirandaBox:
    """Geometric search for a sign-certified square around the projection.

    Halves r from 1 and doubles R from 1 until the four sampled edge sign
    conditions hold simultaneously.  Failure after the step cap signals a
    reaction term that numerically violates the growth assumptions.
    """
    r, R = 1.0, 1.0
    halvings = doublings = 0
    while True:
        if r >= R:
            R *= 2.0
            doublings += 1
        grid = np.linspace(r, R, edge_samples)
        low_bad = (np.any(phi_map(c, r, grid)[0] <= 0)
                   or np.any(phi_map(c, grid, r)[1] <= 0))
        high_bad = (np.any(phi_map(c, R, grid)[0] >= 0)
                    or np.any(phi_map(c, grid, R)[1] >= 0))
        if not low_bad and not high_bad:
            return MirandaBox(r=r, R=R)
        if low_bad:
            r *= 0.5
            halvings += 1
        if high_bad:
            R *= 2.0
            doublings += 1
        if halvings > max_steps or doublings > max_steps:
            raise BracketingError(
                "no sign-certified square after "
                f"{halvings} halvings / {doublings} doublings; the reaction "
                "term may violate the growth/monotonicity hypotheses")


def damped_newton(c: NehariCoefficients, t0: float, s0: float, tol_abs: float,
                  max_iter: int = NEWTON_MAX_ITER):
    """Damped Newton on the reduced gradient; returns (t, s, res, iters, ok).

    A converged point only counts when the reduced Jacobian has a negative
    diagonal there: the admissible zero of Phi is the interior maximum of
    the reduced energy, while Phi also vanishes at the origin (a minimum),
    which Newton must not be allowed to report.
    """
    t, s = float(t0), float(s0)
    p1, p2 = phi_map(c, t, s)
    res = max(abs(p1), abs(p2))
    h_cur = float(eval_h(c, t, s))
    for it in range(max_iter):
        if res <= tol_abs:
            jac = phi_jacobian(c, t, s)
            return t, s, res, it, bool(jac[0, 0] < 0 and jac[1, 1] < 0)
        jac = phi_jacobian(c, t, s)
        det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
        if det == 0.0 or not np.isfinite(det):
            return t, s, res, it, False
        dt = -(jac[1, 1] * p1 - jac[0, 1] * p2) / det
        ds = -(-jac[1, 0] * p1 + jac[0, 0] * p2) / det
        step = 1.0
        accepted = False
        for _ in range(NEWTON_MAX_HALVINGS + 1):
            tn, sn = t + step * dt, s + step * ds
            if tn > 0 and sn > 0:
                q1, q2 = phi_map(c, tn, sn)
                rn = max(abs(q1), abs(q2))
                h_new = float(eval_h(c, tn, sn))
                # require residual decrease AND no energy loss: the target
                # is the maximum of h, and residual decrease alone can pull
                # iterates into the axis corners where |Phi| has a floor
                if rn < res and h_new >= h_cur - 1e-12 * abs(h_cur):
                    t, s, p1, p2, res, h_cur = tn, sn, q1, q2, rn, h_new
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            # ascent rescue: (p1, p2) is the gradient of h, so climb h when
            # the Newton model misleads far from the root
            norm_p = math.hypot(p1, p2)
            if norm_p == 0.0:
                return t, s, res, it, False
            step = 0.25 * (t + s) / norm_p
            for _ in range(NEWTON_MAX_HALVINGS + 1):
                tn, sn = t + step * p1, s + step * p2
                if tn > 0 and sn > 0:
                    h_new = float(eval_h(c, tn, sn))
                    if h_new > h_cur:
                        q1, q2 = phi_map(c, tn, sn)
                        t, s, p1, p2, h_cur = tn, sn, q1, q2, h_new
                        res = max(abs(q1), abs(q2))
                        accepted = True
                        break
                step *= 0.5
        if not accepted:
            return t, s, res, it, False
    if res <= tol_abs:
        jac = phi_jacobian(c, t, s)
        return t, s, res, max_iter, bool(jac[0, 0] < 0 and jac[1, 1] < 0)
    return t, s, res, max_iter, False


def _root_in_t(c: NehariCoefficients, s: float, lo: float, hi: float,
               tol_abs: float) -> float:
    """Unique t in [lo, hi] with Phi_1(t, s) = 0, by safeguarded Newton.

    Requires Phi_1(lo, s) > 0 > Phi_1(hi, s), which the certified square
    guarantees for every s in [r, R].
    """
    t = 0.5 * (lo + hi)
    for _ in range(100):
        p1 = phi_map(c, t, s)[0]
        if abs(p1) <= 0.5 * tol_abs:
            return t
        if p1 > 0:
            lo = t
        else:
            hi = t
        slope = phi_jacobian(c, t, s)[0, 0]
        t_new = t - p1 / slope if slope != 0 else t
        if not lo < t_new < hi:
            t_new = 0.5 * (lo + hi)
        if abs(t_new - t) <= 1e-16 * t:
            return t_new
        t = t_new
    return t


def project_nodal(d: GridDomain, nl, v: Field,
                  tol: float = DEFAULT_PROJECTION_TOL,
                  poisson_tol: float = DEFAULT_POISSON_TOL) -> ProjectionResult:
    """Scale the sign parts of v onto the nodal Nehari set.

    Damped Newton on the reduced gradient starting from (1, 1); when Newton
    stalls or leaves the positive quadrant, falls back to bisection inside a
    sign-certified square (outer bisection in s against the nested unique
    t-root).  The returned residual satisfies max |Phi| <= tol (A+ + A-) on
    success.
    """
    c = coefficients(d, nl, v, tol=poisson_tol)
    return project_nodal_from_coefficients(c, tol=tol)


def project_nodal_from_coefficients(c: NehariCoefficients,
                                    tol: float = DEFAULT_PROJECTION_TOL) -> ProjectionResult:
    tol_abs = tol * c.scale
    t, s, res, iters, ok = damped_newton(c, 1.0, 1.0, tol_abs)
    if not ok:
        box = find_miranda_box(c)
        lo_s, hi_s = box.r, box.R
        bis_iters = 0
        for _ in range(BISECTION_MAX_ITER):
            s_mid = 0.5 * (lo_s + hi_s)
            t_mid = _root_in_t(c, s_mid, box.r, box.R, tol_abs)
            p2 = phi_map(c, t_mid, s_mid)[1]
            bis_iters += 1
            if p2 > 0:
                lo_s = s_mid
            else:
                hi_s = s_mid
            if abs(p2) <= tol_abs:
                break
        s = 0.5 * (lo_s + hi_s)
        t = _root_in_t(c, s, box.r, box.R, tol_abs)
        # polish with Newton from the bisection point
        t, s, res, extra, ok = damped_newton(c, t, s, tol_abs)
        iters += bis_iters + extra
        if not ok:
            raise ConvergenceError("nodal projection did not converge", res / c.scale,
                                   iters)
    return ProjectionResult(t=t, s=s, residual=res, iterations=iters,
                            converged=ok, in_unit_box=(t <= 1.0 and s <= 1.0),
                            coefficients=c)


def project_scalar(d: GridDomain, nl, u: Field,
                   tol: float = DEFAULT_PROJECTION_TOL,
                   poisson_tol: float = DEFAULT_POISSON_TOL) -> ScalarProjectionResult:
    """Scale a one-signed field onto the Nehari set: J'(t u)(t u) = 0, t > 0.

    The equation t A + t^3 B = int f(t u) u has exactly one positive root
    because f(s)/s^3 is increasing; solved by safeguarded Newton on the
    monotone form A/t^2 + B - (ray integral)/t^3.
    """
    thr = nodal_threshold(u)
    has_plus = bool(np.any(u.values > thr))
    has_minus = bool(np.any(u.values < -thr))
    if has_plus and has_minus:
        raise ValueError("field changes sign; use project_nodal")
    if not (has_plus or has_minus):
        raise ValueError("cannot project the zero field")
    cache = default_cache()
    phi = solve_phi(d, u, tol=poisson_tol, cache=cache).phi
    a = inner_h1(d, u, u)
    b = integrate(d, phi.values * u.values * u.values)
    terms = nl.power_terms()
    if terms is not None:
        power = tuple((lam * integrate(d, np.abs(u.values) ** p), p) for lam, p in terms)
        ray = lambda t: sum(coef * t ** (p - 1.0) for coef, p in power)
        ray_prime = lambda t: sum(coef * (p - 1.0) * t ** (p - 2.0) for coef, p in power)
    else:
        ray = lambda t: integrate(d, nl.f(t * u.values) * u.values)
        ray_prime = lambda t: integrate(d, nl.fprime(t * u.values) * u.values * u.values)
    t, g, iters = solve_ray_equation(a, b, ray, ray_prime, tol_abs=tol * a)
    residual = abs(t * g)
    return ScalarProjectionResult(t=t, residual=residual, iterations=iters,
                                  converged=abs(g) <= tol * a)


def solve_ray_equation(a: float, b: float, ray, ray_prime, tol_abs: float):
    """Positive root of g(t) = t a + t^3 b - ray(t); returns (t, g(t), iters).

    psi(t) = g(t)/t^3 is strictly decreasing (a, b >= 0 and ray(t)/t^3
    increasing), so a bracket [lo, hi] with psi(lo) > 0 > psi(hi) pins the
    unique root; Newton steps are clipped into the bracket.
    """
    g = lambda t: t * a + t ** 3 * b - ray(t)
    lo, hi = 1.0, 1.0
    for _ in range(200):
        if g(lo) > 0:
            break
        lo *= 0.5
    else:
        raise ConvergenceError("no lower bracket for the ray equation", float("inf"), 200)
    for _ in range(200):
        if g(hi) < 0:
            break
        hi *= 2.0
    else:
        raise ConvergenceError("no upper bracket for the ray equation", float("inf"), 200)
    t = min(max(1.0, lo), hi)
    iters = 0
    for iters in range(1, 101):
        gt = g(t)
        if abs(gt) <= tol_abs:
            return t, gt, iters
        if gt > 0:
            lo = t
        else:
            hi = t
        slope = a + 3.0 * t ** 2 * b - ray_prime(t)
        t_new = t - gt / slope if slope != 0 else 0.5 * (lo + hi)
        if not lo < t_new < hi:
            t_new = 0.5 * (lo + hi)
        t = t_new
    return t, g(t), iters


# ---------------------------------------------------------------------------
# nondegeneracy certificate
# ---------------------------------------------------------------------------

def jacobian_diag(d: GridDomain, nl, w: Field,
                  membership_tol: float = 1e-8,
                  poisson_tol: float = DEFAULT_POISSON_TOL) -> JacobianDiagnostics:
    """Jacobian data of the reduced gradient at (1, 1) for w on the nodal set.

    Raises if w is not on the set within ``membership_tol`` (relative to
    A+ + A-).  The determinant is computed from the same closed form the
    Newton projection uses, so it matches a finite-difference Jacobian of
    :func:`phi_map` at (1, 1).
    """
    c = coefficients(d, nl, w, tol=poisson_tol)
    p1, p2 = phi_map(c, 1.0, 1.0)
    res = max(abs(p1), abs(p2))
    if res > membership_tol * c.scale:
        raise ValueError(
            f"field is not on the nodal Nehari set: residual {res:.3e} "
            f"exceeds {membership_tol:.1e} * (A+ + A-)")
    pp = c.v_plus.values
    mm = c.v_minus.values
    g_plus = (integrate(d, nl.fprime(pp) * pp * pp - nl.f(pp) * pp)
              - 2.0 * c.b_plus)
    g_minus = (integrate(d, nl.fprime(mm) * mm * mm - nl.f(mm) * mm)
               - 2.0 * c.b_minus)
    jac = phi_jacobian(c, 1.0, 1.0)
    det = float(jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0])
    return JacobianDiagnostics(g_plus=g_plus, g_minus=g_minus,
                               d_cross=c.d_cross, h1_cross=c.h1_cross, det=det)


def zero_couplings(c: NehariCoefficients) -> NehariCoefficients:
    """Copy of the coefficients with the cross couplings D and X removed.

    With both couplings zero the two components of the reduced gradient
    decouple into independent one-signed ray equations.
    """
    return replace(c, d_cross=0.0, h1_cross=0.0)
