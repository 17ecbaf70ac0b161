"""Reaction term f and the energy functional J.

The functional on fields u vanishing at the boundary is

    J(u) = 1/2 ||u||^2 + 1/4 int phi_u u^2 - int F(u),
    J'(u)v = int grad u . grad v + int phi_u u v - int f(u) v,

with ||u||^2 the Dirichlet (H1) seminorm, phi_u the nonlocal potential and
F the primitive of f.  Built-in reaction terms are the superquartic power
families

    f(s) = lam |s|^(p-2) s              (pure power)
    f(s) = lam |s|^(p-2) s + mu |s|^(q-2) s   (two powers)

with exponents in (4, 6).  That range makes f(s)/s^3 strictly increasing,
which is the structural hypothesis everything downstream leans on; the
quantity H(s) = s f(s) - 4 F(s) is then nonnegative and increasing in |s|.

Extension point: any object exposing ``f``, ``F``, ``fprime`` (vectorized)
and ``power_terms()`` (returning None to force quadrature paths) can be used
in place of :class:`Nonlinearity`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .grid import Field, GridDomain, cg_solve, inner_h1, integrate
from .poisson import DEFAULT_POISSON_TOL, PhiCache, default_cache, solve_phi


@dataclass(frozen=True)
class Nonlinearity:
    """Power-family reaction term with superquartic, subcritical exponents."""

    lam: float = 1.0
    p: float = 5.0
    mu: float = 0.0
    q: Optional[float] = None

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if not 4.0 < self.p < 6.0:
            raise ValueError(f"exponent p must lie in (4, 6), got {self.p}")
        if self.mu < 0:
            raise ValueError("mu must be nonnegative")
        if self.mu > 0:
            if self.q is None or not 4.0 < self.q < 6.0:
                raise ValueError(f"exponent q must lie in (4, 6), got {self.q}")

    @property
    def form(self) -> str:
        return "two_power" if self.mu > 0 else "pure_power"

    def power_terms(self) -> Tuple[Tuple[float, float], ...]:
        """Coefficient/exponent pairs of f; None would mean 'not a power sum'."""
        terms = [(self.lam, self.p)]
        if self.mu > 0:
            terms.append((self.mu, self.q))
        return tuple(terms)

    def f(self, s):
        s = np.asarray(s, dtype=float)
        out = self.lam * np.abs(s) ** (self.p - 2) * s
        if self.mu > 0:
            out = out + self.mu * np.abs(s) ** (self.q - 2) * s
        return out

    def F(self, s):
        s = np.asarray(s, dtype=float)
        out = self.lam * np.abs(s) ** self.p / self.p
        if self.mu > 0:
            out = out + self.mu * np.abs(s) ** self.q / self.q
        return out

    def fprime(self, s):
        s = np.asarray(s, dtype=float)
        out = self.lam * (self.p - 1) * np.abs(s) ** (self.p - 2)
        if self.mu > 0:
            out = out + self.mu * (self.q - 1) * np.abs(s) ** (self.q - 2)
        return out

    def H(self, s):
        """H(s) = s f(s) - 4 F(s); for a pure power, lam (1 - 4/p) |s|^p."""
        s = np.asarray(s, dtype=float)
        return s * self.f(s) - 4.0 * self.F(s)

    def describe(self) -> str:
        if self.mu > 0:
            return (f"two_power lam={self.lam!r} p={self.p!r} "
                    f"mu={self.mu!r} q={self.q!r}")
        return f"pure_power lam={self.lam!r} p={self.p!r}"


def fault_nonlinearity(lam: float, p: float, mu: float = 0.0,
                       q: Optional[float] = None) -> Nonlinearity:
    """Build a power nonlinearity without the (4, 6) exponent check.

    Only for fault injection: lets the hypothesis checks and the
    verification suite demonstrate failure on out-of-range exponents.
    """
    obj = object.__new__(Nonlinearity)
    object.__setattr__(obj, "lam", float(lam))
    object.__setattr__(obj, "p", float(p))
    object.__setattr__(obj, "mu", float(mu))
    object.__setattr__(obj, "q", q)
    return obj


# ---------------------------------------------------------------------------
# growth / monotonicity hypothesis checks
# ---------------------------------------------------------------------------

@dataclass
class HypothesisCheck:
    name: str
    statement: str
    passed: bool
    detail: str = ""


@dataclass
class HypothesesReport:
    checks: Sequence[HypothesisCheck]

    @property
    def all_pass(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list:
        return [c for c in self.checks if not c.passed]


def default_sample_grid() -> np.ndarray:
    return np.logspace(-6, 3, 181)


def check_hypotheses(nl, s_grid: Optional[np.ndarray] = None) -> HypothesesReport:
    """Sample-based check of the growth and monotonicity hypotheses on f.

    On a grid of magnitudes spanning several decades: f(s)/s -> 0 at 0,
    f(s)/s^5 -> 0 at infinity, F(s)/s^4 -> infinity, f(s)/s^3 strictly
    increasing, H >= 0 and increasing with s H'(s) > 0.  Failures name the
    violated condition and the offending sample.
    """
    s = default_sample_grid() if s_grid is None else np.asarray(s_grid, dtype=float)
    s = np.sort(np.abs(s[s != 0]))
    if s.size < 8 or s[0] >= 1e-3 or s[-1] <= 1e2:
        raise ValueError("sample grid must span several decades, e.g. 1e-6..1e3")
    checks = []

    fs = nl.f(s)
    Fs = nl.F(s)
    fps = nl.fprime(s)
    Hs = s * fs - 4.0 * Fs

    # vanishing slope at the origin: f(s)/s decreasing toward 0 on the small end
    r1 = fs / s
    small = r1[s <= s[0] * 100.0]
    ok = bool(np.all(np.diff(small) >= -1e-300)) and small[0] <= 1e-6 * max(1.0, r1[-1])
    checks.append(HypothesisCheck(
        "f1", "f(s)/s -> 0 as s -> 0", ok,
        "" if ok else f"f(s)/s = {small[0]:.3e} at s = {s[0]:.3e}"))

    # subcritical growth: f(s)/s^5 decreasing toward 0 on the large end
    r2 = fs / s ** 5
    large = r2[s >= s[-1] / 100.0]
    ok = bool(np.all(np.diff(large) <= 1e-300)) and large[-1] <= 1e-6 * max(1.0, np.max(r2))
    checks.append(HypothesisCheck(
        "f2", "f(s)/s^5 -> 0 as |s| -> infinity", ok,
        "" if ok else f"f(s)/s^5 = {large[-1]:.3e} at s = {s[-1]:.3e}"))

    # superquartic potential: F(s)/s^4 increasing and large at the top end
    r3 = Fs / s ** 4
    ok = bool(np.all(np.diff(r3[s >= 1.0]) > 0)) and r3[-1] > 10.0 * r3[np.searchsorted(s, 1.0) - 1]
    checks.append(HypothesisCheck(
        "f3", "F(s)/s^4 -> infinity", ok,
        "" if ok else f"F(s)/s^4 not growing, {r3[-1]:.3e} at s = {s[-1]:.3e}"))

    # monotone quotient: f(s)/s^3 strictly increasing in |s|
    r4 = fs / s ** 3
    bad = np.nonzero(np.diff(r4) <= 0)[0]
    ok = bad.size == 0
    checks.append(HypothesisCheck(
        "f4", "f(s)/s^3 strictly increasing in |s| > 0", ok,
        "" if ok else f"f(s)/s^3 non-increasing between s = {s[bad[0]]:.3e} and {s[bad[0] + 1]:.3e}"))

    # induced properties of H(s) = s f(s) - 4 F(s)
    bad = np.nonzero(Hs < 0)[0]
    ok = bad.size == 0
    checks.append(HypothesisCheck(
        "H_nonneg", "H(s) = s f(s) - 4 F(s) >= 0", ok,
        "" if ok else f"H = {Hs[bad[0]]:.3e} at s = {s[bad[0]]:.3e}"))

    bad = np.nonzero(np.diff(Hs) <= 0)[0]
    ok = bad.size == 0
    checks.append(HypothesisCheck(
        "H_monotone", "H increasing in |s|", ok,
        "" if ok else f"H non-increasing between s = {s[bad[0]]:.3e} and {s[bad[0] + 1]:.3e}"))

    sHp = s * s * fps - 3.0 * s * fs
    bad = np.nonzero(sHp <= 0)[0]
    ok = bad.size == 0
    checks.append(HypothesisCheck(
        "H_slope", "s H'(s) = s^2 f'(s) - 3 s f(s) > 0 for s != 0", ok,
        "" if ok else f"s H'(s) = {sHp[bad[0]]:.3e} at s = {s[bad[0]]:.3e}"))

    return HypothesesReport(checks)


# ---------------------------------------------------------------------------
# the functional
# ---------------------------------------------------------------------------

@dataclass
class EnergyReport:
    J: float
    norm_sq: float            # ||u||^2
    nonlocal_term: float      # int phi_u u^2
    potential: float          # int F(u)
    nehari_res: float         # J'(u) u
    split_res_plus: float     # J'(u) u+
    split_res_minus: float    # J'(u) u-


def _phi_of(d, u, tol, cache, phi):
    if phi is not None:
        return phi
    return solve_phi(d, u, tol=tol, cache=cache).phi


def energy(d: GridDomain, nl, u: Field, tol: float = DEFAULT_POISSON_TOL,
           cache: PhiCache | None = None, phi: Field | None = None) -> EnergyReport:
    """Evaluate J(u) and its ray/split residuals in one pass."""
    cache = default_cache() if cache is None else cache
    phi = _phi_of(d, u, tol, cache, phi)
    v = u.values
    norm_sq = inner_h1(d, u, u)
    nonlocal_term = integrate(d, phi.values * v * v)
    potential = integrate(d, nl.F(v))
    J = 0.5 * norm_sq + 0.25 * nonlocal_term - potential
    plus = np.maximum(v, 0.0)
    minus = np.minimum(v, 0.0)
    res_plus = directional(d, nl, u, Field(plus, d), phi=phi)
    res_minus = directional(d, nl, u, Field(minus, d), phi=phi)
    return EnergyReport(J=J, norm_sq=norm_sq, nonlocal_term=nonlocal_term,
                        potential=potential, nehari_res=res_plus + res_minus,
                        split_res_plus=res_plus, split_res_minus=res_minus)


def energy_value(d: GridDomain, nl, u: Field, tol: float = DEFAULT_POISSON_TOL,
                 cache: PhiCache | None = None, phi: Field | None = None) -> float:
    """J(u) alone (skips the residual evaluations)."""
    cache = default_cache() if cache is None else cache
    phi = _phi_of(d, u, tol, cache, phi)
    v = u.values
    return float(0.5 * inner_h1(d, u, u)
                 + 0.25 * integrate(d, phi.values * v * v)
                 - integrate(d, nl.F(v)))


def directional(d: GridDomain, nl, u: Field, v: Field,
                tol: float = DEFAULT_POISSON_TOL, cache: PhiCache | None = None,
                phi: Field | None = None) -> float:
    """J'(u)v = int grad u . grad v + int phi_u u v - int f(u) v."""
    cache = default_cache() if cache is None else cache
    phi = _phi_of(d, u, tol, cache, phi)
    return (inner_h1(d, u, v)
            + integrate(d, phi.values * u.values * v.values)
            - integrate(d, nl.f(u.values) * v.values))


def residual_values(d: GridDomain, nl, u: Field,
                    tol: float = DEFAULT_POISSON_TOL,
                    cache: PhiCache | None = None,
                    phi: Field | None = None) -> np.ndarray:
    """Strong-form residual -Delta u + phi_u u - f(u) at the nodes."""
    cache = default_cache() if cache is None else cache
    phi = _phi_of(d, u, tol, cache, phi)
    return (d.apply_neg_laplacian(u.values)
            + phi.values * u.values - nl.f(u.values))


def h1_gradient(d: GridDomain, nl, u: Field, tol: float = DEFAULT_POISSON_TOL,
                cache: PhiCache | None = None, phi: Field | None = None) -> Field:
    """Riesz representative g of J'(u) in the Dirichlet inner product.

    g solves <-Delta g, v> = J'(u)v for all v, i.e. one Poisson solve applied
    to the strong-form residual; g vanishes exactly when u is critical.
    """
    cache = default_cache() if cache is None else cache
    r = residual_values(d, nl, u, tol=tol, cache=cache, phi=phi)
    sol = cg_solve(d, None, Field(r, d), tol=tol)
    return sol.x


# ``energy`` the function shadows the submodule attribute on the package, so
# callers that need both import this alias.
energy_report = energy
