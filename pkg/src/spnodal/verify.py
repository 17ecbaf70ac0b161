"""One-command invariant suite for the solver's structural identities.

Every testable identity, inequality and scaling the method relies on is
exercised against seeded random fields plus constructed edge cases:
potential-solve identities (energy identity, nonnegativity, quadratic
scaling, cross-coupling symmetry, split decomposition), reaction-term
hypotheses, gradient consistency against central differences, projection
residuals, unit-box containment of projections of scaled-up set members,
reduced-energy consistency, and the nondegeneracy certificates.  Failures
are report entries, never exceptions, and the rendered report is
byte-identical for identical (seed, domain, nonlinearity).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .grid import (
    Field,
    GridDomain,
    apply_laplacian,
    build_radial_grid,
    cg_solve,
    inner_h1,
    integrate,
    jacobi_smooth,
    negative_part,
    nodal_threshold,
    positive_part,
    smallest_eigenvalue,
)
# bound as module-level names so fault-injection tests can swap them out
from . import nehari as nehari_mod
from . import poisson as poisson_mod
from .energy import check_hypotheses, directional, energy_report, energy_value
from .minimize import MinimizeOptions, initial_guess, minimize_ground, minimize_nodal

#: Central tolerance table.  Solver-limited identities sit at 1e-8 relative,
#: finite-difference comparisons at slope 2 +- 0.2, convergence orders at
#: +-25-30%.
TOLERANCES = {
    "laplacian_symmetry": 1e-12,
    "sign_split": 0.0,
    "poincare": 1e-6,            # relative slack on the eigenvalue bound
    "phi_nonneg": 1e-10,         # relative to max phi
    "phi_scaling": 1e-8,
    "energy_identity": 1e-8,
    "cross_symmetry": 1e-8,
    "nonlocal_split": 1e-8,
    "nonlocal_bound": 1.0,       # fitted-constant ratio, margin included
    "phi_continuity": 0.5,       # decay factor per 10x smaller perturbation
    "hypotheses": 0.0,           # number of failed sub-checks
    "gradient_slope": 0.2,       # |slope - 2|
    "residual_additivity": 1e-10,
    "projection_residual": 1.0,  # ratio to tol * (A+ + A-)
    "containment": 0.0,          # max(t, s) - 1 must stay <= 0
    "reduced_energy": 1e-10,
    "dominance": 0.0,            # max over grid of h(t,s) - h(1,1)
    "certificate": 0.0,          # negative margins of det > 0 and G > 2D
    "poisson_order": 0.25,       # |order - 2|
}

FD_SOLVE_TOL = 1e-13   # potential-solve tolerance inside finite-difference checks


@dataclass
class CheckResult:
    name: str
    statement: str
    tested: int
    worst: float
    tol: float
    passed: bool
    detail: str = ""


@dataclass
class VerifyReport:
    checks: Sequence[CheckResult]
    seed: int
    n_samples: int
    domain_descr: str
    nl_descr: str

    @property
    def all_pass(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list:
        return [c for c in self.checks if not c.passed]

    def to_text(self) -> str:
        lines = [
            "spnodal verification report",
            f"domain: {self.domain_descr}",
            f"nonlinearity: {self.nl_descr}",
            f"seed: {self.seed}  samples: {self.n_samples}",
            "-" * 72,
        ]
        for c in self.checks:
            mark = "PASS" if c.passed else "FAIL"
            lines.append(f"[{mark}] {c.name}: worst {float(c.worst)!r} vs tol "
                         f"{float(c.tol)!r} ({c.tested} tested)")
            lines.append(f"       {c.statement}")
            if c.detail:
                lines.append(f"       {c.detail}")
        lines.append("-" * 72)
        lines.append("overall: " + ("PASS" if self.all_pass else "FAIL"))
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# random fields
# ---------------------------------------------------------------------------

def random_field(d: GridDomain, rng: np.random.Generator) -> Field:
    """Seeded Gaussian nodal noise, two smoothing sweeps, unit amplitude."""
    vals = rng.standard_normal(d.size)
    if d._masked:
        vals[d.boundary_mask] = 0.0
    vals = jacobi_smooth(d, vals, sweeps=2)
    peak = np.max(np.abs(vals))
    if peak > 0:
        vals = vals / peak
    return Field(vals, d)


def sign_changing_field(d: GridDomain, rng: np.random.Generator) -> Field:
    """Random smooth field recentred so both sign parts are present."""
    for _ in range(20):
        u = random_field(d, rng)
        vals = u.values - np.dot(d.quad_weights, u.values) / np.sum(d.quad_weights)
        if d._masked:
            vals[d.boundary_mask] = 0.0
        u = Field(vals, d)
        thr = nodal_threshold(u)
        if np.any(u.values > thr) and np.any(u.values < -thr):
            return u
    raise RuntimeError("failed to draw a sign-changing field")


# ---------------------------------------------------------------------------
# the suite
# ---------------------------------------------------------------------------

def run_suite(d: GridDomain, nl, seed: int = 42, n_samples: int = 100) -> VerifyReport:
    """Run every invariant check on ``n_samples`` seeded fields.

    Deterministic given (seed, domain, nonlinearity); check failures land in
    the report, not in exceptions.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    rng = np.random.default_rng(seed)
    fields = [random_field(d, rng) for _ in range(n_samples)]
    signed = [sign_changing_field(d, rng) for _ in range(max(4, min(n_samples, 12)))]
    checks: list = []

    def guarded(name, statement, thunk):
        try:
            checks.append(thunk())
        except Exception as exc:   # a crashed check is a failed check
            checks.append(CheckResult(name, statement, 0, float("inf"),
                                      TOLERANCES[name], False,
                                      detail=f"aborted: {exc}"))

    guarded("laplacian_symmetry", "operator symmetry",
            lambda: _check_laplacian_symmetry(d, fields))
    guarded("sign_split", "exact sign split",
            lambda: _check_sign_split(d, fields))
    guarded("poincare", "eigenvalue lower bound",
            lambda: _check_poincare(d, fields))
    try:
        phis = [poisson_mod.solve_phi(d, u).phi for u in fields]
    except Exception:
        phis = None   # the dependent checks abort individually
    guarded("phi_nonneg", "potential nonnegativity",
            lambda: _check_phi_nonneg(d, fields, phis))
    guarded("phi_scaling", "potential quadratic scaling",
            lambda: _check_phi_scaling(d, fields, phis))
    guarded("energy_identity", "potential energy identity",
            lambda: _check_energy_identity(d, fields, phis))
    guarded("cross_symmetry", "cross-coupling symmetry",
            lambda: _check_cross_symmetry(d, fields))
    guarded("nonlocal_split", "nonlocal split decomposition",
            lambda: _check_nonlocal_split(d, signed))
    guarded("nonlocal_bound", "quartic norm bound",
            lambda: _check_nonlocal_bound(d, fields, phis))
    guarded("phi_continuity", "perturbation continuity",
            lambda: _check_phi_continuity(d, fields[0], rng))
    guarded("hypotheses", "reaction-term hypotheses",
            lambda: _check_hypotheses(nl))
    guarded("gradient_slope", "difference-quotient consistency",
            lambda: _check_gradient_slope(d, nl, signed[:3], rng))
    guarded("residual_additivity", "ray residual additivity",
            lambda: _check_residual_additivity(d, nl, signed))
    # set-membership checks share the projections; a projection failure
    # aborts them all individually
    projections = []
    guarded("projection_residual", "projection residual bound", lambda: (
        projections.extend(nehari_mod.project_nodal(d, nl, v) for v in signed),
        _check_projection_residual(projections))[-1])
    guarded("containment", "unit-box containment of scale-ups",
            lambda: _check_containment(d, nl, projections))
    guarded("reduced_energy", "reduced-energy consistency",
            lambda: _check_reduced_energy(d, nl, projections[0], rng))
    guarded("dominance", "reduced-energy dominance at set members",
            lambda: _check_dominance(projections))
    guarded("certificate", "nondegeneracy certificates",
            lambda: _check_certificates(d, nl, projections))

    return VerifyReport(checks=checks, seed=seed, n_samples=n_samples,
                        domain_descr=f"{d.builder} n={d.n} extent={d.extent!r}",
                        nl_descr=nl.describe())


def _check_laplacian_symmetry(d, fields) -> CheckResult:
    tol = TOLERANCES["laplacian_symmetry"]
    worst = 0.0
    for i in range(len(fields) - 1):
        u, v = fields[i], fields[i + 1]
        lhs = integrate(d, apply_laplacian(d, u).values * v.values)
        rhs = integrate(d, apply_laplacian(d, v).values * u.values)
        scale = math.sqrt(inner_h1(d, u, u) * inner_h1(d, v, v))
        worst = max(worst, abs(lhs - rhs) / scale)
    return CheckResult("laplacian_symmetry",
                       "<-Lap u, v> = <u, -Lap v> in quadrature",
                       len(fields) - 1, worst, tol, worst <= tol)


def _check_sign_split(d, fields) -> CheckResult:
    tol = TOLERANCES["sign_split"]
    worst = 0.0
    for u in fields:
        up = positive_part(u)
        um = negative_part(u)
        worst = max(worst,
                    float(np.max(np.abs(up.values + um.values - u.values))),
                    float(np.max(np.abs(up.values * um.values))))
    return CheckResult("sign_split", "u+ + u- = u and u+ u- = 0 nodewise, exactly",
                       len(fields), worst, tol, worst <= tol)


def _check_poincare(d, fields) -> CheckResult:
    tol = TOLERANCES["poincare"]
    lam = smallest_eigenvalue(d)
    # random fields sit far above the bound; two inverse-iteration sweeps of
    # a constant give a near-extremal sample where the bound is sharp
    near = Field(np.where(d.boundary_mask, 0.0, 1.0), d)
    for _ in range(2):
        near = cg_solve(d, None, near, tol=1e-12).x
    worst = 0.0
    for u in list(fields) + [near]:
        lhs = inner_h1(d, u, u)
        rhs = lam * integrate(d, u.values * u.values)
        worst = max(worst, (rhs - lhs) / rhs)
    return CheckResult("poincare", "||u||^2 >= lambda_1 int u^2 (discrete)",
                       len(fields) + 1, worst, tol, worst <= tol,
                       detail=f"lambda_1 = {lam!r}")


def _check_phi_nonneg(d, fields, phis) -> CheckResult:
    tol = TOLERANCES["phi_nonneg"]
    worst = 0.0
    for phi in phis:
        top = float(np.max(phi.values))
        if top <= 0:
            continue
        worst = max(worst, -float(np.min(phi.values)) / top)
    return CheckResult("phi_nonneg", "phi_u >= 0 up to solver tolerance",
                       len(fields), worst, tol, worst <= tol)


def _check_phi_scaling(d, fields, phis) -> CheckResult:
    tol = TOLERANCES["phi_scaling"]
    worst = 0.0
    count = 0
    for u, phi in zip(fields, phis):
        for t in (0.5, 2.0, 3.0):
            phi_t = poisson_mod.solve_phi(d, Field(t * u.values, d)).phi
            num = float(np.max(np.abs(phi_t.values - t * t * phi.values)))
            den = float(np.max(np.abs(phi_t.values)))
            if den > 0:
                worst = max(worst, num / den)
            count += 1
    return CheckResult("phi_scaling", "phi_{t u} = t^2 phi_u for t in {0.5, 2, 3}",
                       count, worst, tol, worst <= tol)


def _check_energy_identity(d, fields, phis) -> CheckResult:
    tol = TOLERANCES["energy_identity"]
    worst = 0.0
    for u, phi in zip(fields, phis):
        n_u = integrate(d, phi.values * u.values * u.values)
        lhs = inner_h1(d, phi, phi)
        if n_u > 0:
            worst = max(worst, abs(lhs - n_u) / n_u)
    return CheckResult("energy_identity",
                       "int |grad phi_u|^2 = int phi_u u^2",
                       len(fields), worst, tol, worst <= tol)


def _check_cross_symmetry(d, fields) -> CheckResult:
    tol = TOLERANCES["cross_symmetry"]
    worst = 0.0
    pairs = 0
    for i in range(0, len(fields) - 1, 2):
        a, b = fields[i], fields[i + 1]
        ab = poisson_mod.cross_coupling(d, a, b)
        ba = poisson_mod.cross_coupling(d, b, a)
        scale = max(ab, ba)
        if scale > 0:
            worst = max(worst, abs(ab - ba) / scale)
        pairs += 1
    return CheckResult("cross_symmetry", "int phi_a b^2 = int phi_b a^2",
                       pairs, worst, tol, worst <= tol)


def _check_nonlocal_split(d, signed) -> CheckResult:
    tol = TOLERANCES["nonlocal_split"]
    worst = 0.0
    for u in signed:
        up = positive_part(u)
        um = negative_part(u)
        n_u = poisson_mod.nonlocal_energy(d, u)
        n_p = poisson_mod.nonlocal_energy(d, up)
        n_m = poisson_mod.nonlocal_energy(d, um)
        cross = poisson_mod.cross_coupling(d, um, up)
        if n_u > 0:
            worst = max(worst, abs(n_u - n_p - n_m - 2.0 * cross) / n_u)
    return CheckResult("nonlocal_split",
                       "N(u) = N(u+) + N(u-) + 2 int phi_{u-} (u+)^2",
                       len(signed), worst, tol, worst <= tol)


def _quartic_ratio(d, u, phi) -> float:
    norm4 = inner_h1(d, u, u) ** 2
    n_u = integrate(d, phi.values * u.values * u.values)
    return n_u / norm4 if norm4 > 0 else 0.0


def fit_nonlocal_constant(d, n_fit: int = 32, margin: float = 2.0,
                          seed: int = 1234501) -> float:
    """One-time empirical constant C_emp with N(u) <= C_emp ||u||^4.

    Fitted from a dedicated seeded calibration set, with a safety margin;
    the value is never assumed, only fitted and then probed.
    """
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(n_fit):
        u = random_field(d, rng)
        phi = poisson_mod.solve_phi(d, u).phi
        best = max(best, _quartic_ratio(d, u, phi))
    return margin * best


def _check_nonlocal_bound(d, fields, phis) -> CheckResult:
    tol = TOLERANCES["nonlocal_bound"]
    fitted = fit_nonlocal_constant(d)
    worst = 0.0
    for u, phi in zip(fields, phis):
        worst = max(worst, _quartic_ratio(d, u, phi) / fitted)
    return CheckResult("nonlocal_bound",
                       "N(u) <= C_emp ||u||^4 with C_emp fitted once",
                       len(fields), worst, tol, worst <= tol,
                       detail=f"C_emp = {float(fitted)!r}")


def _check_phi_continuity(d, u, rng) -> CheckResult:
    tol = TOLERANCES["phi_continuity"]
    delta = random_field(d, rng)
    n_u = poisson_mod.nonlocal_energy(d, u)
    diffs = []
    for eps in (1e-1, 1e-2, 1e-3, 1e-4):
        pert = Field(u.values + eps * delta.values, d)
        diffs.append(abs(poisson_mod.nonlocal_energy(d, pert) - n_u))
    worst = 0.0
    for a, b in zip(diffs, diffs[1:]):
        if a > 0:
            worst = max(worst, b / a)   # should shrink ~10x per rung
    return CheckResult("phi_continuity",
                       "|N(u + delta) - N(u)| -> 0 along a shrinking ladder",
                       len(diffs), worst, tol, worst <= tol)


def _check_hypotheses(nl) -> CheckResult:
    tol = TOLERANCES["hypotheses"]
    rep = check_hypotheses(nl)
    failed = rep.failed()
    detail = "; ".join(f"{c.name}: {c.detail}" for c in failed)
    return CheckResult("hypotheses",
                       "growth/monotonicity hypotheses and H(s) properties",
                       len(rep.checks), float(len(failed)), tol,
                       len(failed) == 0, detail=detail)


def _check_gradient_slope(d, nl, us, rng) -> CheckResult:
    tol = TOLERANCES["gradient_slope"]
    worst = 0.0
    count = 0
    for u in us:
        u, v = fd_pair(d, u, rng)
        slope = gradient_slope(d, nl, u, v)
        worst = max(worst, abs(slope - 2.0))
        count += 1
    return CheckResult("gradient_slope",
                       "central differences of J match J'(u)v at second order",
                       count, worst, tol, worst <= tol)


def fd_pair(d, u: Field, rng: np.random.Generator):
    """Test pair for the difference-quotient ladder.

    Scales u so the superquartic part of J is commensurate with the
    (mesh-roughness dominated) quadratic part, and biases the direction
    toward u: both keep the third-derivative term the ladder measures well
    above the floating-point floor of the energy differences.  With
    unit-amplitude pairs on fine grids the smallest rung lands below that
    floor and the measured slope degenerates.
    """
    a = inner_h1(d, u, u)
    b = integrate(d, np.abs(u.values) ** 5)
    amp = max(2.0, (a / b) ** (1.0 / 3.0)) if b > 0 else 2.0
    u2 = Field(amp * u.values, d)
    v = Field(random_field(d, rng).values + 0.6 * u2.values, d)
    return u2, v


def gradient_slope(d, nl, u: Field, v: Field,
                   eps_ladder=(1e-2, 1e-3, 1e-4)) -> float:
    """Log-log slope of the central-difference error of J against J'(u)v."""
    exact = directional(d, nl, u, v, tol=FD_SOLVE_TOL)
    errs = []
    for eps in eps_ladder:
        plus = energy_value(d, nl, Field(u.values + eps * v.values, d),
                                       tol=FD_SOLVE_TOL)
        minus = energy_value(d, nl, Field(u.values - eps * v.values, d),
                                        tol=FD_SOLVE_TOL)
        errs.append(max(abs((plus - minus) / (2.0 * eps) - exact), 1e-300))
    x = np.log(np.asarray(eps_ladder))
    y = np.log(np.asarray(errs))
    return float(np.polyfit(x, y, 1)[0])


def _check_residual_additivity(d, nl, signed) -> CheckResult:
    tol = TOLERANCES["residual_additivity"]
    worst = 0.0
    for u in signed:
        rep = energy_report(d, nl, u)
        scale = max(abs(rep.nehari_res), abs(rep.split_res_plus),
                    abs(rep.split_res_minus), 1e-300)
        worst = max(worst, abs(rep.nehari_res - rep.split_res_plus
                               - rep.split_res_minus) / scale)
    return CheckResult("residual_additivity", "J'(u)u = J'(u)u+ + J'(u)u-",
                       len(signed), worst, tol, worst <= tol)


def _require(projections) -> None:
    if not projections:
        raise RuntimeError("no set members available")


def _check_projection_residual(projections) -> CheckResult:
    _require(projections)
    tol = TOLERANCES["projection_residual"]
    worst = 0.0
    for proj in projections:
        worst = max(worst, proj.residual
                    / (nehari_mod.DEFAULT_PROJECTION_TOL * proj.coefficients.scale))
    return CheckResult("projection_residual",
                       "max |Phi(t, s)| <= tol (A+ + A-) after projection",
                       len(projections), worst, tol, worst <= tol)


def _check_containment(d, nl, projections) -> CheckResult:
    _require(projections)
    tol = TOLERANCES["containment"]
    worst = -1.0
    count = 0
    for k, proj in enumerate(projections):
        w = proj.field()
        c_up = 1.0 + 2.0 * (k + 1) / (len(projections) + 1)
        scaled = Field(c_up * w.values, d)
        res = nehari_mod.project_nodal(d, nl, scaled)
        worst = max(worst, res.t - 1.0, res.s - 1.0)
        count += 1
    return CheckResult("containment",
                       "scaling up a set member projects back with t, s in (0, 1]",
                       count, worst, tol, worst <= tol)


def _check_reduced_energy(d, nl, proj, rng) -> CheckResult:
    tol = TOLERANCES["reduced_energy"]
    c = proj.coefficients
    worst = 0.0
    count = 0
    for _ in range(10):
        t = float(rng.uniform(0.3, 2.0))
        s = float(rng.uniform(0.3, 2.0))
        reduced = float(nehari_mod.eval_h(c, t, s))
        full = energy_value(
            d, nl, Field(t * c.v_plus.values + s * c.v_minus.values, d))
        scale = max(abs(reduced), abs(full), 1e-300)
        worst = max(worst, abs(reduced - full) / scale)
        count += 1
    return CheckResult("reduced_energy",
                       "h(t, s) agrees with J(t v+ + s v-) evaluated in full",
                       count, worst, tol, worst <= tol)


def _check_dominance(projections) -> CheckResult:
    _require(projections)
    tol = TOLERANCES["dominance"]
    worst = -math.inf
    count = 0
    for proj in projections:
        worst = max(worst, dominance_margin(proj))
        count += 1
    return CheckResult("dominance",
                       "h(1, 1) is the strict max of h over the sample grid "
                       "for set members",
                       count, worst, tol, worst < tol)


def dominance_margin(proj, grid: Optional[np.ndarray] = None) -> float:
    """max over the sample grid (minus (1,1)) of h^w(t,s) - h^w(1,1).

    h^w is the reduced energy around the projected field w; in terms of the
    input field's coefficients that is a rescaling by the projection scales.
    Negative margin means the set member strictly dominates its ray family.
    """
    if grid is None:
        grid = np.linspace(0.2, 2.0, 10)
    c = proj.coefficients
    h11 = float(nehari_mod.eval_h(c, proj.t, proj.s))
    worst = -math.inf
    for t in grid:
        for s in grid:
            if abs(t - 1.0) < 1e-12 and abs(s - 1.0) < 1e-12:
                continue
            worst = max(worst, float(nehari_mod.eval_h(c, t * proj.t, s * proj.s)) - h11)
    return worst


def _check_certificates(d, nl, projections) -> CheckResult:
    _require(projections)
    tol = TOLERANCES["certificate"]
    worst = -math.inf
    count = 0
    for proj in projections:
        diag = nehari_mod.jacobian_diag(d, nl, proj.field(), membership_tol=1e-6)
        scale = max(abs(diag.det), 1e-300)
        worst = max(worst, -diag.det / scale,
                    2.0 * diag.d_cross - diag.g_plus,
                    2.0 * diag.d_cross - diag.g_minus)
        count += 1
    return CheckResult("certificate",
                       "det of the reduced Jacobian > 0 and G+- > 2 D on the set",
                       count, worst, tol, worst < tol)


# ---------------------------------------------------------------------------
# convergence study
# ---------------------------------------------------------------------------

@dataclass
class StudyRow:
    n: int
    h: float
    poisson_err: float
    c0: Optional[float] = None
    c_ground: Optional[float] = None
    error: str = ""


@dataclass
class StudyTable:
    rows: Sequence[StudyRow]

    def poisson_orders(self) -> list:
        out = []
        for a, b in zip(self.rows, self.rows[1:]):
            if a.error or b.error:
                continue
            out.append(math.log(a.poisson_err / b.poisson_err)
                       / math.log(a.h / b.h))
        return out

    def c0_ratios(self) -> list:
        cs = [r.c0 for r in self.rows if r.c0 is not None and not r.error]
        diffs = [abs(a - b) for a, b in zip(cs, cs[1:])]
        return [a / b for a, b in zip(diffs, diffs[1:]) if b > 0]

    def to_csv(self) -> str:
        lines = ["n,h,poisson_err,c0,c_ground,error"]
        for r in self.rows:
            lines.append(",".join([
                str(r.n), repr(r.h), repr(r.poisson_err),
                "" if r.c0 is None else repr(r.c0),
                "" if r.c_ground is None else repr(r.c_ground),
                r.error,
            ]))
        return "\n".join(lines) + "\n"


def radial_poisson_oracle_error(n: int, radius: float = 1.0,
                                tol: float = 1e-12) -> float:
    """Max-norm relative error of the solve against phi = (R^2 - r^2)/6.

    The unit source is the operator oracle for -Delta phi = 1 on the ball,
    whose exact solution is the quadratic above.
    """
    d = build_radial_grid(n, radius)
    rhs = Field(np.ones(d.size), d)
    sol = cg_solve(d, None, rhs, tol=tol)
    r = d.radii()
    exact = (radius * radius - r * r) / 6.0
    return float(np.max(np.abs(sol.x.values - exact)) / np.max(np.abs(exact)))


def convergence_study(ns: Sequence[int], nl=None, radius: float = 1.0,
                      include_energies: bool = False,
                      opts: Optional[MinimizeOptions] = None) -> StudyTable:
    """Refinement ladder: oracle error and (optionally) energies per level.

    Requires at least 3 resolutions; solver failures are recorded per row
    and the study continues.
    """
    ns = list(ns)
    if len(ns) < 3:
        raise ValueError("need a ladder of at least 3 resolutions")
    rows = []
    for n in ns:
        h = radius / (n + 1)
        try:
            err = radial_poisson_oracle_error(n, radius)
            row = StudyRow(n=n, h=h, poisson_err=err)
            if include_energies:
                d = build_radial_grid(n, radius)
                out = minimize_nodal(d, nl, initial_guess(d, "dipole"), opts)
                row.c0 = out.c0
                ground = minimize_ground(
                    d, nl, positive_part(initial_guess(d, "dipole")), opts)
                row.c_ground = ground.c0
        except Exception as exc:          # per-row, study continues
            row = StudyRow(n=n, h=h, poisson_err=float("nan"), error=str(exc))
        rows.append(row)
    return StudyTable(rows)
