"""Energy minimization over the (nodal) Nehari set.

The least-energy sign-changing solution is computed as the limit of a
projected descent: at every iterate the field is rescaled onto the nodal
Nehari set, the descent direction is the Riesz representative of J' in the
Dirichlet inner product (one Poisson solve), and an Armijo backtracking line
search with re-projection keeps the energy strictly decreasing.  Stopping is
on the gradient norm relative to the iterate's norm.  The one-signed ground
state uses the same loop with the scalar ray projection.

The converged point carries certificates: the nondegenerate Jacobian of the
reduced gradient at (1, 1), the strict dominance of the reduced energy at
(1, 1) over a sample grid, the quarter-norm lower bound
J(w) >= ||w||^2 / 4 (exact algebra given H >= 0 and the set membership),
and a nodal-domain count of exactly 2; runs converging to three or more
domains are excited states and flagged as such.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg as sla

from .grid import (
    ConvergenceError,
    Field,
    GridDomain,
    NodalReport,
    inner_h1,
    integrate,
    jacobi_smooth,
    negative_part,
    nodal_domains,
    nodal_threshold,
    positive_part,
)
from .energy import energy_value, h1_gradient, residual_values
from .nehari import (
    BracketingError,
    JacobianDiagnostics,
    OneSignedFieldError,
    ProjectionResult,
    eval_h,
    jacobian_diag,
    project_nodal,
    project_scalar,
)
from .poisson import solve_phi, default_cache

INIT_STYLES = ("dipole", "mode2", "random_signed")


@dataclass
class MinimizeOptions:
    tol_grad: float = 1e-6
    max_iter: int = 2000
    ls_shrink: float = 0.5
    armijo: float = 1e-4
    proj_tol: float = 1e-10
    cg_tol: float = 1e-10
    collapse_ratio: float = 1e-3     # reject steps with min ||u+-|| below this times ||u||
    max_ls_shrinks: int = 40

    def __post_init__(self):
        for name in ("tol_grad", "max_iter", "ls_shrink", "armijo", "proj_tol",
                     "cg_tol", "collapse_ratio", "max_ls_shrinks"):
            if getattr(self, name) <= 0:
                raise ValueError(f"option {name} must be positive")
        if not self.ls_shrink < 1.0:
            raise ValueError("ls_shrink must lie in (0, 1)")


@dataclass
class HistoryRow:
    iter: int
    J: float
    grad_norm: float
    t: float
    s: float
    norm_plus: float
    norm_minus: float
    nonlocal_term: float
    cross: float
    pint_plus: float       # int |w+|^p with p the leading exponent
    pint_minus: float
    proj_residual: float = 0.0   # set-membership residual of the iterate


@dataclass
class BoundDiagnostics:
    """Realized lower-bound identities at the converged point.

    quarter_gap = J(w) - ||w||^2/4, which equals (int H(w) + J'(w)w)/4 and
    must be nonnegative up to the projection residual.  The floors are the
    minima of the split norms and split p-integrals along the iteration
    history (the discrete stand-ins for the uniform bounds away from the
    one-signed cone).
    """

    J: float
    norm: float
    norm_plus: float
    norm_minus: float
    pint_plus: float
    pint_minus: float
    h_integral: float
    quarter_gap: float
    floor_norm_plus: float
    floor_norm_minus: float
    floor_pint_plus: float
    floor_pint_minus: float


@dataclass
class SolveOutcome:
    w: Field
    c0: float
    nodal: NodalReport
    history: list
    status: str                       # converged | max_iter | stationary
    converged: bool
    grad_norm: float
    proj_residual: float
    bounds: Optional[BoundDiagnostics] = None
    jacobian: Optional[JacobianDiagnostics] = None
    ground_energy: Optional[float] = None
    warnings: list = dataclass_field(default_factory=list)

    @property
    def excited(self) -> bool:
        """Converged to a sign-changing state with more than two domains."""
        return self.converged and self.nodal.count != 2


# ---------------------------------------------------------------------------
# initial guesses
# ---------------------------------------------------------------------------

def initial_guess(d: GridDomain, style: str, seed: int = 0) -> Field:
    """Deterministic sign-changing starting fields.

    dipole: two opposite-sign Gaussian bumps; mode2: second-eigenfunction
    approximation; random_signed: seeded Gaussian noise minus its mean,
    lightly smoothed.  Same (domain, style, seed) gives bitwise-identical
    fields.
    """
    if style not in INIT_STYLES:
        raise ValueError(f"unknown initial-guess style {style!r}; "
                         f"choose one of {INIT_STYLES}")
    if d.kind == "radial_ball":
        r = d.radii()
        radius = d.extent
        if style == "dipole":
            vals = (np.exp(-(((r - 0.35 * radius) / (0.15 * radius)) ** 2))
                    - np.exp(-(((r - 0.70 * radius) / (0.15 * radius)) ** 2)))
        elif style == "mode2":
            vals = np.sin(2.0 * math.pi * r / radius) / r
        else:
            vals = _random_signed_values(d, seed)
        return Field(vals, d)
    x, y, z = d.node_coordinates()
    if d.builder == "ball_mask":
        # On ball geometries "dipole" means the radially layered bumps (the
        # same profile the radial grid uses, so the two discretizations start
        # in the same symmetry class); "mode2" is the symmetry-breaking
        # second-eigenfunction style dipole along x.
        radius = d.extent
        rho = np.sqrt(x * x + y * y + z * z)
        if style == "dipole":
            vals = (np.exp(-(((rho - 0.35 * radius) / (0.15 * radius)) ** 2))
                    - np.exp(-(((rho - 0.70 * radius) / (0.15 * radius)) ** 2)))
        elif style == "mode2":
            vals = x * np.cos(0.5 * math.pi * np.minimum(rho / radius, 1.0))
        else:
            vals = _random_signed_values(d, seed)
        return Field(vals, d)
    side = d.extent
    if style == "dipole":
        sig = 0.15 * side
        c1 = (0.35 * side, 0.5 * side, 0.5 * side)
        c2 = (0.65 * side, 0.5 * side, 0.5 * side)
        vals = (np.exp(-((x - c1[0]) ** 2 + (y - c1[1]) ** 2 + (z - c1[2]) ** 2) / sig ** 2)
                - np.exp(-((x - c2[0]) ** 2 + (y - c2[1]) ** 2 + (z - c2[2]) ** 2) / sig ** 2))
    elif style == "mode2":
        vals = (np.sin(2.0 * math.pi * x / side)
                * np.sin(math.pi * y / side) * np.sin(math.pi * z / side))
    else:
        vals = _random_signed_values(d, seed)
    return Field(vals, d)


def _random_signed_values(d: GridDomain, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    volume = float(np.sum(d.quad_weights))
    for _ in range(10):
        vals = rng.standard_normal(d.size)
        if d._masked:
            vals[d.boundary_mask] = 0.0
        vals -= np.dot(d.quad_weights, vals) / volume
        if d._masked:
            vals[d.boundary_mask] = 0.0
        vals = jacobi_smooth(d, vals, sweeps=2)
        thr = 1e-8 * np.max(np.abs(vals)) if np.any(vals) else 0.0
        if np.any(vals > thr) and np.any(vals < -thr):
            return vals
    raise RuntimeError("failed to draw a sign-changing random field")


# ---------------------------------------------------------------------------
# radial subspace on masked ball lattices
# ---------------------------------------------------------------------------

class RadialSubspace:
    """Constraint of a masked-ball lattice to radius-class-constant fields.

    Lattice sites fall into exact equal-radius classes (integer i^2+j^2+k^2),
    and fields constant on every class form a linear subspace that descent
    cannot leave: sign splits, scalar rescalings and class-constant steps all
    stay inside.  The constrained Dirichlet-gradient is the Galerkin solve of
    the stiffness form in the class basis, assembled once per domain.  This
    is how a least-energy value restricted to radially symmetric profiles is
    computed on a 3D lattice, for comparison against the 1D radial grid; the
    unconstrained lattice minimizer breaks that symmetry and finds strictly
    lower states.
    """

    def __init__(self, d: GridDomain):
        if d.builder != "ball_mask":
            raise ValueError("radial subspace is defined for ball_mask grids")
        self.domain = d
        x, y, z = d.node_coordinates()
        r2 = np.rint((x * x + y * y + z * z) / (d.h * d.h)).astype(np.int64)
        valid = ~d.boundary_mask
        classes, inverse = np.unique(r2[valid], return_inverse=True)
        self.n_classes = len(classes)
        self._valid = valid
        self._class_of = np.full(d.size, -1, dtype=np.int64)
        self._class_of[valid] = inverse
        w = d.quad_weights
        self._wsum = np.bincount(inverse, weights=w[valid], minlength=self.n_classes)
        stiff = np.empty((self.n_classes, self.n_classes))
        for a in range(self.n_classes):
            chi = np.zeros(d.size)
            chi[valid] = (inverse == a).astype(float)
            za = d.apply_neg_laplacian(chi)
            stiff[a] = np.bincount(inverse, weights=(w * za)[valid],
                                   minlength=self.n_classes)
        self._cho = sla.cho_factor(0.5 * (stiff + stiff.T))

    def average(self, values: np.ndarray) -> np.ndarray:
        """Weighted class means: the L2-orthogonal projection onto the subspace."""
        inv = self._class_of[self._valid]
        sums = np.bincount(inv, weights=(self.domain.quad_weights * values)[self._valid],
                           minlength=self.n_classes)
        out = np.zeros(self.domain.size)
        out[self._valid] = (sums / self._wsum)[inv]
        return out

    def gradient(self, nl, w: Field, phi: Field, cg_tol: float):
        """Riesz representative of J'(w) restricted to the subspace.

        Returns (g, ||g||_H1^2); g solves the reduced stiffness system with
        the class sums of the strong-form residual as right-hand side.
        """
        d = self.domain
        resid = residual_values(d, nl, w, tol=cg_tol, phi=phi)
        inv = self._class_of[self._valid]
        rhs = np.bincount(inv, weights=(d.quad_weights * resid)[self._valid],
                          minlength=self.n_classes)
        coef = sla.cho_solve(self._cho, rhs)
        g = np.zeros(d.size)
        g[self._valid] = coef[inv]
        return Field(g, d), float(np.dot(coef, rhs))


# ---------------------------------------------------------------------------
# descent over the nodal set
# ---------------------------------------------------------------------------

def _leading_exponent(nl) -> float:
    terms = nl.power_terms()
    return terms[0][1] if terms else 5.0


def _history_row(it, proj: ProjectionResult, J, grad_norm, p_lead) -> HistoryRow:
    c = proj.coefficients
    t, s = proj.t, proj.s
    if c.power_plus is not None:
        lam = c.nl.power_terms()[0][0]
        pint_plus = t ** p_lead * c.power_plus[0][0] / lam
        pint_minus = s ** p_lead * c.power_minus[0][0] / lam
    else:
        pint_plus = integrate(c.domain, np.abs(t * c.v_plus.values) ** p_lead)
        pint_minus = integrate(c.domain, np.abs(s * c.v_minus.values) ** p_lead)
    return HistoryRow(
        iter=it, J=J, grad_norm=grad_norm, t=t, s=s,
        norm_plus=t * math.sqrt(max(c.a_plus, 0.0)),
        norm_minus=s * math.sqrt(max(c.a_minus, 0.0)),
        nonlocal_term=(t ** 4 * c.b_plus + s ** 4 * c.b_minus
                       + 2.0 * t ** 2 * s ** 2 * c.d_cross),
        cross=t ** 2 * s ** 2 * c.d_cross,
        pint_plus=pint_plus, pint_minus=pint_minus,
        proj_residual=proj.residual,
    )


def minimize_nodal(d: GridDomain, nl, u0: Field,
                   opts: Optional[MinimizeOptions] = None,
                   subspace: Optional[RadialSubspace] = None) -> SolveOutcome:
    """Projected descent for the least-energy sign-changing solution.

    Loop: project onto the nodal set, take the Dirichlet-gradient direction,
    backtrack with re-projection until the Armijo decrease holds, shrinking
    further whenever a trial step collapses one sign part.  Returns the best
    state flagged non-converged at the iteration cap, or flagged stationary
    when the line search fails 40 times in a row.  With ``subspace`` the
    whole run is constrained to radius-class-constant fields.
    """
    opts = opts or MinimizeOptions()
    if subspace is not None:
        u0 = Field(subspace.average(u0.values), d)
    proj = project_nodal(d, nl, u0, tol=opts.proj_tol, poisson_tol=opts.cg_tol)
    J_w = float(eval_h(proj.coefficients, proj.t, proj.s))
    p_lead = _leading_exponent(nl)
    history: list = []
    status = "max_iter"
    grad_norm = float("inf")

    for it in range(opts.max_iter):
        w = proj.field()
        if subspace is not None:
            g, gn_sq = subspace.gradient(nl, w, proj.phi(), opts.cg_tol)
            grad_norm = math.sqrt(max(gn_sq, 0.0))
        else:
            g = h1_gradient(d, nl, w, tol=opts.cg_tol, phi=proj.phi())
            grad_norm = math.sqrt(max(inner_h1(d, g, g), 0.0))
        w_norm = math.sqrt(max(inner_h1(d, w, w), 0.0))
        history.append(_history_row(it, proj, J_w, grad_norm, p_lead))
        if grad_norm <= opts.tol_grad * w_norm:
            status = "converged"
            break

        alpha = 1.0
        accepted = None
        for _ in range(opts.max_ls_shrinks):
            u_try = Field(w.values - alpha * g.values, d)
            if not _parts_alive(d, u_try, opts.collapse_ratio):
                alpha *= opts.ls_shrink
                continue
            try:
                proj_try = project_nodal(d, nl, u_try, tol=opts.proj_tol,
                                         poisson_tol=opts.cg_tol)
            except (ConvergenceError, BracketingError, OneSignedFieldError):
                alpha *= opts.ls_shrink
                continue
            J_try = float(eval_h(proj_try.coefficients, proj_try.t, proj_try.s))
            if J_try < J_w - opts.armijo * alpha * grad_norm ** 2:
                accepted = (proj_try, J_try)
                break
            alpha *= opts.ls_shrink
        if accepted is None:
            status = "stationary"
            break
        proj, J_w = accepted

    return _finish_nodal(d, nl, proj, J_w, history, status, grad_norm, opts)


def _parts_alive(d: GridDomain, u: Field, collapse_ratio: float) -> bool:
    up = positive_part(u)
    um = negative_part(u)
    npl = inner_h1(d, up, up)
    nmi = inner_h1(d, um, um)
    ntot = inner_h1(d, u, u)
    if ntot <= 0.0:
        return False
    floor = collapse_ratio ** 2 * ntot
    return npl >= floor and nmi >= floor


def _finish_nodal(d, nl, proj, J_w, history, status, grad_norm, opts) -> SolveOutcome:
    w = proj.field()
    converged = status == "converged"
    nodal = nodal_domains(d, w)
    jac = None
    if converged:
        try:
            jac = jacobian_diag(d, nl, w, membership_tol=1e-6,
                                poisson_tol=opts.cg_tol)
        except ValueError:
            jac = None
    outcome = SolveOutcome(
        w=w, c0=J_w, nodal=nodal, history=history, status=status,
        converged=converged, grad_norm=grad_norm, proj_residual=proj.residual,
        jacobian=jac,
    )
    outcome.bounds = bound_diagnostics(d, nl, outcome)
    return outcome


def minimize_ground(d: GridDomain, nl, u0: Field,
                    opts: Optional[MinimizeOptions] = None) -> SolveOutcome:
    """Same descent restricted to the one-signed Nehari ray (ground state).

    The start must be nonnegative and nonzero; trial steps that develop a
    negative part beyond the nodal threshold are clipped back to their
    positive part before re-projection.
    """
    opts = opts or MinimizeOptions()
    if np.any(u0.values < -nodal_threshold(u0)):
        raise ValueError("ground-state start must be nonnegative")
    if not np.any(u0.values):
        raise ValueError("ground-state start must be nonzero")
    cache = default_cache()

    def _project(u: Field):
        sp = project_scalar(d, nl, u, tol=opts.proj_tol, poisson_tol=opts.cg_tol)
        w = Field(sp.t * u.values, d)
        phi_u = solve_phi(d, u, tol=opts.cg_tol, cache=cache).phi
        phi_w = Field(sp.t ** 2 * phi_u.values, d)
        return sp, w, phi_w

    sp, w, phi_w = _project(u0)
    J_w = energy_value(d, nl, w, phi=phi_w)
    p_lead = _leading_exponent(nl)
    history: list = []
    status = "max_iter"
    grad_norm = float("inf")

    for it in range(opts.max_iter):
        g = h1_gradient(d, nl, w, tol=opts.cg_tol, phi=phi_w)
        grad_norm = math.sqrt(max(inner_h1(d, g, g), 0.0))
        w_norm = math.sqrt(max(inner_h1(d, w, w), 0.0))
        history.append(HistoryRow(
            iter=it, J=J_w, grad_norm=grad_norm, t=sp.t, s=0.0,
            norm_plus=w_norm, norm_minus=0.0,
            nonlocal_term=integrate(d, phi_w.values * w.values * w.values),
            cross=0.0,
            pint_plus=integrate(d, np.abs(w.values) ** p_lead), pint_minus=0.0))
        if grad_norm <= opts.tol_grad * w_norm:
            status = "converged"
            break

        alpha = 1.0
        accepted = None
        for _ in range(opts.max_ls_shrinks):
            u_try = Field(w.values - alpha * g.values, d)
            thr = nodal_threshold(u_try)
            if np.any(u_try.values < -thr):
                u_try = positive_part(u_try)
            if not np.any(u_try.values > 0.0):
                alpha *= opts.ls_shrink
                continue
            try:
                sp_try, w_try, phi_try = _project(u_try)
            except (ConvergenceError, ValueError):
                alpha *= opts.ls_shrink
                continue
            J_try = energy_value(d, nl, w_try, phi=phi_try)
            if J_try < J_w - opts.armijo * alpha * grad_norm ** 2:
                accepted = (sp_try, w_try, phi_try, J_try)
                break
            alpha *= opts.ls_shrink
        if accepted is None:
            status = "stationary"
            break
        sp, w, phi_w, J_w = accepted[0], accepted[1], accepted[2], accepted[3]

    converged = status == "converged"
    return SolveOutcome(
        w=w, c0=J_w, nodal=nodal_domains(d, w), history=history, status=status,
        converged=converged, grad_norm=grad_norm, proj_residual=sp.residual,
    )


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def bound_diagnostics(d: GridDomain, nl, outcome: SolveOutcome) -> BoundDiagnostics:
    """Quarter-norm bound and history floors at a solved state.

    4 J(w) - J'(w)w = ||w||^2 + int H(w) is exact quadrature algebra, so on
    the set (J'(w)w = 0) the bound J(w) >= ||w||^2 / 4 can only fail through
    a projection bug; a violation beyond 1e-8 relative raises.
    """
    w = outcome.w
    norm_sq = inner_h1(d, w, w)
    h_integral = integrate(d, nl.H(w.values))
    quarter_gap = outcome.c0 - 0.25 * norm_sq
    if quarter_gap < -1e-8 * max(abs(outcome.c0), 1e-300):
        raise RuntimeError(
            f"quarter-norm bound violated: J - ||w||^2/4 = {quarter_gap:.3e}; "
            "the set projection is inconsistent")
    up = positive_part(w)
    um = negative_part(w)
    p_lead = _leading_exponent(nl)
    hist = outcome.history
    return BoundDiagnostics(
        J=outcome.c0,
        norm=math.sqrt(max(norm_sq, 0.0)),
        norm_plus=math.sqrt(max(inner_h1(d, up, up), 0.0)),
        norm_minus=math.sqrt(max(inner_h1(d, um, um), 0.0)),
        pint_plus=integrate(d, np.abs(up.values) ** p_lead),
        pint_minus=integrate(d, np.abs(um.values) ** p_lead),
        h_integral=h_integral,
        quarter_gap=quarter_gap,
        floor_norm_plus=min((r.norm_plus for r in hist), default=0.0),
        floor_norm_minus=min((r.norm_minus for r in hist), default=0.0),
        floor_pint_plus=min((r.pint_plus for r in hist), default=0.0),
        floor_pint_minus=min((r.pint_minus for r in hist), default=0.0),
    )


def start_plan(n_starts: int, seed: int = 0) -> list:
    """(style, seed) pairs for n starts: styles cycle, repeat cycles bump the
    seed so repeated random starts actually differ."""
    return [(INIT_STYLES[i % len(INIT_STYLES)], seed + i // len(INIT_STYLES))
            for i in range(n_starts)]


def multistart_nodal(d: GridDomain, nl, opts: Optional[MinimizeOptions] = None,
                     styles: Sequence[str] = INIT_STYLES, seed: int = 0,
                     agreement_rtol: float = 1e-4,
                     starts: Optional[Sequence] = None):
    """Run the nodal descent from several starts and keep the best.

    ``starts`` is a sequence of (style, seed) pairs; by default one run per
    entry of ``styles`` at the given seed.  Only converged two-domain runs
    compete for the reported minimum; runs with three or more domains are
    excited states.  If converged energies disagree beyond
    ``agreement_rtol`` the smallest is kept and a warning is attached.
    """
    if starts is None:
        starts = [(style, seed) for style in styles]
    outcomes = []
    for style, style_seed in starts:
        u0 = initial_guess(d, style, seed=style_seed)
        outcomes.append(minimize_nodal(d, nl, u0, opts))
    valid = [o for o in outcomes if o.converged and o.nodal.count == 2]
    pool = valid or [o for o in outcomes if o.converged] or outcomes
    best = min(pool, key=lambda o: o.c0)
    if len(valid) >= 2:
        cs = [o.c0 for o in valid]
        spread = (max(cs) - min(cs)) / max(abs(min(cs)), 1e-300)
        if spread > agreement_rtol:
            best.warnings.append(
                f"multi-start energies disagree by {spread:.2e} relative; "
                "reporting the smallest")
    return best, outcomes
