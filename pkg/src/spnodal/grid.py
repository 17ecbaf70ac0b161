"""Structured-grid discretization of a bounded domain in R^3.

Two geometries are supported:

* ``box3d`` -- a cube with a uniform lattice of n^3 interior nodes and a
  7-point Laplacian.  An optional spherical mask turns the same lattice into
  a staircase ball embedded in its bounding box (masked sites are treated
  exactly like Dirichlet boundary: fields vanish there, quadrature ignores
  them).
* ``radial_ball`` -- a ball, reduced by radial symmetry to n nodes on
  (0, R).  The Laplacian v'' + (2/r) v' is discretized in conservative flux
  form so that it is exactly symmetric with respect to the shell-volume
  quadrature weights; regularity at r = 0 enters as the exact zero flux of
  r^2 v' through the origin.

All operators act on interior nodal values only; boundary values are
implicitly zero (homogeneous Dirichlet).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field as dataclass_field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import ndimage

BOX3D = "box3d"
RADIAL_BALL = "radial_ball"

FOUR_PI = 4.0 * math.pi

#: Relative magnitude below max|u| under which a node does not count as
#: signed; discrete fields are never exactly zero off the nodal line.
NODAL_THRESHOLD_REL = 1e-8


class DomainMismatchError(ValueError):
    """Fields from different grids were combined."""


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap.

    Carries the last relative residual and the iteration count.
    """

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True, eq=False)
class GridDomain:
    """Discretized domain: nodes, spacing, Dirichlet mask, quadrature weights.

    ``quad_weights[i]`` is the volume attached to node i; it is zero on
    masked sites, whose values are pinned to zero.  ``extent`` is the box
    side for plain boxes and the ball radius otherwise.
    """

    kind: str
    builder: str                 # box | ball_mask | radial
    n: int
    h: float
    extent: float
    origin: float
    boundary_mask: np.ndarray    # bool, True on sites excluded from the domain
    quad_weights: np.ndarray
    # radial stencil data (None for box grids)
    _face_coef: Optional[np.ndarray] = dataclass_field(default=None, repr=False)
    _boundary_coef: float = dataclass_field(default=0.0, repr=False)
    _shell_vol: Optional[np.ndarray] = dataclass_field(default=None, repr=False)

    # -- basic queries ----------------------------------------------------

    @property
    def size(self) -> int:
        """Number of stored nodal values (n^3 for box lattices, n radially)."""
        return self.boundary_mask.size

    @property
    def interior_count(self) -> int:
        return int(self.size - np.count_nonzero(self.boundary_mask))

    @property
    def shape(self) -> tuple:
        if self.kind == BOX3D:
            return (self.n, self.n, self.n)
        return (self.n,)

    def signature(self) -> tuple:
        return (self.kind, self.builder, self.n, repr(self.h), repr(self.extent))

    def compatible(self, other: "GridDomain") -> bool:
        return self.signature() == other.signature()

    def radii(self) -> np.ndarray:
        if self.kind != RADIAL_BALL:
            raise ValueError("radii() is only defined for radial_ball grids")
        return self.h * np.arange(1, self.n + 1, dtype=float)

    def node_coordinates(self) -> tuple:
        """Flat (x, y, z) coordinate arrays of the lattice sites."""
        if self.kind != BOX3D:
            raise ValueError("node_coordinates() is only defined for box3d grids")
        axis = self.origin + self.h * np.arange(1, self.n + 1, dtype=float)
        x, y, z = np.meshgrid(axis, axis, axis, indexing="ij")
        return x.ravel(), y.ravel(), z.ravel()

    # -- fields ------------------------------------------------------------

    def field(self, values) -> "Field":
        return Field(np.asarray(values, dtype=float), self)

    def zeros(self) -> "Field":
        return Field(np.zeros(self.size), self)

    # -- discrete operators -------------------------------------------------

    def apply_neg_laplacian(self, values: np.ndarray) -> np.ndarray:
        """-Delta with Dirichlet elimination, on raw value arrays."""
        if self.kind == BOX3D:
            n = self.n
            v = values.reshape(n, n, n)
            p = np.zeros((n + 2, n + 2, n + 2))
            p[1:-1, 1:-1, 1:-1] = v
            out = 6.0 * v - (
                p[:-2, 1:-1, 1:-1] + p[2:, 1:-1, 1:-1]
                + p[1:-1, :-2, 1:-1] + p[1:-1, 2:, 1:-1]
                + p[1:-1, 1:-1, :-2] + p[1:-1, 1:-1, 2:]
            )
            out = out.ravel() / (self.h * self.h)
            if self._masked:
                out[self.boundary_mask] = 0.0
            return out
        # radial: flux differences divided by shell volumes
        flux = self._face_coef * np.diff(values)
        out = np.zeros_like(values)
        out[:-1] -= flux
        out[1:] += flux
        out[-1] += self._boundary_coef * values[-1]
        return out / self._shell_vol

    def laplacian_diagonal(self) -> np.ndarray:
        if self.kind == BOX3D:
            diag = np.full(self.size, 6.0 / (self.h * self.h))
            if self._masked:
                diag[self.boundary_mask] = 1.0
            return diag
        diag = np.zeros(self.n)
        diag[:-1] += self._face_coef
        diag[1:] += self._face_coef
        diag[-1] += self._boundary_coef
        return diag / self._shell_vol

    def h1_form(self, u: np.ndarray, v: np.ndarray) -> float:
        """The stiffness bilinear form; exactly symmetric by construction."""
        if self.kind == BOX3D:
            n = self.n
            a = 0.0
            uu = u.reshape(n, n, n)
            vv = v.reshape(n, n, n)
            for axis in range(3):
                a += float(np.sum(np.diff(uu, axis=axis) * np.diff(vv, axis=axis)))
                first_u = np.take(uu, 0, axis=axis)
                last_u = np.take(uu, n - 1, axis=axis)
                first_v = np.take(vv, 0, axis=axis)
                last_v = np.take(vv, n - 1, axis=axis)
                a += float(np.sum(first_u * first_v) + np.sum(last_u * last_v))
            return self.h * a
        du = np.diff(u)
        dv = np.diff(v)
        a = float(np.dot(self._face_coef, du * dv))
        a += self._boundary_coef * (u[-1] * v[-1])
        return FOUR_PI * a

    @property
    def _masked(self) -> bool:
        return self.builder == "ball_mask"


@dataclass(eq=False)
class Field:
    """Nodal values of a function vanishing on the boundary.

    Values are stored flat in node-index order (C order over (x, y, z) for
    box lattices).  Entries must be finite; masked sites are forced to zero.
    """

    values: np.ndarray
    domain: GridDomain

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.domain.size,):
            raise DomainMismatchError(
                f"field has {v.shape} values, domain stores {self.domain.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite entries")
        if self.domain._masked and np.any(v[self.domain.boundary_mask]):
            v = v.copy()
            v[self.domain.boundary_mask] = 0.0
        self.values = v

    def copy(self) -> "Field":
        return Field(self.values.copy(), self.domain)

    def __add__(self, other: "Field") -> "Field":
        _check_same_domain(self.domain, other.domain)
        return Field(self.values + other.values, self.domain)

    def __sub__(self, other: "Field") -> "Field":
        _check_same_domain(self.domain, other.domain)
        return Field(self.values - other.values, self.domain)

    def __mul__(self, scalar: float) -> "Field":
        return Field(self.values * float(scalar), self.domain)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(-self.values, self.domain)


@dataclass
class NodalReport:
    """Connected components of {u > thr} and {u < -thr}, merged per sign."""

    count: int
    volumes: list
    signs: list
    threshold: float


def _check_same_domain(a: GridDomain, b: GridDomain) -> None:
    if a is b:
        return
    if not a.compatible(b):
        raise DomainMismatchError("fields live on different grids")


def _values(u) -> np.ndarray:
    return u.values if isinstance(u, Field) else np.asarray(u, dtype=float)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def build_box_grid(n: int, side: float) -> GridDomain:
    """Uniform cube grid: n^3 interior nodes, h = side/(n+1), weight h^3."""
    if n < 3:
        raise ValueError(f"need n >= 3 interior nodes per axis, got {n}")
    if side <= 0:
        raise ValueError("side must be positive")
    h = side / (n + 1)
    size = n ** 3
    return GridDomain(
        kind=BOX3D, builder="box", n=n, h=h, extent=float(side), origin=0.0,
        boundary_mask=np.zeros(size, dtype=bool),
        quad_weights=np.full(size, h ** 3),
    )


def build_ball_mask_grid(n: int, radius: float) -> GridDomain:
    """Staircase ball: bounding-box lattice with sites outside |x| < R masked.

    The mask plays the role of extra Dirichlet boundary; interior sites keep
    the plain h^3 weight.
    """
    if n < 3:
        raise ValueError(f"need n >= 3 lattice nodes per axis, got {n}")
    if radius <= 0:
        raise ValueError("radius must be positive")
    h = 2.0 * radius / (n + 1)
    axis = -radius + h * np.arange(1, n + 1, dtype=float)
    x, y, z = np.meshgrid(axis, axis, axis, indexing="ij")
    inside = (x * x + y * y + z * z) < radius * radius
    mask = ~inside.ravel()
    weights = np.where(mask, 0.0, h ** 3)
    return GridDomain(
        kind=BOX3D, builder="ball_mask", n=n, h=h, extent=float(radius),
        origin=-float(radius), boundary_mask=mask, quad_weights=weights,
    )


def build_radial_grid(n: int, radius: float) -> GridDomain:
    """Radial ball grid: nodes r_i = i h on (0, R), h = R/(n+1).

    Node i owns the spherical shell between the stencil flux faces; the
    innermost cell extends to r = 0 and the outermost to r = R, so the
    weights sum to |B_R| = (4/3) pi R^3 exactly.
    """
    if n < 3:
        raise ValueError(f"need n >= 3 radial nodes, got {n}")
    if radius <= 0:
        raise ValueError("radius must be positive")
    h = radius / (n + 1)
    r = h * np.arange(1, n + 1, dtype=float)
    faces = r[:-1] + 0.5 * h                      # interior flux faces
    face_coef = faces ** 2 / h
    boundary_coef = radius ** 2 / h               # one-sided flux through r = R
    inner = np.concatenate(([0.0], faces))        # cell boundaries, inner side
    outer = np.concatenate((faces, [radius]))
    shell_vol = (outer ** 3 - inner ** 3) / 3.0
    return GridDomain(
        kind=RADIAL_BALL, builder="radial", n=n, h=h, extent=float(radius),
        origin=0.0, boundary_mask=np.zeros(n, dtype=bool),
        quad_weights=FOUR_PI * shell_vol,
        _face_coef=face_coef, _boundary_coef=boundary_coef, _shell_vol=shell_vol,
    )


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

def apply_laplacian(d: GridDomain, u: Field) -> Field:
    """-Delta u with Dirichlet elimination; SPD wrt the quadrature product."""
    _check_same_domain(d, u.domain)
    return Field(d.apply_neg_laplacian(u.values), d)


def inner_h1(d: GridDomain, u: Field, v: Field) -> float:
    """<-Delta u, v> in quadrature weights = discrete int grad u . grad v."""
    _check_same_domain(d, u.domain)
    _check_same_domain(d, v.domain)
    return d.h1_form(u.values, v.values)


def norm_h1(d: GridDomain, u: Field) -> float:
    return math.sqrt(max(inner_h1(d, u, u), 0.0))


def integrate(d: GridDomain, g) -> float:
    """Quadrature sum  sum_i w_i g_i  over interior nodes."""
    vals = _values(g)
    if vals.shape != (d.size,):
        raise DomainMismatchError(
            f"integrand has {vals.shape} values, domain stores {d.size}")
    return float(np.dot(d.quad_weights, vals))


def positive_part(u: Field) -> Field:
    """Nodewise max(u, 0)."""
    return Field(np.maximum(u.values, 0.0), u.domain)


def negative_part(u: Field) -> Field:
    """Nodewise min(u, 0)."""
    return Field(np.minimum(u.values, 0.0), u.domain)


def nodal_threshold(u: Field) -> float:
    m = float(np.max(np.abs(u.values))) if u.values.size else 0.0
    return NODAL_THRESHOLD_REL * m


def jacobi_smooth(d: GridDomain, values: np.ndarray, sweeps: int = 2,
                  omega: float = 2.0 / 3.0) -> np.ndarray:
    """Damped-Jacobi sweeps x <- x - omega D^{-1}(-Delta x); turns raw noise
    into fields smooth enough for quadrature-level identity checks.  The
    damping matters: the undamped sweep leaves the checkerboard mode intact.
    """
    diag = d.laplacian_diagonal()
    v = np.asarray(values, dtype=float).copy()
    for _ in range(sweeps):
        v = v - omega * d.apply_neg_laplacian(v) / diag
        if d._masked:
            v[d.boundary_mask] = 0.0
    return v


# ---------------------------------------------------------------------------
# linear solver
# ---------------------------------------------------------------------------

@dataclass
class CgResult:
    x: Field
    residual: float      # relative, in the weighted L2 norm
    iterations: int


def default_iteration_cap(n_unknowns: int) -> int:
    return int(10 * math.sqrt(max(n_unknowns, 1))) + 1000


def cg_solve(
    d: GridDomain,
    operator: Optional[Callable[[np.ndarray], np.ndarray]],
    rhs: Field,
    tol: float = 1e-10,
    *,
    diagonal: Optional[np.ndarray] = None,
    max_iter: Optional[int] = None,
) -> CgResult:
    """Jacobi-preconditioned conjugate gradients for an SPD operator.

    ``operator`` maps raw value arrays to raw value arrays and must be
    self-adjoint positive definite in the quadrature inner product; ``None``
    selects the domain Laplacian.  Stops when the weighted-L2 residual drops
    below ``tol`` relative to the right-hand side; raises
    :class:`ConvergenceError` at the iteration cap.  Deterministic for fixed
    inputs.
    """
    _check_same_domain(d, rhs.domain)
    if not 0.0 < tol < 1.0:
        raise ValueError("tol must lie in (0, 1)")
    if operator is None:
        operator = d.apply_neg_laplacian
        if diagonal is None:
            diagonal = d.laplacian_diagonal()
    if diagonal is None:
        diagonal = np.ones(d.size)
    if max_iter is None:
        max_iter = default_iteration_cap(d.interior_count)

    w = d.quad_weights

    def wnorm(g: np.ndarray) -> float:
        return math.sqrt(float(np.dot(w, g * g)))

    b = rhs.values
    bnorm = wnorm(b)
    if bnorm == 0.0:
        return CgResult(d.zeros(), 0.0, 0)

    x = np.zeros_like(b)
    r = b.copy()
    z = r / diagonal
    p = z.copy()
    rz = float(np.dot(w, r * z))
    iterations = 0
    restarts = 0
    while iterations < max_iter:
        res = wnorm(r) / bnorm
        if res <= tol:
            # guard against recursive-residual drift
            true_r = b - operator(x)
            true_res = wnorm(true_r) / bnorm
            if true_res <= tol * 1.01 or restarts >= 3:
                return CgResult(Field(x, d), true_res, iterations)
            r = true_r
            z = r / diagonal
            p = z.copy()
            rz = float(np.dot(w, r * z))
            restarts += 1
        ap = operator(p)
        pap = float(np.dot(w, p * ap))
        if pap <= 0.0:
            raise ConvergenceError("operator is not positive definite on the search space",
                                   res, iterations)
        alpha = rz / pap
        x = x + alpha * p
        r = r - alpha * ap
        z = r / diagonal
        rz_new = float(np.dot(w, r * z))
        p = z + (rz_new / rz) * p
        rz = rz_new
        iterations += 1
    res = wnorm(b - operator(x)) / bnorm
    if res <= tol:
        return CgResult(Field(x, d), res, iterations)
    raise ConvergenceError("conjugate gradient did not converge", res, iterations)


def smallest_eigenvalue(d: GridDomain, tol: float = 1e-8, max_iter: int = 400) -> float:
    """Smallest Dirichlet eigenvalue of -Delta by inverse power iteration.

    Iterates x <- (-Delta)^{-1} x with weighted normalization; stops when the
    eigen-residual ||(-Delta)x - lambda x|| / (lambda ||x||) (weighted L2)
    drops below ``tol``.
    """
    w = d.quad_weights
    x = np.ones(d.size)
    if d._masked:
        x[d.boundary_mask] = 0.0
    x /= math.sqrt(float(np.dot(w, x * x)))
    lam = 0.0
    for it in range(max_iter):
        sol = cg_solve(d, None, Field(x, d), tol=1e-12)
        y = sol.x.values
        y /= math.sqrt(float(np.dot(w, y * y)))
        ay = d.apply_neg_laplacian(y)
        lam = float(np.dot(w, ay * y))
        resid = ay - lam * y
        rnorm = math.sqrt(float(np.dot(w, resid * resid)))
        if rnorm <= tol * lam:
            return lam
        x = y
    raise ConvergenceError("inverse power iteration did not converge",
                           rnorm / lam, max_iter)


# ---------------------------------------------------------------------------
# nodal domains
# ---------------------------------------------------------------------------

_FACE_STRUCTURE = ndimage.generate_binary_structure(3, 1)  # 6-connectivity


def nodal_domains(d: GridDomain, u: Field, threshold: Optional[float] = None) -> NodalReport:
    """Count connected sign regions of u.

    Components of {u > thr} and {u < -thr} are found with face (6-)
    connectivity on box lattices and interval connectivity radially, then
    reported together: positive components first.  Volumes are quadrature
    sums over the component's nodes.
    """
    _check_same_domain(d, u.domain)
    if threshold is None:
        threshold = nodal_threshold(u)
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    volumes: list = []
    signs: list = []
    for sign, mask in ((1, u.values > threshold), (-1, u.values < -threshold)):
        for vol in _component_volumes(d, mask):
            volumes.append(vol)
            signs.append(sign)
    return NodalReport(count=len(volumes), volumes=volumes, signs=signs,
                       threshold=threshold)


def _component_volumes(d: GridDomain, mask: np.ndarray) -> Sequence[float]:
    w = d.quad_weights
    if d.kind == BOX3D:
        labels, n_comp = ndimage.label(mask.reshape(d.shape), structure=_FACE_STRUCTURE)
        flat = labels.ravel()
        return [float(np.sum(w[flat == k])) for k in range(1, n_comp + 1)]
    vols = []
    current = 0.0
    active = False
    for i in range(d.n):
        if mask[i]:
            current += w[i]
            active = True
        elif active:
            vols.append(float(current))
            current = 0.0
            active = False
    if active:
        vols.append(float(current))
    return vols


def content_hash(u: Field) -> str:
    """Content address of a field's nodal values (used for caching)."""
    return hashlib.sha1(u.values.tobytes()).hexdigest()
