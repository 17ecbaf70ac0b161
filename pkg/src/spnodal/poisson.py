"""The nonlocal potential phi_u solving -Delta phi = u^2.

For every field u there is a unique potential phi_u with homogeneous
Dirichlet data (the operator is SPD).  The scalar couplings built from it,

    N(u)    = int phi_u u^2          (quartic under scaling),
    D(a, b) = int phi_a b^2          (symmetric in a and b),

inherit the identities of the continuous problem up to solver tolerance:
int |grad phi_u|^2 = N(u), phi_u >= 0, phi_{tu} = t^2 phi_u.

phi solves are cached per field content; the minimizer evaluates the same
split parts many times.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

from .grid import Field, GridDomain, cg_solve, content_hash, integrate

DEFAULT_POISSON_TOL = 1e-10


@dataclass
class PoissonSolveResult:
    phi: Field
    residual: float
    iterations: int


class PhiCache:
    """Content-addressed cache of potential solves.

    Reads are lock-free dictionary lookups; writes are serialized, so the
    cache is safe for concurrent readers with a single writer at a time.
    """

    def __init__(self, max_entries: int = 256):
        self._data: dict = {}
        self._lock = threading.Lock()
        self._max = max_entries
        self.hits = 0
        self.misses = 0

    def get(self, key):
        entry = self._data.get(key)
        if entry is None:
            self.misses += 1
        else:
            self.hits += 1
        return entry

    def put(self, key, value) -> None:
        with self._lock:
            if len(self._data) >= self._max:
                self._data.clear()
            self._data[key] = value

    def clear(self) -> None:
        with self._lock:
            self._data.clear()


_default_cache = PhiCache()


def default_cache() -> PhiCache:
    return _default_cache


def solve_phi(d: GridDomain, u: Field, tol: float = DEFAULT_POISSON_TOL,
              cache: PhiCache | None = _default_cache) -> PoissonSolveResult:
    """Solve -Delta phi = u^2 with Dirichlet boundary on u's grid."""
    key = (d.signature(), content_hash(u), tol)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit
    rhs = Field(u.values * u.values, d)
    sol = cg_solve(d, None, rhs, tol=tol)
    result = PoissonSolveResult(phi=sol.x, residual=sol.residual,
                                iterations=sol.iterations)
    if cache is not None:
        cache.put(key, result)
    return result


def nonlocal_energy(d: GridDomain, u: Field, tol: float = DEFAULT_POISSON_TOL,
                    cache: PhiCache | None = _default_cache,
                    phi: Field | None = None) -> float:
    """N(u) = int phi_u u^2; nonnegative, and N(tu) = t^4 N(u)."""
    if phi is None:
        phi = solve_phi(d, u, tol=tol, cache=cache).phi
    return integrate(d, phi.values * u.values * u.values)


def cross_coupling(d: GridDomain, a: Field, b: Field,
                   tol: float = DEFAULT_POISSON_TOL,
                   cache: PhiCache | None = _default_cache,
                   phi_a: Field | None = None) -> float:
    """int phi_a b^2; equals int phi_b a^2 up to solver tolerance."""
    if phi_a is None:
        phi_a = solve_phi(d, a, tol=tol, cache=cache).phi
    return integrate(d, phi_a.values * b.values * b.values)
