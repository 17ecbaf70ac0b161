import numpy as np
import pytest

from spnodal import (
    Field,
    PhiCache,
    cross_coupling,
    inner_h1,
    negative_part,
    nonlocal_energy,
    positive_part,
    solve_phi,
)
from spnodal.verify import random_field, sign_changing_field


def test_phi_of_zero_is_zero(ball63):
    res = solve_phi(ball63, ball63.zeros(), cache=None)
    assert np.all(res.phi.values == 0.0)
    assert res.residual == 0.0


def test_phi_unit_source_oracle(ball63):
    # u = 1 is an operator oracle, not a boundary-compatible field
    res = solve_phi(ball63, ball63.field(np.ones(ball63.size)), cache=None)
    r = ball63.radii()
    exact = (1.0 - r * r) / 6.0
    assert np.max(np.abs(res.phi.values - exact)) / np.max(exact) < 2e-2


def test_phi_quadratic_scaling(ball63, rng):
    u = random_field(ball63, rng)
    phi = solve_phi(ball63, u, cache=None).phi
    for t in (0.5, 2.0, 3.0):
        phi_t = solve_phi(ball63, Field(t * u.values, ball63), cache=None).phi
        num = np.max(np.abs(phi_t.values - t * t * phi.values))
        assert num <= 1e-8 * np.max(np.abs(phi_t.values))


def test_phi_nonnegative(box9, rng):
    for _ in range(20):
        u = random_field(box9, rng)
        phi = solve_phi(box9, u, cache=None).phi
        assert phi.values.min() >= -1e-10 * phi.values.max()


def test_energy_identity(ball63, box9, rng):
    for d in (ball63, box9):
        for _ in range(10):
            u = random_field(d, rng)
            phi = solve_phi(d, u, cache=None).phi
            n_u = nonlocal_energy(d, u, phi=phi)
            assert abs(inner_h1(d, phi, phi) - n_u) <= 1e-8 * n_u


def test_nonlocal_energy_quartic_scaling(ball63, rng):
    u = random_field(ball63, rng)
    n1 = nonlocal_energy(ball63, u, cache=None)
    n2 = nonlocal_energy(ball63, Field(2.0 * u.values, ball63), cache=None)
    assert n2 == pytest.approx(16.0 * n1, rel=1e-8)


def test_nonlocal_energy_zero(ball63):
    assert nonlocal_energy(ball63, ball63.zeros(), cache=None) == 0.0


def test_cross_coupling_symmetry(ball63, box9, rng):
    for d in (ball63, box9):
        for _ in range(5):
            a = random_field(d, rng)
            b = random_field(d, rng)
            ab = cross_coupling(d, a, b, cache=None)
            ba = cross_coupling(d, b, a, cache=None)
            assert abs(ab - ba) <= 1e-8 * max(ab, ba)
            assert ab >= 0.0


def test_cross_coupling_zero_argument(ball63, rng):
    a = random_field(ball63, rng)
    assert cross_coupling(ball63, ball63.zeros(), a, cache=None) == 0.0
    assert cross_coupling(ball63, a, ball63.zeros(), cache=None) == 0.0


def test_nonlocal_split_decomposition(ball63, rng):
    for _ in range(5):
        u = sign_changing_field(ball63, rng)
        up = positive_part(u)
        um = negative_part(u)
        n_u = nonlocal_energy(ball63, u, cache=None)
        n_sum = (nonlocal_energy(ball63, up, cache=None)
                 + nonlocal_energy(ball63, um, cache=None)
                 + 2.0 * cross_coupling(ball63, um, up, cache=None))
        assert abs(n_u - n_sum) <= 1e-8 * n_u


def test_cache_hit_returns_same_result(ball63, rng):
    cache = PhiCache()
    u = random_field(ball63, rng)
    first = solve_phi(ball63, u, cache=cache)
    again = solve_phi(ball63, u, cache=cache)
    assert again is first
    assert cache.hits == 1 and cache.misses == 1
    # different tolerance is a different entry
    solve_phi(ball63, u, tol=1e-8, cache=cache)
    assert cache.misses == 2


def test_phi_continuity_under_perturbation(ball63, rng):
    u = random_field(ball63, rng)
    delta = random_field(ball63, rng)
    n_u = nonlocal_energy(ball63, u, cache=None)
    diffs = []
    for eps in (1e-1, 1e-2, 1e-3, 1e-4):
        pert = Field(u.values + eps * delta.values, ball63)
        diffs.append(abs(nonlocal_energy(ball63, pert, cache=None) - n_u))
    for a, b in zip(diffs, diffs[1:]):
        assert b <= 0.5 * a
