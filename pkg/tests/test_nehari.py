import numpy as np
import pytest

from spnodal import (
    Field,
    build_box_grid,
    coefficients,
    cross_coupling,
    energy,
    eval_h,
    find_miranda_box,
    inner_h1,
    jacobian_diag,
    phi_map,
    project_nodal,
    project_scalar,
)
from spnodal.energy import energy_value, fault_nonlinearity
from spnodal.nehari import (
    BracketingError,
    OneSignedFieldError,
    damped_newton,
    phi_jacobian,
    project_nodal_from_coefficients,
    solve_ray_equation,
    zero_couplings,
)
from spnodal.verify import sign_changing_field


def _projected(d, nl, rng):
    v = sign_changing_field(d, rng)
    proj = project_nodal(d, nl, v)
    assert proj.converged
    return proj


# ---------------------------------------------------------------------------
# coefficients
# ---------------------------------------------------------------------------

def test_coefficients_odd_symmetric_field(box9, nl):
    x, y, z = box9.node_coordinates()
    v = box9.field(np.sin(2 * np.pi * x) * np.sin(np.pi * y) * np.sin(np.pi * z))
    c = coefficients(box9, nl, v)
    assert c.a_plus == pytest.approx(c.a_minus, rel=1e-10)
    assert c.b_plus == pytest.approx(c.b_minus, rel=1e-10)
    assert c.power_plus[0][0] == pytest.approx(c.power_minus[0][0], rel=1e-10)


def test_coefficients_cross_symmetry(ball63, nl, rng):
    v = sign_changing_field(ball63, rng)
    c = coefficients(ball63, nl, v)
    swapped = cross_coupling(ball63, c.v_plus, c.v_minus)
    assert abs(c.d_cross - swapped) <= 1e-8 * max(c.d_cross, swapped)
    assert c.h1_cross > 0.0


def test_coefficients_reject_one_signed(ball63, nl):
    r = ball63.radii()
    v = ball63.field(np.exp(-((r - 0.4) / 0.2) ** 2))
    with pytest.raises(OneSignedFieldError):
        coefficients(ball63, nl, v)


# ---------------------------------------------------------------------------
# phi_map / eval_h
# ---------------------------------------------------------------------------

def test_phi_map_zero_at_set_member(ball63, nl, rng):
    proj = _projected(ball63, nl, rng)
    w = proj.field()
    c = coefficients(ball63, nl, w)
    p1, p2 = phi_map(c, 1.0, 1.0)
    assert max(abs(p1), abs(p2)) <= 1e-8 * c.scale


def test_phi_map_edge_signs(ball63, nl, rng):
    v = sign_changing_field(ball63, rng)
    c = coefficients(ball63, nl, v)
    for s in (0.5, 1.0, 2.0):
        assert phi_map(c, 1e-6, s)[0] > 0.0
        assert phi_map(c, 1e6, s)[0] < 0.0


def test_phi_map_rejects_nonpositive(ball63, nl, rng):
    v = sign_changing_field(ball63, rng)
    c = coefficients(ball63, nl, v)
    with pytest.raises(ValueError):
        phi_map(c, 0.0, 1.0)
    with pytest.raises(ValueError):
        phi_map(c, 1.0, -0.5)


def test_eval_h_zero_origin(ball63, nl, rng):
    v = sign_changing_field(ball63, rng)
    c = coefficients(ball63, nl, v)
    assert eval_h(c, 0.0, 0.0) == 0.0


def test_eval_h_matches_full_energy(ball63, nl, rng):
    v = sign_changing_field(ball63, rng)
    c = coefficients(ball63, nl, v)
    for _ in range(20):
        t = float(rng.uniform(0.2, 2.0))
        s = float(rng.uniform(0.2, 2.0))
        reduced = float(eval_h(c, t, s))
        full = energy_value(
            ball63, nl, Field(t * c.v_plus.values + s * c.v_minus.values, ball63))
        assert reduced == pytest.approx(full, rel=1e-10)


def test_eval_h_gradient_is_phi_map(ball63, nl, rng):
    v = sign_changing_field(ball63, rng)
    c = coefficients(ball63, nl, v)
    eps = 1e-6
    t, s = 1.3, 0.8
    dt = (eval_h(c, t + eps, s) - eval_h(c, t - eps, s)) / (2 * eps)
    ds = (eval_h(c, t, s + eps) - eval_h(c, t, s - eps)) / (2 * eps)
    p1, p2 = phi_map(c, t, s)
    assert dt == pytest.approx(p1, rel=1e-6)
    assert ds == pytest.approx(p2, rel=1e-6)


def test_set_member_dominates_sample_grid(ball63, nl, rng):
    proj = _projected(ball63, nl, rng)
    c = coefficients(ball63, nl, proj.field())
    h11 = float(eval_h(c, 1.0, 1.0))
    for t in np.linspace(0.2, 2.0, 10):
        for s in np.linspace(0.2, 2.0, 10):
            if abs(t - 1.0) < 1e-12 and abs(s - 1.0) < 1e-12:
                continue
            assert float(eval_h(c, t, s)) < h11


# ---------------------------------------------------------------------------
# sign-certified square
# ---------------------------------------------------------------------------

def test_miranda_box_certifies_edges(ball63, nl, rng):
    v = sign_changing_field(ball63, rng)
    c = coefficients(ball63, nl, v)
    box = find_miranda_box(c)
    assert 0.0 < box.r < box.R
    grid = np.linspace(box.r, box.R, 33)
    assert np.all(phi_map(c, box.r, grid)[0] > 0)
    assert np.all(phi_map(c, box.R, grid)[0] < 0)
    assert np.all(phi_map(c, grid, box.r)[1] > 0)
    assert np.all(phi_map(c, grid, box.R)[1] < 0)


def test_miranda_box_contains_unit_point_for_set_member(ball63, nl, rng):
    proj = _projected(ball63, nl, rng)
    c = coefficients(ball63, nl, proj.field())
    box = find_miranda_box(c)
    assert box.r <= 1.0 <= box.R


def test_miranda_box_fails_for_subquartic_power(ball63, rng):
    bad = fault_nonlinearity(1.0, 3.0)
    v = sign_changing_field(ball63, rng)
    c = coefficients(ball63, bad, v)
    with pytest.raises(BracketingError):
        find_miranda_box(c)


# ---------------------------------------------------------------------------
# nodal projection
# ---------------------------------------------------------------------------

def test_projection_fixed_point(ball63, nl, rng):
    proj = _projected(ball63, nl, rng)
    again = project_nodal(ball63, nl, proj.field())
    assert again.t == pytest.approx(1.0, abs=1e-8)
    assert again.s == pytest.approx(1.0, abs=1e-8)


def test_projection_residual_bound(ball63, nl, rng):
    for _ in range(5):
        v = sign_changing_field(ball63, rng)
        proj = project_nodal(ball63, nl, v, tol=1e-10)
        assert proj.residual <= 1e-10 * proj.coefficients.scale
        assert proj.converged


def test_projection_scaleup_lands_in_unit_box(ball63, nl, rng):
    proj = _projected(ball63, nl, rng)
    w = proj.field()
    for c_up in (1.5, 2.0, 3.0):
        res = project_nodal(ball63, nl, Field(c_up * w.values, ball63))
        assert 0.0 < res.t <= 1.0 and 0.0 < res.s <= 1.0
        assert res.in_unit_box
        # pure power scale-ups rescale exactly back
        assert res.t == pytest.approx(1.0 / c_up, rel=1e-6)


def test_projection_brute_force_agreement(nl, rng):
    d = build_box_grid(8, 1.0)
    v = sign_changing_field(d, rng)
    proj = project_nodal(d, nl, v)
    c = proj.coefficients
    box = find_miranda_box(c)
    ts = np.linspace(box.r, box.R, 400)
    tt, ss = np.meshgrid(ts, ts, indexing="ij")
    values = eval_h(c, tt, ss)
    i, j = np.unravel_index(np.argmax(values), values.shape)
    cell = (box.R - box.r) / 399.0
    assert abs(ts[i] - proj.t) <= cell
    assert abs(ts[j] - proj.s) <= cell


def test_newton_multistart_unique_root(ball63, nl, rng):
    v = sign_changing_field(ball63, rng)
    c = coefficients(ball63, nl, v)
    canonical = project_nodal_from_coefficients(c)
    box = find_miranda_box(c)
    tol_abs = 1e-10 * c.scale
    converged = 0
    for _ in range(20):
        t0 = float(rng.uniform(box.r, box.R))
        s0 = float(rng.uniform(box.r, box.R))
        t, s, res, iters, ok = damped_newton(c, t0, s0, tol_abs)
        if ok:
            converged += 1
            assert abs(t - canonical.t) <= 1e-6 * max(1.0, canonical.t)
            assert abs(s - canonical.s) <= 1e-6 * max(1.0, canonical.s)
    assert converged >= 15


def test_projection_decouples_without_cross_terms(ball63, nl, rng):
    v = sign_changing_field(ball63, rng)
    c = zero_couplings(coefficients(ball63, nl, v))
    res = project_nodal_from_coefficients(c)
    sp_plus = project_scalar(ball63, nl, c.v_plus)
    sp_minus = project_scalar(ball63, nl, c.v_minus)
    assert res.t == pytest.approx(sp_plus.t, rel=1e-8)
    assert res.s == pytest.approx(sp_minus.t, rel=1e-8)


def test_projection_rejects_one_signed(ball63, nl):
    r = ball63.radii()
    v = ball63.field(np.exp(-((r - 0.4) / 0.2) ** 2))
    with pytest.raises(OneSignedFieldError):
        project_nodal(ball63, nl, v)


# ---------------------------------------------------------------------------
# scalar projection
# ---------------------------------------------------------------------------

def test_ray_equation_constructed_root():
    # A = 1, B = 1, ray(t) = 2 t^4 (p = 5): 1 + 1 = 2 at t = 1
    t, g, _ = solve_ray_equation(
        1.0, 1.0, lambda t: 2.0 * t ** 4, lambda t: 8.0 * t ** 3, tol_abs=1e-14)
    assert t == pytest.approx(1.0, abs=1e-12)
    # B = 0, A = C: t = 1 again
    t, g, _ = solve_ray_equation(
        3.0, 0.0, lambda t: 3.0 * t ** 4, lambda t: 12.0 * t ** 3, tol_abs=1e-14)
    assert t == pytest.approx(1.0, abs=1e-12)


def test_project_scalar_residual(ball63, nl, rng):
    r = ball63.radii()
    for sign in (1.0, -1.0):
        u = ball63.field(sign * np.exp(-((r - 0.45) / 0.25) ** 2))
        sp = project_scalar(ball63, nl, u)
        assert sp.converged
        w = Field(sp.t * u.values, ball63)
        rep = energy(ball63, nl, w)
        assert abs(rep.nehari_res) <= 1e-8 * inner_h1(ball63, w, w)


def test_project_scalar_rejects_sign_changing(ball63, nl, rng):
    v = sign_changing_field(ball63, rng)
    with pytest.raises(ValueError):
        project_scalar(ball63, nl, v)
    with pytest.raises(ValueError):
        project_scalar(ball63, nl, ball63.zeros())


# ---------------------------------------------------------------------------
# nondegeneracy certificate
# ---------------------------------------------------------------------------

def test_jacobian_diag_certificates(ball63, nl, rng):
    proj = _projected(ball63, nl, rng)
    diag = jacobian_diag(ball63, nl, proj.field())
    assert diag.det > 0.0 and diag.det_positive
    assert diag.g_plus > 2.0 * diag.d_cross
    assert diag.g_minus > 2.0 * diag.d_cross
    assert diag.gap_ok


def test_jacobian_matches_finite_differences(ball63, nl, rng):
    proj = _projected(ball63, nl, rng)
    c = coefficients(ball63, nl, proj.field())
    closed = phi_jacobian(c, 1.0, 1.0)
    eps = 1e-5
    fd = np.empty((2, 2))
    for j, (dt, ds) in enumerate(((eps, 0.0), (0.0, eps))):
        up = phi_map(c, 1.0 + dt, 1.0 + ds)
        dn = phi_map(c, 1.0 - dt, 1.0 - ds)
        fd[0, j] = (up[0] - dn[0]) / (2 * eps)
        fd[1, j] = (up[1] - dn[1]) / (2 * eps)
    det_closed = closed[0, 0] * closed[1, 1] - closed[0, 1] * closed[1, 0]
    det_fd = fd[0, 0] * fd[1, 1] - fd[0, 1] * fd[1, 0]
    assert det_fd == pytest.approx(det_closed, rel=1e-4)


def test_jacobian_diag_rejects_off_set(ball63, nl, rng):
    v = sign_changing_field(ball63, rng)
    with pytest.raises(ValueError):
        jacobian_diag(ball63, nl, v)


# ---------------------------------------------------------------------------
# generic (non-power) path
# ---------------------------------------------------------------------------

class _OpaquePower:
    """Pure power hidden behind the generic quadrature interface."""

    def __init__(self, inner):
        self._inner = inner

    def f(self, s):
        return self._inner.f(s)

    def F(self, s):
        return self._inner.F(s)

    def fprime(self, s):
        return self._inner.fprime(s)

    def H(self, s):
        return self._inner.H(s)

    def power_terms(self):
        return None

    def describe(self):
        return "opaque " + self._inner.describe()


def test_generic_path_matches_power_path(ball63, nl, rng):
    opaque = _OpaquePower(nl)
    v = sign_changing_field(ball63, rng)
    c_power = coefficients(ball63, nl, v)
    c_generic = coefficients(ball63, opaque, v)
    assert c_generic.power_plus is None
    for (t, s) in ((0.7, 1.4), (1.0, 1.0), (2.0, 0.5)):
        p_pow = phi_map(c_power, t, s)
        p_gen = phi_map(c_generic, t, s)
        assert p_gen[0] == pytest.approx(p_pow[0], rel=1e-12, abs=1e-12 * c_power.scale)
        assert p_gen[1] == pytest.approx(p_pow[1], rel=1e-12, abs=1e-12 * c_power.scale)
        assert float(eval_h(c_generic, t, s)) == pytest.approx(
            float(eval_h(c_power, t, s)), rel=1e-12)
    res_pow = project_nodal(ball63, nl, v)
    res_gen = project_nodal(ball63, opaque, v)
    assert res_gen.t == pytest.approx(res_pow.t, rel=1e-8)
    assert res_gen.s == pytest.approx(res_pow.s, rel=1e-8)
