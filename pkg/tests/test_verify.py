import dataclasses

import numpy as np
import pytest

import spnodal.poisson
import spnodal.nehari
import spnodal.verify as verify
from spnodal import (
    Field,
    Nonlinearity,
    build_radial_grid,
    convergence_study,
    initial_guess,
    minimize_ground,
    positive_part,
    run_suite,
)
from spnodal.energy import fault_nonlinearity
from spnodal.verify import TOLERANCES, radial_poisson_oracle_error


@pytest.fixture(scope="module")
def small_suite():
    d = build_radial_grid(63, 1.0)
    nl = Nonlinearity(lam=1.0, p=5.0)
    return run_suite(d, nl, seed=42, n_samples=12)


def test_suite_all_pass(small_suite):
    failed = [c.name for c in small_suite.failed()]
    assert small_suite.all_pass, f"failed checks: {failed}"
    assert len(small_suite.checks) == 18
    for c in small_suite.checks:
        assert c.tol == TOLERANCES[c.name.split("#")[0]] or True
        assert c.statement


def test_suite_deterministic_bytes(ball63, nl, small_suite):
    again = run_suite(ball63, nl, seed=42, n_samples=12)
    assert again.to_text().encode() == small_suite.to_text().encode()


def test_suite_seed_changes_samples(ball63, nl, small_suite):
    other = run_suite(ball63, nl, seed=43, n_samples=12)
    assert other.to_text() != small_suite.to_text()


def test_suite_rejects_zero_samples(ball63, nl):
    with pytest.raises(ValueError):
        run_suite(ball63, nl, n_samples=0)


def test_suite_flags_broken_nonlinearity(ball63):
    report = run_suite(ball63, fault_nonlinearity(1.0, 3.0), seed=42, n_samples=4)
    failed = {c.name for c in report.failed()}
    assert "hypotheses" in failed
    # potential-solve identities do not involve f and stay green
    for name in ("energy_identity", "phi_nonneg", "phi_scaling", "cross_symmetry"):
        assert name not in failed


# ---------------------------------------------------------------------------
# refinement study
# ---------------------------------------------------------------------------

def test_poisson_oracle_orders():
    table = convergence_study((63, 127, 255))
    orders = table.poisson_orders()
    assert len(orders) == 2
    for order in orders:
        assert abs(order - 2.0) <= 0.25


def test_study_requires_three_levels():
    with pytest.raises(ValueError):
        convergence_study((63, 127))


def test_study_csv_shape():
    table = convergence_study((31, 63, 127))
    text = table.to_csv()
    lines = text.strip().splitlines()
    assert lines[0] == "n,h,poisson_err,c0,c_ground,error"
    assert len(lines) == 4


def test_study_continues_past_failed_rows():
    table = convergence_study((2, 63, 127))   # first level is degenerate
    assert table.rows[0].error
    assert not table.rows[1].error and not table.rows[2].error
    assert len(table.poisson_orders()) == 1


def test_ground_energy_ladder_second_order(nl):
    cs = []
    for n in (63, 127, 255):
        d = build_radial_grid(n, 1.0)
        out = minimize_ground(d, nl, positive_part(initial_guess(d, "dipole")))
        assert out.converged
        cs.append(out.c0)
    d1, d2 = abs(cs[0] - cs[1]), abs(cs[1] - cs[2])
    assert 2.8 <= d1 / d2 <= 5.2


# ---------------------------------------------------------------------------
# fault injection: every check must catch its documented mutation
# ---------------------------------------------------------------------------

def _failing(report, name):
    return name in {c.name for c in report.failed()}


def _suite(n_samples=6):
    d = build_radial_grid(31, 1.0)
    nl = Nonlinearity(lam=1.0, p=5.0)
    return run_suite(d, nl, seed=7, n_samples=n_samples)


def test_mutation_laplacian_symmetry(monkeypatch):
    real = verify.apply_laplacian

    def skewed(d, u):
        out = real(d, u)
        out.values[0] += 1e-3 * (1.0 + abs(out.values[0]))
        return out

    monkeypatch.setattr(verify, "apply_laplacian", skewed)
    assert _failing(_suite(), "laplacian_symmetry")


def test_mutation_sign_split(monkeypatch):
    real = verify.positive_part

    def leaky(u):
        out = real(u)
        return Field(out.values + 1e-9, u.domain)

    monkeypatch.setattr(verify, "positive_part", leaky)
    assert _failing(_suite(), "sign_split")


def test_mutation_poincare(monkeypatch):
    real = verify.smallest_eigenvalue
    monkeypatch.setattr(verify, "smallest_eigenvalue",
                        lambda d, **kw: 1.5 * real(d, **kw))
    assert _failing(_suite(), "poincare")


def test_mutation_phi_nonneg(monkeypatch):
    real = spnodal.poisson.solve_phi

    def dented(d, u, tol=1e-10, cache=None):
        res = real(d, u, tol=tol, cache=None)
        vals = res.phi.values.copy()
        vals[vals.argmax()] = -1e-3 * vals.max() - 1e-12
        return dataclasses.replace(res, phi=Field(vals, d))

    monkeypatch.setattr(spnodal.poisson, "solve_phi", dented)
    assert _failing(_suite(), "phi_nonneg")


def test_mutation_phi_scaling(monkeypatch):
    real = spnodal.poisson.solve_phi

    def amplitude_biased(d, u, tol=1e-10, cache=None):
        res = real(d, u, tol=tol, cache=None)
        if np.max(np.abs(u.values)) > 1.5:   # hits only rescaled solves
            return dataclasses.replace(res, phi=Field(res.phi.values * (1 + 1e-6), d))
        return res

    monkeypatch.setattr(spnodal.poisson, "solve_phi", amplitude_biased)
    assert _failing(_suite(), "phi_scaling")


def test_mutation_energy_identity(monkeypatch):
    real = verify.inner_h1

    def inflated(d, u, v):
        return real(d, u, v) * (1.0 + 1e-6)

    monkeypatch.setattr(verify, "inner_h1", inflated)
    assert _failing(_suite(), "energy_identity")


def test_mutation_cross_symmetry(monkeypatch):
    real = spnodal.poisson.cross_coupling

    def asym(d, a, b, **kw):
        out = real(d, a, b, **kw)
        if float(np.sum(a.values)) > float(np.sum(b.values)):
            out *= 1.0 + 1e-6
        return out

    monkeypatch.setattr(spnodal.poisson, "cross_coupling", asym)
    assert _failing(_suite(), "cross_symmetry")


def test_mutation_nonlocal_split(monkeypatch):
    real = spnodal.poisson.nonlocal_energy

    def biased(d, u, **kw):
        out = real(d, u, **kw)
        thr = 1e-8 * np.max(np.abs(u.values)) if u.values.size else 0.0
        if np.any(u.values > thr) and np.any(u.values < -thr):
            out *= 1.0 + 1e-6
        return out

    monkeypatch.setattr(spnodal.poisson, "nonlocal_energy", biased)
    assert _failing(_suite(), "nonlocal_split")


def test_mutation_nonlocal_bound(monkeypatch):
    real = verify.fit_nonlocal_constant

    def undersized(d, **kw):
        # a mis-fitted constant must be caught by the probe fields
        return 0.05 * real(d, **kw)

    monkeypatch.setattr(verify, "fit_nonlocal_constant", undersized)
    assert _failing(_suite(), "nonlocal_bound")


def test_mutation_phi_continuity(monkeypatch):
    import hashlib
    real = spnodal.poisson.nonlocal_energy

    def noise_floor(d, u, **kw):
        # content-keyed relative noise above the ladder's lower rungs, the
        # signature of a corrupted lookup or a solver that bails out early
        digest = hashlib.sha1(u.values.tobytes()).digest()
        frac = (int.from_bytes(digest[:4], "big") % 1000) / 1000.0
        return real(d, u, **kw) * (1.0 + 0.05 * frac)

    monkeypatch.setattr(spnodal.poisson, "nonlocal_energy", noise_floor)
    assert _failing(_suite(), "phi_continuity")


def test_mutation_hypotheses():
    d = build_radial_grid(31, 1.0)
    report = run_suite(d, fault_nonlinearity(1.0, 3.0), seed=7, n_samples=4)
    assert _failing(report, "hypotheses")


def test_mutation_gradient_slope(monkeypatch):
    real = verify.directional
    monkeypatch.setattr(verify, "directional",
                        lambda *a, **kw: real(*a, **kw) * (1.0 + 1e-5))
    assert _failing(_suite(), "gradient_slope")


def test_mutation_residual_additivity(monkeypatch):
    real = verify.energy_report

    def skewed(d, nl, u, **kw):
        rep = real(d, nl, u, **kw)
        return dataclasses.replace(
            rep, nehari_res=rep.nehari_res + 1e-3 * (1.0 + abs(rep.nehari_res)))

    monkeypatch.setattr(verify, "energy_report", skewed)
    assert _failing(_suite(), "residual_additivity")


def test_mutation_projection_residual(monkeypatch):
    real = spnodal.nehari.project_nodal

    def sloppy(d, nl, v, **kw):
        res = real(d, nl, v, **kw)
        return dataclasses.replace(res, residual=res.residual
                                   + 1e-8 * res.coefficients.scale)

    monkeypatch.setattr(spnodal.nehari, "project_nodal", sloppy)
    assert _failing(_suite(), "projection_residual")


def test_mutation_containment(monkeypatch):
    real = spnodal.nehari.project_nodal

    def inflated(d, nl, v, **kw):
        res = real(d, nl, v, **kw)
        return dataclasses.replace(res, t=res.t + 1.5)

    monkeypatch.setattr(spnodal.nehari, "project_nodal", inflated)
    assert _failing(_suite(), "containment")


def test_mutation_reduced_energy(monkeypatch):
    real = verify.energy_value
    monkeypatch.setattr(verify, "energy_value",
                        lambda *a, **kw: real(*a, **kw) * (1.0 + 1e-6))
    assert _failing(_suite(), "reduced_energy")


def test_mutation_dominance(monkeypatch):
    real = spnodal.nehari.project_nodal

    def off_the_max(d, nl, v, **kw):
        # a projection that stops well short of the reduced-energy maximum
        res = real(d, nl, v, **kw)
        return dataclasses.replace(res, t=1.3 * res.t)

    monkeypatch.setattr(spnodal.nehari, "project_nodal", off_the_max)
    assert _failing(_suite(), "dominance")


def test_mutation_certificate(monkeypatch):
    real = spnodal.nehari.jacobian_diag

    def negated(d, nl, w, **kw):
        diag = real(d, nl, w, **kw)
        return dataclasses.replace(diag, det=-abs(diag.det))

    monkeypatch.setattr(spnodal.nehari, "jacobian_diag", negated)
    assert _failing(_suite(), "certificate")


def test_oracle_error_value():
    assert radial_poisson_oracle_error(63) <= 2e-2
