"""Least-energy nodal (sign-changing) solutions of the Schrodinger-Poisson system

    -Delta u + phi_u u = f(u),   -Delta phi_u = u^2,   u = phi_u = 0 on the boundary,

on a bounded domain in R^3, computed by minimizing the energy functional over
the sign-split Nehari set, together with a verification suite for the
identities, bounds and scalings the method relies on.
"""

import os as _os

# Cap BLAS/OpenMP threads before numpy is imported anywhere in the package so
# the SPNODAL_THREADS limit actually takes effect.
_threads = _os.environ.get("SPNODAL_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                 "NUMEXPR_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .grid import (
    BOX3D,
    RADIAL_BALL,
    ConvergenceError,
    Field,
    GridDomain,
    NodalReport,
    apply_laplacian,
    build_ball_mask_grid,
    build_box_grid,
    build_radial_grid,
    cg_solve,
    inner_h1,
    integrate,
    negative_part,
    nodal_domains,
    positive_part,
    smallest_eigenvalue,
)
from .poisson import (
    PhiCache,
    PoissonSolveResult,
    cross_coupling,
    nonlocal_energy,
    solve_phi,
)
from .energy import (
    EnergyReport,
    Nonlinearity,
    check_hypotheses,
    directional,
    energy,
    h1_gradient,
)
from .nehari import (
    MirandaBox,
    NehariCoefficients,
    ProjectionResult,
    ScalarProjectionResult,
    coefficients,
    eval_h,
    find_miranda_box,
    jacobian_diag,
    phi_map,
    project_nodal,
    project_scalar,
)
from .minimize import (
    MinimizeOptions,
    RadialSubspace,
    SolveOutcome,
    bound_diagnostics,
    initial_guess,
    minimize_ground,
    minimize_nodal,
    multistart_nodal,
)
from .verify import (
    VerifyReport,
    convergence_study,
    random_field,
    run_suite,
    sign_changing_field,
)

__version__ = "0.1.0"
