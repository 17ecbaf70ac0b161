"""Figure rendering for solve reports.

All figures go to PNG files next to the delimited output; the Agg backend is
forced so rendering works headless.
"""

from __future__ import annotations

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .grid import BOX3D, Field

_PNG_OPTS = {"dpi": 150, "metadata": {"Software": None}}  # keep output byte-stable


def render_history(history, path) -> None:
    """Energy and gradient-norm trajectories of a descent run."""
    its = [r.iter for r in history]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    ax1.plot(its, [r.J for r in history], "-", color="tab:blue")
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("energy")
    ax2.semilogy(its, [max(r.grad_norm, 1e-300) for r in history], "-", color="tab:red")
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("gradient norm")
    fig.tight_layout()
    fig.savefig(path, **_PNG_OPTS)
    plt.close(fig)


def render_solution(u: Field, path) -> None:
    """Radial profile plot, or the mid-plane slice for lattice fields."""
    d = u.domain
    fig, ax = plt.subplots(figsize=(5.2, 4))
    if d.kind == BOX3D:
        n = d.n
        cube = u.values.reshape(n, n, n)
        sl = cube[:, :, n // 2]
        axis = d.origin + d.h * np.arange(1, n + 1)
        vmax = np.max(np.abs(sl)) or 1.0
        im = ax.pcolormesh(axis, axis, sl.T, cmap="RdBu_r", vmin=-vmax, vmax=vmax,
                           shading="nearest")
        fig.colorbar(im, ax=ax)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        ax.set_title("mid-plane slice")
    else:
        r = d.radii()
        ax.plot(r, u.values, "-", color="tab:blue")
        ax.axhline(0.0, color="0.6", lw=0.8)
        ax.set_xlabel("r")
        ax.set_ylabel("u(r)")
    fig.tight_layout()
    fig.savefig(path, **_PNG_OPTS)
    plt.close(fig)


def render_sweep(rows, path) -> None:
    """Least-energy and ground-state energies against the exponent."""
    ps = [r[0] for r in rows]
    fig, ax = plt.subplots(figsize=(5.2, 4))
    ax.plot(ps, [r[1] for r in rows], "o-", label="nodal least energy")
    ax.plot(ps, [r[2] for r in rows], "s-", label="ground state")
    ax.set_xlabel("p")
    ax.set_ylabel("energy")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_PNG_OPTS)
    plt.close(fig)


def render_study(table, path) -> None:
    """Refinement-ladder error plot on log-log axes."""
    ok = [r for r in table.rows if not r.error]
    fig, ax = plt.subplots(figsize=(5.2, 4))
    ax.loglog([r.h for r in ok], [r.poisson_err for r in ok], "o-",
              label="potential-solve oracle error")
    hs = np.array([r.h for r in ok])
    if len(hs) >= 2:
        ref = ok[0].poisson_err * (hs / hs[0]) ** 2
        ax.loglog(hs, ref, "--", color="0.6", label="h^2 reference")
    ax.set_xlabel("h")
    ax.set_ylabel("max-norm relative error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_PNG_OPTS)
    plt.close(fig)
