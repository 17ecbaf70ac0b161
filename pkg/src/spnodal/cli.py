"""Command-line interface.

Subcommands: ``solve`` (least-energy nodal run), ``ground`` (one-signed
ground state), ``verify`` (invariant suite), ``sweep`` (exponent sweep),
``export`` (field file to plot format).  Configuration comes from an
optional flat key = value file with CLI flags taking precedence.

Exit codes: 0 success; 2 verification failures; 3 solver non-convergence;
64 usage errors; 65 invalid configuration.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .energy import Nonlinearity
from .fileio import (
    ConfigError,
    RunConfig,
    build_domain,
    export_field,
    import_exported,
    make_config,
    metrics_csv,
    parse_config_file,
    read_field,
    sweep_csv,
    write_field,
)
from .grid import ConvergenceError, positive_part
from .minimize import (
    INIT_STYLES,
    MinimizeOptions,
    initial_guess,
    minimize_ground,
    minimize_nodal,
    multistart_nodal,
    start_plan,
)
from .verify import convergence_study, run_suite

EXIT_OK = 0
EXIT_VERIFY_FAIL = 2
EXIT_SOLVER = 3
EXIT_USAGE = 64
EXIT_CONFIG = 65


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--domain", choices=("box", "ball", "ball_in_box"))
    p.add_argument("--n", type=int)
    p.add_argument("--extent", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--cg-tol", dest="cg_tol", type=float)
    p.add_argument("--proj-tol", dest="proj_tol", type=float)
    p.add_argument("--grad-tol", dest="grad_tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--init", dest="init_style", choices=INIT_STYLES)
    p.add_argument("--multistart", type=int)
    p.add_argument("--out", dest="out_dir")
    p.add_argument("--field-format", dest="field_format")
    p.add_argument("--figures", dest="figures", action="store_true", default=None)
    p.add_argument("--no-figures", dest="figures", action="store_false", default=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="spnodal", description=__doc__)
    parser.add_argument("--version", action="version", version=f"spnodal {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("solve", "compute the least-energy sign-changing solution"),
        ("ground", "compute the one-signed ground state"),
        ("verify", "run the invariant suite"),
        ("sweep", "solve across a list of exponents p"),
    ):
        sp = sub.add_parser(name, help=help_text)
        _add_config_flags(sp)
        if name == "verify":
            sp.add_argument("--n-samples", dest="n_samples", type=int, default=100)
            sp.add_argument("--study", help="comma list of resolutions for a "
                            "refinement study, e.g. 63,127,255")
            sp.add_argument("--study-energies", action="store_true",
                            help="include energy ladders in the study")
        if name == "sweep":
            sp.add_argument("--p-list", dest="p_list", required=True,
                            help="comma list of exponents, e.g. 4.6,5.0,5.4")

    ex = sub.add_parser("export", help="convert a stored field to plot format")
    ex.add_argument("--field", required=True, help="stored .field file")
    ex.add_argument("--out", required=True, help="output path")
    return parser


def _config_from_args(args) -> RunConfig:
    file_values = parse_config_file(args.config) if args.config else {}
    flag_values = {key: getattr(args, key) for key in (
        "domain", "n", "extent", "lam", "p", "mu", "q", "cg_tol", "proj_tol",
        "grad_tol", "max_iter", "seed", "init_style", "multistart", "out_dir",
        "field_format", "figures") if hasattr(args, key)}
    return make_config(file_values, flag_values)


def _nonlinearity(cfg: RunConfig) -> Nonlinearity:
    return Nonlinearity(lam=cfg.lam, p=cfg.p, mu=cfg.mu, q=cfg.q)


def _options(cfg: RunConfig) -> MinimizeOptions:
    return MinimizeOptions(tol_grad=cfg.grad_tol, max_iter=cfg.max_iter,
                           proj_tol=cfg.proj_tol, cg_tol=cfg.cg_tol)


def _nodal_dict(report) -> dict:
    return {"count": report.count, "volumes": report.volumes,
            "signs": report.signs, "threshold": report.threshold}


def _outcome_report(cfg: RunConfig, outcome) -> dict:
    rep = {
        "config": dataclasses.asdict(cfg),
        "c0": outcome.c0,
        "status": outcome.status,
        "converged": outcome.converged,
        "grad_norm": outcome.grad_norm,
        "projection_residual": outcome.proj_residual,
        "iterations": len(outcome.history),
        "nodal": _nodal_dict(outcome.nodal),
        "warnings": list(outcome.warnings),
    }
    if outcome.bounds is not None:
        rep["bounds"] = dataclasses.asdict(outcome.bounds)
    if outcome.jacobian is not None:
        jac = dataclasses.asdict(outcome.jacobian)
        jac["det_positive"] = outcome.jacobian.det_positive
        jac["gap_ok"] = outcome.jacobian.gap_ok
        rep["jacobian"] = jac
    if outcome.ground_energy is not None:
        rep["c_ground"] = outcome.ground_energy
    return rep


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _write_run_outputs(cfg: RunConfig, outcome, out: Path, field_name: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(metrics_csv(outcome.history), encoding="utf-8")
    write_field(out / field_name, outcome.w)
    _write_json(out / "report.json", _outcome_report(cfg, outcome))
    if cfg.figures:
        from . import figures
        figures.render_history(outcome.history, out / "history.png")
        figures.render_solution(outcome.w, out / "solution.png")


def _cmd_solve(args) -> int:
    cfg = _config_from_args(args)
    d = build_domain(cfg.domain, cfg.n, cfg.extent)
    nl = _nonlinearity(cfg)
    opts = _options(cfg)
    if cfg.multistart > 1:
        outcome, _ = multistart_nodal(d, nl, opts, seed=cfg.seed,
                                      starts=start_plan(cfg.multistart, cfg.seed))
    else:
        outcome = minimize_nodal(d, nl, initial_guess(d, cfg.init_style, cfg.seed), opts)
    _write_run_outputs(cfg, outcome, Path(cfg.out_dir), "w.field")
    print(f"c0 = {outcome.c0!r}")
    print(f"status = {outcome.status}, nodal domains = {outcome.nodal.count}")
    print(f"grad_norm = {outcome.grad_norm:.3e}, "
          f"projection residual = {outcome.proj_residual:.3e}")
    if outcome.jacobian is not None:
        print(f"certificate: det = {outcome.jacobian.det:.6e} "
              f"(positive: {outcome.jacobian.det_positive}, "
              f"gap ok: {outcome.jacobian.gap_ok})")
    for w in outcome.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if not outcome.converged or outcome.nodal.count != 2:
        print("solver did not reach a converged two-domain state", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _cmd_ground(args) -> int:
    cfg = _config_from_args(args)
    d = build_domain(cfg.domain, cfg.n, cfg.extent)
    nl = _nonlinearity(cfg)
    u0 = positive_part(initial_guess(d, cfg.init_style, cfg.seed))
    outcome = minimize_ground(d, nl, u0, _options(cfg))
    _write_run_outputs(cfg, outcome, Path(cfg.out_dir), "u.field")
    print(f"c_ground = {outcome.c0!r}")
    print(f"status = {outcome.status}, nodal domains = {outcome.nodal.count}")
    if not outcome.converged:
        print("solver did not converge", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _cmd_verify(args) -> int:
    cfg = _config_from_args(args)
    d = build_domain(cfg.domain, cfg.n, cfg.extent)
    nl = _nonlinearity(cfg)
    report = run_suite(d, nl, seed=cfg.seed, n_samples=args.n_samples)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = report.to_text()
    (out / "verify_report.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    if args.study:
        ns = [int(s) for s in args.study.split(",") if s]
        table = convergence_study(ns, nl=nl, radius=cfg.extent,
                                  include_energies=args.study_energies,
                                  opts=_options(cfg))
        (out / "study.csv").write_text(table.to_csv(), encoding="utf-8")
        if cfg.figures:
            from . import figures
            figures.render_study(table, out / "study.png")
        print(f"refinement orders: {[round(o, 3) for o in table.poisson_orders()]}")
    return EXIT_OK if report.all_pass else EXIT_VERIFY_FAIL


def _cmd_sweep(args) -> int:
    cfg = _config_from_args(args)
    d = build_domain(cfg.domain, cfg.n, cfg.extent)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    failures = 0
    for p_str in args.p_list.split(","):
        p = float(p_str)
        row_cfg = dataclasses.replace(cfg, p=p, out_dir=str(out / f"p_{p:g}"))
        row_cfg.validate()
        nl = _nonlinearity(row_cfg)
        opts = _options(row_cfg)
        nodal = minimize_nodal(d, nl, initial_guess(d, cfg.init_style, cfg.seed), opts)
        ground = minimize_ground(d, nl, positive_part(initial_guess(d, cfg.init_style, cfg.seed)), opts)
        nodal.ground_energy = ground.c0
        _write_run_outputs(row_cfg, nodal, Path(row_cfg.out_dir), "w.field")
        det = nodal.jacobian.det if nodal.jacobian is not None else float("nan")
        b = nodal.bounds
        rows.append((p, nodal.c0, ground.c0, b.norm, b.norm_plus, b.norm_minus, det))
        if not (nodal.converged and ground.converged):
            failures += 1
        print(f"p = {p:g}: c0 = {nodal.c0!r}, c_ground = {ground.c0!r}")
    (out / "sweep.csv").write_text(sweep_csv(rows), encoding="utf-8")
    if cfg.figures:
        from . import figures
        figures.render_sweep(rows, out / "sweep.png")
    return EXIT_SOLVER if failures else EXIT_OK


def _cmd_export(args) -> int:
    u = read_field(args.field)
    fmt = export_field(args.out, u)
    # re-import must reproduce the nodal values exactly
    back = import_exported(args.out, u.domain)
    if not np.array_equal(back.values, u.values):
        print("export round-trip mismatch", file=sys.stderr)
        return EXIT_SOLVER
    print(f"wrote {args.out} ({fmt}, {u.domain.size} values)")
    return EXIT_OK


_COMMANDS = {
    "solve": _cmd_solve,
    "ground": _cmd_ground,
    "verify": _cmd_verify,
    "sweep": _cmd_sweep,
    "export": _cmd_export,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
