"""File formats and run configuration.

Field files are plain text: a short header (magic line ``SPNODAL1``, builder,
node count, extent, spacing) followed by one decimal value per line in
node-index order (C order over the (x, y, z) lattice for box grids).  Values
are printed with ``repr``, so reading a written file reproduces every nodal
value bit for bit.

Plot exports: 3D lattices go to the legacy structured-points text format
(readable by common external plotters), radial profiles to two-column
``r u`` text.  Both are written at full precision and can be re-imported.

Run configuration is a flat ``key = value`` text file with CLI flags taking
precedence; no structured-config dependency, trivially diffable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .grid import (
    BOX3D,
    Field,
    GridDomain,
    build_ball_mask_grid,
    build_box_grid,
    build_radial_grid,
)

MAGIC = "SPNODAL1"

DOMAIN_KINDS = ("box", "ball", "ball_in_box")
INIT_STYLES = ("dipole", "mode2", "random_signed")
FIELD_FORMATS = ("text",)


class ConfigError(ValueError):
    """Invalid run configuration (maps to exit code 65)."""


# ---------------------------------------------------------------------------
# field files
# ---------------------------------------------------------------------------

def build_domain(kind: str, n: int, extent: float) -> GridDomain:
    if kind == "box":
        return build_box_grid(n, extent)
    if kind == "ball":
        return build_radial_grid(n, extent)
    if kind == "ball_in_box":
        return build_ball_mask_grid(n, extent)
    raise ConfigError(f"unknown domain kind {kind!r}; choose from {DOMAIN_KINDS}")


def _builder_name(d: GridDomain) -> str:
    return {"box": "box", "radial": "ball", "ball_mask": "ball_in_box"}[d.builder]


def write_field(path, u: Field) -> None:
    d = u.domain
    lines = [
        MAGIC,
        f"domain {_builder_name(d)}",
        f"n {d.n}",
        f"extent {d.extent!r}",
        f"h {d.h!r}",
        f"values {d.size}",
    ]
    lines.extend(repr(float(v)) for v in u.values)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_field(path) -> Field:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != MAGIC:
        raise ValueError(f"{path}: not a {MAGIC} field file")
    header = {}
    idx = 1
    while idx < len(lines) and " " in lines[idx]:
        key, _, val = lines[idx].partition(" ")
        header[key] = val
        idx += 1
        if key == "values":
            break
    try:
        kind = header["domain"]
        n = int(header["n"])
        extent = float(header["extent"])
        count = int(header["values"])
    except KeyError as missing:
        raise ValueError(f"{path}: missing header field {missing}")
    d = build_domain(kind, n, extent)
    if "h" in header and not math.isclose(float(header["h"]), d.h, rel_tol=1e-12):
        raise ValueError(f"{path}: spacing {header['h']} does not match domain")
    values = np.array([float(s) for s in lines[idx:idx + count]])
    if values.size != count or count != d.size:
        raise ValueError(f"{path}: expected {d.size} values, found {values.size}")
    return Field(values, d)


# ---------------------------------------------------------------------------
# plot exports
# ---------------------------------------------------------------------------

def export_field(path, u: Field) -> str:
    """Write the plot form: structured points for lattices, (r, u) radially.

    Returns the format written ("vtk" or "radial").
    """
    if u.domain.kind == BOX3D:
        _export_structured_points(path, u)
        return "vtk"
    _export_radial(path, u)
    return "radial"


def _export_structured_points(path, u: Field) -> None:
    d = u.domain
    n = d.n
    # include the zero boundary layer so the box is closed for plotting
    full = np.zeros((n + 2, n + 2, n + 2))
    full[1:-1, 1:-1, 1:-1] = u.values.reshape(n, n, n)
    lines = [
        "# vtk DataFile Version 3.0",
        "spnodal field",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {n + 2} {n + 2} {n + 2}",
        f"ORIGIN {d.origin!r} {d.origin!r} {d.origin!r}",
        f"SPACING {d.h!r} {d.h!r} {d.h!r}",
        f"POINT_DATA {(n + 2) ** 3}",
        "SCALARS u double",
        "LOOKUP_TABLE default",
    ]
    # legacy structured points run x fastest
    lines.extend(repr(float(v)) for v in full.transpose(2, 1, 0).ravel())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _export_radial(path, u: Field) -> None:
    d = u.domain
    lines = ["# r u"]
    for r, v in zip(d.radii(), u.values):
        lines.append(f"{float(r)!r} {float(v)!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def import_exported(path, domain: GridDomain) -> Field:
    """Read back a plot export written for ``domain`` (full precision)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if lines and lines[0].startswith("# vtk"):
        tab = lines.index("LOOKUP_TABLE default")
        n = domain.n
        full = np.array([float(s) for s in lines[tab + 1:tab + 1 + (n + 2) ** 3]])
        cube = full.reshape(n + 2, n + 2, n + 2).transpose(2, 1, 0)
        return Field(cube[1:-1, 1:-1, 1:-1].ravel().copy(), domain)
    values = [float(line.split()[1]) for line in lines if not line.startswith("#")]
    return Field(np.array(values), domain)


# ---------------------------------------------------------------------------
# metrics and reports
# ---------------------------------------------------------------------------

METRICS_COLUMNS = ("iter", "J", "grad_norm", "t", "s", "norm_plus",
                   "norm_minus", "nonlocal", "cross")


def metrics_csv(history) -> str:
    lines = [",".join(METRICS_COLUMNS)]
    for row in history:
        lines.append(",".join([
            str(row.iter), repr(row.J), repr(row.grad_norm), repr(row.t),
            repr(row.s), repr(row.norm_plus), repr(row.norm_minus),
            repr(row.nonlocal_term), repr(row.cross),
        ]))
    return "\n".join(lines) + "\n"


def sweep_csv(rows) -> str:
    lines = ["p,c0,c_ground,norm,norm_plus,norm_minus,det"]
    for r in rows:
        lines.append(",".join(repr(x) for x in r))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    domain: str = "ball"
    n: int = 255
    extent: float = 1.0
    form: str = "pure_power"
    lam: float = 1.0
    p: float = 5.0
    mu: float = 0.0
    q: Optional[float] = None
    cg_tol: float = 1e-10
    proj_tol: float = 1e-10
    grad_tol: float = 1e-6
    max_iter: int = 2000
    seed: int = 42
    init_style: str = "dipole"
    multistart: int = 1
    out_dir: str = "out"
    field_format: str = "text"
    figures: bool = True

    def validate(self) -> None:
        if self.domain not in DOMAIN_KINDS:
            raise ConfigError(f"domain must be one of {DOMAIN_KINDS}, got {self.domain!r}")
        if self.n < 3:
            raise ConfigError(f"n must be at least 3, got {self.n}")
        if self.extent <= 0:
            raise ConfigError("extent must be positive")
        if not 4.0 < self.p < 6.0:
            raise ConfigError(f"exponent p must lie in (4, 6), got {self.p}")
        if self.mu > 0 and (self.q is None or not 4.0 < self.q < 6.0):
            raise ConfigError(f"exponent q must lie in (4, 6), got {self.q}")
        if self.lam <= 0:
            raise ConfigError("lambda must be positive")
        if self.mu < 0:
            raise ConfigError("mu must be nonnegative")
        for name in ("cg_tol", "proj_tol", "grad_tol"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {v}")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be positive")
        if self.init_style not in INIT_STYLES:
            raise ConfigError(f"init must be one of {INIT_STYLES}, got {self.init_style!r}")
        if self.multistart < 1:
            raise ConfigError("multistart must be at least 1")
        if self.field_format not in FIELD_FORMATS:
            raise ConfigError(f"field_format must be one of {FIELD_FORMATS}")


_CONFIG_KEYS = {
    "domain": str, "n": int, "extent": float, "lambda": float, "p": float,
    "mu": float, "q": float, "cg_tol": float, "proj_tol": float,
    "grad_tol": float, "max_iter": int, "seed": int, "init": str,
    "multistart": int, "out": str, "field_format": str, "figures": bool,
}

_KEY_TO_ATTR = {"lambda": "lam", "init": "init_style", "out": "out_dir"}


def parse_config_file(path) -> dict:
    """Flat key = value lines; '#' starts a comment; unknown keys reject."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        typ = _CONFIG_KEYS[key]
        try:
            if typ is bool:
                if val.lower() not in ("true", "false", "0", "1"):
                    raise ValueError(val)
                parsed = val.lower() in ("true", "1")
            else:
                parsed = typ(val)
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: bad value {val!r} for {key}")
        values[_KEY_TO_ATTR.get(key, key)] = parsed
    return values


def make_config(file_values: dict, flag_values: dict) -> RunConfig:
    """Merge config-file values with CLI flag overrides and validate."""
    cfg = RunConfig()
    for source in (file_values, flag_values):
        for key, val in source.items():
            if val is None:
                continue
            if not hasattr(cfg, key):
                raise ConfigError(f"unknown config entry {key!r}")
            setattr(cfg, key, val)
    if cfg.mu > 0:
        cfg.form = "two_power"
    cfg.validate()
    return cfg
