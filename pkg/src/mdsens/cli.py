"""Command-line interface: ``mdsens validate|scenario|enumerate|probe``.

Exit codes: 0 success, 1 acceptance threshold failed, 2 configuration
error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .greens import SingularSystemError
from .linsolve import FactorizationError
from .mesh import MeshError, SubdomainGrid
from .scenario import (DEFAULT_STRIDE, DESK_GRADING, CellLocator, ScenarioError, _csv, build_case,
                       run_scenario, run_validation)
from .survey import ElectrodeLayout, configs_to_csv, enumerate_configs
from .vtkio import VtkFormatError, read_vtk

EXIT_OK = 0
EXIT_THRESHOLD = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

logger = logging.getLogger("mdsens")


class ConfigError(ValueError):
    pass


def config_schema() -> dict:
    return json.loads(resources.files("mdsens").joinpath("data", "config.schema.json").read_text())


def load_config(path) -> dict:
    """Read and schema-check a JSON run configuration."""
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    validate_config(doc)
    return doc


def validate_config(doc: dict) -> None:
    try:
        jsonschema.validate(doc, config_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from exc


def _merged(args, keys) -> dict:
    cfg = load_config(args.config) if getattr(args, "config", None) else {}
    for k in keys:
        v = getattr(args, k, None)
        if v is not None and v is not False:
            cfg[k] = v
    validate_config(cfg)
    return cfg


def spec_from_config(cfg: dict):
    """Build a scenario spec from a validated config mapping."""
    if "case" not in cfg:
        raise ConfigError("scenario needs a case (--case or 'case' in the config)")
    grading = DESK_GRADING
    if "grading" in cfg:
        grading = replace(DESK_GRADING, **cfg["grading"])
    try:
        spec = build_case(cfg["case"], cfg.get("hole"), cfg.get("shift"), grading=grading,
                          no_liner=cfg.get("no_liner", False), stride=cfg.get("stride", DEFAULT_STRIDE),
                          k_max=cfg.get("k_max", 1e4))
        kw = {k: cfg[k] for k in ("rho_in", "rho_out", "electrode_length", "electrode_radius", "electrode_rho",
                                  "current") if k in cfg}
        if spec.liner is not None and ("liner_rho" in cfg or "liner_thickness" in cfg):
            kw["liner"] = replace(spec.liner, rho=cfg.get("liner_rho", spec.liner.rho),
                                  thickness=cfg.get("liner_thickness", spec.liner.thickness))
        elif "liner_rho" in cfg or "liner_thickness" in cfg:
            raise ConfigError("liner parameters given without a liner")
        if "electrodes" in cfg:
            kw["electrodes"] = tuple((float(p[0]), float(p[1])) for p in cfg["electrodes"])
            kw["lines"] = ()
        return replace(spec, **kw) if kw else spec
    except ScenarioError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_validate(args) -> int:
    cfg = _merged(args, ("out", "threads"))
    unsupported = set(cfg) - {"out", "threads", "backend"}
    if unsupported:
        raise ConfigError(f"validate does not use {sorted(unsupported)}")
    summary = run_validation(cfg.get("out"), threads=cfg.get("threads"), backend=cfg.get("backend", "auto"))
    for name, row in summary["rmse"].items():
        print(name, " ".join(f"{d} m: {v:.2f}%" for d, v in row.items()))
    if not summary["pass"]:
        print("RMSE threshold failed: " + ", ".join(summary["failed"]), file=sys.stderr)
        return EXIT_THRESHOLD
    return EXIT_OK


def cmd_scenario(args) -> int:
    cfg = _merged(args, ("case", "hole", "shift", "k_max", "stride", "out", "threads", "no_liner", "full"))
    spec = spec_from_config(cfg)
    summary = run_scenario(spec, cfg.get("out"), threads=cfg.get("threads"), full=cfg.get("full", False),
                           backend=cfg.get("backend", "auto"))
    for depth, m in summary["slices"].items():
        print(f"slice {depth} m: min {m['min']:.4g} max {m['max']:.4g} avg {m['area_weighted_avg']:.4g}")
    print(f"configurations {summary['counts']['configurations']} of {summary['counts']['enumerated']}")
    return EXIT_OK


def _read_layout(path) -> np.ndarray:
    try:
        rows = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    except OSError as exc:
        raise ConfigError(f"cannot read layout {path}: {exc}") from exc
    if rows and not rows[0][0].isdigit() and rows[0][0] not in "+-.":
        rows = rows[1:]
    try:
        pts = np.array([[float(v) for v in ln.split(",")] for ln in rows])
    except ValueError as exc:
        raise ConfigError(f"layout {path}: {exc}") from exc
    if pts.ndim != 2 or pts.shape[1] not in (2, 3):
        raise ConfigError("layout rows need x,y or x,y,z")
    if pts.shape[1] == 2:
        pts = np.column_stack([pts, np.zeros(len(pts))])
    return pts


def cmd_enumerate(args) -> int:
    cfg = _merged(args, ("case", "k_max", "out"))
    if args.layout:
        pos = _read_layout(args.layout)
    elif "electrodes" in cfg:
        pos = np.array([list(p) + [0.0] * (3 - len(p)) for p in cfg["electrodes"]], dtype=float)
    elif "case" in cfg:
        pos = spec_from_config(cfg).positions
    else:
        raise ConfigError("enumerate needs --case, --layout or 'electrodes' in the config")
    try:
        layout = ElectrodeLayout(pos)
        rows, k = enumerate_configs(layout, cfg.get("k_max", np.inf), return_k=True)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    text = configs_to_csv(rows, k)
    if cfg.get("out"):
        out = Path(cfg["out"])
        if out.suffix != ".csv":
            out = out / "configurations.csv"
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        print(f"count {len(rows)}")
    else:
        sys.stdout.write(text)
        print(f"count {len(rows)}", file=sys.stderr)
    return EXIT_OK


def cmd_probe(args) -> int:
    try:
        nodes, cells, data = read_vtk(Path(args.field).read_text())
    except (OSError, VtkFormatError) as exc:
        raise ConfigError(f"cannot read field file {args.field}: {exc}") from exc
    if cells.shape[1] != 4:
        raise ConfigError("probe needs a tetrahedral field file")
    name = args.name or (next(iter(data)) if data else None)
    if name not in data:
        raise ConfigError(f"field {name!r} not in {sorted(data)}")
    grid = SubdomainGrid(3, nodes, cells, name="probe")
    a = np.array(args.start, float)
    b = np.array(args.end, float)
    if args.n < 2:
        raise ConfigError("--n must be at least 2")
    pts = a + np.linspace(0.0, 1.0, args.n)[:, None] * (b - a)
    try:
        idx = CellLocator(grid).locate(pts)
    except ValueError as exc:
        raise ConfigError(f"segment leaves the mesh: {exc}") from exc
    text = _csv(pts, data[name][idx])
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mdsens", description="Mixed-dimensional ERT sensitivity runs")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", help="JSON run configuration")
        if out:
            sp.add_argument("--out", help="output directory")
        sp.add_argument("--threads", type=int)

    v = sub.add_parser("validate", help="half-space validation against the closed form")
    common(v)
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("scenario", help="landfill case with optional hole/shift")
    common(s)
    s.add_argument("--case", type=int)
    s.add_argument("--hole", type=float, help="hole diameter (m)")
    s.add_argument("--shift", type=float, help="downward liner shift (m)")
    s.add_argument("--kmax", dest="k_max", type=float, help="geometric-factor cap (m)")
    s.add_argument("--stride", type=int, help="keep every n-th enumerated configuration")
    s.add_argument("--full", action="store_true", help="use the whole enumeration")
    s.add_argument("--no-liner", dest="no_liner", action="store_true")
    s.set_defaults(func=cmd_scenario)

    e = sub.add_parser("enumerate", help="canonical configuration CSV")
    e.add_argument("--config")
    e.add_argument("--out", help="CSV file or directory")
    e.add_argument("--case", type=int)
    e.add_argument("--layout", help="CSV of electrode positions x,y[,z]")
    e.add_argument("--kmax", dest="k_max", type=float)
    e.set_defaults(func=cmd_enumerate)

    pr = sub.add_parser("probe", help="sample a saved VTK cell field along a segment")
    pr.add_argument("field", help="VTK file written by scenario or validate")
    pr.add_argument("--from", dest="start", type=float, nargs=3, required=True, metavar=("X", "Y", "Z"))
    pr.add_argument("--to", dest="end", type=float, nargs=3, required=True, metavar=("X", "Y", "Z"))
    pr.add_argument("--n", type=int, default=201)
    pr.add_argument("--name", help="cell field name (default: first)")
    pr.add_argument("--out", help="CSV file (default: stdout)")
    pr.set_defaults(func=cmd_probe)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularSystemError, FactorizationError, MeshError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
