"""Command-line runner: single targets, parameter scans, bounds and verification.

Every command reads one JSON config (``--config``); the convenience flags
build or override the same structure, which is validated against
``CONFIG_SCHEMA`` before anything runs.  Exit codes: 0 success, 1 failed
verification, 2 bad config/usage, 3 solver failure, 4 resource limit.
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import copy
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import bounds, certify, lhs, lhv
from . import measpoly as mp
from . import strategies as st
from .qforms import (
    HALF_IDENTITY,
    MAXIMALLY_MIXED,
    FamilyPoint,
    FamilyState,
    QubitOperator,
    TwoQubitOperator,
    build_family,
    partial_trace,
    werner,
)

log = logging.getLogger("localmodels")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_SOLVER, EXIT_RESOURCE = 0, 1, 2, 3, 4
ENV_TOL = "LOCALMODELS_TOL"
ENV_WORKERS = "LOCALMODELS_WORKERS"

_num = {"type": "number"}
_numlist = {"type": "array", "items": _num}
_range = {"oneOf": [_numlist, {
    "type": "object", "required": ["start", "stop", "num"], "additionalProperties": False,
    "properties": {"start": _num, "stop": _num, "num": {"type": "integer", "minimum": 1}}}]}
_level = {
    "type": "object", "additionalProperties": False,
    "properties": {
        "measurements": {"enum": ["icosahedron", "dual", "augment", "augment_to", "custom"]},
        "strategies": {"enum": ["all", "sign", "extend_prune"]},
        "eta_target": _num, "directions": {"type": "array", "items": _numlist},
        "orient": {"type": "boolean"}, "protocol": {"enum": ["basic", "final"]},
        "use_aux": {"type": "boolean"}, "prune": {"type": "boolean"},
    },
}
TARGET_FAMILIES = ["werner", "bell_diagonal", "rank3", "white_noise", "colored_noise", "custom"]
CONFIG_SCHEMA = {
    "type": "object",
    "required": ["command"],
    "additionalProperties": False,
    "properties": {
        "command": {"enum": ["lhs", "lhv", "scan", "bounds", "shrink"]},
        "target": {
            "type": "object", "required": ["family"], "additionalProperties": False,
            "properties": {"family": {"enum": TARGET_FAMILIES}, "params": _numlist,
                           "pauli": {"type": "array", "items": _numlist}},
        },
        "grid": {
            "type": "object", "required": ["family", "param1"], "additionalProperties": False,
            "properties": {"family": {"enum": ["bell_diagonal", "rank3", "white_noise",
                                               "colored_noise", "werner"]},
                           "param1": _range, "param2": _range},
        },
        "methods": {"type": "array", "items": {"enum": ["lhs", "lhv", "ppt", "steering_upper", "condj"]}},
        "schedule": {"enum": sorted(lhs.SCHEDULES)},
        "levels": {"oneOf": [{"type": "integer", "minimum": 1}, {"type": "array", "items": _level}]},
        "protocol": {"enum": ["basic", "final"]},
        "xi": {"oneOf": [{"enum": ["default", "half"]}, {"type": "array", "items": _num,
                                                        "minItems": 3, "maxItems": 3}]},
        "rho_sep": {"oneOf": [{"enum": ["default", "maximally_mixed", "marginal_product"]},
                              {"type": "array", "items": _numlist}]},
        "measurements": {"oneOf": [{"type": "string"}, {"type": "array", "items": _numlist}]},
        "upper_bound_measurements": {"oneOf": [{"type": "string"}, {"type": "array", "items": _numlist}]},
        "tolerance": {"type": "number", "exclusiveMinimum": 0},
        "validate_tolerance": {"type": "number", "exclusiveMinimum": 0},
        "extension_cap": {"type": "integer", "minimum": 1},
        "exactify": {"type": "boolean"},
        "output": {
            "type": "object", "additionalProperties": False,
            "properties": {"certificate": {"type": "string"}, "csv": {"type": "string"},
                           "dir": {"type": "string"}, "timing": {"type": "boolean"}},
        },
        "workers": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
    },
}
DEFAULTS = {"schedule": "isotropic-dual", "levels": 1, "xi": "default", "rho_sep": "default",
            "tolerance": 1e-8, "validate_tolerance": 1e-6, "extension_cap": 4096,
            "workers": 1, "seed": 0, "exactify": False, "upper_bound_measurements": "default13"}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config handling

def resolve_config(cfg: dict, env=None) -> dict:
    """Validate, fill defaults and apply environment overrides."""
    env = os.environ if env is None else env
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    out = copy.deepcopy(DEFAULTS)
    out.update(copy.deepcopy(cfg))
    if ENV_TOL in env:
        out["tolerance"] = float(env[ENV_TOL])
    if ENV_WORKERS in env:
        out["workers"] = int(env[ENV_WORKERS])
    cmd = out["command"]
    if cmd in ("lhs", "lhv", "bounds") and "target" not in out:
        raise ConfigError(f"command {cmd!r} needs a 'target'")
    if cmd == "scan":
        if "grid" not in out:
            raise ConfigError("command 'scan' needs a 'grid'")
        if not grid_points(out["grid"]):
            raise ConfigError("scan grid is empty")
        out.setdefault("methods", ["lhs"])
    if cmd == "shrink" and "measurements" not in out:
        out["measurements"] = "icosahedron"
    return out


def _expand(r) -> list:
    if isinstance(r, dict):
        return np.linspace(r["start"], r["stop"], r["num"]).tolist()
    return list(r)


def grid_points(grid: dict) -> list[tuple]:
    p1 = _expand(grid["param1"])
    if "param2" in grid:
        return [(a, b) for a in p1 for b in _expand(grid["param2"])]
    return [(a,) for a in p1]


def target_from_config(t: dict):
    """``FamilyPoint`` or, for ``werner``, a ``FamilyState`` with the Werner defaults."""
    fam, p = t["family"], tuple(t.get("params", ()))
    if fam == "werner":
        q = p[0] if p else 1.0
        return FamilyState(werner(q), MAXIMALLY_MIXED, HALF_IDENTITY)
    if fam == "custom":
        if "pauli" not in t:
            raise ConfigError("custom target needs 'pauli' coefficients")
        return FamilyPoint.custom(TwoQubitOperator(np.array(t["pauli"], float)).matrix())
    need = {"bell_diagonal": 3, "rank3": 2, "white_noise": 2, "colored_noise": 2}[fam]
    if len(p) != need:
        raise ConfigError(f"{fam} needs {need} params, got {len(p)}")
    return FamilyPoint(fam, p)


def grid_target(family: str, point: tuple) -> dict:
    """Scan parametrization: Bell-diagonal ``t = (s, -s, s3)``; noisy families use theta."""
    a = point[0]
    b = point[1] if len(point) > 1 else None
    if family == "bell_diagonal":
        return {"family": "bell_diagonal", "params": [a, -a, 1.0 if b is None else b]}
    if family == "rank3":
        return {"family": "rank3", "params": [a, 1 - a if b is None else b]}
    if family in ("white_noise", "colored_noise"):
        return {"family": family, "params": [1.0, a]}
    return {"family": "werner", "params": [a]}


def family_state(cfg: dict, target=None) -> FamilyState:
    target = target_from_config(cfg["target"]) if target is None else target
    fs = build_family(target) if isinstance(target, FamilyPoint) else target
    rs = cfg.get("rho_sep", "default")
    if rs == "maximally_mixed":
        fs = FamilyState(fs.rho, MAXIMALLY_MIXED, partial_trace(MAXIMALLY_MIXED, "B"))
    elif rs == "marginal_product":
        sep = partial_trace(fs.rho, "B").tensor(HALF_IDENTITY)
        fs = FamilyState(fs.rho, sep, partial_trace(sep, "B"))
    elif isinstance(rs, list):
        sep = TwoQubitOperator(np.array(rs, float))
        fs = FamilyState(fs.rho, sep, partial_trace(sep, "B"))
    xi = cfg.get("xi", "default")
    if xi == "half":
        fs = FamilyState(fs.rho, fs.rho_sep, HALF_IDENTITY)
    elif isinstance(xi, list):
        fs = FamilyState(fs.rho, fs.rho_sep, QubitOperator.density(np.array(xi, float)))
    return fs


def measurement_set(spec, xi=None) -> mp.MeasurementSet:
    """``icosahedron``, ``octahedron``, ``default13``, ``dual:K`` (K-fold dual of the
    icosahedron), ``augment:ETA`` or an explicit direction list."""
    if isinstance(spec, list):
        return mp.MeasurementSet(np.array(spec, float), "custom")
    if spec == "icosahedron":
        return mp.icosahedron()
    if spec == "octahedron":
        return mp.octahedron()
    if spec == "default13":
        return bounds.default_upper_bound_set()
    kind, _, arg = spec.partition(":")
    try:
        if kind == "dual":
            ms = mp.icosahedron()
            for _ in range(int(arg)):
                ms = mp.dual_polyhedron(ms)
            return ms
        if kind == "augment":
            return mp.augment_to(mp.icosahedron(), xi, float(arg))
    except ValueError as exc:
        raise ConfigError(f"bad measurement set {spec!r}: {exc}") from None
    raise ConfigError(f"unknown measurement set {spec!r}")


def levels_from_config(cfg: dict) -> tuple:
    lv = cfg["levels"]
    if isinstance(lv, int):
        levels = lhs.schedule(cfg["schedule"], lv)
        if len(levels) < lv:
            raise ConfigError(f"schedule {cfg['schedule']!r} has only {len(levels)} levels")
    else:
        levels = tuple(lhs.LevelConfig(**{k: tuple(map(tuple, v)) if k == "directions" else v
                                          for k, v in d.items()}) for d in lv)
    if "protocol" in cfg:
        levels = tuple(lhs.LevelConfig(**{**lc.__dict__, "protocol": cfg["protocol"]}) for lc in levels)
    return levels


def content_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


def _stamp(cfg: dict) -> dict:
    return {"config": cfg, "version": __version__}


# ---------------------------------------------------------------------------
# single runs

def run_lhs(cfg: dict, target=None):
    fs = family_state(cfg, target)
    return lhs.run_hierarchy(fs, levels_from_config(cfg), xi=fs.xi, tol=cfg["tolerance"],
                             validate_tol=cfg["validate_tolerance"],
                             extension_cap=cfg["extension_cap"], stop_when_certified=True,
                             on_level=_collect(cfg))


def run_lhv(cfg: dict, target=None):
    fs = family_state(cfg, target)
    levels = levels_from_config(cfg) if not isinstance(cfg["levels"], int) else \
        lhv.LHV_SCHEDULES["isotropic-dual"][: cfg["levels"]]
    if "protocol" in cfg:
        levels = tuple(lhs.LevelConfig(**{**lc.__dict__, "protocol": cfg["protocol"]}) for lc in levels)
    return lhv.run_lhv_hierarchy(fs, levels, rho_sep=fs.rho_sep, xi_a=fs.xi, xi_b=fs.xi,
                                 tol=cfg["tolerance"], validate_tol=cfg["validate_tolerance"],
                                 on_level=_collect(cfg))


_LAST_INSTANCES: list = []


def _collect(cfg):
    _LAST_INSTANCES.clear()

    def hook(cert, inst):
        _LAST_INSTANCES.append(inst)

    return hook


def summary_line(kind: str, cert) -> str:
    if cert.certified:
        return f"{kind} certified (q* >= 1) at level {cert.level.get('level', 1)}"
    m = cert.level.get("m", cert.level.get("m_a"))
    eta = cert.level.get("eta", cert.level.get("nu"))
    return (f"{kind} level {cert.level.get('level', 1)}: q* = {cert.q_star:.8f} "
            f"(eta {eta:.6f}, m {m}, residual {cert.validation['max_residual']:.2e}, "
            f"{cert.solver.get('seconds', 0):.2f} s)")


def _write_json(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(data, sort_keys=True, indent=1))
    tmp.replace(path)


def cmd_single(cfg: dict, out=None) -> int:
    out = out or sys.stdout
    kind = cfg["command"]
    if kind == "lhv" and cfg.get("exactify") and cfg.get("protocol", "final") != "basic":
        raise ConfigError("exactify needs --protocol basic")
    certs = (run_lhs if kind == "lhs" else run_lhv)(cfg)
    for c in certs:
        print(summary_line(kind.upper(), c), file=out)
    best = certs[-1]
    inst = _LAST_INSTANCES[-1]
    path = cfg.get("output", {}).get("certificate")
    if path:
        _write_json(path, {**_stamp(cfg), **best.to_json(inst),
                           "levels": [{"q_star": c.q_star, **c.level} for c in certs]})
        print(f"certificate written to {path}", file=out)
    if kind == "lhv" and cfg.get("exactify"):
        model = certify.exactify(best, inst) if best.protocol == "basic" else None
        if model is None:
            raise ConfigError("exactify needs protocol 'basic'")
        rpath = (path or "lhv.json").replace(".json", "") + ".rational.json"
        _write_json(rpath, {**_stamp(cfg), **model.to_json()})
        print(f"rational model (q = {model.meta['q']}) written to {rpath}", file=out)
    return EXIT_OK


def cmd_bounds(cfg: dict, out=None) -> int:
    out = out or sys.stdout
    fs = family_state(cfg)
    ms = measurement_set(cfg["upper_bound_measurements"], fs.xi)
    res = {"ppt_threshold": bounds.ppt_threshold(fs),
           "steering_upper_bound": bounds.steering_upper_bound(fs, ms, tol=cfg["tolerance"]),
           "upper_bound_m": ms.m}
    t = cfg["target"]
    if t["family"] == "colored_noise":
        res["condj_threshold"] = bounds.condj_threshold(t["params"][1])
    for k, v in res.items():
        print(f"{k}: {v:.10g}" if isinstance(v, float) else f"{k}: {v}", file=out)
    return EXIT_OK


def cmd_shrink(cfg: dict, out=None) -> int:
    out = out or sys.stdout
    xi_spec = cfg.get("xi", "default")
    xi = QubitOperator.density(np.array(xi_spec, float)) if isinstance(xi_spec, list) else HALF_IDENTITY
    ms = measurement_set(cfg["measurements"], xi)
    eta, facet = mp.shrinking_factor(ms, xi)
    print(f"m = {ms.m}  eta* = {eta:.12f}  worst facet = {facet}", file=out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# scans

def _point_key(cfg: dict, point) -> str:
    core = {k: v for k, v in cfg.items() if k not in ("output", "workers")}
    return content_hash({"config": core, "point": list(point), "version": __version__})


def scan_point(cfg: dict, point: tuple) -> list[dict]:
    """All requested curves at one grid point; failures become rows with an error field."""
    fam = cfg["grid"]["family"]
    tcfg = {**cfg, "target": grid_target(fam, point)}
    rows = []
    base = {"param1": point[0], "param2": point[1] if len(point) > 1 else ""}

    def add(method, q, level="", eta="", m="", residual="", seconds="", error=None):
        row = {**base, "method": method, "level": level, "q_star": q, "eta": eta, "m": m,
               "residual": residual, "seconds": seconds}
        if error:
            row["error"] = error
        rows.append(row)

    for method in cfg["methods"]:
        t0 = time.perf_counter()
        try:
            if method in ("lhs", "lhv"):
                certs = run_lhs(tcfg) if method == "lhs" else run_lhv(tcfg)
                for c in certs:
                    add(method, c.q_star, c.level.get("level"), c.level.get("eta", c.level.get("nu")),
                        c.level.get("m", c.level.get("m_a")), c.validation["max_residual"],
                        c.solver.get("seconds", ""))
            elif method == "ppt":
                add(method, bounds.ppt_threshold(family_state(tcfg)), seconds=time.perf_counter() - t0)
            elif method == "steering_upper":
                fs = family_state(tcfg)
                ms = measurement_set(cfg["upper_bound_measurements"], fs.xi)
                q, det = bounds.steering_upper_bound(fs, ms, tol=cfg["tolerance"], return_details=True)
                add(method, q, m=ms.m, residual=det["residual"], seconds=time.perf_counter() - t0)
            elif method == "condj":
                if fam != "colored_noise":
                    raise ConfigError("condj applies to the colored-noise family only")
                add(method, bounds.condj_threshold(point[0]), seconds=time.perf_counter() - t0)
        except (ConfigError, ValueError, lhs.HierarchyError, lhs.SolverError, st.ResourceError) as exc:
            add(method, "", error=f"{type(exc).__name__}: {exc}")
    return rows


def _scan_worker(args):
    cfg, point = args
    return point, scan_point(cfg, point)


CSV_FIELDS = list(bounds.CSV_COLUMNS) + ["error"]


def _write_csv(path: Path, rows: list[dict], timing: bool):
    import csv
    import io

    buf = io.StringIO()
    w = csv.DictWriter(buf, CSV_FIELDS, lineterminator="\r\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        r = dict(r)
        if not timing:
            r["seconds"] = ""
        for k in ("q_star", "eta", "residual", "param1", "param2", "seconds"):
            if isinstance(r.get(k), float):
                r[k] = repr(round(r[k], 12))
        w.writerow(r)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(buf.getvalue())
    tmp.replace(path)


def cmd_scan(cfg: dict, out=None) -> int:
    out = out or sys.stdout
    output = cfg.get("output", {})
    csv_path = Path(output.get("csv", "scan.csv"))
    point_dir = Path(output.get("dir", str(csv_path.with_suffix("")) + ".points"))
    point_dir.mkdir(parents=True, exist_ok=True)
    timing = output.get("timing", False)
    pts = grid_points(cfg["grid"])
    done, todo = {}, []
    for p in pts:
        f = point_dir / f"{_point_key(cfg, p)}.json"
        if f.exists():
            done[p] = json.loads(f.read_text())["rows"]
        else:
            todo.append(p)
    print(f"scan: {len(pts)} points, {len(done)} already done", file=out)

    def record(p, rows):
        done[p] = rows
        _write_json(point_dir / f"{_point_key(cfg, p)}.json",
                    {**_stamp(cfg), "point": list(p), "rows": rows})
        ordered = [r for q in pts if q in done for r in done[q]]
        _write_csv(csv_path, ordered, timing)

    if cfg["workers"] > 1 and len(todo) > 1:
        with cf.ProcessPoolExecutor(cfg["workers"]) as ex:
            for p, rows in ex.map(_scan_worker, [(cfg, p) for p in todo]):
                record(p, rows)
    else:
        for p in todo:
            record(p, scan_point(cfg, p))
    if not pts:
        raise ConfigError("scan grid is empty")
    ordered = [r for q in pts for r in done[q]]
    _write_csv(csv_path, ordered, timing)
    _write_json(csv_path.with_suffix(".config.json"), _stamp(cfg))
    n_err = sum(1 for r in ordered if r.get("error"))
    print(f"scan written to {csv_path} ({len(ordered)} rows, {n_err} failed)", file=out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# verification

def verify_file(path, tol: float = 1e-6) -> tuple[bool, dict]:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read certificate {path}: {exc}") from exc
    kind = data.get("kind")
    if kind == "lhv-rational":
        return certify.verify_rational(certify.RationalModel.from_json(data))
    if kind == "lhs":
        cert, inst = lhs.certificate_from_json(data)
        rep = lhs.validate(cert, inst, tol)
    elif kind == "lhv":
        cert, inst = lhv.certificate_from_json(data)
        rep = lhv.validate(cert, inst, tol)
    else:
        raise ConfigError(f"unknown certificate kind {kind!r}")
    # the visibility claim must follow from the stored solver value
    claim_ok = cert.q_star <= cert.q_solver + 1e-12
    if not claim_ok:
        rep["failed"] = list(rep["failed"]) + ["claimed visibility"]
    # eta must not exceed the shrinking factor of the stored measurement set
    maps = [(inst.measurements, inst.noise)] if kind == "lhs" else \
        [(inst.ms_a, inst.map_a), (inst.ms_b, inst.map_b)]
    for ms, noise in maps:
        if noise.eta > mp.shrinking_factor(ms, noise.xi)[0] + 1e-9:
            rep["failed"] = list(rep["failed"]) + ["shrinking factor"]
    rep["passed"] = not rep["failed"]
    return rep["passed"], rep


def cmd_verify(path: str, tol: float, out=None) -> int:
    out = out or sys.stdout
    ok, rep = verify_file(path, tol)
    if ok:
        print(f"{path}: all checks passed", file=out)
        return EXIT_OK
    print(f"{path}: FAILED: {rep['failed'][0]} (all failures: {', '.join(rep['failed'])})", file=out)
    return EXIT_VERIFY


# ---------------------------------------------------------------------------
# entry point

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="localmodels", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("lhs", "lhv", "scan", "bounds", "shrink"):
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON run config")
        s.add_argument("--family", choices=TARGET_FAMILIES)
        s.add_argument("--params", type=float, nargs="*")
        s.add_argument("--levels", type=int)
        s.add_argument("--schedule", choices=sorted(lhs.SCHEDULES))
        s.add_argument("--protocol", choices=["basic", "final"])
        s.add_argument("--measurements")
        s.add_argument("--out", help="certificate path (lhs/lhv) or CSV path (scan)")
        s.add_argument("--workers", type=int)
        s.add_argument("--timing", action="store_true", help="fill the seconds column")
        if name == "lhv":
            s.add_argument("--exactify", action="store_true")
    v = sub.add_parser("verify")
    v.add_argument("certificate")
    v.add_argument("--tol", type=float, default=1e-6)
    return p


def config_from_args(args) -> dict:
    cfg = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    cfg["command"] = args.command
    if args.family:
        key = "grid" if args.command == "scan" else "target"
        if key == "grid":
            cfg["grid"] = {"family": args.family, "param1": args.params or []}
        else:
            cfg["target"] = {"family": args.family, **({"params": args.params} if args.params else {})}
    for k in ("levels", "schedule", "protocol", "workers"):
        if getattr(args, k, None) is not None:
            cfg[k] = getattr(args, k)
    if args.measurements:
        cfg["measurements" if args.command == "shrink" else "upper_bound_measurements"] = args.measurements
    if args.out or args.timing:
        o = cfg.setdefault("output", {})
        if args.out:
            o["csv" if args.command == "scan" else "certificate"] = args.out
        if args.timing:
            o["timing"] = True
    if getattr(args, "exactify", False):
        cfg["exactify"] = True
    return cfg


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(message)s")
    try:
        if args.command == "verify":
            return cmd_verify(args.certificate, args.tol)
        cfg = resolve_config(config_from_args(args))
        if cfg["command"] in ("lhs", "lhv"):
            return cmd_single(cfg)
        return {"scan": cmd_scan, "bounds": cmd_bounds, "shrink": cmd_shrink}[cfg["command"]](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except st.ResourceError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except lhs.HierarchyError as exc:
        code = EXIT_RESOURCE if isinstance(exc.__cause__, st.ResourceError) else EXIT_SOLVER
        print(f"{'resource limit' if code == EXIT_RESOURCE else 'solver failure'}: {exc}", file=sys.stderr)
        return code
    except (lhs.SolverError, certify.ExactificationError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
