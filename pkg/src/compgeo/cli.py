"""Command line front-end: run scenario files through the comparison checks.

    compgeo check <file> [--seed N] [--jobs N] [--tol X] [--out DIR]
    compgeo sweep <file> --theorem ID [--out DIR]
    compgeo eigen --model SPEC --r X [X ...] [--n N]
    compgeo list-manifolds

Exit codes: 0 all pass, 1 some theorem failed, 2 configuration or schema
error, 3 hypothesis violated (and nothing failed).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import comparison_engine as ce
from .geometry_core import GeometryError, builtin, from_spec, list_builtins, make_embedding
from .scalar_models import CurvatureProfile

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_HYPOTHESIS = 0, 1, 2, 3

THEOREMS = (
    "laplacian", "area_volume", "isoperimetric", "bonnet_myers", "conjugate_profile", "tube", "kahler",
    "kahler_myers", "kahler_tube", "gunther", "gunther_tube", "kahler_gunther", "scalar_expansion", "cheng",
    "cheng_closed", "max_diameter", "radial_identity",
)

_SHARED = ("manifold", "point", "embedding", "k", "k1", "k2", "inj", "quadrature")
_ENTRY_KEYS = set(_SHARED) | {"id", "label", "r_grid", "params"}
_TOP_KEYS = set(_SHARED) | {"name", "description", "theorems", "seed", "jobs", "output", "expect"}


class ScenarioError(ValueError):
    """Schema or content problem in a scenario file."""


# ---------------------------------------------------------------------------
# scenario loading


def load_scenario(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path} is not valid JSON: {exc}") from None
    validate_scenario(data)
    data.setdefault("name", Path(path).stem)
    return data


def _grid_ok(grid, inj, where):
    if not isinstance(grid, list) or not grid or not all(isinstance(x, (int, float)) for x in grid):
        raise ScenarioError(f"{where}: r_grid must be a non-empty list of numbers")
    g = np.asarray(grid, float)
    if np.any(g <= 0) or np.any(np.diff(g) <= 0):
        raise ScenarioError(f"{where}: r_grid must be positive and strictly increasing")
    if inj is not None and g[-1] >= float(inj):
        raise ScenarioError(f"{where}: r_grid reaches {g[-1]} but the asserted injectivity radius is {inj}")


def validate_scenario(data) -> None:
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    extra = sorted(set(data) - _TOP_KEYS)
    if extra:
        raise ScenarioError(f"unknown top-level keys: {extra}")
    th = data.get("theorems")
    if not isinstance(th, list) or not th:
        raise ScenarioError("'theorems' must be a non-empty list")
    if "inj" in data and not (isinstance(data["inj"], (int, float)) and data["inj"] > 0):
        raise ScenarioError("'inj' must be a positive number")
    try:
        ce.QuadSettings.from_dict(data.get("quadrature"))
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"quadrature: {exc}") from None
    for i, e in enumerate(th):
        where = f"theorems[{i}]"
        if not isinstance(e, dict):
            raise ScenarioError(f"{where} must be an object")
        bad = sorted(set(e) - _ENTRY_KEYS)
        if bad:
            raise ScenarioError(f"{where}: unknown keys {bad}")
        if e.get("id") not in THEOREMS:
            raise ScenarioError(f"{where}: unknown theorem id {e.get('id')!r}")
        merged = {k: e.get(k, data.get(k)) for k in _SHARED}
        if merged["manifold"] is None and e["id"] != "cheng_closed":
            raise ScenarioError(f"{where}: no manifold given")
        if "r_grid" in e:
            _grid_ok(e["r_grid"], merged["inj"], where)
        elif e["id"] not in ("bonnet_myers", "conjugate_profile", "kahler_myers", "cheng", "cheng_closed",
                             "max_diameter", "radial_identity"):
            raise ScenarioError(f"{where}: r_grid is required for {e['id']}")
        if "params" in e and not isinstance(e["params"], dict):
            raise ScenarioError(f"{where}: params must be an object")
        q = dict(data.get("quadrature") or {})
        q.update(e.get("quadrature") or {})
        try:
            ce.QuadSettings.from_dict(q)
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"{where}: quadrature: {exc}") from None


# ---------------------------------------------------------------------------
# running


def _manifold(spec):
    if isinstance(spec, str):
        return builtin(spec)
    return from_spec(spec)


def _profile(v):
    if v is None:
        raise ce.ConfigError("comparison profile 'k' is missing")
    if isinstance(v, (int, float)):
        return CurvatureProfile.constant(float(v))
    return CurvatureProfile.from_json(v)


def _poly(spec):
    if not isinstance(spec, dict) or spec.get("kind") != "poly":
        raise ce.ConfigError("radial functions are given as {'kind': 'poly', 'coef': [c0, c1, ...]}")
    P = np.polynomial.Polynomial(np.asarray(spec["coef"], float))
    return P, P.deriv(), P.deriv(2)


_MANIFOLDS: dict = {}


def _cached_manifold(spec):
    key = json.dumps(spec, sort_keys=True)
    if key not in _MANIFOLDS:
        _MANIFOLDS[key] = _manifold(spec)
    return _MANIFOLDS[key]


def _cached_embedding(M, spec):
    key = (id(M), json.dumps(spec, sort_keys=True))
    if key not in _MANIFOLDS:
        _MANIFOLDS[key] = make_embedding(M, spec)
    return _MANIFOLDS[key]


def run_entry(scenario: dict, entry: dict, quad: ce.QuadSettings) -> ce.ComparisonReport:
    get = lambda k: entry.get(k, scenario.get(k))  # noqa: E731
    tid = entry["id"]
    prm = dict(entry.get("params") or {})
    M = _cached_manifold(get("manifold")) if get("manifold") is not None else None
    p = None if get("point") is None else np.asarray(get("point"), float)
    inj = get("inj")
    grid = entry.get("r_grid")
    if tid == "laplacian":
        return ce.check_laplacian_point(M, p, _profile(get("k")), grid, quad, inj)
    if tid == "area_volume":
        return ce.check_area_volume(M, p, _profile(get("k")), grid, quad, inj)
    if tid == "isoperimetric":
        return ce.check_isoperimetric(M, p, _profile(get("k")), grid, quad, inj)
    if tid == "bonnet_myers":
        return ce.check_bonnet_myers(M, p, _profile(get("k")), prm.get("directions"), quad, prm.get("search"))
    if tid == "conjugate_profile":
        return _conjugate_profile_report(M, p, prm, quad)
    if tid in ("tube", "gunther_tube", "kahler_tube"):
        if get("embedding") is None:
            raise ce.ConfigError(f"{tid} needs an embedding")
        emb = _cached_embedding(M, get("embedding"))
        if tid == "tube":
            return ce.check_tube(emb, _profile(get("k")), grid, quad, inj)
        if tid == "gunther_tube":
            return ce.check_gunther_tube(emb, _profile(get("k")), grid, quad, inj)
        return ce.check_kahler_tube(emb, _profile(get("k1")), _profile(get("k2")), grid, quad, inj)
    if tid == "kahler":
        return ce.check_kahler_point(M, p, _profile(get("k1")), _profile(get("k2")), grid, quad, inj)
    if tid == "kahler_myers":
        return ce.check_kahler_myers(M, p, _profile(get("k1")), _profile(get("k2")), prm.get("directions"), quad,
                                     prm.get("search"), grid)
    if tid == "gunther":
        return ce.check_gunther_point(M, p, _profile(get("k")), grid, quad, inj)
    if tid == "kahler_gunther":
        target = _cached_embedding(M, get("embedding")) if get("embedding") is not None else p
        return ce.check_kahler_gunther(M, target, _profile(get("k")), grid, quad, inj)
    if tid == "scalar_expansion":
        keys = ("r4_reference", "fit_rtol", "fit_atol", "r4_rtol", "residual_tol")
        return ce.check_scalar_expansion(M, p, _profile(get("k")), grid, quad, inj,
                                         **{k: prm[k] for k in keys if k in prm})
    if tid == "cheng":
        if prm.get("kahler"):
            prof = (_profile(get("k1")), _profile(get("k2")))
        else:
            prof = _profile(get("k"))
        return ce.check_cheng(M, p, prof, float(prm["r"]), quad, inj, kahler=bool(prm.get("kahler")))
    if tid == "cheng_closed":
        target = M if M is not None else int(prm["dimension"])
        spectrum = prm["spectrum"] if isinstance(prm["spectrum"], list) else [prm["spectrum"]]
        return ce.check_cheng_closed(target, spectrum, _profile(get("k")), float(prm["diameter"]), quad)
    if tid == "max_diameter":
        return ce.check_max_diameter(M, np.asarray(prm["p1"], float), np.asarray(prm["p2"], float),
                                     _profile(get("k")), quad, prm.get("distance"), prm.get("total_volume"), grid)
    if tid == "radial_identity":
        phi, dphi, d2phi = _poly(prm["phi"])
        psi, dpsi, _ = _poly(prm["psi"])
        return ce.check_radial_identity(M, p, _profile(get("k")), phi, psi, float(prm["r"]), quad, inj,
                                        dphi=dphi, d2phi=d2phi, dpsi=dpsi)
    raise ce.ConfigError(f"unknown theorem id {tid!r}")


def _conjugate_profile_report(M, p, prm, quad) -> ce.ComparisonReport:
    from .transport import shoot_geodesic

    p = M.origin if p is None else p
    v = np.asarray(prm["direction"], float)
    g = M.metric_at(p)
    v = v / math.sqrt(v @ g @ v)
    rec = shoot_geodesic(M, p, v, float(prm["length"]), tol=quad.ode_tol)
    out = ce.extract_conjugate_profile(rec, prm.get("Y"))
    b = ce._Builder("conjugate_profile", quad, {"manifold": ce._manifold_desc(M), "point": p.tolist(),
                                                "direction": v.tolist()}, [out["r0"]])
    tol = float(prm.get("tol", 1e-6))
    b.row("profile_integral", out["r0"], out["integral"], 0.0, err=tol)
    b.diag["k_min"] = float(np.min(out["k"]))
    b.diag["k_max"] = float(np.max(out["k"]))
    b.diag["conjugate_radius"] = out["r0"]
    return b.report()


def _exit_code(verdicts, config_errors) -> int:
    if config_errors:
        return EXIT_CONFIG
    if "fail" in verdicts:
        return EXIT_FAIL
    if "hypothesis-violated" in verdicts:
        return EXIT_HYPOTHESIS
    return EXIT_PASS


def _quad_for(scenario, entry, args) -> ce.QuadSettings:
    q = dict(scenario.get("quadrature") or {})
    q.update(entry.get("quadrature") or {})
    if scenario.get("seed") is not None:
        q["seed"] = int(scenario["seed"])
    if scenario.get("jobs") is not None:
        q["jobs"] = int(scenario["jobs"])
    env = os.environ.get("COMPGEO_JOBS")
    if env:
        q["jobs"] = int(env)
    if getattr(args, "seed", None) is not None:
        q["seed"] = args.seed
    if getattr(args, "jobs", None) is not None:
        q["jobs"] = args.jobs
    if getattr(args, "tol", None) is not None:
        q["ode_tol"] = args.tol
    return ce.QuadSettings.from_dict(q)


def run_scenario(scenario: dict, args, only: str | None = None):
    """Run all (or the matching) entries; returns (results, config_errors)."""
    results = []
    errors = 0
    for i, entry in enumerate(scenario["theorems"]):
        if only is not None and entry["id"] != only:
            continue
        label = entry.get("label", entry["id"])
        t0 = time.perf_counter()
        try:
            quad = _quad_for(scenario, entry, args)
            rep = run_entry(scenario, entry, quad)
            results.append((i, label, rep, None, time.perf_counter() - t0))
        except (ce.ConfigError, GeometryError, ce.PastConjugatePointError, ScenarioError, KeyError, TypeError,
                ValueError) as exc:
            errors += 1
            msg = f"{type(exc).__name__}: {exc}"
            results.append((i, label, None, msg, time.perf_counter() - t0))
    return results, errors


def _table(results) -> str:
    lines = [f"{'#':>3}  {'theorem':<34} {'verdict':<20} {'rows':>4} {'min slack':>11} {'time':>7}"]
    for i, label, rep, err, dt in results:
        if rep is None:
            lines.append(f"{i:>3}  {label:<34} {'config-error':<20} {'':>4} {'':>11} {dt:>6.2f}s  {err}")
            continue
        ms = rep.min_slack()
        lines.append(f"{i:>3}  {label:<34} {rep.verdict:<20} {len(rep.rows):>4} {ms:>+11.3e} {dt:>6.2f}s")
    return "\n".join(lines)


def scenario_document(scenario, results, wall) -> dict:
    reports = []
    for i, label, rep, err, _ in results:
        item = {"index": i, "label": label}
        if rep is None:
            item["verdict"] = "config-error"
            item["error"] = err
        else:
            item.update(rep.to_dict(include_run=False))
        reports.append(item)
    verdicts = [r.get("verdict") for r in reports]
    return {
        "schema_version": ce.SCHEMA_VERSION,
        "scenario": scenario.get("name"),
        "exit_code": _exit_code(verdicts, sum(v == "config-error" for v in verdicts)),
        "reports": reports,
        "run": {"timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"), "wall_time": round(wall, 3)},
    }


def _out_dir(args, scenario):
    d = args.out or (scenario.get("output") or {}).get("dir")
    if d is None:
        return None
    path = Path(d)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_check(args) -> int:
    scenario = load_scenario(args.file)
    t0 = time.perf_counter()
    results, errors = run_scenario(scenario, args)
    doc = scenario_document(scenario, results, time.perf_counter() - t0)
    print(f"scenario {scenario['name']}")
    print(_table(results))
    out = _out_dir(args, scenario)
    if out is not None:
        target = out / f"{scenario['name']}.json"
        target.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
        print(f"report written to {target}")
    code = doc["exit_code"]
    print(f"exit {code}")
    return code


def cmd_sweep(args) -> int:
    scenario = load_scenario(args.file)
    if args.theorem not in THEOREMS:
        raise ScenarioError(f"unknown theorem id {args.theorem!r}")
    results, errors = run_scenario(scenario, args, only=args.theorem)
    if not results:
        raise ScenarioError(f"scenario has no {args.theorem!r} entry")
    out = _out_dir(args, scenario)
    verdicts = []
    for i, label, rep, err, _ in results:
        if rep is None:
            print(f"# {label}: {err}", file=sys.stderr)
            continue
        verdicts.append(rep.verdict)
        text = rep.to_csv()
        if out is not None:
            target = out / f"{scenario['name']}_{i}_{args.theorem}.csv"
            target.write_text(text, encoding="utf-8")
            print(f"sweep written to {target}")
        else:
            if len(results) > 1:
                print(f"# {label}")
            sys.stdout.write(text)
    return _exit_code(verdicts, errors)


def _model_arg(text: str):
    named = {"flat": 0.0, "sphere": 1.0, "hyperbolic": -1.0}
    if text in named:
        return CurvatureProfile.constant(named[text])
    try:
        val = json.loads(text)
    except json.JSONDecodeError:
        raise ScenarioError(f"cannot parse model spec {text!r}") from None
    if isinstance(val, (int, float)):
        return CurvatureProfile.constant(float(val))
    if isinstance(val, list) and len(val) == 2:
        return tuple(_profile(v) for v in val)
    return _profile(val)


def cmd_eigen(args) -> int:
    model = _model_arg(args.model)
    kahler = isinstance(model, tuple)
    for r in args.r:
        lam = ce.model_ball_eigenvalue(args.n, model, r, kahler=kahler)
        print(f"n={args.n} r={r:.12g} lambda1={lam:.12g}")
    return EXIT_PASS


def cmd_list(args) -> int:
    for name, spec in sorted(list_builtins().items()):
        print(f"{name:<22} {json.dumps(spec, sort_keys=True)}")
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="compgeo", description="Numerical checks of comparison inequalities")
    sub = ap.add_subparsers(dest="command", required=True)
    c = sub.add_parser("check", help="run every theorem entry of a scenario file")
    c.add_argument("file")
    c.add_argument("--seed", type=int)
    c.add_argument("--jobs", type=int)
    c.add_argument("--tol", type=float, help="ODE tolerance for geodesic and Jacobi solves")
    c.add_argument("--out", help="directory for the JSON report")
    c.set_defaults(func=cmd_check)
    s = sub.add_parser("sweep", help="write CSV rows for one theorem of a scenario")
    s.add_argument("file")
    s.add_argument("--theorem", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--jobs", type=int)
    s.add_argument("--tol", type=float)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)
    e = sub.add_parser("eigen", help="first Dirichlet eigenvalue of a model ball")
    e.add_argument("--model", required=True, help="flat|sphere|hyperbolic, a number k, a profile JSON or [k1, k2]")
    e.add_argument("--r", type=float, nargs="+", required=True)
    e.add_argument("--n", type=int, default=2, help="dimension (complex dimension for a [k1, k2] model)")
    e.set_defaults(func=cmd_eigen)
    m = sub.add_parser("list-manifolds", help="print the builtin manifold specs")
    m.set_defaults(func=cmd_list)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_PASS
    if getattr(args, "jobs", None) is not None and args.jobs < 1:
        print("error: --jobs must be positive", file=sys.stderr)
        return EXIT_CONFIG
    if getattr(args, "tol", None) is not None and not args.tol > 0:
        print("error: --tol must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ScenarioError, ce.ConfigError, GeometryError, ce.NonBracketingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
