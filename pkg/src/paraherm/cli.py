"""Command-line front end.

Commands: ``verify``, ``action``, ``curvature``, ``bracket``, ``reduce``.
Every command prints (or writes with ``--out``) a JSON report with the
top-level keys ``model``, ``passed``, ``checks``, ``values`` and ``env``.
Reports depend only on the configuration and the seed; wall-clock timings
go to stderr.  Exit codes: 0 all checks pass, 1 a check failed, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from typing import Optional, Sequence

import numpy as np

from . import __version__
from . import brackets as br
from . import chartcalc as cc
from . import models
from .connections import canonical_connection, cyclic_identity_residual, verify_canonical
from .curvature import (ActionConfig, action, curvature_checks, curvature_report,
                        modified_scalar)
from .expr import ExpressionError, array_function, compile_expression
from .fieldmetric import CompatibleField, verify_field
from .parastructure import ParaHermitianStructure, para_kahler_residual, verify_structure
from .report import Report

SUITES = ("structure", "field", "bracket", "connection", "curvature", "reduction")
DEFAULT_SUITES = SUITES[:-1]
SUITE_TOL = {"structure": 1e-10, "field": 1e-10, "bracket": 1e-8, "connection": 1e-7,
             "curvature": 1e-6, "reduction": 1e-8}
CORRUPTIONS = ("F", "gamma", "g")
BRACKETS = ("gamma", "omega", "courant-L", "courant-Lbar", "dorfman-L", "dorfman-Lbar",
            "dorfman-omega", "dorfman-gamma")

ANCHORS = {
    "pk_flag": "para-Kähler iff d omega = 0 (expected flag of the model)",
    "suite_error": "suite ran without raising",
    "t_flow": "X_f = -f'(t)(d3 + d4), t = x1 x2",
    "finite": "action integrand finite on the box",
    "converged": "doubling nodes changes the action by < rtol",
}


class UsageError(Exception):
    """Bad command line or configuration (exit code 2)."""


# -- configuration ---------------------------------------------------------------------
def _load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path!r}: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    return cfg


def _merged(args: argparse.Namespace, cfg: dict, key: str, default=None):
    value = getattr(args, key, None)
    if value is not None:
        return value
    return cfg.get(key, default)


def _model_params(name: str, args: argparse.Namespace, cfg: dict) -> dict:
    params = dict(cfg.get("params", {}))
    n = _merged(args, cfg, "n")
    algebra = _merged(args, cfg, "algebra")
    if n is not None:
        key = "base_dim" if name == "tangent-sasaki" else "n"
        params[key] = int(n)
    if algebra is not None:
        if name != "group-double":
            raise UsageError("--algebra only applies to group-double")
        params["algebra"] = algebra
    return params


def _build_model(args: argparse.Namespace, cfg: dict) -> models.Model:
    name = args.model or cfg.get("model")
    if not name:
        raise UsageError("no model given")
    if name not in models.MODELS:
        raise UsageError(f"unknown model {name!r}; choose from {sorted(models.MODELS)}")
    try:
        return models.build_model(name, **_model_params(name, args, cfg))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"cannot build {name}: {exc}") from None


def _positive(value, what: str, kind=float):
    try:
        v = kind(value)
    except (TypeError, ValueError):
        raise UsageError(f"{what} must be a number, got {value!r}") from None
    if not v > 0:
        raise UsageError(f"{what} must be positive, got {value!r}")
    return v


def _common(args, cfg) -> tuple[int, int, Optional[float]]:
    samples = _positive(_merged(args, cfg, "samples", 10), "samples", int)
    seed = int(_merged(args, cfg, "seed", 0))
    tol = _merged(args, cfg, "tol")
    return samples, seed, None if tol is None else _positive(tol, "tol")


# -- corruption (negative controls) ----------------------------------------------------
def corrupt_model(model: models.Model, what: str) -> models.Model:
    """A copy of ``model`` with F, gamma or g perturbed so verification must fail."""
    S = model.structure
    if what == "F":
        S = ParaHermitianStructure(S.chart, 1.05 * S.F, S.gamma, S.L_frame, S.Lbar_frame,
                                   S.name + "+corrupt-F")
    elif what == "gamma":
        bump = cc.TensorField.constant(S.chart, (0, 2), 0.05 * np.eye(S.dim), "symmetric")
        S = ParaHermitianStructure(S.chart, S.F, S.gamma + bump, S.L_frame, S.Lbar_frame,
                                   S.name + "+corrupt-gamma")
    elif what != "g":
        raise UsageError(f"--corrupt must be one of {CORRUPTIONS}")
    field = None
    if model.field is not None:
        g = 1.05 * model.field.g if what == "g" else model.field.g
        field = CompatibleField(S, g, model.field.name, validate=False)
    return models.Model(model.name, S, field, model.para_kahler, model.strongly_compatible,
                        dict(model.params), dict(model.extras))


# -- suites ---------------------------------------------------------------------------
def _fields(model: models.Model, seed: int, count: int = 3):
    rng = np.random.default_rng(seed)
    return [cc.random_polynomial_field(model.chart, rng) for _ in range(count)]


def suite_structure(model, pts, tol, seed) -> Report:
    rep = verify_structure(model.structure, pts, tol)
    res = para_kahler_residual(model.structure, pts)
    is_pk = bool(res < 1e-9)
    rep.values["para_kahler"] = is_pk
    rep.values["d_omega_max"] = res
    if model.para_kahler is not None:
        rep.add("para_kahler_flag", ANCHORS["pk_flag"], float(is_pk != model.para_kahler), 0.5)
    return rep


def suite_field(model, pts, tol, seed) -> Report:
    return verify_field(model.field, pts, tol, seed)


def suite_bracket(model, pts, tol, seed) -> Report:
    return br.verify_brackets(model.structure, _fields(model, seed), pts, tol,
                              para_kahler=model.para_kahler)


def suite_connection(model, pts, tol, seed) -> Report:
    rep = verify_canonical(model.field, pts, tol)
    conn = canonical_connection(model.field)
    X, Y, Z = _fields(model, seed)
    from .connections import ANCHORS as CA
    rep.add("cyclic_identity", CA["cyclic"],
            cyclic_identity_residual(conn, model.structure.gamma, X, Y, Z, pts), tol)
    return rep


def suite_curvature(model, pts, tol, seed) -> Report:
    return curvature_checks(model.field, canonical_connection(model.field), pts, tol, seed=seed)


def suite_reduction(model, pts, tol, seed) -> Report:
    if model.name != "flat_para_kahler(n=2)":
        raise UsageError("the reduction suite runs on flat-para-kahler with n = 2")
    return reduction_report("circle", len(pts), seed, tol)


SUITE_FUNCS = {
    "structure": suite_structure, "field": suite_field, "bracket": suite_bracket,
    "connection": suite_connection, "curvature": suite_curvature, "reduction": suite_reduction,
}
NEEDS_FIELD = {"field", "connection", "curvature"}


def _parse_suites(value) -> list[str]:
    if value is None:
        return list(DEFAULT_SUITES)
    items = value if isinstance(value, list) else str(value).split(",")
    items = [s.strip() for s in items if s.strip()]
    if items == ["all"]:
        return list(SUITES)
    bad = [s for s in items if s not in SUITES]
    if bad:
        raise UsageError(f"unknown suite(s) {bad}; choose from {list(SUITES)}")
    return items


def run_verify(model: models.Model, suites: Sequence[str], samples: int, seed: int,
               tol: Optional[float] = None, log=None) -> Report:
    pts = model.sample(samples, seed)
    rep = Report(model.name)
    skipped = []
    for name in suites:
        if name in NEEDS_FIELD and model.field is None:
            skipped.append(name)
            continue
        t0 = time.perf_counter()
        try:
            sub = SUITE_FUNCS[name](model, pts, tol or SUITE_TOL[name], seed)
        except UsageError:
            raise
        except Exception as exc:  # a crashing suite is a failed suite
            sub = Report(model.name)
            sub.add("suite_error", ANCHORS["suite_error"], float("inf"), 0.0)
            sub.values["error"] = f"{type(exc).__name__}: {exc}"
        rep.extend(sub, prefix=name)
        if log is not None:
            log(f"{name}: {time.perf_counter() - t0:.2f} s")
    if skipped:
        rep.values["skipped"] = skipped
    rep.env.update({"version": __version__, "seed": seed, "samples": samples,
                    "suites": list(suites)})
    return rep


# -- reduction --------------------------------------------------------------------------
def reduction_report(instance: str, samples: int, seed: int, tol: Optional[float] = None,
                     theta: float = 0.5, f_expr: str = "t^3/3", h_expr: str = "sin(t)") -> Report:
    from . import reduction as rd
    tol = tol or SUITE_TOL["reduction"]
    if instance == "circle":
        inst = models.circle_reduction(theta)
        M, N = inst.manifold, inst.submanifold
        u = N.sample(samples, seed)
        rep = Report(f"{M.name} reduced along {N.name}")
        rep.extend(rd.verify_reduction_hypotheses(M, N, u, tol), prefix="hypotheses")
        red = rd.reduced_tensors(M, N, u, tol, strict=False)
        rep.extend(red.report, prefix="reduced")
        rep.values["theta"] = theta
        return rep
    if instance == "example52":
        M = models.example52_manifold()
        pts = M.sample(samples, seed)
        f = _t_function(M.chart, f_expr)
        h = _t_function(M.chart, h_expr)
        rep = Report(M.name)
        H = rd.hamiltonian_vector_field(M, f, pts, strict=False)
        rep.add("hamiltonian_residual", rd.ANCHORS["ham"], H.residual, tol)
        rep.add("hamiltonian_lie", rd.ANCHORS["ham_lie"], H.lie_residual, tol)
        rep.add("t_flow_form", ANCHORS["t_flow"],
                example52_field_residual(f, H.field, pts), tol)
        rep.extend(rd.poisson_checks(M, f, h, pts, tol), prefix="poisson")
        rep.values.update({"f": f_expr, "h": h_expr})
        return rep
    raise UsageError(f"unknown reduction instance {instance!r}; choose circle or example52")


def _t_function(chart, text: str) -> cc.TensorField:
    fn = compile_expression(text, ["t"])
    return cc.scalar_field(chart, lambda x: fn({"t": x[0] * x[1]}), name=text)


def example52_field_residual(f: cc.TensorField, X: cc.TensorField, pts) -> float:
    """|X - (-f'(t))(d3 + d4)| with f'(t) = d_1 f / x2."""
    df = cc.differential(f).values(pts)
    fp = df[:, 0] / pts[:, 1]
    expected = np.zeros_like(pts)
    expected[:, 2] = expected[:, 3] = -fp
    return float(np.max(np.abs(X.values(pts) - expected)))


# -- bracket evaluation ------------------------------------------------------------------
def bracket_operation(name: str, S: ParaHermitianStructure):
    ops = {
        "gamma": lambda X, Y: br.gamma_bracket(S.gamma, X, Y),
        "omega": lambda X, Y: br.omega_bracket(S, X, Y),
        "courant-L": lambda X, Y: br.courant_bracket_L(S, X, Y),
        "courant-Lbar": lambda X, Y: br.courant_bracket_Lbar(S, X, Y),
        "dorfman-L": lambda X, Y: br.dorfman_product_L(S, X, Y),
        "dorfman-Lbar": lambda X, Y: br.dorfman_product_Lbar(S, X, Y),
        "dorfman-omega": lambda X, Y: br.omega_product(S, X, Y),
        "dorfman-gamma": lambda X, Y: br.gamma_product(S.gamma, X, Y),
    }
    if name not in ops:
        raise UsageError(f"unknown bracket {name!r}; choose from {list(BRACKETS)}")
    return ops[name]


def _vector_from_text(chart: cc.Chart, text: str) -> cc.TensorField:
    try:
        entries = json.loads(text)
    except json.JSONDecodeError:
        entries = [e.strip() for e in text.split(",")]
    if not isinstance(entries, list) or len(entries) != chart.dim:
        raise UsageError(f"a vector field needs {chart.dim} components, got {text!r}")
    try:
        fn = array_function([str(e) for e in entries], chart.names)
    except ExpressionError as exc:
        raise UsageError(str(exc)) from None
    return cc.vector_field(chart, lambda x: [c + 0.0 * x[0] for c in fn(x)])


def _points_from_text(chart: cc.Chart, text: str) -> np.ndarray:
    try:
        pts = np.array([[float(v) for v in row.split(",")] for row in text.split(";")])
    except ValueError:
        raise UsageError(f"cannot parse points {text!r}") from None
    if pts.shape[-1] != chart.dim:
        raise UsageError(f"points need {chart.dim} coordinates")
    return pts


# -- commands -----------------------------------------------------------------------------
def cmd_verify(args, cfg, log) -> Report:
    model = _build_model(args, cfg)
    corrupt = _merged(args, cfg, "corrupt")
    if corrupt:
        model = corrupt_model(model, corrupt)
    samples, seed, tol = _common(args, cfg)
    suites = _parse_suites(_merged(args, cfg, "suite"))
    rep = run_verify(model, suites, samples, seed, tol, log)
    if corrupt:
        rep.env["corrupt"] = corrupt
    return rep


def _parse_box(value, dim: int):
    if value is None:
        return None
    if isinstance(value, str):
        try:
            value = json.loads(value)
        except json.JSONDecodeError:
            raise UsageError(f"--box must be JSON, e.g. [[0,1],[0,1]], got {value!r}") from None
    if len(value) == 2 and all(isinstance(v, (int, float)) for v in value):
        value = [value] * dim
    return [tuple(map(float, side)) for side in value]


def cmd_action(args, cfg, log) -> Report:
    model = _build_model(args, cfg)
    if model.field is None:
        raise UsageError(f"{model.name} carries no field")
    acfg = dict(cfg.get("action", {}))
    for key in ("nodes", "rule", "phi", "box"):
        if getattr(args, key, None) is not None:
            acfg[key] = getattr(args, key)
    if getattr(args, "mc_samples", None) is not None:
        acfg["samples"] = args.mc_samples
    samples, seed, _ = _common(args, cfg)
    phi = acfg.get("phi")
    if isinstance(phi, str):
        try:
            phi = float(phi)
        except ValueError:
            fn = compile_expression(phi, model.chart.names)
            names = model.chart.names
            phi = cc.scalar_field(model.chart, lambda x: fn(dict(zip(names, x))) + 0.0 * x[0],
                                  name=acfg["phi"])
    try:
        config = ActionConfig(box=_parse_box(acfg.get("box"), model.structure.dim),
                              nodes=int(acfg.get("nodes", 8)),
                              rule=acfg.get("rule", "gauss-legendre"), phi=phi,
                              samples=int(acfg.get("samples", 100_000)), seed=seed)
        config.validate(model.structure.dim)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    t0 = time.perf_counter()
    res = action(model.field, config)
    log(f"action: {time.perf_counter() - t0:.2f} s, {res.evaluations} evaluations")
    rep = Report(model.name)
    rep.values["action"] = res.to_dict()
    box = config.validate(model.structure.dim)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    pts = lo + (hi - lo) * np.random.default_rng(seed).random((samples, len(box)))
    pts = pts[model.chart.contains(pts)]
    st = modified_scalar(model.field, canonical_connection(model.field)).values(pts)
    rep.values["sigma_samples"] = {"points": pts, "values": st}
    rep.add("finite", ANCHORS["finite"],
            0.0 if np.isfinite(res.value) else float("inf"), 0.0)
    if res.converged is not None:
        rep.add("converged", ANCHORS["converged"],
                0.0 if res.converged else 1.0, 0.5)
    rep.env.update({"version": __version__, "seed": seed})
    return rep


def cmd_curvature(args, cfg, log) -> Report:
    model = _build_model(args, cfg)
    if model.field is None:
        raise UsageError(f"{model.name} carries no field")
    samples, seed, tol = _common(args, cfg)
    pts = model.sample(samples, seed)
    conn = canonical_connection(model.field)
    rep = curvature_checks(model.field, conn, pts, tol or SUITE_TOL["curvature"], seed=seed)
    rep.model = model.name
    rep.values["points"] = [curvature_report(model.field, conn, p).to_dict() for p in pts]
    csv_path = getattr(args, "csv", None)
    if csv_path:
        st = modified_scalar(model.field, conn).values(pts)
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(model.chart.names) + ["sigma"])
            for p, s in zip(pts, st):
                w.writerow([repr(float(v)) for v in p] + [repr(float(s))])
    rep.env.update({"version": __version__, "seed": seed, "samples": samples})
    return rep


def cmd_bracket(args, cfg, log) -> Report:
    model = _build_model(args, cfg)
    S = model.structure
    if args.X is None or args.Y is None:
        raise UsageError("bracket needs --X and --Y")
    X = _vector_from_text(model.chart, args.X)
    Y = _vector_from_text(model.chart, args.Y)
    op = bracket_operation(args.bracket, S)
    samples, seed, _ = _common(args, cfg)
    pts = _points_from_text(model.chart, args.points) if args.points else model.sample(samples, seed)
    try:
        value = op(X, Y).values(pts)
        swapped = op(Y, X).values(pts)
    except ExpressionError as exc:
        raise UsageError(str(exc)) from None
    rep = Report(model.name)
    rep.values.update({"bracket": args.bracket, "X": args.X, "Y": args.Y,
                       "points": pts, "components": value})
    if not args.bracket.startswith("dorfman"):
        rep.add("antisymmetry", br.ANCHORS["antisym"], float(np.max(np.abs(value + swapped))), 1e-12)
    rep.env.update({"version": __version__, "seed": seed})
    return rep


def cmd_reduce(args, cfg, log) -> Report:
    samples, seed, tol = _common(args, cfg)
    instance = args.instance or cfg.get("instance", "circle")
    try:
        rep = reduction_report(instance, samples, seed, tol, theta=args.theta,
                               f_expr=args.f, h_expr=args.h)
    except ExpressionError as exc:
        raise UsageError(str(exc)) from None
    rep.env.update({"version": __version__, "seed": seed, "samples": samples})
    return rep


# -- argument parsing ---------------------------------------------------------------------
def _add_common(p: argparse.ArgumentParser, model: bool = True) -> None:
    if model:
        p.add_argument("model_pos", nargs="?", metavar="MODEL", help="model name")
        p.add_argument("--model", dest="model_opt", help="model name")
        p.add_argument("--n", type=int, help="half dimension (base dimension for tangent-sasaki)")
        p.add_argument("--algebra", help="Lie algebra of group-double")
    p.add_argument("--samples", type=int, help="number of sample points (default 10)")
    p.add_argument("--seed", type=int, help="seed for all random sampling (default 0)")
    p.add_argument("--tol", type=float, help="tolerance overriding the suite defaults")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.add_argument("--config", help="JSON config file; flags override its entries")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="paraherm", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"paraherm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run verification suites on a model")
    _add_common(p)
    p.add_argument("--suite", help=f"comma-separated subset of {','.join(SUITES)} or 'all'")
    p.add_argument("--corrupt", choices=CORRUPTIONS, help="perturb F, gamma or g (negative control)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("action", help="action of the model's field over a box")
    _add_common(p)
    p.add_argument("--nodes", type=int, help="Gauss-Legendre nodes per axis (default 8)")
    p.add_argument("--rule", choices=("gauss-legendre", "monte-carlo"))
    p.add_argument("--box", help="JSON box, [[lo,hi],...] or one [lo,hi] for every axis")
    p.add_argument("--phi", help="dilation scalar: a constant or an expression in the coordinates")
    p.add_argument("--mc-samples", type=int, dest="mc_samples", help="Monte-Carlo sample count")
    p.set_defaults(func=cmd_action)

    p = sub.add_parser("curvature", help="modified curvature invariants at sample points")
    _add_common(p)
    p.add_argument("--csv", help="also write points and the modified scalar as CSV")
    p.set_defaults(func=cmd_curvature)

    p = sub.add_parser("bracket", help="evaluate a bracket of two vector fields")
    _add_common(p)
    p.add_argument("--bracket", default="gamma", help=f"one of {', '.join(BRACKETS)}")
    p.add_argument("--X", help="components, comma-separated or a JSON list of expressions")
    p.add_argument("--Y", help="components, comma-separated or a JSON list of expressions")
    p.add_argument("--points", help="points as 'a,b,c,d;e,f,g,h' (default: random samples)")
    p.set_defaults(func=cmd_bracket)

    p = sub.add_parser("reduce", help="reduction instances: circle or example52")
    _add_common(p, model=False)
    p.add_argument("instance", nargs="?", choices=("circle", "example52"))
    p.add_argument("--theta", type=float, default=0.5, help="level of the circle reduction")
    p.add_argument("--f", default="t^3/3", help="example52: f as an expression in t = x1 x2")
    p.add_argument("--h", default="sin(t)", help="example52: h as an expression in t = x1 x2")
    p.set_defaults(func=cmd_reduce)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if hasattr(args, "model_pos"):
        if args.model_pos and args.model_opt and args.model_pos != args.model_opt:
            parser.error("model given twice with different values")
        args.model = args.model_pos or args.model_opt
    log = lambda msg: print(msg, file=sys.stderr)
    try:
        cfg = _load_config(args.config)
        t0 = time.perf_counter()
        rep = args.func(args, cfg, log)
        log(f"total: {time.perf_counter() - t0:.2f} s")
    except UsageError as exc:
        print(f"paraherm: error: {exc}", file=sys.stderr)
        return 2
    text = rep.to_json()
    out = _merged(args, cfg, "out")
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
