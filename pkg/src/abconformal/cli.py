"""Scenario runner: ``abconformal verify <file>`` and ``abconformal catalog``.

A scenario is a JSON document naming a metric, a 1-form, a conformal field
family, a generator ``phi`` and optionally a deformation triple or a
projectively flat Randers model, plus the list of checks to run.  The run
report goes to stdout as JSON, a short summary to stderr.

Exit status: 0 when every check passes, 1 when some check fails, 2 for an
invalid scenario (schema, unknown identifier or violated model constraint).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from typing import Any, Optional

import jsonschema
import numpy as np

from . import __version__
from .catalog import (CATALOG, ConstraintError, FinslerMetric, ModelParams, PhiFunction, PHI_KINDS,
                      conformal_field, constant_curvature_metric, FAMILIES,
                      projective_pair, prop52_fields)
from .checks import (CheckReport, Samples, c_invariant_report, check_ab_system, check_closedness,
                     check_conformal_finsler, check_conformal_riemann, check_kang,
                     closed_conformal_residual, draw_samples, flow_check)
from .deformation import TRIPLE_KINDS, UVWTriple, b_squared, check_lemma41, xv_b_squared
from .geometry import ScalarField, VectorField, constant_oneform, euclidean_metric, lower
from .jets import DomainError
from .randers import (RandersModel, compact_case_quantities, flag_curvature_closed_form,
                      flag_curvature_projective, s_curvature_residual, tau0_identity_residual)

log = logging.getLogger(__name__)

SCENARIO_SCHEMA_ID = "abconformal.scenario/1"
REPORT_SCHEMA_ID = "abconformal.report/1"

METRIC_KINDS = ("euclidean", "cc_projective", "cc_conformal", "projective_pair", "prop52_randers")
ONE_FORM_KINDS = ("constant", "zero")

DEFAULT_TOLERANCE = {
    "riemann": 1e-9, "ab_system": 1e-9, "finsler": 1e-9, "kang": 5e-9, "flow": 1e-6,
    "c_invariant": 1e-8, "closed_conformal": 1e-9, "closedness": 1e-10, "lemma41": 1e-9,
    "xv_b2": 1e-9, "s_curvature": 1e-9, "flag_agreement": 1e-7, "delta_const": 1e-8,
    "tau0": 1e-9, "bounds": 1e-9, "c_consistency": 1e-9,
}
FIELD_CHECKS = ("riemann", "ab_system", "finsler", "kang", "flow", "c_invariant", "closed_conformal",
                "closedness", "lemma41", "xv_b2")
MODEL_CHECKS = ("s_curvature", "flag_agreement", "delta_const", "tau0", "bounds", "c_consistency")

_vec = {"type": "array", "items": {"type": "number"}}
_params = {
    "type": "object",
    "properties": {
        "lambda": {"type": "number"}, "mu": {"type": "number"}, "tau": {"type": "number"},
        "e": _vec, "gamma": _vec, "eta": _vec, "d": _vec,
        "Q": {"type": "array", "items": _vec},
    },
    "additionalProperties": False,
}

SCENARIO_SCHEMA: dict = {
    "type": "object",
    "required": ["schema", "n", "checks"],
    "properties": {
        "schema": {"const": SCENARIO_SCHEMA_ID},
        "name": {"type": "string"},
        "description": {"type": "string"},
        "n": {"type": "integer", "minimum": 1, "maximum": 8},
        "metric": {
            "type": "object", "required": ["kind"],
            "properties": {"kind": {"enum": list(METRIC_KINDS)}, "mu": {"type": "number"},
                           "lambda": {"type": "number"}, "e": _vec},
            "additionalProperties": False,
        },
        "one_form": {
            "type": "object", "required": ["kind"],
            "properties": {"kind": {"enum": list(ONE_FORM_KINDS)}, "b": _vec},
            "additionalProperties": False,
        },
        "vector_field": {
            "type": "object", "required": ["family"],
            "properties": {"family": {"enum": list(FAMILIES) + ["zero"]}, "params": _params},
            "additionalProperties": False,
        },
        "phi": {
            "type": "object", "required": ["kind"],
            "properties": {"kind": {"enum": list(PHI_KINDS)}, "k": {"type": "number"},
                           "eps": {"type": "number"}, "kappa": {"type": "number"},
                           "coeffs": _vec, "s_max": {"type": "number", "exclusiveMinimum": 0}},
            "additionalProperties": False,
        },
        "triple": {
            "type": "object", "required": ["kind"],
            "properties": {"kind": {"enum": list(TRIPLE_KINDS[:-1])}, "k1": {"type": "number"},
                           "k2": {"type": "number"}, "k3": {"type": "number"},
                           "initial": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
                           "t_max": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
            "additionalProperties": False,
        },
        "model": {
            "type": "object", "required": ["kind"],
            "properties": {"kind": {"const": "prop52"}, "lambda": {"type": "number"},
                           "mu": {"type": "number"}, "e": _vec},
            "additionalProperties": False,
        },
        "checks": {
            "type": "array", "minItems": 1,
            "items": {"oneOf": [
                {"enum": list(DEFAULT_TOLERANCE)},
                {"type": "object", "required": ["name"],
                 "properties": {"name": {"enum": list(DEFAULT_TOLERANCE)},
                                "tolerance": {"type": "number", "exclusiveMinimum": 0}},
                 "additionalProperties": False},
            ]},
        },
        "sampling": {
            "type": "object",
            "properties": {"count": {"type": "integer", "minimum": 1}, "seed": {"type": "integer"},
                           "radius": {"type": "number", "exclusiveMinimum": 0}},
            "additionalProperties": False,
        },
        "flow": {
            "type": "object",
            "properties": {"t_max": {"type": "number", "exclusiveMinimum": 0},
                           "steps": {"type": "integer", "minimum": 2},
                           "trajectories": {"type": "integer", "minimum": 1}},
            "additionalProperties": False,
        },
        "tolerance": {"type": "number", "exclusiveMinimum": 0},
    },
    "additionalProperties": False,
}


class ScenarioError(ValueError):
    """Invalid scenario; ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def validate_scenario(doc: Any) -> None:
    try:
        jsonschema.validate(doc, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as err:
        parts = [str(p) for p in err.absolute_path]
        if err.validator == "required" and isinstance(err.instance, dict):
            parts += [k for k in err.validator_value if k not in err.instance][:1]
        raise ScenarioError(".".join(parts) or "<root>", err.message) from None
    needs = {c if isinstance(c, str) else c["name"] for c in doc["checks"]}
    if needs & set(FIELD_CHECKS):
        for key in ("metric", "vector_field"):
            if key not in doc:
                raise ScenarioError(key, "required by the requested checks")
    if needs & {"finsler", "kang", "flow"} and "phi" not in doc:
        raise ScenarioError("phi", "required by the requested checks")
    if "lemma41" in needs and "triple" not in doc:
        raise ScenarioError("triple", "required by the lemma41 check")
    if needs & set(MODEL_CHECKS) and "model" not in doc:
        raise ScenarioError("model", "required by the requested checks")


# building objects ---------------------------------------------------------------

def _model_params(p: dict) -> ModelParams:
    return ModelParams(lam=p.get("lambda", 0.0), mu=p.get("mu", 0.0), tau=p.get("tau", 0.0),
                       e=p.get("e"), gamma=p.get("gamma"), eta=p.get("eta"), d=p.get("d"), Q=p.get("Q"))


@dataclass
class Scenario:
    """A validated scenario with its objects instantiated."""

    doc: dict
    n: int
    checks: list
    count: int
    seed: int
    radius: float
    tolerance: Optional[float]
    alpha: Any = None
    beta: Any = None
    mu: float = 0.0
    V: Any = None
    c: Any = None
    phi: Optional[PhiFunction] = None
    triple: Optional[UVWTriple] = None
    model: Optional[RandersModel] = None
    flow: dict = field(default_factory=dict)

    @property
    def F(self) -> FinslerMetric:
        return FinslerMetric(self.alpha, self.beta, self.phi)


def _check_len(path, v, n):
    if v is not None and len(v) != n:
        raise ScenarioError(path, f"expected {n} entries, got {len(v)}")


def build_scenario(doc: dict) -> Scenario:
    validate_scenario(doc)
    n = doc["n"]
    samp = doc.get("sampling", {})
    sc = Scenario(doc, n, list(doc["checks"]), samp.get("count", 200), samp.get("seed", 0),
                  samp.get("radius", 0.5), doc.get("tolerance"), flow=dict(doc.get("flow", {})))
    try:
        if "metric" in doc:
            m = doc["metric"]
            _check_len("metric.e", m.get("e"), n)
            kind, mu = m["kind"], float(m.get("mu", 0.0))
            sc.mu = mu
            if kind == "euclidean":
                sc.alpha = euclidean_metric(n)
            elif kind in ("cc_projective", "cc_conformal"):
                sc.alpha = constant_curvature_metric(mu, kind[3:], n)
            elif kind == "projective_pair":
                sc.alpha, sc.beta = projective_pair(m.get("lambda", 0.0), mu, m.get("e"), n)
            else:
                sc.alpha, sc.beta, _, _ = prop52_fields(m.get("lambda", 0.0), mu, m.get("e"), n)
        if "one_form" in doc:
            f = doc["one_form"]
            if f["kind"] == "constant":
                if "b" not in f:
                    raise ScenarioError("one_form.b", "required for a constant 1-form")
                _check_len("one_form.b", f["b"], n)
                sc.beta = constant_oneform(f["b"])
            else:
                sc.beta = constant_oneform(np.zeros(n))
        elif sc.alpha is not None and sc.beta is None:
            sc.beta = constant_oneform(np.zeros(n))
        if "vector_field" in doc:
            v = doc["vector_field"]
            p = v.get("params", {})
            for key in ("e", "gamma", "eta", "d"):
                _check_len(f"vector_field.params.{key}", p.get(key), n)
            if "Q" in p and (len(p["Q"]) != n or any(len(r) != n for r in p["Q"])):
                raise ScenarioError("vector_field.params.Q", f"expected an {n}x{n} matrix")
            if v["family"] == "zero":
                sc.V = VectorField(n, lambda x: [0.0] * n, name="zero")
                sc.c = ScalarField(n, lambda x: 0.0, name="zero")
            else:
                params = _model_params(p)
                sc.V, sc.c = conformal_field(v["family"], params, n)
                if "mu" in p:
                    sc.mu = float(params.mu)
        if "phi" in doc:
            ph = dict(doc["phi"])
            if "coeffs" in ph:
                ph["coeffs"] = tuple(ph["coeffs"])
            sc.phi = PhiFunction(**ph)
        if "triple" in doc:
            sc.triple = _build_triple(doc["triple"])
        if "model" in doc:
            md = doc["model"]
            _check_len("model.e", md.get("e"), n)
            sc.model = RandersModel(md.get("lambda", 0.0), md.get("mu", 0.0), md.get("e"), n)
    except ConstraintError as err:
        raise ScenarioError("vector_field.params", str(err)) from None
    except DomainError as err:
        raise ScenarioError("<root>", str(err)) from None
    except ValueError as err:
        if isinstance(err, ScenarioError):
            raise
        raise ScenarioError("<root>", str(err)) from None
    return sc


def _build_triple(t: dict) -> UVWTriple:
    t_max = t.get("t_max", 0.81)
    k = [float(t.get(key, 0.0)) for key in ("k1", "k2", "k3")]
    try:
        if t["kind"] == "closed_form":
            return UVWTriple.closed_form(*k, t_max=t_max)
        if t["kind"] == "ode":
            return UVWTriple.ode(*k, initial=t.get("initial"), t_max=t_max)
        if t["kind"] == "navigation":
            return UVWTriple.navigation(t_max)
        return UVWTriple.randers_projective(t_max)
    except DomainError as err:
        raise ScenarioError("triple", str(err)) from None


# running ----------------------------------------------------------------------

def _samples(sc: Scenario, domain, metric=None, accept=None) -> Samples:
    return draw_samples(sc.n, sc.count, sc.seed, sc.radius, domain, metric, accept)


def _field_samples(sc: Scenario) -> Samples:
    dom = sc.alpha.domain.intersect(sc.beta.domain).intersect(sc.V.domain)
    return _samples(sc, dom, sc.alpha)


def _run_flow(sc: Scenario, tol: float) -> CheckReport:
    S = _field_samples(sc)
    t_max = sc.flow.get("t_max", 1.0)
    grid = np.linspace(0.0, t_max, sc.flow.get("steps", 11))
    k = min(sc.flow.get("trajectories", 5), len(S))
    F = sc.F
    reps = [flow_check(F, sc.V, sc.c, S.x[i], S.y[i], grid, tolerance=tol) for i in range(k)]
    return CheckReport.from_residuals("flow", [r.max_residual for r in reps], tol, sc.seed,
                                      {"t_max": t_max, "steps": len(grid),
                                       "truncated": [r.details["truncated"] for r in reps]})


def _model_samples(sc: Scenario) -> Samples:
    m = sc.model
    return _samples(sc, m.domain, m.alpha, accept=lambda x, y: m.F(x, y) > 0)


def _run_one(sc: Scenario, name: str, tol: float) -> list[CheckReport]:
    if name in FIELD_CHECKS:
        if name == "flow":
            return [_run_flow(sc, tol)]
        S = _field_samples(sc)
        if name == "riemann":
            return [check_conformal_riemann(sc.alpha, sc.V, sc.c, S, tol)]
        if name == "ab_system":
            return [check_ab_system(sc.alpha, sc.beta, sc.V, sc.c, S, tol)]
        if name == "finsler":
            return [check_conformal_finsler(sc.F, sc.V, sc.c, S, tol)]
        if name == "kang":
            return [check_kang(sc.alpha, sc.beta, sc.phi, sc.V, sc.c, S, tol)]
        if name == "c_invariant":
            return [c_invariant_report(sc.V, sc.c, sc.mu, sc.alpha, S, tol)]
        if name == "closed_conformal":
            return [closed_conformal_residual(sc.c, sc.mu, sc.alpha, S, tol)]
        if name == "closedness":
            return [check_closedness(lower(sc.V, sc.alpha), S, tol)]
        if name == "xv_b2":
            return [CheckReport.from_residuals("xv_b2", xv_b_squared(sc.alpha, sc.beta, sc.V, S.x), tol, S.seed)]
        t_max = sc.triple.t_max
        S = _samples(sc, sc.alpha.domain.intersect(sc.beta.domain), sc.alpha,
                     accept=lambda x, y: b_squared(sc.alpha, sc.beta, x) < t_max)
        before, after = check_lemma41(sc.alpha, sc.beta, sc.V, sc.c, sc.triple, S, (tol, 10 * tol))
        return [before, after]

    m = sc.model
    S = _model_samples(sc)
    x, y = S.x, S.y
    if name == "s_curvature":
        r = s_curvature_residual(m.alpha, m.beta, m.tau, x)
    elif name == "flag_agreement":
        Kc = flag_curvature_closed_form(m, x, y)
        Kp = flag_curvature_projective(m.alpha, m.beta, x, y)
        r = np.abs(Kc - Kp) / np.maximum(np.abs(Kc), 1e-12)
    elif name == "delta_const":
        r = m.delta_variation(x)
    elif name == "tau0":
        r = tau0_identity_residual(m, x, y)
    elif name == "c_consistency":
        r = m.c(x) - m.c_from_tau(x)
    else:
        q = compact_case_quantities(m, x, y)
        r = np.maximum(0.0, -q.bound_slack())
    return [CheckReport.from_residuals(name, r, tol, S.seed)]


def run_scenario(sc: Scenario, only: Optional[list] = None, tolerance: Optional[float] = None) -> dict:
    """Run every check of ``sc`` (or those in ``only``) and return the run report."""
    start = time.perf_counter()
    reports = []
    for entry in sc.checks:
        name = entry if isinstance(entry, str) else entry["name"]
        if only and name not in only:
            continue
        tol = tolerance or (entry.get("tolerance") if isinstance(entry, dict) else None) \
            or sc.tolerance or DEFAULT_TOLERANCE[name]
        try:
            reports.extend(_run_one(sc, name, tol))
        except (DomainError, RuntimeError, ValueError, np.linalg.LinAlgError) as err:
            log.warning("check %s failed with %s", name, err)
            reports.append(CheckReport(name, 0, sc.seed, tol, [], float("nan"), float("nan"), False,
                                       {"error": f"{type(err).__name__}: {err}"}))
    return {
        "schema": REPORT_SCHEMA_ID,
        "scenario": sc.doc,
        "checks": [r.to_dict() for r in reports],
        "passed": bool(reports) and all(r.passed for r in reports),
        "wall_time": time.perf_counter() - start,
        "version": __version__,
    }


def load_scenario(path: str, samples: Optional[int] = None, seed: Optional[int] = None) -> Scenario:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as err:
        raise ScenarioError("<file>", f"invalid JSON: {err}") from None
    except OSError as err:
        raise ScenarioError("<file>", str(err)) from None
    if samples is not None or seed is not None:
        doc = json.loads(json.dumps(doc))
        sampling = doc.setdefault("sampling", {})
        if samples is not None:
            sampling["count"] = samples
        if seed is not None:
            sampling["seed"] = seed
    return build_scenario(doc)


def list_catalog(out=None) -> None:
    out = out or sys.stdout
    width = max(len(k) for k in CATALOG)
    out.write(f"{'identifier':<{width}}  {'category':<16}  parameters\n")
    for key in sorted(CATALOG):
        cat, params = CATALOG[key]
        out.write(f"{key:<{width}}  {cat:<16}  {params}\n")


def main(argv: Optional[list] = None) -> int:
    parser = argparse.ArgumentParser(prog="abconformal", description="Conformal vector field checks for (alpha,beta)-metrics")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("verify", help="run the checks of a scenario file")
    p.add_argument("file")
    p.add_argument("--tolerance", type=float)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--check", action="append", help="run only this check (repeatable)")
    sub.add_parser("catalog", help="list model identifiers")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    if args.command == "catalog":
        list_catalog()
        return 0
    try:
        if args.tolerance is not None and not args.tolerance > 0:
            raise ScenarioError("--tolerance", "must be > 0")
        if args.samples is not None and args.samples < 1:
            raise ScenarioError("--samples", "must be >= 1")
        sc = load_scenario(args.file, args.samples, args.seed)
        if args.check:
            names = {c if isinstance(c, str) else c["name"] for c in sc.checks}
            unknown = [c for c in args.check if c not in names]
            if unknown:
                raise ScenarioError("--check", f"not in scenario: {', '.join(unknown)}")
    except ScenarioError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    report = run_scenario(sc, args.check, args.tolerance)
    json.dump(report, sys.stdout, indent=1)
    sys.stdout.write("\n")
    for r in report["checks"]:
        print(CheckReport.from_dict(r).summary(), file=sys.stderr)
    print("overall: " + ("PASS" if report["passed"] else "FAIL"), file=sys.stderr)
    return 0 if report["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
