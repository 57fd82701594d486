"""Scenario runner and ``verify`` command line entry point.

A scenario fixes an operator, the geometry and twist inputs (explicit or
drawn from a seeded generator) and tolerances.  Running it evaluates the
boundary and/or interior densities, compares them block by block against
the transcribed closed forms and records disagreements as findings.  A
scenario fails only when a structural check fails: case aI must vanish,
the geometry-only specialization must match, and the two interior paths
must agree.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any

import numpy as np

from .boundary import (
    boundary_density,
    paper_boundary_closed_form,
    paper_case_values,
)
from .clifford import TwistData
from .errors import EngineError
from .geometry import MetricJet, build_metric, normal_coordinate_coeffs, random_curvature_tensor
from .interior import (
    DENSITY_FACTOR,
    dirac_closed_form_blocks,
    endomorphism_E,
    engine_conformal_fit,
    interior_density,
    signature_closed_form_blocks,
)
from .jetring import VARIABLES, X_VARS, Jet, JetMat

REPORT_SCHEMA = "ncresidue-report/1"
CONFIG_SCHEMA = "ncresidue-config/1"
OPERATORS = ("dirac", "signature")
MODES = ("boundary", "interior", "both")

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3


class ConfigError(Exception):
    """Unreadable or malformed configuration."""


@dataclass
class Tolerances:
    match: float = 1e-9
    cross_path: float = 1e-8


@dataclass
class Scenario:
    """One verification run.

    ``h_prime0``, ``h_double_prime0``, ``f_jet``, ``twist`` and ``curvature``
    accept ``"random"``; ``f_jet`` also accepts ``"one"`` or a mapping from
    monomials (``""``, ``"x4"``, ``"x1*x2"``) to Taylor coefficients;
    ``twist`` accepts ``"zero"`` or a mapping with constant ``phi``,
    ``omega_f``, ``sigma_f`` matrices; ``curvature`` accepts ``"flat"`` or
    ``{"sphere_radius": r}``.
    """

    operator: str
    mode: str = "both"
    fiber_dim: int = 1
    seed: int = 0
    h_prime0: Any = "random"
    h_double_prime0: Any = "random"
    f_jet: Any = "random"
    twist: Any = "random"
    curvature: Any = "random"
    name: str = ""
    tolerances: Tolerances = field(default_factory=Tolerances)


# ---------------------------------------------------------------------------
# input generation


def _complex_square(rng: np.random.Generator, shape) -> np.ndarray:
    """Entries uniform in the complex unit square, scaled by 0.5."""
    return 0.5 * (rng.uniform(0.0, 1.0, shape) + 1j * rng.uniform(0.0, 1.0, shape))


def _random_fiber_jet(rng: np.random.Generator, k: int, skew: bool = False) -> JetMat:
    """Constant value plus first order x-dependence."""
    coeffs = np.zeros((len(Jet.constant(0.0).coeffs), k, k), dtype=complex)
    coeffs[0] = _complex_square(rng, (k, k))
    for i, v in enumerate(X_VARS):
        coeffs[1 + VARIABLES.index(v)] = _complex_square(rng, (k, k))
    if skew:
        coeffs = 0.5 * (coeffs - coeffs.conj().transpose(0, 2, 1))
    return JetMat(coeffs)


def _random_f(rng: np.random.Generator) -> Jet:
    terms = {(): rng.uniform(0.5, 1.5)}
    for v in X_VARS:
        terms[(v,)] = rng.uniform(-0.5, 0.5)
    for i, a in enumerate(X_VARS):
        for b in X_VARS[i:]:
            terms[(a, b)] = rng.uniform(-0.5, 0.5)
    return Jet.from_terms(terms)


def _parse_f(spec) -> Jet:
    if spec == "one":
        return Jet.constant(1.0)
    if not isinstance(spec, dict):
        raise ConfigError("f_jet must be 'random', 'one' or a monomial mapping")
    terms = {}
    for key, val in spec.items():
        names = tuple(n for n in key.split("*") if n)
        if any(n not in X_VARS for n in names) or len(names) > 2:
            raise ConfigError(f"bad f_jet monomial {key!r}")
        terms[names] = complex(val) if not isinstance(val, list) else complex(val[0], val[1])
    return Jet.from_terms(terms)


def _parse_matrix(m, k: int) -> np.ndarray:
    arr = np.asarray(m, dtype=float)
    if arr.shape == (k, k, 2):
        return arr[..., 0] + 1j * arr[..., 1]
    if arr.shape == (k, k):
        return arr.astype(complex)
    raise ConfigError(f"matrix entries must have shape ({k},{k}) or ({k},{k},2)")


def _parse_twist(spec, k: int, f: Jet) -> TwistData:
    if spec == "zero":
        return TwistData.trivial(k, f)
    if not isinstance(spec, dict):
        raise ConfigError("twist must be 'random', 'zero' or a mapping")
    parts = {}
    for name in ("phi", "omega_f", "sigma_f"):
        vals = spec.get(name)
        parts[name] = None if vals is None else [_parse_matrix(v, k) for v in vals]
    return TwistData.from_constants(k, parts["phi"], parts["omega_f"], parts["sigma_f"], f)


@dataclass
class ScenarioInputs:
    h_prime0: float
    h_double_prime0: float
    twist: TwistData
    riemann: np.ndarray


def scenario_inputs(s: Scenario) -> ScenarioInputs:
    """Resolve every ``"random"`` field with a generator seeded by ``s.seed``."""
    rng = np.random.default_rng(s.seed)
    hp = rng.uniform(-1.0, 1.0) if s.h_prime0 == "random" else float(s.h_prime0)
    hpp = rng.uniform(-1.0, 1.0) if s.h_double_prime0 == "random" else float(s.h_double_prime0)
    f = _random_f(rng) if s.f_jet == "random" else _parse_f(s.f_jet)
    k = int(s.fiber_dim)
    if s.twist == "random":
        if k < 1:
            twist = TwistData.trivial(k, f)
        else:
            phi = tuple(_random_fiber_jet(rng, k) for _ in range(4))
            omega = tuple(_random_fiber_jet(rng, k) for _ in range(4))
            sigma = tuple(_random_fiber_jet(rng, k, skew=True) for _ in range(4))
            twist = TwistData(k, phi, omega, sigma, f)
    else:
        twist = _parse_twist(s.twist, k, f)
    if s.curvature == "random":
        riemann = random_curvature_tensor(rng)
    elif s.curvature == "flat":
        riemann = np.zeros((4, 4, 4, 4))
    elif isinstance(s.curvature, dict) and "sphere_radius" in s.curvature:
        r = float(s.curvature["sphere_radius"])
        d = np.eye(4)
        riemann = (np.einsum("ik,jl->ijkl", d, d) - np.einsum("il,jk->ijkl", d, d)) / r**2
    else:
        raise ConfigError("curvature must be 'random', 'flat' or {'sphere_radius': r}")
    return ScenarioInputs(hp, hpp, twist, riemann)


# ---------------------------------------------------------------------------
# report helpers


def _num(value, provenance: str) -> dict:
    z = complex(value)
    return {"re": z.real, "im": z.imag, "provenance": provenance}


def _real(value: float, provenance: str) -> dict:
    return {"value": float(value), "provenance": provenance}


def _scale(*vals) -> float:
    return max([1.0] + [abs(complex(v)) for v in vals])


def _ratio(engine: complex, paper: complex, tol: float):
    if abs(paper) <= tol * _scale(paper, engine):
        return None
    return engine / paper


def _check(value: float, tolerance: float, label: str) -> dict:
    return {
        "label": label,
        "value": _real(value, "comparison"),
        "tolerance": tolerance,
        "pass": bool(value <= tolerance),
    }


def _matrix_json(m: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m)]


def _inputs_json(s: Scenario, inp: ScenarioInputs) -> dict:
    f = inp.twist.f
    tw = inp.twist
    return {
        "operator": s.operator,
        "mode": s.mode,
        "fiber_dim": s.fiber_dim,
        "seed": s.seed,
        "h_prime0": inp.h_prime0,
        "h_double_prime0": inp.h_double_prime0,
        "f": {
            "value": [f.value.real, f.value.imag],
            "gradient": [[complex(f.partial(v)).real, complex(f.partial(v)).imag] for v in X_VARS],
            "hessian": [[complex(f.partial(a, b)).real for b in X_VARS] for a in X_VARS],
        },
        "twist_at_base_point": {
            "phi": [_matrix_json(p.constant_part()) for p in tw.phi],
            "omega_f": [_matrix_json(p.constant_part()) for p in tw.omega_f],
            "sigma_f": [_matrix_json(p.constant_part()) for p in tw.sigma_f],
        },
        "riemann_nonzero": bool(np.any(inp.riemann)),
    }


def _finding(block: str, ref: str, engine: complex, paper: complex, tol: float, note: str, extra=None) -> dict:
    out = {
        "block": block,
        "ref": ref,
        "engine": _num(engine, "engine"),
        "paper": _num(paper, "paper-closed-form"),
        "abs_diff": _real(abs(engine - paper), "comparison"),
        "ratio": None if _ratio(engine, paper, tol) is None else _num(_ratio(engine, paper, tol), "comparison"),
        "note": note,
    }
    if extra:
        out.update(extra)
    return out


# ---------------------------------------------------------------------------
# boundary section


def _boundary_section(s: Scenario, inp: ScenarioInputs, checks: dict, findings: list) -> dict:
    tol = s.tolerances.match
    op = s.operator
    geom = build_metric("collar", inp.h_prime0, inp.h_double_prime0)
    tw = inp.twist
    unconformal = replace(tw, f=Jet.constant(1.0))
    bare = TwistData.trivial(tw.fiber_dim)
    full = boundary_density(op, geom, tw)
    twist_only = boundary_density(op, geom, unconformal)
    geom_only = boundary_density(op, geom, bare)
    om = full.sphere_measure

    paper_total = paper_boundary_closed_form(op, geom, tw, om)
    paper_twist = paper_boundary_closed_form(op, geom, unconformal, om)
    paper_cases = paper_case_values(op, geom, tw, 1.0, om)

    blocks_engine = {
        "geometry": geom_only.total,
        "twist": twist_only.total - geom_only.total,
        "conformal": full.total - twist_only.total,
    }
    blocks_paper = {"geometry": 0j, "twist": paper_twist, "conformal": paper_total - paper_twist}

    checks["boundary-aI-vanishes"] = _check(abs(full.per_case["aI"]), tol * _scale(*full.per_case.values()), "case aI")
    checks["boundary-geometry-block"] = _check(
        abs(blocks_engine["geometry"]), tol * _scale(*geom_only.per_case.values()), "untwisted unconformal total"
    )

    refs = {"twist": f"{op}-boundary-twist-term", "conformal": f"{op}-boundary-conformal-term"}
    for name in ("twist", "conformal"):
        e, p = blocks_engine[name], blocks_paper[name]
        if abs(e - p) > tol * _scale(e, p):
            findings.append(_finding(f"boundary-{name}", refs[name], e, p, tol, "block disagrees with transcription"))

    hp = inp.h_prime0
    l_fit = None
    if op == "signature" and abs(hp) > 1e-12:
        l_fit = (geom_only.per_case["aII"] / (-1.5 * math.pi * hp * om)).real
    for case, e in full.per_case.items():
        p = paper_cases[case]
        if abs(e - p) > tol * _scale(e, p):
            findings.append(_finding(f"boundary-case-{case}", f"{op}-boundary-case-{case}", e, p, tol, "case disagrees with transcription"))

    total = full.total
    diff = abs(total - paper_total)
    return {
        "sphere_measure": _real(om, "engine"),
        "cases": {
            c: {"engine": _num(full.per_case[c], "engine"), "paper": _num(paper_cases[c], "paper-closed-form")}
            for c in full.per_case
        },
        "blocks": {
            b: {"engine": _num(blocks_engine[b], "engine"), "paper": _num(blocks_paper[b], "paper-closed-form")}
            for b in blocks_engine
        },
        "l_fit": None if l_fit is None else _real(l_fit, "engine"),
        "total": _num(total, "engine"),
        "paper_total": _num(paper_total, "paper-closed-form"),
        "abs_diff": _real(diff, "comparison"),
        "match": bool(diff <= tol * _scale(total, paper_total)),
        "trace_identity": _bundle_rank(op, tw.fiber_dim),
        "convention_ratio": None if _ratio(total, paper_total, tol) is None else _num(_ratio(total, paper_total, tol), "comparison"),
    }


def _bundle_rank(op: str, fiber_dim: int) -> int:
    """Rank of the twisted bundle the operator acts on."""
    return (4 if op == "dirac" else 16) * fiber_dim


# ---------------------------------------------------------------------------
# interior section


def _interior_geometry(inp: ScenarioInputs) -> MetricJet:
    return build_metric("interior", quad_coeffs=normal_coordinate_coeffs(inp.riemann))


def _interior_section(s: Scenario, inp: ScenarioInputs, checks: dict, findings: list) -> dict:
    tol = s.tolerances.match
    op = s.operator
    geom = _interior_geometry(inp)
    tw = inp.twist
    d = interior_density(op, geom, tw)
    sc = d.s
    dim = d.module_dim
    bare = TwistData.trivial(tw.fiber_dim)
    tr_geom = complex(np.trace(endomorphism_E(op, geom, bare)))
    blocks_fn = dirac_closed_form_blocks if op == "dirac" else signature_closed_form_blocks
    paper = blocks_fn(geom, tw, sc)

    checks["interior-cross-path"] = _check(
        abs(d.engine_density - d.sigma4_path), s.tolerances.cross_path * _scale(d.engine_density), "direct E vs sigma_-4"
    )
    checks["interior-curvature-block"] = _check(
        abs(tr_geom - paper["curvature"]), tol * _scale(tr_geom, paper["curvature"]), "untwisted unconformal Tr E"
    )

    engine_blocks = {
        "curvature": tr_geom,
        "twist": d.blocks_engine["base"] - tr_geom,
        "conformal": d.blocks_engine["conformal"],
    }
    fit = engine_conformal_fit(op, geom, tw)
    for name in ("twist", "conformal"):
        e, p = engine_blocks[name], paper[name]
        if abs(e - p) > tol * _scale(e, p):
            extra = {}
            note = "block of Tr E disagrees with transcription"
            if name == "conformal":
                extra["engine_fit"] = _num(fit, "oracle")
            if name == "twist" and op == "signature":
                flipped = signature_closed_form_blocks(geom, tw, sc, quadratic_sign=-1.0)["twist"]
                extra["sign_flipped_variant"] = _num(flipped, "paper-closed-form")
            findings.append(_finding(f"interior-{name}", f"{op}-interior-trE-{name}", e, p, tol, note, extra))

    return {
        "scalar_curvature": _real(sc, "engine"),
        "module_dim": dim,
        "trE": _num(d.trE, "engine"),
        "density": {
            "engine": _num(d.engine_density, "engine"),
            "sigma4_path": _num(d.sigma4_path, "oracle"),
            "paper": _num(d.closed_form, "paper-closed-form"),
        },
        "sigma4_raw": _num(d.sigma4_raw, "oracle"),
        "blocks": {
            b: {"engine": _num(engine_blocks[b], "engine"), "paper": _num(paper[b], "paper-closed-form")}
            for b in engine_blocks
        },
        "conformal_fit": _num(fit, "oracle"),
        "density_factor": _real(DENSITY_FACTOR, "engine"),
    }


# ---------------------------------------------------------------------------
# scenarios and suites


def run_scenario(s: Scenario) -> dict:
    """Evaluate one scenario; module errors are reported, not raised."""
    report: dict = {
        "name": s.name,
        "operator": s.operator,
        "mode": s.mode,
        "seed": s.seed,
        "status": "ok",
        "error": None,
        "inputs": None,
        "cases": None,
        "total": None,
        "paper_total": None,
        "abs_diff": None,
        "convention_ratio": None,
        "boundary": None,
        "interior": None,
        "checks": {},
        "pass": False,
        "findings": [],
    }
    checks: dict = {}
    findings: list = []
    try:
        if s.operator not in OPERATORS:
            raise ConfigError(f"unknown operator {s.operator!r}")
        if s.mode not in MODES:
            raise ConfigError(f"unknown mode {s.mode!r}")
        inp = scenario_inputs(s)
        report["inputs"] = _inputs_json(s, inp)
        if s.mode in ("boundary", "both"):
            b = _boundary_section(s, inp, checks, findings)
            report["boundary"] = b
            for key in ("cases", "total", "paper_total", "abs_diff", "convention_ratio"):
                report[key] = b[key]
        if s.mode in ("interior", "both"):
            report["interior"] = _interior_section(s, inp, checks, findings)
    except (EngineError, ConfigError) as exc:
        report["status"] = "error"
        report["error"] = {"code": type(exc).__name__, "message": str(exc)}
    report["checks"] = checks
    report["findings"] = findings
    report["pass"] = report["status"] == "ok" and all(c["pass"] for c in checks.values())
    return report


def default_scenarios() -> list[Scenario]:
    return [
        Scenario("dirac", "both", 1, 0, 0.0, 0.0, "one", "zero", "flat", "trivial-dirac"),
        Scenario("signature", "both", 1, 0, 0.0, 0.0, "one", "zero", "flat", "trivial-signature"),
        Scenario("dirac", "both", 2, 7, name="dirac-k2-seed7"),
        Scenario("dirac", "boundary", 3, 5, name="dirac-k3-seed5"),
        Scenario("signature", "both", 1, 11, name="signature-k1-seed11"),
        Scenario("signature", "boundary", 2, 13, name="signature-k2-seed13"),
    ]


def _scenario_from_dict(d: dict, tol: Tolerances) -> Scenario:
    known = {f for f in Scenario.__dataclass_fields__ if f != "tolerances"}
    unknown = set(d) - known - {"tolerances"}
    if unknown:
        raise ConfigError(f"unknown scenario keys {sorted(unknown)}")
    if "operator" not in d:
        raise ConfigError("scenario needs an operator")
    t = Tolerances(**{**asdict(tol), **d.get("tolerances", {})})
    return Scenario(**{k: v for k, v in d.items() if k in known}, tolerances=t)


def load_config(path: str) -> tuple[list[Scenario], int]:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    try:
        tol = Tolerances(**cfg.get("tolerances", {}))
        scenarios = [_scenario_from_dict(d, tol) for d in cfg.get("scenarios", [])]
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if "scenarios" not in cfg:
        scenarios = [replace(sc, tolerances=tol) for sc in default_scenarios()]
    return scenarios, int(cfg.get("workers", 1))


def _uniform(vals: list[complex], rel: float = 1e-6) -> bool:
    return all(abs(x - vals[0]) <= rel * abs(vals[0]) for x in vals)


def convention_probe(reports: list[dict]) -> dict:
    """Per operator, whether the engine to closed-form ratio is the same everywhere.

    The ratio divided by ``Tr[id] / 4`` is probed as well, since a scalar
    factor multiplying the identity scales with the bundle rank.
    """
    out = {}
    for op in OPERATORS:
        rows = [
            (complex(r["convention_ratio"]["re"], r["convention_ratio"]["im"]), r["boundary"]["trace_identity"])
            for r in reports
            if r["operator"] == op and r.get("convention_ratio")
        ]
        if not rows:
            out[op] = None
            continue
        ratios = [x for x, _ in rows]
        per_rank = [4 * x / d for x, d in rows]
        out[op] = {
            "count": len(rows),
            "uniform": _uniform(ratios),
            "ratio": _num(ratios[0], "comparison") if _uniform(ratios) else None,
            "uniform_per_rank": _uniform(per_rank),
            "ratio_per_rank": _num(per_rank[0], "comparison") if _uniform(per_rank) else None,
        }
    return out


def run_suite(scenarios: list[Scenario], workers: int = 1) -> dict:
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(run_scenario, scenarios))
    else:
        reports = [run_scenario(s) for s in scenarios]
    return {
        "schema": REPORT_SCHEMA,
        "scenarios": reports,
        "convention_probe": convention_probe(reports),
        "summary": {
            "scenarios": len(reports),
            "passed": sum(r["pass"] for r in reports),
            "errored": sum(r["status"] == "error" for r in reports),
            "findings": sum(len(r["findings"]) for r in reports),
        },
        "pass": all(r["pass"] for r in reports),
    }


def write_report(report: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, ensure_ascii=False)
        fh.write("\n")


def _apply_overrides(scenarios: list[Scenario], args) -> list[Scenario]:
    out = []
    for i, sc in enumerate(scenarios):
        if args.operator and sc.operator != args.operator:
            continue
        if args.mode:
            sc = replace(sc, mode=args.mode)
        if args.seed is not None:
            sc = replace(sc, seed=args.seed + i)
        if args.tol is not None:
            sc = replace(sc, tolerances=Tolerances(args.tol, args.tol))
        out.append(sc)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="verify", description="Recompute residue densities and compare with closed forms.")
    p.add_argument("--config", help="JSON scenario file; the built-in suite is used when omitted")
    p.add_argument("--report", required=True, help="path of the JSON report to write")
    p.add_argument("--operator", choices=OPERATORS, help="keep only scenarios for this operator")
    p.add_argument("--mode", choices=MODES, help="override the mode of every scenario")
    p.add_argument("--seed", type=int, help="reseed scenarios as seed + position in the config")
    p.add_argument("--tol", type=float, help="override both match and cross-path tolerances")
    p.add_argument("--workers", type=int, help="number of worker processes")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            scenarios, workers = load_config(args.config)
        else:
            scenarios, workers = default_scenarios(), 1
        scenarios = _apply_overrides(scenarios, args)
        if args.workers is not None:
            workers = args.workers
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = run_suite(scenarios, max(1, workers))
        write_report(report, args.report)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any other failure is an internal error
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    for r in report["scenarios"]:
        status = "PASS" if r["pass"] else ("ERROR" if r["status"] == "error" else "FAIL")
        print(f"{status:5s} {r['name'] or r['operator']}: {len(r['findings'])} finding(s)")
    return EXIT_PASS if report["pass"] else EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
