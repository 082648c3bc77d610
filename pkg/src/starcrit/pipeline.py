"""End-to-end runs over an ``(eps_k, eta_k)`` schedule, one record per ``k``.

Each stage runs under :func:`_stage`, which stores either its result or the
error it raised, so a failing stage never hides the diagnostics of the others.
Clause a) counts the critical points of the computed solution, clause b) is the
flat star check about the origin together with the geodesic star check of the
kernel samples, and clause c) asks the density-weighted defect ratio to fall
along ``k``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import RunConfig
from .elliptic_solver import count_solution_critical_points, discretize, newton_solve
from .errors import DomainError, NonConvergenceError, StarcritError
from .expr import builtin_nonlinearity
from .harmonic_profile import HarmonicProfile, find_axis_critical_points, monomial_coefficients
from .manifold_charts import (
    ChartedManifold,
    calibrate_density,
    calibrate_metric,
    calibrate_operator,
    calibrate_transition,
    manifold_measure_ratio,
    verify_geodesic_star,
)
from .star_geometry import KernelRegion, choose_A0, loglog_slope, measure_ratio, sample_kernel, strictly_decreasing
from .torsion_domain import (
    StarDomain,
    TorsionField,
    check_epsilon_admissible,
    count_superlevel_components,
    find_critical_points,
    poincare_hopf_check,
    verify_transversality,
)

ETA_RETRIES = 5


def _stage(record: dict, name: str, fn, *args, **kwargs):
    try:
        out = fn(*args, **kwargs)
    except (StarcritError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        record["errors"][name] = f"{type(exc).__name__}: {exc}"
        return None
    return out


def build_manifold(cfg: RunConfig) -> ChartedManifold:
    kind = cfg.manifold["kind"]
    if kind == "euclidean":
        return ChartedManifold.euclidean(cfg.d)
    default = 1.0 if kind == "sphere" else -1.0
    return getattr(ChartedManifold, kind)(cfg.d, float(cfg.manifold.get("kappa", default)))


def build_field(cfg: RunConfig, eps: float) -> TorsionField:
    return TorsionField.build(cfg.n, cfg.d, eps, cfg.a)


def _cp_rows(points):
    return [c.to_dict() for c in points]


# ------------------------------------------------------------------ stages


def profile_report(cfg: RunConfig) -> dict:
    prof = HarmonicProfile.from_points(cfg.a) if cfg.a else HarmonicProfile.default(cfg.n)
    axis = find_axis_critical_points(prof)
    return {
        "a": list(prof.a),
        "coefficients_in_z2": list(prof.b),
        "monomials": {f"x1^{i} x2^{j}": str(c) for (i, j), c in sorted(monomial_coefficients(prof).items())},
        "axis_maxima": list(axis.maxima),
        "axis_minima": list(axis.minima),
    }


def domain_record(cfg: RunConfig, k: int, eps: float) -> dict:
    rec: dict = {"k": k, "eps": eps, "errors": {}}
    samples = cfg.boundary_samples * cfg.density()
    field = build_field(cfg, eps)
    dom = StarDomain(field)
    adm = _stage(rec, "admissibility", check_epsilon_admissible, field, samples)
    rec["admissibility"] = adm.to_dict() if adm is not None else None
    cps = _stage(rec, "critical_points", find_critical_points, dom)
    rec["critical_points"] = _cp_rows(cps) if cps else None
    if cps:
        rec["poincare_hopf"] = _stage(rec, "poincare_hopf", poincare_hopf_check, cps, cfg.d)
    rec["components"] = _stage(rec, "components", count_superlevel_components, dom)
    return rec


def kernel_record(cfg: RunConfig, k: int, eps: float) -> dict:
    rec: dict = {"k": k, "eps": eps, "errors": {}}
    dom = StarDomain(build_field(cfg, eps))
    A0 = _choose(cfg, rec, dom)
    rec["A0"] = A0
    if A0 is not None:
        est = _stage(rec, "measure", measure_ratio, dom, KernelRegion(dom.field, A0), "auto",
                     cfg.samples * cfg.density(), cfg.seed + k)
        rec["ratio"] = est.to_dict() if est is not None else None
    return rec


def _choose(cfg, rec, dom):
    if cfg.A0 != "auto":
        return float(cfg.A0)
    ch = _stage(rec, "choose_A0", choose_A0, dom, 200 * cfg.density(), cfg.boundary_samples * cfg.density(),
                cfg.seed)
    return None if ch is None else ch.A0


def manifold_report(cfg: RunConfig) -> dict:
    m = build_manifold(cfg)
    out: dict = {"kind": m.kind, "d": m.d, "kappa": m.kappa, "errors": {}}
    if m.kind == "euclidean":
        return out
    etas = (0.04, 0.02, 0.01)
    h = _stage(out, "metric", calibrate_metric, m, etas)
    rho = _stage(out, "density", calibrate_density, m, etas)
    out["metric"] = h.to_dict() if h else None
    out["density"] = rho.to_dict() if rho else None
    out["operator"] = _stage(out, "operator", calibrate_operator, m, etas)
    xi = np.eye(m.d)[0]
    out["transition"] = _stage(out, "transition", calibrate_transition, m, xi, etas)
    return out


def _solve_with_halving(cfg, rec, gd, m, nl, eta):
    """Newton at ``eta``, halving up to ``ETA_RETRIES`` times when it fails or leaves the chart."""
    tried = []
    for _ in range(ETA_RETRIES + 1):
        try:
            sol = newton_solve(gd, m, nl, eta)
        except (NonConvergenceError, DomainError) as exc:
            tried.append({"eta": eta, "error": f"{type(exc).__name__}: {exc}"})
            eta *= 0.5
            continue
        rec["eta_attempts"] = tried
        return sol
    rec["eta_attempts"] = tried
    raise NonConvergenceError(f"no eta in the halving sequence converged (last tried {2 * eta:g})")


def solve_record(cfg: RunConfig, k: int, eps: float, eta: float) -> dict:
    rec: dict = {"k": k, "eps": eps, "eta_schedule": eta, "eta": None, "errors": {}}
    m = build_manifold(cfg)
    nl = builtin_nonlinearity(cfg.nonlinearity, cfg.d)
    dom = StarDomain(build_field(cfg, eps))
    gd = _stage(rec, "discretize", discretize, dom, cfg.h / (2 if cfg.strict else 1))
    if gd is None:
        return rec
    sol = _stage(rec, "solve", _solve_with_halving, cfg, rec, gd, m, nl, eta)
    if sol is None:
        return rec
    rec["eta"] = sol.eta
    rec["solution"] = sol.to_dict()
    cps = _stage(rec, "solution_critical_points", count_solution_critical_points, sol)
    rec["solution_critical_points"] = _cp_rows(cps) if cps else None
    return rec


def theorem_record(cfg: RunConfig, k: int, eps: float, eta: float) -> dict:
    """Every stage for one ``k``; clause flags are filled in by :func:`run_pipeline`."""
    rec = domain_record(cfg, k, eps)
    rec["eta_schedule"] = eta
    rec["eta"] = eta
    dens = cfg.density()
    m = build_manifold(cfg)
    field = build_field(cfg, eps)
    dom = StarDomain(field)

    if cfg.solver:
        sol = solve_record(cfg, k, eps, eta)
        rec["errors"].update(sol.pop("errors"))
        rec.update({key: v for key, v in sol.items() if key not in ("k", "eps")})
        eta = rec["eta"] if rec["eta"] is not None else eta

    A0 = _choose(cfg, rec, dom)
    rec["A0"] = A0
    tr = _stage(rec, "transversality", verify_transversality, dom, cfg.boundary_samples * dens)
    rec["transversality"] = tr.to_dict() if tr else None
    if A0 is not None:
        kernel = KernelRegion(field, A0)
        xis = _stage(rec, "kernel_samples", sample_kernel, dom, kernel, cfg.kernel_points * dens, cfg.seed + k)
        if xis is not None and len(xis):
            gs = _stage(rec, "geodesic_star", verify_geodesic_star, m, dom, kernel, eta, xis,
                        cfg.boundary_samples * dens)
            rec["geodesic_star"] = None if gs is None else {
                "passed": gs.passed,
                "min_margin": float(np.min(gs.margins)),
                "min_flat_margin": float(np.min(gs.flat_margins)),
                "worst_xi": gs.worst_xi,
                "deviation": gs.deviation,
                "points": len(xis),
                "rule": "margin >= flat margin / 2",
            }
            if m.kind != "euclidean":
                far = xis[int(np.argmax(np.linalg.norm(xis, axis=1)))]
                rec["transition"] = _stage(rec, "transition", calibrate_transition, m, far,
                                           (4 * eta, 2 * eta, eta))
        est = _stage(rec, "manifold_measure", manifold_measure_ratio, m, dom, kernel, eta, "auto",
                     cfg.samples * dens, cfg.seed + k)
        rec["manifold_ratio"] = est.to_dict() if est else None
    return rec


# ------------------------------------------------------------------ clauses


def _clause_a(rec, cfg):
    key = "solution_critical_points" if cfg.solver else "critical_points"
    pts = rec.get(key)
    if not pts:
        return {"passed": False, "source": key, "reason": rec["errors"].get(key, "no critical points")}
    kinds = [p["kind"] for p in pts]
    weakest = min(min(abs(e) for e in p["eigenvalues"]) for p in pts)
    tol = 1e-3 * rec["eps"]
    ok = (
        len(pts) == 2 * cfg.n - 1
        and kinds.count("maximum") == cfg.n
        and kinds.count("saddle") == cfg.n - 1
        and weakest >= tol
    )
    return {"passed": bool(ok), "source": key, "count": len(pts), "maxima": kinds.count("maximum"),
            "saddles": kinds.count("saddle"), "min_abs_eigenvalue": weakest, "degenerate_tol": tol}


def _clause_b(rec):
    tr, gs = rec.get("transversality"), rec.get("geodesic_star")
    ok = bool(tr and tr["passed"] and gs and gs["passed"])
    return {"passed": ok, "transversality": bool(tr and tr["passed"]), "geodesic_star": bool(gs and gs["passed"])}


def _clause_c(records):
    vals = [(r["k"], r.get("manifold_ratio")) for r in records]
    if any(v is None for _, v in vals):
        return {"passed": False, "reason": "missing measure ratio", "ratios": [v and v["value"] for _, v in vals]}
    ratios = [v["value"] for _, v in vals]
    errs = [v["error"] for _, v in vals]
    eps = [r["eps"] for r in records]
    slope = loglog_slope(eps, ratios) if len(ratios) > 1 and all(x > 0 for x in ratios) else None
    return {
        "passed": bool(strictly_decreasing(ratios, errs)) if len(ratios) > 1 else None,
        "ratios": ratios,
        "ci": errs,
        "fitted_slope": slope,
        "theoretical_exponent": 1.0 / (2 * records[0]["n"]) if records else None,
    }


def choice_record(cfg: RunConfig, k: int, eps: float) -> dict:
    rec: dict = {"k": k, "eps": eps, "errors": {}}
    rec["A0"] = _choose(cfg, rec, StarDomain(build_field(cfg, eps)))
    return rec


def _run_k(args):
    kind, cfg_dict, k, eps, eta = args
    cfg = RunConfig.from_dict(cfg_dict)
    if kind == "choose":
        return choice_record(cfg, k, eps)
    if kind == "theorem1":
        rec = theorem_record(cfg, k, eps, eta)
    elif kind == "solve":
        rec = solve_record(cfg, k, eps, eta)
    elif kind == "domain":
        rec = domain_record(cfg, k, eps)
    else:
        rec = kernel_record(cfg, k, eps)
    rec["n"] = cfg.n
    return rec


def common_A0(cfg: RunConfig) -> tuple[float | None, list[dict]]:
    """Largest per-``k`` choice of ``A0``, so one kernel rule applies along the whole schedule."""
    if cfg.A0 != "auto":
        return float(cfg.A0), []
    choices = run_records(cfg, "choose")
    picked = [c["A0"] for c in choices if c["A0"] is not None]
    return (max(picked) if picked else None), choices


def run_records(cfg: RunConfig, kind: str) -> list[dict]:
    """Per-``k`` records, computed in a process pool when ``workers > 1`` and sorted by ``k``."""
    etas = cfg.etas()
    jobs = [(kind, cfg.to_dict(), k, float(e), float(etas[k])) for k, e in enumerate(cfg.eps)]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(jobs))) as pool:
            records = list(pool.map(_run_k, jobs))
    else:
        records = [_run_k(j) for j in jobs]
    return sorted(records, key=lambda r: r["k"])


def run_pipeline(cfg: RunConfig) -> dict:
    """Theorem-1 report: records per ``k`` plus clause-level flags."""
    cfg.validate()
    records = _with_common_A0(cfg, "theorem1")
    for rec in records:
        rec["clauses"] = {"a": _clause_a(rec, cfg), "b": _clause_b(rec)}
    c = _clause_c(records)
    passed = all(r["clauses"]["a"]["passed"] and r["clauses"]["b"]["passed"] for r in records)
    passed = passed and c["passed"] is not False
    return _envelope(cfg, "theorem1", {
        "records": records,
        "clauses": {
            "a": all(r["clauses"]["a"]["passed"] for r in records),
            "b": all(r["clauses"]["b"]["passed"] for r in records),
            "c": c,
        },
        "passed": bool(passed),
    })


def _with_common_A0(cfg: RunConfig, kind: str) -> list[dict]:
    A0, choices = common_A0(cfg)
    if A0 is None:
        records = run_records(cfg, kind)
    else:
        fixed = RunConfig.from_dict({**cfg.to_dict(), "A0": A0})
        records = run_records(fixed, kind)
    for rec, ch in zip(records, choices):
        rec["A0_choice"] = ch["A0"]
        rec["errors"].update(ch["errors"])
    return records


def sweep_summary(records) -> dict:
    eps = [r["eps"] for r in records if r.get("ratio")]
    ratios = [r["ratio"]["value"] for r in records if r.get("ratio")]
    errs = [r["ratio"]["error"] for r in records if r.get("ratio")]
    slope = loglog_slope(eps, ratios) if len(ratios) > 1 and all(x > 0 for x in ratios) else None
    return {
        "eps": eps,
        "ratios": ratios,
        "ci": errs,
        "fitted_slope": slope,
        "strictly_decreasing": bool(strictly_decreasing(ratios, errs)) if len(ratios) > 1 else None,
    }


def _envelope(cfg: RunConfig, command: str, body: dict) -> dict:
    return to_jsonable({
        "command": command,
        "config": {k: v for k, v in cfg.to_dict().items() if k not in ("out", "workers")},
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        **body,
    })


def run_command(cfg: RunConfig, command: str) -> dict:
    """Report for one CLI subcommand."""
    if command == "theorem1":
        return run_pipeline(cfg)
    if command == "profile":
        return _envelope(cfg, command, {"profile": profile_report(cfg), "passed": True})
    if command == "manifold":
        rep = manifold_report(cfg)
        return _envelope(cfg, command, {"manifold": rep, "passed": not rep["errors"]})
    records = _with_common_A0(cfg, command) if command == "kernel" else run_records(cfg, command)
    body: dict = {"records": records, "passed": all(not r["errors"] for r in records)}
    if command == "domain":
        body["passed"] = body["passed"] and all(_domain_ok(r, cfg) for r in records)
    if command == "kernel":
        body["sweep"] = sweep_summary(records)
        body["passed"] = body["passed"] and body["sweep"]["strictly_decreasing"] is not False
    return _envelope(cfg, command, body)


def _domain_ok(rec, cfg) -> bool:
    adm = rec.get("admissibility")
    return bool(adm and adm["admissible"] and rec.get("poincare_hopf") and rec.get("components") == cfg.n)


def to_jsonable(obj):
    """Plain JSON types; non-finite floats become ``None`` so the report round-trips."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return str(obj)
