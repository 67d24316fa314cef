"""Command-line entry point: ``defectlab {verify-algebra, backlund, kmatrix, simulate}``.

Exit codes: 0 pass, 1 criterion failure, 2 usage or configuration error.
Every command writes ``manifest.json`` into ``--out``. ``simulate`` adds
``summary.json`` and ``series.csv``; the others add ``report.json`` and CSV tables.
"""
from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import sympy as sp

from . import __version__
from .defect_sim import CLOSURE_ORDER, CFLError, ConfigError, SimConfig, drift_report, read_flat_config, run, write_outputs
from .fields import LightConeGrid, Z
from .graded_linalg import GradedMatrix, check_osp_relations, osp_generators
from .grassmann import property_suite
from .liouville import (BlowUpError, DefectParams, SolutionError, antiholomorphic_functional_check,
                        backlund_integrate, conformal_defect_check, kmatrix_check, liouville_bulk_residual,
                        make_exact_solution, type1_conditions_residual, type2_backlund_residual)
from .reports import fit_slope, norm_of
from .super_liouville import (SusyParams, exact_super_backlund_state, flow_jets, super_backlund_integrate,
                              super_backlund_residual, super_bulk_residual, super_kmatrix_check,
                              superconformal_check, susy_invariance_check)

SLOPE_MIN = 1.8
ORDER_SLACK = 0.5
LAW_TOL = 1e-12
DICHOTOMY_TOL = 1e-8
SCALE = 4.0  # power of two, so rescaling is exact in binary floating point
STUDY_KEYS = ("mu_re", "mu_im", "beta_re", "beta_im", "kappa", "lo", "hi", "levels", "lambda", "a", "b11", "d11")
STUDY_DEFAULTS = {
    "bosonic": {"mu_re": 1.0, "mu_im": 0.0, "beta_re": 1.0, "beta_im": 0.0, "kappa": 0.0, "lo": 0.5, "hi": 1.0,
                "levels": "33,65,129", "lambda": 1.3, "a": 1.0, "b11": 1.0, "d11": 1.0},
    "super": {"mu_re": 1.3, "mu_im": 0.0, "beta_re": 0.8, "beta_im": 0.3, "kappa": -1.0, "lo": -0.5, "hi": 0.5,
              "levels": "17,33,65", "lambda": 1.7, "a": 0.9, "b11": 0.7, "d11": 1.2},
}


class UsageError(ValueError):
    pass


@dataclass
class RunManifest:
    command: str
    config: dict
    code_version: str
    started: str
    finished: str = ""
    outputs: dict = field(default_factory=dict)
    criteria: dict = field(default_factory=dict)
    environment: dict = field(default_factory=lambda: {"python": platform.python_version(),
                                                       "numpy": np.__version__, "sympy": sp.__version__})

    def write(self, out_dir: Path) -> Path:
        self.finished = _now()
        path = out_dir / "manifest.json"
        self.outputs = {**self.outputs, "manifest": str(path)}
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True, default=_json))
        return path


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def _json(o):
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _write_json(path: Path, data) -> str:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json))
    return str(path)


def _write_table(path: Path, levels, table: dict) -> str:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["quantity"] + [f"n={n}" for n in levels] + ["slope"])
        for name, row in table.items():
            wr.writerow([name] + [repr(float(v)) for v in row["norms"]] + [repr(float(row["slope"]))])
    return str(path)


# ---------------------------------------------------------------------------
# configuration for the convergence studies

def study_config(kind: str, path: str | None, kappa: float | None) -> dict:
    cfg = dict(STUDY_DEFAULTS[kind])
    if path is not None:
        raw = read_flat_config(path)
        unknown = set(raw) - set(STUDY_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(raw)
    try:
        out = {k: (str(v) if k == "levels" else float(v)) for k, v in cfg.items()}
        out["levels"] = [int(n) for n in out["levels"].split(",")]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if kappa is not None:
        out["kappa"] = float(kappa)
    if out["lambda"] == 0:
        raise ConfigError("spectral parameter lambda must be nonzero")
    if len(out["levels"]) < 2 or any(n < 5 for n in out["levels"]):
        raise ConfigError("levels needs at least two grid sizes ≥ 5")
    return out


def _params(cfg: dict) -> DefectParams:
    mu = complex(cfg["mu_re"], cfg["mu_im"])
    return DefectParams(mu=mu.real if mu.imag == 0 else mu, beta=complex(cfg["beta_re"], cfg["beta_im"]),
                        kappa=cfg["kappa"], b11=cfg["b11"], d11=cfg["d11"])


def _levels(cfg: dict, refine: int | None) -> list[int]:
    levels = list(cfg["levels"])
    if refine is not None:
        if refine < 1:
            raise UsageError("--refine must be ≥ 1")
        levels = [levels[0]]
        for _ in range(refine):
            levels.append(2 * levels[-1] - 1)
    return levels


def _table(levels, rows: list[dict], h) -> dict:
    hs = [h(n) for n in levels]
    out = {}
    for name in rows[0]:
        norms = [r[name] for r in rows]
        out[name] = {"norms": norms, "slope": fit_slope(hs, norms)}
    return out


# ---------------------------------------------------------------------------
# commands

def cmd_verify_algebra(args) -> tuple[int, dict]:
    gens = osp_generators()
    if args.perturb:
        bad = [list(row) for row in gens["F-"].entries]
        bad[1][2] += 0.1
        gens = {**gens, "F-": GradedMatrix(bad, gens["F-"].grading)}
    osp = check_osp_relations(gens)
    laws = property_suite(cases=args.cases, num_generators=args.generators, seed=args.seed)
    criteria = {"osp relations exact": osp.max_norm == 0,
                f"grassmann laws <= {LAW_TOL:g}": laws.max_norm <= LAW_TOL}
    report = {"osp": osp.to_dict(), "grassmann_laws": laws.to_dict(), "criteria": criteria}
    return (0 if all(criteria.values()) else 1), report


def _bosonic_level(n, cfg, P, kind):
    g = LightConeGrid.uniform((cfg["lo"], cfg["hi"]), (cfg["lo"], cfg["hi"]), n)
    wall = make_exact_solution("static_wall", g, P.mu)
    st = backlund_integrate(wall, P, seed=(0.0, 0.0), kind=kind)
    row = {"liouville bulk (phi2)": liouville_bulk_residual(st.phi2, P.mu, mode="fd").max_norm}
    if kind == "type2":
        row.update(type2_backlund_residual(st, P, mode="fd").details["per_equation"])
        row["antiholomorphic functional"] = antiholomorphic_functional_check(st, P, mode="fd").max_norm
        row["dbar lambda0"] = norm_of(st.lambda0.in_mode("fd").deriv(0, 1), 1)[0]
    else:
        row.update(type1_conditions_residual(st.phi1, st.phi2, P, mode="fd").details["per_equation"])
    conf = conformal_defect_check(st, P, kind=kind, mode="fd")
    row.update(conf.details["per_equation"])
    extra = {k: conf.details[k] for k in ("anomaly_relative_mismatch",) if k in conf.details}
    return st, row, extra


def _super_reference(n, cfg, P):
    g = LightConeGrid.uniform((cfg["lo"], cfg["hi"]), (cfg["lo"], cfg["hi"]), n)
    exact = exact_super_backlund_state(g, P, a=cfg["a"], F=sp.exp(Z) + Z / 3)
    seed = tuple(x.values()[0, 0].map(complex) for x in (exact.side2.phi, exact.defect.lambda0, exact.defect.f1))
    return exact, super_backlund_integrate(exact.side1, P, seed)


def cmd_backlund(args) -> tuple[int, dict]:
    cfg = study_config(args.kind, args.config, args.kappa)
    P = _params(cfg)
    levels = _levels(cfg, args.refine)
    h = lambda n: (cfg["hi"] - cfg["lo"]) / (n - 1)  # noqa: E731
    report = {"kind": args.kind, "config": cfg, "levels": levels}
    criteria = {}
    if args.kind == "bosonic":
        for kind in ("type2", "type1"):
            rows, extras = [], []
            for n in levels:
                _, row, extra = _bosonic_level(n, cfg, P, kind)
                rows.append(row)
                extras.append(extra)
            table = _table(levels, rows, h)
            report[kind] = {"table": table, "finest": extras[-1]}
            report.setdefault("tables", {})[kind] = table
            for name, row in table.items():
                criteria[f"{kind}: {name} slope >= {SLOPE_MIN}"] = row["slope"] >= SLOPE_MIN
            if kind == "type1":
                mm = extras[-1].get("anomaly_relative_mismatch", float("inf"))
                criteria["type1: cd1 matches the total-derivative anomaly within 5%"] = mm <= 0.05
    else:
        rows = []
        for n in levels:
            exact, S = _super_reference(n, cfg, P)
            err = max((S.side2.phi.values() - exact.side2.phi.values()).max_abs(),
                      (S.defect.lambda0.values() - exact.defect.lambda0.values()).max_abs(),
                      (S.defect.f1.values() - exact.defect.f1.values()).max_abs())
            rows.append({"error vs exact": err,
                         "super Backlund (reduced)": super_backlund_residual(S, P, "reduced").max_norm,
                         "super Backlund (full)": super_backlund_residual(S, P, "full").max_norm,
                         "super bulk": super_bulk_residual((S.side1, S.side2), P.mu).max_norm,
                         "superconformal gluing": superconformal_check(S).max_norm})
        table = _table(levels, rows, h)
        report["tables"] = {"super": table}
        for name, row in table.items():
            criteria[f"super: {name} slope >= {SLOPE_MIN}"] = row["slope"] >= SLOPE_MIN
        kappas = sorted({-1.0, 0.0} | ({args.kappa} if args.kappa is not None else set()))
        J = flow_jets(S, P)
        chk = susy_invariance_check(J, SusyParams.from_context(S.ctx), P, kappas=tuple(kappas))
        per = {float(k): float(v) for k, v in chk.details["per_kappa"].items()}
        report["susy_dichotomy"] = {"per_kappa": per, "grid": levels[-1]}
        good, bad = per[-1.0], per[0.0]
        criteria[f"susy: kappa=-1 epsilon sector <= {DICHOTOMY_TOL:g}"] = good <= DICHOTOMY_TOL
        criteria["susy: kappa=0 epsilon sector >= 1e3 x kappa=-1"] = bad >= 1e3 * max(good, 1e-300)
    report["criteria"] = criteria
    return (0 if all(criteria.values()) else 1), report


def cmd_kmatrix(args) -> tuple[int, dict]:
    kind = "super" if args.kind == "super" else "bosonic"
    cfg = study_config(kind, args.config, args.kappa)
    P = _params(cfg)
    lam = cfg["lambda"]
    levels = _levels(cfg, args.refine)
    h = lambda n: (cfg["hi"] - cfg["lo"]) / (n - 1)  # noqa: E731
    rows, scale_dev = [], 0.0
    for n in levels:
        if kind == "bosonic":
            variant = "first" if args.kind == "bosonic_first" else "prime"
            st, _, _ = _bosonic_level(n, cfg, P, "type2")
            r = kmatrix_check(st, lam, P, variant, mode="fd")
            r2 = kmatrix_check(st, lam, P, variant, mode="fd", scale=SCALE)
            rows.append({f"K ({variant}) intertwining": r.max_norm})
        else:
            _, S = _super_reference(n, cfg, P)
            r = super_kmatrix_check(S, lam, P)
            r2 = super_kmatrix_check(S, lam, P, scale=SCALE)
            rows.append({"super K intertwining": r.max_norm,
                         "super K bosonic entries": r.details["bosonic"],
                         "super K fermionic entries": r.details["fermionic"]})
        scale_dev = max(scale_dev, abs(r2.max_norm - SCALE * r.max_norm))
    table = _table(levels, rows, h)
    criteria = {f"{name} slope >= {SLOPE_MIN}": row["slope"] >= SLOPE_MIN for name, row in table.items()
                if min(row["norms"]) > 1e-13}
    criteria[f"residual of {SCALE:g}K equals {SCALE:g} x residual of K exactly"] = scale_dev == 0
    report = {"kind": args.kind, "config": cfg, "levels": levels, "lambda": lam, "tables": {args.kind: table},
              "scale_deviation": scale_dev, "criteria": criteria}
    return (0 if all(criteria.values()) else 1), report


def cmd_simulate(args) -> tuple[int, dict]:
    base = SimConfig.load(args.config) if args.config else SimConfig()
    cfg = replace(base, disable_defect_terms=args.disable_defect_terms, perturb=args.perturb)
    if args.kappa is not None:
        cfg = replace(cfg, params=cfg.params.with_kappa(args.kappa))
    series = run(cfg)
    summary = drift_report(series)
    summary["config"] = cfg.to_mapping()
    out = {"summary": summary, "series": series}
    levels = [cfg.n]
    if args.refine:
        drifts = [{k: summary["drift"][f"{k}_mod"]["rel"] for k in summary["checked"]}]
        c = cfg
        for _ in range(args.refine):
            c = c.refined(2)
            levels.append(c.n)
            drifts.append({k: drift_report(run(c))["drift"][f"{k}_mod"]["rel"] for k in summary["checked"]})
        orders = [{k: float(np.log2(drifts[i][k] / drifts[i + 1][k])) if drifts[i + 1][k] > 0 else float("inf")
                   for k in summary["checked"]}
                  for i in range(len(drifts) - 1)]
        summary["refinement"] = {"n": levels, "modified_drift": drifts, "observed_order": orders,
                                 "closure_order": CLOSURE_ORDER}
    criteria = {f"modified drift <= {cfg.tolerance:g}": summary["modified_pass"],
                "unmodified drift >= 1e3 x modified": summary["separation_pass"]}
    if "refinement" in summary:
        worst = min(v for o in summary["refinement"]["observed_order"] for v in o.values())
        criteria[f"drift decreases at closure order (observed >= {CLOSURE_ORDER - ORDER_SLACK:g})"] = \
            worst >= CLOSURE_ORDER - ORDER_SLACK
    passed = all(criteria.values())
    if args.disable_defect_terms:
        summary["negative_control"] = "negative control passed" if not summary["modified_pass"] else \
            "negative control FAILED: canonical charges did not drift"
        criteria = {"negative control (canonical charges drift)": not summary["modified_pass"]}
        passed = criteria["negative control (canonical charges drift)"]
    summary["criteria"] = criteria
    return (0 if passed else 1), out


# ---------------------------------------------------------------------------
# parser and dispatch

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="defectlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp_, config=True):
        sp_.add_argument("--out", default=None, help="output directory (default runs/<command>)")
        if config:
            sp_.add_argument("--config", default=None, help="flat key = value config file")
            sp_.add_argument("--refine", type=int, default=None, help="number of grid halvings")
            sp_.add_argument("--kappa", type=float, default=None, help="override kappa")

    va = sub.add_parser("verify-algebra", help="osp(1|2) relations and Grassmann algebra laws")
    common(va, config=False)
    va.add_argument("--generators", type=int, default=6)
    va.add_argument("--cases", type=int, default=1000)
    va.add_argument("--seed", type=int, default=0)
    va.add_argument("--perturb", action="store_true", help="inject a fault into the generators")

    bk = sub.add_parser("backlund", help="integrate Backlund systems and tabulate convergence")
    bk.add_argument("kind", choices=("bosonic", "super"))
    common(bk)

    km = sub.add_parser("kmatrix", help="defect-matrix intertwining on integrated states")
    km.add_argument("kind", choices=("bosonic_first", "bosonic_prime", "super"))
    common(km)

    si = sub.add_parser("simulate", help="time-domain defect simulation with charge monitors")
    common(si)
    si.add_argument("--disable-defect-terms", action="store_true",
                    help="monitor canonical charges only (negative control)")
    si.add_argument("--perturb", action="store_true", help="flip the sign of the d-term in the closure")
    return p


COMMANDS = {"verify-algebra": cmd_verify_algebra, "backlund": cmd_backlund, "kmatrix": cmd_kmatrix,
            "simulate": cmd_simulate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    out_dir = Path(args.out or Path("runs") / args.command)
    manifest = RunManifest(args.command, {k: v for k, v in vars(args).items() if k != "command"}, __version__,
                           _now())
    try:
        code, report = COMMANDS[args.command](args)
    except (ConfigError, CFLError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (BlowUpError, SolutionError) as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return 1
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.command == "simulate":
        paths = write_outputs(report["series"], report["summary"], out_dir)
        criteria = report["summary"]["criteria"]
    else:
        paths = {"report": _write_json(out_dir / "report.json", report)}
        for name, table in report.get("tables", {}).items():
            paths[f"table_{name}"] = _write_table(out_dir / f"table_{name}.csv", report["levels"], table)
        criteria = report["criteria"]
    resolved = report["summary"]["config"] if args.command == "simulate" else report.get("config")
    if resolved is not None:
        manifest.config = {**manifest.config, "resolved": resolved}
    manifest.outputs, manifest.criteria = paths, criteria
    manifest.write(out_dir)
    for name, ok in criteria.items():
        print(f"[{'PASS' if ok else 'FAIL'}] {name}")
    if args.command == "simulate" and args.disable_defect_terms:
        print(report["summary"]["negative_control"])
    return code


if __name__ == "__main__":
    sys.exit(main())
