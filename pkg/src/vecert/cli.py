"""Command-line front end: ``vecert synth|sweep|audit|discrete|table1``.

Every run writes into ``<out>/<config name>/``:

- ``certificate.cert``  certificate file (when one was produced)
- ``audit.json``        sampled audit report
- ``report.json``       outcome, solver status, sizes and parameters
- ``timing.json``       wall-clock and solve times (the only nondeterministic file)

The output root is ``--out``, else ``$VECERT_OUTPUT_DIR``, else ``./vecert_out``.

Exit codes: 0 certificate found and audit passed (or compile-only run
completed), 2 nothing found (including guardrail skips and solver
failures), 3 audit failed, 1 configuration or runtime error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import certfile, config, discrete, synth
from .audit import SYNTHESIZED, AuditOptions, check_certificate, trajectory_audit
from .config import ConfigError, RunConfig
from .poly import Polynomial
from .semialg import sample_set
from .sysmodel import simulate_many

log = logging.getLogger("vecert")

ENV_OUT = "VECERT_OUTPUT_DIR"
EXIT_OK, EXIT_ERROR, EXIT_NOT_FOUND, EXIT_AUDIT_FAIL = 0, 1, 2, 3


@dataclass
class Overrides:
    tol: float | None = None
    rel_tol: float | None = None
    psd_tol: float | None = None
    samples: int | None = None
    max_rows: int | None = None
    compile_only: bool = False


@dataclass
class RunOutcome:
    exit_code: int
    summary: str
    report: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    out_dir: Path | None = None


def output_root(flag: str | None = None) -> Path:
    return Path(flag or os.environ.get(ENV_OUT) or "vecert_out")


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# option assembly


def synth_options(cfg: RunConfig, ov: Overrides) -> synth.SynthOptions:
    s, a, c = cfg.section("solver"), cfg.section("audit"), cfg.section("certificate")
    return synth.SynthOptions(
        eta_lb=float(c.get("eta_lb", 1e-3)),
        boost=int(s.get("multiplier_degree_boost", 0)),
        tol=float(ov.tol if ov.tol is not None else s.get("tol", 1e-8)),
        max_iter=int(s.get("max_iter", 200)),
        audit_samples=int(ov.samples or a.get("samples", 10_000)),
        audit_seed=cfg.seed,
        audit_rel_tol=ov.rel_tol if ov.rel_tol is not None else a.get("rel_tol"),
        audit_disjunction=a.get("disjunction", "assigned"),
        compile_only=bool(ov.compile_only or s.get("compile_only", False)),
        max_rows=int(ov.max_rows or s.get("max_rows", 4000)),
    )


def audit_options(cfg: RunConfig, ov: Overrides) -> AuditOptions:
    a = cfg.section("audit")
    return AuditOptions(mode=a.get("mode", SYNTHESIZED),
                        samples=int(ov.samples or a.get("samples", 10_000)), seed=cfg.seed,
                        rel_tol=ov.rel_tol if ov.rel_tol is not None else a.get("rel_tol"),
                        psd_tol=ov.psd_tol if ov.psd_tol is not None else 1e-8,
                        disjunction=a.get("disjunction", "assigned"))


def _k_of(params: dict) -> int:
    for name in ("A", "A1"):
        if name in params:
            return len(params[name])
    return 1


def synth_call(kind: str, spec, degree: int, params: dict, opts: synth.SynthOptions):
    """Dispatch one synthesis run from configuration-style parameters."""
    M = config.matrix
    lam = float(params.get("lambda", 1.0))
    gamma, rho = params.get("gamma", 1.0), params.get("rho", 1.0)
    assign = params.get("assignment")
    if kind == "BC":
        return synth.synth_scalar_bc(spec, lam, degree, opts)
    if kind == "CC_safety":
        return synth.synth_scalar_cc_safety(spec, lam, degree, opts)
    if kind == "CC_persistence":
        return synth.synth_scalar_cc_persistence(spec, lam, degree, opts, float(gamma), float(rho))
    if kind == "CC_LTL":
        return synth.synth_scalar_cc_ltl(spec, lam, degree, opts, float(gamma), float(rho))
    if kind in ("VCBRF_persistence", "VCBRF_LTL"):
        k = _k_of(params)
        mats = [M(params[n]) if n in params else np.zeros((k, k)) for n in ("A1", "A2", "A3")]
        fn = synth.synth_vcbrf_persistence if kind == "VCBRF_persistence" else synth.synth_vcbrf_ltl
        return fn(spec, *mats, degree, opts)
    if "A" not in params:
        raise ConfigError(f"kind {kind} needs a matrix A")
    if kind == "VCC_safety":
        return synth.synth_vcc_safety(spec, M(params["A"]), degree, opts, assign)
    if kind == "VCC_persistence":
        return synth.synth_vcc_persistence(spec, M(params["A"]), degree, opts, gamma, rho, assign)
    if kind == "VCC_LTL":
        return synth.synth_vcc_ltl(spec, M(params["A"]), degree, opts, gamma, rho, assign)
    raise ConfigError(f"unsupported kind {kind!r}")


def _result_dict(res: synth.SynthesisResult) -> dict:
    return {"outcome": res.outcome, "kind": res.kind, "degree": res.degree, "k": res.k,
            "solver_status": res.solver_status, "iterations": res.iterations,
            "reason": res.reason, "sizes": res.sizes, "params": synth._jsonable(res.params),
            "audit": res.audit.summary() if res.audit is not None else None}


def _exit_for(res: synth.SynthesisResult) -> int:
    if res.found:
        return EXIT_OK
    if res.outcome == "AuditFailed":
        return EXIT_AUDIT_FAIL
    if res.reason == "compile only":
        return EXIT_OK
    return EXIT_NOT_FOUND


def _write_result(res: synth.SynthesisResult, out: Path) -> dict:
    files = {}
    if res.certificate is not None and res.found:
        p = certfile.write(res.certificate, out / "certificate.cert")
        files["certificate"] = {"file": p.name, "sha256": _sha(p)}
    if res.audit is not None:
        p = out / "audit.json"
        p.write_text(res.audit.to_text() + "\n")
        files["audit"] = {"file": p.name, "sha256": _sha(p)}
    return files


def _trajectories(cfg: RunConfig, sys_, out: Path) -> dict | None:
    tr = cfg.section("trajectory")
    if not tr:
        return None
    region = sys_.region(tr.get("region", "XVF"))
    count, steps = int(tr.get("count", 100)), int(tr.get("steps", 500))
    rep = trajectory_audit(sys_, region, count, steps, seed=cfg.seed)
    x0 = sample_set(sys_.X0, count, cfg.seed).points
    traj = simulate_many(sys_, x0, steps)
    idx = np.repeat(np.arange(count), steps + 1)
    t = np.tile(np.arange(steps + 1), count)
    data = np.column_stack([idx, t, traj.reshape(-1, sys_.n)])
    header = ",".join(["trajectory", "step"] + list(sys_.space.names))
    np.savetxt(out / "trajectories.csv", data, delimiter=",", header=header, comments="",
               fmt=["%d", "%d"] + ["%.17g"] * sys_.n)
    return rep.to_dict()


# ---------------------------------------------------------------------------
# tasks


def _run_synth(cfg: RunConfig, out: Path, ov: Overrides) -> RunOutcome:
    spec = config.build_spec(cfg)
    cert = cfg.section("certificate")
    if "degree" not in cert:
        raise ConfigError(f"{cfg.where('certificate')}: synth needs certificate.degree")
    opts = synth_options(cfg, ov)
    res = synth_call(cfg.kind, spec, int(cert["degree"]), cert, opts)
    report = {"name": cfg.name, "task": "synth", **_result_dict(res)}
    report["files"] = _write_result(res, out)
    code = _exit_for(res)
    if res.found:
        traj = _trajectories(cfg, spec.system, out)
        if traj is not None:
            report["trajectory"] = traj
    status = "Compiled" if res.reason == "compile only" else res.outcome
    summary = f"{cfg.name}: {status}" + (f" ({res.reason})" if res.reason else "")
    if status == "Compiled":
        summary = f"{cfg.name}: Compiled ({res.sizes.get('sdp_equalities')} equality rows)"
    return RunOutcome(code, summary, report,
                      {"wall_time": res.wall_time, "solve_time": res.solve_time})


def _run_sweep(cfg: RunConfig, out: Path, ov: Overrides) -> RunOutcome:
    spec = config.build_spec(cfg)
    sw = cfg.section("sweep")
    base = cfg.section("certificate")
    cands: dict[int, list[dict]] = {}
    for c in sw["candidates"]:
        merged = {**base, **c}
        cands.setdefault(_k_of(merged), []).append(merged)
    if not cands:
        raise ConfigError(f"{cfg.where('sweep', 'candidates')}: no candidates declared")
    opts = synth_options(cfg, ov)
    cells = synth.sweep(lambda d, k, c: synth_call(cfg.kind, spec, d, c, opts),
                        sw["degrees"], sorted(cands), cands, bool(sw.get("exhaustive", False)))
    first = next((c for c in cells if c.result.found), None)
    report = {"name": cfg.name, "task": "sweep", "kind": cfg.kind,
              "cells": [{"degree": c.degree, "k": c.k,
                         **{k: v for k, v in _result_dict(c.result).items()
                            if k not in ("degree", "k")}} for c in cells],
              "first_certificate": None if first is None else {"degree": first.degree,
                                                                "k": first.k}}
    if first is not None:
        report["files"] = _write_result(first.result, out)
        traj = _trajectories(cfg, spec.system, out)
        if traj is not None:
            report["trajectory"] = traj
        res = first.result
    else:
        res = cells[-1].result
    code = EXIT_OK if first is not None else _exit_for(res)
    summary = (f"{cfg.name}: Certificate at degree {first.degree}, k={first.k}" if first
               else f"{cfg.name}: NotFound in {len(cells)} cell(s)")
    return RunOutcome(code, summary, report,
                      {"wall_time": sum(c.result.wall_time for c in cells),
                       "cells": [c.result.wall_time for c in cells]})


def _run_audit(cfg: RunConfig, out: Path, ov: Overrides) -> RunOutcome:
    spec = config.build_spec(cfg)
    cpath = cfg.section("certificate").get("file")
    if not cpath:
        raise ConfigError(f"{cfg.where('certificate')}: audit needs certificate.file")
    path = (cfg.path.parent / cpath) if not Path(cpath).is_absolute() else Path(cpath)
    try:
        cert = certfile.read(path)
    except OSError as e:
        raise ConfigError(f"{cfg.where('certificate', 'file')}: cannot read {path}: {e.strerror}")
    if cert.kind != cfg.kind:
        raise ConfigError(f"{cfg.where('kind')}: certificate file holds a {cert.kind} certificate")
    t0 = time.perf_counter()
    rep = check_certificate(cert, spec, audit_options(cfg, ov))
    (out / "audit.json").write_text(rep.to_text() + "\n")
    report = {"name": cfg.name, "task": "audit", "kind": cfg.kind, "verdict": rep.verdict,
              "summary": rep.summary(), "certificate_sha256": _sha(path),
              "files": {"audit": {"file": "audit.json", "sha256": _sha(out / "audit.json")}}}
    traj = _trajectories(cfg, spec.system, out)
    if traj is not None:
        report["trajectory"] = traj
    code = EXIT_OK if rep.verdict in ("Pass", "PassWithRounding") else EXIT_AUDIT_FAIL
    return RunOutcome(code, f"{cfg.name}: {rep.summary()}", report,
                      {"wall_time": time.perf_counter() - t0})


def _run_discrete(cfg: RunConfig, out: Path, ov: Overrides) -> RunOutcome:
    t0 = time.perf_counter()
    ts = config.build_finite_system(cfg)
    d = cfg.section("discrete")
    reachable = discrete.reach(ts)
    report: dict = {"name": cfg.name, "task": "discrete",
                    "reachable": [s for s in ts.states if s in reachable],
                    "unsafe": [s for s in ts.states if s in ts.unsafe]}
    separation = True
    if "lambda_grid" in d:
        grid = config.lambda_grid(d["lambda_grid"])
        eta = float(d.get("cc_eta", 1e-4))
        report["scalar_cc"] = {}
        for mode in d.get("cc_modes", ["full"]):
            g = discrete.cc_feasible_quadratic(ts, grid, eta, mode=mode, exhaustive=True)
            report["scalar_cc"][mode] = {"outcome": g.outcome, "summary": g.summary(),
                                         "eta": eta, "grid": [[l, s] for l, s in g.per_lambda]}
            separation &= g.outcome == "InfeasibleOnGrid"
    if "printed_vcc" in d:
        pv = d["printed_vcc"]
        T = [Polynomial.parse(t, discrete.PAIR_SPACE) for t in pv["T"]]
        A, eta = config.matrix(pv["A"]), float(pv["eta"])
        entry = {"spot_values": {f"T{i + 1}({x},{y})": T[i].evaluate((x, y))
                                 for i in range(len(T)) for x, y in ((0, 1), (0, 2), (0, 3))}}
        for inst in ("full", "printed"):
            rep = discrete.vcc_audit_discrete(ts, T, A, eta, instances=inst,
                                              rounding_tol=pv.get("rounding_tol"))
            entry[inst] = rep.to_dict()
            entry[inst]["worst"] = None if rep.worst() is None else vars(rep.worst())
            entry[inst]["rounding_slack"] = [vars(r) for r in rep.instances if r.margin < 0]
        report["printed_vcc"] = entry
    code = EXIT_OK
    if "synth_vcc" in d:
        sv = d["synth_vcc"]
        A, eta = config.matrix(sv["A"]), float(sv["eta"])
        assign = {s: int(j) - 1 for s, j in (sv.get("assignment") or {}).items()}
        T, lp = discrete.vcc_feasible_quadratic(ts, A, eta, assign or None)
        entry = {"A": A.tolist(), "eta": eta, "lp_status": lp.status}
        if T is None:
            code = EXIT_NOT_FOUND
            entry["found"] = False
        else:
            scale = max(p.max_abs_coef() for p in T)
            rep = discrete.vcc_audit_discrete(ts, T, A, eta, abs_tol=1e-9 * max(scale, 1.0))
            oracle = discrete.safety_oracle_consistency(ts, rep)
            entry.update({"found": True, "T": [p.to_text() for p in T],
                          "audit": rep.to_dict(), "oracle": oracle.message})
            if rep.verdict != "Pass" or not oracle.consistent:
                code = EXIT_AUDIT_FAIL
        report["synthesized_vcc"] = entry
    if code == EXIT_OK and not separation:
        code = EXIT_NOT_FOUND
    report["separation"] = separation and code == EXIT_OK
    return RunOutcome(code, f"{cfg.name}: separation={'yes' if report['separation'] else 'no'}",
                      report, {"wall_time": time.perf_counter() - t0})


TASK_RUNNERS = {"synth": _run_synth, "sweep": _run_sweep, "audit": _run_audit,
                "discrete": _run_discrete}


def run(cfg: RunConfig | str | Path, out_root: Path | str | None = None,
        overrides: Overrides | None = None) -> RunOutcome:
    """Execute one configuration and write its artifacts."""
    if not isinstance(cfg, RunConfig):
        cfg = config.load(cfg)
    ov = overrides or Overrides()
    out = Path(out_root or output_root()) / cfg.name
    out.mkdir(parents=True, exist_ok=True)
    outcome = TASK_RUNNERS[cfg.task](cfg, out, ov)
    outcome.report["exit_code"] = outcome.exit_code
    _dump(out / "report.json", outcome.report)
    _dump(out / "timing.json", outcome.timing)
    outcome.out_dir = out
    return outcome


# ---------------------------------------------------------------------------
# table harness


def table1_harness(config_dir: str | Path, out_root: Path | str | None = None,
                   overrides: Overrides | None = None) -> tuple[int, list[dict]]:
    """Run every ``*.cfg`` in ``config_dir`` (sorted) and tabulate the outcomes."""
    config_dir = Path(config_dir)
    out_root = Path(out_root or output_root())
    paths = sorted(config_dir.glob("*.cfg"))
    rows: list[dict] = []
    times: list[float | None] = []
    for p in paths:
        row = {"config": p.name}
        try:
            cfg = config.load(p)
            ref = cfg.section("reference")
            row.update({"system": ref.get("system", ""), "method": ref.get("method", cfg.kind),
                        "reference_degree": ref.get("degree"),
                        "reference_time_s": ref.get("time_s")})
            o = run(cfg, out_root, overrides)
            row.update(_row_from_report(o.report))
            row["exit_code"] = o.exit_code
            times.append(o.timing.get("wall_time"))
        except Exception as e:  # recorded per row; the harness continues
            log.debug("row %s failed:\n%s", p.name, traceback.format_exc())
            row.update({"status": "Error", "detail": f"{type(e).__name__}: {e}", "exit_code": 1})
            times.append(None)
        rows.append(row)
    out_root.mkdir(parents=True, exist_ok=True)
    _dump(out_root / "table1.json", {"rows": rows, "note": "reference values are non-binding"})
    (out_root / "table1.txt").write_text(format_table(rows, times))
    return (EXIT_NOT_FOUND if not rows else EXIT_OK), rows


def _row_from_report(rep: dict) -> dict:
    if rep["task"] == "sweep":
        first = rep.get("first_certificate")
        cells = rep["cells"]
        if first:
            return {"status": "Certificate", "degree": first["degree"], "k": first["k"],
                    "detail": f"{len(cells)} cell(s) tried"}
        last = cells[-1]
        tried = sorted({c["degree"] for c in cells})
        kinds = {"Skipped" if c.get("solver_status") == "Skipped" else c["outcome"] for c in cells}
        status = kinds.pop() if len(kinds) == 1 else "NotFound"
        return {"status": status, "degree": None, "k": last["k"],
                "detail": f"degrees {tried} tried; last: {last['reason'] or last['outcome']}"}
    status = rep["outcome"]
    if rep.get("solver_status") == "Skipped":
        status = "Skipped"
    elif rep.get("reason") == "compile only":
        status = "Compiled"
    detail = rep.get("reason") or rep.get("audit") or ""
    if status in ("Compiled", "Skipped"):
        s = rep.get("sizes", {})
        detail = (f"{detail}; {s.get('constraints', '?')} SOS constraints, "
                  f"{s.get('sdp_equalities', s.get('equalities', '?'))} rows, "
                  f"max block {s.get('sdp_max_block', s.get('max_block', '?'))}")
    return {"status": status, "degree": rep["degree"] if status == "Certificate" else None,
            "k": rep["k"], "detail": detail}


def _dash(v):
    return "-" if v is None else v


def format_table(rows: list[dict], times: list[float | None]) -> str:
    head = ["config", "system", "method", "status", "degree", "k", "ref degree", "ref time (s)",
            "wall time (s)"]
    lines = [" | ".join(head), " | ".join("---" for _ in head)]
    for r, t in zip(rows, times):
        lines.append(" | ".join(str(v) for v in [
            r["config"], r.get("system", ""), r.get("method", ""), r.get("status", ""),
            r.get("degree") if r.get("degree") is not None else "-", r.get("k", "-"),
            _dash(r.get("reference_degree")), _dash(r.get("reference_time_s")),
            "-" if t is None else f"{t:.2f}"]))
    lines.append("")
    lines.append("Reference values are quoted for comparison only; solver and hardware differ.")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# argument parsing


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vecert", description="Vector certificate synthesis and audit.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp):
        sp.add_argument("--out", help=f"output root (default ${ENV_OUT} or ./vecert_out)")
        sp.add_argument("--tol", type=float, help="solver tolerance")
        sp.add_argument("--rel-tol", type=float, help="audit tolerance relative to coefficient scale")
        sp.add_argument("--psd-tol", type=float, help="Gram minimum-eigenvalue tolerance")
        sp.add_argument("--samples", type=int, help="audit samples per condition factor")
        sp.add_argument("--max-rows", type=int, help="dense-solver guardrail on equality rows")
        sp.add_argument("--compile-only", action="store_true", help="build and compile, do not solve")

    for verb, help_ in (("synth", "synthesize a certificate"), ("sweep", "sweep degrees and matrices"),
                        ("audit", "audit a certificate file"),
                        ("discrete", "finite-system LPs and exact audits")):
        sp = sub.add_parser(verb, help=help_)
        sp.add_argument("config")
        common(sp)
    sp = sub.add_parser("table1", help="run every configuration in a directory and tabulate")
    sp.add_argument("config_dir", nargs="?", default=None,
                    help="directory of *.cfg rows (default: shipped table rows)")
    common(sp)
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    ov = Overrides(args.tol, args.rel_tol, args.psd_tol, args.samples, args.max_rows,
                   args.compile_only)
    out = output_root(args.out)
    try:
        if args.verb == "table1":
            cdir = Path(args.config_dir) if args.config_dir else config.shipped_config_dir() / "table1"
            if not cdir.is_dir():
                raise ConfigError(f"{cdir}: not a directory")
            code, rows = table1_harness(cdir, out, ov)
            print((out / "table1.txt").read_text() if rows else "no configurations found", end="")
            return code
        cfg = config.load(args.config)
        if cfg.task != args.verb:
            raise ConfigError(f"{cfg.where('task')}: configuration declares task {cfg.task!r}, "
                              f"not {args.verb!r}")
        outcome = run(cfg, out, ov)
        print(outcome.summary)
        print(f"artifacts: {outcome.out_dir}")
        return outcome.exit_code
    except (ConfigError, certfile.CertificateFormatError, synth.SpecError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as e:
        log.debug("%s", traceback.format_exc())
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
