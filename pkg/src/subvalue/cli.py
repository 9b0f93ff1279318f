"""Command-line front end: synthesize / simulate / sweep / reach / lorenz.

Every output file gets a sibling `<file>.manifest.json` recording the
command, config hash, tool version, seed and solver settings; identical
manifests (timestamps aside) reproduce byte-identical outputs.

Exit codes: 0 success, 2 usage/config error, 3 infeasible, 4 numerical
failure, 5 internal error.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .control import (SimulationError, cost, extract_argmin, extract_bangbang,
                      simulate)
from .model import ProblemError, parse_problem
from .sdp import SolverSettings, export_sdpa
from .synthesis import (InfeasibleError, NumericalError, SubValueCertificate,
                        build_sdp, degree_sweep, synthesize)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4
EXIT_INTERNAL = 5


class CliError(Exception):
    def __init__(self, message, code=EXIT_USAGE, **extra):
        super().__init__(message)
        self.code = code
        self.extra = extra


@dataclass
class RunManifest:
    command: str
    config_sha256: str | None
    tool_version: str
    seed: int | None
    settings: dict
    started: str
    finished: str = ""
    outputs: list = field(default_factory=list)

    def write_for(self, out_path: Path):
        self.finished = _now()
        man = Path(str(out_path) + ".manifest.json")
        man.write_text(json.dumps(asdict(self), indent=1) + "\n")


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _load_config(path_str: str):
    path = Path(path_str)
    if not path.is_file():
        raise CliError(f"config not found: {path}", EXIT_USAGE)
    text = path.read_text()
    try:
        spec, cfg = parse_problem(text)
    except (ProblemError, json.JSONDecodeError) as exc:
        raise CliError(f"invalid config: {exc}", EXIT_USAGE) from exc
    return spec, cfg, _sha256(path)


def _settings(args) -> SolverSettings:
    return SolverSettings(tol_feas=args.tol_feas, tol_gap=args.tol_gap,
                          log_path=getattr(args, "solver_log", None))


def _manifest(args, config_hash, extra_settings=None) -> RunManifest:
    settings = {"tol_feas": args.tol_feas, "tol_gap": args.tol_gap}
    settings.update(extra_settings or {})
    return RunManifest(command=" ".join(sys.argv[1:]),
                       config_sha256=config_hash,
                       tool_version=__version__,
                       seed=getattr(args, "seed", None),
                       settings=settings, started=_now())


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_vector(text, what):
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise CliError(f"bad {what}: {text!r}", EXIT_USAGE) from exc


def _write_rows(path: Path, fieldnames, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)


# -- subcommands ------------------------------------------------------------

def cmd_synthesize(args):
    spec, cfg, chash = _load_config(args.config)
    if args.degree:
        cfg = replace(cfg, degree=args.degree)
    out = _outdir(args)
    manifest = _manifest(args, chash, {"degree": cfg.degree})

    if args.emit_sdpa:
        sdpa_path = out / "problem.dat-s"
        export_sdpa(build_sdp(spec, cfg), str(sdpa_path))
        manifest.outputs.append(str(sdpa_path))
        manifest.write_for(sdpa_path)

    import time
    t0 = time.perf_counter()
    cert = synthesize(spec, cfg, settings=_settings(args))
    wall = time.perf_counter() - t0

    cert_path = out / "certificate.json"
    cert_path.write_text(cert.to_json() + "\n")
    manifest.outputs.append(str(cert_path))
    manifest.write_for(cert_path)

    ver = cert.verification
    print(json.dumps({
        "objective": cert.objective_value,
        "degree": cert.degree,
        "verified": ver["ok"],
        "min_gram_eig": min(r["min_gram_eig"] for r in ver["constraints"].values()),
        "max_identity_residual": max(r["identity_sup"]
                                     for r in ver["constraints"].values()),
        "wall_time_s": wall,
        "certificate": str(cert_path),
    }, indent=1))
    return EXIT_OK


def _load_certificate(args, chash) -> SubValueCertificate:
    cert_path = Path(args.certificate)
    if not cert_path.is_file():
        raise CliError(f"certificate not found: {cert_path}", EXIT_USAGE)
    man_path = Path(str(cert_path) + ".manifest.json")
    if man_path.is_file():
        recorded = json.loads(man_path.read_text()).get("config_sha256")
        if recorded != chash and not args.force:
            raise CliError(
                "certificate was produced from a different config "
                "(hash mismatch); pass --force to use it anyway",
                EXIT_USAGE, recorded_hash=recorded, config_hash=chash)
    elif not args.force:
        raise CliError(f"no manifest next to {cert_path}; "
                       "pass --force to skip provenance checking", EXIT_USAGE)
    return SubValueCertificate.from_json(cert_path.read_text())


def cmd_simulate(args):
    spec, cfg, chash = _load_config(args.config)
    cert = _load_certificate(args, chash)
    out = _outdir(args)
    manifest = _manifest(args, chash, {"riemann_n": args.riemann_n,
                                       "input": args.input})

    x0 = (_parse_vector(args.x0, "--x0") if args.x0
          else np.zeros(spec.n_states))
    if args.input:
        mode, _, val = args.input.partition(":")
        if mode != "const":
            raise CliError(f"unsupported input mode {mode!r} "
                           "(expected const:v1,v2,..)", EXIT_USAGE)
        controller = _parse_vector(val, "--input")
        label = f"open_loop_{args.input}"
    elif spec.m_inputs == 0:
        controller = np.zeros(0)
        label = "autonomous"
    else:
        try:
            controller = extract_bangbang(spec, cert.P)
            label = "bangbang"
        except ProblemError:
            controller = extract_argmin(spec, cert.P)
            label = "argmin"
    try:
        traj = simulate(spec, controller, x0)
    except SimulationError as exc:
        raise CliError(str(exc), EXIT_NUMERICAL) from exc
    realized = cost(spec, traj, N=args.riemann_n)

    traj_path = out / "trajectory.csv"
    traj.to_csv(str(traj_path))
    manifest.outputs.append(str(traj_path))
    manifest.write_for(traj_path)

    report = {
        "x0": x0.tolist(),
        "controller": label,
        "realized_cost": realized,
        "certificate_value_at_x0": cert.evaluate(x0, 0.0),
        "riemann_n": args.riemann_n,
        "integrator_ok": traj.ok,
        "note": traj.note,
        "trajectory": str(traj_path),
    }
    report_path = out / "cost_report.json"
    report_path.write_text(json.dumps(report, indent=1) + "\n")
    manifest.outputs.append(str(report_path))
    manifest.write_for(report_path)
    print(json.dumps(report, indent=1))
    return EXIT_OK


def _parse_degrees(text):
    try:
        a, step, b = (int(v) for v in text.split(":"))
        if step <= 0 or b < a:
            raise ValueError
    except ValueError:
        raise CliError(f"bad --degrees {text!r} (expected a:step:b)",
                       EXIT_USAGE) from None
    return list(range(a, b + 1, step))


def cmd_sweep(args):
    spec, cfg, chash = _load_config(args.config)
    degrees = _parse_degrees(args.degrees)
    out = _outdir(args)
    manifest = _manifest(args, chash, {"degrees": degrees})

    study = degree_sweep(spec, cfg, degrees, settings=_settings(args))
    cols = ["degree", "status", "objective", "l1_error", "wall_time", "error"]
    table = out / "sweep.csv"
    _write_rows(table, cols, study.records)
    manifest.outputs.append(str(table))
    manifest.write_for(table)

    for rec in study.records:
        print(json.dumps({k: rec.get(k) for k in cols}))
    succeeded = [r for r in study.records if r["status"] == "optimal"]
    if not succeeded:
        raise CliError("every degree in the sweep failed", EXIT_INFEASIBLE)
    return EXIT_OK


def cmd_reach(args):
    from .reach import backward_reach_outer
    spec, cfg, chash = _load_config(args.config)
    if args.degree:
        cfg = replace(cfg, degree=args.degree)
    out = _outdir(args)
    manifest = _manifest(args, chash, {"degree": cfg.degree,
                                       "samples": args.samples})

    sublevel, cert = backward_reach_outer(spec, cfg, settings=_settings(args))
    cert_path = out / "certificate.json"
    cert_path.write_text(cert.to_json() + "\n")
    cloud_path = out / "reach_points.csv"
    sublevel.export_point_cloud(str(cloud_path), samples=args.samples,
                                seed=args.seed)
    field_path = out / "reach_field.csv"
    sublevel.export_scalar_field(str(field_path))
    for p in (cert_path, cloud_path, field_path):
        manifest.outputs.append(str(p))
        manifest.write_for(p)

    print(json.dumps({
        "objective": cert.objective_value,
        "verified": cert.verification["ok"],
        "point_cloud": str(cloud_path),
        "scalar_field": str(field_path),
        "certificate": str(cert_path),
    }, indent=1))
    return EXIT_OK


def cmd_lorenz(args):
    from .reach import lorenz_pipeline
    out = _outdir(args)
    manifest = _manifest(args, None, {"degree": args.degree,
                                      "grid_n": args.grid_n})

    sublevel, cert, report = lorenz_pipeline(degree=args.degree,
                                             grid_n=args.grid_n,
                                             settings=_settings(args))
    cert_path = out / "certificate.json"
    cert_path.write_text(cert.to_json() + "\n")
    cloud_path = out / "reach_points.csv"
    sublevel.export_point_cloud(str(cloud_path), samples=args.samples,
                                seed=args.seed)
    ends_path = out / "endpoints.csv"
    ends = np.hstack([report["starts"], report["endpoints"]])
    np.savetxt(ends_path, ends, delimiter=",", comments="",
               header="x1_0,x2_0,x3_0,x1_T,x2_T,x3_T")
    for p in (cert_path, cloud_path, ends_path):
        manifest.outputs.append(str(p))
        manifest.write_for(p)

    summary = {k: report[k] for k in ("grid_points", "start_containment",
                                      "endpoint_containment", "integrator_ok",
                                      "certificate_ok")}
    summary["certificate"] = str(cert_path)
    print(json.dumps(summary, indent=1))
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def _add_common(p, seed=False, samples=None):
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--tol-feas", type=float, default=1e-9)
    p.add_argument("--tol-gap", type=float, default=1e-9)
    p.add_argument("--solver-log", default=None,
                   help="write solver iteration log CSV here")
    if seed:
        p.add_argument("--seed", type=int, default=0)
    if samples is not None:
        p.add_argument("--samples", type=int, default=samples)


def build_parser():
    ap = argparse.ArgumentParser(
        prog="subvalue",
        description="Certified polynomial sub-value functions for "
                    "polynomial optimal control")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("synthesize", help="solve one degree, write certificate")
    p.add_argument("config")
    p.add_argument("--degree", type=int, default=None)
    p.add_argument("--emit-sdpa", action="store_true",
                   help="also export the compiled SDP in SDPA sparse format")
    _add_common(p)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("simulate", help="close the loop and report cost")
    p.add_argument("config")
    p.add_argument("certificate")
    p.add_argument("--x0", default=None, help="comma-separated start state")
    p.add_argument("--input", default=None,
                   help="open-loop override, e.g. const:1 or const:0.5,-1")
    p.add_argument("--riemann-n", type=int, default=1_000_000)
    p.add_argument("--force", action="store_true",
                   help="skip the certificate/config hash check")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="ascending-degree convergence study")
    p.add_argument("config")
    p.add_argument("--degrees", required=True, help="a:step:b")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("reach", help="backward-reach outer approximation")
    p.add_argument("config")
    p.add_argument("--degree", type=int, default=None)
    _add_common(p, seed=True, samples=20_000)
    p.set_defaults(func=cmd_reach)

    p = sub.add_parser("lorenz", help="Lorenz forward-reach study")
    p.add_argument("--degree", type=int, default=4)
    p.add_argument("--grid-n", type=int, default=20)
    _add_common(p, seed=True, samples=20_000)
    p.set_defaults(func=cmd_lorenz)
    return ap


def _fail(message, code, **extra):
    payload = {"error": message, "exit_code": code}
    payload.update(extra)
    print(json.dumps(payload, indent=1), file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        return _fail(str(exc), exc.code, **exc.extra)
    except ProblemError as exc:
        return _fail(str(exc), EXIT_USAGE)
    except InfeasibleError as exc:
        return _fail(str(exc), EXIT_INFEASIBLE, diagnosis="raise degree")
    except NumericalError as exc:
        return _fail(str(exc), EXIT_NUMERICAL)
    except Exception as exc:             # pragma: no cover - last resort
        return _fail(f"internal error: {exc!r}", EXIT_INTERNAL)


if __name__ == "__main__":
    sys.exit(main())
