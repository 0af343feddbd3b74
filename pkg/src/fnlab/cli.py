"""Command line interface.

Subcommands:

* ``run <config.json>``          one scenario: solve, sweep, checks, reports
* ``sweep <config.json> --amplitudes a1,a2,...``   entropy sweep table
* ``verify <fields-dir> --checks c1,c2,...``       re-check persisted fields
* ``report <run-dir> --format csv|json``           re-emit a stored report

Common flags: ``--out`` (else $FNLAB_OUTPUT_ROOT, else ./fnlab_out),
``--workers N``, ``--tol X``, ``--resolution m``, ``--seed S``.

Exit codes: 0 all contracted checks pass; 2 numeric failure; 3 a
contracted inequality failed beyond its slack.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np


def _load_config(args):
    from .config import load_scenario
    cfg = load_scenario(args.config)
    if args.resolution:
        cfg.geometry.m = args.resolution
    if args.tol:
        cfg.tolerances.nonlinear = args.tol
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.forcing.seed = args.seed
    cfg.validate()
    return cfg


def _print_records(records):
    for rec in records:
        d = rec.to_json_dict() if hasattr(rec, "to_json_dict") else rec
        status = "pass" if d["pass"] else "FAIL"
        print(f"[{status}] {d['check_id']:24s} residual={d['residual']:+.3e} "
              f"slack={d['slack']:.3e}")


def cmd_run(args):
    from .pipeline import run_scenario
    cfg = _load_config(args)
    report = run_scenario(cfg, out_root=args.out)
    _print_records(report.records)
    print(f"scenario {report.scenario_hash[:12]} status={report.status}")
    return report.status


def cmd_sweep(args):
    from .config import ScenarioConfig
    from .pipeline import sweep_entropy
    cfg = _load_config(args)
    amplitudes = [float(a) for a in args.amplitudes.split(",")]
    rows, reports = sweep_entropy(cfg, amplitudes, out_root=args.out,
                                  workers=args.workers)
    cols = ["amplitude", "variant", "entropy", "mass", "sup_abs_phi",
            "certificate_log", "status"]
    print(",".join(cols))
    for row in rows:
        print(",".join(str(row[c]) for c in cols))
    worst = max(r.status for r in reports)
    return worst


def cmd_verify(args):
    from . import cone_ops, tensors
    from .config import OperatorConfig
    from .fields import (HermitianField, dd_bar, entropy, load_field,
                         pencil_eigenvalues)
    from .pipeline import CheckRecord
    fields_dir = Path(args.fields)
    phi = load_field(fields_dir / "phi.fnlb")
    F_eff = load_field(fields_dir / "F_eff.fnlb")
    omega = load_field(fields_dir / "omega.fnlb")
    meta = json.loads((fields_dir / "meta.json").read_text())
    op = OperatorConfig(**meta["operator"]).build(phi.mesh.n)
    p = meta["p"]
    wanted = args.checks.split(",") if args.checks else [
        "solver_residual", "cone_membership", "theta_floor", "entropy_vs_mass"]
    mesh = phi.mesh
    gphi = HermitianField(mesh, omega.data + dd_bar(phi).data)
    lam = pencil_eigenvalues(omega, gphi, check=False)
    records = []
    if "solver_residual" in wanted:
        f = cone_ops.f_value(op, lam[mesh.interior], check=False)
        res = float(np.max(np.abs(f - np.exp(F_eff.data[mesh.interior]))))
        records.append(CheckRecord("solver_residual", fields_dir.name, res,
                                   args.tol or 1e-6, res <= (args.tol or 1e-6)))
    if "cone_membership" in wanted:
        bad = int(np.sum(~cone_ops.in_cone(lam[mesh.interior], op.cone)))
        records.append(CheckRecord("cone_membership", fields_dir.name,
                                   float(bad), 0.0, bad == 0))
    if "theta_floor" in wanted and mesh.n >= 2:
        _, res, _ = tensors.theta_tensor(op, lam, omega)
        records.append(CheckRecord("theta_floor", fields_dir.name, -res,
                                   1e-10, -res <= 1e-10))
    if "entropy_vs_mass" in wanted:
        ent = entropy(F_eff, omega, p)
        records.append(CheckRecord("entropy_vs_mass", fields_dir.name,
                                   ent.mass - ent.value, 0.0,
                                   ent.mass <= ent.value))
    _print_records(records)
    return 0 if all(r.passed for r in records) else 3


def cmd_report(args):
    from .reports import read_json
    run_dir = Path(args.rundir)
    report = read_json(run_dir / "report.json")
    if args.format == "json":
        print(json.dumps(report, indent=2, sort_keys=True))
        return 0
    cols = ["check_id", "instance_id", "residual", "slack", "pass"]
    print(",".join(cols))
    for rec in report["records"]:
        print(",".join(str(rec[c]) for c in cols))
    if report.get("sweep"):
        print()
        sweep_cols = list(report["sweep"][0].keys())
        print(",".join(sweep_cols))
        for row in report["sweep"]:
            print(",".join(str(row[c]) for c in sweep_cols))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="fnlab",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario")
    run.add_argument("config")
    sweep = sub.add_parser("sweep", help="entropy sweep over amplitudes")
    sweep.add_argument("config")
    sweep.add_argument("--amplitudes", required=True,
                       help="comma-separated forcing amplitudes")
    for cmd in (run, sweep):
        cmd.add_argument("--out", default=None, help="output root directory")
        cmd.add_argument("--workers", type=int, default=1)
        cmd.add_argument("--tol", type=float, default=None)
        cmd.add_argument("--resolution", type=int, default=None)
        cmd.add_argument("--seed", type=int, default=None)

    verify = sub.add_parser("verify", help="re-check persisted fields")
    verify.add_argument("fields", help="fields directory of a previous run")
    verify.add_argument("--checks", default=None)
    verify.add_argument("--tol", type=float, default=None)

    rep = sub.add_parser("report", help="re-emit a stored report")
    rep.add_argument("rundir")
    rep.add_argument("--format", choices=("csv", "json"), default="json")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    handlers = {"run": cmd_run, "sweep": cmd_sweep,
                "verify": cmd_verify, "report": cmd_report}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
