"""Scenario pipelines: solve, sweep the sublevel machinery, check, persist.

A run executes

    solve  ->  sublevel sweep with auxiliary ball solves  ->  inequality
    checks  ->  floor iteration  ->  sup-bound certificate

and emits one JSON record per check plus a CSV sweep table.  Reports are
deterministic functions of (config, seed); timings live in a sidecar.

Exit status contract: 0 all contracted checks pass, 2 numeric failure
(solver did not converge), 3 a contracted inequality fails beyond its
slack -- at converged resolution that is a reportable event, not a log
line.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import cone_ops, inequalities as ineq, tensors
from .config import ScenarioConfig
from .cone_ops import MongeAmpere, in_cone
from .errors import NonConvergenceError, NumericError, ParameterError
from .fields import (HermitianField, ScalarField, dd_bar, entropy,
                     identity_metric, integrate, metric_det,
                     pencil_eigenvalues, save_field, sup_normalize)
from .forcing import build_forcing, build_metric
from .geometry import chart_ball, restrict_to_chart
from .geometry import ball_mesh as make_ball_mesh
from .geometry import torus_mesh as make_torus_mesh
from .reports import output_root, write_csv, write_json
from .solvers import (DirichletProblem, solve_dirichlet_cma,
                      solve_dirichlet_linear, solve_periodic_fnl)
from .sublevel import s_cap_complex, tau_smooth


@dataclass
class CheckRecord:
    check_id: str
    instance_id: str
    residual: float
    slack: float
    passed: bool

    def to_json_dict(self):
        return {"check_id": self.check_id, "instance_id": self.instance_id,
                "residual": self.residual, "slack": self.slack,
                "pass": self.passed}


@dataclass
class RunReport:
    scenario_hash: str
    config: dict
    records: list
    summary: dict
    sweep_rows: list
    status: int
    timings: dict = field(default_factory=dict)

    def to_json_dict(self):
        return {
            "scenario_hash": self.scenario_hash,
            "config": self.config,
            "records": [r.to_json_dict() for r in self.records],
            "summary": self.summary,
            "sweep": self.sweep_rows,
            "status": self.status,
        }

    @property
    def all_passed(self):
        return all(r.passed for r in self.records)


class SublevelStaircase:
    """Exact measure and sharp-mass functions of s from one sorted pass.

    u_s is affine in s (u_s = u_{s0} + (s0 - s)), so the sublevel set at
    any s is a threshold set of the fixed array u_{s0}; cumulative sums
    over the sorted values give phi(s) and A_s in O(log N) per query.
    """

    def __init__(self, u_s0_values, weights, s0):
        order = np.argsort(u_s0_values)
        self.u = np.asarray(u_s0_values)[order]
        self.w = np.asarray(weights)[order]
        self.cumw = np.concatenate([[0.0], np.cumsum(self.w)])
        self.cumuw = np.concatenate([[0.0], np.cumsum(self.u * self.w)])
        self.s0 = float(s0)

    def _index(self, s):
        return int(np.searchsorted(self.u, s - self.s0, side="left"))

    def measure(self, s):
        """phi(s): the e^{nF}-mass of the sublevel set at level s."""
        return float(self.cumw[self._index(s)])

    def sharp_mass(self, s):
        """A_s: integral of (-u_s) over the sublevel set."""
        i = self._index(s)
        theta = s - self.s0
        return float(theta * self.cumw[i] - self.cumuw[i])

    def smoothed_mass(self, s, k, floor):
        """A_{s,k}: the tau-smoothed mass over the whole chart."""
        x = (s - self.s0) - self.u
        return float(np.sum(self.w * (tau_smooth(x, k) + floor)))


def _s_grid(s0: float, points: int) -> np.ndarray:
    return np.geomspace(1e-3 * s0, s0, points)


def _record(records, check_id, instance_id, residual, slack):
    rec = CheckRecord(check_id, instance_id, float(residual), float(slack),
                      bool(residual <= slack))
    records.append(rec)
    return rec


# ---------------------------------------------------------------------------
# the chart machinery shared by torus and ball scenarios
# ---------------------------------------------------------------------------

def _chart_machinery(cfg: ScenarioConfig, op, mesh, omega, F_eff, phi_norm,
                     lam_field, records, sweep_rows, summary, instance_id):
    n = mesh.n
    h = mesh.spacing
    p = cfg.p
    ent = entropy(F_eff, omega, p)
    summary["entropy"] = ent.value
    summary["mass"] = ent.mass
    _record(records, "entropy_vs_mass", instance_id, ent.mass - ent.value, 0.0)

    x0 = mesh.argmin_node(phi_norm.data)
    r0 = cfg.geometry.r0
    if mesh.kind == "ball":
        # the chart must sit strictly inside the domain
        depth = mesh.extent - float(np.sqrt(mesh.radius2()[x0]))
        r0 = min(r0, (depth - 3.0 * h) / 2.0)
        if r0 < 4.0 * h:
            summary["chart_skipped"] = "minimum too close to the boundary"
            return
    s0 = s_cap_complex(r0)
    summary["s0"] = s0
    summary["sup_abs_phi"] = -float(np.min(phi_norm.data[mesh.valid]))

    ball, idxs = chart_ball(mesh, x0, 2.0 * r0)
    omega_ball = HermitianField(ball, restrict_to_chart(omega.data, idxs))
    det_g_ball = metric_det(omega_ball)
    enf_ball = np.exp(n * restrict_to_chart(F_eff.data, idxs))
    u_s0_ball = (restrict_to_chart(phi_norm.data, idxs)
                 - phi_norm.data[x0] + 0.5 * ball.radius2() - s0)
    # the parent-region mask matching the chart-interior nodes exactly
    weights = (det_g_ball * enf_ball * h ** (2 * n))[ball.interior]
    stair = SublevelStaircase(u_s0_ball[ball.interior], weights, s0)

    gamma = op.gamma
    tau_floor = cfg.tau_floor_rel * s0
    s_values = _s_grid(s0, cfg.s_points)
    warm = None
    psi_s0 = None
    rows = []
    slack_comp = cfg.tolerances.comparison_slack_h2 * h * h
    for s in s_values[::-1]:
        u_s_data = u_s0_ball + (s0 - s)
        A_s = stair.sharp_mass(s)
        phi_of_s = stair.measure(s)
        A_sk = stair.smoothed_mass(s, cfg.smoothing_k, tau_floor)
        dens = (tau_smooth(-u_s_data, cfg.smoothing_k) + tau_floor) \
            * enf_ball * det_g_ball / A_sk
        problem = DirichletProblem(ball, ScalarField(ball, dens),
                                   ScalarField(ball, np.zeros(ball.shape)))
        aux = solve_dirichlet_cma(problem, tol=cfg.tolerances.nonlinear,
                                  init=warm, expect_unit_mass=True)
        warm = aux.solution
        if psi_s0 is None:
            psi_s0 = aux.solution
        eps = ineq.epsilon_lemma2(A_sk, gamma, n)
        comp = ineq.comparison_residual(ScalarField(ball, u_s_data),
                                        aux.solution, eps)
        rows.append({"s": float(s), "A_s": A_s, "A_sk": A_sk,
                     "phi_of_s": phi_of_s, "eps": eps,
                     "comparison_residual": comp,
                     "aux_iterations": aux.iterations,
                     "aux_mass": aux.mass})
    rows.reverse()
    sweep_rows.extend(rows)

    comp_max = max(r["comparison_residual"] for r in rows)
    _record(records, "comparison", instance_id, comp_max, slack_comp)

    # A_s >= t * phi(s - t): checked at ten (s, t) pairs per instance
    worst = np.inf
    for s in s_values[-5:]:
        for frac in (0.25, 0.5):
            t = frac * s
            worst = min(worst, stair.sharp_mass(s) - t * stair.measure(s - t))
    _record(records, "mass_lower", instance_id, -worst,
            cfg.tolerances.float_slack * max(1.0, stair.sharp_mass(s0)))

    monotone = min(stair.measure(b) - stair.measure(a)
                   for a, b in zip(s_values[:-1], s_values[1:]))
    _record(records, "measure_monotone", instance_id, -monotone, 0.0)
    summary["measure_at_small_s"] = stair.measure(1e-4 * s0)
    summary["measure_at_s0"] = stair.measure(s0)

    d0 = ineq.delta0_exponent(p, n)
    C0 = ineq.fit_c0_scan(stair.measure, s0, d0)
    summary["fitted_C0"] = C0
    summary["delta0"] = d0
    trace = ineq.degiorgi_iterate(stair.measure, s0, C0, d0)
    summary["degiorgi_c0"] = trace.c0
    summary["degiorgi_levels"] = len(trace.s_sequence)
    _record(records, "degiorgi_floor", instance_id,
            trace.c0 - stair.measure(s0), cfg.tolerances.float_slack)

    cert = ineq.min_bound_certificate(phi_norm, F_eff, omega, p, ent, trace,
                                      details=True)
    summary["certificate"] = cert.value
    summary["certificate_log"] = cert.log_value
    _record(records, "certificate_dominates", instance_id,
            summary["sup_abs_phi"] - cert.value, 0.0)

    if lam_field is not None and n >= 2:
        _, theta_res, _ = tensors.theta_tensor(op, lam_field, omega)
        _record(records, "theta_floor", instance_id, -theta_res, 1e-10)
        summary["theta_residual"] = theta_res

    # exponential-integral table for the unit-mass auxiliary potential
    vol_ball = integrate(ScalarField(ball, np.ones(ball.shape)), omega_ball)
    alphas = [0.1 * 2 ** j for j in range(8)]
    kol = {repr(a): ineq.kolodziej_integral(psi_s0, a, omega_ball)
           for a in alphas}
    fitted_alpha = 0.0
    for a in alphas:
        if kol[repr(a)] <= 2.0 * vol_ball:
            fitted_alpha = a
    summary["kolodziej"] = {"volume": vol_ball, "table": kol,
                            "fitted_alpha": fitted_alpha}


# ---------------------------------------------------------------------------
# scenario drivers
# ---------------------------------------------------------------------------

def _torus_pipeline(cfg, op, mesh, omega, F, records, sweep_rows, summary):
    instance_id = cfg.scenario_hash()[:12]
    rep = solve_periodic_fnl(op, omega, F, tol=cfg.tolerances.nonlinear)
    phi = rep.solution
    summary["b_constant"] = rep.b_constant
    summary["solver_iterations"] = rep.iterations
    _record(records, "solver_residual", instance_id, rep.residual_inf,
            cfg.tolerances.nonlinear)
    gphi = HermitianField(mesh, omega.data + dd_bar(phi).data)
    lam = pencil_eigenvalues(omega, gphi, check=False)
    violations = int(np.sum(~in_cone(lam[mesh.interior], op.cone)))
    _record(records, "cone_membership", instance_id, float(violations), 0.0)
    F_eff = ScalarField(mesh, F.data + rep.b_constant)
    _chart_machinery(cfg, op, mesh, omega, F_eff, phi, lam, records,
                     sweep_rows, summary, instance_id)
    return phi, F_eff


def _ball_pipeline(cfg, op, mesh, omega, F, records, sweep_rows, summary):
    """Dirichlet scenario; the main equation is wired for the
    geometric-mean operator via the potential substitution u = |z|^2 + phi."""
    instance_id = cfg.scenario_hash()[:12]
    if not isinstance(op.family, MongeAmpere):
        raise ParameterError("ball scenarios support the monge_ampere family")
    if cfg.metric.kind != "identity":
        raise ParameterError("the ball potential substitution needs the "
                             "identity background metric")
    n = mesh.n
    h = mesh.spacing
    rho2 = mesh.radius2()
    x1 = mesh.grid_axis(0) * np.ones(mesh.shape)
    rho_data = cfg.boundary_amplitude * x1 / mesh.extent
    dens = np.exp(n * F.data) * metric_det(omega)
    u_boundary = ScalarField(mesh, rho_data + rho2)
    problem = DirichletProblem(mesh, ScalarField(mesh, dens), u_boundary)
    rep = solve_dirichlet_cma(problem, tol=cfg.tolerances.nonlinear)
    summary["solver_iterations"] = rep.iterations
    _record(records, "solver_residual", instance_id, rep.residual_inf,
            cfg.tolerances.nonlinear)
    phi = ScalarField(mesh, rep.solution.data - rho2)
    lam = np.linalg.eigvalsh(dd_bar(rep.solution).data)
    violations = int(np.sum(~in_cone(lam[mesh.interior], op.cone)))
    _record(records, "cone_membership", instance_id, float(violations), 0.0)

    # comparison against the linear Dirichlet solution: sup (phi + h) on the
    # boundary dominates the interior (one-sided, first-order boundary slack)
    h_lin = solve_dirichlet_linear(omega, n + 1.0, mesh,
                                   tol=cfg.tolerances.linear)
    lhs = float(np.max((phi.data + h_lin.data)[mesh.valid]))
    rhs = float(np.max(rho_data[mesh.boundary])) if np.any(mesh.boundary) else 0.0
    _record(records, "upper_bound_boundary", instance_id, lhs - rhs, 10.0 * h)
    sup_rho = float(np.max(np.abs(rho_data[mesh.boundary])))
    l1 = integrate(ScalarField(mesh, np.abs(phi.data)), omega)
    sup_abs = float(np.max(np.abs(phi.data[mesh.valid])))
    fitted_C = max(sup_abs - sup_rho, 0.0) / (1.0 + l1 ** 2)
    summary["dirichlet_shape"] = {"sup_abs_phi": sup_abs, "sup_rho": sup_rho,
                                  "l1": l1, "fitted_C": fitted_C}
    phi_norm = sup_normalize(phi)
    F_eff = F
    _chart_machinery(cfg, op, mesh, omega, F_eff, phi_norm, lam, records,
                     sweep_rows, summary, instance_id)
    return phi, F_eff


def run_scenario(cfg: ScenarioConfig, out_root=None, persist: bool = True) -> RunReport:
    cfg.validate()
    t_start = time.perf_counter()
    records: list = []
    sweep_rows: list = []
    summary: dict = {}
    geo = cfg.geometry
    if geo.kind == "torus":
        mesh = make_torus_mesh(geo.n, geo.m, geo.extent)
    else:
        mesh = make_ball_mesh(geo.n, geo.m, geo.extent)
    omega = build_metric(mesh, cfg.metric.kind, cfg.metric.delta, cfg.metric.seed)
    F = build_forcing(mesh, cfg.forcing.family, cfg.forcing.amplitude,
                      cfg.forcing.seed, center=cfg.forcing.center,
                      concentration=cfg.forcing.concentration)
    op = cfg.operator.build(geo.n)
    status = 0
    phi = F_eff = None
    try:
        if geo.kind == "torus":
            phi, F_eff = _torus_pipeline(cfg, op, mesh, omega, F, records,
                                         sweep_rows, summary)
        else:
            phi, F_eff = _ball_pipeline(cfg, op, mesh, omega, F, records,
                                        sweep_rows, summary)
    except (NonConvergenceError, NumericError) as exc:
        summary["failure"] = str(exc)
        records.append(CheckRecord("solver_converged", cfg.scenario_hash()[:12],
                                   float("inf"), 0.0, False))
        status = 2
    wanted = set(cfg.checks)
    kept = [r for r in records if r.check_id in wanted or
            r.check_id == "solver_converged"]
    if status == 0 and any(not r.passed for r in kept):
        status = 3
    report = RunReport(cfg.scenario_hash(), cfg.to_json_dict(), records,
                       summary, sweep_rows, status,
                       timings={"total_s": time.perf_counter() - t_start})
    if persist:
        _persist(report, cfg, out_root, phi, F_eff, omega)
    return report


def _persist(report: RunReport, cfg, out_root, phi, F_eff, omega):
    root = output_root(out_root if out_root is not None else cfg.output_dir)
    run_dir = root / report.scenario_hash[:12]
    run_dir.mkdir(parents=True, exist_ok=True)
    write_json(report.to_json_dict(), run_dir / "report.json")
    write_json({"timings": report.timings}, run_dir / "timings.json")
    write_json(cfg.to_json_dict(), run_dir / "scenario.json")
    if report.sweep_rows:
        write_csv(report.sweep_rows, run_dir / "sweep.csv")
    fields_dir = run_dir / "fields"
    fields_dir.mkdir(exist_ok=True)
    if phi is not None:
        save_field(phi, fields_dir / "phi.fnlb")
        save_field(F_eff, fields_dir / "F_eff.fnlb")
        save_field(omega, fields_dir / "omega.fnlb")
        write_json({"p": cfg.p, "operator": cfg.to_json_dict()["operator"]},
                   fields_dir / "meta.json")
    return run_dir


# ---------------------------------------------------------------------------
# entropy sweep
# ---------------------------------------------------------------------------

def sweep_entropy(base: ScenarioConfig, amplitudes, out_root=None,
                  workers: int = 1, variants=None):
    """Run the base scenario across forcing amplitudes; tabulate the
    sup-bound data.  ``variants`` optionally lists (suffix, mutate)
    callables producing paired scenarios (e.g. symmetry copies) per
    amplitude."""
    variants = variants or [("", lambda c: c)]
    members = []
    for amp in amplitudes:
        for suffix, mutate in variants:
            cfg = ScenarioConfig.from_json_dict(base.to_json_dict())
            cfg.forcing.amplitude = float(amp)
            cfg = mutate(cfg)
            members.append((amp, suffix, cfg))
    reports = []
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_scenario, cfg, out_root) for _, _, cfg in members]
            reports = [f.result() for f in futures]
    else:
        reports = [run_scenario(cfg, out_root) for _, _, cfg in members]
    rows = []
    for (amp, suffix, cfg), rep in zip(members, reports):
        rows.append({
            "amplitude": float(amp),
            "variant": suffix or "base",
            "scenario_hash": rep.scenario_hash[:12],
            "entropy": rep.summary.get("entropy", float("nan")),
            "mass": rep.summary.get("mass", float("nan")),
            "sup_abs_phi": rep.summary.get("sup_abs_phi", float("nan")),
            "certificate_log": rep.summary.get("certificate_log", float("nan")),
            "fitted_C0": rep.summary.get("fitted_C0", float("nan")),
            "status": rep.status,
        })
    order = np.argsort([r["scenario_hash"] for r in rows])
    rows = [rows[i] for i in order]
    if out_root is not None or base.output_dir:
        root = output_root(out_root if out_root is not None else base.output_dir)
        write_csv(rows, root / "entropy_sweep.csv")
    return rows, reports
