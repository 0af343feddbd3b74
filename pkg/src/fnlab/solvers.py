"""Solvers for the model equations on torus and ball meshes.

Four solves are provided:

* ``solve_periodic_fnl``   f(lambda[h_phi]) = e^(F+b) on a torus, with the
  additive constant b determined alongside phi and sup phi = 0;
* ``solve_dirichlet_cma``  det(complex Hessian psi) = density on a ball,
  psi plurisubharmonic, Dirichlet data on the boundary band;
* ``solve_dirichlet_rma``  det(real Hessian psi) = density on a ball,
  psi convex, Dirichlet data on the boundary band;
* ``solve_dirichlet_linear``  metric Laplacian equal to a constant.

All nonlinear solves are damped Newton iterations on the log-form residual,
whose linearization is the metric-trace operator with coefficient matrix
G given by the operator gradient in the pencil eigenbasis.  That complex
coefficient matrix is turned into a real symmetric one over the 2n real
axes ("realified"), assembled as a sparse matrix with second-order
stencils, and solved directly when small or by preconditioned LGMRES
(FFT on tori, discrete-sine on boxes) when large.

A Newton step that would leave the admissible cone (or lose convexity /
plurisubharmonicity) is halved up to 40 times; if that fails once, the
iterate is shifted by a small quadratic barrier and the solve retried.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.fft
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import cone_ops
from .cone_ops import OperatorSpec, in_cone
from .errors import (ConvexityError, GeometryError, NonConvergenceError,
                     NumericError, ParameterError)
from .fields import (HermitianField, ScalarField, VOLUME_FACTOR, _eigvalsh2,
                     dd_bar, pencil_eigensystem, real_hessian)
from .geometry import Mesh

DEFAULT_TOL_LINEAR = 1e-8
DEFAULT_TOL_NONLINEAR = 1e-6
MAX_HALVINGS = 40

# Eigenvalue floor (relative) used when keeping iterates strictly
# plurisubharmonic / convex during line searches.
PSH_FLOOR = 1e-14


# ---------------------------------------------------------------------------
# realification of the linearized operator
# ---------------------------------------------------------------------------

def realify_hermitian(G: np.ndarray) -> np.ndarray:
    """Real symmetric coefficients Q with sum_ab Q_ab d_a d_b = tr(G ddbar).

    Axes interleaved (x1, y1, ..., xn, yn).  For Hermitian positive
    definite G the result is positive definite, so the linearized operator
    stays elliptic.
    """
    n = G.shape[-1]
    A = G.real
    B = G.imag
    d = 2 * n
    Q = np.zeros(G.shape[:-2] + (d, d))
    for j in range(n):
        for k in range(n):
            Q[..., 2 * j, 2 * k] = 0.25 * A[..., j, k]
            Q[..., 2 * j + 1, 2 * k + 1] = 0.25 * A[..., j, k]
            Q[..., 2 * j, 2 * k + 1] = 0.25 * B[..., j, k]
            Q[..., 2 * k + 1, 2 * j] = 0.25 * B[..., j, k]
    return Q


def stencil_offsets(dim: int):
    """Offsets of the second-order stencil: center, axes, diagonal pairs."""
    offsets = [tuple([0] * dim)]
    for a in range(dim):
        for s in (1, -1):
            off = [0] * dim
            off[a] = s
            offsets.append(tuple(off))
    for a in range(dim):
        for b in range(a + 1, dim):
            for sa in (1, -1):
                for sb in (1, -1):
                    off = [0] * dim
                    off[a], off[b] = sa, sb
                    offsets.append(tuple(off))
    return offsets


class StencilAssembler:
    """Sparse assembly of sum_ab Q_ab d_a d_b over the unknown nodes.

    Index structure (rows, neighbor columns, Dirichlet hits) is precomputed
    once per (mesh, unknown set); only coefficient values change between
    Newton iterations.
    """

    def __init__(self, mesh: Mesh, unknown_mask: np.ndarray):
        self.mesh = mesh
        self.unknown_mask = unknown_mask
        dim = 2 * mesh.n
        self.dim = dim
        self.offsets = stencil_offsets(dim)
        n_total = mesh.node_count
        unk_id = -np.ones(n_total, dtype=np.int64)
        flat_mask = unknown_mask.ravel()
        self.n_unknowns = int(flat_mask.sum())
        unk_id[flat_mask] = np.arange(self.n_unknowns)
        base = np.arange(n_total).reshape(mesh.shape)
        self._rows = []
        self._cols = []
        self._interior_valid = []  # neighbor is an unknown
        self._bdry_cols = []       # neighbor flat index when Dirichlet
        rows_all = unk_id[flat_mask]
        for off in self.offsets:
            nb = base
            for a, s in enumerate(off):
                if s:
                    nb = np.roll(nb, -s, axis=a)
            nb_flat = nb.ravel()[flat_mask]
            cols = unk_id[nb_flat]
            valid = cols >= 0
            self._rows.append(rows_all[valid])
            self._cols.append(cols[valid])
            self._interior_valid.append(valid)
            self._bdry_cols.append(nb_flat[~valid])

    def coefficient_arrays(self, Q: np.ndarray):
        """Per-offset stencil coefficients restricted to unknown nodes."""
        mesh = self.mesh
        h2 = mesh.spacing ** 2
        mask = self.unknown_mask
        coeffs = []
        diag_sum = np.zeros(self.n_unknowns)
        for a in range(self.dim):
            diag_sum += Q[..., a, a][mask]
        for off in self.offsets:
            nz = [a for a, s in enumerate(off) if s]
            if not nz:
                coeffs.append(-2.0 * diag_sum / h2)
            elif len(nz) == 1:
                a = nz[0]
                coeffs.append(Q[..., a, a][mask] / h2)
            else:
                a, b = nz
                sign = off[a] * off[b]
                coeffs.append(sign * Q[..., a, b][mask] / (2.0 * h2))
        return coeffs

    def assemble(self, Q: np.ndarray, boundary_values: np.ndarray | None = None):
        """Matrix over unknowns and the RHS correction from Dirichlet data.

        ``boundary_values`` is the full-grid array of current values; only
        its boundary-band entries are read.  The correction c satisfies
        A_full * v = A_uu * v_u + c, so Dirichlet problems solve
        A_uu x = rhs - c and Newton increments (zero on the band) ignore c.
        """
        coeffs = self.coefficient_arrays(Q)
        rows = np.concatenate([r for r in self._rows])
        cols = np.concatenate([c for c in self._cols])
        vals = np.concatenate([c[v] for c, v in zip(coeffs, self._interior_valid)])
        A = sp.csr_matrix((vals, (rows, cols)),
                          shape=(self.n_unknowns, self.n_unknowns))
        correction = np.zeros(self.n_unknowns)
        if boundary_values is not None:
            flat_vals = boundary_values.ravel()
            rows_all = np.arange(self.n_unknowns)
            for off_i, off in enumerate(self.offsets):
                invalid = ~self._interior_valid[off_i]
                if not np.any(invalid):
                    continue
                np.add.at(correction, rows_all[invalid],
                          coeffs[off_i][invalid] * flat_vals[self._bdry_cols[off_i]])
        return A, correction

    def apply(self, Q, values_full):
        """Dense application of the operator to a full-grid array (testing)."""
        A, corr = self.assemble(Q, values_full)
        return A @ values_full[self.unknown_mask] + corr


# ---------------------------------------------------------------------------
# linear solves with structure-aware preconditioners
# ---------------------------------------------------------------------------

class DirichletBoxPreconditioner:
    """Approximate inverse via a diagonally scaled Dirichlet box solve.

    The variable-coefficient operator is symmetrically scaled by the local
    coefficient magnitude, leaving a near-unit-coefficient operator that a
    discrete sine transform diagonalizes on the bounding box; the result
    is restricted back to the unknown set.
    """

    def __init__(self, mesh: Mesh, unknown_mask: np.ndarray, axis_coeffs,
                 scale=None):
        self.mesh = mesh
        self.mask = unknown_mask
        self.scale = scale  # per-unknown 1/sqrt(local coefficient)
        h2 = mesh.spacing ** 2
        sym = np.zeros(mesh.shape)
        for a, c in enumerate(axis_coeffs):
            k = np.arange(mesh.shape[a])
            lam = c * (2.0 - 2.0 * np.cos(np.pi * (k + 1) / (mesh.shape[a] + 1))) / h2
            shape = [1] * len(mesh.shape)
            shape[a] = mesh.shape[a]
            sym = sym + lam.reshape(shape)
        self.symbol = -sym  # operator ~ -positive definite

    def __call__(self, r):
        if self.scale is not None:
            r = r * self.scale
        box = np.zeros(self.mesh.shape)
        box[self.mask] = r
        hat = scipy.fft.dstn(box, type=1)
        hat /= self.symbol
        out = scipy.fft.idstn(hat, type=1)[self.mask]
        if self.scale is not None:
            out = out * self.scale
        return out

    def as_linear_operator(self):
        n = int(self.mask.sum())
        return spla.LinearOperator((n, n), matvec=self)


class TorusPreconditioner:
    """FFT inverse of the mean-coefficient operator on the periodic grid.

    Handles the bordered system (operator plus unknown additive constant
    with a zero-mean closure): the zero Fourier mode is exchanged against
    the constant.
    """

    def __init__(self, mesh: Mesh, axis_coeffs, bordered: bool):
        h2 = mesh.spacing ** 2
        sym = np.zeros(mesh.shape)
        for a, c in enumerate(axis_coeffs):
            k = np.arange(mesh.shape[a])
            lam = c * (2.0 * np.cos(2.0 * np.pi * k / mesh.shape[a]) - 2.0) / h2
            shape = [1] * len(mesh.shape)
            shape[a] = mesh.shape[a]
            sym = sym + lam.reshape(shape)
        zero = tuple([0] * len(mesh.shape))
        sym[zero] = 1.0  # placeholder, zero mode treated separately
        self.symbol = sym
        self.mesh = mesh
        self.bordered = bordered
        self.size = mesh.node_count + (1 if bordered else 0)

    def __call__(self, v):
        mesh = self.mesh
        N = mesh.node_count
        r = v[:N].reshape(mesh.shape)
        hat = scipy.fft.fftn(r)
        zero = tuple([0] * len(mesh.shape))
        mean_r = hat[zero] / N
        hat = hat / self.symbol
        hat[zero] = 0.0
        dphi = scipy.fft.ifftn(hat).real
        if not self.bordered:
            return dphi.ravel()
        db = -mean_r.real
        dphi = dphi + v[N]  # honor requested mean
        return np.concatenate([dphi.ravel(), [db]])

    def as_linear_operator(self):
        return spla.LinearOperator((self.size, self.size), matvec=self)


def _solve_sparse(A, b, mesh=None, unknown_mask=None, axis_coeffs=None,
                  tol=1e-10, scale=None):
    """Direct solve when affordable, otherwise preconditioned LGMRES.

    ``scale`` is the optional per-unknown inverse square root of the local
    coefficient magnitude, used to keep the sine-transform preconditioner
    effective for strongly varying Hessians.
    """
    n = A.shape[0]
    dim2 = 2 * mesh.n if mesh is not None else 2
    if n <= 6000 or (dim2 <= 2 and n <= 80000):
        return spla.spsolve(A.tocsc(), b)
    M = None
    if mesh is not None and unknown_mask is not None and axis_coeffs is not None:
        M = DirichletBoxPreconditioner(mesh, unknown_mask, axis_coeffs,
                                       scale=scale).as_linear_operator()
    x, info = spla.lgmres(A, b, M=M, rtol=tol, atol=tol * (1.0 + np.linalg.norm(b)),
                          maxiter=400)
    if info != 0:
        x, info = spla.lgmres(A, b, M=M, rtol=tol * 10, atol=0.0, maxiter=1200)
        if info != 0:
            raise NumericError(f"inner linear solve stalled (info={info})")
    return x


# ---------------------------------------------------------------------------
# problem and report containers
# ---------------------------------------------------------------------------

@dataclass
class DirichletProblem:
    """Right-hand density and boundary data for an auxiliary ball solve."""

    mesh: Mesh
    density: ScalarField
    boundary: ScalarField

    def __post_init__(self):
        if self.mesh.kind != "ball":
            raise ParameterError("Dirichlet problems live on ball meshes")
        if np.any(self.density.data[self.mesh.interior] < 0):
            raise ParameterError("density must be nonnegative")
        if not np.all(np.isfinite(self.boundary.data[self.mesh.boundary])):
            raise ParameterError("boundary data must be finite")


@dataclass
class SolveReport:
    solution: ScalarField
    residual_inf: float
    iterations: int
    b_constant: float | None = None
    cone_violations: int = 0
    mass: float | None = None
    converged: bool = True
    timings: dict = field(default_factory=dict)

    def to_json_dict(self):
        return {
            "residual_inf": self.residual_inf,
            "iterations": self.iterations,
            "b_constant": self.b_constant,
            "cone_violations": self.cone_violations,
            "mass": self.mass,
            "converged": self.converged,
            "timings": {k: round(v, 6) for k, v in self.timings.items()},
        }


# ---------------------------------------------------------------------------
# linear Dirichlet equation
# ---------------------------------------------------------------------------

def _linear_dirichlet(omega: HermitianField, rhs_field: np.ndarray, mesh: Mesh,
                      boundary_data: np.ndarray, tol=DEFAULT_TOL_LINEAR):
    Ginv = np.linalg.inv(omega.data)
    Q = realify_hermitian(Ginv)
    assembler = StencilAssembler(mesh, mesh.interior)
    full = np.zeros(mesh.shape)
    full[mesh.boundary] = boundary_data[mesh.boundary]
    A, corr = assembler.assemble(Q, full)
    rhs = rhs_field[mesh.interior] - corr
    axis_coeffs = [float(np.mean(Q[..., a, a][mesh.interior])) for a in range(2 * mesh.n)]
    x = _solve_sparse(A, rhs, mesh, mesh.interior, axis_coeffs, tol=tol)
    full[mesh.interior] = x
    return ScalarField(mesh, full)


def solve_dirichlet_linear(omega: HermitianField, rhs: float, mesh: Mesh,
                           tol: float = DEFAULT_TOL_LINEAR) -> ScalarField:
    """Solve metric-Laplacian h = rhs with zero boundary data on a ball."""
    from .fields import check_positive_definite
    check_positive_definite(omega)
    rhs_field = np.full(mesh.shape, float(rhs))
    zero = np.zeros(mesh.shape)
    return _linear_dirichlet(omega, rhs_field, mesh, zero, tol=tol)


# ---------------------------------------------------------------------------
# damped Newton core for Dirichlet Monge-Ampere problems
# ---------------------------------------------------------------------------

def _newton_level(mesh, assembler, psi, residual_fn, coeff_fn, admissible_fn,
                  tol, max_iter, failure_cls, failure_msg):
    """Damped Newton at one cone-shift level; returns (psi, r_det, its)."""
    if not admissible_fn(psi):
        raise failure_cls(failure_msg + " (initial iterate inadmissible)")
    r_log, r_det = residual_fn(psi)
    iterations = 0
    while iterations < max_iter:
        if r_det <= tol:
            break
        Q = coeff_fn(psi)
        A, _ = assembler.assemble(Q)
        diag = sum(Q[..., a, a][mesh.interior] for a in range(2 * mesh.n))
        diag /= 2 * mesh.n
        local_scale = 1.0 / np.sqrt(np.maximum(diag, 1e-300))
        axis_coeffs = [1.0] * (2 * mesh.n)
        delta = _solve_sparse(A, -r_log[mesh.interior], mesh, mesh.interior,
                              axis_coeffs, tol=1e-8, scale=local_scale)
        scale = float(np.max(np.abs(r_log[mesh.interior])))
        t = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS):
            trial = psi.copy()
            trial.data[mesh.interior] += t * delta
            if admissible_fn(trial):
                trial_log, trial_det = residual_fn(trial)
                new_scale = float(np.max(np.abs(trial_log[mesh.interior])))
                if new_scale <= (1.0 - 1e-4 * t) * scale or trial_det <= tol:
                    psi, r_log, r_det = trial, trial_log, trial_det
                    accepted = True
                    break
            t *= 0.5
        iterations += 1
        if not accepted:
            raise failure_cls(failure_msg, last_residual=r_det)
    else:
        raise NonConvergenceError(
            f"Newton did not reach tol={tol} in {max_iter} iterations",
            last_residual=r_det)
    return psi, r_det, iterations


def _newton_dirichlet(problem, make_level, hessian_min_eig, init, tol,
                      max_iter, failure_cls, failure_msg,
                      curvature_scale: float):
    """Cone-shift continuation around the damped Newton core.

    ``make_level(delta)`` returns (residual_fn, coeff_fn, admissible_fn)
    for the shifted equation det(Hessian + delta*I) = density.  The shift
    makes any seed admissible regardless of rim roughness; it is walked
    down geometrically to zero, warm-starting each level, and the final
    level solves the original equation to the requested tolerance.
    """
    mesh = problem.mesh
    assembler = StencilAssembler(mesh, mesh.interior)
    t0 = time.perf_counter()
    seed_floor = hessian_min_eig(init)
    delta = 0.0
    if seed_floor <= PSH_FLOOR:
        delta = 1.5 * max(-seed_floor, 0.0) + 0.05 * curvature_scale
    levels = []
    d = delta
    while d > 1e-3 * curvature_scale:
        levels.append(d)
        d /= 4.0
    levels.append(0.0)
    psi = init
    iterations = 0
    for level, d in enumerate(levels):
        residual_fn, coeff_fn, admissible_fn = make_level(d)
        final = level == len(levels) - 1
        level_tol = tol if final else max(tol, 1e-4 * curvature_scale ** mesh.n)
        psi, r_det, its = _newton_level(
            mesh, assembler, psi, residual_fn, coeff_fn, admissible_fn,
            level_tol, max_iter, failure_cls, failure_msg)
        iterations += its
    timings = {"solve_s": time.perf_counter() - t0, "shift_levels": len(levels)}
    return psi, r_det, iterations, timings


def _initial_dirichlet_guess(problem: DirichletProblem,
                             complex_trace_rhs: np.ndarray) -> ScalarField:
    """Linear-solve seed: the trace equation with the problem's boundary data.

    A conformal Hessian kappa*I has trace matching the target determinant,
    so the Poisson-type solve lands near the solution for near-radial
    data; admissibility is the continuation's concern, not the seed's.
    """
    mesh = problem.mesh
    omega = _euclidean_metric(mesh)
    seed = _linear_dirichlet(omega, complex_trace_rhs, mesh, problem.boundary.data)
    seed.data[mesh.boundary] = problem.boundary.data[mesh.boundary]
    return seed


def _euclidean_metric(mesh: Mesh) -> HermitianField:
    n = mesh.n
    eye = np.zeros(mesh.shape + (n, n), dtype=complex)
    idx = np.arange(n)
    eye[..., idx, idx] = 1.0
    return HermitianField(mesh, eye)


def solve_dirichlet_cma(problem: DirichletProblem, tol: float = DEFAULT_TOL_NONLINEAR,
                        max_iter: int = 60, expect_unit_mass: bool = False,
                        init: ScalarField | None = None) -> SolveReport:
    """det(complex Hessian psi) = density, psi plurisubharmonic, Dirichlet data.

    The reported mass is the discrete Monge-Ampere volume
    sum(det complex Hessian) * h^(2n) over interior nodes.  An optional
    ``init`` warm-starts Newton (its boundary band is overwritten with the
    problem data and it must already be admissible, else it is ignored).
    """
    mesh = problem.mesh
    if np.any(problem.density.data[mesh.interior] <= 0):
        raise ParameterError("density must be strictly positive on interior nodes")
    if expect_unit_mass and np.any(problem.boundary.data[mesh.boundary] != 0.0):
        raise ParameterError("unit-mass normalization requires zero boundary data")
    log_rho = np.log(problem.density.data)
    interior = mesh.interior
    n = mesh.n
    eye = np.eye(n)

    def min_eig(psi):
        H = dd_bar(psi).data[interior]
        w = _eigvalsh2(H) if n == 2 else np.linalg.eigvalsh(H)
        return float(np.min(w[..., 0]))

    def make_level(delta):
        shift = delta * eye

        def admissible(psi):
            H = dd_bar(psi).data[interior]
            w = _eigvalsh2(H) if n == 2 else np.linalg.eigvalsh(H)
            return bool(np.all(w[..., 0] + delta > PSH_FLOOR))

        def residual(psi):
            H = dd_bar(psi).data[interior] + shift
            det = np.linalg.det(H).real
            r_log = np.zeros(mesh.shape)
            r_log[interior] = np.log(np.maximum(det, 1e-300)) - log_rho[interior]
            r_det = float(np.max(np.abs(det - problem.density.data[interior])))
            return r_log, r_det

        def coefficients(psi):
            H = dd_bar(psi).data[interior] + shift
            G = np.zeros(mesh.shape + (n, n), dtype=complex)
            G[interior] = np.linalg.inv(H)
            return realify_hermitian(G)

        return residual, coefficients, admissible

    curvature = float(np.mean(problem.density.data[interior] ** (1.0 / n)))
    warm = None
    if init is not None:
        warm = init.copy()
        warm.data[mesh.boundary] = problem.boundary.data[mesh.boundary]
        if min_eig(warm) <= PSH_FLOOR:
            warm = None
    if warm is None:
        # conformal seed: complex trace n * rho^(1/n) matches det = rho
        warm = _initial_dirichlet_guess(
            problem, n * problem.density.data ** (1.0 / n))
    psi, r_det, iterations, timings = _newton_dirichlet(
        problem, make_level, min_eig, warm, tol, max_iter,
        NonConvergenceError, "plurisubharmonicity lost", curvature)
    det = np.linalg.det(dd_bar(psi).data[interior]).real
    mass = float(np.sum(det) * mesh.spacing ** (2 * mesh.n)) * VOLUME_FACTOR
    return SolveReport(psi, r_det, iterations, mass=mass, timings=timings)


def solve_dirichlet_rma(problem: DirichletProblem, tol: float = DEFAULT_TOL_NONLINEAR,
                        max_iter: int = 60) -> SolveReport:
    """det(real Hessian psi) = density over the 2n real coordinates, psi convex."""
    mesh = problem.mesh
    if np.any(problem.density.data[mesh.interior] <= 0):
        raise ParameterError("density must be strictly positive on interior nodes")
    log_rho = np.log(problem.density.data)
    interior = mesh.interior
    dim = 2 * mesh.n
    eye = np.eye(dim)

    def min_eig(psi):
        w = np.linalg.eigvalsh(real_hessian(psi)[interior])
        return float(np.min(w[..., 0]))

    def make_level(delta):
        shift = delta * eye

        def admissible(psi):
            w = np.linalg.eigvalsh(real_hessian(psi)[interior])
            return bool(np.all(w[..., 0] + delta > PSH_FLOOR))

        def residual(psi):
            R = real_hessian(psi)[interior] + shift
            det = np.linalg.det(R)
            r_log = np.zeros(mesh.shape)
            r_log[interior] = np.log(np.maximum(det, 1e-300)) - log_rho[interior]
            r_det = float(np.max(np.abs(det - problem.density.data[interior])))
            return r_log, r_det

        def coefficients(psi):
            R = real_hessian(psi)[interior] + shift
            Q = np.zeros(mesh.shape + (dim, dim))
            Q[interior] = np.linalg.inv(R)
            return Q

        return residual, coefficients, admissible

    # conformal seed: real trace 2n * rho^(1/2n) matches det = rho; the
    # linear solver works in the complex-trace convention (one quarter of
    # the real trace for the identity metric)
    curvature = float(np.mean(problem.density.data[interior] ** (1.0 / dim)))
    init = _initial_dirichlet_guess(
        problem, 0.25 * dim * problem.density.data ** (1.0 / dim))
    psi, r_det, iterations, timings = _newton_dirichlet(
        problem, make_level, min_eig, init, tol, max_iter,
        ConvexityError, "convexity lost", curvature)
    det = np.linalg.det(real_hessian(psi)[interior])
    mass = float(np.sum(det) * mesh.spacing ** (2 * mesh.n))
    return SolveReport(psi, r_det, iterations, mass=mass, timings=timings)


# ---------------------------------------------------------------------------
# the periodic fully nonlinear equation
# ---------------------------------------------------------------------------

def solve_periodic_fnl(op: OperatorSpec, omega: HermitianField, F: ScalarField,
                       tol: float = DEFAULT_TOL_NONLINEAR,
                       max_iter: int = 60) -> SolveReport:
    """Solve f(lambda[h_phi]) = e^(F+b) on a torus with sup phi = 0.

    The additive constant b absorbs the discrete solvability normalization;
    it is solved together with phi through a bordered Newton system closed
    by a zero-mean constraint (the final sup-normalization only shifts phi
    by a constant, which the equation does not see).
    """
    mesh = F.mesh
    if mesh.kind != "torus":
        raise ParameterError("periodic solve needs a torus mesh")
    w_bg = np.linalg.eigvalsh(omega.data)
    if w_bg.min() < 0.5 - 1e-12 or w_bg.max() > 2.0 + 1e-12:
        raise GeometryError("background metric violates the 1/2 <= omega <= 2 "
                            "normalization of the coordinate chart")
    N = mesh.node_count
    phi = np.zeros(mesh.shape)
    ones = np.ones(op.n)
    b = float(np.mean(np.log(cone_ops.f_value(op, ones)) - F.data))
    t0 = time.perf_counter()

    def state(phi_arr):
        gphi = omega.data + dd_bar(ScalarField(mesh, phi_arr)).data
        lam, V = pencil_eigensystem(omega, HermitianField(mesh, gphi))
        return lam, V

    def in_cone_everywhere(lam):
        return bool(np.all(in_cone(lam, op.cone, tol=cone_ops.INTERIOR_TOL)))

    lam, V = state(phi)
    assembler = StencilAssembler(mesh, mesh.interior)
    iterations = 0
    while iterations < max_iter:
        fval = cone_ops.f_value(op, lam, check=False)
        r = np.log(fval) - F.data - b
        res_det = float(np.max(np.abs(fval - np.exp(F.data + b))))
        if res_det <= tol:
            break
        mu = cone_ops.f_gradient(op, lam, check=False) / fval[..., None]
        G = np.einsum("...ij,...j,...kj->...ik", V, mu, V.conj())
        Q = realify_hermitian(G)
        A, _ = assembler.assemble(Q)
        axis_coeffs = [float(np.mean(Q[..., a, a])) for a in range(2 * mesh.n)]
        precond = TorusPreconditioner(mesh, axis_coeffs, bordered=True)

        def matvec(v):
            top = A @ v[:N] - v[N]
            bottom = np.mean(v[:N])
            return np.concatenate([top, [bottom]])

        operator = spla.LinearOperator((N + 1, N + 1), matvec=matvec)
        rhs = np.concatenate([-r.ravel(), [0.0]])
        sol, info = spla.lgmres(operator, rhs, M=precond.as_linear_operator(),
                                rtol=1e-10, atol=1e-12 * (1 + np.linalg.norm(rhs)),
                                maxiter=300)
        if info != 0:
            raise NumericError(f"bordered Newton solve stalled (info={info})")
        dphi = sol[:N].reshape(mesh.shape)
        db = float(sol[N])
        scale = float(np.max(np.abs(r)))
        t = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS):
            trial_phi = phi + t * dphi
            trial_lam, trial_V = state(trial_phi)
            if in_cone_everywhere(trial_lam):
                trial_f = cone_ops.f_value(op, trial_lam, check=False)
                trial_r = np.log(trial_f) - F.data - (b + t * db)
                if float(np.max(np.abs(trial_r))) <= (1.0 - 1e-4 * t) * scale:
                    phi, b = trial_phi, b + t * db
                    lam, V = trial_lam, trial_V
                    accepted = True
                    break
            t *= 0.5
        iterations += 1
        if not accepted:
            raise NonConvergenceError(
                "damped step rejected 40 times (cone exit unrecoverable)",
                last_residual=scale)
    else:
        fval = cone_ops.f_value(op, lam, check=False)
        res_det = float(np.max(np.abs(fval - np.exp(F.data + b))))
        raise NonConvergenceError(
            f"Newton did not reach tol={tol} in {max_iter} iterations",
            last_residual=res_det)
    phi = phi - float(np.max(phi))
    timings = {"solve_s": time.perf_counter() - t0}
    return SolveReport(ScalarField(mesh, phi), res_det, iterations,
                       b_constant=b, cone_violations=0, timings=timings)
