"""Tensor-level checks: the positive coefficient tensor of the trace-form
linearization, the maximum-principle bounds for the real auxiliary
potential, the real/complex Hessian determinant comparison, and the
volume-floor experiment.

All contracts here are measured minima of quantities the theory asserts
to be nonnegative; slacks cover floating point and discretization only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import cone_ops
from .cone_ops import OperatorSpec, in_cone
from .errors import ParameterError, PreconditionError
from .fields import (HermitianField, ScalarField, complex_hessian_from_real,
                     dd_bar, entropy as entropy_of, gradient_norm, integrate,
                     metric_det, pencil_eigenvalues, real_hessian)


# ---------------------------------------------------------------------------
# the (n-1)-form coefficient tensor
# ---------------------------------------------------------------------------

def theta_eigenframe(op: OperatorSpec, lam: np.ndarray):
    """Diagonal of the coefficient tensor in the pencil eigenframe.

    With mu_i the log-gradient of the operator, the tensor is diagonal
    with entries (sum_{k != i} mu_k)/(n-1); its determinant against the
    structural floor gamma / f^n is the measured lemma.
    """
    if op.n < 2:
        raise ParameterError("the coefficient tensor needs n >= 2")
    mu = cone_ops.log_gradient(op, lam)
    total = np.sum(mu, axis=-1, keepdims=True)
    return (total - mu) / (op.n - 1.0)


def theta_residual_points(op: OperatorSpec, lam: np.ndarray) -> np.ndarray:
    """det(Theta) - gamma * f^-n at sample points (identity metric units)."""
    diag = theta_eigenframe(op, lam)
    det_theta = np.prod(diag, axis=-1)
    f = cone_ops.f_value(op, lam, check=False)
    return det_theta - op.gamma / f ** op.n


@dataclass
class ThetaField:
    """Eigenframe representation of the coefficient tensor over a mesh."""

    mesh: object
    diag: np.ndarray  # shape mesh.shape + (n,)

    def min_eigenvalue(self, region=None):
        data = self.diag if region is None else self.diag[region]
        return float(np.min(data))


def theta_tensor(op: OperatorSpec, lambda_field: np.ndarray,
                 omega: HermitianField, F: ScalarField | None = None):
    """Coefficient tensor field plus the minimum determinant residual.

    The equation value e^{nF} is taken as f(lambda)^n pointwise, so the
    residual measures the structural lemma itself rather than any solve
    error; the optional F argument is only cross-checked for consistency.
    In coordinates the determinant picks up 1/det(g) on both sides, so
    the residual is reported in coordinate units by dividing through.
    """
    mesh = omega.mesh
    if op.n < 2:
        raise ParameterError("the coefficient tensor needs n >= 2")
    region = mesh.interior
    lam = lambda_field[region]
    if not np.all(in_cone(lam, op.cone)):
        raise ParameterError("lambda field leaves the operator cone")
    diag_full = np.zeros(mesh.shape + (op.n,))
    diag_full[region] = theta_eigenframe(op, lam)
    det_g = metric_det(omega)
    residual_pts = theta_residual_points(op, lam) / det_g[region]
    if F is not None:
        f = cone_ops.f_value(op, lam, check=False)
        mismatch = float(np.max(np.abs(np.log(f) - F.data[region])))
    else:
        mismatch = 0.0
    return ThetaField(mesh, diag_full), float(np.min(residual_pts)), mismatch


# ---------------------------------------------------------------------------
# maximum-principle bounds for the real auxiliary solution
# ---------------------------------------------------------------------------

def unit_ball_volume(n: int) -> float:
    """Volume of the unit ball in R^{2n}: pi^n / n!."""
    return math.pi ** n / math.factorial(n)


def abp_check(psi: ScalarField, r0: float, mass_tol: float = 0.05):
    """Residuals of the depth and gradient bounds for a unit-mass convex
    potential on the ball of radius 2 r0.

    Returns (depth_residual, gradient_residual) where

        depth_residual    = -min psi            - 4 r0 / beta_n
        gradient_residual = max_{|x| <= r0} |grad psi| - 4 / beta_n

    and beta_n is the unit-ball volume in R^{2n}.  Inputs that are not
    convex or whose discrete Hessian mass differs from one are rejected,
    not rescaled.
    """
    mesh = psi.mesh
    if mesh.kind != "ball":
        raise ParameterError("the bound lives on a ball mesh")
    if abs(mesh.extent - 2.0 * r0) > 1e-9 * mesh.extent:
        raise ParameterError("mesh radius must equal 2 r0")
    R = real_hessian(psi)[mesh.interior]
    w = np.linalg.eigvalsh(R)
    scale = float(np.max(np.abs(w)))
    if np.any(w[..., 0] < -1e-8 * scale):
        raise PreconditionError("psi is not convex on the interior")
    mass = float(np.sum(np.linalg.det(R)) * mesh.spacing ** (2 * mesh.n))
    if abs(mass - 1.0) > mass_tol:
        raise PreconditionError(
            f"discrete Hessian mass {mass:.4f} violates the unit normalization")
    beta = unit_ball_volume(mesh.n)
    depth = -float(np.min(psi.data[mesh.valid]))
    inner = mesh.radius2() <= r0 * r0
    grad = gradient_norm(psi)
    grad_max = float(np.max(grad[inner & mesh.interior]))
    return depth - 4.0 * r0 / beta, grad_max - 4.0 / beta


# ---------------------------------------------------------------------------
# real vs complex Hessian determinants
# ---------------------------------------------------------------------------

def hessian_det_comparison_matrices(R: np.ndarray, n: int) -> np.ndarray:
    """det(complex Hessian) - 2^-n sqrt(det(real Hessian)) for PSD matrices."""
    w = np.linalg.eigvalsh(R)
    scale = np.maximum(np.max(np.abs(w), axis=-1), 1e-300)
    if np.any(w[..., 0] < -1e-10 * scale):
        raise PreconditionError("a sample real Hessian is not positive semidefinite")
    C = complex_hessian_from_real(R, n)
    det_c = np.linalg.det(C).real
    det_r = np.maximum(np.linalg.det(R), 0.0)
    return det_c - 2.0 ** (-n) * np.sqrt(det_r)


def hessian_det_comparison(psi: ScalarField) -> float:
    """Minimum over interior nodes of the determinant comparison residual."""
    mesh = psi.mesh
    R = real_hessian(psi)
    interior_idx = np.argwhere(mesh.interior)
    Ri = R[mesh.interior]
    w = np.linalg.eigvalsh(Ri)
    scale = float(np.max(np.abs(w)))
    bad = w[..., 0] < -1e-8 * max(scale, 1e-300)
    if np.any(bad):
        node = tuple(interior_idx[int(np.argmax(bad))])
        raise PreconditionError(f"psi is not convex at interior node {node}")
    res = hessian_det_comparison_matrices(Ri, mesh.n)
    return float(np.min(res))


# ---------------------------------------------------------------------------
# the volume floor experiment
# ---------------------------------------------------------------------------

@dataclass
class VolumeFloorRow:
    instance_id: int
    mass: float
    entropy_value: float
    accepted: bool
    reason: str = ""


@dataclass
class VolumeFloorReport:
    rows: list
    min_mass: float
    entropy_bound: float


def volume_floor_experiment(instances, p: float) -> VolumeFloorReport:
    """Minimum relative volume over a family with a common entropy bound.

    Each instance is a (phi, F, omega) triple; instances whose eigenvalue
    tuple leaves the positive octant are rejected with a report row, not
    silently fixed.  The experiment reports; the floor assertion belongs
    to the caller (it only holds under the common entropy bound).
    """
    rows = []
    masses = []
    entropies = []
    for i, (phi, F, omega) in enumerate(instances):
        gphi = HermitianField(omega.mesh, omega.data + dd_bar(phi).data)
        lam = pencil_eigenvalues(omega, gphi, check=False)
        ok = bool(np.all(in_cone(lam[omega.mesh.interior],
                                 cone_ops.GammaCone(omega.mesh.n))))
        if not ok:
            rows.append(VolumeFloorRow(i, float("nan"), float("nan"), False,
                                       "eigenvalues leave the positive octant"))
            continue
        rep = entropy_of(F, omega, p)
        rows.append(VolumeFloorRow(i, rep.mass, rep.value, True))
        masses.append(rep.mass)
        entropies.append(rep.value)
    if not masses:
        raise ParameterError("no admissible instances")
    return VolumeFloorReport(rows, float(np.min(masses)), float(np.max(entropies)))
