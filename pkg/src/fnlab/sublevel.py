"""Sublevel-set machinery around a minimum point.

Given a solution phi with a chart minimum at x0, the shifted test function

    u_s = phi - phi(x0) + eps' |z - x0|^2 - s,        0 < s < s0,

is negative exactly on the sublevel set, positive on the chart's outer
shell, and affine in s.  Three derived quantities feed the estimates:

* ``A_s``        the sharp mass   int_{u_s < 0} (-u_s) e^{nF} omega^n,
* ``A_sk``       its smoothed version with tau_k(-u_s) replacing (-u_s)+,
* ``phi_of_s``   the measure      int_{u_s < 0} e^{nF} omega^n.

The smoothing tau_k(x) = (x + sqrt(x^2 + k^-2))/2 is smooth, strictly
positive, dominates max(x, 0), and exceeds it by at most 1/(2k).  An
optional additive floor keeps the auxiliary Monge-Ampere densities
uniformly elliptic at desk scale; every consumer (the mass A_sk and the
comparison constant built from it) uses the same floored function, so the
comparison inequality keeps its exact hypotheses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, PreconditionError
from .fields import HermitianField, ScalarField, integrate
from .geometry import Mesh


def tau_smooth(x: np.ndarray, k: float) -> np.ndarray:
    """Smooth positive majorant of max(x, 0): (x + sqrt(x^2 + k^-2))/2."""
    if k < 1:
        raise ParameterError("smoothing index k must be >= 1")
    x = np.asarray(x, dtype=float)
    return 0.5 * (x + np.sqrt(x * x + 1.0 / (k * k)))


@dataclass
class SublevelReport:
    """Masses and measure of one sublevel instance (one pair (x0, s))."""

    s: float
    x0: tuple
    u_s: ScalarField
    mask: np.ndarray
    A_s: float
    phi_of_s: float
    A_sk: float
    k: float
    tau_floor: float = 0.0


def s_cap_complex(r0: float) -> float:
    """Largest admissible s for the eps' = 1/2 chart: the sublevel set of
    any s < 2 r0^2 stays inside the chart ball of radius 2 r0."""
    return 2.0 * r0 * r0


def s_cap_real(r0: float, epsilon_prime: float) -> float:
    """Cap for the small-eps' variant: sublevel sets stay inside radius r0."""
    return epsilon_prime * r0 * r0


def build_u_s(phi: ScalarField, x0: tuple, s: float,
              epsilon_prime: float = 0.5, s0: float | None = None) -> ScalarField:
    """Shifted sublevel test function for the chart centered at x0.

    x0 must be a minimum of phi over the region the sublevel set can
    reach, i.e. the ball |z - x0| < sqrt(s / eps'); otherwise the set
    {u_s < 0} would not localize and the construction is rejected.
    """
    mesh = phi.mesh
    if not 0.0 < epsilon_prime:
        raise ParameterError("epsilon_prime must be positive")
    if not 0.0 < s:
        raise ParameterError("s must be positive")
    if s0 is not None and s > s0 + 1e-15 * s0:
        raise ParameterError(f"s={s} exceeds the cap s0={s0}")
    d2 = mesh.radius2(center=mesh.node_coords(x0))
    reach = d2 <= s / epsilon_prime + 2.0 * mesh.spacing ** 2 + \
        2.0 * mesh.spacing * np.sqrt(s / epsilon_prime)
    reach &= mesh.valid
    if phi.data[x0] > np.min(phi.data[reach]) + 1e-12:
        raise PreconditionError("x0 is not a chart-local minimum of phi")
    data = phi.data - phi.data[x0] + epsilon_prime * d2 - s
    return ScalarField(mesh, data)


def sublevel_masses(u_s: ScalarField, F: ScalarField, omega: HermitianField,
                    k: float, region: np.ndarray | None = None,
                    tau_floor: float = 0.0, s: float = float("nan"),
                    x0: tuple = ()) -> SublevelReport:
    """Sharp mass, smoothed mass and measure of the sublevel set.

    ``region`` restricts the smoothed mass to the chart ball (the sharp
    mass and the measure are supported on the sublevel set anyway);
    without it the whole mesh is used, which only adds the tau-tail of
    order 1/(2k) times the total e^{nF} volume.
    """
    mesh = u_s.mesh
    n = mesh.n
    enf = np.exp(n * F.data)
    mask = (u_s.data < 0.0) & mesh.interior
    if region is not None:
        mask = mask & region
    neg = np.where(mask, -u_s.data, 0.0)
    A_s = integrate(ScalarField(mesh, neg * enf), omega)
    phi_of_s = integrate(ScalarField(mesh, mask.astype(float) * enf), omega)
    smoothed = tau_smooth(-u_s.data, k) + tau_floor
    A_sk = integrate(ScalarField(mesh, smoothed * enf), omega, region=region)
    return SublevelReport(s=s, x0=tuple(x0), u_s=u_s, mask=mask, A_s=A_s,
                          phi_of_s=phi_of_s, A_sk=A_sk, k=k, tau_floor=tau_floor)
