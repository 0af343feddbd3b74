"""The constructive inequalities of the sup-bound pipeline.

Each operation MEASURES one inequality of the chain rather than assuming
it: comparison of the sublevel function against the auxiliary potential,
the exponential integral of normalized potentials, the Young-pair gap,
the mass-vs-measure power bound, the halving iteration that converts that
bound into a positive floor for the sublevel measure, and the final
inversion producing an a priori certificate for -min(phi).

Empirical constants are FITTED over instance families (the smallest
constant making the inequality hold on the data), never invented; the
certificate then uses the fitted constants, the measured entropy and the
measured L1 norm, so it is a genuine upper bound exactly when the fitted
inequalities hold on the instance, which is what the checks certify.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import lambertw

from .errors import ParameterError, PreconditionError
from .fields import HermitianField, ScalarField, EntropyReport, integrate
from .sublevel import SublevelReport


# ---------------------------------------------------------------------------
# comparison with the auxiliary potential
# ---------------------------------------------------------------------------

def epsilon_lemma2(A: float, gamma: float, n: int) -> float:
    """Comparison constant: eps^(n+1) = A * gamma^-1 * (n+1)^n / n^(2n)."""
    if A <= 0 or gamma <= 0:
        raise ParameterError("mass and gamma must be positive")
    return float((A / gamma * (n + 1.0) ** n / float(n) ** (2 * n)) ** (1.0 / (n + 1.0)))


def comparison_exponent(n: int, shift: float) -> float:
    """n/(n+1) for the complex route (shift 0), 2n/(2n+1) for the real one."""
    if shift < 0:
        raise ParameterError("shift must be nonnegative")
    if shift == 0.0:
        return n / (n + 1.0)
    return 2.0 * n / (2.0 * n + 1.0)


def comparison_residual(u_s: ScalarField, psi: ScalarField, eps: float,
                        shift: float = 0.0) -> float:
    """max over nodes of (-u_s) - eps * (-psi + shift)^exponent.

    Nonpositive when the comparison inequality holds; the value is
    measured, not assumed.  psi is clipped at zero from above so that
    boundary-level numerical wiggle cannot poison the fractional power.
    """
    mesh = u_s.mesh
    if psi.mesh is not mesh and not mesh.same_geometry(psi.mesh):
        raise ParameterError("u_s and psi must share the chart mesh")
    expo = comparison_exponent(mesh.n, shift)
    region = mesh.valid
    neg_psi = np.maximum(-psi.data[region], 0.0)
    lhs = -u_s.data[region]
    return float(np.max(lhs - eps * (neg_psi + shift) ** expo))


def kolodziej_integral(psi: ScalarField, alpha: float, omega: HermitianField) -> float:
    """int exp(-alpha psi) against the metric volume over interior nodes."""
    mesh = psi.mesh
    return integrate(ScalarField(mesh, np.exp(-alpha * psi.data)), omega)


# ---------------------------------------------------------------------------
# Young pairs
# ---------------------------------------------------------------------------

def young_eta(x, p: float):
    return np.log1p(x) ** p


def young_eta_inv(y, p: float):
    return np.expm1(y ** (1.0 / p))


def young_gap(U, V, p: float):
    """U*eta(U) + V*eta_inv(V) - U*V with eta = log(1+.)^p; always >= 0.

    Overflow in eta_inv for huge V produces +inf gaps, which is the
    correct sign of the inequality.
    """
    if p <= 0:
        raise ParameterError("Young exponent p must be positive")
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    with np.errstate(over="ignore"):
        return U * young_eta(U, p) + V * young_eta_inv(V, p) - U * V


# ---------------------------------------------------------------------------
# the mass bound and its fitted constant
# ---------------------------------------------------------------------------

def delta0_exponent(p: float, n: int) -> float:
    if p <= n:
        raise ParameterError(f"need p > n (got p={p}, n={n})")
    return (p - n) / (p * n)


def a_s_bound_check(report: SublevelReport, p: float, entropy: EntropyReport,
                    C0: float) -> float:
    """Residual A_s - C0 * phi(s)^(1+delta0); nonpositive when the bound holds.

    The entropy argument pins the instance family the constant was fitted
    on (the bound constant is only meaningful at fixed entropy).
    """
    n = report.u_s.mesh.n
    d0 = delta0_exponent(p, n)
    del entropy  # family tag; the residual itself is scale-free in it
    if report.A_s == 0.0 and report.phi_of_s == 0.0:
        return 0.0
    return float(report.A_s - C0 * report.phi_of_s ** (1.0 + d0))


def fit_c0_mass(reports, p: float) -> float:
    """Smallest C0 with A_s <= C0 phi(s)^(1+delta0) across the reports."""
    best = 0.0
    for rep in reports:
        if rep.phi_of_s <= 0.0:
            continue
        n = rep.u_s.mesh.n
        d0 = delta0_exponent(p, n)
        best = max(best, rep.A_s / rep.phi_of_s ** (1.0 + d0))
    if best == 0.0:
        raise ParameterError("no nonempty sublevel instances to fit")
    return float(best)


def fit_c0_scan(phi_fn, s0: float, d0: float, num_s: int = 120,
                num_t: int = 120) -> float:
    """Dense (t, s) scan of t*phi(s-t) / phi(s)^(1+delta0), its maximum.

    This is the direct empirical constant of the halving inequality; it
    equals the mass-fit constant whenever the mass chain holds.
    """
    ss = np.linspace(s0 / num_s, s0, num_s)
    best = 0.0
    for s in ss:
        ts = np.linspace(s / (num_t + 1), s * num_t / (num_t + 1.0), num_t)
        denom = phi_fn(s) ** (1.0 + d0)
        if denom <= 0.0:
            continue
        vals = np.array([t * phi_fn(s - t) for t in ts]) / denom
        best = max(best, float(np.max(vals)))
    return best


# ---------------------------------------------------------------------------
# the halving iteration
# ---------------------------------------------------------------------------

@dataclass
class IterationTrace:
    """The halving sequence s_j with its exact targets phi(s_j) = 2^-j phi(s_0),
    the functional-inequality constant used, and the certified floor c0."""

    s_sequence: list
    phi_values: list
    C0: float
    delta0: float
    c0: float


def degiorgi_c0(s0: float, C0: float, d0: float) -> float:
    """Floor from summing the halving gaps: (s0 (1 - 2^-d0) / (2 C0))^(1/d0)."""
    if s0 <= 0 or C0 <= 0 or d0 <= 0:
        raise ParameterError("s0, C0, delta0 must all be positive")
    return float((s0 * (1.0 - 2.0 ** (-d0)) / (2.0 * C0)) ** (1.0 / d0))


def degiorgi_iterate(phi_fn, s0: float, C0: float, d0: float,
                     max_levels: int = 60, rel_floor: float = 1e-6,
                     monotone_samples: int = 64) -> IterationTrace:
    """Run the halving construction s_{j+1} = sup{s < s_j : phi(s) <= phi(s_j)/2}.

    phi_fn must be a monotone nondecreasing positive function on (0, s0]
    with limit 0 at 0+ (checked by sampling).  The recorded phi values
    halve exactly by construction of the bisection target; the certified
    floor c0 only uses (s0, C0, delta0).
    """
    if s0 <= 0:
        raise ParameterError("s0 must be positive")
    probe = np.linspace(s0 / monotone_samples, s0, monotone_samples)
    vals = np.array([phi_fn(s) for s in probe])
    if np.any(np.diff(vals) < -1e-12 * max(1.0, float(np.max(np.abs(vals))))):
        raise PreconditionError("phi(s) samples are not monotone nondecreasing")
    if vals[-1] <= 0.0:
        raise PreconditionError("phi(s0) must be positive")
    phi0 = float(phi_fn(s0))
    s_seq = [float(s0)]
    phi_seq = [phi0]
    for level in range(1, max_levels + 1):
        target = phi0 * 2.0 ** (-level)
        s_prev = s_seq[-1]
        if phi_fn(s_prev * 1e-12) > target:
            break  # the target is unreachable: discrete measure floor
        lo, hi = s_prev * 1e-12, s_prev
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if phi_fn(mid) <= target:
                lo = mid
            else:
                hi = mid
        s_next = lo
        s_seq.append(float(s_next))
        phi_seq.append(target)
        if s_next < rel_floor * s0:
            break
    return IterationTrace(s_seq, phi_seq, C0, d0, degiorgi_c0(s0, C0, d0))


# ---------------------------------------------------------------------------
# the sup-bound certificate
# ---------------------------------------------------------------------------

def cp_constant(p: float, w_log_max: float = 60.0, points: int = 20001,
                safety: float = 1.05) -> float:
    """Fitted constant with (log W)(exp((log W)^(1/p)) - 1) <= Cp (1 + W).

    Finite for p > 1 (the left side is subpolynomial in W); obtained by a
    dense scan over log W with a small safety factor.
    """
    if p <= 1.0:
        raise ParameterError("the certificate inversion needs p > 1")
    x = np.linspace(1e-9, w_log_max, points)  # x = log W >= 0
    with np.errstate(over="ignore"):
        vals = x * np.expm1(x ** (1.0 / p)) / (1.0 + np.exp(x))
    top = float(np.max(vals))
    return safety * top


@dataclass
class CertificateDetails:
    value: float
    log_value: float
    branch_entropy: float
    branch_l1: float
    trivial: bool
    constants: dict


def min_bound_certificate(phi: ScalarField, F: ScalarField, omega: HermitianField,
                          p: float, entropy: EntropyReport, trace: IterationTrace,
                          details: bool = False):
    """A priori upper bound for -min(phi) from the measured pipeline data.

    Inverts the integrated logarithmic bound

        (1/2) log M * phi(s0)  <=  2 max{ A,  B / sqrt(M) },     M = -phi(x0) - s0,

    with A the entropy-side constant (a dimension constant times the
    measured weighted mass plus the fitted Young constant times the chart
    volume) and B the L1-side constant.  The floor for phi(s0) is the
    trace's certified c0.  Instances with -min(phi) < 2 short-circuit to
    the triviality threshold 2.  The bound is typically astronomically
    large -- it is an a priori constant, not a sharp estimate -- so the
    logarithmic value is also reported and the float value may overflow
    to inf.
    """
    mesh = phi.mesh
    n = mesh.n
    m_actual = -float(np.min(phi.data[mesh.valid]))
    s0 = trace.s_sequence[0]
    if m_actual < 2.0:
        out = 2.0
        if details:
            return CertificateDetails(out, np.log(2.0), 0.0, 0.0, True, {})
        return out
    r0 = np.sqrt(s0 / 2.0)
    x0 = mesh.argmin_node(phi.data)
    d2 = mesh.radius2(center=mesh.node_coords(x0))
    chart = d2 <= (2.0 * r0) ** 2
    one = np.where(chart, 1.0, 0.0)
    C1 = integrate(ScalarField(mesh, one), omega)
    C2 = integrate(ScalarField(mesh, one * 0.5 * d2), omega)
    l1 = integrate(ScalarField(mesh, one * np.abs(phi.data)), omega)
    Cp = cp_constant(p)
    kappa = (1.0 + n) ** p * 2.0 ** (p - 1.0)
    A = kappa * entropy.value + Cp * C1
    B = Cp * (l1 + C2)
    L = trace.c0
    if L <= 0:
        raise ParameterError("the trace carries no positive floor c0")
    log_m1 = 4.0 * A / L
    # second branch: y exp(y/2) = 4 B / L with y = log M
    c = 4.0 * B / L
    y2 = float(2.0 * np.real(lambertw(0.5 * c))) if c > 0 else 0.0
    log_m = max(log_m1, y2)
    with np.errstate(over="ignore"):
        value = float(np.exp(log_m) + s0)
    value = max(value, 2.0)
    if details:
        return CertificateDetails(value, log_m, log_m1, y2, False,
                                  {"A": A, "B": B, "C1": C1, "C2": C2,
                                   "Cp": Cp, "l1": l1, "floor": L})
    return value
