"""Admissible nonlinear operators on symmetric eigenvalue cones.

An operator here is a positive function f of an unordered tuple of n real
eigenvalues, defined on an open symmetric cone between the positive octant
and the half-space {sum > 0}, homogeneous of degree one, with strictly
positive partial derivatives and a positive lower bound gamma for the
product of those partials.  Three concrete families are provided, plus
positive linear combinations:

* ``MongeAmpere``      f = (prod lambda_j)^(1/n)          on the octant
* ``Hessian(k)``       f = sigma_k(lambda)^(1/k)          on {sigma_1..k > 0}
* ``PMA(p)``           f = (prod_I lambda_I)^(1/C(n,p))   on {lambda_I > 0},
  where I ranges over all p-element index sets and lambda_I is the sum of
  the selected entries.

The PMA exponent is 1/C(n,p): this is the unique choice making f
homogeneous of degree one, which the rest of the laboratory relies on.

All functions are pure and accept batched inputs: ``lam`` may have any
shape ``(..., n)`` and results broadcast accordingly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConeBoundaryError, ConeViolationError, ParameterError, SamplingError

# Relative margin defining "strictly inside" a cone, protecting gradient
# evaluations from division blow-up near the boundary.
INTERIOR_TOL = 1e-10


# ---------------------------------------------------------------------------
# elementary symmetric polynomials
# ---------------------------------------------------------------------------

def elementary_symmetric_table(lam: np.ndarray, k: int) -> np.ndarray:
    """Return sigma_0..sigma_k of the last axis, shape ``lam.shape[:-1] + (k+1,)``.

    One forward pass over the entries with the descending-index update, so
    every coefficient is a sum of products of the inputs: no alternating
    identities, no cancellation beyond what the data itself carries.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if not 1 <= k <= n:
        raise ParameterError(f"symmetric polynomial index k={k} out of range 1..{n}")
    e = np.zeros(lam.shape[:-1] + (k + 1,), dtype=float)
    e[..., 0] = 1.0
    for i in range(n):
        x = lam[..., i]
        top = min(i + 1, k)
        for j in range(top, 0, -1):
            e[..., j] += x * e[..., j - 1]
    return e


def sigma(lam: np.ndarray, k: int) -> np.ndarray:
    """k-th elementary symmetric polynomial of the eigenvalue tuple."""
    return elementary_symmetric_table(lam, k)[..., k]


def _sigma_without(lam: np.ndarray, k: int, j: int) -> np.ndarray:
    """sigma_k of the tuple with entry j removed (sigma_0 = 1)."""
    if k == 0:
        return np.ones(lam.shape[:-1])
    reduced = np.delete(lam, j, axis=-1)
    return sigma(reduced, k)


# ---------------------------------------------------------------------------
# cones
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConeSpec:
    """Base class for symmetric cone descriptions."""

    def conditions(self, lam: np.ndarray):
        """Yield (name, value) pairs; the cone is {all values > 0}."""
        raise NotImplementedError


@dataclass(frozen=True)
class GammaCone(ConeSpec):
    """Gamma_k: sigma_1, ..., sigma_k all positive."""

    k: int

    def conditions(self, lam):
        table = elementary_symmetric_table(lam, self.k)
        for j in range(1, self.k + 1):
            yield f"sigma_{j}", table[..., j]


@dataclass(frozen=True)
class PMACone(ConeSpec):
    """All p-element partial sums positive."""

    p: int

    def conditions(self, lam):
        n = np.asarray(lam).shape[-1]
        for combo in itertools.combinations(range(n), self.p):
            yield "lambda_" + "".join(str(i + 1) for i in combo), \
                np.take(lam, combo, axis=-1).sum(axis=-1)


@dataclass(frozen=True)
class ConeIntersection(ConeSpec):
    parts: tuple

    def conditions(self, lam):
        for part in self.parts:
            yield from part.conditions(lam)


def in_cone(lam: np.ndarray, cone: ConeSpec, tol: float = 0.0) -> np.ndarray:
    """True where lam lies in the (open) cone.

    With ``tol > 0`` every defining inequality must exceed
    ``tol * (1 + |lam|)``, the laboratory's notion of "strictly inside".
    """
    lam = np.asarray(lam, dtype=float)
    margin = tol * (1.0 + np.linalg.norm(lam, axis=-1)) if tol else 0.0
    ok = np.ones(lam.shape[:-1], dtype=bool)
    for _, value in cone.conditions(lam):
        ok &= value > margin
    return ok


def first_violated_condition(lam: np.ndarray, cone: ConeSpec):
    for name, value in cone.conditions(lam):
        if np.any(value <= 0):
            return name
    return None


# ---------------------------------------------------------------------------
# operator families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MongeAmpere:
    pass


@dataclass(frozen=True)
class Hessian:
    k: int


@dataclass(frozen=True)
class PMA:
    p: int


@dataclass(frozen=True)
class PositiveCombination:
    weights: tuple
    parts: tuple  # of OperatorSpec


@dataclass(frozen=True)
class OperatorSpec:
    """A cone-tagged nonlinear operator with its structural constant.

    ``gamma`` is a certified lower bound for prod_j df/dlambda_j on the
    cone; ``gamma_source`` records whether it is exact or a sample minimum
    (with ``gamma_samples`` points from seed ``gamma_seed``).
    """

    family: object
    n: int
    cone: ConeSpec
    gamma: float
    gamma_source: str = "exact"
    gamma_samples: int = 0
    gamma_seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError("operator dimension n must be >= 1")
        if not self.gamma > 0:
            raise ParameterError("structural constant gamma must be positive")


def natural_cone(family, n: int) -> ConeSpec:
    if isinstance(family, MongeAmpere):
        return GammaCone(n)
    if isinstance(family, Hessian):
        if not 1 <= family.k <= n:
            raise ParameterError(f"Hessian index k={family.k} out of range 1..{n}")
        return GammaCone(family.k)
    if isinstance(family, PMA):
        if not 1 <= family.p <= n:
            raise ParameterError(f"PMA index p={family.p} out of range 1..{n}")
        return PMACone(family.p)
    if isinstance(family, PositiveCombination):
        return ConeIntersection(tuple(part.cone for part in family.parts))
    raise ParameterError(f"unknown operator family {family!r}")


def monge_ampere(n: int) -> OperatorSpec:
    """Geometric-mean operator on the positive octant; gamma = n^-n exactly."""
    fam = MongeAmpere()
    return OperatorSpec(fam, n, natural_cone(fam, n), float(n) ** (-n))


def hessian(k: int, n: int, gamma_samples: int = 4096, gamma_seed: int = 0) -> OperatorSpec:
    """sigma_k^(1/k) on Gamma_k.

    k = 1 is normalized as f = sigma_1 (gradient identically one, gamma = 1).
    For k >= 2 the structural constant has no closed form here and is
    certified by deterministic sampling.
    """
    fam = Hessian(k)
    cone = natural_cone(fam, n)
    if k == 1:
        return OperatorSpec(fam, n, cone, 1.0)
    if k == n:
        # sigma_n^(1/n) is the geometric mean again
        return OperatorSpec(fam, n, cone, float(n) ** (-n))
    op = OperatorSpec(fam, n, cone, 1.0)
    g = gamma_certificate(op, gamma_samples, gamma_seed)
    return OperatorSpec(fam, n, cone, g, "sampled", gamma_samples, gamma_seed)


def pma(p: int, n: int, gamma_samples: int = 4096, gamma_seed: int = 0) -> OperatorSpec:
    """p-sum product operator on the intersection of half-spaces."""
    fam = PMA(p)
    cone = natural_cone(fam, n)
    if p == 1:
        return OperatorSpec(fam, n, cone, float(n) ** (-n))
    if p == n:
        # single index set: f = sigma_1, gradient identically one
        return OperatorSpec(fam, n, cone, 1.0)
    op = OperatorSpec(fam, n, cone, 1.0)
    g = gamma_certificate(op, gamma_samples, gamma_seed)
    return OperatorSpec(fam, n, cone, g, "sampled", gamma_samples, gamma_seed)


def positive_combination(weights, parts, gamma_samples: int = 4096,
                         gamma_seed: int = 0) -> OperatorSpec:
    weights = tuple(float(w) for w in weights)
    parts = tuple(parts)
    if len(weights) != len(parts) or not parts:
        raise ParameterError("need one positive weight per part")
    if any(w <= 0 for w in weights):
        raise ParameterError("combination weights must be positive")
    ns = {part.n for part in parts}
    if len(ns) != 1:
        raise ParameterError("combination parts must share the dimension n")
    fam = PositiveCombination(weights, parts)
    cone = natural_cone(fam, parts[0].n)
    op = OperatorSpec(fam, parts[0].n, cone, 1.0)
    g = gamma_certificate(op, gamma_samples, gamma_seed)
    return OperatorSpec(fam, parts[0].n, cone, g, "sampled", gamma_samples, gamma_seed)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _check_in_cone(op: OperatorSpec, lam: np.ndarray):
    if not np.all(in_cone(lam, op.cone)):
        name = first_violated_condition(lam, op.cone)
        raise ConeViolationError(
            f"eigenvalue tuple outside {type(op.family).__name__} cone: {name} <= 0")


def f_value(op: OperatorSpec, lam: np.ndarray, check: bool = True) -> np.ndarray:
    """Evaluate f(lam); batched over leading axes."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape[-1] != op.n:
        raise ParameterError(f"expected {op.n} eigenvalues, got {lam.shape[-1]}")
    if check:
        _check_in_cone(op, lam)
    fam = op.family
    if isinstance(fam, MongeAmpere):
        return np.exp(np.mean(np.log(lam), axis=-1))
    if isinstance(fam, Hessian):
        return sigma(lam, fam.k) ** (1.0 / fam.k)
    if isinstance(fam, PMA):
        combos = list(itertools.combinations(range(op.n), fam.p))
        sums = lam[..., combos].sum(axis=-1)
        return np.exp(np.mean(np.log(sums), axis=-1))
    if isinstance(fam, PositiveCombination):
        return sum(w * f_value(part, lam, check=False)
                   for w, part in zip(fam.weights, fam.parts))
    raise ParameterError(f"unknown operator family {fam!r}")


def f_gradient(op: OperatorSpec, lam: np.ndarray, check: bool = True) -> np.ndarray:
    """(df/dlambda_1, ..., df/dlambda_n); batched, all entries positive."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape[-1] != op.n:
        raise ParameterError(f"expected {op.n} eigenvalues, got {lam.shape[-1]}")
    if check and not np.all(in_cone(lam, op.cone, tol=INTERIOR_TOL)):
        raise ConeBoundaryError(
            "eigenvalue tuple too close to the cone boundary for a gradient")
    fam = op.family
    n = op.n
    if isinstance(fam, MongeAmpere):
        f = f_value(op, lam, check=False)
        return f[..., None] / (n * lam)
    if isinstance(fam, Hessian):
        k = fam.k
        sk = sigma(lam, k)
        grad_sigma = np.stack([_sigma_without(lam, k - 1, j) for j in range(n)], axis=-1)
        if k == 1:
            return grad_sigma
        return (sk ** (1.0 / k - 1.0))[..., None] * grad_sigma / k
    if isinstance(fam, PMA):
        combos = list(itertools.combinations(range(n), fam.p))
        sums = lam[..., combos].sum(axis=-1)          # (..., C)
        f = np.exp(np.mean(np.log(sums), axis=-1))
        membership = np.zeros((len(combos), n))
        for idx, combo in enumerate(combos):
            membership[idx, list(combo)] = 1.0
        # df/dlam_j = f * (1/C) * sum_{I contains j} 1/lambda_I
        inv = 1.0 / sums
        return f[..., None] * (inv @ membership) / len(combos)
    if isinstance(fam, PositiveCombination):
        return sum(w * f_gradient(part, lam, check=False)
                   for w, part in zip(fam.weights, fam.parts))
    raise ParameterError(f"unknown operator family {fam!r}")


def log_gradient(op: OperatorSpec, lam: np.ndarray, check: bool = False) -> np.ndarray:
    """Gradient of log f: mu_j = (1/f) df/dlambda_j.  Euler gives sum(mu*lam) = 1."""
    return f_gradient(op, lam, check=check) / f_value(op, lam, check=False)[..., None]


# ---------------------------------------------------------------------------
# structural constant
# ---------------------------------------------------------------------------

def sample_cone_interior(cone: ConeSpec, n: int, samples: int, seed: int,
                         max_attempts_factor: int = 2000,
                         tol: float = INTERIOR_TOL) -> np.ndarray:
    """Deterministic pseudorandom unit-sphere points strictly inside the cone.

    Scale does not matter to gamma (the gradient product is homogeneous of
    degree zero), so sampling on the sphere is lossless.  A larger ``tol``
    keeps the sample away from the boundary, where finite-difference
    oracles lose accuracy.
    """
    if samples < 1:
        raise ParameterError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    out = []
    found = 0
    attempts = 0
    limit = max_attempts_factor * samples
    while found < samples:
        if attempts >= limit:
            raise SamplingError(
                f"found only {found}/{samples} cone-interior points "
                f"after {attempts} draws")
        chunk = max(samples - found, 64)
        draw = rng.standard_normal((chunk, n))
        draw /= np.linalg.norm(draw, axis=1, keepdims=True)
        keep = in_cone(draw, cone, tol=tol)
        attempts += chunk
        if np.any(keep):
            out.append(draw[keep])
            found += int(keep.sum())
    return np.concatenate(out, axis=0)[:samples]


def gradient_product(op: OperatorSpec, lam: np.ndarray) -> np.ndarray:
    return np.prod(f_gradient(op, lam, check=False), axis=-1)


def gamma_certificate(op: OperatorSpec, samples: int, seed: int) -> float:
    """Minimum of prod_j df/dlambda_j over a seeded cone-interior sample.

    For the geometric-mean operator the product is identically n^-n and that
    exact value is returned without sampling.
    """
    if isinstance(op.family, MongeAmpere):
        return float(op.n) ** (-op.n)
    if isinstance(op.family, Hessian) and op.family.k == op.n:
        return float(op.n) ** (-op.n)
    pts = sample_cone_interior(op.cone, op.n, samples, seed)
    return float(np.min(gradient_product(op, pts)))


def finite_difference_gradient(op: OperatorSpec, lam: np.ndarray,
                               rel_step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient, the independent oracle for f_gradient."""
    lam = np.asarray(lam, dtype=float)
    h = rel_step * np.linalg.norm(lam, axis=-1, keepdims=True)
    out = np.empty_like(lam)
    for j in range(lam.shape[-1]):
        e = np.zeros_like(lam)
        e[..., j] = 1.0
        fp = f_value(op, lam + h * e, check=False)
        fm = f_value(op, lam - h * e, check=False)
        out[..., j] = (fp - fm) / (2.0 * h[..., 0])
    return out


def binomial(n: int, p: int) -> int:
    return math.comb(n, p)
