"""Scenario configuration: dataclasses, validation, JSON round-trip, hashing.

A scenario is one solve-plus-checks pipeline.  The JSON form is the
on-disk interface; keys map one-to-one to dataclass fields so configs are
diffable and regression-friendly.  The scenario hash is the sha256 of the
canonical JSON encoding and names the output directory.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

from . import cone_ops
from .errors import ParameterError

DEFAULT_CHECKS = [
    "solver_residual", "cone_membership", "comparison", "mass_lower",
    "measure_monotone", "degiorgi_floor", "certificate_dominates",
    "entropy_vs_mass", "theta_floor", "upper_bound_boundary",
]


@dataclass
class GeometryConfig:
    kind: str = "torus"          # torus | ball
    n: int = 2
    m: int = 16
    extent: float = 1.0          # period (torus) or radius (ball)
    r0: float | None = None      # chart radius; default period/8 on tori

    def validate(self):
        if self.kind not in ("torus", "ball"):
            raise ParameterError(f"unknown geometry kind {self.kind!r}")
        if self.n < 1:
            raise ParameterError("complex dimension must be >= 1")
        if not (8 <= self.m <= 256 and (self.m & (self.m - 1)) == 0):
            raise ParameterError("m must be a power of two between 8 and 256")
        if self.extent <= 0:
            raise ParameterError("period/radius must be positive")
        if self.kind == "torus":
            cap = self.extent / 8.0
            if self.r0 is None:
                self.r0 = cap
            if self.r0 > cap + 1e-12:
                raise ParameterError("chart radius r0 must not exceed period/8")
        elif self.r0 is None:
            self.r0 = self.extent / 2.0


@dataclass
class OperatorConfig:
    family: str = "monge_ampere"  # monge_ampere | hessian | pma | combination
    k: int | None = None
    p_index: int | None = None
    weights: list = field(default_factory=list)
    parts: list = field(default_factory=list)  # nested OperatorConfig dicts

    def validate(self, n: int):
        if self.family == "hessian" and not self.k:
            raise ParameterError("hessian operator needs k")
        if self.family == "pma" and not self.p_index:
            raise ParameterError("pma operator needs p_index")
        if self.family == "combination" and (not self.parts or
                                             len(self.parts) != len(self.weights)):
            raise ParameterError("combination needs matching weights and parts")
        if self.family not in ("monge_ampere", "hessian", "pma", "combination"):
            raise ParameterError(f"unknown operator family {self.family!r}")

    def build(self, n: int) -> cone_ops.OperatorSpec:
        self.validate(n)
        if self.family == "monge_ampere":
            return cone_ops.monge_ampere(n)
        if self.family == "hessian":
            return cone_ops.hessian(self.k, n)
        if self.family == "pma":
            return cone_ops.pma(self.p_index, n)
        parts = [OperatorConfig(**p) if isinstance(p, dict) else p
                 for p in self.parts]
        return cone_ops.positive_combination(
            self.weights, [part.build(n) for part in parts])


@dataclass
class ForcingConfig:
    family: str = "bump"
    amplitude: float = 0.1
    seed: int = 0
    center: list | None = None
    concentration: float = 2.0


@dataclass
class MetricConfig:
    kind: str = "identity"       # identity | perturbed
    delta: float = 0.0
    seed: int = 0


@dataclass
class ToleranceConfig:
    nonlinear: float = 1e-6
    linear: float = 1e-8
    comparison_slack_h2: float = 10.0   # slack = this * h^2
    float_slack: float = 1e-10


@dataclass
class ScenarioConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    operator: OperatorConfig = field(default_factory=OperatorConfig)
    forcing: ForcingConfig = field(default_factory=ForcingConfig)
    metric: MetricConfig = field(default_factory=MetricConfig)
    p: float = 4.0
    s_points: int = 32
    smoothing_k: float = 2048.0
    tau_floor_rel: float = 1e-3
    boundary_amplitude: float = 0.0   # Dirichlet data scale on ball scenarios
    checks: list = field(default_factory=lambda: list(DEFAULT_CHECKS))
    seed: int = 0
    output_dir: str | None = None
    tolerances: ToleranceConfig = field(default_factory=ToleranceConfig)

    def __post_init__(self):
        if isinstance(self.geometry, dict):
            self.geometry = GeometryConfig(**self.geometry)
        if isinstance(self.operator, dict):
            self.operator = OperatorConfig(**self.operator)
        if isinstance(self.forcing, dict):
            self.forcing = ForcingConfig(**self.forcing)
        if isinstance(self.metric, dict):
            self.metric = MetricConfig(**self.metric)
        if isinstance(self.tolerances, dict):
            self.tolerances = ToleranceConfig(**self.tolerances)

    def validate(self):
        self.geometry.validate()
        self.operator.validate(self.geometry.n)
        n = self.geometry.n
        needs_real_route = "abp" in self.checks or "hessian_comparison" in self.checks
        floor = 2 * n if needs_real_route else n
        if not self.p > floor:
            raise ParameterError(
                f"entropy exponent p={self.p} must exceed {floor} for this route")
        if self.s_points < 2:
            raise ParameterError("need at least two sweep points")
        return self

    def to_json_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json_dict(cls, d: dict) -> "ScenarioConfig":
        return cls(**d)

    def canonical_json(self) -> str:
        d = self.to_json_dict()
        d.pop("output_dir", None)  # location does not change the experiment
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def scenario_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def load_scenario(path) -> ScenarioConfig:
    with open(path) as fh:
        return ScenarioConfig.from_json_dict(json.load(fh)).validate()


def save_scenario(cfg: ScenarioConfig, path):
    with open(path, "w") as fh:
        json.dump(cfg.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
