"""Seeded forcing functions and background metrics on the model meshes.

Every family is smooth and reproducible: bumps are periodized von-Mises
profiles (exactly periodic, no cut-locus kinks) and "random-smooth" draws
a low-frequency trigonometric sum from a seeded generator.  Amplitude is
normalized so that max |F| equals the requested amplitude (except for the
constant family, where F is the amplitude itself).
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError
from .fields import HermitianField, ScalarField, identity_metric
from .geometry import Mesh

FORCING_FAMILIES = ("constant", "bump", "multi-bump", "random-smooth")


def _von_mises_bump(mesh: Mesh, center, concentration: float) -> np.ndarray:
    period = mesh.extent
    phase = np.zeros(mesh.shape)
    for a in range(2 * mesh.n):
        x = mesh.grid_axis(a)
        phase = phase + (np.cos(2.0 * np.pi * (x - center[a]) / period) - 1.0)
    return np.exp(concentration * phase)


def build_forcing(mesh: Mesh, family: str, amplitude: float, seed: int,
                  center=None, concentration: float = 2.0) -> ScalarField:
    if family not in FORCING_FAMILIES:
        raise ParameterError(f"unknown forcing family {family!r}")
    rng = np.random.default_rng(seed)
    if family == "constant":
        return ScalarField(mesh, np.full(mesh.shape, float(amplitude)))
    if family == "bump":
        if center is None:
            center = rng.uniform(-0.5, 0.5, 2 * mesh.n) * mesh.extent
        data = _von_mises_bump(mesh, np.asarray(center, float), concentration)
    elif family == "multi-bump":
        data = np.zeros(mesh.shape)
        signs = (1.0, -1.0, 1.0)
        for sgn in signs:
            c = rng.uniform(-0.5, 0.5, 2 * mesh.n) * mesh.extent
            data = data + sgn * _von_mises_bump(mesh, c, concentration)
    else:  # random-smooth
        data = np.zeros(mesh.shape)
        period = mesh.extent
        for _ in range(6):
            freqs = rng.integers(-2, 3, 2 * mesh.n)
            if not np.any(freqs):
                continue
            coeff = rng.standard_normal()
            phase0 = rng.uniform(0, 2 * np.pi)
            phase = np.zeros(mesh.shape)
            for a in range(2 * mesh.n):
                phase = phase + 2.0 * np.pi * freqs[a] * mesh.grid_axis(a) / period
            data = data + coeff * np.cos(phase + phase0)
    top = float(np.max(np.abs(data)))
    if top > 0:
        data = data * (amplitude / top)
    return ScalarField(mesh, data)


def build_metric(mesh: Mesh, kind: str = "identity", delta: float = 0.0,
                 seed: int = 0) -> HermitianField:
    """Background metric: identity, or a smooth periodic Hermitian
    perturbation I + delta*S kept inside the [1/2, 2] normalization band."""
    if kind == "identity" or delta == 0.0:
        return identity_metric(mesh)
    if kind != "perturbed":
        raise ParameterError(f"unknown metric kind {kind!r}")
    n = mesh.n
    rng = np.random.default_rng(seed)
    period = mesh.extent
    S = np.zeros(mesh.shape + (n, n), dtype=complex)

    def smooth_scalar():
        freqs = rng.integers(-1, 2, 2 * mesh.n)
        phase0 = rng.uniform(0, 2 * np.pi)
        phase = np.zeros(mesh.shape)
        for a in range(2 * mesh.n):
            phase = phase + 2.0 * np.pi * freqs[a] * mesh.grid_axis(a) / period
        return np.cos(phase + phase0)

    for j in range(n):
        S[..., j, j] += smooth_scalar()
        for k in range(j + 1, n):
            re = smooth_scalar()
            im = smooth_scalar()
            S[..., j, k] += re + 1j * im
            S[..., k, j] += re - 1j * im
    w = np.linalg.eigvalsh(S)
    spread = float(np.max(np.abs(w)))
    if spread > 0:
        # keep eigenvalues within [1 - d, 1 + d] for d = min(delta, 0.45),
        # comfortably inside the [1/2, 2] chart normalization
        d = min(delta, 0.45)
        S = S * (d / spread)
    omega = identity_metric(mesh)
    omega.data = omega.data + S
    return omega
