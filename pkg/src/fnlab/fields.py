"""Grid fields and the discrete complex differential operators.

Conventions fixed once and used everywhere:

* complex Hessian entries come from second-order central differences in
  the real coordinates,

      phi_{j kbar} = (D_{x_j x_k} + D_{y_j y_k})/4 + i (D_{x_j y_k} - D_{y_j x_k})/4,

  which is exact on quadratics and Hermitian by construction;
* the volume density of omega^n is det(g) dx (VOLUME_FACTOR = 1), so the
  flat metric omega = identity integrates functions with plain Lebesgue
  weights.  All inequality checks pair quantities built with this same
  convention, so the constant cancels wherever the estimates are
  dimensionless;
* eigenvalue fields are stored sorted ascending per node, and every
  consumer is symmetric in the eigenvalues.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, MeshMismatchError, ParameterError
from .geometry import Mesh

# Constant relating det(g) to the omega^n volume density; the coordinate
# convention of this laboratory sets it to one (see module docstring).
VOLUME_FACTOR = 1.0

HERMITIAN_TOL = 1e-12


@dataclass
class ScalarField:
    mesh: Mesh
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.shape != self.mesh.shape:
            raise ParameterError("scalar data shape does not match mesh")

    def copy(self):
        return ScalarField(self.mesh, self.data.copy())


@dataclass
class HermitianField:
    mesh: Mesh
    data: np.ndarray  # shape mesh.shape + (n, n), complex

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        n = self.mesh.n
        if self.data.shape != self.mesh.shape + (n, n):
            raise ParameterError("matrix data shape does not match mesh")

    def hermitian_defect(self):
        return float(np.max(np.abs(self.data - self.data.conj().swapaxes(-1, -2))))


def constant_scalar(mesh: Mesh, value: float = 0.0) -> ScalarField:
    return ScalarField(mesh, np.full(mesh.shape, float(value)))


def identity_metric(mesh: Mesh) -> HermitianField:
    n = mesh.n
    eye = np.zeros(mesh.shape + (n, n), dtype=complex)
    idx = np.arange(n)
    eye[..., idx, idx] = 1.0
    return HermitianField(mesh, eye)


def _require_same_mesh(*fields):
    mesh = fields[0].mesh
    for f in fields[1:]:
        if f.mesh is not mesh and not mesh.same_geometry(f.mesh):
            raise MeshMismatchError("fields live on different meshes")
    return mesh


# ---------------------------------------------------------------------------
# finite-difference stencils (periodic shifts; on ball meshes only interior
# nodes are trusted and they never read wrapped values by construction)
# ---------------------------------------------------------------------------

def shift(data: np.ndarray, axis: int, step: int) -> np.ndarray:
    return np.roll(data, -step, axis=axis)


def d2(data: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (shift(data, axis, 1) - 2.0 * data + shift(data, axis, -1)) / (h * h)


def dmixed(data: np.ndarray, a: int, b: int, h: float) -> np.ndarray:
    return (shift(shift(data, a, 1), b, 1) - shift(shift(data, a, 1), b, -1)
            - shift(shift(data, a, -1), b, 1) + shift(shift(data, a, -1), b, -1)) \
        / (4.0 * h * h)


def d1(data: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (shift(data, axis, 1) - shift(data, axis, -1)) / (2.0 * h)


def real_hessian(phi: ScalarField) -> np.ndarray:
    """Central-difference real Hessian, shape mesh.shape + (2n, 2n)."""
    mesh = phi.mesh
    h = mesh.spacing
    dim = 2 * mesh.n
    out = np.empty(mesh.shape + (dim, dim))
    for a in range(dim):
        out[..., a, a] = d2(phi.data, a, h)
        for b in range(a + 1, dim):
            mixed = dmixed(phi.data, a, b, h)
            out[..., a, b] = mixed
            out[..., b, a] = mixed
    return out


def gradient_norm(phi: ScalarField) -> np.ndarray:
    mesh = phi.mesh
    h = mesh.spacing
    acc = np.zeros(mesh.shape)
    for a in range(2 * mesh.n):
        g = d1(phi.data, a, h)
        acc += g * g
    return np.sqrt(acc)


def dd_bar(phi: ScalarField) -> HermitianField:
    """Discrete i-del-delbar: the complex Hessian field of phi.

    Valid on all nodes of a torus and on interior nodes of a ball (other
    ball nodes hold unspecified values; consumers mask them out).
    """
    mesh = phi.mesh
    n, h = mesh.n, mesh.spacing
    out = np.zeros(mesh.shape + (n, n), dtype=complex)
    for j in range(n):
        xj, yj = 2 * j, 2 * j + 1
        out[..., j, j] = 0.25 * (d2(phi.data, xj, h) + d2(phi.data, yj, h))
        for k in range(j + 1, n):
            xk, yk = 2 * k, 2 * k + 1
            re = 0.25 * (dmixed(phi.data, xj, xk, h) + dmixed(phi.data, yj, yk, h))
            im = 0.25 * (dmixed(phi.data, xj, yk, h) - dmixed(phi.data, yj, xk, h))
            out[..., j, k] = re + 1j * im
            out[..., k, j] = re - 1j * im
    return HermitianField(mesh, out)


def complex_hessian_from_real(R: np.ndarray, n: int) -> np.ndarray:
    """Complex Hessian matrices from real ones (axes ordered x1,y1,...).

    Exact linear-algebra counterpart of dd_bar: both apply the same
    quarter-combination of second derivatives.
    """
    out = np.zeros(R.shape[:-2] + (n, n), dtype=complex)
    for j in range(n):
        xj, yj = 2 * j, 2 * j + 1
        for k in range(n):
            xk, yk = 2 * k, 2 * k + 1
            re = 0.25 * (R[..., xj, xk] + R[..., yj, yk])
            im = 0.25 * (R[..., xj, yk] - R[..., yj, xk])
            out[..., j, k] = re + 1j * im
    return 0.5 * (out + out.conj().swapaxes(-1, -2))


# ---------------------------------------------------------------------------
# pencil eigenvalues and traces
# ---------------------------------------------------------------------------

def _is_identity(omega: HermitianField) -> bool:
    n = omega.mesh.n
    eye = np.eye(n)
    return bool(np.all(omega.data == eye))


def _eigvalsh2(H: np.ndarray) -> np.ndarray:
    """Closed-form ascending eigenvalues of batched 2x2 Hermitian matrices."""
    a = H[..., 0, 0].real
    c = H[..., 1, 1].real
    b = H[..., 0, 1]
    half = 0.5 * (a + c)
    disc = np.sqrt(0.25 * (a - c) ** 2 + (b * b.conj()).real)
    return np.stack([half - disc, half + disc], axis=-1)


def _eigh2(H: np.ndarray):
    """Closed-form eigensystem of batched 2x2 Hermitian matrices.

    Returns ascending eigenvalues and unitary eigenvector columns; the
    degenerate branch (off-diagonal below machine scale) falls back to the
    coordinate basis.
    """
    a = H[..., 0, 0].real
    c = H[..., 1, 1].real
    b = H[..., 0, 1]
    lam = _eigvalsh2(H)
    v1a = b
    v1b = lam[..., 0] - a
    norm = np.sqrt((v1a * v1a.conj()).real + v1b * v1b)
    scale = np.maximum(np.abs(a), np.abs(c)) + np.abs(b) + 1e-300
    degenerate = norm < 1e-14 * scale
    safe = np.where(degenerate, 1.0, norm)
    v1a = np.where(degenerate, np.where(a <= c, 1.0, 0.0), v1a / safe)
    v1b = np.where(degenerate, np.where(a <= c, 0.0, 1.0), v1b / safe)
    V = np.empty(H.shape, dtype=complex)
    V[..., 0, 0] = v1a
    V[..., 1, 0] = v1b
    V[..., 0, 1] = -np.conj(v1b)
    V[..., 1, 1] = np.conj(v1a)
    return lam, V


def check_positive_definite(omega: HermitianField):
    """Raise GeometryError naming the first node where omega is not PD."""
    w = np.linalg.eigvalsh(omega.data)
    bad = w[..., 0] <= 0
    if omega.mesh.kind == "ball":
        bad &= omega.mesh.valid
    if np.any(bad):
        node = tuple(int(i) for i in
                     np.unravel_index(int(np.argmax(bad.ravel())), omega.mesh.shape))
        raise GeometryError(f"metric not positive definite at node {node}")


def pencil_eigenvalues(omega: HermitianField, omega_phi: HermitianField,
                       check: bool = True) -> np.ndarray:
    """Per-node eigenvalues of the Hermitian pencil (g_phi, g), ascending.

    Reduction by Cholesky of g followed by a Hermitian eigensolve, so the
    eigenvalues are real by construction.
    """
    _require_same_mesh(omega, omega_phi)
    if check:
        check_positive_definite(omega)
    if _is_identity(omega):
        M = omega_phi.data
    else:
        L = np.linalg.cholesky(omega.data)
        A = np.linalg.solve(L, omega_phi.data)
        M = np.linalg.solve(L, A.conj().swapaxes(-1, -2)).conj().swapaxes(-1, -2)
        M = 0.5 * (M + M.conj().swapaxes(-1, -2))
    if omega.mesh.n == 2:
        return _eigvalsh2(M)
    return np.linalg.eigvalsh(M)


def pencil_eigensystem(omega: HermitianField, omega_phi: HermitianField):
    """Eigenvalues and g-orthonormal eigenvectors V (columns), V* g V = I."""
    _require_same_mesh(omega, omega_phi)
    n = omega.mesh.n
    if _is_identity(omega):
        if n == 2:
            return _eigh2(omega_phi.data)
        return np.linalg.eigh(omega_phi.data)
    L = np.linalg.cholesky(omega.data)
    A = np.linalg.solve(L, omega_phi.data)
    M = np.linalg.solve(L, A.conj().swapaxes(-1, -2)).conj().swapaxes(-1, -2)
    M = 0.5 * (M + M.conj().swapaxes(-1, -2))
    lam, U = (_eigh2(M) if n == 2 else np.linalg.eigh(M))
    V = np.linalg.solve(L.conj().swapaxes(-1, -2), U)
    return lam, V


def endo_eigenvalues(omega: HermitianField, omega_phi: HermitianField) -> np.ndarray:
    """Eigenvalue field of h_phi = omega^{-1} omega_phi, shape (*mesh, n)."""
    return pencil_eigenvalues(omega, omega_phi, check=True)


def metric_inverse(omega: HermitianField) -> np.ndarray:
    return np.linalg.inv(omega.data)


def metric_det(omega: HermitianField) -> np.ndarray:
    return np.linalg.det(omega.data).real


def laplacian(omega: HermitianField, phi: ScalarField) -> ScalarField:
    """Metric trace of the complex Hessian: sum_jk g^{j kbar} phi_{j kbar}.

    For the identity metric this is one quarter of the real Laplacian.
    """
    mesh = _require_same_mesh(omega, phi)
    H = dd_bar(phi).data
    if _is_identity(omega):
        val = np.trace(H, axis1=-2, axis2=-1).real
    else:
        val = np.trace(np.linalg.solve(omega.data, H), axis1=-2, axis2=-1).real
    return ScalarField(mesh, val)


# ---------------------------------------------------------------------------
# integration, entropy, normalization
# ---------------------------------------------------------------------------

def integrate(field: ScalarField, omega: HermitianField,
              region: np.ndarray | None = None) -> float:
    """Integral of the field against the omega^n volume density.

    Sums interior nodes only on ball meshes; an explicit boolean region
    restricts further (used for sublevel-set masses).
    """
    mesh = _require_same_mesh(field, omega)
    weight = metric_det(omega) * VOLUME_FACTOR * mesh.spacing ** (2 * mesh.n)
    mask = mesh.interior if region is None else (mesh.interior & region)
    return float(np.sum(field.data[mask] * weight[mask]))


@dataclass
class EntropyReport:
    """Weighted mass of e^{nF}: value = int (1+|F|^p) e^{nF}, mass = int e^{nF}."""

    p: float
    value: float
    mass: float

    def __post_init__(self):
        if self.value < self.mass - 1e-12 * abs(self.mass):
            raise ParameterError("entropy weight (1+|F|^p) >= 1 forces value >= mass")


def entropy(F: ScalarField, omega: HermitianField, p: float) -> EntropyReport:
    if p <= 0:
        raise ParameterError("entropy exponent p must be positive")
    mesh = _require_same_mesh(F, omega)
    n = mesh.n
    enf = ScalarField(mesh, np.exp(n * F.data))
    weighted = ScalarField(mesh, (1.0 + np.abs(F.data) ** p) * enf.data)
    return EntropyReport(p, integrate(weighted, omega), integrate(enf, omega))


def sup_normalize(phi: ScalarField) -> ScalarField:
    """Shift so the maximum over meaningful nodes is exactly zero."""
    top = float(np.max(phi.data[phi.mesh.valid]))
    return ScalarField(phi.mesh, phi.data - top)


# ---------------------------------------------------------------------------
# serialization: flat binary container and CSV
# ---------------------------------------------------------------------------

_MAGIC = b"FNLB1\n"


def field_to_bytes(field) -> bytes:
    if isinstance(field, ScalarField):
        kind, dtype = "scalar", "<f8"
        payload = np.ascontiguousarray(field.data, dtype="<f8")
    elif isinstance(field, HermitianField):
        kind, dtype = "hermitian", "<c16"
        payload = np.ascontiguousarray(field.data, dtype="<c16")
    else:
        raise ParameterError("unsupported field type")
    header = {
        "field": kind,
        "dtype": dtype,
        "shape": list(payload.shape),
        "mesh": field.mesh.describe(),
        "axes": [a.tolist() for a in field.mesh.axes],
    }
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write((json.dumps(header, sort_keys=True) + "\n").encode())
    buf.write(payload.tobytes())
    return buf.getvalue()


def field_from_bytes(blob: bytes):
    if not blob.startswith(_MAGIC):
        raise ParameterError("not a field container")
    rest = blob[len(_MAGIC):]
    nl = rest.index(b"\n")
    header = json.loads(rest[:nl].decode())
    payload = np.frombuffer(rest[nl + 1:], dtype=header["dtype"]).reshape(header["shape"])
    md = header["mesh"]
    mesh = Mesh(md["kind"], md["n"], [np.array(a) for a in header["axes"]],
                md["spacing"], md["extent"], md["center"])
    if header["field"] == "scalar":
        return ScalarField(mesh, payload.astype(float))
    return HermitianField(mesh, payload.astype(complex))


def save_field(field, path):
    with open(path, "wb") as fh:
        fh.write(field_to_bytes(field))


def load_field(path):
    with open(path, "rb") as fh:
        return field_from_bytes(fh.read())


def scalar_to_csv(field: ScalarField, path):
    mesh = field.mesh
    cols = []
    names = []
    for j in range(mesh.n):
        names += [f"x{j + 1}", f"y{j + 1}"]
    grids = np.meshgrid(*mesh.axes, indexing="ij")
    for g in grids:
        cols.append(g.ravel())
    cols.append(field.data.ravel())
    names.append("value")
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for row in zip(*cols):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
