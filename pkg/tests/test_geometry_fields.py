"""Meshes, complex-Hessian stencils, pencil eigenvalues, integration, IO."""

import numpy as np
import pytest

from fnlab import fields as fl
from fnlab.errors import GeometryError, MeshMismatchError, ParameterError
from fnlab.geometry import ball_mesh, chart_ball, restrict_to_chart, torus_mesh


def quadratic_field(mesh, A, linear=None):
    """psi = 0.5 x^T A x + b.x over the real coordinates."""
    dim = 2 * mesh.n
    coords = [mesh.grid_axis(a) * np.ones(mesh.shape) for a in range(dim)]
    data = np.zeros(mesh.shape)
    for a in range(dim):
        for b in range(dim):
            data += 0.5 * A[a, b] * coords[a] * coords[b]
        if linear is not None:
            data += linear[a] * coords[a]
    return fl.ScalarField(mesh, data)


class TestMesh:
    def test_torus_all_interior(self):
        mesh = torus_mesh(1, 16)
        assert mesh.interior.all() and not mesh.boundary.any()

    def test_ball_classification(self):
        mesh = ball_mesh(1, 32, 1.0)
        rho = np.sqrt(mesh.radius2())
        assert np.all(rho[mesh.interior] < 1.0 - 0.5 * mesh.spacing)
        assert not np.any(mesh.interior & mesh.boundary)
        # every box-neighborhood point of an interior node is not exterior
        core = mesh.interior
        for a in range(2):
            for s in (1, -1):
                shifted = np.roll(core, s, axis=a)
                assert not np.any(shifted & mesh.exterior)

    def test_m_floor(self):
        with pytest.raises(ParameterError):
            torus_mesh(1, 4)

    def test_periodic_displacement(self):
        mesh = torus_mesh(1, 16, 1.0)
        d2 = mesh.radius2(center=np.array([0.46875, 0.0]))
        # wrap-around: nodes near the other edge are close through the seam
        assert d2.min() < (2 * mesh.spacing) ** 2

    def test_chart_alignment(self):
        mesh = torus_mesh(1, 16, 1.0)
        ball, idxs = chart_ball(mesh, (2, 3), 0.25)
        assert ball.shape == (9, 9)
        restricted = restrict_to_chart(mesh.radius2(center=mesh.node_coords((2, 3))), idxs)
        assert np.allclose(restricted, ball.radius2())

    def test_argmin_tie_break(self):
        mesh = torus_mesh(1, 8)
        data = np.zeros(mesh.shape)
        data[1, 2] = data[4, 5] = -3.0
        assert mesh.argmin_node(data) == (1, 2)


class TestDdBar:
    def test_norm_squared_gives_identity(self):
        mesh = ball_mesh(2, 12, 2.0)
        phi = fl.ScalarField(mesh, mesh.radius2())
        H = fl.dd_bar(phi)
        # exact for quadratics: no truncation term, rounding only
        assert np.max(np.abs(H.data[mesh.interior] - np.eye(2))) <= 1e-13

    def test_pluriharmonic_vanishes(self):
        mesh = ball_mesh(1, 16, 1.0)
        x = mesh.grid_axis(0) * np.ones(mesh.shape)
        y = mesh.grid_axis(1) * np.ones(mesh.shape)
        phi = fl.ScalarField(mesh, x * x - y * y)  # Re(z^2)
        assert np.max(np.abs(fl.dd_bar(phi).data[mesh.interior])) == 0.0

    def test_quartic_symbolic_oracle(self):
        # d^2/dz dzbar |z1|^4 = 4 |z1|^2, checked at the node scale h^2
        mesh = ball_mesh(2, 24, 1.5)
        z1sq = (mesh.grid_axis(0) ** 2 + mesh.grid_axis(1) ** 2) * np.ones(mesh.shape)
        H = fl.dd_bar(fl.ScalarField(mesh, z1sq ** 2))
        err = np.abs(H.data[..., 0, 0].real - 4.0 * z1sq)[mesh.interior]
        assert err.max() <= 3.0 * mesh.spacing ** 2

    def test_hermitian_by_construction(self):
        mesh = torus_mesh(2, 8)
        rng = np.random.default_rng(0)
        phi = fl.ScalarField(mesh, rng.standard_normal(mesh.shape))
        assert fl.dd_bar(phi).hermitian_defect() <= 1e-12

    def test_refinement_order(self):
        # smooth periodic field: observed order >= 1.9 between m and 2m
        errs = []
        for m in (16, 32):
            mesh = torus_mesh(1, m, 1.0)
            x = mesh.grid_axis(0) * np.ones(mesh.shape)
            y = mesh.grid_axis(1) * np.ones(mesh.shape)
            phi = fl.ScalarField(mesh, np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y))
            # exact phi_{z zbar} = (phi_xx + phi_yy)/4 = -2 pi^2 phi
            exact = -2.0 * np.pi ** 2 * phi.data
            got = fl.dd_bar(phi).data[..., 0, 0].real
            errs.append(np.max(np.abs(got - exact)))
        order = np.log2(errs[0] / errs[1])
        assert order >= 1.9


class TestEigenvaluesAndTraces:
    def test_identity_pencil(self):
        mesh = torus_mesh(2, 8)
        om = fl.identity_metric(mesh)
        lam = fl.endo_eigenvalues(om, om)
        assert np.max(np.abs(lam - 1.0)) <= 1e-10

    def test_diagonal_case(self):
        mesh = torus_mesh(2, 8)
        om = fl.identity_metric(mesh)
        gp = fl.identity_metric(mesh)
        gp.data[..., 0, 0] = 2.0
        gp.data[..., 1, 1] = 8.0
        lam = fl.endo_eigenvalues(om, gp)
        assert np.allclose(lam[..., 0], 2.0) and np.allclose(lam[..., 1], 8.0)

    def test_general_pencil(self):
        mesh = torus_mesh(2, 8)
        g = fl.identity_metric(mesh)
        g.data[..., 0, 0] = 2.0
        gp = fl.identity_metric(mesh)
        gp.data[..., 0, 0] = 4.0
        gp.data[..., 1, 1] = 3.0
        lam = fl.endo_eigenvalues(g, gp)
        assert np.allclose(np.sort(lam, axis=-1), [2.0, 3.0])

    def test_non_pd_metric_names_node(self):
        mesh = torus_mesh(1, 8)
        om = fl.identity_metric(mesh)
        om.data[3, 4, 0, 0] = -1.0
        with pytest.raises(GeometryError, match=r"\(3, 4\)"):
            fl.endo_eigenvalues(om, fl.identity_metric(mesh))

    def test_pencil_eigensystem_reconstructs(self):
        mesh = torus_mesh(2, 8)
        rng = np.random.default_rng(5)
        g = fl.identity_metric(mesh)
        g.data = g.data + 0.2 * _random_hermitian(rng, mesh.shape, 2)
        gp = fl.identity_metric(mesh)
        gp.data = 1.5 * gp.data + 0.3 * _random_hermitian(rng, mesh.shape, 2)
        lam, V = fl.pencil_eigensystem(g, gp)
        # V* g V = I and g_phi V = g V diag(lam)
        gram = np.einsum("...ji,...jk,...kl->...il", V.conj(), g.data, V)
        assert np.max(np.abs(gram - np.eye(2))) < 1e-10
        left = np.einsum("...ij,...jk->...ik", gp.data, V)
        right = np.einsum("...ij,...jk->...ik", g.data, V * lam[..., None, :])
        assert np.max(np.abs(left - right)) < 1e-10

    def test_laplacian_identity_metric(self):
        mesh = ball_mesh(2, 12, 1.0)
        om = fl.identity_metric(mesh)
        lap = fl.laplacian(om, fl.ScalarField(mesh, mesh.radius2()))
        assert np.allclose(lap.data[mesh.interior], 2.0)

    def test_laplacian_pluriharmonic(self):
        mesh = ball_mesh(1, 12, 1.0)
        x = mesh.grid_axis(0) * np.ones(mesh.shape)
        y = mesh.grid_axis(1) * np.ones(mesh.shape)
        om = fl.identity_metric(mesh)
        lap = fl.laplacian(om, fl.ScalarField(mesh, x * y))
        assert np.max(np.abs(lap.data[mesh.interior])) <= 1e-13

    def test_trace_identity(self):
        # tr_g(g_phi) - n = laplacian(phi), as eigenvalue sums
        mesh = torus_mesh(2, 8)
        rng = np.random.default_rng(2)
        phi = fl.ScalarField(mesh, rng.standard_normal(mesh.shape))
        om = fl.identity_metric(mesh)
        gphi = fl.HermitianField(mesh, om.data + fl.dd_bar(phi).data)
        lam = fl.endo_eigenvalues(om, gphi)
        lap = fl.laplacian(om, phi)
        assert np.max(np.abs(lam.sum(-1) - 2.0 - lap.data)) <= 1e-10


def _random_hermitian(rng, shape, n):
    A = rng.standard_normal(shape + (n, n)) + 1j * rng.standard_normal(shape + (n, n))
    return 0.1 * (A + A.conj().swapaxes(-1, -2))


class TestIntegration:
    def test_unit_torus_volume(self):
        mesh = torus_mesh(1, 16, 1.0)
        om = fl.identity_metric(mesh)
        assert fl.integrate(fl.constant_scalar(mesh, 1.0), om) == pytest.approx(1.0)

    def test_disc_area(self):
        mesh = ball_mesh(1, 64, 1.0)
        om = fl.identity_metric(mesh)
        area = fl.integrate(fl.constant_scalar(mesh, 1.0), om)
        # interior-only sum: within O(h) of pi from below
        assert 0 < np.pi - area < 8.0 * mesh.spacing

    def test_moment_closed_form(self):
        # int |z|^2 over the centered unit 2-torus = 1/6 per real axis pair
        mesh = torus_mesh(1, 64, 1.0)
        om = fl.identity_metric(mesh)
        val = fl.integrate(fl.ScalarField(mesh, mesh.radius2()), om)
        assert val == pytest.approx(1.0 / 6.0, abs=2e-4)

    def test_linear_and_monotone(self):
        mesh = torus_mesh(1, 16)
        om = fl.identity_metric(mesh)
        rng = np.random.default_rng(0)
        f = fl.ScalarField(mesh, rng.uniform(0, 1, mesh.shape))
        g = fl.ScalarField(mesh, rng.uniform(0, 1, mesh.shape))
        lhs = fl.integrate(fl.ScalarField(mesh, 2 * f.data + 3 * g.data), om)
        assert lhs == pytest.approx(2 * fl.integrate(f, om) + 3 * fl.integrate(g, om))
        assert fl.integrate(f, om) >= 0

    def test_metric_weight(self):
        mesh = torus_mesh(1, 16, 1.0)
        om = fl.identity_metric(mesh)
        om.data *= 3.0
        assert fl.integrate(fl.constant_scalar(mesh, 1.0), om) == pytest.approx(3.0)

    def test_mesh_mismatch(self):
        with pytest.raises(MeshMismatchError):
            fl.integrate(fl.constant_scalar(torus_mesh(1, 16), 1.0),
                         fl.identity_metric(torus_mesh(1, 8)))


class TestEntropy:
    def test_trivial(self):
        mesh = torus_mesh(1, 16, 1.0)
        om = fl.identity_metric(mesh)
        rep = fl.entropy(fl.constant_scalar(mesh, 0.0), om, 3.0)
        assert rep.value == pytest.approx(1.0)
        assert rep.mass == pytest.approx(1.0)

    def test_constant_factorization(self):
        mesh = torus_mesh(1, 16, 1.0)
        om = fl.identity_metric(mesh)
        c, pexp = -0.7, 2.5
        rep = fl.entropy(fl.constant_scalar(mesh, c), om, pexp)
        assert rep.value == pytest.approx((1 + abs(c) ** pexp) * np.exp(c))
        assert rep.mass == pytest.approx(np.exp(c))

    def test_refined_quadrature_oracle(self):
        # a sampled bump matches a finer-grid quadrature within 1%
        vals = []
        for m in (32, 128):
            mesh = torus_mesh(1, m, 1.0)
            om = fl.identity_metric(mesh)
            x = mesh.grid_axis(0) * np.ones(mesh.shape)
            y = mesh.grid_axis(1) * np.ones(mesh.shape)
            F = fl.ScalarField(mesh, 0.8 * np.exp(2 * (np.cos(2 * np.pi * x)
                                                       + np.cos(2 * np.pi * y) - 2)))
            vals.append(fl.entropy(F, om, 3.0).value)
        assert abs(vals[0] - vals[1]) <= 0.01 * vals[1]

    def test_value_dominates_mass(self):
        mesh = torus_mesh(1, 16)
        om = fl.identity_metric(mesh)
        rng = np.random.default_rng(1)
        F = fl.ScalarField(mesh, rng.standard_normal(mesh.shape))
        rep = fl.entropy(F, om, 2.0)
        assert rep.value >= rep.mass


class TestNormalization:
    def test_constant_becomes_zero(self):
        mesh = torus_mesh(1, 8)
        out = fl.sup_normalize(fl.constant_scalar(mesh, 4.2))
        assert np.all(out.data == 0.0)

    def test_max_exactly_zero_and_argmax_preserved(self):
        mesh = torus_mesh(1, 8)
        rng = np.random.default_rng(0)
        phi = fl.ScalarField(mesh, rng.standard_normal(mesh.shape) + 3.5)
        out = fl.sup_normalize(phi)
        assert out.data.max() == 0.0
        assert np.argmax(out.data) == np.argmax(phi.data)

    def test_idempotent(self):
        mesh = torus_mesh(1, 8)
        rng = np.random.default_rng(1)
        phi = fl.ScalarField(mesh, rng.standard_normal(mesh.shape))
        once = fl.sup_normalize(phi)
        twice = fl.sup_normalize(once)
        assert np.array_equal(once.data, twice.data)


class TestSerialization:
    def test_scalar_roundtrip_bit_exact(self):
        mesh = torus_mesh(1, 8)
        rng = np.random.default_rng(3)
        phi = fl.ScalarField(mesh, rng.standard_normal(mesh.shape))
        blob = fl.field_to_bytes(phi)
        back = fl.field_from_bytes(blob)
        assert np.array_equal(back.data, phi.data)
        assert fl.field_to_bytes(back) == blob
        assert back.mesh.same_geometry(mesh)

    def test_hermitian_roundtrip(self):
        mesh = ball_mesh(1, 8, 1.0)
        om = fl.identity_metric(mesh)
        om.data[..., 0, 0] = 2.5
        blob = fl.field_to_bytes(om)
        back = fl.field_from_bytes(blob)
        assert np.array_equal(back.data, om.data)

    def test_file_roundtrip(self, tmp_path):
        mesh = torus_mesh(1, 8)
        phi = fl.constant_scalar(mesh, 1.25)
        fl.save_field(phi, tmp_path / "f.fnlb")
        back = fl.load_field(tmp_path / "f.fnlb")
        assert np.array_equal(back.data, phi.data)

    def test_csv_emission(self, tmp_path):
        mesh = torus_mesh(1, 8)
        phi = fl.constant_scalar(mesh, 0.5)
        fl.scalar_to_csv(phi, tmp_path / "f.csv")
        lines = (tmp_path / "f.csv").read_text().strip().splitlines()
        assert lines[0] == "x1,y1,value"
        assert len(lines) == 1 + mesh.node_count
