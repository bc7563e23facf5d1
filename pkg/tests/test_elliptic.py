"""
Testes para igsense.services.elliptic.

Testa:
- Malha (áreas, contorno)
- Matrizes montadas (rigidez, massa, massa de contorno, observação)
- Dados sintéticos (σ relativo, determinismo por semente)
- Refinamento de malha (n = 32 vs n = 128)
"""

import numpy as np
import pytest

from igsense.core.exceptions import ConfigurationError, InvalidObservationPointError
from igsense.services.elliptic import (
    DEFAULT_OBS_POINTS,
    EllipticAssembly,
    UnitSquareMesh,
    build_elliptic,
    synthesize_data,
    true_source,
)
from igsense.services.forward import StateSolver


class TestUnitSquareMesh:
    """Testes para UnitSquareMesh."""

    def test_counts(self):
        """n×n células: (n+1)² nós, 2n² triângulos e 4n arestas de contorno."""
        mesh = UnitSquareMesh.build(4)
        assert mesh.num_nodes == 25
        assert mesh.triangles.shape == (32, 3)
        assert mesh.boundary_edges.shape == (16, 2)

    def test_counterclockwise(self):
        """Todas as áreas orientadas são positivas e somam 1."""
        areas = UnitSquareMesh.build(5).signed_areas()
        assert np.all(areas > 0)
        assert areas.sum() == pytest.approx(1.0)

    def test_too_coarse(self):
        """n < 2 é rejeitado."""
        with pytest.raises(ValueError):
            UnitSquareMesh.build(1)

    def test_point_outside_domain(self):
        """Ponto de observação fora de Ω levanta InvalidObservationPointError."""
        mesh = UnitSquareMesh.build(4)
        with pytest.raises(InvalidObservationPointError):
            mesh.barycentric_row(1.2, 0.5)

    def test_invalid_point_is_configuration_error(self):
        """InvalidObservationPointError mapeia para erro de configuração."""
        with pytest.raises(ConfigurationError):
            build_elliptic(4, obs_points=[(0.5, 0.0)])


class TestAssembly:
    """Testes para EllipticAssembly."""

    @pytest.fixture
    def assembly(self):
        return EllipticAssembly.assemble(UnitSquareMesh.build(6), DEFAULT_OBS_POINTS)

    def test_mass_integrates_one(self, assembly):
        """1ᵀM1 = |Ω| = 1."""
        ones = np.ones(assembly.mass.shape[0])
        assert ones @ assembly.mass @ ones == pytest.approx(1.0)

    def test_boundary_mass_integrates_perimeter(self, assembly):
        """1ᵀMb1 = |∂Ω| = 4."""
        ones = np.ones(assembly.boundary_mass.shape[0])
        assert ones @ assembly.boundary_mass @ ones == pytest.approx(4.0)

    def test_stiffness_kills_constants(self, assembly):
        """K·1 = 0 e K é simétrica."""
        ones = np.ones(assembly.stiffness.shape[0])
        assert np.abs(assembly.stiffness @ ones).max() < 1e-12
        assert abs(assembly.stiffness - assembly.stiffness.T).max() < 1e-14

    def test_stiffness_linear_energy(self, assembly):
        """Para u = x, uᵀKu = ∫|∇u|² = 1 (P1 é exato em funções lineares)."""
        mesh = UnitSquareMesh.build(6)
        u = mesh.nodes[:, 0]
        assert u @ assembly.stiffness @ u == pytest.approx(1.0)

    def test_observation_rows_sum_to_one(self, assembly):
        """Cada linha de Q interpola: pesos somam 1."""
        np.testing.assert_allclose(np.asarray(assembly.obs_matrix.sum(axis=1)).ravel(), 1.0)

    def test_observation_reproduces_linear(self):
        """Q aplicada a u = x + 2y devolve x + 2y nos pontos."""
        mesh = UnitSquareMesh.build(7)
        points = [(0.13, 0.77), (0.5, 0.5), (0.91, 0.02)]
        assembly = EllipticAssembly.assemble(mesh, points)
        u = mesh.interpolate(lambda x, y: x + 2 * y)
        expected = [x + 2 * y for x, y in points]
        np.testing.assert_allclose(assembly.obs_matrix @ u, expected, atol=1e-13)


class TestEllipticModel:
    """Testes para EllipticModel."""

    def test_nominal_theta(self, elliptic_model):
        """θ nominal (c, g) = (1, 0.1)."""
        np.testing.assert_allclose(elliptic_model.nominal_theta.values, [1.0, 0.1])
        assert elliptic_model.theta_names == ("c", "g")

    def test_constant_solution(self, elliptic_model):
        """
        m = c·k constante e g = 0: u = k resolve −Δu + cu = m com Neumann homogêneo.
        """
        theta = elliptic_model.nominal_theta.with_values([2.0, 0.0])
        u = StateSolver(elliptic_model).solve_state(np.full(elliptic_model.param_dim, 6.0), theta)
        np.testing.assert_allclose(u, 3.0, atol=1e-10)

    def test_g_derivative_is_source(self, elliptic_model, rng):
        """∂d/∂g = −(Mb·1)ᵀp e as demais derivadas em g são nulas."""
        theta = elliptic_model.nominal_theta
        p, u = rng.standard_normal((2, elliptic_model.state_dim))
        load = elliptic_model.assembly.boundary_mass @ np.ones(elliptic_model.state_dim)
        assert elliptic_model.d_form_dtheta(1, p, theta) == pytest.approx(-load @ p)
        assert elliptic_model.a_form_dtheta(1, p, u, theta) == 0.0

    def test_c_derivative_is_mass(self, elliptic_model, rng):
        """∂a/∂c = pᵀMu."""
        theta = elliptic_model.nominal_theta
        p, u = rng.standard_normal((2, elliptic_model.state_dim))
        assert elliptic_model.a_form_dtheta(0, p, u, theta) == pytest.approx(p @ elliptic_model.assembly.mass @ u)

    def test_negative_reaction_rejected(self):
        """c nominal ≤ 0 é rejeitado."""
        with pytest.raises(ValueError):
            build_elliptic(4, c_nominal=-1.0)


class TestSynthesizeData:
    """Testes para synthesize_data."""

    def test_noise_level(self, elliptic_model):
        """σ = level·‖u‖_∞."""
        theta = elliptic_model.nominal_theta
        m_true = true_source(elliptic_model.mesh)
        u = StateSolver(elliptic_model).solve_state(m_true, theta)
        data = synthesize_data(elliptic_model, m_true, theta, level=0.02, seed=4)
        assert np.sqrt(data.noise_var[0]) == pytest.approx(0.02 * np.abs(u).max())

    def test_noise_free(self, elliptic_model):
        """noise_scale = 0 devolve Q·u exato."""
        theta = elliptic_model.nominal_theta
        m_true = true_source(elliptic_model.mesh)
        u = StateSolver(elliptic_model).solve_state(m_true, theta)
        data = synthesize_data(elliptic_model, m_true, theta, noise_scale=0.0)
        np.testing.assert_allclose(data.u_obs, elliptic_model.observe(u))

    def test_seeded(self, elliptic_model):
        """Mesma semente, mesmos bits; sementes diferentes, dados diferentes."""
        theta = elliptic_model.nominal_theta
        m_true = true_source(elliptic_model.mesh)
        a = synthesize_data(elliptic_model, m_true, theta, seed=7)
        b = synthesize_data(elliptic_model, m_true, theta, seed=7)
        c = synthesize_data(elliptic_model, m_true, theta, seed=8)
        assert np.array_equal(a.u_obs, b.u_obs)
        assert not np.array_equal(a.u_obs, c.u_obs)


class TestMeshRefinement:
    """Convergência do estado sob refinamento da malha."""

    @pytest.mark.slow
    def test_coarse_and_fine_states_agree(self):
        """n = 32 e n = 128 concordam a 1e-3 relativo nas observações e nos nós comuns."""
        coarse, fine = build_elliptic(32), build_elliptic(128)
        u_coarse = StateSolver(coarse).solve_state(true_source(coarse.mesh), coarse.nominal_theta)
        u_fine = StateSolver(fine).solve_state(true_source(fine.mesh), fine.nominal_theta)

        obs_coarse, obs_fine = coarse.observe(u_coarse), fine.observe(u_fine)
        assert np.max(np.abs(obs_coarse - obs_fine)) <= 1e-3 * np.max(np.abs(obs_fine))

        shared = [fine.mesh.node_index(4 * i, 4 * j) for j in range(33) for i in range(33)]
        assert np.max(np.abs(u_coarse - u_fine[shared])) <= 1e-3 * np.max(np.abs(u_fine))
