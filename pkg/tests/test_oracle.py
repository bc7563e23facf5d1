"""
Testes para igsense.services.oracle.
"""

import numpy as np
import pytest

from igsense.core.exceptions import BoundaryClampWarning, DegenerateVarianceError, DimensionGuardError
from igsense.models.schemas import RunConfig
from igsense.services.bayes import information_gain_at
from igsense.services.factory import build_problem
from igsense.services.oracle import (
    DenseProblem,
    dense_kld,
    fd_errors,
    fd_gradient,
    pick_freeze_total_sobol,
    uniform_box,
)
from igsense.services.twobytwo import kld_closed_form, posterior_closed_form


class TestFiniteDifferences:
    """Testes para fd_gradient e fd_errors."""

    def test_quadratic_is_exact(self):
        """Diferença central é exata para quadráticas."""
        grad = fd_gradient(lambda x: x[0] ** 2 + 3 * x[0] * x[1], np.array([1.0, 2.0]), h=1e-2)
        np.testing.assert_allclose(grad, [8.0, 3.0], rtol=1e-10)

    def test_second_order_decay(self):
        """O erro da diferença central cai ~100× quando h cai 10×."""
        errors = fd_errors(lambda x: np.sin(x[0]), np.array([np.cos(0.3)]), np.array([0.3]), hs=(1e-1, 1e-2))
        assert errors[0, 0] / errors[1, 0] == pytest.approx(100.0, rel=0.05)

    def test_box_clamp(self):
        """Na borda da caixa a diferença é unilateral e avisa."""
        box = np.array([[0.0, 1.0]])
        with pytest.warns(BoundaryClampWarning):
            grad = fd_gradient(lambda x: 2 * x[0], np.array([0.0]), h=1e-3, box=box)
        assert grad[0] == pytest.approx(2.0)

    def test_invalid_step(self):
        """h ≤ 0 é rejeitado."""
        with pytest.raises(ValueError):
            fd_gradient(lambda x: x[0], np.array([1.0]), h=0.0)


class TestDenseOracle:
    """Testes para DenseProblem e dense_kld."""

    def test_twobytwo_matches_closed_form(self, twobytwo_problem, twobytwo_setup):
        """No 2×2 o oráculo denso reproduz a forma fechada."""
        setup = twobytwo_setup.with_theta([0.3, 0.6])
        theta = setup.theta_vector()
        exact = dense_kld(DenseProblem.assemble(twobytwo_problem, theta), setup.u_obs)
        m_post, c_post = posterior_closed_form(setup)
        assert exact.phi_ig == pytest.approx(kld_closed_form(setup), rel=1e-12)
        np.testing.assert_allclose(exact.m_post, m_post, rtol=1e-12)
        np.testing.assert_allclose(exact.c_post, c_post, rtol=1e-12)

    def test_assembly_not_counted(self, twobytwo_problem, twobytwo_theta):
        """A montagem densa usa um solver privado."""
        DenseProblem.assemble(twobytwo_problem, twobytwo_theta)
        assert twobytwo_problem.counter.forward_adjoint == 0

    def test_lowrank_pipeline_matches(self, elliptic_setup):
        """Elíptico n=8 com r = N_obs: Φ_IG, Φ̄_IG e m_post coincidem com o denso."""
        ip, theta = elliptic_setup.ip, elliptic_setup.theta
        phi, phi_bar, spec, m_post = information_gain_at(ip, theta, 9)
        exact = dense_kld(DenseProblem.assemble(ip, theta), ip.data.u_obs)
        assert phi == pytest.approx(exact.phi_ig, rel=1e-10, abs=1e-10)
        assert phi_bar == pytest.approx(exact.phi_ig_bar, rel=1e-10, abs=1e-10)
        assert np.linalg.norm(m_post - exact.m_post) <= 1e-8 * np.linalg.norm(exact.m_post)
        np.testing.assert_allclose(spec.gammas, exact.gammas[:9], rtol=1e-8)

    @pytest.mark.slow
    def test_lowrank_pipeline_matches_n16(self):
        """Mesma verificação na malha 16×16."""
        setup = build_problem(RunConfig.from_dict({"model": {"kind": "elliptic", "mesh_n": 16}}))
        phi, phi_bar, _, _ = information_gain_at(setup.ip, setup.theta, 9)
        exact = dense_kld(DenseProblem.assemble(setup.ip, setup.theta), setup.ip.data.u_obs)
        assert phi == pytest.approx(exact.phi_ig, rel=1e-10)
        assert phi_bar == pytest.approx(exact.phi_ig_bar, rel=1e-10)

    def test_guard(self):
        """Dimensão acima de 2000 é recusada."""
        setup = build_problem(RunConfig.from_dict({"model": {"kind": "elliptic", "mesh_n": 45}}))
        with pytest.raises(DimensionGuardError):
            DenseProblem.assemble(setup.ip, setup.theta)


class TestPickFreeze:
    """Testes para pick_freeze_total_sobol."""

    def test_additive_function(self):
        """f = t1 + 2 t2 em U(−1,1)²: S_tot ≈ S_1 ≈ (0.2, 0.8)."""
        result = pick_freeze_total_sobol(lambda t: t[:, 0] + 2 * t[:, 1], uniform_box([-1, -1], [1, 1]), 20_000, seed=2)
        np.testing.assert_allclose(result.total, [0.2, 0.8], atol=0.03)
        np.testing.assert_allclose(result.first_order, [0.2, 0.8], atol=0.05)

    def test_interaction(self):
        """f = t1·t2: S_1 ≈ 0 mas S_tot ≈ 1 para cada entrada."""
        result = pick_freeze_total_sobol(lambda t: t[:, 0] * t[:, 1], uniform_box([-1, -1], [1, 1]), 20_000, seed=4)
        np.testing.assert_allclose(result.total, [1.0, 1.0], atol=0.08)

    def test_small_sample_rejected(self):
        """N < 10³ é rejeitado."""
        with pytest.raises(ValueError):
            pick_freeze_total_sobol(lambda t: t[:, 0], uniform_box([0], [1]), 500, seed=0)

    def test_constant_function(self):
        """Função constante levanta DegenerateVarianceError."""
        with pytest.raises(DegenerateVarianceError):
            pick_freeze_total_sobol(lambda t: np.ones(t.shape[0]), uniform_box([0, 0], [1, 1]), 1000, seed=0)
