"""
Testes para igsense.services.bayes.

Testa:
- Espectro de posto baixo no 2×2 (γ = 100 em θ = 0, posto deficiente)
- MAP, Φ_IG e Φ̄_IG contra a forma fechada
- Woodbury contra a inversa densa
- Gradiente do funcional MAP nulo em m_post
"""

import numpy as np
import pytest
import scipy.linalg as sla

from igsense.core.exceptions import DimensionMismatchError, RankDeficientError
from igsense.services.bayes import (
    InverseProblem,
    apply_inverse_hessian,
    expected_information_gain,
    information_gain_at,
    lowrank_spectrum,
    map_objective_gradient,
    map_point,
    misfit_hessian_apply,
    trace_term,
)
from igsense.services.forward import ObservationData
from igsense.services.oracle import DenseProblem
from igsense.services.prior import GaussianPrior
from igsense.services.twobytwo import TwoByTwoModel, kld_closed_form, posterior_closed_form


class TestInverseProblem:
    """Testes para a montagem do InverseProblem."""

    def test_prior_dimension_mismatch(self, twobytwo_setup):
        """Prior com dimensão diferente da do parâmetro é rejeitado."""
        with pytest.raises(DimensionMismatchError):
            InverseProblem(TwoByTwoModel(), GaussianPrior.identity(3), twobytwo_setup.data)

    def test_data_dimension_mismatch(self):
        """Dados com número errado de observações são rejeitados."""
        with pytest.raises(DimensionMismatchError):
            InverseProblem(TwoByTwoModel(), GaussianPrior.identity(2), ObservationData.isotropic([1.0, 2.0, 3.0], 0.1))

    def test_clone_has_own_counter(self, twobytwo_problem, twobytwo_theta):
        """clone() não compartilha contador."""
        other = twobytwo_problem.clone()
        other.solve_state(np.ones(2), twobytwo_theta)
        assert twobytwo_problem.counter.state_solves == 0
        assert other.counter.state_solves == 1


class TestSpectrum:
    """Testes para lowrank_spectrum."""

    def test_origin_is_rank_deficient(self, twobytwo_problem, twobytwo_setup):
        """Em θ = (0, 0): γ = [100] e o segundo autovalor (0) é descartado."""
        spec = lowrank_spectrum(twobytwo_problem, twobytwo_setup.theta_vector(), 2)
        np.testing.assert_allclose(spec.gammas, [100.0], rtol=1e-12)
        assert spec.rank_deficient
        assert spec.theta_at is not None

    def test_strict_mode_raises(self, twobytwo_problem, twobytwo_setup):
        """Em modo estrito o espectro truncado vira RankDeficientError."""
        with pytest.raises(RankDeficientError) as exc:
            lowrank_spectrum(twobytwo_problem, twobytwo_setup.theta_vector(), 2, strict=True)
        assert exc.value.details == {"rank": 1, "requested_rank": 2}
        assert exc.value.exit_code == 3

    def test_strict_mode_full_rank(self, twobytwo_problem, twobytwo_theta):
        """Espectro completo passa no modo estrito."""
        assert lowrank_spectrum(twobytwo_problem, twobytwo_theta, 2, strict=True).rank == 2

    def test_matches_dense_generalized(self, elliptic_setup):
        """Elíptico n=8: os 9 autovalores batem com eigh(H, R) denso."""
        ip, theta = elliptic_setup.ip, elliptic_setup.theta
        spec = lowrank_spectrum(ip, theta, 9)
        dense = DenseProblem.assemble(ip, theta)
        exact = sla.eigh(dense.hessian, 0.5 * (dense.prior_precision + dense.prior_precision.T), eigvals_only=True)[::-1][:9]
        np.testing.assert_allclose(spec.gammas, exact, rtol=1e-8)

    def test_cost_counts(self, elliptic_setup):
        """Duas passadas: 2·(r + oversample) aplicações, 2 solves incrementais cada."""
        ip, theta = elliptic_setup.ip, elliptic_setup.theta
        lowrank_spectrum(ip, theta, 5, oversample=0)
        assert ip.counter.incremental == 2 * 2 * 5
        assert ip.counter.forward_adjoint == 0

    def test_rank_exceeds_dimension(self, twobytwo_problem, twobytwo_theta):
        """r > dim(m) levanta DimensionMismatchError."""
        with pytest.raises(DimensionMismatchError):
            lowrank_spectrum(twobytwo_problem, twobytwo_theta, 3)

    def test_incremental_cache_recorded(self, elliptic_setup):
        """O bloco da segunda passada fica registrado para o workspace."""
        spec = lowrank_spectrum(elliptic_setup.ip, elliptic_setup.theta, 4, oversample=3)
        u_hat, p_hat = spec.incremental_cache
        assert u_hat.shape == p_hat.shape
        assert u_hat.shape[1] == spec.ritz_coefficients.shape[0]


class TestPosterior:
    """Testes para MAP e informação."""

    @pytest.mark.parametrize("theta", [(0.3, 0.6), (0.1, 0.9), (0.8, 0.2)])
    def test_twobytwo_closed_form(self, twobytwo_problem, twobytwo_setup, theta):
        """MAP e Φ_IG do pipeline coincidem com a forma fechada."""
        setup = twobytwo_setup.with_theta(theta)
        phi, phi_bar, spec, m_post = information_gain_at(twobytwo_problem, setup.theta_vector(), 2)
        m_exact, c_exact = posterior_closed_form(setup)
        np.testing.assert_allclose(m_post, m_exact, rtol=1e-10, atol=1e-12)
        assert phi == pytest.approx(kld_closed_form(setup), rel=1e-10)
        assert phi_bar == pytest.approx(-0.5 * np.linalg.slogdet(c_exact)[1], rel=1e-10)

    def test_woodbury_matches_dense(self, elliptic_setup, rng):
        """(H + R)⁻¹z por Woodbury coincide com a solução densa quando r = N_obs."""
        ip, theta = elliptic_setup.ip, elliptic_setup.theta
        spec = lowrank_spectrum(ip, theta, 9)
        dense = DenseProblem.assemble(ip, theta)
        z = rng.standard_normal(ip.prior.dim)
        exact = np.linalg.solve(dense.hessian + dense.prior_precision, z)
        approx = apply_inverse_hessian(spec, ip.prior, z)
        assert np.linalg.norm(approx - exact) / np.linalg.norm(exact) < 1e-8

    def test_map_is_stationary(self, elliptic_setup):
        """O gradiente do funcional MAP se anula em m_post."""
        ip, theta = elliptic_setup.ip, elliptic_setup.theta
        spec = lowrank_spectrum(ip, theta, 9)
        m_post = map_point(ip, spec, theta)
        grad = map_objective_gradient(ip, m_post, theta)
        scale = np.linalg.norm(ip.prior.apply_precision(m_post))
        assert np.linalg.norm(grad) < 1e-7 * scale

    def test_hessian_apply_symmetric(self, elliptic_setup, rng):
        """xᵀH y = yᵀH x."""
        ip, theta = elliptic_setup.ip, elliptic_setup.theta
        x, y = rng.standard_normal((2, ip.prior.dim))
        lhs = x @ misfit_hessian_apply(ip, y, theta)
        rhs = y @ misfit_hessian_apply(ip, x, theta)
        assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_expected_gain_and_trace(self, twobytwo_problem, twobytwo_setup):
        """Φ̄_IG = ½ log 101 e tr = 100/101 em θ = 0."""
        spec = lowrank_spectrum(twobytwo_problem, twobytwo_setup.theta_vector(), 2)
        assert expected_information_gain(spec) == pytest.approx(0.5 * np.log(101.0))
        assert trace_term(spec) == pytest.approx(100.0 / 101.0)
