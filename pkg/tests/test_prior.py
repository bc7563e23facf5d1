"""
Testes para igsense.services.prior.
"""

import numpy as np
import pytest

from igsense.services.prior import GaussianPrior


@pytest.fixture
def bilaplacian(elliptic_model):
    a = elliptic_model.assembly
    return GaussianPrior.bilaplacian(a.stiffness, a.mass)


class TestGaussianPrior:
    """Testes para GaussianPrior."""

    def test_cov_precision_inverse_pair(self, bilaplacian, rng):
        """C_prior e C_prior⁻¹ são inversos mutuamente."""
        v = rng.standard_normal(bilaplacian.dim)
        back = bilaplacian.apply_cov(bilaplacian.apply_precision(v))
        assert np.linalg.norm(back - v) / np.linalg.norm(v) < 1e-8

    def test_block_application(self, bilaplacian, rng):
        """Aplicação em bloco coincide com coluna a coluna."""
        block = rng.standard_normal((bilaplacian.dim, 3))
        cols = np.column_stack([bilaplacian.apply_precision(block[:, k]) for k in range(3)])
        np.testing.assert_allclose(bilaplacian.apply_precision(block), cols, rtol=1e-10, atol=1e-12)

    def test_precision_symmetric_positive(self, bilaplacian):
        """A precisão densa é simétrica positiva definida."""
        dense = bilaplacian.dense_precision()
        np.testing.assert_allclose(dense, dense.T, atol=1e-10)
        assert np.linalg.eigvalsh(0.5 * (dense + dense.T)).min() > 0

    def test_cost_and_grad(self, elliptic_model, rng):
        """cost(m) = ½‖m − m_prior‖² e grad é o dual correspondente."""
        a = elliptic_model.assembly
        prior = GaussianPrior.bilaplacian(a.stiffness, a.mass, mean=0.5)
        m = rng.standard_normal(prior.dim)
        dm = m - 0.5
        assert prior.cost(m) == pytest.approx(0.5 * prior.cm_inner(dm, dm))
        assert float(prior.grad(m) @ dm) == pytest.approx(2 * prior.cost(m))

    def test_lumped_mass(self, elliptic_model, rng):
        """Massa agrupada mantém o par inverso exato."""
        a = elliptic_model.assembly
        prior = GaussianPrior.bilaplacian(a.stiffness, a.mass, mass_solver="lumped")
        v = rng.standard_normal(prior.dim)
        np.testing.assert_allclose(prior.apply_cov(prior.apply_precision(v)), v, rtol=1e-9, atol=1e-9)

    def test_gamma_delta_scale(self, elliptic_model):
        """Com rigidez nula o operador escala como δ²: precisão ∝ δ²."""
        a = elliptic_model.assembly
        one = GaussianPrior.bilaplacian(a.stiffness, a.mass, gamma=1e-12, delta=1.0, mass_solver="lumped")
        two = GaussianPrior.bilaplacian(a.stiffness, a.mass, gamma=1e-12, delta=2.0, mass_solver="lumped")
        v = np.ones(one.dim)
        assert (v @ two.apply_precision(v)) / (v @ one.apply_precision(v)) == pytest.approx(4.0, rel=1e-6)

    def test_non_positive_parameters(self, elliptic_model):
        """γ ou δ ≤ 0 são rejeitados."""
        a = elliptic_model.assembly
        with pytest.raises(ValueError):
            GaussianPrior.bilaplacian(a.stiffness, a.mass, gamma=0.0)

    def test_identity(self, rng):
        """O prior identidade devolve o próprio vetor."""
        prior = GaussianPrior.identity(3)
        v = rng.standard_normal(3)
        np.testing.assert_allclose(prior.apply_cov(v), v)
        np.testing.assert_allclose(prior.apply_precision(v), v)
