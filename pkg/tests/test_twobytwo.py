"""
Testes para igsense.services.twobytwo.

Testa:
- Forma fechada do posterior e da divergência KL
- Versão vetorizada
- Gradiente de referência (Richardson) e o aviso de fronteira
"""

import numpy as np
import pytest

from igsense.core.exceptions import BoundaryClampWarning
from igsense.services.twobytwo import (
    TwoByTwoSetup,
    forward_matrix,
    kld_closed_form,
    kld_closed_form_batch,
    kld_gradient_reference,
    posterior_closed_form,
)


class TestClosedForm:
    """Testes para a forma fechada."""

    def test_forward_matrix(self):
        """F(θ) = [[θ2, θ1], [θ1, 1 − θ2]]."""
        np.testing.assert_allclose(forward_matrix([0.2, 0.3]), [[0.3, 0.2], [0.2, 0.7]])

    def test_kld_at_origin(self, twobytwo_setup):
        """Em θ = (0, 0): Φ_IG ≈ 1.8137361."""
        assert kld_closed_form(twobytwo_setup) == pytest.approx(1.8137361, abs=1e-7)

    def test_posterior_at_origin(self, twobytwo_setup):
        """Em θ = (0, 0): C_post = diag(1, 1/101) e m_post = (0, 5/101)."""
        m_post, c_post = posterior_closed_form(twobytwo_setup)
        np.testing.assert_allclose(c_post, np.diag([1.0, 1.0 / 101.0]), atol=1e-15)
        np.testing.assert_allclose(m_post, [0.0, 5.0 / 101.0], atol=1e-15)

    def test_batch_matches_scalar(self, twobytwo_setup, rng):
        """kld_closed_form_batch coincide com a versão escalar."""
        thetas = rng.random((20, 2))
        batch = kld_closed_form_batch(thetas, twobytwo_setup.u_obs, twobytwo_setup.sigma)
        scalar = [kld_closed_form(twobytwo_setup.with_theta(t)) for t in thetas]
        np.testing.assert_allclose(batch, scalar, rtol=1e-12)

    def test_non_negative(self, twobytwo_setup, rng):
        """Φ_IG ≥ 0 em toda a caixa."""
        assert np.all(kld_closed_form_batch(rng.random((200, 2)), twobytwo_setup.u_obs, twobytwo_setup.sigma) >= 0)

    def test_sigma_must_be_positive(self):
        """σ ≤ 0 é rejeitado."""
        with pytest.raises(ValueError):
            TwoByTwoSetup(sigma=0.0)


class TestGradientReference:
    """Testes para kld_gradient_reference."""

    def test_interior_matches_fine_difference(self, twobytwo_setup):
        """No interior, Richardson concorda com diferença central fina."""
        setup = twobytwo_setup.with_theta([0.4, 0.7])
        grad = kld_gradient_reference(setup, h=1e-3)
        h = 1e-5
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            fd = (kld_closed_form(setup.with_theta(setup.theta + e)) - kld_closed_form(setup.with_theta(setup.theta - e))) / (2 * h)
            assert grad[j] == pytest.approx(fd, rel=1e-6, abs=1e-6)

    def test_boundary_warns(self, twobytwo_setup):
        """Em θ = (0, 0) a diferença é unilateral e emite BoundaryClampWarning."""
        with pytest.warns(BoundaryClampWarning):
            grad = kld_gradient_reference(twobytwo_setup, h=1e-3)
        assert np.all(np.isfinite(grad))

    def test_invalid_step(self, twobytwo_setup):
        """h fora de (0, 1e-2] é rejeitado."""
        with pytest.raises(ValueError):
            kld_gradient_reference(twobytwo_setup, h=0.1)
