"""
Testes para igsense.services.hdsa.

Testa:
- Derivadas de autovalores (2×2 exato e workspace com/sem cache)
- Gradientes de Φ_IG e Φ̄_IG contra diferenças finitas
- Independência de Φ̄_IG em g e parâmetro espectador
- Sensibilidade do ponto MAP via b_j
- Contabilidade de solves
"""

from dataclasses import replace

import numpy as np
import pytest

from igsense.core.exceptions import IndexOutOfRangeError
from igsense.models.schemas import RunConfig
from igsense.services.bayes import information_gain_at, lowrank_spectrum, map_point
from igsense.services.factory import build_problem
from igsense.services.hdsa import (
    assemble_Bj,
    build_workspace,
    eigenvalue_derivative,
    eigenvalue_derivative_matrix,
    info_gain_gradient,
    map_sensitivity,
    verify_multiplier,
)
from igsense.services.oracle import fd_gradient


class TestEigenvalueDerivative:
    """Testes para dγ_i/dθ_j."""

    def test_twobytwo_origin(self, twobytwo_problem, twobytwo_setup):
        """Em θ = 0: γ_1 = 100, dγ_1/dθ_1 = 0 e dγ_1/dθ_2 = −200."""
        theta = twobytwo_setup.theta_vector()
        spec = lowrank_spectrum(twobytwo_problem, theta, 2)
        ws = build_workspace(twobytwo_problem, spec, theta)
        assert eigenvalue_derivative(ws, 0, 0, theta) == pytest.approx(0.0, abs=1e-10)
        assert eigenvalue_derivative(ws, 0, 1, theta) == pytest.approx(-200.0, rel=1e-10)

    def test_mode_out_of_range(self, twobytwo_problem, twobytwo_setup):
        """Modo i ≥ r levanta IndexOutOfRangeError."""
        theta = twobytwo_setup.theta_vector()
        spec = lowrank_spectrum(twobytwo_problem, theta, 2)
        ws = build_workspace(twobytwo_problem, spec, theta)
        with pytest.raises(IndexOutOfRangeError):
            eigenvalue_derivative(ws, 1, 0, theta)

    def test_cache_matches_fresh_solves(self, elliptic_setup):
        """O workspace recomposto do cache coincide com o montado por solves."""
        ip, theta = elliptic_setup.ip, elliptic_setup.theta
        spec = lowrank_spectrum(ip, theta, 9)
        cached = build_workspace(ip, spec, theta)
        fresh = build_workspace(ip, replace(spec, incremental_cache=None), theta)
        assert cached.from_cache and not fresh.from_cache
        np.testing.assert_allclose(
            eigenvalue_derivative_matrix(cached, theta),
            eigenvalue_derivative_matrix(fresh, theta),
            rtol=1e-8,
            atol=1e-10,
        )

    def test_cache_saves_solves(self, elliptic_setup):
        """Reaproveitar o cache não faz solves."""
        ip, theta = elliptic_setup.ip, elliptic_setup.theta
        spec = lowrank_spectrum(ip, theta, 9)
        before = ip.counter.snapshot()
        build_workspace(ip, spec, theta)
        assert (ip.counter.snapshot() - before).incremental == 0

    def test_matches_finite_difference(self, elliptic_setup):
        """dγ_1/dc coincide com diferença central de γ_1."""
        ip, theta = elliptic_setup.ip, elliptic_setup.theta
        spec = lowrank_spectrum(ip, theta, 9)
        ws = build_workspace(ip, spec, theta)
        h = 1e-5

        def gamma_1(t):
            return lowrank_spectrum(ip, t, 9).gammas[0]

        fd = (gamma_1(theta.shifted(0, h)) - gamma_1(theta.shifted(0, -h))) / (2 * h)
        assert eigenvalue_derivative(ws, 0, 0, theta) == pytest.approx(fd, rel=1e-5)

    def test_multiplier_identity(self, elliptic_setup):
        """û_i* coincide com solução independente por CG."""
        ip, theta = elliptic_setup.ip, elliptic_setup.theta
        ws = build_workspace(ip, lowrank_spectrum(ip, theta, 9), theta)
        assert max(verify_multiplier(ip, ws, i) for i in range(ws.rank)) < 1e-7


class TestInfoGainGradient:
    """Testes para info_gain_gradient."""

    def test_twobytwo_against_finite_difference(self, twobytwo_problem, twobytwo_theta):
        """Gradiente adjunto de Φ_IG vs diferenças centrais (2×2)."""
        report = info_gain_gradient(twobytwo_problem, twobytwo_theta, 2)

        def phi(t):
            return information_gain_at(twobytwo_problem.clone(), t, 2)[0]

        np.testing.assert_allclose(report.grad_phi_ig, fd_gradient(phi, twobytwo_theta, 1e-5), rtol=1e-6, atol=1e-7)

    def test_elliptic_against_finite_difference(self, elliptic_setup):
        """Gradientes de Φ_IG e Φ̄_IG vs diferenças centrais (elíptico n=8)."""
        ip, theta, r = elliptic_setup.ip, elliptic_setup.theta, elliptic_setup.rank
        report = info_gain_gradient(ip, theta, r)

        def phi(t):
            return information_gain_at(ip.clone(), t, r)[0]

        def phi_bar(t):
            return information_gain_at(ip.clone(), t, r)[1]

        fd = fd_gradient(phi, theta, 1e-4)
        fd_bar = fd_gradient(phi_bar, theta, 1e-4)
        np.testing.assert_allclose(report.grad_phi_ig, fd, rtol=1e-5, atol=1e-6 * max(1.0, abs(report.phi_ig)))
        np.testing.assert_allclose(report.grad_phi_ig_bar, fd_bar, rtol=1e-5, atol=1e-8)

    def test_expected_gain_independent_of_g(self, elliptic_setup):
        """∂Φ̄_IG/∂g = 0 (g só entra na fonte)."""
        report = info_gain_gradient(elliptic_setup.ip, elliptic_setup.theta, elliptic_setup.rank)
        assert abs(report.grad_phi_ig_bar[1]) <= 1e-10

    def test_spectator_has_zero_gradient(self):
        """Um parâmetro que não entra em nenhuma forma tem gradiente exatamente nulo."""
        config = RunConfig.from_dict({
            "model": {"kind": "elliptic", "mesh_n": 8},
            "theta": {
                "names": ["c", "g", "s"],
                "nominal": [1.0, 0.1, 0.5],
                "box": [[0.5, 2.0], [0.0, 1.0], [0.0, 1.0]],
            },
        })
        setup = build_problem(config)
        report = info_gain_gradient(setup.ip, setup.theta, setup.rank)
        assert report.grad_phi_ig[2] == 0.0
        assert report.grad_phi_ig_bar[2] == 0.0

    def test_spectator_leaves_other_entries_bitwise(self, elliptic_setup):
        """Acrescentar um espectador não muda nenhum bit das demais entradas."""
        config = RunConfig.from_dict({
            "model": {"kind": "elliptic", "mesh_n": 8},
            "theta": {
                "names": ["c", "g", "s"],
                "nominal": [1.0, 0.1, 0.5],
                "box": [[0.5, 2.0], [0.0, 1.0], [0.0, 1.0]],
            },
        })
        extended = build_problem(config)
        base = info_gain_gradient(elliptic_setup.ip, elliptic_setup.theta, elliptic_setup.rank)
        report = info_gain_gradient(extended.ip, extended.theta, extended.rank)
        assert report.phi_ig == base.phi_ig
        assert np.array_equal(report.grad_phi_ig[:2], base.grad_phi_ig)
        assert np.array_equal(report.grad_phi_ig_bar[:2], base.grad_phi_ig_bar)
        assert report.grad_phi_ig.shape == (3,)

    def test_solve_accounting(self, elliptic_setup):
        """Fases MAP + sensibilidade: ≤ 2r + 2n_θ + 6 incrementais e ≤ 4 estado/adjunto."""
        r = elliptic_setup.rank
        report = info_gain_gradient(elliptic_setup.ip, elliptic_setup.theta, r)
        counts = report.algorithm_counts
        assert counts.incremental <= 2 * r + 2 * 2 + 6
        assert counts.forward_adjoint <= 4
        assert report.phase_counts["map"].forward_adjoint == 2

    def test_deterministic(self, elliptic_setup):
        """Mesma semente, mesmos bits."""
        ip, theta, r = elliptic_setup.ip, elliptic_setup.theta, elliptic_setup.rank
        first = info_gain_gradient(ip.clone(), theta, r, seed=5)
        second = info_gain_gradient(ip.clone(), theta, r, seed=5)
        assert np.array_equal(first.grad_phi_ig, second.grad_phi_ig)
        assert first.phi_ig == second.phi_ig


class TestMapSensitivity:
    """Testes para ∂m_post/∂θ_j."""

    def test_against_finite_difference(self, elliptic_setup):
        """−H⁻¹b_j coincide com a diferença central de m_post."""
        ip, theta, r = elliptic_setup.ip, elliptic_setup.theta, elliptic_setup.rank
        spec = lowrank_spectrum(ip, theta, r)
        m_post = map_point(ip, spec, theta)
        u = ip.solve_state(m_post, theta)
        p = ip.solve_adjoint(u, theta)
        h = 1e-5
        for j in range(2):
            dm = map_sensitivity(spec, ip.prior, assemble_Bj(ip, theta, j, u, p, m_post))
            plus = map_point(ip, lowrank_spectrum(ip, theta.shifted(j, h), r), theta.shifted(j, h))
            minus = map_point(ip, lowrank_spectrum(ip, theta.shifted(j, -h), r), theta.shifted(j, -h))
            fd = (plus - minus) / (2 * h)
            assert np.linalg.norm(dm - fd) <= 1e-5 * max(1.0, np.linalg.norm(fd))

    def test_spectator_costs_nothing(self):
        """b_j de um espectador é zero e não faz solves."""
        config = RunConfig.from_dict({
            "model": {"kind": "twobytwo"},
            "theta": {"names": ["theta1", "theta2", "s"], "nominal": [0.5, 0.5, 1.0], "box": [[0, 1], [0, 1], [0, 2]]},
        })
        setup = build_problem(config)
        ip, theta = setup.ip, setup.theta
        before = ip.counter.snapshot()
        b = assemble_Bj(ip, theta, 2, np.zeros(2), np.zeros(2), np.zeros(2))
        assert np.all(b == 0.0)
        assert (ip.counter.snapshot() - before).incremental == 0
