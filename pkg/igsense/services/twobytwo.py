"""
Modelo 2×2 em forma fechada: F(θ) = [[θ2, θ1], [θ1, 1−θ2]], prior N(0, I), Γ_noise = σ²I.

Serve de oráculo exato para todo o pipeline. O mesmo problema também é
exposto como ForwardModel (A = −I, C = F(θ), d = 0, Q = I), de modo que
u = F(θ)m e o código genérico roda sem alterações.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from igsense.core.exceptions import BoundaryClampWarning
from igsense.services.forward import ForwardModel, ObservationData, ThetaVector

logger = logging.getLogger(__name__)

_DF_DTHETA = (
    np.array([[0.0, 1.0], [1.0, 0.0]]),
    np.array([[1.0, 0.0], [0.0, -1.0]]),
)

UNIT_BOX = np.array([[0.0, 1.0], [0.0, 1.0]])


def forward_matrix(theta) -> np.ndarray:
    """F(θ) para θ = (θ1, θ2)."""
    t1, t2 = float(theta[0]), float(theta[1])
    return np.array([[t2, t1], [t1, 1.0 - t2]])


@dataclass(frozen=True)
class TwoByTwoSetup:
    """Dados do problema 2×2: u_obs ∈ ℝ², σ > 0 e θ ∈ [0,1]²."""

    u_obs: np.ndarray = field(default_factory=lambda: np.array([0.15, 0.05]))
    sigma: float = 0.1
    theta: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        if self.sigma <= 0.0:
            raise ValueError(f"sigma deve ser positivo, recebeu {self.sigma}")
        object.__setattr__(self, "u_obs", np.asarray(self.u_obs, dtype=float))
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))

    def with_theta(self, theta) -> "TwoByTwoSetup":
        return TwoByTwoSetup(self.u_obs, self.sigma, np.asarray(theta, dtype=float))

    @property
    def data(self) -> ObservationData:
        return ObservationData.isotropic(self.u_obs, self.sigma)

    def theta_vector(self) -> ThetaVector:
        return ThetaVector(self.theta.copy(), TwoByTwoModel.theta_names, self.theta.copy(), UNIT_BOX)


class TwoByTwoModel(ForwardModel):
    """ForwardModel do problema 2×2."""

    theta_names = ("theta1", "theta2")

    def __init__(self):
        self._identity = sp.identity(2, format="csr")
        self._neg_identity = (-self._identity).tocsr()

    @property
    def state_dim(self) -> int:
        return 2

    @property
    def param_dim(self) -> int:
        return 2

    @property
    def observation_matrix(self) -> sp.csr_matrix:
        return self._identity

    def state_operator(self, theta: ThetaVector):
        return self._neg_identity

    def control_operator(self, theta: ThetaVector):
        return sp.csr_matrix(forward_matrix(theta.values))

    def source_vector(self, theta: ThetaVector) -> np.ndarray:
        return np.zeros(2)

    def state_operator_dtheta(self, j: int, theta: ThetaVector):
        self.check_index(j)
        return None

    def control_operator_dtheta(self, j: int, theta: ThetaVector):
        self.check_index(j)
        return sp.csr_matrix(_DF_DTHETA[j])

    def source_vector_dtheta(self, j: int, theta: ThetaVector):
        self.check_index(j)
        return None


# ==========================================
# Forma fechada
# ==========================================

def posterior_closed_form(setup: TwoByTwoSetup) -> tuple[np.ndarray, np.ndarray]:
    """
    Posterior exato.

    Returns:
        (m_post, C_post) com C_post = (σ⁻²FᵀF + I)⁻¹ e m_post = σ⁻²·C_post·Fᵀu_obs
    """
    f = forward_matrix(setup.theta)
    s2 = setup.sigma**2
    c_post = np.linalg.inv(f.T @ f / s2 + np.eye(2))
    m_post = c_post @ (f.T @ setup.u_obs) / s2
    return m_post, c_post


def kld_closed_form(setup: TwoByTwoSetup) -> float:
    """Φ_IG = ½[log det(C_post⁻¹) + tr(C_post) − 2 + ⟨m_post, m_post⟩]."""
    m_post, c_post = posterior_closed_form(setup)
    _, logdet = np.linalg.slogdet(c_post)
    return 0.5 * (-logdet + np.trace(c_post) - 2.0 + float(m_post @ m_post))


def kld_closed_form_batch(thetas: np.ndarray, u_obs: np.ndarray, sigma: float) -> np.ndarray:
    """Versão vetorizada de kld_closed_form para θ em linhas (N, 2)."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    t1, t2 = thetas[:, 0], thetas[:, 1]
    f = np.empty((thetas.shape[0], 2, 2))
    f[:, 0, 0] = t2
    f[:, 0, 1] = t1
    f[:, 1, 0] = t1
    f[:, 1, 1] = 1.0 - t2
    s2 = sigma**2
    precision = np.einsum("nki,nkj->nij", f, f) / s2 + np.eye(2)
    c_post = np.linalg.inv(precision)
    rhs = np.einsum("nki,k->ni", f, np.asarray(u_obs, dtype=float)) / s2
    m_post = np.einsum("nij,nj->ni", c_post, rhs)
    _, logdet = np.linalg.slogdet(precision)
    trace = np.trace(c_post, axis1=1, axis2=2)
    return 0.5 * (logdet + trace - 2.0 + np.sum(m_post**2, axis=1))


def kld_gradient_reference(setup: TwoByTwoSetup, h: float = 1e-3) -> np.ndarray:
    """
    Gradiente de kld_closed_form por diferenças finitas com extrapolação de Richardson.

    Diferença central sobre {h, h/2}: (4D(h/2) − D(h))/3. Quando θ ± h sai de
    [0,1], usa diferença unilateral com (2D(h/2) − D(h)) e emite BoundaryClampWarning.
    """
    if not 0.0 < h <= 1e-2:
        raise ValueError(f"h deve estar em (0, 1e-2], recebeu {h}")
    theta = setup.theta
    grad = np.zeros(2)
    for j in range(2):
        def phi(step: float) -> float:
            shifted = theta.copy()
            shifted[j] += step
            return kld_closed_form(setup.with_theta(shifted))

        if theta[j] - h >= 0.0 and theta[j] + h <= 1.0:
            d_h = (phi(h) - phi(-h)) / (2 * h)
            d_h2 = (phi(h / 2) - phi(-h / 2)) / h
            grad[j] = (4 * d_h2 - d_h) / 3
            continue

        direction = 1.0 if theta[j] - h < 0.0 else -1.0
        message = f"θ_{j + 1} = {theta[j]:g} ± {h:g} sai de [0,1]; diferença unilateral"
        logger.warning(message)
        warnings.warn(message, BoundaryClampWarning, stacklevel=2)
        base = phi(0.0)
        d_h = direction * (phi(direction * h) - base) / h
        d_h2 = direction * (phi(direction * h / 2) - base) / (h / 2)
        grad[j] = 2 * d_h2 - d_h
    return grad
