"""
Núcleo da inferência linear-gaussiana.

Contém:
- InverseProblem: modelo + prior + dados + contador de solves
- misfit_hessian_apply: ação de H_misfit = 𝓖*Γ⁻¹𝓖 (2 solves incrementais por vetor)
- lowrank_spectrum: autopares de (H_misfit, C_prior⁻¹) pelo autossolver de dupla passada
- apply_inverse_hessian: (H_misfit + C_prior⁻¹)⁻¹ na forma de Woodbury de posto baixo
- map_point, information_gain, expected_information_gain
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from igsense.core.exceptions import DimensionMismatchError, RankDeficientError
from igsense.services.forward import ForwardModel, ObservationData, StateSolver, ThetaVector
from igsense.services.linops import (
    LinearOperatorHandle,
    LowRankSpectrum,
    SolveCounter,
    Space,
    eig_lowrank_generalized,
)
from igsense.services.prior import GaussianPrior

logger = logging.getLogger(__name__)


@dataclass
class InverseProblem:
    """
    Problema inverso linear-gaussiano para θ variável.

    Attributes:
        model: modelo direto afim em m
        prior: prior gaussiano no espaço de parâmetros
        data: observações e ruído
        counter: contador de solves compartilhado pelo StateSolver
    """

    model: ForwardModel
    prior: GaussianPrior
    data: ObservationData
    counter: SolveCounter = field(default_factory=SolveCounter)
    solver: StateSolver = field(init=False, repr=False)

    def __post_init__(self):
        if self.model.param_dim != self.prior.dim:
            raise DimensionMismatchError(
                "Dimensão do parâmetro difere entre modelo e prior",
                model=self.model.param_dim,
                prior=self.prior.dim,
            )
        if self.model.n_obs != self.data.n_obs:
            raise DimensionMismatchError(
                "Número de observações difere entre modelo e dados",
                model=self.model.n_obs,
                data=self.data.n_obs,
            )
        self.solver = StateSolver(self.model, self.counter)

    def clone(self) -> "InverseProblem":
        """Cópia com contador e cache de fatorações próprios (para workers)."""
        return InverseProblem(self.model, self.prior, self.data)

    # Atalhos para os quatro solves

    def solve_state(self, m: np.ndarray, theta: ThetaVector) -> np.ndarray:
        return self.solver.solve_state(m, theta)

    def solve_adjoint(self, u: np.ndarray, theta: ThetaVector) -> np.ndarray:
        return self.solver.solve_adjoint(u, self.data, theta)

    def incremental_pair(self, m_hat: np.ndarray, theta: ThetaVector) -> tuple[np.ndarray, np.ndarray]:
        """(û, p̂) dirigidos por m̂ (vetor ou bloco)."""
        u_hat = self.solver.solve_incremental_state(m_hat, theta)
        p_hat = self.solver.solve_incremental_adjoint(u_hat, self.data, theta)
        return u_hat, p_hat

    def control_adjoint(self, p: np.ndarray, theta: ThetaVector) -> np.ndarray:
        """Vetor dual que realiza m ↦ c(p, m; θ), isto é Cᵀp."""
        return self.model.control_operator(theta).T @ p


# ==========================================
# Hessiana do misfit
# ==========================================

def misfit_hessian_apply(ip: InverseProblem, m_hat: np.ndarray, theta: ThetaVector) -> np.ndarray:
    """
    Representante dual de H_misfit(m̂, ·).

    Resolve o estado incremental para û, o adjunto incremental para p̂ e
    devolve Cᵀp̂. Exatamente 2 solves incrementais por coluna.
    """
    _, p_hat = ip.incremental_pair(m_hat, theta)
    return ip.control_adjoint(p_hat, theta)


class _RecordingHessian:
    """Ação de H_misfit em blocos que guarda (Û, P̂) da última aplicação."""

    def __init__(self, ip: InverseProblem, theta: ThetaVector):
        self.ip = ip
        self.theta = theta
        self.last: tuple[np.ndarray, np.ndarray] | None = None

    def __call__(self, block: np.ndarray) -> np.ndarray:
        u_hat, p_hat = self.ip.incremental_pair(block, self.theta)
        self.last = (u_hat, p_hat)
        return self.ip.control_adjoint(p_hat, self.theta)


def lowrank_spectrum(
    ip: InverseProblem,
    theta: ThetaVector,
    r: int,
    oversample: int = 10,
    seed: int = 0,
    strict: bool = False,
) -> LowRankSpectrum:
    """
    Autopares dominantes de H_misfit ψ = γ C_prior⁻¹ ψ.

    O oversample é reduzido para caber na dimensão do parâmetro. As respostas
    incrementais ao bloco da segunda passada ficam em `incremental_cache`.
    Custo: 2·(r + oversample) solves incrementais por passada.

    Com `strict`, um espectro truncado pelo piso vira erro em vez de aviso.

    Raises:
        DimensionMismatchError: se r exceder a dimensão do parâmetro
        RankDeficientError: em modo estrito, se menos de r autovalores passarem do piso
    """
    dim = ip.prior.dim
    if r > dim:
        raise DimensionMismatchError(f"Posto {r} excede a dimensão do parâmetro {dim}", rank=r, dim=dim)
    oversample = max(0, min(oversample, dim - r))
    if r == 0:
        return LowRankSpectrum.empty(dim, theta_at=theta)

    hessian = _RecordingHessian(ip, theta)
    h_op = LinearOperatorHandle(hessian, dim, Space.PARAMETER, Space.DUAL, symmetric=True)
    spec = eig_lowrank_generalized(
        h_op,
        ip.prior.precision_operator(),
        ip.prior.covariance_operator(),
        rank=r,
        oversample=oversample,
        seed=seed,
    )
    gamma_1 = spec.gammas[0] if spec.rank else 0.0
    logger.info(
        f"Espectro em θ={theta.values.tolist()}: posto {spec.rank}/{r}, "
        f"γ_1={gamma_1:.6g}, γ_r/γ_1={spec.truncation_ratio:.3e}"
    )
    if strict and spec.rank_deficient:
        raise RankDeficientError(
            f"Só {spec.rank} de {r} autovalores acima do piso em θ={theta.values.tolist()}",
            rank=spec.rank,
            requested_rank=r,
        )
    return replace(spec, theta_at=theta, incremental_cache=hessian.last)


# ==========================================
# Posterior
# ==========================================

def apply_inverse_hessian(spec: LowRankSpectrum, prior: GaussianPrior, z: np.ndarray) -> np.ndarray:
    """
    (H_misfit + C_prior⁻¹)⁻¹ z ≈ C_prior z − Σ [γ_i/(1+γ_i)] ψ_i (ψ_iᵀ z).

    Coincide com a ação da covariância posterior em vetores duais.
    """
    out = prior.apply_cov(z)
    if spec.rank == 0:
        return out
    weights = spec.gammas / (1.0 + spec.gammas)
    coeffs = spec.psis.T @ z
    if coeffs.ndim == 2:
        return out - spec.psis @ (weights[:, None] * coeffs)
    return out - spec.psis @ (weights * coeffs)


def data_rhs(ip: InverseProblem, theta: ThetaVector) -> np.ndarray:
    """
    Vetor dual 𝓖*Γ⁻¹(u_obs − f) + C_prior⁻¹ m_prior.

    f = Q·u(0, θ). Custa um solve de estado e um adjunto.
    """
    u0 = ip.solve_state(np.zeros(ip.model.param_dim), theta)
    p0 = ip.solve_adjoint(u0, theta)
    return -ip.control_adjoint(p0, theta) + ip.prior.apply_precision(ip.prior.mean)


def map_point(ip: InverseProblem, spec: LowRankSpectrum, theta: ThetaVector) -> np.ndarray:
    """m_post = (H_misfit + C_prior⁻¹)⁻¹ [𝓖*Γ⁻¹(u_obs − f) + C_prior⁻¹ m_prior]."""
    return apply_inverse_hessian(spec, ip.prior, data_rhs(ip, theta))


def map_objective_gradient(ip: InverseProblem, m: np.ndarray, theta: ThetaVector) -> np.ndarray:
    """Gradiente dual de ½‖𝓕m − u_obs‖²_{Γ⁻¹} + ½‖m − m_prior‖²_{C_prior⁻¹}."""
    u = ip.solve_state(m, theta)
    p = ip.solve_adjoint(u, theta)
    return ip.control_adjoint(p, theta) + ip.prior.grad(m)


def trace_term(spec: LowRankSpectrum) -> float:
    """Imagem de posto baixo de tr(H_misfit C_post): Σ γ_i/(1+γ_i)."""
    return float(np.sum(spec.gammas / (1.0 + spec.gammas)))


def information_gain(ip: InverseProblem, spec: LowRankSpectrum, m_post: np.ndarray) -> float:
    """Φ_IG = ½[Σ log(1+γ_i) − Σ γ_i/(1+γ_i) + ‖m_post − m_prior‖²_{C_prior⁻¹}]."""
    dm = m_post - ip.prior.mean
    spectral = float(np.sum(np.log1p(spec.gammas))) - trace_term(spec)
    return 0.5 * (spectral + ip.prior.cm_inner(dm, dm))


def expected_information_gain(spec: LowRankSpectrum) -> float:
    """Φ̄_IG = ½ Σ log(1+γ_i)."""
    return 0.5 * float(np.sum(np.log1p(spec.gammas)))


def information_gain_at(
    ip: InverseProblem,
    theta: ThetaVector,
    r: int,
    oversample: int = 10,
    seed: int = 0,
    strict: bool = False,
) -> tuple[float, float, LowRankSpectrum, np.ndarray]:
    """Pipeline completo em θ: espectro, MAP, Φ_IG e Φ̄_IG."""
    spec = lowrank_spectrum(ip, theta, r, oversample=oversample, seed=seed, strict=strict)
    m_post = map_point(ip, spec, theta)
    return information_gain(ip, spec, m_post), expected_information_gain(spec), spec, m_post
