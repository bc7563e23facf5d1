"""
Motor de derivadas do ganho de informação em relação a θ.

Contém:
- EigenSensitivityWorkspace: pares incrementais (û_i, p̂_i) de cada modo ψ_i e multiplicadores
- eigenvalue_derivative / spectral_gradient: dγ_i/dθ_j e gradiente da parte espectral de Φ_IG
- assemble_Bj / bj_functional / map_sensitivity: sensibilidade pós-ótima do ponto MAP
- info_gain_gradient: gradientes de Φ_IG e Φ̄_IG com contabilidade de solves por fase
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from igsense.core.exceptions import IndexOutOfRangeError
from igsense.services.bayes import (
    InverseProblem,
    apply_inverse_hessian,
    expected_information_gain,
    information_gain,
    lowrank_spectrum,
    map_point,
)
from igsense.services.forward import ForwardModel, ThetaVector
from igsense.services.linops import (
    CoefficientVector,
    LinearOperatorHandle,
    LowRankSpectrum,
    SolveCounter,
    Space,
    cg_solve,
    jacobi_preconditioner,
)
from igsense.services.prior import GaussianPrior

logger = logging.getLogger(__name__)


# ==========================================
# Workspace de autovalores
# ==========================================

@dataclass(frozen=True)
class EigenSensitivityWorkspace:
    """
    Dados por modo retido i: ψ_i e o par incremental (û_i, p̂_i) dirigido por ψ_i.

    Os multiplicadores são múltiplos escalares exatos dos incrementais:
    (û_i*, p̂_i*) = [γ_i/(2(1+γ_i)²)]·(û_i, p̂_i).
    """

    model: ForwardModel
    theta: ThetaVector
    gammas: np.ndarray
    psis: np.ndarray
    u_hats: np.ndarray
    p_hats: np.ndarray
    from_cache: bool = False

    @property
    def rank(self) -> int:
        return int(self.gammas.shape[0])

    @property
    def weights(self) -> np.ndarray:
        """γ_i / (2(1+γ_i)²)."""
        return self.gammas / (2.0 * (1.0 + self.gammas) ** 2)

    @property
    def eigenvalue_multipliers(self) -> np.ndarray:
        """γ_i* = [γ_i/(2(1+γ_i)²)]·γ_i."""
        return self.weights * self.gammas

    def multipliers(self) -> tuple[np.ndarray, np.ndarray]:
        w = self.weights
        return self.u_hats * w, self.p_hats * w


def build_workspace(ip: InverseProblem, spec: LowRankSpectrum, theta: ThetaVector) -> EigenSensitivityWorkspace:
    """
    Monta o workspace a partir do espectro.

    Se o espectro traz as respostas incrementais do bloco de Rayleigh–Ritz,
    (û_i, p̂_i) saem por combinação linear sem novos solves; senão são
    resolvidos em bloco (2 solves por modo).
    """
    cache = spec.incremental_cache
    same_theta = spec.theta_at is not None and spec.theta_at.key == theta.key
    if cache is not None and spec.ritz_coefficients is not None and same_theta:
        u_hats = cache[0] @ spec.ritz_coefficients
        p_hats = cache[1] @ spec.ritz_coefficients
        from_cache = True
    elif spec.rank == 0:
        u_hats = np.zeros((ip.model.state_dim, 0))
        p_hats = np.zeros((ip.model.state_dim, 0))
        from_cache = False
    else:
        u_hats, p_hats = ip.incremental_pair(spec.psis, theta)
        from_cache = False
    logger.debug(f"Workspace com {spec.rank} modos (cache={'sim' if from_cache else 'não'})")
    return EigenSensitivityWorkspace(ip.model, theta, spec.gammas, spec.psis, u_hats, p_hats, from_cache)


def _partials(model: ForwardModel, j: int, theta: ThetaVector):
    model.check_index(j)
    return (
        model.state_operator_dtheta(j, theta),
        model.control_operator_dtheta(j, theta),
        model.source_vector_dtheta(j, theta),
    )


def eigenvalue_derivative(ws: EigenSensitivityWorkspace, i: int, j: int, theta: ThetaVector) -> float:
    """
    dγ_i/dθ_j = 2·[c_θj(p̂_i, ψ_i) + a_θj(p̂_i, û_i)].

    Raises:
        IndexOutOfRangeError: i fora dos modos retidos ou j fora de θ
    """
    if not 0 <= i < ws.rank:
        raise IndexOutOfRangeError(f"Modo {i} fora de [0, {ws.rank})", index=i, rank=ws.rank)
    model = ws.model
    p_hat, u_hat, psi = ws.p_hats[:, i], ws.u_hats[:, i], ws.psis[:, i]
    return 2.0 * (
        model.c_form_dtheta(j, p_hat, psi, theta) + model.a_form_dtheta(j, p_hat, u_hat, theta)
    )


def eigenvalue_derivative_matrix(ws: EigenSensitivityWorkspace, theta: ThetaVector) -> np.ndarray:
    """Todas as derivadas dγ_i/dθ_j, shape (r, n_θ)."""
    model = ws.model
    out = np.zeros((ws.rank, model.n_theta))
    for j in range(model.n_theta):
        a_j, c_j, _ = _partials(model, j, theta)
        column = np.zeros(ws.rank)
        if c_j is not None:
            column += np.einsum("ki,ki->i", ws.p_hats, c_j @ ws.psis)
        if a_j is not None:
            column += np.einsum("ki,ki->i", ws.p_hats, a_j @ ws.u_hats)
        out[:, j] = 2.0 * column
    return out


def spectral_gradient(ws: EigenSensitivityWorkspace, theta: ThetaVector) -> np.ndarray:
    """
    ∂Φ^γ_IG/∂θ_j = Σ_i [γ_i/(2(1+γ_i)²)]·dγ_i/dθ_j.

    Avaliado com os multiplicadores p̂_i*; nenhum solve adicional.
    """
    model = ws.model
    _, p_star = ws.multipliers()
    grad = np.zeros(model.n_theta)
    for j in range(model.n_theta):
        a_j, c_j, _ = _partials(model, j, theta)
        total = 0.0
        if c_j is not None:
            total += float(np.sum(p_star * (c_j @ ws.psis)))
        if a_j is not None:
            total += float(np.sum(p_star * (a_j @ ws.u_hats)))
        grad[j] = 2.0 * total
    return grad


def verify_multiplier(ip: InverseProblem, ws: EigenSensitivityWorkspace, i: int, rel_tol: float = 1e-13) -> float:
    """
    Erro relativo entre û_i* e uma solução independente por CG de A û* = −C(w_i ψ_i).

    A simétrico definido (positivo ou negativo) vai direto ao CG com Jacobi,
    trocando o sinal se preciso; caso contrário usa as equações normais.
    """
    theta = ws.theta
    A = sp.csr_matrix(ip.model.state_operator(theta))
    n = A.shape[0]
    rhs = -(ip.model.control_operator(theta) @ (ws.weights[i] * ws.psis[:, i]))
    diagonal = A.diagonal()
    symmetric = abs(A - A.T).max() == 0.0
    if symmetric and (np.all(diagonal > 0.0) or np.all(diagonal < 0.0)):
        sign = 1.0 if diagonal[0] > 0.0 else -1.0
        op = LinearOperatorHandle(lambda x: sign * (A @ x), n, Space.STATE, Space.STATE, symmetric=True)
        precond = jacobi_preconditioner(sign * diagonal)
        rhs = sign * rhs
    else:
        op = LinearOperatorHandle(lambda x: A.T @ (A @ x), n, Space.STATE, Space.STATE, symmetric=True)
        precond = None
        rhs = A.T @ rhs
    solved = cg_solve(
        op, CoefficientVector(rhs, Space.STATE), rel_tol=rel_tol, max_iter=20 * n, preconditioner=precond
    ).values
    expected = ws.multipliers()[0][:, i]
    scale = max(float(np.linalg.norm(expected)), np.finfo(float).tiny)
    return float(np.linalg.norm(solved - expected) / scale)


# ==========================================
# Sensibilidade do ponto MAP
# ==========================================

def _state_residual_derivative(model: ForwardModel, j: int, theta: ThetaVector, u: np.ndarray, m_post: np.ndarray):
    """w_j = A_j u + C_j m_post + d_j (None quando θ_j não entra em nenhuma forma)."""
    a_j, c_j, d_j = _partials(model, j, theta)
    if a_j is None and c_j is None and d_j is None:
        return None, None
    w_j = np.zeros(model.state_dim)
    if a_j is not None:
        w_j += a_j @ u
    if c_j is not None:
        w_j += c_j @ m_post
    if d_j is not None:
        w_j += d_j
    return w_j, (a_j, c_j)


def bj_functional(
    ip: InverseProblem,
    theta: ThetaVector,
    j: int,
    u: np.ndarray,
    p: np.ndarray,
    u_hat: np.ndarray,
    p_hat: np.ndarray,
    m_hat: np.ndarray,
    m_post: np.ndarray,
) -> float:
    """
    B_j(m̂) = c_θj(p, m̂) + a_θj(p, û) + c_θj(p̂, m_post) + a_θj(p̂, u) + d_θj(p̂).

    (u, p) são estado e adjunto em m_post; (û, p̂) o par incremental dirigido por m̂.
    Não faz solves.
    """
    model = ip.model
    return (
        model.c_form_dtheta(j, p, m_hat, theta)
        + model.a_form_dtheta(j, p, u_hat, theta)
        + model.c_form_dtheta(j, p_hat, m_post, theta)
        + model.a_form_dtheta(j, p_hat, u, theta)
        + model.d_form_dtheta(j, p_hat, theta)
    )


def assemble_Bj(
    ip: InverseProblem,
    theta: ThetaVector,
    j: int,
    u: np.ndarray,
    p: np.ndarray,
    m_post: np.ndarray,
) -> np.ndarray:
    """
    Representante dual b_j do funcional m̂ ↦ B_j(m̂).

    b_j = C_jᵀp + Cᵀy, com A v = w_j e Aᵀy = QᵀΓ⁻¹Q v − A_jᵀp (2 solves).
    Um parâmetro espectador devolve zero sem solves.
    """
    model = ip.model
    w_j, ops = _state_residual_derivative(model, j, theta, u, m_post)
    if w_j is None:
        return np.zeros(model.param_dim)
    a_j, c_j = ops
    v = ip.solver.solve_linearized(w_j, theta)
    rhs = model.observe_adjoint(ip.data.noise_precision * model.observe(v))
    if a_j is not None:
        rhs = rhs - a_j.T @ p
    y = ip.solver.solve_linearized(rhs, theta, transpose=True)
    b_j = ip.control_adjoint(y, theta)
    if c_j is not None:
        b_j = b_j + c_j.T @ p
    return b_j


def map_sensitivity(spec: LowRankSpectrum, prior: GaussianPrior, b_j: np.ndarray) -> np.ndarray:
    """∂m_post/∂θ_j = −(H_misfit + C_prior⁻¹)⁻¹ b_j."""
    return -apply_inverse_hessian(spec, prior, b_j)


# ==========================================
# Gradiente do ganho de informação
# ==========================================

@dataclass(frozen=True)
class SensitivityReport:
    """
    Resultado de um passo local de sensibilidade em θ.

    Attributes:
        theta: ponto avaliado
        phi_ig, phi_ig_bar: Φ_IG e Φ̄_IG
        grad_phi_ig, grad_phi_ig_bar: gradientes em θ (comprimento n_θ)
        grad_spectral: parte espectral de grad_phi_ig
        solve_counts: solves da execução inteira
        phase_counts: solves por fase ("spectrum", "map", "sensitivity")
        eigenvalue_derivatives: dγ_i/dθ_j, shape (r, n_θ)
        near_degenerate: modos com derivada pouco confiável
    """

    theta: ThetaVector
    phi_ig: float
    phi_ig_bar: float
    grad_phi_ig: np.ndarray
    grad_phi_ig_bar: np.ndarray
    grad_spectral: np.ndarray
    solve_counts: SolveCounter
    phase_counts: dict[str, SolveCounter] = field(default_factory=dict)
    spectrum: LowRankSpectrum | None = None
    m_post: np.ndarray | None = None
    eigenvalue_derivatives: np.ndarray | None = None
    near_degenerate: tuple[int, ...] = ()

    @property
    def algorithm_counts(self) -> SolveCounter:
        """Solves das fases MAP + sensibilidade (após o espectro)."""
        total = SolveCounter()
        for phase in ("map", "sensitivity"):
            counts = self.phase_counts.get(phase)
            if counts is not None:
                total = _add(total, counts)
        return total


def _add(a: SolveCounter, b: SolveCounter) -> SolveCounter:
    return SolveCounter(
        a.state_solves + b.state_solves,
        a.adjoint_solves + b.adjoint_solves,
        a.incremental_state_solves + b.incremental_state_solves,
        a.incremental_adjoint_solves + b.incremental_adjoint_solves,
    )


def info_gain_gradient(
    ip: InverseProblem,
    theta: ThetaVector,
    r: int,
    seed: int = 0,
    oversample: int = 10,
    strict: bool = False,
) -> SensitivityReport:
    """
    Gradientes de Φ_IG e Φ̄_IG em θ.

    Fases:
        spectrum: autopares de posto r (dupla passada)
        map: ponto MAP (1 solve de estado + 1 adjunto)
        sensitivity: workspace (reaproveitado do espectro), estado/adjunto em
            m_post e um único par incremental dirigido por
            z = H⁻¹C_prior⁻¹(m_post − m_prior), compartilhado por todo j

    grad Φ_IG[j] = Σ_i w_i dγ_i/dθ_j − B_j(z), grad Φ̄_IG[j] = Σ_i dγ_i/dθ_j / (2(1+γ_i)).
    """
    counter = ip.counter
    start = counter.snapshot()

    spec = lowrank_spectrum(ip, theta, r, oversample=oversample, seed=seed, strict=strict)
    after_spectrum = counter.snapshot()

    m_post = map_point(ip, spec, theta)
    phi = information_gain(ip, spec, m_post)
    phi_bar = expected_information_gain(spec)
    after_map = counter.snapshot()

    ws = build_workspace(ip, spec, theta)
    dgamma = eigenvalue_derivative_matrix(ws, theta)
    grad_spectral = spectral_gradient(ws, theta)
    grad_bar = (dgamma / (2.0 * (1.0 + spec.gammas))[:, None]).sum(axis=0) if spec.rank else np.zeros(len(theta))

    u = ip.solve_state(m_post, theta)
    p = ip.solve_adjoint(u, theta)
    dm = m_post - ip.prior.mean
    z = apply_inverse_hessian(spec, ip.prior, ip.prior.apply_precision(dm))
    u_hat, p_hat = ip.incremental_pair(z, theta)
    map_term = np.array([
        bj_functional(ip, theta, j, u, p, u_hat, p_hat, z, m_post) for j in range(ip.model.n_theta)
    ])
    grad = grad_spectral - map_term
    end = counter.snapshot()

    phase_counts = {
        "spectrum": after_spectrum - start,
        "map": after_map - after_spectrum,
        "sensitivity": end - after_map,
    }
    if spec.near_degenerate:
        logger.warning(f"Derivadas dos modos {list(spec.near_degenerate)} pouco confiáveis (autovalores quase repetidos)")
    logger.info(
        f"θ={theta.values.tolist()}: Φ_IG={phi:.10g}, Φ̄_IG={phi_bar:.10g}, "
        f"∇Φ_IG={grad.tolist()}, ∇Φ̄_IG={grad_bar.tolist()}"
    )
    return SensitivityReport(
        theta=theta,
        phi_ig=phi,
        phi_ig_bar=phi_bar,
        grad_phi_ig=grad,
        grad_phi_ig_bar=grad_bar,
        grad_spectral=grad_spectral,
        solve_counts=end - start,
        phase_counts=phase_counts,
        spectrum=spec,
        m_post=m_post,
        eigenvalue_derivatives=dgamma,
        near_degenerate=spec.near_degenerate,
    )
