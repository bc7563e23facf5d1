"""
Oráculos de força bruta para verificação.

- fd_gradient / fd_errors: diferenças finitas centrais e curva de erro em h
- DenseProblem / dense_kld: montagem densa de 𝓖, posterior e divergência exatos
- pick_freeze_total_sobol: estimador de Jansen dos índices de Sobol totais
"""

import logging
import warnings
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from igsense.core.exceptions import BoundaryClampWarning, DegenerateVarianceError, DimensionGuardError
from igsense.services.bayes import InverseProblem
from igsense.services.forward import StateSolver, ThetaVector
from igsense.services.gsa import Uniform

logger = logging.getLogger(__name__)

MAX_DENSE_DIM = 2000


# ==========================================
# Diferenças finitas
# ==========================================

def fd_gradient(f: Callable, theta, h: float = 1e-4, box: np.ndarray | None = None) -> np.ndarray:
    """
    Gradiente por diferenças centrais (f(θ+he_j) − f(θ−he_j))/(2h).

    `theta` pode ser um array (f recebe arrays) ou um ThetaVector (f recebe
    ThetaVector e a caixa dele é usada). Se θ ± h sair da caixa, usa a
    diferença unilateral e emite BoundaryClampWarning.
    """
    if h <= 0.0:
        raise ValueError(f"h deve ser positivo, recebeu {h}")
    if isinstance(theta, ThetaVector):
        values = theta.values
        box = theta.box if box is None else box

        def call(x):
            return f(theta.with_values(x))
    else:
        values = np.atleast_1d(np.asarray(theta, dtype=float))
        call = f

    grad = np.zeros(values.shape[0])
    for j in range(values.shape[0]):
        plus, minus = values.copy(), values.copy()
        plus[j] += h
        minus[j] -= h
        lo_ok = box is None or minus[j] >= box[j][0]
        hi_ok = box is None or plus[j] <= box[j][1]
        if lo_ok and hi_ok:
            grad[j] = (call(plus) - call(minus)) / (2 * h)
            continue
        message = f"Diferença unilateral em θ_{j}: θ ± {h:g} sai da caixa"
        logger.warning(message)
        warnings.warn(message, BoundaryClampWarning, stacklevel=2)
        if lo_ok:
            grad[j] = (call(values) - call(minus)) / h
        else:
            grad[j] = (call(plus) - call(values)) / h
    return grad


def fd_errors(f: Callable, grad: np.ndarray, theta, hs=(1e-2, 1e-3, 1e-4)) -> np.ndarray:
    """Erros relativos |grad − FD_h| / max(1, |FD_h|), shape (len(hs), n_θ)."""
    rows = []
    for h in hs:
        fd = fd_gradient(f, theta, h)
        rows.append(np.abs(grad - fd) / np.maximum(1.0, np.abs(fd)))
    return np.vstack(rows)


# ==========================================
# Problema denso
# ==========================================

@dataclass(frozen=True)
class DenseProblem:
    """
    Problema inverso montado densamente em θ fixo.

    Attributes:
        G: mapa linear observação × parâmetro (coluna a coluna por solves de estado)
        f: parte afim Q·u(0, θ)
        prior_precision: C_prior⁻¹ denso
        prior_mean: m_prior
        noise_var: diagonal de Γ_noise
    """

    G: np.ndarray
    f: np.ndarray
    prior_precision: np.ndarray
    prior_mean: np.ndarray
    noise_var: np.ndarray

    @classmethod
    def assemble(cls, ip: InverseProblem, theta: ThetaVector) -> "DenseProblem":
        """
        Monta G aplicando 𝓖 aos vetores da base canônica.

        Usa um StateSolver privado, fora da contabilidade de solves do problema.

        Raises:
            DimensionGuardError: dimensão do parâmetro acima de 2000
        """
        dim = ip.model.param_dim
        if dim > MAX_DENSE_DIM:
            raise DimensionGuardError(
                f"Oráculo denso recusado: dimensão {dim} > {MAX_DENSE_DIM}", dim=dim, limit=MAX_DENSE_DIM
            )
        solver = StateSolver(ip.model)
        u0 = solver.solve_state(np.zeros(dim), theta)
        f = ip.model.observe(u0)
        G = np.empty((ip.model.n_obs, dim))
        basis = np.zeros(dim)
        for k in range(dim):
            basis[k] = 1.0
            G[:, k] = ip.model.observe(solver.solve_state(basis, theta)) - f
            basis[k] = 0.0
        logger.debug(f"Problema denso montado: G {G.shape}")
        return cls(G, f, ip.prior.dense_precision(), ip.prior.mean.copy(), ip.data.noise_var.copy())

    @property
    def hessian(self) -> np.ndarray:
        """H_misfit = Gᵀ Γ⁻¹ G."""
        H = self.G.T @ (self.G / self.noise_var[:, None])
        return 0.5 * (H + H.T)


@dataclass(frozen=True)
class DenseKld:
    """Resultados exatos do oráculo denso."""

    phi_ig: float
    phi_ig_bar: float
    m_post: np.ndarray
    gammas: np.ndarray
    psis: np.ndarray
    c_post: np.ndarray
    trace_term: float


def dense_kld(dp: DenseProblem, u_obs: np.ndarray) -> DenseKld:
    """
    Posterior, espectro generalizado e divergência KL exatos (sem truncamento).

    Φ_IG = ½[log det(I + R⁻¹H) − tr(H C_post) + ‖m_post − m_prior‖²_R],
    Φ̄_IG = ½ log det(I + R⁻¹H), com R = C_prior⁻¹ e o log det tirado do espectro denso completo.
    """
    dim = dp.G.shape[1]
    if dim > MAX_DENSE_DIM:
        raise DimensionGuardError(f"Oráculo denso recusado: dimensão {dim}", dim=dim, limit=MAX_DENSE_DIM)
    R = 0.5 * (dp.prior_precision + dp.prior_precision.T)
    H = dp.hessian
    H_post = H + R
    c_post = sla.inv(H_post)
    c_post = 0.5 * (c_post + c_post.T)
    rhs = dp.G.T @ ((np.asarray(u_obs, dtype=float) - dp.f) / dp.noise_var) + R @ dp.prior_mean
    m_post = sla.solve(H_post, rhs, assume_a="pos")

    gammas, psis = sla.eigh(H, R)
    order = np.argsort(gammas)[::-1]
    gammas, psis = gammas[order], psis[:, order]
    idx = np.argmax(np.abs(psis), axis=0)
    signs = np.sign(psis[idx, np.arange(psis.shape[1])])
    signs[signs == 0] = 1.0
    psis = psis * signs

    # log det(I + R⁻¹H) pelo espectro completo
    log_term = float(np.sum(np.log1p(gammas)))
    trace = float(np.trace(H @ c_post))
    dm = m_post - dp.prior_mean
    phi = 0.5 * (log_term - trace + float(dm @ R @ dm))
    return DenseKld(phi, 0.5 * log_term, m_post, gammas, psis, c_post, trace)


# ==========================================
# Pick-freeze
# ==========================================

@dataclass(frozen=True)
class PickFreezeResult:
    """Índices de Sobol por pick-freeze (Jansen) com erros padrão por lotes."""

    total: np.ndarray
    first_order: np.ndarray
    standard_errors: np.ndarray
    variance: float


def _jansen(y_a: np.ndarray, y_b: np.ndarray, y_ab: np.ndarray):
    variance = float(np.var(np.concatenate([y_a, y_b]), ddof=1))
    if variance <= 1e-14:
        return variance, None, None
    total = 0.5 * np.mean((y_a[:, None] - y_ab) ** 2, axis=0) / variance
    first = np.mean(y_b[:, None] * (y_ab - y_a[:, None]), axis=0) / variance
    return variance, total, first


def pick_freeze_total_sobol(
    f: Callable[[np.ndarray], np.ndarray],
    dists,
    N: int,
    seed: int,
    batches: int = 10,
) -> PickFreezeResult:
    """
    Estimador de Jansen dos índices totais a partir das matrizes A, B e A_B^(i).

    Args:
        f: função vetorizada, (N, n_θ) → (N,)
        dists: distribuições Uniform por coordenada
        N: número de linhas de A e B (≥ 10³)

    Raises:
        DegenerateVarianceError: se Var(f) ≤ 1e-14
    """
    if N < 1000:
        raise ValueError(f"Pick-freeze exige N ≥ 10³, recebeu {N}")
    dists = list(dists)
    n = len(dists)
    rng = np.random.Generator(np.random.Philox(key=seed))
    q_a = rng.random((N, n))
    q_b = rng.random((N, n))
    A = np.column_stack([d.inverse_cdf(q_a[:, i]) for i, d in enumerate(dists)])
    B = np.column_stack([d.inverse_cdf(q_b[:, i]) for i, d in enumerate(dists)])

    y_a = np.asarray(f(A), dtype=float)
    y_b = np.asarray(f(B), dtype=float)
    y_ab = np.empty((N, n))
    for i in range(n):
        A_Bi = A.copy()
        A_Bi[:, i] = B[:, i]
        y_ab[:, i] = f(A_Bi)

    variance, total, first = _jansen(y_a, y_b, y_ab)
    if total is None:
        raise DegenerateVarianceError(f"Variância ≈ {variance:.3e}: índices de Sobol indefinidos", variance=variance)

    batch_totals = []
    for idx in np.array_split(np.arange(N), batches):
        _, t, _ = _jansen(y_a[idx], y_b[idx], y_ab[idx])
        if t is not None:
            batch_totals.append(t)
    se = np.std(np.vstack(batch_totals), axis=0, ddof=1) / np.sqrt(len(batch_totals))
    logger.info(f"Pick-freeze N={N}: S_tot={total.tolist()} ± {se.tolist()}")
    return PickFreezeResult(total, first, se, variance)


def uniform_box(lo, hi) -> list[Uniform]:
    """Lista de Uniform(lo_i, hi_i)."""
    return [Uniform(float(a), float(b)) for a, b in zip(lo, hi)]
