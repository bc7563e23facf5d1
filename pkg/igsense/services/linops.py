"""
Álgebra linear com produto interno explícito.

Contém:
- CoefficientVector / InnerProduct: vetores marcados pelo espaço a que pertencem
- LinearOperatorHandle: contrato de operador linear (ação em vetor e em bloco)
- SolveCounter: contabilidade de solves de EDP (thread-safe)
- cg_solve: gradiente conjugado com pré-condicionador de Jacobi opcional
- eig_lowrank_generalized: autossolver randomizado de dupla passada para A ψ = γ B ψ
"""

import logging
import threading
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from enum import StrEnum
from typing import TYPE_CHECKING

import numpy as np
import scipy.linalg as sla

from igsense.core.exceptions import DimensionMismatchError, NonConvergenceError

if TYPE_CHECKING:
    from igsense.services.forward import ThetaVector

logger = logging.getLogger(__name__)

EIGENVALUE_FLOOR = 1e-14
"""Autovalores abaixo deste piso absoluto contam como posto zero."""

DEGENERACY_GAP = 1e-8
"""Gap relativo abaixo do qual dois autovalores consecutivos são tratados como repetidos."""

_QR_RANK_RTOL = 1e-12


class Space(StrEnum):
    """Espaço ao qual um vetor de coeficientes pertence."""

    STATE = "state"
    ADJOINT = "adjoint"
    PARAMETER = "parameter"
    OBSERVATION = "observation"
    DUAL = "dual"


@dataclass(frozen=True)
class CoefficientVector:
    """Representante de dimensão finita de uma função num dos espaços."""

    values: np.ndarray
    space: Space

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise DimensionMismatchError(
                f"CoefficientVector deve ser 1D, recebeu shape {values.shape}",
                shape=list(values.shape),
            )
        if not np.all(np.isfinite(values)):
            raise ValueError(f"CoefficientVector ({self.space}) contém NaN/Inf")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]


class InnerProduct:
    """
    Produto interno ⟨x, y⟩_W = xᵀ W y com W simétrico positivo definido.

    `weight` pode ser matriz densa, esparsa ou None (euclidiano).
    """

    def __init__(self, weight=None):
        self._weight = weight

    @property
    def weight(self):
        return self._weight

    def __call__(self, x: np.ndarray, y: np.ndarray) -> float:
        if self._weight is None:
            return float(np.dot(x, y))
        return float(np.dot(x, self._weight @ y))

    def norm(self, x: np.ndarray) -> float:
        return float(np.sqrt(max(self(x, x), 0.0)))


@dataclass
class SolveCounter:
    """
    Contadores de solves de EDP (Tabela de custos).

    As atualizações são atômicas; os valores só crescem durante uma execução.
    """

    state_solves: int = 0
    adjoint_solves: int = 0
    incremental_state_solves: int = 0
    incremental_adjoint_solves: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    KINDS = ("state", "adjoint", "incremental_state", "incremental_adjoint")

    def increment(self, kind: str, count: int = 1) -> None:
        """Incrementa o contador `kind` (um de SolveCounter.KINDS)."""
        if kind not in self.KINDS:
            raise ValueError(f"Tipo de solve desconhecido: {kind}")
        attr = f"{kind}_solves"
        with self._lock:
            setattr(self, attr, getattr(self, attr) + count)
        logger.debug(f"solve {kind} (+{count})")

    def snapshot(self) -> "SolveCounter":
        with self._lock:
            return SolveCounter(
                self.state_solves,
                self.adjoint_solves,
                self.incremental_state_solves,
                self.incremental_adjoint_solves,
            )

    def __sub__(self, other: "SolveCounter") -> "SolveCounter":
        return SolveCounter(
            self.state_solves - other.state_solves,
            self.adjoint_solves - other.adjoint_solves,
            self.incremental_state_solves - other.incremental_state_solves,
            self.incremental_adjoint_solves - other.incremental_adjoint_solves,
        )

    @property
    def incremental(self) -> int:
        return self.incremental_state_solves + self.incremental_adjoint_solves

    @property
    def forward_adjoint(self) -> int:
        return self.state_solves + self.adjoint_solves

    def as_dict(self) -> dict[str, int]:
        return {f"{kind}_solves": getattr(self, f"{kind}_solves") for kind in self.KINDS}


class LinearOperatorHandle:
    """
    Operador linear imutável entre dois espaços de mesma dimensão `dim`.

    `apply_fn` recebe um array (dim,) ou um bloco (dim, k) e devolve o mesmo shape.
    Se `block=False`, blocos são aplicados coluna a coluna.
    """

    def __init__(
        self,
        apply_fn: Callable[[np.ndarray], np.ndarray],
        dim: int,
        domain: Space = Space.PARAMETER,
        range_: Space = Space.PARAMETER,
        symmetric: bool = False,
        inner: InnerProduct | None = None,
        block: bool = True,
    ):
        self._apply_fn = apply_fn
        self.dim = int(dim)
        self.domain = domain
        self.range = range_
        self.symmetric = symmetric
        self.inner = inner or InnerProduct()
        self._block = block

    @classmethod
    def from_matrix(cls, matrix, domain=Space.PARAMETER, range_=Space.PARAMETER, symmetric=False, inner=None):
        """Envolve uma matriz densa ou esparsa."""
        if matrix.shape[0] != matrix.shape[1]:
            raise DimensionMismatchError(
                f"Matriz não quadrada: {matrix.shape}", shape=list(matrix.shape)
            )
        return cls(lambda x: matrix @ x, matrix.shape[0], domain, range_, symmetric, inner)

    @classmethod
    def identity(cls, dim: int, space: Space = Space.PARAMETER):
        return cls(lambda x: np.array(x, dtype=float, copy=True), dim, space, space, symmetric=True)

    def _check(self, x: np.ndarray) -> None:
        if x.shape[0] != self.dim:
            raise DimensionMismatchError(
                f"Operador de dimensão {self.dim} aplicado a vetor de dimensão {x.shape[0]}",
                expected=self.dim,
                received=int(x.shape[0]),
            )

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        self._check(x)
        return np.asarray(self._apply_fn(x), dtype=float)

    def matmat(self, block: np.ndarray) -> np.ndarray:
        block = np.asarray(block, dtype=float)
        if block.ndim == 1:
            return self.matvec(block)
        self._check(block)
        if self._block:
            return np.asarray(self._apply_fn(block), dtype=float)
        out = np.empty_like(block)
        for k in range(block.shape[1]):
            out[:, k] = self._apply_fn(block[:, k])
        return out

    def apply(self, x: CoefficientVector) -> CoefficientVector:
        if x.space != self.domain:
            raise DimensionMismatchError(
                f"Vetor no espaço {x.space}, operador espera {self.domain}",
                expected=str(self.domain),
                received=str(x.space),
            )
        return CoefficientVector(self.matvec(x.values), self.range)


def jacobi_preconditioner(diagonal: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    """Pré-condicionador de Jacobi: r ↦ r / diag."""
    inv_diag = 1.0 / np.asarray(diagonal, dtype=float)
    return lambda r: inv_diag * r


def cg_solve(
    op: LinearOperatorHandle,
    rhs: CoefficientVector,
    rel_tol: float = 1e-10,
    max_iter: int = 1000,
    preconditioner: Callable[[np.ndarray], np.ndarray] | None = None,
    x0: np.ndarray | None = None,
) -> CoefficientVector:
    """
    Gradiente conjugado (pré-condicionado) para op x = rhs.

    As recorrências de α e β usam o produto euclidiano, então op (e o
    pré-condicionador) devem ser simétricos na forma matricial. Só o critério
    de parada usa a norma do produto interno declarado no operador:
    ‖op x − rhs‖_W ≤ rel_tol·‖rhs‖_W.

    Raises:
        NonConvergenceError: se max_iter for atingido
        DimensionMismatchError: se rhs não tiver a dimensão do operador
    """
    if not 0.0 < rel_tol < 1.0:
        raise ValueError(f"rel_tol deve estar em (0, 1), recebeu {rel_tol}")
    b = rhs.values
    if b.shape[0] != op.dim:
        raise DimensionMismatchError(
            f"rhs de dimensão {b.shape[0]} para operador de dimensão {op.dim}",
            expected=op.dim,
            received=int(b.shape[0]),
        )
    norm = op.inner.norm
    b_norm = norm(b)
    if b_norm == 0.0:
        return CoefficientVector(np.zeros_like(b), op.domain)
    target = rel_tol * b_norm

    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - op.matvec(x)
    z = preconditioner(r) if preconditioner else r
    p = z.copy()
    rz = float(np.dot(r, z))

    residual = norm(r)
    for iteration in range(1, max_iter + 1):
        if residual <= target:
            logger.debug(f"CG convergiu em {iteration - 1} iterações (resíduo {residual / b_norm:.2e})")
            return CoefficientVector(x, op.domain)
        ap = op.matvec(p)
        alpha = rz / float(np.dot(p, ap))
        x += alpha * p
        r -= alpha * ap
        residual = norm(r)
        z = preconditioner(r) if preconditioner else r
        rz_new = float(np.dot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new

    if residual <= target:
        return CoefficientVector(x, op.domain)
    raise NonConvergenceError(max_iter, residual / b_norm)


@dataclass(frozen=True)
class LowRankSpectrum:
    """
    Autopares generalizados retidos {(γ_i, ψ_i)} com ⟨ψ_i, ψ_j⟩_B = δ_ij.

    Attributes:
        gammas: autovalores em ordem não crescente, todos ≥ piso
        psis: autovetores em colunas (dim × r)
        requested_rank: posto pedido
        rank_deficient: True se menos de `requested_rank` autovalores passaram o piso
        near_degenerate: índices i com γ_i ≈ γ_{i+1} (gap relativo < 1e-8)
        theta_at: θ em que o espectro foi calculado (preenchido pelo módulo bayes)
        ritz_coefficients: V tal que ψ = Q V, Q o bloco da segunda passada
        incremental_cache: respostas (Û_Q, P̂_Q) do operador ao bloco Q, quando registradas
    """

    gammas: np.ndarray
    psis: np.ndarray
    requested_rank: int
    rank_deficient: bool = False
    near_degenerate: tuple[int, ...] = ()
    theta_at: "ThetaVector | None" = None
    ritz_coefficients: np.ndarray | None = None
    incremental_cache: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def rank(self) -> int:
        return int(self.gammas.shape[0])

    @property
    def truncation_ratio(self) -> float:
        """Diagnóstico γ_r/γ_1 (0 para espectro vazio)."""
        if self.rank == 0 or self.gammas[0] == 0.0:
            return 0.0
        return float(self.gammas[-1] / self.gammas[0])

    def truncated(self, r: int) -> "LowRankSpectrum":
        """Mantém apenas os r primeiros pares."""
        r = min(r, self.rank)
        coeffs = None if self.ritz_coefficients is None else self.ritz_coefficients[:, :r]
        return replace(
            self,
            gammas=self.gammas[:r],
            psis=self.psis[:, :r],
            near_degenerate=tuple(i for i in self.near_degenerate if i < r - 1),
            ritz_coefficients=coeffs,
        )

    @classmethod
    def empty(cls, dim: int, theta_at: "ThetaVector | None" = None) -> "LowRankSpectrum":
        return cls(np.zeros(0), np.zeros((dim, 0)), 0, theta_at=theta_at)


def b_orthonormalize(block: np.ndarray, b_apply: LinearOperatorHandle) -> np.ndarray:
    """
    Base B-ortonormal do subespaço gerado por `block`.

    QR com pivoteamento descarta direções numericamente dependentes; depois
    duas passadas de Cholesky-QR no produto B garantem QᵀBQ = I.
    """
    if block.shape[1] == 0:
        return block
    z, r, _ = sla.qr(block, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0.0:
        return np.zeros((block.shape[0], 0))
    z = z[:, diag > _QR_RANK_RTOL * diag[0]]
    for _ in range(2):
        gram = z.T @ b_apply.matmat(z)
        gram = 0.5 * (gram + gram.T)
        chol = sla.cholesky(gram, lower=True)
        z = sla.solve_triangular(chol, z.T, lower=True).T
    return z


def _sign_normalize(vectors: np.ndarray) -> np.ndarray:
    """Sinal de cada coluna tal que a entrada de maior módulo seja positiva."""
    if vectors.shape[1] == 0:
        return np.ones(0)
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def near_degenerate_indices(gammas: np.ndarray, gap: float = DEGENERACY_GAP) -> tuple[int, ...]:
    """Índices i com |γ_i − γ_{i+1}| < gap·γ_i."""
    flagged = []
    for i in range(len(gammas) - 1):
        if abs(gammas[i] - gammas[i + 1]) < gap * abs(gammas[i]):
            flagged.append(i)
    return tuple(flagged)


def eig_lowrank_generalized(
    a_apply: LinearOperatorHandle,
    b_apply: LinearOperatorHandle,
    b_inv_apply: LinearOperatorHandle,
    rank: int,
    oversample: int = 10,
    seed: int = 0,
) -> LowRankSpectrum:
    """
    Autopares dominantes de A ψ = γ B ψ por dupla passada randomizada.

    Passada 1 (amostragem): Y = B⁻¹ A Ω, Ω gaussiano (dim × (rank+oversample)).
    Passada 2 (Rayleigh–Ritz): Q B-ortonormal gerando Y, T = Qᵀ A Q, T = V Λ Vᵀ, ψ = Q V.

    A última aplicação de `a_apply` é sempre no bloco Q, de modo que quem
    registra as aplicações pode recompor os incrementais de ψ_i por V.

    Returns:
        LowRankSpectrum com γ não crescente, ψ B-ortonormais e sinal normalizado

    Raises:
        DimensionMismatchError: operadores com dimensões diferentes ou rank+oversample > dim
    """
    dim = a_apply.dim
    if b_apply.dim != dim or b_inv_apply.dim != dim:
        raise DimensionMismatchError(
            "Operadores do par generalizado com dimensões diferentes",
            a=dim,
            b=b_apply.dim,
            b_inv=b_inv_apply.dim,
        )
    if rank < 0 or oversample < 0 or rank + oversample > dim:
        raise DimensionMismatchError(
            f"rank + oversample = {rank + oversample} excede a dimensão {dim}",
            rank=rank,
            oversample=oversample,
            dim=dim,
        )
    if rank == 0:
        return LowRankSpectrum.empty(dim)

    rng = np.random.Generator(np.random.Philox(key=seed))
    omega = rng.standard_normal((dim, rank + oversample))

    y = b_inv_apply.matmat(a_apply.matmat(omega))
    q = b_orthonormalize(y, b_apply)
    aq = a_apply.matmat(q)
    t = q.T @ aq
    t = 0.5 * (t + t.T)
    evals, evecs = sla.eigh(t)
    order = np.argsort(evals)[::-1][:rank]
    evals = evals[order]
    evecs = evecs[:, order]

    keep = evals > EIGENVALUE_FLOOR
    rank_deficient = int(keep.sum()) < rank
    if rank_deficient:
        logger.warning(
            f"Posto deficiente: {int(keep.sum())} de {rank} autovalores acima do piso {EIGENVALUE_FLOOR:g}"
        )
    evals = evals[keep]
    evecs = evecs[:, keep]

    psis = q @ evecs
    signs = _sign_normalize(psis)
    psis = psis * signs
    evecs = evecs * signs

    degenerate = near_degenerate_indices(evals)
    if degenerate:
        logger.warning(f"Autovalores quase repetidos nos modos {list(degenerate)}; derivadas pouco confiáveis")

    return LowRankSpectrum(
        gammas=evals,
        psis=psis,
        requested_rank=rank,
        rank_deficient=rank_deficient,
        near_degenerate=degenerate,
        ritz_coefficients=evecs,
    )


def b_orthonormality_error(psis: np.ndarray, b_apply: LinearOperatorHandle) -> float:
    """max |ΨᵀBΨ − I| (0 para bloco vazio)."""
    if psis.shape[1] == 0:
        return 0.0
    gram = psis.T @ b_apply.matmat(psis)
    return float(np.max(np.abs(gram - np.eye(psis.shape[1]))))
