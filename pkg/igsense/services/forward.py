"""
Contrato do problema direto afim em m e os quatro solves canônicos.

Forma fraca discreta: a(p,u;θ) + c(p,m;θ) + d(p;θ) = 0, realizada como
pᵀA(θ)u + pᵀC(θ)m + pᵀd(θ) = 0, com observação Q u.

Contém:
- ThetaVector: parâmetros auxiliares θ com nomes, valores nominais e caixa
- ObservationData: dados observados e variância do ruído
- ForwardModel: interface abstrata (formas, derivadas em θ, observação)
- SpectatorModel: acrescenta um parâmetro que não entra em nenhuma forma
- StateSolver: solves de estado, adjunto e incrementais com cache de fatorações
"""

import logging
import threading
from abc import ABC, abstractmethod
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from igsense.core.exceptions import (
    DimensionMismatchError,
    IndexOutOfRangeError,
    SingularOperatorError,
)
from igsense.services.linops import SolveCounter

logger = logging.getLogger(__name__)


# ==========================================
# Tipos de domínio
# ==========================================

@dataclass(frozen=True)
class ThetaVector:
    """
    Parâmetros auxiliares θ.

    Attributes:
        values: valores atuais (n_θ,)
        names: rótulos únicos
        nominal: valores nominais
        box: limites por entrada, shape (n_θ, 2)
    """

    values: np.ndarray
    names: tuple[str, ...]
    nominal: np.ndarray
    box: np.ndarray

    def __post_init__(self):
        values = np.atleast_1d(np.asarray(self.values, dtype=float))
        nominal = np.atleast_1d(np.asarray(self.nominal, dtype=float))
        box = np.asarray(self.box, dtype=float).reshape(-1, 2)
        names = tuple(self.names)
        n = values.shape[0]
        if len(names) != n or nominal.shape[0] != n or box.shape[0] != n:
            raise DimensionMismatchError(
                "ThetaVector com comprimentos inconsistentes",
                values=n,
                names=len(names),
                nominal=int(nominal.shape[0]),
                box=int(box.shape[0]),
            )
        if len(set(names)) != n:
            raise ValueError(f"Nomes de θ repetidos: {names}")
        if np.any(box[:, 0] > box[:, 1]):
            raise ValueError("Caixa de θ com limite inferior maior que o superior")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "nominal", nominal)
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "names", names)

    @classmethod
    def at_nominal(cls, names, nominal, box=None) -> "ThetaVector":
        nominal = np.asarray(nominal, dtype=float)
        if box is None:
            box = np.column_stack([np.full_like(nominal, -np.inf), np.full_like(nominal, np.inf)])
        return cls(nominal.copy(), tuple(names), nominal, box)

    def __len__(self) -> int:
        return self.values.shape[0]

    def with_values(self, values) -> "ThetaVector":
        return ThetaVector(np.asarray(values, dtype=float), self.names, self.nominal, self.box)

    def shifted(self, j: int, h: float) -> "ThetaVector":
        values = self.values.copy()
        values[j] += h
        return self.with_values(values)

    def in_box(self) -> bool:
        return bool(np.all(self.values >= self.box[:, 0]) and np.all(self.values <= self.box[:, 1]))

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise IndexOutOfRangeError(f"Parâmetro '{name}' não existe em {self.names}", name=name)

    def appended(self, name: str, value: float = 0.0, lo: float = -1.0, hi: float = 1.0) -> "ThetaVector":
        """Cópia com um parâmetro extra no fim."""
        return ThetaVector(
            np.append(self.values, value),
            self.names + (name,),
            np.append(self.nominal, value),
            np.vstack([self.box, [lo, hi]]),
        )

    @property
    def key(self) -> bytes:
        """Chave bit a bit usada no cache de fatorações."""
        return self.values.tobytes()


@dataclass(frozen=True)
class ObservationData:
    """
    Dados observados u_obs e Γ_noise diagonal.

    Attributes:
        u_obs: observações (N_obs,)
        noise_var: σ_k² > 0 para cada observação
    """

    u_obs: np.ndarray
    noise_var: np.ndarray

    def __post_init__(self):
        u_obs = np.atleast_1d(np.asarray(self.u_obs, dtype=float))
        noise_var = np.asarray(self.noise_var, dtype=float)
        if noise_var.ndim == 0:
            noise_var = np.full_like(u_obs, float(noise_var))
        if noise_var.shape != u_obs.shape:
            raise DimensionMismatchError(
                "u_obs e noise_var com comprimentos diferentes",
                u_obs=int(u_obs.shape[0]),
                noise_var=int(noise_var.shape[0]),
            )
        if np.any(noise_var <= 0.0):
            raise ValueError("Todas as variâncias de ruído devem ser positivas")
        object.__setattr__(self, "u_obs", u_obs)
        object.__setattr__(self, "noise_var", noise_var)

    @classmethod
    def isotropic(cls, u_obs, sigma: float) -> "ObservationData":
        u_obs = np.atleast_1d(np.asarray(u_obs, dtype=float))
        return cls(u_obs, np.full_like(u_obs, sigma**2))

    @property
    def n_obs(self) -> int:
        return self.u_obs.shape[0]

    @property
    def noise_precision(self) -> np.ndarray:
        return 1.0 / self.noise_var


# ==========================================
# Contrato do modelo direto
# ==========================================

class ForwardModel(ABC):
    """
    Interface abstrata de um modelo direto afim em m.

    Subclasses fornecem as matrizes montadas A(θ), C(θ), d(θ), suas derivadas
    parciais em θ_j e a matriz de observação Q. As formas bilineares e as
    ações de 𝓠 e 𝓠* derivam delas. Uma derivada parcial identicamente nula
    é sinalizada com None.
    """

    theta_names: tuple[str, ...] = ()

    @property
    @abstractmethod
    def state_dim(self) -> int:
        pass

    @property
    @abstractmethod
    def param_dim(self) -> int:
        pass

    @property
    @abstractmethod
    def observation_matrix(self) -> sp.csr_matrix:
        """Q, shape (N_obs, state_dim)."""
        pass

    @abstractmethod
    def state_operator(self, theta: ThetaVector) -> sp.spmatrix:
        """A(θ), shape (state_dim, state_dim)."""
        pass

    @abstractmethod
    def control_operator(self, theta: ThetaVector) -> sp.spmatrix:
        """C(θ), shape (state_dim, param_dim)."""
        pass

    @abstractmethod
    def source_vector(self, theta: ThetaVector) -> np.ndarray:
        """d(θ), shape (state_dim,)."""
        pass

    @abstractmethod
    def state_operator_dtheta(self, j: int, theta: ThetaVector) -> sp.spmatrix | None:
        pass

    @abstractmethod
    def control_operator_dtheta(self, j: int, theta: ThetaVector) -> sp.spmatrix | None:
        pass

    @abstractmethod
    def source_vector_dtheta(self, j: int, theta: ThetaVector) -> np.ndarray | None:
        pass

    @property
    def n_obs(self) -> int:
        return self.observation_matrix.shape[0]

    @property
    def n_theta(self) -> int:
        return len(self.theta_names)

    def check_index(self, j: int) -> None:
        if not 0 <= j < self.n_theta:
            raise IndexOutOfRangeError(
                f"Índice de parâmetro {j} fora de [0, {self.n_theta})", index=j, n_theta=self.n_theta
            )

    # ------------------------------------------
    # Formas
    # ------------------------------------------

    def a_form(self, p: np.ndarray, u: np.ndarray, theta: ThetaVector) -> float:
        return float(p @ (self.state_operator(theta) @ u))

    def c_form(self, p: np.ndarray, m: np.ndarray, theta: ThetaVector) -> float:
        return float(p @ (self.control_operator(theta) @ m))

    def d_form(self, p: np.ndarray, theta: ThetaVector) -> float:
        return float(p @ self.source_vector(theta))

    def a_form_dtheta(self, j: int, p: np.ndarray, u: np.ndarray, theta: ThetaVector) -> float:
        self.check_index(j)
        a_j = self.state_operator_dtheta(j, theta)
        return 0.0 if a_j is None else float(p @ (a_j @ u))

    def c_form_dtheta(self, j: int, p: np.ndarray, m: np.ndarray, theta: ThetaVector) -> float:
        self.check_index(j)
        c_j = self.control_operator_dtheta(j, theta)
        return 0.0 if c_j is None else float(p @ (c_j @ m))

    def d_form_dtheta(self, j: int, p: np.ndarray, theta: ThetaVector) -> float:
        self.check_index(j)
        d_j = self.source_vector_dtheta(j, theta)
        return 0.0 if d_j is None else float(p @ d_j)

    def observe(self, u: np.ndarray) -> np.ndarray:
        """Ação de 𝓠."""
        return self.observation_matrix @ u

    def observe_adjoint(self, w: np.ndarray) -> np.ndarray:
        """Ação de 𝓠*."""
        return self.observation_matrix.T @ w

    def linearity_defect(self, theta: ThetaVector, seed: int = 0) -> float:
        """
        Maior defeito relativo de linearidade das três formas em sondas aleatórias.

        Verifica f(αx + βy) = αf(x) + βf(y) em cada argumento exceto θ.
        """
        rng = np.random.Generator(np.random.Philox(key=seed))
        ns, nm = self.state_dim, self.param_dim
        p, p2, u, u2 = (rng.standard_normal(ns) for _ in range(4))
        m, m2 = rng.standard_normal(nm), rng.standard_normal(nm)
        alpha, beta = rng.standard_normal(2)

        def defect(lhs: float, rhs: float) -> float:
            return abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs))

        checks = [
            defect(self.a_form(p, alpha * u + beta * u2, theta),
                   alpha * self.a_form(p, u, theta) + beta * self.a_form(p, u2, theta)),
            defect(self.a_form(alpha * p + beta * p2, u, theta),
                   alpha * self.a_form(p, u, theta) + beta * self.a_form(p2, u, theta)),
            defect(self.c_form(p, alpha * m + beta * m2, theta),
                   alpha * self.c_form(p, m, theta) + beta * self.c_form(p, m2, theta)),
            defect(self.c_form(alpha * p + beta * p2, m, theta),
                   alpha * self.c_form(p, m, theta) + beta * self.c_form(p2, m, theta)),
            defect(self.d_form(alpha * p + beta * p2, theta),
                   alpha * self.d_form(p, theta) + beta * self.d_form(p2, theta)),
        ]
        return max(checks)


class SpectatorModel(ForwardModel):
    """
    Envolve um modelo e acrescenta um parâmetro que não entra em nenhuma forma.

    As derivadas no parâmetro extra são identicamente nulas.
    """

    def __init__(self, base: ForwardModel, name: str = "spectator"):
        self.base = base
        self.theta_names = tuple(base.theta_names) + (name,)

    def _base_theta(self, theta: ThetaVector) -> ThetaVector:
        n = self.base.n_theta
        return ThetaVector(theta.values[:n], theta.names[:n], theta.nominal[:n], theta.box[:n])

    @property
    def state_dim(self) -> int:
        return self.base.state_dim

    @property
    def param_dim(self) -> int:
        return self.base.param_dim

    @property
    def observation_matrix(self):
        return self.base.observation_matrix

    def state_operator(self, theta):
        return self.base.state_operator(self._base_theta(theta))

    def control_operator(self, theta):
        return self.base.control_operator(self._base_theta(theta))

    def source_vector(self, theta):
        return self.base.source_vector(self._base_theta(theta))

    def state_operator_dtheta(self, j, theta):
        return None if j == self.base.n_theta else self.base.state_operator_dtheta(j, self._base_theta(theta))

    def control_operator_dtheta(self, j, theta):
        return None if j == self.base.n_theta else self.base.control_operator_dtheta(j, self._base_theta(theta))

    def source_vector_dtheta(self, j, theta):
        return None if j == self.base.n_theta else self.base.source_vector_dtheta(j, self._base_theta(theta))


# ==========================================
# Solves
# ==========================================

@dataclass
class StateSolver:
    """
    Os quatro solves canônicos sobre um ForwardModel.

    A fatoração LU de A(θ) é calculada uma vez por θ (igualdade bit a bit) e
    reutilizada por todos os solves, inclusive os transpostos do adjunto.
    Aceita blocos (n × k) nos solves incrementais; cada coluna conta um solve.
    """

    model: ForwardModel
    counter: SolveCounter = field(default_factory=SolveCounter)
    cache_size: int = 4
    _cache: OrderedDict = field(default_factory=OrderedDict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def _factor(self, theta: ThetaVector):
        key = theta.key
        with self._lock:
            if key in self._cache:
                self._cache.move_to_end(key)
                logger.debug(f"Cache de fatoração reutilizado para θ={theta.values}")
                return self._cache[key]
        try:
            lu = spla.splu(sp.csc_matrix(self.model.state_operator(theta)))
        except RuntimeError as e:
            raise SingularOperatorError(
                f"Operador de estado singular em θ={theta.values.tolist()}: {e}",
                theta=theta.values.tolist(),
            )
        with self._lock:
            self._cache[key] = lu
            while len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)
        logger.debug(f"Fatoração LU de A(θ) para θ={theta.values}")
        return lu

    def _solve(self, rhs: np.ndarray, theta: ThetaVector, transpose: bool, kind: str) -> np.ndarray:
        lu = self._factor(theta)
        sol = lu.solve(np.ascontiguousarray(rhs, dtype=float), trans="T" if transpose else "N")
        self.counter.increment(kind, 1 if rhs.ndim == 1 else rhs.shape[1])
        if not np.all(np.isfinite(sol)):
            raise SingularOperatorError(
                f"Solve {kind} produziu valores não finitos em θ={theta.values.tolist()}",
                theta=theta.values.tolist(),
            )
        return sol

    def _misfit_weight(self, data: ObservationData, w: np.ndarray) -> np.ndarray:
        prec = data.noise_precision
        return prec[:, None] * w if w.ndim == 2 else prec * w

    def solve_state(self, m: np.ndarray, theta: ThetaVector) -> np.ndarray:
        """
        Resolve a(p̃,u) + c(p̃,m) + d(p̃) = 0, isto é A u = −(C m + d).

        Raises:
            SingularOperatorError: se o sistema θ-congelado não puder ser resolvido
        """
        rhs = -(self.model.control_operator(theta) @ m + self.model.source_vector(theta))
        return self._solve(rhs, theta, False, "state")

    def solve_adjoint(self, u: np.ndarray, data: ObservationData, theta: ThetaVector) -> np.ndarray:
        """Resolve Aᵀp = −Qᵀ Γ⁻¹ (Q u − u_obs)."""
        residual = self.model.observe(u) - data.u_obs
        rhs = -self.model.observe_adjoint(self._misfit_weight(data, residual))
        return self._solve(rhs, theta, True, "adjoint")

    def solve_incremental_state(self, m_hat: np.ndarray, theta: ThetaVector) -> np.ndarray:
        """Resolve A û = −C m̂ (vetor ou bloco)."""
        rhs = -(self.model.control_operator(theta) @ m_hat)
        return self._solve(rhs, theta, False, "incremental_state")

    def solve_incremental_adjoint(
        self, u_hat: np.ndarray, data: ObservationData, theta: ThetaVector
    ) -> np.ndarray:
        """Resolve Aᵀp̂ = −Qᵀ Γ⁻¹ Q û (vetor ou bloco)."""
        rhs = -self.model.observe_adjoint(self._misfit_weight(data, self.model.observe(u_hat)))
        return self._solve(rhs, theta, True, "incremental_adjoint")

    def solve_linearized(self, rhs: np.ndarray, theta: ThetaVector, transpose: bool = False) -> np.ndarray:
        """Solve linear genérico com A(θ) ou A(θ)ᵀ, contado como incremental."""
        kind = "incremental_adjoint" if transpose else "incremental_state"
        return self._solve(np.asarray(rhs, dtype=float), theta, transpose, kind)
