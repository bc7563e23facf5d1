"""
Prior gaussiano N(m_prior, C_prior) com C_prior = K⁻¹ M K⁻¹.

K = γ·rigidez + δ·massa discretiza (δI − γΔ); a precisão é K M⁻¹ K.
Nenhuma raiz quadrada do operador é necessária: apenas solves com K
(fatoração LU) e aplicações de M⁻¹ (CG com Jacobi ou massa concentrada).
"""

import logging
from typing import Literal

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from igsense.core.exceptions import SingularOperatorError
from igsense.services.linops import (
    CoefficientVector,
    LinearOperatorHandle,
    Space,
    cg_solve,
    jacobi_preconditioner,
)

logger = logging.getLogger(__name__)

MassSolver = Literal["cg", "lumped"]


class GaussianPrior:
    """
    Prior gaussiano com covariância inversa ao quadrado de um operador elíptico.

    Attributes:
        mean: média m_prior
        K_op: discretização de (δI − γΔ), simétrica positiva definida
        M: matriz de massa do espaço de parâmetros
        mass_solver: "cg" (M consistente, CG com Jacobi) ou "lumped" (M diagonal)
    """

    def __init__(
        self,
        K_op,
        M,
        mean: np.ndarray | float = 0.0,
        mass_solver: MassSolver = "cg",
        cg_rel_tol: float = 1e-12,
        cg_max_iter: int = 1000,
    ):
        self.K_op = sp.csc_matrix(K_op)
        self.dim = self.K_op.shape[0]
        self.mass_solver = mass_solver
        self.cg_rel_tol = cg_rel_tol
        self.cg_max_iter = cg_max_iter

        M = sp.csr_matrix(M)
        if mass_solver == "lumped":
            self._lumped = np.asarray(M.sum(axis=1)).ravel()
            self.M = sp.diags(self._lumped).tocsr()
        elif mass_solver == "cg":
            self._lumped = None
            self.M = M
        else:
            raise ValueError(f"mass_solver desconhecido: {mass_solver}")

        self.mean = np.broadcast_to(np.asarray(mean, dtype=float), (self.dim,)).copy()

        try:
            self._k_lu = spla.splu(self.K_op)
        except RuntimeError as e:
            raise SingularOperatorError(f"Operador do prior singular: {e}")

        self._mass_op = LinearOperatorHandle(
            lambda x: self.M @ x, self.dim, Space.PARAMETER, Space.DUAL, symmetric=True
        )
        self._mass_precond = jacobi_preconditioner(self.M.diagonal())

    @classmethod
    def bilaplacian(
        cls,
        stiffness,
        mass,
        gamma: float = 1.0,
        delta: float = 1.0,
        mean: np.ndarray | float = 0.0,
        mass_solver: MassSolver = "cg",
        cg_rel_tol: float = 1e-12,
    ) -> "GaussianPrior":
        """Prior com K = γ·rigidez + δ·massa; (γ, δ) = (1, 1) reproduz (I − Δ)⁻²."""
        if gamma <= 0.0 or delta <= 0.0:
            raise ValueError("gamma e delta do prior devem ser positivos")
        K_op = gamma * sp.csr_matrix(stiffness) + delta * sp.csr_matrix(mass)
        logger.info(f"Prior bilaplaciano: γ={gamma}, δ={delta}, massa via {mass_solver}")
        return cls(K_op, mass, mean, mass_solver, cg_rel_tol)

    @classmethod
    def identity(cls, dim: int, mean: np.ndarray | float = 0.0) -> "GaussianPrior":
        """Prior N(mean, I) (K = M = I)."""
        eye = sp.identity(dim, format="csr")
        return cls(eye, eye, mean, mass_solver="lumped")

    # ==========================================
    # Blocos básicos
    # ==========================================

    def _solve_k(self, v: np.ndarray) -> np.ndarray:
        sol = self._k_lu.solve(np.ascontiguousarray(v, dtype=float))
        if not np.all(np.isfinite(sol)):
            raise SingularOperatorError("Solve com o operador do prior produziu valores não finitos")
        return sol

    def _solve_mass(self, v: np.ndarray) -> np.ndarray:
        if self._lumped is not None:
            return v / (self._lumped[:, None] if v.ndim == 2 else self._lumped)
        if v.ndim == 2:
            return np.column_stack([self._solve_mass(v[:, k]) for k in range(v.shape[1])])
        return cg_solve(
            self._mass_op,
            CoefficientVector(v, Space.DUAL),
            rel_tol=self.cg_rel_tol,
            max_iter=self.cg_max_iter,
            preconditioner=self._mass_precond,
        ).values

    # ==========================================
    # Operações públicas
    # ==========================================

    def apply_cov(self, v: np.ndarray) -> np.ndarray:
        """C_prior v = K⁻¹ M K⁻¹ v (vetor dual → parâmetro; aceita blocos)."""
        return self._solve_k(self.M @ self._solve_k(v))

    def apply_precision(self, v: np.ndarray) -> np.ndarray:
        """C_prior⁻¹ v = K M⁻¹ K v (parâmetro → dual; aceita blocos)."""
        return self.K_op @ self._solve_mass(self.K_op @ v)

    def cm_inner(self, x: np.ndarray, y: np.ndarray) -> float:
        """Produto de Cameron–Martin ⟨x, y⟩ = xᵀ K M⁻¹ K y."""
        return float(np.dot(x, self.apply_precision(y)))

    def cost(self, m: np.ndarray) -> float:
        """½‖m − m_prior‖²_{C_prior⁻¹}."""
        dm = m - self.mean
        return 0.5 * self.cm_inner(dm, dm)

    def grad(self, m: np.ndarray) -> np.ndarray:
        return self.apply_precision(m - self.mean)

    def precision_operator(self) -> LinearOperatorHandle:
        return LinearOperatorHandle(
            self.apply_precision, self.dim, Space.PARAMETER, Space.DUAL, symmetric=True
        )

    def covariance_operator(self) -> LinearOperatorHandle:
        return LinearOperatorHandle(
            self.apply_cov, self.dim, Space.DUAL, Space.PARAMETER, symmetric=True
        )

    def dense_precision(self) -> np.ndarray:
        """K M⁻¹ K denso (só para oráculos em malhas pequenas)."""
        K = self.K_op.toarray()
        return K @ np.linalg.solve(self.M.toarray(), K)
