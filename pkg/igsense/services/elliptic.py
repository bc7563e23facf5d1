"""
Modelo elíptico em Ω = (0,1)²: −Δu + c·u = m, ∇u·n = g em ∂Ω, com θ = (c, g).

Elementos P1 em triângulos retângulos (cada quadrado dividido pela diagonal
inferior-esquerda → superior-direita). Observações por interpolação
baricêntrica no triângulo que contém o ponto.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from igsense.core.exceptions import InvalidObservationPointError
from igsense.services.forward import (
    ForwardModel,
    ObservationData,
    StateSolver,
    ThetaVector,
)

logger = logging.getLogger(__name__)

DEFAULT_OBS_POINTS = tuple((x, y) for y in (0.25, 0.5, 0.75) for x in (0.25, 0.5, 0.75))
"""Reticulado interior 3×3 {0.25, 0.5, 0.75}²."""

DEFAULT_C_BOX = (0.5, 2.0)
DEFAULT_G_BOX = (0.0, 1.0)

_LOCAL_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
_EDGE_MASS = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
_REF_GRADS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


# ==========================================
# Malha
# ==========================================

@dataclass(frozen=True)
class UnitSquareMesh:
    """
    Malha estruturada do quadrado unitário.

    Attributes:
        n: células por lado
        nodes: coordenadas ((n+1)², 2), nó k = j(n+1) + i
        triangles: conectividade (2n², 3), orientação anti-horária
        boundary_edges: arestas de contorno (4n, 2)
    """

    n: int
    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray

    @classmethod
    def build(cls, n: int) -> "UnitSquareMesh":
        if n < 2:
            raise ValueError(f"A malha precisa de n ≥ 2 células por lado, recebeu {n}")
        ticks = np.linspace(0.0, 1.0, n + 1)
        xx, yy = np.meshgrid(ticks, ticks)
        nodes = np.column_stack([xx.ravel(), yy.ravel()])

        i, j = np.meshgrid(np.arange(n), np.arange(n))
        v00 = (j * (n + 1) + i).ravel()
        v10 = v00 + 1
        v01 = v00 + n + 1
        v11 = v01 + 1
        triangles = np.vstack([
            np.column_stack([v00, v10, v11]),
            np.column_stack([v00, v11, v01]),
        ])

        k = np.arange(n)
        bottom = np.column_stack([k, k + 1])
        top = np.column_stack([n * (n + 1) + k, n * (n + 1) + k + 1])
        left = np.column_stack([k * (n + 1), (k + 1) * (n + 1)])
        right = np.column_stack([k * (n + 1) + n, (k + 1) * (n + 1) + n])
        edges = np.vstack([bottom, top, left, right])

        return cls(n, nodes, triangles, edges)

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / self.n

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def node_index(self, i: int, j: int) -> int:
        return j * (self.n + 1) + i

    def interpolate(self, func) -> np.ndarray:
        """Interpolação nodal de func(x, y)."""
        return np.asarray(func(self.nodes[:, 0], self.nodes[:, 1]), dtype=float)

    def barycentric_row(self, x: float, y: float) -> tuple[np.ndarray, np.ndarray]:
        """
        Índices e pesos baricêntricos de (x, y) no triângulo que o contém.

        Raises:
            InvalidObservationPointError: se o ponto não estiver em (0,1)²
        """
        if not (0.0 < x < 1.0 and 0.0 < y < 1.0):
            raise InvalidObservationPointError(
                f"Ponto de observação ({x}, {y}) fora de Ω = (0,1)²", point=[x, y]
            )
        n = self.n
        i = min(int(np.floor(x * n)), n - 1)
        j = min(int(np.floor(y * n)), n - 1)
        xi = x * n - i
        eta = y * n - j
        v00 = self.node_index(i, j)
        v10, v01, v11 = v00 + 1, v00 + n + 1, v00 + n + 2
        if xi >= eta:
            return np.array([v00, v10, v11]), np.array([1.0 - xi, xi - eta, eta])
        return np.array([v00, v11, v01]), np.array([1.0 - eta, xi, eta - xi])


# ==========================================
# Montagem
# ==========================================

@dataclass(frozen=True)
class EllipticAssembly:
    """Matrizes P1: rigidez K, massa M, massa de contorno Mb e observação Q."""

    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    boundary_mass: sp.csr_matrix
    obs_matrix: sp.csr_matrix

    @classmethod
    def assemble(cls, mesh: UnitSquareMesh, obs_points) -> "EllipticAssembly":
        tri = mesh.triangles
        p = mesh.nodes[tri]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        area = 0.5 * np.abs(np.linalg.det(jac))
        grads = _REF_GRADS @ np.linalg.inv(jac)
        k_loc = area[:, None, None] * np.einsum("eik,ejk->eij", grads, grads)
        m_loc = area[:, None, None] * _LOCAL_MASS

        rows = np.repeat(tri, 3, axis=1).ravel()
        cols = np.tile(tri, (1, 3)).ravel()
        size = (mesh.num_nodes, mesh.num_nodes)
        stiffness = sp.coo_matrix((k_loc.ravel(), (rows, cols)), shape=size).tocsr()
        mass = sp.coo_matrix((m_loc.ravel(), (rows, cols)), shape=size).tocsr()

        edges = mesh.boundary_edges
        length = np.linalg.norm(mesh.nodes[edges[:, 1]] - mesh.nodes[edges[:, 0]], axis=1)
        mb_loc = length[:, None, None] * _EDGE_MASS
        erows = np.repeat(edges, 2, axis=1).ravel()
        ecols = np.tile(edges, (1, 2)).ravel()
        boundary_mass = sp.coo_matrix((mb_loc.ravel(), (erows, ecols)), shape=size).tocsr()

        obs_rows, obs_cols, obs_vals = [], [], []
        for k, (x, y) in enumerate(obs_points):
            idx, weights = mesh.barycentric_row(float(x), float(y))
            obs_rows.extend([k] * 3)
            obs_cols.extend(idx.tolist())
            obs_vals.extend(weights.tolist())
        obs_matrix = sp.coo_matrix(
            (obs_vals, (obs_rows, obs_cols)), shape=(len(obs_points), mesh.num_nodes)
        ).tocsr()

        return cls(stiffness, mass, boundary_mass, obs_matrix)


class EllipticModel(ForwardModel):
    """
    Modelo direto elíptico realizado pelas matrizes montadas.

    a(p,u) = pᵀ(K + cM)u, c(p,m) = −pᵀM m, d(p) = −g·(Mb·1)ᵀp.
    """

    theta_names = ("c", "g")

    def __init__(self, mesh: UnitSquareMesh, assembly: EllipticAssembly, nominal_theta: ThetaVector):
        self.mesh = mesh
        self.assembly = assembly
        self.nominal_theta = nominal_theta
        self._boundary_load = assembly.boundary_mass @ np.ones(mesh.num_nodes)
        self._neg_mass = (-assembly.mass).tocsr()

    @property
    def state_dim(self) -> int:
        return self.mesh.num_nodes

    @property
    def param_dim(self) -> int:
        return self.mesh.num_nodes

    @property
    def observation_matrix(self) -> sp.csr_matrix:
        return self.assembly.obs_matrix

    def state_operator(self, theta: ThetaVector) -> sp.csr_matrix:
        c = theta.values[0]
        return (self.assembly.stiffness + c * self.assembly.mass).tocsr()

    def control_operator(self, theta: ThetaVector) -> sp.csr_matrix:
        return self._neg_mass

    def source_vector(self, theta: ThetaVector) -> np.ndarray:
        return -theta.values[1] * self._boundary_load

    def state_operator_dtheta(self, j: int, theta: ThetaVector):
        self.check_index(j)
        return self.assembly.mass if j == 0 else None

    def control_operator_dtheta(self, j: int, theta: ThetaVector):
        self.check_index(j)
        return None

    def source_vector_dtheta(self, j: int, theta: ThetaVector):
        self.check_index(j)
        return -self._boundary_load if j == 1 else None


# ==========================================
# Construção e dados sintéticos
# ==========================================

def build_elliptic(
    n: int,
    obs_points=DEFAULT_OBS_POINTS,
    c_nominal: float = 1.0,
    g_nominal: float = 0.1,
    c_box: tuple[float, float] = DEFAULT_C_BOX,
    g_box: tuple[float, float] = DEFAULT_G_BOX,
) -> EllipticModel:
    """
    Monta o modelo elíptico numa malha n×n.

    Args:
        n: células por lado (≥ 2)
        obs_points: pontos de observação estritamente dentro de Ω
        c_nominal, g_nominal: valores nominais de θ
        c_box, g_box: caixas de θ usadas em sweeps e GSA

    Raises:
        InvalidObservationPointError: se algum ponto estiver fora de Ω
    """
    if c_nominal <= 0.0 or c_box[0] <= 0.0:
        raise ValueError("O coeficiente de reação c deve ser positivo")
    mesh = UnitSquareMesh.build(n)
    assembly = EllipticAssembly.assemble(mesh, obs_points)
    theta = ThetaVector(
        np.array([c_nominal, g_nominal]),
        EllipticModel.theta_names,
        np.array([c_nominal, g_nominal]),
        np.array([c_box, g_box]),
    )
    logger.info(f"Modelo elíptico montado: n={n}, {mesh.num_nodes} nós, {len(obs_points)} observações")
    return EllipticModel(mesh, assembly, theta)


def m_true_function(x, y):
    """m_true(x, y) = 10·exp(−[(x−0.5)² + (y−0.5)²]/20)."""
    return 10.0 * np.exp(-((x - 0.5) ** 2 + (y - 0.5) ** 2) / 20.0)


def true_source(mesh: UnitSquareMesh) -> np.ndarray:
    """Interpolação nodal da fonte verdadeira."""
    return mesh.interpolate(m_true_function)


def synthesize_data(
    model: ForwardModel,
    m_true: np.ndarray,
    theta_true: ThetaVector,
    level: float = 0.01,
    seed: int = 0,
    noise_scale: float = 1.0,
    solver: StateSolver | None = None,
) -> ObservationData:
    """
    Gera dados sintéticos u_obs = Q·u(m_true, θ_true) + ε.

    σ = level·‖u‖_∞ define Γ_noise = σ²I; ε = noise_scale·σ·ξ com ξ ~ N(0, I)
    amostrado por um Generator Philox com chave `seed`.

    Args:
        noise_scale: fator aplicado à perturbação (0 devolve Q u exato)
        solver: StateSolver a reutilizar; por padrão um privado (não contabilizado)
    """
    if level <= 0.0:
        raise ValueError(f"Nível de ruído deve ser positivo, recebeu {level}")
    solver = solver or StateSolver(model)
    u = solver.solve_state(m_true, theta_true)
    clean = model.observe(u)
    sigma = level * float(np.max(np.abs(u)))
    rng = np.random.Generator(np.random.Philox(key=seed))
    noise = noise_scale * sigma * rng.standard_normal(clean.shape[0])
    logger.info(f"Dados sintéticos: σ = {sigma:.6g} (seed={seed})")
    return ObservationData(clean + noise, np.full_like(clean, sigma**2))
