"""
Hierarquia de exceções do igsense.

Toda exceção carrega um dicionário `details` usado pela CLI para montar a
linha de erro legível por máquina, e um `kind` em snake_case.
"""

from typing import Any


class IgSenseError(Exception):
    """Exceção base para erros do igsense."""

    kind = "igsense_error"
    exit_code = 3

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details


class ConfigurationError(IgSenseError):
    """Configuração inválida (arquivo TOML, flags ou combinação de valores)."""

    kind = "configuration_error"
    exit_code = 2


class NumericalError(IgSenseError):
    """Falha numérica durante um solve, decomposição ou estimador."""

    kind = "numerical_error"


class NonConvergenceError(NumericalError):
    """Solver iterativo atingiu max_iter sem convergir."""

    kind = "non_convergence"

    def __init__(self, iterations: int, residual: float, message: str | None = None):
        super().__init__(
            message or f"CG não convergiu em {iterations} iterações (resíduo relativo {residual:.3e})",
            iterations=iterations,
            residual=residual,
        )
        self.iterations = iterations
        self.residual = residual


class SingularOperatorError(NumericalError):
    """Sistema θ-congelado singular ou solução não finita."""

    kind = "singular_operator"


class DegenerateVarianceError(NumericalError):
    """Variância estimada do QoI (quase) nula: índices de Sobol indefinidos."""

    kind = "degenerate_variance"


class RankDeficientError(NumericalError):
    """Menos autovalores acima do piso que o posto pedido (apenas em modo estrito)."""

    kind = "rank_deficient"


class DimensionMismatchError(IgSenseError, ValueError):
    """Dimensões incompatíveis entre vetor e operador."""

    kind = "dimension_mismatch"


class DimensionGuardError(IgSenseError, ValueError):
    """Oráculo denso recusado: dimensão acima do limite de mesa."""

    kind = "dimension_guard"


class IndexOutOfRangeError(IgSenseError, IndexError):
    """Índice de modo ou de parâmetro fora do intervalo."""

    kind = "index_out_of_range"


class InvalidObservationPointError(ConfigurationError):
    """Ponto de observação fora de Ω = (0,1)²."""

    kind = "invalid_observation_point"


class UnsupportedDistributionError(ConfigurationError):
    """Distribuição sem constante de Poincaré implementada."""

    kind = "unsupported_distribution"


class BoundaryClampWarning(UserWarning):
    """Diferença finita unilateral usada porque θ ± h saiu da caixa."""
