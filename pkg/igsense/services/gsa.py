"""
Sensibilidade global baseada em derivadas (DGSM).

Parametrização por perturbação relativa ϑ_i = (1 + α θ_i) ϑ̄_i com θ ~ U([−1,1]^{n_θ}),
constantes de Poincaré e estimadores por média amostral dos limitantes
superiores dos índices de Sobol totais: S_tot_i ≤ C(F_i)·E[(∂Φ/∂θ_i)²] / Var(Φ).
"""

import logging
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from igsense.core.exceptions import (
    DegenerateVarianceError,
    NumericalError,
    UnsupportedDistributionError,
)
from igsense.services.bayes import InverseProblem
from igsense.services.forward import ThetaVector
from igsense.services.hdsa import info_gain_gradient

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-14


@dataclass(frozen=True)
class Uniform:
    """Distribuição uniforme em [a, b]."""

    a: float = -1.0
    b: float = 1.0

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError(f"Uniforme exige b > a, recebeu [{self.a}, {self.b}]")

    def inverse_cdf(self, q: np.ndarray) -> np.ndarray:
        return self.a + (self.b - self.a) * q


def poincare_constant(distribution) -> float:
    """
    Constante de Poincaré C(F) da distribuição.

    uniform(a, b) → (b − a)²/π²; em particular uniform(−1, 1) → 4/π².

    Raises:
        UnsupportedDistributionError: para qualquer distribuição não uniforme
    """
    if not isinstance(distribution, Uniform):
        raise UnsupportedDistributionError(
            f"Constante de Poincaré não implementada para {distribution!r}",
            distribution=repr(distribution),
        )
    return (distribution.b - distribution.a) ** 2 / np.pi**2


@dataclass(frozen=True)
class PerturbationMap:
    """
    θ ∈ [−1,1]^{n_θ} ↦ ϑ_i = (1 + α θ_i) ϑ̄_i.

    `template` fornece nomes, nominal ϑ̄ e caixa do ThetaVector produzido.
    """

    template: ThetaVector
    alpha: float = 0.05

    def __post_init__(self):
        if np.any(self.nominal == 0.0):
            raise ValueError("Perturbação relativa exige nominal ϑ̄_i ≠ 0 para todo i")
        if self.alpha < 0.0:
            raise ValueError(f"alpha deve ser não negativo, recebeu {self.alpha}")

    @property
    def nominal(self) -> np.ndarray:
        return self.template.nominal

    @property
    def n_theta(self) -> int:
        return len(self.template)

    def to_theta(self, t: np.ndarray) -> ThetaVector:
        """Mapeia coordenadas relativas t ∈ [−1,1]^{n_θ} para ϑ."""
        return self.template.with_values((1.0 + self.alpha * np.asarray(t, dtype=float)) * self.nominal)

    def from_theta(self, theta: ThetaVector) -> np.ndarray:
        if self.alpha == 0.0:
            return np.zeros(self.n_theta)
        return (theta.values / self.nominal - 1.0) / self.alpha


def remap_gradient(pmap: PerturbationMap, grad_wrt_vartheta: np.ndarray) -> np.ndarray:
    """Regra da cadeia: ∂Φ/∂θ_i = α·ϑ̄_i·∂Φ/∂ϑ_i."""
    return pmap.alpha * pmap.nominal * np.asarray(grad_wrt_vartheta, dtype=float)


# ==========================================
# Estimadores
# ==========================================

@dataclass(frozen=True)
class DgsmReport:
    """
    Limitantes DGSM por parâmetro.

    Attributes:
        names: rótulos dos parâmetros
        bounds: C(F_i)·dgsm_i / variance, limitante superior de S_tot_i
        dgsm: médias amostrais de (∂Φ/∂θ_i)²
        variance: variância amostral de Φ (denominador N−1)
        poincare: C(F_i)
        standard_errors: erro padrão dos limitantes por lotes
        n_samples: amostras efetivamente usadas
        seed: semente do amostrador
        skipped: índices de amostras descartadas por falha numérica
    """

    names: tuple[str, ...]
    bounds: np.ndarray
    dgsm: np.ndarray
    variance: float
    poincare: np.ndarray
    standard_errors: np.ndarray
    n_samples: int
    seed: int
    mean: float = 0.0
    skipped: tuple[int, ...] = ()

    @property
    def flagged(self) -> bool:
        return bool(self.skipped)


def sample_unit_box(seed: int, k: int, n_theta: int) -> np.ndarray:
    """
    Amostra k de U([−1,1]^{n_θ}) por CDF inversa.

    Cada amostra tem seu próprio gerador Philox com chave (seed, k), de modo
    que o resultado não depende da ordem de execução.
    """
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, k], dtype=np.uint64)))
    return Uniform(-1.0, 1.0).inverse_cdf(rng.random(n_theta))


def _bounds(values: np.ndarray, grads: np.ndarray, poincare: np.ndarray):
    variance = float(np.var(values, ddof=1))
    dgsm = np.mean(grads**2, axis=0)
    return variance, dgsm, poincare * dgsm / variance if variance > VARIANCE_FLOOR else None


def dgsm_estimate(
    value_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    n_theta: int,
    n_samples: int,
    seed: int,
    names: tuple[str, ...] | None = None,
    threads: int = 1,
    tolerate_failures: bool = False,
    batches: int = 10,
) -> DgsmReport:
    """
    Estimador DGSM genérico em coordenadas θ ∈ [−1,1]^{n_θ}.

    As mesmas amostras alimentam a variância e as médias quadráticas das
    derivadas.

    Args:
        value_and_grad: θ ↦ (Φ(θ), ∇_θ Φ(θ))
        threads: workers do ThreadPoolExecutor (ordem dos resultados por índice)
        tolerate_failures: descarta amostras com NumericalError em vez de abortar

    Raises:
        DegenerateVarianceError: se a variância estimada for ≤ 1e-14
    """
    if n_samples < 2:
        raise ValueError(f"São necessárias ao menos 2 amostras, recebeu {n_samples}")
    names = names or tuple(f"theta{i + 1}" for i in range(n_theta))
    poincare = np.full(n_theta, poincare_constant(Uniform(-1.0, 1.0)))

    def evaluate(k: int):
        t = sample_unit_box(seed, k, n_theta)
        try:
            value, grad = value_and_grad(t)
        except NumericalError as e:
            if not tolerate_failures:
                raise
            logger.warning(f"Amostra {k} descartada: {e.message}")
            return None
        return float(value), np.asarray(grad, dtype=float)

    workers = max(1, min(threads, n_samples))
    if workers == 1:
        results = [evaluate(k) for k in range(n_samples)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(evaluate, range(n_samples)))

    skipped = tuple(k for k, res in enumerate(results) if res is None)
    kept = [res for res in results if res is not None]
    if len(kept) < 2:
        raise DegenerateVarianceError("Amostras válidas insuficientes para estimar a variância", kept=len(kept))
    values = np.array([v for v, _ in kept])
    grads = np.vstack([g for _, g in kept])

    variance, dgsm, bounds = _bounds(values, grads, poincare)
    if bounds is None:
        raise DegenerateVarianceError(
            f"Variância do QoI ≈ {variance:.3e}: índices de Sobol indefinidos", variance=variance
        )

    standard_errors = np.full(n_theta, np.nan)
    if batches >= 2 and len(kept) >= 2 * batches:
        batch_bounds = []
        for idx in np.array_split(np.arange(len(kept)), batches):
            _, _, b = _bounds(values[idx], grads[idx], poincare)
            if b is not None:
                batch_bounds.append(b)
        if len(batch_bounds) >= 2:
            standard_errors = np.std(np.vstack(batch_bounds), axis=0, ddof=1) / np.sqrt(len(batch_bounds))

    if skipped:
        logger.warning(f"{len(skipped)} amostras descartadas; N_s efetivo = {len(kept)}")
    logger.info(f"DGSM: Var(Φ)={variance:.6g}, limitantes={dict(zip(names, bounds.tolist()))}")
    return DgsmReport(
        names=tuple(names),
        bounds=bounds,
        dgsm=dgsm,
        variance=variance,
        poincare=poincare,
        standard_errors=standard_errors,
        n_samples=len(kept),
        seed=seed,
        mean=float(np.mean(values)),
        skipped=skipped,
    )


def dgsm_bound(
    ip_factory: Callable[[], InverseProblem],
    pmap: PerturbationMap,
    n_samples: int,
    seed: int,
    rank: int,
    oversample: int = 10,
    spectrum_seed: int = 0,
    threads: int = 1,
    tolerate_failures: bool = False,
    batches: int = 10,
    strict: bool = False,
) -> DgsmReport:
    """
    Limitantes DGSM de Φ_IG sob a perturbação relativa `pmap`.

    Para cada amostra θ^(k), um InverseProblem privado (ip_factory) roda
    info_gain_gradient em ϑ(θ^(k)); o gradiente é levado a θ por remap_gradient.
    Os dados u_obs ficam fixos durante todo o estudo.
    """

    def value_and_grad(t: np.ndarray):
        ip = ip_factory()
        report = info_gain_gradient(
            ip, pmap.to_theta(t), rank, seed=spectrum_seed, oversample=oversample, strict=strict
        )
        return report.phi_ig, remap_gradient(pmap, report.grad_phi_ig)

    logger.info(f"GSA: N_s={n_samples}, seed={seed}, α={pmap.alpha}, threads={threads}")
    return dgsm_estimate(
        value_and_grad,
        pmap.n_theta,
        n_samples,
        seed,
        names=pmap.template.names,
        threads=threads,
        tolerate_failures=tolerate_failures,
        batches=batches,
    )
