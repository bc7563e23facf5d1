"""
Construção de modelos, priors e problemas inversos a partir de um RunConfig.
"""

import logging
from dataclasses import dataclass

import numpy as np

from igsense.models.schemas import RunConfig
from igsense.services.bayes import InverseProblem
from igsense.services.elliptic import DEFAULT_OBS_POINTS, build_elliptic, synthesize_data, true_source
from igsense.services.forward import ForwardModel, ObservationData, SpectatorModel, ThetaVector
from igsense.services.gsa import PerturbationMap
from igsense.services.prior import GaussianPrior
from igsense.services.twobytwo import TwoByTwoModel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProblemSetup:
    """Problema inverso pronto para uso e o θ de avaliação."""

    ip: InverseProblem
    theta: ThetaVector
    rank: int
    config: RunConfig

    def fresh_problem(self) -> InverseProblem:
        """InverseProblem privado (contador e cache próprios) sobre os mesmos dados."""
        return self.ip.clone()

    def perturbation_map(self, alpha: float | None = None) -> PerturbationMap:
        alpha = self.config.gsa_alpha if alpha is None else alpha
        return PerturbationMap(self.theta.with_values(self.theta.nominal), alpha)


def theta_from_config(config: RunConfig) -> ThetaVector:
    t = config.theta
    return ThetaVector(np.array(t.values), tuple(t.names), np.array(t.nominal), np.array(t.box))


def build_model(config: RunConfig) -> ForwardModel:
    """ForwardModel do [model], com parâmetros espectadores para nomes extras em [theta]."""
    if config.model.kind == "elliptic":
        nominal = config.theta.nominal
        box = config.theta.box
        model: ForwardModel = build_elliptic(
            config.model.mesh_n,
            obs_points=config.model.obs_points or DEFAULT_OBS_POINTS,
            c_nominal=nominal[0],
            g_nominal=nominal[1],
            c_box=tuple(box[0]),
            g_box=tuple(box[1]),
        )
    else:
        model = TwoByTwoModel()
    for name in config.theta.names[model.n_theta:]:
        logger.info(f"Parâmetro espectador '{name}' acrescentado ao modelo")
        model = SpectatorModel(model, name)
    return model


def base_model(model: ForwardModel) -> ForwardModel:
    while isinstance(model, SpectatorModel):
        model = model.base
    return model


def build_prior(config: RunConfig, model: ForwardModel) -> GaussianPrior:
    if config.model.kind == "twobytwo":
        return GaussianPrior.identity(model.param_dim, mean=config.prior.mean)
    assembly = base_model(model).assembly
    p = config.prior
    return GaussianPrior.bilaplacian(
        assembly.stiffness,
        assembly.mass,
        gamma=p.gamma,
        delta=p.delta,
        mean=p.mean,
        mass_solver=p.mass_solver,
        cg_rel_tol=p.cg_rel_tol,
    )


def build_data(config: RunConfig, model: ForwardModel, theta: ThetaVector) -> ObservationData:
    """Dados observados: fixos (twobytwo) ou sintéticos com semente (elliptic)."""
    if config.model.kind == "twobytwo":
        return ObservationData.isotropic(config.model.u_obs, config.model.sigma)
    theta_true = theta.with_values(theta.nominal)
    if config.model.theta_true is not None:
        values = theta_true.values.copy()
        values[:2] = config.model.theta_true
        theta_true = theta_true.with_values(values)
    mesh = base_model(model).mesh
    return synthesize_data(
        model,
        true_source(mesh),
        theta_true,
        level=config.noise.level,
        seed=config.noise.seed,
    )


def build_problem(config: RunConfig) -> ProblemSetup:
    """Monta modelo, prior e dados; o posto padrão é N_obs."""
    model = build_model(config)
    theta = theta_from_config(config)
    prior = build_prior(config, model)
    data = build_data(config, model, theta)
    ip = InverseProblem(model, prior, data)
    rank = config.spectrum.rank if config.spectrum.rank is not None else model.n_obs
    rank = min(rank, model.param_dim)
    logger.info(f"Problema '{config.model.kind}': dim(m)={model.param_dim}, N_obs={model.n_obs}, r={rank}")
    return ProblemSetup(ip, theta, rank, config)
