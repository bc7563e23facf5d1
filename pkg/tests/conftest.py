"""
Configurações e fixtures para testes pytest.

Os problemas de teste são pequenos (2×2 e malha elíptica 8×8) para que a
suíte rode em segundos; verificações em malhas maiores usam o marcador `slow`.
"""

import textwrap

import numpy as np
import pytest

from igsense.models.schemas import RunConfig
from igsense.services.bayes import InverseProblem
from igsense.services.elliptic import build_elliptic
from igsense.services.factory import build_problem
from igsense.services.prior import GaussianPrior
from igsense.services.twobytwo import TwoByTwoModel, TwoByTwoSetup


@pytest.fixture
def twobytwo_setup():
    """Problema 2×2 com u_obs = (0.15, 0.05), σ = 0.1 e θ = (0, 0)."""
    return TwoByTwoSetup()


@pytest.fixture
def twobytwo_problem(twobytwo_setup):
    """InverseProblem do 2×2 com prior N(0, I)."""
    return InverseProblem(TwoByTwoModel(), GaussianPrior.identity(2), twobytwo_setup.data)


@pytest.fixture
def twobytwo_theta(twobytwo_setup):
    """θ = (0.3, 0.6), ponto interior genérico."""
    return twobytwo_setup.with_theta([0.3, 0.6]).theta_vector()


@pytest.fixture
def elliptic_model():
    """Modelo elíptico na malha 8×8."""
    return build_elliptic(8)


@pytest.fixture
def elliptic_setup():
    """ProblemSetup elíptico n = 8 com dados sintéticos de semente 0."""
    return build_problem(RunConfig.from_dict({"model": {"kind": "elliptic", "mesh_n": 8}}))


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(key=1234))


@pytest.fixture
def write_config(tmp_path):
    """
    Fábrica de arquivos TOML em tmp_path.

    Uso: write_config('''[model]\\nkind = "twobytwo"''') → Path
    """

    def _write(body: str, name: str = "run.toml"):
        path = tmp_path / name
        path.write_text(textwrap.dedent(body), encoding="utf-8")
        return path

    return _write
