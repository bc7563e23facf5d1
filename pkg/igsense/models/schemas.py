"""
Schemas Pydantic da configuração de execução.

RunConfig é lido de um arquivo TOML (ver docs/config.md). Toda seção
rejeita chaves desconhecidas e a validação acontece antes de qualquer solve.
"""

import tomllib
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from igsense.core.exceptions import ConfigurationError

ELLIPTIC_THETA = {
    "names": ["c", "g"],
    "nominal": [1.0, 0.1],
    "box": [(0.5, 2.0), (0.0, 1.0)],
}
TWOBYTWO_THETA = {
    "names": ["theta1", "theta2"],
    "nominal": [0.5, 0.5],
    "box": [(0.0, 1.0), (0.0, 1.0)],
}


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(_Section):
    """Seção [model]."""

    kind: Literal["twobytwo", "elliptic"] = Field(default="elliptic", description="Modelo direto")
    mesh_n: int = Field(default=32, ge=2, description="Células por lado da malha (elliptic)")
    obs_points: list[tuple[float, float]] | None = Field(
        default=None, description="Pontos de observação; padrão {0.25, 0.5, 0.75}²"
    )
    sigma: float = Field(default=0.1, gt=0.0, description="Desvio padrão do ruído (twobytwo)")
    u_obs: list[float] = Field(default=[0.15, 0.05], description="Observações (twobytwo)")
    theta_true: list[float] | None = Field(
        default=None, description="θ usado para gerar os dados sintéticos (elliptic); padrão = nominal"
    )


class NoiseSection(_Section):
    """Seção [noise]."""

    seed: int = Field(default=0, ge=0)
    rule: Literal["rel_inf"] = Field(default="rel_inf", description="σ = level·‖u‖_∞")
    level: float = Field(default=0.01, gt=0.0)


class PriorSection(_Section):
    """Seção [prior]."""

    mean: float = 0.0
    delta: float = Field(default=1.0, gt=0.0)
    gamma: float = Field(default=1.0, gt=0.0)
    mass_solver: Literal["cg", "lumped"] = "cg"
    cg_rel_tol: float = Field(default=1e-12, gt=0.0, lt=1.0)


class ThetaSection(_Section):
    """Seção [theta]; campos ausentes recebem os padrões do modelo."""

    names: list[str] | None = None
    nominal: list[float] | None = None
    box: list[tuple[float, float]] | None = None
    alpha: float = Field(default=0.05, ge=0.0, description="Nível de incerteza relativa")
    values: list[float] | None = Field(default=None, description="Ponto de avaliação; padrão = nominal")


class SpectrumSection(_Section):
    """Seção [spectrum]."""

    rank: int | None = Field(default=None, ge=0, description="Posto r; padrão = N_obs")
    oversample: int = Field(default=10, ge=0)
    seed: int = Field(default=0, ge=0)
    strict: bool = Field(default=False, description="Espectro truncado pelo piso vira RankDeficientError")


class SweepSection(_Section):
    """Seção [sweep]: grade regular em até 2 parâmetros."""

    params: list[str] = Field(default_factory=list, max_length=2)
    lo: list[float] = Field(default_factory=list)
    hi: list[float] = Field(default_factory=list)
    num: list[int] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_lengths(self):
        n = len(self.params)
        if not (len(self.lo) == len(self.hi) == len(self.num) == n):
            raise ValueError("sweep: params, lo, hi e num devem ter o mesmo comprimento")
        if any(k < 1 for k in self.num):
            raise ValueError("sweep: num deve ser ≥ 1")
        if any(a > b for a, b in zip(self.lo, self.hi)):
            raise ValueError("sweep: lo > hi")
        return self


class GsaSection(_Section):
    """Seção [gsa]."""

    n_samples: int = Field(default=500, ge=2)
    seed: int = Field(default=0, ge=0)
    alpha: float | None = Field(default=None, ge=0.0, description="Padrão = theta.alpha")
    tolerate_failures: bool = False
    batches: int = Field(default=10, ge=2)


class VerifySection(_Section):
    """Seção [verify]."""

    mesh_sizes: list[int] = Field(default=[8, 16])
    fd_h: list[float] = Field(default=[1e-2, 1e-3, 1e-4])


class OutputSection(_Section):
    """Seção [output]."""

    directory: str | None = None
    relative: bool = Field(default=False, description="Gradientes em coordenadas relativas")


class RunConfig(_Section):
    """Configuração completa de uma execução."""

    model: ModelSection = Field(default_factory=ModelSection)
    noise: NoiseSection = Field(default_factory=NoiseSection)
    prior: PriorSection = Field(default_factory=PriorSection)
    theta: ThetaSection = Field(default_factory=ThetaSection)
    spectrum: SpectrumSection = Field(default_factory=SpectrumSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    gsa: GsaSection = Field(default_factory=GsaSection)
    verify: VerifySection = Field(default_factory=VerifySection)
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def _resolve_theta(self):
        defaults = ELLIPTIC_THETA if self.model.kind == "elliptic" else TWOBYTWO_THETA
        theta = self.theta
        if theta.names is None:
            theta.names = list(defaults["names"])
        if theta.nominal is None:
            theta.nominal = list(defaults["nominal"])
        if theta.box is None:
            theta.box = list(defaults["box"])
        if theta.values is None:
            theta.values = list(theta.nominal)

        n = len(theta.names)
        if len(set(theta.names)) != n:
            raise ValueError("theta.names com nomes repetidos")
        if not (len(theta.nominal) == len(theta.box) == len(theta.values) == n):
            raise ValueError("theta: names, nominal, box e values devem ter o mesmo comprimento")
        if list(theta.names[: len(defaults["names"])]) != defaults["names"]:
            raise ValueError(f"theta.names deve começar por {defaults['names']} para o modelo {self.model.kind}")
        if any(lo > hi for lo, hi in theta.box):
            raise ValueError("theta.box com limite inferior maior que o superior")

        if self.model.kind == "elliptic":
            c_values = [theta.nominal[0], theta.values[0], theta.box[0][0]]
            if self.model.theta_true is not None:
                if len(self.model.theta_true) != 2:
                    raise ValueError("model.theta_true deve ter 2 entradas (c, g)")
                c_values.append(self.model.theta_true[0])
            if min(c_values) <= 0.0:
                raise ValueError("O coeficiente de reação c deve ser positivo")
        elif len(self.model.u_obs) != 2:
            raise ValueError("model.u_obs deve ter 2 entradas no modelo twobytwo")

        unknown = [p for p in self.sweep.params if p not in theta.names]
        if unknown:
            raise ValueError(f"sweep.params fora de theta.names: {unknown}")
        for name, lo, hi in zip(self.sweep.params, self.sweep.lo, self.sweep.hi):
            box_lo, box_hi = theta.box[theta.names.index(name)]
            if self.model.kind == "elliptic" and name == "c" and lo <= 0.0:
                raise ValueError("O coeficiente de reação c deve ser positivo em todo o sweep")
            if lo < box_lo or hi > box_hi:
                raise ValueError(f"sweep.{name}: [{lo}, {hi}] fora de theta.box [{box_lo}, {box_hi}]")

        # ϑ = (1 + αt)·ϑ̄ com t ∈ [−1, 1]
        if self.model.kind == "elliptic" and (1.0 - self.gsa_alpha) * theta.nominal[0] <= 0.0:
            raise ValueError(f"α = {self.gsa_alpha} leva c a (1 − α)·c̄ ≤ 0")
        return self

    @property
    def gsa_alpha(self) -> float:
        return self.theta.alpha if self.gsa.alpha is None else self.gsa.alpha

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "RunConfig":
        try:
            return cls.model_validate(raw)
        except ValidationError as e:
            raise ConfigurationError(f"Configuração inválida: {e.error_count()} erro(s)", errors=_errors(e))

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        """
        Lê e valida um arquivo TOML.

        Raises:
            ConfigurationError: arquivo ausente, TOML malformado ou schema inválido
        """
        path = Path(path)
        try:
            with path.open("rb") as fh:
                raw = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigurationError(f"Arquivo de configuração não encontrado: {path}", path=str(path))
        except tomllib.TOMLDecodeError as e:
            raise ConfigurationError(f"TOML inválido em {path}: {e}", path=str(path))
        return cls.from_dict(raw)

    def with_overrides(self, seed: int | None = None, rank: int | None = None, out: str | None = None) -> "RunConfig":
        """Aplica as flags da CLI (--seed, --rank, --out)."""
        raw = self.model_dump()
        if seed is not None:
            for section in ("noise", "spectrum", "gsa"):
                raw[section]["seed"] = seed
        if rank is not None:
            raw["spectrum"]["rank"] = rank
        if out is not None:
            raw["output"]["directory"] = out
        return RunConfig.from_dict(raw)


def _errors(e: ValidationError) -> list[dict[str, str]]:
    return [
        {"loc": ".".join(str(part) for part in err["loc"]), "msg": err["msg"]}
        for err in e.errors()
    ]


class ErrorLine(BaseModel):
    """Linha de erro legível por máquina escrita em stderr pela CLI."""

    error: str = Field(..., description="Tipo do erro em snake_case", examples=["configuration_error"])
    message: str = Field(..., description="Mensagem legível")
    details: dict[str, Any] = Field(default_factory=dict)
