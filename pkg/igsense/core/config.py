"""
Configurações do processo usando Pydantic Settings.

Todas as configurações podem ser definidas via variáveis de ambiente
(prefixo IGSENSE_) ou arquivo .env na raiz do projeto. A configuração
de cada execução (modelo, prior, θ, etc.) fica no arquivo TOML descrito
em docs/config.md e é validada por `igsense.models.schemas.RunConfig`.
"""

from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Configurações centralizadas do processo.

    Carrega valores de variáveis de ambiente ou arquivo .env.
    Valores padrão são pensados para execução determinística em notebook comum.
    """

    model_config = SettingsConfigDict(
        env_prefix="IGSENSE_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # ==========================================
    # Paralelismo
    # ==========================================
    threads: int = Field(default=1, ge=1)
    """Número máximo de workers para sweeps e amostras de GSA (IGSENSE_THREADS)."""

    # ==========================================
    # Logging
    # ==========================================
    debug: bool = False
    """Modo debug - ativa logs detalhados (contagem de solves, cache de fatorações)."""

    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"
    """Nível de log quando debug=False."""

    # ==========================================
    # Saída
    # ==========================================
    output_dir: str = "./results"
    """Diretório padrão para os CSVs quando nem --out nem [output] forem informados."""


# Instância global de configurações (singleton)
settings = Settings()
