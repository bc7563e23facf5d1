"""Models module - schemas Pydantic da configuração e da linha de erro."""

from .schemas import ErrorLine, RunConfig

__all__ = ["ErrorLine", "RunConfig"]
