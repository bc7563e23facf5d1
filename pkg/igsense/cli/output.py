"""
Emissão dos CSVs de resultado.

Todos os arquivos têm cabeçalho, ordem fixa de colunas e floats com 17
dígitos significativos, de modo que execuções iguais produzem bytes iguais.
"""

import logging
from pathlib import Path

import pandas as pd

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def write_csv(rows: list[dict] | pd.DataFrame, path: Path, columns: list[str] | None = None) -> Path:
    """
    Escreve `rows` em `path` (cria o diretório se preciso).

    Args:
        rows: lista de dicts ou DataFrame
        columns: ordem das colunas; obrigatória quando `rows` pode ser vazio
    """
    frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(rows, columns=columns)
    if columns is not None:
        frame = frame[columns]
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"Escrito {path} ({len(frame)} linhas)")
    return path
