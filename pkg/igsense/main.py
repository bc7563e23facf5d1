"""
igsense - Ponto de entrada da linha de comando.

Uso:
    igsense <solve|sensitivity|sweep|gsa|verify> --config run.toml [--out DIR]
            [--seed N] [--rank N] [--threads N] [--debug]

Códigos de saída: 0 sucesso, 2 erro de configuração, 3 falha numérica
(inclui verificações reprovadas em `verify`).
"""

import argparse
import json
import logging
import sys

from igsense.cli.commands import COMMANDS
from igsense.core.config import settings
from igsense.core.exceptions import ConfigurationError, IgSenseError, NumericalError
from igsense.models.schemas import ErrorLine, RunConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


# ==========================================
# Configuração de Logging
# ==========================================
def configure_logging(debug: bool = False) -> None:
    """Logs vão para stderr; stdout fica livre."""
    level = logging.DEBUG if (debug or settings.debug) else getattr(logging, settings.log_level)
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        stream=sys.stderr,
    )
    logging.getLogger().setLevel(level)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="igsense",
        description="Ganho de informação em problemas inversos lineares-gaussianos e sua sensibilidade a parâmetros auxiliares.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        cmd = sub.add_parser(name, help=(fn.__doc__ or "").strip().splitlines()[0])
        cmd.add_argument("--config", required=True, help="Arquivo TOML da execução")
        cmd.add_argument("--out", default=None, help="Diretório de saída dos CSVs")
        cmd.add_argument("--seed", type=int, default=None, help="Sobrescreve noise.seed, spectrum.seed e gsa.seed")
        cmd.add_argument("--rank", type=int, default=None, help="Sobrescreve spectrum.rank")
        cmd.add_argument("--threads", type=int, default=None, help="Número de workers (padrão IGSENSE_THREADS)")
        cmd.add_argument("--debug", action="store_true", help="Logs em nível DEBUG")
    return parser


def emit_error(error: IgSenseError) -> None:
    """Escreve a linha de erro JSON em stderr."""
    line = ErrorLine(error=error.kind, message=error.message, details=error.details)
    print(json.dumps(line.model_dump(), default=str), file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    """
    Executa um subcomando e devolve o código de saída.

    Args:
        argv: argumentos sem o nome do programa; padrão sys.argv[1:]
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG
    configure_logging(args.debug)

    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigurationError(f"--threads deve ser ≥ 1, recebeu {args.threads}", threads=args.threads)
        config = RunConfig.load(args.config).with_overrides(seed=args.seed, rank=args.rank, out=args.out)
        result = COMMANDS[args.command](config, threads=args.threads)
    except IgSenseError as e:
        logger.error(f"❌ {e.kind}: {e.message}")
        emit_error(e)
        return e.exit_code
    except Exception as e:
        logger.exception(f"❌ Erro inesperado em '{args.command}': {e}")
        emit_error(NumericalError(str(e), exception=type(e).__name__))
        return EXIT_NUMERICAL

    for path in result.files:
        logger.info(f"   → {path}")
    return EXIT_OK if result.passed else EXIT_NUMERICAL


def run() -> None:
    """Entry point do console script `igsense`."""
    sys.exit(main())


if __name__ == "__main__":
    run()
