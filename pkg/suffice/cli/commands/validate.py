import argparse
import logging
from pathlib import Path

from ...services.experiment_service import experiment_service

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("validate", help="Valida una configuración sin ejecutarla")
    parser.add_argument("--config", required=True, type=Path, help="Documento JSON del experimento")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    """
    Valida el esquema y las comprobaciones sobre los datos referenciados.
    """
    cfg = experiment_service.load_config(args.config)
    experiment_service.validate_config(cfg)
    logger.info(f"Configuración válida: {args.config}")
    return 0
