import argparse

from ..config import get_settings
from .commands import run, sweep, validate


def build_parser() -> argparse.ArgumentParser:
    """
    Construye el parser principal con un subcomando por operación.
    """
    settings = get_settings()
    parser = argparse.ArgumentParser(
        prog="suffice",
        description="Reponderación de muestras para la regla de suficiencia",
    )
    parser.add_argument(
        "--version", action="version", version=f"{settings.app_name} {settings.app_version}"
    )
    parser.add_argument(
        "--log-level",
        default=None,
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Nivel de logging (por defecto, LOG_LEVEL o INFO)",
    )

    # Incluir todos los subcomandos
    subparsers = parser.add_subparsers(dest="command", required=True)
    run.register(subparsers)
    sweep.register(subparsers)
    validate.register(subparsers)
    return parser
