import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from .cli.router import build_parser
from .config import get_settings
from .exceptions import SufficeException

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

logger = logging.getLogger(__name__)


def configure_logging(level: str) -> None:
    """
    Configura el logging de la aplicación una sola vez por proceso.
    """
    logging.basicConfig(level=level.upper(), format=LOG_FORMAT, force=True)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Punto de entrada de la línea de comandos.

    Returns:
        0 si todo fue bien, 1 ante errores de validación, 2 ante errores de ejecución
    """
    args = build_parser().parse_args(argv)

    try:
        settings = get_settings()
        configure_logging(args.log_level or settings.log_level)
        logger.info(f"{settings.app_name} {settings.app_version}: comando '{args.command}'")
        return int(args.handler(args))
    except ValidationError as e:
        # Esquema de la configuración JSON o variables de entorno inválidas
        logger.error(f"Configuración inválida: {e}")
        return 1
    except SufficeException as e:
        logger.error(f"{type(e).__name__}: {e.detail}")
        return e.exit_code
    except Exception as e:
        logger.exception(f"Excepción no manejada: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
