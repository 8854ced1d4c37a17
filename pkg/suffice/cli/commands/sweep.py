import argparse
import logging
from pathlib import Path
from typing import List

from ...exceptions import ValidationException
from ...services.experiment_service import SWEEP_PARAMS, experiment_service
from ...services.results_service import results_service

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("sweep", help="Barrido sobre K o noise_rho")
    parser.add_argument("--config", required=True, type=Path, help="Documento JSON del experimento")
    parser.add_argument("--param", required=True, choices=SWEEP_PARAMS, help="Parámetro a barrer")
    parser.add_argument(
        "--values", required=True, help="Valores separados por comas, p. ej. 50,100,200"
    )
    parser.add_argument(
        "--output-dir", type=Path, default=None, help="Sobrescribe output_dir de la configuración"
    )
    parser.set_defaults(handler=handle)


def parse_values(raw: str, param: str) -> List[float]:
    """
    Convierte la lista separada por comas en números (enteros para K).

    Raises:
        ValidationException: Si algún valor no es numérico
    """
    values: List[float] = []
    for token in (t.strip() for t in raw.split(",")):
        if not token:
            continue
        try:
            number = float(token)
        except ValueError:
            raise ValidationException(f"Valor no numérico en --values: '{token}'")
        values.append(int(number) if param == "K" and number.is_integer() else number)
    return values


def handle(args: argparse.Namespace) -> int:
    """
    Ejecuta un experimento por valor y escribe los resultados combinados y el gráfico.
    """
    cfg = experiment_service.load_config(args.config)
    experiment_service.validate_config(cfg)
    values = parse_values(args.values, args.param)
    reports = experiment_service.sweep(cfg, args.param, values)
    results_service.emit_results(reports, args.output_dir or cfg.output_dir)
    logger.info(f"Barrido {args.param} completado: {len(reports)} puntos")
    return 0
