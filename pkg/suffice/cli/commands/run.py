import argparse
import logging
from pathlib import Path

from ...services.experiment_service import experiment_service
from ...services.results_service import results_service

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("run", help="Ejecuta un experimento completo")
    parser.add_argument("--config", required=True, type=Path, help="Documento JSON del experimento")
    parser.add_argument(
        "--output-dir", type=Path, default=None, help="Sobrescribe output_dir de la configuración"
    )
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    """
    Ejecuta el experimento descrito en --config y escribe sus resultados.

    Returns:
        Código de salida (0 si todo fue bien)
    """
    cfg = experiment_service.load_config(args.config)
    experiment_service.validate_config(cfg)
    report = experiment_service.run_experiment(cfg)
    output_dir = args.output_dir or cfg.output_dir
    results_service.emit_results(report, output_dir)

    suf = report.summary["suf_gap"]
    acc = report.summary["accuracy"]
    logger.info(
        f"{report.method}: exactitud {acc.mean:.4f} ± {acc.stderr:.4f}, "
        f"ΔSuf {suf.mean} ± {suf.stderr}"
    )
    return 0
