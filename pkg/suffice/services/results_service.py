import logging
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import matplotlib
import numpy as np
import pandas as pd
from matplotlib.figure import Figure

from ..config import get_settings
from ..exceptions import ResultsIOException, ValidationException
from ..models import RunReport
from .experiment_service import SUMMARY_METRICS

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ["accuracy", "suf_gap", "dp_gap", "eo_gap", "wall_clock", "acc_gap", "ppv_gap"]
HISTOGRAM_BINS = 10
# Fracciones que deben sumar 1 al releerlas: se escriben con la representación exacta
FULL_PRECISION_COLUMNS = ("weight_fraction",)


class ResultsService:
    """
    Servicio para escribir los resultados de experimentos en CSV y SVG.
    """

    def __init__(self) -> None:
        self.settings = get_settings()

    def _keys(self, report: RunReport) -> Dict[str, Any]:
        keys: Dict[str, Any] = {"method": report.method}
        if report.sweep_param is not None:
            keys["value"] = report.sweep_value
        return keys

    def metric_rows(self, report: RunReport) -> List[Dict[str, Any]]:
        """Una fila por repetición; wall_clock vacío salvo con record_timing"""
        rows = []
        for rep in report.repetitions:
            row = {**self._keys(report), "seed": rep.seed}
            for column in METRIC_COLUMNS:
                if column == "wall_clock":
                    row[column] = rep.wall_clock if self.settings.record_timing else None
                else:
                    row[column] = getattr(rep.metrics, column)
            rows.append(row)
        return rows

    def summary_rows(self, report: RunReport) -> List[Dict[str, Any]]:
        """Media y error estándar de cada métrica del reporte"""
        rows = []
        for name in SUMMARY_METRICS:
            if name == "wall_clock" and not self.settings.record_timing:
                continue
            stats = report.summary.get(name)
            rows.append(
                {
                    **self._keys(report),
                    "metric": name,
                    "mean": stats.mean if stats else None,
                    "stderr": stats.stderr if stats else None,
                }
            )
        return rows

    def history_rows(self, report: RunReport) -> Dict[str, List[Dict[str, Any]]]:
        """Filas de polarización, pesos por grupo e histogramas de s (solo reponderación)"""
        polarization: List[Dict[str, Any]] = []
        weights: List[Dict[str, Any]] = []
        histogram: List[Dict[str, Any]] = []
        edges = np.linspace(0.0, 1.0, HISTOGRAM_BINS + 1)
        for rep in report.repetitions:
            select = rep.select
            if select is None:
                continue
            keys = {**self._keys(report), "repetition": rep.repetition}
            for t, fraction in enumerate(select.polarization_history):
                polarization.append({**keys, "iteration": t + 1, "fraction": fraction})
            for t, table in enumerate(select.group_weight_history):
                for g, group in enumerate(select.group_names):
                    for label in (0, 1):
                        weights.append(
                            {
                                **keys,
                                "iteration": t + 1,
                                "group": group,
                                "label": label,
                                "weight_fraction": table[g, label],
                            }
                        )
            for t, s in select.s_history:
                counts, _ = np.histogram(s, bins=edges)
                for b, count in enumerate(counts):
                    histogram.append(
                        {
                            **keys,
                            "iteration": t + 1,
                            "bin_lo": edges[b],
                            "bin_hi": edges[b + 1],
                            "count": int(count),
                        }
                    )
        return {
            "s_polarization.csv": polarization,
            "group_weights.csv": weights,
            "s_histogram.csv": histogram,
        }

    def _write_csv(self, rows: List[Dict[str, Any]], path: Path) -> None:
        frame = pd.DataFrame(rows)
        for column in FULL_PRECISION_COLUMNS:
            if column in frame:
                frame[column] = frame[column].map(lambda v: repr(float(v)))
        frame.to_csv(
            path,
            index=False,
            float_format=f"%.{self.settings.csv_precision}f",
            lineterminator="\n",
            na_rep="",
            encoding="utf-8",
        )

    def plot_sweep(self, reports: Sequence[RunReport], path: Path) -> None:
        """
        Gráfico SVG del barrido: media ± error estándar de ΔSuf y exactitud frente al valor.
        """
        reports = sorted(reports, key=lambda r: r.sweep_value or 0.0)
        x = np.array([r.sweep_value for r in reports], dtype=np.float64)
        matplotlib.rcParams["svg.hashsalt"] = self.settings.svg_hashsalt
        fig = Figure(figsize=(9, 3.5))
        axes = fig.subplots(1, 2)
        for ax, metric, title in zip(axes, ("suf_gap", "accuracy"), ("ΔSuf", "Exactitud")):
            mean = np.array([r.summary[metric].mean for r in reports], dtype=np.float64)
            err = np.array([r.summary[metric].stderr for r in reports], dtype=np.float64)
            ax.plot(x, mean, marker="o", label=reports[0].method)
            ax.fill_between(x, mean - err, mean + err, alpha=0.25)
            ax.set_xlabel(reports[0].sweep_param or "")
            ax.set_title(title)
            ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})

    def emit_results(
        self, reports: Union[RunReport, Sequence[RunReport]], output_dir: Union[str, Path]
    ) -> List[Path]:
        """
        Escribe metrics.csv, summary.csv, los historiales de reponderación y,
        para barridos, sweep_<param>.svg.

        Args:
            reports: Uno o varios reportes (varios = barrido)
            output_dir: Directorio de salida (se crea si no existe)

        Returns:
            Rutas escritas, en orden

        Raises:
            ValidationException: Si no hay reportes
            ResultsIOException: Si el directorio no se puede escribir
        """
        if isinstance(reports, RunReport):
            reports = [reports]
        reports = list(reports)
        if not reports:
            raise ValidationException("No hay reportes que escribir")
        reports.sort(key=lambda r: (r.sweep_value is None, r.sweep_value or 0.0))

        output_dir = Path(output_dir)
        tables: Dict[str, List[Dict[str, Any]]] = {"metrics.csv": [], "summary.csv": []}
        for report in reports:
            tables["metrics.csv"].extend(self.metric_rows(report))
            tables["summary.csv"].extend(self.summary_rows(report))
            for name, rows in self.history_rows(report).items():
                tables.setdefault(name, []).extend(rows)

        written: List[Path] = []
        try:
            output_dir.mkdir(parents=True, exist_ok=True)
            for name, rows in tables.items():
                if not rows:
                    continue
                path = output_dir / name
                self._write_csv(rows, path)
                written.append(path)
            sweep_param = reports[0].sweep_param
            if sweep_param is not None:
                path = output_dir / f"sweep_{sweep_param}.svg"
                self.plot_sweep(reports, path)
                written.append(path)
        except OSError as e:
            logger.error(f"No se pudo escribir en {output_dir}: {e}")
            raise ResultsIOException(f"No se pudo escribir en {output_dir}: {e}")

        logger.info(f"Resultados escritos en {output_dir}: {[p.name for p in written]}")
        return written


# Instancia del servicio
results_service = ResultsService()
