import dataclasses
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np
from pydantic import ValidationError

from ..config import get_settings
from ..exceptions import (
    ConfigurationException,
    ExperimentException,
    SufficeException,
    ValidationException,
)
from ..models import Dataset, RepetitionResult, RunReport
from ..schemas import CsvSource, ExperimentConfig, MetricSummary
from .data_service import data_service, largest_remainder
from .inner_trainer_service import inner_trainer_service
from .mask_opt_service import default_dims, mask_opt_service
from .metrics_service import metrics_service
from .model_service import model_service

logger = logging.getLogger(__name__)

SWEEP_PARAMS = ("K", "noise_rho")
SUMMARY_METRICS = ("accuracy", "suf_gap", "dp_gap", "eo_gap", "acc_gap", "ppv_gap", "wall_clock")


class ExperimentService:
    """
    Servicio que orquesta experimentos: repeticiones con semillas derivadas,
    agregación y barridos sobre K o sobre el ruido de etiquetas.
    """

    def __init__(self) -> None:
        self.settings = get_settings()

    def load_config(self, path: Union[str, Path]) -> ExperimentConfig:
        """
        Lee y valida un documento JSON de experimento.

        Raises:
            ValidationException: Si el archivo no existe
            pydantic.ValidationError: Si el documento no cumple el esquema
        """
        path = Path(path)
        if not path.is_file():
            raise ValidationException(f"Archivo de configuración no encontrado: {path}")
        cfg = ExperimentConfig.model_validate_json(path.read_text(encoding="utf-8"))
        logger.info(f"Configuración cargada desde {path}: método {cfg.method}")
        return cfg

    def load_dataset(self, cfg: ExperimentConfig) -> Dataset:
        """Construye el conjunto de datos completo según el origen configurado"""
        source = cfg.data
        if isinstance(source, CsvSource):
            return data_service.load_csv(
                source.path, source.label_col, source.group_col, source.feature_cols
            )
        return data_service.gen_synthetic(source.config)

    def validate_config(self, cfg: ExperimentConfig) -> None:
        """
        Comprobaciones que el esquema no puede hacer por sí solo: archivos referenciados,
        dimensiones del modelo y K frente al tamaño esperado de entrenamiento.

        Raises:
            ValidationException: Si falta el CSV
            ConfigurationException: Si las dimensiones o K son incompatibles con los datos
        """
        if isinstance(cfg.data, CsvSource):
            if not cfg.data.path.is_file():
                raise ValidationException(f"Archivo CSV no encontrado: {cfg.data.path}")
            return

        synthetic = cfg.data.config
        n_features = synthetic.core_dim + 1
        if cfg.model_dims is not None and cfg.model_dims[0] != n_features:
            raise ConfigurationException(
                f"model_dims empieza en {cfg.model_dims[0]}, los datos tienen {n_features} columnas"
            )
        if cfg.method == "reweight" and not cfg.split.stratified:
            n_train = int(largest_remainder(synthetic.n, cfg.split.fractions)[0])
            if cfg.outer.K > n_train:
                raise ConfigurationException(
                    f"K={cfg.outer.K} excede el tamaño de entrenamiento esperado ({n_train})"
                )

    def run_repetition(
        self, cfg: ExperimentConfig, ds: Dataset, repetition: int
    ) -> RepetitionResult:
        """
        Ejecuta una repetición: partición, ruido en entrenamiento, entrenamiento según el
        método y evaluación sobre prueba.

        Raises:
            ExperimentException: Cualquier error del proceso, anotado con la repetición
        """
        seed = cfg.base_seed + repetition
        try:
            return self._run_repetition(cfg, ds, repetition, seed)
        except SufficeException as e:
            logger.error(f"Repetición {repetition} (semilla {seed}) fallida: {e.detail}")
            raise ExperimentException(
                f"Repetición {repetition}: {e.detail}", exit_code=e.exit_code
            ) from e

    def _run_repetition(
        self, cfg: ExperimentConfig, ds: Dataset, repetition: int, seed: int
    ) -> RepetitionResult:
        started = time.perf_counter()
        split_seed, noise_seed, init_seed, inner_seed, outer_seed = (
            int(x) for x in np.random.SeedSequence(seed).generate_state(5)
        )

        train, _, test = data_service.split(ds, cfg.split.model_copy(update={"seed": split_seed}))
        if cfg.noise_rho > 0:
            train = data_service.inject_label_noise(train, cfg.noise_rho, noise_seed)

        dims = cfg.model_dims or default_dims(train.n_features)
        if dims[0] != train.n_features:
            raise ConfigurationException(
                f"model_dims empieza en {dims[0]}, los datos tienen {train.n_features} columnas"
            )
        init = model_service.init_mlp(dims, init_seed)
        inner = cfg.inner.model_copy(update={"seed": inner_seed})

        select = None
        if cfg.method == "erm":
            report = inner_trainer_service.train_weighted_erm(
                init, train, np.ones(train.n_samples), inner
            )
        elif cfg.method == "irmv1_reg":
            report = inner_trainer_service.train_irmv1_regularized(init, train, inner, cfg.risk)
        else:
            outer = cfg.outer.model_copy(update={"seed": outer_seed})
            select = mask_opt_service.run_algorithm1(
                train, train, None, inner, outer, cfg.risk, dims
            )
            report = inner_trainer_service.train_weighted_erm(
                init, train, select.final_mask.astype(np.float64), inner
            )

        preds = model_service.predict(report.params, test.features)
        metrics = metrics_service.evaluate(
            preds, test.labels, test.groups, test.group_names, pair=cfg.group_pair
        )
        elapsed = time.perf_counter() - started
        logger.info(
            f"Repetición {repetition} ({cfg.method}): exactitud={metrics.accuracy:.4f}, "
            f"ΔSuf={metrics.suf_gap}, {elapsed:.1f}s"
        )
        return RepetitionResult(
            repetition=repetition, seed=seed, metrics=metrics, wall_clock=elapsed, select=select
        )

    def summarize(self, repetitions: Sequence[RepetitionResult]) -> Dict[str, MetricSummary]:
        """
        Media y error estándar (desviación muestral / sqrt(R), 0 con una repetición)
        de cada métrica; los valores indefinidos se omiten.
        """
        summary = {}
        for name in SUMMARY_METRICS:
            values = np.array(
                [
                    r.wall_clock if name == "wall_clock" else getattr(r.metrics, name)
                    for r in repetitions
                    if name == "wall_clock" or getattr(r.metrics, name) is not None
                ],
                dtype=np.float64,
            )
            if values.size == 0:
                summary[name] = MetricSummary()
                continue
            stderr = float(values.std(ddof=1) / np.sqrt(values.size)) if values.size > 1 else 0.0
            summary[name] = MetricSummary(mean=float(values.mean()), stderr=stderr)
        return summary

    def run_experiment(self, cfg: ExperimentConfig) -> RunReport:
        """
        Ejecuta todas las repeticiones de un experimento y agrega sus métricas.

        Las repeticiones corren en paralelo (hilos) cuando SUFFICE_THREADS lo permite;
        los resultados se ordenan por índice de repetición.

        Args:
            cfg: Configuración del experimento

        Returns:
            RunReport con las repeticiones y el resumen

        Raises:
            ExperimentException: Si falla alguna repetición
        """
        ds = self.load_dataset(cfg)
        threads = self.settings.suffice_threads
        logger.info(
            f"Experimento {cfg.method}: {cfg.repetitions} repeticiones, hilos={threads or 1}"
        )

        indices = range(cfg.repetitions)
        if threads and threads > 1 and cfg.repetitions > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(lambda r: self.run_repetition(cfg, ds, r), indices))
        else:
            results = [self.run_repetition(cfg, ds, r) for r in indices]

        results.sort(key=lambda r: r.repetition)
        return RunReport(config=cfg, repetitions=results, summary=self.summarize(results))

    def with_param(self, cfg: ExperimentConfig, param: str, value: Any) -> ExperimentConfig:
        """
        Copia validada de la configuración con K o noise_rho reemplazado.

        Raises:
            ValidationException: Si el parámetro no es barrible o el valor es inválido
        """
        if param not in SWEEP_PARAMS:
            raise ValidationException(f"Parámetro de barrido no soportado: {param}")
        document = cfg.model_dump()
        if param == "K":
            document["outer"]["K"] = value
        else:
            document["noise_rho"] = value
        try:
            return ExperimentConfig.model_validate(document)
        except ValidationError as e:
            raise ValidationException(f"Valor inválido {param}={value}: {e.errors()[0]['msg']}")

    def sweep(self, cfg: ExperimentConfig, param: str, values: Sequence[Any]) -> List[RunReport]:
        """
        Un experimento por valor del parámetro, con la misma semilla base.
        Todos los valores se validan antes de ejecutar ninguno.

        Raises:
            ValidationException: Si la lista está vacía o algún valor es inválido
            ExperimentException: Si falla algún punto del barrido
        """
        if not values:
            raise ValidationException("La lista de valores del barrido está vacía")
        configs = [(value, self.with_param(cfg, param, value)) for value in values]
        for _, point in configs:
            self.validate_config(point)

        reports = []
        for value, point in configs:
            logger.info(f"Barrido {param}={value}")
            try:
                report = self.run_experiment(point)
            except SufficeException as e:
                raise ExperimentException(
                    f"Barrido {param}={value}: {e.detail}", exit_code=e.exit_code
                ) from e
            reports.append(
                dataclasses.replace(report, sweep_param=param, sweep_value=float(value))
            )
        return reports


# Instancia del servicio
experiment_service = ExperimentService()
