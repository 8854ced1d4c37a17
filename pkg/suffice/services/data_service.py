import dataclasses
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from ..exceptions import SchemaException, ValidationException
from ..models import Dataset
from ..schemas import SplitSpec, SyntheticConfig

logger = logging.getLogger(__name__)

PART_NAMES = ("train", "val", "test")


def largest_remainder(total: int, fractions: Sequence[float]) -> np.ndarray:
    """
    Reparte `total` unidades según `fractions` con el método del mayor resto.
    Los empates en el resto favorecen al índice menor.
    """
    raw = total * np.asarray(fractions, dtype=np.float64)
    sizes = np.floor(raw).astype(np.int64)
    missing = int(total - sizes.sum())
    order = np.argsort(-(raw - sizes), kind="stable")
    sizes[order[:missing]] += 1
    return sizes


class DataService:
    """
    Servicio para construir, perturbar y particionar conjuntos de datos.

    Cada operación estocástica crea su propio generador `np.random.default_rng(seed)`;
    no se comparte estado aleatorio entre operaciones.
    """

    def load_csv(
        self,
        path: Union[str, Path],
        label_col: str,
        group_col: str,
        feature_cols: Optional[List[str]] = None,
    ) -> Dataset:
        """
        Carga un CSV tabular y lo convierte en un Dataset.

        Las columnas categóricas se codifican one-hot en orden de primera aparición
        y las continuas se normalizan (z-score) con las estadísticas del propio archivo.

        Args:
            path: Ruta del archivo CSV (UTF-8, con encabezado)
            label_col: Columna de la etiqueta binaria
            group_col: Columna del atributo sensible
            feature_cols: Columnas de características a usar (por defecto, todas las demás)

        Returns:
            Dataset con grupos asignados por orden de valor distinto

        Raises:
            SchemaException: Si falta alguna columna
            ValidationException: Si una etiqueta no es binaria o una celda no es interpretable
        """
        path = Path(path)
        try:
            frame = pd.read_csv(
                path, dtype=str, keep_default_na=False, skipinitialspace=True, encoding="utf-8"
            )
        except FileNotFoundError:
            logger.error(f"Archivo CSV no encontrado: {path}")
            raise ValidationException(f"Archivo CSV no encontrado: {path}")
        except pd.errors.EmptyDataError:
            raise ValidationException(f"El archivo CSV está vacío: {path}")

        frame.columns = [str(c).strip() for c in frame.columns]
        for column in frame.columns:
            frame[column] = frame[column].str.strip()

        if feature_cols is None:
            feature_cols = [c for c in frame.columns if c not in (label_col, group_col)]
        for column in [label_col, group_col, *feature_cols]:
            if column not in frame.columns:
                logger.error(f"Columna '{column}' ausente en {path}")
                raise SchemaException(f"Columna '{column}' no encontrada en {path}")
        if frame.empty:
            raise ValidationException(f"El archivo CSV no tiene filas: {path}")

        labels = pd.to_numeric(frame[label_col], errors="coerce").to_numpy()
        bad_labels = np.flatnonzero(~np.isin(labels, (0.0, 1.0)))
        if bad_labels.size:
            row = int(bad_labels[0])
            raise ValidationException(
                f"Etiqueta no binaria '{frame[label_col].iloc[row]}' en la fila {row}"
            )

        group_values, groups = np.unique(frame[group_col].to_numpy(dtype=str), return_inverse=True)

        blocks: List[np.ndarray] = []
        names: List[str] = []
        for column in feature_cols:
            block, block_names = self._encode_column(frame[column], column)
            blocks.append(block)
            names.extend(block_names)
        features = np.column_stack(blocks) if blocks else np.empty((len(frame), 0))

        dataset = Dataset(
            features=features,
            labels=labels.astype(np.int64),
            groups=groups,
            feature_names=tuple(names),
            group_names=tuple(str(v) for v in group_values),
        )
        logger.info(f"CSV cargado desde {path}: {dataset}")
        return dataset

    def _encode_column(self, series: pd.Series, column: str) -> Tuple[np.ndarray, List[str]]:
        numeric = pd.to_numeric(series, errors="coerce").to_numpy(dtype=np.float64)
        if not np.isfinite(numeric[0]):
            categories = list(pd.unique(series))
            if "" in categories:
                row = int(np.flatnonzero(series.to_numpy() == "")[0])
                raise ValidationException(f"Celda vacía en la fila {row}, columna '{column}'")
            values = series.to_numpy()
            block = np.column_stack([(values == c).astype(np.float64) for c in categories])
            return block, [f"{column}={c}" for c in categories]

        bad = np.flatnonzero(~np.isfinite(numeric))
        if bad.size:
            row = int(bad[0])
            raise ValidationException(
                f"Celda no interpretable '{series.iloc[row]}' en la fila {row}, columna '{column}'"
            )
        centered = numeric - numeric.mean()
        std = numeric.std()
        if std > 0:
            centered = centered / std
        return centered[:, None], [column]

    def gen_synthetic(self, cfg: Union[SyntheticConfig, dict]) -> Dataset:
        """
        Genera un conjunto sintético con una característica espuria cuyo signo
        respecto a la etiqueta se invierte entre grupos.

        Args:
            cfg: Configuración del generador

        Returns:
            Dataset con `core_dim` características núcleo seguidas de la espuria

        Raises:
            ValidationException: Si la configuración es inválida
        """
        if not isinstance(cfg, SyntheticConfig):
            try:
                cfg = SyntheticConfig.model_validate(cfg)
            except ValidationError as e:
                raise ValidationException(f"Configuración sintética inválida: {e}")

        rng = np.random.default_rng(cfg.seed)
        n = cfg.n
        groups = (rng.random(n) < cfg.pi).astype(np.int64)
        labels = (rng.random(n) < np.asarray(cfg.base_rates)[groups]).astype(np.int64)
        signed = 2.0 * labels - 1.0
        core = rng.normal(
            loc=(signed * cfg.core_sep)[:, None], scale=cfg.core_noise, size=(n, cfg.core_dim)
        )
        group_sign = np.where(groups == 0, 1.0, -1.0)
        spurious = rng.normal(
            loc=group_sign * signed * cfg.spurious_strength, scale=cfg.spurious_noise
        )

        names = tuple(f"core_{j}" for j in range(cfg.core_dim)) + ("spurious",)
        dataset = Dataset(
            features=np.column_stack([core, spurious]),
            labels=labels,
            groups=groups,
            feature_names=names,
            group_names=("g0", "g1"),
        )
        logger.debug(f"Conjunto sintético generado: {dataset}")
        return dataset

    def inject_label_noise(self, ds: Dataset, rho: float, seed: int) -> Dataset:
        """
        Invierte cada etiqueta de forma independiente con probabilidad rho (ruido simétrico).

        Raises:
            ValidationException: Si rho está fuera de [0, 1]
        """
        if not 0.0 <= rho <= 1.0:
            raise ValidationException(f"rho debe estar en [0, 1], se recibió {rho}")
        rng = np.random.default_rng(seed)
        flips = rng.random(ds.n_samples) < rho
        logger.debug(f"Ruido de etiquetas rho={rho}: {int(flips.sum())} etiquetas invertidas")
        return dataclasses.replace(ds, labels=np.where(flips, 1 - ds.labels, ds.labels))

    def split_indices(
        self, ds: Dataset, spec: SplitSpec
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Calcula los índices (ordenados) de entrenamiento, validación y prueba.

        Raises:
            ValidationException: Si un estrato está vacío bajo estratificación
        """
        rng = np.random.default_rng(spec.seed)
        parts: List[List[np.ndarray]] = [[], [], []]

        if spec.stratified:
            for g in range(ds.n_groups):
                for y in (0, 1):
                    members = np.flatnonzero((ds.groups == g) & (ds.labels == y))
                    if members.size == 0:
                        raise ValidationException(
                            f"Estrato vacío: grupo '{ds.group_names[g]}', etiqueta {y}"
                        )
                    self._deal(rng.permutation(members), spec.fractions, parts)
        else:
            self._deal(rng.permutation(ds.n_samples), spec.fractions, parts)

        return tuple(np.sort(np.concatenate(p)) for p in parts)  # type: ignore[return-value]

    @staticmethod
    def _deal(perm: np.ndarray, fractions: Sequence[float], parts: List[List[np.ndarray]]) -> None:
        sizes = largest_remainder(perm.size, fractions)
        bounds = np.concatenate([[0], np.cumsum(sizes)])
        for k in range(3):
            parts[k].append(perm[bounds[k] : bounds[k + 1]])

    def split(self, ds: Dataset, spec: SplitSpec) -> Tuple[Dataset, Dataset, Dataset]:
        """
        Divide el conjunto en entrenamiento, validación y prueba.

        Args:
            ds: Conjunto de datos
            spec: Fracciones, estratificación y semilla

        Returns:
            Tupla (train, val, test)

        Raises:
            ValidationException: Si un estrato está vacío o una parte pierde un grupo
        """
        result = []
        for name, idx in zip(PART_NAMES, self.split_indices(ds, spec)):
            try:
                result.append(ds.subset(idx))
            except ValidationException as e:
                raise ValidationException(f"Partición '{name}' inválida: {e.detail}")
        return result[0], result[1], result[2]

    def partition_by_group(self, ds: Dataset) -> Dict[int, np.ndarray]:
        """
        Índices ascendentes de cada grupo sensible.
        """
        return {g: np.flatnonzero(ds.groups == g) for g in range(ds.n_groups)}


# Instancia del servicio
data_service = DataService()
