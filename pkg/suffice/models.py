from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np

from .exceptions import ValidationException
from .schemas import ExperimentConfig, MetricReport, MetricSummary

Activation = Literal["relu", "identity"]


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Conjunto de datos tabular: características, etiquetas binarias y grupos sensibles.
    Los arreglos quedan de solo lectura tras la construcción.
    """

    features: np.ndarray
    labels: np.ndarray
    groups: np.ndarray
    feature_names: Tuple[str, ...]
    group_names: Tuple[str, ...]

    def __post_init__(self) -> None:
        features = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        groups = np.array(self.groups, dtype=np.int64)

        if features.ndim != 2:
            raise ValidationException(
                f"Las características deben ser una matriz, ndim={features.ndim}"
            )
        n = features.shape[0]
        if n < 1:
            raise ValidationException("El conjunto de datos está vacío")
        if labels.shape != (n,) or groups.shape != (n,):
            raise ValidationException(
                f"Longitudes inconsistentes: features={n}, "
                f"labels={labels.shape}, groups={groups.shape}"
            )
        if len(self.feature_names) != features.shape[1]:
            raise ValidationException(
                f"Se esperaban {features.shape[1]} nombres de características, "
                f"hay {len(self.feature_names)}"
            )
        if not np.all(np.isfinite(features)):
            raise ValidationException("Las características contienen valores no finitos")
        if not np.all((labels == 0) | (labels == 1)):
            raise ValidationException("Todas las etiquetas deben ser 0 o 1")

        n_groups = len(self.group_names)
        if n_groups < 1 or groups.min() < 0 or groups.max() >= n_groups:
            raise ValidationException(f"Identificadores de grupo fuera de [0, {n_groups})")
        present = np.bincount(groups, minlength=n_groups)
        for g, count in enumerate(present):
            if count == 0:
                raise ValidationException(f"El grupo '{self.group_names[g]}' no tiene muestras")

        object.__setattr__(self, "features", _frozen(features))
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "groups", _frozen(groups))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "group_names", tuple(self.group_names))

    @property
    def n_samples(self) -> int:
        return int(self.features.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.features.shape[1])

    @property
    def n_groups(self) -> int:
        return len(self.group_names)

    def subset(self, idx: np.ndarray) -> "Dataset":
        """
        Crea un nuevo Dataset con las filas indicadas (en ese orden).
        """
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            features=self.features[idx],
            labels=self.labels[idx],
            groups=self.groups[idx],
            feature_names=self.feature_names,
            group_names=self.group_names,
        )

    def __repr__(self) -> str:
        return f"<Dataset(n={self.n_samples}, d={self.n_features}, groups={self.group_names})>"


@dataclass(frozen=True, eq=False)
class Layer:
    """Capa densa: pesos (salida x entrada), sesgo y activación"""

    weight: np.ndarray
    bias: np.ndarray
    activation: Activation = "identity"

    @property
    def fan_in(self) -> int:
        return int(self.weight.shape[1])

    @property
    def fan_out(self) -> int:
        return int(self.weight.shape[0])


@dataclass(frozen=True, eq=False)
class ModelParams:
    """
    Parámetros de un perceptrón multicapa con una sola salida (logit).
    Todas las capas salvo la última forman la representación; la última es el clasificador.
    """

    layers: Tuple[Layer, ...]

    def __post_init__(self) -> None:
        if not self.layers:
            raise ValidationException("El modelo necesita al menos una capa")
        for i, layer in enumerate(self.layers):
            if layer.weight.ndim != 2 or layer.bias.shape != (layer.fan_out,):
                raise ValidationException(f"Capa {i} con forma inválida")
            if i > 0 and layer.fan_in != self.layers[i - 1].fan_out:
                raise ValidationException(
                    f"Capa {i}: entrada {layer.fan_in} no encadena "
                    f"con salida {self.layers[i - 1].fan_out}"
                )
            if not (np.all(np.isfinite(layer.weight)) and np.all(np.isfinite(layer.bias))):
                raise ValidationException(f"Capa {i} contiene parámetros no finitos")
        if self.layers[-1].fan_out != 1:
            raise ValidationException("La última capa debe emitir un único logit")

    @property
    def dims(self) -> List[int]:
        return [self.layers[0].fan_in] + [layer.fan_out for layer in self.layers]

    @property
    def activations(self) -> List[Activation]:
        return [layer.activation for layer in self.layers]

    @property
    def n_params(self) -> int:
        return sum(layer.weight.size + layer.bias.size for layer in self.layers)

    def flatten(self) -> np.ndarray:
        """Vector plano con W y b de cada capa en orden fila-mayor"""
        return np.concatenate(
            [np.concatenate([layer.weight.ravel(), layer.bias]) for layer in self.layers]
        )

    def with_flat(self, flat: np.ndarray) -> "ModelParams":
        """Reconstruye parámetros de igual forma a partir de un vector plano"""
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params,):
            raise ValidationException(
                f"Vector de parámetros de tamaño {flat.shape}, se esperaba ({self.n_params},)"
            )
        layers = []
        offset = 0
        for layer in self.layers:
            w_size = layer.weight.size
            weight = flat[offset : offset + w_size].reshape(layer.weight.shape).copy()
            offset += w_size
            bias = flat[offset : offset + layer.fan_out].copy()
            offset += layer.fan_out
            layers.append(Layer(weight=weight, bias=bias, activation=layer.activation))
        return ModelParams(layers=tuple(layers))

    def __repr__(self) -> str:
        return f"<ModelParams(dims={self.dims}, activations={self.activations})>"


@dataclass(frozen=True, eq=False)
class Gradients:
    """Gradientes con la misma forma que ModelParams"""

    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]

    def flatten(self) -> np.ndarray:
        return np.concatenate(
            [np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)]
        )


@dataclass(frozen=True, eq=False)
class RiskValue:
    """Riesgo externo: total, pérdidas por entorno y penalización"""

    total: float
    env_losses: np.ndarray
    penalty: float


@dataclass(frozen=True, eq=False)
class TrainReport:
    """Resultado de un entrenamiento interno"""

    params: ModelParams
    epoch_losses: np.ndarray
    epochs_run: int
    converged: bool


@dataclass(frozen=True, eq=False)
class OuterState:
    """Estado del optimizador externo (Adam y línea base)"""

    step: int = 0
    adam_m: Optional[np.ndarray] = None
    adam_v: Optional[np.ndarray] = None
    baseline_ema: float = 0.0
    baseline_count: int = 0


@dataclass(frozen=True, eq=False)
class SelectResult:
    """Salida del Algoritmo de reponderación: probabilidades, máscara e historiales"""

    final_s: np.ndarray
    final_mask: np.ndarray
    s_history: List[Tuple[int, np.ndarray]]
    risk_history: np.ndarray
    group_weight_history: np.ndarray
    polarization_history: np.ndarray
    mask_sizes: np.ndarray
    group_names: Tuple[str, ...]
    inner_seconds: float = 0.0


@dataclass(frozen=True, eq=False)
class RepetitionResult:
    """Resultado de una repetición de un experimento"""

    repetition: int
    seed: int
    metrics: MetricReport
    wall_clock: float
    select: Optional[SelectResult] = None


@dataclass(frozen=True, eq=False)
class RunReport:
    """Reporte agregado de un experimento"""

    config: ExperimentConfig
    repetitions: List[RepetitionResult]
    summary: Dict[str, MetricSummary] = field(default_factory=dict)
    sweep_param: Optional[str] = None
    sweep_value: Optional[float] = None

    @property
    def method(self) -> str:
        return self.config.method
