import logging
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from ..exceptions import ValidationException
from ..models import Gradients, Layer, ModelParams

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"suffice-checkpoint v1"

LayersLike = Union[ModelParams, Sequence[Layer]]


def _layers(params: LayersLike) -> Sequence[Layer]:
    return params.layers if isinstance(params, ModelParams) else params


class ModelService:
    """
    Servicio para el perceptrón multicapa binario con pasos hacia adelante
    y hacia atrás explícitos (sin autodiferenciación externa).
    """

    def init_mlp(self, dims: Sequence[int], seed: int) -> ModelParams:
        """
        Inicializa un MLP con pesos Glorot-uniformes y sesgos en cero.
        Las capas ocultas usan ReLU y la última es identidad.

        Args:
            dims: Tamaños de capa, de la entrada al logit (el último debe ser 1)
            seed: Semilla del generador

        Returns:
            Parámetros del modelo

        Raises:
            ValidationException: Si las dimensiones no son válidas
        """
        dims = [int(d) for d in dims]
        if len(dims) < 2 or any(d < 1 for d in dims) or dims[-1] != 1:
            raise ValidationException(
                f"Dimensiones inválidas {dims}: deben ser positivas y terminar en 1"
            )

        rng = np.random.default_rng(seed)
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            weight = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            activation = "identity" if i == len(dims) - 2 else "relu"
            layers.append(Layer(weight=weight, bias=np.zeros(fan_out), activation=activation))
        return ModelParams(layers=tuple(layers))

    def _check_input(self, layers: Sequence[Layer], X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != layers[0].fan_in:
            raise ValidationException(
                f"Entrada con forma {X.shape}, se esperaban {layers[0].fan_in} columnas"
            )
        return X

    def _forward_cache(
        self, layers: Sequence[Layer], X: np.ndarray
    ) -> Tuple[np.ndarray, List[np.ndarray], List[np.ndarray]]:
        inputs: List[np.ndarray] = []
        pre: List[np.ndarray] = []
        a = X
        for layer in layers:
            inputs.append(a)
            z = a @ layer.weight.T + layer.bias
            pre.append(z)
            a = np.maximum(z, 0.0) if layer.activation == "relu" else z
        return a[:, 0], inputs, pre

    def forward(self, params: LayersLike, X: np.ndarray) -> np.ndarray:
        """
        Calcula los logits de un lote.

        Raises:
            ValidationException: Si el número de columnas no coincide con la entrada
        """
        layers = _layers(params)
        logits, _, _ = self._forward_cache(layers, self._check_input(layers, X))
        return logits

    def penultimate(self, params: LayersLike, X: np.ndarray) -> np.ndarray:
        """
        Representación que recibe la última capa (la entrada X si solo hay una capa).
        """
        layers = _layers(params)
        _, inputs, _ = self._forward_cache(layers, self._check_input(layers, X))
        return inputs[-1]

    def weighted_ce_loss(
        self, logits: np.ndarray, labels: np.ndarray, weights: np.ndarray
    ) -> float:
        """
        Entropía cruzada binaria ponderada: (1/n) * sum(w_i * ce_i), estable vía softplus.

        Raises:
            ValidationException: Si las longitudes difieren o hay pesos negativos
        """
        logits = np.asarray(logits, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.float64)
        weights = np.asarray(weights, dtype=np.float64)
        if not (logits.shape == labels.shape == weights.shape) or logits.ndim != 1:
            raise ValidationException(
                f"Longitudes distintas: logits={logits.shape}, "
                f"labels={labels.shape}, weights={weights.shape}"
            )
        if logits.size == 0:
            raise ValidationException("No se puede calcular la pérdida de un lote vacío")
        if np.any(weights < 0):
            raise ValidationException("Los pesos deben ser no negativos")
        ce = np.logaddexp(0.0, logits) - labels * logits
        return float(np.dot(weights, ce) / logits.size)

    def backprop_logits(
        self, params: LayersLike, X: np.ndarray, dlogits: np.ndarray
    ) -> Gradients:
        """
        Propaga hacia atrás un gradiente respecto a los logits (producto vector-Jacobiano).
        Sirve para cualquier objetivo escalar que dependa de θ solo a través de los logits.
        """
        layers = _layers(params)
        _, inputs, pre = self._forward_cache(layers, self._check_input(layers, X))
        return self._backprop(layers, inputs, pre, np.asarray(dlogits, dtype=np.float64))

    def _backprop(
        self,
        layers: Sequence[Layer],
        inputs: List[np.ndarray],
        pre: List[np.ndarray],
        dlogits: np.ndarray,
    ) -> Gradients:
        grad_w: List[np.ndarray] = [np.empty(0)] * len(layers)
        grad_b: List[np.ndarray] = [np.empty(0)] * len(layers)
        delta = dlogits[:, None]
        for i in range(len(layers) - 1, -1, -1):
            layer = layers[i]
            if layer.activation == "relu":
                delta = delta * (pre[i] > 0.0)
            grad_w[i] = delta.T @ inputs[i]
            grad_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = delta @ layer.weight
        return Gradients(weights=tuple(grad_w), biases=tuple(grad_b))

    def backward(
        self,
        params: LayersLike,
        X: np.ndarray,
        labels: np.ndarray,
        weights: np.ndarray,
    ) -> Tuple[float, Gradients]:
        """
        Pérdida ponderada y su gradiente exacto respecto a todos los parámetros.

        Args:
            params: Parámetros (o capas) del modelo
            X: Lote de entrada
            labels: Etiquetas binarias
            weights: Pesos no negativos por muestra

        Returns:
            (pérdida, gradientes)
        """
        layers = _layers(params)
        X = self._check_input(layers, X)
        logits, inputs, pre = self._forward_cache(layers, X)
        loss = self.weighted_ce_loss(logits, labels, weights)
        weights = np.asarray(weights, dtype=np.float64)
        dlogits = weights * (expit(logits) - np.asarray(labels, dtype=np.float64)) / logits.size
        return loss, self._backprop(layers, inputs, pre, dlogits)

    def predict(self, params: LayersLike, X: np.ndarray) -> np.ndarray:
        """
        Etiqueta 1 si y solo si el logit es estrictamente positivo (empate -> 0).
        """
        return (self.forward(params, X) > 0.0).astype(np.int64)

    def finite_difference_gradients(
        self,
        params: ModelParams,
        X: np.ndarray,
        labels: np.ndarray,
        weights: np.ndarray,
        h: float = 1e-5,
    ) -> Gradients:
        """
        Gradiente por diferencias centrales de la pérdida ponderada.
        """
        flat = params.flatten()
        numeric = np.empty_like(flat)
        for k in range(flat.size):
            shifted = flat.copy()
            shifted[k] = flat[k] + h
            plus = self.weighted_ce_loss(
                self.forward(params.with_flat(shifted), X), labels, weights
            )
            shifted[k] = flat[k] - h
            minus = self.weighted_ce_loss(
                self.forward(params.with_flat(shifted), X), labels, weights
            )
            numeric[k] = (plus - minus) / (2.0 * h)
        as_params = params.with_flat(numeric)
        return Gradients(
            weights=tuple(layer.weight for layer in as_params.layers),
            biases=tuple(layer.bias for layer in as_params.layers),
        )

    def check_gradients(
        self,
        params: ModelParams,
        X: np.ndarray,
        labels: np.ndarray,
        weights: np.ndarray,
        h: float = 1e-5,
        rtol: float = 1e-4,
        atol: float = 1e-7,
    ) -> bool:
        """
        Compara backward con diferencias centrales coordenada a coordenada.
        Las coordenadas con ambos valores por debajo de 1e-6 se comparan en error absoluto.
        """
        _, analytic = self.backward(params, X, labels, weights)
        a = analytic.flatten()
        n = self.finite_difference_gradients(params, X, labels, weights, h=h).flatten()
        scale = np.maximum(np.abs(a), np.abs(n))
        small = scale < 1e-6
        ok_small = np.abs(a - n)[small] < atol
        ok_large = (np.abs(a - n)[~small] / scale[~small]) < rtol
        if not (ok_small.all() and ok_large.all()):
            logger.warning(f"Chequeo de gradiente fallido en {int((~ok_large).sum())} coordenadas")
            return False
        return True

    def save_checkpoint(self, params: ModelParams, path: Union[str, Path]) -> None:
        """
        Guarda dims y activaciones en texto seguidos de los parámetros float64 (little-endian,
        fila-mayor).
        """
        header = b"\n".join(
            [
                CHECKPOINT_MAGIC,
                ("dims " + " ".join(str(d) for d in params.dims)).encode("ascii"),
                ("activations " + " ".join(params.activations)).encode("ascii"),
            ]
        )
        Path(path).write_bytes(header + b"\n" + params.flatten().astype("<f8").tobytes())
        logger.info(f"Checkpoint guardado en {path}")

    def load_checkpoint(self, path: Union[str, Path]) -> ModelParams:
        """
        Carga un checkpoint escrito por save_checkpoint (ida y vuelta bit a bit).

        Raises:
            ValidationException: Si el archivo no tiene el formato esperado
        """
        raw = Path(path).read_bytes()
        parts = raw.split(b"\n", 3)
        if len(parts) != 4 or parts[0] != CHECKPOINT_MAGIC:
            raise ValidationException(f"Checkpoint inválido: {path}")
        dims = [int(d) for d in parts[1].decode("ascii").split()[1:]]
        activations = parts[2].decode("ascii").split()[1:]
        template = self.init_mlp(dims, seed=0)
        if len(activations) != len(template.layers):
            raise ValidationException(f"Checkpoint inválido: activaciones {activations}")
        template = ModelParams(
            layers=tuple(
                Layer(
                    weight=layer.weight, bias=layer.bias, activation=act  # type: ignore[arg-type]
                )
                for layer, act in zip(template.layers, activations)
            )
        )
        flat = np.frombuffer(parts[3], dtype="<f8").astype(np.float64)
        return template.with_flat(flat)


# Instancia del servicio
model_service = ModelService()
