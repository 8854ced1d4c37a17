import logging
from typing import Callable, List, Tuple

import numpy as np

from ..exceptions import ConfigurationException, ValidationException
from ..models import Dataset, Gradients, Layer, ModelParams, TrainReport
from ..schemas import InnerConfig, RiskConfig
from .irm_risk_service import irm_risk_service
from .model_service import model_service

logger = logging.getLogger(__name__)

BatchObjective = Callable[[List[Layer], np.ndarray], Tuple[float, Gradients]]


class InnerTrainerService:
    """
    Servicio para el bucle interno: SGD con momentum (heavy-ball) sobre mini-lotes.
    """

    def _sgd(
        self,
        init: ModelParams,
        active: np.ndarray,
        cfg: InnerConfig,
        objective: BatchObjective,
    ) -> TrainReport:
        rng = np.random.default_rng(cfg.seed)
        layers = [
            Layer(weight=layer.weight.copy(), bias=layer.bias.copy(), activation=layer.activation)
            for layer in init.layers
        ]
        vel_w = [np.zeros_like(layer.weight) for layer in layers]
        vel_b = [np.zeros_like(layer.bias) for layer in layers]

        losses: List[float] = []
        converged = False
        for epoch in range(cfg.epochs):
            perm = rng.permutation(active.size)
            total = 0.0
            for start in range(0, active.size, cfg.batch_size):
                batch = active[perm[start : start + cfg.batch_size]]
                loss, grads = objective(layers, batch)
                total += loss * batch.size
                for i, layer in enumerate(layers):
                    vel_w[i] *= cfg.momentum
                    vel_w[i] += grads.weights[i]
                    vel_b[i] *= cfg.momentum
                    vel_b[i] += grads.biases[i]
                    # Actualización en el sitio: Layer es inmutable, sus arreglos no
                    np.subtract(layer.weight, cfg.lr * vel_w[i], out=layer.weight)
                    np.subtract(layer.bias, cfg.lr * vel_b[i], out=layer.bias)
            losses.append(total / active.size)
            if epoch > 0 and abs(losses[-2] - losses[-1]) < cfg.tol:
                converged = True
                break

        if not np.isfinite(losses[-1]):
            logger.error("El entrenamiento interno divergió (pérdida no finita)")
        params = ModelParams(layers=tuple(layers))
        logger.debug(
            f"Entrenamiento interno: {len(losses)} épocas, pérdida final {losses[-1]:.6f}, "
            f"convergió={converged}"
        )
        return TrainReport(
            params=params,
            epoch_losses=np.array(losses),
            epochs_run=len(losses),
            converged=converged,
        )

    def train_weighted_erm(
        self,
        init: ModelParams,
        ds: Dataset,
        weights: np.ndarray,
        cfg: InnerConfig,
    ) -> TrainReport:
        """
        Minimiza la pérdida empírica ponderada hasta que la pérdida por época se estanca
        (|Δ| < tol) o se agotan las épocas.

        Con `batch_source="selected"` los mini-lotes solo contienen muestras con peso
        positivo, de modo que entrenar con una máscara binaria equivale bit a bit a entrenar
        sobre el subconjunto filtrado con la misma semilla.

        Args:
            init: Parámetros iniciales (no se modifican)
            ds: Conjunto de entrenamiento
            weights: Pesos no negativos, uno por muestra
            cfg: Configuración del bucle interno

        Returns:
            TrainReport con los parámetros finales y las pérdidas por época

        Raises:
            ValidationException: Si los pesos son inválidos o todos nulos
        """
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (ds.n_samples,):
            raise ValidationException(
                f"Se esperaban {ds.n_samples} pesos, se recibieron {weights.shape}"
            )
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValidationException("Los pesos deben ser finitos y no negativos")
        selected = np.flatnonzero(weights > 0)
        if selected.size == 0:
            logger.error("Entrenamiento interno con conjunto seleccionado vacío")
            raise ValidationException("Conjunto seleccionado vacío: todos los pesos son cero")

        active = selected if cfg.batch_source == "selected" else np.arange(ds.n_samples)
        X, y = ds.features, ds.labels

        def objective(layers: List[Layer], batch: np.ndarray) -> Tuple[float, Gradients]:
            return model_service.backward(layers, X[batch], y[batch], weights[batch])

        return self._sgd(init, active, cfg, objective)

    def train_irmv1_regularized(
        self,
        init: ModelParams,
        ds: Dataset,
        cfg: InnerConfig,
        risk: RiskConfig,
    ) -> TrainReport:
        """
        Entrena minimizando directamente suma de pérdidas por grupo + λ·penalización IRMv1
        en cada mini-lote (línea base `irmv1_reg`).

        Raises:
            ConfigurationException: Si el modo de penalización no es `dummy_scalar`
        """
        if risk.penalty_mode != "dummy_scalar":
            raise ConfigurationException(
                f"El entrenamiento IRMv1 regularizado solo admite 'dummy_scalar', "
                f"se recibió '{risk.penalty_mode}'"
            )
        X, y, groups = ds.features, ds.labels, ds.groups

        def objective(layers: List[Layer], batch: np.ndarray) -> Tuple[float, Gradients]:
            return irm_risk_service.irmv1_objective_gradient(
                layers, X[batch], y[batch], groups[batch], risk.lam
            )

        return self._sgd(init, np.arange(ds.n_samples), cfg, objective)


# Instancia del servicio
inner_trainer_service = InnerTrainerService()
