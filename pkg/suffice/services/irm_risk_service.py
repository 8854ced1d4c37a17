import logging
from typing import List, Sequence, Tuple

import numpy as np
from scipy.special import expit

from ..exceptions import DegenerateBatchException, ValidationException
from ..models import Dataset, Gradients, ModelParams, RiskValue
from ..schemas import RiskConfig
from .model_service import LayersLike, model_service

logger = logging.getLogger(__name__)


class IrmRiskService:
    """
    Servicio para los riesgos externos sobre grupos sensibles (entornos):
    pérdidas por entorno, penalización IRMv1 y penalización REx.
    """

    def _environments(self, ds: Dataset, idx: np.ndarray) -> List[np.ndarray]:
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size == 0:
            raise ValidationException("El lote externo está vacío")
        batch_groups = ds.groups[idx]
        envs = []
        for g in range(ds.n_groups):
            positions = np.flatnonzero(batch_groups == g)
            if positions.size == 0:
                logger.error(f"Grupo '{ds.group_names[g]}' ausente del lote externo")
                raise DegenerateBatchException(
                    f"El grupo '{ds.group_names[g]}' no aparece en el lote externo"
                )
            envs.append(positions)
        return envs

    @staticmethod
    def _ce(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
        return np.logaddexp(0.0, logits) - labels * logits

    def env_losses(self, params: ModelParams, ds: Dataset, idx: np.ndarray) -> np.ndarray:
        """
        Entropía cruzada media (sin ponderar) de cada grupo dentro del lote.

        Args:
            params: Parámetros del modelo
            ds: Conjunto de datos
            idx: Índices del lote externo

        Returns:
            Vector de pérdidas, una por grupo

        Raises:
            DegenerateBatchException: Si algún grupo no aparece en el lote
        """
        envs = self._environments(ds, idx)
        idx = np.asarray(idx, dtype=np.int64)
        ce = self._ce(model_service.forward(params, ds.features[idx]), ds.labels[idx])
        return np.array([ce[e].mean() for e in envs])

    def dummy_gradients(
        self, logits: np.ndarray, labels: np.ndarray, envs: Sequence[np.ndarray]
    ) -> np.ndarray:
        """
        Derivada de la pérdida de cada entorno respecto a un escalar t que multiplica
        los logits, evaluada en t=1: mean_e[(σ(z) - y) * z].
        """
        residual = (expit(logits) - labels) * logits
        return np.array([residual[e].mean() for e in envs])

    def _last_layer_norms(
        self, params: ModelParams, X: np.ndarray, labels: np.ndarray, envs: Sequence[np.ndarray]
    ) -> np.ndarray:
        hidden = model_service.penultimate(params, X)
        err = expit(model_service.forward(params, X)) - labels
        norms = []
        for e in envs:
            grad_w = (err[e][:, None] * hidden[e]).mean(axis=0)
            grad_b = err[e].mean()
            norms.append(float(np.dot(grad_w, grad_w) + grad_b**2))
        return np.array(norms)

    def irmv1_penalty(
        self,
        params: ModelParams,
        ds: Dataset,
        idx: np.ndarray,
        mode: str = "dummy_scalar",
    ) -> float:
        """
        Penalización IRMv1: suma sobre entornos del cuadrado de la norma del gradiente.

        Con `dummy_scalar` el gradiente es respecto a un clasificador escalar ficticio;
        con `last_layer` es respecto a los pesos y sesgo de la última capa.

        Raises:
            DegenerateBatchException: Si algún grupo no aparece en el lote
            ValidationException: Si el modo es desconocido
        """
        envs = self._environments(ds, idx)
        idx = np.asarray(idx, dtype=np.int64)
        X, y = ds.features[idx], ds.labels[idx].astype(np.float64)
        if mode == "dummy_scalar":
            grads = self.dummy_gradients(model_service.forward(params, X), y, envs)
            return float(np.sum(grads**2))
        if mode == "last_layer":
            return float(np.sum(self._last_layer_norms(params, X, y, envs)))
        raise ValidationException(f"Modo de penalización desconocido: {mode}")

    def rex_penalty(self, env_losses: np.ndarray) -> float:
        """Varianza poblacional de las pérdidas por entorno"""
        return float(np.var(np.asarray(env_losses, dtype=np.float64)))

    def compute_risk(
        self, params: ModelParams, ds: Dataset, idx: np.ndarray, cfg: RiskConfig
    ) -> RiskValue:
        """
        Riesgo externo: suma de pérdidas por entorno más lambda por la penalización.

        Args:
            params: Parámetros del modelo entrenado
            ds: Conjunto del que proviene el lote
            idx: Índices del lote externo
            cfg: Variante, lambda y modo de penalización

        Returns:
            RiskValue con total, pérdidas por entorno y penalización
        """
        losses = self.env_losses(params, ds, idx)
        if cfg.variant == "REx":
            penalty = self.rex_penalty(losses)
        else:
            penalty = self.irmv1_penalty(params, ds, idx, mode=cfg.penalty_mode)
        total = float(np.sum(losses) + cfg.lam * penalty)
        return RiskValue(total=total, env_losses=losses, penalty=penalty)

    def _batch_envs(self, groups: np.ndarray) -> List[np.ndarray]:
        return [np.flatnonzero(groups == g) for g in np.unique(groups)]

    def irmv1_objective(
        self,
        params: LayersLike,
        X: np.ndarray,
        labels: np.ndarray,
        groups: np.ndarray,
        lam: float,
    ) -> float:
        """
        Objetivo IRMv1 sobre un mini-lote; los grupos ausentes del lote no aportan términos.
        """
        envs = self._batch_envs(np.asarray(groups))
        labels = np.asarray(labels, dtype=np.float64)
        logits = model_service.forward(params, X)
        ce = self._ce(logits, labels)
        grads = self.dummy_gradients(logits, labels, envs)
        return float(sum(ce[e].mean() for e in envs) + lam * np.sum(grads**2))

    def irmv1_objective_gradient(
        self,
        params: LayersLike,
        X: np.ndarray,
        labels: np.ndarray,
        groups: np.ndarray,
        lam: float,
    ) -> Tuple[float, Gradients]:
        """
        Valor y gradiente exacto del objetivo IRMv1 respecto a θ.

        La derivada por logit es (σ-y)/n_e + 2λ g_e [σ(1-σ) z + (σ-y)] / n_e, que luego
        se propaga hacia atrás por la red.
        """
        envs = self._batch_envs(np.asarray(groups))
        labels = np.asarray(labels, dtype=np.float64)
        logits = model_service.forward(params, X)
        sigma = expit(logits)
        ce = self._ce(logits, labels)
        grads = self.dummy_gradients(logits, labels, envs)

        dlogits = np.zeros_like(logits)
        for e, g_e in zip(envs, grads):
            err = sigma[e] - labels[e]
            dg = sigma[e] * (1.0 - sigma[e]) * logits[e] + err
            dlogits[e] = (err + 2.0 * lam * g_e * dg) / e.size

        value = float(sum(ce[e].mean() for e in envs) + lam * np.sum(grads**2))
        return value, model_service.backprop_logits(params, X, dlogits)


# Instancia del servicio
irm_risk_service = IrmRiskService()
