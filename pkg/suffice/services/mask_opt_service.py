import logging
import time
from typing import List, Optional, Protocol, Sequence, Tuple

import numpy as np
from scipy.optimize import bisect

from ..exceptions import ConfigurationException, DegenerateProbabilitiesException
from ..models import Dataset, OuterState, SelectResult
from ..schemas import InnerConfig, OuterConfig, RiskConfig
from .data_service import largest_remainder
from .inner_trainer_service import inner_trainer_service
from .irm_risk_service import irm_risk_service
from .model_service import model_service

logger = logging.getLogger(__name__)

BASELINE_DECAY = 0.9
MAX_EMPTY_DRAWS = 100
POLARIZATION_BAND = (0.05, 0.95)
DEFAULT_HIDDEN = 16

# Flujos de aleatoriedad derivados de la semilla externa
MASK_STREAM, BATCH_STREAM, INNER_STREAM, FINAL_STREAM = 0, 1, 2, 3


def default_dims(n_features: int) -> List[int]:
    """Arquitectura por defecto [d, 16, 1]"""
    return [n_features, DEFAULT_HIDDEN, 1]


def polarization_fraction(s: np.ndarray) -> float:
    """Fracción de probabilidades estrictamente dentro de (0.05, 0.95)"""
    lo, hi = POLARIZATION_BAND
    return float(np.mean((s > lo) & (s < hi)))


class RiskEvaluator(Protocol):
    """Interfaz del evaluador de riesgo externo R(D, θ*(m))"""

    def evaluate(self, mask: np.ndarray, iteration: int) -> float:
        ...


class BilevelRiskEvaluator:
    """
    Evaluador de producción: entrena θ*(m) desde cero sobre la máscara y calcula el
    riesgo IRM en un mini-lote estratificado del conjunto externo.
    """

    def __init__(
        self,
        ds_train: Dataset,
        ds_outer: Dataset,
        inner: InnerConfig,
        risk: RiskConfig,
        model_dims: Sequence[int],
        seed: int,
    ) -> None:
        self.ds_train = ds_train
        self.ds_outer = ds_outer
        self.inner = inner
        self.risk = risk
        self.model_dims = list(model_dims)
        self.seed = seed
        self.batch_rng = np.random.default_rng(np.random.SeedSequence([seed, BATCH_STREAM]))
        # Misma inicialización en todas las iteraciones: θ*(m) solo depende de m
        init_seed = np.random.SeedSequence([seed, INNER_STREAM]).generate_state(1)[0]
        self.init = model_service.init_mlp(self.model_dims, int(init_seed))
        self.inner_seconds = 0.0

    def evaluate(self, mask: np.ndarray, iteration: int) -> float:
        shuffle = np.random.SeedSequence([self.seed, INNER_STREAM, iteration]).generate_state(1)
        cfg = self.inner.model_copy(update={"seed": int(shuffle[0])})

        started = time.perf_counter()
        report = inner_trainer_service.train_weighted_erm(
            self.init, self.ds_train, mask.astype(np.float64), cfg
        )
        self.inner_seconds += time.perf_counter() - started

        idx = mask_opt_service.stratified_batch(self.ds_outer, self.risk.eval_batch, self.batch_rng)
        return irm_risk_service.compute_risk(report.params, self.ds_outer, idx, self.risk).total


class MaskOptService:
    """
    Servicio para el bucle externo: máscaras Bernoulli, gradiente de función de puntuación,
    proyección sobre la caja acotada con presupuesto ℓ1 y el algoritmo de reponderación.
    """

    def sample_mask(self, s: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Muestrea m_i ~ Bernoulli(s_i) de forma independiente"""
        s = np.asarray(s, dtype=np.float64)
        return (rng.random(s.shape) < s).astype(np.int64)

    def log_prob_grad(self, s: np.ndarray, m: np.ndarray, eps: float = 1e-4) -> np.ndarray:
        """
        Gradiente de ln p(m|s) respecto a s: m/s - (1-m)/(1-s), con s recortado a [ε, 1-ε].
        Admite difusión (broadcasting) de varias máscaras contra un mismo s.
        """
        clamped = np.clip(np.asarray(s, dtype=np.float64), eps, 1.0 - eps)
        m = np.asarray(m, dtype=np.float64)
        return m / clamped - (1.0 - m) / (1.0 - clamped)

    def project_capped_box(self, v: np.ndarray, K: float) -> np.ndarray:
        """
        Proyección euclídea sobre {0 <= s_i <= 1, sum(s) <= K}.

        Si el recorte a la caja ya es factible se devuelve tal cual; si no, se busca por
        bisección el multiplicador μ > 0 con sum(clip(v - μ, 0, 1)) = K y se refina en
        forma cerrada sobre las coordenadas libres.

        Args:
            v: Vector a proyectar
            K: Presupuesto (>= 1)

        Returns:
            Vector factible más cercano a v
        """
        v = np.asarray(v, dtype=np.float64)
        clipped = np.clip(v, 0.0, 1.0)
        if clipped.sum() <= K:
            return clipped

        def excess(mu: float) -> float:
            return float(np.clip(v - mu, 0.0, 1.0).sum() - K)

        mu = bisect(excess, 0.0, float(v.max()), xtol=1e-14, maxiter=200)
        projected = np.clip(v - mu, 0.0, 1.0)

        shifted = v - mu
        free = (shifted > 0.0) & (shifted < 1.0)
        if free.any():
            at_upper = int(np.sum(shifted >= 1.0))
            refined_mu = (v[free].sum() - (K - at_upper)) / free.sum()
            refined = np.clip(v - refined_mu, 0.0, 1.0)
            if abs(refined.sum() - K) <= abs(projected.sum() - K):
                projected = refined
        return projected

    def learning_rate(self, cfg: OuterConfig, step: int) -> float:
        """η_t = η(1 + cos(π t / T)) / 2 con el coseno activo, η en otro caso"""
        if not cfg.cosine_schedule:
            return cfg.lr
        return cfg.lr * (1.0 + np.cos(np.pi * step / cfg.iters)) / 2.0

    def outer_step(
        self,
        s: np.ndarray,
        m: np.ndarray,
        risk: float,
        cfg: OuterConfig,
        state: OuterState,
    ) -> Tuple[np.ndarray, OuterState]:
        """
        Paso proyectado sobre s con el estimador (R - b)·∇ ln p(m|s).

        Args:
            s: Probabilidades actuales (factibles)
            m: Máscara muestreada de s
            risk: Riesgo externo observado para m
            cfg: Configuración externa
            state: Estado del optimizador

        Returns:
            (s', estado actualizado)
        """
        baseline = 0.0
        if cfg.baseline:
            # Sin riesgos previos la línea base es el propio riesgo: el primer paso es nulo
            baseline = risk
            if state.baseline_count > 0:
                baseline = state.baseline_ema / (1.0 - BASELINE_DECAY**state.baseline_count)
        grad = (risk - baseline) * self.log_prob_grad(s, m, cfg.prob_clamp)
        eta = self.learning_rate(cfg, state.step)

        adam_m, adam_v = state.adam_m, state.adam_v
        if cfg.optimizer == "projected_sgd":
            candidate = s - eta * grad
        else:
            beta1, beta2 = cfg.adam_betas
            adam_m = (
                beta1 * (state.adam_m if state.adam_m is not None else 0.0) + (1 - beta1) * grad
            )
            adam_v = (
                beta2 * (state.adam_v if state.adam_v is not None else 0.0)
                + (1 - beta2) * grad**2
            )
            m_hat = adam_m / (1.0 - beta1 ** (state.step + 1))
            v_hat = adam_v / (1.0 - beta2 ** (state.step + 1))
            candidate = s - eta * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)

        new_state = OuterState(
            step=state.step + 1,
            adam_m=adam_m,
            adam_v=adam_v,
            baseline_ema=BASELINE_DECAY * state.baseline_ema + (1 - BASELINE_DECAY) * risk,
            baseline_count=state.baseline_count + 1,
        )
        return self.project_capped_box(candidate, cfg.K), new_state

    def finalize_mask(self, s: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
        """
        Muestra la máscara final de s. Si supera K se conservan las K de mayor s
        (empates por índice menor); si sale vacía se elige la coordenada de mayor s.
        """
        s = np.asarray(s, dtype=np.float64)
        m = self.sample_mask(s, rng)
        chosen = np.flatnonzero(m)
        if chosen.size > K:
            order = np.lexsort((chosen, -s[chosen]))
            m = np.zeros_like(m)
            m[chosen[order[:K]]] = 1
            logger.info(f"Máscara final recortada de {chosen.size} a {K} muestras")
        elif chosen.size == 0:
            m[int(np.argmax(s))] = 1
            logger.warning("Máscara final vacía: se selecciona la muestra de mayor probabilidad")
        return m

    def stratified_batch(
        self, ds: Dataset, size: int, rng: np.random.Generator
    ) -> np.ndarray:
        """
        Mini-lote sin reemplazo con al menos una muestra de cada grupo; el resto se reparte
        en proporción al tamaño de los grupos (mayor resto).

        Raises:
            ConfigurationException: Si el tamaño no alcanza para cubrir todos los grupos
        """
        if size < ds.n_groups:
            raise ConfigurationException(
                f"eval_batch={size} no puede contener a los {ds.n_groups} grupos"
            )
        size = min(size, ds.n_samples)
        counts = np.bincount(ds.groups, minlength=ds.n_groups)
        extra = np.zeros(ds.n_groups, dtype=np.int64)
        if ds.n_samples > ds.n_groups:
            shares = (counts - 1) / (ds.n_samples - ds.n_groups)
            extra = largest_remainder(size - ds.n_groups, shares)
        picks = [
            rng.choice(np.flatnonzero(ds.groups == g), size=1 + int(extra[g]), replace=False)
            for g in range(ds.n_groups)
        ]
        return np.sort(np.concatenate(picks))

    def group_weight_fractions(self, ds: Dataset, m: np.ndarray) -> np.ndarray:
        """Fracción de la máscara en cada celda (grupo, etiqueta); matriz G x 2"""
        selected = np.asarray(m) == 1
        fractions = np.zeros((ds.n_groups, 2))
        total = selected.sum()
        if total == 0:
            return fractions
        for g in range(ds.n_groups):
            for y in (0, 1):
                fractions[g, y] = np.sum(selected & (ds.groups == g) & (ds.labels == y)) / total
        return fractions

    def _draw_nonempty(
        self, s: np.ndarray, rng: np.random.Generator, iteration: int
    ) -> np.ndarray:
        for attempt in range(MAX_EMPTY_DRAWS):
            m = self.sample_mask(s, rng)
            if m.any():
                if attempt:
                    logger.warning(
                        f"Iteración {iteration}: máscara vacía, {attempt} remuestreos"
                    )
                return m
        logger.error(f"Iteración {iteration}: {MAX_EMPTY_DRAWS} máscaras vacías consecutivas")
        raise DegenerateProbabilitiesException(
            f"Las probabilidades produjeron {MAX_EMPTY_DRAWS} máscaras vacías "
            f"en la iteración {iteration}"
        )

    def run_algorithm1(
        self,
        ds_train: Dataset,
        ds_outer: Dataset,
        risk_eval: Optional[RiskEvaluator],
        inner: InnerConfig,
        outer: OuterConfig,
        risk: RiskConfig,
        model_dims: Optional[Sequence[int]] = None,
    ) -> SelectResult:
        """
        Reponderación para la regla de suficiencia.

        Parte de s = (K/n)·1 y en cada iteración muestrea una máscara no vacía, obtiene el
        riesgo externo de θ*(m), actualiza s con el paso proyectado y registra historiales.
        Al final muestrea la máscara seleccionada de s.

        Args:
            ds_train: Conjunto sobre el que se seleccionan muestras
            ds_outer: Conjunto del que se extraen los mini-lotes externos
            risk_eval: Evaluador de riesgo; None usa el evaluador bilevel de producción
            inner: Configuración del bucle interno
            outer: Configuración del bucle externo
            risk: Configuración del riesgo
            model_dims: Arquitectura del modelo (por defecto [d, 16, 1])

        Returns:
            SelectResult con la máscara final y los historiales

        Raises:
            ConfigurationException: Si K > n o el lote externo no puede estratificarse
            DegenerateProbabilitiesException: Si las máscaras salen vacías de forma persistente
        """
        n = ds_train.n_samples
        if outer.K > n:
            raise ConfigurationException(f"K={outer.K} excede el tamaño del conjunto ({n})")
        dims = list(model_dims) if model_dims is not None else default_dims(ds_train.n_features)

        evaluator: RiskEvaluator
        if risk_eval is None:
            if risk.eval_batch < ds_outer.n_groups:
                raise ConfigurationException(
                    f"eval_batch={risk.eval_batch} no puede contener "
                    f"a los {ds_outer.n_groups} grupos"
                )
            evaluator = BilevelRiskEvaluator(ds_train, ds_outer, inner, risk, dims, outer.seed)
        else:
            evaluator = risk_eval

        T = outer.iters
        snapshot_every = outer.snapshot_every or max(1, T // 10)
        mask_rng = np.random.default_rng(np.random.SeedSequence([outer.seed, MASK_STREAM]))

        s = np.full(n, outer.K / n)
        state = OuterState()
        s_history: List[Tuple[int, np.ndarray]] = []
        risk_history = np.zeros(T)
        weight_history = np.zeros((T, ds_train.n_groups, 2))
        polarization = np.zeros(T)
        mask_sizes = np.zeros(T, dtype=np.int64)

        logger.info(f"Reponderación: n={n}, K={outer.K}, T={T}, optimizador={outer.optimizer}")
        for t in range(T):
            m = self._draw_nonempty(s, mask_rng, t)
            value = float(evaluator.evaluate(m, t))
            risk_history[t] = value
            mask_sizes[t] = int(m.sum())
            weight_history[t] = self.group_weight_fractions(ds_train, m)

            s, state = self.outer_step(s, m, value, outer, state)
            polarization[t] = polarization_fraction(s)
            if t % snapshot_every == 0 or t == T - 1:
                s_history.append((t, s.copy()))
            if (t + 1) % outer.log_every == 0:
                logger.debug(
                    f"Iteración {t + 1}/{T}: riesgo={value:.6f}, |m|={mask_sizes[t]}, "
                    f"polarización={polarization[t]:.4f}"
                )

        final_rng = np.random.default_rng(np.random.SeedSequence([outer.seed, FINAL_STREAM]))
        final_mask = self.finalize_mask(s, outer.K, final_rng)
        logger.info(f"Reponderación terminada: {int(final_mask.sum())} muestras seleccionadas")

        return SelectResult(
            final_s=s,
            final_mask=final_mask,
            s_history=s_history,
            risk_history=risk_history,
            group_weight_history=weight_history,
            polarization_history=polarization,
            mask_sizes=mask_sizes,
            group_names=ds_train.group_names,
            inner_seconds=getattr(evaluator, "inner_seconds", 0.0),
        )


# Instancia del servicio
mask_opt_service = MaskOptService()
