import logging
from itertools import combinations
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import MetricUndefinedException, ValidationException
from ..schemas import GroupConfusion, GroupCounts, GroupRates, MetricReport

logger = logging.getLogger(__name__)

Flags = List[Tuple[str, str]]


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den > 0 else None


class MetricsService:
    """
    Servicio para métricas de utilidad y equidad a partir de tablas de confusión por grupo.
    """

    def confusion_by_group(
        self,
        preds: np.ndarray,
        labels: np.ndarray,
        groups: np.ndarray,
        n_groups: Optional[int] = None,
    ) -> GroupConfusion:
        """
        Cuenta tp, fp, tn y fn de cada grupo.

        Args:
            preds: Predicciones binarias
            labels: Etiquetas binarias
            groups: Identificador de grupo por muestra
            n_groups: Número de grupos (por defecto, máximo id + 1)

        Returns:
            GroupConfusion con una entrada por grupo

        Raises:
            ValidationException: Si las longitudes difieren o los valores no son binarios
        """
        preds = np.asarray(preds, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.int64)
        groups = np.asarray(groups, dtype=np.int64)
        if not (preds.shape == labels.shape == groups.shape) or preds.ndim != 1:
            raise ValidationException(
                f"Longitudes distintas: preds={preds.shape}, "
                f"labels={labels.shape}, groups={groups.shape}"
            )
        if np.any((preds != 0) & (preds != 1)) or np.any((labels != 0) & (labels != 1)):
            raise ValidationException("Predicciones y etiquetas deben ser 0 o 1")
        if n_groups is None:
            n_groups = int(groups.max()) + 1 if groups.size else 0

        # Celda codificada como 2*pred + label: 0=tn, 1=fn, 2=fp, 3=tp
        cells = np.bincount(groups * 4 + 2 * preds + labels, minlength=4 * n_groups)
        cells = cells.reshape(-1, 4)
        return GroupConfusion(
            counts={
                g: GroupCounts(
                    tn=int(cells[g, 0]),
                    fn=int(cells[g, 1]),
                    fp=int(cells[g, 2]),
                    tp=int(cells[g, 3]),
                )
                for g in range(n_groups)
            }
        )

    def group_rates(self, counts: GroupCounts) -> GroupRates:
        """Tasas condicionales de un grupo; None cuando el denominador es cero"""
        c = counts
        return GroupRates(
            n=c.total,
            accuracy=_ratio(c.tp + c.tn, c.total),
            positive_rate=_ratio(c.tp + c.fp, c.total),
            ppv=_ratio(c.tp, c.tp + c.fp),
            npv=_ratio(c.tn, c.tn + c.fn),
            tpr=_ratio(c.tp, c.tp + c.fn),
            fpr=_ratio(c.fp, c.fp + c.tn),
        )

    def _pair_rates(self, conf: GroupConfusion, g0: int, g1: int) -> Tuple[GroupRates, GroupRates]:
        for g in (g0, g1):
            if g not in conf.counts or conf.counts[g].total == 0:
                raise MetricUndefinedException(f"El grupo {g} no tiene muestras")
        return self.group_rates(conf.counts[g0]), self.group_rates(conf.counts[g1])

    def sufficiency_gap(
        self, conf: GroupConfusion, g0: int, g1: int, flags: Optional[Flags] = None
    ) -> float:
        """
        ΔSuf = ½(|PPV₀ - PPV₁| + |NPV₀ - NPV₁|).

        Un término con PPV o NPV indefinido en algún grupo se descarta (se reporta
        ½·términos definidos) y se anota en `flags`.

        Raises:
            MetricUndefinedException: Si ambos términos están indefinidos
        """
        r0, r1 = self._pair_rates(conf, g0, g1)
        terms = []
        for name in ("ppv", "npv"):
            a, b = getattr(r0, name), getattr(r1, name)
            if a is None or b is None:
                logger.warning(f"Término {name.upper()} indefinido para el par ({g0}, {g1})")
                if flags is not None:
                    flags.append((f"{g0}|{g1}", name))
                continue
            terms.append(abs(a - b))
        if not terms:
            raise MetricUndefinedException(
                f"Brecha de suficiencia indefinida para el par ({g0}, {g1})"
            )
        return 0.5 * sum(terms)

    def dp_gap(self, conf: GroupConfusion, g0: int, g1: int) -> float:
        """|P₀(Ŷ=1) - P₁(Ŷ=1)|"""
        r0, r1 = self._pair_rates(conf, g0, g1)
        return abs(r0.positive_rate - r1.positive_rate)  # type: ignore[operator]

    def eo_gap(self, conf: GroupConfusion, g0: int, g1: int) -> float:
        """
        ½(|TPR₀ - TPR₁| + |FPR₀ - FPR₁|).

        Raises:
            MetricUndefinedException: Si algún grupo no tiene etiquetas positivas o negativas
        """
        r0, r1 = self._pair_rates(conf, g0, g1)
        if None in (r0.tpr, r1.tpr, r0.fpr, r1.fpr):
            raise MetricUndefinedException(
                f"Brecha de odds igualadas indefinida para el par ({g0}, {g1})"
            )
        return 0.5 * (abs(r0.tpr - r1.tpr) + abs(r0.fpr - r1.fpr))  # type: ignore[operator]

    def acc_gap(self, conf: GroupConfusion, g0: int, g1: int) -> float:
        """|P₀(Ŷ=Y) - P₁(Ŷ=Y)|"""
        r0, r1 = self._pair_rates(conf, g0, g1)
        return abs(r0.accuracy - r1.accuracy)  # type: ignore[operator]

    def ppv_gap(self, conf: GroupConfusion, g0: int, g1: int) -> float:
        """
        |PPV₀ - PPV₁| (paridad predictiva).

        Raises:
            MetricUndefinedException: Si algún grupo no tiene predicciones positivas
        """
        r0, r1 = self._pair_rates(conf, g0, g1)
        if r0.ppv is None or r1.ppv is None:
            raise MetricUndefinedException(f"PPV indefinido para el par ({g0}, {g1})")
        return abs(r0.ppv - r1.ppv)

    def max_pairwise_suf_gap(
        self, conf: GroupConfusion, subset: Sequence[int], flags: Optional[Flags] = None
    ) -> Tuple[float, Tuple[int, int]]:
        """
        Máxima brecha de suficiencia entre pares no ordenados del subconjunto.
        Los pares con algún término indefinido se omiten; los empates favorecen al primer par.

        Raises:
            ValidationException: Si el subconjunto tiene menos de dos grupos
            MetricUndefinedException: Si todos los pares están indefinidos
        """
        members = sorted(set(int(g) for g in subset))
        if len(members) < 2:
            raise ValidationException("Se necesitan al menos dos grupos")
        best: Optional[Tuple[float, Tuple[int, int]]] = None
        for g0, g1 in combinations(members, 2):
            pair_flags: Flags = []
            try:
                gap = self.sufficiency_gap(conf, g0, g1, pair_flags)
            except MetricUndefinedException:
                gap = None
            if gap is None or pair_flags:
                if flags is not None:
                    flags.append((f"{g0}|{g1}", "suf_gap"))
                continue
            if best is None or gap > best[0]:
                best = (gap, (g0, g1))
        if best is None:
            raise MetricUndefinedException(
                "Todos los pares tienen la brecha de suficiencia indefinida"
            )
        return best

    def evaluate(
        self,
        preds: np.ndarray,
        labels: np.ndarray,
        groups: np.ndarray,
        group_names: Sequence[str],
        pair: Optional[Tuple[str, str]] = None,
    ) -> MetricReport:
        """
        Reporte completo: exactitud, brechas de equidad sobre un par de grupos y tabla por grupo.

        El par es el indicado por nombre; si no se indica, los dos grupos cuando G=2 o el par
        de máxima brecha de suficiencia cuando G>2. Las métricas indefinidas quedan en None
        y se anotan en `undefined_cells`.

        Args:
            preds: Predicciones binarias
            labels: Etiquetas binarias
            groups: Identificador de grupo por muestra
            group_names: Nombre de cada grupo
            pair: Par de nombres de grupo a comparar

        Returns:
            MetricReport

        Raises:
            ValidationException: Si un nombre del par no existe
        """
        names = list(group_names)
        conf = self.confusion_by_group(preds, labels, groups, n_groups=len(names))
        accuracy = float(np.mean(np.asarray(preds) == np.asarray(labels)))
        per_group = {names[g]: self.group_rates(c) for g, c in conf.counts.items()}
        undefined: Flags = [
            (names[g], metric)
            for g, rates in enumerate(per_group.values())
            for metric, value in rates.model_dump().items()
            if value is None
        ]
        report = MetricReport(accuracy=accuracy, per_group=per_group, undefined_cells=undefined)
        if len(names) < 2:
            return report

        gaps: dict = {}
        ids: Optional[Tuple[int, int]] = None
        if pair is not None:
            missing = [p for p in pair if p not in names]
            if missing:
                raise ValidationException(f"Grupos desconocidos en group_pair: {missing}")
            ids = (names.index(pair[0]), names.index(pair[1]))
        elif len(names) == 2:
            ids = (0, 1)
        else:
            try:
                gaps["suf_gap"], ids = self.max_pairwise_suf_gap(conf, range(len(names)))
            except MetricUndefinedException:
                undefined.append(("*", "suf_gap"))
                ids = (0, 1)

        g0, g1 = ids
        label = f"{names[g0]}|{names[g1]}"
        calculators = {
            "suf_gap": self.sufficiency_gap,
            "dp_gap": self.dp_gap,
            "eo_gap": self.eo_gap,
            "acc_gap": self.acc_gap,
            "ppv_gap": self.ppv_gap,
        }
        for name, fn in calculators.items():
            if name in gaps or (name == "suf_gap" and ("*", "suf_gap") in undefined):
                continue
            try:
                gaps[name] = fn(conf, g0, g1)
            except MetricUndefinedException as e:
                logger.warning(f"Métrica {name} indefinida: {e.detail}")
                undefined.append((label, name))

        return report.model_copy(
            update={
                **gaps,
                "suf_pair": (names[g0], names[g1]) if "suf_gap" in gaps else None,
                "undefined_cells": undefined,
            }
        )


# Instancia del servicio
metrics_service = MetricsService()
