import numpy as np
import pytest

from suffice.exceptions import MetricUndefinedException, ValidationException
from suffice.schemas import GroupConfusion, GroupCounts
from suffice.services.metrics_service import metrics_service


def confusion(*tables):
    """Construye un GroupConfusion a partir de tuplas (tp, fp, tn, fn) por grupo"""
    return GroupConfusion(
        counts={
            g: GroupCounts(tp=tp, fp=fp, tn=tn, fn=fn) for g, (tp, fp, tn, fn) in enumerate(tables)
        }
    )


def conditional_mean(values, condition):
    return np.mean(values[condition]) if condition.any() else None


# Nombre de la métrica -> método del servicio que la calcula
GAP_METHODS = {"suf_gap": "sufficiency_gap"}


def brute_force_gaps(preds, labels, groups):
    """Brechas recalculadas directamente de las tripletas (pred, label, grupo)"""
    rates = []
    for g in (0, 1):
        in_g = groups == g
        rates.append(
            {
                "ppv": conditional_mean(labels, in_g & (preds == 1)),
                "npv": conditional_mean(1 - labels, in_g & (preds == 0)),
                "pos": conditional_mean(preds, in_g),
                "tpr": conditional_mean(preds, in_g & (labels == 1)),
                "fpr": conditional_mean(preds, in_g & (labels == 0)),
                "acc": conditional_mean(preds == labels, in_g),
            }
        )
    r0, r1 = rates
    if None in r0.values() or None in r1.values():
        return None
    return {
        "suf_gap": 0.5 * (abs(r0["ppv"] - r1["ppv"]) + abs(r0["npv"] - r1["npv"])),
        "dp_gap": abs(r0["pos"] - r1["pos"]),
        "eo_gap": 0.5 * (abs(r0["tpr"] - r1["tpr"]) + abs(r0["fpr"] - r1["fpr"])),
        "acc_gap": abs(r0["acc"] - r1["acc"]),
        "ppv_gap": abs(r0["ppv"] - r1["ppv"]),
    }


class TestConfusionByGroup:
    """
    Pruebas para las tablas de confusión por grupo.
    """

    def test_two_samples(self):
        """
        Prueba preds=labels=(1,0), groups=(0,1): grupo 0 con tp=1, grupo 1 con tn=1.
        """
        conf = metrics_service.confusion_by_group(
            np.array([1, 0]), np.array([1, 0]), np.array([0, 1])
        )

        assert conf.counts[0] == GroupCounts(tp=1)
        assert conf.counts[1] == GroupCounts(tn=1)

    def test_hand_fixture(self):
        """
        Prueba un conteo manual de 6 muestras.
        """
        conf = metrics_service.confusion_by_group(
            np.array([1, 1, 0, 0, 1, 0]),
            np.array([1, 0, 0, 1, 1, 1]),
            np.array([0, 0, 0, 1, 1, 1]),
        )

        assert conf.counts[0] == GroupCounts(tp=1, fp=1, tn=1, fn=0)
        assert conf.counts[1] == GroupCounts(tp=1, fp=0, tn=0, fn=2)
        assert conf.n == 6

    def test_length_mismatch(self):
        """
        Prueba que longitudes distintas son rechazadas.
        """
        with pytest.raises(ValidationException):
            metrics_service.confusion_by_group(np.ones(3), np.ones(2), np.zeros(3))


class TestSufficiencyGap:
    """
    Pruebas para la brecha de suficiencia.
    """

    def test_direct_formula(self):
        """
        Prueba PPV 0.8/0.6 y NPV 0.9/0.7 -> 0.2.
        """
        conf = confusion((8, 2, 9, 1), (6, 4, 7, 3))

        assert metrics_service.sufficiency_gap(conf, 0, 1) == pytest.approx(0.2)

    def test_identical_tables(self):
        """
        Prueba que tablas idénticas dan 0.
        """
        conf = confusion((3, 1, 4, 2), (3, 1, 4, 2))

        assert metrics_service.sufficiency_gap(conf, 0, 1) == 0.0

    def test_maximal_disagreement(self):
        """
        Prueba PPV=NPV=1 frente a PPV=NPV=0 -> 1.0.
        """
        conf = confusion((5, 0, 5, 0), (0, 5, 0, 5))

        assert metrics_service.sufficiency_gap(conf, 0, 1) == 1.0

    def test_symmetric(self):
        """
        Prueba que intercambiar los grupos no cambia la brecha.
        """
        conf = confusion((8, 2, 9, 1), (6, 4, 7, 3))

        assert metrics_service.sufficiency_gap(conf, 0, 1) == metrics_service.sufficiency_gap(
            conf, 1, 0
        )

    def test_undefined_term_dropped(self):
        """
        Prueba que un PPV indefinido se descarta y queda ½|NPV₀ - NPV₁| con aviso.
        """
        conf = confusion((4, 1, 6, 4), (0, 0, 8, 2))
        flags = []

        gap = metrics_service.sufficiency_gap(conf, 0, 1, flags)

        assert gap == pytest.approx(0.5 * abs(0.6 - 0.8))
        assert flags == [("0|1", "ppv")]

    def test_both_terms_undefined(self):
        """
        Prueba que sin ningún término definido se lanza un error.
        """
        conf = confusion((0, 0, 3, 1), (2, 2, 0, 0))

        with pytest.raises(MetricUndefinedException):
            metrics_service.sufficiency_gap(conf, 0, 1)

    def test_empty_group(self):
        """
        Prueba que un grupo sin muestras es indefinido.
        """
        conf = confusion((1, 1, 1, 1), (0, 0, 0, 0))

        with pytest.raises(MetricUndefinedException):
            metrics_service.sufficiency_gap(conf, 0, 1)


class TestOtherGaps:
    """
    Pruebas para las brechas de paridad demográfica, odds igualadas, exactitud y PPV.
    """

    def test_dp_examples(self):
        """
        Prueba tasas iguales -> 0, todo 1 frente a todo 0 -> 1 y 0.75 frente a 0.25 -> 0.5.
        """
        assert metrics_service.dp_gap(confusion((1, 1, 1, 1), (2, 0, 0, 2)), 0, 1) == 0.0
        assert metrics_service.dp_gap(confusion((2, 2, 0, 0), (0, 0, 2, 2)), 0, 1) == 1.0
        assert metrics_service.dp_gap(confusion((2, 1, 1, 0), (1, 0, 2, 1)), 0, 1) == 0.5

    def test_eo_examples(self):
        """
        Prueba TPR/FPR idénticos -> 0, extremos -> 1 y TPR 0.9/0.5, FPR 0.2/0.4 -> 0.3.
        """
        assert metrics_service.eo_gap(confusion((9, 2, 8, 1), (9, 2, 8, 1)), 0, 1) == 0.0
        assert metrics_service.eo_gap(confusion((3, 3, 0, 0), (0, 0, 3, 3)), 0, 1) == 1.0
        gap = metrics_service.eo_gap(confusion((9, 2, 8, 1), (5, 4, 6, 5)), 0, 1)
        assert gap == pytest.approx(0.3)

    def test_eo_degenerate_labels(self):
        """
        Prueba que un grupo sin negativos deja la FPR indefinida.
        """
        with pytest.raises(MetricUndefinedException):
            metrics_service.eo_gap(confusion((2, 0, 0, 1), (1, 1, 1, 1)), 0, 1)

    def test_acc_and_ppv_gaps(self):
        """
        Prueba exactitudes 0.85/0.65 y PPV 0.8/0.6.
        """
        conf = confusion((8, 2, 9, 1), (6, 4, 7, 3))

        assert metrics_service.acc_gap(conf, 0, 1) == pytest.approx(0.2)
        assert metrics_service.ppv_gap(conf, 0, 1) == pytest.approx(0.2)

    def test_brute_force_equivalence(self):
        """
        Prueba cada brecha contra un recálculo directo sobre fixtures aleatorias de 20 muestras.
        """
        rng = np.random.default_rng(0)
        checked = 0
        while checked < 50:
            preds = rng.integers(0, 2, size=20)
            labels = rng.integers(0, 2, size=20)
            groups = rng.integers(0, 2, size=20)
            expected = brute_force_gaps(preds, labels, groups)
            if expected is None:
                continue
            conf = metrics_service.confusion_by_group(preds, labels, groups, n_groups=2)
            for name, value in expected.items():
                gap = getattr(metrics_service, GAP_METHODS.get(name, name))
                assert gap(conf, 0, 1) == pytest.approx(value, abs=1e-12)
            checked += 1


class TestMaxPairwiseSufGap:
    """
    Pruebas para la máxima brecha de suficiencia entre pares.
    """

    def test_two_groups(self):
        """
        Prueba que con dos grupos coincide con la brecha de suficiencia.
        """
        conf = confusion((8, 2, 9, 1), (6, 4, 7, 3))

        gap, pair = metrics_service.max_pairwise_suf_gap(conf, [0, 1])

        assert gap == metrics_service.sufficiency_gap(conf, 0, 1)
        assert pair == (0, 1)

    def test_three_groups(self):
        """
        Prueba brechas 0.1/0.3/0.2 entre tres grupos -> (0.3, (0, 2)).
        """
        conf = confusion((5, 5, 5, 5), (6, 4, 6, 4), (8, 2, 8, 2))

        gap, pair = metrics_service.max_pairwise_suf_gap(conf, [0, 1, 2])

        assert gap == pytest.approx(0.3)
        assert pair == (0, 2)

    def test_identical_groups_first_pair(self):
        """
        Prueba que con grupos idénticos gana el primer par.
        """
        conf = confusion((2, 1, 2, 1), (2, 1, 2, 1), (2, 1, 2, 1))

        assert metrics_service.max_pairwise_suf_gap(conf, [2, 0, 1]) == (0.0, (0, 1))

    def test_skips_undefined_pairs(self):
        """
        Prueba que los pares con términos indefinidos se omiten y se anotan.
        """
        conf = confusion((5, 5, 5, 5), (0, 0, 4, 4), (8, 2, 8, 2))
        flags = []

        gap, pair = metrics_service.max_pairwise_suf_gap(conf, [0, 1, 2], flags)

        assert pair == (0, 2)
        assert flags == [("0|1", "suf_gap"), ("1|2", "suf_gap")]

    def test_single_group(self):
        """
        Prueba que un solo grupo es rechazado.
        """
        with pytest.raises(ValidationException):
            metrics_service.max_pairwise_suf_gap(confusion((1, 1, 1, 1)), [0])


class TestEvaluate:
    """
    Pruebas para el reporte completo de métricas.
    """

    def test_two_groups(self):
        """
        Prueba el reporte sobre el fixture de 6 muestras.
        """
        report = metrics_service.evaluate(
            np.array([1, 1, 0, 1, 1, 0]),
            np.array([1, 0, 0, 1, 1, 1]),
            np.array([0, 0, 0, 1, 1, 1]),
            ["a", "b"],
        )

        assert report.accuracy == pytest.approx(4 / 6)
        assert report.suf_pair == ("a", "b")
        assert report.dp_gap == pytest.approx(0.0)
        assert set(report.per_group) == {"a", "b"}
        assert report.per_group["a"].n == 3

    def test_pair_by_name(self):
        """
        Prueba que group_pair elige el par a comparar.
        """
        preds = np.array([1, 0, 1, 0, 1, 1, 0, 0, 1, 0, 0, 1])
        labels = np.array([1, 0, 0, 1, 1, 0, 0, 1, 1, 0, 1, 1])
        groups = np.repeat([0, 1, 2], 4)
        names = ["x", "y", "z"]
        conf = metrics_service.confusion_by_group(preds, labels, groups)

        report = metrics_service.evaluate(preds, labels, groups, names, pair=("z", "x"))

        assert report.suf_pair == ("z", "x")
        assert report.suf_gap == pytest.approx(metrics_service.sufficiency_gap(conf, 2, 0))

    def test_unknown_pair(self):
        """
        Prueba que un nombre de grupo inexistente es rechazado.
        """
        with pytest.raises(ValidationException):
            metrics_service.evaluate(
                np.array([1, 0]), np.array([1, 0]), np.array([0, 1]), ["a", "b"], pair=("a", "c")
            )

    def test_three_groups_max_pair(self):
        """
        Prueba que sin par explícito y G=3 se usa el par de máxima brecha.
        """
        rows = []
        for g, (tp, fp, tn, fn) in enumerate([(5, 5, 5, 5), (6, 4, 6, 4), (8, 2, 8, 2)]):
            rows += [(1, 1, g)] * tp + [(1, 0, g)] * fp + [(0, 0, g)] * tn + [(0, 1, g)] * fn
        preds, labels, groups = (np.array(col) for col in zip(*rows))

        report = metrics_service.evaluate(preds, labels, groups, ["a", "b", "c"])

        assert report.suf_pair == ("a", "c")
        assert report.suf_gap == pytest.approx(0.3)

    def test_undefined_cells_flagged(self):
        """
        Prueba que las métricas indefinidas quedan en None y se anotan.
        """
        # Grupo b sin predicciones positivas: PPV indefinido
        report = metrics_service.evaluate(
            np.array([1, 0, 1, 0, 0, 0]),
            np.array([1, 0, 0, 1, 0, 1]),
            np.array([0, 0, 0, 1, 1, 1]),
            ["a", "b"],
        )

        assert report.ppv_gap is None
        assert ("a|b", "ppv_gap") in report.undefined_cells
        assert ("b", "ppv") in report.undefined_cells
        assert report.suf_gap is not None
