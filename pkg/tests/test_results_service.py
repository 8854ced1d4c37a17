import pandas as pd
import pytest

from suffice.exceptions import ResultsIOException, ValidationException
from suffice.services.experiment_service import experiment_service
from suffice.services.results_service import METRIC_COLUMNS, results_service


@pytest.fixture
def report(tiny_config):
    """
    Fixture con el reporte de un experimento de reponderación de una repetición.
    """
    return experiment_service.run_experiment(tiny_config.model_copy(update={"repetitions": 1}))


class TestEmitResults:
    """
    Pruebas para la escritura de resultados.
    """

    def test_files_written(self, report, tmp_path):
        """
        Prueba que se escriben las tablas de métricas, resumen e historiales.
        """
        written = results_service.emit_results(report, tmp_path / "out")

        assert [p.name for p in written] == [
            "metrics.csv",
            "summary.csv",
            "s_polarization.csv",
            "group_weights.csv",
            "s_histogram.csv",
        ]

    def test_metrics_table(self, report, tmp_path):
        """
        Prueba el encabezado y una fila por repetición, con wall_clock vacío.
        """
        results_service.emit_results(report, tmp_path)

        frame = pd.read_csv(tmp_path / "metrics.csv")

        assert list(frame.columns) == ["method", "seed"] + METRIC_COLUMNS
        assert frame["method"].tolist() == ["reweight"]
        assert frame["seed"].tolist() == [11]
        assert frame["wall_clock"].isna().all()
        accuracy = report.repetitions[0].metrics.accuracy
        assert frame["accuracy"].iloc[0] == pytest.approx(accuracy, abs=1e-6)

    def test_summary_table(self, report, tmp_path):
        """
        Prueba el formato largo del resumen sin tiempos.
        """
        results_service.emit_results(report, tmp_path)

        frame = pd.read_csv(tmp_path / "summary.csv")

        assert list(frame.columns) == ["method", "metric", "mean", "stderr"]
        assert "wall_clock" not in frame["metric"].tolist()
        assert "suf_gap" in frame["metric"].tolist()

    def test_histories(self, report, tmp_path):
        """
        Prueba que las fracciones por grupo suman 1 y los histogramas cuentan todas las muestras.
        """
        results_service.emit_results(report, tmp_path)

        weights = pd.read_csv(tmp_path / "group_weights.csv")
        polarization = pd.read_csv(tmp_path / "s_polarization.csv")
        histogram = pd.read_csv(tmp_path / "s_histogram.csv")

        sums = weights.groupby(["repetition", "iteration"])["weight_fraction"].sum()
        assert sums.to_numpy() == pytest.approx(1.0, abs=1e-9)
        assert polarization["iteration"].tolist() == [1, 2, 3, 4]
        counts = histogram.groupby("iteration")["count"].sum()
        assert counts.index.tolist() == [1, 3, 4]
        assert (counts == 210).all()

    def test_byte_identical_reruns(self, tiny_config, tmp_path):
        """
        Prueba que dos ejecuciones idénticas escriben CSV idénticos byte a byte.
        """
        cfg = tiny_config.model_copy(update={"repetitions": 1})
        for name in ("a", "b"):
            results_service.emit_results(experiment_service.run_experiment(cfg), tmp_path / name)

        for table in ("metrics.csv", "summary.csv", "group_weights.csv", "s_histogram.csv"):
            assert (tmp_path / "a" / table).read_bytes() == (tmp_path / "b" / table).read_bytes()

    def test_record_timing(self, report, tmp_path, mocker):
        """
        Prueba que con record_timing se escriben los tiempos.
        """
        mocker.patch.object(results_service.settings, "record_timing", True)

        results_service.emit_results(report, tmp_path)

        assert not pd.read_csv(tmp_path / "metrics.csv")["wall_clock"].isna().any()
        assert "wall_clock" in pd.read_csv(tmp_path / "summary.csv")["metric"].tolist()

    def test_baseline_has_no_histories(self, tiny_config, tmp_path):
        """
        Prueba que ERM solo escribe métricas y resumen.
        """
        cfg = tiny_config.model_copy(update={"repetitions": 1, "method": "erm"})

        written = results_service.emit_results(experiment_service.run_experiment(cfg), tmp_path)

        assert [p.name for p in written] == ["metrics.csv", "summary.csv"]

    def test_sweep_outputs(self, tiny_config, tmp_path):
        """
        Prueba que un barrido escribe la columna del valor y el gráfico SVG.
        """
        cfg = tiny_config.model_copy(update={"repetitions": 1, "method": "erm"})
        reports = experiment_service.sweep(cfg, "noise_rho", [0.2, 0.0])

        written = results_service.emit_results(reports, tmp_path)

        frame = pd.read_csv(tmp_path / "metrics.csv")
        assert frame["value"].tolist() == [0.0, 0.2]
        svg = tmp_path / "sweep_noise_rho.svg"
        assert svg in written
        assert "<svg" in svg.read_text(encoding="utf-8")

    def test_empty_reports(self, tmp_path):
        """
        Prueba que una lista vacía de reportes es rechazada.
        """
        with pytest.raises(ValidationException):
            results_service.emit_results([], tmp_path)

    def test_unwritable_directory(self, report, tmp_path):
        """
        Prueba que un directorio no escribible produce un error de E/S de resultados.
        """
        blocker = tmp_path / "file"
        blocker.write_text("x", encoding="utf-8")

        with pytest.raises(ResultsIOException):
            results_service.emit_results(report, blocker / "out")
