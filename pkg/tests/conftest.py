import numpy as np
import pytest

from suffice.models import Dataset
from suffice.schemas import ExperimentConfig
from suffice.services.data_service import data_service


def assert_dataset_invariants(ds: Dataset) -> None:
    """
    Verifica las invariantes de un Dataset producido por cualquier operación.
    """
    n = ds.n_samples
    assert n >= 1
    assert ds.labels.shape == (n,) and ds.groups.shape == (n,)
    assert set(np.unique(ds.labels)) <= {0, 1}
    assert set(np.unique(ds.groups)) == set(range(ds.n_groups))
    assert np.all(np.isfinite(ds.features))
    assert len(ds.feature_names) == ds.n_features


@pytest.fixture
def small_dataset():
    """
    Fixture con 8 muestras, 2 características y 2 grupos con ambas etiquetas.
    """
    return Dataset(
        features=np.array(
            [
                [0.0, 1.0],
                [1.0, 0.5],
                [-1.0, 0.2],
                [0.5, -0.5],
                [2.0, 1.5],
                [-0.5, -1.0],
                [1.5, 0.0],
                [-2.0, 0.3],
            ]
        ),
        labels=np.array([0, 1, 0, 1, 1, 0, 1, 0]),
        groups=np.array([0, 0, 0, 0, 1, 1, 1, 1]),
        feature_names=("x0", "x1"),
        group_names=("a", "b"),
    )


@pytest.fixture
def synthetic_dataset():
    """
    Fixture con un conjunto sintético pequeño de sesgo plantado.
    """
    return data_service.gen_synthetic({"n": 400, "seed": 1})


@pytest.fixture
def tiny_config(tmp_path):
    """
    Fixture con un experimento de reponderación mínimo (segundos de ejecución).
    """
    return ExperimentConfig.model_validate(
        {
            "data": {"kind": "synthetic", "config": {"n": 300, "seed": 3}},
            "model_dims": [5, 4, 1],
            "inner": {"epochs": 3, "batch_size": 64},
            "outer": {"K": 60, "T": 4, "snapshot_every": 2},
            "risk": {"eval_batch": 64},
            "method": "reweight",
            "repetitions": 2,
            "base_seed": 11,
            "output_dir": str(tmp_path / "results"),
        }
    )


@pytest.fixture
def write_csv(tmp_path):
    """
    Fixture que escribe un CSV temporal a partir de su texto y devuelve la ruta.
    """

    def _write(text: str, name: str = "data.csv"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write
