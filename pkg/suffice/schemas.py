from pathlib import Path
from typing import Annotated, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Seed = Annotated[int, Field(ge=0, lt=2**64)]


class FrozenModel(BaseModel):
    """Schema base inmutable que rechaza claves desconocidas"""

    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)


class SyntheticConfig(FrozenModel):
    """Schema para el generador sintético con sesgo plantado"""

    n: int = Field(4000, ge=1)
    pi: float = Field(0.5, gt=0.0, lt=1.0)
    base_rates: Tuple[float, float] = (0.3, 0.6)
    core_dim: int = Field(4, ge=1)
    core_sep: float = Field(0.5, gt=0.0)
    core_noise: float = Field(1.0, gt=0.0)
    spurious_strength: float = Field(2.0, ge=0.0)
    spurious_noise: float = Field(0.5, gt=0.0)
    seed: Seed = 0

    @field_validator("base_rates")
    @classmethod
    def validate_base_rates(cls, v: Tuple[float, float]) -> Tuple[float, float]:
        """Las tasas base deben estar estrictamente dentro de (0, 1)"""
        if any(not 0.0 < rate < 1.0 for rate in v):
            raise ValueError(f"Tasas base fuera de (0, 1): {v}")
        return v


class SplitSpec(FrozenModel):
    """Schema para la partición entrenamiento/validación/prueba"""

    train_frac: float = Field(0.7, gt=0.0, lt=1.0)
    val_frac: float = Field(0.1, gt=0.0, lt=1.0)
    test_frac: float = Field(0.2, gt=0.0, lt=1.0)
    stratified: bool = False
    seed: Seed = 0

    @model_validator(mode="after")
    def validate_sum(self) -> "SplitSpec":
        total = self.train_frac + self.val_frac + self.test_frac
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"Las fracciones deben sumar 1, suman {total}")
        return self

    @property
    def fractions(self) -> Tuple[float, float, float]:
        return (self.train_frac, self.val_frac, self.test_frac)


class InnerConfig(FrozenModel):
    """Schema para el bucle interno (ERM ponderado con SGD y momentum)"""

    epochs: int = Field(100, ge=1)
    lr: float = Field(0.1, gt=0.0)
    momentum: float = Field(0.9, ge=0.0, lt=1.0)
    batch_size: int = Field(128, ge=1)
    tol: float = Field(1e-5, ge=0.0)
    batch_source: Literal["selected", "all"] = "selected"
    seed: Seed = 0


class RiskConfig(FrozenModel):
    """Schema para el riesgo externo IRMv1 / REx"""

    variant: Literal["IRMv1", "REx"] = "IRMv1"
    lam: float = Field(1.0, ge=0.0, alias="lambda")
    eval_batch: int = Field(256, ge=1)
    penalty_mode: Literal["dummy_scalar", "last_layer"] = "dummy_scalar"


class OuterConfig(FrozenModel):
    """Schema para el bucle externo sobre las probabilidades s"""

    K: int = Field(800, ge=1)
    iters: int = Field(500, ge=1, alias="T")
    optimizer: Literal["projected_sgd", "projected_adam"] = "projected_adam"
    lr: float = Field(2.5, gt=0.0)
    cosine_schedule: bool = True
    adam_betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = Field(1e-8, gt=0.0)
    prob_clamp: float = Field(1e-4, gt=0.0, lt=0.5)
    baseline: bool = False
    snapshot_every: Optional[int] = Field(None, ge=1)
    log_every: int = Field(50, ge=1)
    seed: Seed = 0

    @field_validator("adam_betas")
    @classmethod
    def validate_betas(cls, v: Tuple[float, float]) -> Tuple[float, float]:
        """Los betas de Adam deben estar en [0, 1)"""
        if any(not 0.0 <= beta < 1.0 for beta in v):
            raise ValueError(f"Betas de Adam fuera de [0, 1): {v}")
        return v


class CsvSource(FrozenModel):
    """Schema para un origen de datos CSV"""

    kind: Literal["csv"] = "csv"
    path: Path
    label_col: str
    group_col: str
    feature_cols: Optional[List[str]] = None


class SyntheticSource(FrozenModel):
    """Schema para un origen de datos sintético"""

    kind: Literal["synthetic"] = "synthetic"
    config: SyntheticConfig = SyntheticConfig()


DataSource = Annotated[Union[CsvSource, SyntheticSource], Field(discriminator="kind")]

Method = Literal["erm", "irmv1_reg", "reweight"]


class ExperimentConfig(FrozenModel):
    """Schema para un experimento completo; refleja el documento JSON campo a campo"""

    data: DataSource = SyntheticSource()
    split: SplitSpec = SplitSpec()
    model_dims: Optional[List[int]] = None
    inner: InnerConfig = InnerConfig()
    outer: OuterConfig = OuterConfig()
    risk: RiskConfig = RiskConfig()
    method: Method = "reweight"
    noise_rho: float = Field(0.0, ge=0.0, le=1.0)
    repetitions: int = Field(5, ge=1)
    base_seed: Seed = 0
    output_dir: Path = Path("results")
    group_pair: Optional[Tuple[str, str]] = None

    @field_validator("model_dims")
    @classmethod
    def validate_model_dims(cls, v: Optional[List[int]]) -> Optional[List[int]]:
        """Las dimensiones deben ser positivas y terminar en 1"""
        if v is None:
            return v
        if len(v) < 2 or any(d < 1 for d in v) or v[-1] != 1:
            raise ValueError(f"Dimensiones de modelo inválidas: {v}")
        return v


class GroupCounts(BaseModel):
    """Conteos de la matriz de confusión de un grupo"""

    tp: int = Field(0, ge=0)
    fp: int = Field(0, ge=0)
    tn: int = Field(0, ge=0)
    fn: int = Field(0, ge=0)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


class GroupConfusion(BaseModel):
    """Matrices de confusión 2x2 por grupo"""

    counts: Dict[int, GroupCounts]

    @property
    def n(self) -> int:
        return sum(c.total for c in self.counts.values())


class GroupRates(BaseModel):
    """Tasas condicionales de un grupo; None cuando no están definidas"""

    n: int
    accuracy: Optional[float] = None
    positive_rate: Optional[float] = None
    ppv: Optional[float] = None
    npv: Optional[float] = None
    tpr: Optional[float] = None
    fpr: Optional[float] = None


class MetricReport(BaseModel):
    """Reporte de utilidad y equidad sobre un conjunto evaluado"""

    accuracy: float = Field(..., ge=0.0, le=1.0)
    suf_gap: Optional[float] = Field(None, ge=0.0, le=1.0)
    dp_gap: Optional[float] = Field(None, ge=0.0, le=1.0)
    eo_gap: Optional[float] = Field(None, ge=0.0, le=1.0)
    acc_gap: Optional[float] = Field(None, ge=0.0, le=1.0)
    ppv_gap: Optional[float] = Field(None, ge=0.0, le=1.0)
    suf_pair: Optional[Tuple[str, str]] = None
    per_group: Dict[str, GroupRates] = {}
    undefined_cells: List[Tuple[str, str]] = []


class MetricSummary(BaseModel):
    """Media y error estándar de una métrica sobre repeticiones"""

    mean: Optional[float] = None
    stderr: Optional[float] = None
