"""
Report Models
Serializable results emitted by the services and the CLI. Every top-level
report carries schema_version so stored JSON can be checked against the code.
"""

from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from src.core.config import SCHEMA_VERSION

Method = Literal["chi2", "bootstrap"]


class LrTestResult(BaseModel):
    """LR test of one null model against VVV"""

    model_config = ConfigDict(frozen=True)

    model: str
    eta: int = Field(ge=0)
    lr: float = Field(ge=0)
    df: int = Field(ge=0)
    p_chi2: float = Field(ge=0, le=1)
    p_boot: Optional[float] = Field(default=None, ge=0, le=1)
    boot_replicates: Optional[List[float]] = None
    h_threshold: Optional[float] = None
    exceedances: Optional[int] = None
    successful_replicates: Optional[int] = None
    failed_replicates: Optional[int] = None

    def p_value(self, method: Method) -> float:
        if method == "bootstrap":
            if self.p_boot is None:
                raise ValueError(f"{self.model}: no bootstrap p-value recorded")
            return self.p_boot
        return self.p_chi2

    def rejects_at(self, alpha: float) -> bool:
        """p <= alpha, using the bootstrap p-value when one was computed"""
        p = self.p_boot if self.p_boot is not None else self.p_chi2
        return p <= alpha

    def rejects_by_threshold(self) -> Optional[bool]:
        """
        LR_obs beyond the h-th smallest replicate, None without a bootstrap

        A missing threshold on a bootstrap row means the h-th smallest
        replicate is a failed one, which never rejects.
        """
        if self.h_threshold is None:
            return None if self.p_boot is None else False
        return self.lr > self.h_threshold


class ClosedTestReport(BaseModel):
    schema_version: str = SCHEMA_VERSION
    method: Method
    alpha: float
    k: int
    n: int
    p: int
    replicates: Optional[int] = None
    seed: Optional[int] = None
    vvv_eta: int
    two_loglik: Dict[str, float]
    rows: List[LrTestResult]
    adjusted: Dict[str, float]
    retained: str

    def row(self, model: str) -> LrTestResult:
        for row in self.rows:
            if row.model == model:
                return row
        raise KeyError(model)

    @property
    def raw_pvalues(self) -> Dict[str, float]:
        return {row.model: row.p_value(self.method) for row in self.rows}


class FitReport(BaseModel):
    schema_version: str = SCHEMA_VERSION
    model: str
    k: int
    n: int
    p: int
    eta: int
    two_loglik: float
    iterations: int
    converged: bool
    weights: List[float]
    means: List[List[float]]
    volumes: List[float]
    shapes: List[List[float]]
    orientations: List[List[List[float]]]
    classification: List[int]
    misallocated: Optional[int] = None


class IcRow(BaseModel):
    model: str
    eta: int
    two_loglik: float
    aic: float
    aic3: float
    aicc: Optional[float]
    aicu: Optional[float]
    awe: float
    bic: float
    caic: float
    icl: float


class IcTable(BaseModel):
    schema_version: str = SCHEMA_VERSION
    n: int
    rows: List[IcRow]
    best: Dict[str, str]

    def row(self, model: str) -> IcRow:
        for row in self.rows:
            if row.model == model:
                return row
        raise KeyError(model)


class ExperimentSummary(BaseModel):
    schema_version: str = SCHEMA_VERSION
    model: str
    n: int
    overlap: float
    mu22: float
    reps: int
    method: Method
    replicates: Optional[int] = None
    seed: int
    successes: int
    failures: int
    ks_distance: Optional[float] = None
    p_values: List[float] = Field(default_factory=list)
