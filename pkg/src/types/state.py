"""
Experiment configuration, reports and the LangGraph pipeline state.
"""

import json
import operator
from enum import Enum
from typing import Annotated, Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing_extensions import TypedDict

from .models import (
    FieldSpec,
    GeodesicSegment,
    PredictionMode,
    Region,
    SpacingConvention,
)


class ExperimentKind(str, Enum):
    """Experiment types the harness can run."""
    SPACING = "spacing"
    DENSITY = "density"
    COVARIANCE = "covariance"
    MATRIX_ORACLE = "matrix_oracle"
    UNIVERSALITY = "universality"


class ExperimentConfig(BaseModel):
    """Everything needed to replay one experiment."""
    model_config = ConfigDict(frozen=True)

    kind: ExperimentKind = Field(description="Experiment type")
    field: Optional[FieldSpec] = Field(default=None, description="Sampled field")
    segment: Optional[GeodesicSegment] = Field(default=None, description="Segment for spacing runs")
    level: float = Field(default=0.0, description="Crossing level u")
    step: Optional[float] = Field(default=None, gt=0, description="Sampling step along the segment")
    region: Optional[Region] = Field(default=None, description="Region for density runs")
    resolution: Optional[float] = Field(default=None, gt=0, description="Grid node spacing")
    component: int = Field(default=0, ge=0, description="Component for 1-D and nodal measurements")
    lag_distances: Optional[Tuple[float, ...]] = Field(default=None, description="Covariance lags")
    matrix_n: int = Field(default=2, ge=1, le=4)
    matrix_k: int = Field(default=2, ge=1, le=4)
    samples: int = Field(default=100_000, ge=1)
    replications: int = Field(default=200, ge=2)
    base_seed: int = Field(default=0, ge=0, lt=2**64)
    convention: SpacingConvention = SpacingConvention.WAVELENGTH
    mode: PredictionMode = PredictionMode.CHI
    rel_tolerance: float = Field(default=0.03, gt=0)
    refinement_stride: int = Field(default=10, ge=0, description="Check refinement every k-th replication; 0 disables")
    label: Optional[str] = None

    @field_validator("mode", mode="before")
    @classmethod
    def _mode_alias(cls, value: Any) -> Any:
        return PredictionMode(value) if isinstance(value, str) else value

    @model_validator(mode="after")
    def _complete(self) -> "ExperimentConfig":
        needs_field = self.kind in (
            ExperimentKind.SPACING,
            ExperimentKind.DENSITY,
            ExperimentKind.COVARIANCE,
        )
        if needs_field and self.field is None:
            raise ValueError(f"{self.kind.value} experiments need a field")
        if self.kind == ExperimentKind.SPACING and self.segment is None:
            raise ValueError("spacing experiments need a segment")
        if self.kind == ExperimentKind.DENSITY and self.region is None:
            raise ValueError("density experiments need a region")
        if self.kind == ExperimentKind.MATRIX_ORACLE and self.matrix_k > self.matrix_n:
            raise ValueError("matrix oracle needs k <= n")
        if self.field is not None and self.component >= self.field.dim_v:
            raise ValueError("component index out of range")
        return self


class UniversalityConfig(BaseModel):
    """Matched density experiments on several geometries."""
    model_config = ConfigDict(frozen=True)

    configs: Tuple[ExperimentConfig, ...] = Field(min_length=1)

    @model_validator(mode="after")
    def _matched(self) -> "UniversalityConfig":
        if any(c.kind != ExperimentKind.DENSITY for c in self.configs):
            raise ValueError("universality runs are built from density experiments")
        if len({c.field.dim_v for c in self.configs}) != 1:
            raise ValueError("all geometries must share dim_v")
        return self


class Summary(BaseModel):
    """Mean, standard error and two-sided 95% confidence interval."""
    n: int
    mean: float
    standard_error: float
    ci95: Tuple[float, float]


class ExperimentReport(BaseModel):
    """Aggregated result of one experiment."""
    kind: ExperimentKind
    label: Optional[str] = None
    config: Dict[str, Any] = Field(default_factory=dict)
    base_seed: int = 0
    replication_values: List[float] = Field(default_factory=list)
    summary: Optional[Summary] = None
    measured_constant: Optional[Summary] = None
    predictions: Dict[str, Any] = Field(default_factory=dict)
    target: Optional[float] = None
    tolerance: Optional[float] = None
    passed: bool = False
    refinement_flags: List[bool] = Field(default_factory=list)
    flags: List[str] = Field(default_factory=list)
    details: Dict[str, Any] = Field(default_factory=dict)
    sub_reports: List["ExperimentReport"] = Field(default_factory=list)
    wall_clock_seconds: float = Field(default=0.0, exclude=True)

    def to_canonical_json(self) -> str:
        """Key-sorted JSON; identical configs give identical bytes."""
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"


class ExperimentState(TypedDict, total=False):
    """State carried through the experiment graph."""
    config: ExperimentConfig
    predictions: Dict[str, Any]
    outcomes: List[Dict[str, Any]]
    summary: Summary
    report: ExperimentReport
    started_at: float
    completed_steps: Annotated[List[str], operator.add]


class IndexedReport(TypedDict):
    index: int
    report: ExperimentReport


class UniversalityState(TypedDict, total=False):
    """State for the cross-geometry comparison graph."""
    universality: UniversalityConfig
    reports: Annotated[List[IndexedReport], operator.add]
    report: ExperimentReport
    completed_steps: Annotated[List[str], operator.add]


class GeometryRunState(TypedDict):
    """Payload sent to one geometry of the universality fan-out."""
    index: int
    config: ExperimentConfig

