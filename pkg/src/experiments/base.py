"""
Base experiment class and registry.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import asdict
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field
from scipy import stats

from ..configuration import Configuration
from ..services.sampler import Realization, sample
from ..types.models import GeometryKind, SeedSpec
from ..types.state import ExperimentConfig, ExperimentKind, ExperimentReport, Summary

logger = logging.getLogger(__name__)


class ReplicationOutcome(BaseModel):
    """What one replication contributes to the aggregate."""
    index: int
    values: List[float] = Field(default_factory=list)
    refinement_flag: Optional[bool] = None
    flags: List[str] = Field(default_factory=list)


def summarize(values: Sequence[float]) -> Summary:
    """Mean, standard error and Student-t 95% interval."""
    arr = np.asarray(values, dtype=float)
    n = len(arr)
    mean = float(arr.mean())
    se = float(arr.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    half = float(stats.t.ppf(0.975, n - 1)) * se if n > 1 else 0.0
    return Summary(n=n, mean=mean, standard_error=se, ci95=(mean - half, mean + half))


def scaled_summary(summary: Summary, factor: float) -> Summary:
    lo, hi = summary.ci95
    bounds = sorted((lo * factor, hi * factor))
    return Summary(
        n=summary.n,
        mean=summary.mean * factor,
        standard_error=summary.standard_error * abs(factor),
        ci95=(bounds[0], bounds[1]),
    )


def tolerance(rel: float, target: float, standard_error: float) -> float:
    """Statistical and discretization error kept apart: max(rel |target|, 4 SE)."""
    return max(rel * abs(target), 4.0 * standard_error)


class BaseExperiment(ABC):
    """One Monte-Carlo experiment: predictions, replications and a verdict."""

    kind: ExperimentKind

    def __init__(self, config: ExperimentConfig, settings: Optional[Configuration] = None):
        self.config = config
        self.settings = settings or Configuration()

    @property
    def n_replications(self) -> int:
        return self.config.replications

    @property
    def radius_bound(self) -> Optional[float]:
        field = self.config.field
        if field is None or field.geometry.kind != GeometryKind.HYPERBOLIC2:
            return None
        return min(self.settings.hyperbolic_radius_bound, field.r_max)

    def seed(self, index: int) -> SeedSpec:
        return SeedSpec(base_seed=self.config.base_seed, stream=index)

    def realization(self, index: int) -> Realization:
        return sample(self.config.field, self.seed(index), tolerance=self.settings.certify_tolerance)

    def checks_refinement(self, index: int) -> bool:
        stride = self.config.refinement_stride
        return stride > 0 and index % stride == 0

    def validate(self) -> None:
        """Reject configs that cannot run; raises DomainError."""

    @abstractmethod
    def predict(self) -> Dict[str, Any]:
        """Analytic side of the comparison."""

    @abstractmethod
    def replicate(self, index: int) -> ReplicationOutcome:
        """Run replication `index` on its own seed stream."""

    def summarize(self, outcomes: Sequence[ReplicationOutcome]) -> Summary:
        return summarize([o.values[0] for o in outcomes])

    def replication_values(self, outcomes: Sequence[ReplicationOutcome]) -> List[float]:
        return [o.values[0] for o in outcomes]

    @abstractmethod
    def judge(
        self, summary: Summary, predictions: Dict[str, Any], outcomes: Sequence[ReplicationOutcome]
    ) -> Dict[str, Any]:
        """Fields of the report that compare measurement and prediction."""

    def report(
        self, summary: Summary, predictions: Dict[str, Any], outcomes: Sequence[ReplicationOutcome]
    ) -> ExperimentReport:
        verdict = self.judge(summary, predictions, outcomes)
        flags = sorted({flag for o in outcomes for flag in o.flags})
        refinement = [bool(o.refinement_flag) for o in outcomes if o.refinement_flag is not None]
        checked = [o.index for o in outcomes if o.refinement_flag is not None]
        if any(refinement):
            flags.append("under_resolved")
        details = dict(verdict.pop("details", {}))
        if checked:
            details["refinement_checked"] = checked
        return ExperimentReport(
            kind=self.kind,
            label=self.config.label,
            config=self.config.model_dump(mode="json"),
            base_seed=self.config.base_seed,
            replication_values=self.replication_values(outcomes),
            summary=summary,
            predictions=predictions,
            refinement_flags=refinement,
            flags=flags,
            details=details,
            **verdict,
        )


class ExperimentFactory:
    """Factory for creating experiments."""

    _experiments: Dict[ExperimentKind, type] = {}

    @classmethod
    def register_experiment(cls, kind: ExperimentKind, experiment_class: type):
        """Register an experiment class for a kind."""
        cls._experiments[kind] = experiment_class

    @classmethod
    def create_experiment(cls, config: ExperimentConfig, settings: Optional[Configuration] = None) -> BaseExperiment:
        if config.kind not in cls._experiments:
            raise ValueError(f"No experiment registered for kind: {config.kind}")
        return cls._experiments[config.kind](config, settings)

    @classmethod
    def get_available_kinds(cls) -> List[ExperimentKind]:
        return list(cls._experiments.keys())


def run_replication(config_payload: Dict[str, Any], settings_payload: Dict[str, Any], index: int) -> Dict[str, Any]:
    """Process-pool entry point; rebuilds the experiment from plain data."""
    # spawned workers start with an empty registry
    from . import covariance, density, matrix_oracle, spacing  # noqa: F401

    config = ExperimentConfig.model_validate(config_payload)
    experiment = ExperimentFactory.create_experiment(config, Configuration(**settings_payload))
    return experiment.replicate(index).model_dump()


def settings_payload(settings: Configuration) -> Dict[str, Any]:
    return asdict(settings)
