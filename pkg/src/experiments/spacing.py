"""
Zero density along a fixed geodesic segment, compared with the Rice density.
"""

import logging
from typing import Any, Dict, Sequence

from ..errors import DomainError
from ..services import rice, zeroset
from ..types.models import SpacingConvention
from ..types.state import ExperimentKind, Summary
from .base import BaseExperiment, ExperimentFactory, ReplicationOutcome, tolerance

logger = logging.getLogger(__name__)


class SpacingExperiment(BaseExperiment):
    """Replicated level-crossing counts on one segment."""

    kind = ExperimentKind.SPACING

    @property
    def step(self) -> float:
        if self.config.step is not None:
            return self.config.step
        return rice.spacing(self.config.field, SpacingConvention.RICE_DEF) / 20.0

    def validate(self) -> None:
        seg = self.config.segment
        if len(seg.base.coords) != self.config.field.geometry.dim_x:
            raise DomainError("segment base does not match the field geometry")
        rice.spacing(self.config.field, SpacingConvention.RICE_DEF)

    def predict(self) -> Dict[str, Any]:
        spec = self.config.field
        report = rice.predict(spec)
        density = rice.rice_level_density(self.config.level, report.kappa2)
        return {
            **report.model_dump(),
            "level": self.config.level,
            "density": density,
            "expected_count": density * self.config.segment.length,
        }

    def replicate(self, index: int) -> ReplicationOutcome:
        field = self.realization(index)
        estimate = zeroset.count_level_crossings(
            field,
            self.config.component,
            self.config.segment,
            self.config.level,
            self.step,
            check_refinement=self.checks_refinement(index),
            expected_spacing=rice.spacing(self.config.field, SpacingConvention.RICE_DEF),
        )
        return ReplicationOutcome(
            index=index,
            values=[estimate.value / self.config.segment.length],
            refinement_flag=estimate.refinement_flag if self.checks_refinement(index) else None,
            flags=estimate.flags,
        )

    def judge(self, summary: Summary, predictions: Dict[str, Any], outcomes: Sequence[ReplicationOutcome]) -> Dict[str, Any]:
        target = predictions["density"]
        tol = tolerance(self.config.rel_tolerance, target, summary.standard_error)
        passed = abs(summary.mean - target) <= tol
        details: Dict[str, Any] = {"step": self.step}
        measured_spacing = None
        if summary.mean > 0 and self.config.level == 0.0:
            measured = 1.0 / summary.mean
            # delta method
            half = (summary.ci95[1] - summary.mean) / summary.mean**2
            measured_spacing = Summary(
                n=summary.n,
                mean=measured,
                standard_error=summary.standard_error / summary.mean**2,
                ci95=(measured - half, measured + half),
            )
            details["relative_gap"] = {
                name: (measured - value) / value for name, value in predictions["spacing"].items()
            }
            details["closest_convention"] = min(
                predictions["spacing"], key=lambda name: abs(measured - predictions["spacing"][name])
            )
        logger.info(
            "spacing: density %.5f +- %.5f vs Rice %.5f -> %s",
            summary.mean, summary.standard_error, target, "pass" if passed else "fail",
        )
        return {
            "measured_constant": measured_spacing,
            "target": target,
            "tolerance": tol,
            "passed": passed,
            "details": details,
        }


ExperimentFactory.register_experiment(ExperimentKind.SPACING, SpacingExperiment)
