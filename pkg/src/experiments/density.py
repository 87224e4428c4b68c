"""
Zero-set density per unit volume, turned into the dimensionless constant
density x elementary cell volume.
"""

import logging
from functools import cached_property
from typing import Any, Dict, Sequence

from ..errors import DomainError
from ..services import geometry, rice, zeroset
from ..services.geometry import RegionGrid
from ..types.models import PredictionMode, SpacingConvention
from ..types.state import ExperimentKind, Summary
from .base import BaseExperiment, ExperimentFactory, ReplicationOutcome, scaled_summary, tolerance

logger = logging.getLogger(__name__)


class DensityExperiment(BaseExperiment):
    """Point-zero counts (dim_v = dim_x) or nodal lengths (dim_v = 1 on surfaces)."""

    kind = ExperimentKind.DENSITY

    @property
    def resolution(self) -> float:
        if self.config.resolution is not None:
            return self.config.resolution
        return rice.spacing(self.config.field, SpacingConvention.WAVELENGTH) / 20.0

    @cached_property
    def grid(self) -> RegionGrid:
        spec = self.config.field
        return geometry.grid_region(spec.geometry, self.config.region, self.resolution, self.radius_bound)

    @cached_property
    def volume(self) -> float:
        spec = self.config.field
        return geometry.region_volume(spec.geometry, self.config.region, self.radius_bound)

    @property
    def counts_points(self) -> bool:
        return self.config.field.dim_v == self.config.field.geometry.dim_x

    def validate(self) -> None:
        spec = self.config.field
        pair = (spec.geometry.dim_x, spec.dim_v)
        if pair not in ((2, 1), (2, 2), (3, 3)):
            raise DomainError(f"density experiments support (dim_x, dim_v) in (2,1), (2,2), (3,3); got {pair}")
        rice.spacing(spec)
        _ = self.volume

    def predict(self) -> Dict[str, Any]:
        report = rice.predict(self.config.field, self.config.region, self.radius_bound)
        return report.model_dump()

    def replicate(self, index: int) -> ReplicationOutcome:
        field = self.realization(index)
        check = self.checks_refinement(index)
        if self.counts_points:
            estimate = zeroset.count_point_zeros(field, self.grid, check_refinement=check)
        else:
            estimate = zeroset.nodal_length(field, self.config.component, self.grid, check_refinement=check)
        return ReplicationOutcome(
            index=index,
            values=[estimate.value / self.volume],
            refinement_flag=estimate.refinement_flag if check else None,
            flags=estimate.flags,
        )

    def judge(self, summary: Summary, predictions: Dict[str, Any], outcomes: Sequence[ReplicationOutcome]) -> Dict[str, Any]:
        convention = self.config.convention.value
        cell = predictions["cell_volume"][convention]
        constant = scaled_summary(summary, cell)
        target = predictions["constants"][self.config.mode.value][convention]
        tol = tolerance(self.config.rel_tolerance, target, constant.standard_error)
        passed = abs(constant.mean - target) <= tol
        comparisons = {}
        for mode in PredictionMode:
            value = predictions["constants"][mode.value][convention]
            comparisons[mode.value] = {
                "constant": value,
                "gap": constant.mean - value,
                "within_tolerance": abs(constant.mean - value)
                <= tolerance(self.config.rel_tolerance, value, constant.standard_error),
            }
        measure = predictions["predicted_measure"][self.config.mode.value][convention]
        logger.info(
            "density %s: constant %.4f +- %.4f vs %s %.4f -> %s",
            self.config.field.geometry.kind.value,
            constant.mean,
            constant.standard_error,
            self.config.mode.value,
            target,
            "pass" if passed else "fail",
        )
        return {
            "measured_constant": constant,
            "target": target,
            "tolerance": tol,
            "passed": passed,
            "details": {
                "measure": "count" if self.counts_points else "length",
                "resolution": self.resolution,
                "grid_shape": list(self.grid.shape),
                "region_volume": self.volume,
                "mean_measure": summary.mean * self.volume,
                "predicted_measure": measure,
                "modes": comparisons,
            },
        }


ExperimentFactory.register_experiment(ExperimentKind.DENSITY, DensityExperiment)
