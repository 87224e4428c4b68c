"""
Empirical covariance at lag distances against the analytic spherical function.
"""

import logging
import math
from functools import cached_property
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from ..errors import DomainError
from ..services import rice
from ..services.geometry import exp_map
from ..services.sampler import pair_products
from ..services.spectra import mixture_covariance
from ..types.models import GeometryKind, SpacingConvention
from ..types.state import ExperimentKind, Summary
from .base import BaseExperiment, ExperimentFactory, ReplicationOutcome, summarize

logger = logging.getLogger(__name__)

MIN_REPLICATIONS = 100
ABSOLUTE_TOLERANCE = 0.02
DEFAULT_LAGS = 20


def _base_point(kind: GeometryKind, dim_x: int) -> np.ndarray:
    if kind == GeometryKind.SPHERE2:
        return np.array([math.pi / 2.0, 0.0])
    return np.zeros(dim_x)


class CovarianceExperiment(BaseExperiment):
    """Products Phi(p) Phi(q) over replications at pairs spread along one geodesic."""

    kind = ExperimentKind.COVARIANCE

    @cached_property
    def distances(self) -> Tuple[float, ...]:
        if self.config.lag_distances is not None:
            return tuple(float(d) for d in self.config.lag_distances)
        spec = self.config.field
        if spec.geometry.kind == GeometryKind.HYPERBOLIC2:
            top = spec.r_max
        else:
            top = 2.0 * rice.spacing(spec, SpacingConvention.WAVELENGTH)
            if spec.geometry.kind == GeometryKind.SPHERE2:
                top = min(top, math.pi)
        return tuple(float(d) for d in np.linspace(0.0, top, DEFAULT_LAGS + 1)[1:])

    @cached_property
    def pairs(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        g = self.config.field.geometry
        base = _base_point(g.kind, g.dim_x)
        # sphere lags run along the equator, flat and disk lags along the first axis
        direction = np.zeros(g.dim_x)
        direction[1 if g.kind == GeometryKind.SPHERE2 else 0] = 1.0
        return [(base, exp_map(g, base, d * direction)) for d in self.distances]

    def validate(self) -> None:
        if self.n_replications < MIN_REPLICATIONS:
            raise DomainError(f"covariance runs need at least {MIN_REPLICATIONS} replications")
        spec = self.config.field
        if any(d < 0 for d in self.distances):
            raise DomainError("lag distances must be nonnegative")
        if spec.geometry.kind == GeometryKind.HYPERBOLIC2 and max(self.distances) > spec.r_max + 1e-9:
            raise DomainError(f"lag distances must stay within r_max={spec.r_max}")
        if spec.geometry.kind == GeometryKind.SPHERE2 and max(self.distances) > math.pi:
            raise DomainError("sphere lag distances must not exceed pi")

    def predict(self) -> Dict[str, Any]:
        exact = np.atleast_1d(mixture_covariance(self.config.field.spectrum, np.asarray(self.distances)))
        return {
            "distances": list(self.distances),
            "covariance": [float(v) for v in exact],
            "kappa2": rice.second_moment(self.config.field),
        }

    def replicate(self, index: int) -> ReplicationOutcome:
        products = pair_products(self.realization(index), self.pairs, self.config.component)
        return ReplicationOutcome(index=index, values=[float(v) for v in products])

    def lag_summaries(self, outcomes: Sequence[ReplicationOutcome]) -> List[Summary]:
        table = np.array([o.values for o in outcomes])
        return [summarize(table[:, j]) for j in range(table.shape[1])]

    def summarize(self, outcomes: Sequence[ReplicationOutcome]) -> Summary:
        """Mean over lags of the per-replication product, mostly for the CSV summary."""
        return summarize([float(np.mean(o.values)) for o in outcomes])

    def replication_values(self, outcomes: Sequence[ReplicationOutcome]) -> List[float]:
        return []

    def judge(self, summary: Summary, predictions: Dict[str, Any], outcomes: Sequence[ReplicationOutcome]) -> Dict[str, Any]:
        lags = []
        worst = 0.0
        passed = True
        for d, exact, s in zip(predictions["distances"], predictions["covariance"], self.lag_summaries(outcomes)):
            tol = max(ABSOLUTE_TOLERANCE, 4.0 * s.standard_error)
            gap = abs(s.mean - exact)
            ok = gap <= tol
            passed = passed and ok
            worst = max(worst, gap)
            lags.append(
                {
                    "distance": d,
                    "analytic": exact,
                    "mean": s.mean,
                    "standard_error": s.standard_error,
                    "tolerance": tol,
                    "passed": ok,
                }
            )
        logger.info(
            "covariance %s: %d lags, max gap %.4f -> %s",
            self.config.field.geometry.kind.value,
            len(lags),
            worst,
            "pass" if passed else "fail",
        )
        return {
            "measured_constant": None,
            "target": None,
            "tolerance": ABSOLUTE_TOLERANCE,
            "passed": passed,
            "details": {"lags": lags, "max_gap": worst},
        }


ExperimentFactory.register_experiment(ExperimentKind.COVARIANCE, CovarianceExperiment)
