"""
Monte-Carlo E[sqrt(det(M^T M))] for an n x k standard Gaussian matrix.
"""

import logging
import math
from typing import Any, Dict, List, Sequence

import numpy as np
from scipy import stats

from ..errors import DomainError
from ..services.rice import expected_parallelotope_volume
from ..services.sampler import make_rng
from ..types.models import PredictionMode
from ..types.state import ExperimentKind, Summary
from .base import BaseExperiment, ExperimentFactory, ReplicationOutcome, tolerance

logger = logging.getLogger(__name__)

BATCH_SIZE = 10_000
MIN_SAMPLES = 100_000


def parallelotope_volumes(rng: np.random.Generator, n: int, k: int, size: int) -> np.ndarray:
    """k-volumes spanned by the columns of `size` independent n x k Gaussian matrices."""
    m = rng.standard_normal((size, n, k))
    gram = np.einsum("sij,sil->sjl", m, m)
    return np.sqrt(np.clip(np.linalg.det(gram), 0.0, None))


class MatrixOracleExperiment(BaseExperiment):
    """Batched volume samples; each batch draws from its own seed stream."""

    kind = ExperimentKind.MATRIX_ORACLE

    @property
    def n_replications(self) -> int:
        return max(2, math.ceil(self.config.samples / BATCH_SIZE))

    def batch_size(self, index: int) -> int:
        sizes = [len(chunk) for chunk in np.array_split(np.arange(self.config.samples), self.n_replications)]
        return sizes[index]

    def validate(self) -> None:
        if self.config.samples < MIN_SAMPLES:
            raise DomainError(f"matrix oracle needs at least {MIN_SAMPLES} samples")
        if not 1 <= self.config.matrix_k <= self.config.matrix_n <= 4:
            raise DomainError("matrix oracle needs 1 <= k <= n <= 4")

    def predict(self) -> Dict[str, Any]:
        n, k = self.config.matrix_n, self.config.matrix_k
        return {
            "n": n,
            "k": k,
            "volume": {mode.value: expected_parallelotope_volume(n, k, mode=mode) for mode in PredictionMode},
        }

    def replicate(self, index: int) -> ReplicationOutcome:
        size = self.batch_size(index)
        volumes = parallelotope_volumes(make_rng(self.seed(index)), self.config.matrix_n, self.config.matrix_k, size)
        return ReplicationOutcome(
            index=index,
            values=[float(volumes.mean()), float(np.mean(volumes**2)), float(size)],
        )

    def summarize(self, outcomes: Sequence[ReplicationOutcome]) -> Summary:
        """Pooled mean and CLT error over every sample, not over batch means."""
        sizes = np.array([o.values[2] for o in outcomes])
        total = float(sizes.sum())
        mean = float(np.dot(sizes, [o.values[0] for o in outcomes]) / total)
        second = float(np.dot(sizes, [o.values[1] for o in outcomes]) / total)
        se = math.sqrt(max(second - mean**2, 0.0) / total)
        half = float(stats.norm.ppf(0.975)) * se
        return Summary(n=int(total), mean=mean, standard_error=se, ci95=(mean - half, mean + half))

    def replication_values(self, outcomes: Sequence[ReplicationOutcome]) -> List[float]:
        return [o.values[0] for o in outcomes]

    def judge(self, summary: Summary, predictions: Dict[str, Any], outcomes: Sequence[ReplicationOutcome]) -> Dict[str, Any]:
        target = predictions["volume"][PredictionMode.CHI.value]
        factorial = predictions["volume"][PredictionMode.FACTORIAL.value]
        tol = tolerance(self.config.rel_tolerance, target, summary.standard_error)
        passed = abs(summary.mean - target) <= tol
        factorial_refuted = abs(summary.mean - factorial) > tolerance(self.config.rel_tolerance, factorial, summary.standard_error)
        logger.info(
            "matrix oracle n=%d k=%d: %.5f +- %.5f, chi %.5f, factorial %.5f%s",
            self.config.matrix_n,
            self.config.matrix_k,
            summary.mean,
            summary.standard_error,
            target,
            factorial,
            " (refuted)" if factorial_refuted else "",
        )
        return {
            "measured_constant": summary,
            "target": target,
            "tolerance": tol,
            "passed": passed,
            "details": {"factorial_value": factorial, "factorial_refuted": factorial_refuted, "batches": len(outcomes)},
        }


ExperimentFactory.register_experiment(ExperimentKind.MATRIX_ORACLE, MatrixOracleExperiment)
