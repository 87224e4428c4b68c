"""Experiment implementations; importing the package registers every kind."""

from .base import BaseExperiment, ExperimentFactory, ReplicationOutcome, run_replication, summarize
from .covariance import CovarianceExperiment
from .density import DensityExperiment
from .matrix_oracle import MatrixOracleExperiment
from .spacing import SpacingExperiment
