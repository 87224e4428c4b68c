"""
LangGraph pipeline for one Monte-Carlo experiment:
validate_config -> (predict || replicate) -> aggregate -> judge.
"""

import asyncio
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from typing import Any, Dict, List, Optional

from langchain_core.runnables import RunnableConfig
from langgraph.graph import END, START, StateGraph

from ..configuration import Configuration
from ..experiments import ExperimentFactory, ReplicationOutcome, run_replication
from ..experiments.base import BaseExperiment, settings_payload
from ..types.state import (
    ExperimentConfig,
    ExperimentKind,
    ExperimentReport,
    ExperimentState,
    UniversalityConfig,
)
from .subgraphs import create_universality_subgraph

logger = logging.getLogger(__name__)


async def run_replications(experiment: BaseExperiment, workers: int) -> List[ReplicationOutcome]:
    """All replications in index order, inline or on a process pool."""
    n = experiment.n_replications
    if workers <= 1:
        return [experiment.replicate(i) for i in range(n)]
    loop = asyncio.get_running_loop()
    payload = experiment.config.model_dump(mode="json")
    settings = settings_payload(experiment.settings)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = await asyncio.gather(
            *(loop.run_in_executor(pool, run_replication, payload, settings, i) for i in range(n))
        )
    return [ReplicationOutcome.model_validate(r) for r in results]


class ExperimentGraph:
    """
    Experiment workflow graph.
    Predictions and replications run as parallel branches and meet in aggregate.
    """

    def __init__(self, settings: Optional[Configuration] = None):
        self.settings = settings or Configuration.from_runnable_config()
        self.graph = None
        self.universality_graph = None
        self._build_graph()

    def _build_graph(self):
        """Build the experiment graph and the universality subgraph on top of it."""
        builder = StateGraph(ExperimentState)

        # Add nodes
        builder.add_node("validate_config", self._validate_config)
        builder.add_node("predict", self._predict)
        builder.add_node("replicate", self._replicate)
        builder.add_node("aggregate", self._aggregate)
        builder.add_node("judge", self._judge)

        # Add edges
        builder.add_edge(START, "validate_config")
        builder.add_edge("validate_config", "predict")
        builder.add_edge("validate_config", "replicate")
        builder.add_edge("predict", "aggregate")
        builder.add_edge("replicate", "aggregate")
        builder.add_edge("aggregate", "judge")
        builder.add_edge("judge", END)

        self.graph = builder.compile()
        self.universality_graph = create_universality_subgraph(self.graph)

    @staticmethod
    def _experiment(state: ExperimentState, config: RunnableConfig) -> BaseExperiment:
        settings = Configuration.from_runnable_config(config)
        return ExperimentFactory.create_experiment(state["config"], settings)

    async def _validate_config(self, state: ExperimentState, config: RunnableConfig) -> Dict[str, Any]:
        """Reject configs that cannot run before any sampling happens."""
        experiment = self._experiment(state, config)
        experiment.validate()
        logger.info("validated %s experiment (%d replications)", experiment.kind.value, experiment.n_replications)
        return {"started_at": time.perf_counter(), "completed_steps": ["validate_config"]}

    async def _predict(self, state: ExperimentState, config: RunnableConfig) -> Dict[str, Any]:
        predictions = self._experiment(state, config).predict()
        return {"predictions": predictions, "completed_steps": ["predict"]}

    async def _replicate(self, state: ExperimentState, config: RunnableConfig) -> Dict[str, Any]:
        experiment = self._experiment(state, config)
        outcomes = await run_replications(experiment, experiment.settings.workers)
        logger.info("%s: %d replications done", experiment.kind.value, len(outcomes))
        return {"outcomes": [o.model_dump() for o in outcomes], "completed_steps": ["replicate"]}

    async def _aggregate(self, state: ExperimentState, config: RunnableConfig) -> Dict[str, Any]:
        experiment = self._experiment(state, config)
        outcomes = [ReplicationOutcome.model_validate(o) for o in state["outcomes"]]
        return {"summary": experiment.summarize(outcomes), "completed_steps": ["aggregate"]}

    async def _judge(self, state: ExperimentState, config: RunnableConfig) -> Dict[str, Any]:
        experiment = self._experiment(state, config)
        outcomes = [ReplicationOutcome.model_validate(o) for o in state["outcomes"]]
        report = experiment.report(state["summary"], state["predictions"], outcomes)
        report.wall_clock_seconds = time.perf_counter() - state["started_at"]
        logger.info("%s finished in %.1fs", experiment.kind.value, report.wall_clock_seconds)
        if "under_resolved" in report.flags:
            logger.warning("%s: estimates moved by more than 5%% under grid refinement", experiment.kind.value)
        return {"report": report, "completed_steps": ["judge"]}

    def _runnable_config(self) -> RunnableConfig:
        return {"configurable": asdict(self.settings)}

    async def run_experiment(self, config: ExperimentConfig) -> ExperimentReport:
        """Run the complete experiment workflow."""
        final_state = await self.graph.ainvoke(
            {"config": config, "completed_steps": []}, config=self._runnable_config()
        )
        return final_state["report"]

    async def _run_kind(self, config: ExperimentConfig, kind: ExperimentKind) -> ExperimentReport:
        if config.kind != kind:
            raise ValueError(f"expected a {kind.value} config, got {config.kind.value}")
        return await self.run_experiment(config)

    async def run_spacing(self, config: ExperimentConfig) -> ExperimentReport:
        return await self._run_kind(config, ExperimentKind.SPACING)

    async def run_density(self, config: ExperimentConfig) -> ExperimentReport:
        return await self._run_kind(config, ExperimentKind.DENSITY)

    async def run_covariance(self, config: ExperimentConfig) -> ExperimentReport:
        return await self._run_kind(config, ExperimentKind.COVARIANCE)

    async def run_matrix_oracle(self, config: ExperimentConfig) -> ExperimentReport:
        return await self._run_kind(config, ExperimentKind.MATRIX_ORACLE)

    async def run_universality(self, universality: UniversalityConfig) -> ExperimentReport:
        """Matched density runs per geometry plus pairwise interval comparison."""
        final_state = await self.universality_graph.ainvoke(
            {"universality": universality, "reports": [], "completed_steps": []},
            config=self._runnable_config(),
        )
        return final_state["report"]

    async def run_scale_check(self, config: ExperimentConfig, factor: float = 7.3) -> ExperimentReport:
        """Same seeds with every component variance times `factor`; estimates must not move."""
        if config.field is None or config.kind not in (ExperimentKind.SPACING, ExperimentKind.DENSITY):
            raise ValueError("scale checks run on spacing or density configs")
        scaled = config.model_copy(update={"field": config.field.scaled(factor)})
        base_report = await self.run_experiment(config)
        scaled_report = await self.run_experiment(scaled)
        identical = base_report.replication_values == scaled_report.replication_values
        differences = [abs(a - b) for a, b in zip(base_report.replication_values, scaled_report.replication_values)]
        logger.info("scale check x%s: identical=%s", factor, identical)
        return ExperimentReport(
            kind=config.kind,
            label="scale_invariance",
            config=config.model_dump(mode="json"),
            base_seed=config.base_seed,
            replication_values=base_report.replication_values,
            summary=base_report.summary,
            passed=identical,
            details={
                "factor": factor,
                "identical": identical,
                "max_abs_difference": max(differences, default=0.0),
            },
            sub_reports=[base_report, scaled_report],
            wall_clock_seconds=base_report.wall_clock_seconds + scaled_report.wall_clock_seconds,
        )
