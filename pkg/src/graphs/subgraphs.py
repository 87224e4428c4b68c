"""
Subgraphs for the experiment pipelines.

The universality subgraph fans matched density experiments out over the
geometries, runs each one through the experiment pipeline and compares the
resulting constants.
"""

import itertools
import logging
from typing import Any, Dict, List

from langchain_core.runnables import RunnableConfig
from langgraph.graph import END, START, StateGraph
from langgraph.types import Send

from ..types.state import (
    ExperimentKind,
    ExperimentReport,
    GeometryRunState,
    UniversalityState,
)

logger = logging.getLogger(__name__)


def intervals_overlap(a: ExperimentReport, b: ExperimentReport) -> bool:
    lo_a, hi_a = a.measured_constant.ci95
    lo_b, hi_b = b.measured_constant.ci95
    return max(lo_a, lo_b) <= min(hi_a, hi_b)


def create_universality_subgraph(pipeline):
    """
    Create the cross-geometry comparison graph.

    `pipeline` is the compiled single-experiment graph; every geometry runs
    through it with the caller's runnable config.
    """

    async def plan(state: UniversalityState) -> Dict[str, Any]:
        configs = state["universality"].configs
        logger.info("universality: %d geometries", len(configs))
        return {"completed_steps": ["plan"]}

    def fan_out(state: UniversalityState) -> List[Send]:
        return [
            Send("run_geometry", {"index": i, "config": c})
            for i, c in enumerate(state["universality"].configs)
        ]

    async def run_geometry(state: GeometryRunState, config: RunnableConfig) -> Dict[str, Any]:
        settings = {"configurable": dict(config.get("configurable", {}))}
        result = await pipeline.ainvoke({"config": state["config"], "completed_steps": []}, config=settings)
        return {
            "reports": [{"index": state["index"], "report": result["report"]}],
            "completed_steps": [f"run_geometry:{state['index']}"],
        }

    async def compare_constants(state: UniversalityState) -> Dict[str, Any]:
        reports = [item["report"] for item in sorted(state["reports"], key=lambda item: item["index"])]
        if len(reports) == 1:
            return {"report": reports[0], "completed_steps": ["compare_constants"]}
        return {"report": _universality_report(state, reports), "completed_steps": ["compare_constants"]}

    builder = StateGraph(UniversalityState)

    builder.add_node("plan", plan)
    builder.add_node("run_geometry", run_geometry)
    builder.add_node("compare_constants", compare_constants)

    builder.add_edge(START, "plan")
    builder.add_conditional_edges("plan", fan_out, ["run_geometry"])
    builder.add_edge("run_geometry", "compare_constants")
    builder.add_edge("compare_constants", END)

    return builder.compile()


def _universality_report(state: UniversalityState, reports: List[ExperimentReport]) -> ExperimentReport:
    universality = state["universality"]
    constants = [
        {
            "geometry": r.config["field"]["geometry"]["kind"],
            "label": r.label,
            "mean": r.measured_constant.mean,
            "standard_error": r.measured_constant.standard_error,
            "ci95": list(r.measured_constant.ci95),
            "target": r.target,
            "passed": r.passed,
        }
        for r in reports
    ]
    pairwise = []
    for (i, a), (j, b) in itertools.combinations(enumerate(reports), 2):
        pairwise.append({"pair": [i, j], "overlap": intervals_overlap(a, b)})
    targets = {r.target for r in reports}
    passed = all(r.passed for r in reports) and all(p["overlap"] for p in pairwise)
    flags = sorted({flag for r in reports for flag in r.flags})
    for entry in constants:
        logger.info(
            "universality %s: %.4f +- %.4f", entry["geometry"], entry["mean"], entry["standard_error"]
        )
    return ExperimentReport(
        kind=ExperimentKind.UNIVERSALITY,
        label="universality",
        config=universality.model_dump(mode="json"),
        base_seed=reports[0].base_seed,
        predictions={"constants": reports[0].predictions.get("constants", {})},
        target=targets.pop() if len(targets) == 1 else None,
        passed=passed,
        flags=flags,
        details={"constants": constants, "pairwise": pairwise},
        sub_reports=reports,
        wall_clock_seconds=sum(r.wall_clock_seconds for r in reports),
    )
