import json
import logging
import math
from dataclasses import replace

import numpy as np
import pytest
from pydantic import ValidationError

from src.errors import DomainError
from src.experiments import ExperimentFactory, summarize
from src.experiments.base import tolerance
from src.experiments.matrix_oracle import parallelotope_volumes
from src.graphs.experiment_graph import ExperimentGraph
from src.graphs.subgraphs import intervals_overlap
from src.services import rice
from src.services.sampler import make_rng
from src.types.models import (
    FieldSpec,
    GeodesicSegment,
    GeometryDescriptor,
    Point,
    PredictionMode,
    Region,
    SeedSpec,
    SpacingConvention,
    SpectralMeasure,
)
from src.types.state import ExperimentConfig, ExperimentKind, ExperimentReport, Summary, UniversalityConfig


def field(kind, param, dim_v=1, **kwargs):
    return FieldSpec(
        geometry=GeometryDescriptor.of(kind), spectrum=SpectralMeasure.mono(kind, param), dim_v=dim_v, **kwargs
    )


def line_spacing(reps=10, **kwargs):
    return ExperimentConfig(
        kind=ExperimentKind.SPACING,
        field=field("line", 1.0),
        segment=GeodesicSegment(base=Point(coords=(0.0,)), direction=(1.0,), length=20 * math.pi),
        replications=reps,
        base_seed=3,
        **kwargs,
    )


def plane_density(dim_v=2, reps=20, **kwargs):
    return ExperimentConfig(
        kind=ExperimentKind.DENSITY,
        field=field("plane", 2 * math.pi, dim_v=dim_v),
        region=Region.box((0.0, 0.0), (3.0, 3.0)),
        resolution=1.0 / 16.0,
        replications=reps,
        base_seed=7,
        **kwargs,
    )


def matrix_oracle(n=2, k=2, samples=100_000):
    return ExperimentConfig(kind=ExperimentKind.MATRIX_ORACLE, matrix_n=n, matrix_k=k, samples=samples, base_seed=1)


def test_summary_statistics():
    s = summarize([1.0, 2.0, 3.0, 4.0])
    assert s.n == 4
    assert s.mean == 2.5
    assert s.standard_error == pytest.approx(math.sqrt(5.0 / 3.0) / 2.0)
    assert s.ci95[0] < 2.5 < s.ci95[1]
    assert summarize([2.0]).standard_error == 0.0


def test_tolerance_keeps_statistical_floor():
    assert tolerance(0.03, 1.0, 0.001) == pytest.approx(0.03)
    assert tolerance(0.03, 1.0, 0.1) == pytest.approx(0.4)


def test_confidence_intervals_cover_the_mean():
    rng = np.random.default_rng(0)
    covered = 0
    for _ in range(100):
        s = summarize(rng.normal(1.5, 2.0, 30))
        covered += s.ci95[0] <= 1.5 <= s.ci95[1]
    assert covered >= 90


def test_registry_knows_every_kind():
    kinds = set(ExperimentFactory.get_available_kinds())
    assert {ExperimentKind.SPACING, ExperimentKind.DENSITY, ExperimentKind.COVARIANCE, ExperimentKind.MATRIX_ORACLE} <= kinds


def test_incomplete_configs_are_rejected():
    with pytest.raises(ValidationError):
        ExperimentConfig(kind=ExperimentKind.DENSITY, field=field("plane", 1.0))
    with pytest.raises(ValidationError):
        ExperimentConfig(kind=ExperimentKind.SPACING, field=field("line", 1.0))
    with pytest.raises(ValidationError):
        UniversalityConfig(configs=(plane_density(dim_v=2), plane_density(dim_v=1)))


def test_parallelotope_volumes_match_determinants():
    volumes = parallelotope_volumes(make_rng(SeedSpec(base_seed=0)), 2, 2, 5)
    m = make_rng(SeedSpec(base_seed=0)).standard_normal((5, 2, 2))
    np.testing.assert_allclose(volumes, np.abs(np.linalg.det(m)), rtol=1e-10)


@pytest.mark.asyncio
async def test_matrix_oracle_refutes_factorial_constant(settings):
    report = await ExperimentGraph(settings).run_matrix_oracle(matrix_oracle())
    assert report.passed
    assert abs(report.measured_constant.mean - 1.0) < 0.015
    assert report.details["factorial_value"] == 2.0
    assert report.details["factorial_refuted"]
    assert report.measured_constant.n == 100_000


@pytest.mark.asyncio
async def test_matrix_oracle_chi_product(settings):
    report = await ExperimentGraph(settings).run_matrix_oracle(matrix_oracle(n=3, k=2))
    assert report.target == pytest.approx(2 * math.sqrt(2 / math.pi) * math.sqrt(math.pi / 2))
    assert report.passed


@pytest.mark.asyncio
async def test_matrix_oracle_needs_enough_samples(settings):
    with pytest.raises(DomainError):
        await ExperimentGraph(settings).run_matrix_oracle(matrix_oracle(samples=1000))


@pytest.mark.asyncio
async def test_spacing_on_the_line(settings):
    report = await ExperimentGraph(settings).run_spacing(line_spacing())
    assert report.passed
    assert report.target == pytest.approx(1.0 / math.pi)
    assert report.summary.mean == pytest.approx(1.0 / math.pi)
    assert report.measured_constant.mean == pytest.approx(math.pi)
    assert report.details["closest_convention"] == "rice"
    assert len(report.replication_values) == 10


@pytest.mark.asyncio
async def test_run_kind_must_match(settings):
    with pytest.raises(ValueError):
        await ExperimentGraph(settings).run_density(line_spacing())


@pytest.mark.asyncio
async def test_reports_do_not_depend_on_worker_count(settings):
    inline = await ExperimentGraph(settings).run_matrix_oracle(matrix_oracle())
    pooled = await ExperimentGraph(replace(settings, workers=2)).run_matrix_oracle(matrix_oracle())
    assert inline.to_canonical_json() == pooled.to_canonical_json()

    inline = await ExperimentGraph(settings).run_spacing(line_spacing(reps=4))
    pooled = await ExperimentGraph(replace(settings, workers=2)).run_spacing(line_spacing(reps=4))
    assert inline.to_canonical_json() == pooled.to_canonical_json()


@pytest.mark.asyncio
async def test_density_reports_do_not_depend_on_worker_count(settings):
    config = plane_density(reps=6, refinement_stride=3)
    inline = await ExperimentGraph(replace(settings, workers=1)).run_density(config)
    pooled = await ExperimentGraph(replace(settings, workers=4)).run_density(config)
    assert inline.to_canonical_json() == pooled.to_canonical_json()
    assert inline.replication_values == pooled.replication_values


def test_paper_mode_is_an_alias_for_factorial():
    assert PredictionMode("paper") is PredictionMode.FACTORIAL
    assert PredictionMode("Paper") is PredictionMode.FACTORIAL
    config = plane_density(mode="paper")
    assert config.mode is PredictionMode.FACTORIAL
    assert config.model_dump(mode="json")["mode"] == "factorial"
    with pytest.raises(ValidationError):
        plane_density(mode="folklore")


@pytest.mark.asyncio
async def test_refinement_warning_goes_to_the_log(settings, capsys, caplog):
    graph = ExperimentGraph(settings)
    config = line_spacing(reps=2)
    experiment = ExperimentFactory.create_experiment(config, settings)
    outcomes = [
        {"index": i, "values": [1.0 / math.pi], "refinement_flag": True, "flags": []} for i in range(2)
    ]
    state = {
        "config": config,
        "predictions": experiment.predict(),
        "outcomes": outcomes,
        "summary": summarize([1.0 / math.pi] * 2),
        "started_at": 0.0,
    }
    with caplog.at_level(logging.WARNING, logger="src.graphs.experiment_graph"):
        result = await graph._judge(state, graph._runnable_config())
    assert "under_resolved" in result["report"].flags
    assert capsys.readouterr().out == ""
    warnings = [r for r in caplog.records if r.levelno == logging.WARNING]
    assert any("grid refinement" in r.getMessage() for r in warnings)


@pytest.mark.asyncio
async def test_report_json_is_canonical(settings):
    report = await ExperimentGraph(settings).run_spacing(line_spacing(reps=4))
    payload = json.loads(report.to_canonical_json())
    assert "wall_clock_seconds" not in payload
    assert report.wall_clock_seconds > 0
    assert payload["config"]["base_seed"] == 3


@pytest.mark.asyncio
async def test_point_zero_density_on_the_plane(settings):
    report = await ExperimentGraph(settings).run_density(plane_density(refinement_stride=5))
    assert report.kind == ExperimentKind.DENSITY
    assert report.target == pytest.approx(math.pi)
    assert report.details["measure"] == "count"
    assert report.details["refinement_checked"] == [0, 5, 10, 15]
    assert len(report.refinement_flags) == 4
    assert report.passed
    assert report.details["modes"][PredictionMode.FACTORIAL.value]["constant"] == pytest.approx(math.pi)


@pytest.mark.asyncio
async def test_nodal_length_density_on_the_plane(settings):
    report = await ExperimentGraph(settings).run_density(plane_density(dim_v=1, refinement_stride=0))
    assert report.details["measure"] == "length"
    assert report.target == pytest.approx(math.pi / math.sqrt(2))
    assert report.passed
    assert report.refinement_flags == []


@pytest.mark.asyncio
async def test_density_rejects_unsupported_dimensions(settings):
    config = ExperimentConfig(
        kind=ExperimentKind.DENSITY,
        field=field("space", 1.0, dim_v=1),
        region=Region.box((0, 0, 0), (1, 1, 1)),
        replications=2,
    )
    with pytest.raises(DomainError):
        await ExperimentGraph(settings).run_density(config)


@pytest.mark.asyncio
async def test_covariance_tracks_bessel(settings):
    config = ExperimentConfig(kind=ExperimentKind.COVARIANCE, field=field("plane", 2 * math.pi), replications=100)
    report = await ExperimentGraph(settings).run_covariance(config)
    lags = report.details["lags"]
    assert len(lags) == 20
    assert lags[-1]["distance"] == pytest.approx(2.0)
    assert report.passed
    assert report.replication_values == []


@pytest.mark.asyncio
async def test_covariance_on_the_disk(settings):
    config = ExperimentConfig(
        kind=ExperimentKind.COVARIANCE,
        field=field("hyperbolic", 2.0, n_waves=1024),
        lag_distances=(0.5, 1.0, 2.0),
        replications=100,
    )
    report = await ExperimentGraph(settings).run_covariance(config)
    assert [p["distance"] for p in report.details["lags"]] == [0.5, 1.0, 2.0]
    assert report.passed


@pytest.mark.asyncio
async def test_covariance_validation(settings):
    graph = ExperimentGraph(settings)
    with pytest.raises(DomainError):
        await graph.run_covariance(
            ExperimentConfig(kind=ExperimentKind.COVARIANCE, field=field("plane", 1.0), replications=50)
        )
    with pytest.raises(DomainError):
        await graph.run_covariance(
            ExperimentConfig(
                kind=ExperimentKind.COVARIANCE,
                field=field("hyperbolic", 1.0, n_waves=1024),
                lag_distances=(3.0,),
                replications=100,
            )
        )


@pytest.mark.asyncio
async def test_single_geometry_universality_reduces_to_density(settings):
    graph = ExperimentGraph(settings)
    config = plane_density(reps=4, refinement_stride=0)
    single = await graph.run_universality(UniversalityConfig(configs=(config,)))
    direct = await graph.run_density(config)
    assert single.kind == ExperimentKind.DENSITY
    assert single.to_canonical_json() == direct.to_canonical_json()


@pytest.mark.asyncio
async def test_universality_compares_every_pair(settings):
    configs = (
        plane_density(reps=4, refinement_stride=0),
        ExperimentConfig(
            kind=ExperimentKind.DENSITY,
            field=field("sphere", 10, dim_v=2),
            region=Region.full_sphere(),
            replications=4,
            refinement_stride=0,
        ),
        ExperimentConfig(
            kind=ExperimentKind.DENSITY,
            field=field("hyperbolic", 8.0, dim_v=2, n_waves=1024),
            region=Region.ball(1.0),
            replications=4,
            refinement_stride=0,
        ),
    )
    report = await ExperimentGraph(settings).run_universality(UniversalityConfig(configs=configs))
    assert report.kind == ExperimentKind.UNIVERSALITY
    assert [c["geometry"] for c in report.details["constants"]] == ["plane", "sphere", "hyperbolic"]
    assert [p["pair"] for p in report.details["pairwise"]] == [[0, 1], [0, 2], [1, 2]]
    assert report.target == pytest.approx(math.pi)
    assert len(report.sub_reports) == 3


def test_interval_overlap():
    def report(lo, hi):
        return ExperimentReport(
            kind=ExperimentKind.DENSITY, measured_constant=Summary(n=2, mean=(lo + hi) / 2, standard_error=0.1, ci95=(lo, hi))
        )

    assert intervals_overlap(report(0.0, 1.0), report(0.5, 2.0))
    assert not intervals_overlap(report(0.0, 1.0), report(1.5, 2.0))


@pytest.mark.asyncio
async def test_scale_check_is_bit_identical(settings):
    report = await ExperimentGraph(settings).run_scale_check(plane_density(reps=3, refinement_stride=0), 7.3)
    assert report.passed
    assert report.details["identical"]
    assert report.details["max_abs_difference"] == 0.0
    assert report.sub_reports[1].config["field"]["component_scales"] == [7.3, 7.3]


@pytest.mark.slow
@pytest.mark.asyncio
async def test_universality_acceptance(settings):
    def density(kind, param, region, **extra):
        return ExperimentConfig(
            kind=ExperimentKind.DENSITY,
            field=field(kind, param, dim_v=2, **extra),
            region=region,
            replications=200,
            base_seed=7,
        )

    configs = (
        density("plane", 2 * math.pi, Region.box((0.0, 0.0), (10.0, 10.0))),
        density("sphere", 10, Region.full_sphere()),
        density("hyperbolic", 8.0, Region.ball(2.0), n_waves=1024),
    )
    report = await ExperimentGraph(replace(settings, workers=4)).run_universality(UniversalityConfig(configs=configs))
    for entry in report.details["constants"]:
        assert entry["mean"] == pytest.approx(math.pi, rel=0.03)
    assert all(p["overlap"] for p in report.details["pairwise"])


@pytest.mark.slow
@pytest.mark.asyncio
async def test_sphere_zero_count_acceptance(settings):
    config = ExperimentConfig(
        kind=ExperimentKind.DENSITY,
        field=field("sphere", 10, dim_v=2),
        region=Region.full_sphere(),
        replications=500,
        base_seed=11,
    )
    report = await ExperimentGraph(replace(settings, workers=4)).run_density(config)
    assert report.passed
    assert report.details["predicted_measure"] == pytest.approx(110.0)
    assert report.details["mean_measure"] == pytest.approx(110.0, rel=0.05)


@pytest.mark.slow
@pytest.mark.asyncio
async def test_spacing_acceptance_on_the_plane(settings):
    config = ExperimentConfig(
        kind=ExperimentKind.SPACING,
        field=field("plane", 2 * math.pi),
        segment=GeodesicSegment(base=Point(coords=(0.0, 0.0)), direction=(1.0, 0.0), length=100.0),
        replications=200,
    )
    report = await ExperimentGraph(settings).run_spacing(config)
    assert report.passed


@pytest.mark.slow
@pytest.mark.asyncio
async def test_line_mixture_density_acceptance(settings):
    spec = FieldSpec(
        geometry=GeometryDescriptor.of("line"), spectrum=SpectralMeasure.mixture("line", [1.0, 3.0]), dim_v=1
    )
    wavelength = rice.spacing(spec, SpacingConvention.WAVELENGTH)
    assert wavelength == pytest.approx(2 * math.pi / math.sqrt(5.0))
    config = ExperimentConfig(
        kind=ExperimentKind.SPACING,
        field=spec,
        segment=GeodesicSegment(base=Point(coords=(0.0,)), direction=(1.0,), length=100 * wavelength),
        replications=500,
        base_seed=5,
        rel_tolerance=0.02,
    )
    report = await ExperimentGraph(replace(settings, workers=4)).run_spacing(config)
    assert report.target == pytest.approx(math.sqrt(5.0) / math.pi)
    assert report.passed


@pytest.mark.slow
@pytest.mark.asyncio
async def test_nodal_length_acceptance_on_curved_surfaces(settings):
    configs = (
        ExperimentConfig(
            kind=ExperimentKind.DENSITY,
            field=field("sphere", 20),
            region=Region.full_sphere(),
            replications=200,
            base_seed=9,
        ),
        ExperimentConfig(
            kind=ExperimentKind.DENSITY,
            field=field("hyperbolic", 8.0, n_waves=1024),
            region=Region.ball(2.0),
            replications=200,
            base_seed=9,
        ),
    )
    graph = ExperimentGraph(replace(settings, workers=4))
    for config in configs:
        report = await graph.run_density(config)
        assert report.details["measure"] == "length"
        assert report.target == pytest.approx(math.pi / math.sqrt(2.0))
        assert report.measured_constant.mean == pytest.approx(math.pi / math.sqrt(2.0), rel=0.03)
        factorial = report.details["modes"][PredictionMode.FACTORIAL.value]
        assert factorial["constant"] == pytest.approx(2 * math.sqrt(math.pi / 2.0))
        assert not factorial["within_tolerance"]


@pytest.mark.slow
@pytest.mark.asyncio
async def test_complex_triple_in_space_acceptance(settings):
    config = ExperimentConfig(
        kind=ExperimentKind.DENSITY,
        field=field("space", 2 * math.pi, dim_v=3),
        region=Region.box((0.0, 0.0, 0.0), (3.0, 3.0, 3.0)),
        replications=200,
        base_seed=13,
        rel_tolerance=0.05,
    )
    report = await ExperimentGraph(replace(settings, workers=4)).run_density(config)
    chi = rice.predicted_constant(3, 3, PredictionMode.CHI, SpacingConvention.WAVELENGTH)
    assert chi == pytest.approx(4.837, abs=1e-3)
    assert report.target == pytest.approx(chi)
    assert report.passed
    factorial = report.details["modes"][PredictionMode.FACTORIAL.value]
    assert factorial["constant"] == pytest.approx(6 * (math.pi / 2.0) ** 1.5)
    assert not factorial["within_tolerance"]
