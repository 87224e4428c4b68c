"""
Command line for the invariant Gaussian field laboratory.

    python -m src.main field --geometry plane --spectrum mono:6.283185 --png
    python -m src.main spacing --geometry line --spectrum mono:1
    python -m src.main zeros --geometry sphere --spectrum mono:10 --dimv 2 --reps 200
    python -m src.main verify universality --dimv 2 --reps 200 --seed 7
    python -m src.main oracle matrix --n 2 --k 2 --samples 100000

Exit codes: 0 when every declared tolerance passes, 1 on a tolerance
failure, 2 on usage or configuration errors (details in error.json).
"""

import argparse
import asyncio
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from dotenv import load_dotenv
from pydantic import ValidationError

from .configuration import Configuration
from .errors import ConfigError, FieldLabError, UndefinedSpacingError
from .experiments import ExperimentFactory
from .graphs.experiment_graph import ExperimentGraph
from .services import export, rice, zeroset
from .services.sampler import minimal_waves, sample
from .types.models import (
    MODE_ALIASES,
    FieldSpec,
    GeodesicSegment,
    GeometryDescriptor,
    GeometryKind,
    Point,
    PredictionMode,
    Region,
    SeedSpec,
    SpacingConvention,
    SpectralMeasure,
)
from .types.state import ExperimentConfig, ExperimentKind, ExperimentReport, UniversalityConfig

logger = logging.getLogger(__name__)

load_dotenv()

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

DEFAULT_SPECTRA = {
    GeometryKind.LINE1: 1.0,
    GeometryKind.PLANE2: 2.0 * math.pi,
    GeometryKind.SPACE3: 2.0 * math.pi,
    GeometryKind.SPHERE2: 10.0,
    GeometryKind.HYPERBOLIC2: 8.0,
}
COVARIANCE_SPECTRA = {
    GeometryKind.PLANE2: 2.0 * math.pi,
    GeometryKind.SPHERE2: 20.0,
    GeometryKind.HYPERBOLIC2: 8.0,
}
# box side in wavelengths for density runs
DEFAULT_EXTENT = {GeometryKind.PLANE2: 10.0, GeometryKind.SPACE3: 3.0}
UNIVERSALITY_GEOMETRIES = (GeometryKind.PLANE2, GeometryKind.SPHERE2, GeometryKind.HYPERBOLIC2)
SETTINGS_KEYS = ("workers", "output_dir", "log_level", "png")


# ---------------------------------------------------------------- options


def load_config_file(path: Optional[str]) -> Dict[str, Any]:
    """Flat JSON object whose keys are flag names (dashes or underscores)."""
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return {key.replace("-", "_"): value for key, value in data.items()}


def resolve_options(args: argparse.Namespace) -> Dict[str, Any]:
    """File values first, explicit flags on top."""
    options = load_config_file(getattr(args, "config", None))
    for key, value in vars(args).items():
        if key in ("config", "handler") or value is None:
            continue
        options[key] = value
    return options


def resolve_settings(options: Dict[str, Any]) -> Configuration:
    configurable = {key: options[key] for key in SETTINGS_KEYS if options.get(key) is not None}
    return Configuration.from_runnable_config({"configurable": configurable})


def parse_spectrum(kind: GeometryKind, value: Any) -> SpectralMeasure:
    """`mono:<param>`, `mixture:<json file>`, `band:<low>:<high>[:<atoms>[:<power>]]` or an inline object."""
    try:
        if value is None:
            return SpectralMeasure.mono(kind, DEFAULT_SPECTRA[kind])
        if isinstance(value, dict):
            measure = SpectralMeasure.from_config(value)
        else:
            head, _, rest = str(value).partition(":")
            if head == "mono":
                measure = SpectralMeasure.mono(kind, float(rest))
            elif head == "mixture":
                data = json.loads(Path(rest).read_text(encoding="utf-8"))
                measure = SpectralMeasure.from_config(data)
            elif head == "band":
                parts = rest.split(":")
                if len(parts) < 2:
                    raise ConfigError("band spectra need band:<low>:<high>")
                atoms = int(parts[2]) if len(parts) > 2 else 16
                power = float(parts[3]) if len(parts) > 3 else 0.0
                measure = SpectralMeasure.band(kind, float(parts[0]), float(parts[1]), atoms, power)
            else:
                raise ConfigError(f"unknown spectrum form {value!r}")
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"invalid spectrum {value!r}: {exc}") from exc
    if measure.kind != kind:
        raise ConfigError(f"spectrum is for {measure.kind.value}, geometry is {kind.value}")
    return measure


def build_field(
    options: Dict[str, Any],
    settings: Configuration,
    kind: Optional[GeometryKind] = None,
    spectrum: Any = None,
) -> FieldSpec:
    kind = GeometryKind(kind or options.get("geometry") or "plane")
    measure = parse_spectrum(kind, spectrum if spectrum is not None else options.get("spectrum"))
    dim_v = int(options.get("dimv") or 1)
    r_max = float(options.get("r_max") or settings.hyperbolic_r_max)
    n_waves = options.get("n_waves")
    if n_waves is None:
        if kind == GeometryKind.SPACE3:
            n_waves = settings.space_waves
        elif kind == GeometryKind.HYPERBOLIC2:
            needed = max(minimal_waves(a.point.param, r_max, settings.certify_tolerance) for a in measure.atoms)
            n_waves = max(settings.hyperbolic_waves, needed)
            logger.info("covariance self-check certifies %d waves within r_max=%s", needed, r_max)
        else:
            n_waves = settings.flat_waves
    beta = float(options.get("beta") or 1.0)
    return FieldSpec(
        geometry=GeometryDescriptor.of(kind),
        spectrum=measure,
        dim_v=dim_v,
        n_waves=int(n_waves),
        r_max=r_max,
        component_scales=(beta,) * dim_v,
    )


def default_region(spec: FieldSpec, options: Dict[str, Any]) -> Region:
    kind = spec.geometry.kind
    if kind == GeometryKind.SPHERE2:
        return Region.full_sphere()
    if kind == GeometryKind.HYPERBOLIC2:
        return Region.ball(min(float(options.get("radius") or spec.r_max), spec.r_max))
    side = float(options.get("extent") or DEFAULT_EXTENT.get(kind, 10.0))
    side *= rice.spacing(spec, SpacingConvention.WAVELENGTH)
    return Region.box((0.0,) * spec.geometry.dim_x, (side,) * spec.geometry.dim_x)


def default_segment(spec: FieldSpec, options: Dict[str, Any]) -> GeodesicSegment:
    """A segment `length` Rice spacings long; clipped to one great circle or one validity diameter."""
    kind = spec.geometry.kind
    length = float(options.get("length") or 100.0) * rice.spacing(spec, SpacingConvention.RICE_DEF)
    if kind == GeometryKind.SPHERE2:
        return GeodesicSegment(base=Point(coords=(math.pi / 2.0, 0.0)), direction=(0.0, 1.0), length=min(length, 2.0 * math.pi))
    if kind == GeometryKind.HYPERBOLIC2:
        edge = math.tanh(spec.r_max / 2.0)
        return GeodesicSegment(base=Point(coords=(-edge, 0.0)), direction=(1.0, 0.0), length=min(length, 2.0 * spec.r_max))
    direction = (1.0,) + (0.0,) * (spec.geometry.dim_x - 1)
    return GeodesicSegment(base=Point(coords=(0.0,) * spec.geometry.dim_x), direction=direction, length=length)


def experiment_options(options: Dict[str, Any], settings: Configuration) -> Dict[str, Any]:
    """Fields shared by every ExperimentConfig the CLI builds."""
    shared = {
        "base_seed": int(options.get("seed") or 0),
        "rel_tolerance": float(options.get("tolerance") or settings.rel_tolerance),
        "refinement_stride": int(options.get("refinement_stride", settings.refinement_stride)),
    }
    if options.get("reps") is not None:
        shared["replications"] = int(options["reps"])
    if options.get("convention"):
        shared["convention"] = SpacingConvention(options["convention"])
    if options.get("mode"):
        shared["mode"] = PredictionMode(options["mode"])
    return shared


def density_config(options: Dict[str, Any], settings: Configuration, spec: FieldSpec, label: Optional[str] = None) -> ExperimentConfig:
    return ExperimentConfig(
        kind=ExperimentKind.DENSITY,
        field=spec,
        region=default_region(spec, options),
        resolution=options.get("grid"),
        label=label or spec.geometry.kind.value,
        **experiment_options(options, settings),
    )


# ---------------------------------------------------------------- output


def _status(report: ExperimentReport) -> str:
    return "✅" if report.passed else "❌"


def print_report(name: str, report: ExperimentReport) -> None:
    measured = report.measured_constant or report.summary
    line = f"{_status(report)} {name}"
    if measured is not None:
        line += f": {measured.mean:.5f} ± {measured.standard_error:.5f}"
    if report.target is not None:
        line += f" (target {report.target:.5f}, tolerance {report.tolerance:.5f})"
    print(line)
    for flag in report.flags:
        print(f"   ⚠️  {flag}")


def emit(settings: Configuration, reports: Dict[str, ExperimentReport]) -> int:
    out_dir = Path(settings.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, report in reports.items():
        export.write_report(out_dir / f"{name}.json", report)
        print_report(name, report)
    export.write_summary_csv(out_dir / "summary.csv", reports.values())
    print(f"📄 Reports written to {out_dir}")
    return EXIT_PASS if all(r.passed for r in reports.values()) else EXIT_FAIL


def write_error(out_dir: Path, exc: BaseException) -> None:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    minimal = getattr(exc, "minimal_waves", None)
    if minimal is not None:
        payload["minimal_waves"] = minimal
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        export.write_json(out_dir / "error.json", payload)
    except OSError:
        logger.exception("could not write error.json")


# ---------------------------------------------------------------- commands


async def cmd_field(options: Dict[str, Any], settings: Configuration) -> int:
    """Sample one field and write a CSV grid dump plus PGM/PNG rasters."""
    spec = build_field(options, settings)
    seed = SeedSpec(base_seed=int(options.get("seed") or 0), stream=0)
    realization = sample(spec, seed, tolerance=settings.certify_tolerance)
    size = int(options.get("grid") or 256)
    try:
        predictions: Optional[Dict[str, Any]] = rice.predict(spec).model_dump()
    except UndefinedSpacingError:
        predictions = None

    extent = None
    if spec.geometry.is_flat:
        extent = float(options.get("extent") or 5.0) * rice.spacing(spec, SpacingConvention.WAVELENGTH)
    coords, values = export.raster(realization, size, extent)

    out_dir = Path(settings.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    export.write_grid_csv(out_dir / "field.csv", spec.geometry.kind, coords, values)
    gray = export.to_gray(values[..., 0], spec.component_scales[0])
    export.write_pgm(out_dir / "field.pgm", gray)
    if settings.png:
        export.write_png(out_dir / "field.png", gray)

    measured_spacing = None
    if predictions is not None:
        step = predictions["spacing"][SpacingConvention.RICE_DEF.value] / 20.0
        try:
            measured_spacing = zeroset.sample_spacing(realization, 0, signature_segments(spec, extent), step)
        except UndefinedSpacingError:
            measured_spacing = None
        logger.info("single-sample spacing %s vs analytic %s", measured_spacing, predictions["spacing"])

    export.write_json(
        out_dir / "field.json",
        {
            "spec": spec.model_dump(mode="json"),
            "seed": seed.model_dump(),
            "raster": {"size": size, "extent": extent},
            "predictions": predictions,
            "sample_spacing": measured_spacing,
        },
    )
    print(f"✅ field {spec.geometry.kind.value}: raster {gray.shape} written to {out_dir}")
    if measured_spacing is not None:
        print(f"   single-sample spacing {measured_spacing:.5f}")
    return EXIT_PASS


def signature_segments(spec: FieldSpec, extent: Optional[float]) -> List[GeodesicSegment]:
    """Four geodesics through the sampled window for the single-sample spacing."""
    kind = spec.geometry.kind
    angles = [0.0, math.pi / 4.0, math.pi / 2.0, 3.0 * math.pi / 4.0]
    if kind == GeometryKind.LINE1:
        return [GeodesicSegment(base=Point(coords=(0.0,)), direction=(1.0,), length=extent)]
    if kind == GeometryKind.SPHERE2:
        return [
            GeodesicSegment(base=Point(coords=(math.pi / 2.0, 0.0)), direction=(math.sin(a), math.cos(a)), length=2.0 * math.pi)
            for a in angles
        ]
    if kind == GeometryKind.HYPERBOLIC2:
        edge = math.tanh(spec.r_max / 2.0)
        return [
            GeodesicSegment(
                base=Point(coords=(-edge * math.cos(a), -edge * math.sin(a))),
                direction=(math.cos(a), math.sin(a)),
                length=2.0 * spec.r_max,
            )
            for a in angles
        ]
    centre = 0.5 * extent
    segments = []
    for a in angles:
        u = np.zeros(spec.geometry.dim_x)
        u[0], u[1] = math.cos(a), math.sin(a)
        base = np.full(spec.geometry.dim_x, centre)
        base[:2] -= centre * u[:2]
        if kind == GeometryKind.SPACE3:
            base[2] = 0.0
        segments.append(GeodesicSegment(base=Point(coords=tuple(base)), direction=tuple(u), length=extent))
    return segments


async def cmd_spacing(options: Dict[str, Any], settings: Configuration) -> int:
    options.setdefault("geometry", "line")
    spec = build_field(options, settings)
    config = ExperimentConfig(
        kind=ExperimentKind.SPACING,
        field=spec,
        segment=default_segment(spec, options),
        level=float(options.get("level") or 0.0),
        step=options.get("step"),
        label=spec.geometry.kind.value,
        **experiment_options(options, settings),
    )
    report = await ExperimentGraph(settings).run_spacing(config)
    return emit(settings, {"spacing": report})


async def cmd_zeros(options: Dict[str, Any], settings: Configuration) -> int:
    spec = build_field(options, settings)
    config = density_config(options, settings, spec)
    report = await ExperimentGraph(settings).run_density(config)
    if options.get("dump"):
        dump_zero_set(config, settings)
    return emit(settings, {"zeros": report})


def dump_zero_set(config: ExperimentConfig, settings: Configuration) -> None:
    """Located zeros or nodal segments of replication 0 as CSV."""
    experiment = ExperimentFactory.create_experiment(config, settings)
    field = experiment.realization(0)
    out_dir = Path(settings.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    kind = config.field.geometry.kind
    if experiment.counts_points:
        estimate = zeroset.count_point_zeros(field, experiment.grid, check_refinement=False)
        export.write_zeros_csv(out_dir / "zeros.csv", kind, estimate)
    else:
        estimate = zeroset.nodal_length(field, config.component, experiment.grid, check_refinement=False)
        export.write_segments_csv(out_dir / "segments.csv", kind, estimate)


async def cmd_verify(options: Dict[str, Any], settings: Configuration) -> int:
    graph = ExperimentGraph(settings)
    suite = options["suite"]
    if suite == "universality":
        options.setdefault("dimv", 2)
        configs = tuple(
            density_config(options, settings, build_field(options, settings, kind=kind, spectrum=f"mono:{DEFAULT_SPECTRA[kind]}"))
            for kind in UNIVERSALITY_GEOMETRIES
        )
        report = await graph.run_universality(UniversalityConfig(configs=configs))
        for entry in report.details.get("constants", []):
            print(f"   {entry['geometry']:>10}: {entry['mean']:.4f} ± {entry['standard_error']:.4f}")
        return emit(settings, {"universality": report})
    if suite == "covariance":
        options.setdefault("reps", 2000)
        kinds = [GeometryKind(options["geometry"])] if options.get("geometry") else list(COVARIANCE_SPECTRA)
        reports = {}
        for kind in kinds:
            spec = build_field(options, settings, kind=kind, spectrum=options.get("spectrum") or f"mono:{COVARIANCE_SPECTRA.get(kind, DEFAULT_SPECTRA[kind])}")
            config = ExperimentConfig(
                kind=ExperimentKind.COVARIANCE,
                field=spec,
                label=kind.value,
                **experiment_options(options, settings),
            )
            reports[f"covariance_{kind.value}"] = await graph.run_covariance(config)
        return emit(settings, reports)
    options.setdefault("reps", 20)
    spec = build_field(options, settings)
    report = await graph.run_scale_check(density_config(options, settings, spec), float(options.get("factor") or 7.3))
    return emit(settings, {"scale": report})


async def cmd_oracle(options: Dict[str, Any], settings: Configuration) -> int:
    config = ExperimentConfig(
        kind=ExperimentKind.MATRIX_ORACLE,
        matrix_n=int(options.get("n") or 2),
        matrix_k=int(options.get("k") or 2),
        samples=int(options.get("samples") or 100_000),
        label="matrix",
        **experiment_options(options, settings),
    )
    report = await ExperimentGraph(settings).run_matrix_oracle(config)
    return emit(settings, {"oracle_matrix": report})


# ---------------------------------------------------------------- parser


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file of flag values; flags override it")
    parser.add_argument("--seed", type=int, help="base seed (default 0)")
    parser.add_argument("--workers", type=int, help="replication worker processes; results do not depend on it")
    parser.add_argument("--output-dir", dest="output_dir", help="directory for reports and dumps")
    parser.add_argument("--log-level", dest="log_level", help="logging level (default INFO)")
    parser.add_argument("--tolerance", type=float, help="relative tolerance before the 4 SE floor")


def _field_flags(parser: argparse.ArgumentParser, default_geometry: Optional[str] = None) -> None:
    parser.add_argument(
        "--geometry",
        choices=[k.value for k in GeometryKind],
        help=f"space to sample on (default {default_geometry or 'plane'})",
    )
    parser.add_argument("--spectrum", help="mono:<param> | mixture:<file> | band:<low>:<high>[:<atoms>[:<power>]]")
    parser.add_argument("--dimv", type=int, help="number of independent real components")
    parser.add_argument("--beta", type=float, help="variance of every component (default 1)")
    parser.add_argument("--n-waves", dest="n_waves", type=int, help="wave truncation for flat and hyperbolic samplers")
    parser.add_argument("--r-max", dest="r_max", type=float, help="hyperbolic validity radius")


def _experiment_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--reps", type=int, help="replication count")
    parser.add_argument("--convention", choices=[c.value for c in SpacingConvention], help="spacing convention")
    parser.add_argument(
        "--mode",
        choices=[m.value for m in PredictionMode] + sorted(MODE_ALIASES),
        help="constant mode judged against (paper = factorial)",
    )
    parser.add_argument("--refinement-stride", dest="refinement_stride", type=int, help="refinement check every k-th replication")


def _density_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--grid", type=float, help="grid node spacing (default wavelength/20)")
    parser.add_argument("--extent", type=float, help="flat box side in wavelengths")
    parser.add_argument("--radius", type=float, help="hyperbolic ball radius (at most r_max)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fieldlab", description="Invariant Gaussian random field laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    field = sub.add_parser("field", help="sample a field; write CSV grid dump and PGM/PNG raster")
    _common(field)
    _field_flags(field)
    field.add_argument("--grid", type=int, help="raster size in pixels (default 256)")
    field.add_argument("--extent", type=float, help="flat window side in wavelengths (default 5)")
    field.add_argument("--png", action="store_true", default=None, help="also write a PNG raster")
    field.set_defaults(handler=cmd_field)

    spacing = sub.add_parser("spacing", help="zero density along a geodesic vs Rice")
    _common(spacing)
    _field_flags(spacing, "line")
    _experiment_flags(spacing)
    spacing.add_argument("--length", type=float, help="segment length in Rice spacings (default 100)")
    spacing.add_argument("--step", type=float, help="sampling step along the segment")
    spacing.add_argument("--level", type=float, help="crossing level u (default 0)")
    spacing.set_defaults(handler=cmd_spacing)

    zeros = sub.add_parser("zeros", help="point-zero or nodal-length density constant")
    _common(zeros)
    _field_flags(zeros)
    _experiment_flags(zeros)
    _density_flags(zeros)
    zeros.add_argument("--dump", action="store_true", default=None, help="write zeros.csv or segments.csv of replication 0")
    zeros.set_defaults(handler=cmd_zeros)

    verify = sub.add_parser("verify", help="acceptance suites")
    verify.add_argument("suite", choices=["universality", "covariance", "scale"])
    _common(verify)
    _field_flags(verify)
    _experiment_flags(verify)
    _density_flags(verify)
    verify.add_argument("--factor", type=float, help="variance factor for the scale suite (default 7.3)")
    verify.set_defaults(handler=cmd_verify)

    oracle = sub.add_parser("oracle", help="Gaussian matrix oracle")
    oracle.add_argument("target", choices=["matrix"])
    _common(oracle)
    oracle.add_argument("--n", type=int, help="rows (1..4)")
    oracle.add_argument("--k", type=int, help="columns (1..n)")
    oracle.add_argument("--samples", type=int, help="sample count (at least 100000)")
    oracle.set_defaults(handler=cmd_oracle)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out_dir = Path(getattr(args, "output_dir", None) or "reports")
    try:
        options = resolve_options(args)
        settings = resolve_settings(options)
        out_dir = Path(settings.output_dir)
        logging.basicConfig(
            level=settings.log_level.upper(),
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        )
        return asyncio.run(args.handler(options, settings))
    except (FieldLabError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            exc = ConfigError(str(exc))
        write_error(out_dir, exc)
        print(f"❌ {type(exc).__name__}: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
