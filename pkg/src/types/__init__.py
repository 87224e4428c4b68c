from .models import (
    CurvatureSign,
    FieldSpec,
    GeodesicSegment,
    GeometryDescriptor,
    GeometryKind,
    Point,
    PredictionMode,
    PredictionReport,
    Region,
    RegionKind,
    SeedSpec,
    SpacingConvention,
    SpectralAtom,
    SpectralMeasure,
    SpectralPoint,
    ZeroSetEstimate,
    ZeroSetKind,
)
from .state import (
    ExperimentConfig,
    ExperimentKind,
    ExperimentReport,
    ExperimentState,
    GeometryRunState,
    IndexedReport,
    Summary,
    UniversalityConfig,
    UniversalityState,
)
