"""
Domain models for geometries, spectra, fields and zero-set estimates.
"""

import math
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class GeometryKind(str, Enum):
    """Supported homogeneous spaces."""
    LINE1 = "line"
    PLANE2 = "plane"
    SPACE3 = "space"
    SPHERE2 = "sphere"
    HYPERBOLIC2 = "hyperbolic"


class CurvatureSign(str, Enum):
    """Sign of the sectional curvature."""
    FLAT = "flat"
    POSITIVE = "positive"
    NEGATIVE = "negative"


_DIMENSIONS = {
    GeometryKind.LINE1: 1,
    GeometryKind.PLANE2: 2,
    GeometryKind.SPACE3: 3,
    GeometryKind.SPHERE2: 2,
    GeometryKind.HYPERBOLIC2: 2,
}

FLAT_KINDS = (GeometryKind.LINE1, GeometryKind.PLANE2, GeometryKind.SPACE3)


class GeometryDescriptor(BaseModel):
    """One of the five supported spaces with its metric conventions."""
    model_config = ConfigDict(frozen=True)

    kind: GeometryKind = Field(description="Which homogeneous space")
    dim_x: int = Field(description="Dimension of the space")
    curvature_sign: CurvatureSign = Field(description="Curvature sign")
    rho: float = Field(description="Half-sum of positive roots; 1/2 on the hyperbolic disk")

    @classmethod
    def of(cls, kind: GeometryKind | str) -> "GeometryDescriptor":
        kind = GeometryKind(kind)
        if kind == GeometryKind.SPHERE2:
            sign = CurvatureSign.POSITIVE
        elif kind == GeometryKind.HYPERBOLIC2:
            sign = CurvatureSign.NEGATIVE
        else:
            sign = CurvatureSign.FLAT
        rho = 0.5 if kind == GeometryKind.HYPERBOLIC2 else 0.0
        return cls(kind=kind, dim_x=_DIMENSIONS[kind], curvature_sign=sign, rho=rho)

    @model_validator(mode="after")
    def _consistent(self) -> "GeometryDescriptor":
        if self.dim_x != _DIMENSIONS[self.kind]:
            raise ValueError(f"dim_x={self.dim_x} does not match {self.kind.value}")
        expected_rho = 0.5 if self.kind == GeometryKind.HYPERBOLIC2 else 0.0
        if self.rho != expected_rho:
            raise ValueError(f"rho must be {expected_rho} for {self.kind.value}")
        return self

    @property
    def is_flat(self) -> bool:
        return self.curvature_sign == CurvatureSign.FLAT


class Point(BaseModel):
    """A point in chart coordinates.

    Flat spaces use Cartesian tuples, the sphere uses (colatitude, longitude)
    and the hyperbolic disk uses (x, y) with z = x + iy.
    """
    model_config = ConfigDict(frozen=True)

    coords: Tuple[float, ...] = Field(description="Chart coordinates")

    @classmethod
    def disk(cls, z: complex) -> "Point":
        return cls(coords=(float(z.real), float(z.imag)))

    @property
    def z(self) -> complex:
        return complex(self.coords[0], self.coords[1])


class GeodesicSegment(BaseModel):
    """A geodesic segment given by base point, unit direction and length."""
    model_config = ConfigDict(frozen=True)

    base: Point = Field(description="Starting point")
    direction: Tuple[float, ...] = Field(description="Unit tangent in the orthonormal frame at base")
    length: float = Field(gt=0, description="Intrinsic length")

    @field_validator("direction")
    @classmethod
    def _unit(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        norm = math.sqrt(sum(c * c for c in v))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"direction must have unit norm, got {norm}")
        return v


class RegionKind(str, Enum):
    """Region shapes that carry exact area elements."""
    BOX = "box"
    SPHERE_BOX = "sphere_box"
    BALL = "ball"


class Region(BaseModel):
    """A coordinate box, a colatitude/longitude box or a centered geodesic ball."""
    model_config = ConfigDict(frozen=True)

    kind: RegionKind
    lower: Optional[Tuple[float, ...]] = None
    upper: Optional[Tuple[float, ...]] = None
    radius: Optional[float] = Field(default=None, gt=0)

    @classmethod
    def box(cls, lower: Tuple[float, ...], upper: Tuple[float, ...]) -> "Region":
        return cls(kind=RegionKind.BOX, lower=tuple(lower), upper=tuple(upper))

    @classmethod
    def sphere_box(cls, theta: Tuple[float, float], phi: Tuple[float, float]) -> "Region":
        return cls(kind=RegionKind.SPHERE_BOX, lower=(theta[0], phi[0]), upper=(theta[1], phi[1]))

    @classmethod
    def full_sphere(cls) -> "Region":
        return cls.sphere_box((0.0, math.pi), (0.0, 2.0 * math.pi))

    @classmethod
    def ball(cls, radius: float) -> "Region":
        return cls(kind=RegionKind.BALL, radius=radius)

    @model_validator(mode="after")
    def _shape(self) -> "Region":
        if self.kind == RegionKind.BALL:
            if self.radius is None:
                raise ValueError("ball regions need a radius")
            return self
        if self.lower is None or self.upper is None or len(self.lower) != len(self.upper):
            raise ValueError("box regions need lower and upper corners of equal length")
        if any(hi <= lo for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("box upper corner must exceed lower corner")
        if self.kind == RegionKind.SPHERE_BOX:
            (t0, p0), (t1, p1) = self.lower, self.upper
            if t0 < 0 or t1 > math.pi or p1 - p0 > 2.0 * math.pi + 1e-12:
                raise ValueError("sphere box must lie in [0, pi] x [phi0, phi0 + 2pi]")
        return self


class SpectralPoint(BaseModel):
    """Spectral parameter of a monochromatic field: kappa, degree or lambda."""
    model_config = ConfigDict(frozen=True)

    kind: GeometryKind = Field(description="Geometry the parameter belongs to")
    param: float = Field(description="Wavenumber, degree or Harish-Chandra parameter")

    @model_validator(mode="after")
    def _in_range(self) -> "SpectralPoint":
        if self.kind in FLAT_KINDS and not self.param > 0:
            raise ValueError("flat wavenumber must be positive")
        if self.kind == GeometryKind.SPHERE2 and (self.param < 0 or self.param != int(self.param)):
            raise ValueError("sphere degree must be a nonnegative integer")
        if self.kind == GeometryKind.HYPERBOLIC2 and self.param < 0:
            raise ValueError("hyperbolic spectral parameter must be nonnegative")
        return self

    @property
    def degree(self) -> int:
        return int(self.param)


class SpectralAtom(BaseModel):
    model_config = ConfigDict(frozen=True)

    point: SpectralPoint
    weight: float = Field(gt=0)


class SpectralMeasure(BaseModel):
    """A finitely supported probability measure on spectral parameters."""
    model_config = ConfigDict(frozen=True)

    atoms: Tuple[SpectralAtom, ...] = Field(min_length=1)

    @model_validator(mode="after")
    def _probability(self) -> "SpectralMeasure":
        kinds = {a.point.kind for a in self.atoms}
        if len(kinds) != 1:
            raise ValueError("all atoms must share one geometry kind")
        total = sum(a.weight for a in self.atoms)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {total!r}")
        return self

    @property
    def kind(self) -> GeometryKind:
        return self.atoms[0].point.kind

    @classmethod
    def mono(cls, kind: GeometryKind | str, param: float) -> "SpectralMeasure":
        point = SpectralPoint(kind=GeometryKind(kind), param=param)
        return cls(atoms=(SpectralAtom(point=point, weight=1.0),))

    @classmethod
    def mixture(
        cls, kind: GeometryKind | str, params: List[float], weights: Optional[List[float]] = None
    ) -> "SpectralMeasure":
        """Build a mixture; weights are normalized to total mass one."""
        weights = list(weights) if weights is not None else [1.0] * len(params)
        if len(weights) != len(params) or any(w <= 0 for w in weights):
            raise ValueError("need one positive weight per parameter")
        total = math.fsum(weights)
        normalized = [w / total for w in weights]
        normalized[-1] = 1.0 - math.fsum(normalized[:-1])
        kind = GeometryKind(kind)
        return cls(
            atoms=tuple(
                SpectralAtom(point=SpectralPoint(kind=kind, param=p), weight=w)
                for p, w in zip(params, normalized)
            )
        )

    @classmethod
    def band(
        cls,
        kind: GeometryKind | str,
        low: float,
        high: float,
        atoms: int = 16,
        power: float = 0.0,
    ) -> "SpectralMeasure":
        """Discretize a power spectrum proportional to R**power on [low, high].

        Sphere bands use every integer degree in the range instead of `atoms`.
        """
        kind = GeometryKind(kind)
        if high <= low:
            raise ValueError("band needs high > low")
        if kind == GeometryKind.SPHERE2:
            params = [float(l) for l in range(int(math.ceil(low)), int(math.floor(high)) + 1)]
        else:
            width = (high - low) / atoms
            params = [low + (i + 0.5) * width for i in range(atoms)]
        weights = [max(p, 1e-12) ** power if power else 1.0 for p in params]
        return cls.mixture(kind, params, weights)

    @classmethod
    def from_config(cls, data: Dict[str, Any]) -> "SpectralMeasure":
        """Parse `{geometry, atoms: [{param, weight}]}`."""
        kind = GeometryKind(data["geometry"])
        params = [float(a["param"]) for a in data["atoms"]]
        weights = [float(a.get("weight", 1.0)) for a in data["atoms"]]
        return cls.mixture(kind, params, weights)

    def to_config(self) -> Dict[str, Any]:
        return {
            "geometry": self.kind.value,
            "atoms": [{"param": a.point.param, "weight": a.weight} for a in self.atoms],
        }


class FieldSpec(BaseModel):
    """Geometry, spectrum, value dimension and sampler resolution."""
    model_config = ConfigDict(frozen=True)

    geometry: GeometryDescriptor
    spectrum: SpectralMeasure
    dim_v: int = Field(default=1, ge=1, le=3, description="Number of independent real components")
    n_waves: int = Field(default=256, ge=1, description="Wave truncation for flat and hyperbolic samplers")
    r_max: float = Field(default=2.0, gt=0, description="Hyperbolic validity radius")
    component_scales: Optional[Tuple[float, ...]] = Field(default=None, description="Variances beta per component")

    @model_validator(mode="after")
    def _consistent(self) -> "FieldSpec":
        if self.spectrum.kind != self.geometry.kind:
            raise ValueError(
                f"spectrum is for {self.spectrum.kind.value}, geometry is {self.geometry.kind.value}"
            )
        if self.component_scales is None:
            object.__setattr__(self, "component_scales", (1.0,) * self.dim_v)
        if len(self.component_scales) != self.dim_v or any(b <= 0 for b in self.component_scales):
            raise ValueError("need one positive scale per component")
        return self

    def scaled(self, factor: float) -> "FieldSpec":
        """Same field with every component variance multiplied by factor."""
        return self.model_copy(
            update={"component_scales": tuple(b * factor for b in self.component_scales)}
        )


class SeedSpec(BaseModel):
    """Base seed plus replication stream index."""
    model_config = ConfigDict(frozen=True)

    base_seed: int = Field(ge=0, lt=2**64)
    stream: int = Field(default=0, ge=0)


class ZeroSetKind(str, Enum):
    COUNT_1D = "count_1d"
    COUNT_POINTS = "count_points"
    LENGTH = "length"


class ZeroSetEstimate(BaseModel):
    """Measured size of a zero set."""
    kind: ZeroSetKind
    value: float = Field(ge=0)
    refinement_flag: bool = Field(default=False, description="Value moved more than 5% under refinement")
    region_volume: float = Field(ge=0)
    parameters: Dict[str, Any] = Field(default_factory=dict)
    flags: List[str] = Field(default_factory=list)
    locations: List[Tuple[float, ...]] = Field(default_factory=list, exclude=True)
    segments: List[Tuple[Tuple[float, ...], Tuple[float, ...]]] = Field(default_factory=list, exclude=True)


class SpacingConvention(str, Enum):
    """RICE_DEF: pi/sqrt(kappa2). WAVELENGTH: 2 pi/sqrt(dim_x kappa2)."""
    RICE_DEF = "rice"
    WAVELENGTH = "wavelength"


class PredictionMode(str, Enum):
    """Closed-form constant n!/(n-k)! (pi/2)^(k/2) or the chi-mean derivation; "paper" names the former."""
    FACTORIAL = "factorial"
    CHI = "chi"

    @classmethod
    def _missing_(cls, value):
        if isinstance(value, str) and value.lower() in MODE_ALIASES:
            return cls(MODE_ALIASES[value.lower()])
        return None


MODE_ALIASES = {"paper": "factorial"}


class PredictionReport(BaseModel):
    """Analytic predictions with every intermediate quantity."""
    dim_x: int
    dim_v: int
    kappa2: float
    spacing: Dict[str, float]
    literal_spacing: Optional[float] = None
    cell_volume: Dict[str, float]
    constants: Dict[str, Dict[str, float]]
    region_volume: Optional[float] = None
    predicted_measure: Optional[Dict[str, Dict[str, float]]] = None
