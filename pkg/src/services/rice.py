"""
Analytic predictions: spectral moments, spacings, cell volumes and
universal density constants.

Two spacing conventions are carried side by side:

- rice: pi/sqrt(k2), the inverse of the zero density of the unit-variance
  restriction to a geodesic
- wavelength: 2 pi/sqrt(dim_x k2), which equals the wavelength of a
  monochromatic flat field

and two constant modes:

- factorial: n!/(n-k)! (pi/2)^(k/2)
- chi: (2 pi)^(-k/2) (Lambda^2 k2)^(k/2) prod_{i<k} chi_mean(n - i)
"""

import logging
import math
from typing import Dict, Optional, Sequence, Union

from scipy.special import gammaln

from ..errors import DomainError, UndefinedSpacingError
from ..types.models import FieldSpec, PredictionMode, PredictionReport, Region, SpacingConvention
from .geometry import region_volume
from .spectra import eigenvalue

logger = logging.getLogger(__name__)

SUPPORTED_PAIRS = {(1, 1), (2, 1), (2, 2), (3, 3)}


def second_moment(spec: FieldSpec) -> float:
    """Variance of a directional derivative of a unit-variance component."""
    total = math.fsum(a.weight * abs(eigenvalue(a.point)) for a in spec.spectrum.atoms)
    return total / spec.geometry.dim_x


def rice_level_density(u: float, kappa2: float) -> float:
    """Expected crossings of level u per unit length."""
    if not kappa2 > 0:
        raise DomainError("second moment must be positive")
    return math.exp(-(u**2) / 2.0) * math.sqrt(kappa2) / math.pi


def _spacing_from_moment(kappa2: float, dim_x: int, convention: SpacingConvention) -> float:
    if convention == SpacingConvention.RICE_DEF:
        return math.pi / math.sqrt(kappa2)
    return 2.0 * math.pi / math.sqrt(dim_x * kappa2)


def spacing(spec: FieldSpec, convention: SpacingConvention = SpacingConvention.WAVELENGTH) -> float:
    kappa2 = second_moment(spec)
    if kappa2 <= 0:
        raise UndefinedSpacingError("spacing is undefined for a constant field")
    return _spacing_from_moment(kappa2, spec.geometry.dim_x, SpacingConvention(convention))


def literal_spacing(spec: FieldSpec, component: int = 0) -> float:
    """pi/sqrt(dim_x beta |K|), kept for comparison; depends on beta."""
    mean_k = math.fsum(a.weight * abs(eigenvalue(a.point)) for a in spec.spectrum.atoms)
    if mean_k <= 0:
        raise UndefinedSpacingError("spacing is undefined for a constant field")
    beta = spec.component_scales[component]
    return math.pi / math.sqrt(spec.geometry.dim_x * beta * mean_k)


def chi_mean(m: int) -> float:
    """Mean of a chi variable with m degrees of freedom."""
    if m < 1:
        raise DomainError("chi_mean needs m >= 1")
    return math.sqrt(2.0) * math.exp(gammaln((m + 1) / 2.0) - gammaln(m / 2.0))


def expected_parallelotope_volume(
    n: int,
    k: int,
    sigmas: Optional[Sequence[float]] = None,
    mode: PredictionMode = PredictionMode.CHI,
) -> float:
    """Expected k-volume spanned by k independent Gaussian columns in R^n."""
    if k < 0 or n < 1 or k > n:
        raise DomainError(f"need 0 <= k <= n, got n={n}, k={k}")
    sigmas = [1.0] * k if sigmas is None else list(sigmas)
    if len(sigmas) != k:
        raise DomainError("need one sigma per column")
    scale = math.prod(sigmas)
    if PredictionMode(mode) == PredictionMode.FACTORIAL:
        return scale * math.factorial(n) / math.factorial(n - k)
    return scale * math.prod(chi_mean(n - i) for i in range(k))


def predicted_constant(
    dim_x: int,
    dim_v: int,
    mode: PredictionMode = PredictionMode.CHI,
    convention: SpacingConvention = SpacingConvention.WAVELENGTH,
) -> float:
    """Expected zero-set measure per elementary cell; depends on dimensions only."""
    if not 1 <= dim_v <= dim_x:
        raise DomainError(f"need 1 <= dim_v <= dim_x, got ({dim_x}, {dim_v})")
    if PredictionMode(mode) == PredictionMode.FACTORIAL:
        return math.factorial(dim_x) / math.factorial(dim_x - dim_v) * (math.pi / 2.0) ** (dim_v / 2.0)
    # Lambda^2 k2 is pi^2 (rice) or 4 pi^2 / dim_x (wavelength) for every spectrum
    cell_moment = _spacing_from_moment(1.0, dim_x, SpacingConvention(convention)) ** 2
    chi = math.prod(chi_mean(dim_x - i) for i in range(dim_v))
    return (2.0 * math.pi) ** (-dim_v / 2.0) * cell_moment ** (dim_v / 2.0) * chi


def cell_volume(spec: FieldSpec, convention: SpacingConvention = SpacingConvention.WAVELENGTH) -> float:
    """Elementary cell volume of the standardized components."""
    return spacing(spec, convention) ** spec.dim_v


def _check_supported(spec: FieldSpec) -> None:
    pair = (spec.geometry.dim_x, spec.dim_v)
    if pair not in SUPPORTED_PAIRS:
        raise DomainError(f"(dim_x, dim_v) = {pair} is not supported")


def predicted_measure(
    spec: FieldSpec,
    region: Union[Region, float],
    mode: PredictionMode = PredictionMode.CHI,
    convention: SpacingConvention = SpacingConvention.WAVELENGTH,
    radius_bound: Optional[float] = None,
) -> float:
    """Expected zero count or length in a region, or in a given volume."""
    _check_supported(spec)
    volume = float(region) if not isinstance(region, Region) else region_volume(spec.geometry, region, radius_bound)
    if volume < 0:
        raise DomainError("volume must be nonnegative")
    if volume == 0:
        return 0.0
    constant = predicted_constant(spec.geometry.dim_x, spec.dim_v, mode, convention)
    return constant * volume / cell_volume(spec, convention)


def predict(spec: FieldSpec, region: Optional[Region] = None, radius_bound: Optional[float] = None) -> PredictionReport:
    """Every analytic quantity for a field spec, in both conventions and both modes."""
    kappa2 = second_moment(spec)
    conventions = list(SpacingConvention)
    modes = list(PredictionMode)
    spacings = {c.value: spacing(spec, c) for c in conventions}
    cells = {c.value: spacings[c.value] ** spec.dim_v for c in conventions}
    dim_x = spec.geometry.dim_x
    constants: Dict[str, Dict[str, float]] = {}
    if spec.dim_v <= dim_x:
        constants = {
            m.value: {c.value: predicted_constant(dim_x, spec.dim_v, m, c) for c in conventions} for m in modes
        }
    volume = None
    measures = None
    if region is not None:
        volume = region_volume(spec.geometry, region, radius_bound)
        if (dim_x, spec.dim_v) in SUPPORTED_PAIRS:
            measures = {
                m.value: {c.value: constants[m.value][c.value] * volume / cells[c.value] for c in conventions}
                for m in modes
            }
    report = PredictionReport(
        dim_x=dim_x,
        dim_v=spec.dim_v,
        kappa2=kappa2,
        spacing=spacings,
        literal_spacing=literal_spacing(spec),
        cell_volume=cells,
        constants=constants,
        region_volume=volume,
        predicted_measure=measures,
    )
    logger.debug("predictions for %s: kappa2=%.6g spacing=%s", spec.geometry.kind.value, kappa2, spacings)
    return report
