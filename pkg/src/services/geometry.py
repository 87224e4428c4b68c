"""
Homogeneous spaces: distances, geodesics, area elements and region grids.

Every function accepts either `Point` models or numpy arrays of chart
coordinates with shape (..., d) and is vectorized over the leading axes.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import DomainError
from ..types.models import (
    GeodesicSegment,
    GeometryDescriptor,
    GeometryKind,
    Point,
    Region,
    RegionKind,
)

logger = logging.getLogger(__name__)

PointLike = Union[Point, Sequence[Point], np.ndarray, Sequence[float]]

DEFAULT_RADIUS_BOUND = 4.0


def as_coords(g: GeometryDescriptor, p: PointLike) -> np.ndarray:
    """Chart coordinates as a float array of shape (..., dim_x), validated."""
    if isinstance(p, Point):
        arr = np.asarray(p.coords, dtype=float)
    elif isinstance(p, (list, tuple)) and p and isinstance(p[0], Point):
        arr = np.asarray([q.coords for q in p], dtype=float)
    else:
        arr = np.asarray(p, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] != g.dim_x:
        raise DomainError(f"{g.kind.value} points need {g.dim_x} chart coordinates, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("chart coordinates must be finite")
    if g.kind == GeometryKind.SPHERE2:
        theta = arr[..., 0]
        if np.any(theta < -1e-12) or np.any(theta > math.pi + 1e-12):
            raise DomainError("colatitude must lie in [0, pi]")
        # longitude is periodic
        arr = np.stack([theta, np.mod(arr[..., 1], 2.0 * math.pi)], axis=-1)
    elif g.kind == GeometryKind.HYPERBOLIC2:
        if np.any(arr[..., 0] ** 2 + arr[..., 1] ** 2 >= 1.0):
            raise DomainError("hyperbolic points must lie inside the unit disk")
    return arr


def to_point(coords: np.ndarray) -> Point:
    return Point(coords=tuple(float(c) for c in np.asarray(coords).ravel()))


def sphere_embedding(c: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unit vector and orthonormal frame (e_theta, e_phi) at (theta, phi)."""
    theta, phi = c[..., 0], c[..., 1]
    st, ct, sp, cp = np.sin(theta), np.cos(theta), np.sin(phi), np.cos(phi)
    p = np.stack([st * cp, st * sp, ct], axis=-1)
    e_theta = np.stack([ct * cp, ct * sp, -st], axis=-1)
    e_phi = np.stack([-sp, cp, np.zeros_like(phi)], axis=-1)
    return p, e_theta, e_phi


def sphere_chart(v: np.ndarray) -> np.ndarray:
    """(theta, phi) of unit vectors, phi in [0, 2 pi)."""
    theta = np.arctan2(np.hypot(v[..., 0], v[..., 1]), v[..., 2])
    phi = np.mod(np.arctan2(v[..., 1], v[..., 0]), 2.0 * math.pi)
    return np.stack([theta, phi], axis=-1)


def _disk(c: np.ndarray) -> np.ndarray:
    return c[..., 0] + 1j * c[..., 1]


def _undisk(z: np.ndarray) -> np.ndarray:
    return np.stack([z.real, z.imag], axis=-1)


def _distance_coords(g: GeometryDescriptor, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if g.is_flat:
        return np.linalg.norm(a - b, axis=-1)
    if g.kind == GeometryKind.SPHERE2:
        pa, _, _ = sphere_embedding(a)
        pb, _, _ = sphere_embedding(b)
        cross = np.linalg.norm(np.cross(pa, pb), axis=-1)
        return np.arctan2(cross, np.sum(pa * pb, axis=-1))
    z, w = _disk(a), _disk(b)
    ratio = np.abs(z - w) / np.abs(1.0 - np.conj(z) * w)
    return 2.0 * np.arctanh(np.minimum(ratio, 1.0 - 1e-16))


def distance(g: GeometryDescriptor, p: PointLike, q: PointLike) -> Union[float, np.ndarray]:
    """Intrinsic distance; great-circle on the sphere, Poincare metric on the disk."""
    d = _distance_coords(g, as_coords(g, p), as_coords(g, q))
    return float(d) if np.ndim(d) == 0 else d


def exp_map(g: GeometryDescriptor, base: np.ndarray, tangent: np.ndarray) -> np.ndarray:
    """Follow the geodesic from base with initial velocity `tangent` (frame coordinates) for unit time."""
    base = np.asarray(base, dtype=float)
    tangent = np.asarray(tangent, dtype=float)
    if g.is_flat:
        return base + tangent
    t = np.linalg.norm(tangent, axis=-1)
    safe = np.where(t > 0, t, 1.0)[..., None]
    unit = tangent / safe
    if g.kind == GeometryKind.SPHERE2:
        p, e_theta, e_phi = sphere_embedding(base)
        v = unit[..., 0:1] * e_theta + unit[..., 1:2] * e_phi
        q = np.cos(t)[..., None] * p + np.sin(t)[..., None] * v
        out = sphere_chart(q)
        # keep the longitude of a base point when the step vanishes
        return np.where((t > 0)[..., None], out, base)
    z0 = _disk(base)
    w = np.tanh(t / 2.0) * (unit[..., 0] + 1j * unit[..., 1])
    return _undisk((w + z0) / (1.0 + np.conj(z0) * w))


def geodesic_point(g: GeometryDescriptor, seg: GeodesicSegment, t: Union[float, np.ndarray]) -> Union[Point, np.ndarray]:
    """Point at arc length t along the segment; arrays of t give arrays of coordinates."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < -1e-12) or np.any(t_arr > seg.length + 1e-12):
        raise DomainError(f"t must lie in [0, {seg.length}]")
    base = as_coords(g, seg.base)
    direction = np.asarray(seg.direction, dtype=float)
    if direction.shape != (g.dim_x,):
        raise DomainError(f"direction needs {g.dim_x} frame components")
    out = exp_map(g, np.broadcast_to(base, t_arr.shape + base.shape), t_arr[..., None] * direction)
    return to_point(out) if t_arr.ndim == 0 else out


def _check_region(g: GeometryDescriptor, region: Region) -> None:
    expected = {
        GeometryKind.SPHERE2: RegionKind.SPHERE_BOX,
        GeometryKind.HYPERBOLIC2: RegionKind.BALL,
    }.get(g.kind, RegionKind.BOX)
    if region.kind != expected:
        raise DomainError(f"{g.kind.value} regions must be of kind {expected.value}")
    if region.kind == RegionKind.BOX and len(region.lower) != g.dim_x:
        raise DomainError(f"box needs {g.dim_x} coordinates")


def region_volume(g: GeometryDescriptor, region: Region, radius_bound: Optional[float] = None) -> float:
    """Closed-form volume of the region."""
    _check_region(g, region)
    if region.kind == RegionKind.BOX:
        return float(np.prod(np.subtract(region.upper, region.lower)))
    if region.kind == RegionKind.SPHERE_BOX:
        (t0, p0), (t1, p1) = region.lower, region.upper
        return (math.cos(t0) - math.cos(t1)) * (p1 - p0)
    bound = DEFAULT_RADIUS_BOUND if radius_bound is None else radius_bound
    if region.radius > bound:
        raise DomainError(f"hyperbolic radius {region.radius} exceeds the validity bound {bound}")
    return 2.0 * math.pi * (math.cosh(region.radius) - 1.0)


def contains(g: GeometryDescriptor, region: Region, coords: np.ndarray, slack: float = 1e-12) -> np.ndarray:
    """Boolean mask of chart coordinates lying in the region."""
    c = np.asarray(coords, dtype=float)
    if region.kind == RegionKind.BOX:
        lo, hi = np.asarray(region.lower), np.asarray(region.upper)
        return np.all((c >= lo - slack) & (c <= hi + slack), axis=-1)
    if region.kind == RegionKind.SPHERE_BOX:
        (t0, p0), (t1, p1) = region.lower, region.upper
        dphi = np.mod(c[..., 1] - p0, 2.0 * math.pi)
        full = p1 - p0 >= 2.0 * math.pi - 1e-12
        in_phi = np.ones(c.shape[:-1], dtype=bool) if full else dphi <= (p1 - p0) + slack
        return (c[..., 0] >= t0 - slack) & (c[..., 0] <= t1 + slack) & in_phi
    r = _distance_coords(g, np.zeros_like(c), c)
    return r <= region.radius + slack


@dataclass(frozen=True)
class RegionGrid:
    """Tensor-product grid over a region.

    `axes` hold the region parameters: Cartesian coordinates on flat boxes,
    (theta, phi) on sphere boxes and geodesic polar (s, alpha) on hyperbolic
    balls. `weights` are exact cell volumes.
    """
    geometry: GeometryDescriptor
    region: Region
    axes: Tuple[np.ndarray, ...]
    nodes: np.ndarray
    weights: np.ndarray
    spacing: float

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(len(a) for a in self.axes)

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.weights))

    def param_to_chart(self, params: np.ndarray) -> np.ndarray:
        params = np.asarray(params, dtype=float)
        if self.region.kind != RegionKind.BALL:
            return params
        rho = np.tanh(params[..., 0] / 2.0)
        return np.stack([rho * np.cos(params[..., 1]), rho * np.sin(params[..., 1])], axis=-1)

    def cell_params(self) -> np.ndarray:
        """Parameter coordinates of cell centers, shape (*cells, d)."""
        mids = [0.5 * (a[1:] + a[:-1]) for a in self.axes]
        return np.stack(np.meshgrid(*mids, indexing="ij"), axis=-1)

    def cell_centers(self) -> np.ndarray:
        return self.param_to_chart(self.cell_params())

    def node_cell_counts(self) -> np.ndarray:
        """How many cells each node belongs to."""
        counts = np.ones(self.shape, dtype=int)
        for axis, a in enumerate(self.axes):
            along = np.full(len(a), 2, dtype=int)
            along[0] = along[-1] = 1
            shape = [1] * len(self.axes)
            shape[axis] = len(a)
            counts = counts * along.reshape(shape)
        return counts

    def refined(self) -> "RegionGrid":
        """The same region with every axis step halved."""
        axes = []
        for a in self.axes:
            fine = np.empty(2 * len(a) - 1)
            fine[0::2] = a
            fine[1::2] = 0.5 * (a[1:] + a[:-1])
            axes.append(fine)
        return _build_grid(self.geometry, self.region, tuple(axes))


def _build_grid(g: GeometryDescriptor, region: Region, axes: Tuple[np.ndarray, ...]) -> RegionGrid:
    params = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    steps = [np.diff(a) for a in axes]
    if region.kind == RegionKind.BOX:
        weights = steps[0]
        for s in steps[1:]:
            weights = np.multiply.outer(weights, s)
        nodes = params
        spacing = max(float(s.max()) for s in steps)
    elif region.kind == RegionKind.SPHERE_BOX:
        theta, phi = axes
        band = -np.diff(np.cos(theta))
        weights = np.multiply.outer(band, steps[1])
        nodes = params
        t0, t1 = theta[0], theta[-1]
        max_sin = 1.0 if t0 <= math.pi / 2 <= t1 else max(math.sin(t0), math.sin(t1))
        spacing = max(float(steps[0].max()), float(steps[1].max()) * max_sin)
    else:
        s, alpha = axes
        ring = np.diff(np.cosh(s))
        weights = np.multiply.outer(ring, steps[1])
        rho = np.tanh(params[..., 0] / 2.0)
        nodes = np.stack([rho * np.cos(params[..., 1]), rho * np.sin(params[..., 1])], axis=-1)
        spacing = max(float(steps[0].max()), float(steps[1].max()) * math.sinh(s[-1]))
    return RegionGrid(geometry=g, region=region, axes=axes, nodes=nodes, weights=weights, spacing=spacing)


def grid_region(
    g: GeometryDescriptor,
    region: Region,
    resolution: float,
    radius_bound: Optional[float] = None,
) -> RegionGrid:
    """Discretize a region with intrinsic node spacing at most `resolution`."""
    if not resolution > 0:
        raise DomainError("resolution must be positive")
    region_volume(g, region, radius_bound)
    if region.kind == RegionKind.BOX:
        axes = tuple(
            np.linspace(lo, hi, max(1, math.ceil((hi - lo) / resolution)) + 1)
            for lo, hi in zip(region.lower, region.upper)
        )
    elif region.kind == RegionKind.SPHERE_BOX:
        (t0, p0), (t1, p1) = region.lower, region.upper
        max_sin = 1.0 if t0 <= math.pi / 2 <= t1 else max(math.sin(t0), math.sin(t1))
        n_theta = max(1, math.ceil((t1 - t0) / resolution))
        n_phi = max(3, math.ceil((p1 - p0) * max_sin / resolution))
        axes = (np.linspace(t0, t1, n_theta + 1), np.linspace(p0, p1, n_phi + 1))
    else:
        radius = region.radius
        n_s = max(1, math.ceil(radius / resolution))
        n_alpha = max(3, math.ceil(2.0 * math.pi * math.sinh(radius) / resolution))
        axes = (np.linspace(0.0, radius, n_s + 1), np.linspace(0.0, 2.0 * math.pi, n_alpha + 1))
    grid = _build_grid(g, region, axes)
    logger.debug("grid %s over %s: shape=%s h=%.4g", g.kind.value, region.kind.value, grid.shape, grid.spacing)
    return grid
