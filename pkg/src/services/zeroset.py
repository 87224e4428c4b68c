"""
Zero-set statistics of sampled fields.

All measurements run on standardized components, so rescaling the
component variances never changes a count or a length.
"""

import itertools
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from ..errors import DomainError, UndefinedSpacingError
from ..types.models import GeodesicSegment, GeometryKind, ZeroSetEstimate, ZeroSetKind
from . import geometry
from .geometry import RegionGrid
from .sampler import SampledField

logger = logging.getLogger(__name__)

BISECTION_TOL = 1e-8
NEWTON_TOL = 1e-9
NEWTON_MAX_ITER = 60
REFINEMENT_THRESHOLD = 0.05


def _moved(coarse: float, fine: float) -> bool:
    if coarse == 0:
        return fine != 0
    return abs(fine - coarse) > REFINEMENT_THRESHOLD * abs(coarse)


def _field_values(field: SampledField, coords: np.ndarray, component: Optional[int] = None) -> np.ndarray:
    return field.values(coords, component, standardized=True)


# ---------------------------------------------------------------- level crossings


def _segment_samples(field, component, seg, level, ts, flags):
    g = field.geometry
    pts = geometry.geodesic_point(g, seg, ts)
    f = _field_values(field, pts, component) - level
    hits = np.flatnonzero(f == 0.0)
    if hits.size:
        step = seg.length / max(len(ts) - 1, 1)
        for _ in range(8):
            if not hits.size:
                break
            shift = np.where(ts[hits] + step / 100.0 <= seg.length, step / 100.0, -step / 100.0)
            ts[hits] = ts[hits] + shift
            f[hits] = _field_values(field, geometry.geodesic_point(g, seg, ts[hits]), component) - level
            hits = hits[f[hits] == 0.0]
        flags.append("perturbed_node")
    return ts, f


def _crossing_count(field, component, seg, level, step):
    n = max(1, math.ceil(seg.length / step))
    ts = np.linspace(0.0, seg.length, n + 1)
    flags: List[str] = []
    ts, f = _segment_samples(field, component, seg, level, ts, flags)
    idx = np.flatnonzero(np.signbit(f[:-1]) != np.signbit(f[1:]))
    return len(idx), ts, f, idx, flags


def count_level_crossings(
    field: SampledField,
    component: int,
    seg: GeodesicSegment,
    level: float,
    step: float,
    check_refinement: bool = True,
    expected_spacing: Optional[float] = None,
) -> ZeroSetEstimate:
    """Crossings of the standardized component through `level` along a geodesic segment."""
    if not 0 <= component < field.dim_v:
        raise DomainError(f"component {component} out of range")
    if not step > 0:
        raise DomainError("step must be positive")
    count, ts, f, idx, flags = _crossing_count(field, component, seg, level, step)
    if expected_spacing is not None and step > expected_spacing / 10.0:
        flags.append("coarse_step")
        logger.warning("step %.4g exceeds a tenth of the expected spacing %.4g", step, expected_spacing)

    lo, hi = ts[idx].copy(), ts[idx + 1].copy()
    f_lo = f[idx].copy()
    g = field.geometry
    while lo.size and np.max(hi - lo) > BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        f_mid = _field_values(field, geometry.geodesic_point(g, seg, mid), component) - level
        same = np.signbit(f_mid) == np.signbit(f_lo)
        lo = np.where(same, mid, lo)
        f_lo = np.where(same, f_mid, f_lo)
        hi = np.where(same, hi, mid)
    roots = 0.5 * (lo + hi)
    located = np.asarray(geometry.geodesic_point(g, seg, roots)).reshape(-1, g.dim_x) if roots.size else []
    locations = [tuple(map(float, c)) for c in located]

    flag = False
    if check_refinement:
        fine, *_ = _crossing_count(field, component, seg, level, step / 2.0)
        flag = _moved(count, fine)
    return ZeroSetEstimate(
        kind=ZeroSetKind.COUNT_1D,
        value=float(count),
        refinement_flag=flag,
        region_volume=seg.length,
        parameters={"step": step, "level": level, "bisection_tol": BISECTION_TOL},
        flags=sorted(set(flags)),
        locations=locations,
    )


def sample_spacing(field: SampledField, component: int, segments: Sequence[GeodesicSegment], step: float) -> float:
    """Typical spacing estimated from one realization: total length over total zero count."""
    total_length, total_count = 0.0, 0
    for seg in segments:
        count, *_ = _crossing_count(field, component, seg, 0.0, step)
        total_length += seg.length
        total_count += count
    if total_count == 0:
        raise UndefinedSpacingError("no zeros found along the segments")
    return total_length / total_count


# ---------------------------------------------------------------- point zeros


def _corner_stack(values: np.ndarray, dim: int) -> np.ndarray:
    """Corner values per cell, shape (2**dim, *cells, ...)."""
    shape = values.shape[:dim]
    corners = []
    for offset in itertools.product((0, 1), repeat=dim):
        corners.append(values[tuple(slice(o, n - 1 + o) for o, n in zip(offset, shape))])
    return np.stack(corners)


def _candidate_cells(values: np.ndarray, dim: int) -> np.ndarray:
    corners = _corner_stack(values, dim)
    changes = np.all((corners.min(axis=0) <= 0) & (corners.max(axis=0) >= 0), axis=-1)
    if dim != 2:
        return changes
    # loop c00 -> c10 -> c11 -> c01 in corner-stack order 0, 2, 3, 1
    loop = corners[[0, 2, 3, 1]]
    angle = np.arctan2(loop[..., 1], loop[..., 0])
    turns = np.diff(np.concatenate([angle, angle[:1]]), axis=0)
    turns = (turns + math.pi) % (2.0 * math.pi) - math.pi
    winding = np.rint(turns.sum(axis=0) / (2.0 * math.pi))
    quadrant = (loop[..., 0] > 0).astype(int) + 2 * (loop[..., 1] > 0)
    seen = sum((quadrant == q).any(axis=0).astype(int) for q in range(4))
    return changes & ((winding != 0) | (seen == 4))


def _newton(field: SampledField, start: np.ndarray, trust: float) -> Tuple[np.ndarray, np.ndarray]:
    """Batched damped Newton along geodesics; returns (points, converged)."""
    g = field.geometry
    x = start.copy()
    f = _field_values(field, x)
    res = np.linalg.norm(f, axis=-1)
    done = res <= NEWTON_TOL
    alive = np.ones(len(x), dtype=bool)
    for _ in range(NEWTON_MAX_ITER):
        act = np.flatnonzero(alive & ~done)
        if not act.size:
            break
        jac = field.jacobian(x[act], standardized=True)
        ok = np.abs(np.linalg.det(jac)) > 1e-14
        alive[act[~ok]] = False
        act, jac = act[ok], jac[ok]
        if not act.size:
            break
        delta = -np.linalg.solve(jac, f[act][..., None])[..., 0]
        size = np.linalg.norm(delta, axis=-1)
        delta *= np.minimum(1.0, trust / np.maximum(size, 1e-300))[:, None]
        alpha = np.ones(len(act))
        pending = np.arange(len(act))
        for _ in range(10):
            trial = geometry.exp_map(g, x[act[pending]], alpha[pending, None] * delta[pending])
            f_trial = _field_values(field, trial)
            r_trial = np.linalg.norm(f_trial, axis=-1)
            better = r_trial < res[act[pending]]
            take = pending[better]
            x[act[take]] = trial[better]
            f[act[take]] = f_trial[better]
            res[act[take]] = r_trial[better]
            pending = pending[~better]
            if not pending.size:
                break
            alpha[pending] *= 0.5
        alive[act[pending]] = False
        done = res <= NEWTON_TOL
    return x, done


def _accept(g, centers: np.ndarray, roots: np.ndarray, converged: np.ndarray, radius: float) -> np.ndarray:
    near = np.asarray(geometry.distance(g, centers, roots)) <= radius
    return converged & near


def _search_coords(g, roots: np.ndarray) -> np.ndarray:
    """Euclidean coordinates in which intrinsic distance never undercounts."""
    if g.kind == GeometryKind.SPHERE2:
        # chord <= arc
        return geometry.sphere_embedding(roots)[0]
    # disk: chart distance <= intrinsic / 2
    return roots


def _dedupe(g, roots: np.ndarray, radius: float) -> np.ndarray:
    """Keep each root unless an earlier kept root lies within `radius`."""
    roots = np.asarray(roots, dtype=float).reshape(-1, g.dim_x)
    if len(roots) < 2:
        return roots
    pairs = cKDTree(_search_coords(g, roots)).query_pairs(radius, output_type="ndarray")
    if len(pairs):
        close = np.atleast_1d(geometry.distance(g, roots[pairs[:, 0]], roots[pairs[:, 1]])) <= radius
        pairs = pairs[close]
    earlier: List[List[int]] = [[] for _ in range(len(roots))]
    for i, j in pairs:
        lo, hi = (i, j) if i < j else (j, i)
        earlier[hi].append(lo)
    kept = np.zeros(len(roots), dtype=bool)
    for i in range(len(roots)):
        kept[i] = not any(kept[j] for j in earlier[i])
    return roots[kept]


def _subdivide(field: SampledField, grid: RegionGrid, cells: np.ndarray):
    """Retry failed cells on their 2**d children; returns (roots, majority-counted centers)."""
    g = field.geometry
    dim = g.dim_x
    lower = np.stack([grid.axes[k][cells[:, k]] for k in range(dim)], axis=-1)
    upper = np.stack([grid.axes[k][cells[:, k] + 1] for k in range(dim)], axis=-1)
    half = 0.5 * (upper - lower)
    roots, fallback = [], []
    for i in range(len(cells)):
        children = np.array(list(itertools.product((0, 1), repeat=dim)), dtype=float)
        child_lo = lower[i] + children * half[i]
        ticks = np.stack([child_lo, child_lo + half[i]], axis=1)
        # corner params for every child: (children, 2**dim, dim)
        corner_offsets = np.array(list(itertools.product((0, 1), repeat=dim)))
        corner_params = np.stack(
            [ticks[:, corner_offsets[:, k], k] for k in range(dim)], axis=-1
        )
        corner_vals = _field_values(field, grid.param_to_chart(corner_params))
        lo_ok = corner_vals.min(axis=1) <= 0
        hi_ok = corner_vals.max(axis=1) >= 0
        passing = np.all(lo_ok & hi_ok, axis=-1)
        centers = grid.param_to_chart(child_lo + 0.5 * half[i])
        found = False
        if passing.any():
            pts, conv = _newton(field, centers[passing], grid.spacing / 2.0)
            good = _accept(g, centers[passing], pts, conv, grid.spacing * math.sqrt(dim) / 2.0)
            if good.any():
                roots.extend(pts[good])
                found = True
        if not found and passing.sum() * 2 >= len(children):
            fallback.append(grid.param_to_chart(lower[i] + half[i]))
    return roots, fallback


def count_point_zeros(field: SampledField, grid: RegionGrid, check_refinement: bool = True) -> ZeroSetEstimate:
    """Isolated zeros of a field with dim_v = dim_x inside the grid's region."""
    g = field.geometry
    dim = g.dim_x
    if field.dim_v != dim or dim not in (2, 3):
        raise DomainError(f"point zeros need dim_v = dim_x in (2, 3), got ({dim}, {field.dim_v})")
    values = _field_values(field, grid.nodes)
    candidates = np.argwhere(_candidate_cells(values, dim))
    centers = grid.cell_centers()[tuple(candidates.T)] if candidates.size else np.zeros((0, dim))
    accept_radius = grid.spacing * math.sqrt(dim)
    flags: List[str] = []
    roots = np.zeros((0, dim))
    failures = 0
    if len(candidates):
        pts, conv = _newton(field, centers, grid.spacing)
        good = _accept(g, centers, pts, conv, accept_radius)
        roots = pts[good]
        failed = candidates[~good]
        if failed.size:
            retried, fallback = _subdivide(field, grid, failed)
            if retried:
                roots = np.concatenate([roots, np.asarray(retried)])
            if fallback:
                failures = len(fallback)
                flags.append("newton_failure")
                logger.debug("%d cells counted by subdivision majority", failures)
                roots = np.concatenate([roots, np.asarray(fallback)])
    roots = _dedupe(g, roots, grid.spacing / 2.0)
    if len(roots):
        roots = roots[geometry.contains(g, grid.region, roots)]
    count = float(len(roots))

    flag = False
    if check_refinement:
        fine = count_point_zeros(field, grid.refined(), check_refinement=False)
        flag = _moved(count, fine.value)
    return ZeroSetEstimate(
        kind=ZeroSetKind.COUNT_POINTS,
        value=count,
        refinement_flag=flag,
        region_volume=grid.total_weight,
        parameters={
            "h": grid.spacing,
            "newton_tol": NEWTON_TOL,
            "dedupe_radius": grid.spacing / 2.0,
            "candidates": int(len(candidates)),
            "majority_counted": failures,
        },
        flags=flags,
        locations=[tuple(map(float, r)) for r in roots],
    )


# ---------------------------------------------------------------- nodal length

# crossing edges per corner-sign pattern; bit 0 c00, bit 1 c10, bit 2 c11, bit 3 c01
_SADDLE_PAIRS = {
    (5, True): ((0, 1), (2, 3)),
    (5, False): ((0, 3), (1, 2)),
    (10, True): ((0, 3), (1, 2)),
    (10, False): ((0, 1), (2, 3)),
}


def nodal_length(field: SampledField, component: int, grid: RegionGrid, check_refinement: bool = True) -> ZeroSetEstimate:
    """Length of the nodal set of one component by marching squares."""
    g = field.geometry
    if g.dim_x != 2:
        raise DomainError("nodal length is measured on two-dimensional spaces")
    if not 0 <= component < field.dim_v:
        raise DomainError(f"component {component} out of range")
    v = _field_values(field, grid.nodes, component)
    a0, a1 = grid.axes
    c00, c10, c01, c11 = v[:-1, :-1], v[1:, :-1], v[:-1, 1:], v[1:, 1:]
    pos = [c > 0 for c in (c00, c10, c11, c01)]
    case = pos[0] * 1 + pos[1] * 2 + pos[2] * 4 + pos[3] * 8

    i0, j0 = np.meshgrid(a0[:-1], a1[:-1], indexing="ij")
    i1, j1 = np.meshgrid(a0[1:], a1[1:], indexing="ij")

    def edge(va, vb, pa, pb):
        # NaN on edges without a crossing; those are never selected
        with np.errstate(divide="ignore", invalid="ignore"):
            t = va / (va - vb)
            return pa + t[..., None] * (pb - pa)

    p00 = np.stack([i0, j0], -1)
    p10 = np.stack([i1, j0], -1)
    p01 = np.stack([i0, j1], -1)
    p11 = np.stack([i1, j1], -1)
    points = [edge(c00, c10, p00, p10), edge(c10, c11, p10, p11), edge(c01, c11, p01, p11), edge(c00, c01, p00, p01)]
    cross = np.stack([pos[0] != pos[1], pos[1] != pos[2], pos[3] != pos[2], pos[0] != pos[3]], axis=-1)

    starts, ends = [], []
    simple = (cross.sum(axis=-1) == 2)
    cells = np.argwhere(simple)
    if cells.size:
        edges = np.nonzero(cross[simple])[1].reshape(-1, 2)
        stacked = np.stack(points, axis=-2)[simple]
        rows = np.arange(len(cells))
        starts.append(stacked[rows, edges[:, 0]])
        ends.append(stacked[rows, edges[:, 1]])
    saddle = np.argwhere((case == 5) | (case == 10))
    if saddle.size:
        mid = 0.5 * (np.stack([i0, j0], -1) + np.stack([i1, j1], -1))[tuple(saddle.T)]
        center_positive = _field_values(field, grid.param_to_chart(mid), component) > 0
        for n, (i, j) in enumerate(saddle):
            for a, b in _SADDLE_PAIRS[(int(case[i, j]), bool(center_positive[n]))]:
                starts.append(points[a][i, j][None, :])
                ends.append(points[b][i, j][None, :])

    segments: List[Tuple[Tuple[float, ...], Tuple[float, ...]]] = []
    length = 0.0
    if starts:
        s = grid.param_to_chart(np.concatenate(starts))
        e = grid.param_to_chart(np.concatenate(ends))
        pieces = np.atleast_1d(geometry.distance(g, s, e))
        length = float(np.sum(pieces))
        segments = [(tuple(map(float, a)), tuple(map(float, b))) for a, b in zip(s, e)]

    flag = False
    if check_refinement:
        fine = nodal_length(field, component, grid.refined(), check_refinement=False)
        flag = _moved(length, fine.value)
    return ZeroSetEstimate(
        kind=ZeroSetKind.LENGTH,
        value=length,
        refinement_flag=flag,
        region_volume=grid.total_weight,
        parameters={"h": grid.spacing, "component": component, "saddles": int(len(saddle))},
        segments=segments,
    )
