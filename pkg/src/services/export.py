"""
File outputs: grid dumps, rasters, zero-set dumps and reports.
"""

import json
import logging
import math
from pathlib import Path
from typing import Iterable, Optional, Tuple

import numpy as np
import pandas as pd

from ..types.models import GeometryKind, ZeroSetEstimate
from ..types.state import ExperimentReport
from .sampler import Realization

logger = logging.getLogger(__name__)

_AXIS_NAMES = {
    GeometryKind.LINE1: ("x",),
    GeometryKind.PLANE2: ("x", "y"),
    GeometryKind.SPACE3: ("x", "y", "z"),
    GeometryKind.SPHERE2: ("theta", "phi"),
    GeometryKind.HYPERBOLIC2: ("x", "y"),
}


def raster(realization: Realization, size: int, extent: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Chart coordinates (size, size, d) and values (size, size, dim_v) on a pixel grid.

    Flat fields use the square [0, extent]^2 (the z = 0 slice in space),
    the sphere an equirectangular (theta, phi) grid and the hyperbolic disk
    Cartesian pixels over the validity disk; pixels outside it are NaN.
    """
    g = realization.geometry
    if g.kind == GeometryKind.LINE1:
        x = np.linspace(0.0, extent, size)[:, None]
        return x, realization.values(x)
    if g.kind == GeometryKind.SPHERE2:
        theta = np.linspace(0.0, math.pi, size)
        phi = np.linspace(0.0, 2.0 * math.pi, 2 * size, endpoint=False)
        coords = np.stack(np.meshgrid(theta, phi, indexing="ij"), axis=-1)
        return coords, realization.values(coords)
    if g.kind == GeometryKind.HYPERBOLIC2:
        bound = math.tanh(realization.spec.r_max / 2.0)
        axis = np.linspace(-bound, bound, size)
        yy, xx = np.meshgrid(axis[::-1], axis, indexing="ij")
        coords = np.stack([xx, yy], axis=-1)
        inside = xx**2 + yy**2 <= bound**2
        values = np.full(coords.shape[:-1] + (realization.dim_v,), np.nan)
        values[inside] = realization.values(coords[inside])
        return coords, values
    axis = np.linspace(0.0, extent, size)
    yy, xx = np.meshgrid(axis[::-1], axis, indexing="ij")
    planes = [xx, yy] + ([np.zeros_like(xx)] if g.kind == GeometryKind.SPACE3 else [])
    coords = np.stack(planes, axis=-1)
    return coords, realization.values(coords)


def to_gray(values: np.ndarray, beta: float) -> np.ndarray:
    """Clip to +-3 sqrt(beta) and map linearly to 0..255; NaN becomes mid-gray."""
    bound = 3.0 * math.sqrt(beta)
    clipped = np.clip(values, -bound, bound)
    gray = np.rint((clipped + bound) / (2.0 * bound) * 255.0)
    gray = np.where(np.isnan(gray), 128.0, gray)
    return gray.astype(np.uint8)


def write_pgm(path: Path, gray: np.ndarray) -> Path:
    """Binary P5 graymap."""
    gray = np.atleast_2d(np.asarray(gray, dtype=np.uint8))
    height, width = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(gray.tobytes())
    return path


def write_png(path: Path, gray: np.ndarray) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.imsave(path, np.atleast_2d(gray), cmap="gray", vmin=0, vmax=255)
    return path


def write_grid_csv(path: Path, kind: GeometryKind, coords: np.ndarray, values: np.ndarray) -> Path:
    names = _AXIS_NAMES[kind]
    flat_coords = coords.reshape(-1, len(names))
    flat_values = values.reshape(len(flat_coords), -1)
    frame = pd.DataFrame(flat_coords, columns=list(names))
    for i in range(flat_values.shape[1]):
        frame[f"v{i}"] = flat_values[:, i]
    frame.dropna().to_csv(path, index=False)
    return path


def write_zeros_csv(path: Path, kind: GeometryKind, estimate: ZeroSetEstimate) -> Path:
    names = list(_AXIS_NAMES[kind])
    pd.DataFrame(list(estimate.locations), columns=names).to_csv(path, index=False)
    return path


def write_segments_csv(path: Path, kind: GeometryKind, estimate: ZeroSetEstimate) -> Path:
    names = _AXIS_NAMES[kind]
    rows = [tuple(a) + tuple(b) for a, b in estimate.segments]
    columns = [f"{n}_start" for n in names] + [f"{n}_end" for n in names]
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False)
    return path


def write_report(path: Path, report: ExperimentReport) -> Path:
    path.write_text(report.to_canonical_json(), encoding="utf-8")
    return path


def write_json(path: Path, payload: dict) -> Path:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def write_summary_csv(path: Path, reports: Iterable[ExperimentReport]) -> Path:
    """One row per report: label, mean, standard error, CI, target and status."""
    rows = []
    for r in reports:
        measured = r.measured_constant or r.summary
        rows.append(
            {
                "kind": r.kind.value,
                "label": r.label or "",
                "n": measured.n if measured else 0,
                "mean": measured.mean if measured else float("nan"),
                "standard_error": measured.standard_error if measured else float("nan"),
                "ci_low": measured.ci95[0] if measured else float("nan"),
                "ci_high": measured.ci95[1] if measured else float("nan"),
                "target": r.target,
                "tolerance": r.tolerance,
                "passed": r.passed,
            }
        )
    pd.DataFrame(rows).to_csv(path, index=False)
    logger.info("wrote %s", path)
    return path
