"""
Laplace-Beltrami eigenvalues and elementary spherical functions.

The covariance of a monochromatic standard field depends only on intrinsic
distance r:

- line: cos(kr), plane: J0(kr), space: sin(kr)/(kr)
- sphere: P_l(cos r)
- hyperbolic disk: phi_lambda(r), the circle average of the Helgason wave
  exp((i lambda + 1/2) B(z_r, b)) with z_r = tanh(r/2)
"""

import logging
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special

from ..errors import DomainError, NumericError
from ..types.models import GeometryDescriptor, GeometryKind, SpectralMeasure, SpectralPoint
from .geometry import PointLike, as_coords, distance

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

QUADRATURE_TOL = 1e-9
IMAG_TOL = 1e-8
MIN_NODES = 64
MAX_NODES = 2**17
MAX_MATRIX_POINTS = 1000
_CHUNK_RADII = 64


def eigenvalue(sp: SpectralPoint) -> float:
    """Eigenvalue K <= 0 of the Laplace-Beltrami operator."""
    if sp.kind == GeometryKind.SPHERE2:
        return -float(sp.degree * (sp.degree + 1))
    if sp.kind == GeometryKind.HYPERBOLIC2:
        return -(sp.param**2 + 0.25)
    return -(sp.param**2)


def _busemann_wave(z: np.ndarray, theta: np.ndarray, lam: float) -> np.ndarray:
    """exp((i lam + 1/2) B(z, e^{i theta})) for real z in [0, 1)."""
    poisson = (1.0 - z**2) / (1.0 - 2.0 * z * np.cos(theta) + z**2)
    return np.exp((0.5 + 1j * lam) * np.log(poisson))


def _hyperbolic_chunk(radii: np.ndarray, lam: float) -> np.ndarray:
    z = np.tanh(radii / 2.0)[:, None]
    n = MIN_NODES
    theta = 2.0 * math.pi * np.arange(n) / n
    values = _busemann_wave(z, theta[None, :], lam).mean(axis=1)
    active = np.arange(len(radii))
    while active.size:
        if n >= MAX_NODES:
            raise NumericError(
                f"spherical function quadrature for lambda={lam} did not converge at {n} nodes "
                f"(r up to {float(radii[active].max()):.3f})"
            )
        odd = 2.0 * math.pi * (2 * np.arange(n) + 1) / (2 * n)
        refined = 0.5 * (values[active] + _busemann_wave(z[active], odd[None, :], lam).mean(axis=1))
        change = np.abs(refined - values[active])
        values[active] = refined
        active = active[change > QUADRATURE_TOL]
        n *= 2
    logger.debug("phi_%s on %d radii converged with at most %d nodes", lam, len(radii), n)
    return values


def hyperbolic_spherical_function(lam: float, r: ArrayLike) -> ArrayLike:
    """phi_lambda(r) by periodic trapezoid quadrature with node doubling."""
    r_arr = np.asarray(r, dtype=float)
    flat = r_arr.ravel()
    unique, inverse = np.unique(flat, return_inverse=True)
    out = np.empty(unique.shape, dtype=complex)
    # bounded chunks keep the doubled node arrays small
    for start in range(0, len(unique), _CHUNK_RADII):
        out[start:start + _CHUNK_RADII] = _hyperbolic_chunk(unique[start:start + _CHUNK_RADII], lam)
    worst = float(np.max(np.abs(out.imag))) if out.size else 0.0
    if worst > IMAG_TOL:
        raise NumericError(f"spherical function has imaginary part {worst:.2e}")
    result = out.real[inverse].reshape(r_arr.shape)
    return float(result) if r_arr.ndim == 0 else result


def covariance(sp: SpectralPoint, r: ArrayLike) -> ArrayLike:
    """Monochromatic covariance as a function of intrinsic distance."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise DomainError("distance must be nonnegative")
    if sp.kind == GeometryKind.HYPERBOLIC2:
        return hyperbolic_spherical_function(sp.param, r_arr)
    if sp.kind == GeometryKind.SPHERE2:
        out = special.eval_legendre(sp.degree, np.cos(r_arr))
    elif sp.kind == GeometryKind.LINE1:
        out = np.cos(sp.param * r_arr)
    elif sp.kind == GeometryKind.PLANE2:
        out = special.j0(sp.param * r_arr)
    else:
        out = np.sinc(sp.param * r_arr / math.pi)
    return float(out) if r_arr.ndim == 0 else out


def mixture_covariance(m: SpectralMeasure, r: ArrayLike) -> ArrayLike:
    """Weighted sum of atom covariances."""
    total = None
    for atom in m.atoms:
        term = atom.weight * np.asarray(covariance(atom.point, r))
        total = term if total is None else total + term
    return float(total) if np.ndim(total) == 0 else total


@dataclass(frozen=True)
class CovarianceModel:
    """Gamma(r) of a standard field with the given spectral measure."""
    geometry: GeometryDescriptor
    spectrum: SpectralMeasure

    def __call__(self, r: ArrayLike) -> ArrayLike:
        return mixture_covariance(self.spectrum, r)

    def matrix(self, points: PointLike) -> np.ndarray:
        return covariance_matrix(self.spectrum, points)


def covariance_matrix(m: SpectralMeasure, points: PointLike) -> np.ndarray:
    """Gram matrix Gamma(d(p_i, p_j)) over at most a thousand points."""
    g = GeometryDescriptor.of(m.kind)
    coords = as_coords(g, points).reshape(-1, g.dim_x)
    n = len(coords)
    if n > MAX_MATRIX_POINTS:
        raise DomainError(f"covariance_matrix takes at most {MAX_MATRIX_POINTS} points, got {n}")
    rows, cols = np.triu_indices(n, k=1)
    gram = np.eye(n)
    if rows.size:
        d = np.atleast_1d(distance(g, coords[rows], coords[cols]))
        values = np.asarray(mixture_covariance(m, d))
        gram[rows, cols] = values
        gram[cols, rows] = values
    return gram


def radial_laplacian(kind: GeometryKind, f, r: float, h: float) -> float:
    """Central-difference radial Laplace-Beltrami operator of f at r > 0."""
    f0, fp, fm = f(r), f(r + h), f(r - h)
    second = (fp - 2.0 * f0 + fm) / h**2
    first = (fp - fm) / (2.0 * h)
    if kind == GeometryKind.LINE1:
        return second
    if kind == GeometryKind.PLANE2:
        return second + first / r
    if kind == GeometryKind.SPACE3:
        return second + 2.0 * first / r
    if kind == GeometryKind.SPHERE2:
        return second + first / math.tan(r)
    return second + first / math.tanh(r)
