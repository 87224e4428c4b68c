"""
Sampling invariant Gaussian fields with exact first derivatives.

Each component is a sum over spectral atoms of independent standard
monochromatic fields weighted by sqrt(w), scaled by sqrt(beta):

- flat: sqrt(1/N) sum_j a_j cos(k u_j.x) + b_j sin(k u_j.x) over equispaced
  directions u_j under one uniform random rotation
- sphere: sqrt(4 pi/(2l+1)) sum_m zeta_m Y_lm with real spherical harmonics
- hyperbolic: sqrt(1/N) sum_j Re(zeta_j e_j(z)) with Helgason waves
  e_j = exp((i lambda + 1/2) B(z, b_j)) at equispaced boundary points b_j

Random numbers come from numpy's PCG64 seeded by
SeedSequence(base_seed, spawn_key=(stream,)) and are drawn component by
component, atom by atom, in spectral order.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, List, NamedTuple, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.transform import Rotation

from ..errors import CertificationError, DomainError
from ..types.models import (
    FieldSpec,
    GeometryDescriptor,
    GeometryKind,
    Point,
    SeedSpec,
    SpectralPoint,
)
from .geometry import PointLike, as_coords, distance
from .spectra import hyperbolic_spherical_function

logger = logging.getLogger(__name__)

CERTIFY_TOLERANCE = 0.005
MIN_CERTIFIED_WAVES = 16
MAX_CERTIFIED_WAVES = 2**14
CERTIFY_OFFSETS = (0.0, 0.25, 0.5, 0.75)
_BLOCK = 2048


class SampledField(Protocol):
    """Anything zero-set extraction can evaluate."""
    geometry: GeometryDescriptor
    dim_v: int

    def values(self, coords: np.ndarray, component: Optional[int] = None, standardized: bool = False) -> np.ndarray:
        ...

    def jacobian(self, coords: np.ndarray, standardized: bool = False) -> np.ndarray:
        ...


@dataclass(frozen=True)
class FlatWaves:
    kappa: float
    directions: np.ndarray
    a: np.ndarray
    b: np.ndarray


@dataclass(frozen=True)
class SphereHarmonics:
    degree: int
    zeta: np.ndarray


@dataclass(frozen=True)
class HelgasonWaves:
    lam: float
    boundary: np.ndarray
    a: np.ndarray
    b: np.ndarray


AtomTable = Union[FlatWaves, SphereHarmonics, HelgasonWaves]


def make_rng(seed: SeedSpec) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed.base_seed, spawn_key=(seed.stream,))))


def _fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    phi = math.pi * (1.0 + math.sqrt(5.0)) * i
    s = np.sqrt(1.0 - z**2)
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)


def _flat_directions(dim: int, n: int, rng: np.random.Generator) -> np.ndarray:
    if dim == 1:
        return np.where(np.arange(n) % 2 == 0, 1.0, -1.0)[:, None]
    if dim == 2:
        angles = rng.uniform(0.0, math.pi) + math.pi * np.arange(n) / n
        return np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    rotation = Rotation.from_quat(rng.standard_normal(4))
    return rotation.apply(_fibonacci_sphere(n))


def _draw_table(g: GeometryDescriptor, sp: SpectralPoint, n_waves: int, rng: np.random.Generator) -> AtomTable:
    if g.is_flat:
        directions = _flat_directions(g.dim_x, n_waves, rng)
        return FlatWaves(sp.param, directions, rng.standard_normal(n_waves), rng.standard_normal(n_waves))
    if g.kind == GeometryKind.SPHERE2:
        return SphereHarmonics(sp.degree, rng.standard_normal(2 * sp.degree + 1))
    offset = rng.uniform(0.0, 2.0 * math.pi / n_waves)
    boundary = np.exp(1j * (offset + 2.0 * math.pi * np.arange(n_waves) / n_waves))
    return HelgasonWaves(sp.param, boundary, rng.standard_normal(n_waves), rng.standard_normal(n_waves))


def real_harmonic_tables(degree: int, theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Normalized associated Legendre functions Q^m_l(theta), m = 0..l.

    Returns (Q, dQ/dtheta, Q/sin(theta)), each of shape (l + 1, *theta.shape),
    normalized so that Y_l0 = Q^0, Y_lm = sqrt(2) Q^m cos(m phi) and
    Y_l,-m = sqrt(2) Q^m sin(m phi) are orthonormal on the unit sphere.
    The last table is finite at the poles; its m = 0 row is zero.
    """
    theta = np.asarray(theta, dtype=float)
    s, c = np.sin(theta), np.cos(theta)
    shape = (degree + 2,) + theta.shape
    diag = np.zeros(shape)
    diag_over_sin = np.zeros(shape)
    diag[0] = math.sqrt(1.0 / (4.0 * math.pi))
    for m in range(1, degree + 1):
        f = math.sqrt((2 * m + 1) / (2 * m))
        diag[m] = f * s * diag[m - 1]
        diag_over_sin[m] = f * diag[m - 1]

    # ascending recurrence in L for every order m at once
    q_prev, q_cur = np.zeros(shape), np.zeros(shape)
    r_prev, r_cur = np.zeros(shape), np.zeros(shape)
    q_cur[0] = diag[0]
    for L in range(degree):
        m = np.arange(L + 1)
        l1 = L + 1
        a = np.sqrt((4.0 * l1**2 - 1.0) / (l1**2 - m**2))
        b = np.sqrt(np.maximum((L**2 - m**2) / (4.0 * L**2 - 1.0), 0.0)) if L > 0 else np.zeros(L + 1)
        a = a.reshape((-1,) + (1,) * theta.ndim)
        b = b.reshape((-1,) + (1,) * theta.ndim)
        q_next, r_next = np.zeros(shape), np.zeros(shape)
        q_next[: L + 1] = a * (c * q_cur[: L + 1] - b * q_prev[: L + 1])
        r_next[: L + 1] = a * (c * r_cur[: L + 1] - b * r_prev[: L + 1])
        q_next[l1] = diag[l1]
        r_next[l1] = diag_over_sin[l1]
        q_prev, q_cur = q_cur, q_next
        r_prev, r_cur = r_cur, r_next
    r_cur[0] = 0.0

    q = q_cur
    dq = np.zeros(shape)
    l = degree
    if l > 0:
        dq[0] = -math.sqrt(l * (l + 1)) * q[1]
        for m in range(1, l + 1):
            up = math.sqrt((l + m) * (l - m + 1)) * q[m - 1]
            down = math.sqrt((l - m) * (l + m + 1)) * q[m + 1]
            dq[m] = 0.5 * (up - down)
    return q[: l + 1], dq[: l + 1], r_cur[: l + 1]


def _flat_atom(t: FlatWaves, x: np.ndarray, grad: bool):
    phase = t.kappa * (x @ t.directions.T)
    cos, sin = np.cos(phase), np.sin(phase)
    norm = 1.0 / math.sqrt(len(t.a))
    value = norm * (cos @ t.a + sin @ t.b)
    if not grad:
        return value, None
    slope = norm * t.kappa * (cos * t.b - sin * t.a)
    return value, slope @ t.directions


def _sphere_atom(t: SphereHarmonics, x: np.ndarray, grad: bool):
    l = t.degree
    q, dq, q_over_sin = real_harmonic_tables(l, x[:, 0])
    m = np.arange(1, l + 1)[:, None]
    phi = x[:, 1][None, :]
    cos_m, sin_m = np.cos(m * phi), np.sin(m * phi)
    zeta0, zeta_c, zeta_s = t.zeta[0], t.zeta[1 : l + 1, None], t.zeta[l + 1 :, None]
    norm = math.sqrt(4.0 * math.pi / (2 * l + 1))
    root2 = math.sqrt(2.0)
    value = norm * (zeta0 * q[0] + root2 * np.sum(q[1:] * (zeta_c * cos_m + zeta_s * sin_m), axis=0))
    if not grad:
        return value, None
    d_theta = norm * (zeta0 * dq[0] + root2 * np.sum(dq[1:] * (zeta_c * cos_m + zeta_s * sin_m), axis=0))
    d_phi = norm * root2 * np.sum(m * q_over_sin[1:] * (zeta_s * cos_m - zeta_c * sin_m), axis=0)
    return value, np.stack([d_theta, d_phi], axis=-1)


def _helgason_waves(lam: float, boundary: np.ndarray, z: np.ndarray) -> np.ndarray:
    """e_j(z) for points z (n,) against boundary points (N,), shape (n, N)."""
    zz = z[:, None]
    poisson = (1.0 - np.abs(zz) ** 2) / np.abs(zz - boundary[None, :]) ** 2
    return np.exp((0.5 + 1j * lam) * np.log(poisson))


def _hyperbolic_atom(t: HelgasonWaves, x: np.ndarray, grad: bool):
    z = x[:, 0] + 1j * x[:, 1]
    waves = _helgason_waves(t.lam, t.boundary, z)
    norm = 1.0 / math.sqrt(len(t.a))
    value = norm * (waves.real @ t.a - waves.imag @ t.b)
    if not grad:
        return value, None
    zz = z[:, None]
    rel = zz - t.boundary[None, :]
    conformal = 1.0 - np.abs(zz) ** 2
    # Euclidean gradient of B as a complex number dB/dx + i dB/dy
    grad_b = -2.0 * zz / conformal - 2.0 * rel / np.abs(rel) ** 2
    frame = (conformal / 2.0)
    slope = (0.5 + 1j * t.lam) * waves
    dx = slope * (frame * grad_b.real)
    dy = slope * (frame * grad_b.imag)
    gx = norm * (dx.real @ t.a - dx.imag @ t.b)
    gy = norm * (dy.real @ t.a - dy.imag @ t.b)
    return value, np.stack([gx, gy], axis=-1)


_ATOMS = {FlatWaves: _flat_atom, SphereHarmonics: _sphere_atom, HelgasonWaves: _hyperbolic_atom}


@dataclass(frozen=True)
class Realization:
    """One sampled field: coefficient tables per component and atom."""
    spec: FieldSpec
    seed: SeedSpec
    tables: Tuple[Tuple[AtomTable, ...], ...]

    @property
    def geometry(self) -> GeometryDescriptor:
        return self.spec.geometry

    @property
    def dim_v(self) -> int:
        return self.spec.dim_v

    def _component(self, x: np.ndarray, component: int, grad: bool):
        value = np.zeros(len(x))
        gradient = np.zeros((len(x), self.geometry.dim_x)) if grad else None
        for atom, table in zip(self.spec.spectrum.atoms, self.tables[component]):
            v, gr = _ATOMS[type(table)](table, x, grad)
            w = math.sqrt(atom.weight)
            value += w * v
            if grad:
                gradient += w * gr
        return value, gradient

    def values(self, coords: np.ndarray, component: Optional[int] = None, standardized: bool = False) -> np.ndarray:
        """Field values at chart coordinates (..., dim_x); no validity check."""
        coords = np.asarray(coords, dtype=float)
        lead = coords.shape[:-1]
        x = coords.reshape(-1, self.geometry.dim_x)
        comps = range(self.dim_v) if component is None else [component]
        out = np.empty((len(x), len(comps)))
        for k, i in enumerate(comps):
            scale = 1.0 if standardized else math.sqrt(self.spec.component_scales[i])
            for start in range(0, len(x), _BLOCK):
                out[start:start + _BLOCK, k] = scale * self._component(x[start:start + _BLOCK], i, False)[0]
        if component is None:
            return out.reshape(lead + (self.dim_v,))
        return out[:, 0].reshape(lead)

    def jacobian(self, coords: np.ndarray, standardized: bool = False) -> np.ndarray:
        """Differentials in the orthonormal frame, shape (..., dim_v, dim_x)."""
        coords = np.asarray(coords, dtype=float)
        lead = coords.shape[:-1]
        d = self.geometry.dim_x
        x = coords.reshape(-1, d)
        out = np.empty((len(x), self.dim_v, d))
        for i in range(self.dim_v):
            scale = 1.0 if standardized else math.sqrt(self.spec.component_scales[i])
            for start in range(0, len(x), _BLOCK):
                out[start:start + _BLOCK, i] = scale * self._component(x[start:start + _BLOCK], i, True)[1]
        return out.reshape(lead + (self.dim_v, d))


def _reference_points(r_max: float) -> np.ndarray:
    radii = np.linspace(0.0, r_max, 9)[1:]
    angles = np.array([0.0, 0.9, 2.3, 4.1])
    rho = np.tanh(radii / 2.0)
    z = (rho[:, None] * np.exp(1j * angles[None, :])).ravel()
    return np.concatenate([[0.0 + 0.0j], z])


def truncation_error(
    lam: float, n_waves: int, r_max: float, offsets: Sequence[float] = CERTIFY_OFFSETS
) -> float:
    """Max deviation of the conditional covariance of N waves from phi_lambda on a reference set.

    Sampling rotates the boundary points by a random fraction of their spacing,
    so the bound is the worst case over `offsets`, given as fractions of 2 pi / N.
    """
    z = _reference_points(r_max)
    pts = np.stack([z.real, z.imag], axis=-1)
    rows, cols = np.triu_indices(len(z))
    d = np.abs(distance(GeometryDescriptor.of(GeometryKind.HYPERBOLIC2), pts[rows], pts[cols]))
    exact = hyperbolic_spherical_function(lam, d)
    worst = 0.0
    for u in offsets:
        boundary = np.exp(2j * math.pi * (u + np.arange(n_waves)) / n_waves)
        waves = _helgason_waves(lam, boundary, z)
        conditional = (waves @ waves.conj().T).real / n_waves
        worst = max(worst, float(np.max(np.abs(conditional[rows, cols] - exact))))
    return worst


@lru_cache(maxsize=256)
def minimal_waves(lam: float, r_max: float, tolerance: float = CERTIFY_TOLERANCE) -> int:
    """Smallest power-of-two wave count whose covariance passes the self-check."""
    n = MIN_CERTIFIED_WAVES
    while n <= MAX_CERTIFIED_WAVES:
        err = truncation_error(lam, n, r_max)
        logger.debug("certify lambda=%s r_max=%s N=%d error=%.2e", lam, r_max, n, err)
        if err <= tolerance:
            return n
        n *= 2
    raise CertificationError(
        f"no wave count up to {MAX_CERTIFIED_WAVES} certifies lambda={lam} within r_max={r_max}"
    )


def certify(spec: FieldSpec, tolerance: float = CERTIFY_TOLERANCE) -> int:
    """Check a hyperbolic spec; returns the minimal admissible wave count."""
    needed = max(minimal_waves(a.point.param, spec.r_max, tolerance) for a in spec.spectrum.atoms)
    if spec.n_waves < needed:
        raise CertificationError(
            f"n_waves={spec.n_waves} fails the covariance self-check within r_max={spec.r_max}; "
            f"need at least {needed}",
            minimal_waves=needed,
        )
    return needed


def sample(spec: FieldSpec, seed: SeedSpec, tolerance: float = CERTIFY_TOLERANCE) -> Realization:
    """Draw one realization."""
    if spec.geometry.kind == GeometryKind.HYPERBOLIC2:
        certify(spec, tolerance)
    rng = make_rng(seed)
    tables = tuple(
        tuple(_draw_table(spec.geometry, atom.point, spec.n_waves, rng) for atom in spec.spectrum.atoms)
        for _ in range(spec.dim_v)
    )
    return Realization(spec=spec, seed=seed, tables=tables)


def _checked_coords(r: Realization, p: PointLike) -> np.ndarray:
    coords = as_coords(r.geometry, p)
    if r.geometry.kind == GeometryKind.HYPERBOLIC2:
        radius = 2.0 * np.arctanh(np.hypot(coords[..., 0], coords[..., 1]))
        if np.any(radius > r.spec.r_max + 1e-9):
            raise DomainError(f"point lies outside the validity radius {r.spec.r_max}")
    return coords


def eval(r: Realization, component: int, p: PointLike) -> Union[float, np.ndarray]:
    """Value of one component; arrays of points give arrays of values."""
    if not 0 <= component < r.dim_v:
        raise DomainError(f"component {component} out of range for dim_v={r.dim_v}")
    out = r.values(_checked_coords(r, p), component)
    return float(out) if np.ndim(out) == 0 else out


def eval_complex(r: Realization, p: PointLike) -> Union[complex, np.ndarray]:
    """Components 0 and 1 read as one circularly symmetric complex field."""
    if r.dim_v != 2:
        raise DomainError("complex evaluation needs dim_v = 2")
    v = r.values(_checked_coords(r, p))
    out = v[..., 0] + 1j * v[..., 1]
    return complex(out) if np.ndim(out) == 0 else out


def eval_gradient(r: Realization, p: PointLike) -> np.ndarray:
    """dim_v x dim_x differential in the orthonormal frame at p."""
    return r.jacobian(_checked_coords(r, p))


class CovarianceLag(NamedTuple):
    distance: float
    mean: float
    standard_error: float


def pair_products(r: Realization, pairs: Sequence[Tuple[PointLike, PointLike]], component: int = 0) -> np.ndarray:
    """Products Phi(p) Phi(q) of the standardized component for each pair."""
    left = np.stack([as_coords(r.geometry, p) for p, _ in pairs])
    right = np.stack([as_coords(r.geometry, q) for _, q in pairs])
    return r.values(left, component, standardized=True) * r.values(right, component, standardized=True)


def empirical_covariance(
    spec: FieldSpec,
    base_seed: int,
    streams: Iterable[int],
    pairs: Sequence[Tuple[PointLike, PointLike]],
    component: int = 0,
) -> List[CovarianceLag]:
    """Mean products over replications with CLT standard errors."""
    streams = list(streams)
    if len(streams) < 100:
        raise DomainError("empirical covariance needs at least 100 replications")
    g = spec.geometry
    for p, q in pairs:
        for point in (p, q):
            if g.kind == GeometryKind.HYPERBOLIC2 and distance(g, np.zeros(2), as_coords(g, point)) > spec.r_max + 1e-9:
                raise DomainError("lag point lies outside the validity radius")
    products = np.stack(
        [pair_products(sample(spec, SeedSpec(base_seed=base_seed, stream=s)), pairs, component) for s in streams]
    )
    mean = products.mean(axis=0)
    se = products.std(axis=0, ddof=1) / math.sqrt(len(streams))
    dists = [float(distance(g, p, q)) for p, q in pairs]
    return [CovarianceLag(d, float(m), float(s)) for d, m, s in zip(dists, mean, se)]
