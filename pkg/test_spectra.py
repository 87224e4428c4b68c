import math

import numpy as np
import pytest
from scipy import integrate

from src.errors import DomainError
from src.services import spectra
from src.types.models import GeometryDescriptor, GeometryKind, SpectralMeasure, SpectralPoint


def point(kind, param):
    return SpectralPoint(kind=GeometryKind(kind), param=param)


def test_eigenvalues():
    assert spectra.eigenvalue(point("plane", 2 * math.pi)) == pytest.approx(-4 * math.pi**2)
    assert spectra.eigenvalue(point("hyperbolic", 8.0)) == pytest.approx(-64.25)
    assert spectra.eigenvalue(point("sphere", 1)) == -2.0


def test_sphere_eigenvalue_by_finite_differences():
    sp = point("sphere", 1)
    f = lambda r: spectra.covariance(sp, r)
    r = 1e-2
    ratio = spectra.radial_laplacian(GeometryKind.SPHERE2, f, r, 1e-4) / f(r)
    assert ratio == pytest.approx(-2.0, abs=1e-3)


def test_covariance_examples():
    for kind, param in [("plane", 3.0), ("sphere", 4), ("hyperbolic", 2.0), ("line", 1.5), ("space", 2.0)]:
        assert spectra.covariance(point(kind, param), 0.0) == pytest.approx(1.0, abs=1e-12)
    assert spectra.covariance(point("sphere", 1), 0.7) == pytest.approx(math.cos(0.7))
    assert abs(spectra.covariance(point("plane", 1.0), 2.404826)) <= 1e-5
    assert spectra.covariance(point("space", 1.0), math.pi) == pytest.approx(0.0, abs=1e-15)


def test_covariance_rejects_negative_distance():
    with pytest.raises(DomainError):
        spectra.covariance(point("plane", 1.0), -0.1)


def test_hyperbolic_spherical_function_matches_independent_quadrature():
    lam = 3.0
    for r in (0.3, 1.0, 2.0):
        z = math.tanh(r / 2.0)

        def integrand(theta):
            poisson = (1 - z * z) / (1 - 2 * z * math.cos(theta) + z * z)
            return math.sqrt(poisson) * math.cos(lam * math.log(poisson))

        expected = integrate.quad(integrand, 0.0, 2.0 * math.pi, limit=200, epsabs=1e-12)[0] / (2.0 * math.pi)
        assert spectra.hyperbolic_spherical_function(lam, r) == pytest.approx(expected, abs=1e-8)


def test_hyperbolic_spherical_function_is_vectorized():
    r = np.array([[0.1, 0.5], [0.5, 1.0]])
    values = spectra.hyperbolic_spherical_function(1.0, r)
    assert values.shape == (2, 2)
    assert values[0, 1] == values[1, 0]


@pytest.mark.parametrize(
    "kind,param",
    [("line", 2.0), ("plane", 3.0), ("space", 2.5), ("sphere", 7), ("hyperbolic", 4.0)],
)
def test_covariance_bounded_by_one(kind, param):
    r = np.linspace(0.0, 3.0, 301)
    values = np.asarray(spectra.covariance(point(kind, param), r))
    assert np.all(np.abs(values) <= 1.0 + 1e-9)


@pytest.mark.parametrize(
    "kind,param,r",
    [("line", 2.0, 0.7), ("plane", 3.0, 0.9), ("space", 2.5, 1.1), ("sphere", 5, 0.8)],
)
def test_eigenfunction_residual_decays_quadratically(kind, param, r):
    sp = point(kind, param)
    f = lambda x: float(spectra.covariance(sp, x))
    K = spectra.eigenvalue(sp)
    coarse = abs(spectra.radial_laplacian(GeometryKind(kind), f, r, 1e-2) - K * f(r))
    fine = abs(spectra.radial_laplacian(GeometryKind(kind), f, r, 5e-3) - K * f(r))
    assert fine < coarse
    assert coarse / fine == pytest.approx(4.0, rel=0.1)


def test_hyperbolic_eigenfunction_residual_decays_quadratically():
    sp = point("hyperbolic", 1.0)
    f = lambda x: float(spectra.covariance(sp, x))
    K = spectra.eigenvalue(sp)
    coarse = abs(spectra.radial_laplacian(GeometryKind.HYPERBOLIC2, f, 0.8, 4e-2) - K * f(0.8))
    fine = abs(spectra.radial_laplacian(GeometryKind.HYPERBOLIC2, f, 0.8, 2e-2) - K * f(0.8))
    assert fine < 1e-3
    assert coarse / fine == pytest.approx(4.0, rel=0.15)


def test_mixture_covariance():
    mix = SpectralMeasure.mixture("plane", [1.0, 2.0])
    assert spectra.mixture_covariance(mix, 0.0) == pytest.approx(1.0)
    line = SpectralMeasure.mixture("line", [1.0, 3.0])
    assert spectra.mixture_covariance(line, math.pi) == pytest.approx(-1.0)
    mono = SpectralMeasure.mono("sphere", 3)
    assert spectra.mixture_covariance(mono, 0.4) == pytest.approx(spectra.covariance(point("sphere", 3), 0.4))


def test_covariance_model_callable():
    model = spectra.CovarianceModel(GeometryDescriptor.of("plane"), SpectralMeasure.mono("plane", 1.0))
    assert model(0.0) == pytest.approx(1.0)
    assert model.matrix(np.zeros((2, 2))).tolist() == [[1.0, 1.0], [1.0, 1.0]]


def test_covariance_matrix_small_cases():
    m = SpectralMeasure.mono("plane", 1.0)
    assert spectra.covariance_matrix(m, np.array([[0.3, 0.2]])).tolist() == [[1.0]]
    with pytest.raises(DomainError):
        spectra.covariance_matrix(m, np.zeros((1001, 2)))


def test_covariance_matrix_is_positive_semidefinite():
    rng = np.random.default_rng(11)
    theta = np.arccos(rng.uniform(-1.0, 1.0, 50))
    phi = rng.uniform(0.0, 2.0 * math.pi, 50)
    gram = spectra.covariance_matrix(SpectralMeasure.mono("sphere", 6), np.stack([theta, phi], axis=-1))
    assert np.linalg.eigvalsh(gram).min() >= -1e-8

    plane = rng.uniform(0.0, 3.0, (60, 2))
    gram = spectra.covariance_matrix(SpectralMeasure.mono("plane", 4.0), plane)
    assert np.linalg.eigvalsh(gram).min() >= -1e-8 * len(plane)

    radius = np.tanh(rng.uniform(0.0, 1.5, 30) / 2.0)
    angle = rng.uniform(0.0, 2.0 * math.pi, 30)
    disk = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=-1)
    gram = spectra.covariance_matrix(SpectralMeasure.mono("hyperbolic", 2.0), disk)
    assert np.linalg.eigvalsh(gram).min() >= -1e-8 * len(disk)


def test_band_and_config_round_trip():
    band = SpectralMeasure.band("plane", 1.0, 3.0, atoms=4, power=-2.0)
    assert len(band.atoms) == 4
    assert sum(a.weight for a in band.atoms) == pytest.approx(1.0, abs=1e-12)
    assert band.atoms[0].weight > band.atoms[-1].weight
    sphere_band = SpectralMeasure.band("sphere", 2, 5)
    assert [a.point.degree for a in sphere_band.atoms] == [2, 3, 4, 5]
    assert SpectralMeasure.from_config(band.to_config()).kind == GeometryKind.PLANE2


def test_spectral_measure_validation():
    with pytest.raises(ValueError):
        SpectralPoint(kind=GeometryKind.SPHERE2, param=1.5)
    with pytest.raises(ValueError):
        SpectralPoint(kind=GeometryKind.PLANE2, param=0.0)
    with pytest.raises(ValueError):
        SpectralMeasure.mixture("plane", [1.0, 2.0], [1.0, -1.0])
