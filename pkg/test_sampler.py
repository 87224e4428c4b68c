import math

import numpy as np
import pytest
from scipy import stats
from scipy.special import eval_legendre

from src.errors import CertificationError, DomainError
from src.services import sampler
from src.types.models import FieldSpec, GeometryDescriptor, SeedSpec, SpectralMeasure


def field(kind, param, dim_v=1, **kwargs):
    return FieldSpec(
        geometry=GeometryDescriptor.of(kind),
        spectrum=SpectralMeasure.mono(kind, param),
        dim_v=dim_v,
        **kwargs,
    )


def seed(stream=0, base=2024):
    return SeedSpec(base_seed=base, stream=stream)


def test_same_seed_gives_identical_fields():
    spec = field("plane", 2 * math.pi, dim_v=2)
    pts = np.random.default_rng(0).uniform(0.0, 3.0, (50, 2))
    a = sampler.sample(spec, seed()).values(pts)
    b = sampler.sample(spec, seed()).values(pts)
    c = sampler.sample(spec, seed(stream=1)).values(pts)
    assert np.array_equal(a, b)
    assert not np.allclose(a, c)


def test_rng_is_pcg64_with_spawn_key():
    rng = sampler.make_rng(SeedSpec(base_seed=7, stream=3))
    expected = np.random.Generator(np.random.PCG64(np.random.SeedSequence(7, spawn_key=(3,))))
    assert rng.standard_normal(5).tolist() == expected.standard_normal(5).tolist()


def test_line_field_is_periodic():
    r = sampler.sample(field("line", 2.0), seed())
    x = np.linspace(0.0, 3.0, 40)[:, None]
    np.testing.assert_allclose(r.values(x, 0), r.values(x + math.pi, 0), atol=1e-12)


def test_constant_sphere_field():
    r = sampler.sample(field("sphere", 0), seed())
    pts = np.array([[0.0, 0.0], [1.0, 2.0], [math.pi, 5.0]])
    values = sampler.eval(r, 0, pts)
    assert np.ptp(values) == pytest.approx(0.0, abs=1e-12)
    assert values[0] == pytest.approx(r.tables[0][0].zeta[0])
    np.testing.assert_allclose(sampler.eval_gradient(r, pts), 0.0, atol=1e-12)


def test_harmonic_tables_satisfy_addition_theorem():
    l = 5
    theta = np.array([0.4, 1.9])
    dphi = 0.8
    q, _, _ = sampler.real_harmonic_tables(l, theta)
    m = np.arange(1, l + 1)
    total = q[0, 0] * q[0, 1] + 2.0 * np.sum(q[1:, 0] * q[1:, 1] * np.cos(m * dphi))
    cos_gamma = math.cos(theta[0]) * math.cos(theta[1]) + math.sin(theta[0]) * math.sin(theta[1]) * math.cos(dphi)
    assert total == pytest.approx((2 * l + 1) / (4 * math.pi) * eval_legendre(l, cos_gamma), rel=1e-10)


def test_harmonic_table_derivatives():
    l, h = 6, 1e-6
    theta = np.array([0.3, 1.2, 2.5])
    q, dq, q_over_sin = sampler.real_harmonic_tables(l, theta)
    fd = (sampler.real_harmonic_tables(l, theta + h)[0] - sampler.real_harmonic_tables(l, theta - h)[0]) / (2 * h)
    np.testing.assert_allclose(dq, fd, atol=1e-7)
    np.testing.assert_allclose(q_over_sin[1:], q[1:] / np.sin(theta), rtol=1e-10, atol=1e-12)
    assert np.all(q_over_sin[0] == 0.0)


@pytest.mark.parametrize("kind,param", [("plane", 3.0), ("space", 2.0)])
def test_flat_gradient_matches_finite_differences(kind, param):
    r = sampler.sample(field(kind, param, dim_v=2), seed())
    d = r.geometry.dim_x
    x = np.full(d, 0.37)
    h = 1e-5
    jac = sampler.eval_gradient(r, x)
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        fd = (r.values(x + e) - r.values(x - e)) / (2 * h)
        np.testing.assert_allclose(jac[:, k], fd, rtol=1e-6, atol=1e-6)


def test_sphere_gradient_matches_finite_differences():
    r = sampler.sample(field("sphere", 6), seed())
    theta, phi, h = 1.1, 0.7, 1e-5
    jac = sampler.eval_gradient(r, np.array([theta, phi]))[0]
    d_theta = (sampler.eval(r, 0, (theta + h, phi)) - sampler.eval(r, 0, (theta - h, phi))) / (2 * h)
    d_phi = (sampler.eval(r, 0, (theta, phi + h)) - sampler.eval(r, 0, (theta, phi - h))) / (2 * h * math.sin(theta))
    assert jac[0] == pytest.approx(d_theta, rel=1e-6, abs=1e-6)
    assert jac[1] == pytest.approx(d_phi, rel=1e-6, abs=1e-6)


def test_sphere_gradient_is_finite_at_pole():
    r = sampler.sample(field("sphere", 4), seed())
    assert np.all(np.isfinite(sampler.eval_gradient(r, np.array([0.0, 1.0]))))


def test_hyperbolic_gradient_matches_finite_differences():
    r = sampler.sample(field("hyperbolic", 2.0, n_waves=1024), seed())
    x = np.array([0.3, -0.2])
    frame = (1.0 - x @ x) / 2.0
    h = 1e-6
    jac = sampler.eval_gradient(r, x)[0]
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = frame * (sampler.eval(r, 0, x + e) - sampler.eval(r, 0, x - e)) / (2 * h)
        assert jac[k] == pytest.approx(fd, rel=1e-5, abs=1e-6)


def test_hyperbolic_certification():
    spec = field("hyperbolic", 2.0, n_waves=1024)
    needed = sampler.certify(spec)
    assert sampler.MIN_CERTIFIED_WAVES <= needed <= 1024
    assert sampler.truncation_error(2.0, needed, 2.0) <= sampler.CERTIFY_TOLERANCE

    with pytest.raises(CertificationError) as excinfo:
        sampler.sample(field("hyperbolic", 2.0, n_waves=4), seed())
    assert excinfo.value.minimal_waves == needed


def test_eval_domain_errors():
    hyper = sampler.sample(field("hyperbolic", 1.0, n_waves=1024), seed())
    with pytest.raises(DomainError):
        sampler.eval(hyper, 0, (0.99, 0.0))
    with pytest.raises(DomainError):
        sampler.eval(hyper, 1, (0.1, 0.0))
    with pytest.raises(DomainError):
        sampler.eval_complex(hyper, (0.1, 0.0))


def test_eval_complex_reads_two_components():
    r = sampler.sample(field("plane", 1.0, dim_v=2), seed())
    value = sampler.eval_complex(r, (0.2, 0.3))
    assert value.real == pytest.approx(sampler.eval(r, 0, (0.2, 0.3)))
    assert value.imag == pytest.approx(sampler.eval(r, 1, (0.2, 0.3)))


def test_component_scales_only_rescale_values():
    spec = field("plane", 2.0, dim_v=2)
    pts = np.random.default_rng(1).uniform(0.0, 2.0, (20, 2))
    base = sampler.sample(spec, seed())
    scaled = sampler.sample(spec.scaled(4.0), seed())
    np.testing.assert_allclose(scaled.values(pts), 2.0 * base.values(pts), rtol=1e-14)
    assert np.array_equal(scaled.values(pts, standardized=True), base.values(pts, standardized=True))


def test_empirical_covariance_needs_enough_replications():
    with pytest.raises(DomainError):
        sampler.empirical_covariance(field("plane", 1.0), 0, range(50), [((0.0, 0.0), (1.0, 0.0))])


def test_empirical_covariance_tracks_bessel_and_legendre():
    lags = sampler.empirical_covariance(
        field("plane", 1.0), 11, range(200), [((0.0, 0.0), (2.404826, 0.0)), ((0.0, 0.0), (0.0, 0.0))]
    )
    assert lags[0].distance == pytest.approx(2.404826)
    assert abs(lags[0].mean) <= 4 * lags[0].standard_error
    assert abs(lags[1].mean - 1.0) <= 4 * lags[1].standard_error

    (sphere,) = sampler.empirical_covariance(field("sphere", 4), 11, range(200), [((0.0, 0.0), (math.pi / 2, 0.0))])
    assert abs(sphere.mean - 0.375) <= 4 * sphere.standard_error


def test_pointwise_variance_is_one():
    spec = field("plane", 2 * math.pi)
    squares = np.array([sampler.eval(sampler.sample(spec, seed(s)), 0, (0.3, 0.4)) ** 2 for s in range(2000)])
    se = squares.std(ddof=1) / math.sqrt(len(squares))
    assert abs(squares.mean() - 1.0) <= 4 * se


@pytest.mark.parametrize(
    "kind,param,p,q",
    [("plane", 2 * math.pi, (0.3, 0.4), (1.1, -0.2)), ("sphere", 6, (1.0, 2.0), (0.4, 5.0))],
)
def test_linear_functionals_are_gaussian(kind, param, p, q):
    spec = field(kind, param)
    draws = np.empty(10_000)
    for s in range(len(draws)):
        r = sampler.sample(spec, seed(s, base=31))
        draws[s] = sampler.eval(r, 0, p) + 0.5 * sampler.eval(r, 0, q)
    assert stats.normaltest(draws).pvalue > 1e-3
    if kind == "sphere":
        cos_gamma = math.cos(p[0]) * math.cos(q[0]) + math.sin(p[0]) * math.sin(q[0]) * math.cos(p[1] - q[1])
        sd = math.sqrt(1.25 + eval_legendre(param, cos_gamma))
        assert stats.kstest(draws / sd, "norm").pvalue > 1e-3


@pytest.mark.parametrize(
    "kind,param,pairs",
    [
        ("plane", 2.0, [((0.0, 0.0), (0.0, 0.0)), ((0.0, 0.0), (0.3, 0.1))]),
        ("sphere", 5, [((1.0, 1.0), (1.0, 1.0)), ((1.0, 1.0), (1.3, 0.8))]),
    ],
)
def test_components_are_uncorrelated(kind, param, pairs):
    spec = field(kind, param, dim_v=2)
    realizations = (sampler.sample(spec, seed(s, base=17)) for s in range(2000))
    products = np.array([[sampler.eval(r, 0, x) * sampler.eval(r, 1, y) for x, y in pairs] for r in realizations])
    se = products.std(axis=0, ddof=1) / math.sqrt(len(products))
    assert np.all(np.abs(products.mean(axis=0)) <= 4 * se)


def test_more_waves_tighten_the_hyperbolic_covariance():
    errors = [sampler.truncation_error(2.0, n, 2.0) for n in (16, 32, 64)]
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] < sampler.CERTIFY_TOLERANCE


def test_certification_covers_boundary_offsets():
    aligned = sampler.truncation_error(8.0, 64, 2.0, offsets=(0.0,))
    assert sampler.truncation_error(8.0, 64, 2.0) >= aligned
    # a full spacing maps the boundary points onto themselves
    assert sampler.truncation_error(8.0, 64, 2.0, offsets=(1.0,)) == pytest.approx(aligned, abs=1e-12)
    needed = sampler.minimal_waves(8.0, 2.0)
    for u in (0.1, 0.37, 0.5, 0.83):
        assert sampler.truncation_error(8.0, needed, 2.0, offsets=(u,)) <= 2 * sampler.CERTIFY_TOLERANCE


@pytest.mark.slow
@pytest.mark.parametrize(
    "kind,param,point,extra",
    [
        ("plane", 2 * math.pi, (0.3, 0.4), {}),
        ("sphere", 10, (1.0, 2.0), {}),
        ("hyperbolic", 8.0, (0.4, 0.1), {"n_waves": 1024}),
    ],
)
def test_pointwise_variance_at_scale(kind, param, point, extra):
    spec = field(kind, param, **extra)
    squares = np.array([sampler.eval(sampler.sample(spec, seed(s)), 0, point) ** 2 for s in range(10_000)])
    assert squares.mean() == pytest.approx(1.0, abs=0.03)
