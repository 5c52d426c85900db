import math

import numpy as np
import pytest
from scipy import integrate, stats

from gpwpc.errors import DivergentIntegralError, InvalidParameterError, SingularPointError
from gpwpc.measures import (Br_upper_bound, MeasureParams, RandomStream, compute_K_arb, estimate_Br, gamma_pdf,
                            laplace_pdf, sample_laplace, sample_laplace_matrix)
from gpwpc.pde_model import FieldSpec


def test_measure_params_rejects_non_positive_shape():
    with pytest.raises(InvalidParameterError):
        MeasureParams(0.0)
    with pytest.raises(InvalidParameterError):
        MeasureParams(float('nan'))


def test_gamma_pdf_closed_forms():
    y = np.array([0.5, 1.0, 3.0])
    np.testing.assert_allclose(gamma_pdf(MeasureParams(1.0), y), np.exp(-y), rtol=1e-14)
    np.testing.assert_allclose(gamma_pdf(MeasureParams(2.0), y), y * np.exp(-y), rtol=1e-14)
    assert gamma_pdf(MeasureParams(1.0), 0.0) == 1.0
    assert gamma_pdf(MeasureParams(2.0), 0.0) == 0.0


def test_gamma_pdf_domain_errors():
    with pytest.raises(SingularPointError):
        gamma_pdf(MeasureParams(0.5), 0.0)
    with pytest.raises(InvalidParameterError):
        gamma_pdf(MeasureParams(1.0), -1.0)


@pytest.mark.parametrize("a", [1.0, 2.0, 3.5])
def test_laplace_pdf_is_symmetric_and_normalized(a):
    params = MeasureParams(a)
    assert laplace_pdf(params, 1.7) == pytest.approx(laplace_pdf(params, -1.7))
    left, _ = integrate.quad(lambda y: laplace_pdf(params, y), -np.inf, 0.0)
    right, _ = integrate.quad(lambda y: laplace_pdf(params, y), 0.0, np.inf)
    assert left + right == pytest.approx(1.0, abs=1e-8)


def test_random_stream_validation():
    with pytest.raises(InvalidParameterError):
        RandomStream(-1)
    with pytest.raises(InvalidParameterError):
        RandomStream(1, 2**64)


def test_sampling_is_deterministic_per_stream():
    params = MeasureParams(1.0)
    first = sample_laplace(params, RandomStream(7, 3), 50)
    again = sample_laplace(params, RandomStream(7, 3), 50)
    other = sample_laplace(params, RandomStream(7, 4), 50)
    np.testing.assert_array_equal(first, again)
    assert not np.array_equal(first, other)


@pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
def test_sample_laplace_matches_the_law(a):
    draws = sample_laplace(MeasureParams(a), RandomStream(20240501, 11), 100_000)
    assert abs(draws.mean()) < 0.05 * math.sqrt(a * (a + 1))
    assert np.abs(draws).mean() == pytest.approx(a, rel=0.02)
    assert stats.kstest(np.abs(draws), 'gamma', args=(a,)).pvalue > 1e-3
    assert 0.48 < np.mean(draws > 0) < 0.52


def test_sample_laplace_matrix_columns_use_child_streams():
    params = MeasureParams(1.5)
    stream = RandomStream(5, 1)
    Y = sample_laplace_matrix(params, stream, 20, 3)
    assert Y.shape == (20, 3)
    np.testing.assert_array_equal(Y[:, 2], sample_laplace(params, stream.child(2), 20))
    assert sample_laplace_matrix(params, stream, 4, 0).shape == (4, 0)


def test_compute_K_arb_closed_forms():
    assert compute_K_arb(1.0, 0, 0.0) == pytest.approx(1.0)
    # E(1 + y)^2 under exp(1) is 1 + 2 + 2
    assert compute_K_arb(1.0, 1, 0.0) == pytest.approx(math.sqrt(5.0))
    assert compute_K_arb(1.0, 0, 0.25) == pytest.approx(math.sqrt(2.0))


def test_compute_K_arb_matches_adaptive_quadrature():
    a, r, b0 = 2.0, 2, 0.1
    integrand = lambda y: (1 + y) ** (2 * r) * y ** (a - 1) / math.gamma(a) * math.exp(y * (2 * b0 - 1))
    value, _ = integrate.quad(integrand, 0.0, np.inf)
    assert compute_K_arb(a, r, b0) == pytest.approx(math.sqrt(value), rel=1e-10)


def test_compute_K_arb_diverges_at_half():
    with pytest.raises(DivergentIntegralError):
        compute_K_arb(1.0, 1, 0.5)
    with pytest.raises(InvalidParameterError):
        compute_K_arb(1.0, 1, -0.1)


def test_estimate_Br_sits_below_its_bound():
    field = FieldSpec(dims=2, theta0=0.1, tau=3.0)
    estimate = estimate_Br(field, [1], 1, RandomStream(3, 0), 2000, cells=16)
    assert estimate.samples == 2000
    assert estimate.value > 1.0
    assert estimate.std_error > 0.0
    assert estimate.value < Br_upper_bound(field, [1], 1)


def test_estimate_Br_reports_overflow_as_divergence():
    field = FieldSpec(dims=1, theta0=400.0, tau=3.0)
    with pytest.raises(DivergentIntegralError):
        estimate_Br(field, [1], 1, RandomStream(3, 0), 2000, cells=8)


def test_estimate_Br_rejects_bad_dimensions():
    field = FieldSpec(dims=2, theta0=0.1, tau=3.0)
    with pytest.raises(InvalidParameterError):
        estimate_Br(field, [3], 1, RandomStream(3, 0), 100)
