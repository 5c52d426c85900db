import logging
import math

import numpy as np
import pytest

from gpwpc.config import load_config
from gpwpc.errors import InsufficientDataError
from gpwpc.gpc_analysis import estimate_l2_error, sample_solutions
from gpwpc.measures import RandomStream
from gpwpc.pde_model import solve
from gpwpc.study import (StudyRecord, coefficient_box, field_from_config, fit_rate, functional_from_config,
                         mesh_from_config, run_basis_check, run_sparsity, run_study)

SMALL = {
    'dims': 2,
    'theta0': 0.2,
    'cells': 16,
    'mc_samples': 200,
    'reference_samples': 400,
    'kappa': 2.0,
    'coefficient_box': [3, 2],
    'quad_margin': 2,
    'seed': 7,
}

BUDGETS = {
    'interp': [1, 5, 13],
    'quad': [1, 5, 13],
    'truncation': [1, 3, 6],
    'ls': [4, 8, 16],
    'ls-quad': [4, 8, 16],
}


def small_config(method, budgets=None, **extra):
    return load_config(overrides={**SMALL, 'method': method, 'budgets': budgets or BUDGETS[method], **extra})


def records(errors, ns=(10, 20, 40, 80, 160)):
    return [StudyRecord('interp', n, n, e, 0.0, 0.0, 0, 'cafe') for n, e in zip(ns, errors)]


def test_fit_rate_on_exact_power_law():
    ns = [10, 20, 40, 80, 160]
    rate = fit_rate(records([3.0 * n ** -2.0 for n in ns], ns))
    assert rate.slope == pytest.approx(2.0, abs=1e-6)
    assert rate.intercept == pytest.approx(math.log(3.0), abs=1e-6)
    assert rate.r_squared == pytest.approx(1.0)
    assert rate.points == 5


def test_fit_rate_with_noise():
    ns = [10, 20, 40, 80, 160, 320]
    noise = np.random.default_rng(0).uniform(0.95, 1.05, size=len(ns))
    rate = fit_rate(records([n ** -2.0 * z for n, z in zip(ns, noise)], ns))
    assert rate.slope == pytest.approx(2.0, abs=0.2)


def test_fit_rate_constant_errors():
    assert fit_rate(records([0.5] * 5)).slope == 0.0


def test_fit_rate_needs_three_positive_errors(caplog):
    with pytest.raises(InsufficientDataError):
        fit_rate(records([0.1, 0.05]))
    with caplog.at_level(logging.WARNING):
        with pytest.raises(InsufficientDataError):
            fit_rate(records([0.1, 0.0, 0.05, float('nan')]))
    assert 'excluding' in caplog.text
    rate = fit_rate(records([0.4, 0.0, 0.1, 0.05, 0.025]))
    assert rate.points == 4


def test_config_helpers():
    cfg = small_config('truncation', functional='mean')
    spec = field_from_config(cfg)
    assert spec.dims == 2 and spec.theta0 == 0.2
    assert mesh_from_config(cfg).cells == 16
    assert functional_from_config(cfg).kind == 'mean'
    assert functional_from_config(small_config('interp', functional=0.25)).x0 == 0.25
    assert functional_from_config(small_config('interp')) is None
    assert coefficient_box(cfg).as_dict() == {1: 3, 2: 2}


@pytest.mark.parametrize("method", list(BUDGETS))
def test_small_studies(method):
    cfg = small_config(method)
    result = run_study(cfg)
    assert [record.n for record in result] == cfg.budgets
    for record in result:
        assert record.method == method
        assert record.cost <= record.n
        assert record.error >= 0 and math.isfinite(record.error)
        assert record.error_se >= 0
        assert record.wall_ms == 0
        assert record.config_hash == cfg.config_hash()
    assert run_study(cfg) == result


@pytest.mark.parametrize("method", ['interp', 'truncation'])
def test_errors_shrink_with_the_budget(method):
    result = run_study(small_config(method))
    assert result[-1].error < result[0].error


def test_single_point_interpolation_error_is_the_distance_to_u_at_zero():
    cfg = small_config('interp', budgets=[1])
    spec, mesh = field_from_config(cfg), mesh_from_config(cfg)
    # MC draws come from substream 1 of the study seed
    mc = sample_solutions(spec, mesh, RandomStream(cfg.seed, 1), 200)
    center = solve(spec, mesh, {}).values
    expected = estimate_l2_error(mc.U, np.tile(center, (200, 1)), mesh)
    (record,) = run_study(cfg)
    assert record.cost == 1
    assert record.error == pytest.approx(expected.value, rel=1e-10)
    assert record.param == pytest.approx(1.0)


def test_functional_study_reports_scalar_errors():
    result = run_study(small_config('quad', functional=0.5))
    assert all(math.isfinite(record.error) for record in result)


def test_record_timing():
    (record,) = run_study(small_config('interp', budgets=[1], record_timing=True))
    assert record.wall_ms >= 0
    assert record.to_row()['method'] == 'interp'


def test_run_sparsity():
    cfg = small_config('truncation', budgets=[1, 2, 4])
    table, report, curve = run_sparsity(cfg, p_list=(0.5, 1.0))
    assert len(table.indices()) == 12
    assert set(report.lp_sums) == {0.5, 1.0}
    assert report.weighted_sum is not None and report.parseval_residual is not None
    assert list(curve['n']) == [1, 2, 4]
    assert report.indices[0].is_zero()


@pytest.mark.filterwarnings("error::RuntimeWarning")
def test_run_basis_check():
    result = run_basis_check(small_config('interp'), max_degree=10, max_level=10)
    assert result['a'] == 1.0
    assert result['gram_deviation'] <= 1e-10
    assert result['eigenrelation_residual'] <= 1e-8
    assert result['gauss_exactness'] <= 1e-10
    assert len(result['lebesgue_constants']) == len(result['lebesgue_levels'])
    assert all(math.isfinite(c) for c in result['lebesgue_constants'])
    assert math.isfinite(result['lebesgue_exponent'])
    assert result['Br_estimate'] <= result['Br_upper_bound']


def test_interpolation_and_least_squares_curves_on_a_small_problem():
    interp = run_study(small_config('interp', budgets=[1, 9, 41]))
    errors = [record.error for record in interp]
    assert errors == sorted(errors, reverse=True)
    assert errors[0] >= 5.0 * errors[-1]
    assert fit_rate(interp).slope > 0
    ls = run_study(small_config('ls', budgets=[9, 41], mode='christoffel'))
    assert ls[-1].error < ls[0].error
    assert 5.0 * ls[-1].error <= errors[0]


@pytest.mark.parametrize("method, budgets", [('quad', [1, 9, 41]), ('ls-quad', [10, 20, 40])])
def test_quadrature_reaches_the_reference_noise_on_a_small_problem(method, budgets):
    final = run_study(small_config(method, budgets=budgets))[-1]
    assert final.error_se > 0
    assert final.error <= 3.0 * final.error_se


DESK = {'theta0': 0.2, 'seed': 11}


@pytest.mark.slow
def test_desk_interpolation_and_least_squares_curves():
    interp = run_study(load_config(overrides={**DESK, 'method': 'interp'}))
    assert interp[0].error >= 10.0 * interp[-1].error
    assert fit_rate(interp).slope >= 0.8
    ls = run_study(load_config(overrides={**DESK, 'method': 'ls', 'mode': 'christoffel'}))
    assert ls[-1].error <= 1.5 * interp[-1].error


@pytest.mark.slow
def test_desk_quadrature_errors_decrease():
    result = run_study(load_config(overrides={**DESK, 'method': 'quad', 'budgets': [9, 41, 137]}))
    errors = [record.error for record in result]
    assert errors == sorted(errors, reverse=True)
