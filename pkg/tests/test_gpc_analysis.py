import math

import numpy as np
import pytest

from gpwpc.errors import BudgetExceededError, IncompleteDataError, InvalidParameterError
from gpwpc.gpc_analysis import (best_n_term, best_n_term_curve, box_signed_indices, compute_coefficients,
                                estimate_l2_error, excluded_norm_sq, functional_quadrature, mc_mean,
                                sample_solutions, signed_basis_matrix, signed_means, sparsity_report,
                                truncate_S_Lambda)
from gpwpc.laguerre_basis import SQRT2, basis_for, gauss_rule
from gpwpc.measures import MeasureParams, RandomStream
from gpwpc.multiindex import IndexSet, MultiIndex, SignedMultiIndex, WeightConfig, box_index_set
from gpwpc.pde_model import FemSolution, FieldSpec, Functional, Mesh, solve, solve_many, v_norms
from gpwpc.sparse_grid import sparse_quadrature

PLUS_1 = SignedMultiIndex(MultiIndex({1: 1}), ((1, 1),))
MINUS_2_PLUS_1 = SignedMultiIndex(MultiIndex({1: 2, 2: 1}), ((1, -1), (2, 1)))
ZERO = SignedMultiIndex(MultiIndex(), ())


def polynomial_solver(a):
    """2 + 3 L_{+,1}(y1) - L_{-,2}(y1) L_{+,1}(y2) as a one-component vector."""
    def solver(Y):
        Phi = signed_basis_matrix([ZERO, PLUS_1, MINUS_2_PLUS_1], Y, a)
        return (Phi @ np.array([2.0, 3.0, -1.0]))[:, None]
    return solver


def test_signed_basis_matrix_values():
    a = 1.0
    Y = np.array([[0.5, 0.0], [-0.5, 1.0], [-2.0, 0.3]])
    Phi = signed_basis_matrix([ZERO, PLUS_1, MINUS_2_PLUS_1], Y, a)
    basis = basis_for(a)
    np.testing.assert_array_equal(Phi[:, 0], 1.0)
    np.testing.assert_allclose(Phi[:, 1], [SQRT2 * basis.eval(1, 0.5), 0.0, 0.0])
    expected = [0.0, 2.0 * basis.eval(2, 0.5) * basis.eval(1, 1.0), 2.0 * basis.eval(2, 2.0) * basis.eval(1, 0.3)]
    np.testing.assert_allclose(Phi[:, 2], expected)
    with pytest.raises(InvalidParameterError):
        signed_basis_matrix([MINUS_2_PLUS_1], Y[:, :1], a)


def test_box_signed_indices():
    keys = box_signed_indices(MultiIndex({1: 2, 2: 1}))
    assert len(keys) == 15
    assert keys[0] == ZERO
    assert len(set(keys)) == 15


@pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
def test_coefficients_recover_a_known_expansion(a):
    spec = FieldSpec(dims=2, measure=MeasureParams(a))
    table = compute_coefficients(spec, Mesh(4), MultiIndex({1: 2, 2: 1}), quad_margin=2, solver=polynomial_solver(a))
    assert len(table) == 15
    assert table.mesh is None
    expected = {ZERO: 2.0, PLUS_1: 3.0, MINUS_2_PLUS_1: -1.0}
    for key in box_signed_indices(table.box):
        assert float(table.coefficient(key)[0]) == pytest.approx(expected.get(key, 0.0), abs=1e-10)
    assert table.tilde_norm(MultiIndex({1: 1})) == pytest.approx(3.0, abs=1e-10)
    assert table.levels == {1: 4, 2: 3}

    lam = IndexSet((MultiIndex(), MultiIndex({1: 1}), MultiIndex({2: 1}), MultiIndex({1: 2}),
                    MultiIndex({1: 1, 2: 1}), MultiIndex({1: 2, 2: 1})), math.inf)
    expansion = truncate_S_Lambda(table, lam)
    Y = np.random.default_rng(1).normal(scale=2.0, size=(12, 2))
    np.testing.assert_allclose(expansion.evaluate_many(Y), polynomial_solver(a)(Y), rtol=1e-9, atol=1e-8)


def test_truncation_outside_the_box_is_rejected():
    spec = FieldSpec(dims=2)
    table = compute_coefficients(spec, Mesh(4), MultiIndex({1: 1}), quad_margin=1, solver=polynomial_solver(1.0))
    with pytest.raises(IncompleteDataError):
        truncate_S_Lambda(table, IndexSet((MultiIndex(), MultiIndex({1: 2})), math.inf))
    with pytest.raises(IncompleteDataError):
        table.coefficient(MINUS_2_PLUS_1)


def test_point_cap():
    with pytest.raises(BudgetExceededError):
        compute_coefficients(FieldSpec(dims=3), Mesh(4), MultiIndex({1: 3, 2: 3, 3: 3}), quad_margin=3, point_cap=1000)


def test_parseval_on_a_one_dimensional_problem():
    spec = FieldSpec(dims=1, theta0=0.2)
    mesh = Mesh(16)
    table = compute_coefficients(spec, mesh, MultiIndex({1: 6}), quad_margin=3)
    parseval = sum(table.norm(key) ** 2 for key in table.values)

    rule = gauss_rule(1.0, 30)
    nodes = np.concatenate((-rule.nodes, rule.nodes))
    weights = np.concatenate((rule.weights, rule.weights)) / 2.0
    U = solve_many(spec, mesh, nodes[:, None])
    exact = float(weights @ v_norms(U, mesh) ** 2)
    assert parseval <= exact * (1.0 + 1e-8)
    # sign(y) has unit norm and is orthogonal to every index with signs on its support only
    step = FemSolution(mesh, (weights * np.sign(nodes)) @ U)
    assert step.v_norm() > 0
    assert parseval + step.v_norm() ** 2 == pytest.approx(exact, rel=1e-6)

    zero = table.coefficient(ZERO)
    assert zero.v_norm() > 0
    assert excluded_norm_sq(table, box_index_set(MultiIndex({1: 6}))) == 0.0


def test_sparsity_report_and_best_n_term():
    spec = FieldSpec(dims=2)
    table = compute_coefficients(spec, Mesh(4), MultiIndex({1: 2, 2: 1}), quad_margin=2, solver=polynomial_solver(1.0))
    cfg = WeightConfig.from_field(FieldSpec(dims=2, theta0=0.3), p=0.5)
    report = sparsity_report(table, [1.0, 2.0], cfg, mc_norm_sq=14.0)
    assert report.lp_sums[2.0] == pytest.approx(report.parseval_sum)
    assert report.parseval_sum == pytest.approx(4.0 + 9.0 + 1.0, abs=1e-9)
    assert report.parseval_residual == pytest.approx(0.0, abs=1e-9)
    assert list(report.sorted_norms) == sorted(report.sorted_norms, reverse=True)
    assert report.indices[0] == MultiIndex({1: 1})
    # nu is 1, 1 and 2 for the three nonzero coefficients; r = 3
    assert report.sobolev_sum == pytest.approx(4.0 + 9.0 + 2 ** 6, abs=1e-8)
    frame = report.frame(cfg)
    assert list(frame['rank'][:3]) == [1, 2, 3]
    assert 'sigma' in frame.columns

    top = best_n_term(table, 1)
    assert top.selection == (MultiIndex({1: 1}),)
    assert top.retained_error == pytest.approx(math.sqrt(5.0), abs=1e-9)
    assert best_n_term(table, len(table.indices())).retained_error == pytest.approx(0.0, abs=1e-9)
    curve = best_n_term_curve(table, [1, 2, 3])
    assert list(curve['n']) == [1, 2, 3]
    assert curve['retained_error'].is_monotonic_decreasing
    with pytest.raises(InvalidParameterError):
        best_n_term(table, 0)


def test_estimate_l2_error():
    exact = np.ones((50, 3))
    estimate = estimate_l2_error(exact, exact)
    assert estimate.value == 0.0 and estimate.squared_se == 0.0
    shifted = estimate_l2_error(exact, exact - np.array([1.0, 0.0, 0.0]))
    assert shifted.value == pytest.approx(1.0)
    assert shifted.se == pytest.approx(0.0)
    with pytest.raises(InvalidParameterError):
        estimate_l2_error(exact[:1], exact[:1])


def test_mc_mean():
    values = np.array([[1.0, 0.0], [3.0, 0.0], [2.0, 3.0]])
    mean, se = mc_mean(values)
    np.testing.assert_allclose(mean, [2.0, 1.0])
    spread = np.sum((values - mean) ** 2)
    assert se == pytest.approx(math.sqrt(spread / 6.0))


def test_sample_solutions_are_reproducible():
    spec = FieldSpec(dims=2, theta0=0.2)
    mesh = Mesh(8)
    first = sample_solutions(spec, mesh, RandomStream(1, 1), 5)
    second = sample_solutions(spec, mesh, RandomStream(1, 1), 5)
    np.testing.assert_array_equal(first.U, second.U)
    assert first.Y.shape == (5, 2) and first.U.shape == (5, 7)


def test_functional_quadrature_and_signed_means():
    spec = FieldSpec(dims=2, theta0=0.2)
    mesh = Mesh(16)
    quad = sparse_quadrature(IndexSet((MultiIndex(),), math.inf), 1.0)
    solutions = [solve(spec, mesh, {})]
    phi = Functional('point', x0=0.5)
    assert functional_quadrature(phi, quad, solutions) == pytest.approx(0.125)
    with pytest.raises(IncompleteDataError):
        functional_quadrature(phi, quad, solutions * 2)
    np.testing.assert_array_equal(signed_means([ZERO, PLUS_1, MINUS_2_PLUS_1]), [1.0, 0.0, 0.0])
