"""
Convergence studies: error versus budget for every approximation method.

A study resolves the problem, weights and Monte-Carlo draws from a
StudyConfig, runs the configured method at each budget in order and returns
one StudyRecord per budget.
"""

import logging
import math
import time
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import linregress

from .config import StudyConfig
from .errors import DivergentIntegralError, GpwpcError, InsufficientDataError
from .gpc_analysis import (CoefficientTable, best_n_term_curve, compute_coefficients, estimate_l2_error,
                           mc_mean, sample_solutions, sparsity_report, truncate_S_Lambda)
from .laguerre_basis import apply_D, basis_for, gauss_rule, laguerre_coefficients
from .least_squares import draw_design, fit_bochner, ls_quadrature
from .measures import Br_upper_bound, MeasureParams, RandomStream, estimate_Br
from .multiindex import IndexSet, MultiIndex, WeightConfig, box_index_set, choose_xi_for_budget, log_sigma
from .pde_model import FemSolution, FieldSpec, Functional, Mesh, functional_weights, solve_many, v_norm
from .sparse_grid import SparseInterpolant, build_grid, check_grid, lebesgue_profile, sparse_quadrature

logger = logging.getLogger(__name__)

# substreams of the study seed
_MC_STREAM = 1
_REFERENCE_STREAM = 2
_DESIGN_STREAM = 100


@dataclass
class StudyRecord:
    """One (method, budget) row of a convergence study."""

    method: str
    n: int
    cost: int
    error: float
    error_se: float
    param: float
    wall_ms: int
    config_hash: str

    def to_row(self) -> Dict[str, object]:
        return asdict(self)


def field_from_config(cfg: StudyConfig) -> FieldSpec:
    problem = cfg.problem
    return FieldSpec(dims=int(problem['dims']), theta0=float(problem['theta0']), tau=float(problem['tau']),
                     measure=MeasureParams(float(problem['a'])), family=problem['family'])


def mesh_from_config(cfg: StudyConfig) -> Mesh:
    return Mesh(int(cfg.problem['cells']))


def weights_from_config(cfg: StudyConfig, spec: FieldSpec) -> WeightConfig:
    w = cfg.weights
    return WeightConfig.from_field(spec, p=float(w['p']), family=w['family'], r=w['r'], theta=float(w['theta']),
                                   lam=float(w['lam']), eta=float(w['eta']), sigma_rho=float(w['sigma_rho']),
                                   c_dim=w['c_dim'], c_global=float(w['c_global']), b_scale=float(w['b_scale']))


def functional_from_config(cfg: StudyConfig) -> Optional[Functional]:
    """None (V-norm errors), the mean, or point evaluation at a given x0."""
    choice = cfg.problem['functional']
    if choice is None:
        return None
    if choice == 'mean':
        return Functional('mean')
    return Functional('point', x0=float(choice))


def coefficient_box(cfg: StudyConfig) -> MultiIndex:
    """Configured coefficient box, cut or zero-padded to the problem dims."""
    levels = list(cfg.numerics['coefficient_box'])[:int(cfg.problem['dims'])]
    return MultiIndex({j: level for j, level in enumerate(levels, start=1)})


@lru_cache(maxsize=4)
def _reference(spec: FieldSpec, mesh: Mesh, load: float, count: int, seed: int, workers: int,
               phi: Optional[Tuple[float, ...]] = None) -> Tuple[np.ndarray, float]:
    """
    High-sample MC mean of u with its V-norm standard error, or the standard
    error of the functional values when ``phi`` weights are given.
    """
    logger.info(f"computing the {count}-draw Monte-Carlo reference integral")
    _, U = sample_solutions(spec, mesh, RandomStream(seed, _REFERENCE_STREAM), count, load, workers)
    mean, se = mc_mean(U, mesh)
    if phi is not None:
        _, se = mc_mean(U @ np.asarray(phi))
    mean.flags.writeable = False
    return mean, se


def _error_against_reference(value: np.ndarray, reference: np.ndarray, mesh: Mesh,
                             phi_weights: Optional[np.ndarray]) -> float:
    if phi_weights is not None:
        return abs(float(phi_weights @ (value - reference)))
    return v_norm(FemSolution(mesh, value - reference))


class _StudyContext(NamedTuple):
    cfg: StudyConfig
    spec: FieldSpec
    mesh: Mesh
    weights: WeightConfig
    load: float
    phi_weights: Optional[np.ndarray]
    workers: int


def _solve(ctx: _StudyContext, Y: np.ndarray) -> np.ndarray:
    return solve_many(ctx.spec, ctx.mesh, Y, ctx.load, workers=ctx.workers, guard=ctx.cfg.numerics['overflow_guard'])


def _l2_error(ctx: _StudyContext, exact: np.ndarray, approx: np.ndarray):
    if ctx.phi_weights is not None:
        return estimate_l2_error(exact @ ctx.phi_weights, approx @ ctx.phi_weights)
    return estimate_l2_error(exact, approx, ctx.mesh)


def _reference_error(ctx: _StudyContext, value: np.ndarray) -> Tuple[float, float]:
    cfg = ctx.cfg
    phi = tuple(float(g) for g in ctx.phi_weights) if ctx.phi_weights is not None else None
    reference, se = _reference(ctx.spec, ctx.mesh, ctx.load, int(cfg.study['reference_samples']), cfg.seed,
                               ctx.workers, phi)
    return _error_against_reference(value, reference, ctx.mesh, ctx.phi_weights), se


def _truncation_order(ctx: _StudyContext, box: MultiIndex) -> List[MultiIndex]:
    """Box members in sigma order; every prefix is downward closed."""
    return sorted(box_index_set(box), key=lambda s: (log_sigma(s, ctx.weights), s.sort_key()))


def run_study(cfg: StudyConfig) -> List[StudyRecord]:
    """
    Run ``cfg.method`` at every budget.

    Errors are L2(lambda_a; V) Monte-Carlo estimates for interp, truncation
    and ls; for quad and ls-quad they are the V-norm distance to a
    high-sample MC reference integral. With a configured functional, the
    scalar <phi, .> replaces the V-valued quantities.

    Raises:
        GpwpcError: any module error, annotated with the failing budget.
    """
    spec = field_from_config(cfg)
    mesh = mesh_from_config(cfg)
    weights = weights_from_config(cfg, spec)
    phi = functional_from_config(cfg)
    ctx = _StudyContext(cfg, spec, mesh, weights, float(cfg.problem['load']),
                        functional_weights(phi, mesh) if phi is not None else None, int(cfg.study['workers']))
    config_hash = cfg.config_hash()
    method = cfg.method
    a = spec.measure.a
    logger.info(f"study {method}: budgets {cfg.budgets}, config {config_hash}")

    mc = None
    if method in ('interp', 'truncation', 'ls'):
        mc = sample_solutions(spec, mesh, RandomStream(cfg.seed, _MC_STREAM), int(cfg.study['mc_samples']),
                              ctx.load, ctx.workers)

    table: Optional[CoefficientTable] = None
    truncation_order: List[MultiIndex] = []
    if method == 'truncation':
        box = coefficient_box(cfg)
        table = compute_coefficients(spec, mesh, box, int(cfg.numerics['quad_margin']), ctx.load,
                                     int(cfg.numerics['tensor_point_cap']), ctx.workers)
        truncation_order = _truncation_order(ctx, box)

    records = []
    for position, n in enumerate(cfg.budgets):
        started = time.perf_counter()
        try:
            cost, error, error_se, param = _run_budget(ctx, method, n, position, mc, table, truncation_order, a)
        except GpwpcError as e:
            logger.error(f"❌ {method} failed at budget n={n}: {e}")
            raise type(e)(f"budget n={n}: {e}") from e
        elapsed_ms = int(round(1000.0 * (time.perf_counter() - started)))
        logger.info(f"{method} n={n}: cost={cost}, error={error:.6g} ± {error_se:.2g}, param={param:.6g}, "
                    f"{elapsed_ms} ms")
        wall_ms = elapsed_ms if cfg.study['record_timing'] else 0
        records.append(StudyRecord(method, int(n), int(cost), float(error), float(error_se), float(param),
                                   wall_ms, config_hash))
    return records


def _run_budget(ctx: _StudyContext, method: str, n: int, position: int, mc, table, truncation_order, a: float):
    cfg = ctx.cfg
    dim_budget = cfg.dim_budget

    if method in ('interp', 'quad'):
        xi, index_set = choose_xi_for_budget(n, ctx.weights, 'points', dim_budget, int(cfg.numerics['member_cap']))
        grid = build_grid(index_set, a)
        check_grid(index_set, grid)
        values = _solve(ctx, grid.dense_points(ctx.spec.dims))
        if method == 'interp':
            solutions = [FemSolution(ctx.mesh, row) for row in values]
            interp = SparseInterpolant.from_values(index_set, a, solutions, grid)
            estimate = _l2_error(ctx, mc.U, interp.evaluate_many(mc.Y))
            return len(grid.points), estimate.value, estimate.se, xi
        quadrature = sparse_quadrature(index_set, a, grid)
        error, se = _reference_error(ctx, quadrature.weights @ values)
        return quadrature.cost, error, se, xi

    if method == 'truncation':
        members = truncation_order[:n]
        xi = math.exp(ctx.weights.q * log_sigma(members[-1], ctx.weights))
        expansion = truncate_S_Lambda(table, IndexSet(tuple(members), xi))
        estimate = _l2_error(ctx, mc.U, expansion.evaluate_many(mc.Y))
        return len(members), estimate.value, estimate.se, xi

    design = draw_design(ctx.weights, ctx.spec.dims, n, float(cfg.study['kappa']), cfg.study['mode'], cfg.seed, a,
                         dim_budget, substream=_DESIGN_STREAM + position,
                         min_acceptance=float(cfg.numerics['min_acceptance']))
    values = _solve(ctx, design.samples)
    if method == 'ls':
        approximant = fit_bochner(design, values)
        estimate = _l2_error(ctx, mc.U, approximant.evaluate_many(mc.Y))
        return design.n, estimate.value, estimate.se, design.m
    quadrature = ls_quadrature(design)
    error, se = _reference_error(ctx, quadrature.apply_values(values))
    return design.n, error, se, design.m


class RateFit(NamedTuple):
    slope: float
    intercept: float
    r_squared: float
    points: int


def fit_rate(records: Sequence[StudyRecord]) -> RateFit:
    """
    Least-squares line through (log n, log error); ``slope`` is the empirical
    convergence order (the negated regression slope).

    Records with non-positive errors are skipped with a warning. Constant
    errors give slope 0 with R^2 = 1.

    Raises:
        InsufficientDataError: fewer than three usable records.
    """
    usable = []
    for record in records:
        if record.error > 0 and math.isfinite(record.error):
            usable.append(record)
        else:
            logger.warning(f"excluding {record.method} n={record.n} from the rate fit: error {record.error}")
    if len(usable) < 3:
        raise InsufficientDataError(f"rate fit needs at least 3 positive errors, got {len(usable)}")

    x = np.log([record.n for record in usable])
    y = np.log([record.error for record in usable])
    if np.ptp(x) == 0:
        raise InsufficientDataError("rate fit needs at least two distinct budgets")
    if np.ptp(y) == 0:
        return RateFit(0.0, float(y[0]), 1.0, len(usable))
    fit = linregress(x, y)
    rate = RateFit(float(-fit.slope), float(fit.intercept), float(fit.rvalue ** 2), len(usable))
    logger.info(f"fitted rate {rate.slope:.4f} (R^2={rate.r_squared:.4f}) from {rate.points} points")
    return rate


def run_sparsity(cfg: StudyConfig, p_list: Sequence[float] = (0.5, 1.0, 2.0)):
    """Coefficient table, sparsity report (with MC Parseval residual) and best n-term curve."""
    spec = field_from_config(cfg)
    mesh = mesh_from_config(cfg)
    weights = weights_from_config(cfg, spec)
    load = float(cfg.problem['load'])
    workers = int(cfg.study['workers'])
    table = compute_coefficients(spec, mesh, coefficient_box(cfg), int(cfg.numerics['quad_margin']), load,
                                 int(cfg.numerics['tensor_point_cap']), workers)
    mc = sample_solutions(spec, mesh, RandomStream(cfg.seed, _MC_STREAM), int(cfg.study['mc_samples']), load, workers)
    norm_sq = estimate_l2_error(mc.U, np.zeros_like(mc.U), mesh).squared
    report = sparsity_report(table, p_list, weights, norm_sq)
    curve = best_n_term_curve(table, cfg.budgets)
    return table, report, curve


def run_basis_check(cfg: StudyConfig, max_degree: int = 20, max_level: int = 40) -> Dict[str, object]:
    """
    Numerical self-checks of the univariate machinery for the configured a:
    Gram deviations, eigenrelation residuals, Gauss exactness, Lebesgue
    growth and B_r estimates against their upper bound.
    """
    spec = field_from_config(cfg)
    a = spec.measure.a
    basis = basis_for(a)
    rule = gauss_rule(a, max_degree + 1)

    table = basis.eval_all(max_degree, rule.nodes)
    gram = (table * rule.weights) @ table.T
    gram_deviation = float(np.abs(gram - np.eye(max_degree + 1)).max())

    eigen_residual = 0.0
    for s in range(16):
        coeffs = laguerre_coefficients(basis, s)
        residual = np.abs(apply_D(coeffs, 1, 1, a) - s * coeffs).max() / max(np.abs(coeffs).max(), 1.0)
        eigen_residual = max(eigen_residual, float(residual))

    exactness = 0.0
    for m in range(1, max_level + 1):
        level_rule = gauss_rule(a, m)
        for k in range(2 * m):
            exact = math.exp(math.lgamma(a + k) - math.lgamma(a))
            approx = float(np.dot(level_rule.weights, level_rule.nodes ** k))
            exactness = max(exactness, abs(approx - exact) / exact)

    profile = lebesgue_profile(a, [1, 2, 4, 8, 16, 32])
    stream = RandomStream(cfg.seed, 0)
    J = list(range(1, spec.dims + 1))
    r = 1
    Br = {'Br_estimate': None, 'Br_std_error': None, 'Br_upper_bound': None}
    try:
        estimate = estimate_Br(spec, J, r, stream, int(cfg.study['mc_samples']), cells=int(cfg.problem['cells']))
        Br.update(Br_estimate=estimate.value, Br_std_error=estimate.std_error)
        Br['Br_upper_bound'] = Br_upper_bound(spec, J, r)
        if estimate.value > Br['Br_upper_bound']:
            logger.warning(f"B_r estimate {estimate.value:.6g} exceeds its bound {Br['Br_upper_bound']:.6g}")
    except DivergentIntegralError as e:
        logger.warning(f"B_{r} integral not available for this field: {e}")

    results = {
        'a': a,
        'gram_deviation': gram_deviation,
        'eigenrelation_residual': eigen_residual,
        'gauss_exactness': exactness,
        'lebesgue_levels': list(profile.levels),
        'lebesgue_constants': list(profile.constants),
        'lebesgue_exponent': profile.exponent,
        **Br,
    }
    for name, value in results.items():
        logger.info(f"basis-check {name}: {value}")
    return results
