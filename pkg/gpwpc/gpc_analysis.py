"""
GPWPC coefficients of the parametric solution and their diagnostics.

Coefficients u_{delta,s} = int u(y) L_{delta,s}(y) dlambda_a(y) are computed
in the signed basis with one tensor symmetric Gauss-Laguerre rule shared by
every (delta, s) in the box; tilde norms, truncations S_Lambda u, sparsity
reports and best n-term selections are derived from the stored table.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import linregress

from .config import NUMERICS, PROBLEM
from .errors import BudgetExceededError, IncompleteDataError, InvalidParameterError
from .laguerre_basis import SQRT2, basis_for, gauss_rule, symmetric_nodes
from .measures import RandomStream, sample_laplace_matrix
from .multiindex import IndexSet, MultiIndex, SignedMultiIndex, WeightConfig, log_sigma, signed_companions
from .pde_model import FemSolution, FieldSpec, Functional, Mesh, apply_functional, solve_many, v_norms
from .sparse_grid import SparseQuadrature

logger = logging.getLogger(__name__)

Solver = Callable[[np.ndarray], np.ndarray]


def signed_basis_matrix(indices: Sequence[SignedMultiIndex], Y: np.ndarray, a: float) -> np.ndarray:
    """
    Values of the tensor signed basis L_{delta,s}(y) = prod_j sqrt(2) L_{s_j}(delta_j y_j) 1[delta_j y_j >= 0]
    at the rows of Y; shape (len(Y), len(indices)).
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    degrees: Dict[int, int] = {}
    for index in indices:
        for j, level in index.base.entries:
            degrees[j] = max(degrees.get(j, 0), level)
    if degrees and max(degrees) > Y.shape[1]:
        raise InvalidParameterError(f"basis uses dimension {max(degrees)} but samples have {Y.shape[1]}")

    tables = {}
    for j, degree in degrees.items():
        basis = basis_for(a)
        tables[j] = basis.eval_all(degree, np.abs(Y[:, j - 1]))

    values = np.ones((Y.shape[0], len(indices)))
    for column, index in enumerate(indices):
        for (j, level), (_, delta) in zip(index.base.entries, index.signs):
            inside = delta * Y[:, j - 1] >= 0
            values[:, column] *= np.where(inside, SQRT2 * tables[j][level], 0.0)
    return values


def box_signed_indices(box: MultiIndex) -> List[SignedMultiIndex]:
    """All (delta, s) with s <= box, s in graded-lexicographic order."""
    dims = box.support
    members = sorted((MultiIndex(zip(dims, levels)) for levels in itertools.product(*[range(box[j] + 1) for j in dims])),
                     key=MultiIndex.sort_key)
    return [signed for s in members for signed in signed_companions(s)]


@dataclass(eq=False)
class CoefficientTable:
    """
    Signed-basis coefficients u_{delta,s} for every s <= box.

    ``values`` holds the interior nodal vector of each coefficient (or a
    length-k vector for scalar-valued integrands, when ``mesh`` is None).
    """

    box: MultiIndex
    levels: Dict[int, int]
    a: float
    values: Dict[SignedMultiIndex, np.ndarray]
    mesh: Optional[Mesh] = None
    _norms: Dict[SignedMultiIndex, float] = field(init=False, repr=False)

    def __post_init__(self):
        keys = list(self.values)
        matrix = np.array([self.values[key] for key in keys])
        norms = v_norms(matrix, self.mesh) if self.mesh is not None else np.linalg.norm(matrix, axis=1)
        self._norms = dict(zip(keys, (float(n) for n in norms)))

    def __len__(self):
        return len(self.values)

    def indices(self) -> List[MultiIndex]:
        """Distinct s in the table, graded-lexicographic."""
        return sorted({key.base for key in self.values}, key=MultiIndex.sort_key)

    def coefficient(self, key: SignedMultiIndex):
        if key not in self.values:
            raise IncompleteDataError(f"no coefficient stored for {key.to_json()}")
        if self.mesh is None:
            return self.values[key]
        return FemSolution(self.mesh, self.values[key])

    def norm(self, key: SignedMultiIndex) -> float:
        """||u_{delta,s}||_V."""
        if key not in self._norms:
            raise IncompleteDataError(f"no coefficient stored for {key.to_json()}")
        return self._norms[key]

    def tilde_norm(self, s: MultiIndex) -> float:
        """||u~_s||_V = sqrt(sum_delta ||u_{delta,s}||_V^2)."""
        return math.sqrt(sum(self.norm(key) ** 2 for key in signed_companions(s)))

    def tilde_norms(self) -> Dict[MultiIndex, float]:
        return {s: self.tilde_norm(s) for s in self.indices()}

    def to_json(self, include_vectors: bool = False) -> Dict[str, object]:
        entries = []
        for key in sorted(self.values, key=SignedMultiIndex.sort_key):
            entry = {**key.to_json(), 'norm': self._norms[key]}
            if include_vectors:
                entry['values'] = [float(v) for v in np.atleast_1d(self.values[key])]
            entries.append(entry)
        return {'box': self.box.to_json(), 'levels': {str(j): m for j, m in self.levels.items()}, 'a': self.a,
                'cells': self.mesh.cells if self.mesh is not None else None, 'entries': entries}


def _symmetric_rule(a: float, level: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes +-y_{m;k} with halved Gauss weights; the point mass at 0 for level 0."""
    if level == 0:
        return np.zeros(1), np.ones(1)
    rule = gauss_rule(a, level)
    nodes = np.array([node for _, node in symmetric_nodes(rule)])
    weights = np.concatenate((rule.weights[::-1], rule.weights)) / 2.0
    return nodes, weights


def compute_coefficients(spec: FieldSpec, mesh: Mesh, box: MultiIndex, quad_margin: int = NUMERICS['quad_margin'],
                         load=PROBLEM['load'], point_cap: int = NUMERICS['tensor_point_cap'],
                         workers: int = 1, solver: Optional[Solver] = None) -> CoefficientTable:
    """
    Signed-basis coefficients of u for every s <= box.

    Each parametric dimension 1..J uses the symmetric rule at level
    box_j + quad_margin; the solve at each tensor point is done once and the
    table is obtained by contracting the solution tensor with the weighted
    univariate basis one axis at a time.

    Args:
        spec: Coefficient field (J = spec.dims).
        mesh: FEM mesh.
        box: Largest index; support must lie in 1..J.
        quad_margin: Extra quadrature levels per dimension.
        load: Constant or nodal load.
        point_cap: Maximum number of tensor points.
        workers: Threads for the PDE solves.
        solver: Optional replacement mapping an (N, J) array of points to
            (N, k) values; the table then holds plain vectors.

    Raises:
        BudgetExceededError: the tensor grid exceeds ``point_cap``.
    """
    if any(j > spec.dims for j in box.support):
        raise InvalidParameterError(f"box support {box.support} outside 1..{spec.dims}")
    if quad_margin < 0:
        raise InvalidParameterError(f"quad_margin must be non-negative, got {quad_margin}")
    a = spec.measure.a
    dims = list(range(1, spec.dims + 1))
    levels = {j: box[j] + quad_margin for j in dims}
    rules = [_symmetric_rule(a, levels[j]) for j in dims]
    sizes = [len(nodes) for nodes, _ in rules]
    total = math.prod(sizes)
    if total > point_cap:
        raise BudgetExceededError(f"coefficient tensor grid needs {total} points, cap is {point_cap}")
    logger.info(f"computing coefficients on box {box.as_dict()} with {total} tensor points")

    grid = np.stack(np.meshgrid(*[nodes for nodes, _ in rules], indexing='ij'), axis=-1).reshape(total, len(dims))
    if solver is None:
        samples = solve_many(spec, mesh, grid, load, workers=workers)
        table_mesh = mesh
    else:
        samples = np.asarray(solver(grid), dtype=float).reshape(total, -1)
        table_mesh = None
    tensor = samples.reshape(*sizes, samples.shape[1])

    # per dimension: rows (0, none), (1, -1), (1, +1), (2, -1), ...
    row_keys = []
    for j, (nodes, weights) in zip(dims, rules):
        keys = [(0, 0)] + [(s, delta) for s in range(1, box[j] + 1) for delta in (-1, 1)]
        basis = basis_for(a)
        table = basis.eval_all(box[j], np.abs(nodes))
        rows = [np.ones_like(nodes) if s == 0 else np.where(delta * nodes >= 0, SQRT2 * table[s], 0.0)
                for s, delta in keys]
        contraction = (np.array(rows) * weights[None, :]).T
        tensor = np.tensordot(tensor, contraction, axes=([0], [0]))
        row_keys.append(keys)
    tensor = np.moveaxis(tensor, 0, -1)

    values = {}
    for position in itertools.product(*[range(len(keys)) for keys in row_keys]):
        chosen = [row_keys[d][i] for d, i in enumerate(position)]
        s = MultiIndex({j: level for j, (level, _) in zip(dims, chosen)})
        signs = tuple((j, delta) for j, (level, delta) in zip(dims, chosen) if level)
        values[SignedMultiIndex(s, signs)] = tensor[position]
    return CoefficientTable(box, levels, a, values, table_mesh)


@dataclass(eq=False)
class TruncatedExpansion:
    """S_Lambda u = sum_{s in Lambda} sum_delta u_{delta,s} L_{delta,s}."""

    table: CoefficientTable
    index_set: IndexSet

    def __post_init__(self):
        outside = [s for s in self.index_set if not s.is_leq(self.table.box)]
        if outside:
            raise IncompleteDataError(f"{len(outside)} indices of Lambda lie outside the box, e.g. {outside[0]}")
        self._keys = [key for s in self.index_set for key in signed_companions(s)]
        self._matrix = np.array([np.atleast_1d(self.table.values[key]) for key in self._keys])

    def evaluate_many(self, Y: np.ndarray) -> np.ndarray:
        Y = np.atleast_2d(Y)
        return signed_basis_matrix(self._keys, Y, self.table.a) @ self._matrix

    def evaluate(self, y):
        row = self.evaluate_many(np.atleast_2d(np.asarray(y, dtype=float)))[0]
        return FemSolution(self.table.mesh, row) if self.table.mesh is not None else row


def truncate_S_Lambda(table: CoefficientTable, index_set: IndexSet) -> TruncatedExpansion:
    """Truncated expansion S_Lambda u; Lambda must lie in the table's box."""
    return TruncatedExpansion(table, index_set)


class SolutionSample(NamedTuple):
    Y: np.ndarray
    U: np.ndarray


def sample_solutions(spec: FieldSpec, mesh: Mesh, stream: RandomStream, count: int,
                     load=PROBLEM['load'], workers: int = 1) -> SolutionSample:
    """``count`` i.i.d. parameter draws and the corresponding nodal solutions."""
    Y = sample_laplace_matrix(spec.measure, stream, count, spec.dims)
    return SolutionSample(Y, solve_many(spec, mesh, Y, load, workers=workers))


class L2Estimate(NamedTuple):
    """MC estimate of ||e||^2_{L2} and of its square root, with standard errors."""

    squared: float
    squared_se: float
    value: float
    se: float


def estimate_l2_error(exact: np.ndarray, approx: np.ndarray, mesh: Optional[Mesh] = None) -> L2Estimate:
    """
    Monte-Carlo estimate of ||u - A||^2_{L2(lambda_a; V)} from paired samples.

    Rows are draws; with ``mesh`` the pointwise error is the V-norm of the
    nodal difference, otherwise the Euclidean norm (|.| for scalars).
    """
    diff = np.asarray(exact, dtype=float) - np.asarray(approx, dtype=float)
    diff = diff.reshape(diff.shape[0], -1)
    if diff.shape[0] < 2:
        raise InvalidParameterError("an L2 error estimate needs at least two draws")
    pointwise = v_norms(diff, mesh) ** 2 if mesh is not None else np.sum(diff ** 2, axis=1)
    mean = float(pointwise.mean())
    se = float(pointwise.std(ddof=1) / math.sqrt(len(pointwise)))
    value = math.sqrt(mean)
    value_se = se / (2.0 * value) if value > 0 else math.sqrt(se)
    return L2Estimate(mean, se, value, value_se)


@dataclass
class SparsityReport:
    """Summability diagnostics of the tilde-norm sequence."""

    indices: List[MultiIndex]
    sorted_norms: np.ndarray
    lp_sums: Dict[float, float]
    decay_exponent: float
    decay_r2: float
    parseval_sum: float
    weighted_sum: Optional[float] = None
    sobolev_sum: Optional[float] = None
    parseval_residual: Optional[float] = None

    def frame(self, cfg: Optional[WeightConfig] = None) -> pd.DataFrame:
        """One row per index in decreasing norm order."""
        rows = []
        for rank, (s, norm) in enumerate(zip(self.indices, self.sorted_norms), start=1):
            row = {'rank': rank, 'index': str(s.as_dict()), 'l1': s.l1, 'l0': s.l0, 'tilde_norm': float(norm)}
            if cfg is not None:
                row['sigma'] = math.exp(log_sigma(s, cfg))
            rows.append(row)
        return pd.DataFrame(rows)

    def to_json(self) -> Dict[str, object]:
        return {
            'lp_sums': {str(p): v for p, v in self.lp_sums.items()},
            'decay_exponent': self.decay_exponent, 'decay_r2': self.decay_r2,
            'parseval_sum': self.parseval_sum, 'weighted_sum': self.weighted_sum,
            'sobolev_sum': self.sobolev_sum, 'parseval_residual': self.parseval_residual,
            'sorted_norms': [float(v) for v in self.sorted_norms],
            'indices': [s.to_json() for s in self.indices],
        }


def _ranked(table: CoefficientTable) -> List[Tuple[MultiIndex, float]]:
    """(s, ||u~_s||) in decreasing norm, ties graded-lexicographic."""
    norms = table.tilde_norms()
    return sorted(norms.items(), key=lambda item: (-item[1], item[0].sort_key()))


def sparsity_report(table: CoefficientTable, p_list: Sequence[float], cfg: Optional[WeightConfig] = None,
                    mc_norm_sq: Optional[float] = None) -> SparsityReport:
    """
    l_p sums, decay fit and weighted sums of the tilde norms.

    Args:
        table: Coefficient table (nonempty).
        p_list: Exponents p of the quasi-norm sums sum_s ||u~_s||^p.
        cfg: Weights for sum_s (sigma_s ||u~_s||)^2 and the r of
            sum nu_{delta,s}^(2r) ||u_{delta,s}||^2.
        mc_norm_sq: MC estimate of ||u||^2_{L2(V)}; enables the Parseval residual.
            Indices carry signs on their support only, so the residual also
            holds the mass of the degree-0 sign steps sign(y_j).
    """
    if not len(table):
        raise InvalidParameterError("sparsity report needs a nonempty table")
    ranked = _ranked(table)
    indices = [s for s, _ in ranked]
    norms = np.array([norm for _, norm in ranked])

    lp_sums = {float(p): float(np.sum(norms ** p)) for p in p_list}
    positive = norms[norms > 0]
    exponent, r2 = float('nan'), float('nan')
    if positive.size >= 2:
        fit = linregress(np.log(np.arange(1, positive.size + 1)), np.log(positive))
        exponent, r2 = float(-fit.slope), float(fit.rvalue ** 2)
    parseval = float(np.sum(norms ** 2))

    weighted = sobolev = None
    if cfg is not None:
        weighted = float(sum(math.exp(2.0 * log_sigma(s, cfg)) * norm ** 2 for s, norm in ranked if norm > 0))
        sobolev = float(sum(key.nu() ** (2 * cfg.r) * table.norm(key) ** 2 for key in table.values))
    residual = mc_norm_sq - parseval if mc_norm_sq is not None else None

    logger.info(f"sparsity: {len(indices)} indices, decay exponent {exponent:.3f} (R^2={r2:.3f}), "
                f"Parseval sum {parseval:.6g}")
    return SparsityReport(indices, norms, lp_sums, exponent, r2, parseval, weighted, sobolev, residual)


class BestNTerm(NamedTuple):
    selection: Tuple[MultiIndex, ...]
    retained_error: float


def best_n_term(table: CoefficientTable, n: int) -> BestNTerm:
    """The n largest tilde norms and sqrt of the excluded squared norms in the box."""
    if n < 1:
        raise InvalidParameterError(f"n must be at least 1, got {n}")
    ranked = _ranked(table)
    excluded = sum(norm ** 2 for _, norm in ranked[n:])
    return BestNTerm(tuple(s for s, _ in ranked[:n]), math.sqrt(excluded))


def best_n_term_curve(table: CoefficientTable, budgets: Sequence[int]) -> pd.DataFrame:
    """Best n-term retained error for each budget."""
    return pd.DataFrame([{'n': n, 'retained_error': best_n_term(table, n).retained_error} for n in budgets])


def excluded_norm_sq(table: CoefficientTable, index_set: IndexSet) -> float:
    """sum of ||u~_s||^2 over the box indices outside Lambda."""
    return float(sum(norm ** 2 for s, norm in table.tilde_norms().items() if s not in index_set))


def functional_quadrature(phi: Functional, quadrature: SparseQuadrature, solutions: Sequence[FemSolution]) -> float:
    """<phi, Q_Lambda u> = sum_i w_i <phi, u(y_i)>."""
    if len(solutions) != quadrature.cost:
        raise IncompleteDataError(f"expected {quadrature.cost} solutions, got {len(solutions)}")
    return float(sum(w * apply_functional(phi, sol) for w, sol in zip(quadrature.weights, solutions)))


def mc_mean(values: np.ndarray, mesh: Optional[Mesh] = None) -> Tuple[np.ndarray, float]:
    """
    Sample mean of the rows and the standard error of that mean, measured in
    the V-norm (with ``mesh``) or the Euclidean norm.
    """
    values = np.asarray(values, dtype=float).reshape(len(values), -1)
    if len(values) < 2:
        raise InvalidParameterError("a Monte-Carlo mean needs at least two draws")
    mean = values.mean(axis=0)
    deviations = values - mean
    spread = v_norms(deviations, mesh) ** 2 if mesh is not None else np.sum(deviations ** 2, axis=1)
    return mean, math.sqrt(float(spread.sum()) / (len(values) * (len(values) - 1)))


def signed_means(indices: Sequence[SignedMultiIndex]) -> np.ndarray:
    """int L_{delta,s} dlambda_a: 1 for the empty index and 0 otherwise."""
    return np.array([1.0 if key.base.is_zero() else 0.0 for key in indices])

