"""
Sparse-grid piecewise Lagrange interpolation and quadrature.

The univariate operator I_m interpolates at the 2m symmetric Gauss-Laguerre
nodes +-y_{m;k}: on y >= 0 it uses the Lagrange basis of the positive nodes,
on y < 0 the mirrored one, and I_0 v = v(0). The sparse operator

    I_Lambda v = sum_{s in Lambda} sum_{e in E_s} sum_{k in P_{s,e}}
                 (-1)^{|e|_1} v(y_{s-e;k}) prod_j l_{s_j-e_j;k_j}(y_j)

is realized atom by atom, and Q_Lambda integrates it against lambda_a.
"""

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Mapping, NamedTuple, Sequence, Tuple

import numpy as np
from scipy.interpolate import BarycentricInterpolator
from scipy.special import xlogy
from scipy.stats import linregress

from .errors import IncompleteDataError, InvalidParameterError
from .laguerre_basis import gauss_rule, symmetric_nodes
from .measures import MeasureParams
from .multiindex import IndexSet, MultiIndex, box_index_set, grid_cardinality
from .pde_model import FemSolution

logger = logging.getLogger(__name__)

# sparse parameter point: sorted ((dim, value), ...) with zero coordinates dropped
Point = Tuple[Tuple[int, float], ...]


class UnivariateInterp:
    """Piecewise Lagrange interpolation I_m on the symmetric Laguerre nodes."""

    def __init__(self, level: int, a: float):
        if level < 0:
            raise InvalidParameterError(f"interpolation level must be non-negative, got {level}")
        self.level = level
        self.a = float(a)
        self.rule = gauss_rule(a, level) if level else None
        self.nodes = dict(symmetric_nodes(self.rule))
        self.keys = tuple(self.nodes)
        self._lagrange = None
        if level >= 2:
            self._lagrange = BarycentricInterpolator(self.rule.nodes, np.eye(level))

    def _half_line_basis(self, t: np.ndarray) -> np.ndarray:
        """l+_{m;k}(t), k = 1..m, shape (len(t), m)."""
        if self._lagrange is None:
            return np.ones((t.size, 1))
        if t.size == 0:
            return np.zeros((0, self.level))
        return np.asarray(self._lagrange(t)).reshape(t.size, self.level)

    def basis_values(self, y) -> np.ndarray:
        """l_{m;k}(y) for k in ``keys``; shape (len(y), len(keys))."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if self.level == 0:
            return np.ones((y.size, 1))
        m = self.level
        values = np.zeros((y.size, 2 * m))
        positive = y >= 0
        # keys are -m..-1 then 1..m
        values[positive, m:] = self._half_line_basis(y[positive])
        values[~positive, :m] = self._half_line_basis(-y[~positive])[:, ::-1]
        return values

    def basis_value(self, k: int, y) -> np.ndarray:
        return self.basis_values(y)[:, self.keys.index(k)]


@lru_cache(maxsize=256)
def univariate(a: float, level: int) -> UnivariateInterp:
    """Shared interpolation operator per (a, level)."""
    return UnivariateInterp(level, a)


def _stack(values: Sequence) -> Tuple[str, object, np.ndarray]:
    """Matrix form of codomain values: floats (n,) or FemSolutions (n, dofs)."""
    first = values[0]
    if isinstance(first, FemSolution):
        return 'fem', first.mesh, np.array([v.values for v in values])
    return 'scalar', None, np.asarray(values, dtype=float)


def _unstack(kind: str, mesh, row):
    if kind == 'fem':
        return FemSolution(mesh, row)
    return float(row)


def linear_combination(weights: np.ndarray, values: Sequence):
    """sum_i weights[i] * values[i] for scalars or FemSolutions."""
    kind, mesh, matrix = _stack(values)
    return _unstack(kind, mesh, np.asarray(weights, dtype=float) @ matrix)


def interp_1d_eval(level: int, values: Mapping[int, object], y: float, a: float):
    """
    I_m v(y) from node values ``values[k]`` at y_{m;k}.

    Raises:
        IncompleteDataError: a node value is missing.
    """
    interp = univariate(float(a), level)
    missing = [k for k in interp.keys if k not in values]
    if missing:
        raise IncompleteDataError(f"missing node values for k={missing} at level {level}")
    weights = interp.basis_values(y)[0]
    return linear_combination(weights, [values[k] for k in interp.keys])


def _interp_callable(level: int, f: Callable, a: float) -> Callable:
    if level < 0:
        return lambda y: 0.0 * f(0.0)
    interp = univariate(float(a), level)
    node_values = {k: f(node) for k, node in interp.nodes.items()}
    return lambda y: interp_1d_eval(level, node_values, y, a)


def delta_apply(level: int, f: Callable, a: float) -> Callable:
    """Delta_m f = I_m f - I_{m-1} f with I_{-1} = 0; returns an evaluator."""
    if level < 0:
        raise InvalidParameterError(f"level must be non-negative, got {level}")
    upper = _interp_callable(level, f, a)
    lower = _interp_callable(level - 1, f, a)
    return lambda y: upper(y) - lower(y)


@dataclass(frozen=True)
class GridAtom:
    """One signed tensor Lagrange term (s, e, k) of the combination formula."""

    s: MultiIndex
    e: MultiIndex
    k: Tuple[Tuple[int, int], ...]
    point: Point
    sign: int

    def levels(self) -> Tuple[Tuple[int, int], ...]:
        """(j, s_j - e_j) for j in J_s."""
        return tuple((j, level - self.e[j]) for j, level in self.s.entries)

    def to_json(self) -> Dict[str, object]:
        return {'s': self.s.to_json(), 'e': self.e.to_json(), 'k': {str(j): kj for j, kj in self.k},
                'sign': self.sign}


def point_to_json(point: Point) -> Dict[str, float]:
    return {str(j): value for j, value in point}


class SparseGrid(NamedTuple):
    atoms: Tuple[GridAtom, ...]
    points: Tuple[Point, ...]

    def dense_points(self, dims: int) -> np.ndarray:
        """Distinct points as rows of a (len(points), dims) array."""
        dense = np.zeros((len(self.points), dims))
        for row, point in enumerate(self.points):
            for j, value in point:
                if j > dims:
                    raise InvalidParameterError(f"grid point uses dimension {j} > {dims}")
                dense[row, j - 1] = value
        return dense


def build_grid(index_set: IndexSet, a: float) -> SparseGrid:
    """
    Atoms (s, e, k) over s in Lambda, e in E_s, k in P_{s,e}, plus the distinct
    points y_{s-e;k} in first-appearance order (exact coordinate match).
    """
    atoms: List[GridAtom] = []
    seen: Dict[Point, int] = {}
    for s in index_set:
        support = s.support
        for pattern in itertools.product((0, 1), repeat=len(support)):
            e = MultiIndex(zip(support, pattern))
            sign = -1 if sum(pattern) % 2 else 1
            per_dim = [symmetric_nodes(gauss_rule(a, s[j] - ej) if s[j] - ej else None)
                       for j, ej in zip(support, pattern)]
            for choice in itertools.product(*per_dim):
                k = tuple((j, kj) for j, (kj, _) in zip(support, choice))
                point = tuple((j, node) for j, (kj, node) in zip(support, choice) if kj != 0)
                seen.setdefault(point, len(seen))
                atoms.append(GridAtom(s, e, k, point, sign))
    points = tuple(seen)
    logger.debug(f"sparse grid: {len(index_set)} indices, {len(atoms)} atoms, {len(points)} points")
    return SparseGrid(tuple(atoms), points)


def _parameter_rows(y, dims: int) -> np.ndarray:
    """Parameter input as an (N, dims) array; coordinates beyond ``dims`` are ignored."""
    if isinstance(y, Mapping) or (isinstance(y, tuple) and (not y or isinstance(y[0], tuple))):
        items = y.items() if isinstance(y, Mapping) else y
        dense = np.zeros((1, dims))
        for j, value in items:
            if int(j) < 1:
                raise InvalidParameterError(f"dimensions start at 1, got {j}")
            if int(j) <= dims:
                dense[0, int(j) - 1] = value
        return dense
    Y = np.asarray(y, dtype=float)
    Y = Y[None, :] if Y.ndim <= 1 else Y
    Y = Y.reshape(Y.shape[0], -1)
    if Y.shape[1] >= dims:
        return Y[:, :dims]
    return np.pad(Y, ((0, 0), (0, dims - Y.shape[1])))


def _atom_weight_matrix(atoms: Sequence[GridAtom], point_index: Mapping[Point, int], n_points: int,
                        Y: np.ndarray, a: float) -> np.ndarray:
    """W[i, p] = sum of sign * prod_j l(Y[i, j]) over atoms at point p."""
    W = np.zeros((Y.shape[0], n_points))
    cache: Dict[Tuple[int, int], np.ndarray] = {}
    for atom in atoms:
        column = np.full(Y.shape[0], float(atom.sign))
        for (j, level), (_, kj) in zip(atom.levels(), atom.k):
            if level == 0:
                continue
            interp = univariate(float(a), level)
            if (j, level) not in cache:
                cache[(j, level)] = interp.basis_values(Y[:, j - 1])
            column = column * cache[(j, level)][:, interp.keys.index(kj)]
        W[:, point_index[atom.point]] += column
    return W


@dataclass(eq=False)
class SparseInterpolant:
    """I_Lambda v held as atoms plus the payload v(y) at every distinct point."""

    index_set: IndexSet
    a: float
    grid: SparseGrid
    payloads: Dict[Point, object]
    _index: Dict[Point, int] = field(init=False, repr=False)

    def __post_init__(self):
        missing = [p for p in self.grid.points if p not in self.payloads]
        if missing:
            raise IncompleteDataError(f"payloads missing at {len(missing)} grid points, e.g. {missing[0]}")
        self._index = {point: i for i, point in enumerate(self.grid.points)}

    @property
    def dims(self) -> int:
        return max(self.index_set.max_levels(), default=0)

    @property
    def cost(self) -> int:
        """Distinct evaluations of v."""
        return len(self.grid.points)

    @classmethod
    def from_values(cls, index_set: IndexSet, a: float, values: Sequence, grid: SparseGrid = None) -> 'SparseInterpolant':
        """Payloads given in the grid's point order."""
        grid = grid or build_grid(index_set, a)
        if len(values) != len(grid.points):
            raise IncompleteDataError(f"expected {len(grid.points)} payloads, got {len(values)}")
        return cls(index_set, float(a), grid, dict(zip(grid.points, values)))

    @classmethod
    def from_function(cls, index_set: IndexSet, a: float, func: Callable[[Point], object],
                      workers: int = 1) -> 'SparseInterpolant':
        """Evaluate ``func`` once per distinct point, optionally on a thread pool."""
        grid = build_grid(index_set, a)
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                values = list(pool.map(func, grid.points))
        else:
            values = [func(point) for point in grid.points]
        return cls.from_values(index_set, a, values, grid)

    def weight_matrix(self, Y) -> np.ndarray:
        """Aggregated combination weights per distinct point, shape (N, cost)."""
        return _atom_weight_matrix(self.grid.atoms, self._index, self.cost, _parameter_rows(Y, self.dims), self.a)

    def evaluate_many(self, Y) -> np.ndarray:
        """Values at the rows of Y: (N,) for scalar payloads, (N, dofs) for FemSolutions."""
        _, _, matrix = _stack([self.payloads[p] for p in self.grid.points])
        return self.weight_matrix(Y) @ matrix

    def evaluate(self, y):
        kind, mesh, matrix = _stack([self.payloads[p] for p in self.grid.points])
        return _unstack(kind, mesh, (self.weight_matrix(y) @ matrix)[0])

    def to_json(self) -> Dict[str, object]:
        return {'a': self.a, 'index_set': self.index_set.to_json(),
                'atoms': [atom.to_json() for atom in self.grid.atoms],
                'points': [point_to_json(p) for p in self.grid.points]}


def sparse_interp_eval(interp: SparseInterpolant, y):
    """I_Lambda v(y) for one parameter vector (sparse map or dense sequence)."""
    return interp.evaluate(y)


def quad_weights_1d(level: int, a: float) -> Dict[int, float]:
    """omega_{m;k} = int l_{m;k} dlambda_a: half the Gauss weight on each side; {0: 1} for m = 0."""
    if level < 0:
        raise InvalidParameterError(f"level must be non-negative, got {level}")
    if level == 0:
        return {0: 1.0}
    rule = gauss_rule(a, level)
    half = {k: float(rule.weights[k - 1]) / 2.0 for k in range(1, level + 1)}
    return {**{-k: half[k] for k in range(level, 0, -1)}, **half}


@dataclass(eq=False)
class SparseQuadrature:
    """Signed point/weight rule Q_Lambda; one weight per distinct point."""

    points: Tuple[Point, ...]
    weights: np.ndarray

    @property
    def cost(self) -> int:
        return len(self.points)

    def apply_values(self, values: Sequence):
        """Rule applied to payloads given in point order."""
        if len(values) != len(self.points):
            raise IncompleteDataError(f"expected {len(self.points)} values, got {len(values)}")
        return linear_combination(self.weights, values)

    def apply(self, func: Callable[[Point], object]):
        return self.apply_values([func(point) for point in self.points])

    def to_json(self) -> Dict[str, object]:
        return {'points': [point_to_json(p) for p in self.points], 'weights': [float(w) for w in self.weights]}


def sparse_quadrature(index_set: IndexSet, a: float, grid: SparseGrid = None) -> SparseQuadrature:
    """Q_Lambda = int I_Lambda dlambda_a with atom weights aggregated per point."""
    grid = grid or build_grid(index_set, a)
    index = {point: i for i, point in enumerate(grid.points)}
    weights = np.zeros(len(grid.points))
    for atom in grid.atoms:
        w = float(atom.sign)
        for (_, level), (_, kj) in zip(atom.levels(), atom.k):
            w *= quad_weights_1d(level, a)[kj]
        weights[index[atom.point]] += w
    logger.debug(f"Q_Lambda: {len(weights)} points, weight sum {weights.sum():.15g}")
    return SparseQuadrature(grid.points, weights)


class TensorInterpolant:
    """Full tensor-product interpolant prod_j I_{m_j} on the given levels."""

    def __init__(self, levels: Mapping[int, int], a: float, func: Callable[[Point], object]):
        self.levels = dict(sorted((int(j), int(m)) for j, m in levels.items()))
        self.a = float(a)
        self.dims = max(self.levels, default=0)
        per_dim = [symmetric_nodes(gauss_rule(a, m) if m else None) for m in self.levels.values()]
        self.keys = []
        self.points = []
        for choice in itertools.product(*per_dim):
            self.keys.append(tuple(k for k, _ in choice))
            self.points.append(tuple((j, node) for j, (k, node) in zip(self.levels, choice) if k != 0))
        self.values = [func(point) for point in self.points]

    def evaluate(self, y):
        Y = _parameter_rows(y, self.dims)
        tables = {j: univariate(self.a, m).basis_values(Y[:, j - 1]) for j, m in self.levels.items()}
        weights = np.ones((Y.shape[0], len(self.points)))
        for column, keys in enumerate(self.keys):
            for (j, m), k in zip(self.levels.items(), keys):
                weights[:, column] *= tables[j][:, univariate(self.a, m).keys.index(k)]
        kind, mesh, matrix = _stack(self.values)
        return _unstack(kind, mesh, (weights @ matrix)[0])


def tensor_interpolant(box: MultiIndex, a: float, func: Callable[[Point], object]) -> TensorInterpolant:
    """Tensor interpolant on the levels of ``box`` (dimensions outside the support use I_0)."""
    return TensorInterpolant(box.as_dict(), a, func)


def box_interpolant(box: MultiIndex, a: float, func: Callable[[Point], object]) -> SparseInterpolant:
    """I_Lambda on the full box {s <= box}; equals the tensor interpolant."""
    return SparseInterpolant.from_function(box_index_set(box), a, func)


class LebesgueProfile(NamedTuple):
    levels: Tuple[int, ...]
    constants: Tuple[float, ...]
    exponent: float


def _log_lagrange_abs(nodes: np.ndarray, y: np.ndarray) -> np.ndarray:
    """log |l_k(y)| of the Lagrange basis on ``nodes``; y must avoid the nodes."""
    log_dist = np.log(np.abs(y[:, None] - nodes[None, :]))
    gaps = np.abs(nodes[:, None] - nodes[None, :])
    np.fill_diagonal(gaps, 1.0)
    return log_dist.sum(axis=1, keepdims=True) - log_dist - np.log(gaps).sum(axis=1)[None, :]


def lebesgue_profile(a: float, levels: Sequence[int], samples: int = 2000) -> LebesgueProfile:
    """
    Weighted Lebesgue constants sup_y sum_k |l_{m;k}(y)| w(y) / w(y_{m;k}),
    w = sqrt(g_a), on a grid of [0, 2 y_{m;m}], with a log-log growth fit.

    Lagrange products are formed in log space. Informational: growth with
    exponent above 1/2 is logged as a warning.
    """
    MeasureParams(a)
    constants = []
    for m in levels:
        if m < 1:
            raise InvalidParameterError(f"Lebesgue profile needs levels >= 1, got {m}")
        nodes = gauss_rule(a, m).nodes
        # stay off y = 0 where w vanishes (a > 1) or blows up (a < 1)
        y = np.linspace(nodes[0] * 1e-3, 2.0 * nodes[-1], samples)
        y = y[np.all(y[:, None] != nodes[None, :], axis=1)]
        log_w = 0.5 * (xlogy(a - 1.0, y) - y)
        log_w_nodes = 0.5 * (xlogy(a - 1.0, nodes) - nodes)
        log_terms = _log_lagrange_abs(nodes, y) + log_w[:, None] - log_w_nodes[None, :]
        constants.append(float(np.exp(log_terms).sum(axis=1).max()))

    exponent = float('nan')
    usable = [(m, c) for m, c in zip(levels, constants) if math.isfinite(c) and c > 0]
    if len(usable) < len(constants):
        logger.warning(f"dropping {len(constants) - len(usable)} non-finite Lebesgue constants from the fit")
    if len(usable) >= 2:
        fit_levels, fit_constants = zip(*usable)
        exponent = float(linregress(np.log(fit_levels), np.log(fit_constants)).slope)
        if exponent > 0.5:
            logger.warning(f"weighted Lebesgue constants grow like m^{exponent:.3f} (a={a})")
        else:
            logger.info(f"weighted Lebesgue constants grow like m^{exponent:.3f} (a={a})")
    return LebesgueProfile(tuple(int(m) for m in levels), tuple(constants), exponent)


def atom_count(index_set: IndexSet) -> int:
    """Number of atoms build_grid produces for Lambda."""
    total = 0
    for s in index_set:
        total += math.prod(sum(max(2 * (level - e), 1) for e in (0, 1)) for _, level in s.entries)
    return total


def check_grid(index_set: IndexSet, grid: SparseGrid) -> None:
    """Distinct-point bound |G| <= grid_cardinality(Lambda)."""
    bound = grid_cardinality(index_set)
    if len(grid.points) > bound:
        raise InvalidParameterError(f"{len(grid.points)} grid points exceed the bound {bound}")
