"""
Desk-scale parametric elliptic model on D = (0, 1).

    -(a(x, y) u'(x))' = f(x),  u(0) = u(1) = 0,   a(x, y) = exp(b(x, y)),
    b(x, y) = sum_{j <= J} y_j psi_j(x),           psi_j(x) = theta0 j^(-tau) sin(j pi x)

discretized with P1 elements on a uniform mesh; the coefficient is sampled
at cell midpoints, which keeps the stiffness matrix tridiagonal.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Mapping, NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy.linalg import solve_banded

from .config import NUMERICS, PROBLEM
from .errors import FieldOverflowError, IncompleteDataError, InvalidParameterError, NumericalFailureError
from .measures import MeasureParams

logger = logging.getLogger(__name__)

FAMILIES = ('sine', 'affine-constant')

ParamVector = Union[Mapping[int, float], Sequence[float], np.ndarray]
Load = Union[float, np.ndarray]


@dataclass(frozen=True)
class FieldSpec:
    """
    Log-Laplace coefficient field.

    ``family='affine-constant'`` replaces exp(b) by 1 + sum_j y_j b_j with
    x-independent psi_j = b_j; this manufactured toy has closed-form
    parametric derivatives. Dimensions listed in ``frozen_dims`` have
    psi_j = 0.
    """

    dims: int = PROBLEM['dims']
    theta0: float = PROBLEM['theta0']
    tau: float = PROBLEM['tau']
    measure: MeasureParams = field(default_factory=lambda: MeasureParams(PROBLEM['a']))
    family: str = PROBLEM['family']
    frozen_dims: FrozenSet[int] = frozenset()

    def __post_init__(self):
        if self.dims < 1:
            raise InvalidParameterError(f"dims must be >= 1, got {self.dims}")
        if not self.theta0 > 0:
            raise InvalidParameterError(f"theta0 must be positive, got {self.theta0}")
        if not self.tau > 1:
            raise InvalidParameterError(f"tau must exceed 1, got {self.tau}")
        if self.family not in FAMILIES:
            raise InvalidParameterError(f"unknown field family {self.family!r}")
        object.__setattr__(self, 'frozen_dims', frozenset(int(j) for j in self.frozen_dims))
        if any(not 1 <= j <= self.dims for j in self.frozen_dims):
            raise InvalidParameterError(f"frozen dims {sorted(self.frozen_dims)} outside 1..{self.dims}")

    def b_norms(self) -> np.ndarray:
        """b_j = ||psi_j||_inf = theta0 j^(-tau) (0 for frozen dims)."""
        j = np.arange(1, self.dims + 1, dtype=float)
        b = self.theta0 * j ** (-self.tau)
        for frozen in self.frozen_dims:
            b[frozen - 1] = 0.0
        return b

    def psi(self, x) -> np.ndarray:
        """psi_j(x) for all j; shape (dims, len(x))."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        j = np.arange(1, self.dims + 1, dtype=float)[:, None]
        shape = np.sin(j * math.pi * x[None, :]) if self.family == 'sine' else np.ones((self.dims, x.size))
        return self.b_norms()[:, None] * shape

    def b_values(self, Y: np.ndarray, x) -> np.ndarray:
        """b(x, y) for a batch Y of shape (N, dims); shape (N, len(x))."""
        return np.atleast_2d(Y) @ self.psi(x)

    def sup_norm_b(self, Y: np.ndarray, cells: int) -> np.ndarray:
        """max_x |b(x, y)| on the nodes and midpoints of a ``cells``-cell mesh."""
        grid = np.linspace(0.0, 1.0, 2 * cells + 1)
        return np.abs(self.b_values(Y, grid)).max(axis=1)

    def to_json(self) -> Dict[str, object]:
        return {'dims': self.dims, 'theta0': self.theta0, 'tau': self.tau, 'a': self.measure.a,
                'family': self.family, 'frozen': sorted(self.frozen_dims)}

    @classmethod
    def from_json(cls, data: Mapping[str, object]) -> 'FieldSpec':
        return cls(dims=int(data['dims']), theta0=float(data['theta0']), tau=float(data['tau']),
                   measure=MeasureParams(float(data['a'])), family=data.get('family', 'sine'),
                   frozen_dims=frozenset(data.get('frozen', ())))


@dataclass(frozen=True)
class Mesh:
    """Uniform mesh of (0, 1) with ``cells`` cells; unknowns at interior nodes."""

    cells: int = PROBLEM['cells']

    def __post_init__(self):
        if self.cells < 2:
            raise InvalidParameterError(f"mesh needs at least 2 cells, got {self.cells}")

    @property
    def h(self) -> float:
        return 1.0 / self.cells

    @property
    def interior(self) -> np.ndarray:
        return np.arange(1, self.cells) * self.h

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.cells + 1)

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.cells) + 0.5) * self.h

    def to_json(self) -> Dict[str, int]:
        return {'cells': self.cells}


@dataclass(eq=False)
class FemSolution:
    """P1 function in V = H^1_0(0, 1), stored by its interior nodal values."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.cells - 1,):
            raise InvalidParameterError(
                f"expected {self.mesh.cells - 1} interior values, got shape {self.values.shape}")

    @classmethod
    def zeros(cls, mesh: Mesh) -> 'FemSolution':
        return cls(mesh, np.zeros(mesh.cells - 1))

    def full_values(self) -> np.ndarray:
        """Nodal values including the zero boundary values."""
        return np.concatenate(([0.0], self.values, [0.0]))

    def _check(self, other: 'FemSolution') -> None:
        if not isinstance(other, FemSolution) or other.mesh != self.mesh:
            raise IncompleteDataError("FemSolution arithmetic needs a common mesh")

    def __add__(self, other):
        self._check(other)
        return FemSolution(self.mesh, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return FemSolution(self.mesh, self.values - other.values)

    def __mul__(self, scalar):
        return FemSolution(self.mesh, self.values * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return FemSolution(self.mesh, self.values / float(scalar))

    def __neg__(self):
        return FemSolution(self.mesh, -self.values)

    def v_norm(self) -> float:
        return v_norm(self)


@dataclass(frozen=True)
class Functional:
    """Bounded linear functional on V: 'mean', 'point' (at x0) or 'dual' (vector)."""

    kind: str = 'mean'
    x0: Optional[float] = None
    vector: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ('mean', 'point', 'dual'):
            raise InvalidParameterError(f"unknown functional kind {self.kind!r}")
        if self.kind == 'point' and (self.x0 is None or not 0.0 <= self.x0 <= 1.0):
            raise InvalidParameterError(f"point evaluation needs x0 in [0, 1], got {self.x0}")
        if self.kind == 'dual' and self.vector is None:
            raise InvalidParameterError("dual functional needs a vector")


def as_dense(y: ParamVector, dims: int) -> np.ndarray:
    """Dense parameter vector of length ``dims`` from a sparse map or sequence."""
    if isinstance(y, Mapping) or (isinstance(y, tuple) and y and isinstance(y[0], tuple)):
        items = y.items() if isinstance(y, Mapping) else y
        dense = np.zeros(dims)
        for j, value in items:
            if not 1 <= int(j) <= dims:
                raise InvalidParameterError(f"parameter dimension {j} outside 1..{dims}")
            dense[int(j) - 1] = value
        return dense
    dense = np.zeros(dims)
    values = np.asarray(y, dtype=float).ravel()
    if values.size > dims:
        if np.any(values[dims:] != 0):
            raise InvalidParameterError(f"parameter support exceeds 1..{dims}")
        values = values[:dims]
    dense[:values.size] = values
    return dense


def _coefficient(spec: FieldSpec, Y: np.ndarray, x, guard: float):
    b = spec.b_values(Y, x)
    if spec.family == 'affine-constant':
        a = 1.0 + b
        if np.any(a <= 0):
            raise FieldOverflowError("affine coefficient is not positive")
        return np.log(a), a
    if np.any(~np.isfinite(b)) or np.any(np.abs(b) > guard):
        raise FieldOverflowError(f"|b(x, y)| = {np.nanmax(np.abs(b)):.4g} exceeds the overflow guard {guard}")
    return b, np.exp(b)


def eval_field(spec: FieldSpec, y: ParamVector, x, guard: float = NUMERICS['overflow_guard']):
    """(b(x, y), a(x, y)) at the points ``x``."""
    x_arr = np.asarray(x, dtype=float)
    b, a = _coefficient(spec, as_dense(y, spec.dims)[None, :], np.atleast_1d(x_arr), guard)
    if x_arr.ndim == 0:
        return float(b[0, 0]), float(a[0, 0])
    return b[0], a[0]


def load_vector(mesh: Mesh, load: Load) -> np.ndarray:
    """Galerkin right-hand side for a constant or P1 nodal (cells + 1 values) load."""
    if np.ndim(load) == 0:
        return float(load) * mesh.h * np.ones(mesh.cells - 1)
    f = np.asarray(load, dtype=float)
    if f.shape != (mesh.cells + 1,):
        raise InvalidParameterError(f"nodal load needs {mesh.cells + 1} values, got {f.shape}")
    return mesh.h / 6.0 * (f[:-2] + 4.0 * f[1:-1] + f[2:])


def _solve_tridiagonal(mesh: Mesh, a_mid: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    h = mesh.h
    banded = np.zeros((3, mesh.cells - 1))
    banded[0, 1:] = -a_mid[1:-1] / h
    banded[1] = (a_mid[:-1] + a_mid[1:]) / h
    banded[2, :-1] = -a_mid[1:-1] / h
    try:
        u = solve_banded((1, 1), banded, rhs)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericalFailureError(f"tridiagonal solve failed: {e}")

    if not np.all(np.isfinite(u)):
        raise NumericalFailureError("tridiagonal solve produced non-finite values")

    # normwise backward error |Au - f| / (|A||u| + |f|)
    residual = banded[1] * u - rhs
    residual[1:] += banded[0, 1:] * u[:-1]
    residual[:-1] += banded[2, :-1] * u[1:]
    size = np.abs(banded[1] * u) + np.abs(rhs)
    size[1:] += np.abs(banded[0, 1:] * u[:-1])
    size[:-1] += np.abs(banded[2, :-1] * u[1:])
    error = float(np.abs(residual).max()) / max(float(size.max()), np.finfo(float).tiny)
    if error > 1e-10:
        raise NumericalFailureError(f"linear backward error {error:.3g} too large")
    return u


def solve(spec: FieldSpec, mesh: Mesh, y: ParamVector, load: Load = PROBLEM['load'],
          guard: float = NUMERICS['overflow_guard']) -> FemSolution:
    """P1 Galerkin solution u(y) for the parameter vector ``y``."""
    _, a_mid = _coefficient(spec, as_dense(y, spec.dims)[None, :], mesh.midpoints, guard)
    return FemSolution(mesh, _solve_tridiagonal(mesh, a_mid[0], load_vector(mesh, load)))


def solve_many(spec: FieldSpec, mesh: Mesh, Y: np.ndarray, load: Load = PROBLEM['load'],
               workers: int = 1, guard: float = NUMERICS['overflow_guard']) -> np.ndarray:
    """
    Solve at every row of Y (shape (N, dims)); returns nodal values (N, cells - 1).

    Rows are independent; with ``workers > 1`` they run on a thread pool and
    results are gathered in row order.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape[1] != spec.dims:
        raise InvalidParameterError(f"expected {spec.dims} parameter columns, got {Y.shape[1]}")
    _, a_mid = _coefficient(spec, Y, mesh.midpoints, guard)
    rhs = load_vector(mesh, load)

    def one(row: int) -> np.ndarray:
        return _solve_tridiagonal(mesh, a_mid[row], rhs)

    if workers > 1 and len(Y) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, range(len(Y))))
    else:
        rows = [one(i) for i in range(len(Y))]
    logger.debug(f"solved {len(Y)} parametric problems on {mesh.cells} cells")
    return np.array(rows).reshape(len(Y), mesh.cells - 1)


def v_norm(sol: FemSolution) -> float:
    """Discrete H^1_0 seminorm sqrt(sum_cells (du / h)^2 h)."""
    jumps = np.diff(sol.full_values())
    return math.sqrt(float(np.sum(jumps ** 2)) / sol.mesh.h)


def v_norms(values: np.ndarray, mesh: Mesh) -> np.ndarray:
    """V-norms of a batch of interior nodal vectors (rows)."""
    values = np.atleast_2d(values)
    padded = np.pad(values, ((0, 0), (1, 1)))
    return np.sqrt(np.sum(np.diff(padded, axis=1) ** 2, axis=1) / mesh.h)


def dual_norm(mesh: Mesh, load: Load = PROBLEM['load']) -> float:
    """||f||_{V'} = ||w||_V for -w'' = f (discrete)."""
    w = _solve_tridiagonal(mesh, np.ones(mesh.cells), load_vector(mesh, load))
    return v_norm(FemSolution(mesh, w))


def functional_weights(phi: Functional, mesh: Mesh) -> np.ndarray:
    """Vector g with <phi, v> = g . (interior nodal values of v)."""
    if phi.kind == 'mean':
        return mesh.h * np.ones(mesh.cells - 1)
    if phi.kind == 'point':
        hat = np.zeros(mesh.cells - 1)
        position = phi.x0 / mesh.h
        left = int(min(math.floor(position), mesh.cells - 1))
        frac = position - left
        if 1 <= left <= mesh.cells - 1:
            hat[left - 1] += 1.0 - frac
        if 1 <= left + 1 <= mesh.cells - 1:
            hat[left] += frac
        return hat
    vector = np.asarray(phi.vector, dtype=float)
    if vector.shape != (mesh.cells - 1,):
        raise InvalidParameterError(f"dual vector needs {mesh.cells - 1} entries, got {vector.shape}")
    return vector


def apply_functional(phi: Functional, sol: FemSolution) -> float:
    """
    <phi, v>: composite trapezoid mean, P1 point evaluation, or a dual vector
    applied to the interior nodal values.
    """
    return float(np.dot(functional_weights(phi, sol.mesh), sol.values))


_STENCILS = {
    0: {0: 1.0},
    1: {-1: -0.5, 1: 0.5},
    2: {-1: 1.0, 0: -2.0, 1: 1.0},
    3: {-2: -0.5, -1: 1.0, 1: -1.0, 2: 0.5},
}


class FdDerivative(NamedTuple):
    solution: FemSolution
    error_estimate: float
    step: float


def _central_difference(spec, mesh, y0: np.ndarray, orders: Dict[int, int], step: float, load) -> FemSolution:
    dims = sorted(orders)
    offsets = [list(_STENCILS[orders[j]].items()) for j in dims]
    points, weights = [], []
    for combo in np.array(np.meshgrid(*[range(len(o)) for o in offsets], indexing='ij')).reshape(len(dims), -1).T:
        y = y0.copy()
        weight = 1.0
        for j, choice in zip(dims, combo):
            shift, w = offsets[dims.index(j)][choice]
            y[j - 1] += shift * step
            weight *= w / step ** orders[j]
        points.append(y)
        weights.append(weight)
    values = solve_many(spec, mesh, np.array(points), load)
    return FemSolution(mesh, np.asarray(weights) @ values)


def fd_parametric_derivative(spec: FieldSpec, mesh: Mesh, y: ParamVector, s, step: float = NUMERICS['fd_step'],
                             load: Load = PROBLEM['load']) -> FdDerivative:
    """
    Tensorized central-difference approximation of d^s u(y) for |s|_1 <= 3.

    The value is computed with ``step / 2``; the error estimate is the
    Richardson difference |D(step/2) - D(step)|_V / 3 of the O(step^2) stencils.
    """
    if s.l1 > 3:
        raise InvalidParameterError(f"finite differences support |s|_1 <= 3, got {s.l1}")
    if not step > 0:
        raise InvalidParameterError(f"step must be positive, got {step}")
    y0 = as_dense(y, spec.dims)
    if s.is_zero():
        return FdDerivative(solve(spec, mesh, y0, load), 0.0, step)
    orders = dict(s.entries)
    coarse = _central_difference(spec, mesh, y0, orders, step, load)
    fine = _central_difference(spec, mesh, y0, orders, step / 2.0, load)
    return FdDerivative(fine, v_norm(fine - coarse) / 3.0, step / 2.0)


class BoundCheck(NamedTuple):
    derivative_norm: float
    bound: float
    holds: bool


def derivative_bound_check(spec: FieldSpec, mesh: Mesh, y: ParamVector, s, rho: Sequence[float],
                           eta: float, load: Load = PROBLEM['load'], step: float = NUMERICS['fd_step']) -> BoundCheck:
    """
    Compare ||d^s u(y)||_V with e^eta / cos(eta) ||f||_{V'} s! / rho^s exp(||b(y)||_inf).

    Informational: the outcome is logged, never raised.
    """
    derivative = fd_parametric_derivative(spec, mesh, y, s, step, load)
    y0 = as_dense(y, spec.dims)
    factorial = math.prod(math.factorial(level) for _, level in s.entries)
    rho_power = math.prod(rho[j - 1] ** level for j, level in s.entries)
    sup_b = float(spec.sup_norm_b(y0[None, :], mesh.cells)[0])
    bound = math.exp(eta) / math.cos(eta) * dual_norm(mesh, load) * factorial / rho_power * math.exp(sup_b)
    lhs = v_norm(derivative.solution)
    holds = lhs <= bound
    if holds:
        logger.info(f"derivative bound s={s.as_dict()}: {lhs:.4g} <= {bound:.4g}")
    else:
        logger.warning(f"derivative bound violated for s={s.as_dict()}: {lhs:.4g} > {bound:.4g}")
    return BoundCheck(lhs, bound, holds)
