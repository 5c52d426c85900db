"""
Orthonormal generalized Laguerre polynomials and their Gauss rules.

The family L_s is orthonormal with respect to the gamma law
dgamma_a(y) = y^(a-1) e^(-y) / Gamma(a) dy on y >= 0 and is normalized so that
L_1(y) = (a - y) / sqrt(a). Piecewise versions live on the half-lines:

    L_{delta,s}(y) = sqrt(2) L_s(delta y)  if delta y >= 0, else 0
    L~_s(y)        = L_s(|y|)

Both are orthonormal with respect to the generalized Laplace law.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Tuple

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.linalg import LinAlgError, eigh_tridiagonal

from .config import NUMERICS
from .errors import CapacityError, InvalidParameterError, NumericalFailureError

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)


def recurrence_coefficients(a: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Monic three-term recurrence coefficients of the gamma(a) law.

    Returns ``alpha[k] = 2k + a`` for k < n and ``beta[k] = k (k + a - 1)``
    for k <= n, with ``beta[0] = 1`` (total mass of a probability measure).
    """
    if not a > 0:
        raise InvalidParameterError(f"shape parameter a must be positive, got {a}")
    k = np.arange(n + 1, dtype=float)
    alpha = 2.0 * k[:n] + a
    beta = k * (k + a - 1.0)
    beta[0] = 1.0
    return alpha, beta


def _orthonormal_table(alpha, beta, degree: int, y: np.ndarray) -> np.ndarray:
    """Values L_0..L_degree at ``y``, shape (degree + 1, *y.shape)."""
    table = np.empty((degree + 1,) + y.shape)
    table[0] = 1.0
    if degree >= 1:
        table[1] = (alpha[0] - y) / math.sqrt(beta[1])
    for k in range(1, degree):
        table[k + 1] = ((alpha[k] - y) * table[k] - math.sqrt(beta[k]) * table[k - 1]) / math.sqrt(beta[k + 1])
    return table


@dataclass(frozen=True)
class LaguerreBasis:
    """gamma_a-orthonormal Laguerre polynomials up to ``max_degree``."""

    a: float
    max_degree: int = NUMERICS['max_degree']
    alpha: np.ndarray = field(init=False, repr=False, compare=False)
    beta: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        alpha, beta = recurrence_coefficients(self.a, self.max_degree + 1)
        if np.any(beta[1:] <= 0):
            raise NumericalFailureError("non-positive recurrence coefficient")
        alpha.flags.writeable = False
        beta.flags.writeable = False
        object.__setattr__(self, 'alpha', alpha)
        object.__setattr__(self, 'beta', beta)

    def _check_degree(self, s: int) -> None:
        if s < 0:
            raise InvalidParameterError(f"degree must be non-negative, got {s}")
        if s > self.max_degree:
            raise CapacityError(f"degree {s} exceeds the precomputed maximum {self.max_degree}")

    def eval_all(self, degree: int, y) -> np.ndarray:
        """Values of L_0..L_degree at ``y``; shape (degree + 1, *shape(y))."""
        self._check_degree(degree)
        return _orthonormal_table(self.alpha, self.beta, degree, np.asarray(y, dtype=float))

    def eval(self, s: int, y):
        values = self.eval_all(s, y)[s]
        return values if values.ndim else float(values)


@lru_cache(maxsize=32)
def basis_for(a: float, max_degree: int = NUMERICS['max_degree']) -> LaguerreBasis:
    """Shared basis instance per (a, max_degree)."""
    return LaguerreBasis(float(a), int(max_degree))


def eval_orthonormal(basis: LaguerreBasis, s: int, y):
    """Value of the degree-``s`` orthonormal polynomial at y >= 0."""
    return basis.eval(s, y)


@dataclass(frozen=True, eq=False)
class GaussRule:
    """m-point Gauss rule for the gamma(a) law; weights sum to 1."""

    a: float
    level: int
    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, func) -> float:
        return float(np.dot(self.weights, func(self.nodes)))


def christoffel_weights(alpha, beta, m: int, nodes: np.ndarray) -> np.ndarray:
    """Christoffel numbers 1 / sum_{s<m} L_s(y)^2 at the given nodes."""
    table = _orthonormal_table(alpha, beta, m - 1, np.asarray(nodes, dtype=float))
    return 1.0 / np.sum(table ** 2, axis=0)


@lru_cache(maxsize=256)
def _gauss_rule_cached(a: float, m: int) -> GaussRule:
    alpha, beta = recurrence_coefficients(a, m)
    try:
        nodes = eigh_tridiagonal(alpha[:m], np.sqrt(beta[1:m]), eigvals_only=True)
    except (LinAlgError, ValueError) as e:
        raise NumericalFailureError(f"Jacobi eigensolve failed for a={a}, m={m}: {e}")

    # Newton polish on the orthonormal L_m, then Christoffel weights
    for _ in range(2):
        table = _orthonormal_table(alpha, beta, m, nodes)
        deriv = np.zeros((m + 1,) + nodes.shape)
        deriv[1] = -1.0 / math.sqrt(beta[1])
        for k in range(1, m):
            deriv[k + 1] = ((alpha[k] - nodes) * deriv[k] - table[k] - math.sqrt(beta[k]) * deriv[k - 1]) / math.sqrt(beta[k + 1])
        nodes = nodes - table[m] / deriv[m]

    weights = christoffel_weights(alpha, beta, m, nodes)
    if not (np.all(np.isfinite(nodes)) and np.all(weights > 0)):
        raise NumericalFailureError(f"Gauss rule for a={a}, m={m} is not finite/positive")
    weights = weights / weights.sum()

    nodes.flags.writeable = False
    weights.flags.writeable = False
    logger.debug(f"Gauss-Laguerre rule a={a} m={m}: nodes in [{nodes[0]:.4g}, {nodes[-1]:.4g}]")
    return GaussRule(a, m, nodes, weights)


def gauss_rule(a: float, m: int) -> GaussRule:
    """
    Gauss rule with ``m`` nodes for the gamma(a) law (Golub-Welsch).

    Nodes are the eigenvalues of the Jacobi matrix, polished by Newton steps
    on L_m; weights are the Christoffel numbers 1 / sum_{s<m} L_s(y_k)^2.
    Exact for polynomials of degree <= 2m - 1.
    """
    if m < 1:
        raise InvalidParameterError(f"Gauss rule needs m >= 1, got {m}")
    return _gauss_rule_cached(float(a), int(m))


def symmetric_nodes(rule) -> Tuple[Tuple[int, float], ...]:
    """
    Symmetric extension (k, y_{m;k}) for k = -m..-1, 1..m with y_{m;-k} = -y_{m;k}.

    ``rule=None`` denotes level 0, whose single node is (0, 0.0).
    """
    if rule is None or rule.level == 0:
        return ((0, 0.0),)
    m = rule.level
    negative = tuple((-k, -float(rule.nodes[k - 1])) for k in range(m, 0, -1))
    positive = tuple((k, float(rule.nodes[k - 1])) for k in range(1, m + 1))
    return negative + positive


@dataclass(frozen=True)
class SignedBasisIndex:
    """Pair (delta, s) of the half-line basis function L_{delta,s}."""

    delta: int
    s: int

    def __post_init__(self):
        if self.delta not in (-1, 1):
            raise InvalidParameterError(f"delta must be -1 or +1, got {self.delta}")
        if self.s < 0:
            raise InvalidParameterError(f"s must be non-negative, got {self.s}")


def eval_piecewise(index: SignedBasisIndex, y, basis: LaguerreBasis):
    """L_{delta,s}(y) = sqrt(2) L_s(delta y) on delta y >= 0, zero elsewhere."""
    t = index.delta * np.asarray(y, dtype=float)
    inside = t >= 0
    values = np.where(inside, SQRT2 * basis.eval_all(index.s, np.where(inside, t, 0.0))[index.s], 0.0)
    return values if values.ndim else float(values)


def eval_tilde(s: int, y, basis: LaguerreBasis):
    """Even continuous piecewise polynomial L~_s(y) = L_s(|y|)."""
    return basis.eval(s, np.abs(np.asarray(y, dtype=float)))


def laguerre_coefficients(basis: LaguerreBasis, s: int) -> np.ndarray:
    """Monomial coefficients (lowest degree first) of L_s."""
    basis._check_degree(s)
    previous = np.array([1.0])
    if s == 0:
        return previous
    current = np.array([basis.alpha[0], -1.0]) / math.sqrt(basis.beta[1])
    for k in range(1, s):
        shifted = P.polysub(basis.alpha[k] * current, P.polymulx(current))
        following = P.polysub(shifted, math.sqrt(basis.beta[k]) * previous) / math.sqrt(basis.beta[k + 1])
        previous, current = current, following
    return current


def apply_D(poly, delta: int, r: int, a: float) -> np.ndarray:
    """
    Coefficients of D_delta^r applied to a polynomial on the half-line R_delta.

    ``poly`` holds monomial coefficients in t = delta * y. In that variable
    D_delta acts as D = -t d^2/dt^2 - (a - t) d/dt, applied ``r`` times.
    """
    if delta not in (-1, 1):
        raise InvalidParameterError(f"delta must be -1 or +1, got {delta}")
    if r < 0:
        raise InvalidParameterError(f"r must be non-negative, got {r}")
    coeffs = np.asarray(poly, dtype=float)
    size = coeffs.size
    for _ in range(r):
        first = P.polyder(coeffs)
        second = P.polyder(coeffs, 2)
        image = P.polysub(P.polymulx(first), P.polyadd(P.polymulx(second), a * first))
        coeffs = np.zeros(size)
        coeffs[:min(size, image.size)] = image[:size]
    return coeffs
