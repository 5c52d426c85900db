"""
Generalized Laplace and gamma probability measures.

Densities, reproducible sampling and the auxiliary integrals B_r(J) and
K_{a,r,b} that enter the sparsity weight constructions.
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np
from scipy.special import gammaln, xlogy

from .errors import DivergentIntegralError, InvalidParameterError, SingularPointError
from .laguerre_basis import gauss_rule

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MeasureParams:
    """Shape parameter ``a`` of the generalized Laplace / gamma laws."""

    a: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.a) and self.a > 0):
            raise InvalidParameterError(f"shape parameter a must be positive, got {self.a}")


@dataclass(frozen=True)
class RandomStream:
    """
    Deterministic random source identified by ``(seed, substream)``.

    Draws come from a Philox counter-based generator keyed by hashing the
    pair through ``numpy.random.SeedSequence``, so identical pairs produce
    identical sequences on every platform.
    """

    seed: int
    substream: int = 0

    def __post_init__(self):
        for name in ('seed', 'substream'):
            value = getattr(self, name)
            if not 0 <= int(value) < 2**64:
                raise InvalidParameterError(f"{name} must be a 64-bit unsigned integer, got {value}")

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this substream."""
        sequence = np.random.SeedSequence([int(self.seed), int(self.substream)])
        return np.random.Generator(np.random.Philox(sequence))

    def child(self, offset: int) -> 'RandomStream':
        """Substream for a sub-task, derived from this one."""
        return RandomStream(self.seed, (self.substream * 1_000_003 + int(offset) + 1) % 2**64)


def _check_singular(params: MeasureParams, y: np.ndarray) -> None:
    if params.a < 1 and np.any(y == 0):
        raise SingularPointError(f"density with a={params.a} < 1 is unbounded at y=0")


def gamma_pdf(params: MeasureParams, y):
    """
    Gamma density g_a(y) = exp(-y) y^(a-1) / Gamma(a) on y >= 0.

    Accepts scalars or arrays. ``y = 0`` gives 1 for a = 1 (0^0 = 1), 0 for
    a > 1 and raises for a < 1.
    """
    values = np.asarray(y, dtype=float)
    if np.any(values < 0):
        raise InvalidParameterError("gamma density is defined for y >= 0 only")
    _check_singular(params, values)
    density = np.exp(xlogy(params.a - 1.0, values) - values - gammaln(params.a))
    return density if density.ndim else float(density)


def laplace_pdf(params: MeasureParams, y):
    """Generalized Laplace density l_a(y) = g_a(|y|) / 2 on the real line."""
    density = gamma_pdf(params, np.abs(np.asarray(y, dtype=float))) / 2.0
    return density


def sample_gamma(params: MeasureParams, rng: np.random.Generator, count: int) -> np.ndarray:
    """Gamma(a, scale 1) draws (Marsaglia-Tsang, boosted for a < 1)."""
    return rng.standard_gamma(params.a, size=int(count))


def sample_laplace(params: MeasureParams, stream: RandomStream, count: int) -> np.ndarray:
    """
    Draw ``count`` i.i.d. samples of the generalized Laplace law.

    Each draw is S * G with S uniform on {-1, +1} and G ~ gamma(a); signs are
    drawn first, then magnitudes, both from ``stream``.
    """
    if count < 0:
        raise InvalidParameterError(f"count must be non-negative, got {count}")
    rng = stream.generator()
    signs = 2.0 * rng.integers(0, 2, size=count) - 1.0
    magnitudes = sample_gamma(params, rng, count)
    return signs * magnitudes


def sample_laplace_matrix(params: MeasureParams, stream: RandomStream, count: int, dims: int) -> np.ndarray:
    """(count, dims) array of i.i.d. draws, column j from substream child(j)."""
    columns = [sample_laplace(params, stream.child(j), count) for j in range(dims)]
    return np.column_stack(columns) if columns else np.zeros((count, 0))


class BrEstimate(NamedTuple):
    value: float
    std_error: float
    samples: int


def estimate_Br(field, J: Iterable[int], r: int, stream: RandomStream, mc_samples: int,
                params: MeasureParams = None, cells: int = 64) -> BrEstimate:
    """
    Monte-Carlo estimate of B_r(J).

    B_r(J)^2 is the lambda_a-expectation of prod_{j in J} (1 + |y_j|)^(2r) *
    exp(2 ||b(y)||_inf); the sup-norm is taken on the FEM grid of ``cells``
    cells. The standard error of the square root follows the delta method.

    Args:
        field: FieldSpec providing ``dims`` and ``sup_norm_b``.
        J: Active dimensions (1-based).
        r: Non-negative integer exponent.
        stream: Random source of the parameter draws.
        mc_samples: Number of draws (>= 1).
        params: Measure; defaults to the field's.
        cells: Spatial grid resolution for the sup-norm.

    Raises:
        DivergentIntegralError: overflow, or a single draw dominating the sum.
    """
    if mc_samples < 1:
        raise InvalidParameterError("mc_samples must be at least 1")
    if r < 0:
        raise InvalidParameterError("r must be non-negative")
    params = params or field.measure
    J = sorted(set(J))
    if any(j < 1 or j > field.dims for j in J):
        raise InvalidParameterError(f"dimensions {J} outside 1..{field.dims}")

    Y = sample_laplace_matrix(params, stream, mc_samples, field.dims)
    log_terms = 2.0 * field.sup_norm_b(Y, cells)
    for j in J:
        log_terms = log_terms + 2.0 * r * np.log1p(np.abs(Y[:, j - 1]))

    with np.errstate(over='ignore'):
        terms = np.exp(log_terms)
    if not np.all(np.isfinite(terms)):
        raise DivergentIntegralError("B_r integrand overflowed; the integral is likely infinite")

    total = terms.sum()
    if mc_samples >= 100 and terms.max() > 0.5 * total:
        raise DivergentIntegralError(
            f"one draw carries {terms.max() / total:.0%} of the B_r estimate; running mean is not stabilizing")

    mean = float(terms.mean())
    se_mean = float(terms.std(ddof=1) / math.sqrt(mc_samples)) if mc_samples > 1 else 0.0
    value = math.sqrt(mean)
    logger.debug(f"B_{r}({J}) ~ {value:.6g} from {mc_samples} draws")
    return BrEstimate(value, se_mean / (2.0 * value), mc_samples)


def compute_K_arb(a: float, r: int, b0: float) -> float:
    """
    K_{a,r,b} = ( int_0^inf (1+y)^(2r) y^(a-1)/Gamma(a) exp(y(2 b0 - 1)) dy )^(1/2).

    With t = (1 - 2 b0) y the integrand becomes a degree-2r polynomial against
    the gamma(a) law, which a Gauss-Laguerre rule with r + 1 nodes integrates
    exactly.
    """
    MeasureParams(a)
    if r < 0:
        raise InvalidParameterError("r must be non-negative")
    if not 0.0 <= b0 < 0.5:
        if b0 >= 0.5:
            raise DivergentIntegralError(f"K_(a,r,b) diverges for b0 = {b0} >= 1/2")
        raise InvalidParameterError(f"b0 must be non-negative, got {b0}")

    c = 1.0 - 2.0 * b0
    rule = gauss_rule(a, r + 1)
    integral = c ** (-a) * float(np.dot(rule.weights, (1.0 + rule.nodes / c) ** (2 * r)))
    return math.sqrt(integral)


def Br_upper_bound(field, J: Iterable[int], r: int) -> float:
    """exp(a ||b||_1 / (1 - 2 b0)) * K_{a,r,b}^|J|, an upper bound for B_r(J)."""
    b = field.b_norms()
    b0 = float(b.max()) if b.size else 0.0
    a = field.measure.a
    K = compute_K_arb(a, r, b0)
    return math.exp(a * float(b.sum()) / (1.0 - 2.0 * b0)) * K ** len(set(J))
